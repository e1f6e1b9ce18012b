"""
Gaussian-Softmax distribution primitives

Softmax projection onto the probability simplex, centered logits, the
Gaussian-Softmax density, sampling and the KL divergence between two
isotropic Gaussian-Softmax distributions sharing a variance.

All functions work on the last axis of numpy arrays, so a batch of simplex
points is simply an array of shape (..., D). Randomness is always injected as
explicit standard normal noise; nothing in this module holds RNG state.

@version: v0.1.0
"""

import math
from dataclasses import dataclass

import numpy as np

# Alias used in signatures: a float array whose last axis lies on the simplex
SimplexPoint = np.ndarray

SUM_TOLERANCE = 1e-9


class SimplexInputError(ValueError):
    """Raised when an input vector is non-finite or badly shaped"""
    pass


class SimplexDomainError(ValueError):
    """Raised when a value lies outside the domain of an operation"""
    pass


@dataclass(frozen=True)
class GsParams:
    """
    Parameters of an isotropic Gaussian-Softmax distribution GS(mu, sigma^2 I)

    Args:
        mu: logit mean, shape (..., D)
        sigma: positive standard deviation shared by every coordinate
    """
    mu: np.ndarray
    sigma: float

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        if not np.all(np.isfinite(mu)):
            raise SimplexInputError(f"GS mean must be finite, got {mu}")
        if not self.sigma > 0:
            raise SimplexDomainError(f"GS sigma must be > 0, got {self.sigma}")
        object.__setattr__(self, 'mu', mu)

    @property
    def dimension(self) -> int:
        return self.mu.shape[-1]


def _as_vector(v, name: str = 'input') -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 0 or v.shape[-1] < 2:
        raise SimplexInputError(f"{name} needs a last axis of size >= 2, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise SimplexInputError(f"{name} must be finite")
    return v


def check_simplex_point(y, strict: bool = True) -> np.ndarray:
    """
    Validate that y lies on the probability simplex

    Args:
        y: candidate point(s), shape (..., D)
        strict: require every entry to be strictly positive

    Returns:
        np.ndarray: y as a float64 array

    Raises:
        SimplexInputError: If y is non-finite or does not sum to 1
        SimplexDomainError: If strict and any entry is <= 0
    """
    y = _as_vector(y, 'simplex point')
    if np.any(np.abs(y.sum(axis=-1) - 1.0) > SUM_TOLERANCE):
        raise SimplexInputError("simplex point entries must sum to 1 "
                                f"within {SUM_TOLERANCE}")
    if strict and np.any(y <= 0.0):
        raise SimplexDomainError("simplex point touches the boundary; "
                                 "label-smooth before taking logarithms")
    return y


def softmax(v) -> SimplexPoint:
    """
    Project logits onto the probability simplex

    Args:
        v: logits, shape (..., D) with D >= 2

    Returns:
        SimplexPoint: softmax over the last axis

    Raises:
        SimplexInputError: If v is non-finite or D < 2
    """
    v = _as_vector(v, 'logits')
    z = v - v.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def center_logits(y) -> np.ndarray:
    """
    Logits of y shifted so the last entry is exactly 0

    Args:
        y: strictly positive simplex point(s)

    Returns:
        np.ndarray: log y - log y_D
    """
    y = check_simplex_point(y)
    log_y = np.log(y)
    return log_y - log_y[..., -1:]


def perp_sq_norm(u) -> np.ndarray:
    """
    Squared seminorm ||u||^2 - (1^T u)^2 / D that ignores the all-ones direction
    """
    u = np.asarray(u, dtype=np.float64)
    d = u.shape[-1]
    return np.sum(u * u, axis=-1) - np.sum(u, axis=-1) ** 2 / d


def log_normalizer(sigma: float, d: int) -> float:
    """log Z(sigma) with Z = sqrt(D (2 pi sigma^2)^(D-1))"""
    return 0.5 * math.log(d) + 0.5 * (d - 1) * math.log(2.0 * math.pi * sigma * sigma)


def gs_log_density(y, params: GsParams) -> np.ndarray:
    """
    Log density of GS(mu, sigma^2 I) at interior simplex point(s) y

    The density is taken with respect to Lebesgue measure on the first D-1
    coordinates of the simplex.

    Raises:
        SimplexDomainError: If y touches the boundary
    """
    y = check_simplex_point(y)
    d = y.shape[-1]
    if params.dimension != d:
        raise SimplexInputError(f"dimension mismatch: y has {d}, mu has {params.dimension}")
    log_y = np.log(y)
    # the seminorm is shift invariant, so log y and mu need no explicit centering
    quad = perp_sq_norm(log_y - params.mu)
    return (-np.sum(log_y, axis=-1) - log_normalizer(params.sigma, d)
            - quad / (2.0 * params.sigma ** 2))


def gs_density(y, params: GsParams) -> np.ndarray:
    """
    Density of GS(mu, sigma^2 I) at interior simplex point(s) y

    Args:
        y: strictly positive simplex point(s), shape (..., D)
        params: distribution parameters

    Returns:
        np.ndarray: positive density value(s)
    """
    return np.exp(gs_log_density(y, params))


def gs_sample(params: GsParams, noise) -> SimplexPoint:
    """
    Draw from GS(mu, sigma^2 I) given standard normal noise

    Args:
        params: distribution parameters
        noise: standard normal draws broadcastable against mu

    Returns:
        SimplexPoint: softmax(mu + sigma * noise)
    """
    noise = _as_vector(noise, 'noise')
    if noise.shape[-1] != params.dimension:
        raise SimplexInputError(f"noise has {noise.shape[-1]} entries, expected {params.dimension}")
    return softmax(params.mu + params.sigma * noise)


def gs_kl(mu_q, mu_p, sigma: float) -> np.ndarray:
    """
    KL(GS(mu_q, sigma^2 I) || GS(mu_p, sigma^2 I))

    Softmax restricted to centered logits is invertible, so the divergence
    equals the Gaussian one projected off the all-ones direction.

    Raises:
        SimplexDomainError: If sigma <= 0
    """
    if not sigma > 0:
        raise SimplexDomainError(f"sigma must be > 0, got {sigma}")
    mu_q = np.asarray(mu_q, dtype=np.float64)
    mu_p = np.asarray(mu_p, dtype=np.float64)
    if mu_q.shape[-1] != mu_p.shape[-1]:
        raise SimplexInputError(f"dimension mismatch: {mu_q.shape[-1]} vs {mu_p.shape[-1]}")
    # clamp tiny negative rounding of the seminorm
    return np.maximum(perp_sq_norm(mu_q - mu_p), 0.0) / (2.0 * sigma ** 2)
