"""
Gaussian-Softmax discrete diffusion on the probability simplex

Label smoothing, the single-step and cumulative forward transitions acting
on log-probabilities, and the posterior reverse transition, which is the
continuous posterior applied to logits followed by softmax. Discrete blocks
run on the augmented schedule for both directions.

@version: v0.1.0
"""

import logging
import math
from typing import TYPE_CHECKING, Tuple

import numpy as np

from diffusion.gaussian_diffusion import posterior_coefficients
from process_base import DiffusionProcess, validate_same_shape, validate_timestep
from simplex.simplex_core import check_simplex_point, gs_kl, softmax

if TYPE_CHECKING:
    from schedules.variance_schedule import Schedule

logger = logging.getLogger(__name__)


def smooth_onehot(label, D: int, k: float) -> np.ndarray:
    """
    Label-smoothed one-hot k * e_label + (1 - k) / D

    Args:
        label: class index, or an integer array of indices
        D: number of classes
        k: smoothing factor in (0, 1)

    Returns:
        np.ndarray: shape label.shape + (D,)

    Raises:
        ValueError: If a label is outside [0, D) or k outside (0, 1)
    """
    if not 0.0 < k < 1.0:
        raise ValueError(f"smoothing k={k} must lie in (0, 1)")
    labels = np.asarray(label)
    if labels.dtype.kind not in 'iu':
        raise ValueError(f"labels must be integers, got {labels.dtype}")
    if np.any(labels < 0) or np.any(labels >= D):
        raise ValueError(f"label {label} out of range [0, {D})")
    return k * np.eye(D)[labels] + (1.0 - k) / D


def floor_smooth(y, k: float) -> np.ndarray:
    """
    Re-smooth a probability vector that may touch the boundary

    Every entry is raised to at least (1 - k)/D and the result renormalized.
    Vectors already produced by smooth_onehot pass through unchanged.
    """
    y = np.asarray(y, dtype=np.float64)
    d = y.shape[-1]
    floored = np.maximum(y, (1.0 - k) / d)
    return floored / floored.sum(axis=-1, keepdims=True)


def forward_step_gs(y_t, alpha: float, noise) -> np.ndarray:
    """
    One forward step softmax(sqrt(alpha) log y_t + sqrt(1 - alpha) noise)

    Raises:
        SimplexDomainError: If y_t touches the boundary
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha={alpha} must lie in (0, 1]")
    y_t = check_simplex_point(y_t)
    noise = np.asarray(noise, dtype=np.float64)
    validate_same_shape(y_t, noise, 'state and noise')
    return softmax(math.sqrt(alpha) * np.log(y_t) + math.sqrt(1.0 - alpha) * noise)


def sample_yt(y0_smoothed, alpha_bar_aug: float, noise) -> np.ndarray:
    """
    Cumulative transition from a smoothed one-hot

    softmax(sqrt(alpha_bar) log y0 + sqrt(1 - alpha_bar) noise), where
    alpha_bar comes from the augmented schedule. y0 broadcasts against noise.
    """
    if not 0.0 <= alpha_bar_aug <= 1.0:
        raise ValueError(f"alpha_bar={alpha_bar_aug} must lie in [0, 1]")
    y0 = check_simplex_point(y0_smoothed)
    noise = np.asarray(noise, dtype=np.float64)
    validate_same_shape(y0.shape[-1:], noise.shape[-1:], 'state and noise')
    return softmax(math.sqrt(alpha_bar_aug) * np.log(y0) + math.sqrt(1.0 - alpha_bar_aug) * noise)


def posterior_mean_sigma_gs(y_t, y0, t: int, sched: 'Schedule') -> Tuple[np.ndarray, float]:
    """
    Posterior logit mean and sigma of the discrete reverse transition

    The mean interpolates log y_t and log y0 with the continuous posterior
    coefficients; it is defined up to an additive constant, which softmax
    removes.

    Args:
        y_t: noisy simplex state at t
        y0: clean (smoothed) simplex state or prediction
        t: timestep in [1, T]
        sched: augmented schedule

    Returns:
        Tuple[np.ndarray, float]: (mean logits, sigma)
    """
    y_t = check_simplex_point(y_t)
    y0 = check_simplex_point(y0)
    validate_same_shape(y_t, y0, 'y_t and y0')
    coef_xt, coef_x0, sigma = posterior_coefficients(t, sched)
    if coef_xt == 0.0:
        return coef_x0 * np.log(y0), sigma
    return coef_xt * np.log(y_t) + coef_x0 * np.log(y0), sigma


def reverse_step_gs(y_t, y0_hat, t: int, sched: 'Schedule', noise) -> np.ndarray:
    """
    Draw y_{t-1} = softmax(mean + sigma * noise) with y0 replaced by a prediction

    y0_hat must be strictly interior; callers re-smooth denoiser output
    with floor_smooth first.
    """
    noise = np.asarray(noise, dtype=np.float64)
    validate_same_shape(np.shape(y_t), noise.shape, 'state and noise')
    mean, sigma = posterior_mean_sigma_gs(y_t, y0_hat, t, sched)
    if sigma == 0.0:
        return softmax(mean)
    return softmax(mean + sigma * noise)


def gs_posterior_kl(y0, y0_hat, t: int, sched: 'Schedule') -> np.ndarray:
    """
    KL between the discrete posteriors built from y0 and from y0_hat

    Both share sigma and y_t, so the divergence depends only on
    coef_x0 * (log y0 - log y0_hat). Defined for 2 <= t <= T.
    """
    validate_timestep(t, sched.T)
    y0 = check_simplex_point(y0)
    y0_hat = check_simplex_point(y0_hat)
    _, coef_x0, sigma = posterior_coefficients(t, sched)
    if sigma == 0.0:
        raise ValueError(f"posterior at t={t} is degenerate; use the reconstruction term")
    return gs_kl(coef_x0 * np.log(y0), coef_x0 * np.log(y0_hat), sigma)


class GsDiffusion(DiffusionProcess):
    """
    Gaussian-Softmax diffusion for one discrete block

    Args:
        schedule: augmented (or calibrated) schedule built for this block
        num_classes: block width D
    """

    def __init__(self, schedule: 'Schedule', num_classes: int):
        super().__init__(schedule)
        if schedule.num_classes is not None and schedule.num_classes != num_classes:
            logger.warning("schedule built for D=%s used with a %d-class block",
                           schedule.num_classes, num_classes)
        self.num_classes = num_classes
        self.smoothing_k = schedule.smoothing_k

    def smooth(self, labels) -> np.ndarray:
        return smooth_onehot(labels, self.num_classes, self.smoothing_k)

    def resmooth(self, probs) -> np.ndarray:
        return floor_smooth(probs, self.smoothing_k)

    def q_sample(self, y0, t: int, noise) -> np.ndarray:
        self._validate_timestep(t, allow_zero=True)
        return sample_yt(y0, float(self.schedule.alpha_bar[t]), noise)

    def q_posterior(self, y_t, y0, t: int) -> Tuple[np.ndarray, float]:
        return posterior_mean_sigma_gs(y_t, y0, t, self.schedule)

    def p_sample(self, y_t, y0_hat, t: int, noise) -> np.ndarray:
        return reverse_step_gs(y_t, self.resmooth(y0_hat), t, self.schedule, noise)

    def get_info(self):
        info = super().get_info()
        info['block_classes'] = self.num_classes
        return info
