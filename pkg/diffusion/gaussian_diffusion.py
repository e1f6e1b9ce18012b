"""
Continuous Gaussian diffusion with ground-truth (x0) parameterization

Single forward step, closed-form cumulative transition, the posterior
q(x_{t-1} | x_t, x0) and the reverse step that plugs a prediction in for x0.
The posterior coefficients are shared with the Gaussian-Softmax process.

@version: v0.1.0
"""

import logging
import math
from typing import TYPE_CHECKING, Tuple

import numpy as np

from process_base import DiffusionProcess, validate_same_shape, validate_timestep

if TYPE_CHECKING:
    from schedules.variance_schedule import Schedule

logger = logging.getLogger(__name__)


def _validate_alpha(alpha: float, allow_zero: bool, name: str) -> bool:
    low_ok = alpha >= 0.0 if allow_zero else alpha > 0.0
    if not (low_ok and alpha <= 1.0):
        bracket = '[0, 1]' if allow_zero else '(0, 1]'
        raise ValueError(f"{name}={alpha} must lie in {bracket}")
    return True


def forward_step(x_prev, alpha_t: float, noise) -> np.ndarray:
    """
    One forward step sqrt(alpha_t) x_prev + sqrt(1 - alpha_t) noise

    Raises:
        ValueError: If alpha_t is outside (0, 1]
        ShapeMismatchError: If x_prev and noise differ in shape
    """
    _validate_alpha(alpha_t, False, 'alpha_t')
    x_prev = np.asarray(x_prev, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    validate_same_shape(x_prev, noise, 'state and noise')
    return math.sqrt(alpha_t) * x_prev + math.sqrt(1.0 - alpha_t) * noise


def sample_xt(x0, alpha_bar_t: float, noise) -> np.ndarray:
    """
    Cumulative transition sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) noise

    x0 broadcasts against noise, so one clean state can be noised many times.

    Raises:
        ValueError: If alpha_bar_t is outside [0, 1]
        ShapeMismatchError: If the trailing dimensions disagree
    """
    _validate_alpha(alpha_bar_t, True, 'alpha_bar_t')
    x0 = np.asarray(x0, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    validate_same_shape(x0.shape[-1:], noise.shape[-1:], 'state and noise')
    return math.sqrt(alpha_bar_t) * x0 + math.sqrt(1.0 - alpha_bar_t) * noise


def posterior_coefficients(t: int, sched: 'Schedule') -> Tuple[float, float, float]:
    """
    Coefficients of q(x_{t-1} | x_t, x0) at timestep t

    Returns:
        Tuple[float, float, float]: (coef_xt, coef_x0, sigma) such that the
        posterior mean is coef_xt * x_t + coef_x0 * x0

    Raises:
        TimestepError: If t is outside [1, T]
    """
    validate_timestep(t, sched.T)
    alpha_t = float(sched.alphas[t])
    ab_prev = float(sched.alpha_bar[t - 1])
    ab_t = float(sched.alpha_bar[t])
    denom = 1.0 - ab_t
    if denom <= 0.0:
        raise ValueError(f"schedule has alpha_bar[{t}] = 1; the posterior is undefined")
    coef_xt = math.sqrt(alpha_t) * (1.0 - ab_prev) / denom
    coef_x0 = math.sqrt(ab_prev) * (1.0 - alpha_t) / denom
    variance = max((1.0 - alpha_t) * (1.0 - ab_prev) / denom, 0.0)
    return coef_xt, coef_x0, math.sqrt(variance)


def posterior_mean_sigma(x_t, x0, t: int, sched: 'Schedule') -> Tuple[np.ndarray, float]:
    """
    Mean and standard deviation of q(x_{t-1} | x_t, x0)

    At t=1 the mean is x0 exactly and sigma is 0.

    Args:
        x_t: noisy state at t
        x0: clean state (or a prediction of it)
        t: timestep in [1, T]
        sched: schedule the forward process used

    Returns:
        Tuple[np.ndarray, float]: (mean, sigma)
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    validate_same_shape(x_t, x0, 'x_t and x0')
    coef_xt, coef_x0, sigma = posterior_coefficients(t, sched)
    if coef_xt == 0.0:
        return coef_x0 * x0, sigma
    return coef_xt * x_t + coef_x0 * x0, sigma


def reverse_step(x_t, x0_hat, t: int, sched: 'Schedule', noise,
                 clip_x0: bool = False) -> np.ndarray:
    """
    Draw x_{t-1} from the posterior with x0 replaced by a prediction

    Args:
        x_t: noisy state at t
        x0_hat: denoiser prediction of x0
        t: timestep in [1, T]
        sched: schedule the forward process used
        noise: standard normal draws with the shape of x_t
        clip_x0: clip the prediction to [-1, 1] first (off by default)

    Returns:
        np.ndarray: x_{t-1}
    """
    x0_hat = np.asarray(x0_hat, dtype=np.float64)
    if clip_x0:
        x0_hat = np.clip(x0_hat, -1.0, 1.0)
    noise = np.asarray(noise, dtype=np.float64)
    validate_same_shape(x_t, noise, 'state and noise')
    mean, sigma = posterior_mean_sigma(x_t, x0_hat, t, sched)
    if sigma == 0.0:
        return mean
    return mean + sigma * noise


def posterior_kl(x0, x0_hat, t: int, sched: 'Schedule') -> np.ndarray:
    """
    KL(q(x_{t-1} | x_t, x0) || q(x_{t-1} | x_t, x0_hat)) summed over the last axis

    Both posteriors share sigma, so only the x0 term of the mean differs.
    Defined for 2 <= t <= T, where sigma > 0.
    """
    validate_timestep(t, sched.T)
    _, coef_x0, sigma = posterior_coefficients(t, sched)
    if sigma == 0.0:
        raise ValueError(f"posterior at t={t} is degenerate; use the reconstruction term")
    diff = coef_x0 * (np.asarray(x0, dtype=np.float64) - np.asarray(x0_hat, dtype=np.float64))
    return np.sum(diff * diff, axis=-1) / (2.0 * sigma * sigma)


class GaussianDiffusion(DiffusionProcess):
    """
    Continuous diffusion bound to one schedule

    Args:
        schedule: raw (cosine) schedule
        clip_x0: clip predictions to [-1, 1] in reverse steps
    """

    def __init__(self, schedule: 'Schedule', clip_x0: bool = False):
        super().__init__(schedule)
        self.clip_x0 = clip_x0

    def q_sample(self, x0, t: int, noise) -> np.ndarray:
        self._validate_timestep(t, allow_zero=True)
        return sample_xt(x0, float(self.schedule.alpha_bar[t]), noise)

    def q_posterior(self, x_t, x0, t: int) -> Tuple[np.ndarray, float]:
        return posterior_mean_sigma(x_t, x0, t, self.schedule)

    def p_sample(self, x_t, x0_hat, t: int, noise) -> np.ndarray:
        return reverse_step(x_t, x0_hat, t, self.schedule, noise, clip_x0=self.clip_x0)

    def get_info(self):
        info = super().get_info()
        info['clip_x0'] = self.clip_x0
        return info
