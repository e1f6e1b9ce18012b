"""
Variance schedules for the continuous and discrete diffusion paths

Cosine schedule, the logit-ratio augmentation applied to the discrete path,
a numerically calibrated alternative to that augmentation, and a Monte Carlo
estimator of argmax retention along a schedule.

Convention: a `raw` schedule is the desired retention curve (cosine), an
`augmented` schedule holds g(raw), the values actually fed into the discrete
cumulative transition.

@version: v0.1.0
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import integrate, optimize, stats
from tqdm import tqdm

from diffusion.gs_diffusion import sample_yt, smooth_onehot

logger = logging.getLogger(__name__)

# Cosine schedule constants
COSINE_OFFSET = 0.008
ALPHA_MIN = 0.001
ENDPOINT_TOLERANCE = 1e-12

DEFAULT_SMOOTHING = 0.99
MIN_RETENTION_TRIALS = 1000

# Largest logit advantage searched by the calibrated schedule, in noise units
CALIBRATION_MAX_ADVANTAGE = 60.0


class ScheduleConfigError(ValueError):
    """Raised for invalid schedule parameters (T, k, D, trials)"""
    pass


class ScheduleDomainError(ValueError):
    """Raised when a schedule helper receives a value outside its domain"""
    pass


def _per_step_alphas(alpha_bar: np.ndarray) -> np.ndarray:
    alphas = np.ones_like(alpha_bar)
    alphas[1:-1] = alpha_bar[1:-1] / alpha_bar[:-2]
    # alpha_bar[T] = 0, so alpha_T is taken from the clamp instead of 0/x
    alphas[-1] = max(alpha_bar[-1] / alpha_bar[-2], ALPHA_MIN)
    return alphas


@dataclass(frozen=True, eq=False)
class Schedule:
    """
    Immutable variance schedule over timesteps 0..T

    Args:
        alpha_bar: cumulative signal fractions, T+1 entries, 1 at t=0 and 0 at t=T
        smoothing_k: label-smoothing factor used with the discrete path
        num_classes: number of classes D the schedule was built for (None for
            schedules that are not class specific)
        kind: 'cosine', 'augmented' or 'calibrated'
    """
    alpha_bar: np.ndarray
    smoothing_k: float = DEFAULT_SMOOTHING
    num_classes: Optional[int] = None
    kind: str = 'cosine'
    alphas: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        alpha_bar = np.array(self.alpha_bar, dtype=np.float64)
        if alpha_bar.ndim != 1 or alpha_bar.size < 3:
            raise ScheduleConfigError(f"schedule needs T >= 2, got {alpha_bar.size - 1} steps")
        if not np.all(np.isfinite(alpha_bar)):
            raise ScheduleConfigError("schedule values must be finite")
        if abs(alpha_bar[0] - 1.0) > ENDPOINT_TOLERANCE or abs(alpha_bar[-1]) > ENDPOINT_TOLERANCE:
            raise ScheduleConfigError("schedule must start at 1 and end at 0, "
                                      f"got {alpha_bar[0]} and {alpha_bar[-1]}")
        if np.any(np.diff(alpha_bar) > 0.0):
            raise ScheduleConfigError("schedule must be non-increasing in t")
        if np.any(alpha_bar[:-1] <= 0.0):
            raise ScheduleConfigError("schedule reaches 0 before t=T")
        _validate_smoothing(self.smoothing_k)
        if self.num_classes is not None:
            _validate_num_classes(self.num_classes)
        alpha_bar[0] = 1.0
        alpha_bar[-1] = 0.0
        alpha_bar.flags.writeable = False
        alphas = _per_step_alphas(alpha_bar)
        alphas.flags.writeable = False
        object.__setattr__(self, 'alpha_bar', alpha_bar)
        object.__setattr__(self, 'alphas', alphas)

    @property
    def T(self) -> int:
        return self.alpha_bar.size - 1

    def alpha(self, t: int) -> float:
        """Per-step alpha_t for 1 <= t <= T"""
        return float(self.alphas[t])

    def get_info(self) -> dict:
        return {
            'kind': self.kind,
            'T': self.T,
            'smoothing_k': self.smoothing_k,
            'num_classes': self.num_classes,
        }


def _validate_smoothing(k: float) -> bool:
    if not 0.0 < k < 1.0:
        raise ScheduleConfigError(f"smoothing k={k} must lie in (0, 1)")
    return True


def _validate_num_classes(d: int) -> bool:
    if int(d) != d or d < 2:
        raise ScheduleConfigError(f"number of classes D={d} must be an integer >= 2")
    return True


def cosine_schedule(T: int, smoothing_k: float = DEFAULT_SMOOTHING) -> Schedule:
    """
    Cosine schedule f(t) = cos^2(((t/T + s)/(1 + s)) * pi/2), normalized by f(0)

    Per-step ratios are clipped below at ALPHA_MIN and the cumulative values
    rebuilt from them; the endpoints are forced to exactly 1 and 0.

    Args:
        T: number of timesteps, >= 2
        smoothing_k: stored on the schedule for use by the discrete path

    Returns:
        Schedule: kind 'cosine'

    Raises:
        ScheduleConfigError: If T < 2
    """
    if int(T) != T or T < 2:
        raise ScheduleConfigError(f"T={T} must be an integer >= 2")
    steps = np.arange(T + 1, dtype=np.float64)
    f = np.cos(((steps / T + COSINE_OFFSET) / (1.0 + COSINE_OFFSET)) * math.pi / 2.0) ** 2
    alpha_bar = f / f[0]
    ratios = np.clip(alpha_bar[1:] / alpha_bar[:-1], ALPHA_MIN, 1.0)
    alpha_bar = np.concatenate([[1.0], np.cumprod(ratios)])
    alpha_bar[-1] = 0.0
    return Schedule(alpha_bar, smoothing_k=smoothing_k, kind='cosine')


def f_logit_ratio(x, D: int):
    """
    f(x) = log((1 - x) / ((D - 1) x + 1))

    Returns -inf at x = 1, which callers resolve by their own limit.

    Raises:
        ScheduleDomainError: If x lies outside [0, 1]
    """
    _validate_num_classes(D)
    x_arr = np.asarray(x, dtype=np.float64)
    if np.any(~np.isfinite(x_arr)) or np.any(x_arr < 0.0) or np.any(x_arr > 1.0):
        raise ScheduleDomainError(f"f_logit_ratio expects x in [0, 1], got {x}")
    with np.errstate(divide='ignore'):
        out = np.log((1.0 - x_arr) / ((D - 1) * x_arr + 1.0))
    return float(out) if out.ndim == 0 else out


def augment_map(r, k: float, D: int):
    """g(r) = f(r)^2 / (f(r)^2 + f(k)^2), with g(1) = 1 taken as a limit"""
    _validate_smoothing(k)
    fk2 = f_logit_ratio(k, D) ** 2
    fr = np.asarray(f_logit_ratio(r, D))
    with np.errstate(invalid='ignore'):
        out = np.where(np.isfinite(fr), fr ** 2 / (fr ** 2 + fk2), 1.0)
    return float(out) if out.ndim == 0 else out


def augment_schedule(raw: Schedule, k: float, D: int) -> Schedule:
    """
    Remap a raw schedule so argmax retention of the discrete path tracks it

    Args:
        raw: desired retention curve, usually cosine_schedule(T)
        k: label-smoothing factor in (0, 1)
        D: number of classes of the discrete block

    Returns:
        Schedule: kind 'augmented', built for D classes

    Raises:
        ScheduleConfigError: If k is outside (0, 1) or D < 2
    """
    _validate_smoothing(k)
    _validate_num_classes(D)
    alpha_bar = augment_map(raw.alpha_bar, k, D)
    alpha_bar[0] = 1.0
    alpha_bar[-1] = 0.0
    return Schedule(alpha_bar, smoothing_k=k, num_classes=D, kind='augmented')


def retention_target(raw: Schedule, D: int) -> np.ndarray:
    """Desired retention r_t + (1 - r_t) / D along a raw schedule"""
    _validate_num_classes(D)
    return raw.alpha_bar + (1.0 - raw.alpha_bar) / D


def _retention_probability(advantage: float, D: int) -> float:
    # P(z_0 + a > z_j for all j != 0) with iid standard normal z
    def integrand(z):
        return stats.norm.pdf(z) * stats.norm.cdf(z + advantage) ** (D - 1)

    value, _ = integrate.quad(integrand, -np.inf, np.inf, epsabs=1e-12, epsrel=1e-10)
    return value


def calibrate_schedule(raw: Schedule, k: float, D: int) -> Schedule:
    """
    Discrete-path schedule whose Gaussian-noise retention equals the target

    Solves for the label logit advantage (in noise units) whose retention
    probability is r_t + (1 - r_t)/D, then converts it to the cumulative
    signal fraction b = a^2 / (a^2 + f(k)^2).

    Args:
        raw: desired retention curve
        k: label-smoothing factor in (0, 1)
        D: number of classes

    Returns:
        Schedule: kind 'calibrated'
    """
    _validate_smoothing(k)
    _validate_num_classes(D)
    fk2 = f_logit_ratio(k, D) ** 2
    targets = retention_target(raw, D)
    p_max = _retention_probability(CALIBRATION_MAX_ADVANTAGE, D)
    alpha_bar = np.empty_like(targets)
    for t, target in enumerate(targets):
        if t == 0:
            alpha_bar[t] = 1.0
            continue
        if t == raw.T or target <= 1.0 / D:
            alpha_bar[t] = 0.0
            continue
        if target >= p_max:
            advantage = CALIBRATION_MAX_ADVANTAGE
        else:
            advantage = optimize.brentq(lambda a: _retention_probability(a, D) - target,
                                        0.0, CALIBRATION_MAX_ADVANTAGE, xtol=1e-12)
        alpha_bar[t] = advantage ** 2 / (advantage ** 2 + fk2)
    # keep the sequence non-increasing against root-finding jitter
    alpha_bar = np.minimum.accumulate(alpha_bar)
    logger.debug("calibrated schedule for D=%d, T=%d", D, raw.T)
    return Schedule(alpha_bar, smoothing_k=k, num_classes=D, kind='calibrated')


def _retention_at(alpha_bar_t: float, y0: np.ndarray, trials: int,
                  seed_seq: np.random.SeedSequence) -> float:
    rng = np.random.default_rng(seed_seq)
    noise = rng.standard_normal((trials, y0.size))
    y_t = sample_yt(y0, alpha_bar_t, noise)
    return float(np.mean(np.argmax(y_t, axis=-1) == 0))


def estimate_retention(sched: Schedule, D: int, trials: int, seed: int,
                       workers: Optional[int] = None,
                       progress: bool = False) -> List[Tuple[int, float]]:
    """
    Monte Carlo estimate of P(argmax(y_t) = argmax(y_0)) for every t

    y_0 is the smoothed one-hot of class 0 (smoothing from the schedule) and
    y_t is drawn with the discrete cumulative transition at alpha_bar[t].
    Each timestep gets its own seed spawned from `seed`, so the curve is
    identical whether or not timesteps run in parallel.

    Args:
        sched: schedule whose values enter the transition directly
        D: number of classes
        trials: samples per timestep, >= 1000
        seed: base seed
        workers: thread count for parallel timesteps (None runs serially)
        progress: show a tqdm bar

    Returns:
        List[Tuple[int, float]]: (t, retention probability) for t = 0..T

    Raises:
        ScheduleConfigError: If trials < 1000 or D < 2
    """
    _validate_num_classes(D)
    if trials < MIN_RETENTION_TRIALS:
        raise ScheduleConfigError(f"trials={trials} must be >= {MIN_RETENTION_TRIALS}")
    y0 = smooth_onehot(0, D, sched.smoothing_k)
    children = np.random.SeedSequence(seed).spawn(sched.T + 1)
    timesteps = range(sched.T + 1)

    def run(t: int) -> float:
        return _retention_at(float(sched.alpha_bar[t]), y0, trials, children[t])

    logger.info("estimating %s retention: T=%d, D=%d, trials=%d", sched.kind, sched.T, D, trials)
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            probs = list(tqdm(pool.map(run, timesteps), total=sched.T + 1,
                              desc=f"retention ({sched.kind})", disable=not progress))
    else:
        probs = [run(t) for t in tqdm(timesteps, desc=f"retention ({sched.kind})",
                                      disable=not progress)]
    return list(zip(timesteps, probs))
