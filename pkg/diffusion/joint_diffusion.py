"""
Joint continuous-discrete diffusion over sketch matrices

Every row of a sketch matrix is noised and denoised independently: the
construction-flag and class blocks through Gaussian-Softmax diffusion on
their own discrete-path schedules, the parameter block through Gaussian
diffusion on the raw cosine schedule. Includes the inference-time parameter
weighting, the sampling loop and a Monte Carlo ELBO estimate.

Noise is passed either as a numpy Generator or as an explicit standard
normal array with the shape of the sketch matrix; column j of the array
drives column j of the state.

@version: v0.1.0
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Protocol, Sequence, Union

import numpy as np
from tqdm import tqdm

from diffusion.gaussian_diffusion import GaussianDiffusion, posterior_kl
from diffusion.gs_diffusion import GsDiffusion, gs_posterior_kl, reverse_step_gs
from process_base import DiffusionProcess, validate_same_shape
from schedules.variance_schedule import (
    DEFAULT_SMOOTHING,
    Schedule,
    ScheduleConfigError,
    augment_schedule,
    calibrate_schedule,
    cosine_schedule,
)
from simplex.simplex_core import check_simplex_point, softmax
from sketches.sketch_model import PrimitiveKind, SketchLayout, SketchRecord, decode_sketch

logger = logging.getLogger(__name__)

NoiseSource = Union[np.random.Generator, np.ndarray]

DISCRETE_SCHEDULE_KINDS = ('augmented', 'calibrated', 'raw')


class Denoiser(Protocol):
    """
    Anything mapping a noisy sketch matrix and timestep to a prediction of X0

    Input and output have shape (..., n, 21); flag and class blocks of the
    output are probability vectors, parameter blocks are raw values.
    """

    def __call__(self, x_t: np.ndarray, t: int) -> np.ndarray:
        ...


@dataclass(frozen=True)
class DiffusionConfig:
    """
    Joint diffusion configuration

    Args:
        T: number of timesteps (>= 2)
        k: label smoothing in (0, 1)
        discrete_schedule: 'augmented', 'calibrated' or 'raw' for the discrete blocks
        seed: default sampling seed
        clip_x0: clip continuous predictions to [-1, 1] before each reverse step
        prediction_weight: exponent applied to discrete predictions before each
            reverse step (1.0 leaves them unchanged)
        n_max: rows per sketch matrix
    """
    T: int = 100
    k: float = DEFAULT_SMOOTHING
    discrete_schedule: str = 'augmented'
    seed: int = 0
    clip_x0: bool = False
    prediction_weight: float = 1.0
    n_max: int = SketchLayout.N_MAX

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 2:
            raise ScheduleConfigError(f"T={self.T} must be an integer >= 2")
        if not 0.0 < self.k < 1.0:
            raise ScheduleConfigError(f"k={self.k} must lie in (0, 1)")
        if self.discrete_schedule not in DISCRETE_SCHEDULE_KINDS:
            raise ScheduleConfigError(f"discrete_schedule={self.discrete_schedule!r} must be one of "
                                      f"{DISCRETE_SCHEDULE_KINDS}")
        if not self.prediction_weight > 0.0:
            raise ValueError(f"prediction_weight={self.prediction_weight} must be > 0")
        if self.n_max < 1:
            raise ValueError(f"n_max={self.n_max} must be >= 1")


@dataclass(frozen=True, eq=False)
class NoisySketch:
    """Sketch matrix state at timestep t"""
    matrix: np.ndarray
    t: int


@dataclass(frozen=True)
class ElboEstimate:
    """
    ELBO estimate for one sketch, in bits

    bits_per_sketch = continuous_kl + discrete_kl + reconstruction.
    bits_per_primitive divides by the number of non-None rows.
    """
    bits_per_sketch: float
    bits_per_primitive: float
    continuous_kl: float
    discrete_kl: float
    reconstruction: float
    mc_samples: int


def _discrete_schedule(kind: str, raw: Schedule, k: float, D: int) -> Schedule:
    if kind == 'augmented':
        return augment_schedule(raw, k, D)
    if kind == 'calibrated':
        return calibrate_schedule(raw, k, D)
    return raw


def _noise(source: NoiseSource, shape) -> np.ndarray:
    if isinstance(source, np.random.Generator):
        return source.standard_normal(shape)
    noise = np.asarray(source, dtype=np.float64)
    validate_same_shape(noise.shape, tuple(shape), 'noise and sketch')
    return noise


def rescale_type_probs(c_hat) -> np.ndarray:
    """
    Divide class probabilities by their maximum, so the most likely type gets weight 1

    Args:
        c_hat: class probabilities, shape (..., 5)
    """
    c_hat = check_simplex_point(c_hat, strict=False)
    return c_hat / c_hat.max(axis=-1, keepdims=True)


def apply_param_weighting(x0_hat) -> np.ndarray:
    """
    Scale each type's parameter slice by that type's rescaled probability

    Flag and class blocks are returned untouched.
    """
    x0_hat = np.array(x0_hat, dtype=np.float64)
    weights = rescale_type_probs(x0_hat[..., SketchLayout.CLASS])
    for kind, sl in SketchLayout.PARAM_SLICES.items():
        x0_hat[..., sl] *= weights[..., int(kind):int(kind) + 1]
    return x0_hat


class JointDiffusion(DiffusionProcess):
    """
    Row-factorized joint diffusion on (..., n, 21) sketch matrices

    Args:
        config: diffusion configuration
    """

    def __init__(self, config: DiffusionConfig):
        raw = cosine_schedule(config.T, config.k)
        super().__init__(raw)
        self.config = config
        self.params_process = GaussianDiffusion(raw, clip_x0=config.clip_x0)
        self.flag_process = GsDiffusion(
            _discrete_schedule(config.discrete_schedule, raw, config.k, SketchLayout.NUM_FLAGS),
            SketchLayout.NUM_FLAGS)
        self.class_process = GsDiffusion(
            _discrete_schedule(config.discrete_schedule, raw, config.k, SketchLayout.NUM_CLASSES),
            SketchLayout.NUM_CLASSES)

    def get_info(self):
        info = super().get_info()
        info['discrete_schedule'] = self.config.discrete_schedule
        info['clip_x0'] = self.config.clip_x0
        info['prediction_weight'] = self.config.prediction_weight
        return info

    def noise_sketch(self, x0, t: int, noise: NoiseSource) -> NoisySketch:
        """
        Draw X_t ~ q(X_t | X_0), independently per row

        Args:
            x0: clean sketch matrix with smoothed one-hot blocks, shape (..., n, 21)
            t: timestep in [0, T]
            noise: Generator or standard normal array shaped like x0

        Returns:
            NoisySketch: state at t
        """
        self._validate_timestep(t, allow_zero=True)
        x0 = np.asarray(x0, dtype=np.float64)
        eps = _noise(noise, x0.shape)
        out = np.empty_like(x0)
        out[..., SketchLayout.FLAG] = self.flag_process.q_sample(
            x0[..., SketchLayout.FLAG], t, eps[..., SketchLayout.FLAG])
        out[..., SketchLayout.CLASS] = self.class_process.q_sample(
            x0[..., SketchLayout.CLASS], t, eps[..., SketchLayout.CLASS])
        out[..., SketchLayout.PARAMS] = self.params_process.q_sample(
            x0[..., SketchLayout.PARAMS], t, eps[..., SketchLayout.PARAMS])
        return NoisySketch(out, t)

    def _reverse_discrete(self, process: GsDiffusion, y_t, y0_hat, t: int, noise) -> np.ndarray:
        y0_hat = process.resmooth(y0_hat)
        if self.config.prediction_weight != 1.0:
            y0_hat = softmax(self.config.prediction_weight * np.log(y0_hat))
        return reverse_step_gs(y_t, y0_hat, t, process.schedule, noise)

    def denoise_step(self, x_t: NoisySketch, x0_hat, noise: NoiseSource) -> NoisySketch:
        """
        Draw X_{t-1} from the factorized posterior with X_0 replaced by x0_hat

        Args:
            x_t: current state, 1 <= x_t.t <= T
            x0_hat: denoiser prediction, same shape as the state
            noise: Generator or standard normal array shaped like the state

        Returns:
            NoisySketch: state at t - 1
        """
        t = x_t.t
        self._validate_timestep(t)
        state = x_t.matrix
        x0_hat = np.asarray(x0_hat, dtype=np.float64)
        validate_same_shape(state, x0_hat, 'state and prediction')
        eps = _noise(noise, state.shape)
        out = np.empty_like(state)
        out[..., SketchLayout.FLAG] = self._reverse_discrete(
            self.flag_process, state[..., SketchLayout.FLAG], x0_hat[..., SketchLayout.FLAG], t,
            eps[..., SketchLayout.FLAG])
        out[..., SketchLayout.CLASS] = self._reverse_discrete(
            self.class_process, state[..., SketchLayout.CLASS], x0_hat[..., SketchLayout.CLASS], t,
            eps[..., SketchLayout.CLASS])
        out[..., SketchLayout.PARAMS] = self.params_process.p_sample(
            state[..., SketchLayout.PARAMS], x0_hat[..., SketchLayout.PARAMS], t,
            eps[..., SketchLayout.PARAMS])
        return NoisySketch(out, t - 1)

    def prior_sample(self, rng: np.random.Generator, batch: Sequence[int] = ()) -> NoisySketch:
        """Pure-noise state X_T: softmax of normals on one-hot blocks, normals on parameters"""
        shape = tuple(batch) + (self.config.n_max, SketchLayout.WIDTH)
        x = rng.standard_normal(shape)
        x[..., SketchLayout.FLAG] = softmax(x[..., SketchLayout.FLAG])
        x[..., SketchLayout.CLASS] = softmax(x[..., SketchLayout.CLASS])
        return NoisySketch(x, self.T)

    def run_reverse(self, denoiser: Denoiser, rngs: List[np.random.Generator],
                    progress: bool = False) -> np.ndarray:
        """
        Walk a batch of pure-noise states back to t=0

        Sketch i draws all of its noise from rngs[i], so its trajectory does
        not depend on the rest of the batch.

        Returns:
            np.ndarray: final states, shape (len(rngs), n, 21)
        """
        state = NoisySketch(np.stack([self.prior_sample(rng).matrix for rng in rngs]), self.T)
        shape = state.matrix.shape[1:]
        for t in tqdm(range(self.T, 0, -1), desc='sampling', disable=not progress):
            x0_hat = apply_param_weighting(denoiser(state.matrix, t))
            noise = np.stack([rng.standard_normal(shape) for rng in rngs])
            state = self.denoise_step(state, x0_hat, noise)
            if logger.isEnabledFor(logging.DEBUG) and t % max(self.T // 10, 1) == 0:
                logger.debug("t=%d mean class confidence %.4f", t,
                             float(state.matrix[..., SketchLayout.CLASS].max(axis=-1).mean()))
        return state.matrix

    def sample(self, denoiser: Denoiser, seed: int, rec_id: Optional[str] = None,
               progress: bool = False) -> SketchRecord:
        """Generate one sketch, deterministic given seed"""
        matrix = self.run_reverse(denoiser, [np.random.default_rng(seed)], progress)[0]
        return decode_sketch(matrix, rec_id or f"sample-{seed}")

    def sample_batch(self, denoiser: Denoiser, seed: int, count: int,
                     progress: bool = False) -> List[SketchRecord]:
        """
        Generate count sketches with independent seeds spawned from seed

        Raises:
            ValueError: If count < 1
        """
        if count < 1:
            raise ValueError(f"count={count} must be >= 1")
        children = np.random.SeedSequence(seed).spawn(count)
        matrices = self.run_reverse(denoiser, [np.random.default_rng(c) for c in children], progress)
        return [decode_sketch(m, f"sample-{seed}-{i:06d}") for i, m in enumerate(matrices)]

    def _row_kl(self, x0: np.ndarray, x0_hat: np.ndarray, t: int):
        continuous = posterior_kl(x0[..., SketchLayout.PARAMS], x0_hat[..., SketchLayout.PARAMS],
                                  t, self.params_process.schedule)
        discrete = np.zeros(x0.shape[:-1])
        for process, sl in ((self.flag_process, SketchLayout.FLAG), (self.class_process, SketchLayout.CLASS)):
            discrete = discrete + gs_posterior_kl(x0[..., sl], process.resmooth(x0_hat[..., sl]),
                                                  t, process.schedule)
        return float(np.sum(continuous)), float(np.sum(discrete))

    def _reconstruction(self, x0: np.ndarray, x0_hat: np.ndarray) -> float:
        # Gaussian error at the first-step variance plus KL of the one-hot blocks
        step_var = 1.0 - self.params_process.schedule.alpha(1)
        diff = x0[..., SketchLayout.PARAMS] - x0_hat[..., SketchLayout.PARAMS]
        nats = 0.5 * float(np.sum(diff * diff)) / step_var
        for process, sl in ((self.flag_process, SketchLayout.FLAG), (self.class_process, SketchLayout.CLASS)):
            y0 = x0[..., sl]
            y0_hat = process.resmooth(x0_hat[..., sl])
            nats += float(np.sum(y0 * (np.log(y0) - np.log(y0_hat))))
        return nats

    def elbo(self, denoiser: Denoiser, x0, mc_samples: int, seed: int = 0) -> ElboEstimate:
        """
        Monte Carlo ELBO of one clean sketch matrix

        Each sample draws t uniformly from [2, T] and scales the posterior KL
        at t by T - 1, then adds the t=1 reconstruction term. The prior term
        vanishes because alpha_bar[T] = 0.

        Raises:
            ValueError: If mc_samples < 1
        """
        if mc_samples < 1:
            raise ValueError(f"mc_samples={mc_samples} must be >= 1")
        x0 = np.asarray(x0, dtype=np.float64)
        rng = np.random.default_rng(seed)
        continuous = discrete = recon = 0.0
        for _ in range(mc_samples):
            t = int(rng.integers(2, self.T + 1))
            x_t = self.noise_sketch(x0, t, rng)
            x0_hat = apply_param_weighting(denoiser(x_t.matrix, t))
            c, d = self._row_kl(x0, x0_hat, t)
            continuous += (self.T - 1) * c
            discrete += (self.T - 1) * d
            x_1 = self.noise_sketch(x0, 1, rng)
            recon += self._reconstruction(x0, apply_param_weighting(denoiser(x_1.matrix, 1)))
        scale = 1.0 / (mc_samples * math.log(2.0))
        continuous, discrete, recon = continuous * scale, discrete * scale, recon * scale
        total = continuous + discrete + recon
        active = int(np.sum(x0[..., SketchLayout.CLASS].argmax(axis=-1) != int(PrimitiveKind.NONE)))
        return ElboEstimate(
            bits_per_sketch=total,
            bits_per_primitive=total / active if active else float('nan'),
            continuous_kl=continuous,
            discrete_kl=discrete,
            reconstruction=recon,
            mc_samples=mc_samples,
        )


@lru_cache(maxsize=8)
def get_process(config: DiffusionConfig) -> JointDiffusion:
    """Shared JointDiffusion per configuration (schedules are built once)"""
    return JointDiffusion(config)


def noise_sketch(x0, t: int, config: DiffusionConfig, noise: NoiseSource) -> NoisySketch:
    return get_process(config).noise_sketch(x0, t, noise)


def denoise_step(x_t: NoisySketch, x0_hat, config: DiffusionConfig, noise: NoiseSource) -> NoisySketch:
    return get_process(config).denoise_step(x_t, x0_hat, noise)


def sample_sketch(denoiser: Denoiser, config: DiffusionConfig, seed: Optional[int] = None,
                  progress: bool = False) -> SketchRecord:
    """Generate one sketch from pure noise; seed defaults to config.seed"""
    seed = config.seed if seed is None else seed
    return get_process(config).sample(denoiser, seed, progress=progress)


def sample_sketches(denoiser: Denoiser, config: DiffusionConfig, count: int,
                    seed: Optional[int] = None, progress: bool = False) -> List[SketchRecord]:
    """Generate count sketches in one batch, each with its own derived seed"""
    seed = config.seed if seed is None else seed
    return get_process(config).sample_batch(denoiser, seed, count, progress)


def elbo_bits(denoiser: Denoiser, x0, config: DiffusionConfig, mc_samples: int,
              seed: Optional[int] = None) -> ElboEstimate:
    seed = config.seed if seed is None else seed
    return get_process(config).elbo(denoiser, x0, mc_samples, seed)
