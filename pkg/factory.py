"""
Sketch Diffusion Factory

Builds schedules, joint diffusion processes and denoisers from short kind
names, as used by the command line and run configuration files.

@version: v0.1.0
"""

import logging
from dataclasses import asdict
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from denoiser.checkpoint import load_checkpoint
from denoiser.denoiser_network import TorchDenoiser, oracle_denoiser
from diffusion.joint_diffusion import Denoiser, DiffusionConfig, JointDiffusion, get_process
from schedules.variance_schedule import (
    DEFAULT_SMOOTHING,
    Schedule,
    augment_schedule,
    calibrate_schedule,
    cosine_schedule,
)

logger = logging.getLogger(__name__)


class UnsupportedKindError(ValueError):
    """Raised when a schedule or denoiser kind is not known"""
    pass


class DiffusionFactory:
    """
    Factory for schedules, joint processes and denoisers
    """

    SCHEDULE_KINDS = ('cosine', 'augmented', 'calibrated')
    DENOISER_KINDS = ('oracle', 'torch')

    @classmethod
    def validate_kind(cls, kind: str, supported: Tuple[str, ...], what: str) -> bool:
        """
        Raises:
            UnsupportedKindError: If kind is not in supported
        """
        if kind not in supported:
            raise UnsupportedKindError(f"unsupported {what} kind {kind!r}, expected one of {supported}")
        return True

    @classmethod
    def create_schedule(cls, kind: str, T: int, k: float = DEFAULT_SMOOTHING, D: int = 5) -> Schedule:
        """
        Create a schedule by kind

        Args:
            kind: 'cosine' (raw), 'augmented' or 'calibrated'
            T: number of timesteps
            k: label smoothing
            D: number of classes of the discrete path (ignored for 'cosine')

        Returns:
            Schedule: the requested schedule

        Raises:
            UnsupportedKindError: If kind is unknown

        Example:
            >>> sched = DiffusionFactory.create_schedule('augmented', 100, D=5)
            >>> sched.kind
            'augmented'
        """
        cls.validate_kind(kind, cls.SCHEDULE_KINDS, 'schedule')
        raw = cosine_schedule(T, k)
        if kind == 'cosine':
            return raw
        if kind == 'augmented':
            return augment_schedule(raw, k, D)
        return calibrate_schedule(raw, k, D)

    @classmethod
    def create_process(cls, config: Optional[Union[DiffusionConfig, Dict[str, Any]]] = None,
                       **overrides) -> JointDiffusion:
        """
        Create (or fetch the cached) joint process

        Args:
            config: a DiffusionConfig, a dict of its fields, or None for defaults
            overrides: fields replacing those of config

        Returns:
            JointDiffusion: the process for the resolved configuration
        """
        if isinstance(config, DiffusionConfig):
            fields = asdict(config)
        else:
            fields = dict(config or {})
        fields.update(overrides)
        return get_process(DiffusionConfig(**fields))

    @classmethod
    def create_denoiser(cls, kind: str, x0: Optional[np.ndarray] = None,
                        checkpoint: Optional[Union[str, Path]] = None,
                        k: float = DEFAULT_SMOOTHING) -> Denoiser:
        """
        Create a denoiser by kind

        Args:
            kind: 'oracle' (needs x0) or 'torch' (needs checkpoint)
            x0: clean sketch matrix the oracle predicts
            checkpoint: path of a saved denoiser
            k: smoothing the oracle floor-smooths with

        Returns:
            Denoiser: callable mapping (x_t, t) to a prediction of X0

        Raises:
            UnsupportedKindError: If kind is unknown
            ValueError: If the input the kind needs is missing
        """
        cls.validate_kind(kind, cls.DENOISER_KINDS, 'denoiser')
        if kind == 'oracle':
            if x0 is None:
                raise ValueError("the oracle denoiser needs a clean sketch matrix")
            return oracle_denoiser(x0, k)
        if checkpoint is None:
            raise ValueError("the torch denoiser needs a checkpoint path")
        model, _ = load_checkpoint(checkpoint)
        logger.info("loaded denoiser %s from %s", model.hyperparameters(), checkpoint)
        return TorchDenoiser(model)

    @classmethod
    def get_supported_schedules(cls) -> list:
        return list(cls.SCHEDULE_KINDS)

    @classmethod
    def get_supported_denoisers(cls) -> list:
        return list(cls.DENOISER_KINDS)
