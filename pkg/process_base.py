'''
Base class shared by the diffusion processes

Holds the variance schedule a process runs on, validates timesteps and
array shapes, and reports what the process is configured with.

@version: v0.1.0
'''

from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from schedules.variance_schedule import Schedule


class TimestepError(ValueError):
    """Raised when a timestep lies outside the range an operation accepts"""
    pass


class ShapeMismatchError(ValueError):
    """Raised when arrays that must align have different shapes"""
    pass


def validate_timestep(t: int, T: int, allow_zero: bool = False) -> bool:
    """
    Validate a timestep against a schedule length

    Args:
        t: timestep index
        T: final timestep of the schedule
        allow_zero: accept t = 0 (forward marginals do, posteriors do not)

    Returns:
        bool: True if t is valid

    Raises:
        TimestepError: If t is not an integer in the accepted range
    """
    low = 0 if allow_zero else 1
    if isinstance(t, (bool, np.bool_)) or int(t) != t:
        raise TimestepError(f"timestep {t!r} must be an integer")
    if t < low or t > T:
        raise TimestepError(f"timestep {t} out of range [{low}, {T}]")
    return True


def validate_same_shape(a: np.ndarray, b: np.ndarray, what: str = 'arrays') -> bool:
    """
    Raises:
        ShapeMismatchError: If a and b differ in shape
    """
    if np.shape(a) != np.shape(b):
        raise ShapeMismatchError(f"{what} differ in shape: {np.shape(a)} vs {np.shape(b)}")
    return True


class DiffusionProcess():
    def __init__(self, schedule: 'Schedule'):
        self.schedule = schedule

    @property
    def T(self) -> int:
        return self.schedule.T

    def get_info(self):
        '''
        Returns the process configuration
        '''
        info = {'process': type(self).__name__}
        info.update(self.schedule.get_info())
        return info

    def _validate_timestep(self, t: int, allow_zero: bool = False) -> bool:
        return validate_timestep(t, self.T, allow_zero)
