"""
Variance schedules: cosine, augmented and calibrated discrete-path schedules

@version: v0.1.0
"""

from .variance_schedule import (
    ALPHA_MIN,
    DEFAULT_SMOOTHING,
    Schedule,
    ScheduleConfigError,
    ScheduleDomainError,
    augment_map,
    augment_schedule,
    calibrate_schedule,
    cosine_schedule,
    estimate_retention,
    f_logit_ratio,
    retention_target,
)

__all__ = [
    'ALPHA_MIN',
    'DEFAULT_SMOOTHING',
    'Schedule',
    'ScheduleConfigError',
    'ScheduleDomainError',
    'augment_map',
    'augment_schedule',
    'calibrate_schedule',
    'cosine_schedule',
    'estimate_retention',
    'f_logit_ratio',
    'retention_target',
]
