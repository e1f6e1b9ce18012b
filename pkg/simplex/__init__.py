"""
Gaussian-Softmax distribution on the probability simplex

@version: v0.1.0
"""

from .simplex_core import (
    GsParams,
    SimplexDomainError,
    SimplexInputError,
    SimplexPoint,
    center_logits,
    check_simplex_point,
    gs_density,
    gs_kl,
    gs_log_density,
    gs_sample,
    perp_sq_norm,
    softmax,
)

__all__ = [
    'GsParams',
    'SimplexDomainError',
    'SimplexInputError',
    'SimplexPoint',
    'center_logits',
    'check_simplex_point',
    'gs_density',
    'gs_kl',
    'gs_log_density',
    'gs_sample',
    'perp_sq_norm',
    'softmax',
]
