"""
Continuous and Gaussian-Softmax diffusion processes

The joint sketch process lives in diffusion.joint_diffusion and is imported
from there directly.

@version: v0.1.0
"""

from process_base import ShapeMismatchError, TimestepError

from .gaussian_diffusion import (
    GaussianDiffusion,
    forward_step,
    posterior_coefficients,
    posterior_kl,
    posterior_mean_sigma,
    reverse_step,
    sample_xt,
)
from .gs_diffusion import (
    GsDiffusion,
    floor_smooth,
    forward_step_gs,
    gs_posterior_kl,
    posterior_mean_sigma_gs,
    reverse_step_gs,
    sample_yt,
    smooth_onehot,
)

__all__ = [
    'GaussianDiffusion',
    'GsDiffusion',
    'ShapeMismatchError',
    'TimestepError',
    'floor_smooth',
    'forward_step',
    'forward_step_gs',
    'gs_posterior_kl',
    'posterior_coefficients',
    'posterior_kl',
    'posterior_mean_sigma',
    'posterior_mean_sigma_gs',
    'reverse_step',
    'reverse_step_gs',
    'sample_xt',
    'sample_yt',
    'smooth_onehot',
]
