"""
Permutation-equivariant sketch denoiser

A small transformer over sketch rows: per-row input projection, additive
sinusoidal timestep embedding, content-based self-attention blocks and
per-block output heads. Nothing is indexed by row position, so permuting
the rows of the input permutes the output the same way. The positional
variant adds sinusoidal row-index features to the row embeddings and gives
that property up.

The network works in float64 and emits logits for the flag and class blocks;
TorchDenoiser wraps it as a numpy denoiser returning probabilities.

@version: v0.1.0
"""

import logging
import math
from typing import Callable, Dict, Tuple, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from diffusion.gs_diffusion import floor_smooth
from sketches.sketch_model import SketchLayout

logger = logging.getLogger(__name__)

DTYPE = torch.float64


class NumericError(ValueError):
    """
    Raised when activations stop being finite

    Args:
        message: description of the failure
        diagnostics: per-stage (finite fraction, max |finite value|)
    """

    def __init__(self, message: str, diagnostics: Dict[str, Tuple[float, float]]):
        super().__init__(message)
        self.diagnostics = diagnostics


def _stats(x: torch.Tensor) -> Tuple[float, float]:
    finite = torch.isfinite(x)
    fraction = float(finite.double().mean())
    peak = float(x[finite].abs().max()) if bool(finite.any()) else float('nan')
    return fraction, peak


def sinusoidal_table(count: int, dim: int) -> torch.Tensor:
    """sin/cos features of the integers 0..count-1, shape (count, dim)"""
    steps = torch.arange(count, dtype=DTYPE).unsqueeze(1)
    scales = torch.exp(torch.arange(0, dim, 2, dtype=DTYPE) * (-math.log(10000.0) / dim)).unsqueeze(0)
    table = torch.zeros(count, dim, dtype=DTYPE)
    table[:, 0::2] = torch.sin(steps * scales)
    table[:, 1::2] = torch.cos(steps * scales)[:, :dim // 2]
    return table


class SinusoidalEncoding(nn.Module):
    """Fixed sin/cos embedding of integer timesteps 0..max_timestep"""

    def __init__(self, max_timestep: int, dim: int):
        super().__init__()
        self.register_buffer('embs', sinusoidal_table(max_timestep + 1, dim), persistent=False)

    def forward(self, t: torch.Tensor) -> torch.Tensor:
        return self.embs[t]


class MultiHeadDotAttention(nn.Module):
    """Self-attention over rows with queries and keys from row content only"""

    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        if dim % num_heads:
            raise ValueError(f"width {dim} must be divisible by heads {num_heads}")
        self.num_heads = num_heads
        self.lin_qkv = nn.Linear(dim, 3 * dim)
        self.lin_out = nn.Linear(dim, dim)

    def forward(self, nodes: torch.Tensor) -> torch.Tensor:
        batch, rows, _ = nodes.shape
        q, k, v = self.lin_qkv(nodes).chunk(3, dim=-1)
        q, k, v = (x.reshape(batch, rows, self.num_heads, -1).transpose(1, 2) for x in (q, k, v))
        scores = q @ k.transpose(-2, -1) / math.sqrt(q.shape[-1])
        out = torch.softmax(scores, dim=-1) @ v
        return self.lin_out(out.transpose(1, 2).reshape(batch, rows, -1))


class TransformerLayer(nn.Module):
    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        self.norm_in = nn.LayerNorm(dim, elementwise_affine=False)
        self.attention = MultiHeadDotAttention(dim, num_heads)
        self.norm_attn = nn.LayerNorm(dim, elementwise_affine=False)
        self.mlp = nn.Sequential(nn.Linear(dim, dim), nn.SiLU(), nn.Linear(dim, dim))

    def forward(self, nodes: torch.Tensor) -> torch.Tensor:
        nodes = nodes + self.attention(self.norm_in(nodes))
        return nodes + self.mlp(self.norm_attn(nodes))


class SketchDenoiser(nn.Module):
    """
    Transformer denoiser over (batch, n, 21) sketch matrices

    Args:
        max_timestep: largest timestep the embedding covers (T)
        width: embedding width
        depth: number of attention blocks
        heads: attention heads per block
        head_init_std: std of the flag and class head weights; small values
            start predictions near uniform
        positional: add sinusoidal row-index encodings (not equivariant)
    """

    def __init__(self, max_timestep: int, width: int = 64, depth: int = 2, heads: int = 4,
                 head_init_std: float = 1e-3, positional: bool = False):
        super().__init__()
        self.max_timestep = max_timestep
        self.width = width
        self.depth = depth
        self.heads = heads
        self.positional = positional
        self.mlp_in = nn.Linear(SketchLayout.WIDTH, width)
        self.time_embedder = SinusoidalEncoding(max_timestep, width)
        self.mlp_time = nn.Sequential(nn.Linear(width, width), nn.SiLU())
        self.layers = nn.ModuleList([TransformerLayer(width, heads) for _ in range(depth)])
        self.norm_out = nn.LayerNorm(width, elementwise_affine=False)
        self.lin_out_flags = nn.Linear(width, SketchLayout.NUM_FLAGS)
        self.lin_out_types = nn.Linear(width, SketchLayout.NUM_CLASSES)
        self.lin_out_params = nn.Linear(width, SketchLayout.PARAMS.stop - SketchLayout.PARAMS.start)
        for head in (self.lin_out_flags, self.lin_out_types):
            nn.init.normal_(head.weight, std=head_init_std)
            nn.init.zeros_(head.bias)
        self.to(DTYPE)

    def hyperparameters(self) -> Dict[str, Union[int, bool]]:
        return {'max_timestep': self.max_timestep, 'width': self.width,
                'depth': self.depth, 'heads': self.heads, 'positional': self.positional}

    def _check(self, name: str, x: torch.Tensor, diagnostics: Dict[str, Tuple[float, float]]):
        diagnostics[name] = _stats(x.detach())
        if diagnostics[name][0] < 1.0:
            raise NumericError(f"non-finite activations after {name}", diagnostics)

    def forward(self, nodes: torch.Tensor, t: Union[int, torch.Tensor]) -> torch.Tensor:
        """
        Predict X0 from X_t

        Args:
            nodes: noisy sketch matrices, shape (batch, n, 21)
            t: timestep, scalar or one per batch item

        Returns:
            torch.Tensor: (batch, n, 21) with flag and class logits followed by parameters

        Raises:
            NumericError: If any stage produces non-finite values
        """
        diagnostics: Dict[str, Tuple[float, float]] = {}
        self._check('input', nodes, diagnostics)
        t = torch.as_tensor(t, dtype=torch.long).reshape(-1)
        time = self.mlp_time(self.time_embedder(t)).unsqueeze(1)
        h = self.mlp_in(nodes) + time
        if self.positional:
            h = h + sinusoidal_table(nodes.shape[-2], self.width)
        self._check('embedding', h, diagnostics)
        for i, layer in enumerate(self.layers):
            h = layer(h)
            self._check(f'block{i}', h, diagnostics)
        h = self.norm_out(h)
        out = torch.cat([self.lin_out_flags(h), self.lin_out_types(h), self.lin_out_params(h)], dim=-1)
        self._check('output', out, diagnostics)
        return out


def logits_to_probs(out: torch.Tensor) -> torch.Tensor:
    """Softmax the flag and class logits of a network output, leave parameters"""
    return torch.cat([
        torch.softmax(out[..., SketchLayout.FLAG], dim=-1),
        torch.softmax(out[..., SketchLayout.CLASS], dim=-1),
        out[..., SketchLayout.PARAMS],
    ], dim=-1)


class TorchDenoiser:
    """
    numpy adapter around a SketchDenoiser

    Accepts states of shape (..., n, 21) and returns predictions of the same
    shape with probability vectors on the flag and class blocks.
    """

    def __init__(self, model: SketchDenoiser):
        self.model = model

    def __call__(self, x_t: np.ndarray, t: int) -> np.ndarray:
        x_t = np.asarray(x_t, dtype=np.float64)
        batch_shape = x_t.shape[:-2]
        flat = torch.from_numpy(np.ascontiguousarray(x_t.reshape((-1,) + x_t.shape[-2:])))
        self.model.eval()
        with torch.no_grad():
            out = logits_to_probs(self.model(flat, int(t)))
        return out.numpy().reshape(batch_shape + x_t.shape[-2:])


def oracle_denoiser(x0, k: float = 0.99) -> Callable[[np.ndarray, int], np.ndarray]:
    """
    Denoiser that ignores its input and always predicts x0

    Flag and class blocks of x0 are floor-smoothed once, which leaves
    already smoothed one-hots unchanged.
    """
    target = np.array(x0, dtype=np.float64)
    target[..., SketchLayout.FLAG] = floor_smooth(target[..., SketchLayout.FLAG], k)
    target[..., SketchLayout.CLASS] = floor_smooth(target[..., SketchLayout.CLASS], k)

    def predict(x_t: np.ndarray, t: int) -> np.ndarray:
        return np.broadcast_to(target, np.shape(x_t)).copy()

    return predict
