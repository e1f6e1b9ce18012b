"""
Denoiser checkpoint files

Layout: one JSON header line (format, version, seed, model hyperparameters,
run config and the name and shape of every tensor) followed by the tensors
as little-endian float64 blocks in header order.

@version: v0.1.0
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np
import torch

from .denoiser_network import SketchDenoiser

logger = logging.getLogger(__name__)

FORMAT_NAME = 'sketch-denoiser-ckpt'
FORMAT_VERSION = 1


class CheckpointFormatError(ValueError):
    """Raised for malformed or unsupported checkpoint files"""
    pass


def save_checkpoint(path: Union[str, Path], model: SketchDenoiser, config: Dict[str, Any],
                    seed: int) -> Path:
    """
    Write model parameters with a JSON header

    Returns:
        Path: the written file
    """
    path = Path(path)
    state = model.state_dict()
    header = {
        'format': FORMAT_NAME,
        'version': FORMAT_VERSION,
        'seed': seed,
        'model': model.hyperparameters(),
        'config': config,
        'tensors': [{'name': name, 'shape': list(tensor.shape)} for name, tensor in state.items()],
    }
    with path.open('wb') as f:
        f.write(json.dumps(header, sort_keys=True).encode('utf-8') + b'\n')
        for tensor in state.values():
            f.write(tensor.detach().cpu().numpy().astype('<f8').tobytes())
    logger.debug("saved checkpoint with %d tensors to %s", len(state), path)
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[SketchDenoiser, Dict[str, Any]]:
    """
    Rebuild a model from a checkpoint file

    Returns:
        Tuple[SketchDenoiser, Dict[str, Any]]: (model, header)

    Raises:
        CheckpointFormatError: If the header is invalid or the payload size is wrong
    """
    path = Path(path)
    with path.open('rb') as f:
        try:
            header = json.loads(f.readline().decode('utf-8'))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointFormatError(f"{path}: unreadable header") from e
        payload = f.read()
    if not isinstance(header, dict) or header.get('format') != FORMAT_NAME:
        raise CheckpointFormatError(f"{path}: not a {FORMAT_NAME} file")
    if header.get('version') != FORMAT_VERSION:
        raise CheckpointFormatError(f"{path}: unsupported version {header.get('version')}")

    model = SketchDenoiser(**header['model'])
    expected = sum(int(np.prod(entry['shape'])) for entry in header['tensors']) * 8
    if len(payload) != expected:
        raise CheckpointFormatError(f"{path}: payload has {len(payload)} bytes, expected {expected}")
    values = np.frombuffer(payload, dtype='<f8')
    state = {}
    offset = 0
    for entry in header['tensors']:
        size = int(np.prod(entry['shape']))
        block = values[offset:offset + size].reshape(entry['shape']).astype(np.float64)
        state[entry['name']] = torch.from_numpy(block.copy())
        offset += size
    try:
        model.load_state_dict(state)
    except RuntimeError as e:
        raise CheckpointFormatError(f"{path}: tensors do not match the model: {e}") from e
    return model, header
