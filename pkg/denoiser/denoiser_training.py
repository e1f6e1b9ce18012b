"""
Training of the sketch denoiser

Masked, lambda-weighted reconstruction loss (MSE on the parameters of each
row's true type, cross entropy on the flag and class blocks), a constant
learning-rate SGD loop over noised corpus batches, and diagnostics: class
accuracy at a fixed timestep and a finite-difference gradient check.

@version: v0.1.0
"""

import copy
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from tqdm import tqdm

from diffusion.joint_diffusion import DiffusionConfig, get_process
from sketches.sketch_model import SketchLayout

from .checkpoint import save_checkpoint
from .denoiser_network import NumericError, SketchDenoiser, TorchDenoiser

logger = logging.getLogger(__name__)

# Threshold of 150 steps out of 2000, rescaled to the configured T
BOOST_STEPS = 150
BOOST_REFERENCE_T = 2000


class TrainingDivergedError(RuntimeError):
    """
    Raised when the loss, the activations, the gradients or the weights become non-finite

    Args:
        message: description of the failure
        last_state: state_dict after the last step with finite loss and weights
        epoch: epoch in which training diverged
    """

    def __init__(self, message: str, last_state: Dict[str, torch.Tensor], epoch: int):
        super().__init__(message)
        self.last_state = last_state
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    """
    Training configuration

    Args:
        lam: MSE boost factor applied when t <= mse_boost_threshold
        mse_boost_threshold: last boosted timestep; None scales 150/2000 to T
        learning_rate: constant SGD step size
        batch_size: sketches per step
        epochs: passes over the corpus
        seed: seed for initialization, shuffling, timesteps and noise
        width: denoiser embedding width
        depth: attention blocks
        heads: attention heads
        positional: add row-index encodings to the denoiser
    """
    lam: float = 16.0
    mse_boost_threshold: Optional[int] = None
    learning_rate: float = 1e-4
    batch_size: int = 32
    epochs: int = 200
    seed: int = 0
    width: int = 64
    depth: int = 2
    heads: int = 4
    positional: bool = False

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lam={self.lam} must be > 0")
        if self.mse_boost_threshold is not None and self.mse_boost_threshold < 0:
            raise ValueError(f"mse_boost_threshold={self.mse_boost_threshold} must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate={self.learning_rate} must be > 0")
        if self.batch_size < 1:
            raise ValueError(f"batch_size={self.batch_size} must be >= 1")
        if self.epochs < 0:
            raise ValueError(f"epochs={self.epochs} must be >= 0")
        if self.width < 1 or self.depth < 0 or self.heads < 1:
            raise ValueError(f"invalid network shape width={self.width} depth={self.depth} heads={self.heads}")

    def threshold_for(self, T: int) -> int:
        """
        Resolved MSE boost threshold for T timesteps

        Raises:
            ValueError: If an explicit threshold exceeds T
        """
        if self.mse_boost_threshold is None:
            return round(BOOST_STEPS * T / BOOST_REFERENCE_T)
        if self.mse_boost_threshold > T:
            raise ValueError(f"mse_boost_threshold={self.mse_boost_threshold} exceeds T={T}")
        return self.mse_boost_threshold

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LossBreakdown:
    total: float
    mse: float
    ce: float
    mse_weight: float


@dataclass
class TrainResult:
    model: SketchDenoiser
    history: List[float] = field(default_factory=list)


def loss(pred: torch.Tensor, x0: torch.Tensor, t: Union[int, Sequence[int], torch.Tensor],
         cfg: TrainConfig, T: int) -> Tuple[torch.Tensor, LossBreakdown]:
    """
    Reconstruction loss of a network output against the clean sketch

    The MSE covers only the parameter slice of each row's true class (rows of
    class None contribute nothing). Cross entropy runs over the flag and
    class blocks against the smoothed targets. Per sketch:
    total = w(t) * MSE + CE with w(t) = lam if t <= threshold else 1.

    Args:
        pred: network output (flag/class logits, parameters), shape (batch, n, 21)
        x0: clean matrices with smoothed one-hots, same shape
        t: timestep of each sketch (scalar or one per sketch)
        cfg: training configuration
        T: number of diffusion timesteps

    Returns:
        Tuple[torch.Tensor, LossBreakdown]: differentiable batch mean and its parts
    """
    if pred.shape != x0.shape:
        raise ValueError(f"prediction and target differ in shape: {tuple(pred.shape)} vs {tuple(x0.shape)}")
    threshold = cfg.threshold_for(T)
    t = torch.as_tensor(t, dtype=torch.long).reshape(-1).expand(pred.shape[0])
    weight = torch.where(t <= threshold, torch.tensor(cfg.lam, dtype=pred.dtype),
                         torch.tensor(1.0, dtype=pred.dtype))

    kinds = x0[..., SketchLayout.CLASS].argmax(dim=-1)
    mask = torch.from_numpy(SketchLayout.param_mask(kinds.numpy())).to(pred.dtype)
    diff = (pred[..., SketchLayout.PARAMS] - x0[..., SketchLayout.PARAMS]) * mask
    mse = (diff * diff).sum(dim=(-2, -1)) / mask.sum(dim=(-2, -1)).clamp(min=1.0)

    ce = torch.zeros_like(mse)
    for sl in (SketchLayout.FLAG, SketchLayout.CLASS):
        log_probs = torch.log_softmax(pred[..., sl], dim=-1)
        ce = ce - (x0[..., sl] * log_probs).sum(dim=-1).mean(dim=-1)

    total = (weight * mse + ce).mean()
    breakdown = LossBreakdown(total=float(total), mse=float(mse.mean()), ce=float(ce.mean()),
                              mse_weight=float(weight.mean()))
    return total, breakdown


def build_model(cfg: TrainConfig, T: int) -> SketchDenoiser:
    """Fresh denoiser initialized from cfg.seed"""
    torch.manual_seed(cfg.seed)
    return SketchDenoiser(T, width=cfg.width, depth=cfg.depth, heads=cfg.heads, positional=cfg.positional)


def _noised_batch(batch: np.ndarray, diffusion: DiffusionConfig,
                  rng: np.random.Generator) -> Tuple[torch.Tensor, torch.Tensor]:
    process = get_process(diffusion)
    t = rng.integers(1, diffusion.T + 1, size=len(batch))
    x_t = np.stack([process.noise_sketch(x0, int(ti), rng).matrix for x0, ti in zip(batch, t)])
    return torch.from_numpy(x_t), torch.from_numpy(t)


def train_step(model: SketchDenoiser, optimizer: torch.optim.Optimizer, batch: np.ndarray,
               diffusion: DiffusionConfig, cfg: TrainConfig,
               rng: np.random.Generator) -> LossBreakdown:
    """
    One SGD step on a batch of clean matrices

    No update is applied when the loss is non-finite.

    Raises:
        NumericError: If the forward pass or the gradient norm is non-finite
    """
    x_t, t = _noised_batch(batch, diffusion, rng)
    model.train()
    optimizer.zero_grad()
    total, breakdown = loss(model(x_t, t), torch.from_numpy(batch), t, cfg, diffusion.T)
    if not torch.isfinite(total):
        return breakdown
    total.backward()
    grad_norm = torch.linalg.vector_norm(torch.stack(
        [torch.linalg.vector_norm(p.grad) for p in model.parameters() if p.grad is not None]))
    if not torch.isfinite(grad_norm):
        raise NumericError(f"non-finite gradient norm {float(grad_norm)}", {'gradients': (0.0, float('nan'))})
    optimizer.step()
    return breakdown


def _all_finite(model: SketchDenoiser) -> bool:
    return all(bool(torch.isfinite(p).all()) for p in model.parameters())


def train(corpus: Sequence[np.ndarray], cfg: TrainConfig, diffusion: DiffusionConfig,
          model: Optional[SketchDenoiser] = None, checkpoint_path: Optional[Union[str, Path]] = None,
          progress: bool = False) -> TrainResult:
    """
    Train a denoiser with constant learning-rate SGD

    Each step samples a batch, draws t uniformly from [1, T] per sketch,
    noises with the joint forward process and descends the loss.

    Args:
        corpus: clean sketch matrices, each (n, 21)
        cfg: training configuration
        diffusion: diffusion configuration the corpus is noised with
        model: starting model (fresh from cfg.seed when None)
        checkpoint_path: where the last finite state is written on divergence
        progress: show a tqdm bar over epochs

    Returns:
        TrainResult: trained model and per-epoch mean loss

    Raises:
        ValueError: If the corpus is empty
        TrainingDivergedError: If a step produces non-finite values; the model is
            restored to the last finite state first
    """
    if len(corpus) == 0:
        raise ValueError("training corpus is empty")
    data = np.stack([np.asarray(m, dtype=np.float64) for m in corpus])
    cfg.threshold_for(diffusion.T)
    model = model if model is not None else build_model(cfg, diffusion.T)
    optimizer = torch.optim.SGD(model.parameters(), lr=cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed)
    history: List[float] = []

    logger.info("training on %d sketches: epochs=%d batch=%d lr=%g", len(data), cfg.epochs,
                cfg.batch_size, cfg.learning_rate)
    last_state = copy.deepcopy(model.state_dict())
    for epoch in tqdm(range(1, cfg.epochs + 1), desc='training', disable=not progress):
        order = rng.permutation(len(data))
        losses = []
        for start in range(0, len(data), cfg.batch_size):
            reason = None
            try:
                breakdown = train_step(model, optimizer, data[order[start:start + cfg.batch_size]],
                                       diffusion, cfg, rng)
            except NumericError as exc:
                reason = str(exc)
            else:
                if not np.isfinite(breakdown.total):
                    reason = f"non-finite loss {breakdown.total}"
                elif not _all_finite(model):
                    reason = "non-finite parameters after the update"
            if reason is not None:
                logger.warning("training diverged in epoch %d: %s", epoch, reason)
                model.load_state_dict(last_state)
                if checkpoint_path is not None:
                    save_checkpoint(checkpoint_path, model, {'diffusion': asdict(diffusion), 'train': cfg.to_dict()},
                                    cfg.seed)
                    logger.info("last finite state written to %s", checkpoint_path)
                raise TrainingDivergedError(f"training diverged in epoch {epoch}: {reason}", last_state, epoch)
            last_state = copy.deepcopy(model.state_dict())
            losses.append(breakdown.total)
        history.append(float(np.mean(losses)))
        logger.info("epoch %d mean loss %.6f", epoch, history[-1])
    return TrainResult(model, history)


def class_accuracy(model: SketchDenoiser, corpus: Sequence[np.ndarray], t: int,
                   diffusion: DiffusionConfig, seed: int = 0) -> float:
    """
    Fraction of rows (padding included) whose predicted class at t matches the truth
    """
    data = np.stack([np.asarray(m, dtype=np.float64) for m in corpus])
    rng = np.random.default_rng(seed)
    process = get_process(diffusion)
    x_t = np.stack([process.noise_sketch(x0, t, rng).matrix for x0 in data])
    pred = TorchDenoiser(model)(x_t, t)
    truth = data[..., SketchLayout.CLASS].argmax(axis=-1)
    return float(np.mean(pred[..., SketchLayout.CLASS].argmax(axis=-1) == truth))


def gradient_check(model: SketchDenoiser, x_t: torch.Tensor, t: Union[int, torch.Tensor],
                   x0: torch.Tensor, cfg: TrainConfig, T: int, eps: float = 1e-6,
                   max_entries: int = 8, seed: int = 0) -> Dict[str, float]:
    """
    Compare autograd gradients with central finite differences

    For every parameter tensor, up to max_entries entries are perturbed by
    +/- eps. The reported relative error of a tensor is
    ||g_analytic - g_numeric|| / max(||g_analytic||, ||g_numeric||, 1e-12)
    over the checked entries.

    Returns:
        Dict[str, float]: relative error per parameter name
    """
    model.zero_grad()
    total, _ = loss(model(x_t, t), x0, t, cfg, T)
    total.backward()
    rng = np.random.default_rng(seed)
    errors = {}
    with torch.no_grad():
        for name, param in model.named_parameters():
            flat = param.view(-1)
            count = min(max_entries, flat.numel())
            picks = rng.choice(flat.numel(), size=count, replace=False)
            analytic = param.grad.view(-1)[picks].clone()
            numeric = torch.empty_like(analytic)
            for j, idx in enumerate(picks):
                original = flat[idx].item()
                flat[idx] = original + eps
                plus, _ = loss(model(x_t, t), x0, t, cfg, T)
                flat[idx] = original - eps
                minus, _ = loss(model(x_t, t), x0, t, cfg, T)
                flat[idx] = original
                numeric[j] = (plus - minus) / (2.0 * eps)
            scale = max(float(analytic.norm()), float(numeric.norm()), 1e-12)
            errors[name] = float((analytic - numeric).norm()) / scale
    return errors
