"""ELBO objective, Adam with decoupled weight decay, and the training loop.

The learning-rate schedule is linear warmup into cosine decay; the KL weight
ramps linearly over the first tenth of training to keep the latent from
collapsing before the reconstruction settles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .dataset import DatasetSplit
from .model import (LatentDistribution, ModelParameters, ShapeMismatchError,
                    TrajectoryGenerator, build_tensors)
from .pitch import FEAT_X, FEAT_Y, SpatiotemporalGraph, render_description_text


class DivergedLossError(FloatingPointError):
    pass


@dataclass
class OptimizerSettings:
    peak_lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01     # decoupled L2 penalty
    batch_size: int = 256
    epochs: int = 50
    warmup_frac: float = 0.1
    kl_warmup_frac: float = 0.1
    seed: int = 42


def elbo_loss(prediction: Tensor, target: np.ndarray | Tensor,
              latent: LatentDistribution | None, beta: float) -> Tensor:
    """MSE reconstruction plus beta-weighted Gaussian KL to N(0, I)."""
    target_data = target.data if isinstance(target, Tensor) else np.asarray(target)
    if prediction.data.shape != target_data.shape:
        raise ShapeMismatchError(
            f"prediction {prediction.data.shape} vs target {target_data.shape}")
    diff = prediction - ad.constant(
        target_data.astype(prediction.data.dtype, copy=False))
    loss = ad.tmean(diff * diff)
    if latent is not None and beta != 0.0:
        loss = loss + ad.scale(latent.kl_to_standard_normal(), beta)
    return loss


def learning_rate_at(step: int, warmup_steps: int, total_steps: int,
                     peak_lr: float) -> float:
    """Linear warmup to exactly peak_lr at warmup_steps, then cosine to 0."""
    if warmup_steps > 0 and step < warmup_steps:
        return peak_lr * step / warmup_steps
    if total_steps <= warmup_steps:
        return peak_lr
    progress = (step - warmup_steps) / (total_steps - warmup_steps)
    progress = min(max(progress, 0.0), 1.0)
    return peak_lr * 0.5 * (1.0 + np.cos(np.pi * progress))


@dataclass
class OptimizerState:
    """Adam moments per parameter plus the shared step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def init(cls, params: ModelParameters) -> "OptimizerState":
        return cls(m={k: np.zeros_like(p) for k, p in params.values.items()},
                   v={k: np.zeros_like(p) for k, p in params.values.items()})


def adam_step(params: ModelParameters, grads: dict[str, np.ndarray],
              state: OptimizerState, lr: float,
              settings: OptimizerSettings) -> None:
    """In-place Adam update with decoupled weight decay."""
    state.step += 1
    b1, b2 = settings.beta1, settings.beta2
    bias1 = 1.0 - b1 ** state.step
    bias2 = 1.0 - b2 ** state.step
    for name, p in params.values.items():
        g = grads.get(name)
        if g is None:
            continue
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if settings.weight_decay:
            p *= 1.0 - lr * settings.weight_decay
        p -= lr * (m / bias1) / (np.sqrt(v / bias2) + settings.eps)


@dataclass
class TrainingHistory:
    epoch_losses: list[float] = field(default_factory=list)
    step_learning_rates: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"epoch_losses": self.epoch_losses}


def _pairs_to_arrays(pairs: list[tuple[SpatiotemporalGraph, SpatiotemporalGraph]]
                     ) -> tuple[np.ndarray, np.ndarray, list[str]]:
    histories = np.stack([h.features for h, _ in pairs])
    targets = np.stack([t.positions() for _, t in pairs])
    texts = [render_description_text(t.description) for _, t in pairs]
    return histories, targets, texts


def train(params: ModelParameters, data: DatasetSplit | list,
          settings: OptimizerSettings | None = None,
          log_every: int = 0) -> tuple[ModelParameters, TrainingHistory]:
    """Optimize params in place on (history, target) pairs.

    `data` is a DatasetSplit (its train half is used) or a bare pair list.
    Returns the same params object plus the loss curve.
    """
    settings = settings or OptimizerSettings()
    pairs = data.train if isinstance(data, DatasetSplit) else data
    if not pairs:
        raise ValueError("training set is empty")

    model = TrajectoryGenerator(params)
    cfg = params.config
    histories, targets, texts = _pairs_to_arrays(pairs)
    n = len(pairs)
    rng = np.random.default_rng(settings.seed)

    steps_per_epoch = max(1, int(np.ceil(n / settings.batch_size)))
    total_steps = steps_per_epoch * settings.epochs
    warmup_steps = max(1, int(round(settings.warmup_frac * total_steps)))
    kl_warmup_steps = max(1, int(round(settings.kl_warmup_frac * total_steps)))

    state = OptimizerState.init(params)
    history = TrainingHistory()
    step = 0
    for epoch in range(settings.epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for b0 in range(0, n, settings.batch_size):
            batch = order[b0:b0 + settings.batch_size]
            eps = None
            if cfg.use_variation:
                eps = rng.standard_normal((len(batch), cfg.latent_dim))
            tensors = build_tensors(params)
            result = model.forward_batch(histories[batch],
                                         [texts[i] for i in batch],
                                         eps=eps, tensors=tensors)
            beta = cfg.beta * min(1.0, (step + 1) / kl_warmup_steps) \
                if cfg.use_variation else 0.0
            loss = elbo_loss(result.prediction, targets[batch],
                             result.latent if cfg.use_variation else None,
                             beta)
            if not np.isfinite(loss.data):
                raise DivergedLossError(f"loss diverged at step {step}")
            ad.backward(loss)
            grads = {name: t.grad for name, t in tensors.items()
                     if t.grad is not None}
            step += 1
            lr = learning_rate_at(step, warmup_steps, total_steps,
                                  settings.peak_lr)
            adam_step(params, grads, state, lr, settings)
            epoch_losses.append(float(loss.data))
            history.step_learning_rates.append(lr)
        history.epoch_losses.append(float(np.mean(epoch_losses)))
        if log_every and (epoch + 1) % log_every == 0:
            print(f"epoch {epoch + 1:3d}/{settings.epochs}  "
                  f"loss {history.epoch_losses[-1]:.4f}  lr {lr:.2e}")
    return params, history


def evaluate_fte(params: ModelParameters,
                 pairs: list[tuple[SpatiotemporalGraph, SpatiotemporalGraph]],
                 batch_size: int = 256) -> float:
    """Mean per-player-step Euclidean error of attacking players (metres),
    decoding the deterministic latent under the factual description."""
    from .metrics import fte
    from .pitch import Team

    model = TrajectoryGenerator(params)
    errors = []
    for b0 in range(0, len(pairs), batch_size):
        chunk = pairs[b0:b0 + batch_size]
        histories, targets, texts = _pairs_to_arrays(chunk)
        preds = model.forward_batch(histories, texts).prediction.data
        for (hist, tgt), pred in zip(chunk, preds):
            att = tgt.team_indices(Team.ATTACKING)
            errors.append(fte(pred[:, att], tgt.positions()[:, att]))
    return float(np.mean(errors))
