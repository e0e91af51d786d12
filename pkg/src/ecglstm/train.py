"""Adam training loop over labeled segments."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import net
from .core import Segment

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray], **hyper) -> "AdamState":
        return cls({k: np.zeros_like(v) for k, v in params.items()},
                   {k: np.zeros_like(v) for k, v in params.items()}, **hyper)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], opt: AdamState) -> None:
    """Bias-corrected Adam update, in place. Refuses non-finite gradients."""
    for k, g in grads.items():
        if g.shape != params[k].shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {params[k].shape} for {k}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {k}; step refused")
    opt.t += 1
    bc1 = 1.0 - opt.beta1 ** opt.t
    bc2 = 1.0 - opt.beta2 ** opt.t
    for k, g in grads.items():
        m, v = opt.m[k], opt.v[k]
        m *= opt.beta1
        m += (1.0 - opt.beta1) * g
        v *= opt.beta2
        v += (1.0 - opt.beta2) * (g * g)
        update = opt.lr * (m / bc1) / (np.sqrt(v / bc2) + opt.eps)
        params[k] -= update.astype(params[k].dtype, copy=False)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0
    dropout: bool = True
    augment: bool = True
    lr: float = 0.001
    bucket_ratio: float = 1.25
    clip_norm: float = 1.0          # global gradient norm cap; 0 disables clipping
    stop_at_accuracy: float = 0.0   # 0 disables; stop once validation accuracy reaches it

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


@dataclass(frozen=True, eq=False)
class Batch:
    X: np.ndarray         # (B, T, leads), zero padded at the end
    lengths: np.ndarray
    labels: np.ndarray
    indices: np.ndarray   # positions in the source segment list


def make_batches(segments: Sequence[Segment], batch_size: int = 32, seed: int = 0,
                 bucket_ratio: float = 1.25, dtype=np.float32) -> list[Batch]:
    """Shuffle, then group by length so that within a batch ``max/min <= bucket_ratio``."""
    if not segments:
        raise ValueError("no segments to batch")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(segments))
    lengths = np.array([s.length for s in segments])
    order = order[np.argsort(lengths[order], kind="stable")]
    groups: list[list[int]] = []
    current: list[int] = []
    for i in order:
        if current and (len(current) == batch_size or lengths[i] > bucket_ratio * lengths[current[0]]):
            groups.append(current)
            current = []
        current.append(int(i))
    groups.append(current)
    out = []
    for g in (groups[k] for k in rng.permutation(len(groups))):
        X, L = net.pad_batch([segments[i].samples for i in g], segments[g[0]].samples.shape[0])
        out.append(Batch(X.astype(dtype), L, np.array([int(segments[i].label) for i in g]),
                         np.array(g)))
    return out


def augment(preprocessed: Sequence[Segment], raw: Sequence[Segment | None],
            enabled: bool = True) -> tuple[list[Segment], int]:
    """Union of preprocessed segments and their raw counterparts (labels copied).

    Returns ``(segments, skipped)``; *skipped* counts missing raw counterparts.
    """
    if not enabled:
        return list(preprocessed), 0
    if len(raw) != len(preprocessed):
        raise ValueError("raw list must align with preprocessed segments")
    out = list(preprocessed)
    skipped = 0
    for p, r in zip(preprocessed, raw):
        if r is None:
            skipped += 1
            continue
        out.append(replace(r, label=p.label))
    if skipped:
        log.warning("augment: %d segments without raw counterpart skipped", skipped)
    return out, skipped


def _clip(grads: dict[str, np.ndarray], max_norm: float) -> None:
    total = np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values()))
    if total > max_norm:
        for g in grads.values():
            g *= max_norm / total


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    mean_loss: float
    val_acc: float
    seconds: float

    def csv_line(self) -> str:
        return f"{self.epoch},{self.mean_loss:.6f},{self.val_acc:.6f},{self.seconds:.3f}"


@dataclass
class TrainResult:
    state: net.ModelState
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    optimizer: AdamState | None = None


def segment_accuracy(state: net.ModelState, segments: Sequence[Segment], batch_size: int = 64) -> float:
    if not segments:
        return float("nan")
    probs = net.predict_proba(state, [s.samples for s in segments], batch_size)
    labels = np.array([int(s.label) for s in segments])
    return float(np.mean(np.argmax(probs, axis=1) == labels))


def train(model: net.ModelState, data: Sequence[Segment], config: TrainConfig = TrainConfig(),
          validation: Sequence[Segment] = (),
          on_epoch: Callable[[EpochRecord], None] | None = None) -> TrainResult:
    """Fit *model* on *data*; keeps the state with the best validation accuracy.

    Without validation segments the final state is returned and early
    stopping is disabled.
    """
    if len({int(s.label) for s in data}) < 2:
        raise ValueError("training data must contain at least two classes")
    state = model.copy()
    if not config.dropout and state.config.dropout_prob > 0:
        state.config = replace(state.config, dropout_prob=0.0)
    opt = AdamState.zeros_like(state.params, lr=config.lr)
    batch_seq, drop_seq = np.random.SeedSequence(config.seed).spawn(2)
    drop_rng = np.random.default_rng(drop_seq)
    batch_seeds = np.random.default_rng(batch_seq).integers(0, 2**63 - 1, size=config.max_epochs)

    result = TrainResult(state, optimizer=opt)
    best_acc = -1.0
    best_params = None
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        losses, weights = [], []
        for batch in make_batches(data, config.batch_size, int(batch_seeds[epoch - 1]),
                                  config.bucket_ratio, state.dtype):
            probs, cache = net.forward_batch(state, batch.X, batch.lengths, True, drop_rng)
            loss = net.batch_loss(cache, batch.labels)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            grads = net.backward(state, cache, batch.labels)
            if config.clip_norm > 0:
                _clip(grads, config.clip_norm)
            adam_step(state.params, grads, opt)
            state.version += 1
            losses.append(loss)
            weights.append(len(batch.labels))
        mean_loss = float(np.average(losses, weights=weights))
        val_acc = segment_accuracy(state, validation) if validation else float("nan")
        rec = EpochRecord(epoch, mean_loss, val_acc, time.perf_counter() - t0)
        result.history.append(rec)
        log.info("epoch %d loss %.4f val_acc %.4f (%.1fs)", epoch, mean_loss, val_acc, rec.seconds)
        if on_epoch:
            on_epoch(rec)
        if not validation:
            continue
        if val_acc > best_acc:
            best_acc, stale = val_acc, 0
            best_params = {k: v.copy() for k, v in state.params.items()}
            result.best_epoch = epoch
        else:
            stale += 1
        if config.stop_at_accuracy and val_acc >= config.stop_at_accuracy:
            break
        if stale >= config.patience:
            break
    if best_params is not None:
        state.params = best_params
        state.version += 1
    else:
        result.best_epoch = len(result.history)
    state.config = model.config
    return result
