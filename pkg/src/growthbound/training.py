"""Training loop: cross-entropy plus a weighted growth-bound penalty.

The objective for trade-off weight ``beta`` in [0, 1] is

    loss = (1 - beta) * mean cross-entropy + beta * sum of GBM entries,

with the penalty added once per optimizer step (the bound depends on the
parameters and calibrated domain, not on individual examples).  Recurrent
domains are recalibrated from a forward pass over a calibration subset every
``recalibrate_every`` epochs and treated as constants inside each step.
Embeddings stay frozen throughout: the trainable state is the model
parameter dict only.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from . import ops
from .autodiff import Tape, Tensor
from .data import EmbeddingTable, TextDataset
from .errors import DataError, NumericError
from .lstm import LstmDomain
from .models import (
    ModelConfig,
    SequenceClassifier,
    calibrate_lstm_domain,
    gbm_penalty,
    init_params,
    logits_batch,
    pack_batch,
)

S4_CORE_PARAMS = ("a_log", "b", "c", "log_delta")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters; see :func:`default_train_config` for the
    shipped per-architecture defaults."""

    beta_weight: float = 0.0
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    batch_size: int = 32
    epochs: int = 10
    hidden_size: int = 64
    max_length: int = 64
    kernel_sizes: tuple[int, ...] = (3, 4, 5)
    cnn_activation: str = "relu"
    seed: int = 0
    recalibrate_every: int = 1
    calibration_inflation: float = 1.1
    calibration_examples: int = 256
    s4_core_lr: float = 5e-3
    s4_core_wd: float = 0.0
    early_stopping_patience: int = 0
    divergence_limit: float = 1e6

    def __post_init__(self) -> None:
        if not 0.0 <= self.beta_weight <= 1.0:
            raise DataError(f"beta_weight must be in [0, 1], got {self.beta_weight}")
        if self.learning_rate <= 0 or self.s4_core_lr <= 0:
            raise DataError("learning rates must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise DataError("batch_size and epochs must be >= 1")
        if self.recalibrate_every < 1:
            raise DataError("recalibrate_every must be >= 1")
        if self.calibration_inflation < 1.0:
            raise DataError("calibration_inflation must be >= 1")


def default_train_config(kind: str, **overrides) -> TrainConfig:
    """Per-architecture defaults: recurrent models use lr 1e-3 with small
    decay, the CNN a lower rate with 128 filters, and S4 a faster rate on its
    state-space group with none elsewhere."""
    base = {
        "lstm": dict(learning_rate=1e-3, weight_decay=1e-4, hidden_size=64),
        "bilstm": dict(learning_rate=1e-3, weight_decay=1e-4, hidden_size=64),
        "s4": dict(
            learning_rate=5e-4,
            weight_decay=1e-2,
            hidden_size=256,
            s4_core_lr=5e-3,
            s4_core_wd=0.0,
        ),
        "cnn": dict(
            learning_rate=1e-4,
            weight_decay=0.0,
            hidden_size=128,
            kernel_sizes=(3, 4, 5),
        ),
    }
    if kind not in base:
        raise DataError(f"unknown model kind {kind!r}")
    merged = {**base[kind], **overrides}
    return TrainConfig(**merged)


class Adam:
    """Adaptive-moment optimizer with decoupled weight decay and per-name
    learning-rate/decay overrides."""

    def __init__(
        self,
        params: dict[str, np.ndarray],
        rate_for: Callable[[str], tuple[float, float]],
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        self.params = params
        self.rate_for = rate_for
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: Mapping[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params.items():
            g = grads[name]
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            mhat = self.m[name] / (1 - b1**self.t)
            vhat = self.v[name] / (1 - b2**self.t)
            lr, wd = self.rate_for(name)
            p -= lr * (mhat / (np.sqrt(vhat) + self.eps) + wd * p)


def make_rate_for(cfg: TrainConfig, kind: str) -> Callable[[str], tuple[float, float]]:
    def rate_for(name: str) -> tuple[float, float]:
        if kind == "s4" and name in S4_CORE_PARAMS:
            return cfg.s4_core_lr, cfg.s4_core_wd
        return cfg.learning_rate, cfg.weight_decay

    return rate_for


def loss_value(
    model_cfg: ModelConfig,
    params: Mapping,
    x: np.ndarray,
    mask: np.ndarray,
    y: np.ndarray,
    beta: float,
    domains: Mapping[str, LstmDomain] | None = None,
    n_words: int | None = None,
):
    """The training objective on one batch; works on ndarrays or Tensors.

    Returns ``(loss, ce, penalty)`` where ``loss`` carries the graph when
    ``params`` hold Tensors.  With ``beta == 0`` the penalty is not even
    computed; with ``beta == 1`` the cross-entropy term has zero weight.
    """
    logits = logits_batch(model_cfg, params, x, mask)
    logp = ops.log_softmax(logits, axis=-1)
    ce = -ops.mean_(logp[np.arange(len(y)), y])
    ce_val = float(ops.value_of(ce))
    if not np.isfinite(ce_val):
        raise NumericError("cross-entropy term is non-finite")
    if beta == 0.0:
        return ce, ce_val, 0.0
    pen = gbm_penalty(model_cfg, params, domains=domains, n_words=n_words)
    pen_val = float(ops.value_of(pen))
    if not np.isfinite(pen_val):
        raise NumericError("growth-bound penalty term is non-finite")
    loss = ce * (1.0 - beta) + pen * beta
    return loss, ce_val, pen_val


def loss_and_grads(
    model_cfg: ModelConfig,
    params: dict[str, np.ndarray],
    x: np.ndarray,
    mask: np.ndarray,
    y: np.ndarray,
    beta: float,
    domains: Mapping[str, LstmDomain] | None = None,
    n_words: int | None = None,
) -> tuple[float, dict[str, np.ndarray], float, float]:
    """One taped forward/backward sweep: ``(loss, grads, ce, penalty)``."""
    with Tape() as tape:
        tparams = {k: Tensor(v) for k, v in params.items()}
        loss, ce_val, pen_val = loss_value(
            model_cfg, tparams, x, mask, y, beta, domains=domains, n_words=n_words
        )
        names = list(tparams)
        grads = tape.gradients(loss, [tparams[k] for k in names])
    loss_val = float(ops.value_of(loss))
    if not np.isfinite(loss_val):
        raise NumericError("training loss is non-finite")
    return loss_val, dict(zip(names, grads)), ce_val, pen_val


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    ce: float
    l_gbm: float
    clean_acc: float
    sum_m: float


@dataclass
class TrainResult:
    model: SequenceClassifier
    history: list[EpochRecord]
    domains: dict[str, LstmDomain] | None
    stopped_early: bool = False


def _embed_dataset(
    dataset: TextDataset, emb: EmbeddingTable, max_length: int
) -> tuple[list[np.ndarray], np.ndarray]:
    seqs = [
        emb.embed_sequence(tokens[:max_length]) for tokens, _ in dataset.examples
    ]
    return seqs, dataset.labels()


def _batched_accuracy(
    model_cfg: ModelConfig,
    params: Mapping,
    seqs: Sequence[np.ndarray],
    labels: np.ndarray,
    chunk: int = 256,
) -> float:
    hits = 0
    for start in range(0, len(seqs), chunk):
        x, mask = pack_batch(list(seqs[start : start + chunk]))
        logits = np.asarray(logits_batch(model_cfg, params, x, mask))
        hits += int((logits.argmax(axis=1) == labels[start : start + chunk]).sum())
    return hits / len(seqs)


def _mean_loss(
    model_cfg: ModelConfig,
    params: Mapping,
    seqs: Sequence[np.ndarray],
    labels: np.ndarray,
    chunk: int = 256,
) -> float:
    total = 0.0
    for start in range(0, len(seqs), chunk):
        x, mask = pack_batch(list(seqs[start : start + chunk]))
        y = labels[start : start + chunk]
        logits = np.asarray(logits_batch(model_cfg, params, x, mask))
        logp = ops.log_softmax(logits, axis=-1)
        total += float(-logp[np.arange(len(y)), y].sum())
    return total / len(seqs)


def _calibrate(
    model_cfg: ModelConfig,
    params: Mapping,
    seqs: Sequence[np.ndarray],
    cfg: TrainConfig,
) -> dict[str, LstmDomain] | None:
    if model_cfg.kind not in ("lstm", "bilstm"):
        return None
    subset = list(seqs[: cfg.calibration_examples])
    x, mask = pack_batch(subset)
    inflation = cfg.calibration_inflation
    if model_cfg.kind == "lstm":
        return {"fw": calibrate_lstm_domain(params, "", x, mask, inflation)}
    return {
        "fw": calibrate_lstm_domain(params, "fw_", x, mask, inflation),
        "bw": calibrate_lstm_domain(params, "bw_", x, mask, inflation, reverse=True),
    }


def train(
    model_kind: str,
    dataset: TextDataset,
    emb: EmbeddingTable,
    cfg: TrainConfig,
    val_dataset: TextDataset | None = None,
) -> TrainResult:
    """Fit a classifier of ``model_kind`` on the dataset.

    Returns the trained model, per-epoch history, and (for recurrent kinds)
    the final calibrated domains.  Raises :class:`NumericError` when the loss
    diverges past ``cfg.divergence_limit`` or turns non-finite.
    """
    model_cfg = ModelConfig(
        kind=model_kind,
        embed_dim=emb.dim,
        num_classes=dataset.num_classes,
        hidden=cfg.hidden_size,
        kernel_sizes=cfg.kernel_sizes,
        cnn_activation=cfg.cnn_activation,
        state_size=cfg.hidden_size,
    )
    params = init_params(model_cfg, seed=cfg.seed)
    seqs, labels = _embed_dataset(dataset, emb, cfg.max_length)
    lengths = [s.shape[0] for s in seqs]
    if min(lengths) < model_cfg.min_words:
        raise DataError(
            f"{model_kind} needs sentences of >= {model_cfg.min_words} tokens; "
            f"shortest is {min(lengths)}"
        )
    n_words = max(lengths)
    val = (
        _embed_dataset(val_dataset, emb, cfg.max_length) if val_dataset is not None else None
    )
    rng = np.random.default_rng(cfg.seed)
    optimizer = Adam(params, make_rate_for(cfg, model_kind))
    beta = cfg.beta_weight
    history: list[EpochRecord] = []
    domains: dict[str, LstmDomain] | None = None
    best_val = np.inf
    best_params: dict[str, np.ndarray] | None = None
    since_best = 0
    stopped = False
    for epoch in range(cfg.epochs):
        if epoch % cfg.recalibrate_every == 0:
            domains = _calibrate(model_cfg, params, seqs, cfg)
        order = rng.permutation(len(seqs))
        ce_sum = 0.0
        pen_last = 0.0
        loss_sum = 0.0
        n_batches = 0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            x, mask = pack_batch([seqs[i] for i in idx])
            y = labels[idx]
            loss_val, grads, ce_val, pen_val = loss_and_grads(
                model_cfg, params, x, mask, y, beta, domains=domains, n_words=n_words
            )
            if loss_val > cfg.divergence_limit:
                raise NumericError(
                    f"training diverged at epoch {epoch} step {n_batches}: "
                    f"loss {loss_val:.3e} exceeds {cfg.divergence_limit:.1e}"
                )
            optimizer.step(grads)
            ce_sum += ce_val
            pen_last = pen_val
            loss_sum += loss_val
            n_batches += 1
        clean_acc = _batched_accuracy(model_cfg, params, seqs, labels)
        if beta == 0.0:
            # report the current bound size even when it is not optimized
            fresh = _calibrate(model_cfg, params, seqs, cfg)
            sum_m = float(
                ops.value_of(
                    gbm_penalty(model_cfg, params, domains=fresh, n_words=n_words)
                )
            )
        else:
            sum_m = pen_last
        history.append(
            EpochRecord(
                epoch=epoch,
                loss=loss_sum / n_batches,
                ce=ce_sum / n_batches,
                l_gbm=pen_last if beta > 0 else 0.0,
                clean_acc=clean_acc,
                sum_m=sum_m,
            )
        )
        if val is not None and cfg.early_stopping_patience > 0:
            val_loss = _mean_loss(model_cfg, params, val[0], val[1])
            if val_loss < best_val - 1e-12:
                best_val = val_loss
                best_params = {k: v.copy() for k, v in params.items()}
                since_best = 0
            else:
                since_best += 1
                if since_best >= cfg.early_stopping_patience:
                    stopped = True
                    break
    if best_params is not None:
        params = best_params
    model = SequenceClassifier(config=model_cfg, params=params)
    final_domains = _calibrate(model_cfg, params, seqs, cfg)
    return TrainResult(
        model=model, history=history, domains=final_domains, stopped_early=stopped
    )


def history_metadata(cfg: TrainConfig, model_kind: str) -> dict[str, str]:
    label = "baseline" if cfg.beta_weight == 0.0 else "gbm"
    return {
        "beta": format(cfg.beta_weight, "g"),
        "label": label,
        "model": model_kind,
        "seed": str(cfg.seed),
    }


def write_history(history: Sequence[EpochRecord], path, metadata: Mapping[str, str]) -> None:
    """CSV with one ``# key=value`` metadata comment line, then the records.

    Everything written is a pure function of the inputs, so two identical
    runs produce byte-identical files.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        meta = " ".join(f"{k}={metadata[k]}" for k in sorted(metadata))
        fh.write(f"# {meta}\n")
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "ce", "l_gbm", "clean_acc", "sum_M"])
        for rec in history:
            writer.writerow(
                [
                    rec.epoch,
                    format(rec.loss, ".17g"),
                    format(rec.ce, ".17g"),
                    format(rec.l_gbm, ".17g"),
                    format(rec.clean_acc, ".17g"),
                    format(rec.sum_m, ".17g"),
                ]
            )


def read_history(path) -> tuple[list[EpochRecord], dict[str, str]]:
    records: list[EpochRecord] = []
    metadata: dict[str, str] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        first = fh.readline()
        if first.startswith("#"):
            for part in first[1:].split():
                if "=" in part:
                    k, v = part.split("=", 1)
                    metadata[k] = v
        else:
            raise DataError(f"{path}: missing metadata line")
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["epoch", "loss", "ce", "l_gbm", "clean_acc", "sum_M"]:
            raise DataError(f"{path}: unexpected history header {header}")
        for row in reader:
            if not row:
                continue
            records.append(
                EpochRecord(
                    epoch=int(row[0]),
                    loss=float(row[1]),
                    ce=float(row[2]),
                    l_gbm=float(row[3]),
                    clean_acc=float(row[4]),
                    sum_m=float(row[5]),
                )
            )
    return records, metadata
