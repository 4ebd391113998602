"""Sequence classifiers over frozen embeddings: LSTM, BiLSTM, S4, CNN.

A model is a plain dict of named float64 arrays plus a :class:`ModelConfig`.
Forward passes are written against the ops facade, so the same code runs on
raw ndarrays (inference, certification) and on autodiff tensors (training).
Variable-length batches carry a boolean token mask; recurrent cells hold
their state through masked positions, so a padded batch computes exactly the
same features as one-sentence-at-a-time evaluation.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import ops
from .cnn import CnnParams, cnn_forward_arrays, gbm_cnn_penalty
from .errors import DataError, DimensionError
from .intervals import BoxInterval
from .lstm import LstmCellParams, LstmDomain, cell_forward_arrays, gbm_lstm_penalty
from .s4 import S4DiscreteParams, discretize_arrays, gbm_s4_penalty, s4_step_arrays

MODEL_KINDS = ("lstm", "bilstm", "s4", "cnn")

CHECKPOINT_MAGIC = b"GBCK"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters; ``hidden`` is state width for recurrent
    kinds and filters-per-size for the CNN."""

    kind: str
    embed_dim: int
    num_classes: int = 2
    hidden: int = 32
    kernel_sizes: tuple[int, ...] = (3, 4, 5)
    cnn_activation: str = "relu"
    state_size: int = 32

    def __post_init__(self) -> None:
        if self.kind not in MODEL_KINDS:
            raise DataError(f"unknown model kind {self.kind!r} (use {MODEL_KINDS})")
        if self.embed_dim < 1 or self.hidden < 1 or self.state_size < 1:
            raise DimensionError("embed_dim, hidden and state_size must be positive")
        if self.num_classes < 2:
            raise DimensionError("need at least two classes")
        object.__setattr__(self, "kernel_sizes", tuple(int(k) for k in self.kernel_sizes))

    @property
    def feature_dim(self) -> int:
        if self.kind == "lstm":
            return self.hidden
        if self.kind == "bilstm":
            return 2 * self.hidden
        if self.kind == "s4":
            return self.embed_dim
        return self.hidden * len(self.kernel_sizes)

    @property
    def min_words(self) -> int:
        """Shortest sentence the forward pass accepts."""
        return max(self.kernel_sizes) if self.kind == "cnn" else 1

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "embed_dim": self.embed_dim,
            "num_classes": self.num_classes,
            "hidden": self.hidden,
            "kernel_sizes": list(self.kernel_sizes),
            "cnn_activation": self.cnn_activation,
            "state_size": self.state_size,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "ModelConfig":
        return cls(
            kind=raw["kind"],
            embed_dim=int(raw["embed_dim"]),
            num_classes=int(raw["num_classes"]),
            hidden=int(raw["hidden"]),
            kernel_sizes=tuple(raw["kernel_sizes"]),
            cnn_activation=raw["cnn_activation"],
            state_size=int(raw["state_size"]),
        )


def _uniform(rng, scale, shape):
    return rng.uniform(-scale, scale, size=shape)


def _init_lstm_gates(rng, d0: int, d: int, prefix: str, out: dict) -> None:
    scale = 1.0 / np.sqrt(d)
    for name in ("i", "f", "g", "o"):
        out[f"{prefix}theta_{name}"] = _uniform(rng, scale, (d, d0))
        out[f"{prefix}u_{name}"] = _uniform(rng, scale, (d, d))
        # forget gate biased open so early training retains context
        out[f"{prefix}b_{name}"] = np.full(d, 1.0) if name == "f" else np.zeros(d)


def init_params(cfg: ModelConfig, seed: int = 0) -> dict[str, np.ndarray]:
    """Seeded parameter initialization for every architecture."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    if cfg.kind == "lstm":
        _init_lstm_gates(rng, cfg.embed_dim, cfg.hidden, "", params)
    elif cfg.kind == "bilstm":
        _init_lstm_gates(rng, cfg.embed_dim, cfg.hidden, "fw_", params)
        _init_lstm_gates(rng, cfg.embed_dim, cfg.hidden, "bw_", params)
    elif cfg.kind == "s4":
        n, d0 = cfg.state_size, cfg.embed_dim
        # A = -diag(exp(a_log)) keeps the continuous system stable and the
        # bilinear transform well-conditioned for every parameter value
        params["a_log"] = rng.normal(scale=0.5, size=n)
        params["b"] = rng.normal(size=(n, d0)) / np.sqrt(n)
        params["c"] = rng.normal(size=(d0, n)) / np.sqrt(n)
        params["d"] = np.zeros((d0, d0))
        params["log_delta"] = np.array(np.log(0.1))
    else:
        for k in cfg.kernel_sizes:
            scale = 1.0 / np.sqrt(cfg.embed_dim * k)
            params[f"w_{k}"] = _uniform(rng, scale, (cfg.hidden, cfg.embed_dim, k))
            params[f"b_{k}"] = np.zeros(cfg.hidden)
    fdim = cfg.feature_dim
    params["w_cls"] = _uniform(rng, 1.0 / np.sqrt(fdim), (cfg.num_classes, fdim))
    params["b_cls"] = np.zeros(cfg.num_classes)
    return params


def sub_arrays(params: Mapping, prefix: str) -> dict:
    """Keys under ``prefix`` with the prefix stripped."""
    out = {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}
    if not out:
        raise DataError(f"no parameters under prefix {prefix!r}")
    return out


def s4_continuous_arrays(params: Mapping) -> dict:
    """Assemble the continuous-time system from the trainable encoding."""
    a_log = params["a_log"]
    n = ops.value_of(a_log).shape[0]
    neg_rates = -ops.exp(a_log)
    a = np.eye(n) * ops.reshape(neg_rates, (n, 1))
    return {
        "a": a,
        "b": params["b"],
        "c": params["c"],
        "d": params["d"],
        "delta": ops.exp(params["log_delta"]),
    }


def _lstm_gate_arrays(params: Mapping, prefix: str) -> dict:
    keys = [f"{g}_{n}" for g in ("theta", "u", "b") for n in ("i", "f", "g", "o")]
    return {k: params[f"{prefix}{k}"] for k in keys}


def _check_batch(x, mask):
    xv = np.asarray(ops.value_of(x))
    if xv.ndim != 3:
        raise DimensionError(f"batch input must be (B, N, d0), got {xv.shape}")
    if mask.shape != xv.shape[:2]:
        raise DimensionError(f"mask {mask.shape} does not match batch {xv.shape[:2]}")
    if not mask.any(axis=1).all():
        raise DataError("every batch row needs at least one valid token")


def _run_lstm(params: Mapping, prefix: str, x, mask: np.ndarray, reverse: bool):
    arrays = _lstm_gate_arrays(params, prefix)
    b, n = mask.shape
    d = ops.value_of(arrays["u_i"]).shape[0]
    h = np.zeros((b, d))
    c = np.zeros((b, d))
    steps = range(n - 1, -1, -1) if reverse else range(n)
    for t in steps:
        h_new, c_new = cell_forward_arrays(arrays, x[:, t, :], h, c)
        keep = mask[:, t][:, None]
        h = ops.where(keep, h_new, h)
        c = ops.where(keep, c_new, c)
    return h


def _run_s4(params: Mapping, cfg: ModelConfig, x, mask: np.ndarray):
    n, d0 = cfg.state_size, cfg.embed_dim
    a_bar, b_bar, c_bar, d_bar = discretize_arrays(s4_continuous_arrays(params), n, d0)
    b = mask.shape[0]
    h = np.zeros((b, n))
    y_last = np.zeros((b, d0))
    for t in range(mask.shape[1]):
        y, h_new = s4_step_arrays(a_bar, b_bar, c_bar, d_bar, x[:, t, :], h)
        keep = mask[:, t][:, None]
        h = ops.where(keep, h_new, h)
        y_last = ops.where(keep, y, y_last)
    return y_last


def features_batch(cfg: ModelConfig, params: Mapping, x, mask: np.ndarray):
    """Per-row feature vectors, shape ``(B, feature_dim)``."""
    _check_batch(x, mask)
    if cfg.kind == "lstm":
        return _run_lstm(params, "", x, mask, reverse=False)
    if cfg.kind == "bilstm":
        fwd = _run_lstm(params, "fw_", x, mask, reverse=False)
        bwd = _run_lstm(params, "bw_", x, mask, reverse=True)
        return ops.concatenate([fwd, bwd], axis=1)
    if cfg.kind == "s4":
        return _run_s4(params, cfg, x, mask)
    counts = mask.sum(axis=1)
    if counts.min() < cfg.min_words:
        raise DataError(
            f"convolutional model needs >= {cfg.min_words} tokens per sentence, "
            f"shortest row has {int(counts.min())}"
        )
    return cnn_forward_arrays(params, cfg.kernel_sizes, cfg.cnn_activation, x, mask)


def logits_batch(cfg: ModelConfig, params: Mapping, x, mask: np.ndarray):
    feats = features_batch(cfg, params, x, mask)
    w, bias = params["w_cls"], params["b_cls"]
    wt = w.T if ops.is_tensor(w) else np.asarray(w).T
    return ops.matmul(feats, wt) + bias


def pack_batch(sequences: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad ``(N_i, d0)`` arrays into ``(B, N_max, d0)`` plus mask."""
    if not sequences:
        raise DataError("cannot pack an empty batch")
    d0 = sequences[0].shape[1]
    n_max = max(s.shape[0] for s in sequences)
    x = np.zeros((len(sequences), n_max, d0))
    mask = np.zeros((len(sequences), n_max), dtype=bool)
    for i, s in enumerate(sequences):
        if s.ndim != 2 or s.shape[1] != d0:
            raise DimensionError("all sequences must be (N_i, d0) with one d0")
        x[i, : s.shape[0]] = s
        mask[i, : s.shape[0]] = True
    return x, mask


@dataclass
class SequenceClassifier:
    """Config + parameter dict with convenience forward/predict entry points."""

    config: ModelConfig
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def build(cls, config: ModelConfig, seed: int = 0) -> "SequenceClassifier":
        return cls(config=config, params=init_params(config, seed))

    def numpy_params(self) -> dict[str, np.ndarray]:
        return {k: np.asarray(ops.value_of(v)) for k, v in self.params.items()}

    def logits(self, x: np.ndarray) -> np.ndarray:
        """Logits for one ``(N, d0)`` sentence."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2:
            raise DimensionError(f"sentence must be (N, d0), got {x.shape}")
        batch = x[None, :, :]
        mask = np.ones((1, x.shape[0]), dtype=bool)
        return np.asarray(logits_batch(self.config, self.numpy_params(), batch, mask))[0]

    def predict(self, x: np.ndarray) -> int:
        return int(np.argmax(self.logits(x)))

    def lstm_cell(self, direction: str = "fw") -> LstmCellParams:
        if self.config.kind == "lstm":
            return LstmCellParams.from_arrays(self.numpy_params())
        if self.config.kind == "bilstm":
            return LstmCellParams.from_arrays(
                sub_arrays(self.numpy_params(), f"{direction}_")
            )
        raise DataError(f"{self.config.kind} model has no LSTM cell")

    def s4_discrete(self) -> S4DiscreteParams:
        if self.config.kind != "s4":
            raise DataError(f"{self.config.kind} model has no S4 cell")
        arrays = {
            k: np.asarray(ops.value_of(v))
            for k, v in s4_continuous_arrays(self.numpy_params()).items()
        }
        a_bar, b_bar, c_bar, d_bar = discretize_arrays(
            arrays, self.config.state_size, self.config.embed_dim
        )
        return S4DiscreteParams(a_bar=a_bar, b_bar=b_bar, c_bar=c_bar, d_bar=d_bar)

    def cnn_cell(self) -> CnnParams:
        if self.config.kind != "cnn":
            raise DataError(f"{self.config.kind} model has no convolution bank")
        return CnnParams.from_arrays(
            self.numpy_params(), self.config.kernel_sizes, self.config.cnn_activation
        )

    def classifier(self) -> tuple[np.ndarray, np.ndarray]:
        p = self.numpy_params()
        return p["w_cls"], p["b_cls"]


def calibrate_lstm_domain(
    params: Mapping,
    prefix: str,
    x: np.ndarray,
    mask: np.ndarray,
    inflation: float = 1.1,
    reverse: bool = False,
) -> LstmDomain:
    """Observed (input, state, cell) boxes over a calibration batch, inflated.

    The zero initial state is always included, so the boxes contain every
    value the recurrence actually consumed.
    """
    arrays = {k: np.asarray(ops.value_of(v)) for k, v in _lstm_gate_arrays(params, prefix).items()}
    _check_batch(x, mask)
    d = arrays["u_i"].shape[0]
    b, n = mask.shape
    valid = np.asarray(x)[mask]
    v_lo, v_hi = valid.min(axis=0), valid.max(axis=0)
    h = np.zeros((b, d))
    c = np.zeros((b, d))
    h_lo = np.zeros(d)
    h_hi = np.zeros(d)
    c_lo = np.zeros(d)
    c_hi = np.zeros(d)
    steps = range(n - 1, -1, -1) if reverse else range(n)
    for t in steps:
        h_new, c_new = cell_forward_arrays(arrays, x[:, t, :], h, c)
        keep = mask[:, t][:, None]
        h = np.where(keep, h_new, h)
        c = np.where(keep, c_new, c)
        h_lo = np.minimum(h_lo, h.min(axis=0))
        h_hi = np.maximum(h_hi, h.max(axis=0))
        c_lo = np.minimum(c_lo, c.min(axis=0))
        c_hi = np.maximum(c_hi, c.max(axis=0))
    return LstmDomain(
        v=BoxInterval(v_lo, v_hi).inflate(inflation),
        h=BoxInterval(h_lo, h_hi).inflate(inflation),
        c=BoxInterval(c_lo, c_hi).inflate(inflation),
    )


def gbm_penalty(
    cfg: ModelConfig,
    params: Mapping,
    domains: Mapping[str, LstmDomain] | None = None,
    n_words: int | None = None,
):
    """Differentiable sum of all growth-bound entries for the architecture.

    Recurrent LSTM kinds need calibrated ``domains`` ({"fw": ...} and for the
    bidirectional model also "bw"); the CNN needs the sentence length
    ``n_words`` its bound is evaluated at.
    """
    if cfg.kind == "lstm":
        if domains is None or "fw" not in domains:
            raise DataError("lstm penalty needs a calibrated domain under key 'fw'")
        return gbm_lstm_penalty(_lstm_gate_arrays(params, ""), domains["fw"])
    if cfg.kind == "bilstm":
        if domains is None or "fw" not in domains or "bw" not in domains:
            raise DataError("bilstm penalty needs calibrated 'fw' and 'bw' domains")
        fw = gbm_lstm_penalty(_lstm_gate_arrays(params, "fw_"), domains["fw"])
        bw = gbm_lstm_penalty(_lstm_gate_arrays(params, "bw_"), domains["bw"])
        return fw + bw
    if cfg.kind == "s4":
        return gbm_s4_penalty(
            s4_continuous_arrays(params), cfg.state_size, cfg.embed_dim
        )
    if n_words is None:
        raise DataError("cnn penalty needs the evaluation sentence length n_words")
    return gbm_cnn_penalty(params, cfg.kernel_sizes, n_words)


def save_checkpoint(model: SequenceClassifier, path) -> None:
    """Versioned binary dump: JSON config header, then shape-prefixed
    little-endian float64 tensors sorted by name."""
    header = json.dumps(model.config.to_dict()).encode("utf-8")
    params = model.numpy_params()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            # not ascontiguousarray: that would promote 0-d arrays to 1-d
            arr = np.asarray(params[name], dtype="<f8")
            raw_name = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw_name)))
            fh.write(raw_name)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path) -> SequenceClassifier:
    with open(path, "rb") as fh:
        blob = fh.read()
    view = memoryview(blob)
    if bytes(view[:4]) != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: not a model checkpoint")
    (version,) = struct.unpack_from("<I", view, 4)
    if version != CHECKPOINT_VERSION:
        raise DataError(f"{path}: checkpoint version {version} unsupported")
    off = 8
    (hlen,) = struct.unpack_from("<I", view, off)
    off += 4
    config = ModelConfig.from_dict(json.loads(bytes(view[off : off + hlen])))
    off += hlen
    (count,) = struct.unpack_from("<I", view, off)
    off += 4
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", view, off)
        off += 4
        name = bytes(view[off : off + nlen]).decode("utf-8")
        off += nlen
        (ndim,) = struct.unpack_from("<I", view, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}I", view, off)
        off += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(view, dtype="<f8", count=size, offset=off).reshape(shape)
        off += 8 * size
        params[name] = arr.astype(np.float64)
    if off != len(blob):
        raise DataError(f"{path}: trailing bytes in checkpoint")
    return SequenceClassifier(config=config, params=params)
