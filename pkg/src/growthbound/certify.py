"""Certified robustness to synonym substitution via growth bound matrices.

Given a growth bound M for a map F on a box domain, a perturbation with
per-coordinate radii r keeps every output inside ``F(x) +- M @ r``.  This
module applies that device per architecture:

- LSTM / BiLSTM: deviations are chained step by step.  At step t the bound
  matrices are computed on the box ``[clean +- deviation]`` built from the
  step's own radii and the previous step's deviation bounds, so by induction
  the boxes contain both the clean and every admissible perturbed trajectory.
- S4: the discrete cell is affine, so deviations propagate exactly through
  the absolute transition matrices.
- CNN: the growth bound is global (activation slopes are globally bounded),
  so one matrix covers the whole flattened sentence.

The final linear classifier composes with ``|W|``.  A certificate's margin
is the gap between the predicted logit's lower bound and the best other
logit's upper bound; ``certified`` means that margin is positive (and the
domain was validated, for modes that rely on a fixed calibrated domain).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .cnn import gbm_cnn
from .data import EmbeddingTable, SynonymTable, TextDataset
from .errors import DataError, DimensionError, NumericError
from .gbm import Gbm
from .intervals import BoxInterval, abs_bound
from .lstm import (
    LstmCellParams,
    LstmDomain,
    cell_forward_arrays,
    gbm_lstm,
    jacobian_bounds_Ac,
    jacobian_bounds_Bc,
    jacobian_bounds_Dc,
)
from .models import SequenceClassifier
from .s4 import gbm_s4, state_transition_magnitudes

CERTIFY_MODES = ("chained", "final_cell")
OOV_POLICIES = ("zero", "reject")


@dataclass(frozen=True)
class PerturbationSpec:
    """Per-coordinate radii ``r_j >= 0`` bounding ``|delta_j| <= r_j``."""

    radii: np.ndarray

    def __post_init__(self) -> None:
        r = np.asarray(self.radii, dtype=np.float64)
        if r.ndim != 1:
            raise DimensionError(f"radii must be a vector, got shape {r.shape}")
        if not np.all(np.isfinite(r)):
            raise NumericError("radii must be finite")
        if np.any(r < 0):
            raise DataError("radii must be nonnegative")
        r = r.copy()
        r.setflags(write=False)
        object.__setattr__(self, "radii", r)

    @property
    def dim(self) -> int:
        return self.radii.shape[0]


@dataclass(frozen=True)
class Certificate:
    """Outcome of certifying one sentence.

    ``certified`` is exactly ``margin > 0 and domain_valid``: a positive
    margin proves every admissible substitution keeps the prediction, while
    a failed domain check voids the bound (inconclusive, never unsound).
    """

    input_id: str
    predicted_class: int
    certified: bool
    lower: np.ndarray
    upper: np.ndarray
    margin: float
    domain_valid: bool = True
    mode: str = "chained"

    def __post_init__(self) -> None:
        lo = np.asarray(self.lower, dtype=np.float64)
        hi = np.asarray(self.upper, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionError("lower/upper must be matching vectors")
        if np.any(lo > hi + 1e-12):
            raise NumericError("lower bound exceeds upper bound")
        if not 0 <= self.predicted_class < lo.shape[0]:
            raise DimensionError("predicted class outside bound vectors")
        if self.mode not in CERTIFY_MODES:
            raise DataError(f"unknown mode {self.mode!r}")
        if self.certified != (self.margin > 0 and self.domain_valid):
            raise DataError("certified flag must equal (margin > 0 and domain_valid)")
        for name, arr in (("lower", lo), ("upper", hi)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def to_json_dict(self) -> dict:
        return {
            "id": self.input_id,
            "predicted": self.predicted_class,
            "certified": self.certified,
            "margin": self.margin,
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "domain_valid": self.domain_valid,
            "mode": self.mode,
        }


def output_bounds(f_at_x: np.ndarray, m: Gbm, spec: PerturbationSpec) -> BoxInterval:
    """Box enclosure ``F(x) +- M @ r`` for all ``|delta| <= r``."""
    f = np.asarray(f_at_x, dtype=np.float64)
    if f.ndim != 1 or f.shape[0] != m.n_out:
        raise DimensionError(f"f_at_x shape {f.shape} does not match GBM rows {m.n_out}")
    if spec.dim != m.n_in:
        raise DimensionError(f"radii dim {spec.dim} does not match GBM columns {m.n_in}")
    slack = m.matrix @ spec.radii
    return BoxInterval(f - slack, f + slack)


def lipschitz_constant(m: Gbm) -> float:
    """``L = max_ij M_ij`` satisfies ``|F(x)-F(x')|_inf <= L * |x-x'|_1``."""
    return m.max_entry()


@dataclass(frozen=True)
class RecurrentDeviations:
    """Chained elementwise deviation envelopes, one row per step."""

    dh: np.ndarray
    dc: np.ndarray
    domain_valid: bool


def chain_recurrent_bounds(
    m: Gbm,
    jac_c: tuple[np.ndarray, np.ndarray, np.ndarray],
    radii: np.ndarray,
    domain: LstmDomain | None = None,
    trajectory: Sequence[tuple[np.ndarray, np.ndarray, np.ndarray]] | None = None,
) -> RecurrentDeviations:
    """Propagate per-position radii through a recurrence with fixed bounds.

    ``m`` holds the v/h/c blocks of one calibrated-domain GBM and ``jac_c``
    the matching ``(|A^c|, |B^c|, diag |D^c|)`` magnitudes.  When ``domain``
    and the clean ``trajectory`` (per step ``(v_t, h_prev, c_prev)``) are
    given, each step checks that the perturbed envelopes stay inside the
    calibrated boxes; a violation clears ``domain_valid`` (the envelopes are
    still returned but certify nothing).
    """
    radii = np.asarray(radii, dtype=np.float64)
    if radii.ndim != 2:
        raise DimensionError(f"radii must be (N, d0), got {radii.shape}")
    if np.any(radii < 0):
        raise DataError("radii must be nonnegative")
    mv, mh = m.block("v"), m.block("h")
    mc = np.diag(m.block("c"))
    a_mag, b_mag, d_mag = (np.asarray(x, dtype=np.float64) for x in jac_c)
    n_steps = radii.shape[0]
    if trajectory is not None and len(trajectory) != n_steps:
        raise DimensionError("trajectory length must match radii rows")
    d = mh.shape[0]
    dh = np.zeros(d)
    dc = np.zeros(d)
    dh_steps = np.zeros((n_steps, d))
    dc_steps = np.zeros((n_steps, d))
    valid = True
    for t in range(n_steps):
        r = radii[t]
        if domain is not None and trajectory is not None:
            v_t, h_prev, c_prev = trajectory[t]
            valid = valid and domain.v.contains_box(BoxInterval(v_t - r, v_t + r))
            valid = valid and domain.h.contains_box(BoxInterval(h_prev - dh, h_prev + dh))
            valid = valid and domain.c.contains_box(BoxInterval(c_prev - dc, c_prev + dc))
        dh_new = mv @ r + mh @ dh + mc * dc
        dc_new = a_mag @ r + b_mag @ dh + d_mag * dc
        dh, dc = dh_new, dc_new
        dh_steps[t] = dh
        dc_steps[t] = dc
    return RecurrentDeviations(dh=dh_steps, dc=dc_steps, domain_valid=valid)


def _chain_lstm_adaptive(
    cell: LstmCellParams, arrays: Mapping, x: np.ndarray, radii: np.ndarray, reverse: bool
) -> np.ndarray:
    """Final-state deviation bound with per-step self-calibrated boxes.

    Step t's bound matrices are evaluated on ``[clean +- envelope]`` boxes,
    which contain every perturbed trajectory by induction, so no external
    domain is needed and the result is always sound.
    """
    d = cell.d
    h = np.zeros(d)
    c = np.zeros(d)
    dh = np.zeros(d)
    dc = np.zeros(d)
    order = range(len(x) - 1, -1, -1) if reverse else range(len(x))
    for t in order:
        v, r = x[t], radii[t]
        dom = LstmDomain(
            v=BoxInterval(v - r, v + r),
            h=BoxInterval(h - dh, h + dh),
            c=BoxInterval(c - dc, c + dc),
        )
        m = gbm_lstm(cell, dom)
        a_mag = abs_bound(*jacobian_bounds_Ac(cell, dom))
        b_mag = abs_bound(*jacobian_bounds_Bc(cell, dom))
        d_mag = abs_bound(*jacobian_bounds_Dc(cell, dom))
        dh_new = m.block("v") @ r + m.block("h") @ dh + np.diag(m.block("c")) * dc
        dc_new = a_mag @ r + b_mag @ dh + d_mag * dc
        h, c = cell_forward_arrays(arrays, v, h, c)
        dh, dc = dh_new, dc_new
    return dh


def _feature_deviation(model: SequenceClassifier, x: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Elementwise deviation bound on the feature vector, per architecture."""
    kind = model.config.kind
    params = model.numpy_params()
    if kind == "lstm":
        return _chain_lstm_adaptive(model.lstm_cell(), params, x, radii, reverse=False)
    if kind == "bilstm":
        from .models import sub_arrays

        fw = _chain_lstm_adaptive(
            model.lstm_cell("fw"), sub_arrays(params, "fw_"), x, radii, reverse=False
        )
        bw = _chain_lstm_adaptive(
            model.lstm_cell("bw"), sub_arrays(params, "bw_"), x, radii, reverse=True
        )
        return np.concatenate([fw, bw])
    if kind == "s4":
        disc = model.s4_discrete()
        a_mag, b_mag = state_transition_magnitudes(disc)
        dh = np.zeros(disc.n)
        for t in range(len(x) - 1):
            dh = a_mag @ dh + b_mag @ radii[t]
        m = gbm_s4(disc)
        return m.block("v") @ radii[-1] + m.block("h") @ dh
    m = gbm_cnn(model.cnn_cell(), n_words=len(x))
    return m.matrix @ radii.reshape(-1)


def certify_sentence(
    model: SequenceClassifier,
    tokens: Sequence[str],
    emb: EmbeddingTable,
    syn: SynonymTable,
    mode: str = "chained",
    oov_policy: str = "zero",
    input_id: str = "0",
) -> Certificate:
    """Certify one sentence against all synonym substitutions.

    ``mode="chained"`` (default) budgets every position; ``"final_cell"``
    certifies the weaker adversary that substitutes only the final position,
    using a single cell application.  ``oov_policy`` chooses between treating
    out-of-vocabulary tokens as inert zero vectors or rejecting the sentence.
    """
    if mode not in CERTIFY_MODES:
        raise DataError(f"unknown mode {mode!r} (use {CERTIFY_MODES})")
    if oov_policy not in OOV_POLICIES:
        raise DataError(f"unknown oov policy {oov_policy!r} (use {OOV_POLICIES})")
    if not tokens:
        raise DataError("cannot certify an empty sentence")
    if oov_policy == "reject":
        missing = [t for t in tokens if t not in emb]
        if missing:
            raise DataError(f"out-of-vocabulary tokens: {missing[:5]}")
    x = emb.embed_sequence(tokens)
    radii = syn.sentence_radii(tokens)
    if mode == "final_cell":
        radii = radii.copy()
        radii[:-1] = 0.0
    logits = model.logits(x)
    pred = int(np.argmax(logits))
    dfeat = _feature_deviation(model, x, radii)
    w_cls, _ = model.classifier()
    slack = np.abs(w_cls) @ dfeat
    lower = logits - slack
    upper = logits + slack
    others = np.delete(upper, pred)
    margin = float(lower[pred] - others.max())
    return Certificate(
        input_id=str(input_id),
        predicted_class=pred,
        certified=margin > 0,
        lower=lower,
        upper=upper,
        margin=margin,
        domain_valid=True,
        mode=mode,
    )


def certify_dataset(
    model: SequenceClassifier,
    dataset: TextDataset,
    emb: EmbeddingTable,
    syn: SynonymTable,
    mode: str = "chained",
    oov_policy: str = "zero",
) -> list[Certificate]:
    return [
        certify_sentence(model, tokens, emb, syn, mode, oov_policy, input_id=str(i))
        for i, (tokens, _) in enumerate(dataset.examples)
    ]


def aggregate_certificates(
    certs: Sequence[Certificate], labels: Sequence[int] | None = None
) -> dict:
    """Summary counts; with gold labels, also the certified-and-correct rate."""
    if not certs:
        raise DataError("no certificates to aggregate")
    modes = {c.mode for c in certs}
    if len(modes) != 1:
        raise DataError(f"mixed certificate modes {sorted(modes)}")
    n = len(certs)
    out = {
        "n": n,
        "mode": modes.pop(),
        "certified_fraction": sum(c.certified for c in certs) / n,
        "mean_margin": float(np.mean([c.margin for c in certs])),
    }
    if labels is not None:
        if len(labels) != n:
            raise DimensionError("labels length does not match certificates")
        correct = [c.predicted_class == y for c, y in zip(certs, labels)]
        out["clean_accuracy"] = sum(correct) / n
        out["certified_correct_fraction"] = (
            sum(c.certified and ok for c, ok in zip(certs, correct)) / n
        )
    return out


def write_certificates_jsonl(certs: Sequence[Certificate], path) -> None:
    """One JSON record per line, in input order."""
    with open(path, "w", encoding="utf-8") as fh:
        for cert in certs:
            fh.write(json.dumps(cert.to_json_dict()))
            fh.write("\n")


def read_certificates_jsonl(path) -> list[Certificate]:
    certs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                certs.append(
                    Certificate(
                        input_id=str(raw["id"]),
                        predicted_class=int(raw["predicted"]),
                        certified=bool(raw["certified"]),
                        lower=np.asarray(raw["lower"]),
                        upper=np.asarray(raw["upper"]),
                        margin=float(raw["margin"]),
                        domain_valid=bool(raw["domain_valid"]),
                        mode=raw["mode"],
                    )
                )
            except (KeyError, ValueError, json.JSONDecodeError) as exc:
                raise DataError(f"{path}:{lineno}: bad certificate record: {exc}") from None
    return certs
