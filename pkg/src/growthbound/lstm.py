"""Growth bound matrices for an LSTM cell via interval analysis.

One step of the cell maps ``(v, h_prev, c_prev)`` to ``(h, c)``:

    T_x    = theta_x @ v + u_x @ h_prev + b_x      for x in {i, f, g, o}
    c      = sigmoid(T_f) * c_prev + sigmoid(T_i) * tanh(T_g)
    h      = sigmoid(T_o) * tanh(c)

Every partial derivative of ``h`` is a short sum of products of gate
activations, their derivatives, the previous cell state and single weight
entries.  Over a box domain each factor has an exact interval (affine
preactivation ranges by sign-splitting, activation value/derivative ranges
by unimodality, the ``c`` range by the midpoint-plus-inflation rule), so
evaluating the sum in interval arithmetic term by term gives signed bounds
``[lo, hi]`` on each partial; the GBM entry is ``max(|lo|, |hi|)``.

The three Jacobian blocks:

* w.r.t. ``v``:  ``theta_o * sigmoid'(T_o) * tanh(c)  +  sigmoid(T_o) * (dc/dv) * tanh'(c)``
  where ``dc/dv = theta_f * sigmoid'(T_f) * c_prev + theta_i * sigmoid'(T_i) * tanh(T_g)
  + theta_g * sigmoid(T_i) * tanh'(T_g)`` (the ``A^c`` block);
* w.r.t. ``h_prev``: the same shape with ``u_x`` in place of ``theta_x``
  (the ``B^c`` block);
* w.r.t. ``c_prev``: diagonal, ``sigmoid(T_o) * sigmoid(T_f) * tanh'(c)``,
  since coordinate ``i`` of ``c`` sees only coordinate ``i`` of ``c_prev``.

All the bound math is written against :mod:`growthbound.ops`, so the same
functions produce numpy bounds for certification and tape-differentiable
bounds for the training penalty.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import ops
from .activations import ActivationKind, derivative_bounds_arrays, value_bounds_arrays
from .errors import DimensionError
from .gbm import Gbm
from .intervals import BoxInterval, Matrix, Vector, abs_bound, affine_bounds, mul_bounds

GATE_NAMES = ("i", "f", "g", "o")


@dataclass(frozen=True)
class GateParams:
    """Affine preactivation parameters for one gate: ``theta @ v + u @ h + bias``."""

    theta: Matrix
    u: Matrix
    bias: Vector

    def __post_init__(self) -> None:
        theta = np.asarray(self.theta, dtype=np.float64)
        u = np.asarray(self.u, dtype=np.float64)
        bias = np.asarray(self.bias, dtype=np.float64)
        if theta.ndim != 2 or u.ndim != 2 or bias.ndim != 1:
            raise DimensionError(
                f"gate parameter ranks wrong: theta {theta.shape}, u {u.shape}, bias {bias.shape}"
            )
        d = theta.shape[0]
        if u.shape != (d, d) or bias.shape != (d,):
            raise DimensionError(
                f"gate shapes inconsistent: theta {theta.shape}, u {u.shape}, bias {bias.shape}"
            )
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "bias", bias)


@dataclass(frozen=True)
class LstmCellParams:
    """The four gates of one LSTM cell, all mapping ``(v in R^d0, h in R^d)`` to ``R^d``."""

    input_gate: GateParams
    forget_gate: GateParams
    cell_gate: GateParams
    output_gate: GateParams

    def __post_init__(self) -> None:
        shapes = {g.theta.shape for g in self.gates().values()}
        if len(shapes) != 1:
            raise DimensionError(f"gates disagree on shape: {sorted(shapes)}")

    def gates(self) -> dict[str, GateParams]:
        return {
            "i": self.input_gate,
            "f": self.forget_gate,
            "g": self.cell_gate,
            "o": self.output_gate,
        }

    @property
    def d0(self) -> int:
        return self.input_gate.theta.shape[1]

    @property
    def d(self) -> int:
        return self.input_gate.theta.shape[0]

    def as_arrays(self) -> dict[str, np.ndarray]:
        """Flat name -> array mapping (keys like ``theta_f``, ``u_o``, ``b_i``)."""
        out: dict[str, np.ndarray] = {}
        for name, gate in self.gates().items():
            out[f"theta_{name}"] = gate.theta
            out[f"u_{name}"] = gate.u
            out[f"b_{name}"] = gate.bias
        return out

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray]) -> "LstmCellParams":
        def gate(name: str) -> GateParams:
            return GateParams(
                theta=ops.value_of(arrays[f"theta_{name}"]),
                u=ops.value_of(arrays[f"u_{name}"]),
                bias=ops.value_of(arrays[f"b_{name}"]),
            )

        return cls(
            input_gate=gate("i"),
            forget_gate=gate("f"),
            cell_gate=gate("g"),
            output_gate=gate("o"),
        )


@dataclass(frozen=True)
class LstmDomain:
    """Boxes for the cell inputs: current input ``v``, previous ``h`` and ``c``."""

    v: BoxInterval
    h: BoxInterval
    c: BoxInterval

    def check_against(self, params: LstmCellParams) -> None:
        if self.v.dim != params.d0:
            raise DimensionError(f"v box dim {self.v.dim} vs input size {params.d0}")
        if self.h.dim != params.d or self.c.dim != params.d:
            raise DimensionError(
                f"h/c box dims {self.h.dim}/{self.c.dim} vs hidden size {params.d}"
            )


# -- forward pass -------------------------------------------------------------


def _preact(arrays, name, v, h_prev):
    theta = arrays[f"theta_{name}"]
    u = arrays[f"u_{name}"]
    b = arrays[f"b_{name}"]
    return ops.matmul(v, _transpose(theta)) + ops.matmul(h_prev, _transpose(u)) + b


def _transpose(m):
    return m.T if ops.is_tensor(m) else np.asarray(m).T


def cell_forward_arrays(arrays: Mapping[str, np.ndarray], v, h_prev, c_prev):
    """One LSTM step on ndarrays or Tensors; inputs may carry batch axes."""
    gi = ops.sigmoid(_preact(arrays, "i", v, h_prev))
    gf = ops.sigmoid(_preact(arrays, "f", v, h_prev))
    gg = ops.tanh(_preact(arrays, "g", v, h_prev))
    go = ops.sigmoid(_preact(arrays, "o", v, h_prev))
    c = gf * c_prev + gi * gg
    h = go * ops.tanh(c)
    return h, c


def lstm_cell_forward(
    params: LstmCellParams, v: Vector, h_prev: Vector, c_prev: Vector
) -> tuple[Vector, Vector]:
    """One step of the cell for single vectors; returns ``(h, c)``."""
    v = np.asarray(v, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    c_prev = np.asarray(c_prev, dtype=np.float64)
    if v.shape != (params.d0,):
        raise DimensionError(f"v shape {v.shape}, expected ({params.d0},)")
    if h_prev.shape != (params.d,) or c_prev.shape != (params.d,):
        raise DimensionError(
            f"h/c shapes {h_prev.shape}/{c_prev.shape}, expected ({params.d},)"
        )
    return cell_forward_arrays(params.as_arrays(), v, h_prev, c_prev)


# -- interval machinery --------------------------------------------------------


def _preact_bounds(arrays, name, dom):
    """Range of one gate's preactivation over the domain boxes."""
    return affine_bounds(
        arrays[f"theta_{name}"],
        dom["v_lo"],
        dom["v_hi"],
        arrays[f"u_{name}"],
        dom["h_lo"],
        dom["h_hi"],
        arrays[f"b_{name}"],
    )


def _domain_arrays(domain: LstmDomain) -> dict[str, np.ndarray]:
    return {
        "v_lo": domain.v.lo,
        "v_hi": domain.v.hi,
        "h_lo": domain.h.lo,
        "h_hi": domain.h.hi,
        "c_lo": domain.c.lo,
        "c_hi": domain.c.hi,
    }


def _col(x, d):
    """Reshape a length-``d`` vector to a column so it scales matrix rows."""
    return ops.reshape(x, (d, 1))


def _dc_input_bounds(arrays, dom, weight_key: str):
    """Interval matrix for ``dc/dv`` (``weight_key='theta'``) or ``dc/dh`` (``'u'``).

    Entry ``(i, j)``:
        W_f[i,j] sig'(T_f_i) c_prev_i + W_i[i,j] sig'(T_i_i) tanh(T_g_i)
        + W_g[i,j] sig(T_i_i) tanh'(T_g_i)
    """
    tf = _preact_bounds(arrays, "f", dom)
    ti = _preact_bounds(arrays, "i", dom)
    tg = _preact_bounds(arrays, "g", dom)
    d = ops.value_of(arrays["b_f"]).shape[0]

    spf = derivative_bounds_arrays(ActivationKind.SIGMOID, *tf)
    spi = derivative_bounds_arrays(ActivationKind.SIGMOID, *ti)
    si = value_bounds_arrays(ActivationKind.SIGMOID, *ti)
    vg = value_bounds_arrays(ActivationKind.TANH, *tg)
    tpg = derivative_bounds_arrays(ActivationKind.TANH, *tg)

    w_f = arrays[f"{weight_key}_f"]
    w_i = arrays[f"{weight_key}_i"]
    w_g = arrays[f"{weight_key}_g"]

    f1 = mul_bounds(spf[0], spf[1], dom["c_lo"], dom["c_hi"])
    t1 = mul_bounds(w_f, w_f, _col(f1[0], d), _col(f1[1], d))
    f2 = mul_bounds(spi[0], spi[1], vg[0], vg[1])
    t2 = mul_bounds(w_i, w_i, _col(f2[0], d), _col(f2[1], d))
    f3 = mul_bounds(si[0], si[1], tpg[0], tpg[1])
    t3 = mul_bounds(w_g, w_g, _col(f3[0], d), _col(f3[1], d))

    return t1[0] + t2[0] + t3[0], t1[1] + t2[1] + t3[1]


def _dc_state_bounds(arrays, dom):
    """Diagonal interval for ``dc_i/dc_prev_i = sigmoid(T_f_i)``."""
    tf = _preact_bounds(arrays, "f", dom)
    return value_bounds_arrays(ActivationKind.SIGMOID, *tf)


def _cell_state_bounds(arrays, dom):
    """Box enclosing ``c`` over the domain: midpoint value + Jacobian-scaled widths.

    The inflation uses the full box widths (not half-widths), which is
    deliberately conservative; it keeps the enclosure monotone under domain
    nesting.
    """
    v_mid = 0.5 * (dom["v_lo"] + dom["v_hi"])
    h_mid = 0.5 * (dom["h_lo"] + dom["h_hi"])
    c_mid_prev = 0.5 * (dom["c_lo"] + dom["c_hi"])
    gi = ops.sigmoid(_preact(arrays, "i", v_mid, h_mid))
    gf = ops.sigmoid(_preact(arrays, "f", v_mid, h_mid))
    gg = ops.tanh(_preact(arrays, "g", v_mid, h_mid))
    c_mid = gf * c_mid_prev + gi * gg

    a_lo, a_hi = _dc_input_bounds(arrays, dom, "theta")
    b_lo, b_hi = _dc_input_bounds(arrays, dom, "u")
    d_lo, d_hi = _dc_state_bounds(arrays, dom)

    spread = (
        ops.matmul(abs_bound(a_lo, a_hi), dom["v_hi"] - dom["v_lo"])
        + ops.matmul(abs_bound(b_lo, b_hi), dom["h_hi"] - dom["h_lo"])
        + abs_bound(d_lo, d_hi) * (dom["c_hi"] - dom["c_lo"])
    )
    return c_mid - spread, c_mid + spread


def _gbm_lstm_blocks(arrays, dom):
    """Signed interval bounds for the three Jacobian blocks of ``h``.

    Returns ``(mv_lo, mv_hi, mh_lo, mh_hi, mc_lo, mc_hi)``; the ``mc`` pair
    holds the diagonal entries only.
    """
    d = ops.value_of(arrays["b_f"]).shape[0]
    to = _preact_bounds(arrays, "o", dom)
    tf = _preact_bounds(arrays, "f", dom)
    spo = derivative_bounds_arrays(ActivationKind.SIGMOID, *to)
    so = value_bounds_arrays(ActivationKind.SIGMOID, *to)
    sf = value_bounds_arrays(ActivationKind.SIGMOID, *tf)

    ct_lo, ct_hi = _cell_state_bounds(arrays, dom)
    vc = value_bounds_arrays(ActivationKind.TANH, ct_lo, ct_hi)
    tpc = derivative_bounds_arrays(ActivationKind.TANH, ct_lo, ct_hi)

    def head_block(weight_key):
        # W_o[i,j] sig'(T_o_i) tanh(c_i)  +  sig(T_o_i) (dc/dx)[i,j] tanh'(c_i)
        w_o = arrays[f"{weight_key}_o"]
        dc = _dc_input_bounds(arrays, dom, weight_key)
        f1 = mul_bounds(spo[0], spo[1], vc[0], vc[1])
        t1 = mul_bounds(w_o, w_o, _col(f1[0], d), _col(f1[1], d))
        f2 = mul_bounds(so[0], so[1], tpc[0], tpc[1])
        t2 = mul_bounds(dc[0], dc[1], _col(f2[0], d), _col(f2[1], d))
        return t1[0] + t2[0], t1[1] + t2[1]

    mv_lo, mv_hi = head_block("theta")
    mh_lo, mh_hi = head_block("u")

    # dh_i/dc_prev_i = sig(T_o_i) sig(T_f_i) tanh'(c_i), zero off the diagonal
    f = mul_bounds(so[0], so[1], sf[0], sf[1])
    mc_lo, mc_hi = mul_bounds(f[0], f[1], tpc[0], tpc[1])
    return mv_lo, mv_hi, mh_lo, mh_hi, mc_lo, mc_hi


# -- public API -----------------------------------------------------------------


def cell_state_bounds(params: LstmCellParams, domain: LstmDomain) -> BoxInterval:
    """Sound box for the next cell state ``c`` over the domain."""
    domain.check_against(params)
    lo, hi = _cell_state_bounds(params.as_arrays(), _domain_arrays(domain))
    return BoxInterval(lo, hi)


def jacobian_bounds_Ac(params: LstmCellParams, domain: LstmDomain) -> tuple[Matrix, Matrix]:
    """Signed bounds ``(lo, hi)`` on ``dc/dv``, shape ``(d, d0)`` each."""
    domain.check_against(params)
    return _dc_input_bounds(params.as_arrays(), _domain_arrays(domain), "theta")


def jacobian_bounds_Bc(params: LstmCellParams, domain: LstmDomain) -> tuple[Matrix, Matrix]:
    """Signed bounds ``(lo, hi)`` on ``dc/dh_prev``, shape ``(d, d)`` each."""
    domain.check_against(params)
    return _dc_input_bounds(params.as_arrays(), _domain_arrays(domain), "u")


def jacobian_bounds_Dc(params: LstmCellParams, domain: LstmDomain) -> tuple[Vector, Vector]:
    """Signed bounds ``(lo, hi)`` on the diagonal of ``dc/dc_prev``, shape ``(d,)``."""
    domain.check_against(params)
    return _dc_state_bounds(params.as_arrays(), _domain_arrays(domain))


def gbm_lstm(params: LstmCellParams, domain: LstmDomain) -> Gbm:
    """Growth bound matrix of one step's ``h`` output over the domain.

    Columns are the stacked inputs ``[v | h_prev | c_prev]``; the ``c`` block
    is diagonal by construction.
    """
    domain.check_against(params)
    mv_lo, mv_hi, mh_lo, mh_hi, mc_lo, mc_hi = _gbm_lstm_blocks(
        params.as_arrays(), _domain_arrays(domain)
    )
    mv = abs_bound(mv_lo, mv_hi)
    mh = abs_bound(mh_lo, mh_hi)
    mc = np.diag(abs_bound(mc_lo, mc_hi))
    d0, d = params.d0, params.d
    matrix = np.concatenate([mv, mh, mc], axis=1)
    return Gbm(matrix, (("v", 0, d0), ("h", d0, d0 + d), ("c", d0 + d, d0 + 2 * d)))


def gbm_lstm_penalty(arrays: Mapping[str, np.ndarray], domain: LstmDomain):
    """Sum of all GBM entries, differentiable w.r.t. Tensor-valued ``arrays``.

    The domain boxes enter as constants (they are recalibrated between steps,
    not optimized through).
    """
    dom = _domain_arrays(domain)
    mv_lo, mv_hi, mh_lo, mh_hi, mc_lo, mc_hi = _gbm_lstm_blocks(arrays, dom)
    return (
        ops.sum_(abs_bound(mv_lo, mv_hi))
        + ops.sum_(abs_bound(mh_lo, mh_hi))
        + ops.sum_(abs_bound(mc_lo, mc_hi))
    )
