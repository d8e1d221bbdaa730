"""Recurrent cell step functions and sequence unrolling.

All three cells operate on row-batched inputs: x_t is (B, d_in) and states
are (B, d_h).  Weight matrices map input to hidden as (d_h, d_in) and
hidden to hidden as (d_h, d_h); steps right-multiply by their transposes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DimensionError

CELL_KINDS = ("rnn", "gru", "lstm")

# Weight-name suffixes per cell kind, in checkpoint order.
_PARAM_NAMES = {
    "rnn": ("W_xh", "W_hh", "W_hy"),
    "gru": ("W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_h", "U_h", "b_h"),
    "lstm": (
        "W_f", "U_f", "b_f",
        "W_i", "U_i", "b_i",
        "W_o", "U_o", "b_o",
        "W_c", "U_c", "b_c",
    ),
}


@dataclass
class CellParams:
    """Named gate weights of one recurrent cell."""

    kind: str
    d_in: int
    d_h: int
    weights: dict[str, Tensor] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Tensor:
        return self.weights[name]


@dataclass
class CellState:
    """Hidden state h (B, d_h); LSTM additionally carries the memory cell c."""

    h: Tensor
    c: Tensor | None = None


def init_cell_params(
    kind: str,
    d_in: int,
    d_h: int,
    rng: np.random.Generator,
    forget_bias: float = 1.0,
) -> CellParams:
    """Uniform(-s, s) initialization with s = sqrt(1/d_h); the LSTM forget
    bias starts at ``forget_bias`` to keep early gradients flowing."""
    if kind not in CELL_KINDS:
        raise ConfigError(f"unknown cell kind {kind!r}; choose from {CELL_KINDS}")
    scale = float(np.sqrt(1.0 / d_h))

    def uniform(shape):
        return Tensor(rng.uniform(-scale, scale, size=shape), requires_grad=True)

    weights: dict[str, Tensor] = {}
    for name in _PARAM_NAMES[kind]:
        if name.startswith("W_hy"):
            weights[name] = uniform((d_in, d_h)) if False else uniform((d_h, d_h))
        elif name.startswith("W"):
            weights[name] = uniform((d_h, d_in))
        elif name.startswith("U"):
            weights[name] = uniform((d_h, d_h))
        else:
            weights[name] = ad.zeros((d_h,), requires_grad=True)
    if kind == "lstm":
        weights["b_f"] = Tensor(np.full(d_h, float(forget_bias)), requires_grad=True)
    return CellParams(kind, d_in, d_h, weights)


def zero_state(kind: str, batch: int, d_h: int) -> CellState:
    h = ad.zeros((batch, d_h))
    if kind == "lstm":
        return CellState(h, ad.zeros((batch, d_h)))
    return CellState(h)


def _affine(x: Tensor, w: Tensor, name: str) -> Tensor:
    if x.shape[1] != w.shape[1]:
        raise DimensionError(
            f"{name}: input width {x.shape[1]} does not match weight shape {w.shape}"
        )
    return ad.matmul(x, ad.transpose(w))


def _gate(x: Tensor, h: Tensor, w: Tensor, u: Tensor, b: Tensor, name: str) -> Tensor:
    pre = ad.add(_affine(x, w, name), _affine(h, u, name))
    return ad.add(pre, ad.tile_new_axis(b, x.shape[0], 0))


def rnn_step(x_t: Tensor, state: CellState, params: CellParams) -> CellState:
    """h_t = tanh(W_hh h_prev + W_xh x_t)."""
    pre = ad.add(
        _affine(x_t, params["W_xh"], "rnn W_xh"),
        _affine(state.h, params["W_hh"], "rnn W_hh"),
    )
    return CellState(ad.tanh(pre))


def rnn_output(state: CellState, params: CellParams) -> Tensor:
    """y_t = W_hy h_t.  Housed for completeness; the translation decoders use
    their own output layers."""
    return _affine(state.h, params["W_hy"], "rnn W_hy")


def gru_step(x_t: Tensor, state: CellState, params: CellParams) -> CellState:
    h_prev = state.h
    z = ad.sigmoid(_gate(x_t, h_prev, params["W_z"], params["U_z"], params["b_z"], "gru z"))
    r = ad.sigmoid(_gate(x_t, h_prev, params["W_r"], params["U_r"], params["b_r"], "gru r"))
    candidate = ad.tanh(
        _gate(x_t, ad.mul(r, h_prev), params["W_h"], params["U_h"], params["b_h"], "gru h")
    )
    one_minus_z = ad.sub(1.0, z)
    h = ad.add(ad.mul(z, h_prev), ad.mul(one_minus_z, candidate))
    return CellState(h)


def lstm_step(x_t: Tensor, state: CellState, params: CellParams) -> CellState:
    h_prev, c_prev = state.h, state.c
    f = ad.sigmoid(_gate(x_t, h_prev, params["W_f"], params["U_f"], params["b_f"], "lstm f"))
    i = ad.sigmoid(_gate(x_t, h_prev, params["W_i"], params["U_i"], params["b_i"], "lstm i"))
    o = ad.sigmoid(_gate(x_t, h_prev, params["W_o"], params["U_o"], params["b_o"], "lstm o"))
    candidate = ad.tanh(
        _gate(x_t, h_prev, params["W_c"], params["U_c"], params["b_c"], "lstm c")
    )
    c = ad.add(ad.mul(f, c_prev), ad.mul(i, candidate))
    h = ad.mul(o, ad.tanh(c))
    return CellState(h, c)


_STEP_FNS = {"rnn": rnn_step, "gru": gru_step, "lstm": lstm_step}


def step(x_t: Tensor, state: CellState, params: CellParams) -> CellState:
    return _STEP_FNS[params.kind](x_t, state, params)


def _masked_carry(new: CellState, prev: CellState, mask_col: np.ndarray, d_h: int) -> CellState:
    """Keep the previous state wherever mask is False (padding positions)."""
    m = np.repeat(mask_col.astype(new.h.dtype)[:, None], d_h, axis=1)
    keep = Tensor(m)
    drop = Tensor(1.0 - m)
    h = ad.add(ad.mul(new.h, keep), ad.mul(prev.h, drop))
    if new.c is not None:
        c = ad.add(ad.mul(new.c, keep), ad.mul(prev.c, drop))
        return CellState(h, c)
    return CellState(h)


def unroll(
    inputs: list[Tensor],
    params: CellParams,
    initial: CellState | None = None,
    direction: str = "forward",
    masks: np.ndarray | None = None,
) -> list[CellState]:
    """Run the cell over a sequence of (B, d_in) inputs.

    States come back in input order regardless of direction; the backward
    direction processes reversed input and re-reverses its outputs.  With
    ``masks`` (B, T booleans), padded steps carry the previous state
    through, so the final state of a forward unroll is the state at each
    row's last real token.
    """
    if not inputs:
        raise ConfigError("unroll needs a nonempty input sequence")
    if direction not in ("forward", "backward"):
        raise ConfigError(f"unknown unroll direction {direction!r}")
    seq = list(inputs)
    cols = None if masks is None else [masks[:, t] for t in range(len(seq))]
    if direction == "backward":
        seq = seq[::-1]
        cols = None if cols is None else cols[::-1]
    state = initial or zero_state(params.kind, seq[0].shape[0], params.d_h)
    out: list[CellState] = []
    for t, x_t in enumerate(seq):
        new = step(x_t, state, params)
        if cols is not None:
            new = _masked_carry(new, state, cols[t], params.d_h)
        out.append(new)
        state = new
    if direction == "backward":
        out.reverse()
    return out


def parameter_entries(params: CellParams, prefix: str) -> list[tuple[str, Tensor]]:
    """Stable (name, tensor) listing for checkpoints: "<prefix>.W_z" etc."""
    return [(f"{prefix}.{name}", params.weights[name]) for name in _PARAM_NAMES[params.kind]]
