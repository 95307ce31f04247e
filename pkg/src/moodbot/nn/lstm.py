"""Peephole LSTM cell: forward, backward through time, and the bidirectional wrapper.

The cell follows the Graves variant: input and forget gates see the previous
cell state through elementwise peephole vectors, and the output gate sees the
*current* cell state.  The candidate and output squashing default to sigmoid
(``squash="sigmoid"``); ``squash="tanh"`` selects the conventional choice.

Row-vector convention throughout: an input batch is ``(B, D)``, state is
``(B, H)``, input-to-gate matrices are ``(D, H)`` and recurrent matrices
``(H, H)``, so a gate preactivation is ``x @ W_x* + h @ W_h* + c * w_c* + b``.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from ..errors import ConfigurationError, InvalidInputError
from .ops import sigmoid

SQUASH_KINDS = ("sigmoid", "tanh")


def _squash(kind: str, x: np.ndarray) -> np.ndarray:
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return np.tanh(x)
    raise ConfigurationError(f"unknown squash kind: {kind!r}")


def _squash_grad_from_value(kind: str, value: np.ndarray) -> np.ndarray:
    # derivative expressed through the activation's own output
    if kind == "sigmoid":
        return value * (1.0 - value)
    return 1.0 - value * value


@dataclass
class LstmState:
    """Recurrent state: hidden vector h and cell vector c (same width)."""

    h: np.ndarray
    c: np.ndarray

    def copy(self) -> "LstmState":
        return LstmState(self.h.copy(), self.c.copy())


@dataclass
class LstmCellParams:
    """All weights of one peephole LSTM cell.

    w_x*: input-to-gate matrices (input_dim, hidden)
    w_h*: recurrent matrices (hidden, hidden)
    w_c*: peephole vectors (hidden,)
    b_*:  biases (hidden,)
    """

    w_xi: np.ndarray
    w_hi: np.ndarray
    w_xf: np.ndarray
    w_hf: np.ndarray
    w_xo: np.ndarray
    w_ho: np.ndarray
    w_xc: np.ndarray
    w_hc: np.ndarray
    w_ci: np.ndarray
    w_cf: np.ndarray
    w_co: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.w_xi.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w_xi.shape[1]

    def validate(self) -> None:
        d, h = self.w_xi.shape
        expect = {
            "w_xi": (d, h), "w_xf": (d, h), "w_xo": (d, h), "w_xc": (d, h),
            "w_hi": (h, h), "w_hf": (h, h), "w_ho": (h, h), "w_hc": (h, h),
            "w_ci": (h,), "w_cf": (h,), "w_co": (h,),
            "b_i": (h,), "b_f": (h,), "b_o": (h,), "b_c": (h,),
        }
        for name, shape in expect.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ConfigurationError(
                    f"LSTM tensor {name} has shape {arr.shape}, expected {shape}"
                )
            if not np.all(np.isfinite(arr)):
                raise ConfigurationError(f"LSTM tensor {name} has non-finite entries")

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator) -> "LstmCellParams":
        """Fresh parameters: uniform(-0.05, 0.05) matrices, zero biases/peepholes."""
        def mat(rows, cols):
            return rng.uniform(-0.05, 0.05, size=(rows, cols))

        h = hidden_dim
        return cls(
            w_xi=mat(input_dim, h), w_hi=mat(h, h),
            w_xf=mat(input_dim, h), w_hf=mat(h, h),
            w_xo=mat(input_dim, h), w_ho=mat(h, h),
            w_xc=mat(input_dim, h), w_hc=mat(h, h),
            w_ci=np.zeros(h), w_cf=np.zeros(h), w_co=np.zeros(h),
            b_i=np.zeros(h), b_f=np.zeros(h), b_o=np.zeros(h), b_c=np.zeros(h),
        )

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "LstmCellParams":
        d, h = input_dim, hidden_dim
        return cls(
            w_xi=np.zeros((d, h)), w_hi=np.zeros((h, h)),
            w_xf=np.zeros((d, h)), w_hf=np.zeros((h, h)),
            w_xo=np.zeros((d, h)), w_ho=np.zeros((h, h)),
            w_xc=np.zeros((d, h)), w_hc=np.zeros((h, h)),
            w_ci=np.zeros(h), w_cf=np.zeros(h), w_co=np.zeros(h),
            b_i=np.zeros(h), b_f=np.zeros(h), b_o=np.zeros(h), b_c=np.zeros(h),
        )

    def tensors(self, prefix: str = "") -> dict[str, np.ndarray]:
        """Name -> array view, optionally prefixed (for optimizer/checkpoint keys)."""
        return {prefix + f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def tensor_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def initial_state(hidden_dim: int, batch: int | None = None) -> LstmState:
    if batch is None:
        return LstmState(np.zeros(hidden_dim), np.zeros(hidden_dim))
    return LstmState(np.zeros((batch, hidden_dim)), np.zeros((batch, hidden_dim)))


def lstm_cell_step(
    x: np.ndarray,
    prev: LstmState,
    p: LstmCellParams,
    squash: str = "sigmoid",
) -> LstmState:
    """One cell step.  Accepts a single vector (D,) or a batch (B, D)."""
    p.validate()
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
        prev = LstmState(prev.h[None, :], prev.c[None, :])
    if x.shape[1] != p.input_dim:
        raise ConfigurationError(
            f"input width {x.shape[1]} does not match cell input_dim {p.input_dim}"
        )
    if prev.h.shape[1] != p.hidden_dim or prev.c.shape[1] != p.hidden_dim:
        raise ConfigurationError("state width does not match cell hidden_dim")

    i = sigmoid(x @ p.w_xi + prev.h @ p.w_hi + prev.c * p.w_ci + p.b_i)
    f = sigmoid(x @ p.w_xf + prev.h @ p.w_hf + prev.c * p.w_cf + p.b_f)
    g = _squash(squash, x @ p.w_xc + prev.h @ p.w_hc + p.b_c)
    c = f * prev.c + i * g
    o = sigmoid(x @ p.w_xo + prev.h @ p.w_ho + c * p.w_co + p.b_o)
    h = o * _squash(squash, c)
    if single:
        return LstmState(h[0], c[0])
    return LstmState(h, c)


@dataclass
class LstmCache:
    """Intermediate values of a sequence forward pass, kept for backprop."""

    xs: np.ndarray      # (B, T, D)
    i: np.ndarray       # (B, T, H)
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray       # candidate values (post-squash)
    c_new: np.ndarray   # cell outputs before mask blending
    hc: np.ndarray      # squash(c_new), reused by the h computation
    c: np.ndarray       # recurrent cell stream (equals c_new when unmasked)
    hs: np.ndarray      # recurrent hidden stream
    h0: np.ndarray      # (B, H)
    c0: np.ndarray
    params: LstmCellParams
    squash: str
    mask: np.ndarray | None = None  # (B, T) floats; 0 rows pass state through


def lstm_forward(
    xs: np.ndarray,
    p: LstmCellParams,
    squash: str = "sigmoid",
    h0: np.ndarray | None = None,
    c0: np.ndarray | None = None,
    mask: np.ndarray | None = None,
) -> tuple[np.ndarray, LstmState, LstmCache]:
    """Run the cell over a batch of sequences.

    xs: (B, T, D).  With a (B, T) `mask`, steps marked 0 leave the state
    untouched, so pre-padded batches produce the same final state as the
    unpadded sequences would.  Returns (hidden sequence (B, T, H), final
    state, cache).
    """
    xs = np.asarray(xs, dtype=np.float64)
    B, T, D = xs.shape
    H = p.hidden_dim
    if D != p.input_dim:
        raise ConfigurationError(
            f"sequence width {D} does not match cell input_dim {p.input_dim}"
        )
    if mask is not None:
        mask = np.asarray(mask, dtype=np.float64)
        if mask.shape != (B, T):
            raise ConfigurationError(f"mask shape {mask.shape} does not match ({B}, {T})")
    h = np.zeros((B, H)) if h0 is None else np.asarray(h0, dtype=np.float64)
    c = np.zeros((B, H)) if c0 is None else np.asarray(c0, dtype=np.float64)
    cache = LstmCache(
        xs=xs,
        i=np.empty((B, T, H)), f=np.empty((B, T, H)), o=np.empty((B, T, H)),
        g=np.empty((B, T, H)), c_new=np.empty((B, T, H)), hc=np.empty((B, T, H)),
        c=np.empty((B, T, H)), hs=np.empty((B, T, H)),
        h0=h.copy(), c0=c.copy(), params=p, squash=squash, mask=mask,
    )
    for t in range(T):
        x = xs[:, t, :]
        i = sigmoid(x @ p.w_xi + h @ p.w_hi + c * p.w_ci + p.b_i)
        f = sigmoid(x @ p.w_xf + h @ p.w_hf + c * p.w_cf + p.b_f)
        g = _squash(squash, x @ p.w_xc + h @ p.w_hc + p.b_c)
        c_new = f * c + i * g
        o = sigmoid(x @ p.w_xo + h @ p.w_ho + c_new * p.w_co + p.b_o)
        hc = _squash(squash, c_new)
        h_new = o * hc
        if mask is not None:
            m = mask[:, t][:, None]
            c = m * c_new + (1.0 - m) * c
            h = m * h_new + (1.0 - m) * h
        else:
            c, h = c_new, h_new
        cache.i[:, t], cache.f[:, t], cache.o[:, t] = i, f, o
        cache.g[:, t], cache.c_new[:, t], cache.hc[:, t] = g, c_new, hc
        cache.c[:, t] = c
        cache.hs[:, t] = h
    return cache.hs, LstmState(h.copy(), c.copy()), cache


def lstm_backward(
    cache: LstmCache,
    d_hs: np.ndarray,
    d_h_final: np.ndarray | None = None,
    d_c_final: np.ndarray | None = None,
) -> tuple[np.ndarray, dict[str, np.ndarray], np.ndarray, np.ndarray]:
    """Backprop through a cached forward pass.

    d_hs: per-step gradient on the hidden sequence (B, T, H); d_h_final /
    d_c_final are extra gradients on the final state (e.g. from a decoder
    initialised with it).  Returns (d_xs, param grads keyed like
    LstmCellParams.tensors(), d_h0, d_c0).
    """
    p = cache.params
    B, T, D = cache.xs.shape
    H = p.hidden_dim
    grads = {name: np.zeros_like(arr) for name, arr in p.tensors().items()}
    d_xs = np.zeros((B, T, D))

    dh_next = np.zeros((B, H)) if d_h_final is None else d_h_final.copy()
    dc_next = np.zeros((B, H)) if d_c_final is None else d_c_final.copy()

    for t in range(T - 1, -1, -1):
        x = cache.xs[:, t]
        i, f, o = cache.i[:, t], cache.f[:, t], cache.o[:, t]
        g, c_new, hc = cache.g[:, t], cache.c_new[:, t], cache.hc[:, t]
        h_prev = cache.hs[:, t - 1] if t > 0 else cache.h0
        c_prev = cache.c[:, t - 1] if t > 0 else cache.c0

        dh_total = d_hs[:, t] + dh_next
        if cache.mask is not None:
            m = cache.mask[:, t][:, None]
            dh = m * dh_total
            dh_carry = (1.0 - m) * dh_total
            dc_cell = m * dc_next
            dc_carry = (1.0 - m) * dc_next
        else:
            dh = dh_total
            dh_carry = 0.0
            dc_cell = dc_next
            dc_carry = 0.0

        do = dh * hc
        dao = do * o * (1.0 - o)
        # cell grad: via h (o * squash(c)), via the future, and via the
        # output gate's peephole, which reads the step's own cell value
        dc = dh * o * _squash_grad_from_value(cache.squash, hc) + dc_cell + dao * p.w_co

        di = dc * g
        dai = di * i * (1.0 - i)
        df = dc * c_prev
        daf = df * f * (1.0 - f)
        dg = dc * i
        dag = dg * _squash_grad_from_value(cache.squash, g)

        dc_next = dc * f + dai * p.w_ci + daf * p.w_cf + dc_carry
        dh_next = (
            dai @ p.w_hi.T + daf @ p.w_hf.T + dao @ p.w_ho.T + dag @ p.w_hc.T + dh_carry
        )
        d_xs[:, t] = dai @ p.w_xi.T + daf @ p.w_xf.T + dao @ p.w_xo.T + dag @ p.w_xc.T

        grads["w_xi"] += x.T @ dai
        grads["w_hi"] += h_prev.T @ dai
        grads["w_xf"] += x.T @ daf
        grads["w_hf"] += h_prev.T @ daf
        grads["w_xo"] += x.T @ dao
        grads["w_ho"] += h_prev.T @ dao
        grads["w_xc"] += x.T @ dag
        grads["w_hc"] += h_prev.T @ dag
        grads["w_ci"] += np.sum(dai * c_prev, axis=0)
        grads["w_cf"] += np.sum(daf * c_prev, axis=0)
        grads["w_co"] += np.sum(dao * c_new, axis=0)
        grads["b_i"] += np.sum(dai, axis=0)
        grads["b_f"] += np.sum(daf, axis=0)
        grads["b_o"] += np.sum(dao, axis=0)
        grads["b_c"] += np.sum(dag, axis=0)

    return d_xs, grads, dh_next, dc_next


def bilstm_forward(
    seq,
    fwd: LstmCellParams,
    bwd: LstmCellParams,
    squash: str = "sigmoid",
) -> np.ndarray:
    """Bidirectional pass over one sequence of input vectors.

    The backward cell runs over the reversed sequence; its outputs are
    re-aligned so row t is ``[h_fwd_t ; h_bwd_t]`` in original positions.
    Returns (T, 2 * hidden).
    """
    xs = np.asarray(seq, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise InvalidInputError("bilstm_forward requires a nonempty (T, D) sequence")
    if fwd.hidden_dim != bwd.hidden_dim:
        raise ConfigurationError("forward and backward cells must share hidden_dim")
    batch = xs[None, :, :]
    hs_f, _, _ = lstm_forward(batch, fwd, squash)
    hs_b_rev, _, _ = lstm_forward(batch[:, ::-1, :], bwd, squash)
    hs_b = hs_b_rev[:, ::-1, :]
    return np.concatenate([hs_f[0], hs_b[0]], axis=1)
