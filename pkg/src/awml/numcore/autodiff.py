"""Tape-based reverse-mode differentiation over numpy arrays.

Every op appends one node to the tape of its differentiable inputs; `backward`
walks the tape in reverse recording order, so each node is visited once.
Plain ndarrays passed to an op are constants.

All ops broadcast over leading dimensions, which lets several same-shaped
networks run as one stacked network (parameter arrays with a leading
"component" axis).
"""
from __future__ import annotations

from collections.abc import Callable, Mapping

import numpy as np

from awml.errors import ContractError, OracleError, SchemaError
from awml.numcore.params import DTYPE, ParamSet


class Var:
    __slots__ = ("value", "grad", "parents", "backward_fn", "tape", "name", "extra")

    def __init__(self, value: np.ndarray, tape: Tape, parents=(), backward_fn=None, name=None):
        self.value = value
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.tape = tape
        self.name = name
        self.extra = None

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var({self.name or 'node'}, shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    def __init__(self):
        self.nodes: list[Var] = []
        self.leaves: dict[str, Var] = {}

    def watch(self, params: ParamSet, prefix: str = "") -> dict[str, Var]:
        """Register every entry of `params` as a leaf and return name -> Var."""
        out = {}
        for name, value in params.items():
            key = prefix + name
            if key in self.leaves:
                raise SchemaError(f"duplicate leaf {key!r}")
            v = Var(value, self, name=key)
            self.leaves[key] = v
            self.nodes.append(v)
            out[name] = v
        return out

    def _node(self, value, parents, backward_fn) -> Var:
        v = Var(value, self, parents, backward_fn)
        self.nodes.append(v)
        return v


def _tape_of(*xs) -> Tape | None:
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    return None


def _val(x):
    return x.value if isinstance(x, Var) else x


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _make(value, inputs, backward_fn):
    """Record a node whose backward maps the output grad to one grad per input."""
    tape = _tape_of(*inputs)
    if tape is None:
        return value
    return tape._node(value, tuple(inputs), backward_fn)


# elementwise / linear algebra ------------------------------------------------

def add(a, b):
    av, bv = _val(a), _val(b)
    out = av + bv
    return _make(out, (a, b), lambda g: (_unbroadcast(g, np.shape(av)), _unbroadcast(g, np.shape(bv))))


def sub(a, b):
    av, bv = _val(a), _val(b)
    out = av - bv
    return _make(out, (a, b), lambda g: (_unbroadcast(g, np.shape(av)), _unbroadcast(-g, np.shape(bv))))


def mul(a, b):
    av, bv = _val(a), _val(b)
    out = av * bv
    return _make(out, (a, b), lambda g: (_unbroadcast(g * bv, np.shape(av)), _unbroadcast(g * av, np.shape(bv))))


def matmul(a, b):
    av, bv = _val(a), _val(b)
    out = av @ bv

    def bw(g):
        ga = g @ np.swapaxes(bv, -1, -2) if bv.ndim > 1 else np.multiply.outer(g, bv)
        gb = np.swapaxes(av, -1, -2) @ g if av.ndim > 1 else np.multiply.outer(av, g)
        return _unbroadcast(ga, av.shape), _unbroadcast(gb, bv.shape)

    return _make(out, (a, b), bw)


def affine(x, W, b):
    """x @ W + b with b broadcast over the batch axis (b has W's leading dims)."""
    xv, Wv, bv = _val(x), _val(W), _val(b)
    bb = bv[..., None, :] if bv.ndim > 1 else bv
    out = xv @ Wv + bb

    def bw(g):
        gx = g @ np.swapaxes(Wv, -1, -2)
        gW = _unbroadcast(np.swapaxes(xv, -1, -2) @ g, Wv.shape)
        gb = _unbroadcast(g.sum(axis=-2, keepdims=bv.ndim > 1), bb.shape).reshape(bv.shape)
        return _unbroadcast(gx, xv.shape), gW, gb

    return _make(out, (x, W, b), bw)


def tanh(x):
    y = np.tanh(_val(x))
    return _make(y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid_np(z: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def sigmoid(x):
    y = sigmoid_np(np.asarray(_val(x)))
    return _make(y, (x,), lambda g: (g * y * (1.0 - y),))


def square(x):
    xv = _val(x)
    return _make(xv * xv, (x,), lambda g: (2.0 * g * xv,))


def total(x, axis=None):
    """Sum reduction."""
    xv = _val(x)
    out = np.sum(xv, axis=axis)

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, xv.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), xv.shape).copy(),)

    return _make(np.asarray(out), (x,), bw)


def mean(x, axis=None):
    xv = _val(x)
    n = xv.size if axis is None else xv.shape[axis]
    return mul(total(x, axis), 1.0 / n)


def scale(x, c: float):
    return mul(x, c)


def norm2(x):
    """Euclidean norm over the last axis; zero vectors get gradient 0."""
    xv = _val(x)
    n = np.sqrt(np.sum(xv * xv, axis=-1))

    def bw(g):
        safe = np.where(n > 0, n, 1.0)
        gx = np.where((n > 0)[..., None], xv / safe[..., None], 0.0) * g[..., None]
        return (gx,)

    return _make(n, (x,), bw)


def bce_logits(z, y):
    """Elementwise binary cross-entropy of sigmoid(z) against targets y in [0, 1]."""
    zv = _val(z)
    yv = np.asarray(_val(y), dtype=zv.dtype)
    out = np.maximum(zv, 0.0) - zv * yv + np.log1p(np.exp(-np.abs(zv)))

    def bw(g):
        return (g * (sigmoid_np(zv) - yv), None)

    return _make(out, (z, y), bw)


def getitem(x, index):
    xv = _val(x)
    out = xv[index]

    basic = all(isinstance(i, (slice, int, type(Ellipsis))) for i in (index if isinstance(index, tuple) else (index,)))

    def bw(g):
        gx = np.zeros_like(xv)
        if basic:
            gx[index] = g
        else:
            np.add.at(gx, index, g)
        return (gx,)

    return _make(np.array(out), (x,), bw)


def pick(x, idx: np.ndarray):
    """x[b, idx[b]] for a (B, K) input."""
    rows = np.arange(_val(x).shape[0])
    return getitem(x, (rows, np.asarray(idx)))


def reshape(x, shape):
    xv = _val(x)
    return _make(xv.reshape(shape), (x,), lambda g: (g.reshape(xv.shape),))


# recurrent -----------------------------------------------------------------

def lstm_seq(x, Wx, Wh, b, h0=None, c0=None):
    """Run one LSTM layer over a whole sequence.

    x: (T, ..., B, D). Wx: (..., D, 4H), Wh: (..., H, 4H), b: (..., 4H).
    Gate layout in the 4H axis is [input, forget, output, cell candidate].
    Returns hidden states (T, ..., B, H); the final (h, c) pair is attached
    as `.extra` on the returned Var (or returned alongside for constants).
    Backward is full-length BPTT.
    """
    if _tape_of(x, Wx, Wh, b) is None:
        return _lstm_infer(x, Wx, Wh, b, h0, c0)
    xv, Wxv, Whv, bv = _val(x), _val(Wx), _val(Wh), _val(b)
    T = xv.shape[0]
    H = Whv.shape[-2]
    D = Wxv.shape[-2]
    lead = Whv.shape[:-2]
    state_shape = xv.shape[1:-1] + (H,)
    dt = Whv.dtype
    h = np.zeros(state_shape, dtype=dt) if h0 is None else np.asarray(h0, dtype=dt)
    c = np.zeros(state_shape, dtype=dt) if c0 is None else np.asarray(c0, dtype=dt)
    h_init, c_init = h, c

    # gate axis in front of the batch axis keeps each gate block contiguous
    Wx4 = np.ascontiguousarray(np.moveaxis(Wxv.reshape(lead + (D, 4, H)), -2, -3))
    Wh4 = np.ascontiguousarray(np.moveaxis(Whv.reshape(lead + (H, 4, H)), -2, -3))
    b4 = bv.reshape(lead + (4, 1, H))

    xz = xv[..., None, :, :] @ Wx4 + b4  # (T, ..., 4, B, H)
    gates = np.empty_like(xz)
    hs = np.empty((T,) + state_shape, dtype=dt)
    cs = np.empty((T,) + state_shape, dtype=dt)
    for t in range(T):
        z = xz[t] + h[..., None, :, :] @ Wh4
        gt = gates[t]
        gt[..., :3, :, :] = sigmoid_np(z[..., :3, :, :])
        gt[..., 3, :, :] = np.tanh(z[..., 3, :, :])
        c = gt[..., 1, :, :] * c + gt[..., 0, :, :] * gt[..., 3, :, :]
        h = gt[..., 2, :, :] * np.tanh(c)
        hs[t] = h
        cs[t] = c

    def bw(gh_seq):
        dz = np.empty_like(gates)
        dh_next = np.zeros(state_shape, dtype=dt)
        dc_next = np.zeros(state_shape, dtype=dt)
        Wh4T = np.ascontiguousarray(np.swapaxes(Wh4, -1, -2))
        for t in range(T - 1, -1, -1):
            gt = gates[t]
            i, f, o, g = gt[..., 0, :, :], gt[..., 1, :, :], gt[..., 2, :, :], gt[..., 3, :, :]
            tc = np.tanh(cs[t])
            dh = gh_seq[t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            c_prev = cs[t - 1] if t > 0 else c_init
            dzt = dz[t]
            dzt[..., 0, :, :] = dc * g * i * (1.0 - i)
            dzt[..., 1, :, :] = dc * c_prev * f * (1.0 - f)
            dzt[..., 2, :, :] = dh * tc * o * (1.0 - o)
            dzt[..., 3, :, :] = dc * i * (1.0 - g * g)
            dc_next = dc * f
            dh_next = (dzt @ Wh4T).sum(axis=-3)
        h_prevs = np.concatenate([h_init[None], hs[:-1]], axis=0)
        gWh4 = _unbroadcast(np.swapaxes(h_prevs, -1, -2)[..., None, :, :] @ dz, Wh4.shape)
        gWx4 = _unbroadcast(np.swapaxes(xv, -1, -2)[..., None, :, :] @ dz, Wx4.shape)
        gWh = np.moveaxis(gWh4, -3, -2).reshape(Whv.shape)
        gWx = np.moveaxis(gWx4, -3, -2).reshape(Wxv.shape)
        gb = _unbroadcast(dz.sum(axis=-2, keepdims=True), b4.shape).reshape(bv.shape)
        gx = (dz @ np.swapaxes(Wx4, -1, -2)).sum(axis=-3)
        return _unbroadcast(gx, xv.shape), gWx, gWh, gb

    out = _make(hs, (x, Wx, Wh, b), bw)
    if isinstance(out, Var):
        out.extra = (h, c)
        return out
    return hs, (h, c)


def _lstm_infer(x, Wx, Wh, b, h0=None, c0=None):
    """Forward-only `lstm_seq`; same arithmetic up to rounding, fewer array ops.

    sigmoid(z) = 0.5 + 0.5 tanh(z / 2), so halving the i, f, o columns lets a
    single tanh evaluate all four gates.
    """
    H = Wh.shape[-2]
    dt = Wh.dtype
    half = np.ones(4 * H, dtype=dt)
    half[:3 * H] = 0.5
    x = np.asarray(x, dtype=dt)
    state_shape = x.shape[1:-1] + (H,)
    h = np.zeros(state_shape, dtype=dt) if h0 is None else np.asarray(h0, dtype=dt)
    c = np.zeros(state_shape, dtype=dt) if c0 is None else np.asarray(c0, dtype=dt)
    Whs = Wh * half
    xz = (x @ (Wx * half) + (b * half)[..., None, :])
    hs = np.empty((x.shape[0],) + state_shape, dtype=dt)
    for t in range(x.shape[0]):
        z = np.tanh(xz[t] + h @ Whs)
        ifo = 0.5 + 0.5 * z[..., :3 * H]
        c = ifo[..., H:2 * H] * c + ifo[..., :H] * z[..., 3 * H:]
        h = ifo[..., 2 * H:] * np.tanh(c)
        hs[t] = h
    return hs, (h, c)


# backward ------------------------------------------------------------------

def backward(tape: Tape, loss: Var, params: ParamSet | None = None, prefix: str = "") -> ParamSet:
    """Gradients of scalar `loss` w.r.t. the leaves of `tape`.

    With `params`, the result follows that set's schema (leaves registered
    under `prefix`); otherwise it covers every leaf in registration order.
    Leaves with no path to the loss get zeros.
    """
    if not isinstance(loss, Var) or loss.tape is not tape:
        raise ContractError("loss must be a Var recorded on this tape")
    if np.size(loss.value) != 1:
        raise ContractError(f"loss must be scalar, got shape {np.shape(loss.value)}")
    for node in tape.nodes:
        node.grad = None
    loss.grad = np.ones_like(loss.value)
    for node in reversed(tape.nodes):
        if node.grad is None or node.backward_fn is None:
            continue
        pgrads = node.backward_fn(node.grad)
        for p, g in zip(node.parents, pgrads):
            if isinstance(p, Var) and g is not None:
                p.grad = g if p.grad is None else p.grad + g
    if params is None:
        out = ParamSet()
        for name, leaf in tape.leaves.items():
            out[name] = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value)
        return out
    out = ParamSet()
    for name, value in params.items():
        leaf = tape.leaves.get(prefix + name)
        if leaf is None:
            raise SchemaError(f"parameter {prefix + name!r} was not watched on this tape")
        out[name] = leaf.grad if leaf.grad is not None else np.zeros_like(value)
    return out


def finite_diff_grad(f: Callable[[ParamSet], float], params: ParamSet, h: float = 1e-5) -> ParamSet:
    """Central differences (f(p + h e_i) - f(p - h e_i)) / 2h for every coordinate."""
    probe = params.copy()
    out = params.zeros_like()
    k = 0
    for name, arr in probe.items():
        flat = arr.reshape(-1)
        gflat = out[name].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            fp = float(f(probe))
            flat[j] = orig - h
            fm = float(f(probe))
            flat[j] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise OracleError(f"non-finite probe at coordinate {k} ({name}[{j}])")
            gflat[j] = (fp - fm) / (2.0 * h)
            k += 1
    return out


def max_rel_error(a: ParamSet, b: ParamSet, floor: float = 1e-6) -> float:
    """max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)."""
    fa, fb = a.flat(), b.flat()
    denom = np.maximum(np.maximum(np.abs(fa), np.abs(fb)), floor)
    return float(np.max(np.abs(fa - fb) / denom)) if fa.size else 0.0


def as_leaves(params: ParamSet, tape: Tape | None, prefix: str = "") -> Mapping[str, object]:
    return tape.watch(params, prefix) if tape is not None else dict(params.items())
