"""Parameter layouts and forward passes for the networks used in the package.

Every builder accepts an optional `stack` count: parameters then carry a
leading axis of that size and the forward pass evaluates all stacked copies
at once (inputs shaped (..., stack, B, D)).
"""
from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from awml.errors import SchemaError, ValidationError
from awml.numcore import autodiff as ad
from awml.numcore.params import DTYPE, ParamSet, uniform_fan_in

FORGET_BIAS = 1.0


def _lead(stack: int | None) -> tuple[int, ...]:
    return () if stack is None else (stack,)


def init_lstm_mlp(rng: np.random.Generator, d_in: int, hidden: int, d_out: int,
                  mlp_hidden: int | None = None, stack: int | None = None) -> ParamSet:
    """Two LSTM layers followed by a two-layer tanh MLP head."""
    mlp_hidden = hidden if mlp_hidden is None else mlp_hidden
    lead = _lead(stack)
    p = ParamSet()
    d = d_in
    for layer in range(2):
        fan_in = d + hidden
        p[f"lstm{layer}.Wx"] = uniform_fan_in(rng, lead + (d, 4 * hidden), fan_in)
        p[f"lstm{layer}.Wh"] = uniform_fan_in(rng, lead + (hidden, 4 * hidden), fan_in)
        b = np.zeros(lead + (4 * hidden,), dtype=DTYPE)
        b[..., hidden:2 * hidden] = FORGET_BIAS
        p[f"lstm{layer}.b"] = b
        d = hidden
    p["mlp0.W"] = uniform_fan_in(rng, lead + (hidden, mlp_hidden), hidden)
    p["mlp0.b"] = np.zeros(lead + (mlp_hidden,), dtype=DTYPE)
    p["mlp1.W"] = uniform_fan_in(rng, lead + (mlp_hidden, d_out), mlp_hidden)
    p["mlp1.b"] = np.zeros(lead + (d_out,), dtype=DTYPE)
    return p


def init_mlp(rng: np.random.Generator, sizes: Sequence[int], stack: int | None = None) -> ParamSet:
    """Fully connected net; tanh between layers, linear output."""
    lead = _lead(stack)
    p = ParamSet()
    for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        p[f"fc{k}.W"] = uniform_fan_in(rng, lead + (a, b), a)
        p[f"fc{k}.b"] = np.zeros(lead + (b,), dtype=DTYPE)
    return p


def lstm_mlp_sizes(params: ParamSet) -> tuple[int, int, int]:
    """(d_in, hidden, d_out) of an LSTM+MLP parameter set."""
    try:
        d_in = params["lstm0.Wx"].shape[-2]
        hidden = params["lstm0.Wh"].shape[-2]
        d_out = params["mlp1.W"].shape[-1]
    except KeyError as e:
        raise SchemaError(f"not an LSTM+MLP parameter set: missing {e}") from None
    return d_in, hidden, d_out


def forward_lstm_mlp(params, seq, init_state=None, tape: ad.Tape | None = None, prefix: str = ""):
    """Stacked 2-layer LSTM then a per-timestep tanh MLP.

    `params` is a ParamSet (evaluated without recording) or the name -> Var
    mapping returned by `tape.watch`. `seq` is (T, ..., B, D_in). Returns
    (out (T, ..., B, D_out), final_state) where final_state is a list of
    per-layer (h, c) ndarray pairs.
    """
    P = params
    seq = np.asarray(seq, dtype=ad._val(P["lstm0.Wx"]).dtype)
    if seq.ndim < 2 or seq.shape[0] < 1:
        raise ValidationError("sequence must have at least one timestep")
    d_in = ad._val(P["lstm0.Wx"]).shape[-2]
    if seq.shape[-1] != d_in:
        raise SchemaError(f"input width {seq.shape[-1]} does not match parameters ({d_in})")
    if not np.all(np.isfinite(seq)):
        raise ValidationError("non-finite value in input sequence")
    init_state = init_state or [(None, None), (None, None)]
    h = seq
    final = []
    for layer in range(2):
        h0, c0 = init_state[layer]
        res = ad.lstm_seq(h, P[f"lstm{layer}.Wx"], P[f"lstm{layer}.Wh"], P[f"lstm{layer}.b"], h0, c0)
        if isinstance(res, ad.Var):
            h, state = res, res.extra
        else:
            h, state = res
        final.append(state)
    z = ad.tanh(ad.affine(h, P["mlp0.W"], P["mlp0.b"]))
    out = ad.affine(z, P["mlp1.W"], P["mlp1.b"])
    return out, final


def forward_mlp(params, x):
    """tanh hidden layers, linear output; `params` as in `forward_lstm_mlp`."""
    n = sum(1 for k in params.keys() if k.endswith(".W"))
    h = x
    for k in range(n):
        h = ad.affine(h, params[f"fc{k}.W"], params[f"fc{k}.b"])
        if k < n - 1:
            h = ad.tanh(h)
    return h


def lstm_cell(x, h, c, Wx, Wh, b):
    """One LSTM step on plain arrays; returns (h', c')."""
    H = Wh.shape[-2]
    z = x @ Wx + h @ Wh + b
    i = ad.sigmoid_np(z[..., :H])
    f = ad.sigmoid_np(z[..., H:2 * H])
    o = ad.sigmoid_np(z[..., 2 * H:3 * H])
    g = np.tanh(z[..., 3 * H:])
    c = f * c + i * g
    return o * np.tanh(c), c
