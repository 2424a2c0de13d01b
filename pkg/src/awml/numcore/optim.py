from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from awml.numcore.params import ParamSet, check_schema


@dataclass
class AdamState:
    m: ParamSet
    v: ParamSet
    t: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps_num: float = 1e-8

    @classmethod
    def for_params(cls, params: ParamSet, lr: float = 1e-4, beta1: float = 0.9,
                   beta2: float = 0.999, eps_num: float = 1e-8) -> AdamState:
        return cls(params.zeros_like(), params.zeros_like(), 0, lr, beta1, beta2, eps_num)

    def copy(self) -> AdamState:
        return AdamState(self.m.copy(), self.v.copy(), self.t, self.lr, self.beta1, self.beta2, self.eps_num)


def adam_step(state: AdamState, params: ParamSet, grads: ParamSet) -> tuple[ParamSet, AdamState]:
    """Bias-corrected Adam; updates `params` and `state` in place and returns both."""
    check_schema(params, grads)
    check_schema(params, state.m)
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps_num)
    return params, state
