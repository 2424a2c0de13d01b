from awml.numcore.autodiff import Tape, Var, backward, finite_diff_grad, max_rel_error
from awml.numcore.checkpoint import load_params, save_params
from awml.numcore.layers import forward_lstm_mlp, forward_mlp, init_lstm_mlp, init_mlp
from awml.numcore.optim import AdamState, adam_step
from awml.numcore.params import ParamSet, distance, ema_blend, ema_blend_, snapshot

__all__ = [
    "AdamState", "ParamSet", "Tape", "Var", "adam_step", "backward", "distance", "ema_blend",
    "ema_blend_", "finite_diff_grad", "forward_lstm_mlp", "forward_mlp", "init_lstm_mlp",
    "init_mlp", "load_params", "max_rel_error", "save_params", "snapshot",
]
