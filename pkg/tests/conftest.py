"""Shared helpers for drawing random cell instances in tests."""

import numpy as np

from typedrnn.cells import CellKind, CellParams, param_shapes, sequence_forward

TRAIN_KINDS = (
    CellKind.RNN,
    CellKind.LSTM,
    CellKind.GRU,
    CellKind.T_RNN,
    CellKind.T_LSTM,
    CellKind.T_GRU,
    CellKind.T_MR,
)

T_KINDS = (CellKind.T_RNN, CellKind.T_LSTM, CellKind.T_GRU)


def rand_params(kind, input_dim, hidden, rng, lo=-0.6, hi=0.6):
    """Dense random parameters; alpha is drawn strictly inside (0, 1)."""
    kind = CellKind(kind)
    tensors = {}
    for name, shape in param_shapes(kind, input_dim, hidden).items():
        if kind == CellKind.SCRN_STATE and name == "alpha":
            tensors[name] = np.array(rng.uniform(0.2, 0.8))
        else:
            tensors[name] = rng.uniform(lo, hi, size=shape)
    return CellParams(kind, input_dim, hidden, tensors)


def tmr_margin(params, X):
    """Smallest |pre-activation| seen on a T-MR run (distance to the relu
    kink, where finite differences are not trustworthy)."""
    _, tape = sequence_forward(params, X)
    pre = tape.H[:-1] * params["b"] + X @ params["W"].T + params["c"]
    return float(np.min(np.abs(pre)))


def draw_instance(kind, rng, h_max=8, t_max=20, d_max=6, margin=1e-3):
    """Random (params, X) with X of shape (T, 1, d). T-MR draws are rejected
    until every pre-activation sits at least ``margin`` from the relu kink,
    so finite differences stay on one side of it."""
    kind = CellKind(kind)
    for _ in range(64):
        h = int(rng.integers(2, h_max + 1))
        d = int(rng.integers(2, d_max + 1))
        T = int(rng.integers(2, t_max + 1))
        params = rand_params(kind, d, h, rng)
        X = rng.uniform(-1.0, 1.0, size=(T, 1, d))
        if kind != CellKind.T_MR or tmr_margin(params, X) > margin:
            return params, X
    raise RuntimeError("could not draw a T-MR instance away from the kink")
