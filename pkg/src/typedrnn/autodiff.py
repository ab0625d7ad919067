"""Hand-written backpropagation through time, with a finite-difference oracle.

Every cell's backward pass is derived by hand from the update rules in
``cells`` and consumes the tape recorded by ``sequence_forward``. Gradients
are exact reverse-mode derivatives of the float64 forward computation, which
is what the central-difference oracle ``finite_diff`` checks them against.

Conventions: upstream gradients arrive per output step as dH (T, B, h);
``dh_final`` / ``dc_final`` inject gradient on the state carried out of the
window (used for Jacobian probes and window chaining). Gradients with respect
to inputs come back in two pieces for T-LSTM / T-GRU: ``dX`` for the W-side
sequence and ``dX_prev`` for the shifted V-side stream, because a dropout
mask may sit between the two views of the same lower-layer output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cells import (
    CellKind,
    CellParams,
    LayerTape,
    StackTape,
    T_CELL_KINDS,
    sequence_forward,
    stacked_learnware,
)

__all__ = [
    "Grads",
    "bptt",
    "clip_global_norm",
    "finite_diff",
    "global_norm",
    "sequence_backward",
    "stack_backward",
    "state_jacobian",
]


@dataclass
class Grads:
    """Result of one backward sweep over a layer."""

    params: dict[str, np.ndarray]
    dX: np.ndarray
    dX_prev: np.ndarray | None = None
    dh0: np.ndarray | None = None
    dc0: np.ndarray | None = None

    def combined_input_grad(self) -> tuple[np.ndarray, np.ndarray | None]:
        """Total gradient w.r.t. the raw input sequence, for the common case
        where the W-side and V-side read the same array (no dropout between).

        Returns (dX_total, dxp0) where dxp0 is the gradient on the boundary
        input x_0^prev from before the window (None for non-T cells).
        """
        if self.dX_prev is None:
            return self.dX, None
        total = self.dX.copy()
        total[:-1] += self.dX_prev[1:]
        return total, self.dX_prev[0].copy()


def _fold(D: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Sum of per-step outer products: (T,B,h),(T,B,d) -> (h,d)."""
    T, B, h = D.shape
    return D.reshape(T * B, h).T @ X.reshape(T * B, -1)


def _unfold(D: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Push per-step deltas through a matrix: (T,B,h) @ (h,d) -> (T,B,d)."""
    T, B, h = D.shape
    return (D.reshape(T * B, h) @ M).reshape(T, B, M.shape[1])


def sequence_backward(
    params: CellParams,
    tape: LayerTape,
    dH: np.ndarray,
    dh_final: np.ndarray | None = None,
    dc_final: np.ndarray | None = None,
) -> Grads:
    """Backward sweep of one layer. ``dH[t]`` is the upstream gradient on the
    layer's output at step t; gradients are truncated at the window boundary
    (nothing flows into the carried-in state except out through dh0 / dc0).
    """
    kind = params.kind
    dH = np.asarray(dH, dtype=np.float64)
    T, B, h = dH.shape
    zero = np.zeros((B, h))
    gh = zero if dh_final is None else np.asarray(dh_final, dtype=np.float64)
    gc = zero if dc_final is None else np.asarray(dc_final, dtype=np.float64)

    if kind == CellKind.T_RNN:
        H, F, Z, X = tape.H, tape.F, tape.Z, tape.X
        G = np.empty_like(F)  # accumulated output gradient at each step
        g = gh.copy()
        for t in range(T - 1, -1, -1):
            np.add(dH[t], g, out=G[t])
            np.multiply(G[t], F[t], out=g)
        d = params.input_dim
        DP = np.empty((T, B, 2 * h))
        dZ = DP[..., :h]
        dPf = DP[..., h:]
        np.subtract(1.0, F, out=dZ)
        dZ *= G
        np.subtract(H[:-1], Z, out=dPf)
        dPf *= G
        dPf *= F
        dPf *= 1.0 - F
        U, _ = stacked_learnware(params)
        D2 = DP.reshape(T * B, 2 * h)
        gU = D2.T @ X.reshape(T * B, d)
        grads = {
            "W": gU[:h].copy(),
            "V": gU[h:].copy(),
            "b": dPf.sum(axis=(0, 1)),
        }
        dX = (D2 @ U).reshape(T, B, d)
        return Grads(grads, dX, dh0=g)

    if kind in T_CELL_KINDS:
        F, Z, O, XX = tape.F, tape.Z, tape.O, tape.XX
        DP = np.empty((T, B, 3 * h))
        dPz = DP[..., :h]
        dPf = DP[..., h : 2 * h]
        dPo = DP[..., 2 * h :]
        if kind == CellKind.T_LSTM:
            C = tape.C
            DC = np.empty_like(F)  # gradient on c_t at each step
            DHO = dH * O
            dc = gc.copy()
            for t in range(T - 1, -1, -1):
                np.add(DHO[t], dc, out=DC[t])
                np.multiply(DC[t], F[t], out=dc)
            np.subtract(1.0, F, out=dPz)
            dPz *= DC
            np.subtract(C[:-1], Z, out=dPf)
            dPf *= DC
            np.multiply(dH, C[1:], out=dPo)
            boundary = {"dc0": dc}
        else:
            H = tape.H
            G = np.empty_like(F)  # accumulated output gradient at each step
            g = gh.copy()
            for t in range(T - 1, -1, -1):
                np.add(dH[t], g, out=G[t])
                np.multiply(G[t], F[t], out=g)
            np.multiply(G, O, out=dPz)
            np.multiply(G, H[:-1], out=dPf)
            np.multiply(G, Z, out=dPo)
            boundary = {"dh0": g}
        dPf *= F
        dPf *= 1.0 - F
        dPo *= 1.0 - O * O
        d = params.input_dim
        U, _ = stacked_learnware(params)
        D2 = DP.reshape(T * B, 3 * h)
        gU = D2.T @ XX.reshape(T * B, 2 * d)
        grads = {}
        for i, g_name in enumerate(("z", "f", "o")):
            block = gU[i * h : (i + 1) * h]
            grads[f"V_{g_name}"] = block[:, :d].copy()
            grads[f"W_{g_name}"] = block[:, d:].copy()
        grads["b_z"] = dPz.sum(axis=(0, 1))
        grads["b_f"] = dPf.sum(axis=(0, 1))
        grads["b_o"] = dPo.sum(axis=(0, 1))
        dXX = (D2 @ U).reshape(T, B, 2 * d)
        dXp = np.ascontiguousarray(dXX[..., :d])
        dX = np.ascontiguousarray(dXX[..., d:])
        grads = {k: grads[k] for k in params.tensors}
        return Grads(grads, dX, dX_prev=dXp, **boundary)

    if kind == CellKind.RNN:
        H, X = tape.H, tape.X
        V = params["V"]
        dP = np.empty((T, B, h))
        g = gh
        for t in range(T - 1, -1, -1):
            g = dH[t] + g
            dp = g * (1.0 - H[t + 1] * H[t + 1])
            dP[t] = dp
            g = dp @ V
        grads = {
            "V": _fold(dP, H[:-1]),
            "W": _fold(dP, X),
            "b": dP.sum(axis=(0, 1)),
        }
        return Grads(grads, _unfold(dP, params["W"]), dh0=g)

    if kind == CellKind.LSTM:
        H, C, F, Z, O, TC, X = tape.H, tape.C, tape.F, tape.Z, tape.O, tape.TC, tape.X
        Vz, Vf, Vo = params["V_z"], params["V_f"], params["V_o"]
        dPz = np.empty((T, B, h))
        dPf = np.empty((T, B, h))
        dPo = np.empty((T, B, h))
        g, dc = gh, gc
        for t in range(T - 1, -1, -1):
            g = dH[t] + g
            dO = g * TC[t]
            dct = g * O[t] * (1.0 - TC[t] * TC[t]) + dc
            dF = dct * (C[t] - Z[t])
            dZ = dct * (1.0 - F[t])
            dc = dct * F[t]
            dPz[t] = dZ * (1.0 - Z[t] * Z[t])
            dPf[t] = dF * F[t] * (1.0 - F[t])
            dPo[t] = dO * (1.0 - O[t] * O[t])
            g = dPz[t] @ Vz + dPf[t] @ Vf + dPo[t] @ Vo
        grads = {}
        dX = np.zeros_like(X)
        for g_name, dP in (("z", dPz), ("f", dPf), ("o", dPo)):
            grads[f"V_{g_name}"] = _fold(dP, H[:-1])
            grads[f"W_{g_name}"] = _fold(dP, X)
            grads[f"b_{g_name}"] = dP.sum(axis=(0, 1))
            dX += _unfold(dP, params[f"W_{g_name}"])
        grads = {k: grads[k] for k in params.tensors}
        return Grads(grads, dX, dh0=g, dc0=dc)

    if kind == CellKind.GRU:
        H, F, Z, O, G, X = tape.H, tape.F, tape.Z, tape.O, tape.G, tape.X
        Vz, Vf, Vo = params["V_z"], params["V_f"], params["V_o"]
        dPz = np.empty((T, B, h))
        dPf = np.empty((T, B, h))
        dPo = np.empty((T, B, h))
        g = gh
        for t in range(T - 1, -1, -1):
            g = dH[t] + g
            dF = g * (H[t] - O[t])
            dO = g * (1.0 - F[t])
            carry = g * F[t]
            dPo[t] = dO * (1.0 - O[t] * O[t])
            dG = dPo[t] @ Vo
            dZ = dG * H[t]
            carry = carry + dG * Z[t]
            dPz[t] = dZ * Z[t] * (1.0 - Z[t])
            dPf[t] = dF * F[t] * (1.0 - F[t])
            g = carry + dPz[t] @ Vz + dPf[t] @ Vf
        grads = {}
        dX = np.zeros_like(X)
        for g_name, dP, side in (
            ("z", dPz, H[:-1]),
            ("f", dPf, H[:-1]),
            ("o", dPo, G),
        ):
            grads[f"V_{g_name}"] = _fold(dP, side)
            grads[f"W_{g_name}"] = _fold(dP, X)
            grads[f"b_{g_name}"] = dP.sum(axis=(0, 1))
            dX += _unfold(dP, params[f"W_{g_name}"])
        grads = {k: grads[k] for k in params.tensors}
        return Grads(grads, dX, dh0=g)

    if kind == CellKind.T_MR:
        H, M, X = tape.H, tape.M, tape.X
        b = params["b"]
        dP = np.empty((T, B, h))
        g = gh
        for t in range(T - 1, -1, -1):
            g = dH[t] + g
            dP[t] = g * M[t]
            g = dP[t] * b
        grads = {
            "W": _fold(dP, X),
            "b": (dP * H[:-1]).sum(axis=(0, 1)),
            "c": dP.sum(axis=(0, 1)),
        }
        return Grads(grads, _unfold(dP, params["W"]), dh0=g)

    raise ValueError(f"sequence_backward does not handle kind {kind!r}")


def bptt(
    params: CellParams,
    X: np.ndarray,
    upstream: np.ndarray,
    h0: np.ndarray | None = None,
    c0: np.ndarray | None = None,
    xp0: np.ndarray | None = None,
) -> Grads:
    """Forward + backward over one window of a single layer.

    ``upstream`` is either the gradient on the final output h_T with shape
    (B, h) (or (h,) when X is unbatched (T, d)), or a full per-step array
    matching the output sequence. Returns parameter gradients and gradients
    on the inputs (see Grads.combined_input_grad for the single-array view).
    """
    X = np.asarray(X, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    squeeze = X.ndim == 2
    if squeeze:
        X = X[:, None, :]
        if h0 is not None:
            h0 = np.asarray(h0)[None, :]
        if c0 is not None:
            c0 = np.asarray(c0)[None, :]
        if xp0 is not None:
            xp0 = np.asarray(xp0)[None, :]
        if upstream.ndim == 1:
            upstream = upstream[None, :]
        elif upstream.ndim == 2:
            upstream = upstream[:, None, :]
    T = X.shape[0]
    out, tape = sequence_forward(params, X, h0=h0, c0=c0, xp0=xp0)
    if upstream.ndim == 2:
        dH = np.zeros_like(out)
        dH[T - 1] = upstream
    else:
        if upstream.shape != out.shape:
            raise ValueError(
                f"per-step upstream has shape {upstream.shape}, expected {out.shape}"
            )
        dH = upstream
    res = sequence_backward(params, tape, dH)
    if squeeze:
        res.dX = res.dX[:, 0, :]
        if res.dX_prev is not None:
            res.dX_prev = res.dX_prev[:, 0, :]
        if res.dh0 is not None:
            res.dh0 = res.dh0[0]
        if res.dc0 is not None:
            res.dc0 = res.dc0[0]
    return res


def stack_backward(
    layers: list[CellParams],
    tape: StackTape,
    dH_top: np.ndarray,
) -> tuple[list[dict[str, np.ndarray]], np.ndarray]:
    """Backward through a stack; returns per-layer grads and dX on the model
    input. Dropout masks recorded in the tape gate the W-side path between
    layers; the V-side (x_prev) path bypasses them, matching the forward.
    """
    upstream = np.asarray(dH_top, dtype=np.float64)
    per_layer: list[dict[str, np.ndarray]] = [None] * len(layers)  # type: ignore[list-item]
    for l in range(len(layers) - 1, -1, -1):
        res = sequence_backward(layers[l], tape.layer_tapes[l], upstream)
        per_layer[l] = res.params
        mask = tape.masks[l]
        down = res.dX if mask is None else res.dX * mask
        if res.dX_prev is not None:
            down = down.copy() if mask is None else down
            down[:-1] += res.dX_prev[1:]
        upstream = down
    return per_layer, upstream


# ---------------------------------------------------------------------------
# Oracles and gradient utilities
# ---------------------------------------------------------------------------


def finite_diff(params, loss_fn, eps: float = 1e-5) -> dict[str, np.ndarray]:
    """Central-difference gradient of ``loss_fn`` w.r.t. every tensor entry.

    ``params`` is a CellParams or a plain name->array dict; ``loss_fn`` must
    be deterministic and is called with a perturbed copy. O(P) forward passes
    at two evaluations each: an oracle, not a training tool.
    """
    is_cell = isinstance(params, CellParams)
    tensors = params.tensors if is_cell else params
    work = {k: np.array(v, dtype=np.float64) for k, v in tensors.items()}
    probe = CellParams(params.kind, params.input_dim, params.hidden_dim, work) \
        if is_cell else work
    grads: dict[str, np.ndarray] = {}
    for name, arr in work.items():
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"], op_flags=["readwrite"])
        while not it.finished:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + eps
            hi = loss_fn(probe)
            arr[idx] = orig - eps
            lo = loss_fn(probe)
            arr[idx] = orig
            g[idx] = (hi - lo) / (2.0 * eps)
            it.iternext()
        grads[name] = g
    return grads


def global_norm(grads: dict[str, np.ndarray]) -> float:
    """L2 norm over the concatenation of every gradient tensor."""
    total = 0.0
    for g in grads.values():
        total += float(np.sum(np.asarray(g, dtype=np.float64) ** 2))
    return float(np.sqrt(total))


def clip_global_norm(
    grads: dict[str, np.ndarray], max_norm: float | None
) -> tuple[dict[str, np.ndarray], float]:
    """Rescale all gradients so their joint L2 norm is at most ``max_norm``.

    Returns (grads, pre-clip norm). ``max_norm=None`` disables clipping and
    only reports the norm. Scaling is in place on the passed dict's arrays.
    """
    norm = global_norm(grads)
    if max_norm is not None:
        if max_norm <= 0:
            raise ValueError(f"clip threshold must be positive, got {max_norm}")
        if norm > max_norm and norm > 0.0:
            factor = max_norm / norm
            for g in grads.values():
                g *= factor
    return grads, norm


def state_jacobian(params: CellParams, X: np.ndarray) -> np.ndarray:
    """Jacobian of the carried state after T steps w.r.t. the initial state,
    for one unbatched input sequence X of shape (T, d).

    The carried state is h for every kind except T-LSTM, whose recurrence
    runs through c (h = c (*) o is pure output); there the Jacobian is
    dc_T / dc_0. Computed exactly, one backward pass per state coordinate.
    """
    X = np.asarray(X, dtype=np.float64)[:, None, :]
    h = params.hidden_dim
    _, tape = sequence_forward(params, X)
    J = np.empty((h, h))
    dH = np.zeros((X.shape[0], 1, h))
    for i in range(h):
        basis = np.zeros((1, h))
        basis[0, i] = 1.0
        if params.kind == CellKind.T_LSTM:
            res = sequence_backward(params, tape, dH, dc_final=basis)
            J[i] = res.dc0[0]
        else:
            res = sequence_backward(params, tape, dH, dh_final=basis)
            J[i] = res.dh0[0]
    return J
