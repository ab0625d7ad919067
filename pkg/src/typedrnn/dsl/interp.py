"""Numeric reference interpreter for cell specs.

Executes one step of a spec with explicit parameter tensors, independent of
the native cell implementations, so the two can be cross-checked. Parameters
are keyed by affine node: ``affine#3.W0``, ``affine#3.W1``, ... for the
per-operand matrices of a general node, ``affine#3.d`` for a diagonal
vector, ``affine#3.a`` for a scalar kind, ``affine#3.b`` for a bias; scale
factors written ``scale[alpha]`` look up ``alpha`` directly.

Symmetric and orthogonal matrices are validated numerically at use (a
symmetric kind must equal its transpose; an orthogonal kind must satisfy
W^T W = I within 1e-8), since the type checker can only trust the
declaration.
"""

from __future__ import annotations

import numpy as np

from .nodes import Affine, Binary, CellSpec, Const, Expr, Gate, Ref, Unary
from .typesys import MatrixKind

__all__ = ["InterpError", "interpret_step"]


class InterpError(Exception):
    """Shape mismatch, missing parameter, or invalid matrix at evaluation."""


def _param(params: dict, key: str, span) -> np.ndarray:
    try:
        return np.asarray(params[key], dtype=np.float64)
    except KeyError:
        raise InterpError(f"{span}: missing parameter {key!r}") from None


def _eval_affine(e: Affine, params: dict, values: list[np.ndarray]) -> np.ndarray:
    key = e.name
    if e.kind in (MatrixKind.GENERAL, MatrixKind.SYMMETRIC, MatrixKind.ORTHOGONAL):
        out = None
        for j, v in enumerate(values):
            w = _param(params, f"{key}.W{j}", e.span)
            if w.ndim != 2 or w.shape[1] != v.shape[0]:
                raise InterpError(
                    f"{e.span}: {key}.W{j} has shape {w.shape}, operand has "
                    f"length {v.shape[0]}"
                )
            if e.kind == MatrixKind.SYMMETRIC and not np.array_equal(w, w.T):
                raise InterpError(f"{e.span}: {key} declared symmetric but W != W^T")
            if e.kind == MatrixKind.ORTHOGONAL:
                if w.shape[0] != w.shape[1] or not np.allclose(
                    w.T @ w, np.eye(w.shape[0]), atol=1e-8
                ):
                    raise InterpError(
                        f"{e.span}: {key} declared orthogonal but W^T W != I"
                    )
            term = w @ v
            out = term if out is None else out + term
    elif e.kind == MatrixKind.DIAGONAL:
        d = _param(params, f"{key}.d", e.span)
        v = values[0]
        if d.shape != v.shape:
            raise InterpError(
                f"{e.span}: {key}.d has shape {d.shape}, operand {v.shape}"
            )
        out = d * v
    elif e.kind == MatrixKind.SCALAR:
        a = _param(params, f"{key}.a", e.span)
        if a.ndim != 0:
            raise InterpError(f"{e.span}: {key}.a must be a scalar")
        out = float(a) * values[0]
    else:
        raise InterpError(f"{e.span}: unknown matrix kind {e.kind}")
    if e.has_bias:
        b = _param(params, f"{key}.b", e.span)
        if b.shape != out.shape:
            raise InterpError(
                f"{e.span}: {key}.b has shape {b.shape}, output {out.shape}"
            )
        out = out + b
    return out


def interpret_step(
    spec: CellSpec,
    params: dict,
    state: dict[str, np.ndarray],
    inputs: dict[str, np.ndarray],
) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Evaluate one step. Returns (next_state, bindings): next_state maps each
    state port to its primed value; bindings maps every statement lhs
    (including primed names) to its value."""
    env: dict[str, np.ndarray] = {}
    for p in spec.states():
        if p.name not in state:
            raise InterpError(f"missing state value for {p.name!r}")
        env[p.name] = np.asarray(state[p.name], dtype=np.float64)
    for p in spec.inputs():
        if p.name not in inputs:
            raise InterpError(f"missing input value for {p.name!r}")
        env[p.name] = np.asarray(inputs[p.name], dtype=np.float64)

    def ev(e: Expr) -> np.ndarray:
        if isinstance(e, Ref):
            try:
                return env[e.name]
            except KeyError:
                raise InterpError(f"{e.span}: unbound name {e.name!r}") from None
        if isinstance(e, Const):
            return np.float64(e.value)
        if isinstance(e, Unary):
            v = ev(e.operand)
            if e.op == "sigmoid":
                z = np.exp(-np.abs(v))
                return np.where(v >= 0.0, 1.0 / (1.0 + z), z / (1.0 + z))
            if e.op == "tanh":
                return np.tanh(v)
            if e.op == "relu":
                return np.maximum(v, 0.0)
            if e.op == "scale":
                f = e.factor
                if f.param is not None:
                    a = float(_param(params, f.param, e.span))
                else:
                    a = f.literal
                if f.complemented:
                    a = 1.0 - a
                return a * v
            raise InterpError(f"{e.span}: unknown unary {e.op!r}")
        if isinstance(e, Binary):
            l, r = ev(e.left), ev(e.right)
            if l.ndim and r.ndim and l.shape != r.shape:
                raise InterpError(
                    f"{e.span}: operand shapes differ: {l.shape} vs {r.shape}"
                )
            if e.op == "+":
                return l + r
            if e.op == "-":
                return l - r
            if e.op == "max":
                return np.maximum(l, r)
            if e.op == "min":
                return np.minimum(l, r)
            raise InterpError(f"{e.span}: unknown binary {e.op!r}")
        if isinstance(e, Gate):
            l, r = ev(e.left), ev(e.right)
            if l.shape != r.shape:
                raise InterpError(
                    f"{e.span}: gate shapes differ: {l.shape} vs {r.shape}"
                )
            return l * r
        if isinstance(e, Affine):
            values = [ev(op) for op in e.operands]
            for j, v in enumerate(values):
                if v.ndim != 1:
                    raise InterpError(
                        f"{e.span}: affine operand {j} is not a vector"
                    )
            return _eval_affine(e, params, values)
        raise InterpError(f"unknown node {type(e).__name__}")

    bindings: dict[str, np.ndarray] = {}
    for s in spec.stmts:
        val = ev(s.expr)
        env[s.lhs] = val
        bindings[s.lhs] = val
    next_state = {p.name: bindings[p.name + "'"] for p in spec.states()}
    return next_state, bindings
