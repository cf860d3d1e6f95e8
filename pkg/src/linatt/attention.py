"""Attention evaluators: quadratic baseline, scaled-linear, sketched baseline,
and the factorized-softmax variant, plus its analytic backward pass.

The factorized variant applies softmax separately to the query factor and the
sketched key factor and multiplies right-to-left, ``H @ (L @ X)``, so no
``n x n`` matrix is ever formed.  Softmax here follows the column convention
(every column sums to 1); the quadratic baseline keeps the conventional row
softmax so it remains the recognized reference point.  The divergence is
intentional and fixed, not configurable.

Every evaluator accepts an optional allocation ``tracker`` (see
:mod:`linatt.bench`) that records the high-water mark of live matrix buffers;
``None`` keeps the hot path untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import (
    ShapeError,
    as_matrix,
    matmul,
    softmax_columns,
    softmax_rows,
)
from .projections import ProjectionPair
from .rng import RngStream, gaussian_matrix

__all__ = [
    "AttentionParams",
    "AttentionInput",
    "FactorizationTrace",
    "Gradients",
    "vanilla_attention",
    "scaled_linear_attention",
    "context_map",
    "approx_context_map",
    "factorized_attention",
    "linformer_attention",
    "factorized_attention_backward",
]

_CONTEXT_MAP_CAP = 2048  # context_map materializes an n x n matrix


@dataclass(frozen=True)
class AttentionParams:
    """The trainable maps: three ``d_model x d_k`` weight matrices."""

    Wq: np.ndarray
    Wk: np.ndarray
    Wv: np.ndarray
    d_model: int
    d_k: int

    def __post_init__(self):
        expected = (self.d_model, self.d_k)
        for name in ("Wq", "Wk", "Wv"):
            w = getattr(self, name)
            if w.shape != expected:
                raise ShapeError(
                    f"AttentionParams.{name}: expected shape {expected}, got {w.shape}"
                )

    @classmethod
    def random(cls, d_model: int, d_k: int, rng: RngStream) -> "AttentionParams":
        """Weights drawn N(0, 1/d_model) so projected rows keep unit scale."""
        var = 1.0 / d_model
        return cls(
            Wq=gaussian_matrix(d_model, d_k, var, rng),
            Wk=gaussian_matrix(d_model, d_k, var, rng),
            Wv=gaussian_matrix(d_model, d_k, var, rng),
            d_model=d_model,
            d_k=d_k,
        )


@dataclass(frozen=True)
class AttentionInput:
    """Query, key, and value sequences, each ``n x d_model``."""

    Q: np.ndarray
    K: np.ndarray
    V: np.ndarray
    n: int

    def __post_init__(self):
        for name in ("Q", "K", "V"):
            m = getattr(self, name)
            if m.ndim != 2 or m.shape[0] != self.n or m.shape != self.Q.shape:
                raise ShapeError(
                    f"AttentionInput.{name}: expected shape {(self.n, self.Q.shape[1])},"
                    f" got {m.shape}"
                )

    @classmethod
    def random(cls, n: int, d_model: int, rng: RngStream) -> "AttentionInput":
        return cls(
            Q=gaussian_matrix(n, d_model, 1.0, rng),
            K=gaussian_matrix(n, d_model, 1.0, rng),
            V=gaussian_matrix(n, d_model, 1.0, rng),
            n=n,
        )


@dataclass
class Gradients:
    """Gradients of a scalar functional of the factorized output."""

    dWq: np.ndarray
    dWk: np.ndarray
    dWv: np.ndarray
    dQ: np.ndarray
    dK: np.ndarray
    dV: np.ndarray


@dataclass
class FactorizationTrace:
    """Named intermediates of the factorized evaluation, for introspection.

    ``A`` (n x d_k) and ``B`` (d_k x n) are the scaled query and key scores;
    ``H`` = column softmax of ``A``; ``L`` (d_k x k) and ``X`` (k x d_k) are
    the sketched key softmax and sketched value map.  ``DA_diag``/``DB_diag``
    are the raw column sums of exp(A)/exp(B) — the diagonal normalizers the
    column softmax divides by.  ``P`` and ``P_tilde`` are only materialized
    by :func:`context_map` / :func:`approx_context_map`.
    """

    A: np.ndarray | None = None
    B: np.ndarray | None = None
    H: np.ndarray | None = None
    L: np.ndarray | None = None
    X: np.ndarray | None = None
    P: np.ndarray | None = None
    P_tilde: np.ndarray | None = None
    DA_diag: np.ndarray | None = None
    DB_diag: np.ndarray | None = None


class _NullTracker:
    def add(self, *arrays):
        pass

    def drop(self, *arrays):
        pass


_NULL = _NullTracker()


def _check_order(order: str) -> str:
    if order not in ("left", "right"):
        raise ValueError(f"order must be 'left' or 'right', got {order!r}")
    return order


def _projected(inp: AttentionInput, p: AttentionParams, t) -> tuple:
    q = matmul(inp.Q, p.Wq)
    k = matmul(inp.K, p.Wk)
    v = matmul(inp.V, p.Wv)
    t.add(q, k, v)
    return q, k, v


def vanilla_attention(inp: AttentionInput, p: AttentionParams, tracker=None) -> np.ndarray:
    """Row-softmax attention with the full ``n x n`` score matrix.

    Materializing the quadratic intermediate is the point: this is the
    reference both for output values and for the O(n^2) cost row of the
    benchmark table.
    """
    t = tracker or _NULL
    t.add(inp.Q, inp.K, inp.V)
    q, k, v = _projected(inp, p, t)
    scores = matmul(q, k.T)
    scores *= 1.0 / math.sqrt(p.d_k)
    t.add(scores)
    t.drop(q, k)
    weights = softmax_rows(scores)
    t.add(weights)
    t.drop(scores)
    out = matmul(weights, v)
    t.add(out)
    t.drop(weights, v, inp.Q, inp.K, inp.V, out)
    return out


def scaled_linear_attention(
    inp: AttentionInput, p: AttentionParams, order: str = "left", tracker=None
) -> np.ndarray:
    """Attention with the softmax replaced by the scaling map x -> x/n.

    ``order='left'`` evaluates ``(QWq (KWk)^T / n) VWv`` with the quadratic
    intermediate; ``order='right'`` pushes ``1/sqrt(n)`` onto each factor and
    reassociates to ``(QWq/sqrt(n)) ((KWk)^T/sqrt(n) VWv)``, which is linear
    in ``n``.  Scalar commutativity makes the two algebraically identical;
    the contract is agreement within 1e-9 relative Frobenius.
    """
    _check_order(order)
    t = tracker or _NULL
    t.add(inp.Q, inp.K, inp.V)
    q, k, v = _projected(inp, p, t)
    n = inp.n
    if order == "left":
        scores = matmul(q, k.T)
        scores *= 1.0 / n
        t.add(scores)
        t.drop(q, k)
        out = matmul(scores, v)
        t.add(out)
        t.drop(scores, v, inp.Q, inp.K, inp.V, out)
        return out
    s = 1.0 / math.sqrt(n)
    ks = np.ascontiguousarray(k.T)
    ks *= s
    t.add(ks)
    t.drop(k)
    kv = matmul(ks, v)
    t.add(kv)
    t.drop(ks, v)
    qs = q * s
    t.add(qs)
    t.drop(q)
    out = matmul(qs, kv)
    t.add(out)
    t.drop(qs, kv, inp.Q, inp.K, inp.V, out)
    return out


def _scaled_scores(inp: AttentionInput, p: AttentionParams) -> tuple:
    """A = QWq / sqrt(d_k) (n x d_k) and B = (KWk)^T / sqrt(d_k) (d_k x n)."""
    s = 1.0 / math.sqrt(p.d_k)
    a = matmul(inp.Q, p.Wq) * s
    b = np.ascontiguousarray(matmul(inp.K, p.Wk).T) * s
    return a, b


def context_map(inp: AttentionInput, p: AttentionParams) -> FactorizationTrace:
    """Materialize the full attention-weight matrix of the factorized form.

    ``P = softmax_columns(A) @ softmax_columns(B)`` is a product of
    column-stochastic factors through a ``d_k``-dimensional inner index, so
    its columns sum to 1 and its rank is at most ``d_k`` by construction.
    """
    if inp.n > _CONTEXT_MAP_CAP:
        raise ShapeError(
            f"context_map: n = {inp.n} exceeds the n x n materialization cap "
            f"of {_CONTEXT_MAP_CAP}"
        )
    a, b = _scaled_scores(inp, p)
    h = softmax_columns(a)
    sb = softmax_columns(b)
    return FactorizationTrace(
        A=a,
        B=b,
        H=h,
        P=matmul(h, sb),
        DA_diag=np.exp(a).sum(axis=0),
        DB_diag=np.exp(b).sum(axis=0),
    )


def approx_context_map(trace: FactorizationTrace, R: np.ndarray) -> np.ndarray:
    """Sketched weight matrix ``P_tilde = P R^T R``; rank at most ``k``.

    Stores the result on the trace and returns it.
    """
    if trace.P is None:
        raise ValueError("approx_context_map: trace.P is not materialized")
    r = as_matrix(R, "R")
    n = trace.P.shape[1]
    if r.shape[1] != n:
        raise ShapeError(
            f"approx_context_map: R has {r.shape[1]} columns, expected n = {n}"
        )
    p_tilde = matmul(matmul(trace.P, r.T), r)
    trace.P_tilde = p_tilde
    return p_tilde


def factorized_attention(
    inp: AttentionInput,
    p: AttentionParams,
    proj: ProjectionPair,
    order: str = "right",
    tracker=None,
) -> tuple[np.ndarray, FactorizationTrace]:
    """Factorized-softmax attention through a ``k``-dimensional sketch.

    ``H`` (n x d_k), ``L`` (d_k x k) and ``X`` (k x d_k) are multiplied as
    ``(H L) X`` for ``order='left'`` or ``H (L X)`` for ``order='right'``.
    Associativity makes the orders agree within 1e-9 relative Frobenius; the
    right order costs O(n d_k^2 + k d_k^2) — with no dependence on n*k — and
    no ``n x n`` matrix is ever materialized by either.
    """
    _check_order(order)
    if proj.n != inp.n:
        raise ShapeError(
            f"factorized_attention: projection built for n = {proj.n}, "
            f"input has n = {inp.n}"
        )
    t = tracker or _NULL
    t.add(inp.Q, inp.K, inp.V, proj.E, proj.F)
    s = 1.0 / math.sqrt(p.d_k)

    a = matmul(inp.Q, p.Wq)
    a *= s
    t.add(a)
    h = softmax_columns(a)
    t.add(h)

    kp = matmul(inp.K, p.Wk)
    t.add(kp)
    b = np.ascontiguousarray(kp.T) * s
    t.add(b)
    sketched_scores = np.ascontiguousarray(matmul(proj.E, kp).T) * s  # d_k x k
    t.add(sketched_scores)
    t.drop(kp)
    el = softmax_columns(sketched_scores)
    t.add(el)
    t.drop(sketched_scores)

    vp = matmul(inp.V, p.Wv)
    t.add(vp)
    x = matmul(proj.F, vp)
    t.add(x)
    t.drop(vp)

    if order == "left":
        hl = matmul(h, el)
        t.add(hl)
        out = matmul(hl, x)
        t.add(out)
        t.drop(hl)
    else:
        lx = matmul(el, x)
        t.add(lx)
        out = matmul(h, lx)
        t.add(out)
        t.drop(lx)
    trace = FactorizationTrace(
        A=a,
        B=b,
        H=h,
        L=el,
        X=x,
        DA_diag=np.exp(a).sum(axis=0),
        DB_diag=np.exp(b).sum(axis=0),
    )
    t.drop(a, h, b, el, x, inp.Q, inp.K, inp.V, proj.E, proj.F, out)
    return out, trace


def linformer_attention(
    inp: AttentionInput,
    p: AttentionParams,
    E: np.ndarray,
    F: np.ndarray,
    tracker=None,
) -> np.ndarray:
    """Sketched-key/value baseline: row softmax over ``n x k`` scores.

    Keys and values are compressed to ``k`` rows before the usual attention;
    only ``n x k`` intermediates are materialized, so cost is O(nk).
    """
    e = as_matrix(E, "E")
    f = as_matrix(F, "F")
    if e.shape[1] != inp.n or f.shape[1] != inp.n or e.shape[0] != f.shape[0]:
        raise ShapeError(
            f"linformer_attention: projections {e.shape} / {f.shape} do not "
            f"match n = {inp.n}"
        )
    t = tracker or _NULL
    t.add(inp.Q, inp.K, inp.V, e, f)
    q, k, v = _projected(inp, p, t)
    ek = matmul(e, k)
    t.add(ek)
    t.drop(k)
    scores = matmul(q, np.ascontiguousarray(ek.T))  # n x k
    scores *= 1.0 / math.sqrt(p.d_k)
    t.add(scores)
    t.drop(q, ek)
    weights = softmax_rows(scores)
    t.add(weights)
    t.drop(scores)
    fv = matmul(f, v)
    t.add(fv)
    t.drop(v)
    out = matmul(weights, fv)
    t.add(out)
    t.drop(weights, fv, inp.Q, inp.K, inp.V, e, f, out)
    return out


def _colsoftmax_vjp(softmax_out: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Backward of column softmax: s * (g - <s, g>) per column."""
    return softmax_out * (grad - (softmax_out * grad).sum(axis=0, keepdims=True))


def factorized_attention_backward(
    inp: AttentionInput,
    p: AttentionParams,
    proj: ProjectionPair,
    upstream: np.ndarray,
) -> Gradients:
    """Analytic gradients of ``sum(upstream * factorized_attention(...))``.

    Chain rule through the right-order forward pass; the column-softmax
    Jacobian is applied per column.  Gradients are returned for the three
    weight matrices and the three input sequences.
    """
    u = as_matrix(upstream, "upstream")
    if u.shape != (inp.n, p.d_k):
        raise ShapeError(
            f"upstream: expected shape {(inp.n, p.d_k)}, got {u.shape}"
        )
    if proj.n != inp.n:
        raise ShapeError(
            f"factorized_attention_backward: projection built for n = {proj.n},"
            f" input has n = {inp.n}"
        )
    s = 1.0 / math.sqrt(p.d_k)

    # Forward intermediates (recomputed; desk-scale sizes make this cheap).
    qp = matmul(inp.Q, p.Wq)
    a = qp * s
    h = softmax_columns(a)
    kp = matmul(inp.K, p.Wk)
    b2 = np.ascontiguousarray(matmul(proj.E, kp).T) * s  # d_k x k
    el = softmax_columns(b2)
    vp = matmul(inp.V, p.Wv)
    x = matmul(proj.F, vp)  # k x d_k
    lx = matmul(el, x)  # d_k x d_k

    # Reverse sweep.
    d_h = matmul(u, lx.T)
    d_lx = matmul(h.T, u)
    d_l = matmul(d_lx, x.T)
    d_x = matmul(el.T, d_lx)

    d_a = _colsoftmax_vjp(h, d_h)
    d_qp = d_a * s
    d_b2 = _colsoftmax_vjp(el, d_l)
    d_kp = matmul(proj.E.T, np.ascontiguousarray(d_b2.T) * s)
    d_vp = matmul(proj.F.T, d_x)

    return Gradients(
        dWq=matmul(inp.Q.T, d_qp),
        dWk=matmul(inp.K.T, d_kp),
        dWv=matmul(inp.V.T, d_vp),
        dQ=matmul(d_qp, p.Wq.T),
        dK=matmul(d_kp, p.Wk.T),
        dV=matmul(d_vp, p.Wv.T),
    )
