"""Dense float64 linear algebra shared by every attention variant.

Matrices are plain 2-D ``numpy.ndarray`` objects: C-contiguous, row-major,
``float64``.  All public operations are pure (inputs are never mutated) and
deterministic, so results can be compared bit-for-bit across runs.

Every attention evaluator in this package routes its products through
:func:`matmul`, so measured complexity slopes reflect the algorithm rather
than a mix of kernels.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "ShapeError",
    "NumericalError",
    "as_matrix",
    "matmul",
    "transpose",
    "scale",
    "exp_elementwise",
    "softmax_columns",
    "softmax_rows",
    "frobenius_norm",
    "l2_norm",
    "singular_values",
    "write_matrix_csv",
    "read_matrix_csv",
]


class ShapeError(ValueError):
    """Incompatible matrix shapes; carries both shapes in the message."""


class NumericalError(RuntimeError):
    """An operation failed numerically (overflow, non-convergence)."""


def as_matrix(obj, name: str = "matrix") -> np.ndarray:
    """Coerce ``obj`` to a C-contiguous 2-D float64 array, validating shape."""
    arr = np.asarray(obj, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name}: expected a 2-D matrix, got ndim={arr.ndim}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name}: empty matrix of shape {arr.shape}")
    return np.ascontiguousarray(arr)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with an explicit inner-dimension check.

    This is the single product kernel used by all attention variants.
    """
    a = as_matrix(a, "A")
    b = as_matrix(b, "B")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul: inner dimensions disagree: A is {a.shape}, B is {b.shape}"
        )
    return a @ b


def transpose(a: np.ndarray) -> np.ndarray:
    a = as_matrix(a, "A")
    return np.ascontiguousarray(a.T)


def scale(a: np.ndarray, s: float) -> np.ndarray:
    """Element-wise multiplication by a finite scalar."""
    a = as_matrix(a, "A")
    s = float(s)
    if not np.isfinite(s):
        raise ValueError(f"scale: scalar must be finite, got {s!r}")
    return a * s


def exp_elementwise(a: np.ndarray) -> np.ndarray:
    """Element-wise natural exponential.

    Raises :class:`NumericalError` naming the first offending index if any
    entry overflows to infinity.  Callers that need normalized exponentials
    should use :func:`softmax_columns` / :func:`softmax_rows`, which are
    overflow-proof.
    """
    a = as_matrix(a, "A")
    with np.errstate(over="ignore"):
        out = np.exp(a)
    if not np.isfinite(out).all():
        i, j = np.argwhere(~np.isfinite(out))[0]
        raise NumericalError(
            f"exp_elementwise: overflow at entry ({i}, {j}) with value {a[i, j]!r}"
        )
    return out


def _softmax(a: np.ndarray, axis: int) -> np.ndarray:
    # Max-subtraction is exact for softmax: it rescales numerator and
    # denominator by the same power of e, so only overflow behaviour changes.
    shifted = a - a.max(axis=axis, keepdims=True)
    np.exp(shifted, out=shifted)
    shifted /= shifted.sum(axis=axis, keepdims=True)
    return shifted


def softmax_columns(a: np.ndarray) -> np.ndarray:
    """Column-wise softmax: every column of the result sums to 1."""
    return _softmax(as_matrix(a, "A"), axis=0)


def softmax_rows(a: np.ndarray) -> np.ndarray:
    """Row-wise softmax: every row of the result sums to 1."""
    return _softmax(as_matrix(a, "A"), axis=1)


def frobenius_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(as_matrix(a, "A")))


def l2_norm(v: np.ndarray) -> float:
    """Euclidean norm of a vector (1-D array, or a one-row/one-column matrix)."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim == 2 and 1 not in arr.shape:
        raise ShapeError(f"l2_norm: expected a vector, got shape {arr.shape}")
    if arr.ndim > 2:
        raise ShapeError(f"l2_norm: expected a vector, got ndim={arr.ndim}")
    return float(np.linalg.norm(arr.ravel()))


# ---------------------------------------------------------------------------
# Singular values via one-sided (Hestenes) Jacobi.
#
# Cyclic Jacobi rotations diagonalize the Gram matrix W^T W implicitly by
# orthogonalizing the columns of W; the singular values are the final column
# norms.  Working on W directly (never forming W^T W) keeps small singular
# values accurate to ~eps * sigma_1 instead of ~sqrt(eps) * sigma_1, which the
# exact-low-rank spectrum checks in this package rely on.
# ---------------------------------------------------------------------------

_JACOBI_TOL = 1e-14  # relative off-diagonal threshold of the implicit Gram matrix
_JACOBI_MAX_SWEEPS = 100
_JACOBI_NOISE_FLOOR = 1e-15  # columns below this fraction of the largest are zero

_MAX_SVD_SIDE = 2048


def _round_robin_pairs(m: int):
    """Yield ``m - 1`` rounds of ``m / 2`` disjoint column pairs (m even).

    The classic circle schedule: every unordered pair appears exactly once
    per sweep, and pairs within a round are disjoint so their rotations
    commute and can be applied in one vectorized step.
    """
    idx = list(range(m))
    half = m // 2
    for _ in range(m - 1):
        yield np.array(idx[:half]), np.array(idx[half:][::-1])
        idx = [idx[0]] + [idx[-1]] + idx[1:-1]


def singular_values(
    a: np.ndarray,
    max_sweeps: int = _JACOBI_MAX_SWEEPS,
    tol: float = _JACOBI_TOL,
) -> np.ndarray:
    """All singular values of ``a`` in descending order.

    Implemented as cyclic one-sided Jacobi with a round-robin ordering.  A
    sweep visits every column pair once; convergence is declared when no pair
    of numerically nonzero columns has a relative inner product above ``tol``.

    Raises :class:`NumericalError` if the rotation sweeps do not converge
    within ``max_sweeps``, and :class:`ShapeError` when ``min(a.shape)``
    exceeds the supported desk scale of 2048.
    """
    a = as_matrix(a, "A")
    if min(a.shape) > _MAX_SVD_SIDE:
        raise ShapeError(
            f"singular_values: min(rows, cols) = {min(a.shape)} exceeds the "
            f"supported cap of {_MAX_SVD_SIDE}"
        )
    n_values = min(a.shape)
    # Orthogonalize the columns of the tall orientation.
    w = (a if a.shape[0] >= a.shape[1] else a.T).copy()
    m = w.shape[1]
    if m == 1:
        return np.array([float(np.linalg.norm(w))])
    if m % 2 == 1:
        w = np.hstack([w, np.zeros((w.shape[0], 1))])
        m += 1

    converged = False
    for _ in range(max_sweeps):
        worst = 0.0
        top2 = float(np.einsum("ij,ij->j", w, w).max())
        floor2 = (_JACOBI_NOISE_FLOOR**2) * top2
        for p, q in _round_robin_pairs(m):
            wp = w[:, p]
            wq = w[:, q]
            app = np.einsum("ij,ij->j", wp, wp)
            aqq = np.einsum("ij,ij->j", wq, wq)
            apq = np.einsum("ij,ij->j", wp, wq)
            live = (app > floor2) & (aqq > floor2)
            rel = np.zeros_like(apq)
            np.divide(np.abs(apq), np.sqrt(app * aqq), out=rel, where=live)
            if rel.size:
                worst = max(worst, float(rel.max()))
            rotate = rel > tol
            if not rotate.any():
                continue
            # 2x2 symmetric Jacobi rotation zeroing the (p, q) Gram entry.
            tau = (aqq[rotate] - app[rotate]) / (2.0 * apq[rotate])
            t = np.sign(tau) / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
            t[tau == 0.0] = 1.0
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            pr, qr = p[rotate], q[rotate]
            wp, wq = w[:, pr], w[:, qr]
            w[:, pr], w[:, qr] = c * wp - s * wq, s * wp + c * wq
        if worst <= tol:
            converged = True
            break
    if not converged:
        raise NumericalError(
            f"singular_values: Jacobi sweeps did not converge within "
            f"{max_sweeps} sweeps (worst relative off-diagonal {worst:.3e})"
        )
    sigmas = np.sqrt(np.einsum("ij,ij->j", w, w))
    sigmas[::-1].sort()
    return sigmas[:n_values]


# ---------------------------------------------------------------------------
# CSV fixtures: one matrix row per line, shortest round-trip decimals.
# ---------------------------------------------------------------------------


def write_matrix_csv(a: np.ndarray, path) -> None:
    a = as_matrix(a, "A")
    lines = [",".join(repr(float(v)) for v in row) for row in a]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    rows: list[list[float]] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = [float(tok) for tok in line.split(",")]
            except ValueError as exc:
                raise ValueError(f"line {lineno}: non-numeric entry ({exc})") from None
            if rows and len(row) != len(rows[0]):
                raise ValueError(
                    f"line {lineno}: ragged row of width {len(row)}, "
                    f"expected {len(rows[0])}"
                )
            rows.append(row)
    if not rows:
        raise ValueError("empty matrix file")
    return np.array(rows, dtype=np.float64)
