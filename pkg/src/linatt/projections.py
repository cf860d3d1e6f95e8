"""Gaussian sketching machinery: projection dimensions and paired maps.

A sketch is a ``k x n`` matrix ``R`` with i.i.d. N(0, 1/k) entries.  The
factorized attention evaluator uses a *pair* of maps derived from one shared
``R``: a shrunk map ``E = delta * R`` applied inside an exponential, and a
compensating map ``F = exp(-delta) * R`` applied outside it.  Shrinking by
``delta`` keeps the exponential in a regime where it is effectively linear,
and the pairing keeps the product of the two maps calibrated.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .rng import RngStream, gaussian_matrix

__all__ = [
    "ProjectionPair",
    "jl_dimension",
    "jl_dimension_rank",
    "delta_schedule",
    "make_projection_pair",
    "save_projection_pair",
    "load_projection_pair",
]


def _check_eps(eps: float) -> float:
    eps = float(eps)
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie strictly in (0, 1), got {eps!r}")
    return eps


def jl_dimension(n: int, eps: float) -> int:
    """Sketch size sufficient for length-n inputs: ceil(5 ln n / (eps^2 - eps^3)).

    Natural logarithm, rounded up so the guarantee direction is preserved.
    """
    eps = _check_eps(eps)
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    return math.ceil(5.0 * math.log(n) / (eps * eps - eps**3))


def jl_dimension_rank(d: int, eps: float) -> int:
    """Sketch size driven by the map's rank d, independent of sequence length:
    ceil(9 ln d / (eps^2 - eps^3))."""
    eps = _check_eps(eps)
    if d < 2:
        raise ValueError(f"d must be >= 2, got {d}")
    return math.ceil(9.0 * math.log(d) / (eps * eps - eps**3))


def delta_schedule(n: int, override: float | None = None) -> float:
    """Shrink factor for the paired maps at sequence length ``n``.

    Defaults to ``1/n**2``, which vanishes faster than ``1/n`` (the regime
    the error analysis needs) without underflowing float64 the way the far
    steeper ``1/2**n`` would for any interesting ``n``.  An explicit override
    in (0, 1) is honored unchanged for experiments that want, e.g., the
    literal ``1/2**n`` at small ``n``.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if override is not None:
        override = float(override)
        if not 0.0 < override < 1.0:
            raise ValueError(
                f"delta override must lie strictly in (0, 1), got {override!r}"
            )
        return override
    return max(1.0 / (float(n) * float(n)), 1e-300)


@dataclass(frozen=True)
class ProjectionPair:
    """A shared Gaussian sketch ``R`` with its shrunk/compensated pair.

    ``E == delta * R`` exactly and ``F == exp(-delta) * R`` to within one
    rounding of the scalar product, because both are derived from the stored
    ``R`` rather than re-drawn.
    """

    E: np.ndarray
    F: np.ndarray
    R: np.ndarray
    delta: float
    k: int
    n: int
    seed: int


def make_projection_pair(
    n: int, k: int, delta: float, rng: RngStream
) -> ProjectionPair:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    delta = float(delta)
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie strictly in (0, 1), got {delta!r}")
    r = gaussian_matrix(k, n, 1.0 / k, rng)
    return ProjectionPair(
        E=r * delta,
        F=r * math.exp(-delta),
        R=r,
        delta=delta,
        k=k,
        n=n,
        seed=rng.seed,
    )


def save_projection_pair(pair: ProjectionPair, path) -> None:
    """One-line JSON header followed by the rows of ``R`` in matrix CSV form.

    ``E`` and ``F`` are recomputed on load from ``delta`` and ``R``; scalar
    multiplication is deterministic, so the round trip is bit-exact.
    """
    header = json.dumps(
        {"n": pair.n, "k": pair.k, "delta": pair.delta, "seed": pair.seed}
    )
    lines = [",".join(repr(float(v)) for v in row) for row in pair.R]
    with open(path, "w") as fh:
        fh.write(header + "\n")
        fh.write("\n".join(lines) + "\n")


def load_projection_pair(path) -> ProjectionPair:
    with open(path) as fh:
        header = json.loads(fh.readline())
        rows = [
            [float(tok) for tok in line.strip().split(",")]
            for line in fh
            if line.strip()
        ]
    r = np.array(rows, dtype=np.float64)
    if r.shape != (header["k"], header["n"]):
        raise ValueError(
            f"stored matrix shape {r.shape} disagrees with header "
            f"(k={header['k']}, n={header['n']})"
        )
    delta = float(header["delta"])
    return ProjectionPair(
        E=r * delta,
        F=r * math.exp(-delta),
        R=r,
        delta=delta,
        k=int(header["k"]),
        n=int(header["n"]),
        seed=int(header["seed"]),
    )
