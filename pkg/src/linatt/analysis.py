"""Monte-Carlo verification of the sketching bounds, spectrum reports, and
finite-difference gradient checking.

Every experiment takes an :class:`~linatt.rng.RngStream` and derives one
substream per trial, so results are deterministic for a fixed ``(seed,
stream_index)`` and independent of trial execution order.  Each verdict
records its seed alongside the measured rate and the nominal probability
bound it is compared against.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .attention import (
    AttentionInput,
    AttentionParams,
    context_map,
    factorized_attention,
    factorized_attention_backward,
)
from .linalg import ShapeError, as_matrix, singular_values
from .projections import (
    delta_schedule,
    jl_dimension,
    jl_dimension_rank,
    make_projection_pair,
)
from .rng import RngStream, gaussian_matrix

__all__ = [
    "LemmaVerdict",
    "SpectrumReport",
    "GradCheckReport",
    "verify_lemma1",
    "verify_lemma2",
    "approx_error_experiment",
    "factorized_error_experiment",
    "k_independence_experiment",
    "spectrum_report",
    "gradcheck",
]

LEMMA_IDS = ("lemma1", "lemma2", "eq1_bound", "eq3_bound")

_EXPERIMENT_CAP = 1024  # experiments that materialize P or scale with n
_MIN_LEMMA_TRIALS = 1000


@dataclass(frozen=True)
class LemmaVerdict:
    """Outcome of one Monte-Carlo bound check."""

    lemma_id: str
    n: int
    k: int
    eps: float
    trials: int
    successes: int
    empirical_rate: float
    theoretical_bound: float
    seed: int

    def monte_carlo_sigma(self) -> float:
        """Binomial standard error of the measured rate."""
        r = self.empirical_rate
        return math.sqrt(max(r * (1.0 - r), 0.0) / self.trials)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SpectrumReport:
    """Singular spectrum of a square map with its low-rank summary numbers."""

    sigmas: np.ndarray
    d_k: int
    tail_ratio: float  # sigma_{d_k+1} / sigma_1
    energy_topd: float  # share of squared spectral mass in the top d_k values

    def to_dict(self) -> dict:
        return {
            "sigmas": [float(s) for s in self.sigmas],
            "d_k": self.d_k,
            "tail_ratio": self.tail_ratio,
            "energy_topd": self.energy_topd,
        }


def jl_success_bound(k: int, eps: float, union_n: int = 1) -> float:
    """Nominal lower bound 1 - 2 * union_n * exp(-(eps^2 - eps^3) k / 4),
    floored at zero."""
    return max(0.0, 1.0 - 2.0 * union_n * math.exp(-(eps * eps - eps**3) * k / 4.0))


def _check_lemma_args(k: int, eps: float, trials: int) -> None:
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie strictly in (0, 1), got {eps!r}")
    if trials < _MIN_LEMMA_TRIALS:
        raise ValueError(f"trials must be >= {_MIN_LEMMA_TRIALS}, got {trials}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")


def _unit_vector(n: int, rng: RngStream, supplied, name: str) -> np.ndarray:
    if supplied is None:
        v = rng.normals(n)
    else:
        v = np.asarray(supplied, dtype=np.float64).ravel()
        if v.shape != (n,):
            raise ValueError(f"{name}: expected length {n}, got shape {v.shape}")
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ValueError(f"{name}: zero vector is not a valid test direction")
    return v / norm


def verify_lemma1(
    n: int, k: int, eps: float, trials: int, rng: RngStream, x=None
) -> LemmaVerdict:
    """Norm non-expansion of a Gaussian sketch.

    For a fixed unit vector ``x`` and a fresh ``k x n`` sketch ``R`` with
    N(0, 1/k) entries per trial, a trial succeeds when
    ``||R x|| <= (1 + eps) ||x||``.
    """
    _check_lemma_args(k, eps, trials)
    x = _unit_vector(n, rng.substream(0), x, "x")
    successes = 0
    for t in range(trials):
        r = gaussian_matrix(k, n, 1.0 / k, rng.substream(t + 1))
        if np.linalg.norm(r @ x) <= 1.0 + eps:
            successes += 1
    return LemmaVerdict(
        lemma_id="lemma1",
        n=n,
        k=k,
        eps=eps,
        trials=trials,
        successes=successes,
        empirical_rate=successes / trials,
        theoretical_bound=jl_success_bound(k, eps),
        seed=rng.seed,
    )


def verify_lemma2(
    n: int, k: int, eps: float, trials: int, rng: RngStream, x=None, y=None
) -> LemmaVerdict:
    """Inner-product preservation of a Gaussian sketch.

    A trial succeeds when ``|x R^T R y^T - x y^T| <= eps ||x|| ||y||`` for
    fixed unit ``x, y`` and a fresh sketch per trial.  (The subtracted form:
    without it the statement is vacuous for nearly orthogonal vectors.)
    """
    _check_lemma_args(k, eps, trials)
    setup = rng.substream(0)
    x = _unit_vector(n, setup, x, "x")
    y = _unit_vector(n, setup, y, "y")
    target = float(x @ y)
    successes = 0
    for t in range(trials):
        r = gaussian_matrix(k, n, 1.0 / k, rng.substream(t + 1))
        if abs(float((r @ x) @ (r @ y)) - target) <= eps:
            successes += 1
    return LemmaVerdict(
        lemma_id="lemma2",
        n=n,
        k=k,
        eps=eps,
        trials=trials,
        successes=successes,
        empirical_rate=successes / trials,
        theoretical_bound=jl_success_bound(k, eps),
        seed=rng.seed,
    )


def _random_context_map(n: int, d_k: int, rng: RngStream) -> np.ndarray:
    # d_model = 2 * d_k gives the weights a nondegenerate mixing role
    # without changing the structure of the resulting map.
    d_model = 2 * d_k
    inp = AttentionInput.random(n, d_model, rng)
    params = AttentionParams.random(d_model, d_k, rng)
    return context_map(inp, params).P


def approx_error_experiment(
    n: int, d_k: int, eps: float, trials: int, rng: RngStream, k: int | None = None
) -> LemmaVerdict:
    """Relative error of the sketched map on random unit vectors.

    One random attention-weight matrix ``P`` is built; each trial draws a
    fresh sketch ``R`` and a fresh unit vector ``c`` and succeeds when
    ``||P R^T R c - P c|| <= eps ||P c||``.  The measured rate is reported
    against the union-bound value ``1 - 2 n exp(-(eps^2 - eps^3) k / 4)``,
    floored at zero.
    """
    if n > _EXPERIMENT_CAP:
        raise ValueError(f"n must be <= {_EXPERIMENT_CAP}, got {n}")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if k is None:
        k = jl_dimension(n, eps)
    p = _random_context_map(n, d_k, rng.substream(0))
    successes = 0
    for t in range(trials):
        trial_rng = rng.substream(t + 1)
        r = gaussian_matrix(k, n, 1.0 / k, trial_rng)
        c = _unit_vector(n, trial_rng, None, "c")
        pc = p @ c
        err = p @ (r.T @ (r @ c)) - pc
        if float(np.linalg.norm(err)) <= eps * float(np.linalg.norm(pc)):
            successes += 1
    return LemmaVerdict(
        lemma_id="eq1_bound",
        n=n,
        k=k,
        eps=eps,
        trials=trials,
        successes=successes,
        empirical_rate=successes / trials,
        theoretical_bound=jl_success_bound(k, eps, union_n=n),
        seed=rng.seed,
    )


def factorized_error_experiment(
    n: int,
    d_k: int,
    eps: float,
    trials: int,
    rng: RngStream,
    delta: float | None = None,
) -> LemmaVerdict:
    """Scalar error of the paired-map exponential against the unsketched one.

    Per trial: a key-score row ``x2`` (length n) and a value column ``y``
    (length n) are drawn, a fresh pair ``E = delta R, F = exp(-delta) R`` is
    built, and the trial succeeds when

        |exp(x2 E^T) (F y) - exp(x2) y| <= eps |exp(x2) y|

    where both sides are scalars (row times column).  This realizes the
    row/column reading of the paired-map error chain; the rate is reported
    next to the nominal single-vector bound, not asserted against it — the
    intended norm on the left side is ambiguous, and the scalar reading makes
    the left side a fresh Gaussian functional that is nearly uncorrelated
    with the right, so the nominal bound is not expected to hold empirically.
    """
    if n > _EXPERIMENT_CAP:
        raise ValueError(f"n must be <= {_EXPERIMENT_CAP}, got {n}")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    k = jl_dimension(n, eps)
    dlt = delta_schedule(n, delta)
    d_model = 2 * d_k
    w_var = 1.0 / d_model
    s = 1.0 / math.sqrt(d_k)
    successes = 0
    for t in range(trials):
        trial_rng = rng.substream(t + 1)
        key_scores = (
            gaussian_matrix(n, d_model, 1.0, trial_rng)
            @ gaussian_matrix(d_model, d_k, w_var, trial_rng)
        ).T * s
        x2 = key_scores[trial_rng.randint(d_k)]
        values = gaussian_matrix(n, d_model, 1.0, trial_rng) @ gaussian_matrix(
            d_model, d_k, w_var, trial_rng
        )
        y = values[:, trial_rng.randint(d_k)]
        pair = make_projection_pair(n, k, dlt, trial_rng)
        exact = float(np.exp(x2) @ y)
        sketched = float(np.exp(x2 @ pair.E.T) @ (pair.F @ y))
        if abs(sketched - exact) <= eps * abs(exact):
            successes += 1
    return LemmaVerdict(
        lemma_id="eq3_bound",
        n=n,
        k=k,
        eps=eps,
        trials=trials,
        successes=successes,
        empirical_rate=successes / trials,
        theoretical_bound=jl_success_bound(k, eps),
        seed=rng.seed,
    )


def k_independence_experiment(
    d_k: int, eps: float, n_list, trials: int, rng: RngStream
) -> list[tuple[int, float]]:
    """Success rates of the sketched-map criterion at several sequence
    lengths, with the sketch size fixed by the rank rule (independent of n).
    """
    n_list = [int(n) for n in n_list]
    if not n_list:
        raise ValueError("n_list must be non-empty")
    for n in n_list:
        if n > _EXPERIMENT_CAP:
            raise ValueError(f"n must be <= {_EXPERIMENT_CAP}, got {n}")
    k = jl_dimension_rank(d_k, eps)
    out = []
    for i, n in enumerate(n_list):
        verdict = approx_error_experiment(
            n, d_k, eps, trials, rng.substream(1000 + i), k=k
        )
        out.append((n, verdict.empirical_rate))
    return out


def spectrum_report(P: np.ndarray, d_k: int) -> SpectrumReport:
    """Full singular spectrum with tail ratio and top-``d_k`` energy share."""
    p = as_matrix(P, "P")
    if p.shape[0] != p.shape[1]:
        raise ShapeError(f"spectrum_report: P must be square, got {p.shape}")
    if p.shape[0] > _EXPERIMENT_CAP:
        raise ShapeError(
            f"spectrum_report: side {p.shape[0]} exceeds cap {_EXPERIMENT_CAP}"
        )
    if d_k < 1:
        raise ValueError(f"d_k must be >= 1, got {d_k}")
    sigmas = singular_values(p)
    total = float(np.sum(sigmas * sigmas))
    if sigmas[0] == 0.0:
        tail = 0.0
        energy = 1.0
    else:
        tail = float(sigmas[d_k] / sigmas[0]) if d_k < len(sigmas) else 0.0
        energy = float(np.sum(sigmas[:d_k] ** 2) / total)
    return SpectrumReport(sigmas=sigmas, d_k=d_k, tail_ratio=tail, energy_topd=energy)


@dataclass(frozen=True)
class GradCheckReport:
    """Max relative error per parameter block, analytic vs central differences."""

    block_errors: dict
    h: float
    tolerance: float

    @property
    def max_error(self) -> float:
        return max(self.block_errors.values())

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "block_errors": dict(self.block_errors),
            "h": self.h,
            "tolerance": self.tolerance,
            "max_error": self.max_error,
            "passed": self.passed,
        }


_GRADCHECK_ABS_FLOOR = 1e-8


def gradcheck(
    inp: AttentionInput,
    p: AttentionParams,
    proj: ProjectionPair,
    h: float = 1e-5,
    tolerance: float = 1e-6,
    rng: RngStream | None = None,
) -> GradCheckReport:
    """Check the analytic backward pass against central finite differences.

    The functional is ``sum(U * output)`` for a random ``U`` drawn from
    ``rng`` (derived from the projection seed when omitted).  An entry agrees
    when ``|analytic - fd| <= max(tolerance * |fd|, 1e-8)``; the reported
    per-block value is the max of ``|analytic - fd|`` over the equivalent
    denominator, so ``report.passed`` is exactly that entrywise condition.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError(f"h must lie in [1e-7, 1e-3], got {h!r}")
    if rng is None:
        rng = RngStream(proj.seed, stream_index=0x67726164)
    u = gaussian_matrix(inp.n, p.d_k, 1.0, rng)
    analytic = factorized_attention_backward(inp, p, proj, u)

    def loss(q, k, v, wq, wk, wv) -> float:
        trial_inp = AttentionInput(Q=q, K=k, V=v, n=inp.n)
        trial_p = AttentionParams(
            Wq=wq, Wk=wk, Wv=wv, d_model=p.d_model, d_k=p.d_k
        )
        out, _ = factorized_attention(trial_inp, trial_p, proj, order="right")
        return float(np.sum(u * out))

    blocks = {
        "Q": (inp.Q, analytic.dQ),
        "K": (inp.K, analytic.dK),
        "V": (inp.V, analytic.dV),
        "Wq": (p.Wq, analytic.dWq),
        "Wk": (p.Wk, analytic.dWk),
        "Wv": (p.Wv, analytic.dWv),
    }
    base = {"Q": inp.Q, "K": inp.K, "V": inp.V, "Wq": p.Wq, "Wk": p.Wk, "Wv": p.Wv}
    denom_floor = _GRADCHECK_ABS_FLOOR / tolerance
    errors = {}
    for name, (theta, grad) in blocks.items():
        worst = 0.0
        for idx in np.ndindex(theta.shape):
            perturbed = dict(base)
            plus = theta.copy()
            plus[idx] += h
            perturbed[name] = plus
            up = loss(
                perturbed["Q"], perturbed["K"], perturbed["V"],
                perturbed["Wq"], perturbed["Wk"], perturbed["Wv"],
            )
            minus = theta.copy()
            minus[idx] -= h
            perturbed[name] = minus
            down = loss(
                perturbed["Q"], perturbed["K"], perturbed["V"],
                perturbed["Wq"], perturbed["Wk"], perturbed["Wv"],
            )
            fd = (up - down) / (2.0 * h)
            rel = abs(float(grad[idx]) - fd) / max(abs(fd), denom_floor)
            worst = max(worst, rel)
        errors[name] = worst
    return GradCheckReport(block_errors=errors, h=h, tolerance=tolerance)
