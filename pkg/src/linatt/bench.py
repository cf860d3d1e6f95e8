"""Wall-time and peak-allocation measurement of the attention variants, with
log-log slope fitting of runtime against sequence length.

Timing discipline: one discarded warm-up call, then ``reps`` timed calls on a
monotonic clock, single-threaded (BLAS thread pools are pinned to one thread
around the timed section so slopes reflect the algorithm, not parallel
scaling).  All variants route through the same product kernel.

Peak memory is *explicit accounting*: each evaluator registers the matrix
buffers it creates and releases with an :class:`AllocTracker`, and the
recorded value is the high-water mark of live buffer bytes inside one call.
Unlike process RSS this is exact, portable, and identical across runs.
"""

from __future__ import annotations

import io
import json
import time
from dataclasses import asdict, dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .attention import (
    AttentionInput,
    AttentionParams,
    factorized_attention,
    linformer_attention,
    scaled_linear_attention,
    vanilla_attention,
)
from .projections import (
    delta_schedule,
    jl_dimension,
    jl_dimension_rank,
    make_projection_pair,
)
from .rng import RngStream, gaussian_matrix

__all__ = [
    "VARIANTS",
    "AllocTracker",
    "BenchRecord",
    "SlopeFit",
    "time_variant",
    "fit_slope",
    "records_to_csv",
    "slope_to_dict",
]

VARIANTS = (
    "vanilla",
    "scaled_linear_left",
    "scaled_linear_right",
    "linformer",
    "factorized_left",
    "factorized_right",
)

CSV_HEADER = "variant,n,d_model,d_k,k,rep,seconds,peak_bytes"

_VANILLA_N_CAP = 16384  # n x n intermediate at desk scale
K_RULES = ("fixed", "jl", "rank")


class AllocTracker:
    """High-water-mark accounting of live matrix buffers."""

    def __init__(self) -> None:
        self.current = 0
        self.peak = 0

    def add(self, *arrays) -> None:
        for a in arrays:
            self.current += a.nbytes
        if self.current > self.peak:
            self.peak = self.current

    def drop(self, *arrays) -> None:
        for a in arrays:
            self.current -= a.nbytes


@dataclass(frozen=True)
class BenchRecord:
    variant: str
    n: int
    d_model: int
    d_k: int
    k: int
    rep: int
    seconds: float
    peak_bytes: int

    def csv_row(self) -> str:
        return (
            f"{self.variant},{self.n},{self.d_model},{self.d_k},{self.k},"
            f"{self.rep},{self.seconds!r},{self.peak_bytes}"
        )


@dataclass(frozen=True)
class SlopeFit:
    variant: str
    exponent: float
    r_squared: float
    n_points: int


def resolve_k(k_rule: str, k: int, n: int, d_k: int, eps: float) -> int:
    """Sketch size for one benchmark point under the chosen rule."""
    if k_rule == "fixed":
        return k
    if k_rule == "jl":
        return jl_dimension(n, eps)
    if k_rule == "rank":
        return jl_dimension_rank(d_k, eps)
    raise ValueError(f"k_rule must be one of {K_RULES}, got {k_rule!r}")


def _build_call(variant, inp, params, proj, lin_e, lin_f):
    if variant == "vanilla":
        return lambda tracker=None: vanilla_attention(inp, params, tracker=tracker)
    if variant == "scaled_linear_left":
        return lambda tracker=None: scaled_linear_attention(
            inp, params, order="left", tracker=tracker
        )
    if variant == "scaled_linear_right":
        return lambda tracker=None: scaled_linear_attention(
            inp, params, order="right", tracker=tracker
        )
    if variant == "linformer":
        return lambda tracker=None: linformer_attention(
            inp, params, lin_e, lin_f, tracker=tracker
        )
    if variant == "factorized_left":
        return lambda tracker=None: factorized_attention(
            inp, params, proj, order="left", tracker=tracker
        )
    if variant == "factorized_right":
        return lambda tracker=None: factorized_attention(
            inp, params, proj, order="right", tracker=tracker
        )
    raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


def time_variant(
    variant: str,
    n_list,
    d_model: int,
    d_k: int,
    k_rule: str = "fixed",
    k: int = 64,
    eps: float = 0.5,
    reps: int = 7,
    rng: RngStream | None = None,
) -> list[BenchRecord]:
    """Per-rep timings and the per-size allocation peak for one variant.

    Fresh seeded inputs are drawn for every ``n``; the warm-up call is
    discarded; ``seconds`` is one record per rep so the caller can take
    medians.  ``peak_bytes`` comes from one extra untimed tracked call and is
    identical on all records for a given ``n``.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if reps < 5:
        raise ValueError(f"reps must be >= 5, got {reps}")
    n_list = [int(n) for n in n_list]
    if len(n_list) < 4:
        raise ValueError(f"n_list needs at least 4 points, got {len(n_list)}")
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError(f"n_list must be strictly increasing, got {n_list}")
    quadratic = variant in ("vanilla", "scaled_linear_left")
    if quadratic and n_list[-1] > _VANILLA_N_CAP:
        raise ValueError(
            f"n = {n_list[-1]} exceeds the n x n intermediate cap of "
            f"{_VANILLA_N_CAP} for variant {variant!r}"
        )
    rng = rng if rng is not None else RngStream(0)

    records = []
    for i, n in enumerate(n_list):
        point_rng = rng.substream(i)
        inp = AttentionInput.random(n, d_model, point_rng)
        params = AttentionParams.random(d_model, d_k, point_rng)
        kn = resolve_k(k_rule, k, n, d_k, eps)
        proj = lin_e = lin_f = None
        if variant in ("factorized_left", "factorized_right"):
            proj = make_projection_pair(n, kn, delta_schedule(n), point_rng)
        elif variant == "linformer":
            lin_e = gaussian_matrix(kn, n, 1.0 / kn, point_rng)
            lin_f = gaussian_matrix(kn, n, 1.0 / kn, point_rng)
        call = _build_call(variant, inp, params, proj, lin_e, lin_f)

        with threadpool_limits(limits=1):
            call()  # warm-up, discarded
            times = []
            for _ in range(reps):
                t0 = time.perf_counter()
                call()
                times.append(time.perf_counter() - t0)
        tracker = AllocTracker()
        call(tracker=tracker)
        for rep, seconds in enumerate(times):
            records.append(
                BenchRecord(
                    variant=variant,
                    n=n,
                    d_model=d_model,
                    d_k=d_k,
                    k=kn,
                    rep=rep,
                    seconds=seconds,
                    peak_bytes=tracker.peak,
                )
            )
    return records


def fit_slope(records: list[BenchRecord]) -> SlopeFit:
    """Least-squares exponent of ln(median seconds) against ln(n)."""
    if not records:
        raise ValueError("no records to fit")
    variants = {r.variant for r in records}
    if len(variants) != 1:
        raise ValueError(f"records mix variants: {sorted(variants)}")
    by_n: dict[int, list[float]] = {}
    for r in records:
        by_n.setdefault(r.n, []).append(r.seconds)
    ns = sorted(by_n)
    if len(ns) < 4:
        raise ValueError(f"need >= 4 distinct n values, got {len(ns)}")
    if ns[-1] < 8 * ns[0]:
        raise ValueError(
            f"n range must span at least 8x, got {ns[0]}..{ns[-1]}"
        )
    log_n = np.log(np.array(ns, dtype=np.float64))
    log_t = np.log(np.array([float(np.median(by_n[n])) for n in ns]))
    slope, intercept = np.polyfit(log_n, log_t, 1)
    residual = log_t - (slope * log_n + intercept)
    ss_tot = float(np.sum((log_t - log_t.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(residual**2)) / ss_tot
    return SlopeFit(
        variant=records[0].variant,
        exponent=float(slope),
        r_squared=r2,
        n_points=len(ns),
    )


def records_to_csv(records: list[BenchRecord], config: dict | None = None) -> str:
    """CSV text with the fixed header, preceded by `#` config comment lines."""
    buf = io.StringIO()
    if config is not None:
        buf.write(f"# config {json.dumps(config, sort_keys=True)}\n")
    buf.write(CSV_HEADER + "\n")
    for r in records:
        buf.write(r.csv_row() + "\n")
    return buf.getvalue()


def slope_to_dict(fit: SlopeFit) -> dict:
    return asdict(fit)
