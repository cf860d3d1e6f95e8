"""Command-line front door.

Subcommands: ``bench``, ``spectrum``, ``jl``, ``approx``, ``kfree``,
``gradcheck``, ``equiv``.  Flags are long kebab-case names only; lists are
comma-separated.  Output files are written atomically (temp file + rename)
and embed the full run configuration (a ``config`` object in JSON output, a
``#``-prefixed comment line in CSV).  Exit status: 0 success, 1 validation
error, 2 internal numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field

from . import analysis, bench
from .attention import (
    AttentionInput,
    AttentionParams,
    context_map,
    factorized_attention,
    scaled_linear_attention,
)
from .linalg import NumericalError, frobenius_norm, softmax_rows
from .projections import delta_schedule, jl_dimension, make_projection_pair
from .rng import RngStream

__all__ = ["RunConfig", "run", "main", "build_parser"]

DEFAULTS = {
    "eps": 0.5,
    "trials": 10000,
    "reps": 7,
    "d_model": 64,
    "d_k": 32,
    "seed": 0,
}

COMMANDS = ("bench", "spectrum", "jl", "approx", "kfree", "gradcheck", "equiv")


class CliValidationError(Exception):
    """Bad flags or ranges; maps to exit status 1."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; the contract here is 1.
    def error(self, message):
        raise CliValidationError(message)


@dataclass
class RunConfig:
    """Validated description of one CLI run; embedded in every output file."""

    command: str
    n: int | None = None
    n_list: list[int] = field(default_factory=list)
    d_model: int = DEFAULTS["d_model"]
    d_k: int = DEFAULTS["d_k"]
    k: int | None = None
    k_rule: str = "fixed"
    eps: float = DEFAULTS["eps"]
    delta: float | None = None
    seed: int = DEFAULTS["seed"]
    trials: int = DEFAULTS["trials"]
    reps: int = DEFAULTS["reps"]
    out_path: str | None = None
    format: str = "json"
    variants: list[str] = field(default_factory=list)
    lemma: int | None = None
    bound: str = "eq1"
    source: str = "context"
    h: float = 1e-5
    tolerance: float = 1e-6
    equiv_variant: str = "factorized"

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise CliValidationError(f"command: unknown command {self.command!r}")
        if not 0.0 < self.eps < 1.0:
            raise CliValidationError(f"eps: must lie strictly in (0, 1), got {self.eps}")
        if self.delta is not None and not 0.0 < self.delta < 1.0:
            raise CliValidationError(
                f"delta: must lie strictly in (0, 1), got {self.delta}"
            )
        if self.seed < 0:
            raise CliValidationError(f"seed: must be nonnegative, got {self.seed}")
        if self.d_model < 1 or self.d_k < 1:
            raise CliValidationError(
                f"d-model/d-k: must be positive, got {self.d_model}/{self.d_k}"
            )
        for n in ([self.n] if self.n is not None else []) + self.n_list:
            if n < 1:
                raise CliValidationError(f"n: must be positive, got {n}")
        if self.format not in ("csv", "json"):
            raise CliValidationError(f"format: must be csv or json, got {self.format!r}")
        if self.command == "bench":
            if self.k_rule not in bench.K_RULES:
                raise CliValidationError(
                    f"k-rule: must be one of {bench.K_RULES}, got {self.k_rule!r}"
                )
            if self.reps < 5:
                raise CliValidationError(f"reps: must be >= 5, got {self.reps}")
            if len(self.n_list) < 4:
                raise CliValidationError(
                    f"n: need at least 4 comma-separated values, got {self.n_list}"
                )
            for v in self.variants:
                if v not in bench.VARIANTS:
                    raise CliValidationError(
                        f"variants: unknown variant {v!r}; choose from {bench.VARIANTS}"
                    )
            if not self.out_path:
                raise CliValidationError("out: bench requires --out for the CSV records")
        if self.command == "jl":
            if self.lemma not in (1, 2):
                raise CliValidationError(f"lemma: must be 1 or 2, got {self.lemma}")
            if self.trials < 1000:
                raise CliValidationError(f"trials: must be >= 1000, got {self.trials}")
        if self.command == "approx" and self.bound not in ("eq1", "eq3"):
            raise CliValidationError(f"bound: must be eq1 or eq3, got {self.bound!r}")
        if self.command == "spectrum" and self.source not in ("context", "vanilla"):
            raise CliValidationError(
                f"source: must be context or vanilla, got {self.source!r}"
            )
        if self.command == "gradcheck" and not 1e-7 <= self.h <= 1e-3:
            raise CliValidationError(f"h: must lie in [1e-7, 1e-3], got {self.h}")
        if self.command == "equiv" and self.equiv_variant not in (
            "factorized",
            "scaled",
        ):
            raise CliValidationError(
                f"variant: must be factorized or scaled, got {self.equiv_variant!r}"
            )

    def to_dict(self) -> dict:
        return asdict(self)


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".linatt-")
        try:
            with os.fdopen(fd, "w") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            os.unlink(tmp)
            raise
    except OSError as exc:
        raise CliValidationError(f"out: cannot write {path!r} ({exc})") from None


def _emit(config: RunConfig, payload: dict, summary: str) -> None:
    """Write the payload (with embedded config) if --out was given; always
    print the one-line summary."""
    document = {"config": config.to_dict(), "result": payload}
    if config.out_path:
        if config.format == "json":
            _atomic_write(config.out_path, json.dumps(document, indent=2) + "\n")
        else:
            lines = [f"# config {json.dumps(config.to_dict(), sort_keys=True)}"]
            flat = _flatten(payload)
            lines.append(",".join(str(k) for k, _ in flat))
            lines.append(",".join(_csv_value(v) for _, v in flat))
            _atomic_write(config.out_path, "\n".join(lines) + "\n")
    else:
        print(json.dumps(document, indent=2))
    print(summary)


def _csv_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ";".join(_csv_value(x) for x in v)
    return str(v)


def _flatten(payload: dict, prefix: str = "") -> list:
    out = []
    for key, value in payload.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.extend(_flatten(value, prefix=f"{name}."))
        else:
            out.append((name, value))
    return out


def _int_list(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> _Parser:
    parser = _Parser(
        prog="linatt",
        description=(
            "Benchmarks, sketching-bound verifications, spectrum reports, "
            "gradient checks, and evaluation-order equivalence checks for the "
            "attention variants in this package."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, n_default=None):
        p.add_argument("--seed", type=int, default=DEFAULTS["seed"],
                       help=f"RNG seed (default {DEFAULTS['seed']})")
        p.add_argument("--out", dest="out_path", default=None,
                       help="output file path (written atomically)")
        p.add_argument("--format", choices=("csv", "json"), default="json",
                       help="output file format (default json)")
        if n_default is not None:
            p.add_argument("--n", type=int, default=n_default,
                           help=f"sequence length (default {n_default})")
        p.add_argument("--d-model", type=int, default=DEFAULTS["d_model"],
                       help=f"model width (default {DEFAULTS['d_model']})")
        p.add_argument("--d-k", type=int, default=DEFAULTS["d_k"],
                       help=f"head width (default {DEFAULTS['d_k']})")

    p = sub.add_parser("bench", help="time variants across sequence lengths")
    p.add_argument("--variants", type=str, default="vanilla,factorized_right",
                   help="comma-separated variant names")
    p.add_argument("--n", type=_int_list, default=[512, 1024, 2048, 4096],
                   help="comma-separated sequence lengths (default 512,1024,2048,4096)")
    p.add_argument("--d-model", type=int, default=DEFAULTS["d_model"])
    p.add_argument("--d-k", type=int, default=DEFAULTS["d_k"])
    p.add_argument("--k", type=int, default=64, help="sketch size for k-rule fixed (default 64)")
    p.add_argument("--k-rule", choices=bench.K_RULES, default="fixed",
                   help="fixed k, jl (grows with n), or rank (n-independent)")
    p.add_argument("--eps", type=float, default=DEFAULTS["eps"])
    p.add_argument("--reps", type=int, default=DEFAULTS["reps"],
                   help=f"timed repetitions per point (default {DEFAULTS['reps']})")
    p.add_argument("--seed", type=int, default=DEFAULTS["seed"])
    p.add_argument("--out", dest="out_path", required=False, default=None,
                   help="CSV file for the per-rep records (required)")

    p = sub.add_parser("spectrum", help="singular spectrum of an attention map")
    common(p, n_default=256)
    p.add_argument("--source", choices=("context", "vanilla"), default="context",
                   help="factorized context map (exactly low rank) or the "
                        "vanilla row-softmax weights (contrast case)")

    p = sub.add_parser("jl", help="Monte-Carlo check of a sketching lemma")
    common(p, n_default=256)
    p.add_argument("--lemma", type=int, choices=(1, 2), required=True)
    p.add_argument("--k", type=int, default=64, help="sketch size (default 64)")
    p.add_argument("--eps", type=float, default=DEFAULTS["eps"])
    p.add_argument("--trials", type=int, default=DEFAULTS["trials"],
                   help=f"Monte-Carlo trials (default {DEFAULTS['trials']})")

    p = sub.add_parser("approx", help="sketched-map relative-error experiment")
    common(p, n_default=256)
    p.add_argument("--eps", type=float, default=DEFAULTS["eps"])
    p.add_argument("--trials", type=int, default=2000,
                   help="Monte-Carlo trials (default 2000)")
    p.add_argument("--k", type=int, default=None,
                   help="sketch size override (default: 5 ln(n) rule)")
    p.add_argument("--bound", choices=("eq1", "eq3"), default="eq1",
                   help="eq1: sketched map error; eq3: paired-map scalar error")
    p.add_argument("--delta", type=float, default=None,
                   help="shrink-factor override for --bound eq3")

    p = sub.add_parser("kfree", help="success rates across n with n-independent k")
    p.add_argument("--d-k", type=int, default=16)
    p.add_argument("--d-model", type=int, default=DEFAULTS["d_model"])
    p.add_argument("--eps", type=float, default=DEFAULTS["eps"])
    p.add_argument("--n-list", type=_int_list, default=[64, 128, 256, 512],
                   help="comma-separated sequence lengths (default 64,128,256,512)")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=DEFAULTS["seed"])
    p.add_argument("--out", dest="out_path", default=None)
    p.add_argument("--format", choices=("csv", "json"), default="json")

    p = sub.add_parser("gradcheck", help="finite-difference check of the backward pass")
    common(p, n_default=16)
    p.add_argument("--k", type=int, default=8, help="sketch size (default 8)")
    p.add_argument("--h", type=float, default=1e-5, help="central-difference step")
    p.add_argument("--tolerance", type=float, default=1e-6)

    p = sub.add_parser("equiv", help="evaluation-order equivalence check")
    common(p, n_default=512)
    p.add_argument("--k", type=int, default=64, help="sketch size (default 64)")
    p.add_argument("--variant", dest="equiv_variant",
                   choices=("factorized", "scaled"), default="factorized")

    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(command=args.command)
    for name in vars(args):
        if name == "command":
            continue
        value = getattr(args, name)
        if name == "n" and isinstance(value, list):
            cfg.n_list = value
        elif name == "variants":
            cfg.variants = [v for v in value.split(",") if v]
        elif name == "n_list":
            cfg.n_list = value
        elif hasattr(cfg, name) and value is not None:
            setattr(cfg, name, value)
    return cfg


# ---------------------------------------------------------------------------
# Command implementations.
# ---------------------------------------------------------------------------


def _cmd_bench(cfg: RunConfig) -> int:
    all_records = []
    fits = []
    for variant in cfg.variants:
        rng = RngStream(cfg.seed)
        records = bench.time_variant(
            variant,
            cfg.n_list,
            cfg.d_model,
            cfg.d_k,
            k_rule=cfg.k_rule,
            k=cfg.k if cfg.k is not None else 64,
            eps=cfg.eps,
            reps=cfg.reps,
            rng=rng,
        )
        all_records.extend(records)
        fits.append(bench.fit_slope(records))
    _atomic_write(cfg.out_path, bench.records_to_csv(all_records, cfg.to_dict()))
    print(json.dumps([bench.slope_to_dict(f) for f in fits]))
    for f in fits:
        print(
            f"bench seed={cfg.seed} variant={f.variant} exponent={f.exponent:.3f} "
            f"r2={f.r_squared:.4f} -> {cfg.out_path}"
        )
    return 0


def _cmd_spectrum(cfg: RunConfig) -> int:
    rng = RngStream(cfg.seed)
    inp = AttentionInput.random(cfg.n, cfg.d_model, rng)
    params = AttentionParams.random(cfg.d_model, cfg.d_k, rng)
    if cfg.source == "context":
        p = context_map(inp, params).P
    else:
        scores = (inp.Q @ params.Wq) @ (inp.K @ params.Wk).T / math.sqrt(cfg.d_k)
        p = softmax_rows(scores)
    report = analysis.spectrum_report(p, cfg.d_k)
    _emit(
        cfg,
        report.to_dict(),
        f"spectrum seed={cfg.seed} source={cfg.source} n={cfg.n} "
        f"tail_ratio={report.tail_ratio:.3e} energy_top{cfg.d_k}={report.energy_topd:.6f}",
    )
    return 0


def _cmd_jl(cfg: RunConfig) -> int:
    rng = RngStream(cfg.seed)
    fn = analysis.verify_lemma1 if cfg.lemma == 1 else analysis.verify_lemma2
    verdict = fn(cfg.n, cfg.k if cfg.k is not None else 64, cfg.eps, cfg.trials, rng)
    _emit(
        cfg,
        verdict.to_dict(),
        f"jl seed={cfg.seed} lemma={cfg.lemma} rate={verdict.empirical_rate:.4f} "
        f"bound={verdict.theoretical_bound:.4f}",
    )
    return 0


def _cmd_approx(cfg: RunConfig) -> int:
    rng = RngStream(cfg.seed)
    if cfg.bound == "eq1":
        verdict = analysis.approx_error_experiment(
            cfg.n, cfg.d_k, cfg.eps, cfg.trials, rng, k=cfg.k
        )
    else:
        verdict = analysis.factorized_error_experiment(
            cfg.n, cfg.d_k, cfg.eps, cfg.trials, rng, delta=cfg.delta
        )
    _emit(
        cfg,
        verdict.to_dict(),
        f"approx seed={cfg.seed} bound={cfg.bound} k={verdict.k} "
        f"rate={verdict.empirical_rate:.4f} nominal={verdict.theoretical_bound:.4f}",
    )
    return 0


def _cmd_kfree(cfg: RunConfig) -> int:
    rng = RngStream(cfg.seed)
    rates = analysis.k_independence_experiment(
        cfg.d_k, cfg.eps, cfg.n_list, cfg.trials, rng
    )
    payload = {"rates": [{"n": n, "empirical_rate": r} for n, r in rates]}
    pretty = " ".join(f"n={n}:{r:.3f}" for n, r in rates)
    _emit(cfg, payload, f"kfree seed={cfg.seed} d_k={cfg.d_k} {pretty}")
    return 0


def _cmd_gradcheck(cfg: RunConfig) -> int:
    rng = RngStream(cfg.seed)
    inp = AttentionInput.random(cfg.n, cfg.d_model, rng)
    params = AttentionParams.random(cfg.d_model, cfg.d_k, rng)
    proj = make_projection_pair(
        cfg.n, cfg.k if cfg.k is not None else 8, delta_schedule(cfg.n), rng
    )
    report = analysis.gradcheck(
        inp, params, proj, h=cfg.h, tolerance=cfg.tolerance, rng=rng.substream(99)
    )
    _emit(
        cfg,
        report.to_dict(),
        f"gradcheck seed={cfg.seed} max_error={report.max_error:.3e} "
        f"passed={report.passed}",
    )
    return 0 if report.passed else 2


def _cmd_equiv(cfg: RunConfig) -> int:
    rng = RngStream(cfg.seed)
    inp = AttentionInput.random(cfg.n, cfg.d_model, rng)
    params = AttentionParams.random(cfg.d_model, cfg.d_k, rng)
    if cfg.equiv_variant == "factorized":
        proj = make_projection_pair(
            cfg.n, cfg.k if cfg.k is not None else 64, delta_schedule(cfg.n), rng
        )
        left, _ = factorized_attention(inp, params, proj, order="left")
        right, _ = factorized_attention(inp, params, proj, order="right")
    else:
        left = scaled_linear_attention(inp, params, order="left")
        right = scaled_linear_attention(inp, params, order="right")
    gap = frobenius_norm(left - right) / frobenius_norm(left)
    payload = {"variant": cfg.equiv_variant, "relative_gap": gap, "threshold": 1e-9}
    _emit(
        cfg,
        payload,
        f"equiv seed={cfg.seed} variant={cfg.equiv_variant} gap={gap:.3e}",
    )
    if gap > 1e-9:
        raise NumericalError(
            f"evaluation orders disagree: relative gap {gap:.3e} > 1e-9"
        )
    return 0


_HANDLERS = {
    "bench": _cmd_bench,
    "spectrum": _cmd_spectrum,
    "jl": _cmd_jl,
    "approx": _cmd_approx,
    "kfree": _cmd_kfree,
    "gradcheck": _cmd_gradcheck,
    "equiv": _cmd_equiv,
}


def run(config: RunConfig) -> int:
    """Validate and dispatch one run; returns the process exit status."""
    config.validate()
    return _HANDLERS[config.command](config)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        config = _config_from_args(args)
        return run(config)
    except CliValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
