"""Command-line interface: build and verify schemes, run simulations.

Exit codes: 0 success, 2 usage (bad flags, missing seeds), 3 validation
(violated preconditions, bad configuration values), 4 numerical (span
or decode failures, divergence, starved rounds), 5 I/O (unreadable or
malformed files).

Run parameters resolve as defaults < config file < command-line flags.
Every simulation must be explicitly seeded: give the four sub-seeds or
``--seed-all N``, which derives scheme, data, latency, and straggler
seeds as N, N+1, N+2, N+3 (individual flags still override). The
effective merged configuration is echoed next to each output file so a
run can be reproduced from its artifacts alone.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import codec, learn, partial, sim
from .errors import (
    ConfigError,
    IO_ERRORS,
    NUMERICAL_ERRORS,
    ParseError,
    VALIDATION_ERRORS,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_NUMERICAL = 4
EXIT_IO = 5


class _UsageError(Exception):
    """Bad or missing command-line input; maps to EXIT_USAGE."""


_SEED_NAMES = ("seed_scheme", "seed_data", "seed_latency", "seed_straggler")

# Everything a run can configure, with its resolved default. Paths are
# flag-only so config files stay relocatable.
_RUN_DEFAULTS = {
    "strategy": None,
    "scheme_file": None,
    "kind": None,
    "n": None,
    "s": None,
    "alpha": None,
    "d": 10000,
    "p": 100,
    "iterations": 100,
    "optimizer": learn.NAG,
    "eta": None,
    "c1": None,
    "c2": 10.0,
    "compute_time": 1.0,
    "comm_time": 0.05,
    "jitter_sigma": sim.DEFAULT_JITTER_SIGMA,
    "straggler_mode": "none",
    "straggler_workers": (),
    "straggler_count": 0,
    "straggler_kind": "delay",
    "straggler_extra": 0.0,
    "straggler_alpha": 1.0,
    "holdout_frac": 0.2,
    "auc_interval": 10,
    "seed_all": None,
    "seed_scheme": None,
    "seed_data": None,
    "seed_latency": None,
    "seed_straggler": None,
    "label": None,
    "verify_decode": False,
}

_INT_KEYS = frozenset(
    {"n", "s", "d", "p", "iterations", "straggler_count", "auc_interval",
     "seed_all", *_SEED_NAMES}
)
_FLOAT_KEYS = frozenset(
    {"alpha", "eta", "c1", "c2", "compute_time", "comm_time",
     "straggler_extra", "straggler_alpha", "holdout_frac"}
)
_STR_KEYS = frozenset(
    {"strategy", "scheme_file", "kind", "optimizer", "straggler_mode",
     "straggler_kind", "label"}
)


def _coerce(key: str, value):
    """Type-check one config-file value, JSON natives in, run types out."""
    if key not in _RUN_DEFAULTS:
        raise ConfigError(f"unknown config field {key!r}")
    if value is None:
        if key == "jitter_sigma":
            return None
        raise ConfigError(f"config field {key!r} must not be null")
    if key in _INT_KEYS:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"config field {key!r} must be an integer, got {value!r}")
        return value
    if key in _FLOAT_KEYS or key == "jitter_sigma":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config field {key!r} must be a number, got {value!r}")
        return float(value)
    if key in _STR_KEYS:
        if not isinstance(value, str):
            raise ConfigError(f"config field {key!r} must be a string, got {value!r}")
        return value
    if key == "straggler_workers":
        if not isinstance(value, list) or not all(
            isinstance(w, int) and not isinstance(w, bool) for w in value
        ):
            raise ConfigError(f"config field {key!r} must be a list of integers")
        return tuple(value)
    if key == "verify_decode":
        if not isinstance(value, bool):
            raise ConfigError(f"config field {key!r} must be true or false")
        return value
    raise ConfigError(f"unknown config field {key!r}")


def _read_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ParseError(f"cannot read {path}: {err}") from err
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ParseError(f"{path} is not valid JSON: {err}") from err
    if not isinstance(raw, dict):
        raise ParseError(f"{path} must hold a JSON object")
    return raw


def _parse_workers(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part.strip() != "")
    except ValueError as err:
        raise _UsageError(f"--straggler-workers wants comma-separated integers: {err}")


def _parse_jitter(text: str) -> float | None:
    if text.lower() in ("none", "null", "off"):
        return None
    try:
        return float(text)
    except ValueError as err:
        raise _UsageError(f"--jitter-sigma wants a number or 'none': {err}")


def _flag_overrides(args: argparse.Namespace) -> dict:
    """Run keys explicitly present on the command line."""
    out = {}
    for key in _RUN_DEFAULTS:
        value = getattr(args, key, None)
        if value is None:
            continue
        if key == "jitter_sigma":
            value = _parse_jitter(value)
        elif key == "straggler_workers":
            value = _parse_workers(value)
        out[key] = value
    if getattr(args, "verify_decode", False):
        out["verify_decode"] = True
    return out


def _merge_run(config: dict, overrides: dict) -> dict:
    merged = dict(_RUN_DEFAULTS)
    for key, value in config.items():
        merged[key] = _coerce(key, value)
    merged.update(overrides)
    return merged


def _resolve_seeds(merged: dict) -> None:
    base = merged["seed_all"]
    if base is not None:
        for offset, name in enumerate(_SEED_NAMES):
            if merged[name] is None:
                merged[name] = base + offset
    missing = [name for name in _SEED_NAMES if merged[name] is None]
    if missing:
        flags = ", ".join("--" + name.replace("_", "-") for name in missing)
        raise _UsageError(
            f"explicit seeds are required for reproducible runs; give --seed-all or {flags}"
        )


def _need(merged: dict, key: str, why: str):
    if merged[key] is None:
        raise _UsageError(f"--{key.replace('_', '-')} is required {why}")
    return merged[key]


def _load_scheme_or_plan(path):
    raw = _read_json(path)
    if "alpha" in raw:
        return partial.import_plan(path)
    return codec.import_code(path)


def _build_strategy(merged: dict) -> sim.Strategy:
    name = _need(merged, "strategy", "(naive, ignore, coded, or partial)")
    if name == "naive":
        return sim.Naive(_need(merged, "n", "for the naive strategy"))
    if name == "ignore":
        return sim.IgnoreStragglers(
            _need(merged, "n", "for the ignore strategy"),
            _need(merged, "s", "for the ignore strategy"),
        )
    if name not in ("coded", "partial"):
        raise _UsageError(f"unknown strategy {name!r}")
    if merged["scheme_file"] is not None:
        loaded = _load_scheme_or_plan(merged["scheme_file"])
        if isinstance(loaded, partial.TwoStagePlan):
            if name == "coded":
                raise ConfigError(
                    f"{merged['scheme_file']} holds a two-stage plan; use --strategy partial"
                )
            return sim.PartialCoded(loaded)
        if name == "partial":
            raise ConfigError(
                f"{merged['scheme_file']} holds a plain scheme; the partial strategy needs a plan file"
            )
        return sim.Coded(loaded)
    kind = _need(merged, "kind", "to build a scheme inline (or give --scheme-file)")
    n = _need(merged, "n", "to build a scheme inline")
    s = _need(merged, "s", "to build a scheme inline")
    if name == "partial":
        alpha = _need(merged, "alpha", "for a two-stage plan")
        return sim.PartialCoded(
            partial.plan_partial(n, s, alpha, kind=kind, seed=merged["seed_scheme"])
        )
    if kind == codec.FRAC:
        return sim.Coded(codec.build_frac(n, s))
    if kind == codec.CYC:
        return sim.Coded(codec.build_cyc(n, s, merged["seed_scheme"]))
    raise _UsageError(f"--kind must be frac or cyc for the coded strategy, got {kind!r}")


def _training_config(merged: dict) -> sim.TrainingConfig:
    _resolve_seeds(merged)
    strategy = _build_strategy(merged)
    optimizer = learn.OptimizerConfig(
        method=merged["optimizer"],
        eta=merged["eta"],
        c1=merged["c1"],
        c2=merged["c2"],
    )
    latency = sim.LatencyModel(
        compute_time_per_partition=merged["compute_time"],
        comm_time=merged["comm_time"],
        jitter_sigma=merged["jitter_sigma"],
    )
    policy = sim.StragglerPolicy(
        mode=merged["straggler_mode"],
        workers=merged["straggler_workers"],
        count=merged["straggler_count"],
        kind=merged["straggler_kind"],
        extra=merged["straggler_extra"],
        alpha=merged["straggler_alpha"],
    )
    seeds = sim.SeedBundle(*(merged[name] for name in _SEED_NAMES))
    return sim.TrainingConfig(
        strategy=strategy,
        optimizer=optimizer,
        seeds=seeds,
        d=merged["d"],
        p=merged["p"],
        iterations=merged["iterations"],
        latency=latency,
        policy=policy,
        holdout_frac=merged["holdout_frac"],
        auc_interval=merged["auc_interval"],
        verify_decode=merged["verify_decode"],
        label=merged["label"],
    )


def _echo_config(merged: dict, path) -> None:
    echo = {k: (list(v) if isinstance(v, tuple) else v) for k, v in merged.items()}
    Path(path).write_text(json.dumps(echo, indent=1) + "\n")


def _fmt(value) -> str:
    if value is None:
        return "na"
    if isinstance(value, float):
        return repr(value)
    return str(value)


# ---------------------------------------------------------------------------
# scheme


def cmd_scheme_build(args: argparse.Namespace) -> int:
    kind = args.kind
    if kind in (codec.FRAC, codec.CYC) and args.s is None:
        raise _UsageError(f"--s is required for kind {kind!r}")
    if kind == codec.CYC and args.seed is None:
        raise _UsageError("cyclic schemes draw H at random; give an explicit --seed")
    if args.alpha is not None:
        if kind == codec.NAIVE:
            raise _UsageError("two-stage plans need a frac or cyc stage-two code")
        plan = partial.plan_partial(args.n, args.s, args.alpha, kind=kind, seed=args.seed)
        partial.export_plan(plan, args.out)
        print(
            f"wrote {args.out}: two-stage kind={kind} n={plan.n} s={plan.s} "
            f"alpha={_fmt(plan.alpha)} naive_per_worker={plan.naive_per_worker} "
            f"partitions={plan.total_partitions} "
            f"load_fraction={_fmt(partial.load_fraction(plan.n, plan.s, plan.alpha))} "
            f"slack={_fmt(partial.timing_slack(plan))}"
        )
        return EXIT_OK
    if kind == codec.NAIVE:
        if args.s not in (None, 0):
            raise _UsageError("the naive scheme has no straggler tolerance; drop --s")
        code = codec.build_naive(args.n)
    elif kind == codec.FRAC:
        code = codec.build_frac(args.n, args.s)
    else:
        code = codec.build_cyc(args.n, args.s, args.seed)
    codec.export_code(code, args.out)
    report = codec.density_check(code)
    print(
        f"wrote {args.out}: kind={code.kind} n={code.n} k={code.k} s={code.s} "
        f"density_bound={report.bound} equality={report.meets_bound_with_equality}"
    )
    return EXIT_OK


def _verify_code(code: codec.GradientCode, budget: int) -> bool:
    ok = True
    span = codec.verify_bspan(code, budget=budget)
    if span.ok:
        print(f"bspan: ok checked={span.checked} max_residual={_fmt(span.max_residual)}")
    else:
        ok = False
        print(
            f"bspan: FAIL failures={len(span.failures)}/{span.checked} "
            f"first={span.failures[0]} max_residual={_fmt(span.max_residual)}"
        )
    dens = codec.density_check(code)
    print(
        f"density: bound={dens.bound} equality={dens.meets_bound_with_equality} "
        f"min={dens.min_row_density}"
    )
    if code.kind == codec.CYC:
        if code.h_seed is None:
            print("mds: skipped (no recorded h_seed)")
        else:
            H = codec.cyc_h_matrix(code.n, code.s, code.h_seed)
            mds = codec.mds_check(H, budget=budget)
            if mds.ok:
                print(
                    f"mds: ok checked={mds.checked} min_singular={_fmt(mds.min_singular)}"
                )
            else:
                ok = False
                print(
                    f"mds: FAIL failures={len(mds.failures)}/{mds.checked} "
                    f"first={mds.failures[0]}"
                )
    return ok


def cmd_scheme_verify(args: argparse.Namespace) -> int:
    loaded = _load_scheme_or_plan(args.file)
    if isinstance(loaded, partial.TwoStagePlan):
        print(
            f"plan: alpha={_fmt(loaded.alpha)} naive_per_worker={loaded.naive_per_worker} "
            f"slack={_fmt(partial.timing_slack(loaded))} "
            f"load_fraction={_fmt(partial.load_fraction(loaded.n, loaded.s, loaded.alpha))}"
        )
        code = loaded.code
    else:
        code = loaded
    ok = _verify_code(code, args.budget)
    print("verify: ok" if ok else "verify: FAIL")
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_scheme_inspect(args: argparse.Namespace) -> int:
    loaded = _load_scheme_or_plan(args.file)
    if isinstance(loaded, partial.TwoStagePlan):
        plan = loaded
        print(f"two-stage plan: n={plan.n} s={plan.s} alpha={_fmt(plan.alpha)}")
        print(
            f"partitions: naive={plan.naive_partitions_total} "
            f"coded={plan.coded_partitions_total} total={plan.total_partitions}"
        )
        print(
            f"per-worker load: naive={plan.naive_per_worker} "
            f"coded={plan.code.s + 1} "
            f"fraction={_fmt(partial.realized_load_fraction(plan))} "
            f"(formula {_fmt(partial.load_fraction(plan.n, plan.s, plan.alpha))})"
        )
        print(f"timing slack: {_fmt(partial.timing_slack(plan))}")
        code = plan.code
        print(f"stage-two code: kind={code.kind} n={code.n} k={code.k} s={code.s}")
        return EXIT_OK
    code = loaded
    dens = codec.density_check(code)
    print(f"scheme: kind={code.kind} n={code.n} k={code.k} s={code.s}")
    if code.h_seed is not None:
        print(f"h_seed: {code.h_seed}")
    print(f"survivors needed: {code.survivors_needed}")
    print(
        f"row density: bound={dens.bound} min={dens.min_row_density} "
        f"equality={dens.meets_bound_with_equality}"
    )
    for w in range(code.n):
        supp = codec.assignment(code, w)
        print(f"worker {w}: partitions={supp}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate and compare


def _summary_line(result: sim.RunResult) -> str:
    return (
        f"run {result.label}: iterations={len(result.traces)} "
        f"total_sim_time_s={_fmt(result.total_time)} "
        f"final_loss={_fmt(result.final_loss)} final_auc={_fmt(result.final_auc)}"
    )


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _read_json(args.config) if args.config else {}
    merged = _merge_run(config, _flag_overrides(args))
    run_config = _training_config(merged)
    result = sim.run_training(run_config)
    sim.write_run_csv(result, args.out)
    echo_path = str(args.out) + ".config.json"
    _echo_config(merged, echo_path)
    print(_summary_line(result))
    print(f"wrote {args.out}")
    print(f"wrote {echo_path}")
    return EXIT_OK


def _bundle_entries(merged: dict) -> list[dict]:
    """The four-strategy lineup on one cluster: naive, ignore, frac, cyc."""
    n = _need(merged, "n", "for --bundle")
    s = _need(merged, "s", "for --bundle")
    return [
        {"strategy": "naive", "n": n, "s": None, "kind": None},
        {"strategy": "ignore", "n": n, "s": s, "kind": None},
        {"strategy": "coded", "n": n, "s": s, "kind": codec.FRAC},
        {"strategy": "coded", "n": n, "s": s, "kind": codec.CYC},
    ]


def cmd_compare(args: argparse.Namespace) -> int:
    overrides = _flag_overrides(args)
    if args.bundle and args.config:
        raise _UsageError("give either --bundle or --config, not both")
    if args.bundle:
        shared: dict = {}
        entries = _bundle_entries(_merge_run({}, overrides))
    elif args.config:
        raw = _read_json(args.config)
        unknown = set(raw) - {"shared", "runs"}
        if unknown:
            raise ConfigError(f"unknown compare config fields {sorted(unknown)}")
        shared = raw.get("shared", {})
        entries = raw.get("runs", [])
        if not isinstance(shared, dict):
            raise ConfigError("'shared' must be a JSON object")
        if not isinstance(entries, list) or not entries:
            raise ConfigError("'runs' must be a non-empty JSON array")
        if not all(isinstance(e, dict) for e in entries):
            raise ConfigError("every entry in 'runs' must be a JSON object")
    else:
        raise _UsageError("compare needs --bundle or --config FILE")

    merged_runs = []
    for entry in entries:
        merged = _merge_run(shared, overrides)
        for key, value in entry.items():
            merged[key] = None if value is None else _coerce(key, value)
        merged_runs.append(merged)

    results = []
    seen_labels = set()
    for merged in merged_runs:
        run_config = _training_config(merged)
        if run_config.run_label in seen_labels:
            raise ConfigError(
                f"duplicate run label {run_config.run_label!r}; set distinct --label values"
            )
        seen_labels.add(run_config.run_label)
        result = sim.run_training(run_config)
        results.append(result)
        print(_summary_line(result))

    comparison = sim.compare_runs(results)
    prefix = str(args.out_prefix)
    for result in results:
        path = f"{prefix}_{result.label}.csv"
        sim.write_run_csv(result, path)
        print(f"wrote {path}")
    it_path, th_path = f"{prefix}_iterations.csv", f"{prefix}_thresholds.csv"
    sim.write_comparison_csvs(comparison, it_path, th_path)
    echo_path = f"{prefix}.config.json"
    _echo_config(
        {"shared": {**shared, **overrides}, "runs": [dict(e) for e in entries]},
        echo_path,
    )
    print(f"wrote {it_path}")
    print(f"wrote {th_path}")
    print(f"wrote {echo_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def _add_run_flags(p: argparse.ArgumentParser, with_strategy: bool) -> None:
    if with_strategy:
        p.add_argument("--strategy", choices=["naive", "ignore", "coded", "partial"])
        p.add_argument("--scheme-file", dest="scheme_file")
        p.add_argument("--kind", choices=list(codec.KINDS))
        p.add_argument("--alpha", type=float)
        p.add_argument("--label")
    p.add_argument("--n", type=int)
    p.add_argument("--s", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--optimizer", choices=[learn.NAG, learn.GD_DECAY])
    p.add_argument("--eta", type=float)
    p.add_argument("--c1", type=float)
    p.add_argument("--c2", type=float)
    p.add_argument("--compute-time", dest="compute_time", type=float)
    p.add_argument("--comm-time", dest="comm_time", type=float)
    p.add_argument("--jitter-sigma", dest="jitter_sigma", help="number or 'none'")
    p.add_argument("--straggler-mode", dest="straggler_mode",
                   choices=["none", "fixed", "random"])
    p.add_argument("--straggler-workers", dest="straggler_workers",
                   help="comma-separated worker indices")
    p.add_argument("--straggler-count", dest="straggler_count", type=int)
    p.add_argument("--straggler-kind", dest="straggler_kind",
                   choices=["delay", "slowdown"])
    p.add_argument("--straggler-extra", dest="straggler_extra", type=float,
                   help="seconds added per message (inf allowed)")
    p.add_argument("--straggler-alpha", dest="straggler_alpha", type=float)
    p.add_argument("--holdout-frac", dest="holdout_frac", type=float)
    p.add_argument("--auc-interval", dest="auc_interval", type=int)
    p.add_argument("--verify-decode", dest="verify_decode", action="store_true")
    p.add_argument("--seed-all", dest="seed_all", type=int,
                   help="derive the four sub-seeds as N, N+1, N+2, N+3")
    p.add_argument("--seed-scheme", dest="seed_scheme", type=int)
    p.add_argument("--seed-data", dest="seed_data", type=int)
    p.add_argument("--seed-latency", dest="seed_latency", type=int)
    p.add_argument("--seed-straggler", dest="seed_straggler", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gradcode",
        description="Straggler-tolerant gradient aggregation schemes and simulation.",
    )
    top = parser.add_subparsers(dest="command", required=True)

    scheme = top.add_parser("scheme", help="build, verify, or inspect scheme files")
    sub = scheme.add_subparsers(dest="scheme_command", required=True)

    build = sub.add_parser("build", help="construct a scheme or two-stage plan")
    build.add_argument("--kind", required=True, choices=list(codec.KINDS))
    build.add_argument("--n", required=True, type=int)
    build.add_argument("--s", type=int)
    build.add_argument("--seed", type=int, help="H draw seed (required for cyc)")
    build.add_argument("--alpha", type=float,
                       help="build a two-stage plan for this slowdown factor")
    build.add_argument("--out", required=True)
    build.set_defaults(func=cmd_scheme_build)

    verify = sub.add_parser("verify", help="exhaustively check a scheme file")
    verify.add_argument("file")
    verify.add_argument("--budget", type=int, default=codec.DEFAULT_ENUMERATION_BUDGET)
    verify.set_defaults(func=cmd_scheme_verify)

    inspect = sub.add_parser("inspect", help="print a scheme file's layout")
    inspect.add_argument("file")
    inspect.set_defaults(func=cmd_scheme_inspect)

    simulate = top.add_parser("simulate", help="run one training simulation")
    simulate.add_argument("--config", help="JSON file of run parameters")
    _add_run_flags(simulate, with_strategy=True)
    simulate.add_argument("--out", required=True, help="per-iteration CSV path")
    simulate.set_defaults(func=cmd_simulate)

    compare = top.add_parser("compare", help="run and align multiple simulations")
    compare.add_argument("--config", help="JSON with 'shared' and 'runs'")
    compare.add_argument("--bundle", action="store_true",
                         help="naive, ignore, frac, cyc on one cluster")
    _add_run_flags(compare, with_strategy=False)
    compare.add_argument("--out-prefix", dest="out_prefix", required=True)
    compare.set_defaults(func=cmd_compare)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except _UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except VALIDATION_ERRORS as err:
        print(f"validation error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except NUMERICAL_ERRORS as err:
        print(f"numerical error: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except IO_ERRORS as err:
        print(f"file error: {err}", file=sys.stderr)
        return EXIT_IO
    except OSError as err:
        print(f"file error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
