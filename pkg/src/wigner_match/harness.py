"""Experiment orchestration and the command-line interface.

Subcommands: ``generate``, ``match``, ``oracle``, ``diagnose``, ``sweep``,
``constants``.  A flat ``key = value`` config file can prefill any option;
explicit flags win.  Exit codes: 0 success, 2 usage, 3 numeric failure,
4 I/O failure.

Per-vertex outcome CSVs carry ``vertex,assigned,score,correct`` rows and a
run summary JSON records the config echo, the per-step set counts and
signal levels, flags and the wall time.  Sweep summaries are one CSV row
per parameter cell.  All randomness descends from the master seed, so any
invocation is reproducible; the only non-deterministic output fields are
the measured wall times.
"""

from __future__ import annotations

import argparse
import itertools
import json
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from . import gaussquad
from ._rng import seed_sequence
from .errors import ParameterError, WignerMatchError
from .matcher import (
    ARGMAX,
    FIRST_HIT,
    SEEDED,
    SEEDLESS,
    MatchOutcome,
    RunConfig,
    seeded_match,
    seedless_match,
)
from .model import generate_pair, load_pair, preprocess, save_directed, save_pair
from .oracle import brute_force_map, evaluate
from .matcher import overlap as overlap_value


@dataclass(frozen=True)
class SweepSpec:
    """Grids, trial count and bookkeeping for one parameter sweep."""

    n_grid: tuple
    epsilon_grid: tuple
    theta_grid: tuple = (1.0,)
    k0_grid: tuple = (12,)
    varkappa_grid: tuple = (6.0,)
    trials: int = 1
    master_seed: int = 0
    out_dir: str = "sweep-out"
    jobs: int | None = None
    t_max: int = 2
    finishing_mode: str = ARGMAX

    def __post_init__(self):
        for name in ("n_grid", "epsilon_grid", "theta_grid", "k0_grid", "varkappa_grid"):
            if not getattr(self, name):
                raise ParameterError(f"{name} must be nonempty")
        if self.trials < 1:
            raise ParameterError("trials must be >= 1")

    def cells(self) -> list:
        return list(
            itertools.product(
                self.n_grid, self.epsilon_grid, self.theta_grid, self.k0_grid, self.varkappa_grid
            )
        )


@dataclass(frozen=True)
class CellResult:
    """Aggregates over the trials of one parameter cell."""

    n: int
    epsilon: float
    theta: float
    k0: int
    varkappa: float
    trials: int
    recovery_mean: float
    recovery_sd: float
    exact_rate: float
    auc_mean: float
    time_mean_s: float
    flags: int

    def __post_init__(self):
        for name in ("recovery_mean", "exact_rate"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ParameterError(f"{name} out of [0, 1]: {v}")


def child_seed(master_seed: int, cell_index: int, trial_index: int) -> int:
    """Per-trial seed derived from the sweep master seed."""
    state = seed_sequence(master_seed, "sweep", cell_index, trial_index).generate_state(2, np.uint64)
    return int(state[0] ^ (state[1] << 1)) & ((1 << 63) - 1)


def outcome_rows(outcome: MatchOutcome, pi: np.ndarray) -> list:
    """Per-vertex CSV rows ``vertex,assigned,score,correct`` (non-seeds only)."""
    seeds = {u for u, _ in outcome.seed_pairs}
    rows = []
    for v in range(len(pi)):
        if v in seeds:
            continue
        assigned = outcome.mapping.get(v)
        correct = int(assigned is not None and assigned == int(pi[v]))
        rows.append(
            (
                v,
                "" if assigned is None else assigned,
                repr(float(outcome.scores.get(v, float("nan")))),
                correct,
            )
        )
    return rows


def write_outcome_csv(path, outcome: MatchOutcome, pi: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("vertex,assigned,score,correct\n")
        for row in outcome_rows(outcome, pi):
            fh.write(",".join(str(x) for x in row) + "\n")


def run_summary(cfg: RunConfig, outcome: MatchOutcome, wall_time: float) -> dict:
    state = outcome.trace.state if outcome.trace is not None else None
    return {
        "config": {
            "n": cfg.n,
            "epsilon": cfg.epsilon,
            "theta": cfg.theta,
            "k0": cfg.k0,
            "varkappa": cfg.varkappa_value,
            "k_max": cfg.k_max,
            "t_max": cfg.t_max,
            "sigma_threshold": cfg.sigma_threshold_value,
            "match_threshold_factor": cfg.match_threshold_factor,
            "finishing_mode": cfg.finishing_mode,
            "seed": cfg.seed,
            "seed_mode": cfg.seed_mode,
        },
        "K": list(state.K) if state else [],
        "eps": [float(e) for e in state.eps] if state else [],
        "status": outcome.status,
        "overlap": outcome.overlap,
        "flags": list(outcome.flags) + (list(state.flags) if state else []),
        "wall_time_s": wall_time,
    }


def _sweep_trial(args) -> tuple:
    (cell_index, trial_index, n, epsilon, theta, k0, varkappa, seed, out_dir, t_max, mode) = args
    cfg = RunConfig(
        n=n,
        epsilon=epsilon,
        theta=theta,
        k0=k0,
        varkappa=varkappa,
        t_max=t_max,
        finishing_mode=mode,
        seed=seed,
    )
    path = Path(out_dir) / f"cell{cell_index:03d}_trial{trial_index:03d}.csv"
    started = time.perf_counter()
    try:
        pair = generate_pair(n, epsilon, seed)
        outcome = seeded_match(pair, cfg)
        report = evaluate(outcome, pair)
        sep = diag.score_separation(outcome.trace, pair, cfg)
        write_outcome_csv(path, outcome, pair.pi)
        row = {
            "failed": False,
            "recovery": report.fraction_correct,
            "exact": report.exact,
            "auc": sep.auc,
            "flags": len(outcome.flags) + len(outcome.trace.state.flags),
            "time": time.perf_counter() - started,
        }
    except WignerMatchError as exc:
        with open(path, "w", newline="") as fh:
            fh.write("vertex,assigned,score,correct\n")
        row = {
            "failed": True,
            "error": str(exc),
            "recovery": 0.0,
            "exact": False,
            "auc": None,
            "flags": 1,
            "time": time.perf_counter() - started,
        }
    return cell_index, trial_index, row


SUMMARY_HEADER = (
    "n,epsilon,theta,k0,varkappa,trials,recovery_mean,recovery_sd,"
    "exact_rate,auc_mean,time_mean_s,flags"
)


def run_sweep(spec: SweepSpec) -> list:
    """Run every (cell, trial), persist per-trial CSVs and a summary CSV.

    Trials are independent and may run in parallel; rows are aggregated and
    written in deterministic order regardless of scheduling.  Per-trial
    algorithm failures become failed rows and never abort the sweep.
    """
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = []
    cells = spec.cells()
    for ci, (n, eps, theta, k0, vk) in enumerate(cells):
        for ti in range(spec.trials):
            tasks.append(
                (
                    ci,
                    ti,
                    int(n),
                    float(eps),
                    float(theta),
                    int(k0),
                    float(vk),
                    child_seed(spec.master_seed, ci, ti),
                    str(out),
                    spec.t_max,
                    spec.finishing_mode,
                )
            )
    rows: dict = {}
    if spec.jobs is not None and spec.jobs > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            for ci, ti, row in pool.map(_sweep_trial, tasks):
                rows[(ci, ti)] = row
    else:
        for task in tasks:
            ci, ti, row = _sweep_trial(task)
            rows[(ci, ti)] = row

    results = []
    for ci, (n, eps, theta, k0, vk) in enumerate(cells):
        cell_rows = [rows[(ci, ti)] for ti in range(spec.trials)]
        recoveries = [r["recovery"] for r in cell_rows]
        aucs = [r["auc"] for r in cell_rows if r["auc"] is not None]
        results.append(
            CellResult(
                n=int(n),
                epsilon=float(eps),
                theta=float(theta),
                k0=int(k0),
                varkappa=float(vk),
                trials=spec.trials,
                recovery_mean=float(statistics.fmean(recoveries)),
                recovery_sd=float(statistics.stdev(recoveries)) if len(recoveries) > 1 else 0.0,
                exact_rate=sum(r["exact"] for r in cell_rows) / spec.trials,
                auc_mean=float(statistics.fmean(aucs)) if aucs else float("nan"),
                time_mean_s=float(statistics.fmean(r["time"] for r in cell_rows)),
                flags=sum(r["flags"] for r in cell_rows),
            )
        )
    with open(out / "summary.csv", "w", newline="") as fh:
        fh.write(SUMMARY_HEADER + "\n")
        for r in results:
            fh.write(summary_row(r) + "\n")
    return results


def summary_row(r: CellResult) -> str:
    return ",".join(
        [
            str(r.n),
            repr(r.epsilon),
            repr(r.theta),
            str(r.k0),
            repr(r.varkappa),
            str(r.trials),
            repr(r.recovery_mean),
            repr(r.recovery_sd),
            repr(r.exact_rate),
            repr(r.auc_mean),
            f"{r.time_mean_s:.3f}",
            str(r.flags),
        ]
    )


# ---------------------------------------------------------------------------
# Config files: flat "key = value" lines, '#' comments.  Keys mirror the
# RunConfig / SweepSpec field names exactly.


def parse_config_file(path) -> dict:
    values: dict = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key] = _parse_scalar(value)
    return values


def _parse_scalar(text: str):
    if "," in text:
        return tuple(_parse_scalar(part.strip()) for part in text.split(",") if part.strip())
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


_RUN_KEYS = {f.name for f in fields(RunConfig)}


def config_from_sources(file_values: dict, overrides: dict) -> RunConfig:
    merged = {k: v for k, v in file_values.items() if k in _RUN_KEYS}
    unknown = set(file_values) - _RUN_KEYS - {f.name for f in fields(SweepSpec)}
    if unknown:
        raise ParameterError(f"unknown config keys: {sorted(unknown)}")
    merged.update({k: v for k, v in overrides.items() if v is not None})
    missing = {"n", "epsilon", "seed"} - set(merged)
    if missing:
        raise ParameterError(f"missing required settings: {sorted(missing)}")
    return RunConfig(**merged)


# ---------------------------------------------------------------------------
# CLI


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wigner-match")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("constants", help="print the tail constants for a threshold")
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--quad-tol", type=float, default=1e-10)

    p = sub.add_parser("generate", help="generate a correlated pair and write it")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--directed", action="store_true", help="also write the preprocessed pair")

    p = sub.add_parser("match", help="run the matcher on a generated or stored pair")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--seeded", action="store_true")
    mode.add_argument("--seedless", action="store_true")
    p.add_argument("--n", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--in", dest="in_dir", help="read the pair from this directory")
    p.add_argument("--out", default=None, help="directory for outcome.csv and run_summary.json")
    p.add_argument("--config", default=None)
    p.add_argument("--theta", type=float)
    p.add_argument("--k0", type=int)
    p.add_argument("--varkappa", type=float)
    p.add_argument("--k-max", dest="k_max", type=int)
    p.add_argument("--t-max", dest="t_max", type=int)
    p.add_argument("--finishing-mode", choices=(FIRST_HIT, ARGMAX))
    p.add_argument("--match-threshold-factor", dest="match_threshold_factor", type=float)

    p = sub.add_parser("oracle", help="brute-force baseline at tiny sizes")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")

    p = sub.add_parser("diagnose", help="run seeded matching plus diagnostics reports")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--theta", type=float)
    p.add_argument("--k0", type=int)
    p.add_argument("--t-max", dest="t_max", type=int)

    p = sub.add_parser("sweep", help="grid of seeded trials with CSV aggregation")
    p.add_argument("--config", default=None)
    p.add_argument("--n-grid")
    p.add_argument("--epsilon-grid")
    p.add_argument("--theta-grid")
    p.add_argument("--k0-grid")
    p.add_argument("--varkappa-grid")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default=None)
    p.add_argument("--jobs", type=int)
    return parser


def _cmd_constants(args) -> int:
    cst = gaussquad.constants(theta=args.theta, quad_tol=args.quad_tol)
    print(f"alpha={cst.alpha!r}")
    print(f"iota={cst.iota!r}")
    if args.epsilon is not None:
        val = gaussquad.phi(args.epsilon, gaussquad.TailParams(args.theta, args.quad_tol))
        print(f"phi({args.epsilon})={val!r}")
    return 0


def _cmd_generate(args) -> int:
    pair = generate_pair(args.n, args.epsilon, args.seed)
    save_pair(args.out, pair)
    if args.directed:
        save_directed(Path(args.out) / "directed", preprocess(pair))
    print(f"wrote pair n={args.n} epsilon={args.epsilon} to {args.out}")
    return 0


def _cmd_match(args) -> int:
    file_values = parse_config_file(args.config) if args.config else {}
    if args.in_dir:
        pair = load_pair(args.in_dir)
        base = {"n": pair.n, "epsilon": pair.epsilon, "seed": pair.seed}
    else:
        if args.n is None or args.epsilon is None or args.seed is None:
            raise ParameterError("--n, --epsilon and --seed are required without --in")
        base = {}
        pair = None
    overrides = dict(base)
    for key in (
        "n",
        "epsilon",
        "seed",
        "theta",
        "k0",
        "varkappa",
        "k_max",
        "t_max",
        "finishing_mode",
        "match_threshold_factor",
    ):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    overrides["seed_mode"] = SEEDLESS if args.seedless else SEEDED
    cfg = config_from_sources(file_values, overrides)
    if pair is None:
        pair = generate_pair(cfg.n, cfg.epsilon, cfg.seed)
    started = time.perf_counter()
    outcome = seedless_match(pair, cfg) if args.seedless else seeded_match(pair, cfg)
    wall = time.perf_counter() - started
    out_dir = Path(args.out) if args.out else Path(".")
    out_dir.mkdir(parents=True, exist_ok=True)
    write_outcome_csv(out_dir / "outcome.csv", outcome, pair.pi)
    with open(out_dir / "run_summary.json", "w") as fh:
        json.dump(run_summary(cfg, outcome, wall), fh, indent=2, sort_keys=True)
        fh.write("\n")
    report = evaluate(outcome, pair)
    print(
        f"status={outcome.status} recovery={report.fraction_correct:.4f} "
        f"overlap={outcome.overlap:.4f} wall={wall:.2f}s"
    )
    return 0


def _cmd_oracle(args) -> int:
    lines = ["trial,oracle_correct,oracle_overlap,truth_overlap"]
    for trial in range(args.trials):
        pair = generate_pair(args.n, args.epsilon, child_seed(args.seed, 0, trial))
        mapping = brute_force_map(pair)
        correct = int(np.array_equal(mapping, pair.pi))
        lines.append(
            f"{trial},{correct},{overlap_value(pair, mapping)!r},{overlap_value(pair, pair.pi)!r}"
        )
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_diagnose(args) -> int:
    file_values = parse_config_file(args.config) if args.config else {}
    overrides = {"n": args.n, "epsilon": args.epsilon, "seed": args.seed}
    for key in ("theta", "k0", "t_max"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    cfg = config_from_sources(file_values, overrides)
    pair = generate_pair(cfg.n, cfg.epsilon, cfg.seed)
    outcome = seeded_match(pair, cfg)
    report = diag.admissibility_report(outcome.trace, pair, cfg)
    sep = diag.score_separation(outcome.trace, pair, cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    diag.write_report_csv(report, out_dir / "diagnostics.csv")
    with open(out_dir / "summary.txt", "w") as fh:
        fh.write(diag.summarize(report, sep) + "\n")
    print(diag.summarize(report, sep))
    return 0


def _parse_grid(text, cast):
    if text is None:
        return None
    return tuple(cast(part) for part in str(text).split(",") if part.strip())


def _cmd_sweep(args) -> int:
    file_values = parse_config_file(args.config) if args.config else {}
    spec_kwargs = {k: v for k, v in file_values.items() if k in {f.name for f in fields(SweepSpec)}}
    for key, cast in (
        ("n_grid", int),
        ("epsilon_grid", float),
        ("theta_grid", float),
        ("k0_grid", int),
        ("varkappa_grid", float),
    ):
        flag = getattr(args, key.replace("_grid", "") + "_grid", None) or getattr(args, key, None)
        parsed = _parse_grid(flag, cast)
        if parsed is not None:
            spec_kwargs[key] = parsed
        elif key in spec_kwargs and not isinstance(spec_kwargs[key], tuple):
            spec_kwargs[key] = (spec_kwargs[key],)
    if args.trials is not None:
        spec_kwargs["trials"] = args.trials
    if args.seed is not None:
        spec_kwargs["master_seed"] = args.seed
    if args.out is not None:
        spec_kwargs["out_dir"] = args.out
    if args.jobs is not None:
        spec_kwargs["jobs"] = args.jobs
    if "master_seed" not in spec_kwargs:
        raise ParameterError("--seed (or master_seed in the config) is required")
    spec = SweepSpec(**spec_kwargs)
    results = run_sweep(spec)
    for r in results:
        print(summary_row(r))
    return 0


_COMMANDS = {
    "constants": _cmd_constants,
    "generate": _cmd_generate,
    "match": _cmd_match,
    "oracle": _cmd_oracle,
    "diagnose": _cmd_diagnose,
    "sweep": _cmd_sweep,
}


def cli(argv) -> int:
    """Entry point used by the console script; returns the exit status."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except WignerMatchError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io failure: {exc}", file=sys.stderr)
        return 4


def main() -> None:
    sys.exit(cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
