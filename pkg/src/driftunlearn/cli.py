"""Command-line entry point: ``driftunlearn <command> [options]``.

Exit codes: 0 success, 2 configuration or input error, 3 runtime failure,
4 bound violation reported by ``verify-theory``.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import experiment as ex
from . import plotting
from .config import SCHEMA, ConfigError, ExperimentConfig, load_config

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VIOLATION = 0, 2, 3, 4
OUTPUT_ENV = "DRIFTUNLEARN_OUTPUT_DIR"
COMPARE_ROWS = ("mean_acc", "s_per_chunk", "mb_per_chunk", "recovery", "det_max", "det_avg",
                "grad_evals", "hvp_units")

log = logging.getLogger("driftunlearn")


class InputError(ValueError):
    """Bad input files or arguments (exit code 2)."""


# ---------------------------------------------------------------- helpers

def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config, args.override)
    out = args.output_dir or os.environ.get(OUTPUT_ENV) or cfg.output_dir
    cfg.output_dir = Path(out)
    try:
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output_dir: cannot create {cfg.output_dir}: {exc.strerror}") from None
    if not os.access(cfg.output_dir, os.W_OK):
        raise ConfigError(f"output_dir: {cfg.output_dir} is not writable")
    return cfg


def _execute_job(job):
    cfg, runcfg, force_oracle, per_run_dir = job
    res = ex.execute_run(cfg, runcfg, force_oracle)
    res.trajectory = []
    if per_run_dir is not None:
        d = Path(per_run_dir)
        ex.write_csv(d / f"{res.run_id}.runlog.csv", ex.RUNLOG_COLUMNS, ex.runlog_rows(res))
        ex.write_csv(d / f"{res.run_id}.metrics.csv", ex.METRICS_COLUMNS, [res.metrics])
    return res


def _execute(jobs, workers: int = 1):
    """Run jobs in order; with ``workers > 1`` on a process pool."""
    for cfg, runcfg, *_ in jobs:
        log.info("run %s (%s, L=%d, seed=%d)", runcfg.run_id, runcfg.algorithm, runcfg.L, cfg.stream.seed)
    if workers <= 1 or len(jobs) <= 1:
        return [_execute_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_execute_job, jobs))


def _write_outputs(out: Path, results, cfg: ExperimentConfig) -> list[Path]:
    rows = [row for res in results for row in ex.runlog_rows(res)]
    paths = [
        ex.write_csv(out / "runlog.csv", ex.RUNLOG_COLUMNS, rows),
        ex.write_csv(out / "metrics.csv", ex.METRICS_COLUMNS, [r.metrics for r in results]),
        ex.write_theory_report(out / "theory.txt", results),
    ]
    if cfg.chart:
        paths += _charts_from_rows(out, [{k: ex._fmt(v) for k, v in r.items()} for r in rows],
                                   _drift_marker(cfg))
    return paths


def _drift_marker(cfg: ExperimentConfig):
    return cfg.stream.drift.drift_chunk if cfg.stream.drift.kind != "none" else None


def _charts_from_rows(out: Path, runlog_rows, drift_chunk) -> list[Path]:
    paths = [plotting.accuracy_chart(runlog_rows, out / "accuracy.svg", drift_chunk)]
    if any(r.get("param_dist") not in ("", None) for r in runlog_rows):
        paths.append(plotting.distance_chart(runlog_rows, out / "distance.svg"))
    return paths


def compare_table(results) -> list[dict]:
    rows = []
    for metric in COMPARE_ROWS:
        row = {"metric": metric}
        for res in results:
            row[res.run_id] = res.metrics[metric]
        rows.append(row)
    return rows


def format_table(rows) -> str:
    cols = list(rows[0])
    cells = [[ex._fmt(r[c]) if not isinstance(r[c], float) else f"{r[c]:.4g}" for c in cols] for r in rows]
    widths = [max(len(c), *(len(line[i]) for line in cells)) for i, c in enumerate(cols)]
    fmt = lambda vals: "  ".join(v.ljust(w) for v, w in zip(vals, widths)).rstrip()  # noqa: E731
    return "\n".join([fmt(cols), fmt(["-" * w for w in widths])] + [fmt(line) for line in cells])


# ---------------------------------------------------------------- commands

def cmd_run(args) -> int:
    cfg = _load(args)
    results = _execute([(cfg, r, False, None) for r in cfg.runs])
    for p in _write_outputs(cfg.output_dir, results, cfg):
        print(p)
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load(args)
    algos = {r.algorithm for r in cfg.runs}
    if not {"sw", "uil"} <= algos:
        raise ConfigError("runs: compare needs at least one sw run and one uil run")
    results = _execute([(cfg, r, False, None) for r in cfg.runs])
    paths = _write_outputs(cfg.output_dir, results, cfg)
    table = compare_table(results)
    paths.append(ex.write_csv(cfg.output_dir / "compare.csv", list(table[0]), table))
    if cfg.chart:
        paths.append(plotting.compare_chart(
            ex.read_csv(cfg.output_dir / "compare.csv", ["metric"]), cfg.output_dir / "compare.svg"))
    print(format_table(table))
    print(f"# {ex.DATA_MB_NOTE}")
    for p in paths:
        print(p)
    return EXIT_OK


def _unique_run_ids(configs) -> list:
    jobs, seen = [], {}
    for cfg in configs:
        for run in cfg.runs:
            base = run.run_id
            n = seen.get(base, 0)
            seen[base] = n + 1
            if n:
                run = dataclasses.replace(run, run_id=f"{base}-p{n + 1}")
            jobs.append((cfg, run))
    return jobs


def cmd_sweep(args) -> int:
    cfg = _load(args)
    points = ex.expand_sweep(cfg)
    for p in points:
        p.output_dir = cfg.output_dir
    per_run = cfg.output_dir / "runs"
    per_run.mkdir(exist_ok=True)
    jobs = [(c, r, False, str(per_run)) for c, r in _unique_run_ids(points)]
    results = _execute(jobs, args.workers)
    # merge step: only the parent writes the combined files
    runlog = [row for res in results for row in ex.read_csv(per_run / f"{res.run_id}.runlog.csv")]
    metrics = [row for res in results for row in ex.read_csv(per_run / f"{res.run_id}.metrics.csv")]
    paths = [
        ex.write_csv(cfg.output_dir / "runlog.csv", ex.RUNLOG_COLUMNS, runlog),
        ex.write_csv(cfg.output_dir / "metrics.csv", ex.METRICS_COLUMNS, metrics),
        ex.write_theory_report(cfg.output_dir / "theory.txt", results),
    ]
    if cfg.chart:
        paths.append(plotting.cost_chart(metrics, cfg.output_dir / "cost.svg"))
        paths += _charts_from_rows(cfg.output_dir, runlog, _drift_marker(cfg))
    print(format_table([{c: _maybe_float(m[c]) for c in ("run_id",) + ex.METRICS_COLUMNS[4:]} for m in metrics]))
    for p in paths:
        print(p)
    return EXIT_OK


def _maybe_float(text):
    for conv in (int, float):
        try:
            return conv(text)
        except (TypeError, ValueError):
            pass
    return text


def cmd_verify_theory(args) -> int:
    cfg = _load(args)
    uil = [r for r in cfg.runs if r.algorithm == "uil"]
    if not uil:
        raise ConfigError("runs: verify-theory needs at least one uil run")
    results = _execute([(cfg, r, True, None) for r in uil])
    path = ex.write_theory_report(cfg.output_dir / "theory.txt", results)
    print(path.read_text(), end="")
    violations = [v for r in results for v in r.violations]
    for v in violations:
        print(f"VIOLATION {v}", file=sys.stderr)
    return EXIT_VIOLATION if violations else EXIT_OK


def cmd_chart(args) -> int:
    out = Path(args.out or os.environ.get(OUTPUT_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    if not (args.runlog or args.metrics or args.compare):
        raise InputError("chart: give at least one of --runlog, --metrics, --compare")
    paths = []
    if args.runlog:
        rows = ex.read_csv(args.runlog, ("run_id", "chunk", "accuracy", "param_dist"))
        paths.append(plotting.accuracy_chart(rows, out / "accuracy.svg", args.drift_chunk))
        if any(r["param_dist"] for r in rows):
            paths.append(plotting.distance_chart(rows, out / "distance.svg"))
    if args.metrics:
        rows = ex.read_csv(args.metrics, ("algo", "L", args.cost_column))
        paths.append(plotting.cost_chart(rows, out / "cost.svg", args.cost_column))
    if args.compare:
        paths.append(plotting.compare_chart(ex.read_csv(args.compare, ("metric",)), out / "compare.svg"))
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_print_schema(args) -> int:
    print(SCHEMA, end="")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="driftunlearn", description="Sliding-window retraining vs. unlearning on drifting streams.")
    p.add_argument("--print-schema", action="store_true", help="print the documented config schema and exit")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command")

    def with_config(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config", help="YAML experiment config")
        sp.add_argument("--override", action="append", default=[], metavar="PATH=VALUE",
                        help="override a config field, e.g. runs[0].L=8 (repeatable)")
        sp.add_argument("--output-dir", help=f"output directory (else ${OUTPUT_ENV}, else config output_dir)")
        sp.set_defaults(func=func)
        return sp

    with_config("run", cmd_run, "run every configured run; write runlog.csv, metrics.csv, theory.txt")
    with_config("compare", cmd_compare, "side-by-side SW vs UIL metrics table (text + compare.csv)")
    sw = with_config("sweep", cmd_sweep, "expand the sweep grid and run every point")
    sw.add_argument("--workers", type=int, default=1, help="process-pool size (default 1)")
    with_config("verify-theory", cmd_verify_theory, "check the error bounds on instrumented UIL runs")

    ch = sub.add_parser("chart", help="render SVG charts from CSV outputs")
    ch.add_argument("--runlog", help="run-log CSV: accuracy and distance vs chunk")
    ch.add_argument("--metrics", help="metrics CSV: cost vs L")
    ch.add_argument("--compare", help="compare CSV: one panel per metric")
    ch.add_argument("--drift-chunk", type=int, default=None, help="draw a drift marker at this chunk")
    ch.add_argument("--cost-column", default="grad_evals", help="metrics column for the cost chart")
    ch.add_argument("--out", help="output directory")
    ch.set_defaults(func=cmd_chart)

    ps = sub.add_parser("print-schema", help="print the documented config schema")
    ps.set_defaults(func=cmd_print_schema)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.print_schema:
        return cmd_print_schema(args)
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, InputError, ex.SchemaError, plotting.ChartError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any failure past validation is a runtime error
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
