"""Execute configured runs and turn them into CSV rows and theory reports."""
from __future__ import annotations

import copy
import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path


from . import theory
from .config import ExperimentConfig, build_config
from .datastream import materialize, sample_phase
from .metrics import RecoveryConfig, deterioration, prequential_accuracy, recovery_time, resource_summary
from .model import convexity_constants
from .scheduler import RunConfig, run, run_pair_with_oracle

RUNLOG_COLUMNS = ("run_id", "algo", "L", "seed", "chunk", "accuracy", "loss", "wall_ns",
                  "grad_evals", "hvp_units", "bytes", "param_dist")
METRICS_COLUMNS = ("run_id", "algo", "L", "seed", "mean_acc", "recovery", "det_max", "det_avg",
                   "s_per_chunk", "mb_per_chunk", "grad_evals", "hvp_units")
NOT_RECOVERED_TEXT = "not_recovered"
DATA_MB_NOTE = ("mb_per_chunk = training bytes read per post-warm-up chunk / 2^20 "
                "(sw: window; uil: forget chunk + retained window + new chunk)")


class SchemaError(ValueError):
    pass


@dataclass
class RunResult:
    run_id: str
    algo: str
    L: int
    seed: int
    records: list
    metrics: dict
    theory: dict = field(default_factory=dict)
    violations: list[str] = field(default_factory=list)
    trajectory: list = field(default_factory=list, repr=False)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def metrics_row(cfg: ExperimentConfig, runcfg: RunConfig, records) -> dict:
    _, mean_acc = prequential_accuracy(records)
    res = resource_summary(records, start_chunk=min(runcfg.L, records[-1].chunk))
    rec = det_max = det_avg = None
    drift = cfg.stream.drift
    acc = [r.accuracy for r in records]
    rc = RecoveryConfig(cfg.recovery.baseline_window, cfg.recovery.epsilon, cfg.recovery.smoothing)
    if drift.kind != "none" and rc.baseline_window <= drift.drift_chunk < len(acc):
        r = recovery_time(acc, drift.drift_chunk, rc)
        rec = NOT_RECOVERED_TEXT if r is None else r
        det_max, det_avg = deterioration(acc, drift.drift_chunk, rc)
    return {
        "run_id": runcfg.run_id, "algo": runcfg.algorithm, "L": runcfg.L, "seed": cfg.stream.seed,
        "mean_acc": mean_acc, "recovery": rec, "det_max": det_max, "det_avg": det_avg,
        "s_per_chunk": res.s_per_chunk, "mb_per_chunk": res.mb_per_chunk,
        "grad_evals": res.grad_evals, "hvp_units": res.hvp_units,
    }


def theory_sections(cfg: ExperimentConfig, runcfg: RunConfig, trace) -> tuple[dict, list[str]]:
    """Accumulation, loss-gap and stability reports for one instrumented run."""
    sections, violations = {}, []
    L = runcfg.L
    drift = cfg.stream.drift
    sections["run"] = {"run_id": runcfg.run_id, "L": L, "shifts": trace.T, "mu": trace.mu,
                       "beta": trace.beta, "eta": trace.eta, "e_final": trace.e[-1] if trace.e else 0.0,
                       "data_mb_note": DATA_MB_NOTE}
    if drift.kind == "none":
        burn = cfg.theory.burn_in if cfg.theory.burn_in is not None else 3 * L
        burn = min(burn, max(trace.T - 1, 0))
        if trace.T >= 1:
            st = theory.stability_check(trace, start=burn)
            e_after = trace.e[burn + 1:]
            ok = st.e_inf_hat is not None and max(e_after) <= 1.5 * st.e_inf_hat + 1e-6
            sections["stability"] = {
                "burn_in": burn, "fraction_stable": st.fraction_stable, "e_inf_hat": st.e_inf_hat,
                "max_e_after_burn_in": max(e_after), "bound_1_5_e_inf": 1.5 * (st.e_inf_hat or 0.0),
                "holds": ok, "reference": "per-step oracle (sliding-window optimum) rather than a fixed stationary optimum",
            }
            if not ok:
                violations.append(f"{runcfg.run_id}: stationary error exceeds 1.5 * e_inf")
        return sections, violations

    # shift t processes chunk L-1+t; the window is purely post-drift from chunk drift+L-1
    onset = drift.drift_chunk - L
    if onset >= 0 and trace.T >= onset + L:
        acc = theory.accumulation_check(trace, L=L, start=onset)
        sections["accumulation"] = acc
        if not acc.holds:
            violations.append(f"{runcfg.run_id}: accumulation bound violated")
        if cfg.stream.source == "synthetic-gaussians":
            X_eval, y_eval = sample_phase(cfg.stream, cfg.theory.eval_samples, "new")
            beta = max(trace.beta, convexity_constants(X_eval, cfg.model)[1])
            t1 = theory.loss_gap_check(trace.thetas[onset + L], trace.oracle_thetas[onset + L], beta, L,
                                       acc.delta_max, X_eval, y_eval, cfg.model, e0=acc.e_start)
            sections["loss_gap"] = t1
            if not t1.holds:
                violations.append(f"{runcfg.run_id}: loss-gap bound violated")
    else:
        sections["accumulation"] = {"skipped": f"need drift_chunk >= L and {L} shifts after drift onset"}
    return sections, violations


def execute_run(cfg: ExperimentConfig, runcfg: RunConfig, force_oracle: bool = False) -> RunResult:
    chunks = materialize(cfg.stream)
    sections, violations = {}, []
    if runcfg.algorithm == "uil" and (runcfg.oracle_tracking or force_oracle):
        log, _, trace = run_pair_with_oracle(chunks, cfg.model, runcfg)
        sections, violations = theory_sections(cfg, runcfg, trace)
    else:
        log = run(chunks, cfg.model, runcfg)
    return RunResult(runcfg.run_id, runcfg.algorithm, runcfg.L, cfg.stream.seed, log.records,
                     metrics_row(cfg, runcfg, log.records), sections, violations, log.trajectory)


def runlog_rows(result: RunResult):
    for r in result.records:
        yield {
            "run_id": result.run_id, "algo": result.algo, "L": result.L, "seed": result.seed,
            "chunk": r.chunk, "accuracy": r.accuracy, "loss": r.loss, "wall_ns": r.wall_ns,
            "grad_evals": r.grad_evals, "hvp_units": r.hvp_units, "bytes": r.bytes,
            "param_dist": r.param_dist,
        }


def write_csv(path, columns, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])
    return path


def read_csv(path, required=None) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in (required or ()) if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column {missing[0]!r}")
        return list(reader)


def write_theory_report(path, results: list[RunResult]) -> Path:
    parts = []
    for res in results:
        if res.theory:
            parts.append(f"[{res.run_id}]\n" + theory.format_report(res.theory))
        else:
            parts.append(f"[{res.run_id}]\nrun.oracle_tracking = false\n")
    Path(path).write_text("\n".join(parts))
    return Path(path)


def expand_sweep(cfg: ExperimentConfig) -> list[ExperimentConfig]:
    """One config per point of the sweep grid; run ids carry the axis values."""
    if not cfg.sweep:
        return [cfg]
    axes = list(cfg.sweep)
    out = []
    for values in itertools.product(*(cfg.sweep[a] for a in axes)):
        tree = copy.deepcopy(cfg.raw)
        tree.pop("sweep", None)
        for axis, value in zip(axes, values):
            if axis == "seed":
                tree.setdefault("stream", {})["seed"] = value
            else:
                for r in tree["runs"]:
                    r[axis] = value
        for r in tree["runs"]:
            if r.get("run_id"):
                r["run_id"] = f"{r['run_id']}-" + "-".join(f"{a}{v}" for a, v in zip(axes, values))
        out.append(build_config(tree))
    return out
