"""YAML experiment configuration: parsing, overrides and validation."""
from __future__ import annotations

import copy
import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .datastream import DriftSpec, StreamSpec
from .metrics import RecoveryConfig
from .model import LossParams
from .scheduler import RunConfig
from .train import TrainConfig
from .unlearn import UnlearnConfig

SCHEMA = """\
# driftunlearn experiment config (YAML)
stream:
  source: synthetic-gaussians   # or idx-files
  m: 200                        # chunk size, >= 1
  n_chunks: 30                  # >= 1
  seed: 0
  d: 10                         # synthetic: feature dimension
  n_classes: 3                  # synthetic: classes (10 for semantic-regroup)
  cov_scale: 0.15               # synthetic: per-coordinate std before clipping to [0, 1]
  mean_low: 0.25                # synthetic: class means ~ U(mean_low, mean_high)
  mean_high: 0.75
  images_path: null             # idx-files: image file (magic 0x00000803)
  labels_path: null             # idx-files: label file (magic 0x00000801)
  drift:
    kind: none                  # none | sudden-noise | semantic-regroup | mean-shift
    drift_chunk: 15             # first chunk of the new concept, >= 1
    sigma: 0.5                  # sudden-noise: noise std after drift
    sigma_before: 0.0           # sudden-noise: noise std before drift
    offset: 0.3                 # mean-shift: scalar or length-d list added to class means
    positive_old: [0, 2, 4, 7, 9]   # semantic-regroup: positive classes before drift
    positive_new: [1, 3, 5]         # semantic-regroup: positive classes after drift
model:
  lam: 0.1                      # ridge coefficient (= strong-convexity constant), > 0
runs:                           # at least one
  - algorithm: uil              # sw | uil
    L: 5                        # window length in chunks, >= 1
    anchor_period: null         # uil: scratch retrain every N shifts
    oracle_tracking: false      # uil: track distance to the exactly retrained model
    seed: null                  # overrides train.seed and unlearn.seed
    run_id: ""                  # default: <algorithm>-L<L>-s<seed>
    train:
      eta: 0.05                 # eta * lam must be < 1
      epochs_scratch: 20
      epochs_inc: 1
      minibatch: 50
      seed: 0
      convergence_tol: null     # early stop on full-gradient norm (scratch only)
      init: zeros               # zeros | random
      init_scale: 0.01
    unlearn:
      backend: newton-cg        # newton-exact | newton-cg | diag-fisher
      k: 256                    # curvature subsample size
      i: 20                     # max CG iterations
      cg_tol: 1.0e-8
      damping: null             # default 1e-3 * lam
      seed: 0
recovery:
  baseline_window: null         # default: L of the first run
  epsilon: 0.05
  smoothing: 3
theory:
  eval_samples: 5000            # held-out P_new samples for the loss-gap check
  burn_in: null                 # stability burn-in in shifts, default 3 * L
sweep: {}                       # e.g. {L: [4, 8, 16], seed: [0, 1, 2]}
output_dir: out                 # overridden by $DRIFTUNLEARN_OUTPUT_DIR
chart: false                    # also render SVG charts
"""

SWEEP_AXES = ("L", "seed", "algorithm", "anchor_period")


class ConfigError(ValueError):
    pass


@dataclass
class TheoryOptions:
    eval_samples: int = 5000
    burn_in: int | None = None


@dataclass
class ExperimentConfig:
    stream: StreamSpec
    model: LossParams
    runs: list[RunConfig]
    output_dir: Path = Path("out")
    chart: bool = False
    recovery: RecoveryConfig = field(default_factory=RecoveryConfig)
    theory: TheoryOptions = field(default_factory=TheoryOptions)
    sweep: dict[str, list] = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)


def _build(cls, data, where: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}.{unknown[0]}: unknown field")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


_PATH_TOKEN = re.compile(r"([^.\[\]]+)|\[(\d+)\]")


def set_path(tree: dict, path: str, value: Any) -> None:
    """Set ``runs[0].train.eta``-style paths inside a nested dict/list tree."""
    tokens = [(m.group(1), m.group(2)) for m in _PATH_TOKEN.finditer(path)]
    if not tokens:
        raise ConfigError(f"override {path!r}: empty path")
    node = tree
    for pos, (key, idx) in enumerate(tokens):
        last = pos == len(tokens) - 1
        if idx is not None:
            i = int(idx)
            if not isinstance(node, list) or i >= len(node):
                raise ConfigError(f"override {path!r}: index [{i}] out of range")
            if last:
                node[i] = value
            else:
                node = node[i]
        else:
            if not isinstance(node, dict):
                raise ConfigError(f"override {path!r}: {key} is not a mapping field")
            if last:
                node[key] = value
            else:
                node = node.setdefault(key, {})


def apply_overrides(tree: dict, overrides: list[str]) -> dict:
    tree = copy.deepcopy(tree)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected path=value")
        path, text = item.split("=", 1)
        set_path(tree, path.strip(), yaml.safe_load(text))
    return tree


def load_tree(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        tree = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"{path}: unparseable YAML{where}: {getattr(exc, 'problem', exc)}") from None
    if not isinstance(tree, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return tree


def _run_from(data, i: int, stream_seed: int) -> RunConfig:
    where = f"runs[{i}]"
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    data = dict(data)
    train = _build(TrainConfig, data.pop("train", None), f"{where}.train")
    unlearn = _build(UnlearnConfig, data.pop("unlearn", None), f"{where}.unlearn")
    run = _build(RunConfig, {**data, "train": train, "unlearn": unlearn}, where)
    if run.seed is not None:
        run.train = dataclasses.replace(run.train, seed=run.seed)
        run.unlearn = dataclasses.replace(run.unlearn, seed=run.seed)
    if not run.run_id:
        run.run_id = f"{run.algorithm}-L{run.L}-s{stream_seed}"
    return run


def build_config(tree: dict) -> ExperimentConfig:
    tree = copy.deepcopy(tree)
    known = {"stream", "model", "runs", "output_dir", "chart", "recovery", "theory", "sweep"}
    unknown = sorted(set(tree) - known)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown top-level field")

    stream_data = dict(tree.get("stream") or {})
    drift_data = stream_data.pop("drift", None)
    if isinstance(drift_data, dict):
        for key in ("positive_old", "positive_new"):
            if key in drift_data:
                drift_data[key] = tuple(drift_data[key])
    drift = _build(DriftSpec, drift_data, "stream.drift")
    stream = _build(StreamSpec, {**stream_data, "drift": drift}, "stream")

    model_data = dict(tree.get("model") or {})
    unknown = sorted(set(model_data) - {"lam"})
    if unknown:
        raise ConfigError(f"model.{unknown[0]}: unknown field")
    try:
        params = LossParams(float(model_data.get("lam", 0.1)), stream.model_classes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model.lam: {exc}") from None

    runs_data = tree.get("runs")
    if not runs_data or not isinstance(runs_data, list):
        raise ConfigError("runs: at least one run is required")
    runs = [_run_from(r, i, stream.seed) for i, r in enumerate(runs_data)]
    for i, run in enumerate(runs):
        if run.train.eta * params.lam >= 1:
            raise ConfigError(f"runs[{i}].train.eta: eta * lam = {run.train.eta * params.lam:.3g} must be < 1")
    seen = set()
    for run in runs:
        base, n = run.run_id, 1
        while run.run_id in seen:
            n += 1
            run.run_id = f"{base}-{n}"
        seen.add(run.run_id)

    rec_data = dict(tree.get("recovery") or {})
    if rec_data.get("baseline_window") is None:
        rec_data["baseline_window"] = runs[0].L
    recovery = _build(RecoveryConfig, rec_data, "recovery")
    theory = _build(TheoryOptions, tree.get("theory"), "theory")

    sweep = tree.get("sweep") or {}
    if not isinstance(sweep, dict):
        raise ConfigError("sweep: expected a mapping of axis -> list")
    for axis, values in sweep.items():
        if axis not in SWEEP_AXES:
            raise ConfigError(f"sweep.{axis}: unknown axis (allowed: {', '.join(SWEEP_AXES)})")
        if not isinstance(values, list) or not values:
            raise ConfigError(f"sweep.{axis}: expected a non-empty list")

    chart = tree.get("chart", False)
    if not isinstance(chart, bool):
        raise ConfigError("chart: expected true or false")
    return ExperimentConfig(
        stream=stream, model=params, runs=runs,
        output_dir=Path(tree.get("output_dir") or "out"), chart=chart,
        recovery=recovery, theory=theory, sweep=sweep, raw=tree,
    )


def load_config(path, overrides: list[str] | None = None) -> ExperimentConfig:
    return build_config(apply_overrides(load_tree(path), overrides or []))
