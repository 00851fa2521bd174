"""Experiment recipes shared by the CLI and the acceptance suite.

A distillation run is fully described by a JSON config (see
:data:`DISTILL_SCHEMA`); :func:`resolve_config` fills defaults and
:func:`run_distill` executes it.  Sweeps vary one key of that config over a
list of values and seeds.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .data import LabeledDataset, kfold_split, load_dataset, minmax_normalize, minmax_stats
from .interpret import DEFAULT_EPSILON, InterpretationReport, derive_seed, run_interpretation
from .io_utils import canonical_json
from .nn import TrainConfig, init_truncated_normal, load_model, predict_proba, train
from .bounds import PwlnArchitecture

CSV_COLUMNS = (
    "axis_value",
    "seed",
    "estimator",
    "H_before",
    "H_after",
    "interpretability",
    "fidelity_before",
    "fidelity_after",
    "wall_ms",
)
METRIC_COLUMNS = CSV_COLUMNS[3:8]
AGGREGATE_SEED = "aggregate"

# keys that only steer where output goes; they are not part of a run's identity
OUTPUT_KEYS = ("out_dir", "data_dir", "verbose", "plot", "workers", "record_timing")

_MODEL_SPEC = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["mlp", "tree", "logistic", "ensemble"]},
        "layers": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "optimizer": {"enum": ["sgd", "rmsprop", "adam"]},
        "learning_rate": {"type": "number", "exclusiveMinimum": 0},
        "batch_size": {"type": "integer", "minimum": 1},
        "epochs": {"type": "integer", "minimum": 0},
        "bias_init": {"type": "number"},
        "max_depth": {"type": "integer", "minimum": 1},
        "min_samples_leaf": {"type": "integer", "minimum": 1},
        "members": {"type": "array", "items": {"$ref": "#/$defs/model"}, "minItems": 1},
    },
    "additionalProperties": False,
    "allOf": [
        {"if": {"properties": {"kind": {"const": "ensemble"}}, "required": ["kind"]}, "then": {"required": ["members"]}},
        {
            "if": {"properties": {"kind": {"enum": ["mlp"]}}},
            "then": {"required": ["layers"]},
        },
    ],
}

DISTILL_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$defs": {"model": _MODEL_SPEC},
    "type": "object",
    "properties": {
        "dataset": {"type": "string", "minLength": 1},
        "seed": {"type": "integer", "minimum": 0},
        "folds": {"type": "integer", "minimum": 2},
        "eval_fold": {"type": "integer", "minimum": 0},
        "split_seed": {"type": "integer", "minimum": 0},
        "model_b": {"$ref": "#/$defs/model"},
        "model_b_path": {"type": "string"},
        "model_a": {"$ref": "#/$defs/model"},
        "query_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "estimator": {"enum": ["agreement", "diff"]},
        "epsilon": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "target_mode": {"enum": ["hard_labels", "soft_probabilities"]},
        "out_dir": {"type": "string"},
        "data_dir": {"type": "string"},
        "verbose": {"type": "boolean"},
        "plot": {"type": "boolean"},
        "workers": {"type": "integer", "minimum": 1},
        "record_timing": {"type": "boolean"},
    },
    "required": ["dataset", "model_a"],
    "additionalProperties": False,
    "oneOf": [{"required": ["model_b"]}, {"required": ["model_b_path"]}],
}

DEFAULTS = {
    "seed": 0,
    "folds": 5,
    "eval_fold": 0,
    "split_seed": 0,
    "query_fraction": 1.0,
    "estimator": "agreement",
    "epsilon": DEFAULT_EPSILON,
    "target_mode": "hard_labels",
}

MLP_DEFAULTS = {"optimizer": "adam", "learning_rate": 1e-3, "batch_size": 128, "epochs": 30, "bias_init": 0.0}


class ConfigError(ValueError):
    """Config failed validation; ``problems`` lists ``(json_pointer, message)``."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(f"{ptr or '/'}: {msg}" for ptr, msg in self.problems))


def _pointer(path) -> str:
    return "".join(f"/{p}" for p in path)


def validate_config(config: dict) -> None:
    validator = jsonschema.Draft202012Validator(DISTILL_SCHEMA)
    errors = sorted(validator.iter_errors(config), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise ConfigError((_pointer(e.absolute_path), e.message) for e in errors)
    if config.get("eval_fold", 0) >= config.get("folds", DEFAULTS["folds"]):
        raise ConfigError([("/eval_fold", "eval_fold must be smaller than folds")])


def _fill_model(spec: dict) -> dict:
    spec = dict(spec)
    kind = spec.setdefault("kind", "mlp")
    if kind == "mlp":
        for k, v in MLP_DEFAULTS.items():
            spec.setdefault(k, v)
    elif kind == "tree":
        spec.setdefault("max_depth", 12)
        spec.setdefault("min_samples_leaf", 2)
    elif kind == "logistic":
        spec.setdefault("learning_rate", 0.5)
        spec.setdefault("epochs", 200)
    elif kind == "ensemble":
        spec["members"] = [_fill_model(m) for m in spec["members"]]
    return spec


def resolve_config(config: dict) -> dict:
    """Validate and fill defaults.  The result is what gets fingerprinted."""
    validate_config(config)
    out = {**DEFAULTS, **copy.deepcopy(config)}
    out["model_a"] = _fill_model(out["model_a"])
    if "model_b" in out:
        out["model_b"] = _fill_model(out["model_b"])
    return out


def identity_config(config: dict) -> dict:
    return {k: v for k, v in config.items() if k not in OUTPUT_KEYS}


# --- data and black box ---------------------------------------------------------


@dataclass
class PreparedData:
    interp: LabeledDataset
    evaluation: LabeledDataset


def prepare_data(dataset: LabeledDataset, folds: int = 5, eval_fold: int = 0, split_seed: int = 0) -> PreparedData:
    """k-fold split, then min-max normalize with the interpretation folds' stats.

    The held-out fold is transformed with those same stats and clamped.
    """
    split = kfold_split(dataset.n, folds, split_seed)
    interp_idx, eval_idx = split.train_test(eval_fold)
    interp_idx, eval_idx = np.sort(interp_idx), np.sort(eval_idx)
    interp = dataset.subset(interp_idx)
    stats = minmax_stats(interp.features)
    return PreparedData(
        minmax_normalize(interp, stats),
        minmax_normalize(dataset.subset(eval_idx), stats),
    )


def train_black_box(spec: dict, data: LabeledDataset, seed: int):
    """Train model B on ground truth.  Returns ``(model, train_accuracy)``."""
    spec = _fill_model(spec)
    b_seed = derive_seed(seed, "model_b")
    if spec["kind"] == "mlp":
        arch = PwlnArchitecture(data.dim, tuple(spec["layers"]), data.class_count)
        model = init_truncated_normal(arch, b_seed, bias_init=spec["bias_init"])
        cfg = TrainConfig(spec["optimizer"], spec["learning_rate"], spec["batch_size"], max(1, spec["epochs"]))
        model, _ = train(model, data.features, data.labels, cfg, seed=derive_seed(seed, "model_b_shuffle"))
        probs = predict_proba(model, data.features)
    else:
        from .interpret import build_interpreter

        model = build_interpreter(spec, data.dim, data.class_count, b_seed)
        model.fit(data.features, data.labels)
        probs = model.predict_proba(data.features)
    acc = float(np.mean(np.argmax(probs, axis=1) == data.labels))
    return model, acc


_B_CACHE: dict = {}


def _black_box_for(config: dict, data: PreparedData):
    if "model_b_path" in config:
        path = Path(config["model_b_path"])
        if not path.is_file():
            raise FileNotFoundError(f"model_b_path not found: {path}")
        return load_model(path), None
    key = (canonical_json(config["model_b"]), config["dataset"], config["folds"], config["eval_fold"],
           config["split_seed"], config["seed"])
    if key not in _B_CACHE:
        _B_CACHE[key] = train_black_box(config["model_b"], data.interp, config["seed"])
    return _B_CACHE[key]


_DATA_CACHE: dict = {}


def _data_for(config: dict, data_dir) -> PreparedData:
    key = (config["dataset"], str(data_dir), config["folds"], config["eval_fold"], config["split_seed"])
    if key not in _DATA_CACHE:
        ds = load_dataset(config["dataset"], data_dir)
        _DATA_CACHE[key] = prepare_data(ds, config["folds"], config["eval_fold"], config["split_seed"])
    return _DATA_CACHE[key]


def clear_caches() -> None:
    _B_CACHE.clear()
    _DATA_CACHE.clear()


def run_distill(config: dict, data_dir=None, prepared: PreparedData | None = None):
    """Execute one distillation run.  Returns ``(report, model_b, b_train_accuracy)``."""
    config = resolve_config(config)
    if data_dir is None:
        data_dir = config.get("data_dir")
    data = prepared if prepared is not None else _data_for(config, data_dir)
    model_b, b_acc = _black_box_for(config, data)
    report = run_interpretation(
        model_b,
        config["model_a"],
        data.interp.features,
        data.evaluation.features,
        config["query_fraction"],
        seed=config["seed"],
        estimator=config["estimator"],
        epsilon=config["epsilon"],
        target_mode=config["target_mode"],
        config=identity_config(config),
        verbose=bool(config.get("verbose", False)),
    )
    return report, model_b, b_acc


# --- sweeps ---------------------------------------------------------------------------

AXES = ("query_fraction", "width", "optimizer")


def apply_axis(config: dict, axis: str, value) -> dict:
    cfg = copy.deepcopy(config)
    if axis == "query_fraction":
        cfg["query_fraction"] = float(value)
    elif axis == "width":
        if cfg["model_a"].get("kind", "mlp") != "mlp":
            raise ConfigError([("/model_a/kind", "width sweeps need an mlp model_a")])
        cfg["model_a"]["layers"] = [int(value)]
    elif axis == "optimizer":
        if cfg["model_a"].get("kind", "mlp") != "mlp":
            raise ConfigError([("/model_a/kind", "optimizer sweeps need an mlp model_a")])
        cfg["model_a"]["optimizer"] = str(value)
    else:
        raise ConfigError([("", f"unknown sweep axis {axis!r}; expected one of {AXES}")])
    return cfg


def parse_axis_values(axis: str, raw) -> list:
    if isinstance(raw, str):
        raw = [v for v in (s.strip() for s in raw.split(",")) if v]
    if not raw:
        raise ConfigError([("/values", "a sweep needs at least one value")])
    try:
        if axis == "query_fraction":
            return [float(v) for v in raw]
        if axis == "width":
            return [int(v) for v in raw]
    except ValueError as exc:
        raise ConfigError([("/values", str(exc))]) from None
    return [str(v) for v in raw]


@dataclass
class SweepPoint:
    axis_value: object
    seed: int
    report: InterpretationReport
    wall_ms: float


def _sweep_task(args):
    config, data_dir = args
    t0 = time.perf_counter()
    report, _, _ = run_distill(config, data_dir)
    report.model_a = None  # keep results picklable and light
    return report, (time.perf_counter() - t0) * 1000.0


def run_sweep(config: dict, axis: str, values, seeds, data_dir=None, workers: int = 1) -> list[SweepPoint]:
    if not seeds:
        raise ConfigError([("/seeds", "a sweep needs at least one seed")])
    values = parse_axis_values(axis, values)
    base = resolve_config(config)
    tasks = []
    for v in values:
        for s in seeds:
            cfg = apply_axis(base, axis, v)
            cfg["seed"] = int(s)
            validate_config(cfg)
            tasks.append((v, int(s), cfg))
    jobs = [(cfg, data_dir) for _, _, cfg in tasks]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_task, jobs))
    else:
        results = [_sweep_task(j) for j in jobs]
    return [SweepPoint(v, s, rep, ms) for (v, s, _), (rep, ms) in zip(tasks, results)]


def _fmt(x: float) -> str:
    return repr(float(x))


def format_aggregate(mean: float, std: float) -> str:
    return f"{_fmt(mean)}±{_fmt(std)}"


def parse_aggregate(cell: str) -> tuple[float, float]:
    mean, std = cell.split("±")
    return float(mean), float(std)


def aggregate(points: list[SweepPoint], value) -> dict:
    """Mean and sample standard deviation of each metric at one axis value."""
    rows = [p for p in points if p.axis_value == value]
    out = {}
    for col in METRIC_COLUMNS:
        xs = [float(getattr(p.report, col)) for p in rows]
        out[col] = (statistics.fmean(xs), statistics.stdev(xs) if len(xs) > 1 else math.nan)
    return out


def sweep_csv(points: list[SweepPoint], record_timing: bool = False) -> str:
    """Data rows in run order, then one aggregate row per axis value.

    Aggregate cells hold ``mean±std`` (sample std; ``nan`` for one seed).
    ``wall_ms`` stays empty unless timing is requested, so that repeated
    runs produce identical files.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    values = []
    for p in points:
        if p.axis_value not in values:
            values.append(p.axis_value)
        r = p.report
        w.writerow(
            [p.axis_value, p.seed, r.estimator]
            + [_fmt(getattr(r, c)) for c in METRIC_COLUMNS]
            + [f"{p.wall_ms:.3f}" if record_timing else ""]
        )
    estimator = points[0].report.estimator if points else ""
    for v in values:
        agg = aggregate(points, v)
        w.writerow([v, AGGREGATE_SEED, estimator] + [format_aggregate(*agg[c]) for c in METRIC_COLUMNS] + [""])
    return buf.getvalue()


def sweep_summary(points: list[SweepPoint], axis: str) -> dict:
    values = []
    for p in points:
        if p.axis_value not in values:
            values.append(p.axis_value)
    return {
        "axis": axis,
        "values": values,
        "seeds": sorted({p.seed for p in points}),
        "aggregates": [
            {"axis_value": v, **{c: {"mean": m, "std": None if math.isnan(s) else s}
                                 for c, (m, s) in aggregate(points, v).items()}}
            for v in values
        ],
    }


def read_config(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([("", f"invalid JSON: {exc}")]) from None
