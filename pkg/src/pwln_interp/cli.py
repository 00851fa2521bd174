"""``pwln-interp`` command-line entry point.

Subcommands: ``bounds``, ``distill``, ``sweep`` and ``regions``.  Every flag
can also be given as a key of a JSON ``--config`` file (dashes become
underscores); flags given on the command line win.

Exit codes: 0 success, 1 runtime error, 2 config/validation error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import __version__
from .bounds import (
    ArchitectureError,
    ArchitectureParseError,
    PwlnArchitecture,
    complexity_average_exact,
    complexity_lower_exact,
    complexity_upper_exact,
    entropy_lower,
    interpretability_average,
    interpretability_lower,
    interpretability_upper,
    parse_architecture,
    _check_pair,
)
from .data import DatasetSpecError
from .experiments import (
    AXES,
    ConfigError,
    resolve_config,
    run_distill,
    run_sweep,
    sweep_csv,
    sweep_summary,
)
from .io_utils import atomic_write_text, dump_json
from .logmath import int_times_log2, log2_of_int
from .nn import MlpClassifier, MlpModel, load_model, model_to_dict
from .regions import (
    RegionOracleError,
    box_diagonal,
    count_activation_patterns_grid,
    count_regions_exact_2d,
    dyadic_grid_size,
    hidden_layer_lines,
)
from .svg import line_chart

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2
EXACT_DIGITS_CAP = 4096  # exact ints longer than this many bits are omitted from JSON
SWEEP_KEYS = ("axis", "values", "seeds")


class UsageError(ValueError):
    """Bad flag or config value detected before any work starts."""


# --- shared helpers ------------------------------------------------------------


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([("", f"invalid JSON in {path}: {exc}")]) from None
    if not isinstance(cfg, dict):
        raise ConfigError([("", "config must be a JSON object")])
    return cfg


def _merge(cfg: dict, args, keys) -> dict:
    """Overlay flags the user actually passed (non-None) onto config keys."""
    out = dict(cfg)
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    return out


def _emit(payload: str, out_dir, name: str) -> None:
    if out_dir:
        atomic_write_text(Path(out_dir) / name, payload)
    else:
        sys.stdout.write(payload)


def _log(args, msg: str) -> None:
    if getattr(args, "verbose", None):
        print(msg, file=sys.stderr)


# --- bounds ------------------------------------------------------------------------


def _int_field(value: int) -> dict:
    log2 = log2_of_int(value)
    return {
        "log2": log2 if math.isfinite(log2) else None,
        "exact": str(value) if value.bit_length() <= EXACT_DIGITS_CAP else None,
    }


def _entropy_field(complexity: int, c: int) -> dict:
    # log2 H = C log2 c may overflow a double; log2 log2 H never does
    log2_h = int_times_log2(complexity, c)
    return {
        "log2": log2_h if math.isfinite(log2_h) else None,
        "log2_log2": log2_of_int(complexity) + math.log2(math.log2(c)),
    }


def _guard(fn):
    """Run one bound; an error (e.g. ineligibility) becomes that field's value."""
    try:
        return fn()
    except (ArchitectureError, OverflowError, ValueError) as exc:
        return {"error": str(exc)}


def _model_bounds(arch: PwlnArchitecture, n: int, convention: str) -> dict:
    c = arch.class_count

    def lower_entropy():
        h = entropy_lower(arch)
        return {"log2": h.log2_value, "value": h.value() if math.isfinite(h.value()) else None,
                "log2_log2": math.log2(h.log2_value) if h.log2_value > 0 else None}

    return {
        "architecture": arch.to_dict(),
        "literal": arch.to_literal(),
        "complexity": {
            "lower": _guard(lambda: _int_field(complexity_lower_exact(arch, convention))),
            "average": _guard(lambda: _int_field(complexity_average_exact(arch, n))),
            "upper": _guard(lambda: _int_field(complexity_upper_exact(arch))),
        },
        "entropy": {
            "lower": _guard(lower_entropy),
            "average": _guard(lambda: _entropy_field(complexity_average_exact(arch, n), c)),
            "upper": _guard(lambda: _entropy_field(complexity_upper_exact(arch), c)),
        },
    }


def _pair_bounds(a: PwlnArchitecture, b: PwlnArchitecture, n: int, variant: str) -> dict:
    return {
        "lower": _guard(lambda: interpretability_lower(a, b)),
        "average": _guard(lambda: interpretability_average(a, b, n, variant)),
        "upper": _guard(lambda: interpretability_upper(a, b)),
    }


def _parse_arch_flag(name: str, literal, c) -> PwlnArchitecture:
    if literal is None:
        raise UsageError(f"--{name.replace('_', '-')} is required")
    try:
        return parse_architecture(literal, class_count=c)
    except ArchitectureParseError as exc:
        raise UsageError(f"--{name.replace('_', '-')}: {exc}") from None


def bounds_document(arch_a, arch_b=None, n: int = 1, convention: str = "deep", variant: str = "derived") -> dict:
    doc = {
        "tool_version": __version__,
        "dataset_size": n,
        "convention": convention,
        "variant": variant,
        "model_a": _model_bounds(arch_a, n, convention),
    }
    if arch_b is not None:
        _check_pair(arch_a, arch_b)
        doc["model_b"] = _model_bounds(arch_b, n, convention)
        doc["interpretability"] = {
            # how well each model can interpret the other, and itself
            "a_interprets_b": _pair_bounds(arch_a, arch_b, n, variant),
            "b_interprets_a": _pair_bounds(arch_b, arch_a, n, variant),
        }
    doc["self_interpretability"] = {"model_a": _pair_bounds(arch_a, arch_a, n, variant)}
    if arch_b is not None:
        doc["self_interpretability"]["model_b"] = _pair_bounds(arch_b, arch_b, n, variant)
    return doc


def cmd_bounds(args) -> int:
    cfg = _merge(_load_config_file(args.config), args, ("arch_a", "arch_b", "c", "n", "convention", "variant", "out_dir"))
    n = int(cfg.get("n", 1))
    if n < 1:
        raise UsageError(f"--n must be >= 1, got {n}")
    convention = cfg.get("convention", "deep")
    variant = cfg.get("variant", "derived")
    if convention not in ("deep", "table"):
        raise UsageError(f"--convention must be 'deep' or 'table', got {convention!r}")
    if variant not in ("derived", "table"):
        raise UsageError(f"--variant must be 'derived' or 'table', got {variant!r}")
    c = cfg.get("c")
    arch_a = _parse_arch_flag("arch_a", cfg.get("arch_a"), c)
    arch_b = _parse_arch_flag("arch_b", cfg["arch_b"], c) if cfg.get("arch_b") is not None else None
    if arch_b is not None:
        try:
            _check_pair(arch_a, arch_b)
        except ArchitectureError as exc:
            raise UsageError(str(exc)) from None
    doc = bounds_document(arch_a, arch_b, n, convention, variant)
    _emit(dump_json(doc), cfg.get("out_dir"), "bounds.json")
    return EXIT_OK


# --- distill -------------------------------------------------------------------------


def _run_config(args) -> dict:
    cfg = _load_config_file(args.config)
    if args.config is None:
        raise UsageError("--config is required")
    cfg = _merge(cfg, args, ("seed", "out_dir", "data_dir"))
    if args.verbose:
        cfg["verbose"] = True
    if getattr(args, "plot", None) is not None:
        cfg["plot"] = args.plot
    return cfg


def cmd_distill(args) -> int:
    cfg = _run_config(args)
    for k in SWEEP_KEYS:
        cfg.pop(k, None)
    config = resolve_config(cfg)  # validation happens here, before any work
    report, model_b, b_acc = run_distill(config, config.get("data_dir"))
    doc = report.to_dict()
    doc["model_b_train_accuracy"] = b_acc
    out_dir = config.get("out_dir")
    _log(args, f"interpretability={report.interpretability:.6f} fidelity_after={report.fidelity_after:.4f}")
    _emit(dump_json(doc), out_dir, "report.json")
    if out_dir:
        a = report.model_a
        if isinstance(a, MlpClassifier):
            atomic_write_text(Path(out_dir) / "model_a.json", dump_json(model_to_dict(a.model)))
        if isinstance(model_b, MlpModel):
            atomic_write_text(Path(out_dir) / "model_b.json", dump_json(model_to_dict(model_b)))
        trace = getattr(a, "loss_trace", None)
        if config.get("plot", True) and trace:
            svg = line_chart(
                {"model A": [(float(i + 1), float(v), math.nan) for i, v in enumerate(trace)]},
                title="Distillation loss",
                x_label="epoch",
                y_label="cross-entropy",
            )
            atomic_write_text(Path(out_dir) / "loss.svg", svg)
    return EXIT_OK


# --- sweep ---------------------------------------------------------------------------


def _parse_seeds(raw) -> list[int]:
    if isinstance(raw, str):
        raw = [s for s in (p.strip() for p in raw.split(",")) if s]
    try:
        seeds = [int(s) for s in raw]
    except (TypeError, ValueError):
        raise ConfigError([("/seeds", f"seeds must be integers, got {raw!r}")]) from None
    if not seeds:
        raise ConfigError([("/seeds", "a sweep needs at least one seed")])
    if any(s < 0 for s in seeds):
        raise ConfigError([("/seeds", "seeds must be nonnegative")])
    return seeds


def cmd_sweep(args) -> int:
    cfg = _run_config(args)
    cfg = _merge(cfg, args, ("axis", "values", "seeds", "workers"))
    if args.record_timing:
        cfg["record_timing"] = True
    axis = cfg.pop("axis", None)
    values = cfg.pop("values", None)
    seeds_raw = cfg.pop("seeds", None)
    if axis not in AXES:
        raise ConfigError([("/axis", f"axis must be one of {list(AXES)}, got {axis!r}")])
    if values is None:
        raise ConfigError([("/values", "a sweep needs --values")])
    seeds = _parse_seeds(seeds_raw if seeds_raw is not None else [cfg.get("seed", 0)])
    config = resolve_config(cfg)
    points = run_sweep(config, axis, values, seeds, config.get("data_dir"), workers=int(config.get("workers", 1)))
    csv_text = sweep_csv(points, record_timing=bool(config.get("record_timing", False)))
    out_dir = config.get("out_dir")
    _emit(csv_text, out_dir, "sweep.csv")
    if out_dir:
        summary = sweep_summary(points, axis)
        summary["tool_version"] = __version__
        summary["config"] = {k: v for k, v in config.items() if k not in ("out_dir", "data_dir", "verbose", "plot",
                                                                          "workers", "record_timing")}
        atomic_write_text(Path(out_dir) / "sweep_summary.json", dump_json(summary))
        if config.get("plot", True):
            atomic_write_text(Path(out_dir) / "sweep.svg", _sweep_svg(summary, axis))
    return EXIT_OK


def _sweep_svg(summary: dict, axis: str) -> str:
    labels = [str(v) for v in summary["values"]]
    series = {}
    for metric in ("interpretability", "fidelity_after"):
        pts = []
        for i, agg in enumerate(summary["aggregates"]):
            m = agg[metric]
            pts.append((float(i), m["mean"], math.nan if m["std"] is None else m["std"]))
        series[metric] = pts
    return line_chart(
        series,
        title=f"Interpretability vs {axis} (mean ± std over seeds)",
        x_label=axis,
        y_label="value",
        x_tick_labels=labels,
        y_range=(0.0, 1.05),
    )


# --- regions -------------------------------------------------------------------------


def _parse_box(raw, dim: int) -> list[tuple[float, float]]:
    if raw is None:
        return [(-1.0, 1.0)] * dim
    if isinstance(raw, str):
        try:
            box = [tuple(float(v) for v in axis.split(",")) for axis in raw.split(";") if axis.strip()]
        except ValueError:
            raise UsageError(f"--box must look like 'lo,hi;lo,hi', got {raw!r}") from None
    else:
        box = [tuple(float(v) for v in axis) for axis in raw]
    if len(box) == 1 and dim > 1:
        box = box * dim
    if len(box) != dim or any(len(a) != 2 for a in box):
        raise UsageError(f"--box needs {dim} 'lo,hi' pairs, got {raw!r}")
    for lo, hi in box:
        if not hi > lo:
            raise UsageError(f"--box axis ({lo}, {hi}) is empty")
    return box


def cmd_regions(args) -> int:
    cfg = _merge(_load_config_file(args.config), args, ("model", "method", "box", "resolution", "convention", "out_dir"))
    if cfg.get("model") is None:
        raise UsageError("--model is required")
    method = cfg.get("method", "grid")
    if method not in ("exact2d", "grid"):
        raise UsageError(f"--method must be 'exact2d' or 'grid', got {method!r}")
    model = load_model(cfg["model"])
    arch = model.architecture
    box = _parse_box(cfg.get("box"), arch.input_dim)
    resolution = int(cfg.get("resolution", 512))
    if method == "exact2d":
        lines = hidden_layer_lines(model)
        count = count_regions_exact_2d(lines, scale=box_diagonal(box))
        detail = {"lines": len(lines), "domain": "whole plane"}
    else:
        count = count_activation_patterns_grid(model, box, resolution)
        detail = {"box": [list(a) for a in box], "resolution": resolution,
                  "points_per_axis": dyadic_grid_size(resolution)}
    upper = complexity_upper_exact(arch)
    doc = {
        "tool_version": __version__,
        "method": method,
        "architecture": arch.to_dict(),
        "count": count,
        "complexity_upper": upper,
        "complexity_lower": _guard(lambda: complexity_lower_exact(arch, cfg.get("convention", "deep"))),
        "satisfied": count <= upper,
        **detail,
    }
    _emit(dump_json(doc), cfg.get("out_dir"), "regions.json")
    return EXIT_OK


# --- parser ---------------------------------------------------------------------------


def _shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its keys")
    p.add_argument("--seed", type=int, default=None, help="run seed")
    p.add_argument("--out-dir", dest="out_dir", default=None, help="write outputs here instead of stdout")
    p.add_argument("--data-dir", dest="data_dir", default=None, help="directory holding IDX dataset files")
    p.add_argument("--verbose", action="store_true", help="progress on stderr and per-sample terms in reports")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pwln-interp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bounds", help="closed-form complexity, entropy and interpretability bounds")
    _shared(p)
    p.add_argument("--arch-a", dest="arch_a", help='architecture literal, e.g. "n0=2;layers=8;c=3"')
    p.add_argument("--arch-b", dest="arch_b", help="second architecture literal (enables pairwise bounds)")
    p.add_argument("--c", type=int, default=None, help="class count for literals without c=")
    p.add_argument("--n", type=int, default=None, help="dataset size for the average-case bounds (default 1)")
    p.add_argument("--convention", choices=("deep", "table"), default=None, help="single-layer lower-bound convention")
    p.add_argument("--variant", choices=("derived", "table"), default=None, help="average interpretability form")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("distill", help="distill a black box B into model A and score interpretability")
    _shared(p)
    p.add_argument("--plot", action=argparse.BooleanOptionalAction, default=None, help="write loss.svg")
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("sweep", help="repeat distillation over one axis and several seeds")
    _shared(p)
    p.add_argument("--axis", choices=AXES, default=None)
    p.add_argument("--values", default=None, help="comma-separated axis values")
    p.add_argument("--seeds", default=None, help="comma-separated seeds")
    p.add_argument("--workers", type=int, default=None, help="worker processes (default 1)")
    p.add_argument("--record-timing", dest="record_timing", action="store_true",
                   help="fill the wall_ms column (makes output non-reproducible)")
    p.add_argument("--plot", action=argparse.BooleanOptionalAction, default=None, help="write sweep.svg")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("regions", help="count linear regions of a saved model")
    _shared(p)
    p.add_argument("--model", default=None, help="model JSON written by distill")
    p.add_argument("--method", choices=("exact2d", "grid"), default=None)
    p.add_argument("--box", default=None, help="'lo,hi;lo,hi' per input axis (default [-1,1] each)")
    p.add_argument("--resolution", type=int, default=None, help="grid points per axis (rounded up to 2^k+1)")
    p.add_argument("--convention", choices=("deep", "table"), default=None)
    p.set_defaults(func=cmd_regions)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, DatasetSpecError, ArchitectureParseError) as exc:
        print(f"pwln-interp {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RegionOracleError as exc:
        print(f"pwln-interp {args.command}: constraint error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report any module failure as a runtime error
        print(f"pwln-interp {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
