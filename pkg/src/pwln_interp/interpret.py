"""Empirical interpretation by distillation.

Model A is scored by how much it learns about black-box model B's decision
boundary when trained on B's predictions.  Ground-truth labels never enter
this module: B is queried for labels, and both entropy estimators compare A's
probabilities against B's predicted classes only.
"""

from __future__ import annotations

import math
import warnings
import zlib
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .baselines import DecisionTree, EnsembleModel, LogisticRegression, NotFittedError
from .bounds import PwlnArchitecture
from .io_utils import fingerprint
from .nn import MlpClassifier, MlpModel, TrainConfig, init_truncated_normal

DEFAULT_EPSILON = 2.0**-30
AGREEMENT_TOL = 1e-12
ESTIMATORS = ("agreement", "diff")


class ZeroInitialEntropyWarning(UserWarning):
    """H_before was 0: A already matched B before any interpretation."""


class EmptyQuerySetError(ValueError):
    pass


def derive_seed(seed: int, tag: str) -> int:
    """Independent 32-bit seed for the stream named ``tag`` of run ``seed``."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(tag.encode())])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _proba(model, X) -> np.ndarray:
    if isinstance(model, MlpModel):
        model = MlpClassifier(model)
    if not getattr(model, "fitted", True):
        raise NotFittedError(f"{type(model).__name__} has not been fitted")
    return np.asarray(model.predict_proba(X), dtype=np.float64)


def query_black_box(model_b, X) -> tuple[np.ndarray, np.ndarray]:
    """B's hard predictions (argmax, ties to the lowest class) and probabilities."""
    probs = _proba(model_b, X)
    return np.argmax(probs, axis=1), probs


def _check_rows(probs, labels):
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or labels.shape != (probs.shape[0],):
        raise ValueError(f"{labels.shape[0] if labels.ndim else 0} labels for {probs.shape[0]} probability rows")
    return probs, labels


def entropy_diff_terms(probs, b_labels, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Per-sample ``-log2 max(|p[y_B] - p[y_A]|, eps)``."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    probs, labels = _check_rows(probs, b_labels)
    rows = np.arange(len(labels))
    gap = np.abs(probs[rows, labels] - probs.max(axis=1))
    return -np.log2(np.maximum(gap, epsilon))


def empirical_entropy_diff(probs, b_labels, epsilon: float = DEFAULT_EPSILON) -> float:
    return float(entropy_diff_terms(probs, b_labels, epsilon).sum())


def agreement_rate(probs, b_labels) -> float:
    """Fraction of rows where A's probability for B's class equals A's maximum."""
    probs, labels = _check_rows(probs, b_labels)
    rows = np.arange(len(labels))
    return float(np.mean(probs.max(axis=1) - probs[rows, labels] <= AGREEMENT_TOL))


def binary_entropy(p: float) -> float:
    out = 0.0
    for q in (p, 1.0 - p):
        if q > 0.0:
            out -= q * math.log2(q)
    return max(out, 0.0)


def empirical_entropy_agreement(probs, b_labels) -> float:
    return binary_entropy(agreement_rate(probs, b_labels))


def fidelity(probs, b_labels) -> float:
    probs, labels = _check_rows(probs, b_labels)
    return float(np.mean(np.argmax(probs, axis=1) == labels))


def interpretability_score(h_before: float, h_after: float) -> float:
    """Information gain over initial uncertainty, clamped into [0, 1].

    ``h_before == 0`` means there was nothing left to learn; that returns 1.0
    and emits :class:`ZeroInitialEntropyWarning`.
    """
    if h_before < 0 or h_after < 0:
        raise ValueError(f"entropies must be nonnegative, got {h_before}, {h_after}")
    if h_before == 0:
        warnings.warn("initial entropy is 0; interpretability set to 1.0", ZeroInitialEntropyWarning, stacklevel=2)
        return 1.0
    return min(1.0, max(0.0, (h_before - h_after) / h_before))


# --- model A construction -----------------------------------------------------


def build_interpreter(spec: dict, input_dim: int, class_count: int, seed: int):
    """Instantiate model A (or an ensemble) from a JSON-style spec."""
    kind = spec.get("kind", "mlp")
    if kind == "mlp":
        arch = PwlnArchitecture(input_dim, tuple(spec["layers"]), class_count)
        model = init_truncated_normal(arch, seed, bias_init=spec.get("bias_init", 0.0))
        epochs = spec.get("epochs", 30)
        cfg = TrainConfig(
            optimizer=spec.get("optimizer", "adam"),
            learning_rate=spec.get("learning_rate", 1e-3),
            batch_size=spec.get("batch_size", 128),
            epochs=max(1, epochs),
        )
        return MlpClassifier(model, cfg, seed=derive_seed(seed, "shuffle"))
    if kind == "tree":
        return DecisionTree(
            class_count,
            max_depth=spec.get("max_depth", 12),
            min_samples_leaf=spec.get("min_samples_leaf", 2),
            seed=seed,
        )
    if kind == "logistic":
        return LogisticRegression(
            class_count,
            input_dim,
            learning_rate=spec.get("learning_rate", 0.5),
            epochs=spec.get("epochs", 200),
            seed=seed,
        )
    if kind == "ensemble":
        members = [
            build_interpreter(m, input_dim, class_count, derive_seed(seed, f"member{i}"))
            for i, m in enumerate(spec["members"])
        ]
        return EnsembleModel(members)
    raise ValueError(f"unknown model kind {kind!r}")


def _fit(model, X, y_hat, probs_b, target_mode: str):
    if isinstance(model, EnsembleModel):
        for m in model.members:
            _fit(m, X, y_hat, probs_b, target_mode)
        return
    # trees have no soft-target mode and always take B's hard predictions
    if target_mode == "soft_probabilities" and not isinstance(model, DecisionTree):
        model.fit(X, probs_b)
    else:
        model.fit(X, y_hat)


def _initial(model, X) -> np.ndarray:
    if hasattr(model, "initial_proba"):
        return np.asarray(model.initial_proba(X), dtype=np.float64)
    return _proba(model, X)


# --- the pipeline -------------------------------------------------------------------


@dataclass
class EstimatorResult:
    H_before: float
    H_after: float
    interpretability: float


@dataclass
class InterpretationReport:
    estimator: str
    H_before: float
    H_after: float
    interpretability: float
    fidelity_before: float
    fidelity_after: float
    n_eval: int
    n_query: int
    seeds: dict
    config_fingerprint: str
    config: dict
    estimates: dict
    warnings: list = field(default_factory=list)
    tool_version: str = __version__
    per_sample: dict | None = None
    # the distilled model A; kept for callers that want to save it, never serialized
    model_a: object = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "model_a"}
        if d["per_sample"] is None:
            del d["per_sample"]
        return d


def select_queries(n_interp: int, query_fraction: float, seed: int) -> np.ndarray:
    """First ``round(fraction * n)`` entries of a seeded permutation.

    Prefixes of one permutation, so smaller query sets are nested in larger ones.
    """
    if not 0.0 < query_fraction <= 1.0:
        raise ValueError(f"query_fraction must lie in (0, 1], got {query_fraction}")
    m = int(math.floor(query_fraction * n_interp + 0.5))
    if m == 0:
        raise EmptyQuerySetError(f"query_fraction={query_fraction} of {n_interp} samples selects no queries")
    perm = np.random.default_rng(derive_seed(seed, "queries")).permutation(n_interp)
    return np.sort(perm[:m])


def run_interpretation(
    model_b,
    model_a,
    interp_features,
    eval_features,
    query_fraction: float = 1.0,
    *,
    seed: int = 0,
    estimator: str = "agreement",
    epsilon: float = DEFAULT_EPSILON,
    target_mode: str = "hard_labels",
    train_a: bool = True,
    config: dict | None = None,
    verbose: bool = False,
) -> InterpretationReport:
    """Run the five interpretation steps and score the result.

    ``model_a`` is either a spec dict for :func:`build_interpreter` (an
    ``"epochs": 0`` spec skips training) or an already built classifier.
    ``config`` is the full run configuration hashed into the fingerprint; by
    default it is assembled from the arguments.
    """
    if estimator not in ESTIMATORS:
        raise ValueError(f"estimator must be one of {ESTIMATORS}, got {estimator!r}")
    X_interp = np.asarray(interp_features, dtype=np.float64)
    X_eval = np.asarray(eval_features, dtype=np.float64)
    if len(X_eval) == 0:
        raise ValueError("evaluation subset is empty")
    query_idx = select_queries(len(X_interp), query_fraction, seed)
    X_query = X_interp[query_idx]

    # 1. query B; 2. identity input transform
    y_hat, probs_b = query_black_box(model_b, X_query)
    y_eval, _ = query_black_box(model_b, X_eval)
    class_count = probs_b.shape[1]

    if isinstance(model_a, dict):
        a_seed = derive_seed(seed, "model_a")
        a = build_interpreter(model_a, X_interp.shape[1], class_count, a_seed)
        train_a = train_a and model_a.get("epochs", 1) != 0
        spec = model_a
    else:
        a, a_seed = model_a, None
        if isinstance(a, MlpModel):
            a = MlpClassifier(a.copy())
        spec = {"kind": "prebuilt", "type": type(a).__name__}

    # 3. A before; 4. distill; 5. A after
    p_before = _initial(a, X_eval)
    if train_a:
        _fit(a, X_query, y_hat, probs_b, target_mode)
        p_after = _proba(a, X_eval)
    else:
        p_after = p_before

    notes = []
    estimates = {}
    for name in ESTIMATORS:
        if name == "agreement":
            hb = empirical_entropy_agreement(p_before, y_eval)
            ha = empirical_entropy_agreement(p_after, y_eval)
        else:
            hb = empirical_entropy_diff(p_before, y_eval, epsilon)
            ha = empirical_entropy_diff(p_after, y_eval, epsilon)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            score = interpretability_score(hb, ha)
        if any(issubclass(w.category, ZeroInitialEntropyWarning) for w in caught):
            notes.append(f"{name}: H_before = 0, interpretability set to 1.0")
        estimates[name] = asdict(EstimatorResult(hb, ha, score))

    if config is None:
        config = {
            "model_a": spec,
            "query_fraction": query_fraction,
            "seed": seed,
            "estimator": estimator,
            "epsilon": epsilon,
            "target_mode": target_mode,
            "train_a": train_a,
            "n_interp": len(X_interp),
            "n_eval": len(X_eval),
        }
    seeds = {"run": int(seed), "queries": derive_seed(seed, "queries")}
    if a_seed is not None:
        seeds["model_a"] = a_seed

    primary = estimates[estimator]
    per_sample = None
    if verbose:
        per_sample = {
            "diff_before": entropy_diff_terms(p_before, y_eval, epsilon).tolist(),
            "diff_after": entropy_diff_terms(p_after, y_eval, epsilon).tolist(),
        }
    report = InterpretationReport(
        estimator=estimator,
        H_before=primary["H_before"],
        H_after=primary["H_after"],
        interpretability=primary["interpretability"],
        fidelity_before=fidelity(p_before, y_eval),
        fidelity_after=fidelity(p_after, y_eval),
        n_eval=len(X_eval),
        n_query=len(query_idx),
        seeds=seeds,
        config_fingerprint=fingerprint(config),
        config=config,
        estimates=estimates,
        warnings=notes,
        per_sample=per_sample,
        model_a=a,
    )
    return report
