"""Complexity, entropy and interpretability bounds for ReLU networks.

Complexities are computed as exact Python ints (they stay small enough for
desk-scale layers) and entropies ``H = c ** C`` are returned in log2 form.
Interpretability bounds are ratios of entropies and are evaluated entirely in
the log domain, using the exact complexities so that two astronomically large
exponents still subtract cleanly.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

from .logmath import (
    LogQuantity,
    binomial,
    chromatic_path,
    int_times_log2,
    log2_of_int,
)

SERRA_ENUMERATION_CAP = 10**7

LowerConvention = Literal["deep", "table"]
AverageVariant = Literal["derived", "table"]


class ArchitectureError(ValueError):
    pass


class IneligibleArchitectureError(ArchitectureError):
    """The lower-bound construction needs every layer at least ``n0`` wide."""


class ArchitectureParseError(ArchitectureError):
    def __init__(self, message: str, position: int, literal: str):
        super().__init__(f"{message} (at position {position} in {literal!r})")
        self.position = position
        self.literal = literal


class EnumerationCapError(ArchitectureError):
    pass


@dataclass(frozen=True)
class PwlnArchitecture:
    input_dim: int
    layer_widths: tuple[int, ...]
    class_count: int

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if self.input_dim < 1:
            raise ArchitectureError(f"input_dim must be >= 1, got {self.input_dim}")
        if not widths:
            raise ArchitectureError("an architecture needs at least one hidden layer")
        for i, w in enumerate(widths, start=1):
            if w < 1:
                raise ArchitectureError(f"layer {i} width must be >= 1, got {w}")
        if self.class_count < 2:
            raise ArchitectureError(f"class_count must be >= 2, got {self.class_count}")

    @property
    def depth(self) -> int:
        return len(self.layer_widths)

    @property
    def total_neurons(self) -> int:
        return sum(self.layer_widths)

    @property
    def lower_bound_eligible(self) -> bool:
        return all(w >= self.input_dim for w in self.layer_widths)

    def first_ineligible_layer(self) -> int | None:
        for i, w in enumerate(self.layer_widths, start=1):
            if w < self.input_dim:
                return i
        return None

    def with_widths(self, widths) -> "PwlnArchitecture":
        return PwlnArchitecture(self.input_dim, tuple(widths), self.class_count)

    def to_literal(self) -> str:
        return f"n0={self.input_dim};layers={','.join(map(str, self.layer_widths))};c={self.class_count}"

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "layer_widths": list(self.layer_widths),
            "class_count": self.class_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PwlnArchitecture":
        return cls(int(d["input_dim"]), tuple(d["layer_widths"]), int(d["class_count"]))


_KEYS = {"n0", "layers", "c"}
_INT = re.compile(r"^\s*\d+\s*$")


def parse_architecture(literal: str, class_count: int | None = None) -> PwlnArchitecture:
    """Parse ``"n0=2;layers=512,256;c=10"``.

    ``c`` may be omitted from the literal when ``class_count`` is given; an
    explicit ``c=`` in the literal wins.
    """
    fields: dict[str, tuple[str, int]] = {}
    pos = 0
    for part in literal.split(";"):
        start = pos
        pos += len(part) + 1
        if not part.strip():
            continue
        if "=" not in part:
            raise ArchitectureParseError(f"expected key=value, got {part.strip()!r}", start, literal)
        key, value = part.split("=", 1)
        key = key.strip()
        vpos = start + len(part.split("=", 1)[0]) + 1
        if key not in _KEYS:
            raise ArchitectureParseError(f"unknown field {key!r}", start, literal)
        if key in fields:
            raise ArchitectureParseError(f"duplicate field {key!r}", start, literal)
        fields[key] = (value, vpos)

    def _int(key: str) -> int:
        value, vpos = fields[key]
        if not _INT.match(value):
            raise ArchitectureParseError(f"field {key!r} needs a nonnegative integer, got {value!r}", vpos, literal)
        return int(value)

    # validate the fields that are present first, so "layers=" blames 'layers'
    widths = []
    if "layers" in fields:
        raw, vpos = fields["layers"]
        offset = vpos
        for item in raw.split(","):
            if not _INT.match(item):
                raise ArchitectureParseError(
                    f"field 'layers' needs comma-separated widths, got {item!r}", offset, literal
                )
            widths.append(int(item))
            offset += len(item) + 1
    n0 = _int("n0") if "n0" in fields else None
    if "c" in fields:
        _int("c")
    if n0 is None:
        raise ArchitectureParseError("missing field 'n0'", len(literal), literal)
    if "layers" not in fields:
        raise ArchitectureParseError("missing field 'layers'", len(literal), literal)

    if "c" in fields:
        c = _int("c")
    elif class_count is not None:
        c = class_count
    else:
        raise ArchitectureParseError("missing field 'c'", len(literal), literal)
    try:
        return PwlnArchitecture(n0, tuple(widths), c)
    except ArchitectureError as exc:
        raise ArchitectureParseError(str(exc), 0, literal) from None


@dataclass(frozen=True)
class BoundTriple:
    lower: LogQuantity
    average: LogQuantity
    upper: LogQuantity

    def __post_init__(self):
        if self.upper < self.lower:
            raise ValueError(f"lower bound {self.lower} exceeds upper bound {self.upper}")


# --- complexity -----------------------------------------------------------


def zaslavsky_sum(h: int, n0: int) -> int:
    """Regions cut by ``h`` hyperplanes in general position in ``R^n0``."""
    return sum(binomial(h, s) for s in range(min(n0, h) + 1))


def _serra_sum_dp(n0: int, widths: tuple[int, ...]) -> int:
    # The admissible range of j_l only depends on the running minimum
    # m = min(n0, n_1 - j_1, ..., n_{l-1} - j_{l-1}), so the sum over J folds
    # into a recursion over (layer, m) with at most n0 + 1 states per layer.
    @lru_cache(maxsize=None)
    def rest(layer: int, bound: int) -> int:
        if layer == len(widths):
            return 1
        n = widths[layer]
        total = 0
        for j in range(min(bound, n) + 1):
            total += binomial(n, j) * rest(layer + 1, min(bound, n - j))
        return total

    return rest(0, n0)


def enumerate_serra_index_set(n0: int, widths, cap: int = SERRA_ENUMERATION_CAP):
    """Yield every tuple ``(j_1..j_L)`` of the region-count index set J.

    Depth-first over the min-constraints.  Raises once more than ``cap``
    tuples have been produced.
    """
    widths = tuple(widths)
    produced = 0
    stack = [((), n0)]
    while stack:
        prefix, bound = stack.pop()
        layer = len(prefix)
        if layer == len(widths):
            produced += 1
            if produced > cap:
                raise EnumerationCapError(f"index set J exceeds {cap} tuples")
            yield prefix
            continue
        n = widths[layer]
        for j in range(min(bound, n), -1, -1):
            stack.append((prefix + (j,), min(bound, n - j)))


def serra_sum_enumerated(n0: int, widths, cap: int = SERRA_ENUMERATION_CAP) -> int:
    """The same sum as :func:`complexity_upper_exact` but by explicit enumeration."""
    total = 0
    for js in enumerate_serra_index_set(n0, widths, cap):
        term = 1
        for n, j in zip(widths, js):
            term *= binomial(n, j)
        total += term
    return total


def complexity_upper_exact(arch: PwlnArchitecture) -> int:
    if arch.depth == 1:
        return zaslavsky_sum(arch.layer_widths[0], arch.input_dim)
    return _serra_sum_dp(arch.input_dim, arch.layer_widths)


def complexity_upper(arch: PwlnArchitecture) -> LogQuantity:
    return LogQuantity.from_value(complexity_upper_exact(arch))


def _require_eligible(arch: PwlnArchitecture, what: str):
    bad = arch.first_ineligible_layer()
    if bad is not None:
        raise IneligibleArchitectureError(
            f"{what} needs every layer width >= n0={arch.input_dim}; "
            f"layer {bad} has width {arch.layer_widths[bad - 1]}"
        )


def complexity_lower_exact(arch: PwlnArchitecture, convention: LowerConvention = "deep") -> int:
    """Montufar-style lower bound on the maximal region count.

    Single-layer nets give 1 under the ``"table"`` convention (and whenever
    the layer is narrower than the input); ``"deep"`` evaluates the deep
    formula with an empty product, which equals the Zaslavsky sum.
    """
    if convention not in ("deep", "table"):
        raise ValueError(f"unknown lower-bound convention {convention!r}")
    n0 = arch.input_dim
    if arch.depth == 1:
        if convention == "table" or not arch.lower_bound_eligible:
            return 1
        return zaslavsky_sum(arch.layer_widths[0], n0)
    _require_eligible(arch, "complexity lower bound")
    prod = 1
    for n in arch.layer_widths[:-1]:
        prod *= (n // n0) ** n0
    return prod * zaslavsky_sum(arch.layer_widths[-1], n0)


def complexity_lower(arch: PwlnArchitecture, convention: LowerConvention = "deep") -> LogQuantity:
    return LogQuantity.from_value(complexity_lower_exact(arch, convention))


def complexity_average_exact(arch: PwlnArchitecture, dataset_size: int = 1) -> int:
    """Average-case region count; ReLU has one breakpoint per unit."""
    if dataset_size < 1:
        raise ValueError(f"dataset_size must be >= 1, got {dataset_size}")
    breakpoints = 1
    if arch.input_dim == 1:
        return dataset_size * breakpoints * arch.total_neurons
    return arch.total_neurons ** arch.input_dim


def complexity_average(arch: PwlnArchitecture, dataset_size: int = 1) -> LogQuantity:
    return LogQuantity.from_value(complexity_average_exact(arch, dataset_size))


def complexity_bounds(arch, dataset_size=1, convention: LowerConvention = "deep") -> BoundTriple:
    return BoundTriple(
        lower=complexity_lower(arch, convention),
        average=complexity_average(arch, dataset_size),
        upper=complexity_upper(arch),
    )


# --- entropy --------------------------------------------------------------


def entropy_from_complexity(complexity: int, class_count: int) -> LogQuantity:
    """``H = c ** C`` as a LogQuantity; ``log2 H = C * log2 c``."""
    log2_h = int_times_log2(complexity, class_count)
    if math.isinf(log2_h):
        raise OverflowError(
            f"log2 of entropy exceeds double range (log2 C = {log2_of_int(complexity):.6g})"
        )
    return LogQuantity(log2_h)


def entropy_upper(arch: PwlnArchitecture) -> LogQuantity:
    return entropy_from_complexity(complexity_upper_exact(arch), arch.class_count)


def entropy_average(arch: PwlnArchitecture, dataset_size: int = 1) -> LogQuantity:
    return entropy_from_complexity(complexity_average_exact(arch, dataset_size), arch.class_count)


def entropy_lower_path_sizes(arch: PwlnArchitecture) -> list[int]:
    """Vertex count of the path graph behind each layer's coloring factor.

    A layer with ``p`` cells per coordinate contributes ``c (c-1)^((p-1) n0)``,
    the chromatic count of the ``n0`` per-coordinate chains joined end to end,
    i.e. a path of ``(p - 1) * n0 + 1`` vertices.  ``p = floor(n_l / n0)`` for
    hidden layers before the last, ``p = n_L`` for the last one.
    """
    _require_eligible(arch, "entropy lower bound")
    n0 = arch.input_dim
    sizes = [(n // n0 - 1) * n0 + 1 for n in arch.layer_widths[:-1]]
    sizes.append((arch.layer_widths[-1] - 1) * n0 + 1)
    return sizes


def entropy_lower(arch: PwlnArchitecture) -> LogQuantity:
    """Graph-coloring lower bound, as a product of path chromatic counts."""
    c = arch.class_count
    out = LogQuantity.one()
    for p in entropy_lower_path_sizes(arch):
        out = out * chromatic_path(p, c)
    return out


def entropy_lower_closed_form(arch: PwlnArchitecture) -> LogQuantity:
    """``c^L (c-1)^((n_L - L) n0) * prod_{l<L} (c-1)^(floor(n_l/n0) n0)``."""
    _require_eligible(arch, "entropy lower bound")
    c, n0, L = arch.class_count, arch.input_dim, arch.depth
    exponent = (arch.layer_widths[-1] - L) * n0
    exponent += sum((n // n0) * n0 for n in arch.layer_widths[:-1])
    return LogQuantity(L * math.log2(c) + exponent * math.log2(c - 1))


def entropy_bounds(arch, dataset_size=1) -> BoundTriple:
    return BoundTriple(
        lower=entropy_lower(arch),
        average=entropy_average(arch, dataset_size),
        upper=entropy_upper(arch),
    )


# --- interpretability -----------------------------------------------------


def ratio_bound(log2_numerator: float, log2_denominator: float) -> float:
    """``min(1, 2 ** (a - b))`` without leaving the log domain until the end."""
    diff = log2_numerator - log2_denominator
    if math.isnan(diff):
        raise ValueError("undefined entropy ratio")
    if diff >= 0:
        return 1.0
    return 2.0 ** diff


@dataclass(frozen=True)
class InterpretabilityBounds:
    lower: float
    average: float
    upper: float

    def to_dict(self) -> dict:
        return {"lower": self.lower, "average": self.average, "upper": self.upper}


def _log2_entropy_lower(arch) -> float:
    return entropy_lower(arch).log2_value


def interpretability_upper(arch_a, arch_b) -> float:
    # ubH_A / lbH_B; ubH_A's exponent may be huge, lbH_B is always modest
    log2_num = int_times_log2(complexity_upper_exact(arch_a), arch_a.class_count)
    return ratio_bound(log2_num, _log2_entropy_lower(arch_b))


def interpretability_lower(arch_a, arch_b) -> float:
    log2_den = int_times_log2(complexity_upper_exact(arch_b), arch_b.class_count)
    return ratio_bound(_log2_entropy_lower(arch_a), log2_den)


def interpretability_average(arch_a, arch_b, dataset_size=1, variant: AverageVariant = "derived") -> float:
    """``min(1, abH_A / abH_B)``.

    ``variant="table"`` instead uses the alternative exponent
    ``-n * (n_B^n0 - n_A^n0)`` with ``n`` the dataset size.
    """
    c = arch_a.class_count
    if variant == "derived":
        delta = complexity_average_exact(arch_a, dataset_size) - complexity_average_exact(arch_b, dataset_size)
    elif variant == "table":
        n0 = arch_a.input_dim
        delta = -dataset_size * (arch_b.total_neurons**n0 - arch_a.total_neurons**n0)
    else:
        raise ValueError(f"unknown average variant {variant!r}")
    log2_ratio = int_times_log2(delta, c)
    return 1.0 if log2_ratio >= 0 else 2.0**log2_ratio


def _check_pair(arch_a, arch_b):
    if arch_a.class_count != arch_b.class_count:
        raise ArchitectureError(
            f"class counts differ: model A has {arch_a.class_count}, model B has {arch_b.class_count}"
        )
    if arch_a.input_dim != arch_b.input_dim:
        raise ArchitectureError(
            f"input dimensions differ: model A has {arch_a.input_dim}, model B has {arch_b.input_dim}"
        )


def interpretability_bounds(
    arch_a: PwlnArchitecture,
    arch_b: PwlnArchitecture,
    dataset_size: int = 1,
    variant: AverageVariant = "derived",
) -> InterpretabilityBounds:
    """Lower, average and upper bounds on how well A can interpret B."""
    _check_pair(arch_a, arch_b)
    return InterpretabilityBounds(
        lower=interpretability_lower(arch_a, arch_b),
        average=interpretability_average(arch_a, arch_b, dataset_size, variant),
        upper=interpretability_upper(arch_a, arch_b),
    )
