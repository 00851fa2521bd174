"""Exact small combinatorics and base-2 log-domain quantities.

Entropy magnitudes such as ``c ** sum(binomials)`` overflow any fixed-width
number long before the architectures get interesting, so every such value is
carried as its base-2 logarithm in :class:`LogQuantity`.  Exact integers are
kept for the small cases where the brute-force oracles need them.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

BINOMIAL_CAP = 1024
COLORING_VERTEX_CAP = 12

_LN2 = math.log(2.0)


class CapExceededError(ValueError):
    """An exact computation was asked for beyond its documented size cap."""


@functools.total_ordering
@dataclass(frozen=True)
class LogQuantity:
    """A nonnegative number stored as ``log2(value)``; zero is ``-inf``."""

    log2_value: float

    def __post_init__(self):
        v = float(self.log2_value)
        if math.isnan(v):
            raise ValueError("LogQuantity cannot hold NaN (negative or undefined value)")
        if v == math.inf:
            raise OverflowError("LogQuantity log2 value overflowed to +inf")
        object.__setattr__(self, "log2_value", v)

    @classmethod
    def zero(cls) -> "LogQuantity":
        return cls(-math.inf)

    @classmethod
    def one(cls) -> "LogQuantity":
        return cls(0.0)

    @classmethod
    def from_value(cls, value) -> "LogQuantity":
        """Wrap an int or float; ints of any size are converted exactly-ish
        via ``math.log2`` (which accepts arbitrary-precision ints)."""
        if value < 0:
            raise ValueError(f"LogQuantity cannot represent negative value {value!r}")
        if value == 0:
            return cls.zero()
        return cls(math.log2(value))

    @property
    def is_zero(self) -> bool:
        return self.log2_value == -math.inf

    def value(self) -> float:
        """The represented value as a float (may be ``inf`` if out of range)."""
        if self.is_zero:
            return 0.0
        try:
            return 2.0 ** self.log2_value
        except OverflowError:
            return math.inf

    def __mul__(self, other: "LogQuantity") -> "LogQuantity":
        if not isinstance(other, LogQuantity):
            return NotImplemented
        return LogQuantity(self.log2_value + other.log2_value)

    def __truediv__(self, other: "LogQuantity") -> "LogQuantity":
        if not isinstance(other, LogQuantity):
            return NotImplemented
        if other.is_zero:
            raise ZeroDivisionError("division by a zero LogQuantity")
        return LogQuantity(self.log2_value - other.log2_value)

    def __add__(self, other: "LogQuantity") -> "LogQuantity":
        if not isinstance(other, LogQuantity):
            return NotImplemented
        a, b = self.log2_value, other.log2_value
        if a < b:
            a, b = b, a
        if b == -math.inf:
            return LogQuantity(a)
        return LogQuantity(a + math.log1p(2.0 ** (b - a)) / _LN2)

    def __pow__(self, exponent) -> "LogQuantity":
        if self.is_zero:
            if exponent == 0:
                return LogQuantity.one()
            if exponent < 0:
                raise ZeroDivisionError("zero raised to a negative power")
            return LogQuantity.zero()
        return LogQuantity(self.log2_value * exponent)

    def __lt__(self, other: "LogQuantity") -> bool:
        if not isinstance(other, LogQuantity):
            return NotImplemented
        return self.log2_value < other.log2_value

    def __repr__(self) -> str:
        return f"LogQuantity(log2={self.log2_value!r})"


def binomial(n: int, k: int) -> int:
    """Exact ``C(n, k)``; ``k > n`` gives 0.  Capped at ``n <= 1024``."""
    if n < 0 or k < 0:
        raise ValueError(f"binomial needs nonnegative arguments, got n={n}, k={k}")
    if n > BINOMIAL_CAP:
        raise CapExceededError(f"binomial: n={n} exceeds the exact cap {BINOMIAL_CAP}")
    if k > n:
        return 0
    return math.comb(n, k)


def log2_binomial(n: int, k: int) -> LogQuantity:
    if n < 0 or k < 0:
        raise ValueError(f"log2_binomial needs nonnegative arguments, got n={n}, k={k}")
    if k > n:
        return LogQuantity.zero()
    if k == 0 or k == n:
        return LogQuantity.one()
    if n <= BINOMIAL_CAP:
        # math.log2 on an exact int is correctly rounded-ish; beats lgamma cancellation
        return LogQuantity(math.log2(math.comb(n, k)))
    ln = math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
    return LogQuantity(ln / _LN2)


def chromatic_path(p: int, k: int) -> LogQuantity:
    """Proper ``k``-colorings of a ``p``-vertex path: ``k (k-1)^(p-1)``."""
    if p < 1 or k < 1:
        raise ValueError(f"chromatic_path needs p >= 1 and k >= 1, got p={p}, k={k}")
    if k == 1:
        return LogQuantity.one() if p == 1 else LogQuantity.zero()
    return LogQuantity(math.log2(k) + (p - 1) * math.log2(k - 1))


def chromatic_path_exact(p: int, k: int) -> int:
    if p < 1 or k < 1:
        raise ValueError(f"chromatic_path needs p >= 1 and k >= 1, got p={p}, k={k}")
    return k * (k - 1) ** (p - 1)


def path_edges(p: int) -> list[tuple[int, int]]:
    return [(i, i + 1) for i in range(p - 1)]


def count_proper_colorings_bruteforce(
    n_vertices: int, edges: Iterable[Sequence[int]], k: int
) -> int:
    """Count colorings with no monochromatic edge by trying all ``k**V``."""
    if n_vertices > COLORING_VERTEX_CAP:
        raise CapExceededError(
            f"brute-force coloring limited to {COLORING_VERTEX_CAP} vertices, got {n_vertices}"
        )
    edge_list = [(int(u), int(v)) for u, v in edges]
    for u, v in edge_list:
        if not (0 <= u < n_vertices and 0 <= v < n_vertices):
            raise ValueError(f"edge ({u}, {v}) references a vertex outside 0..{n_vertices - 1}")
    count = 0
    for coloring in itertools.product(range(k), repeat=n_vertices):
        if all(coloring[u] != coloring[v] for u, v in edge_list):
            count += 1
    return count


def log2_of_int(value: int) -> float:
    """``log2`` of an arbitrarily large nonnegative int (``-inf`` for 0)."""
    if value < 0:
        raise ValueError("log2 of a negative integer")
    if value == 0:
        return -math.inf
    return math.log2(value)


def int_times_log2(count: int, base: int) -> float:
    """``count * log2(base)`` for a possibly huge exact ``count``.

    Returns ``+inf`` rather than raising when the product leaves double range.
    """
    if base < 1:
        raise ValueError("base must be >= 1")
    if count == 0 or base == 1:
        return 0.0
    sign = 1.0 if count > 0 else -1.0
    try:
        return sign * float(abs(count)) * math.log2(base)
    except OverflowError:
        return sign * math.inf
