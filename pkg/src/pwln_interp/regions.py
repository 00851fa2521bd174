"""Ground-truth region counts for tiny networks.

Two independent counters:

* :func:`count_regions_exact_2d` counts the open cells of a line arrangement
  in the plane (the regions of a single hidden layer on a 2-D input).
* :func:`count_activation_patterns_grid` counts distinct hidden on/off
  patterns over a grid, a sampled lower estimate for any depth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .nn import MlpModel, activation_patterns

MAX_LINES = 64
MAX_GRID_DIM = 3
NORMAL_EPS = 1e-12
PARALLEL_EPS = 1e-12
POINT_REL_EPS = 1e-9


class RegionOracleError(ValueError):
    pass


@dataclass(frozen=True)
class Hyperplane2D:
    """The line ``normal . x + offset = 0``."""

    normal: tuple[float, float]
    offset: float

    def __post_init__(self):
        nx, ny = (float(v) for v in self.normal)
        object.__setattr__(self, "normal", (nx, ny))
        object.__setattr__(self, "offset", float(self.offset))
        if math.hypot(nx, ny) <= NORMAL_EPS:
            raise RegionOracleError(f"degenerate line: normal {self.normal} has norm <= {NORMAL_EPS}")

    def unit(self) -> tuple[float, float, float]:
        """Normal and offset scaled so the normal has unit length."""
        nx, ny = self.normal
        r = math.hypot(nx, ny)
        return nx / r, ny / r, self.offset / r


def hidden_layer_lines(model: MlpModel) -> list[Hyperplane2D]:
    """The lines ``w_j . x + b_j = 0`` of a one-hidden-layer, 2-input model."""
    arch = model.architecture
    if arch.input_dim != 2 or arch.depth != 1:
        raise RegionOracleError(
            f"exact 2-D counting needs n0=2 and one hidden layer, got n0={arch.input_dim}, L={arch.depth}"
        )
    w, b = model.weights[0], model.biases[0]
    return [Hyperplane2D((w[0, j], w[1, j]), b[j]) for j in range(w.shape[1])]


def _same_point(p, q, tol) -> bool:
    return abs(p[0] - q[0]) <= tol and abs(p[1] - q[1]) <= tol


def count_regions_exact_2d(planes: Sequence[Hyperplane2D], scale: float = 1.0) -> int:
    """Number of open regions of a line arrangement in the plane.

    Lines are inserted one at a time.  A line coincident with an earlier one
    adds nothing; otherwise it adds one more region than the number of
    distinct points where it crosses earlier lines.  Two crossing points are
    the same when within ``1e-9 * scale`` (``scale`` is the diagonal of the
    region of interest), and two lines are parallel when the cross product of
    their unit normals is below ``1e-12``.
    """
    if len(planes) > MAX_LINES:
        raise RegionOracleError(f"exact counting supports at most {MAX_LINES} lines, got {len(planes)}")
    tol = POINT_REL_EPS * max(float(scale), 1e-300)
    placed: list[tuple[float, float, float]] = []
    regions = 1
    for plane in planes:
        a1, b1, c1 = plane.unit()
        points: list[tuple[float, float]] = []
        coincident = False
        for a2, b2, c2 in placed:
            cross = a1 * b2 - b1 * a2
            if abs(cross) < PARALLEL_EPS:
                # parallel: same line iff offsets agree once normals point the same way
                sign = 1.0 if a1 * a2 + b1 * b2 > 0 else -1.0
                if abs(c1 - sign * c2) <= tol:
                    coincident = True
                    break
                continue
            x = (b1 * c2 - b2 * c1) / cross
            y = (a2 * c1 - a1 * c2) / cross
            pt = (x, y)
            if not any(_same_point(pt, q, tol) for q in points):
                points.append(pt)
        if coincident:
            continue
        placed.append((a1, b1, c1))
        regions += 1 + len(points)
    return regions


def dyadic_grid_size(resolution: int) -> int:
    """Points per axis actually sampled: the smallest ``2**k + 1 >= resolution``.

    Grids of this form are nested under refinement, which makes the pattern
    count monotone in ``resolution``.
    """
    if resolution < 2:
        raise RegionOracleError(f"resolution must be >= 2, got {resolution}")
    k = max(0, math.ceil(math.log2(resolution - 1)))
    return 2**k + 1


def _grid_points(box, points_per_axis: int) -> np.ndarray:
    axes = [np.linspace(lo, hi, points_per_axis) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def count_activation_patterns_grid(
    model: MlpModel, box: Sequence[tuple[float, float]], resolution: int, chunk: int = 1 << 16
) -> int:
    """Distinct hidden activation patterns over a regular grid in ``box``.

    Every sampled pattern belongs to a genuine linear region, so the result
    never exceeds the true region count.
    """
    n0 = model.architecture.input_dim
    if n0 > MAX_GRID_DIM:
        raise RegionOracleError(f"grid counting supports input_dim <= {MAX_GRID_DIM}, got {n0}")
    if len(box) != n0:
        raise RegionOracleError(f"box has {len(box)} axes, model input_dim is {n0}")
    for lo, hi in box:
        if not hi > lo:
            raise RegionOracleError(f"box axis ({lo}, {hi}) is empty")
    pts = _grid_points(box, dyadic_grid_size(resolution))
    seen: set[bytes] = set()
    for start in range(0, len(pts), chunk):
        pats = activation_patterns(model, pts[start : start + chunk])
        packed = np.packbits(pats, axis=1)
        seen.update(row.tobytes() for row in packed)
    return len(seen)


def box_diagonal(box) -> float:
    return math.sqrt(sum((hi - lo) ** 2 for lo, hi in box))
