"""Dyadic cube geometry on the standard lattice of R^n.

A dyadic cube of generation ``g`` has side length ``2**-g`` and occupies the
half-open box ``prod_i [k_i * 2**-g, (k_i+1) * 2**-g)`` for an integer corner
vector ``k``.  Half-open boxes mean every point of R^n lies in exactly one
cube per generation, so containment and the cube selector Q(x, t) never need
tie-breaking.

Besides the cube type itself this module provides the selector of the
smallest dyadic cube containing a point with side length exceeding a scale,
descendant enumeration, tents over cubes, and a Whitney decomposition of
grid-resolved open sets together with a post-hoc property checker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

# Requests outside this generation range raise instead of silently clamping,
# which keeps every sweep finite and reproducible.
GENERATION_MIN = -60
GENERATION_MAX = 60

# Cap on the number of cubes subcubes() may enumerate.
SUBCUBE_CAP = 2_000_000


class GenerationRangeError(ValueError):
    """Cube generation outside [GENERATION_MIN, GENERATION_MAX]."""


class SubcubeCapError(ValueError):
    """Requested enumeration exceeds SUBCUBE_CAP cubes."""


def _check_generation(g: int) -> int:
    g = int(g)
    if not GENERATION_MIN <= g <= GENERATION_MAX:
        raise GenerationRangeError(
            f"generation {g} outside [{GENERATION_MIN}, {GENERATION_MAX}]"
        )
    return g


@dataclass(frozen=True, order=True)
class DyadicCube:
    """Half-open dyadic cube identified by generation and integer corner."""

    generation: int
    corner: tuple[int, ...]

    def __post_init__(self):
        _check_generation(self.generation)
        object.__setattr__(self, "corner", tuple(int(c) for c in self.corner))

    @property
    def dim(self) -> int:
        return len(self.corner)

    @property
    def side(self) -> float:
        # Exact: powers of two are representable in binary floating point.
        return 2.0 ** (-self.generation)

    @property
    def volume(self) -> float:
        return 2.0 ** (-self.generation * self.dim)

    @property
    def lo(self) -> np.ndarray:
        return np.array(self.corner, dtype=float) * self.side

    @property
    def hi(self) -> np.ndarray:
        return (np.array(self.corner, dtype=float) + 1.0) * self.side

    @property
    def center(self) -> np.ndarray:
        return (np.array(self.corner, dtype=float) + 0.5) * self.side

    def contains(self, x) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return bool(np.all(self.lo <= x) and np.all(x < self.hi))

    def children(self) -> list["DyadicCube"]:
        """The 2**n cubes of the next generation partitioning this cube."""
        g = _check_generation(self.generation + 1)
        base = tuple(2 * c for c in self.corner)
        return [
            DyadicCube(g, tuple(b + o for b, o in zip(base, offs)))
            for offs in product((0, 1), repeat=self.dim)
        ]

    def parent(self) -> "DyadicCube":
        g = _check_generation(self.generation - 1)
        return DyadicCube(g, tuple(c >> 1 for c in self.corner))

    def ancestor(self, generation: int) -> "DyadicCube":
        """The unique dyadic cube of coarser ``generation`` containing this one."""
        generation = _check_generation(generation)
        shift = self.generation - generation
        if shift < 0:
            raise ValueError("ancestor generation must be coarser (smaller)")
        return DyadicCube(generation, tuple(c >> shift for c in self.corner))

    def contains_cube(self, other: "DyadicCube") -> bool:
        if other.generation < self.generation:
            return False
        return other.ancestor(self.generation) == self

    def key(self) -> tuple[int, ...]:
        """Serialization as a (generation, corner...) integer tuple."""
        return (self.generation, *self.corner)


@dataclass(frozen=True)
class Tent:
    """The region Q x (0, side(Q)] over a cube, for Carleson masses."""

    base: DyadicCube

    @property
    def height(self) -> float:
        return self.base.side


def cube_from_key(key) -> DyadicCube:
    key = [int(k) for k in key]
    return DyadicCube(key[0], tuple(key[1:]))


def smallest_containing(x, t: float) -> DyadicCube:
    """Smallest dyadic cube containing ``x`` whose side length exceeds ``t``.

    The returned cube Q satisfies x in Q, side(Q) > t and side(Q)/2 <= t.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(x)):
        raise ValueError("point must be finite")
    t = float(t)
    if not (t > 0.0 and math.isfinite(t)):
        raise ValueError("scale t must be positive and finite")
    # Largest integer g with 2**-g > t; start from the log estimate and then
    # correct by integer steps so float log round-off cannot bite.
    g = math.floor(-math.log2(t))
    while 2.0 ** (-g) <= t:
        g -= 1
    while 2.0 ** (-(g + 1)) > t:
        g += 1
    _check_generation(g)
    corner = tuple(int(math.floor(xi * 2.0**g)) for xi in x)
    return DyadicCube(g, corner)


def cube_at(x, generation: int) -> DyadicCube:
    """The unique cube of the given generation containing ``x``."""
    generation = _check_generation(generation)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    scale = 2.0**generation
    return DyadicCube(generation, tuple(int(math.floor(xi * scale)) for xi in x))


def subcubes(Q: DyadicCube, depth: int, cap: int = SUBCUBE_CAP) -> list[DyadicCube]:
    """All dyadic descendants of Q down to ``depth`` levels, Q included.

    Cubes are returned generation by generation, lexicographic corner order
    within each generation.
    """
    depth = int(depth)
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    n = Q.dim
    total = sum((2**n) ** d for d in range(depth + 1))
    if total > cap:
        raise SubcubeCapError(f"{total} cubes exceeds cap {cap}")
    out = [Q]
    level = [Q]
    for _ in range(depth):
        level = [child for cube in level for child in cube.children()]
        out.extend(level)
    return out


# ---------------------------------------------------------------------------
# Whitney decomposition
#
# The open set is a union of grid cells (side 2**-cell_generation) strictly
# inside a rectangular window.  We select the maximal dyadic cubes Q inside
# the set with sqrt(n) * side(Q) <= dist(Q, complement); maximality of the
# selection forces dist(Q, complement) <= 4 sqrt(n) * side(Q), which is the
# inequality asserted by whitney_properties.
# ---------------------------------------------------------------------------


class WhitneyInputError(ValueError):
    """Open set touches the window boundary (complement distance undefined)."""


def _box_gap_sq(lo_a, hi_a, lo_b, hi_b) -> np.ndarray:
    """Squared Euclidean gap between closed boxes a and (arrays of) boxes b."""
    gap = np.maximum(0.0, np.maximum(lo_b - hi_a, lo_a - hi_b))
    return np.sum(gap * gap, axis=-1)


def _dist_to_complement_cells(lo, hi, comp_lo, win_lo, win_hi) -> float:
    """Distance (cell units) from box [lo, hi) to the complement of the set.

    The complement is the union of the non-set cells inside the window plus
    everything outside the window.
    """
    d2 = math.inf
    if len(comp_lo):
        d2 = float(np.min(_box_gap_sq(lo, hi, comp_lo, comp_lo + 1.0)))
    margin = min(float(np.min(lo - win_lo)), float(np.min(win_hi - hi)))
    return min(math.sqrt(d2), margin) if margin >= 0 else 0.0


def whitney(mask: np.ndarray, cell_generation: int, corner0=None) -> list[DyadicCube]:
    """Whitney decomposition of the open set given by a cell-indicator mask.

    ``mask[i1, ..., in]`` flags whether the cell with integer corner
    ``corner0 + (i1, ..., in)`` at ``cell_generation`` belongs to the set.
    The set must stay clear of the mask boundary, since cells on the boundary
    leave the distance to the complement undetermined within the window.

    Returns non-overlapping dyadic cubes whose union is the set up to cells
    adjacent to its boundary (cubes never subdivide below the cell size).
    """
    mask = np.asarray(mask, dtype=bool)
    n = mask.ndim
    cell_generation = _check_generation(cell_generation)
    if corner0 is None:
        corner0 = np.zeros(n, dtype=int)
    corner0 = np.asarray(corner0, dtype=int)

    if not mask.any():
        return []
    idx = np.argwhere(mask)
    if np.any(idx == 0) or np.any(idx == np.array(mask.shape) - 1):
        raise WhitneyInputError("open set touches the window boundary")

    # Everything below works in cell units (side of one cell == 1).
    win_lo = corner0.astype(float)
    win_hi = (corner0 + np.array(mask.shape)).astype(float)
    comp_lo = (np.argwhere(~mask) + corner0).astype(float)
    set_cells = idx + corner0  # absolute integer corners of set cells

    bbox_lo = set_cells.min(axis=0).astype(float)
    bbox_hi = (set_cells.max(axis=0) + 1).astype(float)
    diam = float(np.linalg.norm(bbox_hi - bbox_lo))
    # Start coarse enough that the selection criterion is false at the start
    # generation, so maximality holds globally.
    side_start = 1
    while side_start < 4.0 * max(diam, 1.0):
        side_start *= 2

    sqrt_n = math.sqrt(n)
    mask_lo = corner0  # integer window corner

    def cells_all_true(a: np.ndarray, b: np.ndarray) -> bool:
        sl = tuple(
            slice(max(int(a[i] - mask_lo[i]), 0), max(int(b[i] - mask_lo[i]), 0))
            for i in range(n)
        )
        block = mask[sl]
        expected = int(np.prod(b - a))
        return block.size == expected and bool(block.all())

    def cells_any_true(a: np.ndarray, b: np.ndarray) -> bool:
        lo_c = np.maximum(a, mask_lo)
        hi_c = np.minimum(b, mask_lo + np.array(mask.shape))
        if np.any(lo_c >= hi_c):
            return False
        sl = tuple(
            slice(int(lo_c[i] - mask_lo[i]), int(hi_c[i] - mask_lo[i]))
            for i in range(n)
        )
        return bool(mask[sl].any())

    selected: list[DyadicCube] = []

    def recurse(a: np.ndarray, side: int):
        b = a + side
        if not cells_any_true(a, b):
            return
        if cells_all_true(a, b):
            d = _dist_to_complement_cells(
                a.astype(float), b.astype(float), comp_lo, win_lo, win_hi
            )
            if d >= sqrt_n * side:
                g = cell_generation - int(math.log2(side))
                corner = tuple(int(ai) // side for ai in a)
                selected.append(DyadicCube(g, corner))
                return
        if side == 1:
            return  # boundary-layer cell, dropped (union holds up to resolution)
        half = side // 2
        for offs in product((0, half), repeat=n):
            recurse(a + np.array(offs), half)

    start_lo = (np.floor(bbox_lo / side_start) * side_start).astype(int)
    start_hi = (np.ceil(bbox_hi / side_start) * side_start).astype(int)
    ranges = [range(start_lo[i], start_hi[i], side_start) for i in range(n)]
    for origin in product(*ranges):
        recurse(np.array(origin, dtype=int), side_start)

    selected.sort()
    return selected


def whitney_properties(
    cubes: list[DyadicCube], mask: np.ndarray, cell_generation: int, corner0=None
) -> dict:
    """Check the four Whitney properties on a computed decomposition.

    Returns a report with one boolean per property plus the measured
    distance-to-side ratios and the maximal touching count:

    * cover: cubes are disjoint, inside the set, and every set cell at
      distance >= sqrt(n) cell sides from the complement is covered;
    * distance: sqrt(n) * side <= dist(Q, complement) <= 4 sqrt(n) * side;
    * adjacency: touching cubes have side ratio within [1/4, 4];
    * touching: no cube touches more than 12**n cubes of the family
      (itself included).
    """
    mask = np.asarray(mask, dtype=bool)
    n = mask.ndim
    if corner0 is None:
        corner0 = np.zeros(n, dtype=int)
    corner0 = np.asarray(corner0, dtype=int)
    win_lo = corner0.astype(float)
    win_hi = (corner0 + np.array(mask.shape)).astype(float)
    comp_lo = (np.argwhere(~mask) + corner0).astype(float)
    sqrt_n = math.sqrt(n)

    # Cube boxes in cell units (exact integers: sides are >= 1 cell).
    boxes = []
    for Q in cubes:
        side = 2 ** (cell_generation - Q.generation)
        a = np.array(Q.corner, dtype=int) * side
        boxes.append((a, a + side, side))

    covered = np.zeros_like(mask)
    disjoint_inside = True
    for a, b, side in boxes:
        sl = tuple(slice(int(a[i] - corner0[i]), int(b[i] - corner0[i])) for i in range(n))
        block = mask[sl]
        if block.size != side**n or not block.all():
            disjoint_inside = False
            break
        if covered[sl].any():
            disjoint_inside = False
            break
        covered[sl] = True

    interior_covered = True
    if disjoint_inside and comp_lo.size:
        for cell in np.argwhere(mask & ~covered):
            a = (cell + corner0).astype(float)
            d = _dist_to_complement_cells(a, a + 1.0, comp_lo, win_lo, win_hi)
            if d >= sqrt_n:
                interior_covered = False
                break

    ratios = []
    for a, b, side in boxes:
        d = _dist_to_complement_cells(
            a.astype(float), b.astype(float), comp_lo, win_lo, win_hi
        )
        ratios.append(d / (sqrt_n * side))
    ratios = np.array(ratios) if ratios else np.zeros(0)
    distance_ok = bool(np.all(ratios >= 1.0 - 1e-12) and np.all(ratios <= 4.0 + 1e-12))

    adjacency_ok = True
    touch_counts = [0] * len(boxes)
    for i in range(len(boxes)):
        ai, bi, si = boxes[i]
        for j in range(len(boxes)):
            aj, bj, sj = boxes[j]
            if np.all(np.maximum(ai, aj) <= np.minimum(bi, bj)):
                touch_counts[i] += 1
                if not (0.25 <= si / sj <= 4.0):
                    adjacency_ok = False
    max_touch = max(touch_counts) if touch_counts else 0
    touching_ok = max_touch <= 12**n

    return {
        "cover": bool(disjoint_inside and interior_covered),
        "distance": distance_ok,
        "adjacency": adjacency_ok,
        "touching": touching_ok,
        "distance_ratio_min": float(ratios.min()) if ratios.size else None,
        "distance_ratio_max": float(ratios.max()) if ratios.size else None,
        "max_touching": max_touch,
        "all": bool(
            disjoint_inside
            and interior_covered
            and distance_ok
            and adjacency_ok
            and touching_ok
        ),
    }
