"""Sampled functions on uniform dyadic grids.

A :class:`SampledFunction` stores one complex value per grid cell of a
rectangular window.  The grid spacing is an exact power of two
(``h = 2**h_log2``) and the window corner sits on an integer multiple of
``h``, so dyadic cubes with side >= h are always unions of whole cells and
cube averages involve no rounding.  Functions are treated as zero outside
their window and are immutable; algebra returns new instances.

Quadrature is the cell-centered midpoint rule throughout: one rule for
every operator in the package, so compositions share a single error budget.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .dyadic import DyadicCube


class GridAlignmentError(ValueError):
    """Cube or window is not a union of whole grid cells."""


class ResolutionError(ValueError):
    """Requested scale falls below what the grid can resolve."""


def _as_int_exact(x: float, scale: float, what: str) -> int:
    q = x / scale
    r = round(q)
    if abs(q - r) > 1e-9:
        raise GridAlignmentError(f"{what} {x} is not an integer multiple of {scale}")
    return int(r)


@dataclass(frozen=True)
class SampledFunction:
    """Cell-centered samples over a window aligned to the dyadic grid.

    Parameters
    ----------
    h_log2 : int
        Grid spacing is ``2**h_log2`` (typically negative).
    lo : tuple of int
        Window corner in units of the spacing; the window is
        ``[lo*h, (lo+shape)*h)``.
    values : ndarray
        One value per cell, shape ``(N1, ..., Nn)``, finite.
    """

    h_log2: int
    lo: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(int(v) for v in self.lo))
        vals = np.asarray(self.values)
        if vals.ndim != len(self.lo):
            raise ValueError("values rank must match window dimension")
        if not np.all(np.isfinite(vals)):
            raise ValueError("values must be finite (no NaN/Inf)")
        if not np.iscomplexobj(vals):
            vals = vals.astype(np.float64)
        vals = np.array(vals)  # private copy
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    # -- geometry -----------------------------------------------------------

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def h(self) -> float:
        return 2.0**self.h_log2

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def window_lo(self) -> np.ndarray:
        return np.array(self.lo, dtype=float) * self.h

    @property
    def window_hi(self) -> np.ndarray:
        return (np.array(self.lo, dtype=float) + np.array(self.shape)) * self.h

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    def axis_centers(self, axis: int) -> np.ndarray:
        n = self.shape[axis]
        return (self.lo[axis] + np.arange(n) + 0.5) * self.h

    def meshgrid(self) -> list[np.ndarray]:
        axes = [self.axis_centers(a) for a in range(self.dim)]
        return list(np.meshgrid(*axes, indexing="ij"))

    # -- algebra (immutable; returns new instances) --------------------------

    def _require_same_grid(self, other: "SampledFunction"):
        if (
            self.h_log2 != other.h_log2
            or self.lo != other.lo
            or self.shape != other.shape
        ):
            raise GridAlignmentError("operands live on different grids")

    def __add__(self, other):
        if isinstance(other, SampledFunction):
            self._require_same_grid(other)
            return SampledFunction(self.h_log2, self.lo, self.values + other.values)
        return SampledFunction(self.h_log2, self.lo, self.values + other)

    def __sub__(self, other):
        if isinstance(other, SampledFunction):
            self._require_same_grid(other)
            return SampledFunction(self.h_log2, self.lo, self.values - other.values)
        return SampledFunction(self.h_log2, self.lo, self.values - other)

    def __mul__(self, other):
        if isinstance(other, SampledFunction):
            self._require_same_grid(other)
            return SampledFunction(self.h_log2, self.lo, self.values * other.values)
        return SampledFunction(self.h_log2, self.lo, self.values * other)

    __rmul__ = __mul__

    def __neg__(self):
        return SampledFunction(self.h_log2, self.lo, -self.values)

    def __abs__(self):
        return SampledFunction(self.h_log2, self.lo, np.abs(self.values))

    def real(self):
        return SampledFunction(self.h_log2, self.lo, self.values.real)

    def with_values(self, values) -> "SampledFunction":
        return SampledFunction(self.h_log2, self.lo, values)

    # -- cube slicing ---------------------------------------------------------

    def cube_slices(self, Q: DyadicCube, clip: bool = False):
        """Index slices covering cube Q, which must align to whole cells.

        With ``clip`` the slices are intersected with the window (used when
        the function is extended by zero); otherwise Q must lie inside.
        """
        if Q.dim != self.dim:
            raise ValueError("cube dimension mismatch")
        shift = -Q.generation - self.h_log2  # log2(side / h)
        if shift < 0:
            raise ResolutionError(
                f"cube side 2**{-Q.generation} below grid spacing 2**{self.h_log2}"
            )
        s = 1 << shift
        sls = []
        for a in range(self.dim):
            start = Q.corner[a] * s - self.lo[a]
            stop = start + s
            if clip:
                start, stop = max(start, 0), min(stop, self.shape[a])
                if start >= stop:
                    return None
            elif start < 0 or stop > self.shape[a]:
                raise GridAlignmentError("cube extends outside the window")
            sls.append(slice(start, stop))
        return tuple(sls)


def from_callable(func, window_lo, window_hi, h_log2: int) -> SampledFunction:
    """Sample ``func`` at cell centers over the window.

    ``func`` receives one coordinate array per axis (broadcast mesh) and the
    window bounds must be exact multiples of the spacing.
    """
    h = 2.0**h_log2
    window_lo = np.atleast_1d(np.asarray(window_lo, dtype=float))
    window_hi = np.atleast_1d(np.asarray(window_hi, dtype=float))
    lo = tuple(_as_int_exact(v, h, "window bound") for v in window_lo)
    hi = tuple(_as_int_exact(v, h, "window bound") for v in window_hi)
    shape = tuple(b - a for a, b in zip(lo, hi))
    if any(s <= 0 for s in shape):
        raise ValueError("window must have positive extent")
    axes = [(lo[a] + np.arange(shape[a]) + 0.5) * h for a in range(len(lo))]
    mesh = np.meshgrid(*axes, indexing="ij")
    vals = np.asarray(func(*mesh))
    vals = np.broadcast_to(vals, shape)
    return SampledFunction(h_log2, lo, vals)


def zeros_like(f: SampledFunction, dtype=np.float64) -> SampledFunction:
    return SampledFunction(f.h_log2, f.lo, np.zeros(f.shape, dtype=dtype))


def constant_like(f: SampledFunction, c) -> SampledFunction:
    return SampledFunction(f.h_log2, f.lo, np.full(f.shape, c))


# ---------------------------------------------------------------------------
# norms, averages, BMO
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormReport:
    """A computed norm plus the quadrature descriptor that produced it."""

    p: float
    value: float
    method: str


def integral(f: SampledFunction) -> complex:
    """Midpoint-rule integral over the window."""
    return complex(np.sum(f.values) * f.cell_volume)


def lp_norm(f: SampledFunction, p) -> float:
    """L^p norm by midpoint rule; ``p = inf`` takes the max over cells."""
    if p == np.inf or p == "inf":
        return float(np.max(np.abs(f.values))) if f.values.size else 0.0
    p = float(p)
    if p < 1.0:
        raise ValueError("exponent p must satisfy p >= 1")
    return float(
        np.sum(np.abs(f.values) ** p * f.cell_volume) ** (1.0 / p)
    )


def average(f: SampledFunction, Q: DyadicCube, zero_extend: bool = False) -> complex:
    """Mean of f over the cube Q by midpoint rule.

    Exact whenever f is constant on grid cells.  With ``zero_extend`` the
    cube may overrun the window and f counts as zero there (the denominator
    stays the full cube volume); otherwise that raises.
    """
    sls = f.cube_slices(Q, clip=zero_extend)
    if sls is None:
        return 0.0 + 0.0j
    total = np.sum(f.values[sls]) * f.cell_volume
    return complex(total / Q.volume)


def cube_integral(f: SampledFunction, Q: DyadicCube, zero_extend: bool = False) -> complex:
    sls = f.cube_slices(Q, clip=zero_extend)
    if sls is None:
        return 0.0 + 0.0j
    return complex(np.sum(f.values[sls]) * f.cell_volume)


def _cube_family_generations(f: SampledFunction):
    """Generations whose cubes can fit inside the window, finest first."""
    g_fine = -f.h_log2  # side == h
    max_side = min(
        (hi - lo) for lo, hi in zip(f.window_lo, f.window_hi)
    )
    gens = []
    g = g_fine
    while 2.0 ** (-g) <= max_side and g >= -60:
        gens.append(g)
        g -= 1
    return gens


def admissible_cubes(f: SampledFunction):
    """All dyadic cubes inside the window with side in [h, window side]."""
    out = []
    for g in _cube_family_generations(f):
        s = 1 << (-g - f.h_log2)
        ranges = []
        ok = True
        for a in range(f.dim):
            lo_cell, hi_cell = f.lo[a], f.lo[a] + f.shape[a]
            k_min = -((-lo_cell) // s)  # ceil division
            k_max = hi_cell // s  # cubes [k*s, (k+1)*s) with (k+1)*s <= hi
            if k_min >= k_max:
                ok = False
                break
            ranges.append(range(k_min, k_max))
        if not ok:
            continue
        idx = np.meshgrid(*[np.array(r) for r in ranges], indexing="ij")
        corners = np.stack([i.ravel() for i in idx], axis=-1)
        out.extend(DyadicCube(g, tuple(c)) for c in corners)
    return out


def bmo_norm(f: SampledFunction) -> float:
    """Sup of mean oscillation over all cell-aligned dyadic cubes in the window.

    Equals the sup over the admissible cube family of
    ``(1/|Q|) * integral_Q |f - f_Q|``, i.e. the L^inf norm of the sharp
    maximal function restricted to that family.
    """
    return bmo_report(f)["value"]


def bmo_report(f: SampledFunction) -> dict:
    """bmo_norm plus the cube-family bounds that make the number reproducible."""
    gens = _cube_family_generations(f)
    best = 0.0
    witness = None
    count = 0
    for g in gens:
        s = 1 << (-g - f.h_log2)
        aligned = all(lo % s == 0 and n % s == 0 for lo, n in zip(f.lo, f.shape))
        if aligned:
            # Whole window tiles into cubes: vectorized oscillation.
            new_shape = []
            for n in f.shape:
                new_shape.extend([n // s, s])
            v = f.values.reshape(new_shape)
            cell_axes = tuple(range(1, 2 * f.dim, 2))
            means = v.mean(axis=cell_axes, keepdims=True)
            osc = np.abs(v - means).mean(axis=cell_axes)
            count += osc.size
            m = float(osc.max())
            if m > best:
                best = m
                flat = int(np.argmax(osc))
                cube_idx = np.unravel_index(flat, osc.shape)
                corner = tuple(
                    (f.lo[a] // s) + int(cube_idx[a]) for a in range(f.dim)
                )
                witness = DyadicCube(g, corner)
        else:
            for Q in _cubes_at_generation(f, g):
                sls = f.cube_slices(Q)
                block = f.values[sls]
                m = float(np.mean(np.abs(block - block.mean())))
                count += 1
                if m > best:
                    best, witness = m, Q
    return {
        "value": best,
        "witness": witness.key() if witness is not None else None,
        "generations": [int(g) for g in gens],
        "cube_count": int(count),
    }


def _cubes_at_generation(f: SampledFunction, g: int):
    s = 1 << (-g - f.h_log2)
    ranges = []
    for a in range(f.dim):
        lo_cell, hi_cell = f.lo[a], f.lo[a] + f.shape[a]
        k_min = -((-lo_cell) // s)
        k_max = hi_cell // s
        if k_min >= k_max:
            return
        ranges.append(range(k_min, k_max))
    from itertools import product as _product

    for corner in _product(*ranges):
        yield DyadicCube(g, tuple(corner))


# ---------------------------------------------------------------------------
# file formats (layouts documented in docs/file-formats.md)
# ---------------------------------------------------------------------------

_BIN_MAGIC = b"MLSQGRD1"


def save_binary(f: SampledFunction, path):
    """Binary layout: magic, version, n, h_log2, complex flag, axes, values."""
    is_complex = np.iscomplexobj(f.values)
    with open(path, "wb") as fh:
        fh.write(_BIN_MAGIC)
        fh.write(struct.pack("<IIiI", 1, f.dim, f.h_log2, int(is_complex)))
        for a in range(f.dim):
            fh.write(struct.pack("<qQ", f.lo[a], f.shape[a]))
        data = np.ascontiguousarray(
            f.values, dtype=np.complex128 if is_complex else np.float64
        )
        fh.write(data.tobytes())


def load_binary(path) -> SampledFunction:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _BIN_MAGIC:
            raise ValueError("not an mlsq grid file")
        version, n, h_log2, is_complex = struct.unpack("<IIiI", fh.read(16))
        if version != 1:
            raise ValueError(f"unsupported grid file version {version}")
        lo, shape = [], []
        for _ in range(n):
            a, b = struct.unpack("<qQ", fh.read(16))
            lo.append(a)
            shape.append(int(b))
        dtype = np.complex128 if is_complex else np.float64
        count = int(np.prod(shape))
        data = np.frombuffer(fh.read(), dtype=dtype, count=count)
    return SampledFunction(h_log2, tuple(lo), data.reshape(shape))


def save_csv(f: SampledFunction, path):
    """CSV layout: one JSON header line, then `i1,...,in,re,im` per cell."""
    header = {
        "format": "mlsq-grid-csv",
        "version": 1,
        "n": f.dim,
        "h_log2": f.h_log2,
        "lo": list(f.lo),
        "shape": list(f.shape),
    }
    with open(path, "w", newline="") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        fh.write(",".join(f"i{a}" for a in range(f.dim)) + ",re,im\n")
        vals = f.values
        for idx in np.ndindex(*f.shape):
            v = complex(vals[idx])
            fh.write(
                ",".join(str(i) for i in idx) + f",{v.real!r},{v.imag!r}\n"
            )


def load_csv(path) -> SampledFunction:
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise ValueError("missing mlsq grid CSV header")
        header = json.loads(first[2:])
        fh.readline()  # column names
        shape = tuple(header["shape"])
        vals = np.zeros(shape, dtype=np.complex128)
        n = header["n"]
        for line in fh:
            parts = line.strip().split(",")
            if not parts or parts == [""]:
                continue
            idx = tuple(int(p) for p in parts[:n])
            vals[idx] = float(parts[n]) + 1j * float(parts[n + 1])
    if np.allclose(vals.imag, 0.0):
        vals = vals.real.copy()
    return SampledFunction(header["h_log2"], tuple(header["lo"]), vals)
