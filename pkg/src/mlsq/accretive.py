"""Pseudo-accretive systems and their compatibility conditions.

A pseudo-accretive system assigns to every dyadic cube Q a function b_Q
with uniformly bounded L^q mass (size condition), a non-degenerate cube
average (accretivity), and -- for a compatible family of m systems --
product averages controlled by products of single averages on every dyadic
subcube (compatibility).  ``check_system`` measures the smallest constants
B1, B2, B3 making those conditions hold over an enumerated subcube family.

The one-dimensional built-in systems are piecewise polynomials; for those
the averages are computed in exact rational arithmetic, so the reported
constants (and the compatibility counterexample values) carry no quadrature
error.  Everything else uses midpoint-rule cell sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from . import kernels as _kernels
from .dyadic import DyadicCube, subcubes
from .gridfn import SampledFunction
from .sqfn import ScaleGrid

# Ratio denominators at or below this (relative) size count as zero when
# estimating B2/B3 on the sampled path; the exact path compares Fractions.
ZERO_TOL = 1e-12


class AccretivityError(ValueError):
    """Cube average of the product vanishes; B2 undefined."""


# ---------------------------------------------------------------------------
# exact piecewise polynomials (n = 1)
# ---------------------------------------------------------------------------


def _cube_interval(Q: DyadicCube) -> tuple[Fraction, Fraction]:
    side = Fraction(1, 2**Q.generation) if Q.generation >= 0 else Fraction(
        2 ** (-Q.generation)
    )
    lo = Q.corner[0] * side
    return lo, lo + side


def _poly_mul(a: tuple, b: tuple) -> tuple:
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, ca in enumerate(a):
        for j, cb in enumerate(b):
            out[i + j] += ca * cb
    return tuple(out)


def _poly_int(coeffs: tuple, lo: Fraction, hi: Fraction) -> Fraction:
    total = Fraction(0)
    for k, c in enumerate(coeffs):
        total += c * (hi ** (k + 1) - lo ** (k + 1)) / (k + 1)
    return total


@dataclass(frozen=True)
class PiecewisePoly:
    """Polynomial pieces on disjoint rational intervals; zero elsewhere."""

    pieces: tuple  # of (lo: Fraction, hi: Fraction, coeffs: tuple[Fraction])

    def integral(self, lo, hi) -> Fraction:
        lo, hi = Fraction(lo), Fraction(hi)
        total = Fraction(0)
        for a, b, coeffs in self.pieces:
            aa, bb = max(a, lo), min(b, hi)
            if aa < bb:
                total += _poly_int(coeffs, aa, bb)
        return total

    def average(self, Q: DyadicCube) -> Fraction:
        lo, hi = _cube_interval(Q)
        return self.integral(lo, hi) / (hi - lo)

    def __mul__(self, other: "PiecewisePoly") -> "PiecewisePoly":
        pieces = []
        for a1, b1, c1 in self.pieces:
            for a2, b2, c2 in other.pieces:
                lo, hi = max(a1, a2), min(b1, b2)
                if lo < hi:
                    pieces.append((lo, hi, _poly_mul(c1, c2)))
        return PiecewisePoly(tuple(sorted(pieces)))

    def abs_power_integral(self, lo, hi, q: int) -> Fraction:
        """Integral of |poly|^q for integer q, splitting at sign changes.

        Only supports pieces that keep one sign per interval or are linear;
        the built-in systems satisfy this.
        """
        lo, hi = Fraction(lo), Fraction(hi)
        total = Fraction(0)
        for a, b, coeffs in self.pieces:
            aa, bb = max(a, lo), min(b, hi)
            if aa >= bb:
                continue
            # Split a linear piece at its root; otherwise require no sign
            # change on the interval (checked at endpoints and midpoint).
            segs = [(aa, bb)]
            if len(coeffs) == 2 and coeffs[1] != 0:
                root = -coeffs[0] / coeffs[1]
                if aa < root < bb:
                    segs = [(aa, root), (root, bb)]
            powered = coeffs
            for _ in range(q - 1):
                powered = _poly_mul(powered, coeffs)
            for s0, s1 in segs:
                val = _poly_int(powered, s0, s1)
                total += abs(val) if q % 2 else val
        return total

    def sample(self, xs: np.ndarray) -> np.ndarray:
        out = np.zeros_like(xs, dtype=float)
        for a, b, coeffs in self.pieces:
            m = (xs >= float(a)) & (xs < float(b))
            acc = np.zeros(m.sum())
            for c in reversed(coeffs):
                acc = acc * xs[m] + float(c)
            out[m] = acc
        return out


# ---------------------------------------------------------------------------
# systems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PseudoAccretiveSystem:
    """One slot of a compatible family: b_Q generator plus its exponent."""

    slot: int
    exponent: float  # q_i > 1
    generator: object  # (Q: DyadicCube, h_log2: int) -> SampledFunction
    exact_generator: object = None  # (Q) -> PiecewisePoly, n = 1 only
    label: str = "custom"

    def __post_init__(self):
        if not self.exponent > 1:
            raise ValueError("slot exponent q_i must exceed 1")

    def sample(self, Q: DyadicCube, h_log2: int) -> SampledFunction:
        return self.generator(Q, h_log2)

    def exact(self, Q: DyadicCube):
        return self.exact_generator(Q) if self.exact_generator else None


def _grid_on_cube(Q: DyadicCube, h_log2: int, values) -> SampledFunction:
    s = 1 << (-Q.generation - h_log2)
    lo = tuple(c * s for c in Q.corner)
    return SampledFunction(h_log2, lo, values)


def _cube_mesh(Q: DyadicCube, h_log2: int):
    s = 1 << (-Q.generation - h_log2)
    h = 2.0**h_log2
    axes = [(Q.corner[a] * s + np.arange(s) + 0.5) * h for a in range(Q.dim)]
    return np.meshgrid(*axes, indexing="ij"), s


def builtin_system(name: str, m: int, n: int = 1, q=None) -> list[PseudoAccretiveSystem]:
    """The worked example families, exactly as printed.

    * ``characteristic``: b_Q = chi_Q (any n, any m).
    * ``gaussian``: b_Q = exp(-|x - x_Q|^2 / side^2) on Q (any n, any m).
    * ``poisson``: b_Q = side^{n+1} / (side^2 + |x - x_Q|^2)^{(n+1)/2} on Q.
    * ``alternating``: n=1 pair; slot 1 is +1 on the first three quarters
      of Q and -1 on the last quarter, slot 2 is -1 on the first quarter
      and +1 on the rest.
    * ``noncompatible``: n=1 pair with b^1 = b^2 = (x - 1/2) chi_Q on
      Q = [0, 2), transported affinely to other cubes.

    ``q`` is the combined exponent (1/q = sum 1/q_i); slots get q_i = m*q.
    """
    q = Fraction(q if q is not None else 2)
    q_i = float(m * q)

    def restrict(fn):
        def gen(Q: DyadicCube, h_log2: int) -> SampledFunction:
            mesh, _ = _cube_mesh(Q, h_log2)
            return _grid_on_cube(Q, h_log2, fn(Q, mesh))

        return gen

    if name == "characteristic":
        def fn(Q, mesh):
            return np.ones_like(mesh[0])

        def exact(Q):
            lo, hi = _cube_interval(Q)
            return PiecewisePoly(((lo, hi, (Fraction(1),)),))

        sys = PseudoAccretiveSystem(
            0, q_i, restrict(fn), exact if n == 1 else None, "characteristic"
        )
        return [replace(sys, slot=i) for i in range(m)]

    if name == "gaussian":
        def fn(Q, mesh):
            c = Q.center
            r2 = sum((g - c[a]) ** 2 for a, g in enumerate(mesh))
            return np.exp(-r2 / Q.side**2)

        return [
            PseudoAccretiveSystem(i, q_i, restrict(fn), None, "gaussian")
            for i in range(m)
        ]

    if name == "poisson":
        def fn(Q, mesh):
            c = Q.center
            r2 = sum((g - c[a]) ** 2 for a, g in enumerate(mesh))
            ell = Q.side
            return ell ** (n + 1) / (ell**2 + r2) ** ((n + 1) / 2.0)

        return [
            PseudoAccretiveSystem(i, q_i, restrict(fn), None, "poisson")
            for i in range(m)
        ]

    if name == "alternating":
        if n != 1 or m != 2:
            raise ValueError("alternating system is the n=1 bilinear pair")

        def exact1(Q):
            lo, hi = _cube_interval(Q)
            side = hi - lo
            return PiecewisePoly(
                (
                    (lo, lo + 3 * side / 4, (Fraction(1),)),
                    (lo + 3 * side / 4, hi, (Fraction(-1),)),
                )
            )

        def exact2(Q):
            lo, hi = _cube_interval(Q)
            side = hi - lo
            return PiecewisePoly(
                (
                    (lo, lo + side / 4, (Fraction(-1),)),
                    (lo + side / 4, hi, (Fraction(1),)),
                )
            )

        def from_exact(exact_fn):
            def gen(Q, h_log2):
                mesh, _ = _cube_mesh(Q, h_log2)
                return _grid_on_cube(Q, h_log2, exact_fn(Q).sample(mesh[0]))

            return gen

        return [
            PseudoAccretiveSystem(0, q_i, from_exact(exact1), exact1, "alternating"),
            PseudoAccretiveSystem(1, q_i, from_exact(exact2), exact2, "alternating"),
        ]

    if name == "noncompatible":
        if n != 1 or m != 2:
            raise ValueError("noncompatible system is the n=1 bilinear pair")

        def exact_nc(Q):
            # Affine image of (x - 1/2) on [0, 2): u = 2 (x - lo)/side.
            lo, hi = _cube_interval(Q)
            side = hi - lo
            a = Fraction(2) / side
            return PiecewisePoly(
                ((lo, hi, (-a * lo - Fraction(1, 2), a)),)
            )

        def gen_nc(Q, h_log2):
            mesh, _ = _cube_mesh(Q, h_log2)
            return _grid_on_cube(Q, h_log2, exact_nc(Q).sample(mesh[0]))

        return [
            PseudoAccretiveSystem(i, q_i, gen_nc, exact_nc, "noncompatible")
            for i in range(2)
        ]

    raise ValueError(f"unknown system {name!r}")


# ---------------------------------------------------------------------------
# materialized data on one root cube
# ---------------------------------------------------------------------------


class SystemOnCube:
    """Samples (and exact forms, when available) of b_Q^i on one root cube.

    Cube averages over subcubes are O(1) after a prefix-sum pass, which the
    stopping-time recursion and the (x, t) sweeps rely on.
    """

    def __init__(self, systems, Q: DyadicCube, h_log2: int):
        self.systems = list(systems)
        self.Q = Q
        self.h_log2 = h_log2
        self.fs = [s.sample(Q, h_log2) for s in self.systems]
        exacts = [s.exact(Q) for s in self.systems]
        self.exact = exacts if all(e is not None for e in exacts) else None
        prod = self.fs[0].values.copy()
        for f in self.fs[1:]:
            prod = prod * f.values
        self.prod_fn = SampledFunction(h_log2, self.fs[0].lo, prod)
        self._cums = [_boxsum(f.values) for f in self.fs]
        self._cum_prod = _boxsum(prod)
        if self.exact is not None:
            self.exact_prod = self.exact[0]
            for e in self.exact[1:]:
                self.exact_prod = self.exact_prod * e

    @property
    def m(self) -> int:
        return len(self.systems)

    def _cube_box(self, R: DyadicCube):
        f = self.fs[0]
        s = 1 << (-R.generation - self.h_log2)
        lo = tuple(R.corner[a] * s - f.lo[a] for a in range(f.dim))
        return lo, s

    def avg_slot(self, i: int, R: DyadicCube) -> complex:
        if self.exact is not None:
            return complex(self.exact[i].average(R))
        lo, s = self._cube_box(R)
        return _boxsum_query(self._cums[i], lo, s) * self.fs[0].cell_volume / R.volume

    def avg_prod(self, R: DyadicCube) -> complex:
        if self.exact is not None:
            return complex(self.exact_prod.average(R))
        lo, s = self._cube_box(R)
        return _boxsum_query(self._cum_prod, lo, s) * self.fs[0].cell_volume / R.volume

    def avg_slot_exact(self, i: int, R: DyadicCube) -> Fraction:
        return self.exact[i].average(R)

    def avg_prod_exact(self, R: DyadicCube) -> Fraction:
        return self.exact_prod.average(R)


def _boxsum(values: np.ndarray) -> np.ndarray:
    c = values
    for a in range(values.ndim):
        c = np.cumsum(c, axis=a)
    return np.pad(c, [(1, 0)] * values.ndim)


def _boxsum_query(cum: np.ndarray, lo, s: int):
    n = cum.ndim
    total = 0.0
    for mask in range(1 << n):
        idx = []
        sign = 1
        for a in range(n):
            if mask >> a & 1:
                idx.append(lo[a])
                sign = -sign
            else:
                idx.append(lo[a] + s)
        total = total + sign * cum[tuple(idx)]
    return total


# ---------------------------------------------------------------------------
# condition checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionReport:
    """Measured constants for the size/accretivity/compatibility conditions.

    ``B1_est``, ``B2_est``, ``B3_est`` are the smallest constants making the
    three conditions hold over the enumerated family (inf when a condition
    cannot hold); ``passes`` holds per-condition flags against the declared
    budgets, or against mere finiteness when no budget was given.
    """

    B1_est: float
    B2_est: float
    B3_est: float
    q: float
    q_slots: tuple
    floor_generation: int
    method: str
    passes: dict
    witnesses: dict
    budgets: dict | None


def check_system(
    systems,
    Q: DyadicCube,
    h_log2: int,
    floor_generation: int | None = None,
    budgets: dict | None = None,
) -> ConditionReport:
    """Measure B1, B2, B3 for the family on Q down to the floor generation.

    The compatibility supremum is certified only on the enumerated finite
    family (all dyadic R inside Q with side >= the floor, default 8 cells).
    A subcube with vanishing single averages but non-vanishing product
    average makes B3 infinite, witnessed by that subcube; the 0/0 case
    counts as satisfied.
    """
    data = SystemOnCube(systems, Q, h_log2)
    if floor_generation is None:
        floor_generation = -h_log2 - 3  # side = 8 cells
    depth = floor_generation - Q.generation
    if depth < 0:
        raise ValueError("floor generation coarser than the cube itself")

    exact = data.exact is not None
    # B1: max_i integral_Q |b_i|^{q_i} / |Q|
    B1 = 0.0
    for i, (sysi, f) in enumerate(zip(data.systems, data.fs)):
        qi = sysi.exponent
        if exact and float(qi).is_integer():
            lo, hi = _cube_interval(Q)
            val = float(data.exact[i].abs_power_integral(lo, hi, int(qi)))
        else:
            val = float(np.sum(np.abs(f.values) ** float(qi)) * f.cell_volume)
        B1 = max(B1, val / Q.volume)

    # B2: reciprocal of the product average on Q.
    a = data.avg_prod(Q)
    witnesses = {"accretivity": None, "compatibility": None}
    if exact:
        a_zero = data.avg_prod_exact(Q) == 0
    else:
        a_zero = abs(a) <= ZERO_TOL
    if a_zero:
        B2 = math.inf
        witnesses["accretivity"] = Q.key()
    else:
        B2 = 1.0 / abs(a)

    # B3: sup over the enumerated subcube family.
    B3 = 0.0
    for R in subcubes(Q, depth):
        if exact:
            num = abs(data.avg_prod_exact(R))
            den = Fraction(1)
            for i in range(data.m):
                den *= abs(data.avg_slot_exact(i, R))
            num_zero, den_zero = num == 0, den == 0
        else:
            num = abs(data.avg_prod(R))
            den = 1.0
            for i in range(data.m):
                den *= abs(data.avg_slot(i, R))
            scale = max(float(np.max(np.abs(data.prod_fn.values))), 1.0)
            num_zero = num <= ZERO_TOL * scale
            den_zero = den <= ZERO_TOL * scale
        if den_zero:
            if not num_zero:
                B3 = math.inf
                if witnesses["compatibility"] is None:
                    witnesses["compatibility"] = R.key()
            continue  # 0/0 counts as satisfied
        B3 = max(B3, float(num / den))

    q_slots = tuple(s.exponent for s in data.systems)
    q = 1.0 / sum(1.0 / qi for qi in q_slots)
    passes = {
        "bsize": math.isfinite(B1) if budgets is None else B1 <= budgets.get("B1", math.inf),
        "accretivity": math.isfinite(B2)
        if budgets is None
        else B2 <= budgets.get("B2", math.inf),
        "compatibility": math.isfinite(B3)
        if budgets is None
        else B3 <= budgets.get("B3", math.inf),
    }
    return ConditionReport(
        B1_est=B1,
        B2_est=B2,
        B3_est=B3,
        q=q,
        q_slots=q_slots,
        floor_generation=floor_generation,
        method="exact" if exact else "grid",
        passes=passes,
        witnesses=witnesses,
        budgets=budgets,
    )


def check_theta_cancel(
    K: _kernels.KernelFamily,
    systems,
    Q: DyadicCube,
    q: float,
    scales: ScaleGrid,
    h_log2: int,
    budget: float | None = None,
) -> dict:
    """Left side of the square-function cancellation condition over |Q|.

    Integrates (sum_{t_k <= side} |Theta_t(b_Q^1, ..., b_Q^m)|^2 ln2/K)^{q/2}
    over Q and divides by |Q|.
    """
    data = SystemOnCube(systems, Q, h_log2)
    acc = np.zeros(data.fs[0].shape, dtype=float)
    for t in scales.clipped(0.0, Q.side):
        th = _kernels.apply_theta(K, float(t), data.fs)
        acc += np.abs(th.values) ** 2 * scales.weight
    # Integrate over Q only; the b's may live on a wider working window.
    sls = data.fs[0].cube_slices(Q)
    val = float(np.mean(acc[sls] ** (q / 2.0)))
    return {
        "value": val,
        "passed": True if budget is None else bool(val <= budget),
        "budget": budget,
        "q": q,
        "scale_count": int(len(scales.clipped(0.0, Q.side))),
    }
