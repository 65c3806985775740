"""The multilinear square function and its truncated variants.

The scale integral over dt/t is discretized on a log-uniform grid with a
fixed number of samples per octave; every sample carries the exact cell
mass ln(2)/K, so dyadic scale ranges are integrated without bias and
shifting the grid by whole octaves maps sample points onto sample points
exactly (which is where the dilation-covariance identities hold literally).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import kernels as _kernels
from .dyadic import DyadicCube
from .gridfn import SampledFunction, lp_norm

LN2 = math.log(2.0)


@dataclass(frozen=True)
class ScaleGrid:
    """Log-uniform scale samples t_k in [t_min, t_max], K per octave.

    Samples sit at octave midpoints ``t_min * 2**((k + 1/2)/K)`` and each
    carries weight ln(2)/K, the exact dt/t mass of its log-cell.
    """

    t_min: float
    t_max: float
    per_octave: int = 8

    def __post_init__(self):
        if not (0.0 < self.t_min < self.t_max):
            raise ValueError("need 0 < t_min < t_max")
        if self.per_octave < 1:
            raise ValueError("need at least one sample per octave")

    @property
    def octaves(self) -> float:
        return math.log2(self.t_max / self.t_min)

    @property
    def weight(self) -> float:
        return LN2 / self.per_octave

    def samples(self) -> np.ndarray:
        count = max(1, round(self.per_octave * self.octaves))
        k = np.arange(count)
        return self.t_min * 2.0 ** ((k + 0.5) / self.per_octave)

    def clipped(self, lower: float, upper: float) -> np.ndarray:
        """The subset of sample points in (lower, upper]; same t_k values."""
        t = self.samples()
        return t[(t > lower) & (t <= upper)]

    def shifted(self, octaves: int) -> "ScaleGrid":
        """Same sample count, every t_k multiplied by 2**octaves exactly."""
        f = 2.0**octaves
        return ScaleGrid(self.t_min * f, self.t_max * f, self.per_octave)


@dataclass(frozen=True)
class IndexTuple:
    """Target exponent p and slot exponents p_i tied by 1/p = sum 1/p_i.

    The relation is checked in exact rational arithmetic; tuples violating
    it are rejected because the scaling argument makes them meaningless.
    """

    p: Fraction
    slots: tuple[Fraction, ...]

    def __post_init__(self):
        object.__setattr__(self, "p", Fraction(self.p))
        object.__setattr__(
            self, "slots", tuple(Fraction(q) for q in self.slots)
        )
        if any(q <= 1 for q in self.slots):
            raise ValueError("slot exponents must lie in (1, inf)")
        if sum(Fraction(1, 1) / q for q in self.slots) != Fraction(1, 1) / self.p:
            raise ValueError(
                f"1/p must equal sum of 1/p_i exactly; got p={self.p}, "
                f"slots={self.slots}"
            )


def square_function(
    K: _kernels.KernelFamily,
    fs: list[SampledFunction],
    scales: ScaleGrid,
) -> SampledFunction:
    """S(f_1,...,f_m)(x) = (sum_k |Theta_{t_k}(f)(x)|^2 ln2/K)^(1/2)."""
    f0 = fs[0]
    acc = np.zeros(f0.shape, dtype=float)
    w = scales.weight
    for t in scales.samples():
        theta = _kernels.apply_theta(K, float(t), fs)
        acc += np.abs(theta.values) ** 2 * w
    return SampledFunction(f0.h_log2, f0.lo, np.sqrt(acc))


def truncated_g(
    K: _kernels.KernelFamily,
    Q: DyadicCube,
    scales: ScaleGrid,
    h_log2: int,
    lower=0.0,
    upper: float | None = None,
    eps_tail: float = 1e-6,
) -> SampledFunction:
    """Square-function profile of Theta_t(1,...,1) on Q with clipped scales.

    ``lower`` is a scalar or a per-point SampledFunction on Q's grid (the
    stopping time tau), ``upper`` defaults to side(Q).  Points whose t-range
    is empty get the value 0.
    """
    if upper is None:
        upper = Q.side
    s_cells = 1 << (-Q.generation - h_log2)
    lo = tuple(c * s_cells for c in Q.corner)
    ref = SampledFunction(h_log2, lo, np.zeros((s_cells,) * Q.dim))
    if isinstance(lower, SampledFunction):
        ref._require_same_grid(lower)
        low_vals = lower.values.real
    else:
        low_vals = np.full(ref.shape, float(lower))

    acc = np.zeros(ref.shape, dtype=float)
    w = scales.weight
    for t in scales.clipped(0.0, float(upper)):
        dens = np.abs(_kernels.theta_on_ones_grid(K, float(t), ref, eps_tail)) ** 2
        acc += np.where(t > low_vals, dens, 0.0) * w
    return SampledFunction(ref.h_log2, ref.lo, np.sqrt(acc))


def bound_ratio(
    K: _kernels.KernelFamily,
    fs: list[SampledFunction],
    idx: IndexTuple,
    scales: ScaleGrid,
) -> float:
    """||S(f)||_p divided by the product of ||f_i||_{p_i}."""
    if len(fs) != len(idx.slots):
        raise ValueError("one slot exponent per input function")
    denom = 1.0
    for f, q in zip(fs, idx.slots):
        norm = lp_norm(f, float(q))
        if norm == 0.0:
            raise ValueError("zero input function: ratio undefined")
        denom *= norm
    S = square_function(K, fs, scales)
    return lp_norm(S, float(idx.p)) / denom
