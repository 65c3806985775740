"""Carleson measure norms over dyadic tents and related diagnostics.

A measure on the upper half space is sampled as a nonnegative density
against dx dt/t on a grid window times a log-uniform scale grid.  The
Carleson norm over a declared finite cube family is the largest tent mass
divided by the base volume; reports always name the family, since the
supremum is certified on it alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels as _kernels
from .avgops import MollifierSpec, smooth_approx
from .dyadic import DyadicCube
from .gridfn import SampledFunction, lp_norm
from .sqfn import ScaleGrid


class TentRangeError(ValueError):
    """A tent sticks out of the sampled region (window or scale range)."""


@dataclass(frozen=True)
class MeasureSampler:
    """Density of d-mu against dx dt/t over a window times a scale grid.

    ``density(t, ref)`` returns one nonnegative value per cell of the
    reference grid at scale t; ``ref`` carries the window geometry.
    """

    density: object
    ref: SampledFunction
    scales: ScaleGrid

    def density_at(self, t: float) -> np.ndarray:
        vals = np.asarray(self.density(float(t), self.ref), dtype=float)
        if vals.shape != self.ref.shape:
            raise ValueError("density must return one value per grid cell")
        if np.any(vals < 0):
            raise ValueError("density must be nonnegative")
        return vals


def scaled_sampler(mu: MeasureSampler, factor: float) -> MeasureSampler:
    return MeasureSampler(
        lambda t, ref: factor * mu.density(t, ref), mu.ref, mu.scales
    )


def tent_mass(mu: MeasureSampler, Q: DyadicCube, _cache: dict | None = None) -> float:
    """Mass of the tent Q x (0, side(Q)] under the sampled measure."""
    ref = mu.ref
    sls = ref.cube_slices(Q)  # raises if Q leaves the window
    if Q.side > mu.scales.t_max * (1 + 1e-12):
        raise TentRangeError(
            f"tent height {Q.side} exceeds sampled t_max {mu.scales.t_max}"
        )
    total = 0.0
    for t in mu.scales.clipped(0.0, Q.side):
        t = float(t)
        if _cache is not None and t in _cache:
            dens = _cache[t]
        else:
            dens = mu.density_at(t)
            if _cache is not None:
                _cache[t] = dens
        total += float(np.sum(dens[sls])) * ref.cell_volume * mu.scales.weight
    return total


def carleson_norm(mu: MeasureSampler, cube_family: list[DyadicCube]) -> dict:
    """Max of tent mass over base volume across the declared cube family."""
    cache: dict = {}
    best, witness, rows = 0.0, None, []
    for Q in cube_family:
        mass = tent_mass(mu, Q, cache)
        ratio = mass / Q.volume
        rows.append({"cube": list(Q.key()), "tent_mass": mass, "ratio": ratio})
        if ratio >= best:
            best, witness = ratio, Q
    return {
        "value": best,
        "witness": list(witness.key()) if witness is not None else None,
        "per_cube": rows,
        "family_size": len(cube_family),
        "t_min": mu.scales.t_min,
        "t_max": mu.scales.t_max,
        "per_octave": mu.scales.per_octave,
    }


def theta_density(
    K: _kernels.KernelFamily,
    ref: SampledFunction,
    scales: ScaleGrid,
    eps_tail: float = 1e-8,
    tau: SampledFunction | None = None,
) -> MeasureSampler:
    """The density |Theta_t(1,...,1)(x)|^2, optionally cut below tau(x)."""
    if tau is not None:
        ref._require_same_grid(tau)

    def density(t, ref_):
        vals = np.abs(_kernels.theta_on_ones_grid(K, t, ref_, eps_tail)) ** 2
        if tau is not None:
            vals = np.where(t > tau.values.real, vals, 0.0)
        return vals

    return MeasureSampler(density, ref, scales)


def theta_carleson(
    K: _kernels.KernelFamily,
    cube_family: list[DyadicCube],
    scales: ScaleGrid,
    ref: SampledFunction,
    eps_tail: float = 1e-8,
    tau: SampledFunction | None = None,
) -> dict:
    """Carleson norm of |Theta_t(1,...,1)|^2 dx dt/t over the family."""
    mu = theta_density(K, ref, scales, eps_tail, tau)
    return carleson_norm(mu, cube_family)


def generation_masses(report: dict) -> dict[int, float]:
    """Max tent mass / |Q| per cube generation, for divergence trends."""
    out: dict[int, float] = {}
    for row in report["per_cube"]:
        g = int(row["cube"][0])
        out[g] = max(out.get(g, 0.0), row["ratio"])
    return dict(sorted(out.items()))


def level_sets(g: SampledFunction, threshold: float) -> float:
    """Measure of the superlevel set {g > threshold} by cell counting."""
    if np.any(g.values.real < 0) or np.any(np.abs(g.values.imag) > 0):
        raise ValueError("level sets expect a nonnegative real function")
    return float(np.count_nonzero(g.values.real > threshold) * g.cell_volume)


def embedding_check(
    mu: MeasureSampler, f: SampledFunction, q: float, spec: MollifierSpec
) -> dict:
    """Ratio ||P_t f||_{L^q(d mu)} / ||f||_{L^q} over the sampled region."""
    norm = lp_norm(f, q)
    if norm == 0.0:
        raise ValueError("zero input function: embedding ratio undefined")
    total = 0.0
    for t in mu.scales.samples():
        t = float(t)
        p = smooth_approx(f, t, spec)
        dens = mu.density_at(t)
        total += float(
            np.sum(np.abs(p.values) ** q * dens)
            * mu.ref.cell_volume
            * mu.scales.weight
        )
    value = total ** (1.0 / q)
    return {"ratio": value / norm, "numerator": value, "f_norm": norm, "q": q}
