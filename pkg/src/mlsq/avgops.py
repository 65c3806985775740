"""Dyadic averages, smooth approximations to the identity, and projections.

``dyadic_average`` averages over the selected cube Q(x, t) (smallest dyadic
cube containing x with side > t), so its output is piecewise constant on
one generation.  ``smooth_approx`` and ``lp_projection`` convolve with a
scaled profile whose discrete samples are renormalized per scale so the
stated integral (one, respectively zero) holds exactly on the grid.

Profiles
--------
* ``polybump``: (1 - |x|^2)^4 on the unit ball, integral one.  C^3
  smoothness rather than C^inf; enough at Holder exponents <= 1.
* ``polywavelet``: (1 - a_n |x|^2)(1 - |x|^2)^4 on the unit ball with a_n
  chosen so the integral vanishes.  Compact support makes the projection
  annihilate constants exactly away from window boundaries.
* ``ricker``: (n - |x|^2) exp(-|x|^2/2), mean zero with nonnegative Fourier
  transform, so its scale-cubed Calderon integral is safely positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import fftconvolve

from .dyadic import smallest_containing
from .gridfn import ResolutionError, SampledFunction
from .sqfn import ScaleGrid

C_RES = 4  # minimum grid cells per scale t


# ---------------------------------------------------------------------------
# profiles and mollifier specs
# ---------------------------------------------------------------------------


def _polybump_raw(r):
    v = np.clip(1.0 - r**2, 0.0, None)
    return v**4


def _poly_moment(n: int, power: int, samples: int = 4001) -> float:
    # integral of |x|^power (1-|x|^2)^4 over the unit ball in R^n, by the
    # radial formula sigma_{n-1} * int r^{power+n-1} (1-r^2)^4 dr.
    r = (np.arange(samples) + 0.5) / samples
    sigma = 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)
    return float(sigma * np.mean(r ** (power + n - 1) * (1 - r**2) ** 4))


@dataclass(frozen=True)
class MollifierSpec:
    """A named radial profile with its normalization contract.

    ``normalization`` is "one" for approximation-to-the-identity kernels or
    "zero" for Littlewood-Paley projections.  ``amplitude`` multiplies the
    base profile (calderon_normalize adjusts it); ``support_radius`` bounds
    the sampled stencil in profile units.
    """

    name: str
    normalization: str
    dim: int
    amplitude: float = 1.0
    support_radius: float = 1.0
    scale: float | None = None  # optional default t for operators

    def __post_init__(self):
        if self.normalization not in ("one", "zero"):
            raise ValueError("normalization must be 'one' or 'zero'")
        if self.name not in ("polybump", "polywavelet", "ricker"):
            raise ValueError(f"unknown profile {self.name!r}")

    def profile(self, r):
        r = np.asarray(r, dtype=float)
        if self.name == "polybump":
            base = _polybump_raw(r)
        elif self.name == "polywavelet":
            a = _poly_moment(self.dim, 0) / _poly_moment(self.dim, 2)
            base = (1.0 - a * r**2) * _polybump_raw(r)
        else:  # ricker
            base = (self.dim - r**2) * np.exp(-(r**2) / 2.0)
        return self.amplitude * base


def mollifier(name: str, dim: int, amplitude: float = 1.0) -> MollifierSpec:
    """Build a MollifierSpec with the right normalization tag and support."""
    if name == "polybump":
        return MollifierSpec(name, "one", dim, amplitude, support_radius=1.0)
    if name == "polywavelet":
        return MollifierSpec(name, "zero", dim, amplitude, support_radius=1.0)
    if name == "ricker":
        return MollifierSpec(name, "zero", dim, amplitude, support_radius=10.0)
    raise ValueError(f"unknown profile {name!r}")


def _discrete_kernel(spec: MollifierSpec, t: float, f: SampledFunction, c_res: int):
    """Sample the scaled profile at cell-offset distances.

    While the whole profile support fits in the sampled stencil, the
    discrete sum is forced to match the declared integral exactly
    (sum * h^n = 1 for "one", = 0 for "zero"), so P_t fixes constants and
    Q_t kills them on the grid, not just in the limit.  Once the scale is
    so large that the stencil is cut off by the window instead, the raw
    samples already are the true kernel restricted to reachable offsets
    (exact for compactly supported data), and no correction is applied --
    recentring a cut-off stencil would cancel precisely the large-scale
    action the operator is supposed to have.
    """
    if t < c_res * f.h:
        raise ResolutionError(f"scale t={t} below {c_res} cells of h={f.h}")
    h = f.h
    radius = spec.support_radius * t
    M_full = [int(math.ceil(radius / h))] * f.dim
    M = [min(M_full[a], f.shape[a]) for a in range(f.dim)]
    axes = [np.arange(-Ma, Ma + 1) * h for Ma in M]
    mesh = np.meshgrid(*axes, indexing="ij")
    r = np.sqrt(sum(g**2 for g in mesh)) / t
    kern = spec.profile(r) * t ** (-f.dim)
    if all(Ma == Mf for Ma, Mf in zip(M, M_full)):
        total = kern.sum() * f.cell_volume
        if spec.normalization == "one":
            if abs(total) < 1e-12:
                raise ValueError("profile integral vanished; cannot normalize")
            kern = kern / total
        else:
            kern = kern - total / (kern.size * f.cell_volume)
    return kern


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------


def dyadic_average(f: SampledFunction, t: float) -> SampledFunction:
    """A_t f: average of f over Q(x, t), constant on cubes of one generation.

    Cubes overrunning the window average f's zero extension against the
    full cube volume.
    """
    if t < f.h:
        raise ResolutionError(f"t={t} below grid spacing h={f.h}")
    g = smallest_containing(np.zeros(f.dim), t).generation
    s = 1 << (-g - f.h_log2)  # cube side in cells (>= 2 since side > t >= h)
    pad_lo, pad_hi, sls = [], [], []
    for a in range(f.dim):
        lo, n = f.lo[a], f.shape[a]
        start = (lo // s) * s
        stop = -((-(lo + n)) // s) * s
        pad_lo.append(lo - start)
        pad_hi.append(stop - (lo + n))
        sls.append(slice(lo - start, lo - start + n))
    padded = np.pad(f.values, list(zip(pad_lo, pad_hi)))
    block_shape = []
    for a, n in enumerate(padded.shape):
        block_shape.extend([n // s, s])
    blocks = padded.reshape(block_shape)
    cell_axes = tuple(range(1, 2 * f.dim, 2))
    means = blocks.mean(axis=cell_axes)
    out = np.repeat(means, s, axis=0)
    for a in range(1, f.dim):
        out = np.repeat(out, s, axis=a)
    return SampledFunction(f.h_log2, f.lo, out[tuple(sls)])


def smooth_approx(
    f: SampledFunction, t: float, spec: MollifierSpec, c_res: int = C_RES
) -> SampledFunction:
    """P_t f: convolution with the integral-one scaled profile."""
    if spec.normalization != "one":
        raise ValueError("smooth_approx needs an integral-one profile")
    kern = _discrete_kernel(spec, t, f, c_res)
    vals = fftconvolve(f.values, kern, mode="same") * f.cell_volume
    return SampledFunction(f.h_log2, f.lo, vals)


def lp_projection(
    f: SampledFunction, t: float, spec: MollifierSpec, c_res: int = C_RES
) -> SampledFunction:
    """Q_t f: convolution with the mean-zero scaled profile."""
    if spec.normalization != "zero":
        raise ValueError("lp_projection needs a mean-zero profile")
    kern = _discrete_kernel(spec, t, f, c_res)
    vals = fftconvolve(f.values, kern, mode="same") * f.cell_volume
    return SampledFunction(f.h_log2, f.lo, vals)


def multi_average(fs: list[SampledFunction], t: float) -> SampledFunction:
    """The multilinear average: product of A_t f_i."""
    out = dyadic_average(fs[0], t)
    for f in fs[1:]:
        out = out * dyadic_average(f, t)
    return out


def multi_smooth(fs, t: float, spec: MollifierSpec) -> SampledFunction:
    """The multilinear approximation to the identity: product of P_t f_i."""
    out = smooth_approx(fs[0], t, spec)
    for f in fs[1:]:
        out = out * smooth_approx(f, t, spec)
    return out


def error_split(
    fs: list[SampledFunction], t: float, spec: MollifierSpec
) -> list[SampledFunction]:
    """The terms E_t^j whose sum telescopes to prod A_t f_i - prod P_t f_i.

    E_t^j = (prod_{i<j} A_t f_i) (A_t f_j - P_t f_j) (prod_{i>j} P_t f_i);
    the identity holds pointwise by construction.
    """
    m = len(fs)
    A = [dyadic_average(f, t) for f in fs]
    P = [smooth_approx(f, t, spec) for f in fs]
    out = []
    for j in range(m):
        vals = A[j].values - P[j].values
        for i in range(j):
            vals = vals * A[i].values
        for i in range(j + 1, m):
            vals = vals * P[i].values
        out.append(SampledFunction(fs[0].h_log2, fs[0].lo, vals))
    return out


# ---------------------------------------------------------------------------
# Calderon normalization and reproduction
# ---------------------------------------------------------------------------


def _fourier_slice(spec: MollifierSpec, freqs: np.ndarray, samples: int = 8192):
    """hat(psi)(u e_1) for the profile, by quadrature of the cosine transform.

    Radial profiles reduce to a 1-D transform of the marginal along the
    first axis; the marginal is computed on a fine reference grid.
    """
    R = spec.support_radius
    if spec.dim == 1:
        x = -R + (np.arange(samples) + 0.5) * (2 * R / samples)
        marg = spec.profile(np.abs(x))
        w = 2 * R / samples
    else:
        side = 2048 if spec.dim == 2 else 256
        axes = [-R + (np.arange(side) + 0.5) * (2 * R / side) for _ in range(spec.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        r = np.sqrt(sum(g**2 for g in mesh))
        vals = spec.profile(r)
        w1 = 2 * R / side
        marg = vals.sum(axis=tuple(range(1, spec.dim))) * w1 ** (spec.dim - 1)
        x = axes[0]
        w = w1
    return np.cos(np.outer(freqs, x)) @ marg * w


def calderon_constant(
    spec: MollifierSpec,
    u_min: float = 2.0**-10,
    u_max: float = 2.0**10,
    per_octave: int = 16,
) -> float:
    """The scale-cubed integral of hat(psi)(t e_1) over dt/t on [u_min, u_max]."""
    grid = ScaleGrid(u_min, u_max, per_octave)
    u = grid.samples()
    hat = _fourier_slice(spec, u)
    return float(np.sum(hat**3) * grid.weight)


def calderon_normalize(
    spec: MollifierSpec,
    u_min: float = 2.0**-10,
    u_max: float = 2.0**10,
    stability_tol: float = 1e-3,
) -> tuple[MollifierSpec, float]:
    """Rescale a mean-zero profile so its scale-cubed integral equals one.

    Measures c = integral of hat(psi)(t e_1)^3 dt/t, rejects profiles whose
    c is nonpositive or moves under range extension, and returns the
    profile scaled by c**(-1/3) together with the measured c.
    """
    if spec.normalization != "zero":
        raise ValueError("profile must be mean zero")
    # Mean-zero sanity: hat(psi)(0) must vanish.
    dc = float(_fourier_slice(spec, np.zeros(1))[0])
    scale0 = float(_fourier_slice(spec, np.ones(1))[0])
    if abs(dc) > 1e-6 * max(abs(scale0), 1.0):
        raise ValueError("profile integral does not vanish")
    c = calderon_constant(spec, u_min, u_max)
    c_wide = calderon_constant(spec, u_min / 8.0, u_max * 8.0)
    if not (c > 0.0):
        raise ValueError(f"scale-cubed integral c={c} is not positive")
    if abs(c_wide - c) > stability_tol * abs(c):
        raise ValueError(
            f"scale-cubed integral unstable under range extension: "
            f"{c} vs {c_wide}"
        )
    normalized = replace(spec, amplitude=spec.amplitude * c ** (-1.0 / 3.0))
    return normalized, c


_TRIPLE_CACHE: dict = {}


def _triple_profile(spec: MollifierSpec):
    """Radial profile of psi * psi * psi in profile units, amplitude one.

    Scaling gives (psi_t * psi_t * psi_t)(x) = t^{-n} W3(x/t), so Q_t^3 is
    one convolution with the scaled triple profile.  Cached per (name, dim).
    """
    key = (spec.name, spec.dim)
    if key in _TRIPLE_CACHE:
        return _TRIPLE_CACHE[key]
    base = replace(spec, amplitude=1.0)
    R = spec.support_radius
    if spec.dim == 1:
        step = R / 2048.0
        u = np.arange(-R + step / 2.0, R, step)
        w1 = base.profile(np.abs(u))
        w2 = fftconvolve(w1, w1) * step
        w3 = fftconvolve(w2, w1) * step
        r = np.abs(np.arange(w3.size) - (w3.size - 1) / 2.0) * step
        order = np.argsort(r)
        out = (r[order], w3[order])
    else:
        step = R / 256.0
        side = int(round(2 * R / step))
        ax = -R + (np.arange(side) + 0.5) * step
        mesh = np.meshgrid(*([ax] * spec.dim), indexing="ij")
        w1 = base.profile(np.sqrt(sum(g**2 for g in mesh)))
        w2 = fftconvolve(w1, w1) * step**spec.dim
        w3 = fftconvolve(w2, w1) * step**spec.dim
        # Radial extraction along the first axis through the center.
        center = tuple((s - 1) // 2 for s in w3.shape)
        line = w3[(slice(None),) + center[1:]]
        r = np.abs(np.arange(w3.shape[0]) - center[0]) * step
        order = np.argsort(r)
        out = (r[order], line[order])
    _TRIPLE_CACHE[key] = out
    return out


def reproduce(
    f: SampledFunction, scales: ScaleGrid, spec: MollifierSpec
) -> SampledFunction:
    """Sum of Q_t^3 f over the scale grid; approximates f when normalized.

    Q_t^3 is applied as a single convolution with the triple-self-convolved
    profile rather than three window-restricted passes, so scales larger
    than the window do not lose the intermediate values they need (exact
    for compactly supported f up to grid quadrature).
    """
    r_grid, w3 = _triple_profile(spec)
    amp3 = spec.amplitude**3
    acc = np.zeros(f.shape, dtype=f.values.dtype)
    weight = scales.weight
    h = f.h
    diam = float(np.linalg.norm(np.array(f.shape) * h))
    for t in scales.samples():
        t = float(t)
        radius = min(3.0 * spec.support_radius * t, diam)
        M = [min(int(math.ceil(radius / h)), f.shape[a]) for a in range(f.dim)]
        axes = [np.arange(-Ma, Ma + 1) * h for Ma in M]
        mesh = np.meshgrid(*axes, indexing="ij")
        rr = np.sqrt(sum(g**2 for g in mesh)) / t
        kern = amp3 * np.interp(rr, r_grid, w3, right=0.0) * t ** (-f.dim)
        acc = acc + fftconvolve(f.values, kern, mode="same") * f.cell_volume * weight
    return SampledFunction(f.h_log2, f.lo, acc)
