"""Paraproduct with a prescribed symbol and the Tb-condition evaluator.

The operator pairs a mean-zero projection of the symbol against smoothed
arguments and projects once more:

    L(f_1, ..., f_m) = sum_t Q_t( (Q_t^2 beta) * prod_i P_t f_i ) ln2/K,

so L(1, ..., 1) recovers beta through the reproducing formula while every
transpose annihilates constants.  Both profiles are compactly supported, so
the annihilation is exact away from the window boundary; the window must
leave a margin of at least t_max times the profile support radius around
the supports involved.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .avgops import MollifierSpec, lp_projection, smooth_approx
from .carleson import MeasureSampler
from .dyadic import DyadicCube
from .gridfn import SampledFunction, constant_like, integral, lp_norm
from .sqfn import ScaleGrid


def _pair(f: SampledFunction, g: SampledFunction) -> complex:
    f._require_same_grid(g)
    return complex(np.sum(f.values * np.conj(g.values)) * f.cell_volume)


@dataclass(frozen=True)
class Paraproduct:
    """Symbol, profiles, and scale grid defining the operator L."""

    beta: SampledFunction
    psi: MollifierSpec  # mean-zero profile, calderon-normalized
    phi: MollifierSpec  # integral-one profile
    scales: ScaleGrid
    m: int

    def __post_init__(self):
        if self.psi.normalization != "zero":
            raise ValueError("psi must be a mean-zero profile")
        if self.phi.normalization != "one":
            raise ValueError("phi must be an integral-one profile")
        if self.m < 1:
            raise ValueError("m must be at least 1")
        object.__setattr__(self, "_qt2_cache", {})

    @property
    def dim(self) -> int:
        return self.beta.dim

    def qt2_beta(self, t: float) -> SampledFunction:
        t = float(t)
        cache = self._qt2_cache
        if t not in cache:
            g = lp_projection(self.beta, t, self.psi)
            cache[t] = lp_projection(g, t, self.psi)
        return cache[t]

    def carleson_density(self, scales: ScaleGrid | None = None) -> MeasureSampler:
        """|Q_t^2 beta|^2 as a measure density (the operator's Carleson mass)."""

        def density(t, ref):
            return np.abs(self.qt2_beta(t).values) ** 2

        return MeasureSampler(density, self.beta, scales or self.scales)


def eval_L(P: Paraproduct, fs: list[SampledFunction]) -> SampledFunction:
    """Scale-quadrature of Q_t((Q_t^2 beta) prod_i P_t f_i)."""
    if len(fs) != P.m:
        raise ValueError(f"paraproduct expects {P.m} arguments")
    for f in fs:
        P.beta._require_same_grid(f)
    acc = np.zeros(P.beta.shape, dtype=complex)
    w = P.scales.weight
    for t in P.scales.samples():
        t = float(t)
        prod = P.qt2_beta(t).values.copy()
        for f in fs:
            prod = prod * smooth_approx(f, t, P.phi).values
        inner = SampledFunction(P.beta.h_log2, P.beta.lo, prod)
        acc = acc + lp_projection(inner, t, P.psi).values * w
    if np.allclose(acc.imag, 0.0):
        acc = acc.real.copy()
    return SampledFunction(P.beta.h_log2, P.beta.lo, acc)


def pairing_dual(P: Paraproduct, fs: list[SampledFunction], g: SampledFunction):
    """<L(f), g> computed on the dual side, sum_t <(Q_t^2 b) prod P_t f, Q_t g>."""
    total = 0.0 + 0.0j
    w = P.scales.weight
    for t in P.scales.samples():
        t = float(t)
        prod = P.qt2_beta(t).values.copy()
        for f in fs:
            prod = prod * smooth_approx(f, t, P.phi).values
        qg = lp_projection(g, t, P.psi)
        total += np.sum(prod * np.conj(qg.values)) * P.beta.cell_volume * w
    return complex(total)


def eval_kernel(P: Paraproduct, x, ys) -> complex:
    """The kernel ell(x, y_1, ..., y_m) by scale-and-space quadrature.

    Integrates psi_t(x - u) Q_t^2 beta(u) prod_i phi_t(u - y_i) over the
    symbol's grid and the scale grid.  The full diagonal is excluded.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    ys = [np.atleast_1d(np.asarray(y, dtype=float)) for y in ys]
    if len(ys) != P.m:
        raise ValueError(f"kernel expects {P.m} y-points")
    h = P.beta.h
    if all(np.linalg.norm(x - y) < h for y in ys):
        raise ValueError("all points coincide at grid scale: kernel singular")
    mesh = P.beta.meshgrid()
    total = 0.0 + 0.0j
    w = P.scales.weight
    for t in P.scales.samples():
        t = float(t)
        ru = np.sqrt(sum((g - x[a]) ** 2 for a, g in enumerate(mesh))) / t
        vals = P.psi.profile(ru) * t ** (-P.dim) * P.qt2_beta(t).values
        if not np.any(vals):
            continue
        for y in ys:
            rv = np.sqrt(sum((g - y[a]) ** 2 for a, g in enumerate(mesh))) / t
            vals = vals * (P.phi.profile(rv) * t ** (-P.dim))
        total += np.sum(vals) * P.beta.cell_volume * w
    return complex(total)


# ---------------------------------------------------------------------------
# cancellation tests
# ---------------------------------------------------------------------------


def test_cancellation(P: Paraproduct, phi_test: SampledFunction) -> dict:
    """Check L(1,...,1) = beta and vanishing transposes against phi_test.

    The 1-arguments are realized as the window-filling constant; phi_test
    is recentred to exact mean zero first.  Returns the pairing error
    |<L(1,..,1), phi> - <beta, phi>| and the transpose pairings
    |<L(.., phi at slot i, ..), 1>| together with their natural reference
    scales.
    """
    vol = float(np.prod(np.array(phi_test.shape))) * phi_test.cell_volume
    mean = integral(phi_test).real / vol
    phi0 = phi_test - mean
    resid = abs(integral(phi0))
    if resid > 1e-9 * max(lp_norm(phi0, 1), 1e-30):
        raise ValueError("phi_test mean did not cancel within tolerance")

    ones = constant_like(P.beta, 1.0)
    L11 = eval_L(P, [ones] * P.m)
    pairing = _pair(L11, phi0)
    target = _pair(P.beta, phi0)
    transpose = []
    for i in range(P.m):
        args = [ones] * P.m
        args[i] = phi0
        transpose.append(abs(_pair(eval_L(P, args), ones)))
    return {
        "pairing": pairing,
        "target": target,
        "pairing_error": abs(pairing - target),
        "pairing_rel": abs(pairing - target) / abs(target) if target != 0 else math.inf,
        "transpose_residuals": transpose,
        "beta_sup": lp_norm(P.beta, np.inf),
        "phi_l1": lp_norm(phi0, 1),
    }


# ---------------------------------------------------------------------------
# Calderon-Zygmund kernel sweeps
# ---------------------------------------------------------------------------


def cz_sweep(
    P: Paraproduct,
    mode: str = "size",
    d_min: float | None = None,
    d_max: float | None = None,
    per_octave: int = 4,
    holder: float = 1.0,
    seed: int = 0,
) -> dict:
    """Sample the kernel along a dyadic ladder of separations d.

    For ``size`` the products |ell| d^{mn} are collected per octave; for
    ``reg_x`` the x-regularity quotients |ell(x,..) - ell(x',..)| over
    |x - x'|^gamma d^{-(mn+gamma)} with |x - x'| <= d/2.  The law holds
    when the measured log-log slope of the per-octave maxima stays near
    the predicted exponent; the recorded constant is the global maximum.
    """
    rng = np.random.default_rng(seed)
    n, m = P.dim, P.m
    if d_min is None:
        d_min = 16.0 * P.beta.h
    if d_max is None:
        d_max = P.scales.t_max
    octaves = int(math.floor(math.log2(d_max / d_min)))
    if octaves < 2:
        raise ValueError("need at least two octaves of separations")
    mn = m * n
    expo = mn if mode == "size" else mn + holder

    rows = []
    per_oct_max = []
    for j in range(octaves + 1):
        d = d_min * 2.0**j
        best = 0.0
        for _ in range(per_octave):
            x = rng.uniform(-1.0, 1.0, size=n)
            e = rng.normal(size=n)
            e /= np.linalg.norm(e)
            # Split the separation budget across slots, keeping sum = d.
            fracs = rng.dirichlet(np.ones(m))
            signs = rng.choice([-1.0, 1.0], size=m)
            ys = [x + signs[i] * fracs[i] * d * e for i in range(m)]
            if mode == "size":
                val = abs(eval_kernel(P, x, ys))
                quotient = val * d**expo
            else:
                step = 0.5 * d * rng.random()
                e2 = rng.normal(size=n)
                e2 /= np.linalg.norm(e2)
                xp = x + step * e2
                if step < P.beta.h:
                    continue
                diff = abs(eval_kernel(P, x, ys) - eval_kernel(P, xp, ys))
                quotient = diff * d**expo / step**holder
            best = max(best, quotient)
            rows.append({"d": d, "quotient": quotient})
        per_oct_max.append(best)

    per_oct_max = np.array(per_oct_max)
    ds = d_min * 2.0 ** np.arange(octaves + 1)
    pos = per_oct_max > 0
    if pos.sum() >= 2:
        # Slope of log max|ell| vs log d (undo the d**expo scaling).
        logd = np.log2(ds[pos])
        logv = np.log2(per_oct_max[pos]) - expo * logd
        slope = float(np.polyfit(logd, logv, 1)[0])
    else:
        slope = -math.inf
    return {
        "mode": mode,
        "constant": float(per_oct_max.max()),
        "per_octave_max": per_oct_max.tolist(),
        "d_ladder": ds.tolist(),
        "slope": slope,
        "expected_slope": -float(expo),
        "passed": bool(slope <= -expo + 0.5),
        "seed": seed,
        "holder": holder,
    }


# ---------------------------------------------------------------------------
# Tb condition for user-supplied operators
# ---------------------------------------------------------------------------


def tb_condition(
    T_eval,
    bs: list[SampledFunction],
    Q: DyadicCube,
    q: float,
    scales: ScaleGrid,
    psi: MollifierSpec,
    phi: MollifierSpec,
    budget: float | None = None,
) -> dict:
    """The cancellation value (1/|Q|) int_Q (sum_t |Q_t T(P_t b)|^2 ln2/K)^{q/2}.

    ``T_eval`` maps m grid functions to one on the same grid; ``bs`` are
    the b_Q^i on a working window containing Q with margin for the
    convolution stencils.  Scales are clipped to (0, side(Q)].
    """
    if q < 2:
        warnings.warn(
            "Tb mode is stated for 2 <= q < infinity; q < 2 is accepted "
            "but outside the theorem's range",
            stacklevel=2,
        )
    f0 = bs[0]
    for f in bs[1:]:
        f0._require_same_grid(f)
    acc = np.zeros(f0.shape, dtype=float)
    for t in scales.clipped(0.0, Q.side):
        t = float(t)
        smoothed = [smooth_approx(b, t, phi) for b in bs]
        out = T_eval(smoothed)
        qt = lp_projection(out, t, psi)
        acc += np.abs(qt.values) ** 2 * scales.weight
    sls = f0.cube_slices(Q)
    val = float(np.mean(acc[sls] ** (q / 2.0)))
    return {
        "value": val,
        "q": q,
        "passed": True if budget is None else bool(val <= budget),
        "budget": budget,
        "scale_count": int(len(scales.clipped(0.0, Q.side))),
    }
