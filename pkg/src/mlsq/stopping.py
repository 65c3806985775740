"""Stopping-time decomposition of a dyadic cube by normalized averages.

Starting from the root average a = avg_Q prod_i b_Q^i, the children of Q
are descended recursively and a cube R is selected when the normalized
average Re[avg_R prod_i b_Q^i / a] drops to 1/2 or below; otherwise its
children are examined, down to a floor generation.  Selected cubes are the
maximal ones satisfying the criterion, hence non-overlapping, and the
exceptional set E is the rest of Q.  Floor-resolution leaves that still
fail the criterion are assigned to E and counted, so the certification
quality is visible in the report.

The proof-level criterion is displayed with a 1/(a |Q_j|) normalization
applied to the integral; it is read here as the average criterion above,
which is the dimensionally consistent form matching the root normalization
Re[avg_Q prod b / a] = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .accretive import AccretivityError, SystemOnCube
from .dyadic import DyadicCube, smallest_containing
from .gridfn import SampledFunction

SELECT_THRESHOLD = 0.5


@dataclass(frozen=True)
class Decomposition:
    """Selected cubes, exceptional measure, and the stopping time tau."""

    root: DyadicCube
    selected: tuple[DyadicCube, ...]
    a: complex
    floor_generation: int
    unresolved_leaves: int

    @property
    def exceptional_measure(self) -> float:
        return self.root.volume - sum(Q.volume for Q in self.selected)

    @property
    def eta_observed(self) -> float:
        return self.exceptional_measure / self.root.volume

    def tau_at(self, x) -> float:
        """side(Q_k) on the selected cube containing x, 0 on E."""
        for Q in self.selected:
            if Q.contains(x):
                return Q.side
        return 0.0

    def tau_function(self, h_log2: int) -> SampledFunction:
        """tau as a grid function on the root cube."""
        s = 1 << (-self.root.generation - h_log2)
        lo = tuple(c * s for c in self.root.corner)
        vals = np.zeros((s,) * self.root.dim)
        out = SampledFunction(h_log2, lo, vals)
        vals = out.values.copy()
        for Q in self.selected:
            vals[out.cube_slices(Q)] = Q.side
        return SampledFunction(h_log2, lo, vals)

    def to_json(self) -> dict:
        return {
            "root": list(self.root.key()),
            "selected": [list(Q.key()) for Q in self.selected],
            "a": [self.a.real, self.a.imag],
            "exceptional_measure": self.exceptional_measure,
            "eta_observed": self.eta_observed,
            "floor_generation": self.floor_generation,
            "unresolved_leaves": self.unresolved_leaves,
        }


def decompose(data: SystemOnCube, floor_generation: int | None = None) -> Decomposition:
    """Select the maximal subcubes with normalized average at most 1/2."""
    Q = data.Q
    if floor_generation is None:
        floor_generation = -data.h_log2 - 3  # side = 8 cells
    if floor_generation < Q.generation:
        raise ValueError("floor generation coarser than the root")
    a = data.avg_prod(Q)
    if data.exact is not None:
        a_zero = data.avg_prod_exact(Q) == 0
    else:
        a_zero = abs(a) <= 1e-12
    if a_zero:
        raise AccretivityError("avg over the root vanishes; decomposition undefined")

    selected: list[DyadicCube] = []
    unresolved = 0

    def recurse(R: DyadicCube):
        nonlocal unresolved
        ratio = (data.avg_prod(R) / a).real
        if ratio <= SELECT_THRESHOLD:
            selected.append(R)
            return
        if R.generation >= floor_generation:
            unresolved += 1  # leaf still failing; belongs to E at resolution
            return
        for child in R.children():
            recurse(child)

    for child in Q.children():
        recurse(child)

    selected.sort()
    return Decomposition(
        root=Q,
        selected=tuple(selected),
        a=complex(a),
        floor_generation=floor_generation,
        unresolved_leaves=unresolved,
    )


def eta_lower_bound(B1: float, m: int, q: float) -> float:
    """The guaranteed exceptional-set proportion (2 B1^m)^(-q').

    B1 is normalized to at least 1 first: the underlying Holder step bounds
    B1^(1/q) by B1^m, which needs B1 >= 1 (the same without-loss-of-
    generality normalization the average lower bound states for the other
    constants), and the size condition with B1 also holds with max(B1, 1).
    """
    if q <= 1:
        raise ValueError("combined exponent q must exceed 1")
    q_conj = q / (q - 1.0)
    return (2.0 * max(B1, 1.0) ** m) ** (-q_conj)


def verify_lower_bound(
    d: Decomposition,
    data: SystemOnCube,
    B2: float,
    B3: float,
    t_samples=None,
    samples: int = 1000,
    seed: int = 0,
) -> dict:
    """Check prod_i |A_t b_Q^i(x)| >= 1/(2 max(B2,1)^m max(B3,1)) by sweep.

    With explicit ``t_samples`` the product is checked at those scales over
    every grid point of the root; a scale at or below tau_Q(x) somewhere is
    a precondition violation and raises.  Otherwise (x, t) pairs are drawn
    with x a random cell center and t log-uniform in (tau_Q(x), side(Q));
    t stays strictly below side(Q) so the selected cube Q(x, t) remains
    inside the root.  Reports the minimum observed product and the margin
    against both forms of the bound (the displayed 1/(2 B2 B3) and the
    B2^m variant actually used downstream).
    """
    rng = np.random.default_rng(seed)
    Q = d.root
    m = data.m
    bound_used = 1.0 / (2.0 * max(B2, 1.0) ** m * max(B3, 1.0))
    bound_displayed = 1.0 / (2.0 * max(B2, 1.0) * max(B3, 1.0))

    f0 = data.fs[0]
    tau_grid = d.tau_function(data.h_log2).values
    h = f0.h
    min_product = math.inf
    violations = 0

    def check(x, t) -> None:
        nonlocal min_product, violations
        R = smallest_containing(x, t)
        product = 1.0
        for i in range(m):
            product *= abs(data.avg_slot(i, R))
        min_product = min(min_product, product)
        if product < bound_used:
            violations += 1

    if t_samples is not None:
        count = 0
        for t in t_samples:
            t = float(t)
            if not t < Q.side:
                raise ValueError(f"scale {t} reaches outside the root cube")
            for idx in np.ndindex(*f0.shape):
                if t <= float(tau_grid[idx]):
                    raise ValueError(
                        f"sample t={t} at or below tau; precondition violated"
                    )
                x = np.array(
                    [(f0.lo[a] + idx[a] + 0.5) * h for a in range(f0.dim)]
                )
                check(x, t)
                count += 1
        samples = count
    else:
        cells = [rng.integers(0, f0.shape[a], size=samples) for a in range(f0.dim)]
        for k in range(samples):
            x = np.array(
                [(f0.lo[a] + cells[a][k] + 0.5) * h for a in range(f0.dim)]
            )
            tau = float(tau_grid[tuple(cells[a][k] for a in range(f0.dim))])
            t_lo = max(tau, h)  # below the grid no new cube can be selected
            if t_lo >= Q.side:
                continue
            u = rng.random()
            t = t_lo * (Q.side / t_lo) ** u
            t = min(t, Q.side * (1.0 - 1e-9))
            if t <= tau:
                continue
            check(x, t)
    return {
        "min_product": min_product,
        "bound": bound_used,
        "bound_displayed": bound_displayed,
        "margin": min_product / bound_used if bound_used > 0 else math.inf,
        "margin_displayed": min_product / bound_displayed
        if bound_displayed > 0
        else math.inf,
        "violations": violations,
        "samples": samples,
        "ok": violations == 0,
    }
