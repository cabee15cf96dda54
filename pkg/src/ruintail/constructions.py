"""Executable minorant constructions and the monotone-coupling harness.

Two ways to replace a risk by an almost-surely smaller one with a
prescribed exponent:

* for a finite-atom discount factor A, a bounded minorant whose
  Lundberg-type index is exactly the original's plus epsilon (keep the
  small atoms, rescale one band of atoms, floor the large ones);
* for any loss B with finite moment index alpha, the minimum with an
  independent Pareto of parameter beta - alpha, which has index beta.

Shrinking either risk can only postpone ruin, and the coupling harness
verifies that pathwise: simulated on shared randomness, the minorant
process never ruins strictly first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize

from . import dists, index as index_mod
from .dists import (
    Atoms,
    Dist,
    IndepProduct,
    JointRiskSpec,
    MinWithParetoIndep,
    PointMass,
    SeedStream,
    to_atoms,
)
from .errors import InfeasibleConstructionError, Refusal, RuinTailError
from .extreal import ExtReal

MOMENT_EQUALITY_TOL = 1e-10


@dataclass(frozen=True)
class MinorantSpec:
    """A constructed almost-sure lower bound with its certification record."""

    original: Dist
    constructed: Dist
    side: str                      # "discount" (A) | "loss" (B)
    target: float                  # target index after construction
    achieved: ExtReal              # index of the constructed law, re-evaluated
    moment_residual: Optional[float] = None  # |E(A_eps^t) - 1| for the A-side
    atom_map: Optional[tuple[tuple[float, float], ...]] = None  # (original, lowered)
    dominates: bool = True

    def to_json_obj(self) -> dict:
        return {
            "original": self.original.to_obj(),
            "constructed": self.constructed.to_obj(),
            "side": self.side,
            "target": self.target,
            "achieved": self.achieved.to_json_obj(),
            "moment_residual": self.moment_residual,
            "atom_map": None if self.atom_map is None else [list(p) for p in self.atom_map],
        }


def minorant_a(a: Dist, eps: float) -> MinorantSpec:
    """Bounded lower bound for a finite-atom discount factor.

    The construction fixes t = (Lundberg index of A) + eps and three
    levels M1 > M2 > M3: atoms at or below M2 are kept, atoms above M1
    are floored at M3, and the band in between is rescaled by the root of
    E(A_eps^t) = 1.  The result is bounded, atomwise dominated by A, and
    its Lundberg-type index is exactly t.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    atoms = to_atoms(a)
    if atoms is None:
        raise RuinTailError(
            "the bounded minorant is implemented for finite-atom laws; "
            "discretize the discount factor first"
        )
    if any(v <= 0 for v, _ in atoms):
        raise Refusal("the discount factor must be strictly positive")
    base = index_mod.lundberg_index(Atoms.of(atoms))
    if base.value.is_inf:
        raise Refusal(
            "Lundberg-type index of A is infinite (A never exceeds 1); nothing to lower"
        )
    t = base.value.finite + eps

    values = np.array([v for v, _ in atoms])
    probs = np.array([p for _, p in atoms])
    powers = values**t
    csum = np.cumsum(probs * powers)  # atoms are sorted ascending by to_atoms
    if csum[-1] <= 1.0:
        raise InfeasibleConstructionError(
            f"E(A^{t}) = {csum[-1]:.6g} <= 1; the target index is not above the "
            "Lundberg index, so no level split exists"
        )
    k_star = int(np.searchsorted(csum > 1.0, True))
    low_mass = float(csum[k_star - 1]) if k_star > 0 else 0.0
    m1 = float(values[k_star])
    high = slice(k_star + 1, len(values))
    p_high = float(probs[high].sum())

    # floor level for the large atoms, small enough to leave room below 1
    slack = 1.0 - low_mass
    if slack <= 0:
        raise InfeasibleConstructionError(
            "the kept-atom band already carries the whole moment budget; "
            "no room remains for the rescaled band"
        )
    if p_high > 0:
        m3 = min(float(values[0]) / 2.0, m1 / 2.0, (slack / (2.0 * p_high)) ** (1.0 / t))
        high_mass = p_high * m3**t
    else:
        m3 = None
        high_mass = 0.0

    p_mid = float(probs[k_star])

    def total(theta: float) -> float:
        return low_mass + p_mid * (theta * m1) ** t + high_mass

    if total(1.0) < 1.0:
        raise InfeasibleConstructionError(
            "no feasible rescaling: even the unmodified band leaves the moment below 1"
        )
    theta = optimize.brentq(lambda th: total(th) - 1.0, 1e-300, 1.0, xtol=1e-300, rtol=8.9e-16)

    new_values = values.copy()
    new_values[k_star] = theta * m1
    if p_high > 0:
        new_values[high] = m3
    pairs = {}
    for v, p in zip(new_values, probs):
        pairs[float(v)] = pairs.get(float(v), 0.0) + float(p)
    constructed = Atoms.of(sorted(pairs.items()))

    if to_atoms(constructed) == [(1.0, 1.0)]:
        raise InfeasibleConstructionError(
            "construction degenerated to the constant 1; refine the atom set"
        )

    residual = abs(float(np.sum([p * v**t for v, p in sorted(pairs.items())])) - 1.0)
    if residual > MOMENT_EQUALITY_TOL:
        raise InfeasibleConstructionError(
            f"moment equality missed: |E(A_eps^t) - 1| = {residual:.3g}"
        )
    achieved = index_mod.lundberg_index(constructed)
    atom_map = tuple((float(v), float(nv)) for v, nv in zip(values, new_values))
    if any(nv > v or nv <= 0 for v, nv in atom_map):
        raise InfeasibleConstructionError("atomwise domination failed")
    return MinorantSpec(
        original=a if isinstance(a, (Atoms, PointMass)) else Atoms.of(atoms),
        constructed=constructed,
        side="discount",
        target=t,
        achieved=achieved.value,
        moment_residual=residual,
        atom_map=atom_map,
    )


def minorant_b(b: Dist, target: float, stream: Optional[SeedStream] = None,
               n_check: int = 0) -> MinorantSpec:
    """Loss minorant min(B, W) with W an independent Pareto(target - alpha).

    Exact: the minimum's index is alpha + (target - alpha) = target.  With
    a stream and n_check > 0, domination is also checked on coupled draws.
    """
    iv = index_mod.analytic_index(b)
    if iv is None:
        raise RuinTailError("the loss law needs a determined analytic index")
    if iv.value.is_inf:
        raise Refusal("the loss index is already infinite; nothing to increase")
    alpha = iv.value.finite
    if not target > alpha:
        raise Refusal(f"target {target!r} must strictly exceed the current index {alpha!r}")
    constructed = MinWithParetoIndep(b, target - alpha)
    achieved = index_mod.analytic_index(constructed)
    dominates = True
    if stream is not None and n_check > 0:
        orig, low = constructed.sample_coupled(stream.rng(), n_check)
        dominates = bool(np.all(low <= orig))
    return MinorantSpec(
        original=b,
        constructed=constructed,
        side="loss",
        target=target,
        achieved=achieved.value,
        dominates=dominates,
    )


# ---------------------------------------------------------------------------
# Monotone coupling harness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CouplingReport:
    """Ruins of the original vs the minorant process on shared randomness."""

    n_paths: int
    horizon: int
    violations: int          # paths where the minorant ruins strictly first
    ruined_original: int
    ruined_minorant: int
    equal_times: int

    def to_json_obj(self) -> dict:
        return {
            "n_paths": self.n_paths,
            "horizon": self.horizon,
            "violations": self.violations,
            "ruined_original": self.ruined_original,
            "ruined_minorant": self.ruined_minorant,
            "equal_times": self.equal_times,
        }


def coupled_ruin_monotonicity(
    spec: IndepProduct,
    side: str,
    n_paths: int,
    u0: float,
    *,
    stream: SeedStream,
    minorant: Optional[MinorantSpec] = None,
    eps: float = 0.5,
    target: Optional[float] = None,
    horizon: int = 400,
    chunk_size: int = 1 << 14,
) -> CouplingReport:
    """Count pathwise violations of "lower risk never ruins first".

    side="discount" lowers A through the bounded-minorant atom map;
    side="loss" lowers B to min(B, W) with a shared B draw.  On every
    path both processes see the same randomness, so the contract is an
    exact pathwise property: the violation count must be 0.
    side="identity" couples the process with itself (ruin times equal).
    """
    if not isinstance(spec, IndepProduct):
        raise RuinTailError("the coupling harness works on independent-product specs")
    dists.require_valid(spec)
    if u0 <= 0:
        raise ValueError("initial capital must be positive")

    if side == "discount":
        if minorant is None:
            minorant = minorant_a(spec.a, eps)
        orig_vals = np.array([v for v, _ in minorant.atom_map])
        low_vals = np.array([nv for _, nv in minorant.atom_map])
        order = np.argsort(orig_vals)
        orig_sorted, low_sorted = orig_vals[order], low_vals[order]

        def lowered_a(a: np.ndarray) -> np.ndarray:
            return low_sorted[np.searchsorted(orig_sorted, a)]
    elif side == "loss":
        if minorant is None:
            iv = index_mod.analytic_index(spec.b)
            if iv is None or iv.value.is_inf:
                raise Refusal("loss-side coupling needs a finite analytic loss index")
            target = target if target is not None else iv.value.finite + 1.0
            minorant = minorant_b(spec.b, target)
        gamma = minorant.constructed.gamma
    elif side != "identity":
        raise ValueError("side must be 'discount', 'loss', or 'identity'")

    violations = 0
    ruined_o = 0
    ruined_m = 0
    equal = 0
    for ci, m in _chunks(n_paths, chunk_size):
        rng = stream.substream_rng(ci)
        t_orig = np.zeros(m, dtype=np.int64)
        t_min = np.zeros(m, dtype=np.int64)
        y_o = np.zeros(m)
        y_m = np.zeros(m)
        p_o = np.ones(m)
        p_m = np.ones(m)
        for step in range(1, horizon + 1):
            a = spec.a.sample(rng, m)
            b = spec.b.sample(rng, m)
            if side == "discount":
                a_star, b_star = lowered_a(a), b
            elif side == "loss":
                w = (1.0 - rng.random(m)) ** (-1.0 / gamma)
                a_star, b_star = a, np.minimum(b, w)
            else:
                a_star, b_star = a, b
            y_o += p_o * b
            y_m += p_m * b_star
            np.copyto(t_orig, step, where=(t_orig == 0) & (y_o > u0))
            np.copyto(t_min, step, where=(t_min == 0) & (y_m > u0))
            p_o *= a
            p_m *= a_star
        ruined_o += int((t_orig > 0).sum())
        ruined_m += int((t_min > 0).sum())
        equal += int((t_orig == t_min).sum())
        # a violation is an observed minorant ruin strictly before the original's
        bad = (t_min > 0) & ((t_orig == 0) | (t_orig > t_min))
        violations += int(bad.sum())
    return CouplingReport(
        n_paths=n_paths, horizon=horizon, violations=violations,
        ruined_original=ruined_o, ruined_minorant=ruined_m, equal_times=equal,
    )


def _chunks(n: int, size: int):
    for ci in range((n + size - 1) // size):
        yield ci, min(size, n - ci * size)
