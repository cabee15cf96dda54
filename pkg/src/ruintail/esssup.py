"""Exact essential-supremum recursion and boundedness verdicts.

For branch mixtures the one-step update B + c*A is affine in the branch
driver, so its essential supremum is exact: an unbounded driver with a
positive coefficient gives +inf, otherwise the supremum sits at a support
endpoint.  Iterating from 0 yields the supremum sequence of the running
maxima; a linear feasibility system over the witness level c decides
whether the sequence stays bounded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

from .dists import (
    ArchCoupling,
    Branch,
    BranchMixture,
    IndepProduct,
    JointRiskSpec,
    Pareto,
    PointMass,
    a_marginal,
    b_marginal,
    require_valid,
)
from .errors import RuinTailError
from .extreal import INF, ExtReal

CONVERGENCE_INCREMENT = 1e-9  # below this per-step growth the sequence counts as settled


@dataclass(frozen=True)
class BoundednessVerdict:
    """Outcome of the witness feasibility system.

    ``bounded`` means some c > 0 keeps B + c*A <= c almost surely;
    ``witness`` is then the minimal such c.  ``hypothesis_notes`` records
    when the equivalence theorem's standing hypotheses (P(A>1) > 0 and
    P(A<1) > 0) do not hold, in which case the verdict is still the exact
    feasibility answer but the sequence equivalences are not guaranteed.
    """

    bounded: bool
    witness: Optional[float] = None
    reason: str = ""
    hypothesis_notes: tuple[str, ...] = ()

    def to_json_obj(self) -> dict:
        return {
            "bounded": self.bounded,
            "witness": self.witness,
            "reason": self.reason,
            "hypothesis_notes": list(self.hypothesis_notes),
        }


@dataclass(frozen=True)
class EsssupReport:
    """The supremum sequence with its verdict.

    ``values[k]`` is the essential supremum after k steps (values[0] = 0).
    The sequence is nondecreasing and, once infinite, stays infinite.
    """

    values: tuple[ExtReal, ...]
    attaining_branch: tuple[int, ...]
    verdict: str  # "bounded" | "unbounded"
    limit: Optional[ExtReal] = None
    witness: Optional[float] = None
    unbounded_reason: Optional[str] = None  # "hit-infinity" | "finite-but-diverging"
    first_infinite: Optional[int] = None
    hypothesis_notes: tuple[str, ...] = ()

    def to_json_obj(self) -> dict:
        return {
            "values": [v.to_json_obj() for v in self.values],
            "attaining_branch": list(self.attaining_branch),
            "verdict": self.verdict,
            "limit": None if self.limit is None else self.limit.to_json_obj(),
            "witness": self.witness,
            "unbounded_reason": self.unbounded_reason,
            "first_infinite": self.first_infinite,
            "hypothesis_notes": list(self.hypothesis_notes),
        }


def _branch_sup(br: Branch, c: ExtReal) -> ExtReal:
    """esssup of B + c*A on one branch."""
    if c.is_inf:
        # A > 0 on every validated branch, so B + c*A blows up with c
        return INF
    cf = c.finite
    const = br.b_const + cf * br.a_const
    coef = br.b_coef + cf * br.a_coef
    if isinstance(br.driver, PointMass):
        return ExtReal.of(const + coef * br.driver.value)
    # Pareto driver on [1, inf)
    if coef > 0:
        return INF
    return ExtReal.of(const + coef * 1.0)


def esssup_step(spec: BranchMixture, c: Union[float, ExtReal]) -> ExtReal:
    """esssup(B + c*A) for a validated branch mixture."""
    value, _ = esssup_step_detail(spec, c)
    return value


def esssup_step_detail(spec: BranchMixture, c: Union[float, ExtReal]) -> tuple[ExtReal, int]:
    if not isinstance(spec, BranchMixture):
        raise TypeError("exact essential suprema are only available for branch mixtures")
    c = ExtReal.of(c)
    if c < 0:
        raise ValueError("c must be nonnegative")
    best: Optional[ExtReal] = None
    best_branch = -1
    for i, br in enumerate(spec.branches):
        sup = _branch_sup(br, c)
        if best is None or sup > best:
            best, best_branch = sup, i
    return best, best_branch


def _hypothesis_notes(spec: BranchMixture) -> tuple[str, ...]:
    p_above = 0.0
    p_below = 0.0
    for br in spec.branches:
        if isinstance(br.driver, PointMass):
            a_val = br.a_const + br.a_coef * br.driver.value
            if a_val > 1.0:
                p_above += br.prob
            if a_val < 1.0:
                p_below += br.prob
        else:
            lo = br.a_const + br.a_coef  # value at the driver floor w = 1
            if br.a_coef > 0 or lo > 1.0:
                p_above += br.prob
            if lo < 1.0:
                p_below += br.prob
    notes = []
    if p_above == 0.0:
        notes.append("P(A > 1) = 0: sequence equivalences hold outside the standing hypotheses")
    if p_below == 0.0:
        notes.append("P(A < 1) = 0: sequence equivalences hold outside the standing hypotheses")
    return tuple(notes)


def boundedness_check(spec: JointRiskSpec) -> BoundednessVerdict:
    """Decide whether some c > 0 keeps B + c*A <= c almost surely.

    Exact for branch mixtures via a linear system in c (one constraint per
    support extreme per branch, plus a slope constraint for unbounded
    drivers).  Independent products and squared-driver couplings reduce to
    support arithmetic.
    """
    require_valid(spec)
    if isinstance(spec, BranchMixture):
        return _boundedness_branches(spec)
    if isinstance(spec, IndepProduct):
        sup_a = spec.a.support()[1]
        sup_b = spec.b.support()[1]
        if sup_a < 1.0 and math.isfinite(sup_b):
            witness = sup_b / (1.0 - sup_a)
            return BoundednessVerdict(True, witness=witness,
                                      reason="bounded risks with sup A < 1")
        return BoundednessVerdict(False, reason="sup A >= 1 or B unbounded above")
    if isinstance(spec, ArchCoupling):
        lo, hi = spec.z.support()
        m = max(lo * lo, hi * hi) if math.isfinite(lo) and math.isfinite(hi) else math.inf
        if math.isfinite(m) and spec.lam * m < 1.0:
            return BoundednessVerdict(True, witness=spec.beta * m / (1.0 - spec.lam * m),
                                      reason="bounded driver with lam*sup(Z^2) < 1")
        return BoundednessVerdict(False, reason="driver unbounded or lam*sup(Z^2) >= 1")
    raise TypeError(f"not a joint risk spec: {spec!r}")


def _boundedness_branches(spec: BranchMixture) -> BoundednessVerdict:
    lowers: list[float] = []
    uppers: list[float] = []

    def add_endpoint(a_val: float, b_val: float) -> Optional[str]:
        # constraint: b_val + c*(a_val - 1) <= 0
        if a_val < 1.0:
            lowers.append(b_val / (1.0 - a_val))
            return None
        if a_val == 1.0:
            return None if b_val <= 0 else f"A = 1 with B = {b_val!r} > 0 at a support point"
        # a_val > 1: c <= -b_val / (a_val - 1)
        bound = -b_val / (a_val - 1.0)
        if bound <= 0:
            return f"A = {a_val!r} > 1 with B = {b_val!r} >= 0 at a support point"
        uppers.append(bound)
        return None

    notes = _hypothesis_notes(spec)
    for i, br in enumerate(spec.branches):
        if isinstance(br.driver, PointMass):
            w = br.driver.value
            fail = add_endpoint(br.a_const + br.a_coef * w, br.b_const + br.b_coef * w)
            if fail:
                return BoundednessVerdict(False, reason=f"branch {i}: {fail}",
                                          hypothesis_notes=notes)
        else:
            # slope constraint for the unbounded driver: b_coef + c*a_coef <= 0
            if br.a_coef > 0:
                if br.b_coef >= 0:
                    return BoundednessVerdict(
                        False,
                        reason=f"branch {i}: B + cA grows along the driver for every c > 0",
                        hypothesis_notes=notes)
                uppers.append(-br.b_coef / br.a_coef)
            elif br.b_coef > 0:
                return BoundednessVerdict(
                    False,
                    reason=f"branch {i}: B is unbounded above while A stays flat",
                    hypothesis_notes=notes)
            fail = add_endpoint(br.a_const + br.a_coef, br.b_const + br.b_coef)
            if fail:
                return BoundednessVerdict(False, reason=f"branch {i}: {fail}",
                                          hypothesis_notes=notes)

    c_lo = max(lowers, default=0.0)
    c_hi = min(uppers, default=math.inf)
    if c_lo <= c_hi and (c_lo > 0.0 or c_hi > 0.0):
        witness = c_lo if c_lo > 0.0 else min(c_hi, 1.0)
        return BoundednessVerdict(True, witness=witness, reason="witness system feasible",
                                  hypothesis_notes=notes)
    return BoundednessVerdict(False, reason="witness system infeasible",
                              hypothesis_notes=notes)


def esssup_sequence(spec: BranchMixture, n_steps: int) -> EsssupReport:
    """Iterate the supremum recursion from 0 for n_steps, stopping early
    at +inf, and attach the feasibility verdict."""
    if n_steps < 1:
        raise ValueError("need at least one step")
    require_valid(spec)
    check = boundedness_check(spec)

    values: list[ExtReal] = [ExtReal.of(0.0)]
    branches: list[int] = []
    first_inf: Optional[int] = None
    for k in range(1, n_steps + 1):
        nxt, who = esssup_step_detail(spec, values[-1])
        if nxt < values[-1]:
            # the recursion is monotone; numerical ties keep the larger value
            nxt = values[-1]
        values.append(nxt)
        branches.append(who)
        if nxt.is_inf:
            first_inf = k
            break

    if check.bounded:
        limit = values[-1]
        settled = (
            first_inf is None
            and len(values) >= 2
            and not values[-1].is_inf
            and values[-1].float_value() - values[-2].float_value() < CONVERGENCE_INCREMENT
        )
        return EsssupReport(
            values=tuple(values),
            attaining_branch=tuple(branches),
            verdict="bounded",
            limit=limit if settled or first_inf is None else None,
            witness=check.witness,
            hypothesis_notes=check.hypothesis_notes,
        )
    reason = "hit-infinity" if first_inf is not None else "finite-but-diverging"
    return EsssupReport(
        values=tuple(values),
        attaining_branch=tuple(branches),
        verdict="unbounded",
        unbounded_reason=reason,
        first_infinite=first_inf,
        hypothesis_notes=check.hypothesis_notes,
    )


def unbounded_sup(spec: JointRiskSpec) -> bool:
    """True when the running maxima are essentially unbounded (the standing
    hypothesis of the ultimate-ruin exponent theorem)."""
    return not boundedness_check(spec).bounded
