"""Marginal distribution expressions and joint risk vectors.

A marginal law is a closed expression tree built from a few leaves (point
masses, finite atom sets, Pareto, lognormal, normal) and combinators
(affine maps, positive powers, negation, min/max/sum of independent
children, mixtures).  The tree gives every law four exact capabilities:

* seeded sampling (inverse transforms, reproducible per ``SeedStream``),
* pointwise tail and strict-cdf evaluation,
* fractional moments ``E(X^s; X>0)`` in closed form or by adaptive
  quadrature on the tail function,
* structural tail exponents (the moment-index algebra used by
  :mod:`ruintail.index`).

Joint risk vectors couple a strictly positive discount factor A with a
real-valued one-period loss B: independent product, a finite mixture of
branches affine in one shared heavy-tailed driver, or the squared-driver
coupling (A, B) = (lam * Z^2, beta * Z^2).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import integrate, special

from .errors import InvalidSpecError, MomentUnavailableError
from .extreal import INF, ExtReal, ext_min

_ATOM_CAP = 8192  # largest discrete support produced by combinator folding


# ---------------------------------------------------------------------------
# Seeding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SeedStream:
    """Master seed plus a stream index.

    Distinct indices yield statistically independent substreams; identical
    (master, index) pairs reproduce identical draws bit for bit.
    """

    master: int
    index: int = 0

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence(entropy=self.master, spawn_key=(self.index,))
        )

    def substream_rng(self, k: int) -> np.random.Generator:
        """Generator for derived substream k (chunked simulation contract)."""
        return np.random.default_rng(
            np.random.SeedSequence(entropy=self.master, spawn_key=(self.index, k))
        )

    def derived(self, k: int) -> "SeedStream":
        """A sibling stream for auxiliary randomness (couplings, refits)."""
        return SeedStream(self.master, (self.index << 8) ^ 0x9E3779B9 ^ k)


# ---------------------------------------------------------------------------
# Expression tree
# ---------------------------------------------------------------------------


class Dist:
    """Base class for marginal distribution expressions."""

    kind: str = "abstract"

    # -- sampling ---------------------------------------------------------
    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    # -- pointwise law ----------------------------------------------------
    def tail(self, x: float) -> float:
        """P(X > x)."""
        raise NotImplementedError

    def cdf_strict(self, x: float) -> float:
        """P(X < x)."""
        raise NotImplementedError

    def support(self) -> tuple[float, float]:
        """(essential infimum, essential supremum) as plain floats."""
        raise NotImplementedError

    # -- serialization ----------------------------------------------------
    def to_obj(self) -> dict:
        raise NotImplementedError

    def __repr__(self) -> str:
        return json.dumps(self.to_obj())


@dataclass(frozen=True, repr=False)
class PointMass(Dist):
    value: float
    kind = "point"

    def sample(self, rng, n):
        return np.full(n, float(self.value))

    def tail(self, x):
        return 1.0 if self.value > x else 0.0

    def cdf_strict(self, x):
        return 1.0 if self.value < x else 0.0

    def support(self):
        return (self.value, self.value)

    def to_obj(self):
        return {"kind": "point", "value": self.value}


@dataclass(frozen=True, repr=False)
class Atoms(Dist):
    """Finite discrete law: values with strictly positive probabilities."""

    values: tuple[float, ...]
    probs: tuple[float, ...]
    kind = "atoms"

    def __post_init__(self):
        if len(self.values) != len(self.probs) or not self.values:
            raise ValueError("atoms need matching, nonempty value/prob lists")
        if any(p <= 0 for p in self.probs):
            raise ValueError("atom probabilities must be positive")
        if abs(sum(self.probs) - 1.0) > 1e-12:
            raise ValueError("atom probabilities must sum to 1 within 1e-12")

    @staticmethod
    def of(pairs) -> "Atoms":
        vs, ps = zip(*pairs)
        return Atoms(tuple(float(v) for v in vs), tuple(float(p) for p in ps))

    def sample(self, rng, n):
        cum = np.cumsum(self.probs)
        u = rng.random(n)
        idx = np.searchsorted(cum, u, side="right")
        return np.asarray(self.values, dtype=float)[np.minimum(idx, len(self.values) - 1)]

    def tail(self, x):
        return float(sum(p for v, p in zip(self.values, self.probs) if v > x))

    def cdf_strict(self, x):
        return float(sum(p for v, p in zip(self.values, self.probs) if v < x))

    def support(self):
        return (min(self.values), max(self.values))

    def to_obj(self):
        return {"kind": "atoms", "atoms": [[v, p] for v, p in zip(self.values, self.probs)]}


@dataclass(frozen=True, repr=False)
class Pareto(Dist):
    """Pareto law on [1, inf) with tail P(W > x) = x**-gamma for x >= 1."""

    gamma: float
    kind = "pareto"

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("pareto gamma must be > 0")

    def sample(self, rng, n):
        # inverse transform, with 1-U in (0, 1] so the draw never overflows
        return (1.0 - rng.random(n)) ** (-1.0 / self.gamma)

    def tail(self, x):
        return 1.0 if x < 1.0 else float(x) ** -self.gamma

    def cdf_strict(self, x):
        return 0.0 if x <= 1.0 else 1.0 - float(x) ** -self.gamma

    def support(self):
        return (1.0, math.inf)

    def to_obj(self):
        return {"kind": "pareto", "gamma": self.gamma}


@dataclass(frozen=True, repr=False)
class Lognormal(Dist):
    mu: float
    sigma: float
    kind = "lognormal"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("lognormal sigma must be > 0")

    def sample(self, rng, n):
        return np.exp(rng.normal(self.mu, self.sigma, n))

    def tail(self, x):
        if x <= 0:
            return 1.0
        return float(special.ndtr(-(math.log(x) - self.mu) / self.sigma))

    def cdf_strict(self, x):
        if x <= 0:
            return 0.0
        return float(special.ndtr((math.log(x) - self.mu) / self.sigma))

    def support(self):
        return (0.0, math.inf)

    def to_obj(self):
        return {"kind": "lognormal", "mu": self.mu, "sigma": self.sigma}


@dataclass(frozen=True, repr=False)
class Normal(Dist):
    """Gaussian leaf; mainly the driver of the squared-driver coupling."""

    mu: float
    sigma: float
    kind = "normal"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("normal sigma must be > 0")

    def sample(self, rng, n):
        return rng.normal(self.mu, self.sigma, n)

    def tail(self, x):
        return float(special.ndtr(-(x - self.mu) / self.sigma))

    def cdf_strict(self, x):
        return float(special.ndtr((x - self.mu) / self.sigma))

    def support(self):
        return (-math.inf, math.inf)

    def to_obj(self):
        return {"kind": "normal", "mu": self.mu, "sigma": self.sigma}


@dataclass(frozen=True, repr=False)
class Affine(Dist):
    """scale * X + shift with scale > 0."""

    scale: float
    shift: float
    child: Dist
    kind = "affine"

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("affine scale must be > 0")

    def sample(self, rng, n):
        return self.scale * self.child.sample(rng, n) + self.shift

    def tail(self, x):
        return self.child.tail((x - self.shift) / self.scale)

    def cdf_strict(self, x):
        return self.child.cdf_strict((x - self.shift) / self.scale)

    def support(self):
        lo, hi = self.child.support()
        return (self.scale * lo + self.shift, self.scale * hi + self.shift)

    def to_obj(self):
        return {
            "kind": "affine",
            "scale": self.scale,
            "shift": self.shift,
            "child": self.child.to_obj(),
        }


@dataclass(frozen=True, repr=False)
class Neg(Dist):
    """-X; lets negative linear coefficients compose with Affine."""

    child: Dist
    kind = "neg"

    def sample(self, rng, n):
        return -self.child.sample(rng, n)

    def tail(self, x):
        return self.child.cdf_strict(-x)

    def cdf_strict(self, x):
        return self.child.tail(-x)

    def support(self):
        lo, hi = self.child.support()
        return (-hi, -lo)

    def to_obj(self):
        return {"kind": "neg", "child": self.child.to_obj()}


@dataclass(frozen=True, repr=False)
class PosPower(Dist):
    """(max(X, 0)) ** power with power > 0."""

    power: float
    child: Dist
    kind = "pospower"

    def __post_init__(self):
        if not self.power > 0:
            raise ValueError("pospower exponent must be > 0")

    def sample(self, rng, n):
        return np.maximum(self.child.sample(rng, n), 0.0) ** self.power

    def tail(self, x):
        if x < 0:
            return 1.0
        if x == 0:
            return self.child.tail(0.0)
        return self.child.tail(x ** (1.0 / self.power))

    def cdf_strict(self, x):
        if x <= 0:
            return 0.0
        return self.child.cdf_strict(x ** (1.0 / self.power))

    def support(self):
        lo, hi = self.child.support()
        return (max(lo, 0.0) ** self.power, max(hi, 0.0) ** self.power)

    def to_obj(self):
        return {"kind": "pospower", "power": self.power, "child": self.child.to_obj()}


@dataclass(frozen=True, repr=False)
class Min(Dist):
    """min of two independent children."""

    left: Dist
    right: Dist
    kind = "min"

    def sample(self, rng, n):
        return np.minimum(self.left.sample(rng, n), self.right.sample(rng, n))

    def tail(self, x):
        return self.left.tail(x) * self.right.tail(x)

    def cdf_strict(self, x):
        return 1.0 - (1.0 - self.left.cdf_strict(x)) * (1.0 - self.right.cdf_strict(x))

    def support(self):
        llo, lhi = self.left.support()
        rlo, rhi = self.right.support()
        return (min(llo, rlo), min(lhi, rhi))

    def to_obj(self):
        return {"kind": "min", "left": self.left.to_obj(), "right": self.right.to_obj()}


@dataclass(frozen=True, repr=False)
class Max(Dist):
    """max of two independent children."""

    left: Dist
    right: Dist
    kind = "max"

    def sample(self, rng, n):
        return np.maximum(self.left.sample(rng, n), self.right.sample(rng, n))

    def tail(self, x):
        lt, rt = self.left.tail(x), self.right.tail(x)
        return lt + rt - lt * rt

    def cdf_strict(self, x):
        return self.left.cdf_strict(x) * self.right.cdf_strict(x)

    def support(self):
        llo, lhi = self.left.support()
        rlo, rhi = self.right.support()
        return (max(llo, rlo), max(lhi, rhi))

    def to_obj(self):
        return {"kind": "max", "left": self.left.to_obj(), "right": self.right.to_obj()}


@dataclass(frozen=True, repr=False)
class SumIndep(Dist):
    """sum of two independent children."""

    left: Dist
    right: Dist
    kind = "sum_indep"

    def sample(self, rng, n):
        return self.left.sample(rng, n) + self.right.sample(rng, n)

    def _mix_over_discrete(self, fn_name: str, x: float) -> float:
        la, ra = to_atoms(self.left), to_atoms(self.right)
        if la is not None:
            other, atoms = self.right, la
        elif ra is not None:
            other, atoms = self.left, ra
        else:
            raise MomentUnavailableError(
                "tail of a sum of two continuous independent laws is not "
                "available pointwise; estimate from samples instead"
            )
        return float(sum(p * getattr(other, fn_name)(x - v) for v, p in atoms))

    def tail(self, x):
        atoms = to_atoms(self)
        if atoms is not None:
            return float(sum(p for v, p in atoms if v > x))
        return self._mix_over_discrete("tail", x)

    def cdf_strict(self, x):
        atoms = to_atoms(self)
        if atoms is not None:
            return float(sum(p for v, p in atoms if v < x))
        return self._mix_over_discrete("cdf_strict", x)

    def support(self):
        llo, lhi = self.left.support()
        rlo, rhi = self.right.support()
        return (llo + rlo, lhi + rhi)

    def to_obj(self):
        return {"kind": "sum_indep", "left": self.left.to_obj(), "right": self.right.to_obj()}


@dataclass(frozen=True, repr=False)
class MinWithParetoIndep(Dist):
    """min(X, W) with W an independent Pareto(gamma) on [1, inf)."""

    child: Dist
    gamma: float
    kind = "min_pareto"

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("pareto gamma must be > 0")

    def _w(self) -> Pareto:
        return Pareto(self.gamma)

    def sample(self, rng, n):
        return np.minimum(self.child.sample(rng, n), self._w().sample(rng, n))

    def sample_coupled(self, rng, n) -> tuple[np.ndarray, np.ndarray]:
        """(original draw, minorant draw) sharing the child's randomness."""
        b = self.child.sample(rng, n)
        w = self._w().sample(rng, n)
        return b, np.minimum(b, w)

    def tail(self, x):
        return self.child.tail(x) * self._w().tail(x)

    def cdf_strict(self, x):
        w_ge = 1.0 if x <= 1.0 else float(x) ** -self.gamma
        return 1.0 - (1.0 - self.child.cdf_strict(x)) * w_ge

    def support(self):
        lo, hi = self.child.support()
        return (min(lo, 1.0), min(hi, math.inf))

    def to_obj(self):
        return {"kind": "min_pareto", "gamma": self.gamma, "child": self.child.to_obj()}


@dataclass(frozen=True, repr=False)
class Mixture(Dist):
    """Finite mixture; the law of a branch-dependent quantity."""

    probs: tuple[float, ...]
    children: tuple[Dist, ...]
    kind = "mixture"

    def __post_init__(self):
        if len(self.probs) != len(self.children) or not self.children:
            raise ValueError("mixture needs matching, nonempty prob/child lists")
        if any(p <= 0 for p in self.probs):
            raise ValueError("mixture weights must be positive")
        if abs(sum(self.probs) - 1.0) > 1e-12:
            raise ValueError("mixture weights must sum to 1 within 1e-12")

    def sample(self, rng, n):
        cum = np.cumsum(self.probs)
        idx = np.searchsorted(cum, rng.random(n), side="right")
        idx = np.minimum(idx, len(self.children) - 1)
        out = np.empty(n)
        for j, child in enumerate(self.children):
            slots = idx == j
            k = int(slots.sum())
            if k:
                out[slots] = child.sample(rng, k)
        return out

    def tail(self, x):
        return float(sum(p * c.tail(x) for p, c in zip(self.probs, self.children)))

    def cdf_strict(self, x):
        return float(sum(p * c.cdf_strict(x) for p, c in zip(self.probs, self.children)))

    def support(self):
        los, his = zip(*(c.support() for c in self.children))
        return (min(los), max(his))

    def to_obj(self):
        return {
            "kind": "mixture",
            "components": [[p, c.to_obj()] for p, c in zip(self.probs, self.children)],
        }


@dataclass(frozen=True, repr=False)
class ScaledSquare(Dist):
    """scale * X**2 with scale > 0; the marginal of a squared-driver risk."""

    scale: float
    child: Dist
    kind = "scaled_square"

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be > 0")

    def sample(self, rng, n):
        z = self.child.sample(rng, n)
        return self.scale * z * z

    def tail(self, x):
        if x < 0:
            return 1.0
        t = math.sqrt(x / self.scale)
        return self.child.tail(t) + self.child.cdf_strict(-t)

    def cdf_strict(self, x):
        if x <= 0:
            return 0.0
        t = math.sqrt(x / self.scale)
        return self.child.cdf_strict(t) - self.child.cdf_strict(-t) - _point_prob(self.child, -t)

    def support(self):
        lo, hi = self.child.support()
        if lo <= 0.0 <= hi:
            lo2 = 0.0
        else:
            lo2 = min(lo * lo, hi * hi)
        hi2 = max(lo * lo, hi * hi) if math.isfinite(lo) and math.isfinite(hi) else math.inf
        return (self.scale * lo2, self.scale * hi2 if math.isfinite(hi2) else math.inf)

    def to_obj(self):
        return {"kind": "scaled_square", "scale": self.scale, "child": self.child.to_obj()}


# ---------------------------------------------------------------------------
# Structural helpers
# ---------------------------------------------------------------------------


def to_atoms(expr: Dist, cap: int = _ATOM_CAP) -> Optional[list[tuple[float, float]]]:
    """Finite discrete support as (value, prob) pairs, or None if continuous."""
    if isinstance(expr, PointMass):
        return [(float(expr.value), 1.0)]
    if isinstance(expr, Atoms):
        return list(zip(expr.values, expr.probs))
    if isinstance(expr, Affine):
        sub = to_atoms(expr.child, cap)
        return None if sub is None else _merge([(expr.scale * v + expr.shift, p) for v, p in sub])
    if isinstance(expr, Neg):
        sub = to_atoms(expr.child, cap)
        return None if sub is None else _merge([(-v, p) for v, p in sub])
    if isinstance(expr, PosPower):
        sub = to_atoms(expr.child, cap)
        return None if sub is None else _merge([(max(v, 0.0) ** expr.power, p) for v, p in sub])
    if isinstance(expr, (Min, Max, SumIndep)):
        la, ra = to_atoms(expr.left, cap), to_atoms(expr.right, cap)
        if la is None or ra is None or len(la) * len(ra) > cap:
            return None
        op = {"min": min, "max": max, "sum_indep": lambda a, b: a + b}[expr.kind]
        return _merge([(op(v, w), p * q) for v, p in la for w, q in ra])
    if isinstance(expr, Mixture):
        parts = []
        for p, c in zip(expr.probs, expr.children):
            sub = to_atoms(c, cap)
            if sub is None:
                return None
            parts.extend((v, p * q) for v, q in sub)
        return _merge(parts) if len(parts) <= cap else None
    if isinstance(expr, ScaledSquare):
        sub = to_atoms(expr.child, cap)
        return None if sub is None else _merge([(expr.scale * v * v, p) for v, p in sub])
    return None


def _merge(pairs: list[tuple[float, float]]) -> list[tuple[float, float]]:
    acc: dict[float, float] = {}
    for v, p in pairs:
        acc[v] = acc.get(v, 0.0) + p
    return sorted(acc.items())


def _point_prob(expr: Dist, v: float) -> float:
    atoms = to_atoms(expr)
    if atoms is None:
        return 0.0
    return float(sum(p for w, p in atoms if w == v))



def is_strictly_positive(expr: Dist, tol: float = 1e-12) -> bool:
    """P(X > 0) = 1 up to float roundoff in discrete probability sums."""
    return expr.tail(0.0) >= 1.0 - tol


def structural_tail_index(expr: Dist) -> Optional[ExtReal]:
    """Exact moment index sup{s >= 0 : E((X^+)^s) < inf}, or None if the
    expression algebra does not determine it (never a wrong number)."""
    if isinstance(expr, (PointMass, Atoms, Lognormal, Normal)):
        return INF
    if isinstance(expr, Pareto):
        return ExtReal.of(expr.gamma)
    if isinstance(expr, Affine):
        return structural_tail_index(expr.child)
    if isinstance(expr, Neg):
        return structural_left_index(expr.child)
    if isinstance(expr, PosPower):
        sub = structural_tail_index(expr.child)
        if sub is None:
            return None
        return INF if sub.is_inf else ExtReal.of(sub.finite / expr.power)
    if isinstance(expr, Max):
        return _combine_min(structural_tail_index(expr.left), structural_tail_index(expr.right))
    if isinstance(expr, SumIndep):
        return _combine_min(structural_tail_index(expr.left), structural_tail_index(expr.right))
    if isinstance(expr, MinWithParetoIndep):
        sub = structural_tail_index(expr.child)
        if sub is None:
            return None
        return INF if sub.is_inf else ExtReal.of(sub.finite + expr.gamma)
    if isinstance(expr, Min):
        return _min_index(expr.left, expr.right)
    if isinstance(expr, Mixture):
        parts = [structural_tail_index(c) for c in expr.children]
        out = INF
        for p in parts:
            if p is None:
                return None
            out = ext_min(out, p)
        return out
    if isinstance(expr, ScaledSquare):
        right = structural_tail_index(expr.child)
        left = structural_left_index(expr.child)
        if right is None or left is None:
            return None
        both = ext_min(right, left)
        return INF if both.is_inf else ExtReal.of(both.finite / 2.0)
    return None


def structural_left_index(expr: Dist) -> Optional[ExtReal]:
    """Moment index of -X (the left tail), where the algebra determines it."""
    if isinstance(expr, (PointMass, Atoms, Pareto, Lognormal, Normal)):
        return INF
    if isinstance(expr, (PosPower, ScaledSquare)):
        return INF  # nonnegative by construction
    if isinstance(expr, Affine):
        return structural_left_index(expr.child)
    if isinstance(expr, Neg):
        return structural_tail_index(expr.child)
    if isinstance(expr, Min):
        return _combine_min(structural_left_index(expr.left), structural_left_index(expr.right))
    if isinstance(expr, SumIndep):
        return _combine_min(structural_left_index(expr.left), structural_left_index(expr.right))
    if isinstance(expr, MinWithParetoIndep):
        return structural_left_index(expr.child)
    if isinstance(expr, Max):
        li = structural_left_index(expr.left)
        ri = structural_left_index(expr.right)
        if li is not None and li.is_inf and ri is not None and ri.is_inf:
            return INF
        return None
    if isinstance(expr, Mixture):
        parts = [structural_left_index(c) for c in expr.children]
        out = INF
        for p in parts:
            if p is None:
                return None
            out = ext_min(out, p)
        return out
    return None


def _combine_min(a: Optional[ExtReal], b: Optional[ExtReal]) -> Optional[ExtReal]:
    if a is not None and not a.is_inf and a.finite == 0.0:
        return a
    if b is not None and not b.is_inf and b.finite == 0.0:
        return b
    if a is None or b is None:
        return None
    return ext_min(a, b)


def _min_index(left: Dist, right: Dist) -> Optional[ExtReal]:
    li, ri = structural_tail_index(left), structural_tail_index(right)
    # min(X, Y) <= each child, so its index dominates both; one infinite child settles it
    if (li is not None and li.is_inf) or (ri is not None and ri.is_inf):
        return INF
    # a Pareto child has an exact-limit tail, so the log-tails add
    if isinstance(right, Pareto) and li is not None:
        return INF if li.is_inf else ExtReal.of(li.finite + right.gamma)
    if isinstance(left, Pareto) and ri is not None:
        return INF if ri.is_inf else ExtReal.of(ri.finite + left.gamma)
    # one-sided support bound: the a.s. smaller child is the min
    llo, lhi = left.support()
    rlo, rhi = right.support()
    if lhi <= rlo:
        return li
    if rhi <= llo:
        return ri
    return None


# ---------------------------------------------------------------------------
# Fractional moments E(X^s; X > 0)
# ---------------------------------------------------------------------------


def closed_form_moment(expr: Dist, s: float) -> Optional[ExtReal]:
    """E(X^s; X>0) in closed form, or None when quadrature is required."""
    if s < 0:
        raise ValueError("moment order must be >= 0")
    atoms = to_atoms(expr)
    if atoms is not None:
        return ExtReal.of(sum(p * v**s for v, p in atoms if v > 0))
    if isinstance(expr, Pareto):
        if s >= expr.gamma:
            return INF
        return ExtReal.of(expr.gamma / (expr.gamma - s))
    if isinstance(expr, Lognormal):
        return ExtReal.of(math.exp(expr.mu * s + 0.5 * (expr.sigma * s) ** 2))
    if isinstance(expr, Normal) and expr.mu == 0.0:
        # half of E|X|^s by symmetry
        logm = s * math.log(expr.sigma) + 0.5 * s * math.log(2.0) \
            + special.gammaln((s + 1.0) / 2.0) - 0.5 * math.log(math.pi)
        return ExtReal.of(0.5 * math.exp(logm))
    if isinstance(expr, Affine) and expr.shift == 0.0:
        sub = closed_form_moment(expr.child, s)
        if sub is None:
            return None
        return INF if sub.is_inf else ExtReal.of(expr.scale**s * sub.finite)
    if isinstance(expr, PosPower):
        return closed_form_moment(expr.child, expr.power * s)
    if isinstance(expr, ScaledSquare):
        pos = closed_form_moment(expr.child, 2.0 * s)
        neg = closed_form_moment(Neg(expr.child), 2.0 * s)
        if pos is None or neg is None:
            return None
        if pos.is_inf or neg.is_inf:
            return INF
        return ExtReal.of(expr.scale**s * (pos.finite + neg.finite))
    if isinstance(expr, Neg):
        child = expr.child
        if isinstance(child, Normal) and child.mu == 0.0:
            return closed_form_moment(child, s)  # symmetric
        if isinstance(child, (Pareto, Lognormal, PosPower, ScaledSquare)):
            return ExtReal.of(0.0)  # child is nonnegative, so -X has no positive part
        return None
    if isinstance(expr, Mixture):
        total = 0.0
        for p, c in zip(expr.probs, expr.children):
            sub = closed_form_moment(c, s)
            if sub is None:
                return None
            if sub.is_inf:
                return INF
            total += p * sub.finite
        return ExtReal.of(total)
    return None


def analytic_fractional_moment(expr: Dist, s: float, tol: float = 1e-9) -> ExtReal:
    """E(X^s; X > 0) as an extended real.

    Closed forms are used whenever the tree admits them; otherwise adaptive
    quadrature of s*x^(s-1)*P(X>x) on a log-transformed grid, declaring
    divergence when partial integrals pass 1e12 or the order reaches the
    structural tail exponent.
    """
    closed = closed_form_moment(expr, s)
    if closed is not None:
        return closed
    if s == 0.0:
        return ExtReal.of(expr.tail(0.0))
    return _tail_moment_quad(expr, s, tol)


_DIVERGENCE_CAP = 1e12
_T_MAX = 690.0  # log-x cap; beyond this x overflows float64


def _tail_moment_quad(expr: Dist, s: float, tol: float) -> ExtReal:
    idx = structural_tail_index(expr)
    if idx is not None and not idx.is_inf and s >= idx.finite:
        return INF

    # x in (0, 1]: substitute x = u^(1/s) so the integrand is bounded
    lower, _ = integrate.quad(
        lambda u: expr.tail(u ** (1.0 / s)) if u > 0 else expr.tail(0.0),
        0.0, 1.0, epsabs=tol / 4, limit=200,
    )
    total = float(lower)

    # x in (1, inf): x = e^t on expanding intervals
    t0, width = 0.0, 2.0
    small_streak = 0
    while t0 < _T_MAX:
        hi = min(t0 + width, _T_MAX)
        part, _ = integrate.quad(
            lambda t: s * math.exp(s * t) * expr.tail(math.exp(t)),
            t0, hi, epsabs=tol / 8, limit=200,
        )
        total += part
        if total > _DIVERGENCE_CAP:
            return INF
        small_streak = small_streak + 1 if part < tol / 8 else 0
        if small_streak >= 3:
            return ExtReal.of(total)
        t0, width = hi, min(width * 1.6, 48.0)

    # ran to the float64 edge: extrapolate the remainder from the tail exponent
    if idx is not None and not idx.is_inf and idx.finite > s:
        gap = idx.finite - s
        t_edge = _T_MAX
        tail_edge = expr.tail(math.exp(t_edge))
        if tail_edge > 0:
            log_rem = math.log(s) + math.log(tail_edge) + s * t_edge - math.log(gap)
            if log_rem < math.log(max(total, tol)) + math.log(1e9):
                return ExtReal.of(total + math.exp(log_rem))
        else:
            return ExtReal.of(total)
    raise MomentUnavailableError(
        f"fractional moment of order {s} did not converge within the "
        "quadrature budget; the order is too close to the tail exponent"
    )


def negative_part_moment(expr: Dist, s: float, tol: float = 1e-9) -> ExtReal:
    """E((-X)^s; X < 0)."""
    return analytic_fractional_moment(Neg(expr), s, tol)


def mean(expr: Dist) -> float:
    """E(X) as a float (may be +-inf); raises if inf - inf."""
    pos = analytic_fractional_moment(expr, 1.0)
    neg = negative_part_moment(expr, 1.0)
    if pos.is_inf and neg.is_inf:
        raise MomentUnavailableError("mean is undefined: both tails have infinite mass")
    if pos.is_inf:
        return math.inf
    if neg.is_inf:
        return -math.inf
    return pos.finite - neg.finite


def mean_log(expr: Dist, tol: float = 1e-10) -> float:
    """E(log X) for a strictly positive law."""
    if not is_strictly_positive(expr):
        raise MomentUnavailableError("E(log X) needs X > 0 almost surely")
    atoms = to_atoms(expr)
    if atoms is not None:
        return float(sum(p * math.log(v) for v, p in atoms))
    if isinstance(expr, Pareto):
        return 1.0 / expr.gamma
    if isinstance(expr, Lognormal):
        return expr.mu
    if isinstance(expr, Affine) and expr.shift == 0.0:
        return math.log(expr.scale) + mean_log(expr.child, tol)
    if isinstance(expr, PosPower):
        return expr.power * mean_log(expr.child, tol)
    if isinstance(expr, ScaledSquare):
        return math.log(expr.scale) + 2.0 * mean_log_abs(expr.child, tol)
    # E log X = int_0^inf P(X > e^t) dt - int_0^inf P(X < e^-t) dt
    up, _ = integrate.quad(lambda t: expr.tail(math.exp(t)), 0, _T_MAX, epsabs=tol, limit=400)
    dn, _ = integrate.quad(lambda t: expr.cdf_strict(math.exp(-t)), 0, _T_MAX, epsabs=tol, limit=400)
    return float(up - dn)


def mean_log_abs(expr: Dist, tol: float = 1e-10) -> float:
    """E(log |X|)."""
    if isinstance(expr, Normal) and expr.mu == 0.0:
        # E log|Z| = -(euler_gamma + log 2)/2 for the standard normal
        return math.log(expr.sigma) - 0.5 * (np.euler_gamma + math.log(2.0))
    atoms = to_atoms(expr)
    if atoms is not None:
        if any(v == 0 for v, _ in atoms):
            raise MomentUnavailableError("log |X| undefined with an atom at 0")
        return float(sum(p * math.log(abs(v)) for v, p in atoms))

    def abs_tail(x: float) -> float:
        return expr.tail(x) + expr.cdf_strict(-x)

    up, _ = integrate.quad(lambda t: abs_tail(math.exp(t)), 0, _T_MAX, epsabs=tol, limit=400)
    dn, _ = integrate.quad(lambda t: 1.0 - abs_tail(math.exp(-t)), 0, _T_MAX, epsabs=tol, limit=400)
    return float(up - dn)


# ---------------------------------------------------------------------------
# Joint risk specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IndepProduct:
    """Independent discount factor A and loss B."""

    a: Dist
    b: Dist
    kind: str = field(default="indep_product", init=False, repr=False)


@dataclass(frozen=True)
class Branch:
    """One mixture branch: A = a_const + a_coef*W, B = b_const + b_coef*W.

    The shared driver W is PointMass(1) or Pareto(gamma); sharing it is what
    makes the within-year risks dependent.
    """

    prob: float
    driver: Dist
    a_const: float
    a_coef: float
    b_const: float
    b_coef: float

    def a_component(self) -> Dist:
        return _linear_of(self.a_const, self.a_coef, self.driver)

    def b_component(self) -> Dist:
        return _linear_of(self.b_const, self.b_coef, self.driver)


@dataclass(frozen=True)
class BranchMixture:
    branches: tuple[Branch, ...]
    kind: str = field(default="branch_mixture", init=False, repr=False)

    def __post_init__(self):
        if not self.branches:
            raise ValueError("branch mixture needs at least one branch")


@dataclass(frozen=True)
class ArchCoupling:
    """(A, B) = (lam * Z^2, beta * Z^2): squared-driver coupled risks."""

    lam: float
    beta: float
    z: Dist
    kind: str = field(default="arch", init=False, repr=False)

    def __post_init__(self):
        if not (self.lam > 0 and self.beta > 0):
            raise ValueError("arch coupling needs lam > 0 and beta > 0")


JointRiskSpec = Union[IndepProduct, BranchMixture, ArchCoupling]


def _linear_of(const: float, coef: float, driver: Dist) -> Dist:
    if coef == 0.0:
        return PointMass(const)
    if isinstance(driver, PointMass):
        return PointMass(const + coef * driver.value)
    if coef > 0:
        return Affine(coef, const, driver)
    return Affine(-coef, const, Neg(driver))


def a_marginal(spec: JointRiskSpec) -> Dist:
    if isinstance(spec, IndepProduct):
        return spec.a
    if isinstance(spec, BranchMixture):
        comps = [br.a_component() for br in spec.branches]
        probs = tuple(br.prob for br in spec.branches)
        return comps[0] if len(comps) == 1 else Mixture(probs, tuple(comps))
    if isinstance(spec, ArchCoupling):
        return ScaledSquare(spec.lam, spec.z)
    raise TypeError(f"not a joint risk spec: {spec!r}")


def b_marginal(spec: JointRiskSpec) -> Dist:
    if isinstance(spec, IndepProduct):
        return spec.b
    if isinstance(spec, BranchMixture):
        comps = [br.b_component() for br in spec.branches]
        probs = tuple(br.prob for br in spec.branches)
        return comps[0] if len(comps) == 1 else Mixture(probs, tuple(comps))
    if isinstance(spec, ArchCoupling):
        return ScaledSquare(spec.beta, spec.z)
    raise TypeError(f"not a joint risk spec: {spec!r}")


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[str, ...]

    def to_json_obj(self):
        return {"ok": self.ok, "violations": list(self.violations)}


def validate(spec: JointRiskSpec) -> ValidationReport:
    """Check the standing model assumptions.

    Accepts iff A > 0 almost surely, A is not the constant 1, and
    P(B > 0) > 0.  Violations are reported, not raised.
    """
    v: list[str] = []
    if isinstance(spec, IndepProduct):
        if not is_strictly_positive(spec.a):
            v.append("A must be strictly positive almost surely")
        a_atoms = to_atoms(spec.a)
        if a_atoms == [(1.0, 1.0)]:
            v.append("A is the constant 1 (degenerates to a plain random walk)")
        if spec.b.tail(0.0) <= 0.0:
            v.append("P(B > 0) must be positive, otherwise ruin is impossible")
    elif isinstance(spec, BranchMixture):
        total = sum(br.prob for br in spec.branches)
        if abs(total - 1.0) > 1e-12:
            v.append(f"branch probabilities sum to {total!r}, not 1")
        if any(br.prob <= 0 for br in spec.branches):
            v.append("branch probabilities must be positive")
        all_one = True
        any_b_pos = False
        for i, br in enumerate(spec.branches):
            if isinstance(br.driver, PointMass):
                if br.driver.value != 1.0:
                    v.append(f"branch {i}: point-mass driver must sit at 1")
                a_val = br.a_const + br.a_coef * br.driver.value
                if a_val <= 0:
                    v.append(f"branch {i}: A = {a_val!r} violates A > 0")
                if a_val != 1.0:
                    all_one = False
                if br.b_const + br.b_coef * br.driver.value > 0:
                    any_b_pos = True
            elif isinstance(br.driver, Pareto):
                if br.a_coef < 0:
                    v.append(f"branch {i}: negative A-coefficient on an unbounded driver violates A > 0")
                elif br.a_const + br.a_coef <= 0:
                    v.append(f"branch {i}: A at the driver floor is {br.a_const + br.a_coef!r} <= 0")
                if not (br.a_coef == 0.0 and br.a_const == 1.0):
                    all_one = False
                if br.b_coef > 0 or br.b_const + br.b_coef > 0:
                    any_b_pos = True
            else:
                v.append(f"branch {i}: driver must be PointMass(1) or Pareto")
        if all_one:
            v.append("A is the constant 1 (degenerates to a plain random walk)")
        if not any_b_pos:
            v.append("P(B > 0) must be positive, otherwise ruin is impossible")
    elif isinstance(spec, ArchCoupling):
        if _point_prob(spec.z, 0.0) > 0.0:
            v.append("driver Z has an atom at 0, so A = lam*Z^2 is not strictly positive")
        z_atoms = to_atoms(spec.z)
        if z_atoms is not None:
            vals = {spec.lam * val * val for val, _ in z_atoms}
            if vals == {1.0}:
                v.append("A is the constant 1 (degenerates to a plain random walk)")
            if all(val == 0.0 for val, _ in z_atoms):
                v.append("P(B > 0) must be positive, otherwise ruin is impossible")
    else:
        raise TypeError(f"not a joint risk spec: {spec!r}")
    return ValidationReport(ok=not v, violations=tuple(v))


def require_valid(spec: JointRiskSpec) -> None:
    report = validate(spec)
    if not report.ok:
        raise InvalidSpecError(report.violations)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def sample_marginal(expr: Dist, stream: SeedStream, n: int) -> np.ndarray:
    """n i.i.d. draws from the marginal law; deterministic per stream."""
    if n < 1:
        raise ValueError("need n >= 1")
    return expr.sample(stream.rng(), n)


def sample_joint(spec: JointRiskSpec, stream: SeedStream, n: int) -> tuple[np.ndarray, np.ndarray]:
    """n i.i.d. pairs (a_i, b_i) from the joint law."""
    if n < 1:
        raise ValueError("need n >= 1")
    return joint_sampler(spec)(stream.rng(), n)


def joint_sampler(spec: JointRiskSpec):
    """A callable (rng, n) -> (a, b) drawing dependent pairs exactly."""
    if isinstance(spec, IndepProduct):
        def draw(rng, n):
            return spec.a.sample(rng, n), spec.b.sample(rng, n)
        return draw
    if isinstance(spec, BranchMixture):
        branches = spec.branches
        cum = np.cumsum([br.prob for br in branches])

        def draw(rng, n):
            idx = np.searchsorted(cum, rng.random(n), side="right")
            idx = np.minimum(idx, len(branches) - 1)
            a = np.empty(n)
            b = np.empty(n)
            for j, br in enumerate(branches):
                slots = idx == j
                k = int(slots.sum())
                if not k:
                    continue
                w = br.driver.sample(rng, k)
                a[slots] = br.a_const + br.a_coef * w
                b[slots] = br.b_const + br.b_coef * w
            return a, b
        return draw
    if isinstance(spec, ArchCoupling):
        def draw(rng, n):
            z = spec.z.sample(rng, n)
            z2 = z * z
            return spec.lam * z2, spec.beta * z2
        return draw
    raise TypeError(f"not a joint risk spec: {spec!r}")


# ---------------------------------------------------------------------------
# Configuration tree (de)serialization
# ---------------------------------------------------------------------------

_DIST_KINDS = {}


def dist_from_obj(obj: dict) -> Dist:
    """Rebuild a marginal expression from its configuration tree."""
    from .errors import ConfigError

    if not isinstance(obj, dict) or "kind" not in obj:
        raise ConfigError(f"distribution node must be a mapping with 'kind': {obj!r}")
    kind = obj["kind"]
    try:
        if kind == "point":
            return PointMass(float(obj["value"]))
        if kind == "atoms":
            return Atoms.of([(float(v), float(p)) for v, p in obj["atoms"]])
        if kind == "pareto":
            return Pareto(float(obj["gamma"]))
        if kind == "lognormal":
            return Lognormal(float(obj["mu"]), float(obj["sigma"]))
        if kind == "normal":
            return Normal(float(obj["mu"]), float(obj["sigma"]))
        if kind == "affine":
            return Affine(float(obj["scale"]), float(obj["shift"]), dist_from_obj(obj["child"]))
        if kind == "neg":
            return Neg(dist_from_obj(obj["child"]))
        if kind == "pospower":
            return PosPower(float(obj["power"]), dist_from_obj(obj["child"]))
        if kind == "min":
            return Min(dist_from_obj(obj["left"]), dist_from_obj(obj["right"]))
        if kind == "max":
            return Max(dist_from_obj(obj["left"]), dist_from_obj(obj["right"]))
        if kind == "sum_indep":
            return SumIndep(dist_from_obj(obj["left"]), dist_from_obj(obj["right"]))
        if kind == "min_pareto":
            return MinWithParetoIndep(dist_from_obj(obj["child"]), float(obj["gamma"]))
        if kind == "mixture":
            probs, children = zip(*[(float(p), dist_from_obj(c)) for p, c in obj["components"]])
            return Mixture(tuple(probs), tuple(children))
        if kind == "scaled_square":
            return ScaledSquare(float(obj["scale"]), dist_from_obj(obj["child"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad distribution node {obj!r}: {exc}") from exc
    raise ConfigError(f"unknown distribution kind {kind!r}")


def joint_to_obj(spec: JointRiskSpec) -> dict:
    if isinstance(spec, IndepProduct):
        return {"kind": "indep_product", "a": spec.a.to_obj(), "b": spec.b.to_obj()}
    if isinstance(spec, BranchMixture):
        return {
            "kind": "branch_mixture",
            "branches": [
                {
                    "prob": br.prob,
                    "driver": br.driver.to_obj(),
                    "a_const": br.a_const,
                    "a_coef": br.a_coef,
                    "b_const": br.b_const,
                    "b_coef": br.b_coef,
                }
                for br in spec.branches
            ],
        }
    if isinstance(spec, ArchCoupling):
        return {"kind": "arch", "lam": spec.lam, "beta": spec.beta, "z": spec.z.to_obj()}
    raise TypeError(f"not a joint risk spec: {spec!r}")


def joint_from_obj(obj: dict) -> JointRiskSpec:
    from .errors import ConfigError

    if not isinstance(obj, dict) or "kind" not in obj:
        raise ConfigError(f"joint spec must be a mapping with 'kind': {obj!r}")
    kind = obj["kind"]
    try:
        if kind == "indep_product":
            return IndepProduct(dist_from_obj(obj["a"]), dist_from_obj(obj["b"]))
        if kind == "branch_mixture":
            branches = tuple(
                Branch(
                    prob=float(br["prob"]),
                    driver=dist_from_obj(br["driver"]),
                    a_const=float(br.get("a_const", 0.0)),
                    a_coef=float(br.get("a_coef", 0.0)),
                    b_const=float(br.get("b_const", 0.0)),
                    b_coef=float(br.get("b_coef", 0.0)),
                )
                for br in obj["branches"]
            )
            return BranchMixture(branches)
        if kind == "arch":
            return ArchCoupling(float(obj["lam"]), float(obj["beta"]), dist_from_obj(obj["z"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad joint spec {obj!r}: {exc}") from exc
    raise ConfigError(f"unknown joint spec kind {kind!r}")


def spec_digest(spec: JointRiskSpec) -> str:
    """Stable content hash of a joint spec, for provenance records."""
    payload = json.dumps(joint_to_obj(spec), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()[:16]
