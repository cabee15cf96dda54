"""Seeded simulation of the discounted loss process and its ruin times.

The loss after n years is Y_n = sum_i A_1...A_{i-1} B_i; capital follows
U_n = (1 + r_n)(U_{n-1} - B_n) with A = 1/(1+r).  Ruin is the first n
with U_n < 0, equivalently the first n with Y_n > U_0.

Paths are simulated in fixed-size chunks, one derived seed substream per
chunk, so estimates are bit-identical regardless of how chunks are
scheduled.  Discount products are accumulated in log space with
compensated summation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import dists
from .dists import (
    Affine,
    Dist,
    JointRiskSpec,
    Pareto,
    SeedStream,
    a_marginal,
    b_marginal,
    joint_sampler,
    require_valid,
)
from .errors import MomentUnavailableError, Refusal
from .extreal import ExtReal

DEFAULT_PROD_THRESHOLD = 1e-8
DEFAULT_MAX_STEPS = 100_000
DEFAULT_MIN_STEPS = 50


@dataclass(frozen=True)
class PathConfig:
    """Simulation budget and horizon.

    ``horizon=None`` selects the truncated-ultimate mode: a path stops
    once its discount product falls below ``prod_threshold`` (after at
    least ``min_steps`` years) or at ``max_steps``.  The truncation can
    only hide later ruins, so ultimate ruin probabilities are
    underestimates; censoring counts make that bias visible.
    """

    n_paths: int
    u0_grid: tuple[float, ...]
    stream: SeedStream
    horizon: Optional[int] = None
    prod_threshold: float = DEFAULT_PROD_THRESHOLD
    max_steps: int = DEFAULT_MAX_STEPS
    min_steps: int = DEFAULT_MIN_STEPS
    chunk_size: int = 1 << 15

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("need at least one path")
        if not (0.0 < self.prod_threshold < 1.0):
            raise ValueError("prod_threshold must lie in (0, 1)")
        if self.max_steps < 1 or self.min_steps < 1:
            raise ValueError("step limits must be >= 1")
        if self.horizon is not None and self.horizon < 1:
            raise ValueError("finite horizon must be >= 1")
        grid = tuple(self.u0_grid)
        if any(u <= 0 for u in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("u0 grid must be positive and strictly increasing")
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")


@dataclass(frozen=True)
class RuinEstimate:
    """Per-level ruin probability estimates with binomial 95% intervals."""

    u0_grid: tuple[float, ...]
    n_paths: int
    ruins: tuple[int, ...]
    censored: tuple[int, ...]
    p_hat: tuple[float, ...]
    ci_lo: tuple[float, ...]
    ci_hi: tuple[float, ...]
    mode: str  # "finite" | "ultimate" | "random-walk-sup"
    horizon: Optional[int]
    hard_censored: int
    seed_master: int
    seed_index: int

    def to_json_obj(self) -> dict:
        return {
            "u0_grid": list(self.u0_grid),
            "n_paths": self.n_paths,
            "ruins": list(self.ruins),
            "censored": list(self.censored),
            "p_hat": list(self.p_hat),
            "ci_lo": list(self.ci_lo),
            "ci_hi": list(self.ci_hi),
            "mode": self.mode,
            "horizon": self.horizon,
            "hard_censored": self.hard_censored,
            "seed": {"master": self.seed_master, "index": self.seed_index},
        }

    def csv_rows(self) -> list[dict]:
        return [
            {
                "u0": u, "n_paths": self.n_paths, "ruins": r, "censored": c,
                "p_hat": p, "ci_lo": lo, "ci_hi": hi,
            }
            for u, r, c, p, lo, hi in zip(
                self.u0_grid, self.ruins, self.censored, self.p_hat, self.ci_lo, self.ci_hi
            )
        ]


def wilson_interval(successes: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score interval; behaves sensibly at 0 and n successes."""
    if n == 0:
        return (0.0, 1.0)
    ph = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (ph + z2 / (2 * n)) / denom
    half = z * math.sqrt(ph * (1.0 - ph) / n + z2 / (4 * n * n)) / denom
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == n else min(1.0, center + half)
    return (lo, hi)


# ---------------------------------------------------------------------------
# Single-path operations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PathResult:
    losses: np.ndarray        # Y_1..Y_n
    running_max: np.ndarray   # max over the first k losses
    products: np.ndarray      # A_1...A_k


def simulate_y_path(spec: JointRiskSpec, stream: SeedStream, n: int) -> PathResult:
    """One forward path of the accumulated discounted losses."""
    if n < 1:
        raise ValueError("need n >= 1")
    require_valid(spec)
    a, b = dists.sample_joint(spec, stream, n)
    log_prod = np.cumsum(np.log(a))
    prod_before = np.exp(np.concatenate(([0.0], log_prod[:-1])))
    y = np.cumsum(prod_before * b)
    return PathResult(losses=y, running_max=np.maximum.accumulate(y),
                      products=np.exp(log_prod))


def ruin_time(
    spec: JointRiskSpec,
    stream: SeedStream,
    u0: float,
    config: Optional[PathConfig] = None,
) -> Optional[int]:
    """First year the accumulated loss exceeds the initial capital.

    Returns None (censored) when the path stops by truncation or reaches
    the horizon without ruin.  The path itself does not depend on u0, so
    larger u0 on the same stream can only delay ruin.
    """
    if u0 <= 0:
        raise ValueError("initial capital must be positive")
    require_valid(spec)
    horizon = config.horizon if config is not None else None
    prod_threshold = config.prod_threshold if config is not None else DEFAULT_PROD_THRESHOLD
    max_steps = config.max_steps if config is not None else DEFAULT_MAX_STEPS
    min_steps = config.min_steps if config is not None else DEFAULT_MIN_STEPS
    limit = horizon if horizon is not None else max_steps
    log_eps = math.log(prod_threshold)

    draw = joint_sampler(spec)
    rng = stream.rng()
    lp = 0.0
    y = 0.0
    step = 0
    block = 256
    while step < limit:
        k = min(block, limit - step)
        a, b = draw(rng, k)
        for i in range(k):
            step += 1
            y += math.exp(lp) * b[i]
            if y > u0:
                return step
            lp += math.log(a[i])
            if horizon is None and lp < log_eps and step >= min_steps:
                return None
    return None


def capital_path(
    spec: JointRiskSpec, stream: SeedStream, u0: float, n: int
) -> tuple[np.ndarray, Optional[int]]:
    """The capital recursion U_k = (U_{k-1} - B_k) / A_k and its ruin time.

    Drawing from the same stream as :func:`simulate_y_path` reproduces the
    same risk draws, so the two ruin-time forms can be compared pathwise.
    """
    if u0 <= 0:
        raise ValueError("initial capital must be positive")
    if n < 1:
        raise ValueError("need n >= 1")
    require_valid(spec)
    a, b = dists.sample_joint(spec, stream, n)
    u = np.empty(n)
    cur = u0
    ruin: Optional[int] = None
    for i in range(n):
        cur = (cur - b[i]) / a[i]
        u[i] = cur
        if ruin is None and cur < 0:
            ruin = i + 1
    return u, ruin


# ---------------------------------------------------------------------------
# Chunked Monte Carlo engine
# ---------------------------------------------------------------------------


def _n_chunks(n_paths: int, chunk_size: int) -> int:
    return (n_paths + chunk_size - 1) // chunk_size


def _chunk_sizes(n_paths: int, chunk_size: int):
    for ci in range(_n_chunks(n_paths, chunk_size)):
        yield ci, min(chunk_size, n_paths - ci * chunk_size)


def _run_chunk_ultimate(
    draw: Callable, rng: np.random.Generator, m: int,
    log_eps: float, min_steps: int, max_steps: int,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Run one chunk to the truncation rule.

    Returns (final running max, final partial sum, hard-censored count).
    State arrays are compacted as paths finish.
    """
    lp = np.zeros(m)
    comp = np.zeros(m)  # compensation term for the log-product sum
    y = np.zeros(m)
    ymax = np.zeros(m)
    done_max: list[np.ndarray] = []
    done_y: list[np.ndarray] = []
    hard = 0
    step = 0
    while lp.size:
        step += 1
        a, b = draw(rng, lp.size)
        y += np.exp(lp) * b
        np.maximum(ymax, y, out=ymax)
        inc = np.log(a)
        inc += comp
        t = lp + inc
        comp = inc - (t - lp)
        lp = t
        if step >= max_steps:
            hard = lp.size
            done_max.append(ymax)
            done_y.append(y)
            break
        finished = (lp < log_eps) & (step >= min_steps)
        if finished.any():
            done_max.append(ymax[finished])
            done_y.append(y[finished])
            keep = ~finished
            lp, comp, y, ymax = lp[keep], comp[keep], y[keep], ymax[keep]
    return np.concatenate(done_max), np.concatenate(done_y), hard


def _run_chunk_finite(
    draw: Callable, rng: np.random.Generator, m: int, horizon: int
) -> np.ndarray:
    """Running max after exactly ``horizon`` steps for one dense chunk."""
    lp = np.zeros(m)
    comp = np.zeros(m)
    y = np.zeros(m)
    ymax = np.full(m, -np.inf)
    for _ in range(horizon):
        a, b = draw(rng, m)
        y += np.exp(lp) * b
        np.maximum(ymax, y, out=ymax)
        inc = np.log(a)
        inc += comp
        t = lp + inc
        comp = inc - (t - lp)
        lp = t
    return ymax


def drift_log_a(spec: JointRiskSpec, stream: Optional[SeedStream] = None) -> float:
    """E(log A), analytic along the expression tree where possible,
    otherwise a Monte Carlo estimate that must clear 0 by 3 standard errors."""
    law = a_marginal(spec)
    try:
        return dists.mean_log(law)
    except MomentUnavailableError:
        pass
    rng = (stream or SeedStream(0)).derived(97).rng()
    a, _ = dists.joint_sampler(spec)(rng, 200_000)
    logs = np.log(a)
    m, se = float(logs.mean()), float(logs.std(ddof=1) / math.sqrt(logs.size))
    if abs(m) < 3 * se:
        raise Refusal(
            f"drift E(log A) = {m:.4g} +- {se:.4g} is not resolved from 0 at 3 sigma"
        )
    return m


def estimate_ruin(spec: JointRiskSpec, config: PathConfig) -> RuinEstimate:
    """Monte Carlo ruin probabilities over the capital grid.

    Finite mode estimates P(T <= horizon) exactly per path.  The
    truncated-ultimate mode refuses to run when E(log A) >= 0, because
    accumulated losses then drift upward and ruin is certain at every
    capital level; that situation is a verdict, not an estimate.
    """
    require_valid(spec)
    if config.horizon is None:
        drift = drift_log_a(spec, config.stream)
        if drift >= 0:
            raise Refusal(
                f"truncated-ultimate mode needs E(log A) < 0; got {drift:.4g}. "
                "With nonnegative drift, ultimate ruin is certain at every capital level."
            )
    draw = joint_sampler(spec)
    grid = np.asarray(config.u0_grid, dtype=float)
    ruins = np.zeros(grid.size, dtype=np.int64)
    hard_total = 0
    log_eps = math.log(config.prod_threshold)
    for ci, m in _chunk_sizes(config.n_paths, config.chunk_size):
        rng = config.stream.substream_rng(ci)
        if config.horizon is None:
            ymax, _, hard = _run_chunk_ultimate(
                draw, rng, m, log_eps, config.min_steps, config.max_steps)
            hard_total += hard
        else:
            ymax = _run_chunk_finite(draw, rng, m, config.horizon)
        ruins += (ymax[None, :] > grid[:, None]).sum(axis=1)
    return _estimate_from_counts(
        grid, config.n_paths, ruins,
        mode="finite" if config.horizon is not None else "ultimate",
        horizon=config.horizon, hard_censored=hard_total, stream=config.stream,
    )


def _estimate_from_counts(grid, n_paths, ruins, mode, horizon, hard_censored, stream):
    p_hat, ci_lo, ci_hi, censored = [], [], [], []
    for r in ruins:
        lo, hi = wilson_interval(int(r), n_paths)
        p_hat.append(r / n_paths)
        ci_lo.append(lo)
        ci_hi.append(hi)
        censored.append(n_paths - int(r) if mode == "ultimate" else 0)
    return RuinEstimate(
        u0_grid=tuple(float(u) for u in grid),
        n_paths=n_paths,
        ruins=tuple(int(r) for r in ruins),
        censored=tuple(censored),
        p_hat=tuple(p_hat),
        ci_lo=tuple(ci_lo),
        ci_hi=tuple(ci_hi),
        mode=mode,
        horizon=horizon,
        hard_censored=hard_censored,
        seed_master=stream.master,
        seed_index=stream.index,
    )


def sample_running_max(
    spec: JointRiskSpec, stream: SeedStream, n_paths: int, horizon: int,
    chunk_size: int = 1 << 15,
) -> np.ndarray:
    """i.i.d. samples of the running maximum over a finite horizon."""
    require_valid(spec)
    draw = joint_sampler(spec)
    out = np.empty(n_paths)
    pos = 0
    for ci, m in _chunk_sizes(n_paths, chunk_size):
        ymax = _run_chunk_finite(draw, stream.substream_rng(ci), m, horizon)
        out[pos:pos + m] = ymax
        pos += m
    return out


# ---------------------------------------------------------------------------
# Perpetuity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PerpetuityResult:
    values: np.ndarray          # truncated partial sums
    running_max: np.ndarray     # pathwise running maxima at the same truncation
    hard_censored: int          # paths stopped at max_steps

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values))


def perpetuity_sample(
    spec: JointRiskSpec,
    stream: SeedStream,
    n_paths: int,
    prod_threshold: float = DEFAULT_PROD_THRESHOLD,
    max_steps: int = DEFAULT_MAX_STEPS,
    min_steps: int = DEFAULT_MIN_STEPS,
    chunk_size: int = 1 << 15,
) -> PerpetuityResult:
    """Truncated samples of the infinite discounted-loss series.

    Requires E(log A) < 0 and a verifiably finite E(log+ |B|); truncation
    stops a path once its discount product is below ``prod_threshold``.
    """
    require_valid(spec)
    drift = drift_log_a(spec, stream)
    if drift >= 0:
        raise Refusal(f"perpetuity needs E(log A) < 0; got {drift:.4g}")
    _verify_log_plus_b(spec, stream)
    draw = joint_sampler(spec)
    log_eps = math.log(prod_threshold)
    vals: list[np.ndarray] = []
    maxs: list[np.ndarray] = []
    hard = 0
    for ci, m in _chunk_sizes(n_paths, chunk_size):
        ymax, y, h = _run_chunk_ultimate(
            draw, stream.substream_rng(ci), m, log_eps, min_steps, max_steps)
        vals.append(y)
        maxs.append(ymax)
        hard += h
    return PerpetuityResult(values=np.concatenate(vals),
                            running_max=np.concatenate(maxs), hard_censored=hard)


def _verify_log_plus_b(spec: JointRiskSpec, stream: SeedStream) -> None:
    """E(log+ |B|) < inf.  Any law with a positive tail exponent on either
    side qualifies; unknown structure falls back to an empirical exponent."""
    from . import index as index_mod

    b = b_marginal(spec)
    right = dists.structural_tail_index(b)
    left = dists.structural_left_index(b)
    if right is not None and left is not None:
        return  # both side exponents exist (possibly inf), hence positive in this class
    rng = stream.derived(131).rng()
    est = index_mod.empirical_index(np.abs(b.sample(rng, 100_000)))
    if est.band is not None and est.band[0].float_value() <= 0.05:
        raise Refusal("cannot verify E(log+ |B|) < inf for this loss law")


# ---------------------------------------------------------------------------
# Classical random walk (discount factor identically 1)
# ---------------------------------------------------------------------------


def _block_sampler_f32(b: Dist) -> Callable[[np.random.Generator, int, int], np.ndarray]:
    """(rng, rows, cols) -> float32 increments, with a fast exact path for
    (affine of) Pareto laws; the generic path casts the law's own sampler."""
    if isinstance(b, Pareto):
        scale, shift, gamma = 1.0, 0.0, b.gamma
    elif isinstance(b, Affine) and isinstance(b.child, Pareto):
        scale, shift, gamma = b.scale, b.shift, b.child.gamma
    else:
        def generic(rng, rows, cols):
            return b.sample(rng, rows * cols).reshape(rows, cols).astype(np.float32)
        return generic

    inv_g = np.float32(1.0 / gamma)
    fscale, fshift = np.float32(scale), np.float32(shift)

    def fast(rng, rows, cols):
        e = rng.standard_exponential((rows, cols), dtype=np.float32)
        np.multiply(e, inv_g, out=e)
        np.exp(e, out=e)  # exact Pareto draw: exp(E/gamma)
        if fscale != 1.0:
            np.multiply(e, fscale, out=e)
        if fshift != 0.0:
            np.add(e, fshift, out=e)
        return e

    return fast


def random_walk_sup(
    b: Dist,
    stream: SeedStream,
    horizon: int,
    u0_grid: tuple[float, ...],
    n_paths: int,
    chunk_size: int = 1 << 15,
    block_steps: int = 256,
) -> RuinEstimate:
    """Tail of the running supremum of the plain random walk S_n = sum B_i.

    This is the discount-free special case; it needs a strictly negative
    drift, and its supremum tail decays one power faster than B itself.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    mu = _verified_mean(b, stream)
    if mu >= 0:
        raise Refusal(f"random-walk supremum needs E(B) < 0; got {mu:.4g}")
    sampler = _block_sampler_f32(b)
    grid = np.asarray(sorted(u0_grid), dtype=float)
    counts = np.zeros(grid.size, dtype=np.int64)
    for ci, m in _chunk_sizes(n_paths, chunk_size):
        rng = stream.substream_rng(ci)
        s = np.zeros(m)
        smax = np.zeros(m)
        done = 0
        while done < horizon:
            rows = min(block_steps, horizon - done)
            inc = sampler(rng, rows, m)
            np.cumsum(inc, axis=0, out=inc)
            np.maximum(smax, s + inc.max(axis=0), out=smax)
            s += inc[-1].astype(np.float64)
            done += rows
        counts += (smax[None, :] > grid[:, None]).sum(axis=1)
    return _estimate_from_counts(
        grid, n_paths, counts, mode="random-walk-sup", horizon=horizon,
        hard_censored=0, stream=stream,
    )


def _verified_mean(b: Dist, stream: SeedStream) -> float:
    try:
        return dists.mean(b)
    except MomentUnavailableError:
        rng = stream.derived(211).rng()
        x = b.sample(rng, 200_000)
        m, se = float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))
        if abs(m) < 3 * se:
            raise Refusal(f"drift E(B) = {m:.4g} +- {se:.4g} is not resolved from 0 at 3 sigma")
        return m


# ---------------------------------------------------------------------------
# Distributional recursion cross-check
# ---------------------------------------------------------------------------


def backward_recursion_sample(
    spec: JointRiskSpec, stream: SeedStream, n: int, n_samples: int
) -> np.ndarray:
    """Samples of V_n where V_0 = 0 and V_k = B + A max(V_{k-1}, 0) with
    fresh independent (A, B) each step; V_n matches the running maximum of
    the loss process in distribution."""
    require_valid(spec)
    draw = joint_sampler(spec)
    rng = stream.rng()
    v = np.zeros(n_samples)
    for _ in range(n):
        a, b = draw(rng, n_samples)
        v = b + a * np.maximum(v, 0.0)
    return v
