import math

import numpy as np
import pytest
from scipy import stats

from ruintail.dists import (
    Affine,
    ArchCoupling,
    Atoms,
    Branch,
    BranchMixture,
    IndepProduct,
    Lognormal,
    Normal,
    Pareto,
    PointMass,
    SeedStream,
)
from ruintail.errors import Refusal
from ruintail.process import (
    PathConfig,
    backward_recursion_sample,
    capital_path,
    drift_log_a,
    estimate_ruin,
    perpetuity_sample,
    random_walk_sup,
    ruin_time,
    sample_running_max,
    simulate_y_path,
    wilson_interval,
    _chunk_sizes,
    _run_chunk_ultimate,
)
from ruintail import dists


def const_spec(a, b):
    return BranchMixture((Branch(prob=1.0, driver=PointMass(1.0),
                                 a_const=a, a_coef=0.0, b_const=b, b_coef=0.0),))


GEO = const_spec(0.5, 1.0)


# ---------------------------------------------------------------------------
# paths
# ---------------------------------------------------------------------------


def test_geometric_path_values():
    pr = simulate_y_path(GEO, SeedStream(1), 3)
    assert np.allclose(pr.losses, [1.0, 1.5, 1.75])
    assert np.allclose(pr.running_max, [1.0, 1.5, 1.75])
    assert np.allclose(pr.products, [0.5, 0.25, 0.125])


def test_negative_loss_path():
    spec = BranchMixture((Branch(prob=0.5, driver=PointMass(1.0), a_const=2.0,
                                 a_coef=0.0, b_const=-1.0, b_coef=0.0),
                          Branch(prob=0.5, driver=PointMass(1.0), a_const=2.0,
                                 a_coef=0.0, b_const=-1.0, b_coef=0.0)))
    # invalid (B <= 0 a.s.); exercise the raw recursion arithmetic instead
    a = np.full(3, 2.0)
    b = np.full(3, -1.0)
    prod_before = np.concatenate(([1.0], np.cumprod(a)[:-1]))
    y = np.cumsum(prod_before * b)
    assert list(y) == [-1.0, -3.0, -7.0]
    assert np.maximum.accumulate(y)[-1] == -1.0


def test_ruin_time_geometric():
    assert ruin_time(GEO, SeedStream(1), 1.6) == 3
    cfg = PathConfig(n_paths=1, u0_grid=(1.0,), stream=SeedStream(1), horizon=500)
    assert ruin_time(GEO, SeedStream(1), 2.0, cfg) is None  # sup of losses is 2


def test_capital_path_matches_hand_arithmetic():
    u, t = capital_path(GEO, SeedStream(1), 1.6, 3)
    assert np.allclose(u, [1.2, 0.4, -1.2])
    assert t == 3


def test_first_year_loss_above_capital():
    spec = const_spec(0.5, 5.0)
    assert ruin_time(spec, SeedStream(2), 1.0) == 1
    _, t = capital_path(spec, SeedStream(2), 1.0, 2)
    assert t == 1


def test_ruin_form_equivalence_random_specs():
    rng = np.random.default_rng(41)
    specs = [
        IndepProduct(Lognormal(-0.3, 0.6), Pareto(2.0)),
        IndepProduct(Atoms.of([(0.6, 0.5), (1.2, 0.5)]), Affine(1.0, -0.5, Pareto(2.5))),
        ArchCoupling(0.5, 1.0, Normal(0, 1)),
        BranchMixture((
            Branch(prob=0.5, driver=Pareto(2.0), a_const=0.3, a_coef=0.3,
                   b_const=0.0, b_coef=0.5),
            Branch(prob=0.5, driver=PointMass(1.0), a_const=0.7, a_coef=0.0,
                   b_const=-0.2, b_coef=0.0),
        )),
    ]
    horizon = 60
    for spec in specs:
        for rep in range(40):
            u0 = float(rng.uniform(0.5, 20.0))
            stream = SeedStream(500 + rep, rep)
            pr = simulate_y_path(spec, stream, horizon)
            y_form = int(np.argmax(pr.losses > u0)) + 1 if (pr.losses > u0).any() else None
            _, u_form = capital_path(spec, stream, u0, horizon)
            assert y_form == u_form, (spec, u0)


def test_ruin_time_monotone_in_capital():
    stream = SeedStream(77)
    spec = IndepProduct(Lognormal(-0.3, 0.6), Pareto(2.0))
    cfg = PathConfig(n_paths=1, u0_grid=(1.0,), stream=stream, horizon=400)
    times = [ruin_time(spec, stream, u0, cfg) for u0 in (0.5, 2.0, 8.0, 32.0)]
    cleaned = [t if t is not None else math.inf for t in times]
    assert all(b >= a for a, b in zip(cleaned, cleaned[1:]))


# ---------------------------------------------------------------------------
# the chunked estimator
# ---------------------------------------------------------------------------


def test_estimate_ruin_deterministic_crossing():
    # sum of 1 * 0.5^k crosses 1.9 exactly at year 5
    cfg = PathConfig(n_paths=64, u0_grid=(1.9,), stream=SeedStream(9), horizon=10)
    est = estimate_ruin(GEO, cfg)
    assert est.p_hat == (1.0,)
    cfg4 = PathConfig(n_paths=64, u0_grid=(1.9,), stream=SeedStream(9), horizon=4)
    assert estimate_ruin(GEO, cfg4).p_hat == (0.0,)


def test_estimate_ruin_monotone_and_deterministic():
    spec = IndepProduct(Lognormal(-0.25, 0.5), Pareto(3.0))
    cfg = PathConfig(n_paths=40_000, u0_grid=(2.0, 5.0, 20.0, 100.0),
                     stream=SeedStream(11), horizon=None)
    est1 = estimate_ruin(spec, cfg)
    est2 = estimate_ruin(spec, cfg)
    assert est1 == est2  # identical bytes per seed
    assert all(b <= a for a, b in zip(est1.p_hat, est1.p_hat[1:]))
    assert est1.censored == tuple(est1.n_paths - r for r in est1.ruins)


def test_estimate_ruin_chunk_order_invariance():
    spec = IndepProduct(Lognormal(-0.25, 0.5), Pareto(3.0))
    cfg = PathConfig(n_paths=30_000, u0_grid=(2.0, 10.0), stream=SeedStream(12),
                     horizon=None, chunk_size=1 << 12)
    draw = dists.joint_sampler(spec)
    counts = {}
    for order in (lambda x: x, reversed):
        total = np.zeros(2, dtype=np.int64)
        for ci, m in order(list(_chunk_sizes(cfg.n_paths, cfg.chunk_size))):
            ymax, _, _ = _run_chunk_ultimate(
                draw, cfg.stream.substream_rng(ci), m,
                math.log(cfg.prod_threshold), cfg.min_steps, cfg.max_steps)
            total += (ymax[None, :] > np.array(cfg.u0_grid)[:, None]).sum(axis=1)
        counts[order] = tuple(total)
    assert len(set(counts.values())) == 1
    est = estimate_ruin(spec, cfg)
    assert est.ruins == next(iter(counts.values()))


def test_estimate_ruin_refuses_nonnegative_drift():
    spec = IndepProduct(Lognormal(0.25, 0.5), Pareto(5.0))
    with pytest.raises(Refusal):
        estimate_ruin(spec, PathConfig(n_paths=10, u0_grid=(10.0,), stream=SeedStream(1)))
    # finite horizon has no drift requirement
    est = estimate_ruin(spec, PathConfig(n_paths=100, u0_grid=(10.0,),
                                         stream=SeedStream(1), horizon=5))
    assert est.mode == "finite"


def test_drift_log_a():
    assert drift_log_a(IndepProduct(Lognormal(-0.25, 0.5), Pareto(5.0))) == pytest.approx(-0.25)
    arch = ArchCoupling(0.5, 1.0, Normal(0, 1))
    want = math.log(0.5) - np.euler_gamma - math.log(2.0)
    assert drift_log_a(arch) == pytest.approx(want, rel=1e-9)


# ---------------------------------------------------------------------------
# perpetuity
# ---------------------------------------------------------------------------


def test_perpetuity_geometric_limit():
    res = perpetuity_sample(GEO, SeedStream(3), 128, prod_threshold=1e-8)
    # sum of 0.5^k truncates within prod_threshold * limit of 2
    assert np.all(np.abs(res.values - 2.0) < 1e-8 * 2.0 + 1e-12)
    assert res.hard_censored == 0


def test_perpetuity_below_running_max_pathwise():
    spec = IndepProduct(Lognormal(-0.3, 0.6), Affine(1.0, -0.5, Pareto(2.0)))
    res = perpetuity_sample(spec, SeedStream(4), 20_000)
    assert np.all(res.values <= res.running_max + 1e-12)


def test_perpetuity_refuses_positive_drift():
    spec = IndepProduct(Lognormal(0.1, 0.5), Pareto(5.0))
    with pytest.raises(Refusal):
        perpetuity_sample(spec, SeedStream(5), 10)


# ---------------------------------------------------------------------------
# random walk supremum
# ---------------------------------------------------------------------------


def test_random_walk_refuses_nonnegative_drift():
    with pytest.raises(Refusal):
        random_walk_sup(Pareto(3.0), SeedStream(6), 100, (10.0,), 100)


def test_random_walk_bounded_below_loss_never_exceeds_zero():
    est = random_walk_sup(PointMass(-1.0), SeedStream(6), 200, (0.5, 1.0), 1000)
    assert est.p_hat == (0.0, 0.0)


def test_random_walk_sup_tail_decay():
    b = Affine(1.0, -2.0, Pareto(3.0))  # mean -0.5
    est = random_walk_sup(b, SeedStream(7), 2000, (5.0, 10.0, 20.0), 100_000)
    assert est.p_hat[0] > est.p_hat[1] > est.p_hat[2] > 0
    # crude two-point slope near the predicted power 2
    slope = (math.log(est.p_hat[2]) - math.log(est.p_hat[0])) / (math.log(20.0) - math.log(5.0))
    assert -3.0 < slope < -1.2


def test_random_walk_generic_sampler_matches_fast_path():
    # same law through the generic (cast) route: statistics must agree
    fast = random_walk_sup(Affine(1.0, -2.0, Pareto(3.0)), SeedStream(8), 500,
                           (5.0,), 40_000)
    class _Opaque(Affine):
        pass
    generic = random_walk_sup(_Opaque(1.0, -2.0, Pareto(3.0)), SeedStream(8), 500,
                              (5.0,), 40_000)
    se = 2.0 * math.sqrt(fast.p_hat[0] * (1 - fast.p_hat[0]) / 40_000)
    assert abs(fast.p_hat[0] - generic.p_hat[0]) < 4 * se + 1e-4


# ---------------------------------------------------------------------------
# distributional recursion
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("n", [2, 5])
def test_running_max_matches_backward_recursion(n):
    spec = ArchCoupling(0.5, 1.0, Normal(0, 1))
    fwd = sample_running_max(spec, SeedStream(900, 1), n_paths=100_000, horizon=n)
    bwd = backward_recursion_sample(spec, SeedStream(900, 2), n, 100_000)
    _, p = stats.ks_2samp(fwd, bwd)
    assert p > 1e-3


def test_wilson_interval_edges():
    lo, hi = wilson_interval(0, 100)
    assert lo == 0.0 and 0 < hi < 0.05
    lo, hi = wilson_interval(100, 100)
    assert hi == 1.0 and lo > 0.95
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi
