import math

import numpy as np
import pytest

from ruintail.dists import (
    Affine,
    ArchCoupling,
    Atoms,
    Branch,
    BranchMixture,
    IndepProduct,
    Lognormal,
    Max,
    Min,
    MinWithParetoIndep,
    Normal,
    Pareto,
    PointMass,
    PosPower,
    SeedStream,
    SumIndep,
    analytic_fractional_moment,
    sample_marginal,
)
from ruintail.errors import EmptyEventError
from ruintail.extreal import INF, ExtReal
from ruintail import index as index_mod
from ruintail.index import (
    DEGENERATE_POSITIVE_PART,
    EstimatorConfig,
    HEAVY_UNCERTAINTY,
    NO_DECAY,
    analytic_index,
    check_law,
    conditional_index,
    empirical_index,
    h_function,
    lundberg_index,
)


# ---------------------------------------------------------------------------
# analytic index
# ---------------------------------------------------------------------------


def test_analytic_rules():
    assert analytic_index(Pareto(2.0)).value == ExtReal.of(2.0)
    assert analytic_index(Max(Pareto(2.0), Pareto(3.0))).value == ExtReal.of(2.0)
    assert analytic_index(MinWithParetoIndep(Pareto(2.0), 3.0)).value == ExtReal.of(5.0)
    assert analytic_index(SumIndep(Pareto(2.0), Pareto(3.0))).value == ExtReal.of(2.0)
    assert analytic_index(PosPower(2.0, Pareto(3.0))).value == ExtReal.of(1.5)
    assert analytic_index(Atoms.of([(0.5, 0.5), (4.0, 0.5)])).value.is_inf
    assert analytic_index(Lognormal(0, 1)).value.is_inf


def test_affine_invariance_randomized():
    rng = np.random.default_rng(5)
    for _ in range(25):
        gamma = rng.uniform(0.5, 5.0)
        a, b = rng.uniform(0.1, 10.0), rng.uniform(-5.0, 5.0)
        base = analytic_index(Pareto(gamma)).value
        assert analytic_index(Affine(a, b, Pareto(gamma))).value == base


def test_power_rule_randomized():
    rng = np.random.default_rng(6)
    for _ in range(25):
        gamma = rng.uniform(0.5, 5.0)
        p = rng.uniform(0.25, 4.0)
        got = analytic_index(PosPower(p, Pareto(gamma))).value
        assert got.finite * p == pytest.approx(gamma, rel=1e-12)


def test_min_general_cases():
    # a child with all moments dominates the min, so the min inherits infinity
    assert analytic_index(Min(Lognormal(0, 1), Pareto(2.0))).value.is_inf
    assert analytic_index(Min(PointMass(5.0), Lognormal(0, 1))).value.is_inf
    # a bare Pareto child has an exact-limit tail: the log-tails add
    assert analytic_index(Min(Pareto(2.0), Pareto(3.0))).value == ExtReal.of(5.0)
    # two shifted heavy children: the algebra declines rather than guessing
    und = Min(Affine(1.0, 1.0, Pareto(2.0)), Affine(1.0, 1.0, Pareto(3.0)))
    assert analytic_index(und) is None


# ---------------------------------------------------------------------------
# empirical index
# ---------------------------------------------------------------------------


def test_empirical_pareto_two():
    x = sample_marginal(Pareto(2.0), SeedStream(31), 1_000_000)
    est = empirical_index(x)
    assert abs(est.value.finite - 2.0) < 0.15
    lo, hi = est.band
    assert lo <= est.value <= hi
    assert est.k_used >= 200 and est.threshold > 1.0


def test_empirical_hill_variant():
    x = sample_marginal(Pareto(1.5), SeedStream(32), 500_000)
    est = empirical_index(x, EstimatorConfig(estimator="hill"))
    assert abs(est.value.finite - 1.5) < 0.15


def test_empirical_all_negative_degenerate():
    est = empirical_index(-np.ones(10_000))
    assert est.value.is_inf
    assert DEGENERATE_POSITIVE_PART in est.flags


def test_empirical_lognormal_flags_heavy_uncertainty():
    # the true exponent is infinite; a finite point estimate must carry the
    # lighter-than-power warning and an unbounded band upper end
    x = sample_marginal(Lognormal(0, 1), SeedStream(33), 1_000_000)
    est = empirical_index(x)
    assert HEAVY_UNCERTAINTY in est.flags
    assert est.band[1].is_inf
    assert analytic_index(Lognormal(0, 1)).value.is_inf
    assert est.value.finite > 3.0  # hazard of the top percent sits well above 3


def test_empirical_no_false_heavy_flag_on_exact_power_law():
    x = sample_marginal(Pareto(2.0), SeedStream(34), 1_000_000)
    assert HEAVY_UNCERTAINTY not in empirical_index(x).flags


# ---------------------------------------------------------------------------
# conditional index
# ---------------------------------------------------------------------------


def test_conditional_full_mask_matches_unconditional():
    x = sample_marginal(Pareto(2.0), SeedStream(35), 100_000)
    full = conditional_index(x, np.ones(x.size, dtype=bool))
    assert full == empirical_index(x)


def test_conditional_pareto_above_level():
    # oracle: the conditional law of W given W > 10 is 10 * W in distribution
    x = sample_marginal(Pareto(2.0), SeedStream(36), 2_000_000)
    est = conditional_index(x, x > 10.0)
    oracle = empirical_index(10.0 * sample_marginal(Pareto(2.0), SeedStream(37), 200_000))
    assert abs(est.value.finite - 2.0) < 0.3
    assert abs(est.value.finite - oracle.value.finite) < 0.3


def test_conditional_negative_only_mask():
    x = np.concatenate([-np.ones(5000), np.full(5000, 2.0)])
    est = conditional_index(x, x < 0)
    assert est.value.is_inf and DEGENERATE_POSITIVE_PART in est.flags


def test_conditional_empty_event_raises():
    with pytest.raises(EmptyEventError):
        conditional_index(np.ones(10), np.zeros(10, dtype=bool))


# ---------------------------------------------------------------------------
# Lundberg-type index
# ---------------------------------------------------------------------------


def test_lundberg_lognormal_closed_form():
    # root of exp(mu s + sigma^2 s^2 / 2) = 1 is -2 mu / sigma^2
    got = lundberg_index(Lognormal(-0.5, 1.0))
    assert got.value.finite == pytest.approx(1.0, abs=1e-7)
    got = lundberg_index(Lognormal(-0.25, 0.5))
    assert got.value.finite == pytest.approx(2.0, abs=1e-7)


def test_lundberg_bounded_below_one():
    assert lundberg_index(PointMass(0.5)).value.is_inf


def test_lundberg_pareto_no_decay():
    got = lundberg_index(Pareto(3.0))
    assert got.value == ExtReal.of(0.0)
    assert NO_DECAY in got.flags


def test_lundberg_residual_small_at_interior_root():
    for law in (Lognormal(-0.5, 1.0), Atoms.of([(0.5, 0.8), (2.2, 0.2)]),
                Affine(0.4, 0.0, Pareto(3.0))):
        got = lundberg_index(law)
        if got.value.is_inf or got.value.finite == 0.0:
            continue
        residual = abs(analytic_fractional_moment(law, got.value.finite).finite - 1.0)
        assert residual <= 1e-6, law


def test_lundberg_never_exceeds_moment_index():
    laws = [Lognormal(-0.5, 1.0), PointMass(0.5), Affine(0.4, 0.0, Pareto(3.0)),
            Atoms.of([(0.5, 0.8), (2.2, 0.2)]), Pareto(2.0)]
    for law in laws:
        lb = lundberg_index(law).value
        mi = analytic_index(law).value
        assert lb <= mi, law


def test_lundberg_from_samples():
    x = sample_marginal(Lognormal(-0.5, 1.0), SeedStream(38), 400_000)
    got = lundberg_index(x)
    assert abs(got.value.finite - 1.0) < 0.1
    assert index_mod.MC_SAMPLE_SIZE in got.flags


def test_lundberg_arch_marginal_matches_root_oracle():
    # quadrature + bisection oracle computed independently: 2.365149664976475
    from ruintail.dists import ScaledSquare, a_marginal

    got = lundberg_index(a_marginal(ArchCoupling(0.5, 1.0, Normal(0, 1))))
    assert got.value.finite == pytest.approx(2.365149664976475, abs=1e-6)


# ---------------------------------------------------------------------------
# h function
# ---------------------------------------------------------------------------


def _two_tail_mixture(alpha=3.0, beta=1.5):
    return BranchMixture((
        Branch(prob=0.5, driver=Pareto(alpha), a_const=0.0, a_coef=1.0,
               b_const=10.0, b_coef=-1.0),
        Branch(prob=0.5, driver=Pareto(beta), a_const=0.0, a_coef=1.0,
               b_const=10.0, b_coef=-2.0),
    ))


def test_h_double_jump_example():
    spec = _two_tail_mixture()
    values = {c: h_function(spec, c).value for c in (0.5, 1.0, 1.5, 2.0, 2.5)}
    assert values[0.5].is_inf and values[1.0].is_inf
    assert values[1.5] == ExtReal.of(3.0)
    assert values[2.0] == ExtReal.of(3.0)
    assert values[2.5] == ExtReal.of(1.5)


def test_h_constant_for_independent_pair():
    spec = IndepProduct(Pareto(3.0), Pareto(2.0))
    for c in (0.5, 1.0, 10.0, 1000.0):
        assert h_function(spec, c).value == ExtReal.of(2.0)
    assert h_function(spec, 0.0).value == ExtReal.of(2.0)


def test_h_at_zero_is_loss_index():
    spec = IndepProduct(Pareto(3.0), Pareto(1.2))
    assert h_function(spec, 0.0).value == ExtReal.of(1.2)
    spec2 = _two_tail_mixture()
    assert h_function(spec2, 0.0).value.is_inf  # both branch losses bounded above


def test_h_monotone_on_random_mixtures():
    rng = np.random.default_rng(17)
    for _ in range(20):
        branches = []
        k = rng.integers(1, 4)
        raw = rng.uniform(0.2, 1.0, k)
        for j in range(k):
            branches.append(Branch(
                prob=float(raw[j] / raw.sum()),
                driver=Pareto(float(rng.uniform(0.8, 4.0))),
                a_const=float(rng.uniform(0.1, 1.0)),
                a_coef=float(rng.uniform(0.0, 2.0)),
                b_const=float(rng.uniform(-1.0, 2.0)),
                b_coef=float(rng.uniform(-2.0, 2.0)),
            ))
        spec = BranchMixture(tuple(branches))
        grid = [0.0, 0.3, 0.7, 1.1, 2.0, 5.0, 50.0]
        vals = [h_function(spec, c).value.float_value() for c in grid]
        assert all(v1 >= v2 for v1, v2 in zip(vals, vals[1:])), spec


def test_h_empirical_fallback():
    spec = IndepProduct(Min(Affine(1.0, 1.0, Pareto(2.0)), Affine(1.0, 1.0, Pareto(3.0))),
                        Pareto(1.5))
    est = h_function(spec, 1.0, stream=SeedStream(50), n_samples=300_000)
    assert est.method == "empirical"
    assert abs(est.value.finite - 1.5) < 0.35


# ---------------------------------------------------------------------------
# law checks
# ---------------------------------------------------------------------------


def test_law_examples():
    assert check_law("L2.3", (Pareto(2.0), Pareto(3.0)), "analytic").passed
    assert check_law("L2.2.1", Pareto(2.5), "analytic", param=7.0).passed
    assert check_law("I1<=I", Lognormal(-0.5, 1.0), "analytic").passed


def test_law_unknown_id_rejected():
    with pytest.raises(ValueError):
        check_law("L9.9", Pareto(2.0), "analytic")


def test_law_inexpressible_in_analytic_mode():
    with pytest.raises(index_mod.InexpressibleOperandError):
        check_law("E2.8-bound", IndepProduct(Lognormal(-0.5, 1), Pareto(2.0)), "analytic")


def test_law_corpus_analytic_all_pass():
    corpus = index_mod.default_law_corpus(20260809, 50)
    assert len(corpus) >= 50
    stream = SeedStream(1, 0)
    for law, ops, param, modes in corpus:
        if "analytic" not in modes:
            continue
        rep = check_law(law, ops, "analytic", stream=stream, param=param)
        assert rep.passed, (law, rep.lhs.value, rep.rhs.value)


def test_sum_inequality_on_dependent_pairs():
    # dependent within-year risks: the sum's exponent still dominates the
    # min of the pair within twice the band width
    spec = ArchCoupling(0.5, 1.0, Normal(0, 1))
    rep = check_law("L2.4-ineq", spec, "empirical", stream=SeedStream(8), n_samples=100_000)
    assert rep.passed
