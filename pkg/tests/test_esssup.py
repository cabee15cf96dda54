import numpy as np
import pytest

from ruintail.dists import (
    ArchCoupling,
    Atoms,
    Branch,
    BranchMixture,
    IndepProduct,
    Lognormal,
    Normal,
    Pareto,
    PointMass,
)
from ruintail.errors import InvalidSpecError
from ruintail.esssup import (
    boundedness_check,
    esssup_sequence,
    esssup_step,
    esssup_step_detail,
    unbounded_sup,
)
from ruintail.extreal import INF, ExtReal


def const_spec(a, b):
    return BranchMixture((Branch(prob=1.0, driver=PointMass(1.0),
                                 a_const=a, a_coef=0.0, b_const=b, b_coef=0.0),))


def escape_after(n):
    """Bounded for n years, then essentially unbounded: pay 1 with prob 1/2,
    or couple A to a heavy driver with B = -n * A."""
    return BranchMixture((
        Branch(prob=0.5, driver=PointMass(1.0), a_const=1.0, a_coef=0.0,
               b_const=1.0, b_coef=0.0),
        Branch(prob=0.5, driver=Pareto(2.5), a_const=0.0, a_coef=1.0,
               b_const=0.0, b_coef=-float(n)),
    ))


def test_step_geometric():
    assert esssup_step(const_spec(0.5, 1.0), 2.0) == ExtReal.of(2.0)


def test_step_escape_coefficient_sign():
    spec = escape_after(3)
    # at c = 4 the heavy branch has driver coefficient c - 3 = 1 > 0
    assert esssup_step(spec, 4.0).is_inf
    assert esssup_step(spec, 3.0) == ExtReal.of(4.0)
    assert esssup_step(spec, INF).is_inf


def test_step_all_nonpositive_is_finite():
    spec = BranchMixture((
        Branch(prob=0.5, driver=Pareto(2.0), a_const=0.5, a_coef=0.0,
               b_const=1.0, b_coef=-1.0),
        Branch(prob=0.5, driver=PointMass(1.0), a_const=0.25, a_coef=0.0,
               b_const=0.5, b_coef=0.0),
    ))
    val, branch = esssup_step_detail(spec, 1.0)
    assert not val.is_inf
    # branch 0 peaks at its driver floor: 1.5 - 1 = 0.5; branch 1 is 0.5 + 0.25
    assert val == ExtReal.of(0.75)
    assert branch == 1


def test_sequence_escape_example():
    report = esssup_sequence(escape_after(3), 10)
    vals = [v.to_json_obj() for v in report.values]
    assert vals == [0.0, 1.0, 2.0, 3.0, 4.0, "inf"]
    assert report.verdict == "unbounded"
    assert report.unbounded_reason == "hit-infinity"
    assert report.first_infinite == 5


def test_sequence_geometric_closed_form():
    report = esssup_sequence(const_spec(0.5, 1.0), 20)
    for k, v in enumerate(report.values):
        assert v.finite == pytest.approx(2.0 * (1.0 - 0.5**k))
    assert report.verdict == "bounded"
    assert report.witness == pytest.approx(2.0)


def test_sequence_rejects_invalid_spec():
    with pytest.raises(InvalidSpecError):
        esssup_sequence(const_spec(0.5, -1.0), 5)  # B <= 0 a.s.


def test_sequence_monotone():
    rng = np.random.default_rng(23)
    for _ in range(20):
        spec = _random_mixture(rng)
        report = esssup_sequence(spec, 50)
        vals = [v.float_value() for v in report.values]
        assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_boundedness_geometric_witness_exact():
    verdict = boundedness_check(const_spec(0.5, 1.0))
    assert verdict.bounded and verdict.witness == pytest.approx(2.0)


def test_boundedness_escape_unbounded():
    assert not boundedness_check(escape_after(3)).bounded


def test_boundedness_expanding_discount_with_positive_loss():
    spec = BranchMixture((
        Branch(prob=0.5, driver=PointMass(1.0), a_const=1.5, a_coef=0.0,
               b_const=0.5, b_coef=0.0),
        Branch(prob=0.5, driver=PointMass(1.0), a_const=0.5, a_coef=0.0,
               b_const=0.1, b_coef=0.0),
    ))
    assert not boundedness_check(spec).bounded


def test_witness_validity_invariant():
    rng = np.random.default_rng(29)
    checked = 0
    for _ in range(60):
        spec = _random_mixture(rng)
        verdict = boundedness_check(spec)
        if not verdict.bounded:
            continue
        checked += 1
        residual = esssup_step(spec, verdict.witness).float_value() - verdict.witness
        assert residual <= 1e-12, (spec, verdict.witness, residual)
    assert checked >= 5


def test_conditions_two_and_three_agree():
    # feasibility of the witness system must match the sequence behaviour
    rng = np.random.default_rng(31)
    n_bounded = n_unbounded = 0
    for _ in range(80):
        spec = _random_mixture(rng)
        verdict = boundedness_check(spec)
        report = esssup_sequence(spec, 10_000)
        vals = [v.float_value() for v in report.values]
        if verdict.bounded:
            n_bounded += 1
            assert not np.isinf(vals).any()
            assert vals[-1] <= verdict.witness + 1e-9
            assert vals[-1] - vals[-2] < 1e-9  # Cauchy by N = 1e4
        else:
            n_unbounded += 1
            diverged = np.isinf(vals[-1]) or (vals[-1] - vals[-2]) >= 1e-9
            assert diverged, spec
    assert n_bounded >= 10 and n_unbounded >= 10


def test_boundedness_for_other_spec_kinds():
    bounded = IndepProduct(Atoms.of([(0.5, 0.5), (0.9, 0.5)]),
                           Atoms.of([(1.0, 0.5), (-0.5, 0.5)]))
    v = boundedness_check(bounded)
    assert v.bounded and v.witness == pytest.approx(1.0 / (1.0 - 0.9))
    assert unbounded_sup(IndepProduct(Lognormal(-0.25, 0.5), Pareto(5.0)))
    assert unbounded_sup(ArchCoupling(0.5, 1.0, Normal(0, 1)))
    cap = ArchCoupling(0.5, 1.0, Atoms.of([(1.0, 0.5), (-1.0, 0.5)]))
    assert boundedness_check(cap).bounded  # lam * sup(Z^2) = 0.5 < 1


def test_hypothesis_notes_outside_theorem():
    spec = const_spec(0.5, 1.0)  # P(A > 1) = 0
    verdict = boundedness_check(spec)
    assert any("P(A > 1)" in n for n in verdict.hypothesis_notes)


def _random_mixture(rng) -> BranchMixture:
    while True:
        k = int(rng.integers(1, 4))
        raw = rng.uniform(0.2, 1.0, k)
        branches = []
        any_b_pos = False
        for j in range(k):
            use_pareto = rng.random() < 0.5
            driver = Pareto(float(rng.uniform(0.8, 4.0))) if use_pareto else PointMass(1.0)
            a_const = float(rng.uniform(0.05, 1.4))
            a_coef = float(rng.uniform(0.0, 1.0)) if use_pareto else 0.0
            b_const = float(rng.uniform(-1.5, 1.5))
            b_coef = float(rng.uniform(-1.5, 1.5)) if use_pareto else 0.0
            if (b_coef if use_pareto else 0.0) > 0 or b_const + b_coef > 0:
                any_b_pos = True
            branches.append(Branch(prob=float(raw[j] / raw.sum()), driver=driver,
                                   a_const=a_const, a_coef=a_coef,
                                   b_const=b_const, b_coef=b_coef))
        if any_b_pos:
            return BranchMixture(tuple(branches))
