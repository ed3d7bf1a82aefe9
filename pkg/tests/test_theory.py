import math
from statistics import NormalDist

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from copconf.theory import (
    BoundReport,
    ComparatorSequence,
    Dist,
    adversarial_stream,
    certify_stream,
    check_boundedness,
    check_convergence,
    check_coverage_bound,
    check_refinement_improvement,
    check_regret_coverage,
    delta_norms,
    expected_quantile_loss,
    quantile_loss,
    robbins_monro_rates,
    rolling_quantile_comparator,
    true_quantile,
    worst_case_streams,
)
from copconf.trackers import TrackerConfig, Variant, track


def test_quantile_loss_examples():
    assert quantile_loss(0.1, 1.0) == pytest.approx(0.9)
    assert quantile_loss(0.1, 0.0) == 0.0
    assert quantile_loss(0.1, -2.0) == pytest.approx(0.2)


@given(st.floats(0.01, 0.99), st.floats(-50, 50), st.floats(-50, 50))
def test_quantile_loss_convex_and_nonnegative(alpha, a, b):
    mid = quantile_loss(alpha, (a + b) / 2)
    assert mid <= (quantile_loss(alpha, a) + quantile_loss(alpha, b)) / 2 + 1e-9
    assert quantile_loss(alpha, a) >= 0.0


def test_bound_report_slack_rule():
    ok = BoundReport.from_prefixes("x", [1, 2], [1.0, 2.0 + 5e-10], [1.0, 2.0])
    assert ok.satisfied and ok.lhs == pytest.approx(2.0 + 5e-10)
    bad = BoundReport.from_prefixes("x", [1, 2], [1.0, 2.0 + 2e-9], [1.0, 2.0])
    assert not bad.satisfied


def test_delta_norm_for_inverse_sqrt_rates():
    eta = 0.7 / np.sqrt(np.arange(1, 501))
    assert np.allclose(delta_norms(eta), 1 / eta)


def test_coverage_bound_constant_rate_form():
    s = np.random.default_rng(0).uniform(0, 4, 3000)
    eta = 0.3
    traj = track(s, TrackerConfig(variant=Variant.COP, alpha=0.1, eta=eta), rates=np.full(len(s), eta))
    rep = check_coverage_bound(traj)
    assert rep.satisfied
    t, lhs, rhs = rep.prefixes[-1]
    b, m = s.max(), 0.9
    assert rhs == pytest.approx((b + (2 + 6 * m) * eta) / (t * eta))
    assert lhs < 0.02 and rhs < 0.01 * 10


@pytest.mark.parametrize("seed", range(12))
def test_adversarial_streams_certified(seed):
    s, rates = adversarial_stream(seed)
    assert s.min() >= 0 and s.max() == 10.0
    assert np.all(rates > 0) and np.sum(np.diff(rates) > 0) <= 10
    for rep in certify_stream(s, rates):
        assert rep.satisfied, rep.row()


def test_worst_case_streams():
    for name, s in worst_case_streams().items():
        for rep in certify_stream(s, np.full(len(s), 0.5)):
            assert rep.satisfied, (name, rep.row())
    miss = worst_case_streams()["all_miss"]
    traj = track(miss, TrackerConfig(variant=Variant.COP, alpha=0.1, eta=1.0), rates=np.full(len(miss), 0.5))
    assert traj.q.max() > 9.0  # the radius really is pushed up to B


def test_boundedness_requires_initial_radius_in_range():
    s = np.random.default_rng(1).uniform(0, 1, 50)
    traj = track(s, TrackerConfig(variant=Variant.OGD, alpha=0.1, eta=0.1, initial_radius=5.0))
    with pytest.raises(ValueError):
        check_boundedness(traj)
    with pytest.raises(ValueError):
        check_coverage_bound(_nan_traj())


def _nan_traj():
    traj = track([1.0, 2.0], TrackerConfig(variant=Variant.OGD))
    traj.scores = np.array([1.0, math.nan])
    return traj


def test_signed_scores_are_shifted():
    s = np.random.default_rng(2).normal(size=400)
    traj = track(s, TrackerConfig(variant=Variant.COP, alpha=0.05, eta=0.2), rates=np.full(400, 0.2))
    assert check_coverage_bound(traj).satisfied
    assert check_boundedness(traj).satisfied


def test_regret_bound_degenerate_stream():
    s = np.zeros(100)
    traj = track(s, TrackerConfig(variant=Variant.COP, alpha=0.1, eta=0.5), rates=np.full(100, 0.5))
    rep = check_regret_coverage(traj, ComparatorSequence((0.0,) * 100), 0.5)
    assert rep.satisfied and rep.slack >= 0


@pytest.mark.parametrize("scale", [0.0, 0.5, 1.0])
def test_regret_bound_random_streams(scale):
    rng = np.random.default_rng(int(scale * 10))
    for _ in range(5):
        s = np.abs(rng.normal(0, 2, 300)) + 3 * (np.arange(300) > 150)
        eta = float(rng.choice([0.05, 0.2, 1.0]))
        traj = track(s, TrackerConfig(variant=Variant.COP, alpha=0.1, eta=eta, scale=scale), rates=np.full(300, eta))
        for comp in (
            rolling_quantile_comparator(s, 0.1),
            ComparatorSequence((float(np.quantile(s, 0.9)),) * 300),
            ComparatorSequence((0.0,) * 300),
        ):
            assert check_regret_coverage(traj, comp, eta).satisfied


def test_regret_literal_form_is_reported_separately():
    s = np.abs(np.random.default_rng(9).normal(0, 2, 300)) + 3
    traj = track(s, TrackerConfig(variant=Variant.COP, alpha=0.1, eta=0.05), rates=np.full(300, 0.05))
    comp = ComparatorSequence((float(np.quantile(s, 0.9)),) * 300)
    averaged = check_regret_coverage(traj, comp, 0.05)
    literal = check_regret_coverage(traj, comp, 0.05, literal=True)
    assert averaged.satisfied
    assert literal.rhs != averaged.rhs


def test_regret_input_errors():
    traj = track(np.ones(10), TrackerConfig(variant=Variant.OGD, eta=0.1))
    with pytest.raises(ValueError):
        check_regret_coverage(traj, ComparatorSequence((0.0,) * 9), 0.1)
    with pytest.raises(ValueError):
        check_regret_coverage(traj, ComparatorSequence((0.0,) * 10), 0.0)
    with pytest.raises(ValueError):
        ComparatorSequence((0.0, math.inf))


def test_true_quantiles():
    assert true_quantile(Dist.UNIFORM01, 0.9) == 0.9
    assert true_quantile(Dist.NORMAL01, 0.9) == pytest.approx(1.2816, abs=1e-4)


def test_robbins_monro_guard():
    with pytest.raises(ValueError):
        robbins_monro_rates(10, 0.5)
    assert robbins_monro_rates(4, 1.0).tolist() == [1.0, 0.5, 1 / 3, 0.25]


def test_convergence_short_horizon():
    res = check_convergence(Dist.UNIFORM01, 0.1, 0.6, 20_000, seed=0)
    assert res["q_star"] == 0.9 and res["gap"] < 0.05


def test_convergence_gap_shrinks_with_horizon():
    gaps = {h: np.mean([check_convergence(Dist.UNIFORM01, 0.1, 0.6, h, s)["gap"] for s in range(10)]) for h in (2_000, 32_000)}
    assert gaps[32_000] <= gaps[2_000]


def test_expected_loss_closed_form_uniform():
    # E l(U - q) = (1 - q)^2 / 2 - alpha (1/2 - q) for U ~ U(0, 1)
    for q in (0.2, 0.8, 0.85, 0.9):
        want = (1 - q) ** 2 / 2 - 0.1 * (0.5 - q)
        assert expected_quantile_loss(Dist.UNIFORM01, 0.1, q) == pytest.approx(want, abs=1e-9)


def test_refinement_examples():
    r = check_refinement_improvement(Dist.UNIFORM01, 0.1, 0.5, q_hat=0.8)
    assert r["q"] == pytest.approx(0.85)
    assert r["loss_refined"] < r["loss_primary"]
    r = check_refinement_improvement(Dist.NORMAL01, 0.1, 0.2, q_hat=1.5)
    assert r["loss_refined"] < r["loss_primary"]
    qs = NormalDist().inv_cdf(0.9)
    r = check_refinement_improvement(Dist.NORMAL01, 0.1, 0.2, q_hat=qs)
    assert r["loss_refined"] == r["loss_primary"]
    with pytest.raises(ValueError):
        check_refinement_improvement(Dist.UNIFORM01, 0.1, 2.0)
    drawn = check_refinement_improvement(Dist.NORMAL01, 0.1, 0.5, seed=3)
    assert drawn["loss_refined"] <= drawn["loss_primary"]
