import numpy as np
import pytest

from schrodinger_lab import sweeps as sw
from schrodinger_lab.errors import ContractError, DomainError
from schrodinger_lab.field_core import FrequencySupport, GridSpec, l2_norm, random_bandlimited
from schrodinger_lab.propagator import TimeWindow, counterexample_datum


def test_targets_and_thresholds():
    assert sw.counterexample_exponent(3.2) == pytest.approx(11 / 32)
    assert sw.counterexample_exponent(2.0) == pytest.approx(0.25)
    assert sw.threshold_exponent(3.2) == pytest.approx(0.375)
    assert sw.threshold_exponent(4.0) == pytest.approx(0.5)
    assert sw.threshold_exponent(4.0, eps=0.01) == pytest.approx(0.52)


def test_exponent_fit_recovers_power_law():
    x = [16.0, 32.0, 64.0, 128.0]
    fit = sw.ExponentFit.fit(x, [3.0 * v**0.4 for v in x])
    assert fit.slope == pytest.approx(0.4, abs=1e-12)
    assert fit.residual <= 1e-12
    assert np.allclose(fit.pairwise(), 0.4)
    assert set(fit.to_dict()) >= {"slope", "intercept", "samples", "pairwise"}
    with pytest.raises(DomainError):
        sw.ExponentFit.fit([1.0], [2.0])


def test_sweep_config_validation():
    assert sw.SweepConfig().p == 3.2
    with pytest.raises(DomainError):
        sw.SweepConfig(family="other")


def test_counterexample_sweep_needs_two_values():
    with pytest.raises(DomainError):
        sw.counterexample_sweep([16.0])


@pytest.fixture(scope="module")
def small_datum():
    return counterexample_datum(16.0)


def test_maximal_ratio_homogeneous(small_datum):
    win = TimeWindow.dyadic(2.0 / 16, 4, 16)
    a = sw.maximal_ratio(small_datum, 3.2, 0.0, win)
    b = sw.maximal_ratio(small_datum.scale(7.5), 3.2, 0.0, win)
    assert b == pytest.approx(a, rel=1e-12)
    with pytest.raises(ContractError):
        sw.maximal_ratio(small_datum.scale(0.0), 3.2, 0.0, win)


def test_maximal_ratio_grows_under_refinement(small_datum):
    win = TimeWindow.dyadic(2.0 / 16, 4, 8)
    vals = []
    for _ in range(3):
        vals.append(sw.maximal_ratio(small_datum, 3.2, 0.0, win))
        win = win.refined()
    assert vals[0] <= vals[1] <= vals[2]


def test_sobolev_weight_lowers_ratio(small_datum):
    win = TimeWindow.dyadic(2.0 / 16, 4, 8)
    assert sw.maximal_ratio(small_datum, 3.2, 0.3, win) < sw.maximal_ratio(small_datum, 3.2, 0.0, win)


def test_annulus_datum(rng):
    f = sw.annulus_datum(8.0, rng)
    assert l2_norm(f) == pytest.approx(1.0, rel=1e-12)
    kx, ky = f.grid.freq_mesh()
    k = np.hypot(kx, ky)
    live = np.abs(f.values) > 0
    assert live.any() and k[live].min() >= 4.0 and k[live].max() <= 16.0
    assert f.grid.nyquist >= 2 * 8.0


@pytest.mark.parametrize("R", [16.0, 64.0])
def test_rescaling_identities(R, rng):
    g = random_bandlimited(GridSpec(64.0, 64), FrequencySupport.annulus(1.0), rng)
    e1, e2 = sw.rescaling_errors(g, R, rng)
    assert e1 <= 1e-6
    assert e2 <= 1e-10


def test_reduction_chain(rng):
    g = random_bandlimited(GridSpec(64.0, 64), FrequencySupport.annulus(1.0), rng)
    rep = sw.reduction_chain_check(g, 16.0, p=3.2, s=0.5)
    assert rep.passed and rep.threshold == pytest.approx(0.375)
    # s above the threshold: geometric series converges
    a, b, c = rep.series_partial_sums
    assert c - b <= b - a and c < 1 / (1 - 2 ** (0.375 - 0.5))
    below = sw.reduction_chain_check(g, 16.0, p=3.2, s=0.3)
    assert below.series_partial_sums[2] > 2 * below.series_partial_sums[1]
    ball = random_bandlimited(GridSpec(64.0, 64), FrequencySupport.unit_ball(), rng)
    with pytest.raises(ContractError):
        sw.reduction_chain_check(ball, 16.0)


def test_maximal_sweep_is_descriptive():
    rep = sw.maximal_sweep([4.0, 8.0], 3.2, seed=0, samples_per_R=4)
    d = rep.to_dict()
    assert d["gated"] is False
    assert d["reference_exponent"] == pytest.approx(2 / 3.2 - 5 / 8)
    assert len(d["ratios"]) == 2 and all(r > 0 for r in d["ratios"])
    again = sw.maximal_sweep([4.0, 8.0], 3.2, seed=0, samples_per_R=4)
    assert again.ratios == rep.ratios
