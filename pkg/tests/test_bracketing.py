import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from photoninhibit import bracketing as B
from photoninhibit.model import RateEstimate
from photoninhibit.rng import RngSpec

STEP = B.MLE_PHI_MAX / (B.MLE_POINTS - 1)


def test_schedule_validation():
    with pytest.raises(ValueError):
        B.BracketSchedule((1, 1), (1, 1))
    with pytest.raises(ValueError):
        B.BracketSchedule((1, 2), (1, 0))
    with pytest.raises(ValueError):
        B.BracketSchedule((1, 2), (3, 3), (4,))
    with pytest.raises(ValueError):
        B.BracketSchedule((1, 2), (3,))
    s = B.BracketSchedule.geometric()
    assert s.times == (1, 5, 25, 125, 625) and s.repeats == (10,) * 5 and s.thresholds == (6,) * 4


def test_zero_flux_all_enabled():
    obs = B.run_lookahead(0.0, B.BracketSchedule.geometric(), passes=3)
    assert obs.enabled.all() and not obs.counts.any()


def test_threshold_three_inhibits_next_cycle():
    s = B.BracketSchedule((1, 2, 4), (3, 3, 3), (3, 3))
    obs = B.run_lookahead(50.0, s)
    assert obs.counts[0].tolist() == [3, 0, 0]
    assert obs.enabled[0].tolist() == [True, False, False]


def test_threshold_rate_derivation():
    # per-cycle rate that leaves a 1% chance of surviving the 5x longer cycle
    assert 1 - np.exp(0.2 * np.log(0.01)) == pytest.approx(0.60, abs=0.005)
    assert B.BracketSchedule.geometric().thresholds[0] / 10 == 0.6


def test_inhibited_cycles_follow_trigger():
    s = B.BracketSchedule.geometric()
    obs = B.run_lookahead(np.geomspace(1e-4, 1, 50), s, passes=4)
    en = obs.enabled
    # once a cycle is off, every later cycle in the pass is off
    assert np.all(en[..., 1:] <= en[..., :-1])
    assert not obs.counts[~en].any()


def test_observation_rejects_counts_on_disabled():
    with pytest.raises(ValueError):
        B.BracketObservation([1, 1], [True, False])


def test_lookahead_never_adds_detections():
    s = B.BracketSchedule.geometric()
    phi = np.geomspace(1e-4, 1, 80)
    a = B.run_lookahead(phi, s, RngSpec(5), passes=5)
    b = B.run_lookahead(phi, s.without_thresholds(), RngSpec(5), passes=5)
    assert np.all(a.counts <= b.counts)
    np.testing.assert_array_equal(a.counts[a.enabled], b.counts[a.enabled])


def test_expected_detections_match_simulation():
    s = B.BracketSchedule.geometric()
    phi = np.full(4000, 0.01)
    obs = B.run_lookahead(phi, s, RngSpec(2))
    sim = obs.detections.mean()
    exact = float(B.expected_pass_detections(0.01, s))
    assert sim == pytest.approx(exact, rel=0.03)


# merge

def test_single_cycle_merge_exact():
    flux, obs, w = B.hdr_merge([[0.3]], [2.0], [[50]])
    assert obs[0] and w[0, 0] == 1.0
    assert flux[0] == pytest.approx(-np.log(0.7) / 2.0, rel=1e-12)


def test_merge_skips_unobserved():
    flux, obs, _ = B.hdr_merge(np.zeros((2, 1)), [1, 2], np.zeros((2, 1)))
    assert not obs[0] and np.isnan(flux[0])


@given(st.floats(1e-3, 4.0), st.lists(st.floats(0.1, 1.0), min_size=1, max_size=4, unique=True))
def test_noiseless_merge_exact(phi, scale):
    times = np.array(sorted(scale))
    rates = -np.expm1(-phi * times)[:, None]
    flux, _, _ = B.hdr_merge(rates, times, np.full((times.size, 1), 1e7))
    assert flux[0] == pytest.approx(phi, rel=1e-6)


def test_two_cycle_merge_consistent():
    s = B.BracketSchedule((0.5, 1.0), (10_000, 10_000))
    obs = B.run_lookahead(np.full(20, 1.0), s, RngSpec(11))
    counts = obs.counts[:, 0, :].T
    est = B.hdr_estimate(counts, np.full_like(counts, 10_000), s.times)
    assert isinstance(est, RateEstimate)
    assert abs(est.exposure.mean() - 1.0) < 0.02


def test_table_weights_toward_longest_exposure():
    # phi T = {0.01, 0.1, 1} with equal repeats; weights for the two longer cycles are 0.14 and 0.85
    H = np.array([0.01, 0.1, 1.0])
    rates = -np.expm1(-H)[:, None]
    _, _, w = B.hdr_merge(rates, H, np.full((3, 1), 1000))
    assert w[1, 0] == pytest.approx(0.14, abs=0.005)
    assert w[2, 0] == pytest.approx(0.85, abs=0.005)
    assert w[0, 0] < w[1, 0] < w[2, 0]


def test_saturated_cycle_dropped_when_others_observed():
    flux, _, w = B.hdr_merge([[0.5], [1.0]], [1.0, 10.0], [[10], [10]])
    assert w[1, 0] == 0.0
    assert flux[0] == pytest.approx(np.log(2.0))
    # a lone saturated cycle is kept as its clamped lower bound
    flux, obs, _ = B.hdr_merge([[1.0]], [1.0], [[10]])
    assert obs[0] and flux[0] == pytest.approx(np.log(20.0))


# MLE and LUT

def test_mle_all_zero():
    s = B.BracketSchedule.geometric()
    obs = B.BracketObservation(np.zeros(5, int), np.ones(5, bool))
    assert B.mle_flux(obs, s) == 0.0


def test_mle_all_inhibited_raises():
    s = B.BracketSchedule.geometric()
    with pytest.raises(ValueError):
        B.mle_flux(B.BracketObservation(np.zeros(5, int), np.zeros(5, bool)), s)


@pytest.mark.parametrize("W", [1, 5, 20])
def test_mle_single_exposure_matches_closed_form(W):
    s = B.BracketSchedule((1.0,), (W,))
    for D in range(W):
        est = B.mle_flux(B.BracketObservation([D], [True]), s)
        assert abs(est - (-np.log1p(-D / W))) <= STEP


def test_mle_full_count_hits_grid_edge():
    s = B.BracketSchedule((1.0,), (4,))
    assert B.mle_flux(B.BracketObservation([4], [True]), s) == B.MLE_PHI_MAX


def test_fibonacci_lut_has_15_entries():
    s = B.BracketSchedule.fibonacci()
    assert s.pass_length == 8 and sum(t * w for t, w in zip(s.times, s.repeats)) == 54
    assert len(B.reachable_observations(s)) == 15
    assert len(B.build_lut(s)) == 15
    assert set(B.reachable_observations(s)) == B.brute_force_observations(s)


def test_single_cycle_single_frame_lut():
    lut = B.build_lut(B.BracketSchedule((1.0,), (1,)))
    assert sorted(lut) == [((0,), (True,)), ((1,), (True,))]


@pytest.mark.parametrize("sched", [
    B.BracketSchedule((1, 3), (4, 3), (2,)),
    B.BracketSchedule((1, 2, 4), (3, 3, 3), (3, 1)),
    B.BracketSchedule((1, 4, 16), (5, 5, 5), (5, None)),
])
def test_lut_enumeration_matches_brute_force(sched):
    dfs = B.reachable_observations(sched)
    assert len(dfs) == len(set(dfs))
    assert set(dfs) == B.brute_force_observations(sched)


def test_lut_equals_direct_mle_and_roundtrips(tmp_path):
    s = B.BracketSchedule((1, 2, 4), (3, 3, 3), (3, 2))
    lut = B.build_lut(s)
    for (counts, enabled), v in lut.items():
        assert v == B.mle_flux(B.BracketObservation(np.array(counts), np.array(enabled)), s)
    path = tmp_path / "lut.csv"
    B.write_lut_csv(lut, s, path)
    assert B.read_lut_csv(path) == lut
    text = path.read_text()
    assert text.startswith("# observation_code")
    assert "observation_code,flux_estimate" in text


def test_observation_code_roundtrip():
    code = B.encode_observation([2, 0, 0], [True, True, False])
    assert code == "2.0.x"
    assert B.decode_observation(code) == ((2, 0, 0), (True, True, False))


def test_enable_probability_and_efficiency_shapes():
    s = B.BracketSchedule.geometric()
    phi = np.geomspace(1e-4, 1, 7)
    p = B.cycle_enable_probability(phi, s)
    assert p.shape == (7, 5) and np.all(p[:, 0] == 1) and np.all(np.diff(p, axis=1) <= 0)
    e = B.bracket_measurement_efficiency(phi, s)
    assert e.shape == (7,) and np.all(e >= 0)
