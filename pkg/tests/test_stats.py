import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from qdsps.config import Scenario
from qdsps.emission import Blinking, DetectorModel, generate_click_stream
from qdsps.stats import (
    ClickStream,
    CoincidenceHistogram,
    G2Estimator,
    brute_force_pairs,
    correlate,
    fit_envelope,
    g2_zero,
    sidecar_path,
    split_hbt,
)

T = 12195.12


def pulsed_stream(photons_per_pulse, n_pulses, seed, jitter=300.0):
    """Single-channel stream with the given photon count per pulse."""
    rng = np.random.default_rng(seed)
    pulse = np.repeat(np.arange(n_pulses), photons_per_pulse)
    t = pulse * T + 5.0 + rng.normal(0.0, jitter, pulse.size)
    return ClickStream.from_unsorted(t, np.full(t.size, "S"), {"rep_period": T})


def poisson_stream(mu, n_pulses, seed):
    counts = np.random.default_rng(seed).poisson(mu, n_pulses)
    return pulsed_stream(counts, n_pulses, seed + 1)


def single_photon_stream(p, n_pulses, seed):
    counts = (np.random.default_rng(seed).random(n_pulses) < p).astype(int)
    return pulsed_stream(counts, n_pulses, seed + 1)


def two_channel(draw_times, draw_channels):
    return ClickStream.from_unsorted(draw_times, draw_channels, {"rep_period": T, "layout": "AB"})


stream_st = st.lists(
    st.tuples(st.floats(0, 2e5, allow_nan=False), st.sampled_from("AB")), min_size=0, max_size=120
)


# ---- click streams -------------------------------------------------------
def test_stream_validation():
    with pytest.raises(ValueError):
        ClickStream(np.array([2.0, 1.0]), np.array(["A", "B"]))
    with pytest.raises(ValueError):
        ClickStream(np.array([1.0, 2.0]), np.array(["A", "S"]))
    with pytest.raises(ValueError):
        ClickStream(np.array([1.0]), np.array(["A", "B"]))


@given(stream_st)
@settings(max_examples=25)
def test_csv_round_trip(tmp_path_factory, events):
    events = sorted(events)
    s = two_channel([e[0] for e in events], [e[1] for e in events])
    path = tmp_path_factory.mktemp("csv") / "s.csv"
    s.to_csv(path)
    back = ClickStream.from_csv(path)
    assert np.array_equal(back.timestamps, s.timestamps)
    assert np.array_equal(back.channels, s.channels)
    assert back.meta == s.meta
    assert sidecar_path(path).exists()


def test_raw_import(tmp_path):
    p = tmp_path / "raw.csv"
    p.write_text("timestamp_ps,channel\n30.5,B\n10.0,A\n# comment\n20.0,A\n")
    s = ClickStream.from_raw(p, rep_period=T)
    assert s.timestamps.tolist() == [10.0, 20.0, 30.5]
    assert s.channels.tolist() == ["A", "A", "B"]
    p.write_text("1.0,A,extra\n")
    with pytest.raises(ValueError):
        ClickStream.from_raw(p)


def test_csv_header_checked(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t,c\n1,A\n")
    with pytest.raises(ValueError):
        ClickStream.from_csv(p)


def test_split_empty_and_twice():
    s = split_hbt(ClickStream.empty({"rep_period": T}), 0)
    assert len(s) == 0 and s.is_two_channel
    with pytest.raises(ValueError):
        split_hbt(s, 0)


def test_split_fraction_binomial():
    n = 1_000_000
    s = split_hbt(ClickStream(np.arange(n, dtype=float), np.full(n, "S")), 5)
    frac = np.mean(s.channels == "A")
    assert abs(frac - 0.5) < 3 * math.sqrt(0.25 / n)


def test_split_pairs_cross_channel_half_the_time():
    n = 200_000
    t = np.repeat(np.arange(n) * T, 2)
    s = split_hbt(ClickStream(t, np.full(t.size, "S")), 9)
    ch = s.channels.reshape(-1, 2)
    frac = np.mean(ch[:, 0] != ch[:, 1])
    assert abs(frac - 0.5) < 3 * math.sqrt(0.25 / n)


# ---- correlator -----------------------------------------------------------
def test_single_pair_at_zero_delay():
    s = two_channel([100.0, 100.0], ["A", "B"])
    h = correlate(s, 1000.0, 64.0)
    assert h.total == 1
    assert h.counts[h.n_half] == 1


@given(stream_st, st.floats(100, 5e4))
def test_total_pairs_match_brute_force(events, max_delay):
    events = sorted(events)
    s = two_channel([e[0] for e in events], [e[1] for e in events])
    assert correlate(s, max_delay, 50.0, rep_period=T).total == brute_force_pairs(s, max_delay)


@given(stream_st)
def test_channel_swap_mirrors_histogram(events):
    events = sorted(events)
    s = two_channel([e[0] for e in events], [e[1] for e in events])
    swapped = ClickStream(s.timestamps, np.where(s.channels == "A", "B", "A"), dict(s.meta))
    a = correlate(s, 3e4, 64.0, rep_period=T)
    b = correlate(swapped, 3e4, 64.0, rep_period=T)
    assert np.array_equal(a.counts, b.counts[::-1])


def test_threaded_correlation_identical():
    s = split_hbt(poisson_stream(0.5, 20_000, 1), 2)
    a = correlate(s, 3 * T, 64.0)
    b = correlate(s, 3 * T, 64.0, n_workers=4)
    assert np.array_equal(a.counts, b.counts)


def test_uncorrelated_streams_are_flat():
    rng = np.random.default_rng(4)
    duration = 2e9
    n = 20_000
    s = two_channel(rng.uniform(0, duration, 2 * n), np.repeat(["A", "B"], n))
    bw = 2000.0
    h = correlate(s, 40 * bw, bw, rep_period=T)
    expect = n * n * bw / duration
    inner = h.counts[1:-1]  # edge bins are half width
    assert np.all(np.abs(inner - expect) < 3 * math.sqrt(expect))


def test_perfect_train_has_empty_centre():
    s = split_hbt(single_photon_stream(0.7, 20_000, 3), 1)
    h = correlate(s, 10.5 * T, 64.0)
    assert h.peak_areas(10)[0] == 0
    g = g2_zero(h, 10)
    assert g.g2 == 0.0 and g.error > 0


def test_poissonian_train_gives_one():
    s = split_hbt(poisson_stream(1.0, 30_000, 5), 1)
    g = G2Estimator().fit(s)
    assert abs(g.g2_ - 1.0) < 3 * g.g2_error_


def test_g2_translation_invariant():
    s = split_hbt(poisson_stream(0.3, 20_000, 6), 1)
    a = G2Estimator().fit(s)
    b = G2Estimator().fit(s.shifted(123456.789))
    assert a.g2_ == b.g2_
    assert np.array_equal(a.histogram_.counts, b.histogram_.counts)


def test_g2_thinning_invariant():
    counts = np.random.default_rng(7).choice([0, 1, 2], size=60_000, p=[0.3, 0.6, 0.1])
    s = split_hbt(pulsed_stream(counts, 60_000, 8), 1)
    a = G2Estimator().fit(s)
    b = G2Estimator().fit(s.thinned(0.5, 3))
    assert abs(a.g2_ - b.g2_) < 3 * math.hypot(a.g2_error_, b.g2_error_)


def test_peak_areas_need_enough_span():
    h = CoincidenceHistogram(64.0, np.zeros(2 * 100 + 1, dtype=int), T, 100 * 64.0)
    with pytest.raises(ValueError):
        h.peak_areas(2)


def test_histogram_validation():
    with pytest.raises(ValueError):
        CoincidenceHistogram(64.0, np.zeros(4, dtype=int), T, 128.0)
    with pytest.raises(ValueError):
        CoincidenceHistogram(64.0, np.zeros(5, dtype=int), T, 128.0, window=2 * T)


def test_empty_side_peaks():
    h = CoincidenceHistogram(64.0, np.zeros(2 * 400 + 1, dtype=int), T, 400 * 64.0)
    with pytest.raises(ZeroDivisionError):
        g2_zero(h, 1)


# ---- envelope -------------------------------------------------------------
def test_flat_envelope():
    peaks = {k: 1000 for k in range(-10, 11)}
    env = fit_envelope(peaks)
    assert env.a_inf == pytest.approx(1000.0, rel=1e-6)
    assert env.contrast == pytest.approx(0.0, abs=1e-6)


def test_envelope_without_blinking():
    s = split_hbt(single_photon_stream(0.7, 40_000, 9), 1)
    env = G2Estimator().fit(s).envelope_
    assert abs(env.contrast) < 3 * env.errors["contrast"] + 0.02


def test_blinking_envelope_decay_length():
    sc = Scenario.load().experiment(calibrate=False)
    blink = Blinking.from_duty_cycle(0.5, 3 * sc.rep_period)
    sc = sc.with_(n_pulses=100_000, blinking=blink, detector=DetectorModel(efficiency=1.0))
    est = G2Estimator().fit(split_hbt(generate_click_stream(sc), 1))
    k0 = blink.correlation_length(sc.rep_period)
    assert est.envelope_.k0 == pytest.approx(k0, rel=0.1)
    assert est.envelope_.contrast == pytest.approx((1 - 0.5) / 0.5, rel=0.1)
    # blinking bunching inflates the plain estimate; the corrected one removes it
    assert est.g2_corrected_ > est.g2_


def test_estimator_report(tmp_path):
    s = split_hbt(poisson_stream(0.5, 10_000, 11), 1)
    est = G2Estimator(n_side_peaks=5, bin_width=128.0)
    assert clone(est).get_params() == est.get_params()
    est.fit(s)
    est.write_report(tmp_path / "r.json")
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["n_side_peaks"] == 5 and rep["window_ps"] == pytest.approx(T)
    assert len(rep["peak_areas"]) == 11
