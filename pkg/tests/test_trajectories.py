import math

import numpy as np
import pytest

from qdsps.core.evolution import evolve_master_equation
from qdsps.core.model import HilbertConfig, SystemModel, build_model_operators
from qdsps.core.rng import stream_rng, uniforms
from qdsps.core.trajectories import JumpSampler, sample_jump_trajectory

T_REP = 12195.12


def test_uniforms_are_counter_based():
    a = uniforms(7, 123, 5)
    assert np.array_equal(a, uniforms(7, 123, 5))
    assert not np.array_equal(a, uniforms(7, 124, 5))
    assert not np.array_equal(a, uniforms(8, 123, 5))
    assert np.all((a >= 0) & (a < 1))


def test_stream_rng_keys_independent():
    assert stream_rng(1, 2).random() != stream_rng(1, 3).random()
    assert stream_rng(1, 2).random() == stream_rng(1, 2).random()


def test_no_drive_no_clicks(calibrated_model, cfg):
    ops = build_model_operators(cfg, calibrated_model.with_(pulse=calibrated_model.pulse.with_area(0.0)))
    ens = JumpSampler(ops, 0.0, 2000.0).run(cfg.basis(False, 0), 2000)
    assert all(ens.clicks[c][0].size == 0 for c in ens.clicks)


def test_leaky_decay_one_click_each():
    cfg = HilbertConfig(1)
    m = SystemModel(g=0.0, kappa=233.0, gamma_leaky=1 / 890.0)
    ops = build_model_operators(cfg, m.with_(pulse=m.pulse.with_area(0.0)))
    n = 100_000
    ens = JumpSampler(ops, 0.0, 20 * 890.0, max_step=1.0).run(cfg.basis(True, 0), n, base_seed=3)
    assert np.all(ens.counts_per_trajectory("leaky") == 1)
    assert ens.clicks["cavity"][0].size == 0
    t = ens.clicks["leaky"][1]
    # maximum-likelihood lifetime of an exponential sample
    assert t.mean() == pytest.approx(890.0, rel=0.05)
    assert t.mean() == pytest.approx(890.0, abs=4 * 890.0 / math.sqrt(n) + 1.0)


def test_pi_pulse_gives_at_most_one_photon(calibrated_model, cfg):
    ops = build_model_operators(cfg, calibrated_model)
    counts = JumpSampler(ops, 0.0, T_REP, max_step=2.0).run(cfg.basis(False, 0), 20_000, base_seed=5)
    c = counts.counts_per_trajectory("cavity")
    assert np.mean(c >= 2) < 1e-3


@pytest.mark.parametrize("delta,deph", [(0.0, 0.0), (360.0, 0.0), (75.0, 0.01)])
def test_ensemble_matches_master_equation(calibrated_model, cfg, delta, deph):
    model = calibrated_model.with_(delta_qd_cavity=delta, gamma_dephasing=deph)
    ops = build_model_operators(cfg, model)
    # after the pulse, where jumps have had time to spread the ensemble
    times = np.array([30.0, 100.0, 300.0, 600.0, 900.0])
    me = evolve_master_equation(cfg.basis(False, 0), ops, 0.0, times[-1], t_eval=times)
    pe = me.expect(cfg.excited_projector())
    ens = JumpSampler(ops, 0.0, times[-1], max_step=1.0, record_times=times).run(
        cfg.basis(False, 0), 5000, base_seed=11, record=True)
    z = (ens.excited_mean - pe) / ens.excited_stderr
    assert np.all(np.abs(z) < 3.5)


def test_independent_of_batching_and_threads(calibrated_model, cfg):
    ops = build_model_operators(cfg, calibrated_model)
    sampler = JumpSampler(ops, 0.0, T_REP, max_step=2.0)
    psi = cfg.basis(False, 0)
    a = sampler.run(psi, 3000, base_seed=9)
    b = sampler.run(psi, 3000, base_seed=9, batch_size=700, n_workers=3)
    for ch in a.clicks:
        assert np.array_equal(a.clicks[ch][0], b.clicks[ch][0])
        assert np.array_equal(a.clicks[ch][1], b.clicks[ch][1])


def test_subset_of_indices_reproduces_full_run(calibrated_model, cfg):
    ops = build_model_operators(cfg, calibrated_model)
    sampler = JumpSampler(ops, 0.0, T_REP, max_step=2.0)
    psi = cfg.basis(False, 0)
    full = sampler.run(psi, 1000, base_seed=4)
    part = sampler.run(psi, indices=np.arange(500, 1000), base_seed=4)
    idx, t = full.clicks["cavity"]
    keep = idx >= 500
    assert np.array_equal(part.clicks["cavity"][0], idx[keep])
    assert np.array_equal(part.clicks["cavity"][1], t[keep])


def test_error_scales_inverse_sqrt_n(calibrated_model, cfg):
    ops = build_model_operators(cfg, calibrated_model)
    sampler = JumpSampler(ops, 0.0, T_REP, max_step=2.0)
    psi = cfg.basis(False, 0)
    errs = []
    for n in (4000, 16000):
        c = sampler.run(psi, n, base_seed=1).counts_per_trajectory("cavity")
        errs.append(c.std(ddof=1) / math.sqrt(n))
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.1)


def test_single_trajectory_helper(calibrated_model, cfg):
    ops = build_model_operators(cfg, calibrated_model)
    out = sample_jump_trajectory(cfg.basis(False, 0), ops, 0.0, T_REP, rng_seed=2, index=17)
    assert set(out) >= {"cavity", "leaky"}
    again = sample_jump_trajectory(cfg.basis(False, 0), ops, 0.0, T_REP, rng_seed=2, index=17)
    assert all(np.array_equal(out[k], again[k]) for k in out)


def test_rejects_unnormalised_state(calibrated_model, cfg):
    ops = build_model_operators(cfg, calibrated_model)
    with pytest.raises(ValueError):
        JumpSampler(ops, 0.0, 100.0).run(2 * cfg.basis(False, 0), 10)
