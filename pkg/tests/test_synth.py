"""Synthetic gait generator: kinematic consistency and population structure."""

import math

import numpy as np
import pytest

from gaitfusion.attitude import integrate_gyro, rotation_body_to_nav
from gaitfusion.errors import ConfigError
from gaitfusion.imu_io import G_STANDARD, parse_trial
from gaitfusion.preprocess import acc_magnitude
from gaitfusion.synth import (CONTROL_GROUP, GaitProfile,
                              LDH_AFFECTED_SIDE_GROUP,
                              LDH_HEALTHY_SIDE_GROUP, TURN_YAW_RATE,
                              draw_profile, generate_population,
                              generate_trial, write_truth)


def test_same_seed_reproduces_trial():
    p = GaitProfile()
    a, truth_a = generate_trial(p, 15.0, np.random.default_rng(5))
    b, truth_b = generate_trial(p, 15.0, np.random.default_rng(5))
    assert np.array_equal(a.acc, b.acc)
    assert np.array_equal(a.gyro, b.gyro)
    assert np.array_equal(truth_a.euler, truth_b.euler)
    assert truth_a.events == truth_b.events


def test_zero_amplitude_profile_is_static_gravity():
    p = GaitProfile(stance_pitch_deg=0.0, swing_roll_deg=0.0,
                    yaw_sway_deg=0.0, stride_length_m=0.0,
                    gyro_noise_sd=0.0, acc_noise_sd=0.0)
    trial, truth = generate_trial(p, 10.0, np.random.default_rng(0))
    np.testing.assert_allclose(trial.gyro, 0.0, atol=1e-12)
    np.testing.assert_allclose(acc_magnitude(trial.acc), G_STANDARD,
                               atol=1e-9)
    np.testing.assert_allclose(truth.euler, 0.0, atol=1e-12)


def test_gyro_is_exact_inverse_of_truth(quiet_walk):
    trial, truth = quiet_walk
    dead = integrate_gyro(trial, x0=truth.euler[0])
    err = np.abs(dead - truth.euler)
    assert err.max() < 1e-6


def test_noise_free_magnitude_is_gravity_during_dwell(quiet_walk):
    trial, truth = quiet_walk
    # At the zero-velocity anchors there is no dynamic acceleration at all.
    for ta in truth.anchor_times:
        i = int(np.argmin(np.abs(trial.t - ta)))
        assert acc_magnitude(trial.acc[i]) == pytest.approx(G_STANDARD,
                                                            abs=1e-9)


def test_events_sit_on_pitch_extrema(quiet_walk):
    trial, truth = quiet_walk
    pitch = truth.euler[:, 1]
    fs = trial.sample_rate_hz
    half = int(0.3 * fs)
    for kind, at in truth.events:
        i = int(np.argmin(np.abs(trial.t - at)))
        lo, hi = max(0, i - half), min(trial.n, i + half + 1)
        window = pitch[lo:hi]
        ext = lo + (np.argmax(window) if kind == "HS" else np.argmin(window))
        assert abs(ext - i) <= 1


def test_truth_velocity_vanishes_at_anchors_and_strides_add_up(quiet_walk):
    trial, truth = quiet_walk
    a_nav = np.empty_like(trial.acc)
    for i in range(trial.n):
        a_nav[i] = rotation_body_to_nav(truth.euler[i]) @ trial.acc[i]
    a_nav[:, 2] -= G_STANDARD
    dt = np.diff(trial.t)[:, None]
    v = np.vstack([np.zeros((1, 3)),
                   np.cumsum(0.5 * (a_nav[1:] + a_nav[:-1]) * dt, axis=0)])
    anchor_idx = [int(np.argmin(np.abs(trial.t - ta)))
                  for ta in truth.anchor_times]
    # Tolerance is set by this test's trapezoid integration error on the
    # steep speed ramps, about 1e-2 m/s against a 2 m/s cruise speed.
    for i in anchor_idx:
        assert np.linalg.norm(v[i, :2]) < 2e-2
    p = np.vstack([np.zeros((1, 3)),
                   np.cumsum(0.5 * (v[1:] + v[:-1]) * dt, axis=0)])
    for k in range(len(anchor_idx) - 1):
        step = p[anchor_idx[k + 1], :2] - p[anchor_idx[k], :2]
        assert np.linalg.norm(step) == pytest.approx(
            truth.stride_lengths[k], abs=0.02)


def test_stride_schedule_respects_profile():
    p = GaitProfile(stride_time_cv=0.08, stride_length_cv=0.1)
    _, truth = generate_trial(p, 30.0, np.random.default_rng(2))
    st = np.asarray(truth.stride_times)
    sl = np.asarray(truth.stride_lengths)
    assert np.all((st > 0.6 * p.stride_time_s) & (st < 1.6 * p.stride_time_s))
    assert np.mean(st) == pytest.approx(p.stride_time_s, abs=0.1)
    assert np.mean(sl) == pytest.approx(p.stride_length_m, abs=0.15)
    kinds = [k for k, _ in truth.events]
    assert kinds == ["HS", "TO"] * (len(kinds) // 2) + ["HS"]


def test_noise_and_bias_injection():
    p_quiet = GaitProfile(gyro_noise_sd=0.0, acc_noise_sd=0.0)
    p_noisy = GaitProfile(gyro_noise_sd=0.02, acc_noise_sd=0.1,
                          gyro_bias=(0.01, 0.0, -0.02))
    quiet, _ = generate_trial(p_quiet, 20.0, np.random.default_rng(3))
    noisy, _ = generate_trial(p_noisy, 20.0, np.random.default_rng(3))
    g_delta = noisy.gyro - quiet.gyro
    a_delta = noisy.acc - quiet.acc
    assert np.mean(g_delta[:, 0]) == pytest.approx(0.01, abs=0.002)
    assert np.mean(g_delta[:, 2]) == pytest.approx(-0.02, abs=0.002)
    assert np.std(g_delta[:, 1]) == pytest.approx(0.02, rel=0.1)
    assert np.std(a_delta) == pytest.approx(0.1, rel=0.1)


def test_turn_segment_marked_and_spinning():
    p = GaitProfile(turn_tail_s=3.0, gyro_noise_sd=0.0, acc_noise_sd=0.0)
    trial, truth = generate_trial(p, 14.0, np.random.default_rng(4))
    t0, t1 = truth.turn_window
    inside = (trial.t > t0 + 0.2) & (trial.t < t1 - 0.2)
    yaw = truth.euler[:, 2]
    rate = np.gradient(yaw, trial.t)
    assert np.median(rate[inside]) == pytest.approx(TURN_YAW_RATE, rel=0.2)


def test_profile_validation():
    with pytest.raises(ConfigError):
        GaitProfile(stance_fraction=0.95)
    with pytest.raises(ConfigError):
        generate_trial(GaitProfile(), 2.0, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        generate_trial(GaitProfile(anchor_dwell_fraction=2.5), 15.0,
                       np.random.default_rng(0))


def test_draw_profile_tracks_group_spec():
    rng = np.random.default_rng(5)
    draws = [draw_profile(LDH_AFFECTED_SIDE_GROUP, rng) for _ in range(60)]
    st = np.mean([d.stride_time_s for d in draws])
    assert st == pytest.approx(LDH_AFFECTED_SIDE_GROUP.stride_time[0],
                               abs=0.1)
    lo, hi = LDH_AFFECTED_SIDE_GROUP.stance_bounds
    assert all(lo <= d.stance_fraction <= hi for d in draws)
    override = draw_profile(CONTROL_GROUP, rng, sample_rate_hz=200.0)
    assert override.sample_rate_hz == 200.0


def test_group_parameter_orderings():
    means = {}
    for spec in (CONTROL_GROUP, LDH_HEALTHY_SIDE_GROUP,
                 LDH_AFFECTED_SIDE_GROUP):
        draws = [draw_profile(spec, np.random.default_rng(1000 + i))
                 for i in range(40)]
        means[spec.name] = (np.mean([d.stride_time_s for d in draws]),
                            np.mean([d.stride_length_m for d in draws]))
    assert means["control"][0] < means["LDH_healthy_side"][0] \
        < means["LDH_affected_side"][0]
    assert means["control"][1] > means["LDH_healthy_side"][1] \
        > means["LDH_affected_side"][1]


def test_population_structure_and_determinism():
    pop = generate_population(n_ldh=4, n_control=3, duration_s=12.0, seed=9)
    assert len(pop) == 2 * 4 + 2 * 3
    by_subject = {}
    for rec in pop:
        by_subject.setdefault(rec.trial.subject_id, []).append(rec)
    ldh = {s: rs for s, rs in by_subject.items() if s.startswith("ldh")}
    ctl = {s: rs for s, rs in by_subject.items() if not s.startswith("ldh")}
    assert len(ldh) == 4 and len(ctl) == 3
    for recs in ldh.values():
        groups = sorted(r.trial.group.value for r in recs)
        assert groups == ["LDH_affected_side", "LDH_healthy_side"]
        assert {r.trial.leg.value for r in recs} == {"left", "right"}
    for recs in ctl.values():
        assert all(r.trial.group.value == "control" for r in recs)
        assert {r.trial.leg.value for r in recs} == {"left", "right"}
    again = generate_population(n_ldh=4, n_control=3, duration_s=12.0, seed=9)
    for a, b in zip(pop, again):
        assert np.array_equal(a.trial.acc, b.trial.acc)
        assert np.array_equal(a.trial.gyro, b.trial.gyro)


def test_default_population_mirrors_cohort_sizes():
    pop = generate_population(duration_s=8.0, seed=1)
    groups = [r.trial.group.value for r in pop]
    assert groups.count("LDH_healthy_side") == 20
    assert groups.count("LDH_affected_side") == 20
    assert groups.count("control") == 30


def test_write_truth_round_trip(tmp_path, quiet_walk):
    trial, truth = quiet_walk
    from gaitfusion.imu_io import write_trial
    base = tmp_path / "trial.csv"
    write_trial(trial, base)
    write_truth(truth, trial, base)
    truth_path = tmp_path / "trial.truth.csv"
    events_path = tmp_path / "trial.events.csv"
    assert truth_path.exists() and events_path.exists()
    rows = [ln.split(",") for ln in truth_path.read_text().splitlines()
            if ln and not ln.startswith("#")]
    assert rows[0] == ["t", "roll", "pitch", "yaw"]
    assert len(rows) - 1 == trial.n
    got = np.array([[float(v) for v in r] for r in rows[1:]])
    np.testing.assert_allclose(got[:, 1:], truth.euler, atol=1e-9)
    ev_rows = [ln.split(",") for ln in events_path.read_text().splitlines()
               if ln and not ln.startswith("#")]
    assert ev_rows[0] == ["t", "kind"]
    assert len(ev_rows) - 1 == len(truth.events)
    back = parse_trial(base)
    assert back.n == trial.n


def test_zero_noise_walk_duration_and_rate(quiet_walk):
    trial, _ = quiet_walk
    assert trial.sample_rate_hz == 100.0
    assert trial.duration == pytest.approx(12.0, abs=0.02)
    assert math.isclose(float(np.median(np.diff(trial.t))), 0.01,
                        rel_tol=1e-9)
