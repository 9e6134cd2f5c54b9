"""Synthetic gait trials with exact ground truth.

The generator works backwards from a closed-form attitude track: the emitted
gyro stream is the exact discrete inverse of the ground-truth Euler series
through the selected kinematics, so integrating the noise-free gyro
reproduces the truth to machine precision, and the emitted accelerometer is
gravity rotated into the body frame plus a navigation-frame forward
acceleration consistent with a known per-stride displacement.

The motion model is deliberately non-physiological: sagittal pitch follows a
two-lobe cosine per stride (peak at heel strike, trough at toe off, plateau
crossing at mid stance), out-of-plane roll gets one raised-cosine lobe per
swing, heading carries a gentle continuous weave, and forward speed is a
cosine-ramped trapezoid bracketed by dead stops around every mid-stance
instant, which are therefore exact zero-velocity anchors.  What matters is
that every downstream quantity (events, phases, stride lengths, excursions)
has a known target, not that the curves look like a real shank.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .attitude import rotation_body_to_nav, wrap_angle
from .errors import ConfigError
from .imu_io import G_STANDARD, Group, ImuTrial, Leg

TURN_YAW_RATE = np.radians(30.0)  # yaw rate inside an appended turn segment


@dataclass(frozen=True)
class GaitProfile:
    """Per-trial generator parameters (one leg of one subject)."""

    stride_time_s: float = 1.02
    stance_fraction: float = 0.62
    stride_length_m: float = 1.41
    stance_pitch_deg: float = 38.71   # early-stance flexion excursion target
    swing_roll_deg: float = 23.97     # swing excursion target
    stride_time_cv: float = 0.04      # within-trial stride-to-stride spread
    stride_length_cv: float = 0.06
    anchor_dwell_fraction: float = 0.3  # share of stance at zero velocity
    yaw_sway_deg: float = 5.0         # continuous heading weave amplitude
    gyro_noise_sd: float = 0.008      # rad/s, white
    acc_noise_sd: float = 0.04        # m/s^2, white
    gyro_bias: tuple = (0.0, 0.0, 0.0)  # rad/s, constant
    lead_in_s: float = 1.0            # quiet standing before the first stride
    tail_s: float = 0.5               # quiet standing after the last stride
    ramp_s: float = 0.3               # half-cosine on/off ramp of the pitch
    turn_tail_s: float = 0.0          # optional appended turning segment
    sample_rate_hz: float = 100.0
    kinematics_frame: str = "enu_rates"

    def __post_init__(self):
        if not (0.3 < self.stance_fraction < 0.9):
            raise ConfigError(
                f"stance_fraction {self.stance_fraction} outside (0.3, 0.9)")
        if self.stride_time_s <= 0 or self.sample_rate_hz <= 0:
            raise ConfigError("stride_time_s and sample_rate_hz must be positive")


@dataclass(frozen=True)
class GroundTruth:
    """Everything the generator knows that the pipeline must recover."""

    euler: np.ndarray          # (n, 3) rad
    events: list               # ("HS" | "TO", exact time in s)
    anchor_times: np.ndarray   # mid-stance zero-velocity instants
    stride_times: np.ndarray   # per-stride durations (s)
    stride_lengths: np.ndarray  # displacement between anchor pairs (m)
    walk_window: tuple         # (first HS, last HS)
    turn_window: tuple | None  # appended turn segment, if any


def _euler_rate_inverse(euler: np.ndarray) -> np.ndarray:
    """Matrix mapping Euler angle derivatives back to body rates."""
    phi, theta = euler[0], euler[1]
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    return np.array([
        [1.0, 0.0, -st],
        [0.0, cf, sf * ct],
        [0.0, -sf, cf * ct],
    ])


def _gyro_from_truth(euler: np.ndarray, t: np.ndarray, frame: str) -> np.ndarray:
    """Exact discrete gyro: forward-Euler integration of it reproduces truth."""
    n = len(t)
    gyro = np.empty((n, 3))
    for k in range(n - 1):
        dt = t[k + 1] - t[k]
        u = wrap_angle(euler[k + 1] - euler[k]) / dt
        body = _euler_rate_inverse(euler[k]) @ u
        if frame == "enu_rates":
            body = rotation_body_to_nav(euler[k]).T @ body
        gyro[k] = body
    gyro[n - 1] = gyro[n - 2]
    return gyro


def generate_trial(profile: GaitProfile, duration_s: float, rng,
                   subject_id: str = "synth", leg: Leg = Leg.LEFT,
                   group: Group = Group.CONTROL):
    """Build one trial; returns (ImuTrial, GroundTruth).

    rng is a numpy Generator (or a seed).  duration_s covers lead-in, strides
    and tail; a turn segment, when configured, is appended after that.
    """
    rng = np.random.default_rng(rng)
    fs = profile.sample_rate_hz
    total = duration_s + profile.turn_tail_s
    n = int(round(total * fs)) + 1
    t = np.arange(n) / fs

    # Stride schedule: as many whole strides as fit between lead-in and tail.
    tmean = profile.stride_time_s
    stride_times = []
    cursor = profile.lead_in_s
    while True:
        ti = float(np.clip(rng.normal(tmean, profile.stride_time_cv * tmean),
                           0.6 * tmean, 1.6 * tmean))
        if cursor + ti + profile.tail_s > duration_s:
            break
        stride_times.append(ti)
        cursor += ti
    if len(stride_times) < 2:
        raise ConfigError(
            f"duration {duration_s}s leaves no room for strides of ~{tmean}s")
    stride_times = np.array(stride_times)
    hs = np.concatenate([[profile.lead_in_s], profile.lead_in_s + np.cumsum(stride_times)])
    to = hs[:-1] + profile.stance_fraction * stride_times
    anchors = hs[:-1] + 0.5 * profile.stance_fraction * stride_times

    amp_pitch = np.radians(profile.stance_pitch_deg)
    amp_roll = np.radians(profile.swing_roll_deg)

    pitch = np.zeros(n)
    roll = np.zeros(n)
    # A gentle continuous heading weave keeps every gyro axis active through
    # stance, so legitimate swing peaks do not dominate the amplitude screen.
    # Yaw feeds no downstream feature and the filter treats it as unobserved.
    sway = np.radians(profile.yaw_sway_deg)
    yaw = sway * np.sin(2.0 * np.pi * t / (0.47 * profile.stride_time_s))

    ramp = min(profile.ramp_s, profile.lead_in_s)
    m = (t >= hs[0] - ramp) & (t < hs[0])
    pitch[m] = amp_pitch * 0.5 * (1.0 - np.cos(np.pi * (t[m] - (hs[0] - ramp)) / ramp))
    for i, ti in enumerate(stride_times):
        st_end = to[i]
        sw_end = hs[i + 1]
        m = (t >= hs[i]) & (t < st_end)
        u = (t[m] - hs[i]) / (profile.stance_fraction * ti)
        pitch[m] = amp_pitch * np.cos(np.pi * u)
        m = (t >= st_end) & (t < sw_end)
        v = (t[m] - st_end) / ((1.0 - profile.stance_fraction) * ti)
        pitch[m] = amp_pitch * np.cos(np.pi * (1.0 + v))
        roll[m] = amp_roll * 0.5 * (1.0 - np.cos(2.0 * np.pi * v))
    m = (t >= hs[-1]) & (t < hs[-1] + ramp)
    pitch[m] = amp_pitch * 0.5 * (1.0 + np.cos(np.pi * (t[m] - hs[-1]) / ramp))

    # Forward velocity between anchor pairs: a dead stop held around every
    # anchor (quiet mid-stance accelerometer window), then a cosine-ramped
    # speed trapezoid.  The ramps sit in the middle of stance and the middle
    # of swing, so both pitch extrema (heel strike and toe off) fall in
    # zero-acceleration zones and the gravity observation is exact there.
    stride_lengths = np.clip(
        rng.normal(profile.stride_length_m,
                   profile.stride_length_cv * profile.stride_length_m,
                   size=max(len(anchors) - 1, 0)),
        0.3 * profile.stride_length_m, 1.9 * profile.stride_length_m)
    dwell_half = 0.5 * profile.anchor_dwell_fraction \
        * profile.stance_fraction * stride_times
    ramp_frac = 0.2
    acc_nav_x = np.zeros(n)
    for i in range(len(anchors) - 1):
        b0 = anchors[i] + dwell_half[i]
        b1 = anchors[i + 1] - dwell_half[i + 1]
        span = b1 - b0
        if span <= 0:
            raise ConfigError("anchor_dwell_fraction leaves no room to move")
        ramp_t = ramp_frac * span
        v_c = stride_lengths[i] / (span * (1.0 - ramp_frac))
        a_pk = v_c * np.pi / (2.0 * ramp_t)
        m = (t >= b0) & (t < b0 + ramp_t)
        acc_nav_x[m] = a_pk * np.sin(np.pi * (t[m] - b0) / ramp_t)
        m = (t >= b1 - ramp_t) & (t < b1)
        acc_nav_x[m] = -a_pk * np.sin(np.pi * (t[m] - (b1 - ramp_t)) / ramp_t)

    turn_window = None
    if profile.turn_tail_s > 0:
        turn_start = duration_s
        m = t >= turn_start
        yaw[m] += TURN_YAW_RATE * (t[m] - turn_start)
        turn_window = (float(turn_start), float(t[-1]))

    euler = np.column_stack([roll, pitch, yaw])

    gyro = _gyro_from_truth(euler, t, profile.kinematics_frame)
    acc = np.empty((n, 3))
    for k in range(n):
        f_nav = np.array([acc_nav_x[k], 0.0, G_STANDARD])
        acc[k] = rotation_body_to_nav(euler[k]).T @ f_nav

    acc = acc + rng.normal(0.0, profile.acc_noise_sd, size=acc.shape)
    gyro = gyro + np.asarray(profile.gyro_bias, dtype=float)
    gyro = gyro + rng.normal(0.0, profile.gyro_noise_sd, size=gyro.shape)

    events = []
    for x in hs:
        events.append(("HS", float(x)))
    for x in to:
        events.append(("TO", float(x)))
    events.sort(key=lambda e: e[1])

    trial = ImuTrial(subject_id=subject_id, leg=leg, group=group,
                     sample_rate_hz=fs, t=t, acc=acc, gyro=gyro)
    truth = GroundTruth(euler=euler, events=events, anchor_times=anchors,
                        stride_times=stride_times, stride_lengths=stride_lengths,
                        walk_window=(float(hs[0]), float(hs[-1])),
                        turn_window=turn_window)
    return trial, truth


@dataclass(frozen=True)
class GroupSpec:
    """Population-level parameter distribution for one gait group.

    Means are the calibrated per-group feature targets; the spreads are
    between-subject SDs with explicit clipping bounds so that every derived
    feature stays inside its physically valid range (a stance fraction can
    never leave (0.3, 0.9), however wide the nominal SD).
    """

    name: str
    stride_time: tuple          # (mean s, sd)
    stance_fraction: tuple      # clipped to bounds below
    stride_length: tuple
    stance_pitch_deg: tuple
    swing_roll_deg: tuple
    stride_time_cv: float
    stride_length_cv: float
    gyro_noise_sd: float
    acc_noise_sd: float
    stance_bounds: tuple = (0.32, 0.88)


CONTROL_GROUP = GroupSpec(
    name="control",
    stride_time=(1.02, 0.08), stance_fraction=(0.62, 0.025),
    stride_length=(1.41, 0.12), stance_pitch_deg=(38.71, 0.76),
    swing_roll_deg=(23.97, 0.74), stride_time_cv=0.04, stride_length_cv=0.06,
    gyro_noise_sd=0.008, acc_noise_sd=0.04, stance_bounds=(0.56, 0.69),
)

LDH_HEALTHY_SIDE_GROUP = GroupSpec(
    name="LDH_healthy_side",
    stride_time=(1.31, 0.15), stance_fraction=(0.57, 0.03),
    stride_length=(0.94, 0.12), stance_pitch_deg=(40.72, 1.26),
    swing_roll_deg=(26.64, 0.87), stride_time_cv=0.15, stride_length_cv=0.12,
    gyro_noise_sd=0.010, acc_noise_sd=0.05, stance_bounds=(0.45, 0.70),
)

LDH_AFFECTED_SIDE_GROUP = GroupSpec(
    name="LDH_affected_side",
    stride_time=(1.74, 0.20), stance_fraction=(0.38, 0.04),
    stride_length=(0.73, 0.12), stance_pitch_deg=(23.16, 0.65),
    swing_roll_deg=(40.32, 1.02), stride_time_cv=0.25, stride_length_cv=0.24,
    gyro_noise_sd=0.012, acc_noise_sd=0.06, stance_bounds=(0.32, 0.55),
)


def draw_profile(spec: GroupSpec, rng, **overrides) -> GaitProfile:
    """One subject-level profile draw from a group distribution."""
    rng = np.random.default_rng(rng)

    def clipped(pair, lo, hi):
        return float(np.clip(rng.normal(*pair), lo, hi))

    prof = GaitProfile(
        stride_time_s=clipped(spec.stride_time, 0.6, 3.0),
        stance_fraction=clipped(spec.stance_fraction, *spec.stance_bounds),
        stride_length_m=clipped(spec.stride_length, 0.2, 2.5),
        stance_pitch_deg=clipped(spec.stance_pitch_deg, 5.0, 60.0),
        swing_roll_deg=clipped(spec.swing_roll_deg, 5.0, 60.0),
        stride_time_cv=spec.stride_time_cv,
        stride_length_cv=spec.stride_length_cv,
        gyro_noise_sd=spec.gyro_noise_sd,
        acc_noise_sd=spec.acc_noise_sd,
    )
    return replace(prof, **overrides) if overrides else prof


def _leg_variant(profile: GaitProfile, rng) -> GaitProfile:
    """Small leg-to-leg asymmetry on top of a shared subject profile."""
    rng = np.random.default_rng(rng)
    scale = lambda v, sd: float(v * (1.0 + rng.normal(0.0, sd)))
    return replace(
        profile,
        stride_length_m=scale(profile.stride_length_m, 0.01),
        stance_pitch_deg=scale(profile.stance_pitch_deg, 0.01),
        swing_roll_deg=scale(profile.swing_roll_deg, 0.01),
    )


@dataclass(frozen=True)
class PopulationTrial:
    trial: ImuTrial
    truth: GroundTruth


def generate_population(n_ldh: int = 20, n_control: int = 15,
                        duration_s: float = 20.0, seed: int = 0,
                        ldh_healthy_spec: GroupSpec = LDH_HEALTHY_SIDE_GROUP,
                        ldh_affected_spec: GroupSpec = LDH_AFFECTED_SIDE_GROUP,
                        control_spec: GroupSpec = CONTROL_GROUP) -> list:
    """Cohort of n_ldh patients (one trial per side) and n_control subjects
    (one trial per leg, legs sharing the subject profile).

    Per-trial randomness comes from independently spawned child generators,
    so the output does not depend on generation order.
    """
    records = []
    n_trials = 2 * n_ldh + 2 * n_control
    children = np.random.SeedSequence(seed).spawn(n_trials + 1)
    master = np.random.default_rng(children[-1])
    ci = 0
    for i in range(n_ldh):
        sid = f"ldh{i + 1:02d}"
        affected_leg = Leg.RIGHT if master.random() < 0.5 else Leg.LEFT
        healthy_leg = Leg.LEFT if affected_leg is Leg.RIGHT else Leg.RIGHT
        rng = np.random.default_rng(children[ci]); ci += 1
        prof = draw_profile(ldh_healthy_spec, rng)
        trial, truth = generate_trial(prof, duration_s, rng, subject_id=sid,
                                      leg=healthy_leg, group=Group.LDH_HEALTHY)
        records.append(PopulationTrial(trial, truth))
        rng = np.random.default_rng(children[ci]); ci += 1
        prof = draw_profile(ldh_affected_spec, rng)
        trial, truth = generate_trial(prof, duration_s, rng, subject_id=sid,
                                      leg=affected_leg, group=Group.LDH_AFFECTED)
        records.append(PopulationTrial(trial, truth))
    for i in range(n_control):
        sid = f"ctl{i + 1:02d}"
        rng = np.random.default_rng(children[ci]); ci += 1
        subject_prof = draw_profile(control_spec, rng)
        for leg in (Leg.LEFT, Leg.RIGHT):
            leg_rng = np.random.default_rng(children[ci]) if leg is Leg.RIGHT else rng
            if leg is Leg.RIGHT:
                ci += 1
            prof = _leg_variant(subject_prof, leg_rng)
            trial, truth = generate_trial(prof, duration_s, leg_rng,
                                          subject_id=sid, leg=leg,
                                          group=Group.CONTROL)
            records.append(PopulationTrial(trial, truth))
    return records


def write_truth(truth: GroundTruth, trial: ImuTrial, base_path,
                manifest_hash: str | None = None) -> None:
    """Write `<base>.truth.csv` (attitude) and `<base>.events.csv`."""
    import csv
    from pathlib import Path

    base = Path(base_path)
    with open(base.with_suffix(".truth.csv"), "w", newline="") as fh:
        if manifest_hash:
            fh.write(f"# manifest={manifest_hash}\n")
        w = csv.writer(fh)
        w.writerow(["t", "roll", "pitch", "yaw"])
        for i in range(trial.n):
            w.writerow([f"{trial.t[i]:.12g}"] + [f"{v:.12g}" for v in truth.euler[i]])
    with open(base.with_suffix(".events.csv"), "w", newline="") as fh:
        if manifest_hash:
            fh.write(f"# manifest={manifest_hash}\n")
        w = csv.writer(fh)
        w.writerow(["t", "kind"])
        for kind, at in truth.events:
            w.writerow([f"{at:.12g}", kind])
