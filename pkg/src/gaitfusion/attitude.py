"""Lower-limb attitude from accelerometer + gyroscope fusion.

State is the Euler angle triple (roll, pitch, yaw) of the sensor with respect
to the local ENU frame, ZYX convention.  Gyroscope rates drive the prediction
as a control input; gravity-referenced roll/pitch from the accelerometer is
the observation.  Yaw has no absolute reference here, so its observation
variance is effectively infinite and yaw follows gyro integration alone.

A bank of identical filters that differ only in their innovation outlier gate
runs in parallel; the reported estimate is their likelihood-weighted mean.
Tight gates reject accelerometer disturbances aggressively, loose gates keep
correcting through them, and the weights shift between the two regimes.

Per-filter noise statistics adapt online from a sliding window of accepted
innovations: the observation covariance tracks the window sample covariance
(minus the state contribution) and the process noise is rescaled by the ratio
of observed to predicted innovation energy.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import AnalysisError, ConfigError, NumericError, ValidationError
from .imu_io import G_STANDARD, ImuTrial

R_YAW_UNOBSERVED = 1e12       # rad^2; yaw pseudo-observation variance
GIMBAL_COS_MIN = 1e-3         # |cos(pitch)| below this is treated as gimbal lock
FREEFALL_FRACTION = 0.5       # observations need |acc| > 0.5 g

KINEMATICS_FRAMES = ("enu_rates", "body_rates")


@dataclass(frozen=True)
class FusionConfig:
    bank_size: int = 3
    gates_sigma: tuple = (2.0, 3.0, 4.0)
    q_nominal_deg: float = 0.5        # process noise density, deg / sqrt(s)
    r_nominal_deg: float = 2.0        # accel roll/pitch noise SD, deg
    init_p_deg: float = 5.0           # initial attitude SD, deg
    adapt_window: int = 50            # innovations kept for noise adaptation
    adapt_min: int = 10               # adaptation starts once this many seen
    init_window_s: float = 0.5        # accel averaging window for x0
    kinematics_frame: str = "enu_rates"
    r_floor_deg: float = 0.3          # eigenvalue floor for adapted R
    backend: str = "auto"             # auto | native | python

    def __post_init__(self):
        if self.bank_size < 1:
            raise ConfigError("bank_size must be at least 1")
        if len(self.gates_sigma) != self.bank_size:
            raise ConfigError(
                f"gates_sigma has {len(self.gates_sigma)} entries for bank_size "
                f"{self.bank_size}")
        if any(g <= 0 for g in self.gates_sigma):
            raise ConfigError("gates must be positive")
        if self.adapt_window < 10:
            raise ConfigError("adapt_window must be >= 10")
        if self.kinematics_frame not in KINEMATICS_FRAMES:
            raise ConfigError(
                f"kinematics_frame must be one of {KINEMATICS_FRAMES}")
        if self.backend not in ("auto", "native", "python"):
            raise ConfigError("backend must be auto, native or python")


def wrap_angle(a):
    """Wrap to the principal range (-pi, pi]."""
    return a - 2.0 * np.pi * np.ceil((a - np.pi) / (2.0 * np.pi))


def rotation_body_to_nav(euler) -> np.ndarray:
    """Body-to-ENU rotation matrix for ZYX Euler angles (roll, pitch, yaw)."""
    phi, theta, psi = euler
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(psi), math.sin(psi)
    return np.array([
        [ct * cp, -cf * sp + sf * st * cp, sf * sp + cf * st * cp],
        [ct * sp, cf * cp + sf * st * sp, -sf * cp + cf * st * sp],
        [-st, sf * ct, cf * ct],
    ])


def euler_rate_matrix(euler) -> np.ndarray:
    """Matrix mapping angular rates to Euler angle derivatives."""
    phi, theta, _ = euler
    ct = math.cos(theta)
    if abs(ct) < GIMBAL_COS_MIN:
        raise NumericError(f"pitch {theta:.4f} rad too close to +/-pi/2")
    cf, sf = math.cos(phi), math.sin(phi)
    tt = math.sin(theta) / ct
    return np.array([
        [1.0, sf * tt, cf * tt],
        [0.0, cf, -sf],
        [0.0, sf / ct, cf / ct],
    ])


def body_to_enu_rates(euler, gyro) -> np.ndarray:
    """Rotate body-frame gyro rates into the navigation frame."""
    return rotation_body_to_nav(euler) @ np.asarray(gyro, dtype=float)


def euler_rates(euler, gyro, frame: str = "enu_rates") -> np.ndarray:
    """Euler angle derivatives from gyro rates.

    frame selects what feeds the rate matrix: "enu_rates" first rotates the
    gyro vector into the navigation frame, "body_rates" applies the matrix to
    the body rates directly (the textbook strapdown form).  Both are exposed
    because downstream results are reported for the first while the second is
    the conventional formulation.
    """
    T = euler_rate_matrix(euler)
    g = np.asarray(gyro, dtype=float)
    if frame == "enu_rates":
        return T @ (rotation_body_to_nav(euler) @ g)
    if frame == "body_rates":
        return T @ g
    raise ConfigError(f"unknown kinematics frame {frame!r}")


def accel_to_euler(acc):
    """Gravity-referenced (roll, pitch, nan) from one accelerometer sample.

    Yaw is unobservable from gravity alone and is returned as NaN.  Requires
    |acc| > 0.5 g; near free fall there is no usable gravity direction.
    """
    ax, ay, az = (float(v) for v in acc)
    norm = math.sqrt(ax * ax + ay * ay + az * az)
    if norm <= FREEFALL_FRACTION * G_STANDARD:
        raise ValidationError(
            f"|acc| = {norm:.2f} m/s^2 too small for a gravity observation")
    roll = math.atan2(ay, az)
    pitch = math.atan2(-ax, math.sqrt(ay * ay + az * az))
    return roll, pitch, math.nan


def _inv2(s11, s12, s22):
    det = s11 * s22 - s12 * s12
    if det <= 0:
        raise NumericError("innovation covariance not positive definite")
    return s22 / det, -s12 / det, s11 / det, det


def _inv3(m: np.ndarray) -> np.ndarray:
    """Closed-form 3x3 inverse (adjugate / det); inputs here are small SPD."""
    a, b, c = m[0]
    d, e, f = m[1]
    g, h, i = m[2]
    co = np.array([
        [e * i - f * h, c * h - b * i, b * f - c * e],
        [f * g - d * i, a * i - c * g, c * d - a * f],
        [d * h - e * g, b * g - a * h, a * e - b * d],
    ])
    det = a * co[0, 0] + b * co[1, 0] + c * co[2, 0]
    if det == 0:
        raise NumericError("singular covariance")
    return co / det


def _clip_psd2(m: np.ndarray, floor: float) -> np.ndarray:
    """Symmetrise a 2x2 matrix and clip its eigenvalues from below."""
    a = m[0, 0]
    b = 0.5 * (m[0, 1] + m[1, 0])
    c = m[1, 1]
    half = 0.5 * (a - c)
    disc = math.hypot(half, b)
    l1 = 0.5 * (a + c) + disc
    l2 = 0.5 * (a + c) - disc
    if l2 >= floor:
        return np.array([[a, b], [b, c]])
    l1c = max(l1, floor)
    l2c = max(l2, floor)
    if disc < 1e-300:
        return np.array([[l1c, 0.0], [0.0, l2c]])
    if abs(b) > abs(half):
        v = np.array([b, l1 - a])
    else:
        v = np.array([l1 - c, b])
    v = v / math.hypot(v[0], v[1])
    w = np.array([-v[1], v[0]])
    return l1c * np.outer(v, v) + l2c * np.outer(w, w)


@dataclass
class KalmanState:
    """One filter of the bank: state, covariances and adaptation bookkeeping.

    The transition matrix is the identity and the control matrix is dt times
    the identity (attitude driven by Euler rates), so neither is stored as
    data; `A` and `input_matrix` expose them for inspection.
    """

    x_hat: np.ndarray                 # (3,) roll, pitch, yaw in rad
    P: np.ndarray                     # (3, 3) state covariance
    R_obs: np.ndarray                 # (3, 3) observation covariance
    q_rate: float                     # process noise density, rad/sqrt(s)
    q_scale: float = 1.0              # adaptive multiplier, clamped [0.1, 10]
    r_nominal: float = math.radians(2.0)
    r_floor: float = math.radians(0.3)
    gate_sigma: float = 3.0
    window: deque = field(default_factory=lambda: deque(maxlen=50))
    Q: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    last_passed: bool | None = None   # None: no observation this step
    last_d2: float = math.nan
    last_det_s2: float = math.nan

    @property
    def A(self) -> np.ndarray:
        return np.eye(3)

    def input_matrix(self, dt: float) -> np.ndarray:
        return dt * np.eye(3)


@dataclass
class FilterBank:
    filters: list


@dataclass
class EulerSeries:
    """Fused attitude track with per-step fusion diagnostics."""

    t: np.ndarray
    angles: np.ndarray            # (n, 3) rad
    innovation_norm: np.ndarray   # (n,) mean per-axis Mahalanobis distance
    weights: np.ndarray           # (n, bank_size) fusion weights
    gated_steps: int              # steps where every filter rejected the obs
    backend: str

    @property
    def roll(self):
        return self.angles[:, 0]

    @property
    def pitch(self):
        return self.angles[:, 1]

    @property
    def yaw(self):
        return self.angles[:, 2]


@dataclass(frozen=True)
class GateResult:
    nu2: np.ndarray
    d2: float
    det_s2: float
    passed: bool


def make_filter_bank(cfg: FusionConfig, x0) -> FilterBank:
    x0 = np.asarray(x0, dtype=float)
    p0 = math.radians(cfg.init_p_deg) ** 2
    r = math.radians(cfg.r_nominal_deg)
    filters = []
    for g in cfg.gates_sigma:
        filters.append(KalmanState(
            x_hat=x0.copy(),
            P=p0 * np.eye(3),
            R_obs=np.diag([r * r, r * r, R_YAW_UNOBSERVED]),
            q_rate=math.radians(cfg.q_nominal_deg),
            r_nominal=r,
            r_floor=math.radians(cfg.r_floor_deg),
            gate_sigma=float(g),
            window=deque(maxlen=cfg.adapt_window),
        ))
    return FilterBank(filters=filters)


def kf_predict(state: KalmanState, u, dt: float) -> None:
    """Propagate with Euler-rate control input u over dt seconds."""
    if dt <= 0:
        raise NumericError(f"non-positive dt {dt}")
    q = state.q_scale * state.q_rate * state.q_rate * dt
    state.Q = q * np.eye(3)
    state.x_hat = wrap_angle(state.x_hat + dt * np.asarray(u, dtype=float))
    state.P = state.P + state.Q


def gate_innovation(state: KalmanState, z) -> GateResult:
    """Mahalanobis test of the roll/pitch innovation against the filter gate.

    The gate g accepts innovations whose mean squared Mahalanobis distance
    per observed axis is at most g^2, i.e. d2 <= 2 g^2 for the two observed
    components.
    """
    nu = wrap_angle(np.asarray(z, dtype=float) - state.x_hat)[:2]
    s11 = state.P[0, 0] + state.R_obs[0, 0]
    s12 = state.P[0, 1] + state.R_obs[0, 1]
    s22 = state.P[1, 1] + state.R_obs[1, 1]
    i11, i12, i22, det = _inv2(s11, s12, s22)
    d2 = nu[0] * (i11 * nu[0] + i12 * nu[1]) + nu[1] * (i12 * nu[0] + i22 * nu[1])
    return GateResult(nu2=nu, d2=float(d2), det_s2=float(det),
                      passed=bool(d2 <= 2.0 * state.gate_sigma ** 2))


def kf_update(state: KalmanState, z) -> None:
    """Measurement update with the identity observation model, Joseph form.

    z carries (roll_acc, pitch_acc, yaw); callers without a yaw reference
    pass the predicted yaw so its innovation is zero, and the huge yaw entry
    of R_obs keeps the gain there negligible either way.
    """
    gate = gate_innovation(state, z)
    nu = wrap_angle(np.asarray(z, dtype=float) - state.x_hat)
    S = state.P + state.R_obs
    K = state.P @ _inv3(S)
    state.x_hat = wrap_angle(state.x_hat + K @ nu)
    ikh = np.eye(3) - K
    state.P = ikh @ state.P @ ikh.T + K @ state.R_obs @ K.T
    state.last_passed = True
    state.last_d2 = gate.d2
    state.last_det_s2 = gate.det_s2


def adapt_noise(state: KalmanState, innovations) -> None:
    """Re-estimate R and rescale Q from a window of innovations.

    R (roll/pitch block) becomes the window sample covariance minus the state
    covariance contribution, floored so it stays positive definite.  Q is the
    nominal density scaled by the ratio of observed to predicted innovation
    energy, clamped to [0.1, 10].
    """
    nu = np.asarray(innovations, dtype=float)
    if nu.ndim != 2 or nu.shape[1] != 2 or nu.shape[0] < 2:
        raise ValidationError("innovation window must be (n >= 2, 2)")
    p2 = state.P[:2, :2]
    predicted = p2[0, 0] + p2[1, 1] + state.R_obs[0, 0] + state.R_obs[1, 1]
    observed = float(np.mean(np.sum(nu * nu, axis=1)))
    mean = nu.mean(axis=0)
    centred = nu - mean
    cov = centred.T @ centred / (nu.shape[0] - 1)
    floor = state.r_floor ** 2
    r2 = _clip_psd2(cov - p2, floor)
    state.R_obs[0, 0] = r2[0, 0]
    state.R_obs[0, 1] = r2[0, 1]
    state.R_obs[1, 0] = r2[1, 0]
    state.R_obs[1, 1] = r2[1, 1]
    state.q_scale = float(np.clip(observed / predicted, 0.1, 10.0))


def bank_fuse(bank: FilterBank):
    """Likelihood-weighted fusion of the bank estimates.

    Filters whose last innovation failed their gate contribute zero weight.
    If every filter rejected (or no observation arrived) the fused output is
    the equally weighted mean of the per-filter predictions.  Weighted angle
    averaging is done relative to the first contributing filter so wrapping
    cannot split the mean.
    """
    filters = bank.filters
    weights = np.zeros(len(filters))
    passing = [i for i, f in enumerate(filters) if f.last_passed]
    if passing:
        for i in passing:
            f = filters[i]
            weights[i] = math.exp(-0.5 * f.last_d2) / math.sqrt(f.last_det_s2)
        weights /= weights.sum()
    else:
        weights[:] = 1.0 / len(filters)
    ref = filters[int(np.argmax(weights))].x_hat
    fused = ref.copy()
    delta = np.zeros(3)
    for i, f in enumerate(filters):
        if weights[i] > 0.0:
            delta += weights[i] * wrap_angle(f.x_hat - ref)
    fused = wrap_angle(ref + delta)
    return fused, weights


def _initial_state(trial: ImuTrial, cfg: FusionConfig) -> np.ndarray:
    """Mean accel roll/pitch over the opening window; yaw starts at zero."""
    lim = trial.t[0] + cfg.init_window_s
    rolls, pitches = [], []
    for i in range(trial.n):
        if trial.t[i] > lim:
            break
        a = trial.acc[i]
        if math.sqrt(a @ a) > FREEFALL_FRACTION * G_STANDARD:
            r, p, _ = accel_to_euler(a)
            rolls.append(r)
            pitches.append(p)
    if not rolls:
        raise AnalysisError(
            f"no usable gravity observation in the first {cfg.init_window_s} s")
    return np.array([np.mean(rolls), np.mean(pitches), 0.0])


def estimate_attitude(trial: ImuTrial, cfg: FusionConfig = FusionConfig(),
                      backend: str | None = None) -> EulerSeries:
    """Run the adaptive filter bank over a preprocessed trial."""
    if trial.n < 2:
        raise ValidationError("need at least two samples")
    x0 = _initial_state(trial, cfg)
    chosen = backend if backend is not None else cfg.backend
    if chosen not in ("auto", "native", "python"):
        raise ConfigError(f"unknown backend {chosen!r}")
    if chosen in ("auto", "native"):
        from . import kernels
        if kernels.NATIVE is not None:
            out = kernels.NATIVE.kalman_bank_run(
                np.ascontiguousarray(trial.t, dtype=np.float64),
                np.ascontiguousarray(trial.acc, dtype=np.float64),
                np.ascontiguousarray(trial.gyro, dtype=np.float64),
                x0,
                np.asarray(cfg.gates_sigma, dtype=np.float64),
                math.radians(cfg.q_nominal_deg),
                math.radians(cfg.r_nominal_deg),
                math.radians(cfg.init_p_deg),
                math.radians(cfg.r_floor_deg),
                cfg.adapt_window, cfg.adapt_min,
                1 if cfg.kinematics_frame == "enu_rates" else 0,
            )
            angles, innov, weights, gated = out
            return EulerSeries(t=trial.t, angles=angles, innovation_norm=innov,
                               weights=weights, gated_steps=int(gated),
                               backend="native")
        if chosen == "native":
            raise ConfigError("native backend requested but not built")
    return _estimate_attitude_python(trial, cfg, x0)


def _estimate_attitude_python(trial: ImuTrial, cfg: FusionConfig,
                              x0: np.ndarray) -> EulerSeries:
    n = trial.n
    bank = make_filter_bank(cfg, x0)
    nf = len(bank.filters)
    angles = np.empty((n, 3))
    innov = np.full(n, np.nan)
    weights = np.zeros((n, nf))
    angles[0] = x0
    weights[0] = 1.0 / nf
    gated_steps = 0
    threshold = FREEFALL_FRACTION * G_STANDARD
    for k in range(1, n):
        dt = float(trial.t[k] - trial.t[k - 1])
        gyro = trial.gyro[k - 1]
        for f in bank.filters:
            try:
                u = euler_rates(f.x_hat, gyro, cfg.kinematics_frame)
            except NumericError as exc:
                raise NumericError(str(exc), index=k) from exc
            kf_predict(f, u, dt)
        a = trial.acc[k]
        if math.sqrt(a @ a) > threshold:
            roll_a, pitch_a, _ = accel_to_euler(a)
            ds = []
            for f in bank.filters:
                z = np.array([roll_a, pitch_a, f.x_hat[2]])
                gate = gate_innovation(f, z)
                if gate.passed:
                    kf_update(f, z)
                    f.window.append(gate.nu2)
                    if len(f.window) >= cfg.adapt_min:
                        adapt_noise(f, np.asarray(f.window))
                else:
                    f.last_passed = False
                    f.last_d2 = gate.d2
                    f.last_det_s2 = gate.det_s2
                ds.append(math.sqrt(gate.d2 / 2.0))
            innov[k] = float(np.mean(ds))
            if not any(f.last_passed for f in bank.filters):
                gated_steps += 1
        else:
            for f in bank.filters:
                f.last_passed = None
        angles[k], weights[k] = bank_fuse(bank)
    return EulerSeries(t=trial.t, angles=angles, innovation_norm=innov,
                       weights=weights, gated_steps=gated_steps,
                       backend="python")


def integrate_gyro(trial: ImuTrial, x0=None, frame: str = "enu_rates") -> np.ndarray:
    """Dead-reckoned attitude from the gyro alone (no corrections)."""
    if x0 is None:
        x0 = _initial_state(trial, FusionConfig())
    x = np.asarray(x0, dtype=float).copy()
    out = np.empty((trial.n, 3))
    out[0] = x
    for k in range(1, trial.n):
        dt = float(trial.t[k] - trial.t[k - 1])
        try:
            u = euler_rates(x, trial.gyro[k - 1], frame)
        except NumericError as exc:
            raise NumericError(str(exc), index=k) from exc
        x = wrap_angle(x + dt * u)
        out[k] = x
    return out


def accel_attitude(trial: ImuTrial) -> np.ndarray:
    """Per-sample accel-only roll/pitch, NaN where gravity is unusable."""
    out = np.full((trial.n, 2), np.nan)
    threshold = FREEFALL_FRACTION * G_STANDARD
    for i in range(trial.n):
        a = trial.acc[i]
        if math.sqrt(a @ a) > threshold:
            r, p, _ = accel_to_euler(a)
            out[i] = (r, p)
    return out
