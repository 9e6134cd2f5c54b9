"""The 12-parameter gait feature model.

Per trial: stride frequency SF, stride length SL, stride speed SS, stride
time ST, step time STT, stance and swing phase fractions STP/SWP, stride
length and stride time variability SV/STV, gait stability STA (largest
Lyapunov exponent of the pitch track), and two kinematic excursions WQK
(early-stance flexion from pitch) and BDK (swing excursion from roll).

Only one leg is instrumented, so STT is the ST/2 proxy and SF = 1/STT; both
are therefore deterministic functions of ST, which keeps the vector aligned
with the usual bilateral definitions without pretending to contralateral
data.  Variability is the coefficient of variation sd/mean with the sample
(n-1) standard deviation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .attitude import EulerSeries, FusionConfig, estimate_attitude, rotation_body_to_nav
from .errors import AnalysisError, ConfigError, QualityError
from .imu_io import G_STANDARD, ImuTrial
from .preprocess import PreprocConfig, preprocess_trial
from .segmentation import GaitCycleSet, SegConfig, segment_gait

FEATURE_NAMES = ("SF", "SL", "SS", "ST", "STT", "STP", "SWP",
                 "SV", "STV", "STA", "WQK", "BDK")

EARLY_STANCE_FRACTION = 0.25   # window for WQK, measured from heel strike
MIN_EMBEDDED_POINTS = 100
MAX_PLAUSIBLE_SPEED = 5.0      # m/s; faster means the integration diverged


@dataclass(frozen=True)
class EmbeddingConfig:
    """Delay-embedding parameters for the stability estimate.

    Zeros mean "derive from the data": the delay falls back to the first
    autocorrelation zero crossing, the neighbour separation to one embedding
    window, and the divergence fit length to half a mean stride.
    """

    dim: int = 5
    delay: int = 0
    evolve_steps: int = 0
    min_separation: int = 0
    fit_window: tuple | None = None   # (first, last) step of the slope fit

    def __post_init__(self):
        if self.dim < 2:
            raise ConfigError("embedding dim must be >= 2")
        if min(self.delay, self.evolve_steps, self.min_separation) < 0:
            raise ConfigError("embedding parameters cannot be negative")
        if self.fit_window is not None:
            lo, hi = self.fit_window
            if not 0 <= lo < hi:
                raise ConfigError("fit_window must satisfy 0 <= first < last")


@dataclass(frozen=True)
class FeatureVector:
    subject_id: str
    leg: str
    group: str
    n_strides: int
    values: tuple  # aligned with FEATURE_NAMES

    def as_dict(self) -> dict:
        return dict(zip(FEATURE_NAMES, self.values))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


def variability(values) -> float:
    """Coefficient of variation: sample sd over mean."""
    v = np.asarray(values, dtype=float)
    if len(v) < 2:
        raise AnalysisError("variability needs at least two values")
    mean = float(np.mean(v))
    if mean == 0.0:
        raise AnalysisError("variability undefined for zero-mean stream")
    return float(np.std(v, ddof=1) / mean)


def autocorr_zero_crossing(series: np.ndarray) -> int:
    """Lag of the first non-positive autocorrelation value."""
    x = np.asarray(series, dtype=float)
    x = x - x.mean()
    denom = float(x @ x)
    if denom == 0.0:
        raise AnalysisError("constant series has no autocorrelation structure")
    for lag in range(1, len(x)):
        if float(x[lag:] @ x[:-lag]) / denom <= 0.0:
            return lag
    raise AnalysisError("autocorrelation never crosses zero")


def _embed(series: np.ndarray, dim: int, delay: int) -> np.ndarray:
    n = len(series) - (dim - 1) * delay
    if n < MIN_EMBEDDED_POINTS:
        raise AnalysisError(
            f"{n} embedded points (need >= {MIN_EMBEDDED_POINTS}); "
            "series too short for this embedding")
    idx = np.arange(n)[:, None] + delay * np.arange(dim)[None, :]
    return np.ascontiguousarray(series[idx], dtype=float)


def _divergence_curve_numpy(Y: np.ndarray, min_sep: int, k_steps: int) -> np.ndarray:
    """Mean log distance between each point and its nearest neighbour as both
    evolve k steps; reference points and neighbours are restricted to indices
    that stay in range for the whole horizon."""
    m = Y.shape[0]
    last = m - k_steps
    if last < 2:
        raise AnalysisError("evolve_steps leaves no trackable pairs")
    base = Y[:last]
    nn = np.empty(last, dtype=np.intp)
    block = 256
    for lo in range(0, last, block):
        hi = min(lo + block, last)
        d2 = ((base[lo:hi, None, :] - base[None, :, :]) ** 2).sum(axis=2)
        for r, j in enumerate(range(lo, hi)):
            row = d2[r]
            sep_lo = max(0, j - min_sep + 1)
            sep_hi = min(last, j + min_sep)
            row[sep_lo:sep_hi] = np.inf
            row[row == 0.0] = np.inf
            nn[j] = np.argmin(row)
        if not np.all(np.isfinite(d2[np.arange(hi - lo), nn[lo:hi]])):
            raise AnalysisError("no admissible nearest neighbour; "
                                "min_separation too large for this series")
    js = np.arange(last)
    curve = np.empty(k_steps + 1)
    for i in range(k_steps + 1):
        d2 = ((Y[js + i] - Y[nn + i]) ** 2).sum(axis=1)
        curve[i] = 0.5 * float(np.mean(np.log(np.maximum(d2, 1e-300))))
    return curve


def lyapunov_max(series: np.ndarray, fs: float,
                 cfg: EmbeddingConfig = EmbeddingConfig(),
                 backend: str = "auto") -> float:
    """Largest Lyapunov exponent, per second, from one scalar series.

    Delay embedding, temporally separated nearest neighbours, and a least
    squares slope of the mean log-divergence curve over the initial
    `evolve_steps` horizon (the caller chooses that horizon to cover the
    linear region).
    """
    x = np.asarray(series, dtype=float)
    delay = cfg.delay if cfg.delay > 0 else autocorr_zero_crossing(x)
    k_steps = cfg.evolve_steps if cfg.evolve_steps > 0 else 50
    min_sep = cfg.min_separation if cfg.min_separation > 0 \
        else (cfg.dim - 1) * delay + 1
    Y = _embed(x, cfg.dim, delay)
    from . import kernels
    if backend == "python" or kernels.NATIVE is None:
        if backend == "native" and kernels.NATIVE is None:
            raise ConfigError("native backend requested but not built")
        curve = _divergence_curve_numpy(Y, min_sep, k_steps)
    else:
        curve = kernels.NATIVE.divergence_curve(Y, min_sep, k_steps)
    if cfg.fit_window is not None:
        lo, hi = cfg.fit_window
        if hi >= len(curve):
            raise ConfigError(
                f"fit_window end {hi} beyond tracked horizon {len(curve) - 1}")
        sel = slice(lo, hi + 1)
    else:
        sel = slice(0, len(curve))
    steps = np.arange(len(curve))
    slope = float(np.polyfit(steps[sel], curve[sel], 1)[0])
    return slope * fs


def stride_lengths(trial: ImuTrial, series: EulerSeries,
                   cycles: GaitCycleSet) -> np.ndarray:
    """Per-stride horizontal displacement via zero-velocity-anchored
    double integration.

    Body acceleration is rotated into the navigation frame with the fused
    attitude and gravity is removed.  Velocity restarts from rest at each
    mid-stance anchor; the residual velocity at the next anchor is treated
    as linear drift and ramped out before integrating position.
    """
    if len(cycles.cycles) < 2:
        raise AnalysisError("need at least two cycles for stride lengths")
    a_nav = np.empty((trial.n, 3))
    for k in range(trial.n):
        a_nav[k] = rotation_body_to_nav(series.angles[k]) @ trial.acc[k]
    a_nav[:, 2] -= G_STANDARD
    anchors = []
    for c in cycles.cycles:
        t_mid = c.hs.t + 0.5 * c.stance_time
        anchors.append(int(np.argmin(np.abs(trial.t - t_mid))))
    out = np.empty(len(anchors) - 1)
    for i in range(len(anchors) - 1):
        lo, hi = anchors[i], anchors[i + 1]
        seg_t = trial.t[lo:hi + 1]
        seg_a = a_nav[lo:hi + 1, :2]
        dt = np.diff(seg_t)[:, None]
        v = np.vstack([np.zeros((1, 2)),
                       np.cumsum(0.5 * (seg_a[1:] + seg_a[:-1]) * dt, axis=0)])
        ramp = ((seg_t - seg_t[0]) / (seg_t[-1] - seg_t[0]))[:, None]
        v = v - ramp * v[-1]
        peak = float(np.max(np.hypot(v[:, 0], v[:, 1])))
        if peak > MAX_PLAUSIBLE_SPEED:
            raise QualityError(
                f"stride {i}: integrated speed {peak:.2f} m/s exceeds "
                f"{MAX_PLAUSIBLE_SPEED:.0f} m/s, attitude or anchors unusable")
        p = np.vstack([np.zeros((1, 2)),
                       np.cumsum(0.5 * (v[1:] + v[:-1]) * dt, axis=0)])
        out[i] = math.hypot(p[-1, 0], p[-1, 1])
    return out


def knee_excursions(series: EulerSeries, cycles: GaitCycleSet):
    """(early-stance pitch excursion, swing roll excursion) per stride, deg.

    Both are measured relative to the stride's mid-stance attitude: flexion
    lives in pitch during the first quarter of stance, the swing excursion in
    roll between toe off and the next heel strike.
    """
    wqk, bdk = [], []
    for c in cycles.cycles:
        mid = int(np.argmin(np.abs(series.t - (c.hs.t + 0.5 * c.stance_time))))
        ref_roll = series.angles[mid, 0]
        ref_pitch = series.angles[mid, 1]
        early_end = int(np.argmin(np.abs(
            series.t - (c.hs.t + EARLY_STANCE_FRACTION * c.stance_time))))
        early = series.angles[c.hs.index:early_end + 1, 1]
        swing = series.angles[c.to.index:c.next_hs.index + 1, 0]
        wqk.append(math.degrees(np.max(np.abs(early - ref_pitch))))
        bdk.append(math.degrees(np.max(np.abs(swing - ref_roll))))
    return np.array(wqk), np.array(bdk)


def feature_vector(trial: ImuTrial, series: EulerSeries, cycles: GaitCycleSet,
                   embed_cfg: EmbeddingConfig = EmbeddingConfig(),
                   backend: str = "auto") -> FeatureVector:
    """Assemble the full 12-entry vector for one trial."""
    cyc = cycles.cycles
    if len(cyc) < 3:
        raise AnalysisError(
            f"insufficient strides: {len(cyc)} cycles, need at least 3")
    stride_t = np.array([c.stride_time for c in cyc])
    st = float(np.mean(stride_t))
    stt = 0.5 * st
    sf = 1.0 / stt
    stp = float(np.mean([c.stance_fraction for c in cyc]))
    swp = 1.0 - stp
    sl_stream = stride_lengths(trial, series, cycles)
    sl = float(np.mean(sl_stream))
    ss = sl / st
    sv = variability(sl_stream)
    stv = variability(stride_t)
    fs = trial.sample_rate_hz
    lo = cyc[0].hs.index
    hi = cyc[-1].next_hs.index
    mean_stride_samples = int(round(st * fs))
    cfg = embed_cfg
    if cfg.evolve_steps == 0:
        cfg = EmbeddingConfig(dim=cfg.dim, delay=cfg.delay,
                              evolve_steps=max(2, mean_stride_samples // 2),
                              min_separation=cfg.min_separation or mean_stride_samples)
    sta = lyapunov_max(series.pitch[lo:hi + 1], fs, cfg, backend=backend)
    wqk_stream, bdk_stream = knee_excursions(series, cycles)
    values = (sf, sl, ss, st, stt, stp, swp, sv, stv, sta,
              float(np.mean(wqk_stream)), float(np.mean(bdk_stream)))
    if not all(math.isfinite(v) for v in values):
        raise AnalysisError(f"non-finite feature in {dict(zip(FEATURE_NAMES, values))}")
    return FeatureVector(subject_id=trial.subject_id, leg=trial.leg.value,
                         group=trial.group.value, n_strides=len(cyc),
                         values=values)


def analyze_trial(trial: ImuTrial,
                  pre_cfg: PreprocConfig = PreprocConfig(),
                  fusion_cfg: FusionConfig = FusionConfig(),
                  seg_cfg: SegConfig = SegConfig(),
                  embed_cfg: EmbeddingConfig = EmbeddingConfig()):
    """Full single-trial pipeline; returns (series, cycles, features)."""
    conditioned, _ = preprocess_trial(trial, pre_cfg)
    series = estimate_attitude(conditioned, fusion_cfg)
    cycles = segment_gait(series, seg_cfg)
    fv = feature_vector(conditioned, series, cycles, embed_cfg,
                        backend=fusion_cfg.backend)
    return series, cycles, fv
