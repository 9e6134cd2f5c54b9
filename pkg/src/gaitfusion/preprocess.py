"""Signal conditioning ahead of attitude estimation.

Fixed stage order: crop -> resultant magnitude / outlier masking -> low-pass
filter -> gap interpolation.  Outliers are masked (NaN) and re-filled rather
than deleted so the uniform time base survives for the Kalman recursion.  The
low-pass runs once forward and once backward for zero phase lag; the filter
must not move gait events in time.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, QualityError, ValidationError
from .imu_io import ImuTrial

MAX_GAP_S = 0.25  # longest run of masked samples linear interpolation may bridge


@dataclass(frozen=True)
class PreprocConfig:
    outlier_sigma: float = 3.0        # masking threshold, in sample SDs
    butter_order: int = 4             # even positive integer
    butter_cutoff_hz: float = 10.0    # low-pass corner
    crop: tuple | None = None         # (start_s, end_s) straight-walk window


@dataclass
class PreprocReport:
    """What the pipeline did to each channel."""

    n_in: int
    n_cropped: int
    masked: dict          # channel name -> list of masked sample indices
    max_gap_s: float


def acc_magnitude(acc) -> np.ndarray | float:
    """Resultant acceleration; accepts one sample (3,) or a series (n, 3)."""
    acc = np.asarray(acc, dtype=float)
    return np.sqrt(np.sum(acc * acc, axis=-1))


def crop_straight_walk(trial: ImuTrial, window: tuple) -> ImuTrial:
    """Keep samples with start <= t <= end and re-zero the time base."""
    start, end = window
    if not (end > start):
        raise ConfigError(f"crop window end must exceed start, got {window}")
    keep = (trial.t >= start) & (trial.t <= end)
    if not np.any(keep):
        raise ValidationError(f"crop window {window} removes every sample")
    flags = [(int(np.sum(keep[:i])), kind) for i, kind in trial.range_flags if keep[i]]
    return trial.replace(
        t=trial.t[keep] - start,
        acc=trial.acc[keep],
        gyro=trial.gyro[keep],
        range_flags=flags,
    )


def reject_outliers(series: np.ndarray, k_sigma: float = 3.0):
    """Mask samples beyond k_sigma sample SDs of the mean with NaN.

    Single pass: mean and SD come from the input once; masking does not
    trigger re-evaluation.  Returns (masked copy, boolean mask of outliers).
    """
    series = np.asarray(series, dtype=float)
    mean = float(np.mean(series))
    sd = float(np.std(series, ddof=1)) if len(series) > 1 else 0.0
    if sd == 0.0:
        return series.copy(), np.zeros(len(series), dtype=bool)
    mask = np.abs(series - mean) > k_sigma * sd
    out = series.copy()
    out[mask] = np.nan
    return out, mask


def butterworth_coeffs(fs: float, fc: float, order: int = 4):
    """Digital low-pass Butterworth (b, a) via the analog prototype.

    Prototype poles on the unit left half circle are scaled by the pre-warped
    corner tan(pi*fc/fs), then mapped with the bilinear transform.  DC gain is
    normalised to one.
    """
    if order <= 0 or order % 2 != 0:
        raise ConfigError(f"butter_order must be an even positive integer, got {order}")
    if not (0.0 < fc < fs / 2.0):
        raise ConfigError(f"cutoff {fc} Hz must lie in (0, fs/2) for fs={fs} Hz")
    warped = math.tan(math.pi * fc / fs)
    poles_a = [
        warped * cmath.exp(1j * math.pi * (2 * k + order + 1) / (2 * order))
        for k in range(order)
    ]
    poles_z = [(1 + p) / (1 - p) for p in poles_a]
    a = np.real(np.poly(poles_z))
    b = np.real(np.poly([-1.0] * order))
    gain = np.sum(a) / np.sum(b)  # unit gain at z = 1
    return b * gain, a


def magnitude_response(b: np.ndarray, a: np.ndarray, f, fs: float):
    """|H| of the single-pass filter at frequency f (Hz)."""
    w = 2.0 * np.pi * np.asarray(f, dtype=float) / fs
    z = np.exp(-1j * w)
    num = np.polyval(b[::-1], z)
    den = np.polyval(a[::-1], z)
    return np.abs(num / den)


def steady_state_ic(b: np.ndarray, a: np.ndarray) -> np.ndarray:
    """DF2T state, per unit of input, that holds a constant in steady state."""
    b = np.asarray(b, dtype=float)
    a = np.asarray(a, dtype=float)
    gain = np.sum(b) / np.sum(a)
    tail = b[1:] - a[1:] * gain
    return np.cumsum(tail[::-1])[::-1]


def iir_filter(b: np.ndarray, a: np.ndarray, x: np.ndarray,
               zi: np.ndarray | None = None) -> np.ndarray:
    """Direct form II transposed IIR run; filters columns when x is 2-D.

    zi, when given, is the per-unit-input steady-state vector; it is scaled
    by the first sample of each column so step transients start settled.
    """
    b = np.asarray(b, dtype=float)
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    one_d = x.ndim == 1
    if one_d:
        x = x[:, None]
    order = len(a) - 1
    y = np.empty_like(x)
    if zi is None:
        state = np.zeros((order, x.shape[1]))
    else:
        state = np.outer(np.asarray(zi, dtype=float), x[0])
    for i in range(x.shape[0]):
        xi = x[i]
        yi = b[0] * xi + state[0]
        for k in range(order - 1):
            state[k] = b[k + 1] * xi + state[k + 1] - a[k + 1] * yi
        state[order - 1] = b[order] * xi - a[order] * yi
        y[i] = yi
    return y[:, 0] if one_d else y


def butterworth_lowpass(series: np.ndarray, fs: float, fc: float, order: int = 4) -> np.ndarray:
    """Zero-phase low-pass: reflect-pad 3*order samples, filter twice, trim.

    NaN entries are bridged linearly for the filter run and restored to NaN
    afterwards, so masked samples stay masked until interpolation.
    """
    series = np.asarray(series, dtype=float)
    one_d = series.ndim == 1
    x = series[:, None] if one_d else series
    n = x.shape[0]
    pad = 3 * order
    if n <= pad:
        raise ValidationError(f"series of {n} samples too short for pad of {pad}")
    nan_mask = np.isnan(x)
    if nan_mask.any():
        x = x.copy()
        for c in range(x.shape[1]):
            x[:, c] = _bridge_nans(x[:, c])
    b, a = butterworth_coeffs(fs, fc, order)
    zi = steady_state_ic(b, a)
    # Reflect interior samples about each end to suppress edge transients.
    ext = np.concatenate([2 * x[0] - x[pad:0:-1], x, 2 * x[-1] - x[-2:-pad - 2:-1]])
    y = iir_filter(b, a, ext, zi=zi)
    y = iir_filter(b, a, y[::-1], zi=zi)[::-1]
    y = y[pad:pad + n]
    y[nan_mask] = np.nan
    return y[:, 0] if one_d else y


def _bridge_nans(col: np.ndarray) -> np.ndarray:
    """Linear fill of NaN runs (ends hold the nearest valid value)."""
    valid = ~np.isnan(col)
    if valid.all():
        return col
    if not valid.any():
        raise QualityError("channel contains no valid samples")
    idx = np.arange(len(col))
    out = col.copy()
    out[~valid] = np.interp(idx[~valid], idx[valid], col[valid])
    return out


def interpolate_gaps(series: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Fill NaN runs by linear interpolation in time.

    A run spanning more than MAX_GAP_S raises QualityError naming the span;
    leading/trailing runs hold the nearest valid sample.
    """
    series = np.asarray(series, dtype=float)
    t = np.asarray(t, dtype=float)
    invalid = np.isnan(series)
    if not invalid.any():
        return series.copy()
    if invalid.all():
        raise QualityError("series contains no valid samples to interpolate from")
    # Locate runs of consecutive NaNs and check their spans.
    i = 0
    n = len(series)
    while i < n:
        if invalid[i]:
            j = i
            while j < n and invalid[j]:
                j += 1
            lo = t[i - 1] if i > 0 else t[i]
            hi = t[j] if j < n else t[j - 1]
            span = float(hi - lo)
            if 0 < i and j < n and span > MAX_GAP_S:
                raise QualityError(
                    f"gap of {span:.3f} s ({t[i]:.3f}..{t[j - 1]:.3f} s) exceeds "
                    f"{MAX_GAP_S} s, cannot interpolate")
            i = j
        else:
            i += 1
    out = series.copy()
    valid = ~invalid
    out[invalid] = np.interp(t[invalid], t[valid], series[valid])
    return out


def preprocess_trial(trial: ImuTrial, cfg: PreprocConfig = PreprocConfig()):
    """Run the full conditioning pipeline; returns (trial, report)."""
    n_in = trial.n
    if cfg.crop is not None:
        trial = crop_straight_walk(trial, cfg.crop)
    fs = trial.sample_rate_hz
    channels = {}
    for j, name in enumerate(("ax", "ay", "az")):
        channels[name] = trial.acc[:, j]
    for j, name in enumerate(("gx", "gy", "gz")):
        channels[name] = trial.gyro[:, j]
    # The resultant magnitude participates in outlier screening: a sample
    # whose magnitude is anomalous is masked on all accelerometer axes.
    mag_masked, mag_mask = reject_outliers(acc_magnitude(trial.acc), cfg.outlier_sigma)
    masked_report = {}
    cleaned = {}
    max_gap = 0.0
    for name, col in channels.items():
        col_masked, col_mask = reject_outliers(col, cfg.outlier_sigma)
        if name.startswith("a"):
            col_masked[mag_mask] = np.nan
            col_mask = col_mask | mag_mask
        filtered = butterworth_lowpass(col_masked, fs, cfg.butter_cutoff_hz, cfg.butter_order)
        cleaned[name] = interpolate_gaps(filtered, trial.t)
        idx = np.nonzero(col_mask)[0]
        masked_report[name] = [int(i) for i in idx]
        if len(idx):
            runs = np.split(idx, np.nonzero(np.diff(idx) > 1)[0] + 1)
            for run in runs:
                lo = trial.t[run[0] - 1] if run[0] > 0 else trial.t[run[0]]
                hi = trial.t[run[-1] + 1] if run[-1] + 1 < trial.n else trial.t[run[-1]]
                max_gap = max(max_gap, float(hi - lo))
    acc = np.column_stack([cleaned["ax"], cleaned["ay"], cleaned["az"]])
    gyro = np.column_stack([cleaned["gx"], cleaned["gy"], cleaned["gz"]])
    out = trial.replace(acc=acc, gyro=gyro)
    report = PreprocReport(n_in=n_in, n_cropped=out.n, masked=masked_report, max_gap_s=max_gap)
    return out, report
