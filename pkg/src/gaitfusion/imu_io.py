"""Reading and writing wearable IMU trials.

A trial is a CSV stream of timestamped accelerometer and gyroscope samples
plus a plain-text sidecar holding subject metadata.  Internally everything is
SI: seconds, m/s^2, rad/s.  Unit conversion happens once, at parse time.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError

# Standard gravity, used for unit conversion and range checks.
G_STANDARD = 9.80665

# Sensor full-scale ranges; samples beyond these are flagged, not dropped.
ACC_RANGE = 8.0 * G_STANDARD          # +/- 8 g
GYRO_RANGE = math.radians(1000.0)     # +/- 1000 deg/s

MIN_DURATION_S = 3.0                  # shortest trial the pipeline accepts

ACC_UNITS = ("m/s^2", "g")
GYRO_UNITS = ("rad/s", "deg/s")


class Leg(str, Enum):
    LEFT = "left"
    RIGHT = "right"


class Group(str, Enum):
    LDH_HEALTHY = "LDH_healthy_side"
    LDH_AFFECTED = "LDH_affected_side"
    CONTROL = "control"


@dataclass(frozen=True)
class ImuSample:
    """One timestamped sample, SI units."""

    t: float
    acc: tuple
    gyro: tuple


@dataclass(frozen=True)
class IngestConfig:
    """Column names, default units and metadata fallbacks for parsing."""

    time_column: str | None = "t"
    acc_columns: tuple = ("ax", "ay", "az")
    gyro_columns: tuple = ("gx", "gy", "gz")
    acc_unit: str = "m/s^2"
    gyro_unit: str = "rad/s"
    sample_rate_hz: float = 100.0
    subject_id: str = "unknown"
    leg: Leg = Leg.LEFT
    group: Group = Group.CONTROL


@dataclass
class ImuTrial:
    """A parsed trial: metadata plus dense arrays of shape (n,) and (n, 3)."""

    subject_id: str
    leg: Leg
    group: Group
    sample_rate_hz: float
    t: np.ndarray
    acc: np.ndarray
    gyro: np.ndarray
    range_flags: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.t)

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0]) if self.n else 0.0

    @property
    def samples(self):
        """Iterate samples as immutable records."""
        for i in range(self.n):
            yield ImuSample(float(self.t[i]), tuple(self.acc[i]), tuple(self.gyro[i]))

    def replace(self, **kw) -> "ImuTrial":
        return replace(self, **kw)


@dataclass(frozen=True)
class RateReport:
    """Sampling health summary: nominal rate, observed spacing, gaps."""

    nominal_hz: float
    median_dt: float
    gaps: list  # (index of sample after the gap, dt in seconds)


def _read_sidecar(path: Path) -> dict:
    """Parse a `key = value` sidecar file; missing file yields {}."""
    meta = {}
    if not path.exists():
        return meta
    for ln, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"sidecar entry without '=': {line!r}", line=ln)
        key, _, value = line.partition("=")
        meta[key.strip()] = value.strip()
    return meta


def _write_sidecar(path: Path, meta: dict) -> None:
    lines = [f"{k} = {v}" for k, v in meta.items()]
    path.write_text("\n".join(lines) + "\n")


def sidecar_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".meta")


def parse_trial(path, config: IngestConfig = IngestConfig()) -> ImuTrial:
    """Parse a trial CSV and its sidecar into an SI-unit ImuTrial.

    Raises ParseError for malformed rows (with line number), ValidationError
    for structural problems (bad header, non-monotonic time, short trial,
    sampling rate inconsistent with the declared one).
    """
    path = Path(path)
    meta = _read_sidecar(sidecar_path(path))
    acc_unit = meta.get("acc_unit", config.acc_unit)
    gyro_unit = meta.get("gyro_unit", config.gyro_unit)
    if acc_unit not in ACC_UNITS:
        raise ValidationError(f"unknown acc_unit {acc_unit!r} (expected one of {ACC_UNITS})")
    if gyro_unit not in GYRO_UNITS:
        raise ValidationError(f"unknown gyro_unit {gyro_unit!r} (expected one of {GYRO_UNITS})")
    rate = float(meta.get("sample_rate_hz", config.sample_rate_hz))
    if rate <= 0:
        raise ValidationError(f"sample_rate_hz must be positive, got {rate}")

    with open(path, newline="") as fh:
        rows = [(ln, row) for ln, row in enumerate(csv.reader(fh), start=1)
                if row and not row[0].lstrip().startswith("#")]
    if not rows:
        raise ValidationError(f"{path}: empty file")

    header_ln, header = rows[0]
    header = [h.strip() for h in header]
    cols = {}
    needed = list(config.acc_columns) + list(config.gyro_columns)
    for name in needed:
        if name not in header:
            raise ValidationError(f"{path}: missing column {name!r} in header {header}")
        cols[name] = header.index(name)
    time_idx = None
    if config.time_column is not None and config.time_column in header:
        time_idx = header.index(config.time_column)

    n = len(rows) - 1
    if n == 0:
        raise ValidationError(f"{path}: no data rows")
    t = np.empty(n)
    acc = np.empty((n, 3))
    gyro = np.empty((n, 3))
    for i, (ln, row) in enumerate(rows[1:]):
        try:
            if time_idx is not None:
                t[i] = float(row[time_idx])
            else:
                t[i] = i / rate
            for j, name in enumerate(config.acc_columns):
                acc[i, j] = float(row[cols[name]])
            for j, name in enumerate(config.gyro_columns):
                gyro[i, j] = float(row[cols[name]])
        except (ValueError, IndexError) as exc:
            raise ParseError(f"bad row {row!r}: {exc}", line=ln) from exc

    if np.any(np.diff(t) <= 0):
        bad = int(np.argmax(np.diff(t) <= 0)) + 1
        raise ValidationError(f"{path}: timestamps not strictly increasing at row {bad + 1}")

    if acc_unit == "g":
        acc = acc * G_STANDARD
    if gyro_unit == "deg/s":
        gyro = np.radians(gyro)

    if t[-1] - t[0] < MIN_DURATION_S:
        raise ValidationError(
            f"{path}: trial spans {t[-1] - t[0]:.2f} s, need at least {MIN_DURATION_S} s")
    median_dt = float(np.median(np.diff(t)))
    if abs(median_dt - 1.0 / rate) > 0.1 / rate:
        raise ValidationError(
            f"{path}: median sample spacing {median_dt:.4f} s inconsistent with "
            f"declared rate {rate} Hz")

    flags = []
    for i in np.nonzero(np.max(np.abs(acc), axis=1) > ACC_RANGE)[0]:
        flags.append((int(i), "acc_range"))
    for i in np.nonzero(np.max(np.abs(gyro), axis=1) > GYRO_RANGE)[0]:
        flags.append((int(i), "gyro_range"))

    leg = Leg(meta["leg"]) if "leg" in meta else config.leg
    group = Group(meta["group"]) if "group" in meta else config.group
    return ImuTrial(
        subject_id=meta.get("subject_id", config.subject_id),
        leg=leg, group=group, sample_rate_hz=rate,
        t=t, acc=acc, gyro=gyro, range_flags=sorted(flags),
    )


def write_trial(trial: ImuTrial, path, manifest_hash: str | None = None) -> None:
    """Write a trial as CSV (SI units) plus its metadata sidecar."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        if manifest_hash:
            fh.write(f"# manifest={manifest_hash}\n")
        w = csv.writer(fh)
        w.writerow(["t", "ax", "ay", "az", "gx", "gy", "gz"])
        for i in range(trial.n):
            w.writerow([f"{trial.t[i]:.12g}"]
                       + [f"{v:.12g}" for v in trial.acc[i]]
                       + [f"{v:.12g}" for v in trial.gyro[i]])
    _write_sidecar(sidecar_path(path), {
        "subject_id": trial.subject_id,
        "leg": trial.leg.value,
        "group": trial.group.value,
        "sample_rate_hz": f"{trial.sample_rate_hz:.12g}",
        "acc_unit": "m/s^2",
        "gyro_unit": "rad/s",
    })


def check_rate(trial: ImuTrial) -> RateReport:
    """Report median spacing and gaps larger than 1.5 nominal intervals."""
    dts = np.diff(trial.t)
    limit = 1.5 / trial.sample_rate_hz
    gaps = [(int(i) + 1, float(dt)) for i, dt in enumerate(dts) if dt > limit]
    return RateReport(trial.sample_rate_hz, float(np.median(dts)), gaps)
