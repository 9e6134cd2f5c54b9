"""Gait phase segmentation from the fused pitch track.

Heel strikes and toe offs are located as prominent extrema of sagittal
pitch: by default peaks map to heel strike and troughs to toe off (the
mapping is configurable because mounting orientation can flip it).  Cycles
are (HS, TO, next HS) triples; stance runs HS->TO and swing TO->next HS, so
the two phases partition the stride exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attitude import EulerSeries
from .errors import AnalysisError, ConfigError

EVENT_MAPPINGS = ("peak_hs", "peak_to")
STANCE_FRACTION_RANGE = (0.3, 0.9)


@dataclass(frozen=True)
class SegConfig:
    min_prominence_rad: float = 0.2
    min_distance_s: float = 0.4
    event_mapping: str = "peak_hs"

    def __post_init__(self):
        if self.event_mapping not in EVENT_MAPPINGS:
            raise ConfigError(f"event_mapping must be one of {EVENT_MAPPINGS}")
        if self.min_prominence_rad <= 0 or self.min_distance_s <= 0:
            raise ConfigError("prominence and distance thresholds must be positive")


@dataclass(frozen=True)
class GaitEvent:
    kind: str      # "HS" | "TO"
    t: float
    index: int


@dataclass(frozen=True)
class GaitCycle:
    hs: GaitEvent
    to: GaitEvent
    next_hs: GaitEvent

    @property
    def stride_time(self) -> float:
        return self.next_hs.t - self.hs.t

    @property
    def stance_time(self) -> float:
        return self.to.t - self.hs.t

    @property
    def swing_time(self) -> float:
        return self.next_hs.t - self.to.t

    @property
    def stance_fraction(self) -> float:
        return self.stance_time / self.stride_time


@dataclass
class GaitCycleSet:
    cycles: list
    events: list
    diagnostics: list


def detect_peaks(series: np.ndarray, min_prominence: float,
                 min_distance: int) -> np.ndarray:
    """Prominence-filtered local maxima with a minimum index spacing.

    A plateau counts once, at its left-most sample.  Prominence of a peak is
    its height above the higher of the two deepest valleys separating it from
    taller ground (or the series edge).  Distance filtering keeps higher
    peaks first; equal heights keep the left-most.
    """
    x = np.asarray(series, dtype=float)
    n = len(x)
    candidates = []
    i = 1
    while i < n - 1:
        if x[i] > x[i - 1]:
            j = i
            while j + 1 < n and x[j + 1] == x[j]:
                j += 1
            if j < n - 1 and x[j + 1] < x[j]:
                candidates.append(i)  # left edge of the plateau
            i = j + 1
        else:
            i += 1
    if not candidates:
        return np.array([], dtype=int)

    kept = []
    for p in candidates:
        h = x[p]
        lo = p
        left_min = h
        while lo > 0 and x[lo - 1] <= h:
            lo -= 1
            left_min = min(left_min, x[lo])
        hi = p
        right_min = h
        while hi < n - 1 and x[hi + 1] <= h:
            hi += 1
            right_min = min(right_min, x[hi])
        prominence = h - max(left_min, right_min)
        if prominence >= min_prominence:
            kept.append(p)
    if not kept:
        return np.array([], dtype=int)

    # Enforce spacing, preferring higher peaks; ties go to the left-most.
    order = sorted(kept, key=lambda p: (-x[p], p))
    taken = []
    for p in order:
        if all(abs(p - q) >= min_distance for q in taken):
            taken.append(p)
    return np.array(sorted(taken), dtype=int)


def events_from_pitch(series: EulerSeries, cfg: SegConfig = SegConfig()) -> list:
    """Ordered HS/TO events from the pitch extrema.

    Leading events before the first HS and trailing events after the last HS
    are discarded so downstream cycles are complete.  Raises AnalysisError
    when fewer than two heel strikes survive.
    """
    pitch = series.pitch
    dt = float(np.median(np.diff(series.t)))
    dist = max(1, int(round(cfg.min_distance_s / dt)))
    peaks = detect_peaks(pitch, cfg.min_prominence_rad, dist)
    troughs = detect_peaks(-pitch, cfg.min_prominence_rad, dist)
    if cfg.event_mapping == "peak_hs":
        hs_idx, to_idx = peaks, troughs
    else:
        hs_idx, to_idx = troughs, peaks
    events = [GaitEvent("HS", float(series.t[i]), int(i)) for i in hs_idx]
    events += [GaitEvent("TO", float(series.t[i]), int(i)) for i in to_idx]
    events.sort(key=lambda e: e.t)
    while events and events[0].kind != "HS":
        events.pop(0)
    while events and events[-1].kind != "HS":
        events.pop()
    if sum(1 for e in events if e.kind == "HS") < 2:
        raise AnalysisError("insufficient strides: fewer than two heel strikes")
    return events


def build_cycles(events: list) -> GaitCycleSet:
    """Assemble (HS, TO, next HS) triples, skipping malformed spans.

    A missing TO between consecutive heel strikes, or a stance fraction
    outside the plausible range, drops that span with a diagnostic instead of
    producing a degenerate cycle.
    """
    diagnostics = []
    cycles = []
    hs_list = [e for e in events if e.kind == "HS"]
    for a, b in zip(hs_list[:-1], hs_list[1:]):
        between = [e for e in events if e.kind == "TO" and a.t < e.t < b.t]
        if len(between) != 1:
            diagnostics.append(
                f"stride at {a.t:.3f}s: expected one TO, found {len(between)}")
            continue
        cycle = GaitCycle(hs=a, to=between[0], next_hs=b)
        lo, hi = STANCE_FRACTION_RANGE
        if not (lo < cycle.stance_fraction < hi):
            diagnostics.append(
                f"stride at {a.t:.3f}s: stance fraction "
                f"{cycle.stance_fraction:.2f} outside ({lo}, {hi})")
            continue
        cycles.append(cycle)
    return GaitCycleSet(cycles=cycles, events=events, diagnostics=diagnostics)


def segment_gait(series: EulerSeries, cfg: SegConfig = SegConfig()) -> GaitCycleSet:
    """events_from_pitch + build_cycles in one call."""
    return build_cycles(events_from_pitch(series, cfg))
