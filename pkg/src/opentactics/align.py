"""Event-to-tracking timestamp alignment via ball-kinematic anchors.

Event annotations drift relative to the tracking clock. The ball's
acceleration signal spikes whenever force is applied (kick, touch,
interception), so those spikes are candidate anchors; among the anchors
inside a search window around the annotated time, the one where the ball sits
closest to the primarily involved player wins, with an
acceleration-over-distance consensus score breaking ties.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .pitch import Entity, EventDescription, EventType
from .synth import BALL_INDEX, InvalidArgError, RawEvent, TrackingFrame, \
    default_entities

DEFAULT_WINDOW = 2.0      # seconds searched either side of the annotation
DEFAULT_MIN_HEIGHT = 2.0  # m/s^2; filters jogging noise


@dataclass(frozen=True)
class AccelSignal:
    times: np.ndarray   # [F] seconds
    values: np.ndarray  # [F] m/s^2

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class Refinement:
    original_ts: float
    refined_ts: float
    anchor_strength: float  # acceleration magnitude at the chosen anchor
    fallback: bool          # no anchor found in the window


@dataclass
class AlignmentReport:
    refinements: list[Refinement] = field(default_factory=list)
    mean_abs_shift: float = 0.0
    residual_error: float | None = None  # vs ground truth, when known
    n_fallback: int = 0

    def to_dict(self) -> dict:
        return {
            "per_event": [{"original_ts": r.original_ts,
                           "refined_ts": r.refined_ts,
                           "anchor_strength": r.anchor_strength,
                           "fallback_flag": r.fallback}
                          for r in self.refinements],
            "summary": {"mean_abs_shift": self.mean_abs_shift,
                        "residual_error": self.residual_error,
                        "n_fallback": self.n_fallback,
                        "n_refinements": len(self.refinements)},
        }


def ball_acceleration(frames: list[TrackingFrame]) -> AccelSignal:
    """Backward-difference acceleration magnitude of the ball.

    The first frame's value is defined as 0. Requires uniform spacing
    (within 1 %).
    """
    if len(frames) < 2:
        raise InvalidArgError("need at least 2 frames")
    times = np.array([f.timestamp for f in frames])
    dts = np.diff(times)
    dt = dts[0]
    if dt <= 0 or np.any(np.abs(dts - dt) > 0.01 * dt):
        raise InvalidArgError("frames must be uniformly spaced (1% tolerance)")
    vel = np.array([f.velocities[BALL_INDEX] for f in frames])
    mags = np.zeros(len(frames))
    mags[1:] = np.linalg.norm(np.diff(vel, axis=0), axis=1) / dt
    return AccelSignal(times=times, values=mags)


def detect_peaks(signal: AccelSignal,
                 min_height: float = DEFAULT_MIN_HEIGHT) -> list[float]:
    """Interior local maxima at or above min_height, in time order.

    A peak satisfies s[t] > s[t-1] and s[t] >= s[t+1] (plateaus resolve to
    their first sample).
    """
    if len(signal) < 3:
        raise InvalidArgError("signal must have length >= 3")
    v = signal.values
    mask = (v[1:-1] > v[:-2]) & (v[1:-1] >= v[2:]) & (v[1:-1] >= min_height)
    return [float(t) for t in signal.times[1:-1][mask]]


def _anchor_player_index(desc: EventDescription, at_end: bool,
                         name_to_index: dict[str, int]) -> int | None:
    """The primarily involved player: carrier at starts, receiver at pass ends.

    A shot's termination has no involved player at the ball, so it carries no
    anchor and falls back to the annotated time.
    """
    name = desc.carrier_name
    if at_end:
        if desc.event_type is EventType.SHOT:
            return None
        if desc.event_type is EventType.PASS:
            name = desc.recipient_name
    return name_to_index.get(name)


def _refine(annotated: float, player_idx: int, frames: list[TrackingFrame],
            signal: AccelSignal, peaks: list[float],
            window: float) -> Refinement:
    candidates = [t for t in peaks if abs(t - annotated) <= window]
    if not candidates:
        return Refinement(annotated, annotated, 0.0, fallback=True)
    t0 = signal.times[0]
    dt = signal.times[1] - signal.times[0]
    best = None
    for t in candidates:
        idx = int(round((t - t0) / dt))
        frame = frames[idx]
        dist = float(np.linalg.norm(frame.positions[BALL_INDEX]
                                    - frame.positions[player_idx]))
        strength = float(signal.values[idx])
        score = strength / (1.0 + dist)
        # Primary: closest ball-player contact; ties by consensus score,
        # then by earliest time.
        key = (round(dist, 9), -score, t)
        if best is None or key < best[0]:
            best = (key, t, strength)
    return Refinement(annotated, best[1], best[2], fallback=False)


def refine_timestamp(event: RawEvent, frames: list[TrackingFrame],
                     peaks: list[float], window: float = DEFAULT_WINDOW,
                     entities: tuple[Entity, ...] | None = None,
                     signal: AccelSignal | None = None
                     ) -> tuple[float, bool]:
    """Refine an event's start annotation against the anchor peaks."""
    if window <= 0:
        raise InvalidArgError("window must be > 0")
    entities = entities if entities is not None else default_entities()
    signal = signal if signal is not None else ball_acceleration(frames)
    name_to_index = {e.name: i for i, e in enumerate(entities)}
    idx = _anchor_player_index(event.event, at_end=False,
                               name_to_index=name_to_index)
    if idx is None:
        return event.annotated_start, True
    r = _refine(event.annotated_start, idx, frames, signal, peaks, window)
    return r.refined_ts, r.fallback


def align_events(frames: list[TrackingFrame], events: list[RawEvent],
                 window: float = DEFAULT_WINDOW,
                 ground_truth: list[EventDescription] | None = None,
                 entities: tuple[Entity, ...] | None = None,
                 min_height: float = DEFAULT_MIN_HEIGHT
                 ) -> tuple[list[EventDescription], AlignmentReport]:
    """Refine every event's start and end independently.

    Returns the aligned event descriptions plus a report aggregating shifts
    and, when ground truth is supplied, residuals (fallback refinements are
    excluded from residual statistics).
    """
    if window <= 0:
        raise InvalidArgError("window must be > 0")
    entities = entities if entities is not None else default_entities()
    name_to_index = {e.name: i for i, e in enumerate(entities)}
    signal = ball_acceleration(frames)
    peaks = detect_peaks(signal, min_height=min_height)

    aligned: list[EventDescription] = []
    report = AlignmentReport()
    residuals: list[float] = []

    for n, ev in enumerate(events):
        refs: list[Refinement] = []
        for at_end, annotated in ((False, ev.annotated_start),
                                  (True, ev.annotated_end)):
            idx = _anchor_player_index(ev.event, at_end, name_to_index)
            if idx is None:
                refs.append(Refinement(annotated, annotated, 0.0, fallback=True))
            else:
                refs.append(_refine(annotated, idx, frames, signal, peaks, window))
        start_r, end_r = refs
        report.refinements.extend(refs)
        aligned.append(replace(
            ev.event,
            start_time=start_r.refined_ts,
            end_time=max(end_r.refined_ts, start_r.refined_ts)))
        if ground_truth is not None:
            truth = ground_truth[n]
            for ref, true_ts in ((start_r, truth.start_time),
                                 (end_r, truth.end_time)):
                if not ref.fallback:
                    residuals.append(abs(ref.refined_ts - true_ts))

    shifts = [abs(r.refined_ts - r.original_ts) for r in report.refinements]
    report.mean_abs_shift = float(np.mean(shifts)) if shifts else 0.0
    report.n_fallback = sum(1 for r in report.refinements if r.fallback)
    if residuals:
        report.residual_error = float(np.mean(residuals))
    return aligned, report
