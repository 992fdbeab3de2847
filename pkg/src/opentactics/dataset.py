"""Instance construction, history/target pairing, and dataset file formats.

Aligned events become spatiotemporal graph instances by uniform temporal
sampling of the tracking frames across each event's span; consecutive
same-possession instances pair up into (history, target) training examples,
split 70/30 stratified by event type.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .pitch import (FEATURE_DIM, FEAT_BALL, FEAT_ROLE0, FEAT_TEAM, FEAT_VX,
                    FEAT_VY, FEAT_X, FEAT_Y, ROLE_CODES, Entity, EntityKind,
                    EventDescription, SpatiotemporalGraph, Team,
                    description_from_dict, description_to_dict)
from .synth import (BALL_INDEX, FRAME_DT, RawEvent, TrackingFrame,
                    default_entities)

N_SAMPLE_STEPS = 5          # |T|: uniformly sampled points per event
MIN_EVENT_SPAN = 0.4        # seconds; shorter events carry too few frames
POSSESSION_MAX_GAP = 3.0    # seconds between chained events


@dataclass(frozen=True)
class DatasetSplit:
    train: list[tuple[SpatiotemporalGraph, SpatiotemporalGraph]]
    test: list[tuple[SpatiotemporalGraph, SpatiotemporalGraph]]
    seed: int


def _features_from_frame(frame: TrackingFrame,
                         entities: tuple[Entity, ...]) -> np.ndarray:
    feats = np.zeros((len(entities), FEATURE_DIM))
    feats[:, FEAT_X] = frame.positions[:, 0]
    feats[:, FEAT_Y] = frame.positions[:, 1]
    feats[:, FEAT_VX] = frame.velocities[:, 0]
    feats[:, FEAT_VY] = frame.velocities[:, 1]
    for i, e in enumerate(entities):
        if e.kind is EntityKind.BALL:
            feats[i, FEAT_BALL] = 1.0
        else:
            feats[i, FEAT_ROLE0 + ROLE_CODES.index(e.role)] = 1.0
            feats[i, FEAT_TEAM] = 1.0 if e.team is Team.ATTACKING else -1.0
    return feats


def build_instances(frames: list[TrackingFrame],
                    events: list[EventDescription],
                    entities: tuple[Entity, ...] | None = None,
                    n_steps: int = N_SAMPLE_STEPS
                    ) -> tuple[list[SpatiotemporalGraph], int]:
    """Sample n_steps uniformly spaced frames per event, start inclusive.

    Events spanning fewer than n_steps frames or naming unknown entities are
    dropped; returns (instances, drop_count).
    """
    entities = entities if entities is not None else default_entities()
    names = {e.name for e in entities}
    t0 = frames[0].timestamp
    dt = frames[1].timestamp - frames[0].timestamp
    n_frames = len(frames)

    instances: list[SpatiotemporalGraph] = []
    dropped = 0
    for ev in events:
        span = ev.end_time - ev.start_time
        known = ev.carrier_name in names and (
            not ev.recipient_name or ev.recipient_name in names)
        if span < MIN_EVENT_SPAN or not known:
            dropped += 1
            continue
        offsets = np.linspace(ev.start_time, ev.end_time, n_steps)
        idx = np.clip(np.round((offsets - t0) / dt).astype(int), 0, n_frames - 1)
        if len(np.unique(idx)) < n_steps:
            dropped += 1
            continue
        feats = np.stack([_features_from_frame(frames[i], entities)
                          for i in idx])
        instances.append(SpatiotemporalGraph(
            entities=entities,
            features=feats,
            time_index=tuple(frames[i].timestamp for i in idx),
            description=ev))
    return instances, dropped


def same_possession(prev: EventDescription, nxt: EventDescription,
                    max_gap: float = POSSESSION_MAX_GAP) -> bool:
    """Chained iff the next carrier is who held the ball, with no long gap."""
    return (nxt.carrier_name == prev.effective_recipient
            and 0 <= nxt.start_time - prev.end_time <= max_gap)


def make_pairs(instances: list[SpatiotemporalGraph]
               ) -> list[tuple[SpatiotemporalGraph, SpatiotemporalGraph]]:
    """(history, target) pairs from chronologically consecutive instances."""
    pairs = []
    for prev, nxt in zip(instances, instances[1:]):
        if same_possession(prev.description, nxt.description):
            pairs.append((prev, nxt))
    return pairs


def pair_and_split(instances: list[SpatiotemporalGraph], seed: int = 42,
                   train_frac: float = 0.7) -> DatasetSplit:
    """Pair consecutive same-possession instances and split 70/30.

    Stratified by the target's event type; deterministic for a fixed seed.
    """
    pairs = make_pairs(instances)
    rng = np.random.default_rng(seed)
    buckets: dict[str, list[int]] = {}
    for i, (_, target) in enumerate(pairs):
        buckets.setdefault(target.description.event_type.value, []).append(i)

    train_idx: list[int] = []
    test_idx: list[int] = []
    for etype in sorted(buckets):
        idx = np.array(buckets[etype])
        rng.shuffle(idx)
        n_train = int(round(train_frac * len(idx)))
        train_idx.extend(idx[:n_train].tolist())
        test_idx.extend(idx[n_train:].tolist())
    train_idx.sort()
    test_idx.sort()
    return DatasetSplit(train=[pairs[i] for i in train_idx],
                        test=[pairs[i] for i in test_idx], seed=seed)


# ---------------------------------------------------------------------------
# File formats: tracking CSV, event JSONL, ground-truth JSONL.

TRACKING_HEADER = ["timestamp", "entity_id", "x", "y", "vx", "vy"]


def write_tracking_csv(path, frames: list[TrackingFrame]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACKING_HEADER)
        for f in frames:
            for eid in range(f.positions.shape[0]):
                writer.writerow([repr(f.timestamp), eid,
                                 repr(float(f.positions[eid, 0])),
                                 repr(float(f.positions[eid, 1])),
                                 repr(float(f.velocities[eid, 0])),
                                 repr(float(f.velocities[eid, 1]))])


def read_tracking_csv(path) -> list[TrackingFrame]:
    by_time: dict[float, dict[int, tuple]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TRACKING_HEADER:
            raise ValueError(f"unexpected tracking header {reader.fieldnames}")
        for row in reader:
            t = float(row["timestamp"])
            by_time.setdefault(t, {})[int(row["entity_id"])] = (
                float(row["x"]), float(row["y"]),
                float(row["vx"]), float(row["vy"]))
    frames = []
    for t in sorted(by_time):
        rows = by_time[t]
        n = max(rows) + 1
        pos = np.zeros((n, 2))
        vel = np.zeros((n, 2))
        for eid, (x, y, vx, vy) in rows.items():
            pos[eid] = (x, y)
            vel[eid] = (vx, vy)
        pos.setflags(write=False)
        vel.setflags(write=False)
        frames.append(TrackingFrame(timestamp=t, positions=pos, velocities=vel))
    return frames


def write_events_jsonl(path, events: list[RawEvent]):
    with open(path, "w") as fh:
        for ev in events:
            record = description_to_dict(ev.event)
            record["annotated_start"] = ev.annotated_start
            record["annotated_end"] = ev.annotated_end
            fh.write(json.dumps(record, separators=(",", ":")) + "\n")


def read_events_jsonl(path) -> list[RawEvent]:
    events = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            a0 = float(record.pop("annotated_start"))
            a1 = float(record.pop("annotated_end"))
            events.append(RawEvent(event=description_from_dict(record),
                                   annotated_start=a0, annotated_end=a1))
    return events


def write_descriptions_jsonl(path, descs: list[EventDescription]):
    with open(path, "w") as fh:
        for d in descs:
            fh.write(json.dumps(description_to_dict(d),
                                separators=(",", ":")) + "\n")


def read_descriptions_jsonl(path) -> list[EventDescription]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(description_from_dict(json.loads(line)))
    return out
