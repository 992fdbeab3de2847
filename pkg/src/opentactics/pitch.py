"""Pitch geometry, entities, on-ball events, and spatiotemporal graph instances.

Everything downstream (the generator, the metrics, the search) speaks in the
types defined here. Instances are immutable after construction and serialize
to line-delimited JSON (`.stg.jsonl`).

Coordinate convention: canonical pitch is 105 x 68 metres, origin at the
bottom-left corner, attacking team playing left to right.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Iterator, Sequence

import numpy as np

# Canonical frame every instance is normalized into.
CANONICAL_LENGTH = 105.0
CANONICAL_WIDTH = 68.0

# Margin (metres) tolerated outside the pitch before coordinates are rejected.
BOUNDS_MARGIN = 5.0

N_ENTITIES = 23
N_PLAYERS_PER_TEAM = 11

# Role vocabulary for a back-five / double-pivot shape; fixed for this dataset.
ROLE_CODES = ("GK", "LWB", "LCB", "CB", "RCB", "RWB",
              "LDM", "RDM", "LAM", "RAM", "CF")

# Node feature layout: [x, y, vx, vy, role one-hot (11), team flag, ball flag]
FEAT_X, FEAT_Y, FEAT_VX, FEAT_VY = 0, 1, 2, 3
FEAT_ROLE0 = 4
FEAT_TEAM = 4 + len(ROLE_CODES)
FEAT_BALL = FEAT_TEAM + 1
FEATURE_DIM = FEAT_BALL + 1


class AttackDirection(Enum):
    LEFT_TO_RIGHT = "left_to_right"


class EntityKind(str, Enum):
    PLAYER = "player"
    BALL = "ball"


class Team(str, Enum):
    ATTACKING = "attacking"
    DEFENDING = "defending"
    NONE = "none"


class EventType(str, Enum):
    PASS = "Pass"
    CARRY = "Carry"
    SHOT = "Shot"


class Outcome(str, Enum):
    SUCCESS = "Success"
    FAIL = "Fail"
    UNKNOWN = "Unknown"


class OutOfBoundsError(ValueError):
    """A position falls outside the pitch bounds plus margin."""


class ParseError(ValueError):
    """Malformed serialized instance; carries the byte offset of the fault."""

    def __init__(self, message: str, byte_offset: int = 0):
        super().__init__(f"{message} (byte offset {byte_offset})")
        self.byte_offset = byte_offset


@dataclass(frozen=True)
class Pitch:
    length_m: float = CANONICAL_LENGTH
    width_m: float = CANONICAL_WIDTH
    attack_direction: AttackDirection = AttackDirection.LEFT_TO_RIGHT

    def __post_init__(self):
        if self.length_m <= 0 or self.width_m <= 0:
            raise ValueError("pitch dimensions must be positive")

    @property
    def is_canonical(self) -> bool:
        return (self.length_m == CANONICAL_LENGTH
                and self.width_m == CANONICAL_WIDTH)


@dataclass(frozen=True)
class Entity:
    entity_id: int
    kind: EntityKind
    team: Team
    role: str  # one of ROLE_CODES, or "" for the ball
    name: str

    def __post_init__(self):
        if self.kind is EntityKind.BALL:
            if self.team is not Team.NONE:
                raise ValueError("ball must have team=None")
            if self.role:
                raise ValueError("ball carries no role")
        else:
            if self.team is Team.NONE:
                raise ValueError("players must belong to a team")
            if self.role not in ROLE_CODES:
                raise ValueError(f"unknown role code {self.role!r}")


@dataclass(frozen=True)
class EventDescription:
    """One atomic on-ball event: pass, carry, or shot."""

    event_type: EventType
    carrier_name: str
    carrier_role: str
    recipient_name: str = ""
    recipient_role: str = ""
    start_time: float = 0.0
    end_time: float = 0.0
    outcome: Outcome = Outcome.UNKNOWN

    def __post_init__(self):
        if self.end_time < self.start_time:
            raise ValueError("end_time must be >= start_time")
        if self.event_type is EventType.PASS:
            if not self.recipient_name:
                raise ValueError("pass requires a recipient")
            if self.recipient_name == self.carrier_name:
                raise ValueError("pass recipient must differ from carrier")
        elif self.recipient_name or self.recipient_role:
            raise ValueError(f"{self.event_type.value} carries no recipient")

    @property
    def effective_recipient(self) -> str:
        """Who holds the ball after the event (the carrier for carry/shot)."""
        return self.recipient_name if self.event_type is EventType.PASS \
            else self.carrier_name

    def surface_fields(self) -> tuple:
        """The fields the rendered language description carries."""
        return (self.event_type, self.carrier_name, self.carrier_role,
                self.recipient_name, self.recipient_role)


def render_description_text(desc: EventDescription) -> str:
    """Deterministic sentence form of an event, used as the language condition."""
    if desc.event_type is EventType.PASS:
        return (f"Pass from {desc.carrier_name} ({desc.carrier_role}) "
                f"to {desc.recipient_name} ({desc.recipient_role})")
    if desc.event_type is EventType.CARRY:
        return f"Carry by {desc.carrier_name} ({desc.carrier_role})"
    return f"Shot by {desc.carrier_name} ({desc.carrier_role})"


_PASS_RE = re.compile(
    r"^Pass from (?P<cn>.+?) \((?P<cr>[A-Z]{2,3})\) "
    r"to (?P<rn>.+?) \((?P<rr>[A-Z]{2,3})\)$")
_CARRY_RE = re.compile(r"^Carry by (?P<cn>.+?) \((?P<cr>[A-Z]{2,3})\)$")
_SHOT_RE = re.compile(r"^Shot by (?P<cn>.+?) \((?P<cr>[A-Z]{2,3})\)$")


def parse_description_text(text: str) -> EventDescription:
    """Inverse of :func:`render_description_text` over the surface fields.

    Timestamps and outcome are not part of the sentence; they come back as
    0.0 / Unknown.
    """
    m = _PASS_RE.match(text)
    if m:
        return EventDescription(EventType.PASS, m["cn"], m["cr"],
                                m["rn"], m["rr"])
    m = _CARRY_RE.match(text)
    if m:
        return EventDescription(EventType.CARRY, m["cn"], m["cr"])
    m = _SHOT_RE.match(text)
    if m:
        return EventDescription(EventType.SHOT, m["cn"], m["cr"])
    raise ValueError(f"unrecognized description text: {text!r}")


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.asarray(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SpatiotemporalGraph:
    """A 23-entity, fully connected graph over a sampled time window.

    features has shape [|T|, 23, FEATURE_DIM]; adjacency is the all-ones
    23x23 matrix; time_index is strictly increasing, in seconds.
    """

    entities: tuple[Entity, ...]
    features: np.ndarray
    time_index: tuple[float, ...]
    description: EventDescription
    adjacency: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        object.__setattr__(self, "entities", tuple(self.entities))
        object.__setattr__(self, "time_index", tuple(float(t) for t in self.time_index))
        object.__setattr__(self, "features", _frozen_array(self.features))
        if self.adjacency is None:
            adj = np.ones((N_ENTITIES, N_ENTITIES))
        else:
            adj = np.asarray(self.adjacency, dtype=float)
        object.__setattr__(self, "adjacency", _frozen_array(adj))
        self._validate()

    def _validate(self):
        if len(self.entities) != N_ENTITIES:
            raise ValueError(f"expected {N_ENTITIES} entities, got {len(self.entities)}")
        balls = [e for e in self.entities if e.kind is EntityKind.BALL]
        if len(balls) != 1:
            raise ValueError("graph must contain exactly one ball")
        for team in (Team.ATTACKING, Team.DEFENDING):
            n = sum(1 for e in self.entities if e.team is team)
            if n != N_PLAYERS_PER_TEAM:
                raise ValueError(f"expected {N_PLAYERS_PER_TEAM} {team.value} players, got {n}")
        if self.features.ndim != 3 or self.features.shape[1:] != (N_ENTITIES, FEATURE_DIM):
            raise ValueError(f"features must be [T, {N_ENTITIES}, {FEATURE_DIM}], "
                             f"got {self.features.shape}")
        if self.features.shape[0] != len(self.time_index):
            raise ValueError("features and time_index lengths disagree")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")
        if self.adjacency.shape != (N_ENTITIES, N_ENTITIES) or not np.all(self.adjacency == 1):
            raise ValueError("adjacency must be the all-ones 23x23 matrix")
        diffs = np.diff(self.time_index)
        if len(diffs) and not np.all(diffs > 0):
            raise ValueError("time_index must be strictly increasing")

    @property
    def n_steps(self) -> int:
        return self.features.shape[0]

    @property
    def ball_index(self) -> int:
        return next(i for i, e in enumerate(self.entities)
                    if e.kind is EntityKind.BALL)

    def team_indices(self, team: Team) -> list[int]:
        return [i for i, e in enumerate(self.entities) if e.team is team]

    def index_of(self, name: str) -> int:
        for i, e in enumerate(self.entities):
            if e.name == name:
                return i
        raise KeyError(f"no entity named {name!r}")

    def positions(self) -> np.ndarray:
        """[|T|, 23, 2] positions in metres."""
        return self.features[:, :, (FEAT_X, FEAT_Y)]

    def with_description(self, description: EventDescription) -> "SpatiotemporalGraph":
        return replace(self, description=description)

    def with_features(self, features: np.ndarray,
                      time_index: Sequence[float] | None = None) -> "SpatiotemporalGraph":
        return replace(self, features=features,
                       time_index=tuple(time_index) if time_index is not None
                       else self.time_index)


@dataclass(frozen=True)
class MetaAction:
    description: EventDescription
    graph: SpatiotemporalGraph

    def __post_init__(self):
        if self.graph.description != self.description:
            raise ValueError("graph description must match the meta-action description")


@dataclass(frozen=True)
class TacticPath:
    """Result of a tree search: chosen meta-actions plus critic transcripts."""

    steps: tuple[MetaAction, ...]
    instruction: str
    critic_transcripts: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "critic_transcripts", tuple(self.critic_transcripts))


def node_feature_vector(position, velocity, role: str, team: Team,
                        is_ball: bool) -> np.ndarray:
    """Assemble one node's feature vector in the fixed layout."""
    v = np.zeros(FEATURE_DIM)
    v[FEAT_X], v[FEAT_Y] = position
    v[FEAT_VX], v[FEAT_VY] = velocity
    if role:
        v[FEAT_ROLE0 + ROLE_CODES.index(role)] = 1.0
    v[FEAT_TEAM] = {Team.ATTACKING: 1.0, Team.DEFENDING: -1.0, Team.NONE: 0.0}[team]
    v[FEAT_BALL] = 1.0 if is_ball else 0.0
    return v


def normalize_coordinates(graph: SpatiotemporalGraph,
                          pitch: Pitch) -> SpatiotemporalGraph:
    """Map a graph recorded on `pitch` into the canonical 105x68 frame.

    Positions and velocities are rescaled by the per-axis pitch ratio;
    idempotent when the pitch is already canonical.
    """
    feats = graph.features
    x = feats[:, :, FEAT_X]
    y = feats[:, :, FEAT_Y]
    if (x.min() < -BOUNDS_MARGIN or x.max() > pitch.length_m + BOUNDS_MARGIN
            or y.min() < -BOUNDS_MARGIN or y.max() > pitch.width_m + BOUNDS_MARGIN):
        raise OutOfBoundsError(
            f"positions exceed {pitch.length_m}x{pitch.width_m} pitch "
            f"bounds + {BOUNDS_MARGIN} m margin")
    sx = CANONICAL_LENGTH / pitch.length_m
    sy = CANONICAL_WIDTH / pitch.width_m
    if sx == 1.0 and sy == 1.0:
        return graph
    out = np.array(feats)
    out[:, :, FEAT_X] *= sx
    out[:, :, FEAT_Y] *= sy
    out[:, :, FEAT_VX] *= sx
    out[:, :, FEAT_VY] *= sy
    return graph.with_features(out)


# ---------------------------------------------------------------------------
# Serialization (.stg.jsonl): one JSON object per line.

def _entity_to_dict(e: Entity) -> dict:
    return {"entity_id": e.entity_id, "kind": e.kind.value,
            "team": e.team.value, "role": e.role, "name": e.name}


def _entity_from_dict(d: dict) -> Entity:
    return Entity(entity_id=int(d["entity_id"]), kind=EntityKind(d["kind"]),
                  team=Team(d["team"]), role=d["role"], name=d["name"])


def description_to_dict(desc: EventDescription) -> dict:
    return {"event_type": desc.event_type.value,
            "carrier_name": desc.carrier_name,
            "carrier_role": desc.carrier_role,
            "recipient_name": desc.recipient_name,
            "recipient_role": desc.recipient_role,
            "start_time": desc.start_time,
            "end_time": desc.end_time,
            "outcome": desc.outcome.value}


def description_from_dict(d: dict) -> EventDescription:
    return EventDescription(
        event_type=EventType(d["event_type"]),
        carrier_name=d["carrier_name"],
        carrier_role=d["carrier_role"],
        recipient_name=d.get("recipient_name", ""),
        recipient_role=d.get("recipient_role", ""),
        start_time=float(d.get("start_time", 0.0)),
        end_time=float(d.get("end_time", 0.0)),
        outcome=Outcome(d.get("outcome", "Unknown")))


def serialize_instance(graph: SpatiotemporalGraph) -> bytes:
    """One newline-terminated JSON record; exact float round-trip."""
    record = {
        "entities": [_entity_to_dict(e) for e in graph.entities],
        "features": graph.features.tolist(),  # row-major [t][node][dim]
        "time_index": list(graph.time_index),
        "description": description_to_dict(graph.description),
    }
    return (json.dumps(record, separators=(",", ":")) + "\n").encode("utf-8")


def deserialize_instance(data: bytes, base_offset: int = 0) -> SpatiotemporalGraph:
    """Parse one serialized record; raises ParseError with a byte offset."""
    try:
        record = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed instance record: {exc.msg}",
                         base_offset + exc.pos) from exc
    try:
        return SpatiotemporalGraph(
            entities=tuple(_entity_from_dict(d) for d in record["entities"]),
            features=np.asarray(record["features"], dtype=float),
            time_index=tuple(record["time_index"]),
            description=description_from_dict(record["description"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"invalid instance record: {exc}", base_offset) from exc


def write_instances(path, graphs: Iterable[SpatiotemporalGraph]) -> int:
    n = 0
    with open(path, "wb") as fh:
        for g in graphs:
            fh.write(serialize_instance(g))
            n += 1
    return n


def read_instances(path) -> Iterator[SpatiotemporalGraph]:
    offset = 0
    with open(path, "rb") as fh:
        for line in fh:
            stripped = line.strip()
            if stripped:
                yield deserialize_instance(stripped, base_offset=offset)
            offset += len(line)
