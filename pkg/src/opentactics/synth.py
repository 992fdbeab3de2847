"""Synthetic match generator: ground-truth substitute for proprietary data.

Produces 10 Hz tracking frames plus event annotations whose timestamps are
corrupted with clipped Gaussian jitter. The kinematics are built so that the
alignment pipeline has real anchors to find:

* players move with piecewise constant acceleration (0.5 s blocks, magnitude
  kept below the peak-detection threshold) around fixed formation anchors;
* the ball travels in constant-velocity segments and receives an impulse at
  every true event boundary (kick, reception, interception), producing an
  acceleration spike exactly on that frame, with the ball exactly at the
  touching player's feet;
* passes and shots are one-touch (a player's reception is the start of their
  event), and carries run long enough that a carrier's two touches never fall
  inside the same alignment search window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pitch import (CANONICAL_LENGTH, CANONICAL_WIDTH, ROLE_CODES, Entity,
                    EntityKind, EventDescription, EventType, Outcome, Team)

FRAME_DT = 0.1  # 10 Hz tracking

# Formation anchors on the canonical pitch, attacking left to right.
_ATTACK_ANCHORS = {
    "GK": (6.0, 34.0), "LWB": (28.0, 58.0), "LCB": (18.0, 44.0),
    "CB": (14.0, 34.0), "RCB": (18.0, 24.0), "RWB": (28.0, 10.0),
    "LDM": (42.0, 44.0), "RDM": (42.0, 24.0), "LAM": (62.0, 50.0),
    "RAM": (62.0, 18.0), "CF": (78.0, 34.0),
}

ATTACK_NAMES = ("Abel", "Baro", "Cole", "Dris", "Enzo", "Faro",
                "Gala", "Hart", "Isco", "Jota", "Kane")
DEFENSE_NAMES = ("Lopo", "Mora", "Nino", "Orta", "Palo", "Quil",
                 "Rami", "Silva", "Tote", "Ugo", "Vera")

BALL_INDEX = 22

# Player kinematics: acceleration stays below the 2 m/s^2 peak threshold so
# carried-ball frames never register as anchors.
_ACCEL_BLOCK_FRAMES = 5
_MAX_ACCEL = 1.2     # per-component, m/s^2  -> magnitude <= 1.70
_MAX_SPEED = 3.5     # per-component, m/s
_CARRY_SPEED = 3.0   # dribbling run, m/s


class InvalidArgError(ValueError):
    """Caller passed an argument outside the documented domain."""


@dataclass(frozen=True)
class TrackingFrame:
    timestamp: float
    positions: np.ndarray   # [23, 2] metres
    velocities: np.ndarray  # [23, 2] m/s


@dataclass(frozen=True)
class RawEvent:
    """An annotated event whose timestamps may be misaligned."""

    event: EventDescription
    annotated_start: float
    annotated_end: float


@dataclass(frozen=True)
class SyntheticMatch:
    frames: list[TrackingFrame]
    events: list[RawEvent]
    ground_truth: list[EventDescription]


def default_entities() -> tuple[Entity, ...]:
    """The fixed 23-entity roster used by every synthetic match."""
    entities = []
    for i, (role, name) in enumerate(zip(ROLE_CODES, ATTACK_NAMES)):
        entities.append(Entity(i, EntityKind.PLAYER, Team.ATTACKING, role, name))
    for i, (role, name) in enumerate(zip(ROLE_CODES, DEFENSE_NAMES)):
        entities.append(Entity(11 + i, EntityKind.PLAYER, Team.DEFENDING, role, name))
    entities.append(Entity(BALL_INDEX, EntityKind.BALL, Team.NONE, "", "ball"))
    return tuple(entities)


def _anchor_matrix() -> np.ndarray:
    att = np.array([_ATTACK_ANCHORS[r] for r in ROLE_CODES])
    dfn = att.copy()
    dfn[:, 0] = CANONICAL_LENGTH - dfn[:, 0]
    return np.vstack([att, dfn])


class _PlayerSim:
    """Piecewise constant-acceleration wander around formation anchors."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.anchors = _anchor_matrix()
        self.pos = self.anchors + rng.normal(scale=2.0, size=(22, 2))
        self.vel = np.zeros((22, 2))
        self.accel = np.zeros((22, 2))
        self.frame = 0
        self.carry_player: int | None = None
        self.carry_vel = np.zeros(2)

    def start_carry(self, player: int, duration: float):
        target_x = min(self.pos[player, 0] + _CARRY_SPEED * duration,
                       CANONICAL_LENGTH - 6.0)
        target_y = float(np.clip(
            self.pos[player, 1] + self.rng.normal(scale=4.0),
            4.0, CANONICAL_WIDTH - 4.0))
        self.carry_player = player
        self.carry_vel = (np.array([target_x, target_y]) - self.pos[player]) / duration

    def stop_carry(self):
        self.carry_player = None

    def step(self):
        """Advance one frame; returns (positions, velocities) copies."""
        if self.frame % _ACCEL_BLOCK_FRAMES == 0:
            pull = 0.04 * (self.anchors - self.pos)
            noise = self.rng.normal(scale=0.5, size=(22, 2))
            self.accel = np.clip(pull + noise, -_MAX_ACCEL, _MAX_ACCEL)
        self.vel = np.clip(self.vel + self.accel * FRAME_DT,
                           -_MAX_SPEED, _MAX_SPEED)
        if self.carry_player is not None:
            self.vel[self.carry_player] = self.carry_vel
        self.pos = self.pos + self.vel * FRAME_DT
        self.frame += 1
        return self.pos.copy(), self.vel.copy()


def _snap(duration: float) -> int:
    """Duration in whole frames (event boundaries sit on the frame grid)."""
    return max(1, int(round(duration / FRAME_DT)))


class _MatchBuilder:
    """Accumulates frames segment by segment.

    Flight-style segments (pass, shot, clearance) are simulated first and the
    ball patched in afterwards, because the landing point is wherever the
    receiver ends up.
    """

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.sim = _PlayerSim(rng)
        self.pos: list[np.ndarray] = []
        self.vel: list[np.ndarray] = []
        self.ball_pos: list[np.ndarray] = []
        self.ball_vel: list[np.ndarray] = []

    @property
    def n_frames(self) -> int:
        return len(self.pos)

    def carry_segment(self, player: int, n_frames: int, moving: bool):
        if moving:
            self.sim.start_carry(player, n_frames * FRAME_DT)
        else:
            self.sim.carry_player = player
            self.sim.carry_vel = np.zeros(2)
        for _ in range(n_frames):
            pos, vel = self.sim.step()
            self.pos.append(pos)
            self.vel.append(vel)
            self.ball_pos.append(pos[player].copy())
            self.ball_vel.append(vel[player].copy())
        self.sim.stop_carry()

    def flight_segment(self, n_frames: int, origin_player: int | None,
                       target_fn):
        """Simulate players, then lay a constant-velocity ball on top.

        origin_player: ball starts exactly at that player's position on the
        first frame (the kick touch); None keeps the previous ball position.
        target_fn(last_positions) -> landing point, resolved after the
        players have moved.
        """
        start = self.n_frames
        for _ in range(n_frames):
            pos, vel = self.sim.step()
            self.pos.append(pos)
            self.vel.append(vel)
            self.ball_pos.append(np.zeros(2))   # patched below
            self.ball_vel.append(np.zeros(2))
        if origin_player is not None:
            origin = self.pos[start][origin_player].copy()
        else:
            origin = self.ball_pos[start - 1].copy()
        target = np.asarray(target_fn(self.pos[-1]), dtype=float)
        v = (target - origin) / (n_frames * FRAME_DT)
        for k in range(n_frames):
            self.ball_pos[start + k] = origin + v * (k * FRAME_DT)
            self.ball_vel[start + k] = v.copy()

    def frames(self) -> list[TrackingFrame]:
        out = []
        for i, (pp, vv, bp, bv) in enumerate(zip(self.pos, self.vel,
                                                 self.ball_pos, self.ball_vel)):
            positions = np.vstack([pp, bp[None, :]])
            velocities = np.vstack([vv, bv[None, :]])
            positions.setflags(write=False)
            velocities.setflags(write=False)
            out.append(TrackingFrame(timestamp=round(i * FRAME_DT, 6),
                                     positions=positions,
                                     velocities=velocities))
        return out


def generate_synthetic_match(seed: int, n_events: int,
                             jitter_std: float) -> SyntheticMatch:
    """Simulate one match with `n_events` annotated on-ball events.

    Annotated timestamps equal the true ones plus Gaussian jitter of the
    given std, clipped to +-2 std. Deterministic for a fixed seed.
    """
    if n_events < 1:
        raise InvalidArgError(f"n_events must be >= 1, got {n_events}")
    if jitter_std < 0:
        raise InvalidArgError(f"jitter_std must be >= 0, got {jitter_std}")

    rng = np.random.default_rng(seed)
    entities = default_entities()
    b = _MatchBuilder(rng)

    events: list[RawEvent] = []
    ground_truth: list[EventDescription] = []

    def jitter() -> float:
        if jitter_std == 0:
            return 0.0
        raw = rng.normal(0.0, jitter_std)
        return float(np.clip(raw, -2.0 * jitter_std, 2.0 * jitter_std))

    def record(etype: EventType, carrier: int, recipient: int | None,
               start_f: int, end_f: int, outcome: Outcome):
        t0, t1 = start_f * FRAME_DT, end_f * FRAME_DT
        kwargs = dict(
            event_type=etype,
            carrier_name=entities[carrier].name,
            carrier_role=entities[carrier].role,
            recipient_name=entities[recipient].name if recipient is not None else "",
            recipient_role=entities[recipient].role if recipient is not None else "",
            outcome=outcome)
        ground_truth.append(EventDescription(start_time=t0, end_time=t1, **kwargs))
        a0, a1 = t0 + jitter(), t1 + jitter()
        events.append(RawEvent(
            event=EventDescription(start_time=min(a0, a1),
                                   end_time=max(a0, a1), **kwargs),
            annotated_start=a0, annotated_end=a1))

    def pick_recipient(carrier: int, previous: int | None) -> int:
        # No immediate one-twos: a return pass would give the receiver two
        # ball touches inside one alignment window.
        others = [i for i in range(11) if i != carrier and i != previous]
        d = np.linalg.norm(b.sim.pos[others] - b.sim.pos[carrier], axis=1)
        w = np.exp(-d / 18.0)
        return int(rng.choice(others, p=w / w.sum()))

    # Lead-in: the first carrier stands on the ball while play settles.
    carrier = int(rng.integers(1, 11))
    b.carry_segment(carrier, _snap(4.0), moving=False)

    previous_carrier: int | None = None
    last_was_carry = False
    generated = 0
    while generated < n_events:
        start_f = b.n_frames
        x_now = b.sim.pos[carrier, 0]
        shot_p = 0.30 if x_now > 80 else (0.05 if x_now > 70 else 0.01)

        if not last_was_carry and rng.random() < 0.18:
            n = _snap(rng.uniform(4.0, 5.5))
            b.carry_segment(carrier, n, moving=True)
            record(EventType.CARRY, carrier, None, start_f, start_f + n,
                   Outcome.SUCCESS)
            last_was_carry = True
            generated += 1
            continue

        last_was_carry = False
        if rng.random() < shot_p:
            n = _snap(rng.uniform(0.6, 1.0))
            goal_mouth = np.array([CANONICAL_LENGTH - 0.5,
                                   CANONICAL_WIDTH / 2 + rng.uniform(-3.0, 3.0)])
            b.flight_segment(n, carrier, lambda _pos: goal_mouth)
            goal = rng.random() < 0.10
            record(EventType.SHOT, carrier, None, start_f, start_f + n,
                   Outcome.SUCCESS if goal else Outcome.FAIL)
            generated += 1
            # Possession break: ball is played out to a fresh carrier.
            previous_carrier = None
            carrier = int(rng.integers(1, 11))
            b.flight_segment(_snap(rng.uniform(2.0, 4.0)), None,
                             lambda pos, c=carrier: pos[c])
            continue

        recipient = pick_recipient(carrier, previous_carrier)
        n = _snap(rng.uniform(0.8, 2.0))
        failed = rng.random() < 0.08
        if failed:
            # Overhit: the ball runs a few metres past the receiver and is
            # lost, so the end anchor still sits near the receiver.
            overshoot = rng.uniform(2.5, 5.0)

            def miss_target(pos, c=carrier, r=recipient, extra=overshoot):
                direction = pos[r] - pos[c]
                norm = np.linalg.norm(direction)
                unit = direction / norm if norm > 1e-9 else np.array([1.0, 0.0])
                return pos[r] + extra * unit

            b.flight_segment(n, carrier, miss_target)
        else:
            b.flight_segment(n, carrier, lambda pos, r=recipient: pos[r])
        record(EventType.PASS, carrier, recipient, start_f, start_f + n,
               Outcome.FAIL if failed else Outcome.SUCCESS)
        generated += 1

        if failed:
            previous_carrier = None
            carrier = int(rng.integers(1, 11))
            b.flight_segment(_snap(rng.uniform(2.0, 4.0)), None,
                             lambda pos, c=carrier: pos[c])
        else:
            previous_carrier = carrier
            carrier = recipient

    # Tail so the final boundary has frames after it.
    b.carry_segment(carrier, _snap(3.0), moving=False)

    return SyntheticMatch(frames=b.frames(), events=events,
                          ground_truth=ground_truth)
