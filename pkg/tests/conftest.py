import numpy as np
import pytest

from opentactics.pitch import (FEATURE_DIM, FEAT_BALL, FEAT_ROLE0, FEAT_TEAM,
                               FEAT_VX, FEAT_VY, FEAT_X, FEAT_Y, ROLE_CODES,
                               EntityKind, EventDescription, EventType,
                               Outcome, SpatiotemporalGraph, Team)
from opentactics.synth import default_entities


def make_graph(rng: np.random.Generator, n_steps: int = 5,
               description: EventDescription | None = None,
               scale_x: float = 105.0, scale_y: float = 68.0
               ) -> SpatiotemporalGraph:
    """A valid random instance on the default roster."""
    entities = default_entities()
    feats = np.zeros((n_steps, 23, FEATURE_DIM))
    feats[:, :, FEAT_X] = rng.uniform(0, scale_x, size=(n_steps, 23))
    feats[:, :, FEAT_Y] = rng.uniform(0, scale_y, size=(n_steps, 23))
    feats[:, :, FEAT_VX] = rng.normal(scale=2.0, size=(n_steps, 23))
    feats[:, :, FEAT_VY] = rng.normal(scale=2.0, size=(n_steps, 23))
    for i, e in enumerate(entities):
        if e.kind is EntityKind.BALL:
            feats[:, i, FEAT_BALL] = 1.0
        else:
            feats[:, i, FEAT_ROLE0 + ROLE_CODES.index(e.role)] = 1.0
            feats[:, i, FEAT_TEAM] = 1.0 if e.team is Team.ATTACKING else -1.0
    if description is None:
        description = EventDescription(
            EventType.PASS, entities[6].name, entities[6].role,
            entities[10].name, entities[10].role,
            start_time=4.0, end_time=5.2, outcome=Outcome.SUCCESS)
    return SpatiotemporalGraph(
        entities=entities, features=feats,
        time_index=tuple(4.0 + 0.3 * k for k in range(n_steps)),
        description=description)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_match():
    from opentactics.synth import generate_synthetic_match
    return generate_synthetic_match(seed=11, n_events=60, jitter_std=0.9)
