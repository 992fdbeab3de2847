import numpy as np
import pytest

from opentactics.pitch import (FEAT_VX, FEAT_VY, FEAT_X, FEAT_Y, ROLE_CODES,
                               EventDescription, EventType, Outcome,
                               OutOfBoundsError, ParseError, Pitch,
                               SpatiotemporalGraph, deserialize_instance,
                               normalize_coordinates, parse_description_text,
                               read_instances, render_description_text,
                               serialize_instance, write_instances)
from opentactics.synth import ATTACK_NAMES, default_entities

from conftest import make_graph


class TestNormalizeCoordinates:
    def test_idempotent_on_canonical(self, rng):
        g = make_graph(rng)
        out = normalize_coordinates(g, Pitch())
        assert np.array_equal(out.features, g.features)

    def test_midpoint_maps_to_midpoint(self, rng):
        g = make_graph(rng, scale_x=100.0, scale_y=64.0)
        feats = np.array(g.features)
        feats[0, 0, FEAT_X] = 50.0
        feats[0, 0, FEAT_Y] = 32.0
        g = g.with_features(feats)
        out = normalize_coordinates(g, Pitch(length_m=100.0, width_m=64.0))
        assert out.features[0, 0, FEAT_X] == pytest.approx(52.5)
        assert out.features[0, 0, FEAT_Y] == pytest.approx(34.0)

    def test_matches_affine_oracle(self, rng):
        # Independent per-coordinate affine map applied element-wise.
        g = make_graph(rng, scale_x=110.0, scale_y=70.0)
        out = normalize_coordinates(g, Pitch(length_m=110.0, width_m=70.0))
        sx, sy = 105.0 / 110.0, 68.0 / 70.0
        for col, s in ((FEAT_X, sx), (FEAT_Y, sy), (FEAT_VX, sx), (FEAT_VY, sy)):
            expected = np.array([[g.features[t, v, col] * s
                                  for v in range(23)] for t in range(5)])
            np.testing.assert_allclose(out.features[:, :, col], expected,
                                       rtol=0, atol=1e-12)

    def test_out_of_bounds_rejected(self, rng):
        g = make_graph(rng)
        feats = np.array(g.features)
        feats[0, 3, FEAT_X] = 115.0  # beyond 105 + 5 margin
        g = g.with_features(feats)
        with pytest.raises(OutOfBoundsError):
            normalize_coordinates(g, Pitch())

    def test_preserves_relative_distance_scale(self, rng):
        g = make_graph(rng, scale_x=105.0, scale_y=68.0)
        out = normalize_coordinates(g, Pitch(length_m=210.0, width_m=136.0))
        dx_in = g.features[0, 1, FEAT_X] - g.features[0, 2, FEAT_X]
        dx_out = out.features[0, 1, FEAT_X] - out.features[0, 2, FEAT_X]
        assert dx_out == pytest.approx(dx_in * 0.5)


class TestDescriptionText:
    def test_pass_template(self):
        d = EventDescription(EventType.PASS, "Verratti", "LDM",
                             "Hakimi", "RWB")
        assert render_description_text(d) == \
            "Pass from Verratti (LDM) to Hakimi (RWB)"

    def test_carry_template(self):
        d = EventDescription(EventType.CARRY, "Mbappe", "CF")
        assert render_description_text(d) == "Carry by Mbappe (CF)"

    def test_round_trip_1000_random(self, rng):
        names = list(ATTACK_NAMES) + ["Verratti", "Hakimi", "Mbappe"]
        for _ in range(1000):
            etype = EventType(rng.choice(["Pass", "Carry", "Shot"]))
            carrier = str(rng.choice(names))
            if etype is EventType.PASS:
                recipient = str(rng.choice([n for n in names if n != carrier]))
                d = EventDescription(etype, carrier, str(rng.choice(ROLE_CODES)),
                                     recipient, str(rng.choice(ROLE_CODES)))
            else:
                d = EventDescription(etype, carrier, str(rng.choice(ROLE_CODES)))
            parsed = parse_description_text(render_description_text(d))
            assert parsed.surface_fields() == d.surface_fields()
            # Full equality holds for canonical-default metadata.
            assert parsed == d


class TestGraphInvariants:
    def test_entity_count_enforced(self, rng):
        g = make_graph(rng)
        with pytest.raises(ValueError, match="23 entities"):
            SpatiotemporalGraph(entities=g.entities[:-1], features=g.features,
                                time_index=g.time_index,
                                description=g.description)

    def test_adjacency_all_ones(self, rng):
        g = make_graph(rng)
        assert np.all(g.adjacency == 1)
        bad = np.ones((23, 23))
        bad[0, 1] = 0
        with pytest.raises(ValueError, match="all-ones"):
            SpatiotemporalGraph(entities=g.entities, features=g.features,
                                time_index=g.time_index,
                                description=g.description, adjacency=bad)

    def test_time_index_strictly_increasing(self, rng):
        g = make_graph(rng)
        with pytest.raises(ValueError, match="strictly increasing"):
            SpatiotemporalGraph(entities=g.entities, features=g.features,
                                time_index=(0.0, 0.0, 0.1, 0.2, 0.3),
                                description=g.description)

    def test_features_immutable(self, rng):
        g = make_graph(rng)
        with pytest.raises(ValueError):
            g.features[0, 0, 0] = 99.0

    def test_team_counts(self):
        entities = default_entities()
        assert sum(1 for e in entities if e.role == "") == 1
        assert len(entities) == 23

    def test_pass_requires_distinct_recipient(self):
        with pytest.raises(ValueError):
            EventDescription(EventType.PASS, "Abel", "GK", "Abel", "GK")

    def test_carry_rejects_recipient(self):
        with pytest.raises(ValueError):
            EventDescription(EventType.CARRY, "Abel", "GK", "Baro", "LWB")


class TestSerialization:
    def test_round_trip_exact(self, rng):
        g = make_graph(rng)
        g2 = deserialize_instance(serialize_instance(g))
        assert g2.entities == g.entities
        assert np.array_equal(g2.features, g.features)
        assert g2.time_index == g.time_index
        assert g2.description == g.description

    def test_truncated_record_raises(self, rng):
        data = serialize_instance(make_graph(rng))
        with pytest.raises(ParseError) as exc:
            deserialize_instance(data[:200])
        assert exc.value.byte_offset >= 0

    def test_bulk_file_order_preserved(self, rng, tmp_path):
        graphs = [make_graph(rng) for _ in range(50)]
        path = tmp_path / "bulk.stg.jsonl"
        assert write_instances(path, graphs) == 50
        loaded = list(read_instances(path))
        assert len(loaded) == 50
        for a, b in zip(graphs, loaded):
            assert np.array_equal(a.features, b.features)
            assert a.description == b.description

    def test_invalid_outcome_value_raises(self, rng):
        record = serialize_instance(make_graph(rng)).decode()
        broken = record.replace('"Success"', '"Maybe"')
        with pytest.raises(ParseError):
            deserialize_instance(broken.encode())
