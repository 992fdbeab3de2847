import numpy as np
import pytest

from opentactics.align import (AccelSignal, align_events, ball_acceleration,
                               detect_peaks, refine_timestamp)
from opentactics.pitch import EventDescription, EventType
from opentactics.synth import (BALL_INDEX, InvalidArgError, RawEvent,
                               TrackingFrame, default_entities,
                               generate_synthetic_match)


def _frames_from_ball(velocities, dt=0.1, ball_positions=None,
                      player_positions=None):
    """Frames where only the ball matters; players parked on a grid."""
    n = len(velocities)
    frames = []
    pos = np.zeros(2)
    for i in range(n):
        positions = np.zeros((23, 2)) if player_positions is None \
            else np.array(player_positions[i])
        velocities_all = np.zeros((23, 2))
        velocities_all[BALL_INDEX] = velocities[i]
        if ball_positions is not None:
            positions[BALL_INDEX] = ball_positions[i]
        else:
            positions[BALL_INDEX] = pos
            pos = pos + np.asarray(velocities[i]) * dt
        frames.append(TrackingFrame(timestamp=i * dt, positions=positions,
                                    velocities=velocities_all))
    return frames


class TestBallAcceleration:
    def test_constant_velocity_gives_zeros(self):
        frames = _frames_from_ball([(3.0, 1.0)] * 20)
        sig = ball_acceleration(frames)
        np.testing.assert_allclose(sig.values, 0.0)

    def test_linear_ramp_gives_constant_magnitude(self):
        # vx ramps 0 -> 5 m/s over 1 s at 10 Hz: 0.5 m/s per frame.
        vels = [(0.5 * i, 0.0) for i in range(11)]
        sig = ball_acceleration(_frames_from_ball(vels))
        np.testing.assert_allclose(sig.values[1:], 5.0)
        assert sig.values[0] == 0.0

    def test_planted_impulse_is_global_max(self):
        vels = [(1.0, 0.0)] * 10 + [(9.0, 3.0)] * 10
        sig = ball_acceleration(_frames_from_ball(vels))
        assert np.argmax(sig.values) == 10

    def test_too_few_frames_rejected(self):
        with pytest.raises(InvalidArgError):
            ball_acceleration(_frames_from_ball([(0.0, 0.0)]))

    def test_nonuniform_spacing_rejected(self):
        frames = _frames_from_ball([(1.0, 0.0)] * 5)
        frames[3] = TrackingFrame(timestamp=0.37,
                                  positions=frames[3].positions,
                                  velocities=frames[3].velocities)
        with pytest.raises(InvalidArgError):
            ball_acceleration(frames)


class TestDetectPeaks:
    def test_strictly_increasing_has_no_peaks(self):
        sig = AccelSignal(times=np.arange(10) * 0.1,
                          values=np.arange(10, dtype=float))
        assert detect_peaks(sig) == []

    def test_single_triangular_bump(self):
        values = np.array([0, 1, 2, 3, 8, 3, 2, 1, 0], dtype=float)
        sig = AccelSignal(times=np.arange(9) * 0.75, values=values)
        assert detect_peaks(sig) == [3.0]

    def test_two_planted_impulses_in_order(self):
        values = np.zeros(100)
        values[20] = 6.0
        values[60] = 9.0
        sig = AccelSignal(times=np.arange(100) * 0.1, values=values)
        assert detect_peaks(sig) == [2.0, 6.0]

    def test_min_height_filters(self):
        values = np.zeros(30)
        values[10] = 1.5
        values[20] = 2.5
        sig = AccelSignal(times=np.arange(30) * 0.1, values=values)
        assert detect_peaks(sig, min_height=2.0) == [2.0]

    def test_short_signal_rejected(self):
        sig = AccelSignal(times=np.array([0.0, 0.1]),
                          values=np.array([0.0, 1.0]))
        with pytest.raises(InvalidArgError):
            detect_peaks(sig)


def _single_event_fixture(true_start=3.0, annotated_offset=0.5):
    """Ball kicked by the carrier at true_start; everything else quiet."""
    entities = default_entities()
    n = 80
    dt = 0.1
    kick_frame = int(round(true_start / dt))
    player_positions = []
    ball_positions = []
    for i in range(n):
        pos = np.zeros((23, 2))
        for j in range(22):
            pos[j] = (5.0 * (j + 1), 30.0)
        if i < kick_frame:
            ball = pos[4].copy()          # at the carrier's feet
        else:
            ball = pos[4] + np.array([8.0, 0.0]) * ((i - kick_frame) * dt)
        pos[BALL_INDEX] = ball
        player_positions.append(pos)
        ball_positions.append(ball)
    vels = [(0.0, 0.0)] * kick_frame + [(8.0, 0.0)] * (n - kick_frame)
    frames = _frames_from_ball(vels, ball_positions=ball_positions,
                               player_positions=player_positions)
    desc = EventDescription(EventType.PASS, entities[4].name,
                            entities[4].role, entities[9].name,
                            entities[9].role,
                            start_time=true_start + annotated_offset,
                            end_time=true_start + annotated_offset + 1.0)
    event = RawEvent(event=desc,
                     annotated_start=true_start + annotated_offset,
                     annotated_end=true_start + annotated_offset + 1.0)
    return frames, event


class TestRefineTimestamp:
    def test_fixed_point_when_annotation_on_peak(self):
        frames, _ = _single_event_fixture(annotated_offset=0.0)
        sig = ball_acceleration(frames)
        peaks = detect_peaks(sig)
        _, event = _single_event_fixture(annotated_offset=0.0)
        refined, fallback = refine_timestamp(event, frames, peaks)
        assert refined == pytest.approx(3.0)
        assert fallback is False

    def test_jittered_annotation_recovers_truth(self):
        frames, event = _single_event_fixture(annotated_offset=0.5)
        peaks = detect_peaks(ball_acceleration(frames))
        refined, fallback = refine_timestamp(event, frames, peaks)
        assert refined == pytest.approx(3.0)
        assert fallback is False

    def test_empty_peaks_falls_back(self):
        frames, event = _single_event_fixture()
        refined, fallback = refine_timestamp(event, frames, [])
        assert refined == event.annotated_start
        assert fallback is True

    def test_zero_window_rejected(self):
        frames, event = _single_event_fixture()
        with pytest.raises(InvalidArgError):
            refine_timestamp(event, frames, [3.0], window=0.0)

    def test_invariant_under_time_translation(self):
        frames, event = _single_event_fixture(annotated_offset=0.4)
        peaks = detect_peaks(ball_acceleration(frames))
        refined, _ = refine_timestamp(event, frames, peaks)

        shift = 100.0
        shifted_frames = [TrackingFrame(timestamp=f.timestamp + shift,
                                        positions=f.positions,
                                        velocities=f.velocities)
                          for f in frames]
        shifted_event = RawEvent(
            event=event.event,
            annotated_start=event.annotated_start + shift,
            annotated_end=event.annotated_end + shift)
        shifted_peaks = detect_peaks(ball_acceleration(shifted_frames))
        refined_shifted, _ = refine_timestamp(shifted_event, shifted_frames,
                                              shifted_peaks)
        assert refined_shifted == pytest.approx(refined + shift)


class TestAlignEvents:
    def test_zero_jitter_nothing_to_fix(self):
        m = generate_synthetic_match(seed=9, n_events=40, jitter_std=0.0)
        _, report = align_events(m.frames, m.events,
                                 ground_truth=m.ground_truth)
        assert report.mean_abs_shift < 0.05

    def test_paper_residual_claim_on_synthetic_oracle(self):
        # Average misalignment of ~0.9 s must refine to under 0.1 s.
        m = generate_synthetic_match(seed=13, n_events=120, jitter_std=0.9)
        _, report = align_events(m.frames, m.events, window=2.0,
                                 ground_truth=m.ground_truth)
        assert report.residual_error < 0.1

    def test_never_moves_beyond_window(self):
        m = generate_synthetic_match(seed=17, n_events=60, jitter_std=0.9)
        window = 2.0
        _, report = align_events(m.frames, m.events, window=window)
        for r in report.refinements:
            assert abs(r.refined_ts - r.original_ts) <= window + 1e-9

    def test_skipping_alignment_increases_residual(self):
        m = generate_synthetic_match(seed=19, n_events=80, jitter_std=0.9)
        _, report = align_events(m.frames, m.events,
                                 ground_truth=m.ground_truth)
        raw_residual = np.mean(
            [abs(e.annotated_start - g.start_time)
             for e, g in zip(m.events, m.ground_truth)]
            + [abs(e.annotated_end - g.end_time)
               for e, g in zip(m.events, m.ground_truth)])
        assert report.residual_error < raw_residual

    def test_event_without_anchor_flagged_fallback(self):
        m = generate_synthetic_match(seed=9, n_events=10, jitter_std=0.0)
        ghost = EventDescription(EventType.PASS, "Nobody", "CF",
                                 "Phantom", "GK", start_time=5.0,
                                 end_time=6.0)
        events = m.events + [RawEvent(event=ghost, annotated_start=5.0,
                                      annotated_end=6.0)]
        truths = m.ground_truth + [ghost]
        _, report = align_events(m.frames, events, ground_truth=truths)
        assert report.n_fallback >= 2  # ghost start and end
        assert report.residual_error < 0.1  # fallbacks excluded
