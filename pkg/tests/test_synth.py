import numpy as np
import pytest

from opentactics.align import ball_acceleration
from opentactics.synth import (FRAME_DT, InvalidArgError,
                               generate_synthetic_match)


def test_zero_jitter_means_exact_annotations():
    m = generate_synthetic_match(seed=3, n_events=20, jitter_std=0.0)
    for ev, truth in zip(m.events, m.ground_truth):
        assert ev.annotated_start == truth.start_time
        assert ev.annotated_end == truth.end_time


def test_deterministic_given_seed():
    a = generate_synthetic_match(seed=7, n_events=30, jitter_std=0.5)
    b = generate_synthetic_match(seed=7, n_events=30, jitter_std=0.5)
    assert len(a.frames) == len(b.frames)
    for fa, fb in zip(a.frames, b.frames):
        assert np.array_equal(fa.positions, fb.positions)
        assert np.array_equal(fa.velocities, fb.velocities)
    assert a.events == b.events
    assert a.ground_truth == b.ground_truth


def test_half_normal_jitter_mean():
    # Clipped-at-2-sigma Gaussian: E|x| = 0.781 sigma, near the half-normal
    # mean 0.9 * sqrt(2/pi) = 0.72 for sigma = 0.9.
    m = generate_synthetic_match(seed=5, n_events=200, jitter_std=0.9)
    errs = [abs(e.annotated_start - g.start_time)
            for e, g in zip(m.events, m.ground_truth)]
    errs += [abs(e.annotated_end - g.end_time)
             for e, g in zip(m.events, m.ground_truth)]
    assert abs(np.mean(errs) - 0.72) <= 0.1


def test_jitter_clipped_at_two_sigma():
    m = generate_synthetic_match(seed=5, n_events=200, jitter_std=0.9)
    for e, g in zip(m.events, m.ground_truth):
        assert abs(e.annotated_start - g.start_time) <= 1.8 + 1e-12
        assert abs(e.annotated_end - g.end_time) <= 1.8 + 1e-12


def test_nonpositive_event_count_rejected():
    with pytest.raises(InvalidArgError):
        generate_synthetic_match(seed=1, n_events=0, jitter_std=0.1)
    with pytest.raises(InvalidArgError):
        generate_synthetic_match(seed=1, n_events=5, jitter_std=-0.1)


def test_frames_at_ten_hz(small_match):
    times = np.array([f.timestamp for f in small_match.frames])
    np.testing.assert_allclose(np.diff(times), FRAME_DT, atol=1e-9)


def test_impulse_planted_at_event_starts(small_match):
    # The ball's acceleration spikes on the exact frame each event begins.
    signal = ball_acceleration(small_match.frames)
    for truth in small_match.ground_truth[:20]:
        idx = int(round(truth.start_time / FRAME_DT))
        window = signal.values[max(0, idx - 3):idx + 4]
        assert signal.values[idx] == window.max()
        assert signal.values[idx] >= 2.0


def test_event_count_and_chronology(small_match):
    assert len(small_match.events) == 60
    starts = [g.start_time for g in small_match.ground_truth]
    assert starts == sorted(starts)
