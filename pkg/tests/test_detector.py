from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sensestream.cif import scale_weights, segment_by_threshold
from sensestream.datagen import LatencyTag, generate_corpus
from sensestream.detector import (
    GT_FLOOR,
    DecisionKind,
    detector_new,
    oracle_ground_truth,
    oracle_uniform,
    push_frame,
    run_stream,
    write_boundaries,
)
from sensestream.errors import MissingAnnotationError, NegativeWeightError, NonPositiveThresholdError


def test_detector_new():
    st_ = detector_new(1.0, LatencyTag.HIGH)
    assert st_.residual == 0 and st_.frames_seen == 0 and st_.frames_since_last_trigger == 0
    assert detector_new(0.5, "low").tag is LatencyTag.LOW
    with pytest.raises(NonPositiveThresholdError):
        detector_new(0, LatencyTag.HIGH)


def test_push_frame_single_fire():
    state = detector_new(1.0)
    state, _ = push_frame(state, 0.2)
    state, d = push_frame(state, 0.9)
    assert d.kind is DecisionKind.WRITE and d.fires == 1 and d.frame_index == 2
    assert state.residual == pytest.approx(0.1)


def test_push_frame_zero_weight_reads():
    state, d = push_frame(detector_new(1.0), 0.0)
    assert d.kind is DecisionKind.READ and d.fires == 0 and state.residual == 0.0


def test_push_frame_multi_fire():
    state, _ = push_frame(detector_new(0.5), 0.4)
    state, d = push_frame(state, 1.2)
    assert d.fires == 3 and state.residual == pytest.approx(0.1)


def test_push_frame_rejects_negative():
    with pytest.raises(NegativeWeightError):
        push_frame(detector_new(1.0), -0.1)


def test_counters():
    decisions, state = run_stream(detector_new(1.0), [0.3, 0.3, 0.5, 0.1, 0.1])
    assert state.frames_seen == 5 and state.frames_since_last_trigger == 2
    assert [d.is_write for d in decisions] == [False, False, True, False, False]


def test_run_stream_examples():
    decisions, _ = run_stream(detector_new(1.0), [0.4, 0.5, 0.3, 0.9])
    assert [d.frame_index for d in decisions if d.is_write] == [3, 4]
    decisions, _ = run_stream(detector_new(1.0), np.zeros(20))
    assert not any(d.is_write for d in decisions)
    rng = np.random.default_rng(4)
    decisions, _ = run_stream(detector_new(1.0), scale_weights(rng.random(60), 5))
    assert sum(d.fires for d in decisions) == 5


weights = st.lists(st.floats(0, 2.0), max_size=80)


def run_chunked(w, gamma, cuts):
    state = detector_new(gamma)
    out = []
    bounds = [0] + sorted(set(c % (len(w) + 1) for c in cuts)) + [len(w)]
    for lo, hi in zip(bounds, bounds[1:]):
        decisions, state = run_stream(state, w[lo:hi])
        out.extend(decisions)
    return out, state


@given(weights, st.sampled_from([0.5, 1.0, 2.5, 5.0]), st.lists(st.integers(0, 200), max_size=6))
def test_online_offline_equivalence(w, gamma, cuts):
    seg = segment_by_threshold(w, gamma)
    decisions, state = run_chunked(w, gamma, cuts)
    assert write_boundaries(decisions) == list(seg.boundaries)
    assert state.residual == seg.final_residual
    assert [d.frame_index for d in decisions] == list(range(1, len(w) + 1))
    assert all((d.kind is DecisionKind.WRITE) == (d.fires >= 1) for d in decisions)


@given(weights)
def test_fires_non_increasing_in_gamma(w):
    totals = [sum(d.fires for d in run_stream(detector_new(g), w)[0]) for g in (0.5, 1.0, 1.5, 2.5, 5.0)]
    assert totals == sorted(totals, reverse=True)


# -- oracles -------------------------------------------------------------------


def test_ground_truth_example(make_record):
    rec = make_record([10, 25, 40], high=[10, 25])
    w = oracle_ground_truth(rec, LatencyTag.HIGH)
    assert w[9] == 1.0 and w[24] == 1.0
    assert np.all(np.delete(w, [9, 24]) == GT_FLOOR)
    assert segment_by_threshold(w, 1.0).boundaries == (10, 25)


def test_ground_truth_without_boundaries(make_record):
    rec = make_record([30], high=[])
    w = oracle_ground_truth(rec, "high")
    assert np.all(w == GT_FLOOR) and segment_by_threshold(w, 1.0).n_triggers == 0


def test_ground_truth_missing_annotation():
    unannotated = SimpleNamespace(id="bare", n_frames=10)
    with pytest.raises(MissingAnnotationError):
        oracle_ground_truth(unannotated, "high")


@pytest.mark.parametrize("profile", ["peak", "spread"])
def test_ground_truth_round_trip_on_corpus(profile):
    for rec in generate_corpus(21, n_utterances=10):
        for tag in LatencyTag:
            w = oracle_ground_truth(rec, tag, profile)
            assert segment_by_threshold(w, 1.0).boundaries == rec.boundaries(tag)


def test_tier_mass_ordering():
    for rec in generate_corpus(8, n_utterances=10):
        mass = {t: int(round(oracle_ground_truth(rec, t).sum())) for t in LatencyTag}
        assert mass[LatencyTag.LOW] > mass[LatencyTag.HIGH]
        assert mass[LatencyTag.LOW] >= mass[LatencyTag.MEDIUM] >= mass[LatencyTag.HIGH]


def test_uniform_oracle_periods(make_record):
    rec = make_record([40])
    decisions, _ = run_stream(detector_new(1.0), oracle_uniform(0.1).weights(rec, None, "high"))
    assert [d.frame_index for d in decisions if d.is_write] == [10, 20, 30, 40]
    decisions, _ = run_stream(detector_new(1.0), oracle_uniform(2.0).weights(rec, None, "high"))
    assert all(d.fires == 2 for d in decisions)
    decisions, _ = run_stream(detector_new(0.7), oracle_uniform(0.7).weights(rec, None, "high"))
    assert all(d.fires == 1 for d in decisions)
    with pytest.raises(ValueError):
        oracle_uniform(0.0)
