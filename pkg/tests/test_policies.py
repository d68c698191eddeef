import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sensestream.cif import segment_by_threshold
from sensestream.datagen import LatencyTag, generate_corpus
from sensestream.detector import oracle_ground_truth
from sensestream.errors import NonPositiveThresholdError, PolicySpecError
from sensestream.policies import Chunk, PolicySpec, longest_common_prefix, make_session, parse_policy
from sensestream.simulator import chunk_frames
from sensestream.translator import HALLUCINATION_BASE, TranslatorOracle

# -- spec grammar --------------------------------------------------------------


def test_parse_examples():
    s = parse_policy("sense:gamma=1.5,tag=high")
    assert (s.kind, s.gamma, s.tag) == ("sense", 1.5, LatencyTag.HIGH)
    assert parse_policy("waitk:k=3").k == 3
    assert parse_policy("la:chunk_ms=500").effective_chunk_ms == 500
    m = parse_policy("mockllm:base=waitk:k=3,cost_ms=116.2")
    assert m.cost_ms == 116.2 and m.base == PolicySpec("waitk", k=3)


def test_parse_defaults_and_round_trip():
    assert parse_policy("sense") == PolicySpec("sense", 1.0, LatencyTag.HIGH)
    for text in ["sense:gamma=2.5,tag=low", "waitk:k=4,cost_ms=3", "la", "mockllm:base=sense:gamma=2,tag=high,cost_ms=116.2"]:
        assert parse_policy(str(parse_policy(text))) == parse_policy(text)


def test_mockllm_base_keeps_its_options():
    m = parse_policy("mockllm:base=sense:gamma=2,tag=medium,cost_ms=116.2")
    assert m.base == PolicySpec("sense", 2.0, LatencyTag.MEDIUM)
    assert m.sense is m.base and m.with_gamma(3.0).base.gamma == 3.0


@pytest.mark.parametrize(
    "text",
    ["nope", "sense:gamma", "sense:k=3", "waitk:k=0", "waitk:k=x", "sense:tag=ultra", "mockllm:cost_ms=3", "la:cost_ms=-1"],
)
def test_parse_errors(text):
    with pytest.raises(PolicySpecError):
        parse_policy(text)


def test_zero_gamma_rejected():
    with pytest.raises(NonPositiveThresholdError):
        parse_policy("sense:gamma=0")


# -- sessions ------------------------------------------------------------------


def drive(record, spec, alphas=None, chunk_ms=500.0):
    translator = TranslatorOracle(record)
    session = make_session(spec, translator)
    actions = []
    for i, (start, end, _) in enumerate(chunk_frames(record, chunk_ms), start=1):
        chunk_alphas = alphas[start - 1 : end] if alphas is not None else None
        actions.append(session.step(Chunk(i, start, end, chunk_alphas)))
    return session, actions, session.flush(), translator


def test_sense_commit_is_translation_of_fired_span(make_record):
    rec = make_record([3, 10], high=[3], tokens=[[11, 12], [13]])
    alphas = np.array([0.4, 0.3, 0.3] + [0.0] * 7)
    session, actions, flush, tr = drive(rec, "sense:gamma=1", alphas, chunk_ms=200.0)
    assert actions[0].commit == tr.translate_span(1, 3) == [11, 12]
    assert session.trigger_frames == [3]
    assert flush.commit == [13]


def test_sense_zero_weights_and_huge_gamma(make_record):
    rec = make_record([10, 20], high=[10])
    _, actions, flush, tr = drive(rec, "sense:gamma=1", np.zeros(20), chunk_ms=100.0)
    assert all(not a.commit for a in actions)
    alphas = oracle_ground_truth(rec, "high")
    _, actions, flush, tr = drive(rec, "sense:gamma=1e9", alphas, chunk_ms=100.0)
    assert all(not a.commit for a in actions) and flush.commit == tr.reference()


def test_sense_commit_boundaries_equal_offline_segmentation():
    for rec in generate_corpus(9, n_utterances=5):
        alphas = oracle_ground_truth(rec, "low", "spread")
        for gamma in (0.5, 1.0, 2.5):
            session, _, _, _ = drive(rec, PolicySpec("sense", gamma, LatencyTag.LOW), alphas, chunk_ms=300)
            assert session.trigger_frames == list(segment_by_threshold(alphas, gamma).boundaries)


def test_waitk_trace(make_record):
    rec = make_record([100, 250], tokens=[[1, 2, 3], [4, 5, 6]])
    _, actions, flush, tr = drive(rec, "waitk:k=3")
    assert [len(a.commit) for a in actions[:4]] == [0, 0, 0, 1]
    assert all(len(a.commit) <= 1 for a in actions)
    assert sum(len(a.commit) for a in actions) + len(flush.commit) == len(tr)


def test_waitk_single_chunk_and_large_k(make_record):
    rec = make_record([20], tokens=[[1, 2]])
    _, actions, flush, tr = drive(rec, "waitk:k=1")
    assert len(actions) == 1 and not actions[0].commit and flush.commit == [1, 2]
    rec = make_record([60, 120])
    _, actions, flush, tr = drive(rec, "waitk:k=50")
    assert not any(a.commit for a in actions) and flush.commit == tr.reference()


def test_longest_common_prefix():
    assert longest_common_prefix("a b c".split(), "a b d e".split()) == ["a", "b"]
    assert longest_common_prefix([1, 2], [1, 2]) == [1, 2]
    assert longest_common_prefix([], [1]) == []


def test_local_agreement_cold_start_and_safety():
    for rec in generate_corpus(2, n_utterances=4):
        tr = TranslatorOracle(rec)
        session = make_session("la", tr)
        hyps = []
        for i, (start, end, _) in enumerate(chunk_frames(rec, 500.0), start=1):
            before = list(session.committed)
            action = session.step(Chunk(i, start, end))
            hyps.append(tr.hypothesis(end, before))
            if i == 1:
                assert action.commit == []
            if action.commit:
                committed = session.committed
                # the committed prefix is shared by the last two hypotheses
                assert hyps[-2][: len(committed)] == committed
                assert hyps[-1][: len(committed)] == committed


def test_mockllm_replays_base(make_record):
    rec = generate_corpus(6, n_utterances=1).records[0]
    base = drive(rec, "waitk:k=3")
    mock = drive(rec, "mockllm:base=waitk:k=3,cost_ms=116.2")
    assert [a.commit for a in base[1]] == [a.commit for a in mock[1]]
    assert mock[0].decision_cost_s == pytest.approx(0.1162)


@given(st.integers(0, 10_000), st.sampled_from(["sense:gamma=0.5", "sense:gamma=2", "waitk:k=2", "la"]))
def test_commits_append_only_and_deterministic(seed, spec):
    rec = generate_corpus(seed, n_utterances=1, min_duration_s=2, max_duration_s=5).records[0]
    alphas = oracle_ground_truth(rec, "high", "spread")
    s1, a1, f1, tr = drive(rec, spec, alphas)
    s2, a2, f2, _ = drive(rec, spec, alphas)
    assert [a.commit for a in a1] == [a.commit for a in a2]
    out = [t for a in a1 for t in a.commit] + f1.commit
    assert out == s1.committed and len(out) == len(tr)


def test_translator_anchor_and_corruption(make_record):
    rec = make_record([10, 20], tokens=[[5, 6], [7]])
    tr = TranslatorOracle(rec)
    assert tr.count_through(4) == 0 and tr.count_through(5) == 1 and tr.count_through(10) == 2
    assert tr.translate_span(1, 10) == [5, 6]
    assert tr.render(2, 20) == 7
    early = tr.render(2, 10)
    assert early == 7 or early >= HALLUCINATION_BASE
    assert tr.hypothesis(20) == tr.reference() == [5, 6, 7]
