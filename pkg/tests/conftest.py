import pytest
from hypothesis import HealthCheck, settings

from sensestream.datagen import Unit, UtteranceRecord, generate_corpus

settings.register_profile(
    "default", deadline=None, max_examples=100, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def build_record(ends, high=(), med=None, low=None, tokens=None, frame_rate=50.0, uid="u0", seed=7):
    """Hand-built record whose atomic units end at ``ends`` (last entry = frame count)."""
    ends = list(ends)
    low = list(ends[:-1]) if low is None else list(low)
    med = list(high) if med is None else list(med)
    tokens = tokens or [[100 + i] for i in range(len(ends))]
    units, start = [], 1
    for end, tgt in zip(ends, tokens):
        units.append(Unit(start, end, (1,), tuple(tgt)))
        start = end + 1
    return UtteranceRecord(
        id=uid,
        duration_s=ends[-1] / frame_rate,
        frame_rate=frame_rate,
        dim=8,
        seed=seed,
        boundaries_low=tuple(low),
        boundaries_med=tuple(med),
        boundaries_high=tuple(high),
        units=tuple(units),
    )


@pytest.fixture
def make_record():
    return build_record


@pytest.fixture(scope="session")
def small_corpus():
    return generate_corpus(3, n_utterances=6)
