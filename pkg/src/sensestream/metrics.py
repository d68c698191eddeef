"""Latency, efficiency and quality metrics for simulated sessions."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import (
    EmptyHypothesisError,
    LengthMismatchError,
    NoDecisionsError,
    ZeroAudioError,
)


@dataclass(frozen=True)
class DelayProfile:
    """Per-token emission delays (seconds) for one hypothesis."""

    delays: tuple[float, ...]
    source_duration: float
    ref_len: int
    hyp_len: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "delays", tuple(float(d) for d in self.delays))
        if self.hyp_len is None:
            object.__setattr__(self, "hyp_len", len(self.delays))
        if not self.source_duration > 0:
            raise ZeroAudioError("source_duration must be positive")


@dataclass(frozen=True)
class EfficiencyStats:
    decision_count: int
    total_decision_compute: float
    audio_duration: float


def laal(profile: DelayProfile) -> float:
    """Length-adaptive average lagging, in seconds.

    The oracle rate uses ``max(hyp_len, ref_len)`` so over-long hypotheses
    are not rewarded for emitting early.
    """
    n = profile.hyp_len
    if n < 1 or not profile.delays:
        raise EmptyHypothesisError("LAAL needs at least one hypothesis token")
    if len(profile.delays) != n:
        raise LengthMismatchError(f"{len(profile.delays)} delays for {n} hypothesis tokens")
    src = profile.source_duration
    rate = src / max(n, profile.ref_len)
    tau = n
    for i, d in enumerate(profile.delays, start=1):
        if d >= src:
            tau = i
            break
    return math.fsum(d - i * rate for i, d in enumerate(profile.delays[:tau])) / tau


def average_lagging(profile: DelayProfile) -> float:
    """Classic AL: the same sum with the rate taken from the reference length only."""
    n = profile.hyp_len
    if n < 1:
        raise EmptyHypothesisError("AL needs at least one hypothesis token")
    src = profile.source_duration
    rate = src / profile.ref_len
    tau = next((i for i, d in enumerate(profile.delays, start=1) if d >= src), n)
    return math.fsum(d - i * rate for i, d in enumerate(profile.delays[:tau])) / tau


def avg_decision_time(stats: EfficiencyStats) -> float:
    """Mean simulated compute per read/write decision, in milliseconds."""
    if stats.decision_count < 1:
        raise NoDecisionsError("no decisions were made")
    return 1000.0 * stats.total_decision_compute / stats.decision_count


def rtf(stats: EfficiencyStats) -> float:
    if not stats.audio_duration > 0:
        raise ZeroAudioError("audio duration must be positive")
    return stats.total_decision_compute / stats.audio_duration


# -- BLEU ---------------------------------------------------------------------


def _ngrams(tokens: Sequence, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def modified_precision(hypothesis: Sequence, reference: Sequence, n: int) -> Fraction:
    """Clipped n-gram precision of one hypothesis against one reference."""
    matched, total = _clipped_counts(hypothesis, reference, n)
    if total == 0:
        return Fraction(0)
    return Fraction(matched, total)


def _clipped_counts(hypothesis, reference, n) -> tuple[int, int]:
    hyp = _ngrams(hypothesis, n)
    ref = _ngrams(reference, n)
    matched = sum(min(c, ref[g]) for g, c in hyp.items())
    return matched, sum(hyp.values())


def corpus_bleu(hypotheses, references, max_n: int = 4) -> float:
    """Unsmoothed corpus BLEU in [0, 1] with a single reference per segment."""
    hypotheses = list(hypotheses)
    references = list(references)
    if len(hypotheses) != len(references):
        raise LengthMismatchError(f"{len(hypotheses)} hypotheses vs {len(references)} references")
    if not hypotheses:
        raise LengthMismatchError("BLEU needs at least one segment")
    matched = [0] * max_n
    totals = [0] * max_n
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            m, t = _clipped_counts(hyp, ref, n)
            matched[n - 1] += m
            totals[n - 1] += t
    if hyp_len == 0 or any(m == 0 for m in matched):
        return 0.0
    log_p = math.fsum(math.log(m / t) for m, t in zip(matched, totals)) / max_n
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return bp * math.exp(log_p)
