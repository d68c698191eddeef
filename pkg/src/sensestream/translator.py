"""Deterministic stand-in for the offline translation model.

Each target token of a unit is anchored to a source frame: token ``j`` of a
unit with ``L`` tokens spanning ``n`` frames sits at the frame where the
unit's proportional share first reaches ``j + 1`` tokens. Translating a frame
span therefore yields every unit fully inside it plus a proportional share
of a unit it cuts through.

Quality degrades when a unit is translated before it is complete: such a
token is correct only if a fixed per-token draw falls below the fraction of
the unit already heard, otherwise a hallucinated id is emitted. Hallucinated
ids depend on how much audio was available, so two hypotheses made from
different prefixes disagree on them.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

from .datagen import UtteranceRecord

HALLUCINATION_BASE = 1_000_000
_MASK = (1 << 64) - 1


def _mix(*values: int) -> int:
    # splitmix64 over the values; stable across platforms and processes
    h = 0x9E3779B97F4A7C15
    for v in values:
        h = (h ^ (v & _MASK)) & _MASK
        h = (h + 0x9E3779B97F4A7C15) & _MASK
        z = h
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        h = z ^ (z >> 31)
    return h


@dataclass(frozen=True)
class _Token:
    ref: int
    anchor: int
    unit_start: int
    unit_end: int
    draw: float


class TranslatorOracle:
    def __init__(self, record: UtteranceRecord):
        self.record = record
        tokens = []
        for u in record.units:
            n, L = u.n_frames, len(u.tgt)
            for j, tok in enumerate(u.tgt):
                anchor = u.start - 1 + -(-(j + 1) * n // L)
                draw = _mix(record.seed, len(tokens)) / 2.0**64
                tokens.append(_Token(tok, anchor, u.start, u.end, draw))
        self._tokens = tokens
        self._anchors = [t.anchor for t in tokens]

    def __len__(self):
        return len(self._tokens)

    @property
    def n_frames(self) -> int:
        return self.record.n_frames

    def reference(self) -> list[int]:
        return [t.ref for t in self._tokens]

    def render(self, index: int, available: int) -> int:
        """Token ``index`` as produced after hearing frames ``1..available``."""
        t = self._tokens[index]
        if available >= t.unit_end:
            return t.ref
        coverage = max(0, available - t.unit_start + 1) / (t.unit_end - t.unit_start + 1)
        if t.draw < coverage:
            return t.ref
        return HALLUCINATION_BASE + _mix(self.record.seed, index, available) % HALLUCINATION_BASE

    def count_through(self, frame: int) -> int:
        """Number of tokens anchored at or before ``frame``."""
        return bisect.bisect_right(self._anchors, frame)

    def translate_span(self, start: int, end: int) -> list[int]:
        """Tokens anchored in frames ``start..end`` (1-based, inclusive), heard up to ``end``."""
        lo = self.count_through(start - 1)
        hi = self.count_through(end)
        return [self.render(i, end) for i in range(lo, hi)]

    def hypothesis(self, available: int, prefix: list[int] | tuple = ()) -> list[int]:
        """Full hypothesis for the audio heard so far, forced to start with ``prefix``."""
        hi = self.count_through(available)
        return list(prefix) + [self.render(i, available) for i in range(len(prefix), hi)]
