"""Streaming sense-unit detector: the online read/write decision state machine.

The detector consumes one alpha weight per encoder frame and decides, frame
by frame, whether a sense unit has just completed (write) or more input is
needed (read). It shares its accumulate step with
:func:`sensestream.cif.segment_by_threshold`, so online and offline decisions
agree bit for bit.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Protocol

import numpy as np

from .cif import accumulate, as_weights
from .datagen import LatencyTag, UtteranceRecord, require_annotation
from .errors import NegativeWeightError, NonPositiveThresholdError

GT_FLOOR = 1e-6


class DecisionKind(enum.Enum):
    READ = "read"
    WRITE = "write"


@dataclass(frozen=True)
class Decision:
    kind: DecisionKind
    frame_index: int
    fires: int = 0

    @property
    def is_write(self) -> bool:
        return self.kind is DecisionKind.WRITE


@dataclass(frozen=True)
class AccumulatorState:
    gamma: float
    tag: LatencyTag = LatencyTag.HIGH
    residual: float = 0.0
    frames_seen: int = 0
    frames_since_last_trigger: int = 0


def detector_new(gamma: float, tag=LatencyTag.HIGH) -> AccumulatorState:
    if not gamma > 0:
        raise NonPositiveThresholdError(f"gamma must be positive, got {gamma}")
    return AccumulatorState(gamma=float(gamma), tag=LatencyTag.parse(tag))


def push_frame(state: AccumulatorState, alpha: float) -> tuple[AccumulatorState, Decision]:
    if not alpha >= 0 or not math.isfinite(alpha):
        raise NegativeWeightError(f"alpha must be a finite non-negative number, got {alpha}")
    residual, fires = accumulate(state.residual, float(alpha), state.gamma)
    seen = state.frames_seen + 1
    since = 0 if fires else state.frames_since_last_trigger + 1
    new = replace(state, residual=residual, frames_seen=seen, frames_since_last_trigger=since)
    kind = DecisionKind.WRITE if fires else DecisionKind.READ
    return new, Decision(kind, seen, fires)


def run_stream(state: AccumulatorState, weights) -> tuple[list[Decision], AccumulatorState]:
    """Fold :func:`push_frame` over a whole weight stream."""
    decisions = []
    for alpha in as_weights(weights).tolist():
        state, decision = push_frame(state, alpha)
        decisions.append(decision)
    return decisions, state


def write_boundaries(decisions) -> list[int]:
    """Expand write decisions into a boundary list (a frame repeated once per fire)."""
    out = []
    for d in decisions:
        out.extend([d.frame_index] * d.fires)
    return out


# -- weight oracles -----------------------------------------------------------


class WeightOracle(Protocol):
    """Anything that assigns a non-negative alpha to every frame of an utterance."""

    name: str

    def weights(self, record: UtteranceRecord, features: np.ndarray, tag: LatencyTag) -> np.ndarray: ...


def oracle_ground_truth(record: UtteranceRecord, tag=LatencyTag.HIGH, profile: str = "peak") -> np.ndarray:
    """Weights a perfectly trained detector would emit for ``record`` at ``tag``.

    ``peak`` puts mass 1.0 on each annotated boundary frame and ``GT_FLOOR``
    elsewhere. ``spread`` distributes each completed unit's unit mass evenly
    over its frames, so the threshold is crossed exactly on the unit's last
    frame at gamma=1 but fractional thresholds fire mid-unit. Both reproduce
    the annotated boundaries at gamma=1.
    """
    tag = LatencyTag.parse(tag)
    boundaries = require_annotation(record, tag)
    n = record.n_frames
    w = np.full(n, GT_FLOOR)
    if profile == "peak":
        if boundaries:
            w[np.asarray(boundaries) - 1] = 1.0
    elif profile == "spread":
        start = 0
        for b in boundaries:
            w[start:b] = 1.0 / (b - start)
            start = b
    else:
        raise ValueError(f"unknown ground-truth profile {profile!r}")
    return w


@dataclass(frozen=True)
class GroundTruthOracle:
    profile: str = "peak"
    name: str = "gt"

    def weights(self, record, features, tag):
        return oracle_ground_truth(record, tag, self.profile)


@dataclass(frozen=True)
class UniformOracle:
    rate: float
    name: str = "uniform"

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"rate must be positive, got {self.rate}")

    def weights(self, record, features, tag):
        n = record.n_frames if record is not None else len(features)
        return np.full(n, float(self.rate))


def oracle_uniform(rate: float) -> UniformOracle:
    return UniformOracle(float(rate))
