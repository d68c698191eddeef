"""Weight scaling, threshold segmentation and integrate-and-fire aggregation.

Everything here is a pure function over float64 numpy arrays. Frame indices
exposed to callers are 1-based: a boundary ``t`` is the last frame of the
segment it closes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatchError,
    NegativeWeightError,
    NonPositiveThresholdError,
    ZeroMassError,
)

# Relative slack under which accumulated mass counts as having reached the
# threshold. Keeps the floor-count law stable when sums land on k*gamma.
FIRE_TOL = 1e-9


@dataclass(frozen=True)
class FeatureSequence:
    frames: np.ndarray
    frame_duration: float = 0.02

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim == 1:
            frames = frames[:, None]
        if frames.ndim != 2 or (frames.shape[0] and frames.shape[1] < 1):
            raise DimensionMismatchError(f"frames must be (T, d) with d >= 1, got {frames.shape}")
        if not self.frame_duration > 0:
            raise ValueError("frame_duration must be positive")
        object.__setattr__(self, "frames", frames)

    def __len__(self):
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class SenseSegmentation:
    boundaries: tuple[int, ...]
    final_residual: float
    gamma: float = 1.0
    # residual left in the accumulator right after each boundary entry
    residuals: tuple[float, ...] = ()
    n_frames: int = 0

    @property
    def n_triggers(self) -> int:
        return len(self.boundaries)

    def segments(self) -> list[tuple[int, int]]:
        """Half-open 0-based ``(start, stop)`` frame ranges, one per segment.

        ``n_triggers + 1`` ranges are returned; the last one runs to the end
        of the stream and repeated boundaries give empty ranges.
        """
        out = []
        start = 0
        for b in self.boundaries:
            out.append((start, b))
            start = b
        out.append((start, self.n_frames))
        return out


@dataclass(frozen=True)
class IntegratedUnit:
    vectors: np.ndarray
    fired_masses: tuple[float, ...] = ()
    tail_mass: float = 0.0
    # accumulated (unfired) vector left at the end, if any mass remained
    tail_vector: np.ndarray | None = None

    @property
    def count(self) -> int:
        return self.vectors.shape[0]


def as_weights(values) -> np.ndarray:
    w = np.asarray(values, dtype=np.float64).reshape(-1)
    if w.size and np.any(w < 0):
        raise NegativeWeightError(f"negative weight at frame {int(np.argmax(w < 0)) + 1}")
    if w.size and not np.all(np.isfinite(w)):
        raise NegativeWeightError("weights must be finite")
    return w


def scale_weights(raw, target_sum: float) -> np.ndarray:
    """Rescale ``raw`` so it sums to ``target_sum``."""
    w = as_weights(raw)
    if target_sum < 0:
        raise ValueError("target_sum must be non-negative")
    total = math.fsum(w)
    if total <= 0:
        if target_sum > 0:
            raise ZeroMassError("cannot scale weights with zero total mass")
        return w.copy()
    ratio = target_sum / total
    if not math.isfinite(ratio):
        # subnormal total mass: normalise first so the factor cannot overflow
        return (w / total) * target_sum
    return w * ratio


def reaches(acc: float, threshold: float) -> bool:
    return acc >= threshold * (1.0 - FIRE_TOL)


def accumulate(acc: float, alpha: float, gamma: float) -> tuple[float, int]:
    """Add one frame's weight to the accumulator and subtract ``gamma`` per fire.

    Returns ``(new_acc, fires)``. Shared by the batch segmenter and the
    streaming detector so both take bit-identical decisions.
    """
    acc += alpha
    if not reaches(acc, gamma):
        return acc, 0
    fires = int(acc // gamma)
    acc -= fires * gamma
    while reaches(acc, gamma):
        fires += 1
        acc -= gamma
    if acc < 0.0:
        acc = 0.0
    return acc, fires


def segment_by_threshold(weights, gamma: float, initial_residual: float = 0.0) -> SenseSegmentation:
    """Scan ``weights`` left to right, firing a boundary whenever r + sum(alpha) >= gamma."""
    if not gamma > 0:
        raise NonPositiveThresholdError(f"gamma must be positive, got {gamma}")
    if not 0.0 <= initial_residual < gamma:
        raise ValueError(f"initial_residual must lie in [0, gamma), got {initial_residual}")
    w = as_weights(weights)
    acc = float(initial_residual)
    boundaries: list[int] = []
    residuals: list[float] = []
    for t, alpha in enumerate(w.tolist(), start=1):
        acc, fires = accumulate(acc, alpha, gamma)
        if fires:
            boundaries.extend([t] * fires)
            residuals.extend([acc] * fires)
    return SenseSegmentation(
        boundaries=tuple(boundaries),
        final_residual=acc,
        gamma=float(gamma),
        residuals=tuple(residuals),
        n_frames=int(w.size),
    )


def expected_trigger_count(total_mass: float, gamma: float, initial_residual: float = 0.0) -> int:
    """Closed-form number of fires: floor((r0 + W) / gamma), exact multiples included."""
    return int(math.floor((initial_residual + total_mass) / gamma + FIRE_TOL))


def segment_scaled(alpha, n_units: int, gamma: float = 1.0) -> SenseSegmentation:
    """Scale ``alpha`` to ``n_units - 1`` and segment it into exactly ``n_units`` pieces.

    Floating-point error can leave the scaled cumulative sum a hair short of
    the last threshold (or, far less often, past one extra); the boundary list
    is corrected to exactly ``n_units - 1`` entries by forcing the final
    boundary onto the last frame or dropping the surplus.
    """
    if n_units < 1:
        raise ValueError("n_units must be >= 1")
    w = as_weights(alpha)
    target = float(n_units - 1)
    scaled = scale_weights(w, target) if target > 0 else np.zeros_like(w)
    seg = segment_by_threshold(scaled, gamma)
    want = n_units - 1
    if seg.n_triggers == want:
        return seg
    boundaries = list(seg.boundaries[:want])
    residuals = list(seg.residuals[:want])
    while len(boundaries) < want:
        boundaries.append(max(w.size, 1))
        residuals.append(0.0)
    return SenseSegmentation(
        boundaries=tuple(boundaries),
        final_residual=0.0,
        gamma=seg.gamma,
        residuals=tuple(residuals),
        n_frames=seg.n_frames,
    )


def _as_frames(segment) -> np.ndarray:
    if isinstance(segment, FeatureSequence):
        return segment.frames
    frames = np.asarray(segment, dtype=np.float64)
    if frames.ndim == 1:
        frames = frames[:, None]
    if frames.ndim != 2:
        raise DimensionMismatchError(f"features must be (T, d), got shape {frames.shape}")
    return frames


def cif_integrate(segment, weights, lam: float = 1.0, tail: str = "half") -> IntegratedUnit:
    """Continuous integrate-and-fire over one feature segment.

    A frame whose weight crosses the firing threshold is split: the part
    that completes the current vector closes it, the remainder seeds the
    next one (firing again if it alone reaches ``lam``).

    ``tail`` controls the leftover accumulation: ``"half"`` fires it when it
    holds at least ``lam / 2``, ``"drop"`` never fires it.
    """
    frames = _as_frames(segment)
    w = as_weights(weights)
    if w.size != frames.shape[0]:
        raise DimensionMismatchError(f"{w.size} weights for {frames.shape[0]} frames")
    if not lam > 0:
        raise NonPositiveThresholdError(f"lambda must be positive, got {lam}")
    if tail not in ("half", "drop"):
        raise ValueError(f"unknown tail policy {tail!r}")

    d = frames.shape[1]
    fired: list[np.ndarray] = []
    masses: list[float] = []
    acc = 0.0
    vec = np.zeros(d)
    for beta, h in zip(w.tolist(), frames):
        if not reaches(acc + beta, lam):
            acc += beta
            vec = vec + beta * h
            continue
        head = lam - acc
        fired.append(vec + head * h)
        masses.append(lam)
        rest = beta - head
        while reaches(rest, lam):
            fired.append(lam * h)
            masses.append(lam)
            rest -= lam
        rest = max(rest, 0.0)
        acc = rest
        vec = rest * h

    tail_mass, tail_vector = acc, (vec if acc > 0 else None)
    if tail == "half" and acc > 0 and acc >= lam / 2:
        fired.append(vec)
        masses.append(acc)
        tail_mass, tail_vector = 0.0, None
    vectors = np.array(fired) if fired else np.zeros((0, d))
    return IntegratedUnit(
        vectors=vectors, fired_masses=tuple(masses), tail_mass=tail_mass, tail_vector=tail_vector
    )


def integrate_scaled_unit(segment, weights, target_count: int) -> IntegratedUnit:
    """Scale weights to ``target_count`` and integrate, returning exactly that many vectors."""
    if target_count < 1:
        raise ValueError("target_count must be >= 1")
    frames = _as_frames(segment)
    scaled = scale_weights(weights, float(target_count))
    unit = cif_integrate(frames, scaled, 1.0, tail="drop")
    if unit.count == target_count:
        return unit
    if unit.count == target_count - 1 and unit.tail_vector is not None:
        return IntegratedUnit(
            vectors=np.vstack([unit.vectors, unit.tail_vector[None, :]]),
            fired_masses=unit.fired_masses + (unit.tail_mass,),
        )
    raise ZeroMassError(f"integration produced {unit.count} vectors for target {target_count}")
