"""Synthetic utterances with nested sense-unit annotations, and manifest I/O.

A manifest is JSONL: a header line followed by one record per line. Unit
boundaries are stored at three density tiers that nest
(high within medium within low), so N_low >= N_medium >= N_high holds by
construction. Feature frames are not stored; they are regenerated from each
record's seed by :func:`features_for`.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import InvalidRangeError, MissingAnnotationError, ParseError, VersionMismatchError

FORMAT_NAME = "sensestream-manifest"
FORMAT_VERSION = 1

HEADER_KEYS = ("format", "version", "seed", "count")
RECORD_KEYS = (
    "id",
    "duration_s",
    "frame_rate",
    "dim",
    "seed",
    "boundaries_low",
    "boundaries_med",
    "boundaries_high",
    "units",
)
UNIT_KEYS = ("span", "src", "tgt")

# feature dimension carrying the boundary cue for each tier
CUE_DIMS = {"low": 0, "medium": 1, "high": 2}
DEFAULT_CUE_STRENGTH = 12.0


class LatencyTag(enum.Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"

    @classmethod
    def parse(cls, text) -> "LatencyTag":
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower()
        aliases = {"med": "medium", "mid": "medium"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown latency tag {text!r} (expected low, medium or high)") from None


@dataclass(frozen=True)
class Unit:
    """One atomic (low-tier) sense unit: 1-based inclusive frame span plus tokens."""

    start: int
    end: int
    src: tuple[int, ...]
    tgt: tuple[int, ...]

    @property
    def n_frames(self) -> int:
        return self.end - self.start + 1


@dataclass(frozen=True)
class UtteranceRecord:
    id: str
    duration_s: float
    frame_rate: float
    dim: int
    seed: int
    boundaries_low: tuple[int, ...]
    boundaries_med: tuple[int, ...]
    boundaries_high: tuple[int, ...]
    units: tuple[Unit, ...]

    @property
    def n_frames(self) -> int:
        return self.units[-1].end if self.units else 0

    def boundaries(self, tag) -> tuple[int, ...]:
        tag = LatencyTag.parse(tag)
        return {
            LatencyTag.LOW: self.boundaries_low,
            LatencyTag.MEDIUM: self.boundaries_med,
            LatencyTag.HIGH: self.boundaries_high,
        }[tag]

    def n_units(self, tag) -> int:
        return len(self.boundaries(tag)) + 1

    def reference(self) -> list[int]:
        return [tok for u in self.units for tok in u.tgt]

    def tier_spans(self, tag) -> list[tuple[int, int]]:
        """1-based inclusive frame spans of the units at ``tag``'s density."""
        spans = []
        start = 1
        for b in self.boundaries(tag):
            spans.append((start, b))
            start = b + 1
        spans.append((start, self.n_frames))
        return spans

    def tier_token_counts(self, tag) -> list[int]:
        """Target token count L_k of every unit at ``tag``'s density."""
        counts = []
        for start, end in self.tier_spans(tag):
            counts.append(sum(len(u.tgt) for u in self.units if start <= u.start and u.end <= end))
        return counts


@dataclass(frozen=True)
class Manifest:
    seed: int
    records: tuple[UtteranceRecord, ...]
    version: int = FORMAT_VERSION

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


@dataclass
class GenConfig:
    n_utterances: int = 20
    min_duration_s: float = 6.0
    max_duration_s: float = 16.0
    dim: int = 8
    frame_rate: float = 50.0
    # mean atomic unit length; medium and high tiers each keep ~half the boundaries
    unit_s: float = 0.8
    keep_prob: float = 0.5
    tokens_per_s: float = 2.5
    vocab: int = 1000

    def validate(self):
        if self.n_utterances < 1:
            raise InvalidRangeError("n_utterances must be >= 1")
        if not 0 < self.min_duration_s <= self.max_duration_s:
            raise InvalidRangeError(
                f"bad duration range [{self.min_duration_s}, {self.max_duration_s}]"
            )
        if self.dim < len(CUE_DIMS):
            raise InvalidRangeError(f"dim must be >= {len(CUE_DIMS)} to hold the boundary cues")
        if not self.frame_rate > 0:
            raise InvalidRangeError("frame_rate must be positive")
        if not self.unit_s > 0 or not 0 < self.keep_prob < 1:
            raise InvalidRangeError("unit_s must be positive and keep_prob in (0, 1)")
        if self.min_duration_s * self.frame_rate < 2:
            raise InvalidRangeError("utterances need at least two frames")


def generate_corpus(seed: int = 0, config: GenConfig | None = None, **overrides) -> Manifest:
    """Build a deterministic synthetic corpus from ``seed``."""
    cfg = replace(config or GenConfig(), **overrides)
    cfg.validate()
    rng = np.random.default_rng(seed)
    records = []
    for i in range(cfg.n_utterances):
        rec_seed = int(rng.integers(0, 2**31 - 1))
        records.append(_generate_record(f"utt{i:05d}", rec_seed, cfg))
    return Manifest(seed=int(seed), records=tuple(records))


def _generate_record(uid: str, seed: int, cfg: GenConfig) -> UtteranceRecord:
    rng = np.random.default_rng(seed)
    duration = rng.uniform(cfg.min_duration_s, cfg.max_duration_s)
    n_frames = max(2, int(round(duration * cfg.frame_rate)))
    duration = round(n_frames / cfg.frame_rate, 6)

    mean_len = cfg.unit_s * cfg.frame_rate
    lo, hi = max(1, int(round(0.6 * mean_len))), max(1, int(round(1.4 * mean_len)))
    ends = []
    pos = 0
    while True:
        pos += int(rng.integers(lo, hi + 1))
        if pos >= n_frames - lo // 2:
            break
        ends.append(pos)
    ends.append(n_frames)
    low = ends[:-1]

    med = [b for b in low if rng.random() < cfg.keep_prob]
    if len(low) >= 1 and len(med) == len(low):
        med.pop(int(rng.integers(len(med))))
    high = [b for b in med if rng.random() < cfg.keep_prob]
    if len(med) >= 1 and len(high) == len(med):
        high.pop(int(rng.integers(len(high))))

    units = []
    start = 1
    for end in ends:
        secs = (end - start + 1) / cfg.frame_rate
        n_src = max(1, int(round(cfg.tokens_per_s * secs * rng.uniform(0.8, 1.2))))
        n_tgt = max(1, n_src + int(rng.integers(-1, 2)))
        src = tuple(int(x) for x in rng.integers(0, cfg.vocab, n_src))
        tgt = tuple(int(x) for x in rng.integers(0, cfg.vocab, n_tgt))
        units.append(Unit(start, end, src, tgt))
        start = end + 1

    return UtteranceRecord(
        id=uid,
        duration_s=duration,
        frame_rate=float(cfg.frame_rate),
        dim=int(cfg.dim),
        seed=int(seed),
        boundaries_low=tuple(low),
        boundaries_med=tuple(med),
        boundaries_high=tuple(high),
        units=tuple(units),
    )


def features_for(record: UtteranceRecord, cue_strength: float = DEFAULT_CUE_STRENGTH) -> np.ndarray:
    """Regenerate the (T, dim) feature frames of ``record``.

    Frames are standard-normal noise. A boundary frame gets ``cue_strength``
    added on the cue dimension of the coarsest tier it belongs to, so the
    boundaries of a tier are exactly the frames cued on that tier's dimension
    or a coarser one, and each tier stays linearly detectable.
    """
    rng = np.random.default_rng([record.seed, 1])
    feats = rng.standard_normal((record.n_frames, record.dim))
    code = np.full(record.n_frames, -1)
    for tag, dim in CUE_DIMS.items():
        code[np.asarray(record.boundaries(tag), dtype=int) - 1] = dim
    hit = np.flatnonzero(code >= 0)
    feats[hit, code[hit]] += cue_strength
    return feats


def tier_density(manifest: Manifest) -> dict[str, int]:
    """Total unit count per tier across the corpus."""
    return {tag.value: sum(r.n_units(tag) for r in manifest) for tag in LatencyTag}


def require_annotation(record: UtteranceRecord, tag) -> tuple[int, ...]:
    try:
        return record.boundaries(tag)
    except (KeyError, AttributeError) as exc:
        raise MissingAnnotationError(f"{record.id} has no boundaries for {tag}") from exc


# -- serialization -----------------------------------------------------------


def _record_to_obj(rec: UtteranceRecord) -> dict:
    return {
        "id": rec.id,
        "duration_s": rec.duration_s,
        "frame_rate": rec.frame_rate,
        "dim": rec.dim,
        "seed": rec.seed,
        "boundaries_low": list(rec.boundaries_low),
        "boundaries_med": list(rec.boundaries_med),
        "boundaries_high": list(rec.boundaries_high),
        "units": [{"span": [u.start, u.end], "src": list(u.src), "tgt": list(u.tgt)} for u in rec.units],
    }


def dumps_manifest(manifest: Manifest) -> str:
    header = {
        "format": FORMAT_NAME,
        "version": manifest.version,
        "seed": manifest.seed,
        "count": len(manifest.records),
    }
    lines = [json.dumps(header, separators=(",", ":"))]
    lines += [json.dumps(_record_to_obj(r), separators=(",", ":")) for r in manifest.records]
    return "\n".join(lines) + "\n"


def write_manifest(manifest: Manifest, path) -> None:
    text = dumps_manifest(manifest)
    if str(path) == "-":
        import sys

        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def read_manifest(path) -> Manifest:
    text = Path(path).read_text(encoding="utf-8")
    return loads_manifest(text)


def _check_keys(obj: dict, expected: tuple, lineno: int, raw: str, what: str):
    for key in obj:
        if key not in expected:
            col = raw.find(json.dumps(key)) + 1 or None
            raise ParseError(f"unknown field {key!r} in {what}", lineno, col)
    missing = [k for k in expected if k not in obj]
    if missing:
        raise ParseError(f"{what} is missing field(s) {', '.join(missing)}", lineno)


def _int_list(value, lineno: int, name: str) -> tuple[int, ...]:
    if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
        raise ParseError(f"{name} must be a list of integers", lineno)
    return tuple(value)


def _parse_record(obj: dict, lineno: int, raw: str) -> UtteranceRecord:
    _check_keys(obj, RECORD_KEYS, lineno, raw, "record")
    units = []
    if not isinstance(obj["units"], list) or not obj["units"]:
        raise ParseError("units must be a non-empty list", lineno)
    for u in obj["units"]:
        if not isinstance(u, dict):
            raise ParseError("unit entries must be objects", lineno)
        _check_keys(u, UNIT_KEYS, lineno, raw, "unit")
        span = _int_list(u["span"], lineno, "span")
        if len(span) != 2 or span[0] > span[1]:
            raise ParseError(f"bad unit span {list(span)}", lineno)
        units.append(Unit(span[0], span[1], _int_list(u["src"], lineno, "src"), _int_list(u["tgt"], lineno, "tgt")))
    try:
        rec = UtteranceRecord(
            id=str(obj["id"]),
            duration_s=float(obj["duration_s"]),
            frame_rate=float(obj["frame_rate"]),
            dim=int(obj["dim"]),
            seed=int(obj["seed"]),
            boundaries_low=_int_list(obj["boundaries_low"], lineno, "boundaries_low"),
            boundaries_med=_int_list(obj["boundaries_med"], lineno, "boundaries_med"),
            boundaries_high=_int_list(obj["boundaries_high"], lineno, "boundaries_high"),
            units=tuple(units),
        )
    except (TypeError, ValueError) as exc:
        raise ParseError(str(exc), lineno) from exc
    _validate_record(rec, lineno)
    return rec


def _validate_record(rec: UtteranceRecord, lineno: int):
    pos = 0
    for u in rec.units:
        if u.start != pos + 1:
            raise ParseError(f"units of {rec.id} do not tile the frame range", lineno)
        if not u.tgt:
            raise ParseError(f"unit ending at frame {u.end} of {rec.id} has no target tokens", lineno)
        pos = u.end
    unit_ends = {u.end for u in rec.units[:-1]}
    for tag in LatencyTag:
        b = rec.boundaries(tag)
        if any(x >= y for x, y in zip(b, b[1:])):
            raise ParseError(f"{tag.value} boundaries of {rec.id} are not strictly increasing", lineno)
        if any(not 1 <= x < rec.n_frames for x in b):
            raise ParseError(f"{tag.value} boundary of {rec.id} outside the frame range", lineno)
        if not set(b) <= unit_ends:
            raise ParseError(f"{tag.value} boundaries of {rec.id} do not fall on unit ends", lineno)
    if not (set(rec.boundaries_high) <= set(rec.boundaries_med) <= set(rec.boundaries_low)):
        raise ParseError(f"tiers of {rec.id} do not nest", lineno)


def loads_manifest(text: str) -> Manifest:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty manifest", 1)
    objs = []
    for lineno, raw in enumerate(lines, start=1):
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, lineno, exc.colno) from None
        if not isinstance(obj, dict):
            raise ParseError("expected a JSON object", lineno)
        objs.append(obj)

    header = objs[0]
    _check_keys(header, HEADER_KEYS, 1, lines[0], "header")
    if header["format"] != FORMAT_NAME:
        raise ParseError(f"not a manifest (format {header['format']!r})", 1)
    if header["version"] != FORMAT_VERSION:
        raise VersionMismatchError(
            f"manifest version {header['version']} is not supported (expected {FORMAT_VERSION})"
        )
    records = [_parse_record(o, i, lines[i - 1]) for i, o in enumerate(objs[1:], start=2)]
    if len(records) != header["count"]:
        raise ParseError(
            f"header announces {header['count']} records but {len(records)} were found",
            len(lines),
        )
    ids = set()
    for lineno, rec in enumerate(records, start=2):
        if rec.id in ids:
            raise ParseError(f"duplicate record id {rec.id!r}", lineno)
        ids.add(rec.id)
    return Manifest(seed=int(header["seed"]), records=tuple(records), version=header["version"])


def split_manifest(manifest: Manifest, holdout: float) -> tuple[Manifest, Manifest]:
    """Deterministic train/held-out split: the last ``holdout`` fraction is held out."""
    n = len(manifest.records)
    n_hold = min(n - 1, max(1, int(math.ceil(n * holdout)))) if n > 1 and holdout > 0 else 0
    cut = n - n_hold
    return (
        Manifest(seed=manifest.seed, records=manifest.records[:cut]),
        Manifest(seed=manifest.seed, records=manifest.records[cut:]),
    )
