"""Discrete-event simulation of the streaming translation pipeline.

Source audio arrives chunk by chunk in real time. Every chunk triggers one
policy decision, which starts once the chunk has arrived and the previous
computation has finished. Decisions and translator calls charge simulated
compute from configurable cost models, so latency is reproducible on any
machine. All times are seconds on the simulated clock.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .datagen import DEFAULT_CUE_STRENGTH, Manifest, UtteranceRecord, features_for
from .detector import GroundTruthOracle, UniformOracle, WeightOracle
from .errors import EmptyUtteranceError, OracleFailureError, PolicySpecError
from .metrics import DelayProfile, EfficiencyStats, avg_decision_time, corpus_bleu, laal, rtf
from .policies import Chunk, PolicySpec, make_session, parse_policy
from .translator import TranslatorOracle

log = logging.getLogger(__name__)

CHUNK_ARRIVED = "ChunkArrived"
DECISION_MADE = "DecisionMade"
TOKENS_COMMITTED = "TokensCommitted"
STREAM_ENDED = "StreamEnded"


@dataclass(frozen=True)
class CostModel:
    """Simulated compute, in milliseconds.

    ``encoder_ms`` + ``encoder_ms_per_s`` * chunk seconds is charged to every
    decision; ``call_ms`` + ``token_ms`` * tokens to every translator call.
    """

    encoder_ms: float = 0.0
    encoder_ms_per_s: float = 0.0
    call_ms: float = 0.0
    token_ms: float = 0.0

    def __post_init__(self):
        for name in ("encoder_ms", "encoder_ms_per_s", "call_ms", "token_ms"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                raise OracleFailureError(f"cost {name} must be a non-negative number, got {value}")

    def encode_s(self, chunk_s: float) -> float:
        return (self.encoder_ms + self.encoder_ms_per_s * chunk_s) / 1000.0

    def translate_s(self, calls: int, tokens: int) -> float:
        return (self.call_ms * calls + self.token_ms * tokens) / 1000.0


@dataclass(frozen=True)
class OracleSpec:
    weights: WeightOracle = field(default_factory=GroundTruthOracle)
    costs: CostModel = field(default_factory=CostModel)
    cue_strength: float = DEFAULT_CUE_STRENGTH


@dataclass(frozen=True)
class SimulEvent:
    time_s: float
    kind: str
    payload: dict
    cost_s: float = 0.0

    def to_json(self) -> str:
        return json.dumps(
            {"time_s": self.time_s, "kind": self.kind, "payload": self.payload, "cost_s": self.cost_s},
            separators=(",", ":"),
        )


@dataclass
class SessionResult:
    utterance_id: str
    policy: str
    gamma: float | None
    tag: str | None
    reference: list
    hypothesis: list
    ideal_delays: list
    ca_delays: list
    events: list
    source_duration: float
    decision_count: int
    decision_compute_s: float
    total_compute_s: float
    num_writes: int
    trigger_frames: list = field(default_factory=list)

    def profile(self, computation_aware: bool = False) -> DelayProfile:
        delays = self.ca_delays if computation_aware else self.ideal_delays
        return DelayProfile(tuple(delays), self.source_duration, len(self.reference), len(self.hypothesis))

    def efficiency(self) -> EfficiencyStats:
        return EfficiencyStats(self.decision_count, self.decision_compute_s, self.source_duration)

    def metrics(self) -> dict:
        stats = self.efficiency()
        return {
            "utterance_id": self.utterance_id,
            "policy": self.policy,
            "gamma": self.gamma,
            "tag": self.tag,
            "bleu": corpus_bleu([self.hypothesis], [self.reference]),
            "laal_ideal_s": laal(self.profile(False)),
            "laal_ca_s": laal(self.profile(True)),
            "avg_decision_ms": avg_decision_time(stats) if stats.decision_count else 0.0,
            "rtf": rtf(stats),
            "num_writes": self.num_writes,
        }

    def events_jsonl(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.events)


def chunk_frames(record: UtteranceRecord, chunk_ms: float) -> list[tuple[int, int, float]]:
    """``(start, end, arrival_s)`` for each chunk, frames 1-based inclusive."""
    chunk_s = chunk_ms / 1000.0
    n = record.n_frames
    n_chunks = max(1, math.ceil(record.duration_s / chunk_s - 1e-9))
    out = []
    start = 1
    for i in range(1, n_chunks + 1):
        end = n if i == n_chunks else min(n, int(round(i * chunk_s * record.frame_rate)))
        arrival = min(i * chunk_s, record.duration_s)
        out.append((start, end, arrival))
        start = end + 1
    return out


def run_session(
    record: UtteranceRecord,
    policy: PolicySpec | str,
    oracles: OracleSpec | None = None,
    chunk_ms: float = 500.0,
) -> SessionResult:
    oracles = oracles or OracleSpec()
    spec = parse_policy(policy) if isinstance(policy, str) else policy
    chunk_ms = spec.effective_chunk_ms or chunk_ms
    if not chunk_ms > 0:
        raise PolicySpecError(f"chunk_ms must be positive, got {chunk_ms}")
    if record.n_frames < 1 or not record.duration_s > 0:
        raise EmptyUtteranceError(f"{record.id} has no audio")

    translator = TranslatorOracle(record)
    session = make_session(spec, translator)
    sense = spec.sense
    alphas = None
    if sense is not None:
        try:
            feats = features_for(record, oracles.cue_strength)
            alphas = np.asarray(oracles.weights.weights(record, feats, sense.tag), dtype=np.float64)
        except Exception as exc:
            raise OracleFailureError(f"weight oracle failed on {record.id}: {exc}") from exc
        if alphas.shape != (record.n_frames,):
            raise OracleFailureError(
                f"weight oracle returned shape {alphas.shape} for {record.n_frames} frames"
            )

    events: list[tuple[float, int, SimulEvent]] = []

    def emit(time_s, kind, payload, cost_s=0.0):
        events.append((time_s, len(events), SimulEvent(time_s, kind, payload, cost_s)))

    hypothesis, ideal, aware = [], [], []
    clock = 0.0
    decision_compute = 0.0
    total_compute = 0.0
    num_writes = 0
    chunks = chunk_frames(record, chunk_ms)
    chunk_s = chunk_ms / 1000.0

    for index, (start, end, arrival) in enumerate(chunks, start=1):
        emit(arrival, CHUNK_ARRIVED, {"chunk": index, "frames": [start, end]})
        began = max(arrival, clock)
        chunk_alphas = alphas[start - 1 : end] if alphas is not None else None
        action = session.step(Chunk(index, start, end, chunk_alphas))
        cost = oracles.costs.encode_s(chunk_s) + session.decision_cost_s
        decided = began + cost
        decision_compute += cost
        total_compute += cost
        kind = "write" if action.write else "read"
        num_writes += action.write
        emit(decided, DECISION_MADE, {"chunk": index, "decision": kind, "fires": action.fires}, cost)
        clock = decided
        if action.commit:
            t_cost = oracles.costs.translate_s(action.calls, len(action.commit))
            clock = decided + t_cost
            total_compute += t_cost
            emit(clock, TOKENS_COMMITTED, {"chunk": index, "tokens": list(action.commit)}, t_cost)
            hypothesis.extend(action.commit)
            ideal.extend([arrival] * len(action.commit))
            aware.extend([clock] * len(action.commit))

    clock = max(clock, record.duration_s)
    final = session.flush()
    if final.commit:
        t_cost = oracles.costs.translate_s(final.calls, len(final.commit))
        clock += t_cost
        total_compute += t_cost
        emit(clock, TOKENS_COMMITTED, {"chunk": None, "tokens": list(final.commit)}, t_cost)
        hypothesis.extend(final.commit)
        ideal.extend([record.duration_s] * len(final.commit))
        aware.extend([clock] * len(final.commit))
    emit(clock, STREAM_ENDED, {"tokens": len(hypothesis)})

    events.sort(key=lambda e: (e[0], e[1]))
    return SessionResult(
        utterance_id=record.id,
        policy=str(spec),
        gamma=sense.gamma if sense is not None else None,
        tag=sense.tag.value if sense is not None else None,
        reference=translator.reference(),
        hypothesis=hypothesis,
        ideal_delays=ideal,
        ca_delays=aware,
        events=[e[2] for e in events],
        source_duration=record.duration_s,
        decision_count=len(chunks),
        decision_compute_s=decision_compute,
        total_compute_s=total_compute,
        num_writes=num_writes,
        trigger_frames=list(getattr(session, "trigger_frames", [])),
    )


def _run_one(args):
    record, spec, oracles, chunk_ms = args
    return run_session(record, spec, oracles, chunk_ms)


def run_corpus(
    manifest: Manifest | list,
    policy: PolicySpec | str,
    oracles: OracleSpec | None = None,
    chunk_ms: float = 500.0,
    parallelism: int = 1,
) -> list[SessionResult]:
    """Simulate every utterance; results keep manifest order for any ``parallelism``."""
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    spec = parse_policy(policy) if isinstance(policy, str) else policy
    oracles = oracles or OracleSpec()
    records = list(manifest)
    jobs = [(r, spec, oracles, chunk_ms) for r in records]
    if parallelism == 1 or len(jobs) <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * parallelism))))


def parse_weights(text: str) -> WeightOracle:
    """Weight-oracle spec: ``gt[:profile=peak|spread]``, ``uniform:rate=R`` or ``predictor:path=P``."""
    kind, _, rest = text.strip().partition(":")
    params = {}
    for item in filter(None, (p.strip() for p in rest.split(","))):
        key, eq, value = item.partition("=")
        if not eq:
            raise PolicySpecError(f"expected key=value in weight oracle spec, got {item!r}")
        params[key.strip().lower()] = value.strip()
    kind = kind.strip().lower()
    known = {"gt": {"profile"}, "uniform": {"rate"}, "predictor": {"path"}}
    if kind not in known:
        raise PolicySpecError(f"unknown weight oracle {kind!r} (expected gt, uniform or predictor)")
    extra = set(params) - known[kind]
    if extra:
        raise PolicySpecError(f"unexpected weight oracle option(s): {', '.join(sorted(extra))}")
    try:
        if kind == "gt":
            return GroundTruthOracle(profile=params.get("profile", "peak"))
        if kind == "uniform":
            return UniformOracle(float(params["rate"]))
        from .training import PredictorOracle

        return PredictorOracle.load(params["path"])
    except KeyError as exc:
        raise PolicySpecError(f"weight oracle {kind!r} needs {exc.args[0]}=...") from None
    except ValueError as exc:
        raise PolicySpecError(str(exc)) from None


def parse_costs(text: str) -> CostModel:
    """Cost spec such as ``encoder_ms=30,call_ms=80,token_ms=5``."""
    params = {}
    for item in filter(None, (p.strip() for p in text.split(","))):
        key, eq, value = item.partition("=")
        key = key.strip()
        if not eq or key not in CostModel.__dataclass_fields__:
            raise PolicySpecError(f"bad cost option {item!r}")
        try:
            params[key] = float(value)
        except ValueError:
            raise PolicySpecError(f"cost {key} expects a number, got {value!r}") from None
    try:
        return CostModel(**params)
    except OracleFailureError as exc:
        raise PolicySpecError(str(exc)) from None

