"""Read/write decision policies behind one session interface.

Policy spec grammar (used by the CLI)::

    sense[:gamma=G][,tag=low|medium|high][,cost_ms=C][,chunk_ms=M]
    waitk[:k=K][,cost_ms=C][,chunk_ms=M]
    la[:cost_ms=C][,chunk_ms=M]
    mockllm:base=<spec>[,cost_ms=C]

``cost_ms`` is the simulated compute charged per decision. For ``mockllm``
every key except its own ``cost_ms`` belongs to the wrapped base spec, so
``mockllm:base=sense:gamma=2,tag=high,cost_ms=116.2`` wraps
``sense:gamma=2,tag=high``. ``chunk_ms`` overrides the session chunk size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cif import as_weights
from .datagen import LatencyTag
from .detector import AccumulatorState, DecisionKind, detector_new, push_frame
from .errors import NonPositiveThresholdError, PolicySpecError
from .translator import TranslatorOracle

KINDS = ("sense", "waitk", "la", "mockllm")
_ALLOWED = {
    "sense": {"gamma", "tag", "cost_ms", "chunk_ms"},
    "waitk": {"k", "cost_ms", "chunk_ms"},
    "la": {"cost_ms", "chunk_ms"},
    "mockllm": {"base", "cost_ms"},
}


@dataclass(frozen=True)
class PolicySpec:
    kind: str
    gamma: float | None = None
    tag: LatencyTag | None = None
    k: int | None = None
    cost_ms: float = 0.0
    chunk_ms: float | None = None
    base: "PolicySpec | None" = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PolicySpecError(f"unknown policy kind {self.kind!r}")
        if self.kind == "sense":
            if self.gamma is None:
                object.__setattr__(self, "gamma", 1.0)
            if self.tag is None:
                object.__setattr__(self, "tag", LatencyTag.HIGH)
            if not self.gamma > 0:
                raise NonPositiveThresholdError(f"gamma must be positive, got {self.gamma}")
        if self.kind == "waitk":
            if self.k is None:
                object.__setattr__(self, "k", 3)
            if self.k < 1:
                raise PolicySpecError(f"wait-k needs k >= 1, got {self.k}")
        if self.kind == "mockllm" and self.base is None:
            raise PolicySpecError("mockllm needs a base policy (base=...)")
        if not (self.cost_ms >= 0 and math.isfinite(self.cost_ms)):
            raise PolicySpecError(f"cost_ms must be a non-negative number, got {self.cost_ms}")
        if self.chunk_ms is not None and not self.chunk_ms > 0:
            raise PolicySpecError(f"chunk_ms must be positive, got {self.chunk_ms}")

    @property
    def sense(self) -> "PolicySpec | None":
        """The sense spec driving this policy, if any (looks through mockllm)."""
        if self.kind == "sense":
            return self
        if self.kind == "mockllm":
            return self.base.sense
        return None

    @property
    def effective_chunk_ms(self) -> float | None:
        if self.chunk_ms is not None:
            return self.chunk_ms
        return self.base.effective_chunk_ms if self.base is not None else None

    def with_gamma(self, gamma: float) -> "PolicySpec":
        if self.kind == "sense":
            return PolicySpec("sense", gamma, self.tag, cost_ms=self.cost_ms, chunk_ms=self.chunk_ms)
        if self.kind == "mockllm" and self.base.sense is not None:
            return PolicySpec("mockllm", cost_ms=self.cost_ms, base=self.base.with_gamma(gamma))
        return self

    def __str__(self):
        parts = []
        if self.kind == "mockllm":
            parts.append(f"base={self.base}")
        if self.kind == "sense":
            parts += [f"gamma={_num(self.gamma)}", f"tag={self.tag.value}"]
        if self.kind == "waitk":
            parts.append(f"k={self.k}")
        if self.cost_ms:
            parts.append(f"cost_ms={_num(self.cost_ms)}")
        if self.chunk_ms is not None:
            parts.append(f"chunk_ms={_num(self.chunk_ms)}")
        return self.kind + (":" + ",".join(parts) if parts else "")


def _num(x: float) -> str:
    return f"{x:g}"


def _float(key, value):
    try:
        return float(value)
    except ValueError:
        raise PolicySpecError(f"{key} expects a number, got {value!r}") from None


def parse_policy(text: str) -> PolicySpec:
    text = text.strip()
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    if kind not in KINDS:
        raise PolicySpecError(f"unknown policy {kind!r} in {text!r} (expected one of {', '.join(KINDS)})")
    if kind == "mockllm":
        return _parse_mockllm(rest, text)
    params = {}
    for item in filter(None, (p.strip() for p in rest.split(","))):
        key, eq, value = item.partition("=")
        key = key.strip().lower()
        if not eq:
            raise PolicySpecError(f"expected key=value, got {item!r} in {text!r}")
        if key not in _ALLOWED[kind]:
            raise PolicySpecError(f"{kind} does not take {key!r}")
        params[key] = value.strip()
    kwargs = {}
    if "gamma" in params:
        kwargs["gamma"] = _float("gamma", params["gamma"])
    if "tag" in params:
        try:
            kwargs["tag"] = LatencyTag.parse(params["tag"])
        except ValueError as exc:
            raise PolicySpecError(str(exc)) from None
    if "k" in params:
        try:
            kwargs["k"] = int(params["k"])
        except ValueError:
            raise PolicySpecError(f"k expects an integer, got {params['k']!r}") from None
    if "cost_ms" in params:
        kwargs["cost_ms"] = _float("cost_ms", params["cost_ms"])
    if "chunk_ms" in params:
        kwargs["chunk_ms"] = _float("chunk_ms", params["chunk_ms"])
    return PolicySpec(kind, **kwargs)


def _parse_mockllm(rest: str, text: str) -> PolicySpec:
    own_cost = 0.0
    base_parts = []
    for item in filter(None, (p.strip() for p in rest.split(","))):
        key, _, value = item.partition("=")
        if key.strip().lower() == "cost_ms":
            own_cost = _float("cost_ms", value)
        else:
            base_parts.append(item)
    if not base_parts or not base_parts[0].lower().startswith("base="):
        raise PolicySpecError(f"mockllm needs base=<policy> first in {text!r}")
    base_parts[0] = base_parts[0][len("base=") :]
    base = parse_policy(",".join(base_parts))
    return PolicySpec("mockllm", cost_ms=own_cost, base=base)


# -- sessions -----------------------------------------------------------------


@dataclass(frozen=True)
class Chunk:
    """One block of encoder frames, frames ``start..end`` (1-based, inclusive)."""

    index: int
    start: int
    end: int
    alphas: np.ndarray | None = None


@dataclass
class PolicyAction:
    reads: int = 0
    commit: list = field(default_factory=list)
    write: bool = False
    fires: int = 0
    # number of translator invocations behind ``commit``
    calls: int = 0
    # 1-based frames at which sense units were detected (one entry per fire)
    trigger_frames: list = field(default_factory=list)


class PolicySession:
    """Per-utterance decision state. Subclasses implement ``step`` and ``flush``."""

    def __init__(self, spec: PolicySpec, translator: TranslatorOracle):
        self.spec = spec
        self.translator = translator
        self.committed: list[int] = []

    @property
    def decision_cost_s(self) -> float:
        return self.spec.cost_ms / 1000.0

    def _commit(self, action: PolicyAction, tokens) -> PolicyAction:
        tokens = list(tokens)
        self.committed.extend(tokens)
        action.commit = tokens
        return action

    def step(self, chunk: Chunk) -> PolicyAction:
        raise NotImplementedError

    def flush(self) -> PolicyAction:
        """Translate and commit whatever is still pending once the source ends."""
        rest = self.translator.hypothesis(self.translator.n_frames, self.committed)[len(self.committed) :]
        action = PolicyAction(calls=1 if rest else 0, write=bool(rest))
        return self._commit(action, rest)


class SensePolicy(PolicySession):
    def __init__(self, spec: PolicySpec, translator: TranslatorOracle):
        super().__init__(spec, translator)
        self.state: AccumulatorState = detector_new(spec.gamma, spec.tag)
        self.last_frame = 0
        self.trigger_frames: list[int] = []

    def step(self, chunk: Chunk) -> PolicyAction:
        if chunk.alphas is None:
            raise ValueError("the sense policy needs alpha weights for every chunk")
        alphas = as_weights(chunk.alphas)
        if alphas.size != chunk.end - chunk.start + 1:
            raise ValueError(f"chunk {chunk.index} has {alphas.size} weights for {chunk.end - chunk.start + 1} frames")
        action = PolicyAction(reads=1)
        tokens = []
        for alpha in alphas.tolist():
            self.state, decision = push_frame(self.state, alpha)
            if decision.kind is DecisionKind.WRITE:
                action.fires += decision.fires
                action.trigger_frames.extend([decision.frame_index] * decision.fires)
                out = self.translator.translate_span(self.last_frame + 1, decision.frame_index)
                self.last_frame = decision.frame_index
                if out:
                    action.calls += 1
                    tokens.extend(out)
        self.trigger_frames.extend(action.trigger_frames)
        action.write = action.fires > 0
        return self._commit(action, tokens)


class WaitKPolicy(PolicySession):
    def __init__(self, spec: PolicySpec, translator: TranslatorOracle):
        super().__init__(spec, translator)
        self.chunks_read = 0

    def step(self, chunk: Chunk) -> PolicyAction:
        self.chunks_read += 1
        action = PolicyAction(reads=1)
        n = len(self.committed)
        if self.chunks_read > self.spec.k and n < len(self.translator):
            action.write = True
            action.calls = 1
            return self._commit(action, [self.translator.render(n, chunk.end)])
        return action


class LocalAgreementPolicy(PolicySession):
    def __init__(self, spec: PolicySpec, translator: TranslatorOracle):
        super().__init__(spec, translator)
        self.previous: list[int] | None = None

    def step(self, chunk: Chunk) -> PolicyAction:
        action = PolicyAction(reads=1, calls=1)
        current = self.translator.hypothesis(chunk.end, self.committed)
        previous, self.previous = self.previous, current
        if previous is None:
            return action
        agreed = longest_common_prefix(previous, current)
        new = agreed[len(self.committed) :]
        action.write = bool(new)
        return self._commit(action, new)


class MockLLMPolicy(PolicySession):
    """Replays a base policy while charging a full-model forward pass per decision."""

    def __init__(self, spec: PolicySpec, translator: TranslatorOracle):
        super().__init__(spec, translator)
        self.base = make_session(spec.base, translator)
        self.committed = self.base.committed

    @property
    def decision_cost_s(self) -> float:
        return self.base.decision_cost_s + self.spec.cost_ms / 1000.0

    @property
    def trigger_frames(self):
        return getattr(self.base, "trigger_frames", [])

    def step(self, chunk: Chunk) -> PolicyAction:
        return self.base.step(chunk)

    def flush(self) -> PolicyAction:
        return self.base.flush()


def longest_common_prefix(a, b) -> list:
    n = 0
    for x, y in zip(a, b):
        if x != y:
            break
        n += 1
    return list(a[:n])


_SESSIONS = {
    "sense": SensePolicy,
    "waitk": WaitKPolicy,
    "la": LocalAgreementPolicy,
    "mockllm": MockLLMPolicy,
}


def make_session(spec: PolicySpec | str, translator: TranslatorOracle) -> PolicySession:
    if isinstance(spec, str):
        spec = parse_policy(spec)
    return _SESSIONS[spec.kind](spec, translator)
