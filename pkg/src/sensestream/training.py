"""Quantity losses, loss assembly and a toy weight-predictor trainer.

The trainer fits two logistic-linear heads (alpha for segmentation, beta for
per-unit integration) on synthetic utterances using only the two quantity
losses. Segment boundaries are held fixed within a step: gradients reach the
weights through the losses, never through boundary positions.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .cif import SenseSegmentation, integrate_scaled_unit, segment_by_threshold, segment_scaled
from .datagen import DEFAULT_CUE_STRENGTH, LatencyTag, UtteranceRecord, features_for
from .errors import (
    DivergedLossError,
    EmptyCorpusError,
    NonFiniteLossError,
    SegmentCountMismatchError,
    ZeroMassError,
)


def loss_qua1(alpha, n_units: int, target: str = "N") -> tuple[float, np.ndarray]:
    """|sum(alpha) - N| and its subgradient (0 at the kink).

    ``target="N-1"`` measures against the count the alpha scaling step
    enforces instead of the unit count itself.
    """
    if n_units < 1:
        raise ValueError("n_units must be >= 1")
    alpha = np.asarray(alpha, dtype=np.float64)
    goal = _qua1_goal(n_units, target)
    diff = math.fsum(alpha) - goal
    return abs(diff), np.full(alpha.shape, float(np.sign(diff)))


def _qua1_goal(n_units: int, target: str) -> float:
    if target == "N":
        return float(n_units)
    if target == "N-1":
        return float(n_units - 1)
    raise ValueError(f"qua1 target must be 'N' or 'N-1', got {target!r}")


def loss_qua2(beta, segmentation: SenseSegmentation, token_counts) -> tuple[float, np.ndarray]:
    """Sum over units of |sum of beta inside the unit - L_k|, with its subgradient."""
    beta = np.asarray(beta, dtype=np.float64)
    counts = list(token_counts)
    segments = segmentation.segments()
    if len(segments) != len(counts):
        raise SegmentCountMismatchError(f"{len(segments)} segments for {len(counts)} target units")
    grad = np.zeros_like(beta)
    value = 0.0
    for (lo, hi), target in zip(segments, counts):
        diff = math.fsum(beta[lo:hi]) - target
        value += abs(diff)
        grad[lo:hi] = np.sign(diff)
    return value, grad


LossPlugin = Callable[[dict], float]


@dataclass(frozen=True)
class LossReport:
    qua1: float
    qua2: float
    joint: float = 0.0
    lm: float = 0.0
    total: float = 0.0
    joint_present: bool = False
    lm_present: bool = False


def _plugin_value(term, context, name) -> tuple[float, bool]:
    if term is None:
        return 0.0, False
    value = float(term(context) if callable(term) else term)
    if not math.isfinite(value) or value < 0:
        raise NonFiniteLossError(f"{name} loss must be finite and non-negative, got {value}")
    return value, True


def assemble_total(qua1: float, qua2: float, joint_term=None, lm_term=None, context=None) -> LossReport:
    """Combine the four training terms; absent plugins contribute zero and are flagged."""
    for name, value in (("qua1", qua1), ("qua2", qua2)):
        if not math.isfinite(value):
            raise NonFiniteLossError(f"{name} loss is not finite: {value}")
    joint, has_joint = _plugin_value(joint_term, context or {}, "joint")
    lm, has_lm = _plugin_value(lm_term, context or {}, "lm")
    return LossReport(qua1, qua2, joint, lm, joint + qua1 + qua2 + lm, has_joint, has_lm)


class ToyJointCE:
    """Forward-only cross-entropy of integrated unit vectors against target tokens.

    A fixed random linear classifier scores every integrated vector; vector j
    of unit k is paired with target token j of unit k.
    """

    def __init__(self, dim: int, vocab: int = 1000, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.weights = rng.standard_normal((vocab, dim)) / math.sqrt(dim)
        self.vocab = vocab

    def __call__(self, context: dict) -> float:
        feats = context["features"]
        beta = context["beta"]
        seg = context["segmentation"]
        targets = context["targets"]
        total, count = 0.0, 0
        for (lo, hi), tokens in zip(seg.segments(), targets):
            if hi <= lo or not tokens:
                continue
            try:
                unit = integrate_scaled_unit(feats[lo:hi], beta[lo:hi], len(tokens))
            except ZeroMassError:
                continue
            logits = unit.vectors @ self.weights.T
            logits -= logits.max(axis=1, keepdims=True)
            log_probs = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
            ids = np.asarray(tokens) % self.vocab
            total -= float(log_probs[np.arange(len(ids)), ids].sum())
            count += len(ids)
        return total / count if count else 0.0


# -- predictor ----------------------------------------------------------------


def _sigmoid(z):
    # exp(-log(1 + e^-z)) never rounds to exactly 0 or 1 for moderate z
    return np.exp(-np.logaddexp(0.0, -z))


@dataclass
class LinearPredictor:
    """alpha_t = w_max * sigmoid(w . x_t + b)."""

    w: np.ndarray
    b: float
    w_max: float = 1.0

    @classmethod
    def init(cls, dim: int, initial_weight: float = 0.05, w_max: float = 1.0) -> "LinearPredictor":
        p = initial_weight / w_max
        return cls(np.zeros(dim), math.log(p / (1.0 - p)), w_max)

    def predict(self, features: np.ndarray) -> np.ndarray:
        alpha = self.w_max * _sigmoid(features @ self.w + self.b)
        # the logistic saturates in float64; keep outputs strictly inside (0, w_max)
        return np.clip(alpha, np.finfo(np.float64).tiny, np.nextafter(self.w_max, 0.0))

    def backward(self, features: np.ndarray, grad_out: np.ndarray) -> tuple[np.ndarray, float]:
        s = _sigmoid(features @ self.w + self.b)
        dz = grad_out * self.w_max * s * (1.0 - s)
        return features.T @ dz, float(dz.sum())

    def to_dict(self) -> dict:
        return {"w": [float(x) for x in self.w], "b": float(self.b), "w_max": float(self.w_max)}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearPredictor":
        return cls(np.asarray(d["w"], dtype=np.float64), float(d["b"]), float(d.get("w_max", 1.0)))


@dataclass
class ToyPredictor:
    alpha: LinearPredictor
    beta: LinearPredictor
    tag: LatencyTag = LatencyTag.HIGH
    cue_strength: float = DEFAULT_CUE_STRENGTH

    def to_json(self) -> str:
        return json.dumps(
            {
                "tag": self.tag.value,
                "cue_strength": self.cue_strength,
                "alpha": self.alpha.to_dict(),
                "beta": self.beta.to_dict(),
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "ToyPredictor":
        d = json.loads(text)
        return cls(
            LinearPredictor.from_dict(d["alpha"]),
            LinearPredictor.from_dict(d["beta"]),
            LatencyTag.parse(d["tag"]),
            float(d["cue_strength"]),
        )


@dataclass(frozen=True)
class PredictorOracle:
    """Weight oracle backed by a trained toy predictor's alpha head."""

    predictor: ToyPredictor
    name: str = "predictor"

    @classmethod
    def load(cls, path) -> "PredictorOracle":
        return cls(ToyPredictor.from_json(Path(path).read_text(encoding="utf-8")))

    def weights(self, record, features, tag):
        # rebuilt so the cue strength always matches the one used in training
        return self.predictor.alpha.predict(features_for(record, self.predictor.cue_strength))


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    mean_qua1: float
    mean_qua2: float
    mean_total: float


@dataclass
class TrainConfig:
    epochs: int = 50
    # alpha and beta heads take separate steps; gradients are averaged per frame
    step_size: float = 10.0
    beta_step_size: float = 0.07
    # per-epoch step decay: step / (1 + decay * (epoch - 1))
    decay: float = 0.1
    qua1_target: str = "N"
    # None starts alpha at the per-frame rate that meets the Qua1 target on average
    alpha_init: float | None = None
    beta_init: float = 0.02
    cue_strength: float = DEFAULT_CUE_STRENGTH
    joint: LossPlugin | None = None
    lm: LossPlugin | None = None


def _utterance_step(pred: ToyPredictor, feats, n_units, counts, targets, cfg: TrainConfig):
    alpha = pred.alpha.predict(feats)
    beta = pred.beta.predict(feats)
    seg = segment_scaled(alpha, n_units)
    q1, g1 = loss_qua1(alpha, n_units, cfg.qua1_target)
    q2, g2 = loss_qua2(beta, seg, counts)
    context = {"features": feats, "alpha": alpha, "beta": beta, "segmentation": seg, "targets": targets}
    report = assemble_total(q1, q2, cfg.joint, cfg.lm, context)
    if not math.isfinite(report.total):
        raise DivergedLossError(f"training loss diverged: {report.total}")
    return report, g1, g2


def _unit_targets(record: UtteranceRecord, tag) -> list[list[int]]:
    out = []
    for start, end in record.tier_spans(tag):
        out.append([t for u in record.units if start <= u.start and u.end <= end for t in u.tgt])
    return out


def train_toy_predictor(
    corpus,
    tag=LatencyTag.HIGH,
    epochs: int | None = None,
    step_size: float | None = None,
    config: TrainConfig | None = None,
) -> tuple[ToyPredictor, list[EpochStats]]:
    """Fit the toy predictor with per-utterance subgradient steps on L_Qua1 + L_Qua2.

    Row 0 of the returned curve is the loss of the initial predictor; row e
    is the mean loss observed while stepping through epoch e.
    """
    cfg = replace(config or TrainConfig())
    if epochs is not None:
        cfg.epochs = epochs
    if step_size is not None:
        cfg.step_size = step_size
    records = list(corpus)
    if not records:
        raise EmptyCorpusError("cannot train on an empty corpus")
    tag = LatencyTag.parse(tag)
    dim = records[0].dim
    alpha_init = cfg.alpha_init
    if alpha_init is None:
        frames = sum(r.n_frames for r in records)
        goal = sum(_qua1_goal(r.n_units(tag), cfg.qua1_target) for r in records)
        alpha_init = min(0.5, max(1e-4, goal / frames))
    pred = ToyPredictor(
        LinearPredictor.init(dim, alpha_init),
        LinearPredictor.init(dim, cfg.beta_init),
        tag,
        cfg.cue_strength,
    )
    data = []
    for rec in records:
        targets = _unit_targets(rec, tag) if (cfg.joint or cfg.lm) else None
        data.append((features_for(rec, cfg.cue_strength), rec.n_units(tag), rec.tier_token_counts(tag), targets))

    def summarize(epoch, reports):
        n = len(reports)
        return EpochStats(
            epoch,
            math.fsum(r.qua1 for r in reports) / n,
            math.fsum(r.qua2 for r in reports) / n,
            math.fsum(r.total for r in reports) / n,
        )

    curve = [summarize(0, [_utterance_step(pred, *d, cfg)[0] for d in data])]
    for epoch in range(1, cfg.epochs + 1):
        scale = 1.0 / (1.0 + cfg.decay * (epoch - 1))
        reports = []
        for feats, n_units, counts, targets in data:
            report, g1, g2 = _utterance_step(pred, feats, n_units, counts, targets, cfg)
            reports.append(report)
            lr_a = cfg.step_size * scale / len(feats)
            lr_b = cfg.beta_step_size * scale / len(feats)
            gw, gb = pred.alpha.backward(feats, g1)
            pred.alpha.w -= lr_a * gw
            pred.alpha.b -= lr_a * gb
            gw, gb = pred.beta.backward(feats, g2)
            pred.beta.w -= lr_b * gw
            pred.beta.b -= lr_b * gb
        stats = summarize(epoch, reports)
        if not math.isfinite(stats.mean_total):
            raise DivergedLossError(f"loss diverged at epoch {epoch}")
        curve.append(stats)
    return pred, curve


def match_boundaries(predicted, reference, tolerance: int = 2) -> int:
    """Greedy one-to-one matches between boundary frames at most ``tolerance`` apart."""
    ref = sorted(set(reference))
    used = set()
    hits = 0
    for p in sorted(set(predicted)):
        candidates = [j for j, r in enumerate(ref) if j not in used and abs(p - r) <= tolerance]
        if candidates:
            used.add(min(candidates, key=lambda j: abs(p - ref[j])))
            hits += 1
    return hits


def _prf(hits: int, n_pred: int, n_ref: int) -> tuple[float, float, float]:
    if n_pred == 0 and n_ref == 0:
        return 1.0, 1.0, 1.0
    precision = hits / n_pred if n_pred else 0.0
    recall = hits / n_ref if n_ref else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def boundary_f1(predicted, reference, tolerance: int = 2) -> tuple[float, float, float]:
    """Precision, recall and F1 of boundary frames, one-to-one within ``tolerance`` frames."""
    hits = match_boundaries(predicted, reference, tolerance)
    return _prf(hits, len(set(predicted)), len(set(reference)))


def evaluate_f1(pred: ToyPredictor, corpus, tag=None, gamma: float = 1.0, tolerance: int = 2) -> float:
    """Corpus-level (micro-averaged) boundary F1 of the alpha head's threshold decisions."""
    tag = LatencyTag.parse(tag or pred.tag)
    hits = n_pred = n_ref = 0
    for rec in corpus:
        alpha = pred.alpha.predict(features_for(rec, pred.cue_strength))
        found = set(segment_by_threshold(alpha, gamma).boundaries)
        ref = rec.boundaries(tag)
        hits += match_boundaries(found, ref, tolerance)
        n_pred += len(found)
        n_ref += len(ref)
    return _prf(hits, n_pred, n_ref)[2]


def curve_csv(curve) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch", "mean_qua1", "mean_qua2", "mean_total"])
    for row in curve:
        writer.writerow([row.epoch, f"{row.mean_qua1:.6f}", f"{row.mean_qua2:.6f}", f"{row.mean_total:.6f}"])
    return buf.getvalue()

