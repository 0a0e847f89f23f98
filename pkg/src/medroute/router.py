"""Multi-label query routing over the ten specialties.

A query is scored per label (built-in hashed-feature logistic scorer or a
remote classifier endpoint), then specialists are selected either by top-n
or by a global confidence threshold calibrated to maximize F_beta on a
validation set. Scoring and selection are pure; a trained model is immutable
and safe to share across request handlers.
"""

from __future__ import annotations

import json
import math
import zlib
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import httpx
import numpy as np

from .core import (
    LabelScore,
    QAExample,
    RoutingDecision,
    SpecialtyLabel,
    Strategy,
    default_label_registry,
    label_by_id,
)
from .errors import InvalidInputError, ProtocolError, RoutingUnavailableError
from .metrics import tokenize

DEFAULT_HASH_BUCKETS = 1 << 16


def _hash_features(text: str, buckets: int) -> tuple[np.ndarray, np.ndarray]:
    """Hashed lowercase word-unigram counts as (indices, values)."""
    counts = Counter(
        zlib.crc32(tok.encode("utf-8")) % buckets for tok in tokenize(text)
    )
    idx = np.fromiter(counts.keys(), dtype=np.int64, count=len(counts))
    vals = np.fromiter(counts.values(), dtype=np.float64, count=len(counts))
    return idx, vals


def _sigmoid(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-z))


@dataclass(frozen=True)
class ScorerSpec:
    """Where label scores come from: the built-in model artifact or a remote endpoint."""

    kind: str  # builtin_linear | remote
    remote_endpoint: str | None = None
    model_artifact_path: str | None = None
    api_token: str | None = None

    def __post_init__(self):
        if self.kind not in ("builtin_linear", "remote"):
            raise InvalidInputError(f"unknown scorer kind: {self.kind!r}")
        if self.kind == "remote" and not self.remote_endpoint:
            raise InvalidInputError("remote scorer requires remote_endpoint")
        if self.kind == "builtin_linear" and not self.model_artifact_path:
            raise InvalidInputError("builtin_linear scorer requires model_artifact_path")


class LinearScorerModel:
    """One-vs-rest logistic scorer over hashed lowercase word-unigram counts.

    One weight vector per label, dimension = vocabulary_hash_buckets + 1 (the
    trailing component is the bias). Immutable after training.
    """

    def __init__(self, vocabulary_hash_buckets: int, weights: np.ndarray, label_order: list[str]):
        if weights.shape != (len(label_order), vocabulary_hash_buckets + 1):
            raise InvalidInputError(
                f"weights shape {weights.shape} does not match "
                f"{len(label_order)} labels x {vocabulary_hash_buckets + 1} features"
            )
        self.vocabulary_hash_buckets = vocabulary_hash_buckets
        self.weights = weights
        self.weights.setflags(write=False)
        self.label_order = list(label_order)
        self._labels = [label_by_id(i) for i in label_order]

    def score_labels(self, query: str) -> list[LabelScore]:
        idx, vals = _hash_features(query, self.vocabulary_hash_buckets)
        z = self.weights[:, idx] @ vals + self.weights[:, -1]
        scores = _sigmoid(z)
        return [LabelScore(label=lbl, score=float(s)) for lbl, s in zip(self._labels, scores)]

    def to_dict(self) -> dict:
        return {
            "buckets": self.vocabulary_hash_buckets,
            "label_order": self.label_order,
            "weights": self.weights[:, :-1].tolist(),
            "bias": self.weights[:, -1].tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinearScorerModel":
        buckets = d["buckets"]
        weights = np.asarray(d["weights"], dtype=np.float64)
        bias = np.asarray(d["bias"], dtype=np.float64).reshape(-1, 1)
        return cls(buckets, np.hstack([weights, bias]), d["label_order"])

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, separators=(",", ":"))

    @classmethod
    def load(cls, path) -> "LinearScorerModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def train_builtin_scorer(
    corpus: Sequence[QAExample],
    buckets: int = DEFAULT_HASH_BUCKETS,
    epochs: int = 5,
    seed: int = 0,
    learning_rate: float = 0.5,
) -> LinearScorerModel:
    """Train the built-in scorer by per-example SGD; deterministic given seed."""
    if not corpus:
        raise InvalidInputError("training corpus is empty")
    if buckets < 1 or epochs < 1:
        raise InvalidInputError("buckets and epochs must be positive")
    registry = default_label_registry()
    label_ids = [lbl.id for lbl in registry]
    label_index = {lbl: k for k, lbl in enumerate(registry)}
    for ex in corpus:
        for lbl in ex.gold_labels:
            if lbl not in label_index:
                raise InvalidInputError(f"gold label {lbl.id!r} not in the registry")

    weights = np.zeros((len(registry), buckets + 1), dtype=np.float64)
    featurized = []
    for ex in corpus:
        idx, vals = _hash_features(ex.question, buckets)
        y = np.zeros(len(registry))
        for lbl in ex.gold_labels:
            y[label_index[lbl]] = 1.0
        featurized.append((idx, vals, y))

    rng = np.random.default_rng(seed)
    for _ in range(epochs):
        for i in rng.permutation(len(featurized)):
            idx, vals, y = featurized[i]
            z = weights[:, idx] @ vals + weights[:, -1]
            grad = y - _sigmoid(z)
            weights[:, idx] += learning_rate * np.outer(grad, vals)
            weights[:, -1] += learning_rate * grad

    return LinearScorerModel(buckets, weights, label_ids)


class RemoteScorer:
    """Client for the remote scorer wire protocol: POST {endpoint}/score."""

    def __init__(self, endpoint: str, api_token: str | None = None, timeout_s: float = 30.0):
        self.endpoint = endpoint.rstrip("/")
        self.api_token = api_token
        self.timeout_s = timeout_s

    def score_labels(self, query: str) -> list[LabelScore]:
        headers = {}
        if self.api_token:
            headers["Authorization"] = f"Bearer {self.api_token}"
        try:
            resp = httpx.post(
                f"{self.endpoint}/score",
                json={"text": query},
                headers=headers,
                timeout=self.timeout_s,
            )
        except httpx.HTTPError as exc:
            raise RoutingUnavailableError(f"scorer endpoint unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise ProtocolError(f"scorer endpoint answered HTTP {resp.status_code}")
        try:
            raw = resp.json()["scores"]
        except (KeyError, ValueError) as exc:
            raise ProtocolError(f"malformed scorer payload: {exc}") from exc
        out = []
        for lbl in default_label_registry():
            if lbl.id not in raw:
                raise ProtocolError(f"scorer payload missing label {lbl.id!r}")
            out.append(LabelScore(label=lbl, score=min(1.0, max(0.0, float(raw[lbl.id])))))
        return out


_model_cache: dict[str, LinearScorerModel] = {}


def resolve_scorer(spec: ScorerSpec):
    """Turn a ScorerSpec into a live scorer object."""
    if spec.kind == "remote":
        return RemoteScorer(spec.remote_endpoint, api_token=spec.api_token)
    model = _model_cache.get(spec.model_artifact_path)
    if model is None:
        model = LinearScorerModel.load(spec.model_artifact_path)
        _model_cache[spec.model_artifact_path] = model
    return model


def score_labels(scorer, query: str) -> list[LabelScore]:
    """Score a query over all ten labels, output in label-id ascending order.

    Accepts a LinearScorerModel, a ScorerSpec, or any object exposing
    score_labels(query) (stub scorers in tests).
    """
    if not query or not query.strip():
        raise InvalidInputError("query is empty")
    if isinstance(scorer, ScorerSpec):
        scorer = resolve_scorer(scorer)
    scores = scorer.score_labels(query)
    if len(scores) != len(default_label_registry()):
        raise ProtocolError(f"scorer returned {len(scores)} scores, expected 10")
    return sorted(scores, key=lambda ls: ls.label.id)


def _check_full_cover(scores: Sequence[LabelScore]) -> None:
    ids = sorted(ls.label.id for ls in scores)
    expected = [lbl.id for lbl in default_label_registry()]
    if ids != expected:
        raise InvalidInputError("scores must cover all ten registry labels exactly once")


def _canonical(scores: Sequence[LabelScore]) -> tuple[LabelScore, ...]:
    return tuple(sorted(scores, key=lambda ls: ls.label.id))


def select_top_n(scores: Sequence[LabelScore], n: int) -> RoutingDecision:
    """Select the n highest-scoring labels; ties broken by label id ascending."""
    if not isinstance(n, int) or not 1 <= n <= 10:
        raise InvalidInputError(f"n must be an integer in [1, 10], got {n!r}")
    _check_full_cover(scores)
    ranked = sorted(scores, key=lambda ls: (-ls.score, ls.label.id))
    return RoutingDecision(
        strategy=Strategy.top_n(n),
        selected=tuple(ranked[:n]),
        fallback_used=False,
        all_scores=_canonical(scores),
    )


def select_threshold(scores: Sequence[LabelScore], tau: float) -> RoutingDecision:
    """Select every label scoring >= tau; fall back to the top-1 label if none does."""
    if not 0.0 < tau < 1.0:
        raise InvalidInputError(f"tau must lie in (0, 1), got {tau!r}")
    _check_full_cover(scores)
    ranked = sorted(scores, key=lambda ls: (-ls.score, ls.label.id))
    qualifying = [ls for ls in ranked if ls.score >= tau]
    fallback = not qualifying
    if fallback:
        qualifying = [ranked[0]]
    return RoutingDecision(
        strategy=Strategy.threshold(tau),
        selected=tuple(qualifying),
        fallback_used=fallback,
        all_scores=_canonical(scores),
    )


def forced_decision(scores: Sequence[LabelScore], label_id: str) -> RoutingDecision:
    """Route to exactly one caller-named specialist; scores are kept for display."""
    _check_full_cover(scores)
    target = label_by_id(label_id)
    entry = next(ls for ls in scores if ls.label == target)
    return RoutingDecision(
        strategy=Strategy.forced(label_id),
        selected=(entry,),
        fallback_used=False,
        all_scores=_canonical(scores),
    )


def apply_strategy(scores: Sequence[LabelScore], strategy: Strategy) -> RoutingDecision:
    if strategy.kind == "top_n":
        return select_top_n(scores, strategy.n)
    if strategy.kind == "threshold":
        return select_threshold(scores, strategy.tau)
    if strategy.kind == "forced":
        return forced_decision(scores, strategy.label)
    raise InvalidInputError(f"unknown strategy kind: {strategy.kind!r}")


def f_beta(precision: float, recall: float, beta: float) -> float:
    """F_beta = (1 + beta^2) P R / (beta^2 P + R); defined as 0 when P = R = 0."""
    if not 0.0 <= precision <= 1.0 or not 0.0 <= recall <= 1.0:
        raise InvalidInputError("precision and recall must lie in [0, 1]")
    if beta <= 0:
        raise InvalidInputError("beta must be positive")
    b2 = beta * beta
    denom = b2 * precision + recall
    if denom == 0.0:
        return 0.0
    return (1.0 + b2) * precision * recall / denom


@dataclass(frozen=True)
class CalibrationSpec:
    """Grid search settings for threshold calibration; averaging is micro."""

    beta: float
    grid: tuple[float, ...] = field(
        default_factory=lambda: tuple(round(0.01 * k, 2) for k in range(1, 100))
    )
    averaging: str = "micro"

    def __post_init__(self):
        if self.beta <= 0:
            raise InvalidInputError("beta must be positive")
        if self.averaging != "micro":
            raise InvalidInputError("only micro averaging is supported")
        if not self.grid or any(not 0.0 < t < 1.0 for t in self.grid):
            raise InvalidInputError("grid candidates must lie in (0, 1)")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise InvalidInputError("grid must be strictly increasing")


@dataclass(frozen=True)
class RouterReport:
    """Micro-averaged routing quality: precision, recall, mean specialists per query."""

    precision: float
    recall: float
    avg_specialists: float
    strategy: Strategy

    def __post_init__(self):
        for name in ("precision", "recall", "avg_specialists"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidInputError(f"{name} is not finite")

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "avg_specialists": self.avg_specialists,
            "strategy": self.strategy.to_dict(),
        }


def _micro_tally(
    decisions: Sequence[RoutingDecision], gold_sets: Sequence[frozenset[SpecialtyLabel]]
) -> tuple[float, float, float]:
    tp = 0
    n_selected = 0
    n_gold = 0
    for decision, gold in zip(decisions, gold_sets):
        chosen = {ls.label for ls in decision.selected}
        tp += len(chosen & gold)
        n_selected += len(chosen)
        n_gold += len(gold)
    precision = tp / n_selected if n_selected else 0.0
    recall = tp / n_gold if n_gold else 0.0
    return precision, recall, n_selected / len(decisions)


def evaluate_router(scorer, testset: Sequence[QAExample], strategy: Strategy) -> RouterReport:
    """Micro-averaged precision/recall and mean selection size for one strategy."""
    if not testset:
        raise InvalidInputError("test set is empty")
    decisions = [apply_strategy(score_labels(scorer, ex.question), strategy) for ex in testset]
    precision, recall, avg = _micro_tally(decisions, [ex.gold_labels for ex in testset])
    return RouterReport(precision=precision, recall=recall, avg_specialists=avg, strategy=strategy)


def calibrate_threshold(
    scorer, validation: Sequence[QAExample], spec: CalibrationSpec
) -> tuple[float, RouterReport]:
    """Pick the grid threshold maximizing F_beta on the validation set.

    Ties go to the smaller threshold (recall first: the downstream
    orchestrator filters irrelevant contributions, so broad coverage is
    cheap and missed specialties are not). Fallback selections count as
    predictions.
    """
    if not validation:
        raise InvalidInputError("validation set is empty")
    score_table = [score_labels(scorer, ex.question) for ex in validation]
    gold_sets = [ex.gold_labels for ex in validation]

    best: tuple[float, float, RouterReport] | None = None  # (f_beta, tau, report)
    for tau in spec.grid:
        decisions = [select_threshold(scores, tau) for scores in score_table]
        precision, recall, avg = _micro_tally(decisions, gold_sets)
        fb = f_beta(precision, recall, spec.beta)
        if best is None or fb > best[0]:
            report = RouterReport(
                precision=precision,
                recall=recall,
                avg_specialists=avg,
                strategy=Strategy.threshold(tau),
            )
            best = (fb, tau, report)
    return best[1], best[2]
