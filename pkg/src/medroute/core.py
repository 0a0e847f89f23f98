"""Shared domain types: specialty labels, routing decisions, QA examples, answers.

Everything here is an immutable value type, safe to share between concurrent
tasks. JSON field names are part of the wire contract and must not change.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import InvalidInputError

# The ten macro-categories the routing label space is partitioned into.
# Ids are ASCII snake_case slugs of the display names, stable across runs;
# they double as config keys and URL path segments.
_CANONICAL_LABELS: tuple[tuple[str, str], ...] = (
    ("cardiology_hematology", "Cardiology and Hematology"),
    ("dermatology_aesthetics", "Dermatology and Aesthetics"),
    ("eye_ent_pulmonology", "Eye, ENT and Pulmonology"),
    ("gastroenterology", "Gastroenterology"),
    ("general_medicine_surgery", "General Medicine and Surgery"),
    ("gynecology", "Gynecology"),
    ("mental_health", "Mental Health"),
    ("neurology", "Neurology"),
    ("orthopedics", "Orthopedics"),
    ("urology_andrology", "Urology and Andrology"),
)


@dataclass(frozen=True, order=True)
class SpecialtyLabel:
    """One medical macro-category. `id` is the stable machine identifier."""

    id: str
    display_name: str = field(compare=False)

    def to_dict(self) -> dict:
        return {"id": self.id, "display_name": self.display_name}

    @classmethod
    def from_dict(cls, d: Mapping) -> "SpecialtyLabel":
        return cls(id=d["id"], display_name=d["display_name"])


_REGISTRY: tuple[SpecialtyLabel, ...] = tuple(
    SpecialtyLabel(id=i, display_name=n) for i, n in _CANONICAL_LABELS
)
_BY_ID: dict[str, SpecialtyLabel] = {lbl.id: lbl for lbl in _REGISTRY}


def default_label_registry() -> list[SpecialtyLabel]:
    """The ten canonical labels in deterministic id-ascending order."""
    return list(_REGISTRY)


def label_by_id(label_id: str) -> SpecialtyLabel:
    try:
        return _BY_ID[label_id]
    except KeyError:
        raise InvalidInputError(f"unknown specialty label id: {label_id!r}") from None


def is_known_label(label_id: str) -> bool:
    return label_id in _BY_ID


@dataclass(frozen=True)
class LabelScore:
    """A per-label relevance confidence in [0, 1].

    Scores are independent per label; they do not sum to 1 across labels.
    """

    label: SpecialtyLabel
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise InvalidInputError(f"score {self.score} outside [0, 1]")

    def to_dict(self) -> dict:
        return {"label": self.label.to_dict(), "score": self.score}

    @classmethod
    def from_dict(cls, d: Mapping) -> "LabelScore":
        return cls(label=SpecialtyLabel.from_dict(d["label"]), score=d["score"])


@dataclass(frozen=True)
class Strategy:
    """Specialist-selection strategy descriptor: top_n(n), threshold(tau) or forced(label)."""

    kind: str
    n: int | None = None
    tau: float | None = None
    label: str | None = None

    @classmethod
    def top_n(cls, n: int) -> "Strategy":
        return cls(kind="top_n", n=n)

    @classmethod
    def threshold(cls, tau: float) -> "Strategy":
        return cls(kind="threshold", tau=tau)

    @classmethod
    def forced(cls, label: str) -> "Strategy":
        return cls(kind="forced", label=label)

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.n is not None:
            d["n"] = self.n
        if self.tau is not None:
            d["tau"] = self.tau
        if self.label is not None:
            d["label"] = self.label
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Strategy":
        return cls(
            kind=d["kind"],
            n=d.get("n"),
            tau=d.get("tau"),
            label=d.get("label"),
        )

    def describe(self) -> str:
        if self.kind == "top_n":
            return f"top_{self.n}"
        if self.kind == "threshold":
            return f"threshold({self.tau})"
        return f"forced({self.label})"


@dataclass(frozen=True)
class RoutingDecision:
    """Which specialists answer a query, with the scores that led there.

    `selected` is sorted by score descending (ties by label id ascending) and
    is never empty; every selected label appears in `all_scores` with an
    identical score.
    """

    strategy: Strategy
    selected: tuple[LabelScore, ...]
    fallback_used: bool
    all_scores: tuple[LabelScore, ...]

    def __post_init__(self):
        if not self.selected:
            raise InvalidInputError("a routing decision must select at least one specialist")
        by_id = {ls.label.id: ls.score for ls in self.all_scores}
        for ls in self.selected:
            if by_id.get(ls.label.id) != ls.score:
                raise InvalidInputError(
                    f"selected label {ls.label.id!r} missing from all_scores or score mismatch"
                )

    def selected_ids(self) -> list[str]:
        return [ls.label.id for ls in self.selected]

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy.to_dict(),
            "selected": [ls.to_dict() for ls in self.selected],
            "fallback_used": self.fallback_used,
            "all_scores": [ls.to_dict() for ls in self.all_scores],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "RoutingDecision":
        return cls(
            strategy=Strategy.from_dict(d["strategy"]),
            selected=tuple(LabelScore.from_dict(x) for x in d["selected"]),
            fallback_used=d["fallback_used"],
            all_scores=tuple(LabelScore.from_dict(x) for x in d["all_scores"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_json(cls, s: str) -> "RoutingDecision":
        return cls.from_dict(json.loads(s))


@dataclass(frozen=True)
class QAExample:
    """A question with its reference answer and gold specialty labels.

    Forum-sourced data is single-label; multi-label gold sets are supported
    because the router itself is multi-label.
    """

    question: str
    reference_answer: str
    gold_labels: frozenset[SpecialtyLabel]

    def __post_init__(self):
        if not self.question.strip():
            raise InvalidInputError("question is empty")
        if not self.reference_answer.strip():
            raise InvalidInputError("reference_answer is empty")
        if not self.gold_labels:
            raise InvalidInputError("gold_labels is empty")

    def to_dict(self) -> dict:
        return {
            "question": self.question,
            "reference_answer": self.reference_answer,
            "gold_labels": sorted(lbl.id for lbl in self.gold_labels),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "QAExample":
        return cls(
            question=d["question"],
            reference_answer=d["reference_answer"],
            gold_labels=frozenset(label_by_id(i) for i in d["gold_labels"]),
        )


@dataclass(frozen=True)
class SpecialistResponse:
    """One specialist's candidate answer (or its failure record)."""

    specialty: SpecialtyLabel
    text: str
    status: str  # ok | timeout | backend_error
    latency_ms: int

    def __post_init__(self):
        if self.status not in ("ok", "timeout", "backend_error"):
            raise InvalidInputError(f"unknown response status: {self.status!r}")
        if self.status == "ok" and not self.text:
            raise InvalidInputError("ok response with empty text")
        if self.status != "ok" and self.text:
            raise InvalidInputError("failed response must carry empty text")
        if self.latency_ms < 0:
            raise InvalidInputError("latency_ms is negative")

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict:
        return {
            "specialty": self.specialty.to_dict(),
            "text": self.text,
            "status": self.status,
            "latency_ms": self.latency_ms,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SpecialistResponse":
        return cls(
            specialty=SpecialtyLabel.from_dict(d["specialty"]),
            text=d["text"],
            status=d["status"],
            latency_ms=d["latency_ms"],
        )


@dataclass(frozen=True)
class FinalAnswer:
    """The orchestrated answer plus everything that produced it."""

    text: str
    decision: RoutingDecision
    contributions: tuple[SpecialistResponse, ...]
    reformulated_question: str

    def __post_init__(self):
        want = [ls.label.id for ls in self.decision.selected]
        got = [c.specialty.id for c in self.contributions]
        if want != got:
            raise InvalidInputError(
                f"contributions {got} do not match selected specialists {want}"
            )

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "decision": self.decision.to_dict(),
            "contributions": [c.to_dict() for c in self.contributions],
            "reformulated_question": self.reformulated_question,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FinalAnswer":
        return cls(
            text=d["text"],
            decision=RoutingDecision.from_dict(d["decision"]),
            contributions=tuple(SpecialistResponse.from_dict(c) for c in d["contributions"]),
            reformulated_question=d["reformulated_question"],
        )


def load_qa_jsonl(path) -> list[QAExample]:
    """Read a QA corpus from a JSON-Lines file, one example per line."""
    examples: list[QAExample] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                examples.append(QAExample.from_dict(json.loads(line)))
            except (KeyError, json.JSONDecodeError) as exc:
                raise InvalidInputError(f"{path}:{lineno}: bad QA example: {exc}") from exc
    return examples


def dump_qa_jsonl(examples: Iterable[QAExample], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_dict(), ensure_ascii=False) + "\n")
