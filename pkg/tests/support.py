"""Shared test helpers: synthetic corpora, stub scorers, scripted JSON servers."""

from __future__ import annotations

import json
import random
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from medroute.core import LabelScore, QAExample, default_label_registry

# Distinctive vocabulary per specialty for synthetic routing corpora.
LABEL_KEYWORDS: dict[str, list[str]] = {
    "cardiology_hematology": ["cuore", "palpitazioni", "anemia"],
    "dermatology_aesthetics": ["pelle", "eruzione", "acne"],
    "eye_ent_pulmonology": ["occhio", "udito", "tosse"],
    "gastroenterology": ["stomaco", "intestino", "digestione"],
    "general_medicine_surgery": ["febbre", "chirurgia", "stanchezza"],
    "gynecology": ["ciclo", "gravidanza", "ovaie"],
    "mental_health": ["ansia", "depressione", "panico"],
    "neurology": ["emicrania", "vertigini", "formicolio"],
    "orthopedics": ["ginocchio", "schiena", "frattura"],
    "urology_andrology": ["vescica", "prostata", "reni"],
}

_FILLERS = ["salve", "ho", "un", "problema", "di", "da", "tre", "giorni", "che", "fare"]


def make_corpus(n_per_label: int, seed: int = 0, noise: float = 0.0) -> list[QAExample]:
    """Synthetic single-label QA corpus with label-distinctive keywords.

    With probability `noise` a question also carries one keyword from a
    different label, giving the trained scorer a realistic spread of
    borderline confidences.
    """
    rng = random.Random(seed)
    registry = default_label_registry()
    examples = []
    for label in registry:
        words = LABEL_KEYWORDS[label.id]
        for i in range(n_per_label):
            tokens = [rng.choice(_FILLERS), rng.choice(words), rng.choice(words)]
            if noise and rng.random() < noise:
                other = rng.choice([l for l in registry if l != label])
                tokens.append(rng.choice(LABEL_KEYWORDS[other.id]))
            tokens.append(rng.choice(_FILLERS))
            tokens.append(f"q{label.id[:4]}{i}")
            examples.append(
                QAExample(
                    question=" ".join(tokens),
                    reference_answer=f"risposta di esempio su {label.display_name} numero {i}",
                    gold_labels=frozenset({label}),
                )
            )
    rng.shuffle(examples)
    return examples


def make_ambiguous_corpus(
    n_per_label: int, seed: int, foreign_p: float = 0.6, swap_p: float = 0.25
) -> list[QAExample]:
    """Single-label corpus with deliberately overlapping vocabulary.

    A slice of questions carries only one native keyword and up to two
    keywords from other specialties, so a scorer trained on it produces the
    graded, imperfect confidences threshold calibration needs.
    """
    rng = random.Random(seed)
    registry = default_label_registry()
    out = []
    for label in registry:
        words = LABEL_KEYWORDS[label.id]
        for i in range(n_per_label):
            tokens = [rng.choice(_FILLERS)]
            if rng.random() < swap_p:
                tokens.append(rng.choice(words))
            else:
                tokens += [rng.choice(words), rng.choice(words)]
            if rng.random() < foreign_p:
                other = rng.choice([l for l in registry if l != label])
                tokens.append(rng.choice(LABEL_KEYWORDS[other.id]))
            if rng.random() < foreign_p / 2:
                other = rng.choice([l for l in registry if l != label])
                tokens.append(rng.choice(LABEL_KEYWORDS[other.id]))
            tokens.append(rng.choice(_FILLERS))
            out.append(
                QAExample(
                    question=" ".join(tokens) + f" u{label.id[:3]}{i}",
                    reference_answer=f"risposta {i}",
                    gold_labels=frozenset({label}),
                )
            )
    rng.shuffle(out)
    return out


class StubScorer:
    """Fixed score table keyed by exact question text."""

    def __init__(self, table: dict[str, list[float]]):
        registry = default_label_registry()
        self._table = {
            q: [LabelScore(label=lbl, score=s) for lbl, s in zip(registry, scores)]
            for q, scores in table.items()
        }

    def score_labels(self, query: str) -> list[LabelScore]:
        return list(self._table[query])


class OracleScorer:
    """Scores 1.0 on the gold labels of a corpus, 0.0 elsewhere."""

    def __init__(self, corpus: list[QAExample]):
        self._gold = {ex.question: {lbl.id for lbl in ex.gold_labels} for ex in corpus}

    def score_labels(self, query: str) -> list[LabelScore]:
        gold = self._gold[query]
        return [
            LabelScore(label=lbl, score=1.0 if lbl.id in gold else 0.0)
            for lbl in default_label_registry()
        ]


class ScriptedJsonServer:
    """Minimal threaded JSON HTTP server for non-chat protocols (/score, /embed).

    `handler` maps (method, path) to a callable(body_dict) -> (status, payload).
    """

    def __init__(self, routes: dict):
        self.routes = dict(routes)
        self.calls: list[dict] = []
        lock = threading.Lock()
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def _respond(self, status, payload):
                data = json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def _handle(self, method):
                body = None
                length = int(self.headers.get("Content-Length", "0"))
                if length:
                    try:
                        body = json.loads(self.rfile.read(length))
                    except ValueError:
                        body = None
                with lock:
                    outer.calls.append({"method": method, "path": self.path, "body": body})
                route = outer.routes.get((method, self.path))
                if route is None:
                    self._respond(404, {"error": "not found"})
                    return
                status, payload = route(body)
                self._respond(status, payload)

            def do_POST(self):
                self._handle("POST")

            def do_GET(self):
                self._handle("GET")

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._server.daemon_threads = True
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        self.endpoint = f"http://127.0.0.1:{self._server.server_address[1]}"

    def close(self):
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class OneHotProvider:
    """Token embeddings with forced orthogonality: one axis per distinct token."""

    def __init__(self, vocabulary: list[str]):
        self._index = {tok: i for i, tok in enumerate(vocabulary)}
        self._dim = len(vocabulary)

    def embed(self, tokens: list[str]) -> np.ndarray:
        out = np.zeros((len(tokens), self._dim))
        for row, tok in enumerate(tokens):
            out[row, self._index[tok]] = 1.0
        return out
