"""Generation-quality metrics: ROUGE-1/2/L/Lsum, BLEU, METEOR, embedding F1.

Variant choices are pinned here so scores are reproducible across runs and
machines; they are deliberate simplifications of the many variants found in
the wild and are NOT numerically comparable with other implementations:

- tokenizer: lowercase, maximal runs of Unicode letters/digits, apostrophes
  kept inside words, everything else dropped;
- BLEU: corpus-level BLEU-4, add-one smoothing on n >= 2 precisions only;
- METEOR: exact-match variant (no stemming or synonym stage);
- embedding score: greedy token matching, no IDF weighting, pluggable
  embedding backend.

All metric functions are pure.
"""

from __future__ import annotations

import hashlib
import math
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import httpx
import numpy as np

from .core import QAExample
from .errors import InvalidInputError, MetricUnavailableError, ProtocolError

_TOKEN_RE = re.compile(r"[^\W_]+(?:['’][^\W_]+)*", re.UNICODE)
_SENTENCE_SPLIT_RE = re.compile(r"[.!?\n]+")


@dataclass(frozen=True)
class TokenSequence:
    """An ordered, lowercased token list; the shared substrate of all lexical metrics."""

    tokens: tuple[str, ...]

    def __post_init__(self):
        if any(not t for t in self.tokens):
            raise InvalidInputError("empty token in sequence")

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


def tokenize(text: str) -> TokenSequence:
    """Lowercase, then split into maximal runs of letters/digits.

    Apostrophes are kept inside words ("l'ecografia" stays one token);
    punctuation and symbols are dropped. Empty text gives an empty sequence.
    """
    return TokenSequence(tokens=tuple(_TOKEN_RE.findall(text.lower())))


def split_sentences(text: str) -> list[str]:
    """Split on sentence terminators (. ! ?) and newlines; drops empty pieces."""
    return [s for s in (p.strip() for p in _SENTENCE_SPLIT_RE.split(text)) if s]


def _toks(seq) -> tuple[str, ...]:
    if isinstance(seq, TokenSequence):
        return seq.tokens
    return tuple(seq)


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def rouge_n_scores(candidate, reference, n: int) -> tuple[float, float, float]:
    """Clipped n-gram overlap as (precision, recall, F1), n in {1, 2}."""
    if n not in (1, 2):
        raise InvalidInputError(f"rouge_n supports n in {{1, 2}}, got {n}")
    cand, ref = _toks(candidate), _toks(reference)
    cg, rg = _ngrams(cand, n), _ngrams(ref, n)
    total_c, total_r = sum(cg.values()), sum(rg.values())
    if total_c == 0 or total_r == 0:
        return 0.0, 0.0, 0.0
    match = sum(min(count, rg[g]) for g, count in cg.items())
    precision, recall = match / total_c, match / total_r
    return precision, recall, _f1(precision, recall)


def rouge_n(candidate, reference, n: int) -> float:
    """F1 over clipped n-gram multiset overlap, n in {1, 2}."""
    return rouge_n_scores(candidate, reference, n)[2]


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest common subsequence length via single-row dynamic programming."""
    a, b = _toks(a), _toks(b)
    if not a or not b:
        return 0
    if len(b) > len(a):
        a, b = b, a
    row = [0] * (len(b) + 1)
    for x in a:
        prev_diag = 0
        for j, y in enumerate(b, start=1):
            prev_row = row[j]
            if x == y:
                row[j] = prev_diag + 1
            elif row[j - 1] > row[j]:
                row[j] = row[j - 1]
            prev_diag = prev_row
    return row[len(b)]


def rouge_l(candidate, reference) -> float:
    """LCS-based F1: P = LCS/|candidate|, R = LCS/|reference|."""
    cand, ref = _toks(candidate), _toks(reference)
    if not cand or not ref:
        return 0.0
    lcs = lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    return _f1(lcs / len(cand), lcs / len(ref))


def _lcs_match_positions(a: Sequence[str], b: Sequence[str]) -> set[int]:
    """Positions in `a` that belong to one longest common subsequence with `b`."""
    la, lb = len(a), len(b)
    if la == 0 or lb == 0:
        return set()
    dp = [[0] * (lb + 1) for _ in range(la + 1)]
    for i in range(1, la + 1):
        ai = a[i - 1]
        row, prev = dp[i], dp[i - 1]
        for j in range(1, lb + 1):
            if ai == b[j - 1]:
                row[j] = prev[j - 1] + 1
            else:
                row[j] = prev[j] if prev[j] >= row[j - 1] else row[j - 1]
    positions: set[int] = set()
    i, j = la, lb
    while i > 0 and j > 0:
        if a[i - 1] == b[j - 1]:
            positions.add(i - 1)
            i -= 1
            j -= 1
        elif dp[i - 1][j] >= dp[i][j - 1]:
            i -= 1
        else:
            j -= 1
    return positions


def rouge_lsum(candidate_text: str, reference_text: str) -> float:
    """Summary-level LCS F1.

    Both texts are split into sentences; each reference sentence contributes
    the union of its LCS matches against every candidate sentence. Matched
    tokens are counted with clipping so repeated sentences cannot push
    precision or recall past 1. Single-sentence inputs reduce exactly to
    rouge_l.
    """
    cand_sents = [t.tokens for t in map(tokenize, split_sentences(candidate_text)) if t.tokens]
    ref_sents = [t.tokens for t in map(tokenize, split_sentences(reference_text)) if t.tokens]
    total_c = sum(len(s) for s in cand_sents)
    total_r = sum(len(s) for s in ref_sents)
    if total_c == 0 or total_r == 0:
        return 0.0
    cnt_c = Counter(tok for s in cand_sents for tok in s)
    cnt_r = Counter(tok for s in ref_sents for tok in s)
    hits = 0
    for ref_sent in ref_sents:
        union: set[int] = set()
        for cand_sent in cand_sents:
            union |= _lcs_match_positions(ref_sent, cand_sent)
        for pos in sorted(union):
            tok = ref_sent[pos]
            if cnt_c[tok] > 0 and cnt_r[tok] > 0:
                hits += 1
                cnt_c[tok] -= 1
                cnt_r[tok] -= 1
    if hits == 0:
        return 0.0
    return _f1(hits / total_c, hits / total_r)


def bleu(candidates: Sequence, references: Sequence) -> float:
    """Corpus-level BLEU-4.

    Clipped n-gram precisions p1..p4 are aggregated over the whole corpus;
    p1 is unsmoothed, pn for n >= 2 uses add-one smoothing
    (match + 1) / (total + 1). Brevity penalty exp(1 - r/c) applies when the
    candidate corpus is shorter than the reference corpus. Returns 0 when
    there are no unigram matches.
    """
    if len(candidates) != len(references):
        raise InvalidInputError(
            f"corpus size mismatch: {len(candidates)} candidates vs {len(references)} references"
        )
    if not candidates:
        raise InvalidInputError("empty corpus")
    match = [0] * 5
    total = [0] * 5
    c_len = 0
    r_len = 0
    for cand_seq, ref_seq in zip(candidates, references):
        cand, ref = _toks(cand_seq), _toks(ref_seq)
        c_len += len(cand)
        r_len += len(ref)
        for n in range(1, 5):
            cg = _ngrams(cand, n)
            if not cg:
                continue
            rg = _ngrams(ref, n)
            total[n] += sum(cg.values())
            match[n] += sum(min(count, rg[g]) for g, count in cg.items())
    if total[1] == 0 or match[1] == 0:
        return 0.0
    log_sum = math.log(match[1] / total[1])
    for n in range(2, 5):
        log_sum += math.log((match[n] + 1) / (total[n] + 1))
    bp = 1.0 if c_len >= r_len else math.exp(1.0 - r_len / c_len)
    return bp * math.exp(log_sum / 4.0)


# Search-node budget for the chunk-minimizing alignment. Sentence-scale texts
# stay far below it; adversarial inputs fall back to the best alignment found.
_ALIGN_NODE_CAP = 250_000


def meteor_alignment(candidate, reference) -> tuple[int, int]:
    """One-to-one unigram alignment: maximal matches, then minimal chunks.

    Returns (matches, chunks). A chunk is a maximal run of matched pairs that
    are contiguous and in the same order in both sequences. The search is
    exact below _ALIGN_NODE_CAP nodes (diagonal-first branch ordering makes
    the common cases close to linear).
    """
    cand, ref = _toks(candidate), _toks(reference)
    ref_positions: dict[str, list[int]] = {}
    for j, tok in enumerate(ref):
        ref_positions.setdefault(tok, []).append(j)
    need: dict[str, int] = {}
    for tok, count in Counter(cand).items():
        have = len(ref_positions.get(tok, ()))
        if have:
            need[tok] = min(count, have)
    matches = sum(need.values())
    if matches == 0:
        return 0, 0

    # suffix_count[i]: occurrences of cand[i] at index >= i, to decide when a
    # candidate occurrence may be skipped without losing the maximum matching
    n = len(cand)
    suffix_count = [0] * n
    seen: Counter = Counter()
    for i in range(n - 1, -1, -1):
        seen[cand[i]] += 1
        suffix_count[i] = seen[cand[i]]

    used = [False] * len(ref)
    best = matches + 1  # any alignment has at most `matches` chunks
    nodes = 0

    def dfs(i: int, remaining: int, chunks: int, prev_i: int, prev_j: int) -> None:
        nonlocal best, nodes
        if chunks >= best:
            return
        if remaining == 0:
            best = chunks
            return
        nodes += 1
        if nodes > _ALIGN_NODE_CAP:
            return
        while i < n and need.get(cand[i], 0) == 0:
            i += 1
        if i == n:
            return
        tok = cand[i]
        candidates_j = ref_positions[tok]
        diag = prev_j + 1 if prev_i == i - 1 else -1
        ordered = []
        if 0 <= diag < len(ref) and not used[diag] and ref[diag] == tok:
            ordered.append(diag)
        ordered.extend(j for j in candidates_j if not used[j] and j != diag)
        for j in ordered:
            used[j] = True
            need[tok] -= 1
            dfs(i + 1, remaining - 1, chunks if j == diag else chunks + 1, i, j)
            need[tok] += 1
            used[j] = False
        if suffix_count[i] - 1 >= need[tok]:
            dfs(i + 1, remaining, chunks, prev_i, prev_j)

    dfs(0, matches, 0, -2, -2)
    return matches, best


def meteor(candidate, reference) -> float:
    """Exact-match METEOR: recall-weighted F-mean with a fragmentation penalty.

    F_mean = 10PR / (R + 9P); penalty = 0.5 * (chunks / matches)^3;
    score = F_mean * (1 - penalty). Zero when nothing matches.
    """
    cand, ref = _toks(candidate), _toks(reference)
    if not cand or not ref:
        return 0.0
    matches, chunks = meteor_alignment(cand, ref)
    if matches == 0:
        return 0.0
    precision = matches / len(cand)
    recall = matches / len(ref)
    f_mean = 10.0 * precision * recall / (recall + 9.0 * precision)
    penalty = 0.5 * (chunks / matches) ** 3
    return f_mean * (1.0 - penalty)


_test_vector_cache: dict[tuple[str, int], np.ndarray] = {}


def _deterministic_vector(token: str, dimension: int) -> np.ndarray:
    key = (token, dimension)
    vec = _test_vector_cache.get(key)
    if vec is None:
        seed = int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "big")
        raw = np.random.default_rng(seed).standard_normal(dimension)
        vec = raw / np.linalg.norm(raw)
        _test_vector_cache[key] = vec
    return vec


@dataclass(frozen=True)
class EmbeddingProvider:
    """Token-embedding backend for the embedding-based score.

    `deterministic_test` derives a seeded unit vector per token (offline,
    reproducible); `remote` batch-posts tokens to {endpoint}/embed.
    """

    kind: str = "deterministic_test"
    endpoint: str | None = None
    dimension: int = 64

    def __post_init__(self):
        if self.kind not in ("deterministic_test", "remote"):
            raise InvalidInputError(f"unknown embedding provider kind: {self.kind!r}")
        if self.kind == "remote" and not self.endpoint:
            raise InvalidInputError("remote embedding provider requires an endpoint")

    def embed(self, tokens: list[str]) -> np.ndarray:
        if self.kind == "deterministic_test":
            return np.stack([_deterministic_vector(t, self.dimension) for t in tokens])
        try:
            resp = httpx.post(f"{self.endpoint}/embed", json={"texts": tokens}, timeout=30.0)
            resp.raise_for_status()
            vectors = resp.json()["vectors"]
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            raise MetricUnavailableError(f"embedding endpoint failed: {exc}") from exc
        arr = np.asarray(vectors, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != len(tokens):
            raise ProtocolError(
                f"embedding endpoint returned shape {arr.shape} for {len(tokens)} tokens"
            )
        return arr


def bert_style_score(candidate, reference, provider) -> tuple[float, float, float]:
    """Greedy token-level embedding match: (precision, recall, F1).

    Precision is the mean, over candidate tokens, of the best cosine against
    any reference token; recall is symmetric; F1 the harmonic mean. Negative
    cosines are floored at zero so scores stay in [0, 1]. No IDF weighting.
    """
    cand, ref = _toks(candidate), _toks(reference)
    if not cand and not ref:
        return 1.0, 1.0, 1.0
    if not cand or not ref:
        return 0.0, 0.0, 0.0
    c_vecs = np.asarray(provider.embed(list(cand)), dtype=np.float64)
    r_vecs = np.asarray(provider.embed(list(ref)), dtype=np.float64)
    c_norm = c_vecs / np.maximum(np.linalg.norm(c_vecs, axis=1, keepdims=True), 1e-12)
    r_norm = r_vecs / np.maximum(np.linalg.norm(r_vecs, axis=1, keepdims=True), 1e-12)
    sim = np.clip(c_norm @ r_norm.T, 0.0, 1.0)
    precision = float(sim.max(axis=1).mean())
    recall = float(sim.max(axis=0).mean())
    return precision, recall, _f1(precision, recall)


@dataclass(frozen=True)
class MetricReport:
    """One row of corpus-level metrics; embedding columns are None when the provider failed."""

    rouge1: float
    rouge2: float
    rougeL: float
    rougeLsum: float
    bleu: float
    meteor: float
    bert_p: float | None
    bert_r: float | None
    bert_f1: float | None
    n_examples: int

    def __post_init__(self):
        for name in ("rouge1", "rouge2", "rougeL", "rougeLsum", "bleu", "meteor",
                     "bert_p", "bert_r", "bert_f1"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise InvalidInputError(f"{name} = {value} outside [0, 1]")
        if self.n_examples < 1:
            raise InvalidInputError("n_examples must be positive")

    def to_dict(self) -> dict:
        return {
            "rouge1": self.rouge1,
            "rouge2": self.rouge2,
            "rougeL": self.rougeL,
            "rougeLsum": self.rougeLsum,
            "bleu": self.bleu,
            "meteor": self.meteor,
            "bert_p": self.bert_p,
            "bert_r": self.bert_r,
            "bert_f1": self.bert_f1,
            "n_examples": self.n_examples,
        }


def evaluate_corpus(
    examples: Sequence[QAExample],
    system_outputs: Sequence[str],
    provider=None,
    workers: int = 1,
) -> MetricReport:
    """Score system outputs against reference answers.

    Per-example metrics are averaged arithmetically; BLEU is computed at the
    corpus level. Results are independent of `workers` (per-example work is
    embarrassingly parallel and reduced in index order). A failing embedding
    provider leaves the embedding columns absent rather than fabricated.
    """
    if len(examples) != len(system_outputs):
        raise InvalidInputError(
            f"{len(examples)} examples but {len(system_outputs)} outputs"
        )
    if not examples:
        raise InvalidInputError("empty evaluation corpus")

    pairs = list(zip(examples, system_outputs))

    def run(use_embeddings: bool) -> list[dict]:
        def one(pair) -> dict:
            ex, out = pair
            cand = tokenize(out)
            ref = tokenize(ex.reference_answer)
            row = {
                "rouge1": rouge_n(cand, ref, 1),
                "rouge2": rouge_n(cand, ref, 2),
                "rougeL": rouge_l(cand, ref),
                "rougeLsum": rouge_lsum(out, ex.reference_answer),
                "meteor": meteor(cand, ref),
            }
            if use_embeddings:
                row["bert"] = bert_style_score(cand, ref, provider)
            return row

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(one, pairs))
        return [one(p) for p in pairs]

    embeddings_ok = provider is not None
    try:
        rows = run(embeddings_ok)
    except MetricUnavailableError:
        embeddings_ok = False
        rows = run(False)

    n = len(rows)

    def mean(key: str) -> float:
        return sum(r[key] for r in rows) / n
    if embeddings_ok:
        bert_p = sum(r["bert"][0] for r in rows) / n
        bert_r = sum(r["bert"][1] for r in rows) / n
        bert_f1 = sum(r["bert"][2] for r in rows) / n
    else:
        bert_p = bert_r = bert_f1 = None
    return MetricReport(
        rouge1=mean("rouge1"),
        rouge2=mean("rouge2"),
        rougeL=mean("rougeL"),
        rougeLsum=mean("rougeLsum"),
        bleu=bleu(
            [tokenize(out) for out in system_outputs],
            [tokenize(ex.reference_answer) for ex in examples],
        ),
        meteor=mean("meteor"),
        bert_p=bert_p,
        bert_r=bert_r,
        bert_f1=bert_f1,
        n_examples=n,
    )
