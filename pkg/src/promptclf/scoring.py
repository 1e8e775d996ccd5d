"""Candidate-word scoring backends.

Four kinds: "mock" (token overlap, offline), "toy" (trainable multinomial
naive Bayes over training pairs), "logit-server" (HTTP scoring service) and
"chat" (chat-completion endpoint that answers with a label index).
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import requests

from .corpus import LabelCatalog
from .prompting import MASK_TOKEN, FilledPrompt

BACKEND_KINDS = ("mock", "toy", "logit-server", "chat")

# Spliced into the prompt in place of the mask when asking a chat endpoint.
CHAT_INSTRUCTION = "Return the index of the label, please."

API_KEY_ENV = "PL_API_KEY"
API_BASE_ENV = "PL_API_BASE"

_TOKEN = re.compile(r"[a-z0-9]+")
_INTEGER = re.compile(r"\b\d+\b")

_jitter = random.Random(0x5EED)


class BackendError(RuntimeError):
    pass


class ProtocolError(BackendError):
    """Server answered, but not in the agreed shape."""


@dataclass(frozen=True)
class CandidateScores:
    """Backend scores for an ordered candidate list; higher means more likely."""

    candidates: tuple[str, ...]
    scores: tuple[float, ...]

    def __post_init__(self):
        if len(self.candidates) != len(self.scores):
            raise BackendError("candidates and scores must have equal length")
        if any(not math.isfinite(s) for s in self.scores):
            raise BackendError("scores must be finite")

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.candidates, self.scores))


@dataclass(frozen=True)
class TrainingPair:
    prompt_text: str
    target_word: str


@dataclass(frozen=True)
class BackendConfig:
    kind: str
    endpoint: str | None = None
    model: str | None = None
    timeout: float = 10.0
    max_retries: int = 3
    backoff_base: float = 0.5
    max_concurrency: int = 4
    alpha: float = 1.0
    state_path: str | None = None

    def __post_init__(self):
        if self.kind not in BACKEND_KINDS:
            raise BackendError(f"unknown backend kind {self.kind!r}, expected one of {BACKEND_KINDS}")
        if self.timeout <= 0:
            raise BackendError("timeout must be positive")
        if self.max_retries < 0:
            raise BackendError("max_retries must be >= 0")
        if self.backoff_base <= 0:
            raise BackendError("backoff_base must be positive")
        if self.max_concurrency < 1:
            raise BackendError("max_concurrency must be >= 1")


def tokenize(text: str) -> list[str]:
    """Lowercase tokens: maximal alphanumeric runs, everything else a separator."""
    return _TOKEN.findall(text.lower())


def _check_candidates(candidates: Sequence[str]) -> tuple[str, ...]:
    cands = tuple(candidates)
    if not cands:
        raise BackendError("candidate list is empty")
    if any(not isinstance(c, str) or not c for c in cands):
        raise BackendError("candidates must be non-empty strings")
    if len(set(cands)) != len(cands):
        raise BackendError("duplicate candidates")
    return cands


def _stable_fraction(word: str) -> float:
    """Deterministic value in [0, 1) derived from the word alone."""
    digest = hashlib.sha256(word.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big") / 2**32


class MockBackend:
    """Offline scorer: count of shared tokens between prompt and candidate.

    A stable sub-1e-6 hash epsilon is added so equal-overlap candidates rank
    deterministically regardless of list order.
    """

    kind = "mock"
    backend_id = "mock"

    def score_candidates(self, prompt: FilledPrompt, candidates: Sequence[str]) -> CandidateScores:
        cands = _check_candidates(candidates)
        prompt_tokens = set(tokenize(prompt.text))
        scores = tuple(
            float(len(set(tokenize(c)) & prompt_tokens)) + _stable_fraction(c) * 1e-6
            for c in cands
        )
        return CandidateScores(cands, scores)


class ToyBackend:
    """Multinomial naive Bayes over (prompt text, target word) pairs.

    One class per distinct target word. Priors are proportional to pair
    counts; token likelihoods are Laplace-smoothed with alpha. A candidate
    score is log prior plus the summed log likelihood of the prompt's
    in-vocabulary tokens. Candidates never seen in training get the uniform
    background score: log(1/(K+1)) plus log(1/V) per in-vocabulary token.
    """

    kind = "toy"

    def __init__(self, alpha, classes, pair_counts, vocab, count_matrix):
        self.alpha = float(alpha)
        self.classes = tuple(classes)  # target words, first-seen order
        self._index = {w: i for i, w in enumerate(self.classes)}
        self.pair_counts = tuple(int(n) for n in pair_counts)
        self.vocab = dict(vocab)  # token -> column
        self._counts = np.asarray(count_matrix, dtype=np.float64)
        total_pairs = sum(self.pair_counts)
        self._log_priors = np.log(np.asarray(self.pair_counts, dtype=np.float64) / total_pairs)
        v = max(1, len(self.vocab))
        totals = self._counts.sum(axis=1, keepdims=True)
        self._log_like = np.log((self._counts + self.alpha) / (totals + self.alpha * v))
        self._bg_log_prior = math.log(1.0 / (len(self.classes) + 1))
        self._bg_token_ll = math.log(1.0 / v)
        digest = hashlib.sha256(self._state_json().encode("utf-8")).hexdigest()[:12]
        self.backend_id = f"toy:{digest}"

    def score_candidates(self, prompt: FilledPrompt, candidates: Sequence[str]) -> CandidateScores:
        cands = _check_candidates(candidates)
        cols: dict[int, int] = {}
        for token in tokenize(prompt.text):
            col = self.vocab.get(token)
            if col is not None:  # out-of-vocabulary tokens are skipped
                cols[col] = cols.get(col, 0) + 1
        idx = np.fromiter(cols.keys(), dtype=np.intp, count=len(cols))
        cnt = np.fromiter(cols.values(), dtype=np.float64, count=len(cols))
        n_tokens = float(cnt.sum())
        seen_scores = self._log_priors + self._log_like[:, idx] @ cnt
        background = self._bg_log_prior + n_tokens * self._bg_token_ll
        scores = tuple(
            float(seen_scores[self._index[c.lower()]]) if c.lower() in self._index else background
            for c in cands
        )
        return CandidateScores(cands, scores)

    def _state_json(self) -> str:
        per_class = []
        inv_vocab = {col: tok for tok, col in self.vocab.items()}
        for i, word in enumerate(self.classes):
            tokens = {
                inv_vocab[col]: int(self._counts[i, col])
                for col in range(self._counts.shape[1])
                if self._counts[i, col]
            }
            per_class.append({"word": word, "pairs": self.pair_counts[i], "tokens": tokens})
        state = {"model": "toy-multinomial-nb", "alpha": self.alpha, "classes": per_class}
        return json.dumps(state, sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(self._state_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ToyBackend":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if raw.get("model") != "toy-multinomial-nb":
            raise BackendError(f"{path}: not a toy backend state file")
        classes = [c["word"] for c in raw["classes"]]
        pair_counts = [c["pairs"] for c in raw["classes"]]
        vocab: dict[str, int] = {}
        for c in raw["classes"]:
            for token in c["tokens"]:
                vocab.setdefault(token, len(vocab))
        counts = np.zeros((len(classes), max(1, len(vocab))), dtype=np.float64)
        for i, c in enumerate(raw["classes"]):
            for token, n in c["tokens"].items():
                counts[i, vocab[token]] = n
        return cls(raw["alpha"], classes, pair_counts, vocab, counts)


def toy_fit(pairs: Sequence[TrainingPair], alpha: float = 1.0) -> ToyBackend:
    """Train a toy backend. Classes appear in first-seen target-word order."""
    if not pairs:
        raise BackendError("cannot fit on an empty pair list")
    if alpha <= 0:
        raise BackendError(f"smoothing alpha must be positive, got {alpha!r}")
    classes: list[str] = []
    index: dict[str, int] = {}
    vocab: dict[str, int] = {}
    rows: list[dict[int, int]] = []
    pair_counts: list[int] = []
    for pair in pairs:
        word = pair.target_word.lower()
        if not word:
            raise BackendError("training pair with empty target word")
        if word not in index:
            index[word] = len(classes)
            classes.append(word)
            rows.append({})
            pair_counts.append(0)
        k = index[word]
        pair_counts[k] += 1
        for token in tokenize(pair.prompt_text):
            col = vocab.setdefault(token, len(vocab))
            rows[k][col] = rows[k].get(col, 0) + 1
    counts = np.zeros((len(classes), max(1, len(vocab))), dtype=np.float64)
    for k, row in enumerate(rows):
        for col, n in row.items():
            counts[k, col] = n
    return ToyBackend(alpha, classes, pair_counts, vocab, counts)


class _HttpClient:
    """Shared POST helper: bounded concurrency, exponential backoff with jitter."""

    def __init__(self, config: BackendConfig):
        self.config = config
        self._session = requests.Session()
        self._sem = threading.BoundedSemaphore(config.max_concurrency)

    def post_json(self, url: str, payload: dict, headers: dict | None = None) -> dict:
        cfg = self.config
        attempts = cfg.max_retries + 1
        delay = cfg.backoff_base
        last_error: BackendError | None = None
        for attempt in range(attempts):
            try:
                with self._sem:
                    resp = self._session.post(url, json=payload, timeout=cfg.timeout, headers=headers)
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_error = BackendError(f"POST {url} failed: {exc}")
            else:
                if 200 <= resp.status_code < 300:
                    try:
                        body = resp.json()
                    except ValueError:
                        raise ProtocolError(f"POST {url}: response body is not JSON") from None
                    if not isinstance(body, dict):
                        raise ProtocolError(f"POST {url}: expected a JSON object")
                    return body
                if resp.status_code == 429 or resp.status_code >= 500:
                    last_error = BackendError(f"POST {url}: HTTP {resp.status_code}")
                else:
                    # client errors are not retryable
                    raise BackendError(f"POST {url}: HTTP {resp.status_code}")
            if attempt + 1 < attempts:
                time.sleep(delay * (1.0 + 0.25 * _jitter.random()))
                delay *= 2
        assert last_error is not None
        raise last_error


class LogitServerBackend:
    """Client for a scoring server exposing POST /score and POST /embed."""

    kind = "logit-server"

    def __init__(self, config: BackendConfig):
        if not config.endpoint:
            raise BackendError("logit-server backend requires an endpoint")
        self.config = config
        self.endpoint = config.endpoint.rstrip("/")
        self.backend_id = f"logit-server:{self.endpoint}"
        self._http = _HttpClient(config)

    def score_candidates(self, prompt: FilledPrompt, candidates: Sequence[str]) -> CandidateScores:
        cands = _check_candidates(candidates)
        body = self._http.post_json(
            self.endpoint + "/score", {"prompt": prompt.text, "candidates": list(cands)}
        )
        scores = body.get("scores")
        if not isinstance(scores, list) or len(scores) != len(cands):
            got = len(scores) if isinstance(scores, list) else type(scores).__name__
            raise ProtocolError(
                f"{self.endpoint}/score: expected {len(cands)} scores, got {got}"
            )
        try:
            values = tuple(float(s) for s in scores)
        except (TypeError, ValueError):
            raise ProtocolError(f"{self.endpoint}/score: non-numeric score in response") from None
        return CandidateScores(cands, values)

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        body = self._http.post_json(self.endpoint + "/embed", {"texts": list(texts)})
        vectors = body.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            got = len(vectors) if isinstance(vectors, list) else type(vectors).__name__
            raise ProtocolError(
                f"{self.endpoint}/embed: expected {len(texts)} vectors, got {got}"
            )
        return vectors


class ChatBackend:
    """Client for a chat-completion endpoint that is asked for a label index.

    The mask region of the prompt is replaced by a fixed instruction; the
    reply is parsed with parse_index_response. A well-formed reply is never
    retried, even when unparseable: parse-failure is a result, not an error.
    """

    kind = "chat"

    def __init__(self, config: BackendConfig):
        endpoint = config.endpoint or os.environ.get(API_BASE_ENV)
        if not endpoint:
            raise BackendError(
                f"chat backend needs an endpoint (config or {API_BASE_ENV} environment variable)"
            )
        self.config = config
        self.endpoint = endpoint.rstrip("/")
        self.model = config.model or "default"
        self.backend_id = f"chat:{self.model}"
        self._http = _HttpClient(config)

    def classify(self, prompt: FilledPrompt, catalog: LabelCatalog) -> int | None:
        content = prompt.text.replace(MASK_TOKEN, CHAT_INSTRUCTION, 1)
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": content}],
            "temperature": 0,
        }
        headers = {}
        api_key = os.environ.get(API_KEY_ENV)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        body = self._http.post_json(self.endpoint + "/v1/chat/completions", payload, headers or None)
        try:
            reply = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise ProtocolError(
                f"{self.endpoint}/v1/chat/completions: malformed completion response"
            ) from None
        if not isinstance(reply, str):
            raise ProtocolError("completion content is not a string")
        return parse_index_response(reply, catalog)


def chat_classify(client: ChatBackend, prompt: FilledPrompt, catalog: LabelCatalog) -> int | None:
    return client.classify(prompt, catalog)


def parse_index_response(reply: str, catalog: LabelCatalog) -> int | None:
    """Extract a label index from a free-form reply.

    First standalone integer that falls in [0, n_labels); otherwise the
    label whose name occurs in the reply case-insensitively, longest name
    winning. None means parse-failure; the result is never out of range.
    """
    n = len(catalog)
    for match in _INTEGER.finditer(reply):
        value = int(match.group())
        if 0 <= value < n:
            return value
    lowered = reply.lower()
    hits = [e for e in catalog if e.name.lower() in lowered]
    if hits:
        best = sorted(hits, key=lambda e: (-len(e.name), e.index))[0]
        return best.index
    return None


def build_backend(config: BackendConfig):
    """Instantiate the backend named by config.kind."""
    if config.kind == "mock":
        return MockBackend()
    if config.kind == "toy":
        if config.state_path:
            return ToyBackend.load(config.state_path)
        return None  # trainable; the caller fits it from sampled pairs
    if config.kind == "logit-server":
        return LogitServerBackend(config)
    return ChatBackend(config)
