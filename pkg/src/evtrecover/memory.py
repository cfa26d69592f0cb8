"""Append-only store of recovery cases with TF-IDF retrieval.

Each case is scored against the current failure by the cosine similarity of
the failure-context texts plus the cosine similarity of the movement-plan
texts, so scores lie in [0, 2].  The IDF statistics are fitted on every
stored text plus the two query texts, with smoothing
``idf = ln((1 + N) / (1 + df)) + 1``.
"""

from __future__ import annotations

import heapq
import json
import math
import os
import re
import threading
import time
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence

from .reasoning import FailureContext, MovementPlan, RecoverySequence, ReflectionInsight

SCHEMA_VERSION = 1
TOP_K = 3

_TOKEN_RE = re.compile(r"[^0-9a-z]+")


class MemoryPersistenceError(OSError):
    """Persistence failure while appending to or loading a memory file."""


def tokenize(text: str) -> List[str]:
    return [t for t in _TOKEN_RE.split(text.lower()) if t]


@dataclass(frozen=True)
class CorpusStats:
    n_docs: int
    df: Mapping[str, int]

    def idf(self, token: str) -> float:
        return math.log((1 + self.n_docs) / (1 + self.df.get(token, 0))) + 1.0

    def with_documents(self, texts: Iterable[str]) -> "CorpusStats":
        df = Counter(self.df)
        n = self.n_docs
        for text in texts:
            n += 1
            df.update(set(tokenize(text)))
        return CorpusStats(n, df)


def vectorize(text: str, stats: CorpusStats) -> Dict[str, float]:
    """Raw term counts weighted by smoothed IDF; empty text gives an empty vector."""
    return _weigh(Counter(tokenize(text)), stats)


def _weigh(counts: Mapping[str, int], stats: CorpusStats) -> Dict[str, float]:
    return {t: c * stats.idf(t) for t, c in counts.items()}


def cosine(u: Mapping[str, float], v: Mapping[str, float]) -> float:
    if not u or not v:
        return 0.0
    # fixed summation order so equal bags of tokens give bit-equal scores
    dot = sum(u[t] * v[t] for t in sorted(u.keys() & v.keys()))
    nu = math.sqrt(sum(u[t] * u[t] for t in sorted(u)))
    nv = math.sqrt(sum(v[t] * v[t] for t in sorted(v)))
    if nu == 0 or nv == 0:
        return 0.0
    return min(1.0, dot / (nu * nv))


@dataclass(frozen=True)
class MemoryMeta:
    episode: int = 0
    attempt: int = 0
    scenario: str = ""
    outcome: str = "failed"   # "recovered" | "failed"
    ts: float = 0.0


@dataclass(frozen=True)
class MemoryEntry:
    psi: FailureContext
    gamma: MovementPlan
    r: RecoverySequence
    e: Optional[ReflectionInsight]
    meta: MemoryMeta = MemoryMeta()
    id: Optional[int] = None

    def __post_init__(self) -> None:
        if self.meta.outcome not in ("recovered", "failed"):
            raise ValueError(f"bad outcome {self.meta.outcome!r}")
        if self.meta.outcome == "recovered" and self.e is not None:
            raise ValueError("a recovered case carries no reflection insight")

    @property
    def psi_text(self) -> str:
        return self.psi.to_text()

    @property
    def gamma_text(self) -> str:
        return self.gamma.to_text()

    def to_dict(self) -> dict:
        m = self.meta
        return {
            "id": self.id,
            "psi": self.psi.to_dict(),
            "gamma": self.gamma.to_list(),
            "r": self.r.to_list(),
            "e": None if self.e is None else self.e.to_dict(),
            "meta": {"episode": m.episode, "attempt": m.attempt, "scenario": m.scenario,
                     "outcome": m.outcome, "ts": m.ts},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MemoryEntry":
        return cls(
            psi=FailureContext.from_dict(d["psi"]),
            gamma=MovementPlan.from_list(d["gamma"]),
            r=RecoverySequence(tuple(d["r"])),
            e=None if d.get("e") is None else ReflectionInsight.from_dict(d["e"]),
            meta=MemoryMeta(**d.get("meta", {})),
            id=int(d["id"]),
        )


@dataclass(frozen=True)
class ScoredEntry:
    entry: MemoryEntry
    score: float
    psi_similarity: float
    gamma_similarity: float


def score(psi_cur: FailureContext, gamma_cur: MovementPlan, entry: MemoryEntry,
          stats: CorpusStats) -> float:
    return (cosine(vectorize(psi_cur.to_text(), stats), vectorize(entry.psi_text, stats))
            + cosine(vectorize(gamma_cur.to_text(), stats), vectorize(entry.gamma_text, stats)))


def rank_key(s: ScoredEntry):
    """Score descending, then newest first (append order)."""
    return (-s.score, -s.entry.id)


class CaseMemory:
    """Append-only case store, optionally mirrored to a JSON-lines file.

    Appends are serialised by a lock and written to disk before the in-memory
    list changes, so a failed write leaves the store untouched and readers
    never see a half-appended case.
    """

    def __init__(self, path: Optional[os.PathLike] = None,
                 clock: Callable[[], float] = time.time) -> None:
        self.path = Path(path) if path is not None else None
        self._clock = clock
        self._entries: List[MemoryEntry] = []
        self._df: Counter = Counter()
        self._counts: Dict[int, tuple] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists() and self.path.stat().st_size > 0:
            self._load()

    # -- inspection ---------------------------------------------------------

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(list(self._entries))

    @property
    def entries(self) -> Sequence[MemoryEntry]:
        return tuple(self._entries)

    def corpus_stats(self) -> CorpusStats:
        return CorpusStats(2 * len(self._entries), dict(self._df))

    # -- writes -------------------------------------------------------------

    def append(self, entry: MemoryEntry) -> MemoryEntry:
        with self._lock:
            next_id = self._entries[-1].id + 1 if self._entries else 1
            meta = entry.meta if entry.meta.ts else replace(entry.meta, ts=self._clock())
            stored = replace(entry, id=next_id, meta=meta)
            if self.path is not None:
                self._persist(stored)
            self._index(stored)
            return stored

    def _index(self, entry: MemoryEntry) -> None:
        psi_c, gamma_c = Counter(tokenize(entry.psi_text)), Counter(tokenize(entry.gamma_text))
        self._counts[entry.id] = (psi_c, gamma_c)
        self._df.update(psi_c.keys())
        self._df.update(gamma_c.keys())
        self._entries.append(entry)

    def _persist(self, entry: MemoryEntry) -> None:
        try:
            new_file = not self.path.exists() or self.path.stat().st_size == 0
            with open(self.path, "a", encoding="utf-8") as fh:
                if new_file:
                    fh.write(json.dumps({"schema_version": SCHEMA_VERSION}) + "\n")
                fh.write(json.dumps(entry.to_dict(), sort_keys=True) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            raise MemoryPersistenceError(f"cannot append to {self.path}: {exc}") from exc

    def _load(self) -> None:
        try:
            lines = self.path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise MemoryPersistenceError(f"cannot read {self.path}: {exc}") from exc
        header = json.loads(lines[0])
        if header.get("schema_version") != SCHEMA_VERSION:
            raise MemoryPersistenceError(f"{self.path}: unsupported schema_version")
        for n, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            try:
                entry = MemoryEntry.from_dict(json.loads(line))
            except (ValueError, KeyError, TypeError) as exc:
                raise MemoryPersistenceError(f"{self.path}:{n}: bad memory entry ({exc})") from exc
            if self._entries and entry.id <= self._entries[-1].id:
                raise MemoryPersistenceError(f"{self.path}:{n}: ids must increase")
            self._index(entry)

    # -- retrieval ----------------------------------------------------------

    def score_all(self, psi_cur: FailureContext, gamma_cur: MovementPlan) -> List[ScoredEntry]:
        with self._lock:
            entries = tuple(self._entries)
            stats = CorpusStats(2 * len(entries), Counter(self._df))
        stats = stats.with_documents([psi_cur.to_text(), gamma_cur.to_text()])
        q_psi = vectorize(psi_cur.to_text(), stats)
        q_gamma = vectorize(gamma_cur.to_text(), stats)
        out = []
        for e in entries:
            psi_c, gamma_c = self._counts[e.id]
            sp = cosine(q_psi, _weigh(psi_c, stats))
            sg = cosine(q_gamma, _weigh(gamma_c, stats))
            out.append(ScoredEntry(e, sp + sg, sp, sg))
        return out

    def retrieve_top3(self, psi_cur: FailureContext, gamma_cur: MovementPlan,
                      k: int = TOP_K) -> List[ScoredEntry]:
        """The ``k`` best cases, best first; fewer when the store is small."""
        return heapq.nsmallest(k, self.score_all(psi_cur, gamma_cur), key=rank_key)
