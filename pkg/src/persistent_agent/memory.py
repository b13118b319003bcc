"""Episodic memory: summaries for fast search, raw traces loaded lazily.

Embeddings are hashed bag-of-words vectors (FNV-1a over lower-cased ASCII
alphanumeric tokens, 256 buckets, L2-normalised). The scoring kernels come from
the compiled ``_kernels`` extension when available and from ``_kernels_py``
otherwise; set ``PERSISTENT_AGENT_PURE=1`` to force the fallback.
"""

from __future__ import annotations

import logging
import os
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import _kernels_py

logger = logging.getLogger(__name__)

if os.environ.get("PERSISTENT_AGENT_PURE"):
    _impl = _kernels_py
    KERNEL = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        KERNEL = "compiled"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _kernels_py
        KERNEL = "python"

DIM = 256
DEFAULT_K = 5
DEFAULT_THRESHOLD = 0.75
IDLE_BUCKET = 15


def embed(text: str, dim: int = DIM, impl=None) -> np.ndarray:
    return (impl or _impl).embed_bytes(text.encode("utf-8", "surrogatepass"), dim)


def trace_signature(task_id: str, emotion: str, activity: str, idle_minutes: int) -> Tuple[str, str, str, int]:
    """Canonical reuse key: (goal template, emotion, activity, idle bucket)."""
    return (task_id, str(emotion), str(activity), int(idle_minutes) // IDLE_BUCKET)


def signature_for(goal, entry) -> Tuple[str, str, str, int]:
    if entry is None:
        return trace_signature(goal.task_id, "none", "none", 0)
    return trace_signature(goal.task_id, entry.emotion.value, entry.activity.value, entry.idle_minutes)


@dataclass
class EpisodicRecord:
    id: int
    episode_id: str
    timestamp: int
    markers: frozenset
    summary: str
    embedding: np.ndarray = field(repr=False)
    success: bool = False
    signature: Optional[tuple] = None
    _loader: Optional[Callable[[], Any]] = field(default=None, repr=False, compare=False)
    _raw: Any = field(default=None, repr=False, compare=False)

    @property
    def raw_loaded(self) -> bool:
        return self._raw is not None

    def load_raw(self) -> Any:
        if self._raw is None and self._loader is not None:
            self._raw = self._loader()
        return self._raw

    def unload(self) -> None:
        if self._loader is not None:
            self._raw = None


@dataclass(frozen=True)
class RetrievalHit:
    record: EpisodicRecord
    score: float
    raw_loaded: bool
    raw: Any = None


@dataclass(frozen=True)
class RetrievalResult:
    hits: Tuple[RetrievalHit, ...] = ()

    def __iter__(self):
        return iter(self.hits)

    def __len__(self) -> int:
        return len(self.hits)

    def __getitem__(self, i):
        return self.hits[i]


class TaskCache:
    """Working records for active goals; evicted wholesale on completion."""

    def __init__(self, capacity: int = 8):
        self.capacity = capacity
        self._items: "OrderedDict[str, list]" = OrderedDict()

    def put(self, goal_id: str, item: Any) -> None:
        if goal_id not in self._items:
            while len(self._items) >= self.capacity:
                self._items.popitem(last=False)
            self._items[goal_id] = []
        self._items[goal_id].append(item)

    def get(self, goal_id: str) -> list:
        return list(self._items.get(goal_id, ()))

    def evict(self, goal_id: str) -> None:
        self._items.pop(goal_id, None)

    def __len__(self) -> int:
        return len(self._items)


@dataclass
class Episode:
    """Everything :meth:`MemoryStore.commit` needs about a finished episode."""

    id: str
    timestamp: int
    goal: Any
    observations: Sequence[Any] = ()
    actions: Sequence[Any] = ()
    rewards: Sequence[float] = ()
    commands: Sequence[Any] = ()
    success: bool = False
    markers: frozenset = frozenset()
    signature: Optional[tuple] = None
    trace: Optional[Dict[str, Any]] = None
    note: str = ""


class MemoryStore:
    """Append-only episodic store with a signature-indexed trace table.

    ``persist`` (optional) is called with each new record and its raw payload;
    it must return a zero-argument loader for the raw payload.
    """

    def __init__(self, threshold: float = DEFAULT_THRESHOLD, k: int = DEFAULT_K,
                 persist: Optional[Callable[[EpisodicRecord, Any], Callable[[], Any]]] = None, impl=None):
        self.threshold = threshold
        self.k = k
        self.records: List[EpisodicRecord] = []
        self.traces: Dict[tuple, Dict[str, Any]] = {}
        self.cache = TaskCache()
        self.retrieval_log: List[Tuple[int, float, bool]] = []
        self._episodes: set = set()
        self._persist = persist
        self._impl = impl or _impl
        self._matrix = np.zeros((0, DIM), dtype=np.float64)
        self._ids = np.zeros(0, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.records)

    def _summarize(self, ep: Episode) -> str:
        verb = "Succeeded at" if ep.success else "Failed at"
        cmds = " -> ".join(str(c) for c in ep.commands) or "no actions"
        text = f"{verb} {ep.goal.text} (task {ep.goal.task_id}) via {cmds}"
        return f"{text}. {ep.note}" if ep.note else text

    def add_record(self, record: EpisodicRecord) -> None:
        self.records.append(record)
        self._matrix = np.vstack([self._matrix, record.embedding[None, :]])
        self._ids = np.append(self._ids, np.int64(record.id))
        self._episodes.add(record.episode_id)
        if record.success and record.signature is not None:
            raw = record.load_raw()
            if raw is not None and raw.get("trace") is not None:
                self.traces[tuple(record.signature)] = raw["trace"]
            record.unload()

    def commit(self, ep: Episode) -> Optional[EpisodicRecord]:
        if ep.id in self._episodes:
            return None
        summary = self._summarize(ep)
        raw = {
            "episode": ep.id,
            "goal": ep.goal.text,
            "task": ep.goal.task_id,
            "commands": [str(c) for c in ep.commands],
            "rewards": [float(r) for r in ep.rewards],
            "success": ep.success,
            "trace": ep.trace,
        }
        record = EpisodicRecord(
            id=len(self.records) + 1,
            episode_id=ep.id,
            timestamp=ep.timestamp,
            markers=frozenset(ep.markers),
            summary=summary,
            embedding=embed(summary, impl=self._impl),
            success=ep.success,
            signature=tuple(ep.signature) if ep.signature is not None else None,
            _raw=raw,
        )
        if self._persist is not None:
            record._loader = self._persist(record, raw)
        else:
            record._loader = lambda raw=raw: raw
        record.unload()
        self.records.append(record)
        self._matrix = np.vstack([self._matrix, record.embedding[None, :]])
        self._ids = np.append(self._ids, np.int64(record.id))
        self._episodes.add(ep.id)
        if ep.success and ep.trace is not None and record.signature is not None:
            self.traces[record.signature] = ep.trace
        return record

    def lookup_trace(self, signature: tuple) -> Optional[Dict[str, Any]]:
        return self.traces.get(tuple(signature))

    def retrieve(self, query: str, k: Optional[int] = None, threshold: Optional[float] = None) -> RetrievalResult:
        k = self.k if k is None else k
        if k < 1:
            raise ValueError("k must be >= 1")
        theta = self.threshold if threshold is None else threshold
        if not self.records:
            return RetrievalResult()
        q = embed(query, impl=self._impl)
        # quantise so scores that tie exactly in real arithmetic rank by id, not by rounding noise
        scores = np.round(self._impl.cosine_scores(self._matrix, q), 12)
        hits = []
        for idx in self._impl.top_k(scores, self._ids, k):
            rec = self.records[idx]
            score = min(1.0, max(0.0, float(scores[idx])))
            load = score >= theta
            raw = rec.load_raw() if load else None
            if load:
                rec.unload()
            hits.append(RetrievalHit(rec, score, load, raw))
            self.retrieval_log.append((rec.id, score, load))
        return RetrievalResult(tuple(hits))
