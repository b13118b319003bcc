"""Shared domain types, the virtual clock and the event broker.

Everything in the runtime is driven by a single executive loop that pulls
events off a priority queue ordered by ``(priority, id)``. Time is purely
virtual; one tick is one virtual minute.
"""

from __future__ import annotations

import heapq
import itertools
import threading
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Deque, Iterable, Optional, Tuple

FEED_CADENCE = 5
MINUTES_PER_DAY = 1440


class KernelError(Exception):
    """Base class for kernel-level contract violations."""


class FutureTimestamp(KernelError):
    pass


class DueEventsPending(KernelError):
    pass


class InvariantViolation(Exception):
    """Raised when a run-level invariant breaks. ``module`` names the culprit."""

    def __init__(self, module: str, message: str):
        super().__init__(f"[{module}] {message}")
        self.module = module


class EventKind(str, Enum):
    PERCEPT = "percept"
    REWARD = "reward"
    VERIFIER = "verifier"
    FEED = "feed"
    DIRECTIVE = "directive"
    REFLECTION_DUE = "reflection-due"


# lower = more urgent; safety-relevant verifier output goes first
DEFAULT_PRIORITY = {
    EventKind.VERIFIER: 0,
    EventKind.REWARD: 1,
    EventKind.FEED: 2,
    EventKind.PERCEPT: 3,
    EventKind.DIRECTIVE: 4,
    EventKind.REFLECTION_DUE: 5,
}


class Origin(str, Enum):
    EXTRINSIC = "extrinsic"
    INTRINSIC = "intrinsic"


class Tier(str, Enum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"
    UNKNOWN = "unknown"

    @classmethod
    def from_steps(cls, steps: int) -> "Tier":
        if steps <= 3:
            return cls.EASY
        if steps <= 8:
            return cls.MEDIUM
        return cls.HARD


class Verb(str, Enum):
    OPEN = "open"
    CLICK = "click"
    TYPE = "type"
    WAIT = "wait"
    EXTRACT = "extract"
    SEARCH = "search"
    NOOP = "noop"


_NEEDS_TARGET = {Verb.OPEN, Verb.CLICK, Verb.EXTRACT}


@dataclass(frozen=True)
class Command:
    """A machine-executable command. ``wait`` carries virtual seconds."""

    verb: Verb
    argument: Any = None

    def __post_init__(self):
        verb = Verb(self.verb)
        object.__setattr__(self, "verb", verb)
        if verb is Verb.WAIT:
            if not isinstance(self.argument, int) or isinstance(self.argument, bool) or self.argument <= 0:
                raise ValueError(f"wait duration must be a positive integer, got {self.argument!r}")
        elif verb in _NEEDS_TARGET:
            if not isinstance(self.argument, str) or not self.argument.strip():
                raise ValueError(f"{verb.value} needs a non-empty target")
        elif verb in (Verb.TYPE, Verb.SEARCH):
            if not isinstance(self.argument, str):
                raise ValueError(f"{verb.value} needs text")

    def render(self) -> str:
        if self.verb is Verb.NOOP:
            return "noop()"
        if self.verb is Verb.WAIT:
            return f"wait({self.argument}s)"
        return f'{self.verb.value}("{self.argument}")'

    def __str__(self) -> str:
        return self.render()


@dataclass(frozen=True)
class Goal:
    id: str
    text: str
    origin: Origin
    creed_refs: frozenset
    task_id: str
    difficulty: Tier = Tier.UNKNOWN
    parent_goal: Optional[str] = None


@dataclass(frozen=True, order=True)
class EventEnvelope:
    priority: int
    id: int
    timestamp: int = field(compare=False)
    kind: EventKind = field(compare=False)
    payload: Any = field(compare=False, default=None)

    @property
    def key(self) -> Tuple[int, int]:
        return (self.priority, self.id)


class VirtualClock:
    """Monotone virtual-minute clock. Only the executive loop advances it."""

    def __init__(self, tick_size: int = 1, now: int = 0):
        if tick_size < 1:
            raise ValueError("tick_size must be >= 1")
        self.tick_size = tick_size
        self.now = now

    @property
    def feed_due(self) -> bool:
        return self.now % FEED_CADENCE == 0

    @property
    def day(self) -> int:
        return self.now // MINUTES_PER_DAY

    def snapshot(self) -> int:
        return self.now


class EventBroker:
    """Priority queue keyed on ``(priority, id)``.

    Safe for many producers and a single consumer. Ids are handed out at
    publish time, so FIFO order among equal priorities follows publication.
    """

    def __init__(self, clock: VirtualClock):
        self.clock = clock
        self._heap: list = []
        self._ids = itertools.count(1)
        self._lock = threading.Lock()

    def publish(
        self,
        kind: EventKind,
        payload: Any = None,
        *,
        timestamp: Optional[int] = None,
        priority: Optional[int] = None,
    ) -> EventEnvelope:
        kind = EventKind(kind)
        ts = self.clock.now if timestamp is None else timestamp
        if ts > self.clock.now:
            raise FutureTimestamp(f"event at t={ts} is ahead of clock t={self.clock.now}")
        prio = DEFAULT_PRIORITY[kind] if priority is None else priority
        if not 0 <= prio <= 9:
            raise ValueError(f"priority {prio} outside [0, 9]")
        with self._lock:
            event = EventEnvelope(prio, next(self._ids), ts, kind, payload)
            heapq.heappush(self._heap, event)
        return event

    def next_event(self) -> Optional[EventEnvelope]:
        with self._lock:
            if not self._heap:
                return None
            return heapq.heappop(self._heap)

    def drain(self) -> Iterable[EventEnvelope]:
        while True:
            event = self.next_event()
            if event is None:
                return
            yield event

    def pending(self) -> Tuple[int, ...]:
        with self._lock:
            return tuple(e.id for e in sorted(self._heap))

    def __len__(self) -> int:
        with self._lock:
            return len(self._heap)

    def advance_clock(self) -> int:
        """Move the clock one tick forward. Refuses while due events remain."""
        with self._lock:
            due = [e.id for e in self._heap if e.timestamp <= self.clock.now]
        if due:
            raise DueEventsPending(f"{len(due)} due events still queued at t={self.clock.now}")
        self.clock.now += self.clock.tick_size
        return self.clock.now


@dataclass(frozen=True)
class ExecutiveContext:
    now: int
    pending_events: Tuple[int, ...]
    active_goal: Optional[Goal]
    percepts: tuple
    beta: float


class PerceptWindow:
    """Bounded ring of recent percepts."""

    def __init__(self, size: int = 16):
        self.size = size
        self._items: Deque = deque(maxlen=size)

    def push(self, percept) -> None:
        self._items.append(percept)

    def extend(self, percepts) -> None:
        for p in percepts:
            self.push(p)

    def snapshot(self) -> tuple:
        return tuple(self._items)

    def __len__(self) -> int:
        return len(self._items)
