"""Self-model (capabilities, creed, drives) and user model (belief state)."""

from __future__ import annotations

import logging
import re
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

from .sandbox import Activity, Emotion, UserFeedEntry

logger = logging.getLogger(__name__)

CREED_MARKER = re.compile(r"\[creed:(\d+)\]")

DEFAULT_CREED = (
    "I act honestly and never present as verified what I have not checked.",
    "I care for the wellbeing of the person I share the desk with.",
    "I keep learning so that tomorrow I can help more than today.",
    "I respect the user's attention and privacy.",
    "I keep a transparent record of what I can and cannot do.",
)

GAP_WINDOW = 10
GAP_FAILURES = 3


class CreedViolation(ValueError):
    """Text that does not reference any creed sentence."""


def creed_ids(text: str) -> FrozenSet[int]:
    return frozenset(int(m) for m in CREED_MARKER.findall(text))


@dataclass(frozen=True)
class CreedCheck:
    ids: FrozenSet[int]

    @property
    def violation(self) -> bool:
        return not self.ids


@dataclass(frozen=True)
class Capability:
    name: str
    note: str = ""


@dataclass(frozen=True)
class CapabilityGap:
    skill: str
    failures: int
    window: Tuple[bool, ...]
    target: str


class SelfModel:
    """Inspectable property dictionary of the agent itself.

    The creed is fixed at construction; capabilities only ever grow.
    """

    def __init__(self, creed: Sequence[str] = DEFAULT_CREED, beta: float = 0.5,
                 capabilities: Iterable[Capability] = ()):
        if len(creed) != 5:
            raise ValueError("terminal creed must have exactly five sentences")
        self._creed: Tuple[str, ...] = tuple(str(s) for s in creed)
        self.beta = beta
        self.drives: Dict[str, float] = {"curiosity": 0.5, "mastery": 0.5, "relatedness": 0.5}
        self._capabilities: List[Capability] = list(capabilities)
        self.outcomes: Dict[str, Deque[bool]] = {}
        self.proficiency: Dict[str, float] = {}

    @property
    def creed(self) -> Tuple[str, ...]:
        return self._creed

    def creed_sentence(self, creed_id: int) -> str:
        return self._creed[creed_id - 1]

    @property
    def capabilities(self) -> Tuple[Capability, ...]:
        return tuple(self._capabilities)

    @property
    def capability_names(self) -> Tuple[str, ...]:
        return tuple(c.name for c in self._capabilities)

    def has(self, skill: str) -> bool:
        return skill in self.capability_names

    def check_creed(self, text: str) -> CreedCheck:
        ids = frozenset(i for i in creed_ids(text) if 1 <= i <= len(self._creed))
        return CreedCheck(ids)

    def add_capability(self, name: str, note: str = "") -> bool:
        """Append a capability. Returns False (and logs) on duplicates."""
        if self.has(name):
            logger.warning("capability %r already present; ignoring", name)
            return False
        self._capabilities.append(Capability(name, note))
        return True

    def record_outcome(self, skill: str, success: bool) -> float:
        """Track an attempt; returns the proficiency delta it caused."""
        window = self.outcomes.setdefault(skill, deque(maxlen=GAP_WINDOW))
        before = self.proficiency.get(skill, 0.0)
        window.append(success)
        after = sum(window) / len(window)
        self.proficiency[skill] = after
        return after - before

    def reset_skill(self, skill: str) -> None:
        self.outcomes.pop(skill, None)

    def set_drive(self, name: str, level: float) -> None:
        self.drives[name] = min(1.0, max(0.0, level))

    def to_dict(self) -> dict:
        return {
            "creed": list(self._creed),
            "beta": self.beta,
            "drives": dict(sorted(self.drives.items())),
            "capabilities": [{"name": c.name, "note": c.note} for c in self._capabilities],
            "proficiency": dict(sorted(self.proficiency.items())),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SelfModel":
        model = cls(
            creed=data["creed"],
            beta=float(data.get("beta", 0.5)),
            capabilities=[Capability(c["name"], c.get("note", "")) for c in data.get("capabilities", ())],
        )
        for k, v in data.get("drives", {}).items():
            model.set_drive(k, float(v))
        model.proficiency = {k: float(v) for k, v in data.get("proficiency", {}).items()}
        return model


def check_creed(model: SelfModel, text: str) -> CreedCheck:
    return model.check_creed(text)


def detect_gap(model: SelfModel, skill: Optional[str] = None) -> Optional[CapabilityGap]:
    """First skill (or the named one) with >= 3 failures in its last 10 attempts."""
    skills = [skill] if skill is not None else sorted(model.outcomes)
    for name in skills:
        window = tuple(model.outcomes.get(name, ()))
        failures = sum(1 for ok in window if not ok)
        if failures >= GAP_FAILURES:
            return CapabilityGap(name, failures, window, f"master the {name}")
    return None


def add_capability(model: SelfModel, name: str, note: str = "") -> bool:
    return model.add_capability(name, note)


class OutOfOrderFeed(ValueError):
    pass


@dataclass
class UserModel:
    user_id: str = "user"
    inferred_goals: List[str] = field(default_factory=list)
    knowledge_level: str = "novice"
    emotion: Emotion = Emotion.NEUTRAL
    stress_streak: int = 0
    last_entry: Optional[UserFeedEntry] = None
    notes: List[str] = field(default_factory=list)
    interest_pending: bool = False
    _stress_handled: bool = False

    @property
    def stress_armed(self) -> bool:
        return self.stress_streak > 45 and not self._stress_handled

    def mark_stress_handled(self) -> None:
        self._stress_handled = True


LEARNING_NOTE = "User is reading documentation; learning interest."


def update_user(model: UserModel, entry: UserFeedEntry) -> UserModel:
    """Fold one feed entry into the belief state (in place; returns the model)."""
    prev = model.last_entry
    if prev is not None and entry.timestamp <= prev.timestamp:
        raise OutOfOrderFeed(f"feed entry t={entry.timestamp} not after t={prev.timestamp}")
    if entry.emotion is Emotion.STRESSED:
        if prev is not None and prev.emotion is Emotion.STRESSED:
            model.stress_streak += entry.timestamp - prev.timestamp
        else:
            model.stress_streak = 0
    else:
        model.stress_streak = 0
        model._stress_handled = False
    model.emotion = entry.emotion
    if entry.activity is Activity.READING_DOCS and (prev is None or prev.activity is not Activity.READING_DOCS):
        model.inferred_goals.append(LEARNING_NOTE)
        model.interest_pending = True
        if model.knowledge_level == "novice":
            model.knowledge_level = "intermediate"
    model.last_entry = entry
    return model


def stress_streak_oracle(entries: Sequence[UserFeedEntry]) -> int:
    """Sum of spacings across the maximal stressed suffix (used to audit the model)."""
    streak = 0
    i = len(entries) - 1
    while i > 0 and entries[i].emotion is Emotion.STRESSED and entries[i - 1].emotion is Emotion.STRESSED:
        streak += entries[i].timestamp - entries[i - 1].timestamp
        i -= 1
    return streak
