"""Reflex layer: observation encoding, command actuation, extrinsic reward."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

from .kernel import Command, EventBroker, EventKind, Goal, Verb
from .sandbox import Observation, Sandbox, VerifierReport


class PerceptSource(str, Enum):
    PAGE = "page"
    FEED = "feed"
    VERIFIER = "verifier"


@dataclass(frozen=True)
class PerceptEvent:
    timestamp: int
    source: PerceptSource
    tags: Tuple[str, ...]
    text: str

    @property
    def failed(self) -> bool:
        return "failure" in self.tags


@dataclass(frozen=True)
class ExtrinsicReward:
    task_id: str
    success: bool
    latency: int  # virtual seconds since goal adoption
    cost: int  # primitive actions executed
    message: str

    def __post_init__(self):
        if self.latency < 0:
            raise ValueError("latency must be >= 0")


@dataclass(frozen=True)
class ActionRecord:
    at_seconds: int
    goal_id: Optional[str]
    action: Command
    ok: bool
    note: str = ""


class WiringError(RuntimeError):
    pass


def encode(observation: Observation) -> List[PerceptEvent]:
    """Tag an observation into percepts. Deterministic and total."""
    out: List[PerceptEvent] = []
    for entry in observation.feed:
        out.append(
            PerceptEvent(
                timestamp=observation.timestamp,
                source=PerceptSource.FEED,
                tags=(
                    f"emotion:{entry.emotion.value}",
                    f"activity:{entry.activity.value}",
                    f"idle:{entry.idle_minutes}",
                ),
                text=entry.to_json(),
            )
        )
    if observation.fresh:
        tags = [f"page:{observation.page}"]
        text = observation.title
        if observation.failure is not None:
            tags.append("failure")
            text = observation.failure
        if observation.results:
            tags.append(f"results:{len(observation.results)}")
            text = f"{observation.title}: top result {observation.results[0]}"
        if observation.extracted is not None:
            tags.append("extracted")
            text = observation.extracted
        out.append(PerceptEvent(observation.timestamp, PerceptSource.PAGE, tuple(tags), text))
    if observation.verifier is not None:
        v = observation.verifier
        out.append(
            PerceptEvent(
                observation.timestamp,
                PerceptSource.VERIFIER,
                (f"task:{v.task_id}", "success" if v.success else "failure"),
                v.message,
            )
        )
    return out


# verb -> number of env actions it expands to
EXPANSION_ARITY = {verb: (0 if verb is Verb.NOOP else 1) for verb in Verb}


class Actuator:
    """Fixed rule table mapping commands onto sandbox actions."""

    def __init__(self, env: Sandbox, broker: Optional[EventBroker] = None):
        self.env = env
        self.broker = broker
        self.log: List[ActionRecord] = []

    def expand(self, command: Command) -> List[Command]:
        if command.verb is Verb.NOOP:
            return []
        return [command]

    def actuate(
        self, command: Command, *, now: int, goal_id: Optional[str] = None
    ) -> Tuple[List[PerceptEvent], Optional[VerifierReport]]:
        percepts: List[PerceptEvent] = []
        report = None
        for action in self.expand(command):
            obs, rep = self.env.step(action)
            self.log.append(ActionRecord(now * 60, goal_id, action, obs.failure is None, obs.failure or ""))
            encoded = encode(obs)
            percepts.extend(encoded)
            if self.broker is not None:
                for p in encoded:
                    kind = EventKind.VERIFIER if p.source is PerceptSource.VERIFIER else EventKind.PERCEPT
                    self.broker.publish(kind, p if kind is EventKind.PERCEPT else rep, timestamp=now)
            if rep is not None:
                report = rep
            if obs.failure is not None:
                break
        return percepts, report

    def actions_for(self, goal_id: str) -> List[ActionRecord]:
        return [r for r in self.log if r.goal_id == goal_id]


def extrinsic_outcome(
    goal: Goal,
    verifier: VerifierReport,
    action_log: Sequence[ActionRecord],
    *,
    adopted_at: int,
    reported_at: int,
    broker: Optional[EventBroker] = None,
) -> ExtrinsicReward:
    """Reduce a verifier report plus the goal's action log to (success, latency, cost).

    ``adopted_at`` and ``reported_at`` are virtual seconds.
    """
    if verifier.task_id != goal.task_id:
        raise WiringError(f"report for {verifier.task_id!r} routed to goal on {goal.task_id!r}")
    cost = sum(1 for r in action_log if r.goal_id in (None, goal.id))
    reward = ExtrinsicReward(
        task_id=goal.task_id,
        success=verifier.success,
        latency=max(0, reported_at - adopted_at),
        cost=cost,
        message=verifier.message,
    )
    if broker is not None:
        broker.publish(EventKind.REWARD, reward, timestamp=reported_at // 60)
    return reward
