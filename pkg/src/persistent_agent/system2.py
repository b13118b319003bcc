"""Deliberate reasoner: prompt assembly, command parsing and forward-learning reuse.

The reasoner holds no learnable parameters. Its behaviour changes only through
what episodic memory returns, so a cached trace whose signature matches the
current situation is replayed verbatim instead of deliberating afresh.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .backend import REPLAY_LINES, GenerationRequest, Role
from .kernel import Command, Goal, Verb
from .memory import MemoryStore, RetrievalResult, signature_for
from .templates import bullets, creed_section, render

logger = logging.getLogger(__name__)

MAX_PARSE_FAILURES = 3


class ParseError(ValueError):
    pass


class PlanSource(str, Enum):
    CACHED = "cached"
    FRESH = "fresh"


class ScratchPad:
    """Goal-scoped list of reasoning lines; one line is one reasoning step."""

    def __init__(self, capacity: int = 64):
        self.capacity = capacity
        self.lines: List[str] = []
        self.steps = 0

    def append(self, line: str) -> None:
        self.steps += 1
        self.lines.append(line)
        if len(self.lines) > self.capacity:
            self.lines.pop(0)

    def clear(self) -> None:
        self.lines.clear()
        self.steps = 0


@dataclass(frozen=True)
class ReasoningTrace:
    goal: str
    task_id: str
    context: str
    chain_of_thought: Tuple[str, ...]
    commands: Tuple[str, ...]
    outcome: str
    signature: Tuple[Any, ...]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "goal": self.goal,
            "task_id": self.task_id,
            "context": self.context,
            "chain_of_thought": list(self.chain_of_thought),
            "commands": list(self.commands),
            "outcome": self.outcome,
            "signature": list(self.signature),
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "ReasoningTrace":
        return cls(
            goal=d["goal"],
            task_id=d["task_id"],
            context=d["context"],
            chain_of_thought=tuple(d["chain_of_thought"]),
            commands=tuple(d["commands"]),
            outcome=d["outcome"],
            signature=tuple(d["signature"]),
        )


# --------------------------------------------------------------------------
# parsing

_BLOCK = re.compile(r"```action[ \t]*\n(.*?)```", re.S)
_CALL = re.compile(r"^(\w+)\((.*)\)\s*;?$", re.S)
_WAIT = re.compile(r"^(\d+)\s*(s|sec|m|min)?$")


def _argument(raw: str) -> str:
    raw = raw.strip()
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
        return raw[1:-1].replace('\\"', '"').replace("\\'", "'")
    return raw


def parse_call(text: str) -> Command:
    """Parse a single ``verb(arg)`` call into a :class:`Command`."""
    m = _CALL.match(text.strip())
    if m is None:
        raise ParseError(f"not a command: {text!r}")
    verb_name, raw = m.group(1).lower(), m.group(2)
    try:
        verb = Verb(verb_name)
    except ValueError:
        raise ParseError(f"unknown verb {verb_name!r}") from None
    if verb is Verb.NOOP:
        return Command(Verb.NOOP)
    if verb is Verb.WAIT:
        w = _WAIT.match(_argument(raw))
        if w is None:
            raise ParseError(f"bad wait duration {raw!r}")
        secs = int(w.group(1)) * (60 if (w.group(2) or "s").startswith("m") else 1)
        if secs <= 0:
            raise ParseError("wait duration must be positive")
        return Command(Verb.WAIT, secs)
    try:
        return Command(verb, _argument(raw))
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def parse_command(raw: str, pad: Optional[ScratchPad] = None) -> Command:
    """Extract the single command in the fenced ``action`` block.

    Lines outside the block are reasoning steps and go onto ``pad``.
    """
    blocks = _BLOCK.findall(raw)
    if len(blocks) != 1:
        raise ParseError("expected exactly one ```action block" if blocks else "no action block")
    body = [ln for ln in blocks[0].splitlines() if ln.strip()]
    if len(body) != 1:
        raise ParseError(f"action block must hold one command, found {len(body)}")
    command = parse_call(body[0])
    if pad is not None:
        outside = _BLOCK.sub("", raw)
        for line in outside.splitlines():
            if line.strip():
                pad.append(line.strip())
    return command


# --------------------------------------------------------------------------
# prompts


def assemble_prompt(
    goal: Goal,
    pad: ScratchPad,
    percepts: Sequence[Any],
    *,
    creed: Sequence[str],
    capabilities: Sequence[str] = (),
    memories: Sequence[str] = (),
    reuse: Optional[str] = None,
    approach: str = "",
    step: int = 0,
) -> str:
    tags = {
        "role": "planner",
        "mode": "act",
        "task": goal.task_id,
        "step": step,
        "caps": "|".join(capabilities),
    }
    reuse_section = ""
    if reuse:
        reuse_section = (
            "\n## Reuse prior plan\n"
            "A previously successful trace matches this situation:\n"
            f"{reuse}\n"
        )
    return render(
        "planner_act",
        tags,
        goal=goal.text,
        creed=creed_section(creed, goal.creed_refs),
        capabilities=bullets(capabilities),
        approach=approach or "(none)",
        pad=bullets(pad.lines),
        percepts=bullets(f"{p.source.value}: {p.text}" for p in percepts),
        memories=bullets(memories),
        reuse=reuse_section,
    )


# --------------------------------------------------------------------------
# the reasoner


@dataclass
class PlanStart:
    source: PlanSource
    command: Command
    signature: tuple
    reflection_due: bool = False


class Reasoner:
    """Turns the active goal into one command per call.

    ``retrieve`` is consulted once per goal; the fresh path queries the planner
    role each call, the cached path pops commands from a replayed trace.
    """

    def __init__(self, backend, memory: MemoryStore, creed: Sequence[str], seed: int = 0,
                 retrieval_k: Optional[int] = None, retrieval_threshold: Optional[float] = None):
        self.backend = backend
        self.memory = memory
        self.creed = tuple(creed)
        self.seed = seed
        self.k = retrieval_k
        self.threshold = retrieval_threshold
        self.pad = ScratchPad()
        self.goal: Optional[Goal] = None
        self.source: Optional[PlanSource] = None
        self.signature: tuple = ()
        self.commands: List[Command] = []
        self._queue: List[Command] = []
        self._step = 0
        self._parse_failures = 0
        self._memories: List[str] = []
        self._reuse: Optional[str] = None
        self._approach = ""
        self._capabilities: Tuple[str, ...] = ()
        self.last_retrieval: RetrievalResult = RetrievalResult()

    def update_hook(self, *args, **kwargs) -> None:
        """Policy-gradient hook. Runtime parameter updates are disabled by design."""
        raise NotImplementedError("no parameter updates happen at runtime")

    # -- lifecycle
    def plan_or_reuse(self, goal: Goal, percepts: Sequence[Any], feed_entry, *,
                      capabilities: Sequence[str] = (), approach: str = "") -> PlanStart:
        self.pad.clear()
        self.goal = goal
        self.commands = []
        self._queue = []
        self._step = 0
        self._parse_failures = 0
        self._approach = approach
        self._capabilities = tuple(capabilities)
        self.signature = signature_for(goal, feed_entry)
        self.last_retrieval = self.memory.retrieve(goal.text, k=self.k, threshold=self.threshold)
        self._memories = [hit.record.summary for hit in self.last_retrieval]
        self._percepts = tuple(percepts)

        trace = self.memory.lookup_trace(self.signature)
        if trace is not None:
            try:
                queue = [parse_call(c) for c in trace["commands"]]
            except ParseError:
                queue = []
            if queue:
                self.source = PlanSource.CACHED
                self._reuse = " -> ".join(trace["commands"])
                for line in REPLAY_LINES:
                    self.pad.append(line)
                self._queue = queue
                return PlanStart(PlanSource.CACHED, self._pop(), self.signature)
        self.source = PlanSource.FRESH
        self._reuse = None
        command, due = self._fresh()
        return PlanStart(PlanSource.FRESH, command, self.signature, due)

    def fallback_to_fresh(self, percepts: Sequence[Any] = ()) -> Tuple[Command, bool]:
        """Abandon a broken replay and plan from scratch."""
        self.source = PlanSource.FRESH
        self._queue = []
        self._reuse = None
        self._step = 0
        self._percepts = tuple(percepts)
        return self._fresh()

    def next_command(self, percepts: Sequence[Any] = ()) -> Tuple[Command, bool]:
        """Next command, plus whether a reflection-due event should be raised."""
        if self.source is PlanSource.CACHED:
            if self._queue:
                return self._pop(), False
            return Command(Verb.NOOP), False
        self._percepts = tuple(percepts) or self._percepts
        return self._fresh()

    def _pop(self) -> Command:
        cmd = self._queue.pop(0)
        self.commands.append(cmd)
        return cmd

    def prompt(self) -> str:
        return assemble_prompt(
            self.goal,
            self.pad,
            self._percepts,
            creed=self.creed,
            capabilities=self._capabilities,
            memories=self._memories,
            reuse=self._reuse,
            approach=self._approach,
            step=self._step,
        )

    def _fresh(self) -> Tuple[Command, bool]:
        response = self.backend.generate(
            GenerationRequest(Role.PLANNER, self.prompt(), seed=self.seed)
        )
        try:
            command = parse_command(response.text, self.pad)
        except ParseError as exc:
            self._parse_failures += 1
            logger.info("parse failure %d on goal %s: %s", self._parse_failures, self.goal.id, exc)
            if self._parse_failures >= MAX_PARSE_FAILURES:
                self._parse_failures = 0
                return Command(Verb.NOOP), True
            return self._fresh()
        self._parse_failures = 0
        self._step += 1
        self.commands.append(command)
        return command, False

    @property
    def steps(self) -> int:
        return self.pad.steps

    def trace(self, outcome: str) -> ReasoningTrace:
        return ReasoningTrace(
            goal=self.goal.text,
            task_id=self.goal.task_id,
            context="|".join(str(x) for x in self.signature),
            chain_of_thought=tuple(self.pad.lines),
            commands=tuple(str(c) for c in self.commands if c.verb is not Verb.NOOP),
            outcome=outcome,
            signature=tuple(self.signature),
        )

    def finish(self) -> None:
        self.pad.clear()
        self.goal = None
        self.source = None
        self._queue = []
