"""The always-on executive loop.

One loop iteration is one virtual minute. Each tick the world advances (feed
cadence, running timers), new observations are published on the event broker,
due events are drained in (priority, id) order, and the active goal gets at
most one command. When no goal is active the monitor picks the next one:
pending user directives first, then urgent intrinsic triggers, then idle-time
curiosity or housekeeping.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Deque, Dict, List, Optional, Sequence, Set, Union

from .backend import GenerationRequest, Role, ScriptedBackend
from .journal import EntryKind, Journal, JournalEntry, load_records, nightly_critique, replay_load, restore_self_model
from .kernel import (
    FEED_CADENCE,
    MINUTES_PER_DAY,
    Command,
    EventBroker,
    EventKind,
    ExecutiveContext,
    Goal,
    InvariantViolation,
    Origin,
    PerceptWindow,
    Verb,
    VirtualClock,
)
from .memory import Episode, MemoryStore
from .models import DEFAULT_CREED, SelfModel, UserModel, update_user
from .monitor import EpisodeLog, MetaDecision, Monitor, SearchBudget, Trigger, parse_reflection, reflect
from .reward import adjust_beta, evaluate_intrinsic, extrinsic_scalar, fuse
from .sandbox import Directive, Sandbox, Scenario, VerifierReport, load_scenario
from .system1 import Actuator, PerceptEvent, encode, extrinsic_outcome
from .system2 import PlanSource, Reasoner
from .templates import creed_section, render

logger = logging.getLogger(__name__)

MAX_COMMANDS = 24
DEFAULT_CHECKPOINTS = (0, 720, 1440, 2160)


@dataclass
class GoalRecord:
    """One adopted goal, as the live metrics see it."""

    goal_id: str
    adopted_at: int
    origin: str
    task_id: str
    tier: str
    trigger: str


@dataclass
class EpisodeRecord:
    goal_id: str
    adopted_at: int
    ended_at: int
    task_id: str
    tier: str
    origin: str
    success: bool
    steps: int
    source: str
    fused: float
    beta_after: float


@dataclass
class _Active:
    decision: MetaDecision
    adopted_at: int
    visited_before: frozenset
    pages: List[str] = field(default_factory=list)
    pending: Optional[Command] = None
    executed: int = 0
    aborting: bool = False

    @property
    def goal(self) -> Goal:
        return self.decision.goal


class Agent:
    def __init__(
        self,
        scenario: Union[Scenario, str, Path, dict],
        *,
        seed: int = 0,
        journal: Journal,
        backend=None,
        guardian=None,
        intrinsic: bool = True,
        duration: Optional[int] = None,
        resume_from: Optional[Union[str, Path]] = None,
        budget: SearchBudget = SearchBudget(),
        workers: int = 1,
    ):
        self.scenario = scenario if isinstance(scenario, Scenario) else load_scenario(scenario)
        self.seed = seed
        self.duration = int(duration if duration is not None else self.scenario.duration)
        if self.duration < 1:
            raise ValueError("duration must be >= 1")
        self.journal = journal
        self.intrinsic_enabled = intrinsic
        self.backend = backend or ScriptedBackend.from_scenario(self.scenario, seed=seed)

        creed = tuple(self.scenario.get("creed") or DEFAULT_CREED)
        beta = float(self.scenario.get("initial_beta", 0.5))
        self.memory = MemoryStore(persist=journal.persist_record)
        if resume_from is not None:
            self.self_model = restore_self_model(replay_load(resume_from), creed, beta)
            for record in load_records(resume_from):
                self.memory.add_record(record)
            logger.info("resumed %d capabilities and %d memories from %s",
                        len(self.self_model.capabilities), len(self.memory), resume_from)
        else:
            self.self_model = SelfModel(creed=creed, beta=beta)
        self.user = UserModel()

        self.clock = VirtualClock()
        self.broker = EventBroker(self.clock)
        self.env = Sandbox(self.scenario, seed)
        self.actuator = Actuator(self.env, self.broker)
        self.window = PerceptWindow(int(self.scenario.get("percept_window", 16)))
        self.reasoner = Reasoner(self.backend, self.memory, creed, seed=seed)
        cfg = dict(self.scenario.get("intrinsic") or {})
        self.cooldown = int(cfg.get("cooldown_minutes", 30))
        self.idle_threshold = int(cfg.get("idle_threshold", 15))
        self.monitor = Monitor(
            self.backend,
            self.self_model,
            self.scenario.tasks,
            guardian=guardian,
            budget=budget,
            identity=self.scenario.get("identity", "be a helpful, honest desk companion"),
            housekeeping=cfg.get("housekeeping", ()),
            seed=seed,
            workers=workers,
        )

        self.visited: Set[str] = {self.scenario.start_page}
        self.directives: Deque[Directive] = deque()
        self._directive_idx = 0
        self.active: Optional[_Active] = None
        self._last_end = -10 ** 9
        self.goals: List[GoalRecord] = []
        self.episodes: List[EpisodeRecord] = []
        self.entries: List[JournalEntry] = []
        self.beta_trajectory: List[float] = [self.self_model.beta]
        self.decisions: List[MetaDecision] = []
        self._critiqued: Set[int] = set()
        default = [c for c in DEFAULT_CHECKPOINTS if c <= self.duration] or [0]
        self.checkpoints = tuple(int(c) for c in (self.scenario.get("checkpoints") or default))

    # ------------------------------------------------------------------ helpers
    def context(self) -> ExecutiveContext:
        return ExecutiveContext(
            now=self.clock.now,
            pending_events=self.broker.pending(),
            active_goal=self.active.goal if self.active else None,
            percepts=self.window.snapshot(),
            beta=self.self_model.beta,
        )

    def _log(self, kind: EntryKind, body: str, goal_id: Optional[str] = None) -> None:
        entry = JournalEntry(self.clock.now, kind, body, goal_id)
        self.journal.append(entry)
        self.entries.append(entry)

    # ------------------------------------------------------------------ loop
    def run(self) -> "Agent":
        while True:
            self._tick()
            if self.clock.now + 1 >= self.duration:
                break
            self.broker.advance_clock()
        self._finish()
        return self

    def _tick(self) -> None:
        now = self.clock.now
        if now > 0 and now % FEED_CADENCE == 0:
            self.env.feed_tick(self.clock)
        report = self.env.tick(now)
        if report is not None:
            self.broker.publish(EventKind.VERIFIER, report)
        obs = self.env.observe()
        for entry in obs.feed:
            self.broker.publish(EventKind.FEED, entry)
        self.window.extend(encode(obs))
        scheduled = self.scenario.directives
        while self._directive_idx < len(scheduled) and scheduled[self._directive_idx].at <= now:
            self.broker.publish(EventKind.DIRECTIVE, scheduled[self._directive_idx])
            self._directive_idx += 1

        self._drain()
        self._act()
        self._drain()

        day = now // MINUTES_PER_DAY
        if (now + 1) % MINUTES_PER_DAY == 0 and now + 1 < self.duration:
            self._critique(day)

    def _drain(self) -> None:
        for event in self.broker.drain():
            kind, payload = event.kind, event.payload
            if kind is EventKind.FEED:
                update_user(self.user, payload)
            elif kind is EventKind.DIRECTIVE:
                self.directives.append(payload)
            elif kind is EventKind.PERCEPT:
                self.window.push(payload)
                if payload.failed and self.active is not None and not self.active.aborting:
                    self._on_failure(payload)
            elif kind is EventKind.VERIFIER:
                if self.active is not None and payload.task_id == self.active.goal.task_id:
                    self._end_episode(payload)
            elif kind is EventKind.REFLECTION_DUE:
                if self.active is not None and self.active.goal.id == payload:
                    self._abort("no parsable command after repeated attempts")
            # reward events are informational; the episode was scored synchronously

    # ------------------------------------------------------------------ acting
    def _act(self) -> None:
        if self.active is None:
            self._adopt_next()
            return
        a = self.active
        if a.aborting:
            return
        if a.pending is not None:
            command, a.pending = a.pending, None
            self._execute(command)
            return
        if self.env.timer_pending:
            return
        command, due = self.reasoner.next_command(self.window.snapshot())
        if due:
            self.broker.publish(EventKind.REFLECTION_DUE, a.goal.id)
            return
        self._execute(command)

    def _execute(self, command: Command) -> None:
        a = self.active
        if command.verb is Verb.NOOP:
            self._abort("plan exhausted before the verifier confirmed success")
            return
        if a.executed >= MAX_COMMANDS:
            self._abort(f"command budget of {MAX_COMMANDS} spent")
            return
        a.executed += 1
        percepts, _ = self.actuator.actuate(command, now=self.clock.now, goal_id=a.goal.id)
        ok = not any(p.failed for p in percepts)
        if ok:
            page = self.env.state.current_page
            a.pages.append(page)
            self.visited.add(page)
        note = next((p.text for p in percepts if p.failed), "")
        body = f"- command: {command}\n- ok: {str(ok).lower()}\n- source: {self.reasoner.source.value}"
        if note:
            body += f"\n- note: {note}"
        self._log(EntryKind.ACTION, body, a.goal.id)

    def _on_failure(self, percept: PerceptEvent) -> None:
        if self.reasoner.source is PlanSource.CACHED:
            logger.info("cached replay broke at t=%d (%s); planning fresh", self.clock.now, percept.text)
            command, due = self.reasoner.fallback_to_fresh(self.window.snapshot())
            if due:
                self.broker.publish(EventKind.REFLECTION_DUE, self.active.goal.id)
            else:
                self.active.pending = command
            return
        self._abort(f"action failed ({percept.text})")

    def _abort(self, reason: str) -> None:
        self.active.aborting = True
        report = self.env.abort_task(reason)
        if report is None:  # the verifier already closed the task
            report = VerifierReport(self.active.goal.task_id, False, f"Task {self.active.goal.task_id} failed: {reason}.")
        self.broker.publish(EventKind.VERIFIER, report)

    # ------------------------------------------------------------------ goals
    def _idle_ready(self) -> bool:
        entry = self.user.last_entry
        if entry is None or not entry.is_idle or entry.idle_minutes < self.idle_threshold:
            return False
        return self.clock.now - self._last_end >= self.cooldown

    def _adopt_next(self) -> None:
        now = self.clock.now
        if self.directives:
            directive = self.directives.popleft()
            decision = self.monitor.meta_step(directive_task=directive.task)
        elif self.intrinsic_enabled:
            trigger = self.monitor.urgent_trigger(self.user)
            if trigger is None and self._idle_ready():
                trigger = self.monitor.idle_trigger(sorted(self.visited))
            if trigger is None:
                return
            if trigger.tag() == "feed:stress":
                self.user.mark_stress_handled()
            elif trigger.tag() == "feed:reading_docs":
                self.user.interest_pending = False
            decision = self.monitor.meta_step(trigger=trigger)
        else:
            return
        self._check_decision(decision)
        self.decisions.append(decision)
        goal = decision.goal
        spec = self.scenario.tasks[goal.task_id]
        self.goals.append(GoalRecord(goal.id, now, goal.origin.value, goal.task_id, goal.difficulty.value,
                                     decision.trigger))
        lines = [
            f"goal: {goal.text}",
            f"- origin: {goal.origin.value}",
            f"- task: {goal.task_id}",
            f"- tier: {goal.difficulty.value}",
            f"- trigger: {decision.trigger}",
            f"- creed: {','.join(str(i) for i in sorted(goal.creed_refs))}",
            f"- adopted_at: {now}",
            f"- approach: {decision.approach}",
            f"- nodes: {len(decision.tree)}",
        ]
        if decision.trigger.startswith("gap:"):
            lines.append(f"- gap: {decision.trigger[4:]}")
        self._log(EntryKind.GOAL, "\n".join(lines), goal.id)

        self.env.begin_task(goal.task_id)
        self.active = _Active(decision, now, frozenset(self.visited))
        start = self.reasoner.plan_or_reuse(
            goal, self.window.snapshot(), self.user.last_entry,
            capabilities=self.self_model.capability_names, approach=decision.approach,
        )
        logger.debug("t=%d adopted %s (%s, %s) via %s", now, goal.id, goal.task_id, spec.tier.value,
                     start.source.value)
        if start.reflection_due:
            self.broker.publish(EventKind.REFLECTION_DUE, goal.id)
        else:
            self._execute(start.command)

    def _check_decision(self, decision: MetaDecision) -> None:
        if not decision.goal.creed_refs:
            raise InvariantViolation("system3", f"goal {decision.goal.id} admitted without a creed reference")
        for node in decision.path:
            if node.status.value == "pruned":
                raise InvariantViolation("system3", f"selected path of {decision.goal.id} has pruned node {node.id}")
        if not decision.tree.nodes[decision.node_id].is_leaf:
            raise InvariantViolation("system3", "selected node is not a leaf")

    # ------------------------------------------------------------------ episodes
    def _reflector_text(self, goal: Goal, report: VerifierReport) -> str:
        prompt = render(
            "reflector",
            {"role": "reflector", "task": goal.task_id, "success": str(report.success).lower()},
            goal=goal.text,
            outcome=report.message,
            beta=f"{self.self_model.beta:.2f}",
            creed=creed_section(self.self_model.creed, goal.creed_refs),
        )
        return self.backend.generate(GenerationRequest(Role.REFLECTOR, prompt, seed=self.seed)).text

    def _end_episode(self, report: VerifierReport) -> None:
        a, now = self.active, self.clock.now
        goal, decision = a.goal, a.decision
        spec = self.scenario.tasks[goal.task_id]
        outcome = extrinsic_outcome(goal, report, self.actuator.actions_for(goal.id),
                                    adopted_at=a.adopted_at * 60, reported_at=now * 60, broker=self.broker)
        ext = extrinsic_scalar(outcome.success, outcome.cost, outcome.latency)
        delta = self.self_model.record_outcome(spec.skill, outcome.success)

        text = self._reflector_text(goal, report)
        rationale, _ = parse_reflection(text)
        rationale = rationale or text.strip() or f"I recorded the outcome of {goal.task_id} honestly."
        if self.self_model.check_creed(rationale).violation:
            cited = min(goal.creed_refs)
            rationale = f"{rationale} This served [creed:{cited}]."
            text = f"rationale: {rationale}\n{text}"
        path = decision.path
        verdicts = [n.verdict.kind.value if n.verdict else None for n in path[1:]]
        intrinsic = evaluate_intrinsic(a.pages, a.visited_before, max(0.0, delta), verdicts, rationale)
        beta_before = self.self_model.beta
        hybrid = fuse(ext, intrinsic, beta_before, report.message)
        refl = reflect(EpisodeLog(goal.id, decision.tree, [n.id for n in path], hybrid.fused, text))
        if refl.beta_directive is not None:
            self.self_model.beta = adjust_beta(beta_before, refl.beta_directive)
        self.beta_trajectory.append(self.self_model.beta)

        steps = self.reasoner.steps
        source = self.reasoner.source or PlanSource.FRESH
        self.episodes.append(EpisodeRecord(goal.id, a.adopted_at, now, goal.task_id, goal.difficulty.value,
                                           goal.origin.value, outcome.success, steps, source.value,
                                           hybrid.fused, self.self_model.beta))
        self._log(EntryKind.REWARD, "\n".join([
            report.message,
            f"- task: {goal.task_id}",
            f"- origin: {goal.origin.value}",
            f"- tier: {goal.difficulty.value}",
            f"- adopted_at: {a.adopted_at}",
            f"- success: {str(outcome.success).lower()}",
            f"- plan_source: {source.value}",
            f"- steps: {steps}",
            f"- cost: {outcome.cost}",
            f"- latency_seconds: {outcome.latency}",
            f"- extrinsic: {ext:.4f}",
            f"- curiosity: {intrinsic.curiosity:.4f}",
            f"- mastery: {intrinsic.mastery:.4f}",
            f"- coherence: {intrinsic.coherence:.4f}",
            f"- intrinsic: {intrinsic.scalar:.4f}",
            f"- beta: {beta_before:.4f}",
            f"- fused: {hybrid.fused:.4f}",
            f"- creed: {','.join(str(i) for i in sorted(self.self_model.check_creed(rationale).ids))}",
            f"- rationale: {rationale}",
        ]), goal.id)
        body = [
            f"- patches: {len(refl.patches)}",
            f"- beta_before: {beta_before:.4f}",
            f"- beta_after: {self.self_model.beta:.4f}",
            f"- rationale: {refl.rationale or rationale}",
        ]
        body += [f"heuristic: {h}" for h in refl.heuristics]
        self._log(EntryKind.REFLECTION, "\n".join(body), goal.id)

        grant = spec.script.get("grants")
        if outcome.success and grant:
            note = dict(self.scenario.get("capability_notes") or {}).get(grant, "")
            if self.self_model.add_capability(grant, note):
                self._log(EntryKind.CAPABILITY, f"- capability: {grant}\n- note: {note or '-'}", goal.id)
            if decision.trigger.startswith("gap:"):
                self.self_model.reset_skill(decision.trigger[4:])

        trace = self.reasoner.trace(report.message).to_dict() if outcome.success and source is PlanSource.FRESH else None
        self.memory.commit(Episode(
            id=goal.id,
            timestamp=now,
            goal=goal,
            observations=[p.text for p in self.window.snapshot()],
            actions=[str(r.action) for r in self.actuator.actions_for(goal.id)],
            rewards=[hybrid.fused],
            commands=self.reasoner.commands,
            success=outcome.success,
            markers=frozenset({goal.task_id, goal.origin.value, goal.difficulty.value}),
            signature=self.reasoner.signature,
            trace=trace,
        ))
        for rec_id, score, loaded in self.memory.retrieval_log:
            if loaded != (score >= self.memory.threshold):
                raise InvariantViolation("memory", f"record {rec_id} lazy-load flag disagrees with score {score}")
        self.memory.cache.evict(goal.id)
        self.reasoner.finish()
        self.active = None
        self._last_end = now

    # ------------------------------------------------------------------ nightly
    def _critique(self, day: int, runtime: Optional[int] = None, extra=None) -> None:
        if day in self._critiqued:
            return
        self._critiqued.add(day)
        day_entries = [e for e in self.entries if e.day == day]
        entry = nightly_critique(day, day_entries, self.backend, self.self_model.creed,
                                 timestamp=self.clock.now, runtime_minutes=runtime, extra=extra,
                                 seed=self.seed)
        self.journal.append(entry)
        self.entries.append(entry)

    def _finish(self) -> None:
        self._critique(self.clock.now // MINUTES_PER_DAY, runtime=self.duration,
                       extra={"checkpoints": ",".join(str(c) for c in self.checkpoints)})
