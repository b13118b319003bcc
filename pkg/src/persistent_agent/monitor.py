"""Executive monitor: thought search, process supervision, reflection, goals.

The monitor realises the meta-policy that maps (executive context, memory,
self-model) onto a triple (goal, intrinsic-reward spec, beta). Candidate
approaches are grown as a tree of thoughts, each node critiqued by a guardian
model as soon as it appears; the best surviving leaf wins.
"""

from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from .backend import BackendUnavailable, GenerationRequest, Role, parse_scored_lines
from .kernel import Goal, Origin, Tier
from .models import CapabilityGap, SelfModel, UserModel, detect_gap
from .reward import BetaDirective, parse_beta_directive
from .templates import creed_section, render

logger = logging.getLogger(__name__)

PATCH_TOLERANCE = 0.3


class EmptyFrontier(RuntimeError):
    """Every leaf of the thought tree was pruned."""


class GoalRejected(ValueError):
    """A goal that cites no creed may not be admitted."""


class NodeStatus(str, Enum):
    OPEN = "open"
    PRUNED = "pruned"
    ANNOTATED = "annotated"
    SELECTED = "selected"


class VerdictKind(str, Enum):
    SOUND = "sound"
    MINOR_DEFECT = "minor-defect"
    UNSOUND = "unsound"


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    text: str = ""


@dataclass
class ThoughtNode:
    id: int
    parent: Optional[int]
    plan: str
    value: float
    depth: int = 0
    status: NodeStatus = NodeStatus.OPEN
    verdict: Optional[Verdict] = None
    annotation: str = ""
    children: List[int] = field(default_factory=list)
    expanded: bool = False

    @property
    def is_leaf(self) -> bool:
        return not self.children


class ThoughtTree:
    def __init__(self, root_plan: str, root_value: float = 0.0):
        self.nodes: Dict[int, ThoughtNode] = {}
        self.root = self._new(None, root_plan, root_value, 0).id

    def _new(self, parent: Optional[int], plan: str, value: float, depth: int) -> ThoughtNode:
        node = ThoughtNode(len(self.nodes), parent, plan, value, depth)
        self.nodes[node.id] = node
        return node

    def add(self, parent: int, plan: str, value: float) -> ThoughtNode:
        p = self.nodes[parent]
        if p.status is NodeStatus.PRUNED:
            raise ValueError("pruned nodes cannot have children")
        node = self._new(parent, plan, value, p.depth + 1)
        p.children.append(node.id)
        return node

    def leaves(self) -> List[ThoughtNode]:
        return [n for n in self.nodes.values() if n.is_leaf]

    def live_leaves(self) -> List[ThoughtNode]:
        return [n for n in self.leaves() if n.status is not NodeStatus.PRUNED]

    def frontier(self) -> List[ThoughtNode]:
        return [
            n for n in self.nodes.values()
            if not n.expanded and n.status in (NodeStatus.OPEN, NodeStatus.ANNOTATED)
        ]

    def path(self, node_id: int) -> List[ThoughtNode]:
        out = []
        cur: Optional[int] = node_id
        while cur is not None:
            out.append(self.nodes[cur])
            cur = self.nodes[cur].parent
        return out[::-1]

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class SearchBudget:
    max_expansions: int = 32
    branching: int = 3
    tau_util: float = 0.8

    def __post_init__(self):
        if self.max_expansions < 1 or self.branching < 1:
            raise ValueError("budget and branching must be positive")
        if not 0.0 < self.tau_util < 1.0:
            raise ValueError("tau_util must lie in (0, 1)")


@dataclass(frozen=True)
class ExpandResult:
    expansions: int
    halted_by: str  # "threshold" | "budget" | "frontier"


def best_of(nodes: Sequence[ThoughtNode]) -> ThoughtNode:
    return min(nodes, key=lambda n: (-n.value, n.id))


# --------------------------------------------------------------------------
# process supervision

_VERDICT = re.compile(r"verdict:\s*(sound|minor-defect|unsound)\s*(?:\|\s*(?:directive|reason):\s*(.*))?", re.I)


def parse_verdict(text: str) -> Optional[Verdict]:
    m = _VERDICT.search(text)
    if m is None:
        return None
    return Verdict(VerdictKind(m.group(1).lower()), (m.group(2) or "").strip())


def guardian_prompt(node: ThoughtNode, goal_text: str, creed: Sequence[str], creed_refs=()) -> str:
    ids = creed_refs or range(1, len(creed) + 1)
    return render("guardian", {"role": "guardian"}, creed=creed_section(creed, ids), goal=goal_text, node=node.plan)


def judge(node: ThoughtNode, guardian, *, goal_text: str = "", creed: Sequence[str] = (),
          creed_refs=(), seed: int = 0) -> Verdict:
    """Ask the guardian about a node without touching it. Safe to call from workers."""
    try:
        resp = guardian.generate(
            GenerationRequest(Role.GUARDIAN, guardian_prompt(node, goal_text, creed, creed_refs), seed=seed)
        )
        verdict = parse_verdict(resp.text)
    except Exception as exc:  # noqa: BLE001 - fail safe on any guardian error
        logger.warning("guardian failed on node %d: %s", node.id, exc)
        verdict = None
    return verdict if verdict is not None else Verdict(VerdictKind.MINOR_DEFECT, "re-verify")


def apply_verdict(node: ThoughtNode, verdict: Verdict) -> None:
    node.verdict = verdict
    if verdict.kind is VerdictKind.UNSOUND:
        node.status = NodeStatus.PRUNED
    elif verdict.kind is VerdictKind.MINOR_DEFECT:
        node.status = NodeStatus.ANNOTATED
        node.annotation = verdict.text or "re-verify"


def supervise(node: ThoughtNode, guardian, **kwargs) -> Verdict:
    """Critique a fresh node. Unsound prunes it; guardian trouble never passes as sound."""
    verdict = judge(node, guardian, **kwargs)
    apply_verdict(node, verdict)
    return verdict


# --------------------------------------------------------------------------
# thought search


def _search_prompt(node: ThoughtNode, goal: Goal, creed: Sequence[str], branching: int) -> str:
    tags = {
        "role": "planner",
        "mode": "search",
        "task": goal.task_id,
        "depth": node.depth,
        "value": f"{node.value:.2f}",
        "parent": node.plan,
    }
    return render(
        "thought_search", tags, goal=goal.text, creed=creed_section(creed, goal.creed_refs),
        parent=node.plan, branching=branching,
    )


def expand(tree: ThoughtTree, backend, budget: SearchBudget, *, goal: Goal, creed: Sequence[str] = (),
           guardian=None, seed: int = 0, workers: int = 1) -> ExpandResult:
    """Beam-style growth from the best open node until a leaf beats tau or budget runs out."""
    guardian = guardian or backend
    expansions = 0
    if not tree.frontier():
        raise ValueError("tree has no open node to expand")
    while expansions < budget.max_expansions:
        frontier = tree.frontier()
        if not frontier:
            return ExpandResult(expansions, "frontier")
        node = best_of(frontier)
        node.expanded = True
        expansions += 1
        try:
            resp = backend.generate(
                GenerationRequest(Role.PLANNER, _search_prompt(node, goal, creed, budget.branching), seed=seed)
            )
            proposals = parse_scored_lines(resp.text)[: budget.branching]
            if not proposals:
                raise ValueError("no scored proposals in response")
        except (BackendUnavailable, ValueError) as exc:
            node.status = NodeStatus.ANNOTATED
            node.annotation = f"defect: expansion failed ({exc})"
            continue
        children = [tree.add(node.id, text, value) for value, text in proposals]

        kwargs = dict(goal_text=goal.text, creed=creed, creed_refs=goal.creed_refs, seed=seed)
        if workers > 1 and len(children) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                verdicts = list(pool.map(lambda c: judge(c, guardian, **kwargs), children))
        else:
            verdicts = [judge(c, guardian, **kwargs) for c in children]
        for child, verdict in zip(children, verdicts):  # merged in node-id order
            apply_verdict(child, verdict)
        if any(leaf.value > budget.tau_util for leaf in tree.live_leaves()):
            return ExpandResult(expansions, "threshold")
    return ExpandResult(expansions, "budget")


def select(tree: ThoughtTree) -> ThoughtNode:
    """Argmax of V-hat over unpruned leaves; ties go to the smallest id."""
    leaves = tree.live_leaves()
    if not leaves:
        raise EmptyFrontier("all leaves pruned")
    return best_of(leaves)


# --------------------------------------------------------------------------
# decisions


@dataclass(frozen=True)
class IntrinsicSpec:
    curiosity: float = 1 / 3
    mastery: float = 1 / 3
    coherence: float = 1 / 3
    rationale: str = ""


@dataclass(frozen=True)
class MetaDecision:
    goal: Goal
    intrinsic: IntrinsicSpec
    beta: float
    node_id: int
    tree: ThoughtTree = field(repr=False, compare=False)
    trigger: str = ""

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta outside [0, 1]")
        if not self.goal.creed_refs:
            raise GoalRejected("decision goal carries no creed reference")

    @property
    def path(self) -> List[ThoughtNode]:
        return self.tree.path(self.node_id)

    @property
    def approach(self) -> str:
        return self.tree.nodes[self.node_id].plan


@dataclass(frozen=True)
class ReflectionReport:
    episode_id: str
    pairs: Tuple[Tuple[int, float, float], ...]
    patches: Tuple[Tuple[int, float, float], ...]
    heuristics: Tuple[str, ...]
    beta_directive: Optional[BetaDirective]
    rationale: str


@dataclass
class EpisodeLog:
    episode_id: str
    tree: Optional[ThoughtTree]
    path: Sequence[int]
    realized: float
    reflector_text: str = ""


def parse_reflection(text: str) -> Tuple[str, Tuple[str, ...]]:
    rationale, heuristics = "", []
    for line in text.splitlines():
        if line.startswith("rationale:"):
            rationale = line[len("rationale:"):].strip()
        elif line.startswith("heuristic:"):
            heuristics.append(line[len("heuristic:"):].strip())
    return rationale, tuple(heuristics)


def reflect(log: EpisodeLog) -> ReflectionReport:
    """Post-mortem over the surviving path: patch mispredicted nodes, keep heuristics."""
    pairs, patches = [], []
    if log.tree is not None:
        for nid in log.path:
            node = log.tree.nodes[nid]
            if node.parent is None:
                continue
            pairs.append((nid, node.value, log.realized))
            if abs(node.value - log.realized) > PATCH_TOLERANCE:
                patches.append((nid, node.value, log.realized))
                node.value = log.realized
                node.annotation = (node.annotation + "; " if node.annotation else "") + "patched by reflection"
    rationale, heuristics = parse_reflection(log.reflector_text)
    directive = parse_beta_directive(rationale) if rationale else None
    return ReflectionReport(log.episode_id, tuple(pairs), tuple(patches), heuristics, directive, rationale)


# --------------------------------------------------------------------------
# goal generation


@dataclass(frozen=True)
class Trigger:
    kind: str  # directive | feed | gap | curiosity | housekeeping
    task_id: str
    detail: str = ""

    @property
    def urgent(self) -> bool:
        return self.kind in ("directive", "feed", "gap")

    def tag(self) -> str:
        return f"{self.kind}:{self.detail}" if self.detail else self.kind


class Monitor:
    """Stateful wrapper around the meta-policy for one run."""

    def __init__(self, backend, self_model: SelfModel, tasks: Mapping[str, Any], *,
                 guardian=None, budget: SearchBudget = SearchBudget(), identity: str = "",
                 housekeeping: Sequence[str] = (), seed: int = 0, workers: int = 1):
        self.backend = backend
        self.guardian = guardian or backend
        self.self_model = self_model
        self.tasks = tasks
        self.budget = budget
        self.identity = identity
        self.housekeeping = tuple(t for t in housekeeping if t in tasks) or tuple(
            tid for tid, t in tasks.items() if t.trigger_type == "housekeeping"
        )
        self.seed = seed
        self.workers = workers
        self._goal_seq = 0
        self._house_idx = 0

    # -- triggers
    def _feed_task(self, **match) -> Optional[str]:
        for tid, spec in self.tasks.items():
            trig = spec.trigger
            if trig.get("type") == "feed" and all(trig.get(k) == v for k, v in match.items()):
                return tid
        return None

    def _gap_task(self, skill: str) -> Optional[str]:
        for tid, spec in self.tasks.items():
            if spec.trigger.get("type") == "gap" and spec.trigger.get("skill") == skill:
                return tid
        return None

    def urgent_trigger(self, user: UserModel) -> Optional[Trigger]:
        if user.stress_armed:
            tid = self._feed_task(emotion="stressed")
            if tid:
                return Trigger("feed", tid, "stress")
        if user.interest_pending:
            tid = self._feed_task(activity="reading_docs")
            if tid:
                return Trigger("feed", tid, "reading_docs")
        gap = self.capability_gap()
        if gap is not None:
            return Trigger("gap", self._gap_task(gap.skill), gap.skill)
        return None

    def capability_gap(self) -> Optional[CapabilityGap]:
        for skill in sorted(self.self_model.outcomes):
            gap = detect_gap(self.self_model, skill)
            if gap is not None and self._gap_task(skill) is not None:
                return gap
        return None

    def idle_trigger(self, visited: Sequence[str]) -> Trigger:
        seen = set(visited)
        for tid in sorted(self.tasks):
            spec = self.tasks[tid]
            if spec.trigger.get("type") == "curiosity" and spec.trigger.get("page") not in seen:
                return Trigger("curiosity", tid, spec.trigger["page"])
        return self.housekeeping_trigger()

    def housekeeping_trigger(self) -> Trigger:
        if not self.housekeeping:
            raise LookupError("scenario defines no housekeeping task")
        tid = self.housekeeping[self._house_idx % len(self.housekeeping)]
        self._house_idx += 1
        return Trigger("housekeeping", tid)

    # -- goals
    def _next_id(self) -> str:
        self._goal_seq += 1
        return f"g-{self._goal_seq:04d}"

    def write_goal(self, trigger: Trigger, origin: Origin) -> Goal:
        prompt = render(
            "goal_writer",
            {"role": "goal-writer", "trigger": trigger.tag(), "task": trigger.task_id},
            identity=self.identity,
            trigger=trigger.tag(),
            creed=creed_section(self.self_model.creed, range(1, 6)),
        )
        resp = self.backend.generate(GenerationRequest(Role.GOAL_WRITER, prompt, seed=self.seed))
        text = next((ln[5:].strip() for ln in resp.text.splitlines() if ln.startswith("goal:")), resp.text.strip())
        spec = self.tasks[trigger.task_id]
        return Goal(
            id=self._next_id(),
            text=text,
            origin=origin,
            creed_refs=self.self_model.check_creed(text).ids,
            task_id=trigger.task_id,
            difficulty=spec.tier,
        )

    def generate_goal(self, user: UserModel, visited: Sequence[str]) -> Tuple[Goal, Trigger]:
        trigger = self.urgent_trigger(user) or self.idle_trigger(visited)
        return self.write_goal(trigger, Origin.INTRINSIC), trigger

    def admit(self, goal: Goal) -> Goal:
        if not goal.creed_refs or self.self_model.check_creed(goal.text).violation:
            raise GoalRejected(f"goal {goal.id} cites no creed: {goal.text!r}")
        return goal

    # -- meta step
    def _decide(self, goal: Goal, tau: float, seed: int, trigger: str) -> MetaDecision:
        tree = ThoughtTree(goal.text)
        budget = SearchBudget(self.budget.max_expansions, self.budget.branching, tau)
        expand(tree, self.backend, budget, goal=goal, creed=self.self_model.creed,
               guardian=self.guardian, seed=seed, workers=self.workers)
        node = select(tree)
        node.status = NodeStatus.SELECTED
        return MetaDecision(
            goal=goal,
            intrinsic=IntrinsicSpec(rationale=node.plan),
            beta=self.self_model.beta,
            node_id=node.id,
            tree=tree,
            trigger=trigger,
        )

    def meta_step(self, *, directive_task: Optional[str] = None, user: Optional[UserModel] = None,
                  visited: Sequence[str] = (), trigger: Optional[Trigger] = None) -> MetaDecision:
        """Pick the next goal and approach.

        Extrinsic directives pass through with origin=extrinsic; otherwise an
        intrinsic goal is generated. An empty frontier earns one retry with a
        relaxed threshold, then falls back to housekeeping.
        """
        if directive_task is not None:
            trigger = Trigger("directive", directive_task)
            goal = self.write_goal(trigger, Origin.EXTRINSIC)
        else:
            if trigger is None:
                trigger = self.urgent_trigger(user or UserModel()) or self.idle_trigger(visited)
            goal = self.write_goal(trigger, Origin.INTRINSIC)
        try:
            self.admit(goal)
            try:
                return self._decide(goal, self.budget.tau_util, self.seed, trigger.tag())
            except EmptyFrontier:
                logger.info("empty frontier for %s; retrying with relaxed threshold", goal.id)
                return self._decide(goal, self.budget.tau_util / 2, self.seed + 1, trigger.tag())
        except (EmptyFrontier, GoalRejected) as exc:
            logger.info("falling back to housekeeping: %s", exc)
            fallback = self.housekeeping_trigger()
            goal = self.admit(self.write_goal(fallback, Origin.INTRINSIC))
            return self._decide(goal, self.budget.tau_util, self.seed, fallback.tag())
