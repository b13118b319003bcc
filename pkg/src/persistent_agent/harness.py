"""Scenario runner and metrics.

Three metric families come out of every run:

* task provenance: extrinsic vs intrinsic goal counts per 6-virtual-hour segment
  (by adoption time);
* success by tier: success rate of each tier's episodes adopted within
  +/-180 minutes of each checkpoint (``None`` when the window is empty);
* reasoning cost: per-episode reasoning steps for every task that ran at
  least twice.

Metrics are computed twice, once from the live run and once from the journal
alone, and the two must agree.

CSV layout for ``export_csv(metrics, "m.csv")``::

    m.csv           segment_start,extrinsic,intrinsic
    m_tiers.csv     checkpoint,tier,episodes,successes,rate
    m_steps.csv     task,episode,steps
    m_summary.csv   key,value   (total_runtime, total_tasks)
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from .agent import DEFAULT_CHECKPOINTS, Agent
from .backend import RemoteBackend
from .journal import EntryKind, Journal, JournalError, replay_load
from .kernel import InvariantViolation
from .sandbox import Scenario, load_scenario

logger = logging.getLogger(__name__)

SEGMENT = 360
WINDOW = 180
TIERS = ("easy", "medium", "hard")


@dataclass(frozen=True)
class TierRate:
    checkpoint: int
    tier: str
    episodes: int
    successes: int

    @property
    def rate(self) -> Optional[float]:
        return self.successes / self.episodes if self.episodes else None


@dataclass(frozen=True)
class RunMetrics:
    segments: Tuple[Tuple[int, int, int], ...] = ()
    tier_success: Tuple[TierRate, ...] = ()
    recurring_steps: Tuple[Tuple[str, Tuple[int, ...]], ...] = ()
    total_runtime: int = 0
    total_tasks: int = 0

    def __post_init__(self):
        counted = sum(e + i for _, e, i in self.segments)
        if counted != self.total_tasks:
            raise InvariantViolation("harness", f"segments hold {counted} tasks, total says {self.total_tasks}")
        for t in self.tier_success:
            if not 0 <= t.successes <= t.episodes:
                raise InvariantViolation("harness", f"bad tier counts {t}")

    def tier_rate(self, checkpoint: int, tier: str) -> Optional[float]:
        for t in self.tier_success:
            if t.checkpoint == checkpoint and t.tier == tier:
                return t.rate
        raise KeyError((checkpoint, tier))

    def steps_for(self, task: str) -> Tuple[int, ...]:
        return dict(self.recurring_steps).get(task, ())


def build_metrics(
    goals: Iterable[Tuple[int, str]],
    episodes: Iterable[Tuple[int, str, str, bool, int]],
    duration: int,
    checkpoints: Sequence[int] = DEFAULT_CHECKPOINTS,
) -> RunMetrics:
    """``goals``: (adopted_at, origin); ``episodes``: (adopted_at, task, tier, success, steps)."""
    goals, episodes = list(goals), list(episodes)
    n_seg = -(-duration // SEGMENT) if duration > 0 else 0
    counts = [[0, 0] for _ in range(n_seg)]
    for at, origin in goals:
        seg = counts[min(at // SEGMENT, n_seg - 1)]
        seg[0 if origin == "extrinsic" else 1] += 1
    segments = tuple((i * SEGMENT, e, n) for i, (e, n) in enumerate(counts))

    tiers = []
    for cp in checkpoints:
        for tier in TIERS:
            hits = [ok for at, _, t, ok, _ in episodes if t == tier and abs(at - cp) <= WINDOW]
            tiers.append(TierRate(cp, tier, len(hits), sum(hits)))

    by_task: Dict[str, List[int]] = {}
    for _, task, _, _, steps in episodes:
        by_task.setdefault(task, []).append(steps)
    recurring = tuple((task, tuple(s)) for task, s in sorted(by_task.items()) if len(s) >= 2)
    return RunMetrics(segments, tuple(tiers), recurring, duration, len(goals))


def live_metrics(agent: Agent) -> RunMetrics:
    return build_metrics(
        ((g.adopted_at, g.origin) for g in agent.goals),
        ((e.adopted_at, e.task_id, e.tier, e.success, e.steps) for e in agent.episodes),
        agent.duration,
        agent.checkpoints,
    )


def compute_metrics(directory: Union[str, Path]) -> RunMetrics:
    """Recompute metrics from journal entries only."""
    entries = replay_load(directory)
    goals, episodes = [], []
    duration, checkpoints = 0, DEFAULT_CHECKPOINTS
    for e in entries:
        f = e.fields()
        if e.kind is EntryKind.GOAL:
            goals.append((int(f["adopted_at"]), f["origin"]))
        elif e.kind is EntryKind.REWARD:
            episodes.append((int(f["adopted_at"]), f["task"], f["tier"], f["success"] == "true", int(f["steps"])))
        elif e.kind is EntryKind.CRITIQUE and "runtime_minutes" in f:
            duration = int(f["runtime_minutes"])
            if f.get("checkpoints"):
                checkpoints = tuple(int(c) for c in f["checkpoints"].split(","))
    if not goals and not episodes and duration == 0:
        return RunMetrics()
    return build_metrics(goals, episodes, duration, checkpoints)


# --------------------------------------------------------------------------
# CSV


def _siblings(path: Path) -> Dict[str, Path]:
    return {k: path.with_name(f"{path.stem}_{k}{path.suffix or '.csv'}") for k in ("tiers", "steps", "summary")}


def _write(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def export_csv(metrics: RunMetrics, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    side = _siblings(path)
    _write(path, ("segment_start", "extrinsic", "intrinsic"), metrics.segments)
    _write(side["tiers"], ("checkpoint", "tier", "episodes", "successes", "rate"),
           ((t.checkpoint, t.tier, t.episodes, t.successes, "" if t.rate is None else f"{t.rate:.6f}")
            for t in metrics.tier_success))
    _write(side["steps"], ("task", "episode", "steps"),
           ((task, i + 1, s) for task, steps in metrics.recurring_steps for i, s in enumerate(steps)))
    rows = [("total_runtime", metrics.total_runtime), ("total_tasks", metrics.total_tasks)] if metrics.segments else []
    _write(side["summary"], ("key", "value"), rows)
    return path


def _read(path: Path) -> List[Dict[str, str]]:
    with path.open(encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def load_csv(path: Union[str, Path]) -> RunMetrics:
    path = Path(path)
    side = _siblings(path)
    segments = tuple((int(r["segment_start"]), int(r["extrinsic"]), int(r["intrinsic"])) for r in _read(path))
    tiers = tuple(TierRate(int(r["checkpoint"]), r["tier"], int(r["episodes"]), int(r["successes"]))
                  for r in _read(side["tiers"])) if side["tiers"].exists() else ()
    steps: Dict[str, List[int]] = {}
    if side["steps"].exists():
        for r in _read(side["steps"]):
            steps.setdefault(r["task"], []).append(int(r["steps"]))
    summary = {r["key"]: int(r["value"]) for r in _read(side["summary"])} if side["summary"].exists() else {}
    return RunMetrics(
        segments,
        tiers,
        tuple((k, tuple(v)) for k, v in steps.items()),
        summary.get("total_runtime", 0),
        summary.get("total_tasks", 0),
    )


# --------------------------------------------------------------------------
# runs


@dataclass
class RunResult:
    metrics: RunMetrics
    journal_dir: Path
    agent: Agent


def make_backend(kind: Union[str, object], scenario: Scenario, seed: int):
    if not isinstance(kind, str):
        return kind
    if kind == "scripted":
        return None  # the agent builds the scripted backend from the scenario
    if kind == "remote":
        return RemoteBackend(temperature=0.0)
    raise ValueError(f"unknown backend {kind!r}")


def run_scenario(
    scenario: Union[str, Path, Scenario, dict],
    *,
    seed: int = 0,
    out: Union[str, Path],
    duration: Optional[int] = None,
    intrinsic: bool = True,
    backend: Union[str, object] = "scripted",
    resume_from: Optional[Union[str, Path]] = None,
    metrics_csv: Optional[Union[str, Path]] = None,
    workers: int = 1,
) -> RunResult:
    """Run one scenario end to end and audit the journal against the live metrics."""
    scenario = scenario if isinstance(scenario, Scenario) else load_scenario(scenario)
    out = Path(out)
    if out.exists() and any(out.iterdir()):
        raise JournalError(f"{out} already holds files; pick an empty journal directory")
    journal = Journal(out)
    agent = Agent(scenario, seed=seed, journal=journal, backend=make_backend(backend, scenario, seed),
                  intrinsic=intrinsic, duration=duration, resume_from=resume_from, workers=workers)
    agent.run()
    live = live_metrics(agent)
    audited = compute_metrics(out)
    if audited != live:
        raise InvariantViolation("harness", "metrics recomputed from the journal differ from the live run")
    if metrics_csv is not None:
        export_csv(live, metrics_csv)
    logger.info("run %s seed=%d: %d tasks over %d minutes", scenario.name, seed, live.total_tasks, live.total_runtime)
    return RunResult(live, out, agent)
