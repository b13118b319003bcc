"""Deterministic offline browser sandbox.

The world is a finite page graph with named elements. Transitions are pure
functions over an immutable :class:`EnvState`; the only randomness is the
seeded fill of the synthetic user-behaviour feed.

Scenario descriptor (JSON)::

    {
      "name": str,
      "duration": int,                      # virtual minutes
      "start_page": str,                    # default "home"
      "pages": {page_id: {"title": str, "text": str, "explorable": bool,
                          "search": bool,
                          "elements": {name: {"text": str, "link": page_id,
                                              "kind": "button|text|image"}}}},
      "search_index": {keyword: [page_id, ...]},
      "tasks": [TaskSpec, ...],
      "feed": [{"start": int, "end": int, "emotion": str | [str],
                "activity": str | [str], "idle_minutes": int}, ...],
      "directives": [{"at": int, "task": task_id, "text": str}, ...],
      ...agent-side keys (creed, intrinsic, checkpoints, initial_beta)
    }

TaskSpec::

    {"id": str, "description": str, "goal": str, "min_steps": int,
     "verifier": {"marks": [str], "activity": {page_id: seconds}},
     "trigger": {"type": "directive|feed|gap|curiosity|housekeeping", ...},
     "skill": str, "script": {...}}
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Any, Dict, Mapping, Optional, Tuple, Union

from .kernel import FEED_CADENCE, Command, Tier, Verb, VirtualClock


class ScenarioError(ValueError):
    """Malformed scenario. ``field`` names the offending key path."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class MissingPages(ScenarioError):
    def __init__(self):
        super().__init__("pages", "scenario has no page graph")


class CadenceError(RuntimeError):
    pass


class Emotion(str, Enum):
    CALM = "calm"
    STRESSED = "stressed"
    NEUTRAL = "neutral"


class Activity(str, Enum):
    IDLE = "idle"
    READING_DOCS = "reading_docs"
    TYPING = "typing"
    AWAY = "away"


_IDLE_ACTIVITIES = (Activity.IDLE, Activity.AWAY)


@dataclass(frozen=True)
class UserFeedEntry:
    timestamp: int
    emotion: Emotion = Emotion.NEUTRAL
    activity: Activity = Activity.IDLE
    idle_minutes: int = 0

    def to_json(self) -> str:
        return json.dumps(
            {
                "timestamp": self.timestamp,
                "emotion": self.emotion.value,
                "activity": self.activity.value,
                "idle_minutes": self.idle_minutes,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "UserFeedEntry":
        raw = json.loads(text)
        return cls(
            timestamp=int(raw["timestamp"]),
            emotion=Emotion(raw.get("emotion", "neutral")),
            activity=Activity(raw.get("activity", "idle")),
            idle_minutes=int(raw.get("idle_minutes", 0)),
        )

    @property
    def is_idle(self) -> bool:
        return self.activity in _IDLE_ACTIVITIES


@dataclass(frozen=True)
class Element:
    name: str
    text: str = ""
    link: Optional[str] = None
    kind: str = "button"


@dataclass(frozen=True)
class Page:
    id: str
    title: str
    text: str
    elements: Mapping[str, Element]
    explorable: bool = False
    search: bool = False


@dataclass(frozen=True)
class Predicate:
    """Declarative success condition over the marks of the active task."""

    marks: frozenset = frozenset()
    activity: Tuple[Tuple[str, int], ...] = ()

    def holds(self, state: "EnvState") -> bool:
        if not self.marks <= state.marks:
            return False
        done = dict(state.activity)
        return all(done.get(page, 0) >= secs for page, secs in self.activity)


@dataclass(frozen=True)
class TaskSpec:
    id: str
    description: str
    min_steps: int
    verifier: Predicate
    trigger: Mapping[str, Any]
    goal: str = ""
    skill: str = "general"
    script: Mapping[str, Any] = field(default_factory=dict)

    @property
    def tier(self) -> Tier:
        return Tier.from_steps(self.min_steps)

    @property
    def trigger_type(self) -> str:
        return self.trigger.get("type", "directive")


@dataclass(frozen=True)
class VerifierReport:
    task_id: str
    success: bool
    message: str

    def __post_init__(self):
        if not self.message.strip():
            raise ValueError("verifier message must be non-empty")


@dataclass(frozen=True)
class FeedSpan:
    start: int
    end: int
    fields: Mapping[str, Any]

    def covers(self, t: int) -> bool:
        return self.start <= t <= self.end


@dataclass(frozen=True)
class Directive:
    at: int
    task: str
    text: str = ""


@dataclass(frozen=True)
class Scenario:
    name: str
    duration: int
    start_page: str
    pages: Mapping[str, Page]
    search_index: Mapping[str, Tuple[str, ...]]
    tasks: Mapping[str, TaskSpec]
    feed: Tuple[FeedSpan, ...]
    directives: Tuple[Directive, ...]
    raw: Mapping[str, Any]

    def get(self, key: str, default=None):
        return self.raw.get(key, default)


@dataclass(frozen=True)
class Observation:
    timestamp: int
    page: str
    title: str
    text: str
    elements: Tuple[str, ...]
    feed: Tuple[UserFeedEntry, ...] = ()
    failure: Optional[str] = None
    results: Tuple[str, ...] = ()
    extracted: Optional[str] = None
    fresh: bool = False
    verifier: Optional[VerifierReport] = None


@dataclass(frozen=True)
class EnvState:
    scenario: Scenario = field(repr=False)
    current_page: str
    now: int = 0
    pending_timers: Tuple[Tuple[str, int], ...] = ()
    feed_log: Tuple[UserFeedEntry, ...] = ()
    feed_cursor: int = 0
    rng_state: Any = field(default=None, repr=False)
    active_task: Optional[str] = None
    marks: frozenset = frozenset()
    activity: Tuple[Tuple[str, int], ...] = ()
    last_results: Tuple[str, ...] = ()

    @property
    def page_graph(self) -> Mapping[str, Page]:
        return self.scenario.pages


# --------------------------------------------------------------------------
# scenario loading


def _require(raw: Mapping, key: str, where: str, kind=None):
    if key not in raw:
        raise ScenarioError(f"{where}{key}", "missing required field")
    value = raw[key]
    if kind is not None and not isinstance(value, kind):
        raise ScenarioError(f"{where}{key}", f"expected {getattr(kind, '__name__', kind)}")
    return value


def _parse_pages(raw_pages: Mapping) -> Dict[str, Page]:
    pages = {}
    for pid, spec in raw_pages.items():
        where = f"pages.{pid}"
        if not isinstance(spec, dict):
            raise ScenarioError(where, "page must be an object")
        elements = {}
        for name, el in (spec.get("elements") or {}).items():
            el = el or {}
            elements[name] = Element(
                name=name, text=el.get("text", ""), link=el.get("link"), kind=el.get("kind", "button")
            )
        pages[pid] = Page(
            id=pid,
            title=spec.get("title", pid),
            text=spec.get("text", ""),
            elements=MappingProxyType(elements),
            explorable=bool(spec.get("explorable", False)),
            search=bool(spec.get("search", False)),
        )
    for pid, page in pages.items():
        for el in page.elements.values():
            if el.link is not None and el.link not in pages:
                raise ScenarioError(f"pages.{pid}.elements.{el.name}.link", f"unknown page {el.link!r}")
    return pages


def _parse_task(raw: Mapping, idx: int, pages: Mapping[str, Page]) -> TaskSpec:
    where = f"tasks[{idx}]."
    tid = _require(raw, "id", where, str)
    min_steps = _require(raw, "min_steps", where, int)
    if min_steps < 1:
        raise ScenarioError(f"{where}min_steps", "must be >= 1")
    ver = _require(raw, "verifier", where, dict)
    activity = tuple(sorted((str(p), int(s)) for p, s in (ver.get("activity") or {}).items()))
    for page, _ in activity:
        if page not in pages:
            raise ScenarioError(f"{where}verifier.activity", f"unknown page {page!r}")
    predicate = Predicate(marks=frozenset(ver.get("marks") or ()), activity=activity)
    if not predicate.marks and not predicate.activity:
        raise ScenarioError(f"{where}verifier", "empty predicate")
    return TaskSpec(
        id=tid,
        description=raw.get("description", tid),
        min_steps=min_steps,
        verifier=predicate,
        trigger=MappingProxyType(dict(raw.get("trigger") or {"type": "directive"})),
        goal=raw.get("goal", raw.get("description", tid)),
        skill=raw.get("skill", "general"),
        script=MappingProxyType(dict(raw.get("script") or {})),
    )


def _explore_task(page: Page) -> TaskSpec:
    target = next((e for e in page.elements.values() if e.kind == "text"), None)
    marks = {f"opened:{page.id}"}
    plan = [f'open("{page.id}")']
    if target is not None:
        marks.add(f"extracted:{page.id}:{target.name}")
        plan.append(f"extract({target.name})")
    return TaskSpec(
        id=f"explore:{page.id}",
        description=f"Explore {page.title}",
        min_steps=len(plan),
        verifier=Predicate(marks=frozenset(marks)),
        trigger=MappingProxyType({"type": "curiosity", "page": page.id}),
        goal=f"Explore the unvisited page '{page.title}' and note one new fact for the user [creed:3]",
        skill="exploration",
        script=MappingProxyType({"plan": plan, "deliberation": 6}),
    )


def parse_scenario(raw: Mapping[str, Any]) -> Scenario:
    if not isinstance(raw, Mapping):
        raise ScenarioError("<root>", "scenario must be an object")
    if not raw.get("pages"):
        raise MissingPages()
    name = raw.get("name", "unnamed")
    duration = int(raw.get("duration", 2160))
    if duration < 1:
        raise ScenarioError("duration", "must be >= 1")
    pages = _parse_pages(raw["pages"])
    start = raw.get("start_page", "home")
    if start not in pages:
        raise ScenarioError("start_page", f"unknown page {start!r}")

    tasks: Dict[str, TaskSpec] = {}
    for i, t in enumerate(raw.get("tasks") or ()):
        if not isinstance(t, dict):
            raise ScenarioError(f"tasks[{i}]", "task must be an object")
        spec = _parse_task(t, i, pages)
        if spec.id in tasks:
            raise ScenarioError(f"tasks[{i}].id", f"duplicate task id {spec.id!r}")
        tasks[spec.id] = spec
    for page in pages.values():
        if page.explorable:
            spec = _explore_task(page)
            tasks.setdefault(spec.id, spec)

    feed = []
    for i, span in enumerate(raw.get("feed") or ()):
        where = f"feed[{i}]."
        start_t = _require(span, "start", where, int)
        end_t = _require(span, "end", where, int)
        if end_t < start_t:
            raise ScenarioError(f"{where}end", "end precedes start")
        fields = {k: v for k, v in span.items() if k not in ("start", "end")}
        for key, value in fields.items():
            options = value if isinstance(value, list) else [value]
            try:
                if key == "emotion":
                    [Emotion(v) for v in options]
                elif key == "activity":
                    [Activity(v) for v in options]
                elif key == "idle_minutes":
                    if not all(isinstance(v, int) and v >= 0 for v in options):
                        raise ValueError
                else:
                    raise ScenarioError(f"{where}{key}", "unknown feed field")
            except ValueError:
                raise ScenarioError(f"{where}{key}", f"invalid value {value!r}") from None
        feed.append(FeedSpan(start_t, end_t, MappingProxyType(fields)))

    directives = []
    for i, d in enumerate(raw.get("directives") or ()):
        where = f"directives[{i}]."
        at = _require(d, "at", where, int)
        task = _require(d, "task", where, str)
        if task not in tasks:
            raise ScenarioError(f"{where}task", f"unknown task {task!r}")
        directives.append(Directive(at, task, d.get("text", "")))
    directives.sort(key=lambda d: d.at)

    index = {k.lower(): tuple(v) for k, v in (raw.get("search_index") or {}).items()}
    for k, targets in index.items():
        for pid in targets:
            if pid not in pages:
                raise ScenarioError(f"search_index.{k}", f"unknown page {pid!r}")

    return Scenario(
        name=name,
        duration=duration,
        start_page=start,
        pages=MappingProxyType(pages),
        search_index=MappingProxyType(index),
        tasks=MappingProxyType(tasks),
        feed=tuple(feed),
        directives=tuple(directives),
        raw=MappingProxyType(dict(raw)),
    )


BUILTIN_SCENARIOS = ("paper-36h", "recurring-stress", "curriculum", "demo")


def load_scenario(source: Union[str, Path, Mapping[str, Any]]) -> Scenario:
    """Load a scenario from a mapping, a JSON file path, or a builtin name."""
    if isinstance(source, Mapping):
        return parse_scenario(source)
    if isinstance(source, str) and source in BUILTIN_SCENARIOS:
        text = (resources.files("persistent_agent") / "scenarios" / f"{source}.json").read_text("utf-8")
    else:
        text = Path(source).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("<root>", f"invalid JSON: {exc}") from None
    return parse_scenario(raw)


# --------------------------------------------------------------------------
# transitions


def reset(scenario: Union[Scenario, Mapping, str, Path], seed: int) -> EnvState:
    if not isinstance(scenario, Scenario):
        scenario = load_scenario(scenario)
    rng = random.Random(seed)
    return EnvState(scenario=scenario, current_page=scenario.start_page, rng_state=rng.getstate())


def begin_task(state: EnvState, task_id: str) -> EnvState:
    if task_id not in state.scenario.tasks:
        raise KeyError(f"unknown task {task_id!r}")
    return replace(state, active_task=task_id, marks=frozenset(), activity=())


def abort_task(state: EnvState, reason: str) -> Tuple[EnvState, Optional[VerifierReport]]:
    if state.active_task is None:
        return state, None
    report = VerifierReport(state.active_task, False, f"Task {state.active_task} failed: {reason}.")
    return replace(state, active_task=None, pending_timers=()), report


def _verify(state: EnvState) -> Tuple[EnvState, Optional[VerifierReport]]:
    if state.active_task is None:
        return state, None
    spec = state.scenario.tasks[state.active_task]
    if not spec.verifier.holds(state):
        return state, None
    report = VerifierReport(spec.id, True, f"Task {spec.id} succeeded: {spec.description}.")
    return replace(state, active_task=None), report


def _page_obs(state: EnvState, **extra) -> Observation:
    page = state.page_graph[state.current_page]
    return Observation(
        timestamp=state.now,
        page=page.id,
        title=page.title,
        text=page.text,
        elements=tuple(sorted(page.elements)),
        **extra,
    )


def _fail(state: EnvState, message: str) -> Tuple[EnvState, Observation, None]:
    return state, _page_obs(state, failure=message, fresh=True), None


def step(state: EnvState, action: Command) -> Tuple[EnvState, Observation, Optional[VerifierReport]]:
    """Apply one primitive action. Bad targets yield a failure observation."""
    verb, arg = action.verb, action.argument
    pages = state.page_graph
    page = pages[state.current_page]
    extra: Dict[str, Any] = {}
    marks = set(state.marks)

    if verb is Verb.OPEN:
        target = arg
        if arg == "topResult":
            if not state.last_results:
                return _fail(state, "no search results to open")
            target = state.last_results[0]
        if target not in pages:
            return _fail(state, f"page not found: {arg}")
        state = replace(state, current_page=target)
        marks.add(f"opened:{target}")
    elif verb is Verb.CLICK:
        el = page.elements.get(arg)
        if el is None:
            return _fail(state, "element not found")
        marks.add(f"clicked:{page.id}:{arg}")
        if el.link is not None:
            state = replace(state, current_page=el.link)
            marks.add(f"opened:{el.link}")
    elif verb is Verb.TYPE:
        marks.add(f"typed:{page.id}")
        if page.search:
            results = _search(state, arg)
            state = replace(state, last_results=results)
            marks.add(f"searched:{arg.lower()}")
            extra["results"] = results
    elif verb is Verb.SEARCH:
        search_page = next((p for p in pages.values() if p.search), None)
        if search_page is None:
            return _fail(state, "no search page in this sandbox")
        results = _search(state, arg)
        state = replace(state, current_page=search_page.id, last_results=results)
        marks.update({f"opened:{search_page.id}", f"typed:{search_page.id}", f"searched:{arg.lower()}"})
        extra["results"] = results
    elif verb is Verb.WAIT:
        state = replace(state, pending_timers=state.pending_timers + ((page.id, int(arg)),))
    elif verb is Verb.EXTRACT:
        el = page.elements.get(arg)
        if el is None:
            return _fail(state, "element not found")
        if el.kind == "image":
            return _fail(state, f"element {arg} has no text layer")
        marks.add(f"extracted:{page.id}:{arg}")
        extra["extracted"] = el.text
    elif verb is Verb.NOOP:
        pass
    else:  # pragma: no cover - Verb is closed
        raise ValueError(verb)

    state = replace(state, marks=frozenset(marks))
    state, report = _verify(state)
    return state, _page_obs(state, fresh=True, verifier=report, **extra), report


def _search(state: EnvState, query: str) -> Tuple[str, ...]:
    q = query.lower()
    hits = []
    for keyword in sorted(state.scenario.search_index):
        if keyword in q or q in keyword:
            for pid in state.scenario.search_index[keyword]:
                if pid not in hits:
                    hits.append(pid)
    return tuple(hits)


def tick(state: EnvState, now: int, seconds: int = 60) -> Tuple[EnvState, Optional[VerifierReport]]:
    """Advance pending timers by one clock tick and re-run the verifier."""
    state = replace(state, now=now)
    if not state.pending_timers:
        return state, None
    remaining = []
    activity = dict(state.activity)
    for page, left in state.pending_timers:
        spent = min(left, seconds)
        activity[page] = activity.get(page, 0) + spent
        if left - spent > 0:
            remaining.append((page, left - spent))
    state = replace(state, pending_timers=tuple(remaining), activity=tuple(sorted(activity.items())))
    return _verify(state)


def _draw(rng: random.Random, value):
    if isinstance(value, list):
        return value[rng.randrange(len(value))]
    return value


def feed_tick(state: EnvState, clock: Union[VirtualClock, int]) -> EnvState:
    """Append exactly one feed entry for the current cadence slot."""
    now = clock.now if isinstance(clock, VirtualClock) else int(clock)
    if now % FEED_CADENCE != 0:
        raise CadenceError(f"feed_tick called off-cadence at t={now}")
    prev = state.feed_log[-1] if state.feed_log else None
    if prev is not None and now != prev.timestamp + FEED_CADENCE:
        raise CadenceError(f"feed entry at t={now} does not follow t={prev.timestamp}")

    rng = random.Random()
    rng.setstate(state.rng_state)
    chosen: Dict[str, Any] = {}
    origin: Dict[str, int] = {}
    for span in state.scenario.feed:
        if span.covers(now):
            for key, value in span.fields.items():
                chosen[key] = value
                origin[key] = span.start
    emotion = Emotion(_draw(rng, chosen.get("emotion", "neutral")))
    activity = Activity(_draw(rng, chosen.get("activity", "idle")))
    if "idle_minutes" in chosen:
        idle = int(_draw(rng, chosen["idle_minutes"])) + (now - origin["idle_minutes"])
    elif activity in _IDLE_ACTIVITIES:
        idle = (prev.idle_minutes if prev is not None and prev.is_idle else 0) + FEED_CADENCE
    else:
        idle = 0
    entry = UserFeedEntry(now, emotion, activity, idle)
    return replace(state, now=now, feed_log=state.feed_log + (entry,), rng_state=rng.getstate())


def observe(state: EnvState) -> Observation:
    """Read-only projection: current page plus feed entries not yet delivered."""
    return _page_obs(state, feed=state.feed_log[state.feed_cursor :])


def acknowledge_feed(state: EnvState) -> EnvState:
    return replace(state, feed_cursor=len(state.feed_log))


class Sandbox:
    """Mutable holder around the pure transition functions, used by the loop."""

    def __init__(self, scenario: Union[Scenario, Mapping, str, Path], seed: int):
        self.state = reset(scenario, seed)

    @property
    def scenario(self) -> Scenario:
        return self.state.scenario

    def step(self, action: Command) -> Tuple[Observation, Optional[VerifierReport]]:
        self.state, obs, report = step(self.state, action)
        return obs, report

    def tick(self, now: int) -> Optional[VerifierReport]:
        self.state, report = tick(self.state, now)
        return report

    def feed_tick(self, clock: VirtualClock) -> None:
        self.state = feed_tick(self.state, clock)

    def observe(self) -> Observation:
        obs = observe(self.state)
        self.state = acknowledge_feed(self.state)
        return obs

    def begin_task(self, task_id: str) -> None:
        self.state = begin_task(self.state, task_id)

    def abort_task(self, reason: str) -> Optional[VerifierReport]:
        self.state, report = abort_task(self.state, reason)
        return report

    @property
    def timer_pending(self) -> bool:
        return bool(self.state.pending_timers)
