"""Pluggable cognition backends.

Two implementations share one interface:

* :class:`ScriptedBackend` answers from a rule table built from the scenario's
  task scripts. Responses depend only on (role, prompt tags, seed).
* :class:`RemoteBackend` speaks a minimal JSON-over-HTTP protocol::

      POST <url>
      Authorization: Bearer <token>            (optional)
      {"role": "planner", "prompt": "...", "max_length": 1024, "temperature": 0.0}

      200 OK
      {"text": "...", "value": 0.8}             ("value" optional)

Prompts carry a first line ``#tags: key=value; key=value`` that the scripted
backend keys on. Remote models may ignore it.
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Mapping, Optional, Protocol, Sequence

logger = logging.getLogger(__name__)

URL_ENV = "PERSISTENT_AGENT_BACKEND_URL"
TOKEN_ENV = "PERSISTENT_AGENT_BACKEND_TOKEN"


class Role(str, Enum):
    PLANNER = "planner"
    GUARDIAN = "guardian"
    REFLECTOR = "reflector"
    GOAL_WRITER = "goal-writer"


class BackendUnavailable(RuntimeError):
    pass


@dataclass(frozen=True)
class GenerationRequest:
    role: Role
    prompt: str
    max_length: int = 1024
    temperature: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "role", Role(self.role))


@dataclass(frozen=True)
class GenerationResponse:
    text: str
    value: Optional[float] = None


@dataclass(frozen=True)
class HealthStatus:
    healthy: bool
    latency_ms: Optional[float] = None
    reason: str = ""


class Backend(Protocol):
    def generate(self, request: GenerationRequest) -> GenerationResponse: ...

    def healthcheck(self) -> HealthStatus: ...


_TAG_LINE = re.compile(r"^#tags:(.*)$", re.M)


def render_tags(tags: Mapping[str, object]) -> str:
    parts = []
    for key in sorted(tags):
        value = str(tags[key]).replace(";", ",").replace("\n", " ")
        parts.append(f"{key}={value}")
    return "#tags: " + "; ".join(parts)


def parse_tags(prompt: str) -> Dict[str, str]:
    m = _TAG_LINE.search(prompt)
    if m is None:
        return {}
    tags = {}
    for chunk in m.group(1).split(";"):
        if "=" in chunk:
            k, v = chunk.split("=", 1)
            tags[k.strip()] = v.strip()
    return tags


# Response grammars -----------------------------------------------------------

_SCORED_LINE = re.compile(r"^\s*-?\s*\[(\d*\.?\d+)\]\s*(.+?)\s*$")
_VERDICT = re.compile(r"^verdict:\s*(sound|minor-defect|unsound)\s*(?:\|\s*(directive|reason):\s*(.*))?$", re.M)
_ACTION_BLOCK = re.compile(r"```action\s*\n(.*?)\n?```", re.S)


def parse_scored_lines(text: str):
    """``[0.92] plan text`` lines -> list of (value, text)."""
    out = []
    for line in text.splitlines():
        m = _SCORED_LINE.match(line)
        if m:
            out.append((min(1.0, max(0.0, float(m.group(1)))), m.group(2)))
    return out


def conforms(role: Role, text: str) -> bool:
    """Grammar check for a response of the given role."""
    role = Role(role)
    if role is Role.GUARDIAN:
        return _VERDICT.search(text) is not None
    if role is Role.PLANNER:
        return bool(_ACTION_BLOCK.search(text)) or bool(parse_scored_lines(text))
    if role is Role.GOAL_WRITER:
        return any(line.startswith("goal:") for line in text.splitlines())
    return any(line.startswith(("rationale:", "note:")) for line in text.splitlines())


# Scripted backend -------------------------------------------------------------

DELIBERATION = (
    "Restate the goal and the creed it serves.",
    "Check the newest feed entry for the user's state.",
    "List the pages that could satisfy the goal.",
    "Recall which tools are available on each page.",
    "Consider whether the user would welcome an interruption.",
    "Estimate how many actions the task needs.",
    "Identify the element that starts the activity.",
    "Check that the element exists before acting on it.",
    "Decide how long the activity must run for the verifier.",
    "Anticipate failure modes and how to recover from them.",
    "Compare the plan against the creed once more.",
    "Prefer the shortest plan that the verifier can confirm.",
    "Order the actions so each precondition holds.",
    "Confirm the plan needs no privileged access.",
    "Commit to the first action of the plan.",
)

REPLAY_LINES = (
    "Retrieved a successful trace with a matching signature from episodic memory.",
    "The current feed matches the stored context, so the trace applies.",
    "Replay the cached plan without fresh deliberation.",
)

_DEFAULT_DELIBERATION = 6


class ScriptedBackend:
    """Deterministic backend driven by per-task scripts.

    ``scripts`` maps task id to its script mapping; ``notes`` maps a capability
    name to the sentence the nightly critique should record for it.
    """

    def __init__(self, scripts: Mapping[str, Mapping], notes: Optional[Mapping[str, str]] = None,
                 goals: Optional[Mapping[str, str]] = None, seed: int = 0):
        self._scripts = {k: dict(v) for k, v in scripts.items()}
        self._notes = dict(notes or {})
        self._goals = dict(goals or {})
        self.seed = seed

    @classmethod
    def from_scenario(cls, scenario, seed: int = 0) -> "ScriptedBackend":
        return cls(
            {tid: dict(spec.script, description=spec.description, creed=spec.script.get("creed", 1))
             for tid, spec in scenario.tasks.items()},
            notes=scenario.get("capability_notes", {}),
            goals={tid: spec.goal for tid, spec in scenario.tasks.items()},
            seed=seed,
        )

    def healthcheck(self) -> HealthStatus:
        return HealthStatus(True, 0.0, "scripted")

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        tags = parse_tags(request.prompt)
        handler = {
            Role.PLANNER: self._planner,
            Role.GUARDIAN: self._guardian,
            Role.REFLECTOR: self._reflector,
            Role.GOAL_WRITER: self._goal_writer,
        }[request.role]
        return handler(tags, request.prompt)

    # -- planner
    def _script(self, tags) -> dict:
        return self._scripts.get(tags.get("task", ""), {})

    def plan_for(self, task_id: str, capabilities: Sequence[str]) -> list:
        script = self._scripts.get(task_id, {})
        needed = script.get("requires_capability")
        if needed and needed not in capabilities:
            return list(script.get("fallback_plan", script.get("plan", [])))
        return list(script.get("plan", []))

    def _planner(self, tags, prompt) -> GenerationResponse:
        script = self._script(tags)
        if tags.get("mode") == "search":
            depth = int(tags.get("depth", "0"))
            if depth == 0:
                approaches = script.get("approaches") or [
                    [0.9, f"Work through the task ({script.get('description', tags.get('task', 'unnamed'))}) "
                          "step by step, confirming progress with the verifier"]
                ]
                lines = [f"- [{v:.2f}] {t}" for v, t in approaches]
            else:
                parent_v = float(tags.get("value", "0"))
                parent = tags.get("parent", "the parent plan").replace("{trap}", "").strip()
                lines = [f"- [{min(1.0, parent_v + 0.1):.2f}] {parent}; confirm progress with the verifier"]
            text = "\n".join(lines)
            return GenerationResponse(text, max(v for v, _ in parse_scored_lines(text)))

        caps = [c for c in tags.get("caps", "").split("|") if c]
        plan = self.plan_for(tags.get("task", ""), caps)
        k = int(tags.get("step", "0"))
        command = plan[k] if k < len(plan) else "noop()"
        lines = []
        if k == 0:
            n = int(script.get("deliberation", _DEFAULT_DELIBERATION))
            reasoning = list(script.get("reasoning") or DELIBERATION)
            for i in range(n):
                line = reasoning[i % len(reasoning)]
                lines.append(line if i < len(reasoning) else f"{line} (pass {i // len(reasoning) + 1})")
        lines.append("```action")
        lines.append(command)
        lines.append("```")
        return GenerationResponse("\n".join(lines))

    # -- guardian
    def _guardian(self, tags, prompt) -> GenerationResponse:
        node = prompt.split("## Node", 1)[-1]
        if "{trap}" in node:
            return GenerationResponse("verdict: unsound | reason: violates creed [creed:1]")
        if "{unchecked}" in node:
            return GenerationResponse(
                "verdict: minor-defect | directive: check that the target element exists before acting"
            )
        return GenerationResponse("verdict: sound")

    # -- reflector
    def _reflector(self, tags, prompt) -> GenerationResponse:
        if tags.get("mode") == "critique":
            added = [c for c in tags.get("added", "").split("|") if c]
            lines = [f"note: {self._notes[c]}" for c in added if c in self._notes]
            if not lines:
                lines = ["note: I kept an honest record of the day [creed:5]."]
            return GenerationResponse("\n".join(lines))
        script = self._script(tags)
        desc = script.get("description", tags.get("task", "the task"))
        creed = script.get("creed", 1)
        if tags.get("success") == "true":
            rationale = script.get("rationale") or f"I kept faith with Creed [creed:{creed}] by completing {desc}."
        else:
            rationale = script.get("failure_rationale") or (
                f"I fell short on {desc}; Creed [creed:1] asks me to record that honestly and learn from it."
            )
        lines = [f"rationale: {rationale}"]
        for h in script.get("heuristics", ()):
            lines.append(f"heuristic: {h}")
        return GenerationResponse("\n".join(lines))

    # -- goal writer
    def _goal_writer(self, tags, prompt) -> GenerationResponse:
        task = tags.get("task", "")
        text = self._goals.get(task) or f"Look after the desk and my records [creed:5]"
        if tags.get("trigger", "").startswith("gap:"):
            skill = tags["trigger"][4:]
            if f"master the {skill}" not in text:
                text = f"master the {skill}: {text}"
        return GenerationResponse(f"goal: {text}")


# Remote backend ---------------------------------------------------------------


class RemoteBackend:
    """Generic JSON-over-HTTP model endpoint with a timeout and one retry."""

    def __init__(self, url: Optional[str] = None, token: Optional[str] = None,
                 timeout: float = 30.0, retries: int = 1, temperature: Optional[float] = None):
        self.url = url or os.environ.get(URL_ENV)
        self.token = token if token is not None else os.environ.get(TOKEN_ENV)
        self.timeout = timeout
        self.retries = retries
        self.temperature = temperature
        if not self.url:
            raise BackendUnavailable(f"no endpoint configured; set {URL_ENV}")

    def _post(self, payload: dict) -> dict:
        data = json.dumps(payload).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        req = urllib.request.Request(self.url, data=data, headers=headers, method="POST")
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            return json.loads(resp.read().decode("utf-8"))

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        temperature = request.temperature if self.temperature is None else self.temperature
        payload = {
            "role": request.role.value,
            "prompt": request.prompt,
            "max_length": request.max_length,
            "temperature": temperature,
        }
        last: Optional[Exception] = None
        for attempt in range(self.retries + 1):
            try:
                body = self._post(payload)
                text = body["text"]
                if not isinstance(text, str):
                    raise ValueError("'text' must be a string")
                value = body.get("value")
                return GenerationResponse(text, None if value is None else float(value))
            except (urllib.error.URLError, OSError, ValueError, KeyError) as exc:
                last = exc
                logger.warning("remote generate attempt %d failed: %s", attempt + 1, exc)
        raise BackendUnavailable(f"remote backend failed after {self.retries + 1} attempts: {last}")

    def healthcheck(self) -> HealthStatus:
        start = time.perf_counter()
        try:
            self._post({"role": "guardian", "prompt": "#tags: probe=1\n## Node\nping",
                        "max_length": 16, "temperature": 0.0})
        except Exception as exc:  # noqa: BLE001 - status encodes failure
            return HealthStatus(False, None, str(exc))
        return HealthStatus(True, (time.perf_counter() - start) * 1000.0, "ok")
