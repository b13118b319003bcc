"""Growth journal: the agent's only persistence channel.

Entries are appended to one Markdown file per virtual day (``day-NNN.md``)::

    ---
    timestamp: 860
    kind: goal
    goal_id: g-0007
    ---
    <body lines>

``goal_id`` is ``-`` when the entry belongs to no goal. Body lines that start
with ``---`` or a backslash are written with a leading backslash so the block
structure stays unambiguous. Files are UTF-8 with LF line endings.

Episodic memory records live under ``memory/`` as ``record-NNNNNN.md`` (summary
tier) plus ``record-NNNNNN.json`` (raw tier, read lazily).
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Union

from .backend import GenerationRequest, Role
from .kernel import MINUTES_PER_DAY
from .memory import EpisodicRecord, embed
from .models import Capability, SelfModel, creed_ids
from .templates import creed_section, render

logger = logging.getLogger(__name__)

DELIM = "---"
NO_GOAL = "-"


class EntryKind(str, Enum):
    GOAL = "goal"
    ACTION = "action"
    REWARD = "reward"
    REFLECTION = "reflection"
    CRITIQUE = "critique"
    CAPABILITY = "capability"


class JournalError(RuntimeError):
    """The journal directory cannot be used. Fatal at startup."""


class JournalParseError(ValueError):
    def __init__(self, path: Union[str, Path], line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


@dataclass(frozen=True)
class JournalEntry:
    timestamp: int
    kind: EntryKind
    body: str
    goal_id: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", EntryKind(self.kind))
        if self.timestamp < 0:
            raise ValueError("timestamp must be >= 0")
        if self.goal_id is not None and (not self.goal_id or self.goal_id == NO_GOAL
                                         or any(c.isspace() for c in self.goal_id)):
            raise ValueError(f"bad goal id {self.goal_id!r}")

    @property
    def day(self) -> int:
        return self.timestamp // MINUTES_PER_DAY

    def fields(self) -> Dict[str, str]:
        return bullet_fields(self.body)


_BULLET = re.compile(r"^- ([a-z_]+): (.*)$")


def bullet_fields(body: str) -> Dict[str, str]:
    """``- key: value`` lines of a body as a dict (last one wins)."""
    out = {}
    for line in body.split("\n"):
        m = _BULLET.match(line)
        if m:
            out[m.group(1)] = m.group(2)
    return out


def format_entry(entry: JournalEntry) -> str:
    lines = [
        DELIM,
        f"timestamp: {entry.timestamp}",
        f"kind: {entry.kind.value}",
        f"goal_id: {entry.goal_id or NO_GOAL}",
        DELIM,
    ]
    for line in entry.body.split("\n"):
        if line.startswith((DELIM, "\\")):
            line = "\\" + line
        lines.append(line)
    return "\n".join(lines) + "\n"


def parse_entries(text: str, path: Union[str, Path] = "<string>") -> List[JournalEntry]:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    entries: List[JournalEntry] = []
    i = 0
    while i < len(lines):
        if lines[i] != DELIM:
            raise JournalParseError(path, i + 1, f"expected '{DELIM}' to open an entry")
        header: Dict[str, str] = {}
        start = i + 1
        i += 1
        while i < len(lines) and lines[i] != DELIM:
            key, sep, value = lines[i].partition(": ")
            if not sep or key not in ("timestamp", "kind", "goal_id") or key in header:
                raise JournalParseError(path, i + 1, f"bad front-matter line {lines[i]!r}")
            header[key] = value
            i += 1
        if i >= len(lines):
            raise JournalParseError(path, start, "unterminated front-matter")
        if set(header) != {"timestamp", "kind", "goal_id"}:
            raise JournalParseError(path, start, f"front-matter keys {sorted(header)} incomplete")
        try:
            timestamp = int(header["timestamp"])
            kind = EntryKind(header["kind"])
        except ValueError as exc:
            raise JournalParseError(path, start, str(exc)) from None
        i += 1
        body: List[str] = []
        while i < len(lines) and lines[i] != DELIM:
            line = lines[i]
            body.append(line[1:] if line.startswith("\\") else line)
            i += 1
        if not body:
            raise JournalParseError(path, i + 1, "entry has no body line")
        goal_id = None if header["goal_id"] == NO_GOAL else header["goal_id"]
        if entries and timestamp < entries[-1].timestamp:
            raise JournalParseError(path, start, "timestamps decrease within file")
        try:
            entries.append(JournalEntry(timestamp, kind, "\n".join(body), goal_id))
        except ValueError as exc:
            raise JournalParseError(path, start, str(exc)) from None
    return entries


def day_file(day: int) -> str:
    return f"day-{day:03d}.md"


class Journal:
    """Filesystem facade. Nothing else in the package writes files during a run."""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
            (self.root / "memory").mkdir(exist_ok=True)
            probe = self.root / ".write-probe"
            probe.write_bytes(b"")
            probe.unlink()
        except OSError as exc:
            raise JournalError(f"journal directory {self.root} is not writable: {exc}") from exc
        self._last: Dict[Path, int] = {}

    # -- entries
    def append(self, entry: JournalEntry) -> Path:
        path = self.root / day_file(entry.day)
        last = self._last.get(path)
        if last is None and path.exists():
            existing = parse_entries(path.read_bytes().decode("utf-8"), path)
            last = existing[-1].timestamp if existing else None
        if last is not None and entry.timestamp < last:
            raise ValueError(f"entry at t={entry.timestamp} precedes t={last} in {path.name}")
        with path.open("a", encoding="utf-8", newline="\n") as fh:
            fh.write(format_entry(entry))
        self._last[path] = entry.timestamp
        return path

    def entries(self) -> List[JournalEntry]:
        return replay_load(self.root)

    # -- memory records
    def _record_stem(self, record_id: int) -> Path:
        return self.root / "memory" / f"record-{record_id:06d}"

    def persist_record(self, record: EpisodicRecord, raw: Any) -> Callable[[], Any]:
        stem = self._record_stem(record.id)
        meta = [
            DELIM,
            f"id: {record.id}",
            f"episode: {record.episode_id}",
            f"timestamp: {record.timestamp}",
            f"success: {str(record.success).lower()}",
            f"signature: {json.dumps(list(record.signature)) if record.signature is not None else 'null'}",
            f"markers: {json.dumps(sorted(record.markers))}",
            DELIM,
            record.summary,
        ]
        stem.with_suffix(".md").write_text("\n".join(meta) + "\n", encoding="utf-8", newline="\n")
        stem.with_suffix(".json").write_text(
            json.dumps(raw, sort_keys=True, indent=1) + "\n", encoding="utf-8", newline="\n"
        )
        return self._loader(stem.with_suffix(".json"))

    @staticmethod
    def _loader(path: Path) -> Callable[[], Any]:
        return lambda: json.loads(path.read_text("utf-8"))

    def load_records(self) -> List[EpisodicRecord]:
        return load_records(self.root)

    # -- other artefacts
    def write_text(self, name: str, text: str) -> Path:
        path = self.root / name
        if path.resolve().parent != self.root.resolve():
            raise ValueError("journal artefacts must live directly in the journal directory")
        path.write_text(text, encoding="utf-8", newline="\n")
        return path


def load_records(directory: Union[str, Path]) -> List[EpisodicRecord]:
    """Summary tier of every persisted memory record; raw payloads stay on disk."""
    root = Path(directory)
    out = []
    for path in sorted((root / "memory").glob("record-*.md")):
        lines = path.read_text("utf-8").split("\n")
        try:
            end = lines.index(DELIM, 1)
            meta = dict(line.split(": ", 1) for line in lines[1:end])
            summary = lines[end + 1]
            sig = json.loads(meta["signature"])
            out.append(
                EpisodicRecord(
                    id=int(meta["id"]),
                    episode_id=meta["episode"],
                    timestamp=int(meta["timestamp"]),
                    markers=frozenset(json.loads(meta["markers"])),
                    summary=summary,
                    embedding=embed(summary),
                    success=meta["success"] == "true",
                    signature=tuple(sig) if sig is not None else None,
                    _loader=Journal._loader(path.with_suffix(".json")),
                )
            )
        except (ValueError, KeyError, IndexError) as exc:
            raise JournalParseError(path, 1, f"bad memory record: {exc}") from None
    return out


def append_entry(journal: Journal, entry: JournalEntry) -> Path:
    return journal.append(entry)


def replay_load(directory: Union[str, Path]) -> List[JournalEntry]:
    """All entries in (file, position) order."""
    root = Path(directory)
    if not root.is_dir():
        raise JournalError(f"no journal directory at {root}")
    out: List[JournalEntry] = []
    for path in sorted(root.glob("day-*.md")):
        out.extend(parse_entries(path.read_bytes().decode("utf-8"), path))
    return out


def iter_goal_entries(entries: Iterable[JournalEntry], kind: EntryKind) -> Iterator[JournalEntry]:
    return (e for e in entries if e.kind is kind)


# --------------------------------------------------------------------------
# nightly critique


def _fmt(x: float) -> str:
    return f"{x:.4f}"


def critique_stats(day_entries: Sequence[JournalEntry]) -> Dict[str, Any]:
    goals = [e.fields() for e in day_entries if e.kind is EntryKind.GOAL]
    rewards = [e.fields() for e in day_entries if e.kind is EntryKind.REWARD]
    caps = [e.fields().get("capability", "") for e in day_entries if e.kind is EntryKind.CAPABILITY]
    fused = [float(r["fused"]) for r in rewards if "fused" in r]
    return {
        "goals": len(goals),
        "extrinsic": sum(1 for g in goals if g.get("origin") == "extrinsic"),
        "intrinsic": sum(1 for g in goals if g.get("origin") == "intrinsic"),
        "successes": sum(1 for r in rewards if r.get("success") == "true"),
        "failures": sum(1 for r in rewards if r.get("success") == "false"),
        "mean_reward": sum(fused) / len(fused) if fused else 0.0,
        "capabilities": [c for c in caps if c],
        "gaps": sorted({g["gap"] for g in goals if g.get("gap")}),
    }


def nightly_critique(day: int, day_entries: Sequence[JournalEntry], backend, creed: Sequence[str], *,
                     timestamp: int, runtime_minutes: Optional[int] = None,
                     extra: Optional[Mapping[str, str]] = None, seed: int = 0) -> JournalEntry:
    """Summarise one virtual day into a critique entry citing at least one creed."""
    stats = critique_stats(day_entries)
    lines = [f"# Nightly critique, day {day}"]
    if stats["goals"] == 0 and not stats["capabilities"]:
        lines.append("No activity today; I kept an honest record of an idle day [creed:5].")
    else:
        lines += [
            f"- goals: {stats['goals']}",
            f"- extrinsic: {stats['extrinsic']}",
            f"- intrinsic: {stats['intrinsic']}",
            f"- successes: {stats['successes']}",
            f"- failures: {stats['failures']}",
            f"- mean_reward: {_fmt(stats['mean_reward'])}",
            f"- capabilities_added: {'|'.join(stats['capabilities']) or 'none'}",
            f"- gaps: {'|'.join(stats['gaps']) or 'none'}",
        ]
        prompt = render(
            "critique",
            {"role": "reflector", "mode": "critique", "day": day, "added": "|".join(stats["capabilities"])},
            day=day,
            summary="\n".join(lines[1:]),
            creed=creed_section(creed, range(1, len(creed) + 1)),
        )
        resp = backend.generate(GenerationRequest(Role.REFLECTOR, prompt, seed=seed))
        notes = [ln[5:].strip() for ln in resp.text.split("\n") if ln.startswith("note:")]
        if not any(creed_ids(n) for n in notes):
            notes.append("I recorded today's outcomes as they happened [creed:5].")
        lines += notes
    if runtime_minutes is not None:
        lines.append(f"- runtime_minutes: {runtime_minutes}")
    for key, value in (extra or {}).items():
        lines.append(f"- {key}: {value}")
    return JournalEntry(timestamp, EntryKind.CRITIQUE, "\n".join(lines))


# --------------------------------------------------------------------------
# restoring state on resume


def restore_self_model(entries: Sequence[JournalEntry], creed: Sequence[str], beta: float = 0.5) -> SelfModel:
    """Rebuild the self-model from capability and reward entries."""
    model = SelfModel(creed=creed, beta=beta)
    for e in entries:
        f = e.fields()
        if e.kind is EntryKind.CAPABILITY and f.get("capability"):
            model.add_capability(f["capability"], f.get("note", ""))
        elif e.kind is EntryKind.REFLECTION and "beta_after" in f:
            model.beta = float(f["beta_after"])
    return model


def capabilities_of(entries: Sequence[JournalEntry]) -> List[Capability]:
    return list(restore_self_model(entries, SelfModel().creed).capabilities)


def group_by_day(entries: Iterable[JournalEntry]) -> Mapping[int, List[JournalEntry]]:
    out: Dict[int, List[JournalEntry]] = {}
    for e in entries:
        out.setdefault(e.day, []).append(e)
    return out
