import os

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from persistent_agent.backend import ScriptedBackend
from persistent_agent.harness import run_scenario
from persistent_agent.journal import (
    EntryKind,
    Journal,
    JournalEntry,
    JournalError,
    JournalParseError,
    bullet_fields,
    critique_stats,
    format_entry,
    nightly_critique,
    parse_entries,
    replay_load,
    restore_self_model,
)
from persistent_agent.models import DEFAULT_CREED, creed_ids

body_text = st.text(st.characters(blacklist_categories=("Cs",)), max_size=120)
goal_ids = st.one_of(st.none(), st.from_regex(r"g-[0-9]{4}", fullmatch=True))
entries_st = st.lists(
    st.tuples(st.integers(0, 50), st.sampled_from(list(EntryKind)), body_text, goal_ids),
    min_size=1,
    max_size=1000,
)


def sorted_entries(raw):
    t, out = 0, []
    for gap, kind, body, gid in raw:
        t += gap
        out.append(JournalEntry(t, kind, body, gid))
    return out


@given(entries_st)
@settings(max_examples=50, deadline=None)
def test_text_round_trip_is_identity(raw):
    entries = sorted_entries(raw)
    text = "".join(format_entry(e) for e in entries)
    assert parse_entries(text) == entries
    assert "".join(format_entry(e) for e in parse_entries(text)) == text


def test_journal_round_trip_on_disk_preserves_bytes(tmp_path):
    nasty = ["---", "\\already", "--- not a delimiter", "line\r", "", "ünïcødé ✓", "- key: value"]
    entries = [JournalEntry(i * 400, EntryKind.ACTION, "\n".join(nasty[: i + 1]), f"g-{i:04d}")
               for i in range(len(nasty))]
    j = Journal(tmp_path)
    for e in entries:
        j.append(e)
    assert replay_load(tmp_path) == entries
    raw = b"".join((tmp_path / f).read_bytes() for f in sorted(os.listdir(tmp_path)) if f.endswith(".md"))
    assert b"\r\n" not in raw.replace(b"line\r\n", b"")
    assert raw.decode("utf-8") == "".join(format_entry(e) for e in entries)


def test_escaping_of_delimiter_lines():
    text = format_entry(JournalEntry(1, EntryKind.GOAL, "---\n\\x"))
    assert text.splitlines()[-2:] == ["\\---", "\\\\x"]


def test_files_are_per_day(tmp_path):
    j = Journal(tmp_path)
    j.append(JournalEntry(1439, EntryKind.ACTION, "a"))
    j.append(JournalEntry(1440, EntryKind.ACTION, "b"))
    assert sorted(p.name for p in tmp_path.glob("day-*.md")) == ["day-000.md", "day-001.md"]


def test_append_rejects_time_travel(tmp_path):
    j = Journal(tmp_path)
    j.append(JournalEntry(10, EntryKind.ACTION, "a"))
    with pytest.raises(ValueError):
        j.append(JournalEntry(9, EntryKind.ACTION, "b"))
    with pytest.raises(ValueError):
        Journal(tmp_path).append(JournalEntry(5, EntryKind.ACTION, "c"))


@pytest.mark.parametrize("text,line", [
    ("---\ntimestamp: 1\nkind: goal\ngoal_id: -\n---\nbody\n---\ntimestamp: x\nkind: goal\ngoal_id: -\n---\nb\n", 7),
    ("---\ntimestamp: 1\nkind: nonsense\ngoal_id: -\n---\nbody\n", 1),
    ("---\ntimestamp: 1\nkind: goal\nowner: me\n---\nbody\n", 4),
    ("---\ntimestamp: 1\nkind: goal\ngoal_id: -\n", 1),
    ("stray\n", 1),
    ("---\ntimestamp: 5\nkind: goal\ngoal_id: -\n---\na\n---\ntimestamp: 4\nkind: goal\ngoal_id: -\n---\nb\n", 7),
])
def test_corrupted_front_matter_reports_file_and_line(tmp_path, text, line):
    (tmp_path / "day-000.md").write_bytes(text.encode())
    with pytest.raises(JournalParseError) as err:
        replay_load(tmp_path)
    assert err.value.line == line and err.value.path.endswith("day-000.md")
    assert f"day-000.md:{line}:" in str(err.value)


def test_unwritable_directory_is_fatal(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(JournalError):
        Journal(blocker / "journal")


def test_replay_missing_directory(tmp_path):
    with pytest.raises(JournalError):
        replay_load(tmp_path / "nope")


def test_write_text_stays_inside_journal(tmp_path):
    j = Journal(tmp_path)
    j.write_text("notes.md", "x")
    with pytest.raises(ValueError):
        j.write_text("../escape.md", "x")


def test_bad_goal_id_rejected():
    with pytest.raises(ValueError):
        JournalEntry(0, EntryKind.GOAL, "x", "has space")


def test_bullet_fields_last_wins():
    assert bullet_fields("- a: 1\nfree text\n- a: 2\n- b: x: y") == {"a": "2", "b": "x: y"}


def test_empty_day_critique_cites_creed():
    e = nightly_critique(3, [], ScriptedBackend({}), DEFAULT_CREED, timestamp=5759)
    assert e.kind is EntryKind.CRITIQUE and "No activity today" in e.body and creed_ids(e.body)


def test_critique_stats_counts():
    day = [
        JournalEntry(1, EntryKind.GOAL, "- origin: extrinsic", "g-0001"),
        JournalEntry(2, EntryKind.GOAL, "- origin: intrinsic\n- gap: OCR API", "g-0002"),
        JournalEntry(3, EntryKind.REWARD, "- success: true\n- fused: 0.5", "g-0001"),
        JournalEntry(4, EntryKind.REWARD, "- success: false\n- fused: 0.25", "g-0002"),
        JournalEntry(5, EntryKind.CAPABILITY, "- capability: X", "g-0002"),
    ]
    s = critique_stats(day)
    assert (s["goals"], s["extrinsic"], s["intrinsic"], s["successes"], s["failures"]) == (2, 1, 1, 1, 1)
    assert s["mean_reward"] == 0.375 and s["capabilities"] == ["X"] and s["gaps"] == ["OCR API"]


def test_paper_run_critique_reports_capability(paper_run):
    critiques = [e for e in replay_load(paper_run.journal_dir) if e.kind is EntryKind.CRITIQUE]
    assert [e.timestamp for e in critiques] == [1439, 2159]
    first = critiques[0]
    assert "reducing future information processing time" in first.body
    assert first.fields()["capabilities_added"] == "OCR API proficiency"
    assert all(creed_ids(e.body) for e in critiques)
    assert critiques[-1].fields()["runtime_minutes"] == "2160"


def test_every_goal_and_reflection_cites_creed(paper_run):
    for e in replay_load(paper_run.journal_dir):
        if e.kind in (EntryKind.GOAL, EntryKind.REFLECTION, EntryKind.CRITIQUE):
            assert creed_ids(e.body), e


def test_restore_self_model(paper_run):
    model = restore_self_model(replay_load(paper_run.journal_dir), DEFAULT_CREED)
    assert model.capability_names == ("OCR API proficiency",)
    assert model.beta == paper_run.agent.self_model.beta


def test_resume_carries_capabilities_and_traces(paper_run, tmp_path):
    res = run_scenario("curriculum", seed=7, out=tmp_path / "j", resume_from=paper_run.journal_dir)
    agent = res.agent
    assert agent.self_model.has("OCR API proficiency")
    assert len(agent.memory.records) >= len(paper_run.agent.memory.records)
    ocr = [e for e in agent.episodes if e.task_id == "ocr-report"]
    assert ocr and all(e.success for e in ocr)
    assert not any(e.task_id == "ocr-upgrade" for e in agent.episodes)
    # the old journal is read, never written
    assert not (paper_run.journal_dir / ".write-probe").exists()


def test_memory_records_persist_both_tiers(paper_run):
    mem = paper_run.journal_dir / "memory"
    md = sorted(mem.glob("record-*.md"))
    assert md and len(md) == len(list(mem.glob("record-*.json"))) == len(paper_run.agent.memory.records)
