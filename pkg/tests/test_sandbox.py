import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from persistent_agent import sandbox as sb
from persistent_agent.kernel import Command, Verb, VirtualClock
from persistent_agent.sandbox import (
    Activity,
    CadenceError,
    Emotion,
    MissingPages,
    ScenarioError,
    UserFeedEntry,
    load_scenario,
)


def fresh(tiny, seed=0):
    return sb.reset(load_scenario(tiny), seed)


def test_open_known_page(tiny):
    state, obs, report = sb.step(fresh(tiny), Command(Verb.OPEN, "a"))
    assert state.current_page == "a" and obs.title == "Page A" and report is None


def test_click_missing_element_fails_without_moving(tiny):
    s0 = fresh(tiny)
    state, obs, _ = sb.step(s0, Command(Verb.CLICK, "#nope"))
    assert obs.failure == "element not found"
    assert state == s0


def test_open_unknown_page(tiny):
    _, obs, _ = sb.step(fresh(tiny), Command(Verb.OPEN, "nowhere"))
    assert obs.failure.startswith("page not found")


def test_click_follows_link(tiny):
    state, _, _ = sb.step(fresh(tiny), Command(Verb.CLICK, "#go"))
    assert state.current_page == "a"


def test_extract_image_has_no_text(tiny):
    s, _, _ = sb.step(fresh(tiny), Command(Verb.OPEN, "a"))
    _, obs, _ = sb.step(s, Command(Verb.EXTRACT, "pic"))
    assert "no text layer" in obs.failure


def test_search_then_top_result(tiny):
    s = fresh(tiny)
    s, obs, _ = sb.step(s, Command(Verb.OPEN, "search"))
    s, obs, _ = sb.step(s, Command(Verb.TYPE, "Alpha"))
    assert obs.results == ("a",)
    s, obs, _ = sb.step(s, Command(Verb.OPEN, "topResult"))
    assert s.current_page == "a"


def test_verifier_needs_active_task_marks(tiny):
    s = sb.begin_task(fresh(tiny), "read-a")
    s, _, rep = sb.step(s, Command(Verb.OPEN, "a"))
    assert rep is None
    s, obs, rep = sb.step(s, Command(Verb.EXTRACT, "fact"))
    assert rep.success and rep.message == "Task read-a succeeded: read page a."
    assert obs.extracted == "alpha fact" and s.active_task is None


def test_wait_timer_drives_activity_predicate(tiny):
    s = sb.begin_task(fresh(tiny), "play")
    for c in (Command(Verb.OPEN, "game"), Command(Verb.CLICK, "#start"), Command(Verb.WAIT, 60)):
        s, _, rep = sb.step(s, c)
        assert rep is None
    s, rep = sb.tick(s, 1)
    assert rep is not None and rep.success


def test_abort_reports_failure(tiny):
    s = sb.begin_task(fresh(tiny), "read-a")
    s, rep = sb.abort_task(s, "gave up")
    assert not rep.success and rep.message == "Task read-a failed: gave up."


def test_feed_tick_appends_exactly_one(tiny):
    s = fresh(tiny)
    s = sb.feed_tick(s, VirtualClock(now=5))
    assert len(s.feed_log) == 1
    assert s.feed_log[0] == UserFeedEntry(5, Emotion.CALM, Activity.TYPING, 0)


def test_feed_tick_off_cadence(tiny):
    with pytest.raises(CadenceError):
        sb.feed_tick(fresh(tiny), 7)


def test_feed_tick_must_follow_previous(tiny):
    s = sb.feed_tick(fresh(tiny), 5)
    with pytest.raises(CadenceError):
        sb.feed_tick(s, 15)


def test_idle_minutes_accumulate(tiny):
    tiny["feed"] = [{"start": 0, "end": 120, "activity": "idle"}]
    s = fresh(tiny)
    for t in (5, 10, 15):
        s = sb.feed_tick(s, t)
    assert [e.idle_minutes for e in s.feed_log] == [5, 10, 15]


def test_explicit_idle_minutes_count_from_span_start(tiny):
    tiny["feed"] = [{"start": 0, "end": 120, "activity": "idle", "idle_minutes": 30}]
    s = sb.feed_tick(sb.feed_tick(fresh(tiny), 5), 10)
    assert [e.idle_minutes for e in s.feed_log] == [35, 40]


@given(st.integers(0, 2**32), st.integers(1, 40))
@settings(max_examples=30, deadline=None)
def test_same_seed_same_feed(seed, n):
    raw = {"pages": {"home": {}}, "feed": [{"start": 0, "end": 500, "emotion": ["calm", "stressed", "neutral"],
                                            "activity": ["typing", "idle"]}]}
    runs = []
    for _ in range(2):
        s = sb.reset(raw, seed)
        for k in range(1, n + 1):
            s = sb.feed_tick(s, 5 * k)
        runs.append(s.feed_log)
    assert runs[0] == runs[1]


def test_feed_entry_json_round_trip():
    e = UserFeedEntry(860, Emotion.STRESSED, Activity.IDLE, 60)
    assert UserFeedEntry.from_json(e.to_json()) == e


def test_missing_pages():
    with pytest.raises(MissingPages):
        load_scenario({"name": "x"})


def test_bad_field_named(tiny):
    del tiny["tasks"][0]["min_steps"]
    with pytest.raises(ScenarioError) as err:
        load_scenario(tiny)
    assert err.value.field == "tasks[0].min_steps"


def test_unknown_feed_value(tiny):
    tiny["feed"][0]["emotion"] = "furious"
    with pytest.raises(ScenarioError) as err:
        load_scenario(tiny)
    assert err.value.field == "feed[0].emotion"


def test_directive_to_unknown_task(tiny):
    tiny["directives"] = [{"at": 1, "task": "ghost"}]
    with pytest.raises(ScenarioError):
        load_scenario(tiny)


def test_explorable_pages_get_curiosity_tasks(tiny):
    spec = load_scenario(tiny).tasks["explore:a"]
    assert spec.trigger["type"] == "curiosity" and "[creed:3]" in spec.goal


@pytest.mark.parametrize("name", sb.BUILTIN_SCENARIOS)
def test_builtin_scenarios_load(name):
    sc = load_scenario(name)
    assert sc.name == name
    for spec in sc.tasks.values():
        assert "[creed:" in spec.goal


def test_observe_does_not_change_state(tiny):
    s = sb.feed_tick(fresh(tiny), 5)
    assert sb.observe(s).feed == s.feed_log
    assert sb.observe(s) == sb.observe(s)
