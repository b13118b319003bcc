import copy

import pytest

from persistent_agent.harness import run_scenario

TINY = {
    "name": "tiny",
    "duration": 120,
    "start_page": "home",
    "pages": {
        "home": {"title": "Home", "text": "start", "elements": {"#go": {"link": "a"}}},
        "a": {"title": "Page A", "text": "alpha", "explorable": True,
              "elements": {"fact": {"kind": "text", "text": "alpha fact"}, "pic": {"kind": "image"}}},
        "search": {"title": "Search", "text": "find", "search": True, "elements": {}},
        "game": {"title": "Game", "text": "play", "elements": {"#start": {}}},
    },
    "search_index": {"alpha": ["a"]},
    "tasks": [
        {"id": "read-a", "description": "read page a", "min_steps": 2, "goal": "Read page A [creed:3]",
         "verifier": {"marks": ["extracted:a:fact"]},
         "script": {"plan": ['open("a")', "extract(fact)"], "creed": 3}},
        {"id": "play", "description": "play the game", "min_steps": 3, "goal": "Play the game for a minute [creed:2]",
         "trigger": {"type": "feed", "emotion": "stressed"},
         "verifier": {"marks": ["clicked:game:#start"], "activity": {"game": 60}},
         "script": {"plan": ['open("game")', 'click("#start")', "wait(60s)"], "deliberation": 15, "creed": 2}},
        {"id": "tidy", "description": "tidy up", "min_steps": 1, "goal": "Tidy my records [creed:5]",
         "trigger": {"type": "housekeeping"}, "verifier": {"marks": ["opened:home"]},
         "script": {"plan": ['open("home")'], "creed": 5}},
    ],
    "feed": [{"start": 0, "end": 120, "emotion": "calm", "activity": "typing"}],
    "directives": [{"at": 3, "task": "read-a"}],
}


@pytest.fixture
def tiny():
    return copy.deepcopy(TINY)


@pytest.fixture(scope="session")
def paper_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("paper") / "journal"
    return run_scenario("paper-36h", seed=7, out=out, metrics_csv=out.parent / "metrics.csv")


@pytest.fixture(scope="session")
def recurring_run(tmp_path_factory):
    return run_scenario("recurring-stress", seed=7, out=tmp_path_factory.mktemp("rec") / "journal")


@pytest.fixture(scope="session")
def curriculum_run(tmp_path_factory):
    return run_scenario("curriculum", seed=7, out=tmp_path_factory.mktemp("cur") / "journal")
