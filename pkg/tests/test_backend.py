import json
import os
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest
from hypothesis import given
from hypothesis import strategies as st

from persistent_agent.backend import (
    URL_ENV,
    BackendUnavailable,
    GenerationRequest,
    RemoteBackend,
    Role,
    ScriptedBackend,
    conforms,
    parse_scored_lines,
    parse_tags,
    render_tags,
)
from persistent_agent.sandbox import load_scenario


@given(st.dictionaries(st.from_regex(r"[a-z]{1,8}", fullmatch=True),
                       st.text(st.characters(blacklist_characters=";\n\r", blacklist_categories=("Cs",)))
                       .map(str.strip)))
def test_tags_round_trip(tags):
    assert parse_tags("preamble\n" + render_tags(tags) + "\nbody") == tags


def test_scored_lines_clamp_and_skip_noise():
    assert parse_scored_lines("- [0.4] a\nnoise\n[1.7] b\n  - [.5] c  ") == [(0.4, "a"), (1.0, "b"), (0.5, "c")]


# Rule table: (role, tags, substring the response must contain)
RULES = [
    (Role.PLANNER, {"mode": "search", "task": "check-weather", "depth": 0}, "- ["),
    (Role.PLANNER, {"mode": "search", "task": "check-weather", "depth": 1, "value": 0.5, "parent": "p {trap}"},
     "[0.60] p; confirm"),
    (Role.PLANNER, {"mode": "act", "task": "stress-care", "step": 0, "caps": ""}, "```action"),
    (Role.PLANNER, {"mode": "act", "task": "stress-care", "step": 99, "caps": ""}, "noop()"),
    (Role.PLANNER, {"mode": "act", "task": "ocr-report", "step": 0, "caps": "OCR API proficiency"}, "```action"),
    (Role.GUARDIAN, {"role": "guardian"}, "verdict: sound"),
    (Role.REFLECTOR, {"mode": "episode", "task": "stress-care", "success": "true"}, "rationale:"),
    (Role.REFLECTOR, {"mode": "episode", "task": "ocr-report", "success": "false"}, "rationale:"),
    (Role.REFLECTOR, {"mode": "critique", "added": "OCR API proficiency"}, "note: Gained OCR API"),
    (Role.REFLECTOR, {"mode": "critique", "added": ""}, "[creed:5]"),
    (Role.GOAL_WRITER, {"task": "stress-care", "trigger": "feed:stress"}, "goal:"),
    (Role.GOAL_WRITER, {"task": "ocr-upgrade", "trigger": "gap:OCR API"}, "goal: master the OCR API"),
]


@pytest.fixture(scope="module")
def scripted():
    return ScriptedBackend.from_scenario(load_scenario("paper-36h"))


@pytest.mark.parametrize("role,tags,needle", RULES)
def test_scripted_rule_table(scripted, role, tags, needle):
    prompt = render_tags(tags) + "\n## Node\nopen the page"
    resp = scripted.generate(GenerationRequest(role, prompt))
    assert conforms(role, resp.text), resp.text
    assert needle in resp.text
    again = ScriptedBackend.from_scenario(load_scenario("paper-36h")).generate(GenerationRequest(role, prompt))
    assert again == resp


def test_first_act_step_deliberates_and_later_steps_do_not(scripted):
    def lines(step):
        text = scripted.generate(GenerationRequest(
            Role.PLANNER, render_tags({"mode": "act", "task": "stress-care", "step": step, "caps": ""}))).text
        return [ln for ln in text.split("```action")[0].splitlines() if ln.strip()]

    assert len(lines(0)) == 15 and lines(1) == []


def test_capability_switches_plan(scripted):
    assert scripted.plan_for("ocr-report", []) != scripted.plan_for("ocr-report", ["OCR API proficiency"])


@pytest.mark.parametrize("role,text,ok", [
    (Role.GUARDIAN, "verdict: unsound | reason: x", True),
    (Role.GUARDIAN, "looks good", False),
    (Role.PLANNER, "```action\nopen(a)\n```", True),
    (Role.PLANNER, "just do it", False),
    (Role.GOAL_WRITER, "goal: x", True),
    (Role.REFLECTOR, "whatever", False),
])
def test_conforms(role, text, ok):
    assert conforms(role, text) is ok


# -- remote backend against a local server -------------------------------------


class _Handler(BaseHTTPRequestHandler):
    script = []
    seen = []

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        _Handler.seen.append((body, self.headers.get("Authorization")))
        status, payload = _Handler.script.pop(0) if _Handler.script else (200, {"text": "verdict: sound"})
        data = payload if isinstance(payload, bytes) else json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def server():
    httpd = HTTPServer(("127.0.0.1", 0), _Handler)
    _Handler.script, _Handler.seen = [], []
    t = threading.Thread(target=httpd.serve_forever, daemon=True)
    t.start()
    yield f"http://127.0.0.1:{httpd.server_port}/generate"
    httpd.shutdown()
    httpd.server_close()


def test_remote_success_sends_role_and_token(server):
    _Handler.script = [(200, {"text": "goal: x [creed:1]", "value": 0.7})]
    be = RemoteBackend(server, token="secret", temperature=0.0)
    resp = be.generate(GenerationRequest(Role.GOAL_WRITER, "p", temperature=0.9))
    assert resp.text == "goal: x [creed:1]" and resp.value == 0.7
    body, auth = _Handler.seen[0]
    assert body["role"] == "goal-writer" and body["temperature"] == 0.0 and auth == "Bearer secret"


def test_remote_retries_once(server):
    _Handler.script = [(500, {"error": "boom"}), (200, {"text": "ok"})]
    assert RemoteBackend(server).generate(GenerationRequest(Role.PLANNER, "p")).text == "ok"
    assert len(_Handler.seen) == 2


@pytest.mark.parametrize("bad", [(500, {"error": "x"}), (200, b"not json"), (200, {"nope": 1}), (200, {"text": 3})])
def test_remote_gives_up_after_retry(server, bad):
    _Handler.script = [bad, bad]
    with pytest.raises(BackendUnavailable):
        RemoteBackend(server).generate(GenerationRequest(Role.PLANNER, "p"))
    assert len(_Handler.seen) == 2


def test_remote_healthcheck(server):
    status = RemoteBackend(server).healthcheck()
    assert status.healthy and status.latency_ms >= 0
    down = RemoteBackend("http://127.0.0.1:9/none", timeout=0.5).healthcheck()
    assert not down.healthy and down.reason


def test_remote_requires_endpoint(monkeypatch):
    monkeypatch.delenv(URL_ENV, raising=False)
    with pytest.raises(BackendUnavailable):
        RemoteBackend()


@pytest.mark.skipif(not os.environ.get("PERSISTENT_AGENT_REMOTE_SMOKE"), reason="set PERSISTENT_AGENT_REMOTE_SMOKE=1")
def test_remote_smoke():
    be = RemoteBackend()
    assert be.healthcheck().healthy
    resp = be.generate(GenerationRequest(Role.GUARDIAN, render_tags({"role": "guardian"}) + "\n## Node\nopen a page"))
    assert conforms(Role.GUARDIAN, resp.text)
