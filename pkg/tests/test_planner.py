from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from planmix.errors import BackendError, NoResponse, PlanRejected
from planmix.planner import (
    ConversationTurn,
    PlannerConfig,
    ScriptedResponses,
    build_prompt,
    load_template,
    negotiate_plan,
    plan_from_request,
    request_plan,
)

BAD_TRIPLE = (
    '{"plan": "1. Auffusion.generate(\'a\',start_time=0,end_time=10); '
    "2. Auffusion.generate('b',start_time=0,end_time=10); "
    "3. Auffusion.generate('c',start_time=0,end_time=10)\"}"
)
GOOD_PAIR = (
    '{"plan": "1. Auffusion.generate(\'a\',start_time=0,end_time=10); '
    "2. Auffusion.generate('b',start_time=2,end_time=6)\"}"
)


def scripted_config(script: ScriptedResponses) -> PlannerConfig:
    return PlannerConfig(backend="scripted", script=script)


class TestTemplates:
    def test_standard_contains_four_requirements(self, standard_template):
        text = standard_template.system_instruction
        for marker in ("1. **User-Provided Description**", "2. **Auffusion Invocation**",
                       "3. **Plan Generation**", "4. **Requirement**"):
            assert marker in text

    def test_standard_has_overlap_rule(self, standard_template):
        assert "less than three audios in the same time" in standard_template.system_instruction

    def test_volume_variant_has_volume_requirement(self, volume_template):
        assert (
            "4.2. You should include the volume for each generation call in dB following LUFS standard."
            in volume_template.system_instruction
        )

    def test_examples_loaded(self, standard_template, volume_template):
        assert len(standard_template.in_context_examples) == 5
        assert len(volume_template.in_context_examples) == 5

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            load_template("loudness_only")


class TestBuildPrompt:
    def test_shape_with_empty_history(self, standard_template):
        messages = build_prompt(standard_template, [], "Make rain sounds.")
        assert messages[0]["role"] == "system"
        # 5 example pairs then the live request
        assert [m["role"] for m in messages[1:]] == ["user", "assistant"] * 5 + ["user"]
        assert messages[-1]["content"] == "Make rain sounds."

    def test_history_precedes_request(self, standard_template):
        history = [
            ConversationTurn("user", "First ask."),
            ConversationTurn("assistant", "First answer."),
        ]
        messages = build_prompt(standard_template, history, "Second ask.")
        contents = [m["content"] for m in messages]
        assert contents[-3:] == ["First ask.", "First answer.", "Second ask."]

    def test_deterministic(self, standard_template):
        a = build_prompt(standard_template, [], "x")
        b = build_prompt(standard_template, [], "x")
        assert a == b and a is not b

    def test_bad_alternation_rejected(self, standard_template):
        history = [ConversationTurn("assistant", "hello")]
        with pytest.raises(ValueError):
            build_prompt(standard_template, history, "x")

    def test_volume_template_system_message(self, volume_template):
        messages = build_prompt(volume_template, [], "x")
        assert "include the volume for each generation call in dB" in messages[0]["content"]


class TestScriptedBackend:
    def test_registered_lookup(self, standard_template):
        script = ScriptedResponses()
        script.register("Make rain.", GOOD_PAIR)
        messages = build_prompt(standard_template, [], "Make rain.")
        assert request_plan(scripted_config(script), messages) == GOOD_PAIR

    def test_unregistered_raises_no_response(self, standard_template):
        messages = build_prompt(standard_template, [], "Make rain.")
        with pytest.raises(NoResponse):
            request_plan(scripted_config(ScriptedResponses()), messages)

    def test_queue_fallback_in_order(self):
        script = ScriptedResponses()
        script.push("first")
        script.push("second")
        config = scripted_config(script)
        messages = [{"role": "user", "content": "anything"}]
        assert request_plan(config, messages) == "first"
        assert request_plan(config, messages) == "second"

    def test_file_loading(self, tmp_path):
        path = tmp_path / "script.json"
        path.write_text(json.dumps({
            "responses": [{"match": "hi", "response": "yo"}],
            "default": ["fallback"],
        }))
        config = PlannerConfig(backend="scripted", script_path=str(path))
        assert request_plan(config, [{"role": "user", "content": "hi"}]) == "yo"
        assert request_plan(config, [{"role": "user", "content": "unknown"}]) == "fallback"

    def test_empty_messages_rejected(self):
        with pytest.raises(ValueError):
            request_plan(scripted_config(ScriptedResponses()), [])


class _ChatHandler(BaseHTTPRequestHandler):
    fail_times = 0
    calls = 0

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        type(self).calls += 1
        if type(self).calls <= type(self).fail_times:
            self.send_response(500)
            self.end_headers()
            return
        reply = {
            "choices": [
                {"message": {"role": "assistant",
                             "content": f"echo:{body['messages'][-1]['content']}"}}
            ]
        }
        payload = json.dumps(reply).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def chat_server():
    _ChatHandler.fail_times = 0
    _ChatHandler.calls = 0
    server = HTTPServer(("127.0.0.1", 0), _ChatHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}/v1/chat/completions"
    server.shutdown()


class TestHttpBackend:
    def test_round_trip(self, chat_server):
        config = PlannerConfig(backend="http_chat", endpoint=chat_server, model="m")
        out = request_plan(config, [{"role": "user", "content": "ping"}])
        assert out == "echo:ping"

    def test_retries_then_succeeds(self, chat_server):
        _ChatHandler.fail_times = 2
        config = PlannerConfig(backend="http_chat", endpoint=chat_server, model="m",
                               max_retries=2)
        out = request_plan(config, [{"role": "user", "content": "ping"}])
        assert out == "echo:ping"
        assert _ChatHandler.calls == 3

    def test_unreachable_endpoint(self):
        config = PlannerConfig(
            backend="http_chat",
            endpoint="http://127.0.0.1:1/v1/chat",
            max_retries=1,
            timeout=0.5,
        )
        with pytest.raises(BackendError):
            request_plan(config, [{"role": "user", "content": "ping"}])


class TestNegotiation:
    def test_valid_first_try(self, standard_template):
        script = ScriptedResponses()
        script.register("Thunder and rain.", standard_template.in_context_examples[0][1])
        plan = plan_from_request(
            scripted_config(script), standard_template, [], "Thunder and rain.", 10
        )
        assert len(plan.steps) == 2

    def test_corrective_retry_path(self, standard_template):
        script = ScriptedResponses()
        script.register("Crowded plan.", BAD_TRIPLE)
        script.push(GOOD_PAIR)
        result = negotiate_plan(
            scripted_config(script), standard_template, [], "Crowded plan.", 10
        )
        assert result.plan is not None
        assert len(result.attempts) == 2
        # The corrective message names exactly the violated rule ids.
        assert "OVERLAP_LIMIT" in result.attempts[1].user_message
        assert "END_COVERAGE" not in result.attempts[1].user_message

    def test_garbage_twice_is_rejected(self, standard_template):
        script = ScriptedResponses()
        script.register("Noise.", "I will not produce JSON.")
        script.push("Still no JSON here.")
        with pytest.raises(PlanRejected):
            plan_from_request(
                scripted_config(script), standard_template, [], "Noise.", 10
            )

    def test_still_invalid_after_retry(self, standard_template):
        script = ScriptedResponses()
        script.register("Crowded plan.", BAD_TRIPLE)
        script.push(BAD_TRIPLE)
        with pytest.raises(PlanRejected) as err:
            plan_from_request(
                scripted_config(script), standard_template, [], "Crowded plan.", 10
            )
        assert "OVERLAP_LIMIT" in err.value.violations


def test_config_validation():
    with pytest.raises(ValueError):
        PlannerConfig(max_retries=-1)
    with pytest.raises(ValueError):
        PlannerConfig(temperature=-0.5)
