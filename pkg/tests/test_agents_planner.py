import json

import pytest
import requests

from autoduct.agents.executor import FAULT_MARKER
from autoduct.agents.planner import (SCRIPTED_COMPLETION_TOKENS,
                                     SCRIPTED_PROMPT_TOKENS, HttpPlanner,
                                     PipelineRecipe, PlanRequest, PlannerCall,
                                     ScriptedPlanner, account_tokens,
                                     build_directive_prompt, build_patch_prompt,
                                     build_task_prompt, llm_planner,
                                     prompt_digest)
from autoduct.agents.tasks import TaskDocument, validate_document
from autoduct.errors import AuthFailure, PlannerUnavailable, SchemaInvalid

KEY_ENV = "AUTODUCT_API_KEY"


def _task_request(stage="model_generation", prompt="p"):
    return PlanRequest(kind="task", prompt=prompt, stage=stage)


def _patch_request(doc, log):
    return PlanRequest(kind="patch", prompt="p", doc=doc, error_log=log)


def _directive_request(state_summary, last_observation=None):
    return PlanRequest(kind="directive", prompt="p",
                       state_summary=state_summary,
                       last_observation=last_observation,
                       tools=("generate_model", "execute_task", "finish_task"))


# --- token accounting ------------------------------------------------------------

def test_account_tokens_worked_example():
    # seven scripted calls at 75 + 25 each
    calls = [PlannerCall("task", "d", SCRIPTED_PROMPT_TOKENS,
                         SCRIPTED_COMPLETION_TOKENS) for _ in range(7)]
    usage = account_tokens(calls)
    assert usage.call_count == 7
    assert usage.prompt_tokens == 525
    assert usage.completion_tokens == 175
    assert usage.total == 700
    assert usage.to_dict() == {"calls": 7, "prompt": 525, "completion": 175,
                               "total": 700}


def test_account_tokens_mixed_calls():
    calls = [PlannerCall("task", "d", 100, 20),
             PlannerCall("patch", "d", 40, 5)]
    usage = account_tokens(calls)
    assert (usage.prompt_tokens, usage.completion_tokens, usage.total) \
        == (140, 25, 165)
    assert account_tokens([]).total == 0


def test_plan_request_kind_gate():
    with pytest.raises(ValueError):
        PlanRequest(kind="oracle", prompt="p")


# --- prompt assembly ---------------------------------------------------------------

def test_task_prompt_mentions_objective_and_roles(agent_workspace):
    ctx = agent_workspace()
    prompt = build_task_prompt("model_generation", ctx, "CHF pipeline")
    assert "CHF pipeline" in prompt
    assert "dataset_file" in prompt
    assert str(ctx.path("dataset_file")) in prompt
    with pytest.raises(ValueError):
        build_task_prompt("report_synthesis", ctx, "t")


def test_identical_context_gives_identical_digest(agent_workspace):
    ctx = agent_workspace("same")
    a = build_task_prompt("training_execution", ctx, "t")
    b = build_task_prompt("training_execution", ctx, "t")
    assert prompt_digest(a) == prompt_digest(b)
    other = agent_workspace("different")
    c = build_task_prompt("training_execution", other, "t")
    assert prompt_digest(a) != prompt_digest(c)


def test_patch_prompt_embeds_document_and_log():
    doc = TaskDocument(kind="model", payload={"input_dim": 5}, provenance={})
    prompt = build_patch_prompt(doc, "RuntimeError: boom")
    assert "RuntimeError: boom" in prompt
    assert '"input_dim": 5' in prompt


def test_directive_prompt_renders_window(agent_workspace):
    ctx = agent_workspace()
    prompt = build_directive_prompt("t", "model_generation=pending",
                                    ["thought: a | action: b | obs: c"],
                                    ("finish_task",), ctx)
    assert "model_generation=pending" in prompt
    assert "thought: a | action: b | obs: c" in prompt
    assert "finish_task" in prompt


# --- scripted rules -------------------------------------------------------------------

def test_scripted_task_payloads_validate():
    planner = ScriptedPlanner()
    for stage, kind in (("model_generation", "model"),
                        ("training_execution", "train"),
                        ("evaluation_execution", "evaluate")):
        reply = planner.plan(_task_request(stage))
        validate_document(TaskDocument(kind=kind, payload=reply.payload,
                                       provenance={}))
        assert reply.prompt_tokens == SCRIPTED_PROMPT_TOKENS
        assert reply.completion_tokens == SCRIPTED_COMPLETION_TOKENS
    assert len(planner.calls) == 3
    assert planner.calls[0].purpose == "task:model_generation"
    assert planner.usage().total == 300


def test_scripted_patch_retries_injected_fault_unchanged():
    planner = ScriptedPlanner()
    doc = TaskDocument(kind="train",
                       payload={"paths": {"x": "y"}, "marker": 1},
                       provenance={})
    reply = planner.plan(_patch_request(doc, f"RuntimeError: {FAULT_MARKER} armed"))
    assert reply.payload == doc.payload


def test_scripted_patch_drops_bad_path_overrides():
    planner = ScriptedPlanner()
    doc = TaskDocument(kind="train", payload={"paths": {"a": "../b"}, "keep": 2},
                       provenance={})
    reply = planner.plan(_patch_request(
        doc, "ValueError: path for role 'a' escapes the workspace: /x"))
    assert reply.payload == {"keep": 2}

    doc2 = TaskDocument(kind="model", payload={"paths": {"z": "w"}},
                        provenance={})
    reply2 = planner.plan(_patch_request(
        doc2, "UnboundRole: artifact role 'q' is not bound"))
    assert reply2.payload == {}


def test_scripted_patch_requires_inputs():
    planner = ScriptedPlanner()
    with pytest.raises(ValueError):
        planner.plan(PlanRequest(kind="patch", prompt="p"))


def test_scripted_directive_rules():
    planner = ScriptedPlanner()

    def directive(summary, last=None):
        return planner.plan(_directive_request(summary, last)).payload["action"]

    fresh = ("model_generation=pending training_execution=pending "
             "evaluation_execution=pending report_synthesis=pending")
    assert directive(fresh) == "generate_model"
    mid = ("model_generation=done training_execution=in_progress "
           "evaluation_execution=pending report_synthesis=pending")
    assert directive(mid) == "generate_training_task"
    late = ("model_generation=done training_execution=done "
            "evaluation_execution=pending report_synthesis=pending")
    assert directive(late) == "generate_evaluation_task"
    finished = ("model_generation=done training_execution=done "
                "evaluation_execution=done report_synthesis=done")
    assert directive(finished) == "finish_task"

    assert directive(mid, "ok: generate_training_task → task document ready") \
        == "execute_task"
    assert directive(mid, "error: execute_task → RuntimeError: boom") == "patch_task"
    assert directive(mid, "ok: patch_task → patched") == "execute_task"


def test_recipe_members_cycle_activations():
    recipe = PipelineRecipe(member_count=5, activations=("relu", "gelu"))
    kinds = [m["activation"] for m in recipe.members()]
    assert kinds == ["relu", "gelu", "relu", "gelu", "relu"]
    with pytest.raises(ValueError):
        recipe.payload_for("deploy")


def test_recipe_slices_flow_into_evaluate_payload():
    recipe = PipelineRecipe(slices=({"slice_id": "a"},))
    payload = recipe.payload_for("evaluate")
    assert payload["slices"] == [{"slice_id": "a"}]
    assert "slices" not in PipelineRecipe().payload_for("evaluate")


def test_verbose_planner_retains_prompts():
    quiet = ScriptedPlanner()
    quiet.plan(_task_request(prompt="secret"))
    assert quiet.calls[0].prompt is None
    loud = ScriptedPlanner(verbose=True)
    loud.plan(_task_request(prompt="secret"))
    assert loud.calls[0].prompt == "secret"
    assert loud.calls[0].prompt_digest == prompt_digest("secret")


# --- HTTP backend -------------------------------------------------------------------------

def _ok_response(payload, prompt_tokens=110, completion_tokens=42):
    return (200, {"choices": [{"message": {"content": json.dumps(payload)}}],
                  "usage": {"prompt_tokens": prompt_tokens,
                            "completion_tokens": completion_tokens}})


class _FakeTransport:
    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.requests = []

    def __call__(self, url, body, headers, timeout):
        self.requests.append((url, body, headers, timeout))
        outcome = self.outcomes.pop(0)
        if isinstance(outcome, Exception):
            raise outcome
        return outcome


def _planner(transport, **kwargs):
    sleeps = []
    planner = HttpPlanner("https://api.example.test/v1/", "planner-model",
                          transport=transport, sleep=sleeps.append, **kwargs)
    return planner, sleeps


def test_http_refuses_to_run_without_credentials(monkeypatch):
    monkeypatch.delenv(KEY_ENV, raising=False)
    transport = _FakeTransport([_ok_response({"a": 1})])
    planner, _ = _planner(transport)
    with pytest.raises(AuthFailure, match=KEY_ENV):
        planner.plan(_task_request())
    assert transport.requests == []          # no network traffic at all


def test_http_happy_path_and_request_shape(monkeypatch):
    monkeypatch.setenv(KEY_ENV, "sk-test")
    transport = _FakeTransport([_ok_response({"input_dim": 5})])
    planner, sleeps = _planner(transport)
    reply = planner.plan(_task_request())
    assert reply.payload == {"input_dim": 5}
    assert reply.prompt_tokens == 110
    assert reply.completion_tokens == 42
    assert sleeps == []

    url, body, headers, timeout = transport.requests[0]
    assert url == "https://api.example.test/v1/chat/completions"
    assert headers["Authorization"] == "Bearer sk-test"
    assert body["model"] == "planner-model"
    assert body["temperature"] == 0
    assert body["messages"][0]["role"] == "system"
    assert body["messages"][1]["content"] == "p"
    assert planner.calls[0].attempts == 1
    assert planner.usage().total == 152


def test_http_retries_transient_failures(monkeypatch):
    monkeypatch.setenv(KEY_ENV, "sk-test")
    transport = _FakeTransport([(503, {}), requests.ConnectionError("down"),
                                _ok_response({"x": 1})])
    planner, sleeps = _planner(transport, max_retries=3, backoff_s=0.25)
    reply = planner.plan(_task_request())
    assert reply.payload == {"x": 1}
    assert sleeps == [0.25, 0.5]             # exponential backoff
    assert planner.calls[0].attempts == 3


def test_http_exhausts_retry_budget(monkeypatch):
    monkeypatch.setenv(KEY_ENV, "sk-test")
    transport = _FakeTransport([(503, {}), (429, {})])
    planner, sleeps = _planner(transport, max_retries=2)
    with pytest.raises(PlannerUnavailable, match="after 2 attempts"):
        planner.plan(_task_request())
    assert len(transport.requests) == 2
    assert sleeps == [0.25]


def test_http_auth_rejection_never_retries(monkeypatch):
    monkeypatch.setenv(KEY_ENV, "sk-test")
    for status in (401, 403):
        transport = _FakeTransport([(status, {})])
        planner, sleeps = _planner(transport, max_retries=3)
        with pytest.raises(AuthFailure):
            planner.plan(_task_request())
        assert len(transport.requests) == 1
        assert sleeps == []


def test_http_hard_status_is_unavailable(monkeypatch):
    monkeypatch.setenv(KEY_ENV, "sk-test")
    planner, _ = _planner(_FakeTransport([(404, {})]))
    with pytest.raises(PlannerUnavailable, match="404"):
        planner.plan(_task_request())


def test_http_rejects_malformed_replies(monkeypatch):
    monkeypatch.setenv(KEY_ENV, "sk-test")
    cases = [
        (200, {"choices": []}),
        (200, {"choices": [{"message": {"content": "not json"}}]}),
        (200, {"choices": [{"message": {"content": "[1, 2]"}}]}),
    ]
    for response in cases:
        planner, _ = _planner(_FakeTransport([response]))
        with pytest.raises(SchemaInvalid):
            planner.plan(_task_request())


def test_http_missing_usage_defaults_to_zero(monkeypatch):
    monkeypatch.setenv(KEY_ENV, "sk-test")
    response = (200, {"choices": [{"message": {"content": "{}"}}]})
    planner, _ = _planner(_FakeTransport([response]))
    reply = planner.plan(_task_request())
    assert (reply.prompt_tokens, reply.completion_tokens) == (0, 0)


def test_http_constructor_validation():
    with pytest.raises(ValueError):
        HttpPlanner("https://x", "m", max_retries=0)


def test_llm_planner_factory():
    planner = llm_planner("https://api.example.test/v2", "m", max_retries=5)
    assert isinstance(planner, HttpPlanner)
    assert planner.endpoint == "https://api.example.test/v2"
    assert planner.max_retries == 5
    assert planner.name == "llm"
