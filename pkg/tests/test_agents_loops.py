import json
import os
from pathlib import Path

import pytest

from autoduct.agents.executor import FaultInjector, TaskExecutor
from autoduct.agents.multi_agent import (AgentOutcome, execute_task,
                                         generate_task, run_multi_agent,
                                         tune_task)
from autoduct.agents.planner import ScriptedPlanner
from autoduct.agents.react import (OBSERVATION_LIMIT, ReActStep, Transcript,
                                   act, observe, run_react)
from autoduct.agents.report import render_report
from autoduct.agents.state import load_state
from autoduct.errors import (SchemaInvalid, StageExhausted,
                             StepBudgetExhausted, UnknownTool)
from autoduct.neural_net import ActivationKind


def _multi(ctx, recipe, injector=None, **kwargs):
    planner = ScriptedPlanner(recipe)
    executor = TaskExecutor(ctx, injector=injector)
    outcome = run_multi_agent("CHF regression pipeline", ctx, planner,
                              executor, **kwargs)
    return outcome, planner, executor


def _react(ctx, recipe, injector=None, **kwargs):
    planner = ScriptedPlanner(recipe)
    executor = TaskExecutor(ctx, injector=injector)
    outcome = run_react("CHF regression pipeline", ctx, planner,
                        executor=executor, **kwargs)
    return outcome, planner, executor


# --- building blocks -------------------------------------------------------------

def test_generate_task_provenance(agent_workspace, drill_recipe):
    ctx = agent_workspace()
    planner = ScriptedPlanner(drill_recipe)
    doc = generate_task(planner, "model_generation", ctx)
    assert doc.kind == "model"
    assert doc.provenance["planner"] == "scripted"
    assert doc.provenance["stage"] == "model_generation"
    assert len(doc.provenance["prompt_digest"]) == 64


def test_tune_task_requires_log(agent_workspace, drill_recipe):
    ctx = agent_workspace()
    planner = ScriptedPlanner(drill_recipe)
    doc = generate_task(planner, "model_generation", ctx)
    with pytest.raises(ValueError):
        tune_task(planner, doc, "   ")
    patched = tune_task(planner, doc, "RuntimeError: boom")
    assert patched.provenance["patch_count"] == 1
    assert patched.provenance["patched_by"] == "scripted"


def test_execute_task_checks_context_identity(agent_workspace, drill_recipe):
    ctx = agent_workspace("one")
    other = agent_workspace("two")
    planner = ScriptedPlanner(drill_recipe)
    executor = TaskExecutor(ctx)
    doc = generate_task(planner, "model_generation", ctx)
    with pytest.raises(ValueError, match="different context"):
        execute_task(executor, doc, other)


# --- supervisor loop --------------------------------------------------------------

def test_multi_agent_fault_free(agent_workspace, drill_recipe):
    ctx = agent_workspace()
    outcome, planner, executor = _multi(ctx, drill_recipe)
    report = outcome.report

    assert report["status"] == "completed"
    assert report["mode"] == "multi"
    assert report["run_id"] == "run-t"
    assert all(v == "done" for v in report["stages"].values())
    assert report["errors"]["total"] == 0
    assert report["recoveries"] == 0
    assert report["tokens"] == {"calls": 3, "prompt": 225, "completion": 75,
                                "total": 300}
    assert "rmse_kw_m2" in report["metrics"]
    assert outcome.transcript is None

    report_dir = ctx.path("report_dir")
    assert (report_dir / "report.json").is_file()
    assert (report_dir / "timings.json").is_file()
    assert (report_dir / "report.txt").read_text() == render_report(report)
    assert [r.status for r in executor.history] == ["ok", "ok", "ok"]


def test_multi_agent_recovers_from_injected_fault(agent_workspace, drill_recipe):
    ctx = agent_workspace()
    injector = FaultInjector.from_spec("stage=evaluate,attempt=1")
    outcome, planner, executor = _multi(ctx, drill_recipe, injector=injector)
    report = outcome.report

    assert report["status"] == "completed"
    assert report["errors"]["total"] == 1
    assert report["errors"]["per_stage"]["evaluation_execution"] == 1
    assert report["recoveries"] == 1
    assert report["tokens"]["calls"] == 4          # three tasks, one patch
    assert report["tokens"]["total"] == 400
    statuses = [r.status for r in executor.history]
    assert statuses == ["ok", "ok", "error", "ok"]
    assert executor.history[2].injected_fault


def test_multi_agent_exhausts_persistent_fault(agent_workspace, drill_recipe):
    ctx = agent_workspace()
    injector = FaultInjector.from_spec("stage=evaluate,attempts=1-3")
    planner = ScriptedPlanner(drill_recipe)
    executor = TaskExecutor(ctx, injector=injector)
    with pytest.raises(StageExhausted) as err:
        run_multi_agent("t", ctx, planner, executor, max_retries=3)
    assert err.value.stage == "evaluation_execution"
    assert err.value.error_count == 3

    saved = load_state(ctx.path("state_file"))
    assert saved.status("evaluation_execution") == "failed"
    assert saved.error_count("evaluation_execution") == 3
    # two tunes: attempts 1 and 2 get patched, attempt 3 exhausts
    patch_calls = [c for c in planner.calls if c.purpose == "patch"]
    assert len(patch_calls) == 2


def test_multi_agent_validates_retry_budget(agent_workspace, drill_recipe):
    ctx = agent_workspace()
    with pytest.raises(ValueError):
        _multi(ctx, drill_recipe, max_retries=0)


def test_multi_agent_stop_and_resume(agent_workspace, drill_recipe, tmp_path):
    ctx = agent_workspace("interrupted")
    outcome, _, _ = _multi(ctx, drill_recipe,
                           stop_after_stage="training_execution")
    assert outcome.report is None
    assert outcome.state.is_done("training_execution")
    assert outcome.state.status("evaluation_execution") == "pending"

    # fresh context, planner, and executor: only the state file carries over
    from autoduct.agents.context import ProjectContext
    resumed_ctx = ProjectContext.create(ctx.workspace, run_id="run-t")
    resumed, planner, _ = _multi(resumed_ctx, drill_recipe, resume=True)
    assert resumed.report["status"] == "completed"
    # the first two stages were skipped, so only the evaluate task was planned
    assert [c.purpose for c in planner.calls] == ["task:evaluation_execution"]

    clean_ctx = agent_workspace("uninterrupted")
    clean, _, _ = _multi(clean_ctx, drill_recipe)
    assert resumed.report["metrics"] == clean.report["metrics"]


def test_multi_agent_resume_rejects_foreign_state(agent_workspace, drill_recipe):
    ctx = agent_workspace("owned", run_id="run-a")
    _multi(ctx, drill_recipe, stop_after_stage="model_generation")
    from autoduct.agents.context import ProjectContext
    stranger = ProjectContext.create(ctx.workspace, run_id="run-b")
    with pytest.raises(ValueError, match="belongs to run"):
        _multi(stranger, drill_recipe, resume=True)


def test_multi_agent_reports_are_byte_identical(agent_workspace, drill_recipe):
    a = agent_workspace("left")
    b = agent_workspace("right")
    _multi(a, drill_recipe)
    _multi(b, drill_recipe)
    for name in ("report.json", "report.txt", "metrics.csv", "predictions.csv",
                 "parity.svg"):
        left = (a.path("report_dir") / name).read_bytes()
        right = (b.path("report_dir") / name).read_bytes()
        assert left == right, f"{name} differs between identical runs"


def test_multi_agent_finished_run_reloads_report(agent_workspace, drill_recipe):
    ctx = agent_workspace()
    first, _, _ = _multi(ctx, drill_recipe)
    from autoduct.agents.context import ProjectContext
    again_ctx = ProjectContext.create(ctx.workspace, run_id="run-t")
    again, planner, executor = _multi(again_ctx, drill_recipe, resume=True)
    assert again.report == first.report
    assert planner.calls == []
    assert executor.history == []


# --- react loop ------------------------------------------------------------------------

def test_react_fault_free_trace(agent_workspace, drill_recipe):
    ctx = agent_workspace()
    outcome, planner, executor = _react(ctx, drill_recipe)
    report = outcome.report

    actions = [step.action for step in outcome.transcript.history]
    assert actions == ["generate_model", "execute_task",
                       "generate_training_task", "execute_task",
                       "generate_evaluation_task", "execute_task",
                       "finish_task"]
    assert report["status"] == "completed"
    assert report["mode"] == "react"
    assert report["steps"] == 7
    # 7 directives plus one task generation per stage
    assert report["tokens"] == {"calls": 10, "prompt": 750, "completion": 250,
                                "total": 1000}
    assert report["errors"]["total"] == 0


def test_react_recovers_from_injected_fault(agent_workspace, drill_recipe):
    ctx = agent_workspace()
    injector = FaultInjector.from_spec("stage=evaluate,attempt=1")
    outcome, planner, _ = _react(ctx, drill_recipe, injector=injector)

    actions = [step.action for step in outcome.transcript.history]
    assert actions == ["generate_model", "execute_task",
                       "generate_training_task", "execute_task",
                       "generate_evaluation_task", "execute_task",
                       "patch_task", "execute_task", "finish_task"]
    errors = [s for s in outcome.transcript.history
              if s.observation.startswith("error:")]
    assert len(errors) == 1
    assert "injected fault" in errors[0].observation
    assert outcome.report["errors"]["total"] == 1
    assert outcome.report["recoveries"] == 1
    # 9 directives + 3 generations + 1 patch
    assert outcome.report["tokens"]["calls"] == 13
    assert outcome.report["tokens"]["total"] == 1300


def test_react_step_budget(agent_workspace, drill_recipe):
    ctx = agent_workspace()
    planner = ScriptedPlanner(drill_recipe)
    with pytest.raises(StepBudgetExhausted):
        run_react("t", ctx, planner, max_steps=3)
    saved = load_state(ctx.path("state_file"))
    assert not saved.is_done("evaluation_execution")
    with pytest.raises(ValueError):
        run_react("t", ctx, planner, max_steps=0)


def test_react_rejects_unknown_tool(agent_workspace, drill_recipe):
    class RogueDirectives(ScriptedPlanner):
        def _reply(self, request):
            if request.kind == "directive":
                reply, attempts = super()._reply(request)
                return type(reply)(payload={"thought": "t", "action": "explode",
                                            "args": {}},
                                   prompt_tokens=reply.prompt_tokens,
                                   completion_tokens=reply.completion_tokens), attempts
            return super()._reply(request)

    ctx = agent_workspace()
    executor = TaskExecutor(ctx)
    with pytest.raises(UnknownTool):
        run_react("t", ctx, RogueDirectives(drill_recipe), executor=executor)
    assert executor.history == []        # nothing ran on a bad directive


def test_react_rejects_missing_action(agent_workspace, drill_recipe):
    class SilentDirectives(ScriptedPlanner):
        def _reply(self, request):
            reply, attempts = super()._reply(request)
            if request.kind == "directive":
                return type(reply)(payload={"thought": "hmm"},
                                   prompt_tokens=reply.prompt_tokens,
                                   completion_tokens=reply.completion_tokens), attempts
            return reply, attempts

    ctx = agent_workspace()
    with pytest.raises(SchemaInvalid):
        run_react("t", ctx, SilentDirectives(drill_recipe))


def test_react_window_bounds_prompt_history(agent_workspace, drill_recipe):
    ctx = agent_workspace()
    planner = ScriptedPlanner(drill_recipe, verbose=True)
    executor = TaskExecutor(ctx)
    run_react("t", ctx, planner, executor=executor, window_size=2)
    directive_prompts = [c.prompt for c in planner.calls
                         if c.purpose == "directive"]
    assert len(directive_prompts) == 7
    for prompt in directive_prompts:
        assert prompt.count(" | action: ") <= 2
    # the tail of the run has more than two steps of history available
    assert directive_prompts[-1].count(" | action: ") == 2


def test_react_stop_and_resume(agent_workspace, drill_recipe):
    ctx = agent_workspace("pausing")
    outcome, _, _ = _react(ctx, drill_recipe,
                           stop_after_stage="training_execution")
    assert outcome.report is None
    assert outcome.state.is_done("training_execution")

    from autoduct.agents.context import ProjectContext
    resumed_ctx = ProjectContext.create(ctx.workspace, run_id="run-t")
    resumed, _, _ = _react(resumed_ctx, drill_recipe, resume=True)
    assert resumed.report["status"] == "completed"

    clean_ctx = agent_workspace("straight")
    clean, _, _ = _react(clean_ctx, drill_recipe)
    assert resumed.report["metrics"] == clean.report["metrics"]


def test_react_and_multi_agree_on_metrics(agent_workspace, drill_recipe):
    multi_ctx = agent_workspace("multi")
    react_ctx = agent_workspace("react")
    multi, _, _ = _multi(multi_ctx, drill_recipe)
    react, _, _ = _react(react_ctx, drill_recipe)
    assert multi.report["metrics"] == react.report["metrics"]
    assert multi.report["level"] == react.report["level"]


# --- transcript mechanics ------------------------------------------------------------

def test_transcript_window_and_rendering():
    t = Transcript(window_size=2)
    for i in range(4):
        t.append(ReActStep(f"think{i}", f"act{i}", f"obs{i}"))
    assert len(t) == 4
    assert [s.action for s in t.window()] == ["act2", "act3"]
    assert t.last_observation() == "obs3"
    rendered = t.render_window()
    assert rendered == ["thought: think2 | action: act2 | obs: obs2",
                        "thought: think3 | action: act3 | obs: obs3"]
    with pytest.raises(ValueError):
        Transcript(window_size=0)
    assert Transcript().last_observation() == ""


def test_observe_format_and_truncation():
    from autoduct.agents.executor import ExecutionResult
    ok = ExecutionResult(status="ok", action="execute_task", log="line one\nrest")
    assert observe(ok) == "ok: execute_task → line one"
    long = ExecutionResult(status="error", action="x", log="e" * 2000)
    assert len(observe(long)) == OBSERVATION_LIMIT


def test_act_converts_expected_failures(agent_workspace):
    from autoduct.agents.react import PlannerDirective

    def angry_tool(args):
        raise ValueError("no such thing")

    result = act(PlannerDirective("t", "angry", {}), {"angry": angry_tool},
                 agent_workspace())
    assert not result.ok
    assert result.log == "ValueError: no such thing"


# --- workspace confinement --------------------------------------------------------------

def test_loops_never_write_outside_workspace(agent_workspace, drill_recipe,
                                             monkeypatch, tmp_path):
    ctx = agent_workspace()
    written: list[Path] = []
    real_open = Path.open

    def spy_open(self, mode="r", *args, **kwargs):
        if any(flag in mode for flag in "wax"):
            written.append(Path(self).resolve())
        return real_open(self, mode, *args, **kwargs)

    real_replace = os.replace

    def spy_replace(src, dst, *args, **kwargs):
        written.append(Path(dst).resolve())
        return real_replace(src, dst, *args, **kwargs)

    monkeypatch.setattr(Path, "open", spy_open)
    monkeypatch.setattr(os, "replace", spy_replace)

    _multi(ctx, drill_recipe)

    inside_tmp = [p for p in written if tmp_path.resolve() in p.parents]
    assert inside_tmp, "expected the run to write artifacts"
    offenders = [p for p in inside_tmp if not ctx.contains(p)]
    assert offenders == []
