"""Single-agent ReAct loop: think, act, observe, repeat.

One planner drives the whole pipeline through a fixed tool set. Each
step asks for a directive (thought + action), dispatches the action,
condenses the outcome into a one-line observation, and appends the
triple to the transcript. The prompt only ever carries the bounded
recent window of the transcript; the full history is kept for the
report. Error observations feed the next thought, which is what lets a
scripted or LLM planner route through patch_task and recover.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..errors import AutoductError, SchemaInvalid, StepBudgetExhausted, UnknownTool
from .context import ProjectContext
from .executor import ExecutionResult, TaskExecutor
from .multi_agent import (AgentOutcome, _load_or_create_state, generate_task,
                          tune_task)
from .planner import PlanRequest, PlannerBase, build_directive_prompt
from .report import synthesize_report
from .state import WorkflowState, persist_state
from .tasks import save_document

OBSERVATION_LIMIT = 512
DEFAULT_WINDOW = 8
DEFAULT_MAX_STEPS = 40

TOOL_NAMES = ("generate_model", "generate_training_task",
              "generate_evaluation_task", "execute_task", "patch_task",
              "read_log", "finish_task")

_TOOL_STAGES = {
    "generate_model": "model_generation",
    "generate_training_task": "training_execution",
    "generate_evaluation_task": "evaluation_execution",
}

_DOC_FILES = {
    "model_generation": "model_task.json",
    "training_execution": "training_task.json",
    "evaluation_execution": "evaluation_task.json",
}


@dataclass(frozen=True)
class ReActStep:
    thought: str
    action: str
    observation: str


@dataclass(frozen=True)
class PlannerDirective:
    thought: str
    action: str
    args: dict


class Transcript:
    """Append-only history with a bounded recent window."""

    def __init__(self, window_size: int = DEFAULT_WINDOW):
        if window_size < 1:
            raise ValueError("window_size must be at least 1")
        self.window_size = window_size
        self.history: list[ReActStep] = []

    def append(self, step: ReActStep) -> None:
        self.history.append(step)

    def window(self) -> list[ReActStep]:
        return self.history[-self.window_size:]

    def last_observation(self) -> str:
        return self.history[-1].observation if self.history else ""

    def render_window(self) -> list[str]:
        return [f"thought: {s.thought} | action: {s.action} | obs: {s.observation}"
                for s in self.window()]

    def __len__(self) -> int:
        return len(self.history)


def _state_summary(state: WorkflowState) -> str:
    return " ".join(f"{name}={stage.status}" for name, stage in state.stages.items())


def think(planner: PlannerBase, task: str, state: WorkflowState,
          transcript: Transcript, ctx: ProjectContext,
          tools: dict) -> PlannerDirective:
    """One planning step: prompt from task + state + tools + paths +
    recent window, parsed into a validated directive."""
    summary = _state_summary(state)
    prompt = build_directive_prompt(task, summary, transcript.render_window(),
                                    tuple(tools), ctx)
    reply = planner.plan(PlanRequest(kind="directive", prompt=prompt,
                                     state_summary=summary,
                                     last_observation=transcript.last_observation(),
                                     tools=tuple(tools)))
    payload = reply.payload
    action = payload.get("action")
    if not isinstance(action, str) or not action:
        raise SchemaInvalid(f"directive has no action: {payload!r}")
    if action not in tools:
        raise UnknownTool(action)
    args = payload.get("args") or {}
    if not isinstance(args, dict):
        raise SchemaInvalid(f"directive args must be an object: {args!r}")
    return PlannerDirective(thought=str(payload.get("thought", "")),
                            action=action, args=args)


def act(directive: PlannerDirective, tools: dict,
        ctx: ProjectContext) -> ExecutionResult:
    """Dispatch to the named tool; expected failures come back as error
    results so the observation can carry them."""
    tool = tools[directive.action]
    try:
        return tool(directive.args)
    except (AutoductError, ValueError) as exc:
        return ExecutionResult(status="error", action=directive.action,
                               log=f"{type(exc).__name__}: {exc}")


def observe(result: ExecutionResult) -> str:
    """Fixed-format one-liner: status, action, first log line."""
    detail = result.first_line() or "done"
    return f"{result.status}: {result.action} → {detail}"[:OBSERVATION_LIMIT]


@dataclass
class _RunState:
    """Mutable bits the tools close over."""

    task: str
    pending_doc: object = None
    pending_stage: str | None = None
    last_failure: ExecutionResult | None = None
    finished: bool = False
    patch_actions: int = 0
    stage_times: dict = field(default_factory=dict)


def build_tools(ctx: ProjectContext, planner: PlannerBase,
                executor: TaskExecutor, state: WorkflowState,
                run: _RunState) -> dict:
    """The registered tool set; every tool returns an ExecutionResult."""
    state_path = ctx.path("state_file")

    def _generate(stage: str, name: str) -> ExecutionResult:
        doc = generate_task(planner, stage, ctx, run.task)
        save_document(doc, ctx.workspace / _DOC_FILES[stage])
        run.pending_doc, run.pending_stage = doc, stage
        state.mark_in_progress(stage)
        persist_state(state, state_path)
        return ExecutionResult(status="ok", action=name,
                               log=f"task document ready for {stage}")

    def generate_model(args: dict) -> ExecutionResult:
        return _generate("model_generation", "generate_model")

    def generate_training_task(args: dict) -> ExecutionResult:
        return _generate("training_execution", "generate_training_task")

    def generate_evaluation_task(args: dict) -> ExecutionResult:
        return _generate("evaluation_execution", "generate_evaluation_task")

    def execute_task(args: dict) -> ExecutionResult:
        if run.pending_doc is None:
            return ExecutionResult(status="error", action="execute_task",
                                   log="no task document pending; generate one first")
        result = executor.execute(run.pending_doc)
        result = ExecutionResult(status=result.status, action="execute_task",
                                 log=result.log, artifacts=result.artifacts,
                                 wall_time_s=result.wall_time_s,
                                 injected_fault=result.injected_fault)
        stage = run.pending_stage
        if result.ok:
            run.stage_times[stage] = run.stage_times.get(stage, 0.0) + result.wall_time_s
            state.mark_done(stage)
            run.pending_doc, run.pending_stage, run.last_failure = None, None, None
        else:
            state.record_error(stage)
            run.last_failure = result
        persist_state(state, state_path)
        return result

    def patch_task(args: dict) -> ExecutionResult:
        if run.pending_doc is None or run.last_failure is None:
            return ExecutionResult(status="error", action="patch_task",
                                   log="nothing to patch: no failed task on record")
        patched = tune_task(planner, run.pending_doc, run.last_failure.log)
        save_document(patched, ctx.workspace / _DOC_FILES[run.pending_stage])
        run.pending_doc = patched
        run.patch_actions += 1
        return ExecutionResult(status="ok", action="patch_task",
                               log="task patched from the error log")

    def read_log(args: dict) -> ExecutionResult:
        log = run.last_failure.log if run.last_failure else executor.last_log()
        return ExecutionResult(status="ok", action="read_log",
                               log=log or "no log recorded yet")

    def finish_task(args: dict) -> ExecutionResult:
        run.finished = True
        return ExecutionResult(status="ok", action="finish_task",
                               log="run marked finished")

    tools = {name: fn for name, fn in locals().items() if name in TOOL_NAMES}
    return {name: tools[name] for name in TOOL_NAMES}


def run_react(task: str, ctx: ProjectContext, planner: PlannerBase,
              executor: TaskExecutor | None = None,
              max_steps: int = DEFAULT_MAX_STEPS,
              window_size: int = DEFAULT_WINDOW, resume: bool = False,
              stop_after_stage: str | None = None) -> AgentOutcome:
    """Think -> act -> observe until finish_task or the step budget.

    Raises StepBudgetExhausted when the budget runs out; state stays
    resumable. Returns the outcome with the full transcript attached.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be at least 1")
    executor = executor or TaskExecutor(ctx)
    state = _load_or_create_state(ctx, "react", resume)
    state_path = ctx.path("state_file")
    transcript = Transcript(window_size)
    run = _RunState(task=task)
    tools = build_tools(ctx, planner, executor, state, run)

    for _ in range(max_steps):
        directive = think(planner, task, state, transcript, ctx, tools)
        result = act(directive, tools, ctx)
        transcript.append(ReActStep(directive.thought, directive.action,
                                    observe(result)))
        persist_state(state, state_path)
        if run.finished:
            break
        if stop_after_stage is not None and state.is_done(stop_after_stage):
            return AgentOutcome(report=None, state=state, transcript=transcript)
    else:
        raise StepBudgetExhausted(max_steps)

    if state.is_done("report_synthesis"):
        report = json.loads((ctx.path("report_dir") / "report.json")
                            .read_text(encoding="utf-8"))
    else:
        state.mark_in_progress("report_synthesis")
        persist_state(state, state_path)
        report = synthesize_report(ctx, state, planner,
                                   stage_times=run.stage_times,
                                   steps=len(transcript))
        state.mark_done("report_synthesis")
        persist_state(state, state_path)
    return AgentOutcome(report=report, state=state, transcript=transcript)
