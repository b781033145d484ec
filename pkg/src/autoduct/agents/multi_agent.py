"""Supervisor loop: generate -> execute -> tune, stage by stage.

One supervisor routes everything. For each pipeline stage it asks the
planner to generate a task document, hands the document to the executor,
and on failure asks the planner to tune the document from the captured
log, retrying up to the configured bound. Subordinate roles never talk
to each other; results and error logs all pass through this loop. State
is persisted after every transition so a killed run resumes where it
stopped.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from ..errors import AutoductError, StageExhausted
from .context import ProjectContext
from .executor import ExecutionResult, TaskExecutor
from .planner import (PlanRequest, PlannerBase, build_patch_prompt,
                      build_task_prompt, prompt_digest)
from .report import synthesize_report
from .state import (STAGE_ORDER, WorkflowState, load_state, persist_state)
from .tasks import TaskDocument, save_document, validate_document

_STAGE_KINDS = {
    "model_generation": "model",
    "training_execution": "train",
    "evaluation_execution": "evaluate",
}

# where each stage's generated document is saved for audit
_DOC_FILES = {
    "model_generation": "model_task.json",
    "training_execution": None,       # bound role "training_spec"
    "evaluation_execution": None,     # bound role "evaluation_spec"
}
_DOC_ROLES = {
    "training_execution": "training_spec",
    "evaluation_execution": "evaluation_spec",
}


@dataclass
class AgentOutcome:
    """What a loop hands back: the synthesized report (None when the run
    was stopped early on purpose) and the final state."""

    report: dict | None
    state: WorkflowState
    transcript: object | None = None


def generate_task(planner: PlannerBase, stage: str, ctx: ProjectContext,
                  task: str = "CHF regression pipeline") -> TaskDocument:
    """Ask the planner for a stage's task document.

    The prompt is assembled here, at runtime, from the stage template and
    the exact workspace paths; its digest lands in the document
    provenance so identical contexts yield identical digests.
    """
    prompt = build_task_prompt(stage, ctx, task)
    reply = planner.plan(PlanRequest(kind="task", prompt=prompt, stage=stage))
    doc = TaskDocument(kind=_STAGE_KINDS[stage], payload=reply.payload,
                       provenance={"planner": planner.name, "stage": stage,
                                   "prompt_digest": prompt_digest(prompt)})
    return validate_document(doc)


def tune_task(planner: PlannerBase, doc: TaskDocument,
              error_log: str) -> TaskDocument:
    """Ask the planner for a corrected document given the failure log."""
    if not error_log.strip():
        raise ValueError("tune_task needs a non-empty error log")
    prompt = build_patch_prompt(doc, error_log)
    reply = planner.plan(PlanRequest(kind="patch", prompt=prompt, doc=doc,
                                     error_log=error_log))
    patched = doc.patched(reply.payload,
                          {"patched_by": planner.name,
                           "patch_digest": prompt_digest(prompt)})
    return validate_document(patched)


def execute_task(executor: TaskExecutor, doc: TaskDocument,
                 ctx: ProjectContext) -> ExecutionResult:
    if executor.ctx is not ctx:
        raise ValueError("executor is bound to a different context")
    return executor.execute(doc)


def _doc_path(ctx: ProjectContext, stage: str):
    role = _DOC_ROLES.get(stage)
    return ctx.path(role) if role else ctx.workspace / _DOC_FILES[stage]


def _load_or_create_state(ctx: ProjectContext, mode: str,
                          resume: bool) -> WorkflowState:
    state_path = ctx.path("state_file")
    if resume and state_path.exists():
        state = load_state(state_path)
        if state.run_id != ctx.run_id:
            raise ValueError(f"state belongs to run {state.run_id!r}, "
                             f"context is {ctx.run_id!r}")
        return state
    return WorkflowState(run_id=ctx.run_id, mode=mode)


def run_multi_agent(task: str, ctx: ProjectContext, planner: PlannerBase,
                    executor: TaskExecutor, max_retries: int = 3,
                    resume: bool = False,
                    stop_after_stage: str | None = None) -> AgentOutcome:
    """Algorithm: for each stage, generate the task, execute it, and on
    error tune and re-execute up to max_retries attempts total.

    Raises StageExhausted when a stage keeps failing; the state file is
    left failed-but-resumable. `stop_after_stage` ends the run cleanly
    after the named stage (a controlled substitute for kill -9 in resume
    drills).
    """
    if max_retries < 1:
        raise ValueError("max_retries must be at least 1")
    state = _load_or_create_state(ctx, "multi", resume)
    state_path = ctx.path("state_file")
    timings: dict[str, float] = {}

    for stage in STAGE_ORDER[:3]:
        if state.is_done(stage):
            continue
        state.mark_in_progress(stage)
        persist_state(state, state_path)
        try:
            doc = generate_task(planner, stage, ctx, task)
            save_document(doc, _doc_path(ctx, stage))

            attempts = 0
            while True:
                attempts += 1
                result = execute_task(executor, doc, ctx)
                if result.ok:
                    timings[stage] = timings.get(stage, 0.0) + result.wall_time_s
                    break
                state.record_error(stage)
                persist_state(state, state_path)
                if attempts >= max_retries:
                    state.mark_failed(stage)
                    persist_state(state, state_path)
                    raise StageExhausted(stage, state.error_count(stage))
                doc = tune_task(planner, doc, result.log)
                save_document(doc, _doc_path(ctx, stage))
        except StageExhausted:
            raise
        except AutoductError:
            state.mark_failed(stage)
            persist_state(state, state_path)
            raise
        state.mark_done(stage)
        persist_state(state, state_path)
        if stage == stop_after_stage:
            return AgentOutcome(report=None, state=state)

    if state.is_done("report_synthesis"):
        report_path = ctx.path("report_dir") / "report.json"
        report = json.loads(report_path.read_text(encoding="utf-8"))
    else:
        state.mark_in_progress("report_synthesis")
        persist_state(state, state_path)
        report = synthesize_report(ctx, state, planner, stage_times=timings)
        state.mark_done("report_synthesis")
        persist_state(state, state_path)
    return AgentOutcome(report=report, state=state)
