"""Persisted workflow state: the resume point for both agent loops.

The pipeline is a fixed sequence of four stages. Statuses move through
pending -> in_progress -> done, possibly via failed; once a stage is
done it never regresses, and a stage can only be done when everything
before it is done. The state file is JSON, written atomically
(temporary file, then rename) so a kill at any instant leaves either the
old or the new state, never a torn one.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from ..errors import CorruptState, VersionMismatch

STATE_FORMAT_VERSION = 1

STAGE_ORDER = (
    "model_generation",
    "training_execution",
    "evaluation_execution",
    "report_synthesis",
)

_STATUSES = ("pending", "in_progress", "done", "failed")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class StageState:
    status: str = "pending"
    error_count: int = 0
    updated_at: str = ""


@dataclass
class WorkflowState:
    run_id: str
    mode: str                      # "multi" | "react"
    stages: dict[str, StageState] = field(
        default_factory=lambda: {name: StageState() for name in STAGE_ORDER})

    def status(self, stage: str) -> str:
        return self._stage(stage).status

    def error_count(self, stage: str) -> int:
        return self._stage(stage).error_count

    def total_errors(self) -> int:
        return sum(s.error_count for s in self.stages.values())

    def is_done(self, stage: str) -> bool:
        return self.status(stage) == "done"

    def _stage(self, stage: str) -> StageState:
        if stage not in self.stages:
            raise KeyError(f"unknown stage {stage!r}")
        return self.stages[stage]

    def _set(self, stage: str, status: str) -> None:
        entry = self._stage(stage)
        if entry.status == "done" and status != "done":
            raise ValueError(f"stage {stage} is done and cannot regress to {status}")
        entry.status = status
        entry.updated_at = _now()

    def mark_in_progress(self, stage: str) -> None:
        self._set(stage, "in_progress")

    def mark_done(self, stage: str) -> None:
        order = STAGE_ORDER.index(stage)
        for prior in STAGE_ORDER[:order]:
            if not self.is_done(prior):
                raise ValueError(f"cannot finish {stage}: {prior} is {self.status(prior)}")
        self._set(stage, "done")

    def mark_failed(self, stage: str) -> None:
        self._set(stage, "failed")

    def record_error(self, stage: str) -> None:
        entry = self._stage(stage)
        entry.error_count += 1
        entry.updated_at = _now()

    def next_pending(self) -> str | None:
        for stage in STAGE_ORDER:
            if not self.is_done(stage):
                return stage
        return None

    def to_dict(self) -> dict:
        return {
            "version": STATE_FORMAT_VERSION,
            "run_id": self.run_id,
            "mode": self.mode,
            "stages": {name: {"status": s.status, "error_count": s.error_count,
                              "updated_at": s.updated_at}
                       for name, s in self.stages.items()},
        }


def persist_state(state: WorkflowState, path: str | Path) -> None:
    path = Path(path)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=".state-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(state.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


def load_state(path: str | Path) -> WorkflowState:
    path = Path(path)
    try:
        with path.open(encoding="utf-8") as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptState(f"unreadable state file {path}: {exc}") from exc

    if not isinstance(doc, dict):
        raise CorruptState("state document must be an object")
    version = doc.get("version")
    if version != STATE_FORMAT_VERSION:
        raise VersionMismatch(f"unsupported state format {version!r}")
    try:
        stages = {}
        for name in STAGE_ORDER:
            entry = doc["stages"][name]
            status = entry["status"]
            error_count = int(entry["error_count"])
            if status not in _STATUSES:
                raise CorruptState(f"stage {name} has unknown status {status!r}")
            if error_count < 0:
                raise CorruptState(f"stage {name} has negative error count")
            stages[name] = StageState(status, error_count, str(entry["updated_at"]))
        state = WorkflowState(run_id=str(doc["run_id"]), mode=str(doc["mode"]),
                              stages=stages)
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptState(f"malformed state file {path}: {exc}") from exc

    # monotonicity: a done stage implies every prior stage is done
    for i, name in enumerate(STAGE_ORDER):
        if state.is_done(name):
            for prior in STAGE_ORDER[:i]:
                if not state.is_done(prior):
                    raise CorruptState(f"{name} is done but {prior} is not")
    return state
