"""Single source of truth for artifact locations within one run.

Every pipeline artifact is addressed by a role name, never by a loose
path, and every bound path must live under the workspace root. This is
what lets the loops exchange only role names while the executor enforces
confinement.
"""

from __future__ import annotations

from pathlib import Path

from ..errors import UnboundRole

STANDARD_ROLES = (
    "dataset_file",
    "model_spec",
    "training_spec",
    "evaluation_spec",
    "ensemble_dir",
    "report_dir",
    "state_file",
)

_DEFAULT_LAYOUT = {
    "dataset_file": "data.csv",
    "model_spec": "model_spec.json",
    "training_spec": "training_task.json",
    "evaluation_spec": "evaluation_task.json",
    "ensemble_dir": "ensemble",
    "report_dir": "report",
    "state_file": "state.json",
}


class ProjectContext:
    """Role -> path registry rooted at a workspace directory."""

    def __init__(self, workspace: str | Path, run_id: str):
        self.workspace = Path(workspace).resolve()
        if not self.workspace.is_dir():
            raise ValueError(f"workspace {self.workspace} is not a directory")
        self.run_id = run_id
        self._bindings: dict[str, Path] = {}

    @classmethod
    def create(cls, workspace: str | Path, run_id: str) -> "ProjectContext":
        """Context with the standard roles pre-bound to a fixed layout
        under the workspace."""
        ctx = cls(workspace, run_id)
        for role, rel in _DEFAULT_LAYOUT.items():
            ctx.bind(role, ctx.workspace / rel)
        return ctx

    def contains(self, path: str | Path) -> bool:
        resolved = Path(path).resolve()
        return resolved == self.workspace or self.workspace in resolved.parents

    def bind(self, role: str, path: str | Path) -> Path:
        if role in self._bindings:
            raise ValueError(f"role {role!r} is already bound to {self._bindings[role]}")
        resolved = Path(path).resolve()
        if not self.contains(resolved):
            raise ValueError(f"{resolved} is outside the workspace {self.workspace}")
        self._bindings[role] = resolved
        return resolved

    def path(self, role: str) -> Path:
        try:
            return self._bindings[role]
        except KeyError:
            raise UnboundRole(role) from None

    def is_bound(self, role: str) -> bool:
        return role in self._bindings

    def roles(self) -> dict[str, str]:
        return {role: str(path) for role, path in sorted(self._bindings.items())}
