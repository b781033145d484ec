"""Workspace-confined execution of task documents.

The executor is the only component that touches the numerical engine on
behalf of an agent loop. It interprets validated documents, resolves
every artifact through the project context (honoring per-document path
overrides that must stay inside the workspace), and reports every
failure, engine errors included, inside the returned result instead of
raising. A fault injector can force synthetic failures on chosen
attempt numbers to drill the recovery paths deterministically.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from .. import ensemble as ensemble_mod
from ..dataset import SliceSpec, fit_normalizer, load_csv, split
from ..evaluation import evaluate_model, evaluate_slices
from ..neural_net import ActivationKind, MLPConfig, TrainConfig
from ..report_export import export_report
from .context import ProjectContext
from .tasks import TaskDocument, validate_document

# Recognizable first-line marker for synthetic failures. The scripted
# planner keys on it: an injected fault is external to the document, so
# the right "patch" is to retry unchanged.
FAULT_MARKER = "injected fault"

MODEL_SPEC_VERSION = 1

_KIND_ALIASES = {
    "model": "model", "model_generation": "model",
    "train": "train", "training": "train", "training_execution": "train",
    "evaluate": "evaluate", "evaluation": "evaluate",
    "evaluation_execution": "evaluate",
}


@dataclass(frozen=True)
class ExecutionResult:
    """Uniform outcome record for every dispatched action."""

    status: str
    action: str
    log: str
    artifacts: dict[str, str] = field(default_factory=dict)
    wall_time_s: float = field(default=0.0, compare=False)
    injected_fault: bool = False

    def __post_init__(self):
        if self.status not in ("ok", "error"):
            raise ValueError(f"unknown status {self.status!r}")
        if self.status == "error" and not self.log.strip():
            raise ValueError("error results must carry a non-empty log")

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def first_line(self) -> str:
        return self.log.splitlines()[0] if self.log else ""


def parse_fault_spec(spec: str) -> dict[str, frozenset[int]]:
    """Parse e.g. "stage=evaluate,attempt=1" or
    "stage=train,attempts=1-3"; multiple clauses separated by ";"."""
    plan: dict[str, set[int]] = {}
    for clause in spec.split(";"):
        clause = clause.strip()
        if not clause:
            continue
        stage = None
        attempts: set[int] = set()
        for part in clause.split(","):
            key, _, value = part.strip().partition("=")
            if not value:
                raise ValueError(f"malformed fault clause {clause!r}")
            if key == "stage":
                stage = _KIND_ALIASES.get(value)
                if stage is None:
                    raise ValueError(f"unknown stage {value!r} in fault spec")
            elif key == "attempt":
                attempts.add(int(value))
            elif key == "attempts":
                lo, _, hi = value.partition("-")
                attempts.update(range(int(lo), int(hi or lo) + 1))
            else:
                raise ValueError(f"unknown fault spec key {key!r}")
        if stage is None or not attempts:
            raise ValueError(f"fault clause {clause!r} needs a stage and attempts")
        if min(attempts) < 1:
            raise ValueError("fault attempts are 1-based")
        plan.setdefault(stage, set()).update(attempts)
    return {kind: frozenset(att) for kind, att in plan.items()}


class FaultInjector:
    """Fails the n-th execution attempt of a task kind with a synthetic
    error. Attempt counting is per kind and 1-based."""

    def __init__(self, plan: dict[str, frozenset[int]]):
        self.plan = {kind: frozenset(att) for kind, att in plan.items()}
        self._calls: dict[str, int] = {}

    @classmethod
    def from_spec(cls, spec: str) -> "FaultInjector":
        return cls(parse_fault_spec(spec))

    def calls(self, kind: str) -> int:
        return self._calls.get(kind, 0)

    def should_fail(self, kind: str) -> bool:
        self._calls[kind] = self._calls.get(kind, 0) + 1
        return self._calls[kind] in self.plan.get(kind, frozenset())

    def synthetic_log(self, kind: str) -> str:
        attempt = self._calls.get(kind, 0)
        return (f"RuntimeError: {FAULT_MARKER} armed for {kind} attempt {attempt}\n"
                f"simulated engine failure; retry once the injector disarms")


class TaskExecutor:
    """Dispatches model / train / evaluate documents to the engine.

    All reads and writes stay under the workspace root; a document may
    override role paths but an override escaping the workspace turns
    into an error result whose log names the offending path. Engine
    exceptions are captured, never propagated.
    """

    def __init__(self, ctx: ProjectContext, injector: FaultInjector | None = None):
        self.ctx = ctx
        self.injector = injector
        self.history: list[ExecutionResult] = []

    def execute(self, doc: TaskDocument) -> ExecutionResult:
        start = time.perf_counter()
        try:
            validate_document(doc)
        except Exception as exc:
            return self._record(self._error(doc.kind, exc, start))

        if self.injector is not None and self.injector.should_fail(doc.kind):
            result = ExecutionResult(
                status="error", action=doc.kind,
                log=self.injector.synthetic_log(doc.kind),
                wall_time_s=time.perf_counter() - start, injected_fault=True)
            return self._record(result)

        try:
            runner = {"model": self._run_model, "train": self._run_train,
                      "evaluate": self._run_evaluate}[doc.kind]
            log, artifacts = runner(doc)
            for role, path in artifacts.items():
                if not self.ctx.is_bound(role):
                    self.ctx.bind(role, path)
            result = ExecutionResult(status="ok", action=doc.kind, log=log,
                                     artifacts=artifacts,
                                     wall_time_s=time.perf_counter() - start)
        except Exception as exc:
            result = self._error(doc.kind, exc, start)
        return self._record(result)

    def last_log(self) -> str:
        for result in reversed(self.history):
            if not result.ok:
                return result.log
        return self.history[-1].log if self.history else ""

    def _record(self, result: ExecutionResult) -> ExecutionResult:
        self.history.append(result)
        return result

    @staticmethod
    def _error(action: str, exc: Exception, start: float) -> ExecutionResult:
        return ExecutionResult(status="error", action=action,
                               log=f"{type(exc).__name__}: {exc}",
                               wall_time_s=time.perf_counter() - start)

    def _resolve(self, doc: TaskDocument, role: str) -> Path:
        overrides = doc.payload.get("paths") or {}
        if role in overrides:
            raw = Path(overrides[role])
            resolved = (raw if raw.is_absolute() else self.ctx.workspace / raw).resolve()
            if not self.ctx.contains(resolved):
                raise ValueError(f"path for role {role!r} escapes the workspace: {resolved}")
            return resolved
        return self.ctx.path(role)

    def _run_model(self, doc: TaskDocument) -> tuple[str, dict[str, str]]:
        p = doc.payload
        out = self._resolve(doc, p["output_role"])
        spec = {"version": MODEL_SPEC_VERSION, "input_dim": p["input_dim"],
                "members": p["members"]}
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(spec, indent=2, sort_keys=True) + "\n",
                       encoding="utf-8")
        log = f"wrote model spec with {len(p['members'])} members to {out.name}"
        return log, {p["output_role"]: str(out)}

    def _run_train(self, doc: TaskDocument) -> tuple[str, dict[str, str]]:
        p = doc.payload
        data_path = self._resolve(doc, p["data_role"])
        model_path = self._resolve(doc, p["model_role"])
        out_dir = self._resolve(doc, p["output_role"])

        ds = load_csv(data_path)
        splits = split(ds, tuple(p["split"]["fractions"]), p["split"]["seed"])
        normalizer = fit_normalizer(splits.train)
        spec = json.loads(model_path.read_text(encoding="utf-8"))
        opt = p["optimizer"]
        member_configs = []
        for i, m in enumerate(spec["members"]):
            mlp_cfg = MLPConfig(input_dim=int(spec["input_dim"]),
                                hidden_layers=m["hidden_layers"],
                                hidden_units=m["hidden_units"],
                                activation=ActivationKind(m["activation"]),
                                dropout_rate=m["dropout_rate"])
            train_cfg = TrainConfig(learning_rate=opt["learning_rate"],
                                    weight_decay=opt["weight_decay"],
                                    batch_size=opt["batch_size"],
                                    epochs=opt["epochs"],
                                    seed=opt["base_seed"] + i,
                                    patience=opt["patience"])
            member_configs.append((mlp_cfg, train_cfg))
        ens = ensemble_mod.train_ensemble(splits, normalizer, member_configs)
        ensemble_mod.save_ensemble(ens, out_dir)
        log = (f"trained {ens.size} members on {len(splits.train)} rows "
               f"(val {len(splits.validation)}, test {len(splits.test)}); "
               f"saved to {out_dir.name}")
        return log, {p["output_role"]: str(out_dir)}

    def _run_evaluate(self, doc: TaskDocument) -> tuple[str, dict[str, str]]:
        p = doc.payload
        data_path = self._resolve(doc, p["data_role"])
        ens_dir = self._resolve(doc, p["ensemble_role"])
        report_dir = self._resolve(doc, p["output_role"])

        ens = ensemble_mod.load_ensemble(ens_dir)
        ds = load_csv(data_path)
        splits = split(ds, tuple(p["split"]["fractions"]), p["split"]["seed"])
        me = evaluate_model(ens, splits.test, level=p["level"])

        slice_report = None
        if p.get("slices"):
            specs = [SliceSpec.from_dict(entry) for entry in p["slices"]]
            slice_report = evaluate_slices(ens, specs, level=p["level"])

        report_dir.mkdir(parents=True, exist_ok=True)
        written = export_report(me, slice_report, report_dir)
        columns = {"rmse": "rmse_kw_m2", "mape": "mape_pct", "rmspe": "rmspe_pct"}
        keep = {"split", "n", "ratio_mean", "ratio_std", "ratio_inside_frac"}
        keep.update(columns[name] for name in p["metrics"])
        metrics = {k: v for k, v in me.report.to_dict().items() if k in keep}
        payload = {"metrics": metrics, "level": p["level"],
                   "files": [w.name for w in written]}
        (report_dir / "metrics.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        log = (f"evaluated {metrics['n']} test rows; "
               + "; ".join(f"{k}={metrics[k]:.3f}" for k in sorted(metrics)
                           if isinstance(metrics[k], float))
               + f"; wrote {len(written) + 1} files to {report_dir.name}")
        return log, {p["output_role"]: str(report_dir)}
