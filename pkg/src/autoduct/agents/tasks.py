"""Declarative task documents: the pipeline's stand-in for generated
scripts.

A task document fully describes one stage (model / train / evaluate) as
JSON and is validated against its kind's schema before anything
executes. This keeps the generate -> execute -> tune loop intact while
making execution sandbox-friendly: the engine interprets documents, it
never runs planner-supplied code. `render_script` produces a
human-readable rendering of the actions a document implies, for audit
logs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import jsonschema

from ..errors import SchemaInvalid
from ..neural_net import ActivationKind

TASK_FORMAT_VERSION = 1

_ACTIVATION_VALUES = [kind.value for kind in ActivationKind]

_SPLIT_SCHEMA = {
    "type": "object",
    "properties": {
        "fractions": {"type": "array", "items": {"type": "number", "minimum": 0},
                      "minItems": 3, "maxItems": 3},
        "seed": {"type": "integer"},
    },
    "required": ["fractions", "seed"],
    "additionalProperties": False,
}

# optional per-document override of role paths; the executor checks every
# entry against the workspace root
_PATHS_SCHEMA = {"type": "object", "additionalProperties": {"type": "string"}}

_MODEL_SCHEMA = {
    "type": "object",
    "properties": {
        "input_dim": {"type": "integer", "minimum": 1},
        "members": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {
                    "hidden_layers": {"type": "integer", "minimum": 1},
                    "hidden_units": {"type": "integer", "minimum": 1},
                    "activation": {"enum": _ACTIVATION_VALUES},
                    "dropout_rate": {"type": "number", "minimum": 0.0, "maximum": 0.3},
                },
                "required": ["hidden_layers", "hidden_units", "activation",
                             "dropout_rate"],
                "additionalProperties": False,
            },
        },
        "output_role": {"type": "string"},
        "paths": _PATHS_SCHEMA,
    },
    "required": ["input_dim", "members", "output_role"],
    "additionalProperties": False,
}

_TRAIN_SCHEMA = {
    "type": "object",
    "properties": {
        "data_role": {"type": "string"},
        "model_role": {"type": "string"},
        "output_role": {"type": "string"},
        "split": _SPLIT_SCHEMA,
        "optimizer": {
            "type": "object",
            "properties": {
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "weight_decay": {"type": "number", "minimum": 0},
                "batch_size": {"type": "integer", "minimum": 1},
                "epochs": {"type": "integer", "minimum": 1},
                "patience": {"type": "integer", "minimum": 0},
                "base_seed": {"type": "integer"},
            },
            "required": ["learning_rate", "weight_decay", "batch_size", "epochs",
                         "patience", "base_seed"],
            "additionalProperties": False,
        },
        "paths": _PATHS_SCHEMA,
    },
    "required": ["data_role", "model_role", "output_role", "split", "optimizer"],
    "additionalProperties": False,
}

_EVALUATE_SCHEMA = {
    "type": "object",
    "properties": {
        "data_role": {"type": "string"},
        "ensemble_role": {"type": "string"},
        "output_role": {"type": "string"},
        "split": _SPLIT_SCHEMA,
        "level": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "metrics": {
            "type": "array",
            "minItems": 1,
            "items": {"enum": ["rmse", "mape", "rmspe"]},
            "uniqueItems": True,
        },
        "slices": {"type": "array", "items": {"type": "object"}},
        "paths": _PATHS_SCHEMA,
    },
    "required": ["data_role", "ensemble_role", "output_role", "split", "level",
                 "metrics"],
    "additionalProperties": False,
}

_SCHEMAS = {"model": _MODEL_SCHEMA, "train": _TRAIN_SCHEMA, "evaluate": _EVALUATE_SCHEMA}


@dataclass(frozen=True)
class TaskDocument:
    kind: str
    payload: dict
    provenance: dict
    version: int = TASK_FORMAT_VERSION

    def to_dict(self) -> dict:
        return {"version": self.version, "kind": self.kind,
                "payload": self.payload, "provenance": self.provenance}

    @classmethod
    def from_dict(cls, doc: dict) -> "TaskDocument":
        return cls(kind=doc["kind"], payload=doc["payload"],
                   provenance=doc.get("provenance", {}),
                   version=int(doc.get("version", TASK_FORMAT_VERSION)))

    def patched(self, payload: dict, extra_provenance: dict) -> "TaskDocument":
        provenance = dict(self.provenance)
        provenance["patch_count"] = int(provenance.get("patch_count", 0)) + 1
        provenance.update(extra_provenance)
        return replace(self, payload=payload, provenance=provenance)


def validate_document(doc: TaskDocument) -> TaskDocument:
    """Schema gate: raises SchemaInvalid for anything the engine should
    never see. Returns the document to allow call chaining."""
    if doc.version != TASK_FORMAT_VERSION:
        raise SchemaInvalid(f"unsupported task document version {doc.version!r}")
    schema = _SCHEMAS.get(doc.kind)
    if schema is None:
        raise SchemaInvalid(f"unknown task kind {doc.kind!r}")
    try:
        jsonschema.validate(doc.payload, schema)
    except jsonschema.ValidationError as exc:
        raise SchemaInvalid(f"{doc.kind} payload invalid: {exc.message}") from exc
    return doc


def save_document(doc: TaskDocument, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump(doc.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def render_script(doc: TaskDocument) -> str:
    """Human-readable rendering of the actions a document implies.

    Purely for audit: the engine executes the document, never this text.
    """
    lines = [f"# task: {doc.kind} (document v{doc.version})"]
    p = doc.payload
    if doc.kind == "model":
        lines.append(f"# declare ensemble of {len(p['members'])} member networks")
        for i, m in enumerate(p["members"]):
            lines.append(f"member[{i}] = mlp(input_dim={p['input_dim']}, "
                         f"layers={m['hidden_layers']}, units={m['hidden_units']}, "
                         f"activation={m['activation']}, dropout={m['dropout_rate']})")
        lines.append(f"write_model_spec(role={p['output_role']!r})")
    elif doc.kind == "train":
        opt = p["optimizer"]
        lines.append(f"data = load_csv(role={p['data_role']!r})")
        lines.append(f"splits = split(data, fractions={p['split']['fractions']}, "
                     f"seed={p['split']['seed']})")
        lines.append(f"spec = read_model_spec(role={p['model_role']!r})")
        lines.append(f"ensemble = train_ensemble(splits, spec, lr={opt['learning_rate']}, "
                     f"weight_decay={opt['weight_decay']}, batch={opt['batch_size']}, "
                     f"epochs={opt['epochs']}, patience={opt['patience']}, "
                     f"base_seed={opt['base_seed']})")
        lines.append(f"save_ensemble(role={p['output_role']!r})")
    elif doc.kind == "evaluate":
        lines.append(f"data = load_csv(role={p['data_role']!r})")
        lines.append(f"test = split(data, fractions={p['split']['fractions']}, "
                     f"seed={p['split']['seed']}).test")
        lines.append(f"ensemble = load_ensemble(role={p['ensemble_role']!r})")
        lines.append(f"metrics = evaluate(ensemble, test, metrics={p['metrics']}, "
                     f"level={p['level']})")
        if p.get("slices"):
            lines.append(f"slices = evaluate_slices(ensemble, {len(p['slices'])} specs)")
        lines.append(f"export_report(role={p['output_role']!r})")
    return "\n".join(lines) + "\n"
