"""Deep ensembles of independently trained Gaussian-output networks.

Each of the M members emits a Gaussian N(mu_m, var_m) for an input x.
The ensemble prediction is the equally weighted mixture of those
Gaussians; its first two moments give the reported point estimate and
uncertainty split:

    mean      = (1/M) sum_m mu_m
    aleatory  = (1/M) sum_m var_m              (mean member variance)
    epistemic = (1/M) sum_m (mu_m - mean)^2    (spread of member means)
    total     = aleatory + epistemic           (law of total variance)

Members may have heterogeneous architectures; aggregation only requires
each member to produce a Gaussian in the same target units.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import neural_net
from .dataset import Normalizer, SplitDataset
from .errors import (
    AutoductError,
    CorruptArtifact,
    EmptyEnsemble,
    NonPositiveVariance,
    VersionMismatch,
)
from .neural_net import GaussianPrediction, MLPConfig, Parameters, TrainConfig
from .stats import central_interval_z, normal_pdf

ENSEMBLE_FORMAT_VERSION = 1

# Member-count presets: the full baseline uses the top 15 search trials,
# the fast preset 5.
DEFAULT_MEMBERS = 15
FAST_MEMBERS = 5


@dataclass(frozen=True)
class EnsembleMember:
    params: Parameters
    config: MLPConfig
    seed: int
    provenance: str


@dataclass(frozen=True)
class EnsemblePrediction:
    mean: float
    aleatory_var: float
    epistemic_var: float
    total_var: float
    member_means: tuple[float, ...]
    member_vars: tuple[float, ...]


@dataclass(frozen=True)
class Ensemble:
    members: tuple[EnsembleMember, ...]
    normalizer: Normalizer

    def __post_init__(self):
        if not self.members:
            raise EmptyEnsemble("ensemble needs at least one member")
        dims = {m.config.input_dim for m in self.members}
        if len(dims) != 1:
            raise ValueError(f"members disagree on input dimension: {sorted(dims)}")

    @property
    def size(self) -> int:
        return len(self.members)

    def member_predictions(self, raw_inputs: np.ndarray) -> list[list[GaussianPrediction]]:
        """Per-input list of per-member Gaussians, in member order."""
        per_member = [neural_net.predict_batch(m.params, m.config, self.normalizer,
                                               raw_inputs)
                      for m in self.members]
        return [list(column) for column in zip(*per_member)]

    def predict(self, raw_inputs: np.ndarray) -> list[EnsemblePrediction]:
        return [aggregate(preds) for preds in self.member_predictions(raw_inputs)]

    def predict_one(self, raw_input: np.ndarray) -> EnsemblePrediction:
        return self.predict(np.asarray(raw_input, dtype=np.float64)[None, :])[0]


def train_ensemble(splits: SplitDataset, normalizer: Normalizer,
                   member_configs: list[tuple[MLPConfig, TrainConfig]],
                   provenance: list[str] | None = None) -> Ensemble:
    """Train every member independently with its own seed.

    Seeds must be pairwise distinct, otherwise two members would be
    identical and contribute nothing. Any training error is re-raised
    with a `member_index` attribute identifying the failing member.
    """
    if not member_configs:
        raise EmptyEnsemble("need at least one member config")
    seeds = [tc.seed for _, tc in member_configs]
    if len(set(seeds)) != len(seeds):
        raise ValueError(f"member seeds must be pairwise distinct, got {seeds}")
    if provenance is not None and len(provenance) != len(member_configs):
        raise ValueError("provenance list must match member count")

    members = []
    for i, (mlp_cfg, train_cfg) in enumerate(member_configs):
        try:
            params, _ = neural_net.train(splits, normalizer, mlp_cfg, train_cfg)
        except AutoductError as exc:
            exc.member_index = i
            raise
        tag = provenance[i] if provenance is not None else f"seed={train_cfg.seed}"
        members.append(EnsembleMember(params, mlp_cfg, train_cfg.seed, tag))
    return Ensemble(tuple(members), normalizer)


def aggregate(member_preds: list[GaussianPrediction]) -> EnsemblePrediction:
    """Moments of the equally weighted Gaussian mixture.

    Epistemic variance uses the population form (divide by M), so the
    decomposition aleatory + epistemic reproduces the mixture's second
    central moment exactly.
    """
    if not member_preds:
        raise EmptyEnsemble("no member predictions to aggregate")
    mus = np.array([p.mu for p in member_preds])
    vars_ = np.array([p.var for p in member_preds])
    if not (np.all(np.isfinite(mus)) and np.all(np.isfinite(vars_))):
        raise ValueError("member predictions must be finite")
    mean = float(mus.mean())
    aleatory = float(vars_.mean())
    epistemic = float(((mus - mean) ** 2).mean())
    return EnsemblePrediction(mean=mean, aleatory_var=aleatory,
                              epistemic_var=epistemic,
                              total_var=aleatory + epistemic,
                              member_means=tuple(float(m) for m in mus),
                              member_vars=tuple(float(v) for v in vars_))


def predictive_density(member_preds: list[GaussianPrediction], y: float) -> float:
    """Mixture density (1/M) sum_m N(y; mu_m, var_m)."""
    if not member_preds:
        raise EmptyEnsemble("no member predictions")
    for p in member_preds:
        if p.var <= 0:
            raise NonPositiveVariance(f"member variance {p.var} is not positive")
    return sum(normal_pdf(y, p.mu, p.var) for p in member_preds) / len(member_preds)


def interval(ep: EnsemblePrediction, level: float) -> tuple[float, float]:
    """Central interval under a Gaussian approximation of the mixture:
    mean +/- z(level) * sqrt(total_var)."""
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie strictly inside (0, 1), got {level}")
    half = central_interval_z(level) * math.sqrt(ep.total_var)
    return (ep.mean - half, ep.mean + half)


# --- persistence ----------------------------------------------------------

def save_ensemble(ens: Ensemble, path: str | Path) -> None:
    """Write a directory artifact: manifest.json plus one parameter
    document per member."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": ENSEMBLE_FORMAT_VERSION,
        "normalizer": ens.normalizer.to_dict(),
        "members": [],
    }
    for i, member in enumerate(ens.members):
        name = f"member_{i:03d}.json"
        doc = neural_net.params_to_doc(member.params, member.config, ens.normalizer)
        with (path / name).open("w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True)
            fh.write("\n")
        manifest["members"].append({"file": name, "seed": member.seed,
                                    "provenance": member.provenance})
    with (path / "manifest.json").open("w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_ensemble(path: str | Path) -> Ensemble:
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.is_file():
        raise CorruptArtifact(f"missing manifest: {manifest_path}")
    try:
        with manifest_path.open(encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptArtifact(f"unreadable manifest: {exc}") from exc

    version = manifest.get("format_version")
    if version != ENSEMBLE_FORMAT_VERSION:
        raise VersionMismatch(f"unsupported ensemble format {version!r}")

    try:
        normalizer = Normalizer.from_dict(manifest["normalizer"])
        entries = manifest["members"]
        if not isinstance(entries, list) or not entries:
            raise CorruptArtifact("manifest lists no members")
        members = []
        for entry in entries:
            member_path = path / entry["file"]
            try:
                with member_path.open(encoding="utf-8") as fh:
                    doc = json.load(fh)
            except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
                raise CorruptArtifact(f"unreadable member file {member_path}: {exc}") from exc
            params, cfg, _ = neural_net.params_from_doc(doc)
            members.append(EnsembleMember(params, cfg, int(entry["seed"]),
                                          str(entry["provenance"])))
    except (KeyError, TypeError) as exc:
        raise CorruptArtifact(f"malformed manifest: {exc}") from exc
    return Ensemble(tuple(members), normalizer)
