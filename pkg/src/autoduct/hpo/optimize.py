"""Search orchestration: quasi-random warmup, surrogate-guided
proposals, multi-run merging, and top-k selection.

One run evaluates n_sobol quasi-random configurations, then alternates
fit-surrogate / propose / evaluate for n_bo steps. Trials that diverge
during training are kept on the board with a penalized objective (twice
the worst successful RMSE seen so far, recomputed as results arrive) so
the surrogate learns to avoid the region without handling infinities.

Several independent runs use distinct scramble seeds and are merged into
one leaderboard; the best k configurations across all runs seed the
final ensemble.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .. import neural_net
from ..dataset import Normalizer, SplitDataset
from ..errors import DivergedLoss, InsufficientTrials, IoFailure
from ..rng import derive_seed
from .gp import fit_gp, propose_next
from .sobol import sample_sobol
from .space import SearchSpace, TrialConfig, encode

# objective assigned to a diverged trial when no trial has succeeded yet
_FALLBACK_PENALTY = 1e6
_PENALTY_FACTOR = 2.0

Evaluator = Callable[[TrialConfig], "TrialResult"]


@dataclass(frozen=True)
class TrialResult:
    config: TrialConfig
    rmse: float | None          # physical units; None when diverged
    status: str                 # "ok" | "diverged"
    wall_time_s: float = field(compare=False, default=0.0)

    def __post_init__(self):
        if self.status not in ("ok", "diverged"):
            raise ValueError(f"unknown status {self.status!r}")
        if self.status == "ok":
            if self.rmse is None or not math.isfinite(self.rmse) or self.rmse < 0:
                raise ValueError(f"ok trial needs a finite non-negative RMSE, got {self.rmse}")

    def sort_key(self) -> tuple:
        rmse = self.rmse if self.status == "ok" else math.inf
        return (rmse, self.config.run_id, self.config.trial_id)

    def to_dict(self) -> dict:
        return {"run_id": self.config.run_id, "trial_id": self.config.trial_id,
                "origin": self.config.origin, "config": self.config.to_dict(),
                "objective": self.rmse, "status": self.status,
                "wall_time_s": self.wall_time_s}


@dataclass(frozen=True)
class Leaderboard:
    results: tuple[TrialResult, ...]

    def sorted_results(self) -> list[TrialResult]:
        return sorted(self.results, key=TrialResult.sort_key)

    def ok_results(self) -> list[TrialResult]:
        return [r for r in self.results if r.status == "ok"]

    def best(self) -> TrialResult:
        ok = self.ok_results()
        if not ok:
            raise InsufficientTrials("no successful trials on the board")
        return min(ok, key=TrialResult.sort_key)

    def run_bests(self) -> dict[int, TrialResult]:
        bests: dict[int, TrialResult] = {}
        for r in self.ok_results():
            run = r.config.run_id
            if run not in bests or r.sort_key() < bests[run].sort_key():
                bests[run] = r
        return bests

    def merged_with(self, other: "Leaderboard") -> "Leaderboard":
        return Leaderboard(self.results + other.results)


def _objective_for_gp(results: list[TrialResult]) -> list[float]:
    """Objectives with the divergence penalty applied at current board
    state."""
    ok_rmses = [r.rmse for r in results if r.status == "ok"]
    penalty = _PENALTY_FACTOR * max(ok_rmses) if ok_rmses else _FALLBACK_PENALTY
    return [r.rmse if r.status == "ok" else penalty for r in results]


def _append_log(log_path: Path | None, result: TrialResult) -> None:
    if log_path is None:
        return
    try:
        with log_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(result.to_dict(), sort_keys=True) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot append to trial log {log_path}: {exc}") from exc


def run_bo(space: SearchSpace, n_sobol: int, n_bo: int, evaluator: Evaluator,
           seed: int, run_id: int = 0,
           log_path: str | Path | None = None) -> Leaderboard:
    """One optimization run; trials are numbered 0..n_sobol+n_bo-1 in
    evaluation order."""
    if n_sobol < 2:
        raise ValueError("need at least two warmup points to fit the surrogate")
    if n_bo < 0:
        raise ValueError("surrogate-stage budget must be non-negative")
    log_path = Path(log_path) if log_path is not None else None

    results: list[TrialResult] = []
    warmup = sample_sobol(space, n_sobol, shift_seed=derive_seed(seed, "sobol-init"))
    for i, cfg in enumerate(warmup):
        cfg = replace(cfg, trial_id=i, run_id=run_id)
        result = evaluator(cfg)
        result = replace(result, config=cfg)
        results.append(result)
        _append_log(log_path, result)

    for step in range(n_bo):
        objectives = _objective_for_gp(results)
        observations = [(encode(r.config, space), obj)
                        for r, obj in zip(results, objectives)]
        gp = fit_gp(observations)
        proposal = propose_next(gp, space, seed=derive_seed(seed, f"propose:{step}"))
        cfg = replace(proposal, trial_id=n_sobol + step, run_id=run_id)
        result = evaluator(cfg)
        result = replace(result, config=cfg)
        results.append(result)
        _append_log(log_path, result)

    return Leaderboard(tuple(results))


def run_parallel_bo(space: SearchSpace, evaluator: Evaluator, run_count: int = 5,
                    n_sobol: int = 16, n_bo: int = 32,
                    seeds: list[int] | None = None,
                    log_path: str | Path | None = None) -> Leaderboard:
    """Independent runs merged into one board. run ids are 0..run_count-1
    and seeds must be pairwise distinct so the runs explore differently."""
    if run_count < 1:
        raise ValueError("need at least one run")
    if seeds is None:
        seeds = list(range(run_count))
    if len(seeds) != run_count:
        raise ValueError("need exactly one seed per run")
    if len(set(seeds)) != len(seeds):
        raise ValueError(f"run seeds must be pairwise distinct, got {seeds}")

    board = Leaderboard(())
    for run_id, seed in enumerate(seeds):
        run_board = run_bo(space, n_sobol, n_bo, evaluator, seed=seed,
                           run_id=run_id, log_path=log_path)
        board = board.merged_with(run_board)
    return board


def select_top_k(board: Leaderboard, k: int = 15) -> list[TrialConfig]:
    """The k configurations with the lowest validation RMSE; ties keep
    board order (run id, then trial id)."""
    if k < 1:
        raise ValueError("k must be at least 1")
    ok = sorted(board.ok_results(), key=TrialResult.sort_key)
    if len(ok) < k:
        raise InsufficientTrials(f"need {k} successful trials, board has {len(ok)}")
    return [r.config for r in ok[:k]]


def trial_to_configs(tc: TrialConfig, input_dim: int, epochs: int, patience: int,
                     seed: int) -> tuple[neural_net.MLPConfig, neural_net.TrainConfig]:
    mlp = neural_net.MLPConfig(input_dim=input_dim, hidden_layers=tc.hidden_layers,
                               hidden_units=tc.hidden_units, activation=tc.activation,
                               dropout_rate=tc.dropout_rate)
    train = neural_net.TrainConfig(learning_rate=tc.learning_rate,
                                   weight_decay=tc.weight_decay,
                                   batch_size=tc.batch_size, epochs=epochs,
                                   seed=seed, patience=patience)
    return mlp, train


def make_trial_evaluator(splits: SplitDataset, normalizer: Normalizer,
                         epochs: int = 60, patience: int = 10,
                         base_seed: int = 0) -> Evaluator:
    """Evaluator that trains one network per configuration and scores it
    by validation RMSE in physical units.

    Total by construction: training divergence becomes a diverged-status
    result instead of an exception. The per-trial seed is derived from
    (base_seed, run id, trial id) so re-running a board is reproducible.
    """
    val_x = splits.validation.features
    val_y = splits.validation.targets

    def evaluate(tc: TrialConfig) -> TrialResult:
        started = time.perf_counter()
        seed = derive_seed(base_seed, f"trial:{tc.run_id}:{tc.trial_id}")
        mlp_cfg, train_cfg = trial_to_configs(tc, input_dim=val_x.shape[1],
                                              epochs=epochs, patience=patience,
                                              seed=seed)
        try:
            params, _ = neural_net.train(splits, normalizer, mlp_cfg, train_cfg)
        except DivergedLoss:
            return TrialResult(tc, None, "diverged",
                               time.perf_counter() - started)
        preds = neural_net.predict_batch(params, mlp_cfg, normalizer, val_x)
        mu = np.array([p.mu for p in preds])
        rmse = float(np.sqrt(np.mean((val_y - mu) ** 2)))
        return TrialResult(tc, rmse, "ok", time.perf_counter() - started)

    return evaluate
