"""Tabular regression data handling for heat-flux style measurements.

Covers CSV ingestion, range validation against the reference measurement
envelope, reproducible train/validation/test splitting, z-score
normalization, synthetic data generation with a documented response
surface, and construction of single-feature "slice" evaluation grids.

All containers are immutable after construction and safe to share between
threads.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import (
    DegenerateFeature,
    EmptyFile,
    FractionSumInvalid,
    MissingColumn,
    NonFiniteValue,
)
from .rng import SplitMix64

FEATURE_NAMES = ("D", "L", "P", "G", "X")
TARGET_NAME = "CHF"

# Reference envelope of the measurement campaign this tooling targets:
# diameter [m], heated length [m], pressure [kPa], mass flux [kg/m^2/s],
# equilibrium quality [-], heat flux [kW/m^2].
REFERENCE_ENVELOPE = {
    "D": (2e-3, 16e-3),
    "L": (0.05, 20.0),
    "P": (100.0, 20000.0),
    "G": (8.2, 7964.0),
    "X": (-0.497, 0.999),
    "CHF": (50.0, 16339.3),
}


@dataclass(frozen=True)
class DataPoint:
    """One observation: five inputs and an optional measured heat flux."""

    d: float
    l: float
    p: float
    g: float
    x: float
    chf: float | None = None

    def features(self) -> tuple[float, float, float, float, float]:
        return (self.d, self.l, self.p, self.g, self.x)


class Dataset:
    """Ordered, immutable collection of observations.

    Features are held as an (n, 5) float array in the fixed column order
    (D, L, P, G, X); targets are either an (n,) array or None for
    input-only grids.
    """

    feature_names = FEATURE_NAMES

    def __init__(self, features: np.ndarray, targets: np.ndarray | None,
                 provenance: str):
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != len(FEATURE_NAMES):
            raise ValueError(f"features must be (n, {len(FEATURE_NAMES)})")
        if features.shape[0] == 0:
            raise ValueError("dataset must be non-empty")
        if not np.all(np.isfinite(features)):
            raise ValueError("features contain non-finite values")
        if targets is not None:
            targets = np.asarray(targets, dtype=np.float64)
            if targets.shape != (features.shape[0],):
                raise ValueError("targets must be a vector matching feature rows")
            if not np.all(np.isfinite(targets)):
                raise ValueError("targets contain non-finite values")
            targets.setflags(write=False)
        features.setflags(write=False)
        self.features = features
        self.targets = targets
        self.provenance = provenance

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def has_targets(self) -> bool:
        return self.targets is not None

    def column(self, name: str) -> np.ndarray:
        if name == TARGET_NAME:
            if self.targets is None:
                raise ValueError("dataset has no targets")
            return self.targets
        return self.features[:, FEATURE_NAMES.index(name)]

    def points(self) -> Iterator[DataPoint]:
        for i in range(len(self)):
            chf = None if self.targets is None else float(self.targets[i])
            row = self.features[i]
            yield DataPoint(float(row[0]), float(row[1]), float(row[2]),
                            float(row[3]), float(row[4]), chf)

    def subset(self, indices: np.ndarray, provenance: str) -> "Dataset":
        targets = None if self.targets is None else self.targets[indices]
        return Dataset(self.features[indices], targets, provenance)


@dataclass(frozen=True)
class SplitDataset:
    train: Dataset
    validation: Dataset
    test: Dataset
    fractions: tuple[float, float, float]
    seed: int


@dataclass(frozen=True)
class RangeEntry:
    """Range check for one column: how many values fall outside the
    reference envelope, plus the observed extrema."""

    outside: int
    observed_min: float
    observed_max: float
    envelope: tuple[float, float]


@dataclass(frozen=True)
class RangeReport:
    entries: dict[str, RangeEntry]

    @property
    def total_violations(self) -> int:
        return sum(e.outside for e in self.entries.values())

    @property
    def ok(self) -> bool:
        return self.total_violations == 0


def load_csv(path: str | Path, require_target: bool = True) -> Dataset:
    """Read a comma-separated file with header D,L,P,G,X[,CHF].

    Rows are kept in file order. Extra columns are ignored. A missing CHF
    column is accepted only when require_target is False (input-only
    grids).
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFile(f"{path} has no header row") from None
        header = [h.strip() for h in header]
        for name in FEATURE_NAMES:
            if name not in header:
                raise MissingColumn(name)
        has_target = TARGET_NAME in header
        if require_target and not has_target:
            raise MissingColumn(TARGET_NAME)
        cols = [header.index(name) for name in FEATURE_NAMES]
        target_col = header.index(TARGET_NAME) if has_target else None

        features: list[list[float]] = []
        targets: list[float] = []
        for row_number, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            values = []
            for name, col in zip(FEATURE_NAMES, cols):
                values.append(_parse_value(row, row_number, col, name))
            features.append(values)
            if target_col is not None:
                targets.append(_parse_value(row, row_number, target_col, TARGET_NAME))

    if not features:
        raise EmptyFile(f"{path} has no data rows")
    return Dataset(np.array(features), np.array(targets) if has_target else None,
                   provenance=str(path))


def _parse_value(row: list[str], row_number: int, col: int, name: str) -> float:
    try:
        value = float(row[col])
    except (ValueError, IndexError):
        raise NonFiniteValue(row_number, name) from None
    if not math.isfinite(value):
        raise NonFiniteValue(row_number, name)
    return value


def write_csv(ds: Dataset, path: str | Path) -> None:
    """Write a dataset back out in the canonical column order, full
    float64 precision."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if ds.has_targets:
            writer.writerow(list(FEATURE_NAMES) + [TARGET_NAME])
            for i in range(len(ds)):
                writer.writerow([f"{v:.17g}" for v in ds.features[i]]
                                + [f"{ds.targets[i]:.17g}"])
        else:
            writer.writerow(list(FEATURE_NAMES))
            for i in range(len(ds)):
                writer.writerow([f"{v:.17g}" for v in ds.features[i]])


def validate_ranges(ds: Dataset) -> RangeReport:
    """Count, per column, how many values fall outside the reference
    envelope. Purely diagnostic; never mutates or rejects data."""
    entries: dict[str, RangeEntry] = {}
    names = list(FEATURE_NAMES) + ([TARGET_NAME] if ds.has_targets else [])
    for name in names:
        values = ds.column(name)
        lo, hi = REFERENCE_ENVELOPE[name]
        outside = int(np.count_nonzero((values < lo) | (values > hi)))
        entries[name] = RangeEntry(outside, float(values.min()),
                                   float(values.max()), (lo, hi))
    return RangeReport(entries)


def split(ds: Dataset, fractions: tuple[float, float, float],
          seed: int) -> SplitDataset:
    """Shuffle-and-cut split.

    Fisher-Yates shuffle driven by SplitMix64 (see rng module) so the
    same (dataset, fractions, seed) always yields the same member lists on
    any platform. Sizes are floor(n*f_train) and floor(n*f_val); the
    remainder goes to test.
    """
    f_train, f_val, f_test = fractions
    if min(fractions) < 0 or abs(f_train + f_val + f_test - 1.0) > 1e-9:
        raise FractionSumInvalid(f"fractions {fractions} must be non-negative and sum to 1")
    n = len(ds)
    indices = list(range(n))
    SplitMix64(seed).shuffle(indices)
    # 1e-9 slack absorbs float representation error in n*f (e.g. 1000*0.72)
    n_train = int(math.floor(n * f_train + 1e-9))
    n_val = int(math.floor(n * f_val + 1e-9))
    order = np.array(indices, dtype=np.intp)
    tag = ds.provenance
    return SplitDataset(
        train=ds.subset(order[:n_train], f"{tag}#train"),
        validation=ds.subset(order[n_train:n_train + n_val], f"{tag}#validation"),
        test=ds.subset(order[n_train + n_val:], f"{tag}#test"),
        fractions=(f_train, f_val, f_test),
        seed=seed,
    )


@dataclass(frozen=True)
class Normalizer:
    """Per-column affine transform fitted on the training split only.

    z-score standardization: shift is the column mean, scale the
    population standard deviation. The target is handled the same way.
    """

    feature_shift: np.ndarray
    feature_scale: np.ndarray
    target_shift: float
    target_scale: float

    def transform_features(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.feature_shift) / self.feature_scale

    def inverse_features(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.feature_scale + self.feature_shift

    def transform_targets(self, y: np.ndarray) -> np.ndarray:
        return (np.asarray(y, dtype=np.float64) - self.target_shift) / self.target_scale

    def inverse_target_mean(self, mu: np.ndarray) -> np.ndarray:
        return np.asarray(mu, dtype=np.float64) * self.target_scale + self.target_shift

    def inverse_target_var(self, var: np.ndarray) -> np.ndarray:
        # affine law: Var(aY + b) = a^2 Var(Y)
        return np.asarray(var, dtype=np.float64) * self.target_scale**2

    @classmethod
    def identity(cls) -> "Normalizer":
        return cls(np.zeros(len(FEATURE_NAMES)), np.ones(len(FEATURE_NAMES)), 0.0, 1.0)

    def to_dict(self) -> dict:
        return {
            "feature_shift": [float(v) for v in self.feature_shift],
            "feature_scale": [float(v) for v in self.feature_scale],
            "target_shift": float(self.target_shift),
            "target_scale": float(self.target_scale),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Normalizer":
        return cls(
            feature_shift=np.array(doc["feature_shift"], dtype=np.float64),
            feature_scale=np.array(doc["feature_scale"], dtype=np.float64),
            target_shift=float(doc["target_shift"]),
            target_scale=float(doc["target_scale"]),
        )


def fit_normalizer(train: Dataset) -> Normalizer:
    if not train.has_targets:
        raise ValueError("normalizer requires a training split with targets")
    shift = train.features.mean(axis=0)
    scale = train.features.std(axis=0)
    for name, s in zip(FEATURE_NAMES, scale):
        if s == 0.0:
            raise DegenerateFeature(name)
    t_scale = float(train.targets.std())
    if t_scale == 0.0:
        raise DegenerateFeature(TARGET_NAME)
    return Normalizer(shift, scale, float(train.targets.mean()), t_scale)


# --- synthetic data -------------------------------------------------------

# Smooth response surface used by the synthetic generator. Power-law growth
# in mass flux and pressure, decreasing trend in quality and heated length,
# weak inverse dependence on diameter. Values stay well inside the
# reference envelope for inputs inside the envelope.
ORACLE_FORMULA = ("chf0 = 150 + 1200*(G/1000)^0.55*(P/10000)^0.30"
                  "*(1-0.45*X)*(1+0.25*exp(-L/2))*(0.008/D)^0.1")
NOISE_FORMULA = "sigma = noise_scale*(0.05*chf0 + 10)"


def synthetic_oracle(features: np.ndarray) -> np.ndarray:
    """Noise-free response surface, vectorized over (n, 5) inputs."""
    f = np.asarray(features, dtype=np.float64)
    d, l, p, g, x = (f[:, i] for i in range(5))
    return (150.0
            + 1200.0
            * (g / 1000.0) ** 0.55
            * (p / 10000.0) ** 0.30
            * (1.0 - 0.45 * x)
            * (1.0 + 0.25 * np.exp(-l / 2.0))
            * (0.008 / d) ** 0.1)


def synthetic_noise_std(features: np.ndarray, noise_scale: float) -> np.ndarray:
    """Input-dependent noise level matching NOISE_FORMULA."""
    return noise_scale * (0.05 * synthetic_oracle(features) + 10.0)


@dataclass(frozen=True)
class SyntheticConfig:
    n: int
    noise_scale: float = 1.0
    seed: int = 0
    # sampling ranges default to the reference envelope
    ranges: dict[str, tuple[float, float]] = field(
        default_factory=lambda: {k: REFERENCE_ENVELOPE[k] for k in FEATURE_NAMES})

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("sample count must be at least 1")
        if self.noise_scale < 0:
            raise ValueError("noise scale must be non-negative")


def generate_synthetic(cfg: SyntheticConfig) -> Dataset:
    """Draw inputs inside the configured ranges (P and G log-uniform, the
    rest uniform), evaluate the documented oracle, add heteroscedastic
    Gaussian noise, and clamp the target to the reference envelope.

    Fully determined by cfg; the provenance string records the oracle and
    noise law so tests can recompute both.
    """
    gen = SplitMix64(cfg.seed)
    rows = np.empty((cfg.n, len(FEATURE_NAMES)))
    log_sampled = {"P", "G"}
    for j, name in enumerate(FEATURE_NAMES):
        lo, hi = cfg.ranges[name]
        for i in range(cfg.n):
            u = gen.random()
            if name in log_sampled:
                rows[i, j] = lo * (hi / lo) ** u
            else:
                rows[i, j] = lo + u * (hi - lo)
    oracle = synthetic_oracle(rows)
    sigma = synthetic_noise_std(rows, cfg.noise_scale)
    noise = np.array([gen.normal() for _ in range(cfg.n)])
    lo, hi = REFERENCE_ENVELOPE[TARGET_NAME]
    targets = np.clip(oracle + sigma * noise, lo, hi)
    provenance = (f"synthetic:seed={cfg.seed},n={cfg.n},"
                  f"noise_scale={cfg.noise_scale!r},{ORACLE_FORMULA},{NOISE_FORMULA}")
    return Dataset(rows, targets, provenance)


# --- slice grids ----------------------------------------------------------

@dataclass(frozen=True)
class SliceSpec:
    """Grid definition that varies one feature over (lo, hi) while holding
    the other four at fixed values."""

    slice_id: str
    varying: str
    lo: float
    hi: float
    count: int
    constants: dict[str, float]

    def __post_init__(self):
        if self.varying not in FEATURE_NAMES:
            raise ValueError(f"unknown feature {self.varying!r}")
        if not self.lo < self.hi:
            raise ValueError("lo must be strictly below hi")
        if self.count < 2:
            raise ValueError("point count must be at least 2")
        expected = set(FEATURE_NAMES) - {self.varying}
        if set(self.constants) != expected:
            raise ValueError(f"constants must cover exactly {sorted(expected)}")
        for name, v in self.constants.items():
            if not math.isfinite(v):
                raise ValueError(f"constant {name} is not finite")

    def to_dict(self) -> dict:
        return {"slice_id": self.slice_id, "varying": self.varying,
                "lo": self.lo, "hi": self.hi, "count": self.count,
                "constants": dict(self.constants)}

    @classmethod
    def from_dict(cls, doc: dict) -> "SliceSpec":
        return cls(slice_id=str(doc["slice_id"]), varying=doc["varying"],
                   lo=float(doc["lo"]), hi=float(doc["hi"]),
                   count=int(doc["count"]),
                   constants={k: float(v) for k, v in doc["constants"].items()})


def build_slice_grid(spec: SliceSpec) -> Dataset:
    """Input-only grid: `count` equally spaced values of the varying
    feature (endpoints exact), constants copied bit-for-bit."""
    values = np.linspace(spec.lo, spec.hi, spec.count)
    rows = np.empty((spec.count, len(FEATURE_NAMES)))
    for j, name in enumerate(FEATURE_NAMES):
        rows[:, j] = values if name == spec.varying else spec.constants[name]
    return Dataset(rows, None, provenance=f"slice:{spec.slice_id}:{spec.varying}")


def _slice(slice_id, varying, lo, hi, **constants) -> SliceSpec:
    return SliceSpec(slice_id=slice_id, varying=varying, lo=lo, hi=hi,
                     count=101, constants=constants)


# Standard blind-test grids: each varies one feature across (and beyond)
# the training envelope while pinning the rest. Diameters are stored in
# meters.
BLIND_SLICES = (
    _slice("1", "L", 0.0, 20.0, D=8.01e-3, P=9806.0, G=1000.0, X=0.587),
    _slice("2", "L", 0.0, 20.0, D=8.11e-3, P=2009.0, G=752.2, X=0.756),
    _slice("3", "P", 0.0, 20000.0, D=8.00e-3, L=0.998, G=2006.0, X=0.140),
    _slice("4", "P", 0.0, 20000.0, D=13.40e-3, L=3.658, G=2040.2, X=0.378),
    _slice("5", "X", -0.5, 1.0, D=8.14e-3, L=1.943, P=9831.0, G=1519.5),
    _slice("6", "D", 0.0, 16.0e-3, L=6.000, P=9807.0, G=1003.3, X=0.529),
    _slice("7", "G", 0.0, 8000.0, D=8.00e-3, L=1.570, P=12750.0, X=0.144),
    _slice("8", "G", 0.0, 8000.0, D=10.00e-3, L=4.966, P=16000.0, X=0.343),
)


def load_slice_specs(path: str | Path) -> list[SliceSpec]:
    """Read slice specs from a JSON document: either a list of spec
    objects or {"slices": [...]}."""
    with Path(path).open(encoding="utf-8") as fh:
        doc = json.load(fh)
    if isinstance(doc, dict):
        doc = doc["slices"]
    return [SliceSpec.from_dict(entry) for entry in doc]


def save_slice_specs(specs: list[SliceSpec], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump({"slices": [s.to_dict() for s in specs]}, fh, indent=2, sort_keys=True)
        fh.write("\n")
