"""Feedforward network with a heteroscedastic Gaussian head, written
directly against numpy.

Architecture: a stack of identical fully connected hidden layers

    h_l = act(W_l h_{l-1} + b_l),   l = 1..L,  h_0 = x,

followed by two linear heads on the last hidden state: one for the
predicted mean and one for the raw variance, which is mapped through
softplus and floored to keep it strictly positive,

    mu  = w_mu . h_L + b_mu
    var = softplus(w_raw . h_L + b_raw) + VAR_FLOOR.

Training minimizes the Gaussian negative log-likelihood (constant term
dropped)

    loss = mean_i [ (y_i - mu_i)^2 / (2 var_i) + log(var_i) / 2 ]

by mini-batch gradient descent with adaptive moment estimates and
decoupled weight decay. Gradients are computed analytically in
``backward``; the test suite checks them against central finite
differences.

Activation constants (fixed, from the original publications of each
unit): LeakyReLU negative slope 0.01; SELU lambda 1.0507009873554805 and
alpha 1.6732632423543772; GELU in its tanh form with coefficients
sqrt(2/pi) and 0.044715; ELU alpha 1.0. The ReLU derivative at exactly 0
is taken as 0.
"""

from __future__ import annotations

import copy
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .dataset import Normalizer, SplitDataset
from .errors import (
    CorruptArtifact,
    DimensionMismatch,
    DivergedLoss,
    LengthMismatch,
    NonPositiveVariance,
    VersionMismatch,
)

VAR_FLOOR = 1e-6        # on the normalized target scale
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
PARAMS_FORMAT_VERSION = 1

_LEAKY_SLOPE = 0.01
_SELU_LAMBDA = 1.0507009873554805
_SELU_ALPHA = 1.6732632423543772
_GELU_C = 0.7978845608028654    # sqrt(2/pi)
_GELU_B = 0.044715


class ActivationKind(Enum):
    RELU = "relu"
    LEAKY_RELU = "leaky_relu"
    GELU = "gelu"
    SELU = "selu"
    ELU = "elu"
    SOFTPLUS = "softplus"


def _softplus(x: np.ndarray) -> np.ndarray:
    # overflow-safe: softplus(x) = max(x, 0) + log1p(exp(-|x|))
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + _GELU_B * x**3)))


def _gelu_deriv(x: np.ndarray) -> np.ndarray:
    inner = _GELU_C * (x + _GELU_B * x**3)
    t = np.tanh(inner)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * _GELU_C * (1.0 + 3.0 * _GELU_B * x**2)


_ACTIVATIONS = {
    ActivationKind.RELU: (
        lambda x: np.maximum(x, 0.0),
        lambda x: (x > 0).astype(np.float64),
    ),
    ActivationKind.LEAKY_RELU: (
        lambda x: np.where(x > 0, x, _LEAKY_SLOPE * x),
        lambda x: np.where(x > 0, 1.0, _LEAKY_SLOPE),
    ),
    ActivationKind.GELU: (_gelu, _gelu_deriv),
    ActivationKind.SELU: (
        lambda x: _SELU_LAMBDA * np.where(x > 0, x, _SELU_ALPHA * np.expm1(x)),
        lambda x: _SELU_LAMBDA * np.where(x > 0, 1.0, _SELU_ALPHA * np.exp(x)),
    ),
    ActivationKind.ELU: (
        lambda x: np.where(x > 0, x, np.expm1(x)),
        lambda x: np.where(x > 0, 1.0, np.exp(x)),
    ),
    ActivationKind.SOFTPLUS: (_softplus, _sigmoid),
}


@dataclass(frozen=True)
class MLPConfig:
    input_dim: int
    hidden_layers: int
    hidden_units: int
    activation: ActivationKind
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.input_dim < 1:
            raise ValueError("input_dim must be at least 1")
        if self.hidden_layers < 1:
            raise ValueError("hidden_layers must be at least 1")
        if self.hidden_units < 1:
            raise ValueError("hidden_units must be at least 1")
        if not 0.0 <= self.dropout_rate <= 0.3:
            raise ValueError("dropout_rate must lie in [0, 0.3]")

    def to_dict(self) -> dict:
        return {"input_dim": self.input_dim, "hidden_layers": self.hidden_layers,
                "hidden_units": self.hidden_units,
                "activation": self.activation.value,
                "dropout_rate": self.dropout_rate}

    @classmethod
    def from_dict(cls, doc: dict) -> "MLPConfig":
        return cls(input_dim=int(doc["input_dim"]),
                   hidden_layers=int(doc["hidden_layers"]),
                   hidden_units=int(doc["hidden_units"]),
                   activation=ActivationKind(doc["activation"]),
                   dropout_rate=float(doc["dropout_rate"]))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    weight_decay: float
    batch_size: int
    epochs: int = 300
    seed: int = 0
    patience: int = 30

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.patience < 0:
            raise ValueError("patience must be non-negative")

    def to_dict(self) -> dict:
        return {"learning_rate": self.learning_rate, "weight_decay": self.weight_decay,
                "batch_size": self.batch_size, "epochs": self.epochs,
                "seed": self.seed, "patience": self.patience}

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        return cls(learning_rate=float(doc["learning_rate"]),
                   weight_decay=float(doc["weight_decay"]),
                   batch_size=int(doc["batch_size"]), epochs=int(doc["epochs"]),
                   seed=int(doc["seed"]), patience=int(doc["patience"]))


@dataclass
class Parameters:
    """Weights of one network. head_w rows: 0 = mean head, 1 = raw
    variance head. Also reused as the container for gradients, which share
    the same shapes."""

    hidden_w: list[np.ndarray]
    hidden_b: list[np.ndarray]
    head_w: np.ndarray
    head_b: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        return [*self.hidden_w, *self.hidden_b, self.head_w, self.head_b]

    def copy(self) -> "Parameters":
        return Parameters([w.copy() for w in self.hidden_w],
                          [b.copy() for b in self.hidden_b],
                          self.head_w.copy(), self.head_b.copy())

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


@dataclass(frozen=True)
class GaussianPrediction:
    mu: float
    var: float


@dataclass(frozen=True)
class TrainHistory:
    train_losses: list[float]
    val_losses: list[float]
    best_epoch: int
    wall_time_s: float = field(compare=False)


def init_params(cfg: MLPConfig, seed: int) -> Parameters:
    """Gaussian weights scaled by sqrt(2 / fan_in), zero biases."""
    rng = np.random.default_rng(seed)
    hidden_w, hidden_b = [], []
    fan_in = cfg.input_dim
    for _ in range(cfg.hidden_layers):
        hidden_w.append(rng.normal(0.0, np.sqrt(2.0 / fan_in),
                                   size=(cfg.hidden_units, fan_in)))
        hidden_b.append(np.zeros(cfg.hidden_units))
        fan_in = cfg.hidden_units
    head_w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(2, fan_in))
    head_b = np.zeros(2)
    return Parameters(hidden_w, hidden_b, head_w, head_b)


def _make_masks(cfg: MLPConfig, n: int, rng: np.random.Generator) -> list[np.ndarray] | None:
    """Inverted dropout masks, one per hidden layer, already divided by
    the keep probability."""
    if cfg.dropout_rate == 0.0:
        return None
    keep = 1.0 - cfg.dropout_rate
    return [(rng.random((n, cfg.hidden_units)) < keep) / keep
            for _ in range(cfg.hidden_layers)]


def _forward_batch(p: Parameters, cfg: MLPConfig, x: np.ndarray,
                   masks: list[np.ndarray] | None):
    """Returns (mu, var, raw, pre_activations, post_dropout_activations).

    x has shape (n, input_dim); raw is the variance head before softplus;
    the activation lists hold one (n, units) array per hidden layer, with
    index 0 of the post list being x itself.
    """
    act, _ = _ACTIVATIONS[cfg.activation]
    pre: list[np.ndarray] = []
    post: list[np.ndarray] = [x]
    h = x
    for l in range(cfg.hidden_layers):
        a = h @ p.hidden_w[l].T + p.hidden_b[l]
        h = act(a)
        if masks is not None:
            h = h * masks[l]
        pre.append(a)
        post.append(h)
    out = h @ p.head_w.T + p.head_b
    mu = out[:, 0]
    raw = out[:, 1]
    var = _softplus(raw) + VAR_FLOOR
    return mu, var, raw, pre, post


def forward(p: Parameters, cfg: MLPConfig, x: np.ndarray, training_mode: bool = False,
            rng: np.random.Generator | None = None) -> GaussianPrediction:
    """Evaluate one normalized input vector.

    Dropout fires only in training mode; the masks use inverted scaling so
    inference applies no correction. Pass an explicit generator for
    reproducible training-mode calls.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (cfg.input_dim,):
        raise DimensionMismatch(f"expected input of shape ({cfg.input_dim},), got {x.shape}")
    masks = None
    if training_mode and cfg.dropout_rate > 0.0:
        masks = _make_masks(cfg, 1, rng if rng is not None else np.random.default_rng())
    mu, var, _, _, _ = _forward_batch(p, cfg, x[None, :], masks)
    return GaussianPrediction(float(mu[0]), float(var[0]))


def nll_loss(preds: list[GaussianPrediction], targets: list[float]) -> float:
    """Mean negative log-likelihood, constant term omitted."""
    if len(preds) != len(targets):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(targets)} targets")
    if not preds:
        raise LengthMismatch("need at least one sample")
    total = 0.0
    for pred, y in zip(preds, targets):
        if pred.var <= 0:
            raise NonPositiveVariance(f"variance {pred.var} is not positive")
        total += (y - pred.mu) ** 2 / (2.0 * pred.var) + 0.5 * np.log(pred.var)
    return float(total / len(preds))


def _nll_arrays(mu: np.ndarray, var: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean((y - mu) ** 2 / (2.0 * var) + 0.5 * np.log(var)))


def _backward_batch(p: Parameters, cfg: MLPConfig, x: np.ndarray, y: np.ndarray,
                    masks: list[np.ndarray] | None, weight_decay: float) -> Parameters:
    n = x.shape[0]
    _, dact = _ACTIVATIONS[cfg.activation]
    mu, var, raw, pre, post = _forward_batch(p, cfg, x, masks)

    # d loss / d mu and d loss / d raw-variance-head output
    dmu = (mu - y) / var / n
    dvar = (-((y - mu) ** 2) / (2.0 * var**2) + 1.0 / (2.0 * var)) / n
    draw = dvar * _sigmoid(raw)

    dout = np.stack([dmu, draw], axis=1)            # (n, 2)
    g_head_w = dout.T @ post[-1]
    g_head_b = dout.sum(axis=0)

    delta = dout @ p.head_w                          # gradient w.r.t. h_L
    g_w = [None] * cfg.hidden_layers
    g_b = [None] * cfg.hidden_layers
    for l in range(cfg.hidden_layers - 1, -1, -1):
        if masks is not None:
            delta = delta * masks[l]
        da = delta * dact(pre[l])
        g_w[l] = da.T @ post[l]
        g_b[l] = da.sum(axis=0)
        delta = da @ p.hidden_w[l]

    if weight_decay:
        for l in range(cfg.hidden_layers):
            g_w[l] = g_w[l] + weight_decay * p.hidden_w[l]
        g_head_w = g_head_w + weight_decay * p.head_w
    return Parameters(g_w, g_b, g_head_w, g_head_b)


def backward(p: Parameters, cfg: MLPConfig, batch: tuple[np.ndarray, np.ndarray],
             weight_decay: float = 0.0) -> Parameters:
    """Analytic gradient of nll_loss over a (features, targets) batch,
    plus weight_decay * W on every weight matrix (never on biases).
    Dropout is not applied here; training replays its own masks
    internally."""
    x, y = batch
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != cfg.input_dim:
        raise DimensionMismatch(f"expected batch of shape (n, {cfg.input_dim})")
    if x.shape[0] == 0:
        raise LengthMismatch("batch must be non-empty")
    return _backward_batch(p, cfg, x, y, None, weight_decay)


def train(splits: SplitDataset, normalizer: Normalizer, mlp: MLPConfig,
          tc: TrainConfig) -> tuple[Parameters, TrainHistory]:
    """Mini-batch AdamW on the negative log-likelihood.

    Weight decay is decoupled: applied directly in the update step, not
    through the loss gradient. The parameters returned are the snapshot
    with the lowest validation NLL; training stops once validation fails
    to improve for more than `patience` consecutive epochs.
    """
    if len(splits.train) == 0 or len(splits.validation) == 0:
        raise ValueError("train and validation splits must be non-empty")
    started = time.perf_counter()

    x_train = normalizer.transform_features(splits.train.features)
    y_train = normalizer.transform_targets(splits.train.targets)
    x_val = normalizer.transform_features(splits.validation.features)
    y_val = normalizer.transform_targets(splits.validation.targets)

    params = init_params(mlp, tc.seed)
    # distinct stream from init_params' so batching noise is not tied to
    # the initial weights
    rng = np.random.default_rng((int(tc.seed) + 0x9E3779B9) % 2**64)
    m = [np.zeros_like(a) for a in params.arrays()]
    v = [np.zeros_like(a) for a in params.arrays()]
    step = 0

    n = x_train.shape[0]
    train_losses: list[float] = []
    val_losses: list[float] = []
    best_val = np.inf
    best_params = params.copy()
    best_epoch = 0
    stale = 0

    for epoch in range(tc.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, tc.batch_size):
            idx = order[start:start + tc.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            masks = _make_masks(mlp, xb.shape[0], rng)
            mu, var, _, _, _ = _forward_batch(params, mlp, xb, masks)
            batch_loss = _nll_arrays(mu, var, yb)
            if not np.isfinite(batch_loss):
                raise DivergedLoss(epoch)
            epoch_loss += batch_loss * xb.shape[0]
            grads = _backward_batch(params, mlp, xb, yb, masks, 0.0)

            step += 1
            bias1 = 1.0 - ADAM_BETA1**step
            bias2 = 1.0 - ADAM_BETA2**step
            arrays = params.arrays()
            g_arrays = grads.arrays()
            n_w = mlp.hidden_layers      # weight-matrix entries come first
            for i, (a, g) in enumerate(zip(arrays, g_arrays)):
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g**2
                update = (m[i] / bias1) / (np.sqrt(v[i] / bias2) + ADAM_EPS)
                is_weight = i < n_w or i == len(arrays) - 2
                if is_weight and tc.weight_decay:
                    update = update + tc.weight_decay * a
                a -= tc.learning_rate * update

        if not params.all_finite():
            raise DivergedLoss(epoch)
        train_losses.append(epoch_loss / n)
        mu, var, _, _, _ = _forward_batch(params, mlp, x_val, None)
        val_loss = _nll_arrays(mu, var, y_val)
        if not np.isfinite(val_loss):
            raise DivergedLoss(epoch)
        val_losses.append(val_loss)

        if val_loss < best_val:
            best_val = val_loss
            best_params = params.copy()
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale > tc.patience:
                break

    history = TrainHistory(train_losses, val_losses, best_epoch,
                           time.perf_counter() - started)
    return best_params, history


def predict_batch(p: Parameters, cfg: MLPConfig, normalizer: Normalizer,
                  raw_inputs: np.ndarray) -> list[GaussianPrediction]:
    """Inference on raw (physical-unit) inputs; outputs are mapped back
    through the target affine transform, variances by its square."""
    raw_inputs = np.asarray(raw_inputs, dtype=np.float64)
    if raw_inputs.ndim == 1:
        raw_inputs = raw_inputs[None, :]
    if raw_inputs.shape[1] != cfg.input_dim:
        raise DimensionMismatch(f"expected inputs of width {cfg.input_dim}")
    x = normalizer.transform_features(raw_inputs)
    mu, var, _, _, _ = _forward_batch(p, cfg, x, None)
    mu = normalizer.inverse_target_mean(mu)
    var = normalizer.inverse_target_var(var)
    return [GaussianPrediction(float(m), float(s)) for m, s in zip(mu, var)]


# --- serialization --------------------------------------------------------

def params_to_doc(p: Parameters, cfg: MLPConfig, normalizer: Normalizer) -> dict:
    """Versioned JSON-ready document. Floats keep full precision (shortest
    round-trip decimal form), so load(dump(p)) is bit-exact."""
    def pack(a: np.ndarray) -> dict:
        return {"shape": list(a.shape), "data": [float(x) for x in a.ravel()]}

    return {
        "format_version": PARAMS_FORMAT_VERSION,
        "config": cfg.to_dict(),
        "normalizer": normalizer.to_dict(),
        "parameters": {
            "hidden_w": [pack(w) for w in p.hidden_w],
            "hidden_b": [pack(b) for b in p.hidden_b],
            "head_w": pack(p.head_w),
            "head_b": pack(p.head_b),
        },
    }


def params_from_doc(doc: dict) -> tuple[Parameters, MLPConfig, Normalizer]:
    version = doc.get("format_version")
    if version != PARAMS_FORMAT_VERSION:
        raise VersionMismatch(f"unsupported parameter format {version!r}")
    try:
        cfg = MLPConfig.from_dict(doc["config"])
        normalizer = Normalizer.from_dict(doc["normalizer"])
        block = doc["parameters"]

        def unpack(entry: dict) -> np.ndarray:
            a = np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
            if not np.all(np.isfinite(a)):
                raise ValueError("non-finite parameter entry")
            return a

        params = Parameters(
            hidden_w=[unpack(e) for e in block["hidden_w"]],
            hidden_b=[unpack(e) for e in block["hidden_b"]],
            head_w=unpack(block["head_w"]),
            head_b=unpack(block["head_b"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptArtifact(f"malformed parameter document: {exc}") from exc
    _check_shapes(params, cfg)
    return params, cfg, normalizer


def _check_shapes(p: Parameters, cfg: MLPConfig) -> None:
    expected_in = cfg.input_dim
    if len(p.hidden_w) != cfg.hidden_layers or len(p.hidden_b) != cfg.hidden_layers:
        raise CorruptArtifact("hidden layer count does not match config")
    for w, b in zip(p.hidden_w, p.hidden_b):
        if w.shape != (cfg.hidden_units, expected_in) or b.shape != (cfg.hidden_units,):
            raise CorruptArtifact(f"bad hidden layer shapes {w.shape}, {b.shape}")
        expected_in = cfg.hidden_units
    if p.head_w.shape != (2, cfg.hidden_units) or p.head_b.shape != (2,):
        raise CorruptArtifact(f"bad head shapes {p.head_w.shape}, {p.head_b.shape}")
