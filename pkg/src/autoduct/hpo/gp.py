"""Gaussian-process surrogate and expected-improvement acquisition.

The surrogate is a zero-mean GP over the encoded unit cube with a
Matern-5/2 kernel and per-dimension length scales (automatic relevance
determination) plus Gaussian observation noise:

    k(x, x') = sf2 * (1 + sqrt(5) r + 5 r^2 / 3) exp(-sqrt(5) r),
    r^2 = sum_i (x_i - x'_i)^2 / ell_i^2.

Kernel hyperparameters are chosen by maximizing the log marginal
likelihood of the standardized objectives with a small multi-start
first-order scheme (adaptive moment steps on the log parameters; start
grid: length scale {0.5, 1.5, 3.0} x noise variance {1e-4, 1e-2}).
Cholesky factorizations climb a jitter ladder 1e-10 .. 1e-4 before
giving up.

Acquisition is the plug-in form of noisy expected improvement for
minimization: the incumbent is the minimum posterior mean over the
observed inputs, and EI uses the noise-free posterior at the candidate,

    EI = (inc - mu) Phi(z) + sigma phi(z),  z = (inc - mu) / sigma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import SingularCovariance
from ..rng import derive_seed
from ..stats import normal_cdf, normal_pdf
from .sobol import sobol_points
from .space import EncodedPoint, SearchSpace, TrialConfig, decode, encode

_SQRT5 = math.sqrt(5.0)
_JITTERS = (1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)
_NOISE_FLOOR = 1e-8

# multi-start grid and step schedule for the marginal-likelihood ascent
_START_LENGTHSCALES = (0.5, 1.5, 3.0)
_START_NOISE_VARS = (1e-4, 1e-2)
_OPT_STEPS = 60
_OPT_LR = 0.08
_LOG_BOUNDS = {
    "lengthscale": (math.log(0.05), math.log(20.0)),
    "signal": (math.log(1e-3), math.log(1e3)),
    "noise": (math.log(_NOISE_FLOOR), math.log(10.0)),
}


@dataclass(frozen=True)
class GPSurrogate:
    x: np.ndarray               # (n, d) encoded inputs
    y_mean: float               # standardization of raw objectives
    y_std: float
    log_lengthscales: np.ndarray
    log_signal_var: float
    log_noise_var: float
    chol: np.ndarray            # L with L L^T = K(x, x) + noise + jitter
    alpha: np.ndarray           # K^{-1} z for standardized objectives z
    jitter: float

    @property
    def noise_var(self) -> float:
        return math.exp(self.log_noise_var)


def _sq_dists(a: np.ndarray, b: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    sa = a / lengthscales
    sb = b / lengthscales
    d2 = (sa**2).sum(axis=1)[:, None] + (sb**2).sum(axis=1)[None, :] - 2.0 * sa @ sb.T
    return np.maximum(d2, 0.0)


def _matern52(r: np.ndarray) -> np.ndarray:
    return (1.0 + _SQRT5 * r + (5.0 / 3.0) * r**2) * np.exp(-_SQRT5 * r)


def _kernel(a: np.ndarray, b: np.ndarray, log_ls: np.ndarray,
            log_sf2: float) -> np.ndarray:
    r = np.sqrt(_sq_dists(a, b, np.exp(log_ls)))
    return math.exp(log_sf2) * _matern52(r)


def _chol_with_ladder(k: np.ndarray) -> tuple[np.ndarray, float] | None:
    for jitter in _JITTERS:
        try:
            return np.linalg.cholesky(k + jitter * np.eye(k.shape[0])), jitter
        except np.linalg.LinAlgError:
            continue
    return None


def _nlml_and_grad(x: np.ndarray, z: np.ndarray, theta: np.ndarray):
    """Negative log marginal likelihood and gradient in the log
    parameters (d length scales, signal variance, noise variance).
    Returns None when no jitter level factorizes."""
    n, d = x.shape
    log_ls, log_sf2, log_sn2 = theta[:d], theta[d], theta[d + 1]
    ls = np.exp(log_ls)
    r2 = _sq_dists(x, x, ls)
    r = np.sqrt(r2)
    k_signal = math.exp(log_sf2) * _matern52(r)
    k = k_signal + math.exp(log_sn2) * np.eye(n)
    result = _chol_with_ladder(k)
    if result is None:
        return None
    chol, _ = result
    alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, z))
    nlml = (0.5 * z @ alpha + np.log(np.diag(chol)).sum()
            + 0.5 * n * math.log(2.0 * math.pi))

    k_inv = np.linalg.solve(chol.T, np.linalg.solve(chol, np.eye(n)))
    inner = np.outer(alpha, alpha) - k_inv     # d(LML)/dK = inner / 2
    grad = np.empty(d + 2)
    # dK/d(log ell_i) = sf2 * (5/3)(1 + sqrt5 r) exp(-sqrt5 r) * d_ij^2 / ell_i^2
    common = math.exp(log_sf2) * (5.0 / 3.0) * (1.0 + _SQRT5 * r) * np.exp(-_SQRT5 * r)
    for i in range(d):
        diff2 = (x[:, i][:, None] - x[:, i][None, :]) ** 2
        dk = common * diff2 / ls[i] ** 2
        grad[i] = -0.5 * (inner * dk).sum()
    grad[d] = -0.5 * (inner * k_signal).sum()
    grad[d + 1] = -0.5 * math.exp(log_sn2) * np.trace(inner)
    return nlml, grad


def _clip_theta(theta: np.ndarray, d: int) -> np.ndarray:
    lo, hi = _LOG_BOUNDS["lengthscale"]
    theta[:d] = np.clip(theta[:d], lo, hi)
    lo, hi = _LOG_BOUNDS["signal"]
    theta[d] = min(max(theta[d], lo), hi)
    lo, hi = _LOG_BOUNDS["noise"]
    theta[d + 1] = min(max(theta[d + 1], lo), hi)
    return theta


def fit_gp(observations: list[tuple[EncodedPoint, float]]) -> GPSurrogate:
    """Fit kernel hyperparameters by marginal likelihood and factorize
    the training covariance. Deterministic: the start grid is fixed and
    each start runs the same number of steps."""
    if len(observations) < 2:
        raise ValueError("need at least two observations to fit a surrogate")
    x = np.array([p.coords for p, _ in observations])
    y = np.array([obj for _, obj in observations], dtype=np.float64)
    if not np.all(np.isfinite(y)):
        raise ValueError("objectives must be finite")
    n, d = x.shape
    y_mean = float(y.mean())
    y_std = float(y.std())
    if y_std < 1e-12:
        y_std = 1.0
    z = (y - y_mean) / y_std

    best_theta = None
    best_nlml = np.inf
    for ls0 in _START_LENGTHSCALES:
        for sn0 in _START_NOISE_VARS:
            theta = np.concatenate([np.full(d, math.log(ls0)),
                                    [math.log(1.0), math.log(sn0)]])
            m = np.zeros_like(theta)
            v = np.zeros_like(theta)
            for step in range(1, _OPT_STEPS + 1):
                res = _nlml_and_grad(x, z, theta)
                if res is None:
                    break
                _, grad = res
                m = 0.9 * m + 0.1 * grad
                v = 0.999 * v + 0.001 * grad**2
                m_hat = m / (1.0 - 0.9**step)
                v_hat = v / (1.0 - 0.999**step)
                theta = _clip_theta(theta - _OPT_LR * m_hat / (np.sqrt(v_hat) + 1e-8), d)
            res = _nlml_and_grad(x, z, theta)
            if res is not None and res[0] < best_nlml:
                best_nlml = res[0]
                best_theta = theta.copy()

    if best_theta is None:
        raise SingularCovariance("covariance failed to factorize at every jitter level")

    log_ls, log_sf2, log_sn2 = best_theta[:d], float(best_theta[d]), float(best_theta[d + 1])
    k = _kernel(x, x, log_ls, log_sf2) + math.exp(log_sn2) * np.eye(n)
    result = _chol_with_ladder(k)
    if result is None:
        raise SingularCovariance("covariance failed to factorize at every jitter level")
    chol, jitter = result
    alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, z))
    return GPSurrogate(x=x, y_mean=y_mean, y_std=y_std, log_lengthscales=log_ls,
                       log_signal_var=log_sf2, log_noise_var=log_sn2,
                       chol=chol, alpha=alpha, jitter=jitter)


def posterior(gp: GPSurrogate, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free posterior mean and variance, in raw objective units,
    at encoded coordinates of shape (m, d)."""
    k_star = _kernel(points, gp.x, gp.log_lengthscales, gp.log_signal_var)
    mu = k_star @ gp.alpha
    w = np.linalg.solve(gp.chol, k_star.T)
    var = math.exp(gp.log_signal_var) - (w**2).sum(axis=0)
    var = np.maximum(var, 0.0)
    return gp.y_mean + gp.y_std * mu, gp.y_std**2 * var


def incumbent_value(gp: GPSurrogate) -> float:
    """Minimum posterior mean over the observed inputs (the noisy-EI
    plug-in incumbent)."""
    mu, _ = posterior(gp, gp.x)
    return float(mu.min())


def expected_improvement(gp: GPSurrogate, p: EncodedPoint, incumbent: float) -> float:
    """Closed-form EI for minimization at one encoded point."""
    mu, var = posterior(gp, p.coords[None, :])
    return float(_ei_arrays(mu, var, incumbent)[0])


def _ei_arrays(mu: np.ndarray, var: np.ndarray, incumbent: float) -> np.ndarray:
    sigma = np.sqrt(var)
    improve = incumbent - mu
    out = np.maximum(improve, 0.0)
    live = sigma > 0.0
    z = improve[live] / sigma[live]
    out[live] = improve[live] * np.array([normal_cdf(v) for v in z]) \
        + sigma[live] * np.array([normal_pdf(v, 0.0, 1.0) for v in z])
    return np.maximum(out, 0.0)


def propose_next(gp: GPSurrogate, space: SearchSpace,
                 candidate_count: int = 2048, seed: int = 0) -> TrialConfig:
    """Argmax of EI over a shifted quasi-random candidate set.

    Candidates are canonicalized (decode then encode) so the surrogate
    sees the same one-hot corners it was trained on; ties break toward
    the lowest candidate index via strict argmax.
    """
    if candidate_count < 1:
        raise ValueError("need at least one candidate")
    raw = sobol_points(space.encoded_dim, candidate_count,
                       shift_seed=derive_seed(seed, "propose-candidates"))
    configs = [decode(raw[i], space) for i in range(candidate_count)]
    points = np.array([encode(cfg, space).coords for cfg in configs])
    mu, var = posterior(gp, points)
    ei = _ei_arrays(mu, var, incumbent_value(gp))
    best = int(np.argmax(ei))
    chosen = configs[best]
    return TrialConfig(*chosen.assignment(), origin="bo")
