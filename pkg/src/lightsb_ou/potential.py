"""Gaussian-mixture adjusted potential and the coupling it induces.

The log-potential is ``phi(y) = log v(y) + |y|^2 / (2 eps sigma_T^2)`` with

    v(y) = sum_k alpha_k N(y; r_k, eps S_k),   S_k diagonal.

With that choice every quantity of the coupling is a Gaussian integral.
Writing ``a(x) = m_T(x) / (eps sigma_T^2)`` for the tilt of a source point,

    c(x)          = int e^{y.a(x)} v(y) dy
                  = sum_k alpha_k exp(r_k.a + eps/2 a' S_k a),
    pi(y | x)     = sum_k w_k(x) N(y; r_k + eps S_k a(x), eps S_k),
    w_k(x)        ~ alpha_k exp(r_k.a + eps/2 a' S_k a),

and the empirical objective is ``mean log c(Z) - mean log v(Y)``.
"""
from dataclasses import dataclass
from typing import NamedTuple
import json
import math

import numpy as np

from . import _kernels
from .datagen import as_points
from .ou import DegenerateKernelError, OUParams, kernel_at

LOG_2PI = math.log(2.0 * math.pi)
FORMAT_VERSION = 1


class NonFiniteLossError(FloatingPointError):
    def __init__(self, side, index):
        self.side = side
        self.index = index
        super().__init__(f"non-finite loss contribution from {side} batch element {index}")


@dataclass
class PotentialModel:
    weights_logits: np.ndarray   # (K,)
    means: np.ndarray            # (K, d)
    log_diag: np.ndarray         # (K, d), log of diag(S_k)
    eps: float

    def __post_init__(self):
        self.weights_logits = np.asarray(self.weights_logits, dtype=np.float64).reshape(-1)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.log_diag = np.atleast_2d(np.asarray(self.log_diag, dtype=np.float64))
        K = self.weights_logits.shape[0]
        if self.means.shape[0] != K or self.log_diag.shape != self.means.shape:
            raise ValueError(
                f"inconsistent shapes: logits {self.weights_logits.shape}, "
                f"means {self.means.shape}, log_diag {self.log_diag.shape}")
        if not (self.eps > 0):
            raise ValueError("eps must be positive")
        for name in ("weights_logits", "means", "log_diag"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite entries in {name}")
        self.eps = float(self.eps)

    @property
    def K(self):
        return self.means.shape[0]

    @property
    def d(self):
        return self.means.shape[1]

    @property
    def log_alpha(self):
        lg = self.weights_logits
        mx = lg.max()
        return lg - (math.log(np.exp(lg - mx).sum()) + mx)

    @property
    def alpha(self):
        return np.exp(self.log_alpha)

    @property
    def S(self):
        return np.exp(self.log_diag)

    def to_vector(self):
        return np.concatenate([self.weights_logits, self.means.ravel(), self.log_diag.ravel()])

    def with_vector(self, vec):
        K, d = self.K, self.d
        return PotentialModel(vec[:K], vec[K:K + K * d].reshape(K, d),
                              vec[K + K * d:].reshape(K, d), self.eps)

    def copy(self):
        return PotentialModel(self.weights_logits.copy(), self.means.copy(),
                              self.log_diag.copy(), self.eps)


class ParamGrad(NamedTuple):
    weights_logits: np.ndarray
    means: np.ndarray
    log_diag: np.ndarray

    def to_vector(self):
        return np.concatenate([self.weights_logits, self.means.ravel(), self.log_diag.ravel()])


def init_model(K, d, eps, target_batch, rng):
    """Zero logits, unit S, means drawn from a Gaussian fit of the target batch."""
    rng = np.random.default_rng(rng)
    Y = as_points(target_batch)
    mu = Y.mean(axis=0)
    cov = np.atleast_2d(np.cov(Y, rowvar=False)) if Y.shape[0] > 1 else np.eye(d) * 0.0
    lam, vec = np.linalg.eigh(cov)
    root = vec * np.sqrt(np.clip(lam, 0.0, None))
    means = mu + rng.standard_normal((K, d)) @ root.T
    return PotentialModel(np.zeros(K), means, np.zeros((K, d)), eps)


def _lse(a, axis=-1):
    amax = np.max(a, axis=axis, keepdims=True)
    out = np.log(np.sum(np.exp(a - amax), axis=axis, keepdims=True)) + amax
    return np.squeeze(out, axis=axis)


def component_log_pdf(model, y):
    """``log N(y; r_k, eps S_k)`` for each component; shape ``(..., K)``."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape[-1] != model.d:
        raise ValueError(f"point has dimension {y.shape[-1]}, expected {model.d}")
    var = model.eps * model.S
    diff = y[..., None, :] - model.means
    maha = np.sum(diff * diff / var, axis=-1)
    logdet = np.sum(np.log(var), axis=-1)
    return -0.5 * (model.d * LOG_2PI + logdet + maha)


def log_v(model, y):
    """Log of the adjusted potential (a normalized mixture density)."""
    y = np.asarray(y, dtype=np.float64)
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite point")
    return _lse(model.log_alpha + component_log_pdf(model, y))


def tilt(ou, x):
    """``a(x) = m_T(x) / (eps sigma_T^2)``."""
    k = kernel_at(ou, ou.T)
    if k.sigma2_t <= 0.0:
        raise DegenerateKernelError("sigma_T^2 = 0")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != ou.d:
        raise ValueError(f"point has dimension {x.shape[-1]}, expected {ou.d}")
    c = k.mean_coeff
    return (c * x + (1.0 - c) * ou.m) / (ou.eps * k.sigma2_t)


def _tilted_logits(model, a):
    """``log alpha_k + r_k.a + eps/2 a' S_k a`` for each component; ``(..., K)``."""
    return (model.log_alpha + a @ model.means.T
            + 0.5 * model.eps * (a * a) @ model.S.T)


def _check_eps(model, ou):
    if abs(model.eps - ou.eps) > 1e-15 * max(1.0, ou.eps):
        raise ValueError(f"model eps {model.eps} differs from process eps {ou.eps}")


def log_c(model, ou, x):
    """Closed-form ``log int e^{y.a(x)} v(y) dy``; broadcasts over a batch of x."""
    _check_eps(model, ou)
    return _lse(_tilted_logits(model, tilt(ou, x)))


@dataclass
class ConditionalMixture:
    x: np.ndarray
    tilde_weights: np.ndarray    # (K,) normalized
    cond_means: np.ndarray       # (K, d)
    cond_covs: np.ndarray        # (K, d) diagonals of eps S_k
    log_c: float


def conditional(model, ou, x):
    """The coupling's conditional law ``pi(. | x)`` as a Gaussian mixture."""
    _check_eps(model, ou)
    x = np.asarray(x, dtype=np.float64)
    a = tilt(ou, x)
    logits = _tilted_logits(model, a)
    lc = float(_lse(logits))
    return ConditionalMixture(
        x=x.copy(),
        tilde_weights=np.exp(logits - lc),
        cond_means=model.means + model.eps * model.S * a,
        cond_covs=model.eps * model.S,
        log_c=lc,
    )


def sample_conditional(cond, n, rng):
    rng = np.random.default_rng(rng)
    comp = rng.choice(cond.tilde_weights.shape[0], size=n, p=cond.tilde_weights)
    z = rng.standard_normal((n, cond.cond_means.shape[1]))
    return cond.cond_means[comp] + np.sqrt(cond.cond_covs[comp]) * z


def sample_conditional_batch(model, ou, X, rng):
    """One draw ``y ~ pi(. | x)`` for every row of ``X`` (vectorized)."""
    _check_eps(model, ou)
    rng = np.random.default_rng(rng)
    X = as_points(X)
    a = tilt(ou, X)
    logits = _tilted_logits(model, a)
    w = np.exp(logits - _lse(logits)[:, None])
    # inverse-CDF categorical draw per row
    u = rng.random(X.shape[0])
    cdf = np.cumsum(w, axis=1)
    comp = np.minimum((cdf < u[:, None]).sum(axis=1), model.K - 1)
    S = model.S[comp]
    mean = model.means[comp] + model.eps * S * a
    z = rng.standard_normal(X.shape)
    return mean + np.sqrt(model.eps * S) * z


def loss_and_grad(model, ou, batch_x, batch_y):
    """Empirical objective ``mean log c(Z) - mean log v(Y)`` and its gradient."""
    _check_eps(model, ou)
    Z = as_points(batch_x)
    Y = as_points(batch_y)
    if Z.shape[0] == 0 or Y.shape[0] == 0:
        raise ValueError("empty batch")
    A = tilt(ou, Z)
    loss, g_l, g_r, g_u = _kernels.mixture_loss_grad(
        model.weights_logits, model.means, model.log_diag, model.eps, A, Y)
    if not math.isfinite(loss):
        lc = log_c(model, ou, Z)
        bad = np.flatnonzero(~np.isfinite(lc))
        if bad.size:
            raise NonFiniteLossError("source", int(bad[0]))
        lv = log_v(model, Y)
        bad = np.flatnonzero(~np.isfinite(lv))
        raise NonFiniteLossError("target", int(bad[0]) if bad.size else -1)
    return loss, ParamGrad(g_l, g_r, g_u)


def loss_value(model, ou, batch_x, batch_y):
    return float(np.mean(log_c(model, ou, as_points(batch_x)))
                 - np.mean(log_v(model, as_points(batch_y))))


# --- checkpoints ------------------------------------------------------------

def save_checkpoint(path, model, ou, train_meta=None):
    """JSON document; floats use the shortest repr that round-trips exactly."""
    doc = {
        "format_version": FORMAT_VERSION,
        "d": model.d,
        "K": model.K,
        "eps": model.eps,
        "b": ou.b,
        "m": ou.m.tolist(),
        "T": ou.T,
        "weights_logits": model.weights_logits.tolist(),
        "means": model.means.tolist(),
        "log_diag": model.log_diag.tolist(),
        "train_meta": dict(train_meta or {}),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, allow_nan=False)
        fh.write("\n")


def load_checkpoint(path):
    """Returns ``(model, ou, train_meta)``."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {doc.get('format_version')!r}")
    model = PotentialModel(doc["weights_logits"], doc["means"], doc["log_diag"], doc["eps"])
    if model.K != doc["K"] or model.d != doc["d"]:
        raise ValueError("checkpoint K/d fields disagree with parameter arrays")
    ou = OUParams(b=doc["b"], m=np.asarray(doc["m"], dtype=np.float64), eps=doc["eps"], T=doc["T"])
    return model, ou, doc.get("train_meta", {})
