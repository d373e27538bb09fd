"""Closed-form kernels of the Ornstein-Uhlenbeck reference process.

The reference SDE is ``dX = b (m - X) dt + sqrt(eps) dW`` on ``[0, T]`` in
``R^d``.  Its transition law is Gaussian,

    X_t | X_0 = x  ~  N(m + e^{-bt} (x - m), eps * sigma_t^2 * I),
    sigma_t^2 = (1 - e^{-2bt}) / (2b),

with the Brownian limit ``sigma_t^2 = t`` at ``b = 0``.
"""
from dataclasses import dataclass, field
import math
import warnings

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)

# below this |b t| the variance uses its Taylor series instead of the closed form
SERIES_THRESHOLD = 1e-8


class DegenerateKernelError(ValueError):
    """Raised where a zero-variance kernel makes a density undefined."""


class NonFiniteDriftError(FloatingPointError):
    """Raised when the integrator meets a non-finite drift value."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite drift at step {step}")


@dataclass(frozen=True)
class OUParams:
    """Reference-process parameters with isotropic diffusion ``eps * I``."""

    b: float
    m: np.ndarray
    eps: float
    T: float = 1.0
    d: int = field(default=0)

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.m, dtype=np.float64))
        d = self.d or m.shape[0]
        if m.shape[0] == 1 and d > 1:
            m = np.full(d, m[0])
        if m.shape != (d,):
            raise ValueError(f"m has shape {m.shape}, expected ({d},)")
        if not (self.eps > 0):
            raise ValueError(f"eps must be positive, got {self.eps}")
        if not (self.T > 0):
            raise ValueError(f"T must be positive, got {self.T}")
        if not math.isfinite(self.b):
            raise ValueError(f"b must be finite, got {self.b}")
        if self.b < 0:
            warnings.warn(
                f"negative drift rate b={self.b}: the reference process is "
                "mean-repelling; formulas stay well defined",
                stacklevel=3,
            )
        m.setflags(write=False)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "d", int(d))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "eps", float(self.eps))
        object.__setattr__(self, "T", float(self.T))

    @classmethod
    def brownian(cls, d, eps, T=1.0):
        return cls(b=0.0, m=np.zeros(d), eps=eps, T=T)

    @classmethod
    def isotropic(cls, d, b, m_scale, eps, T=1.0):
        """Mean level ``m_scale * (1, ..., 1)``."""
        return cls(b=b, m=np.full(d, float(m_scale)), eps=eps, T=T)


@dataclass(frozen=True)
class OUKernel:
    t: float
    mean_coeff: float
    sigma2_t: float


def _sigma2(b, t):
    bt = b * t
    if abs(bt) < SERIES_THRESHOLD:
        # (1 - e^{-2bt}) / (2b) = t - b t^2 + (2/3) b^2 t^3 - ...
        return t * (1.0 - bt + (2.0 / 3.0) * bt * bt)
    return -math.expm1(-2.0 * bt) / (2.0 * b)


def kernel_at(params, t):
    """Mean coefficient ``e^{-bt}`` and variance factor ``sigma_t^2`` at time t."""
    t = float(t)
    if not (0.0 <= t <= params.T * (1 + 1e-12)):
        raise ValueError(f"t={t} outside [0, {params.T}]")
    return OUKernel(t=t, mean_coeff=math.exp(-params.b * t), sigma2_t=_sigma2(params.b, t))


def _check_dim(params, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.d:
        raise ValueError(f"point has dimension {x.shape[-1]}, expected {params.d}")
    return x


def mean_t(params, kernel, x):
    """Conditional mean ``e^{-bt} x + (1 - e^{-bt}) m``; ``x`` may be a batch ``(n, d)``."""
    x = _check_dim(params, x)
    c = kernel.mean_coeff
    return c * x + (1.0 - c) * params.m


def transition_logpdf(params, t, x, y):
    """``log N(y; m_t(x), eps sigma_t^2 I)``; broadcasts over leading axes."""
    k = kernel_at(params, t)
    if k.sigma2_t <= 0.0:
        raise DegenerateKernelError("transition kernel at t=0 is a point mass")
    x = _check_dim(params, x)
    y = _check_dim(params, y)
    var = params.eps * k.sigma2_t
    diff = y - mean_t(params, k, x)
    sq = np.sum(diff * diff, axis=-1)
    return -0.5 * (params.d * (LOG_2PI + math.log(var)) + sq / var)


def bridge_posterior(params, t, x0, xT, horizon=None):
    """Law of ``X_t`` given ``X_0 = x0`` and ``X_H = xT`` for the reference process.

    ``horizon`` defaults to ``params.T``.  Returns ``(mean, var)`` where
    ``var`` is the isotropic scalar variance.
    """
    H = params.T if horizon is None else float(horizon)
    t = float(t)
    if not (0.0 <= t <= H * (1 + 1e-12)):
        raise ValueError(f"t={t} outside [0, {H}]")
    x0 = _check_dim(params, x0)
    xT = _check_dim(params, xT)
    if t <= 0.0:
        return np.array(x0, copy=True), 0.0
    if t >= H:
        return np.array(xT, copy=True), 0.0
    b = params.b
    s2_t = _sigma2(b, t)
    s2_H = _sigma2(b, H)
    decay_rest = math.exp(-b * (H - t))
    rho = decay_rest * s2_t / s2_H
    ct, cH = math.exp(-b * t), math.exp(-b * H)
    mt = ct * x0 + (1.0 - ct) * params.m
    mH = cH * x0 + (1.0 - cH) * params.m
    mean = mt + rho * (xT - mH)
    var = params.eps * s2_t * (1.0 - rho * decay_rest)
    return mean, max(var, 0.0)


def ou_drift(params):
    """Uncontrolled reference drift ``b (m - x)``."""
    b, m = params.b, params.m
    return lambda t, x: b * (m - x)


def euler_maruyama(params, drift, x0, n_steps, rng, t_end=None, noise_scale=None,
                   save_at=None):
    """Simulate ``dX = drift(t, X) dt + sqrt(eps) dW`` on a uniform grid.

    ``x0`` is a point ``(d,)`` or an ensemble ``(n, d)``; ``drift`` must accept
    the same shape.  Returns the path with ``n_steps + 1`` time slices along
    axis 0, or only the slices at the step indices in ``save_at`` (large
    ensembles).  ``t_end`` stops the grid early (default ``params.T``);
    ``noise_scale`` replaces ``eps`` in the diffusion term.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    rng = np.random.default_rng(rng)
    t_end = params.T if t_end is None else float(t_end)
    dt = t_end / n_steps
    sd = math.sqrt((params.eps if noise_scale is None else noise_scale) * dt)
    x = np.array(_check_dim(params, x0), dtype=np.float64, copy=True)
    keep = list(range(n_steps + 1)) if save_at is None else [int(i) for i in save_at]
    slot = {step: j for j, step in enumerate(keep)}
    path = np.empty((len(keep),) + x.shape)
    if 0 in slot:
        path[slot[0]] = x
    for i in range(n_steps):
        f = np.asarray(drift(i * dt, x))
        if not np.all(np.isfinite(f)):
            raise NonFiniteDriftError(i)
        x = x + f * dt
        if sd > 0.0:
            x = x + sd * rng.standard_normal(x.shape)
        if i + 1 in slot:
            path[slot[i + 1]] = x
    return path
