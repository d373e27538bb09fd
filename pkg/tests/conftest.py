import warnings

import numpy as np
import pytest
from scipy import integrate

from lightsb_ou.ou import OUParams, kernel_at
from lightsb_ou.potential import PotentialModel


def random_model(rng, K, d, eps, spread=1.0, log_s=0.4):
    return PotentialModel(
        weights_logits=rng.normal(size=K),
        means=spread * rng.normal(size=(K, d)),
        log_diag=log_s * rng.normal(size=(K, d)),
        eps=eps,
    )


def random_ou(rng, d, eps, b=None):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return OUParams(
            b=float(rng.uniform(-0.3, 1.5)) if b is None else b,
            m=rng.normal(size=d),
            eps=eps,
            T=float(rng.uniform(0.5, 2.0)),
        )


def quad_log_c(model, ou, x):
    """log int e^{y.a} v(y) dy by adaptive 1-D quadrature per component and axis.

    The mixture components have diagonal covariance, so each component's
    integral is a product of 1-D integrals.  Each 1-D integrand is evaluated
    relative to its maximum on a coarse grid, for scale only.
    """
    k = kernel_at(ou, ou.T)
    a = (k.mean_coeff * x + (1 - k.mean_coeff) * ou.m) / (ou.eps * k.sigma2_t)
    alpha = np.exp(model.weights_logits - model.weights_logits.max())
    alpha /= alpha.sum()
    comps = []
    for kk in range(model.K):
        log_int = np.log(alpha[kk])
        for j in range(model.d):
            r, var = model.means[kk, j], model.eps * np.exp(model.log_diag[kk, j])

            def logf(y, r=r, var=var, aj=a[j]):
                return aj * y - 0.5 * np.log(2 * np.pi * var) - (y - r) ** 2 / (2 * var)

            grid = np.linspace(r - 60 * np.sqrt(var) - abs(a[j]) * var * 2,
                               r + 60 * np.sqrt(var) + abs(a[j]) * var * 2, 20001)
            peak_at = grid[np.argmax(logf(grid))]
            peak = logf(peak_at)
            sd = np.sqrt(var)
            val, _ = integrate.quad(lambda y: np.exp(logf(y) - peak), peak_at - 40 * sd,
                                    peak_at + 40 * sd, epsabs=0, epsrel=1e-13, limit=400,
                                    points=[peak_at])
            log_int += peak + np.log(val)
        comps.append(log_int)
    comps = np.array(comps)
    mx = comps.max()
    return mx + np.log(np.exp(comps - mx).sum())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
