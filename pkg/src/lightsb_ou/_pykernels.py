"""Pure numpy implementations of the hot kernels.

Used when the compiled ``_core`` extension is unavailable, and as the
reference the compiled kernels are tested against.
"""
import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))

# rows per block for the O(n*m) pair sums; bounds peak memory to ~block*m doubles
_BLOCK = 512


def _lse_rows(a):
    amax = a.max(axis=1, keepdims=True)
    out = np.log(np.exp(a - amax).sum(axis=1, keepdims=True)) + amax
    return out[:, 0]


def mixture_loss_grad(logits, means, log_diag, eps, A, Y):
    """Empirical dual loss and its analytic gradient.

    ``A`` holds the precomputed tilts a(z) = m_T(z) / (eps * sigma_T^2) of the
    source batch, ``Y`` the target batch.  Returns
    ``(loss, g_logits, g_means, g_log_diag)``.
    """
    logits = np.asarray(logits, dtype=np.float64)
    means = np.asarray(means, dtype=np.float64)
    log_diag = np.asarray(log_diag, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    d = means.shape[1]

    lmax = logits.max()
    log_alpha = logits - (np.log(np.exp(logits - lmax).sum()) + lmax)
    alpha = np.exp(log_alpha)
    S = np.exp(log_diag)

    # log c terms: log a_k + r_k.a + eps/2 sum_d S_kd a_d^2
    ac = log_alpha[None, :] + A @ means.T + 0.5 * eps * (A * A) @ S.T
    lse_c = _lse_rows(ac)
    w = np.exp(ac - lse_c[:, None])

    # log v terms: log a_k + log N(y; r_k, eps S_k)
    inv_var = 1.0 / (eps * S)
    diff = Y[:, None, :] - means[None, :, :]
    maha = (diff * diff * inv_var[None, :, :]).sum(axis=2)
    logdet = log_diag.sum(axis=1) + d * np.log(eps)
    av = log_alpha[None, :] - 0.5 * (d * LOG_2PI + logdet[None, :] + maha)
    lse_v = _lse_rows(av)
    g = np.exp(av - lse_v[:, None])

    nz = A.shape[0]
    ny = Y.shape[0]
    loss = lse_c.mean() - lse_v.mean()

    g_logits = w.sum(axis=0) / nz - g.sum(axis=0) / ny
    g_means = (w.T @ A) / nz
    g_means -= np.einsum("ik,ikd->kd", g, diff * inv_var[None, :, :]) / ny
    g_log_diag = 0.5 * eps * S * ((w.T @ (A * A)) / nz)
    g_log_diag -= np.einsum(
        "ik,ikd->kd", g, 0.5 * (diff * diff * inv_var[None, :, :] - 1.0)
    ) / ny
    return float(loss), g_logits, g_means, g_log_diag


def mean_pairwise_distance(X, Y):
    """Mean Euclidean distance over all (x, y) pairs."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    total = 0.0
    for start in range(0, X.shape[0], _BLOCK):
        xb = X[start:start + _BLOCK]
        d2 = ((xb[:, None, :] - Y[None, :, :]) ** 2).sum(axis=2)
        total += float(np.sqrt(d2).sum())
    return total / (X.shape[0] * Y.shape[0])


def mean_pairwise_gaussian(X, Y, gamma):
    """Mean of exp(-gamma * |x - y|^2) over all (x, y) pairs."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    total = 0.0
    for start in range(0, X.shape[0], _BLOCK):
        xb = X[start:start + _BLOCK]
        d2 = ((xb[:, None, :] - Y[None, :, :]) ** 2).sum(axis=2)
        total += float(np.exp(-gamma * d2).sum())
    return total / (X.shape[0] * Y.shape[0])
