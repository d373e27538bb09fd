"""Distribution-quality metrics: sliced W1, MMD^2, energy distance, mode coverage."""
from dataclasses import dataclass, field, asdict
import csv
import math

import numpy as np

from . import _kernels
from .datagen import as_points

DEFAULT_PROJECTIONS = 100
DEFAULT_CONFIDENCE = 0.9
DEFAULT_REPEATS = 5
# cap for the pooled sample the median-heuristic bandwidth is computed on
MEDIAN_MAX_POINTS = 2000


def _same_dim(X, Y):
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")


def w1_1d(a, b):
    """W1 between two equal-size empirical measures on the line."""
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample")
    if a.size != b.size:
        raise ValueError(f"unequal sample counts {a.size} and {b.size}")
    return float(np.mean(np.abs(a - b)))


def sphere_directions(d, n_proj, rng):
    rng = np.random.default_rng(rng)
    th = rng.standard_normal((n_proj, d))
    return th / np.linalg.norm(th, axis=1, keepdims=True)


def sliced_w1(X, Y, n_proj=DEFAULT_PROJECTIONS, rng=0):
    X, Y = as_points(X), as_points(Y)
    _same_dim(X, Y)
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"unequal sample counts {X.shape[0]} and {Y.shape[0]}")
    theta = sphere_directions(X.shape[1], n_proj, rng)
    px = np.sort(X @ theta.T, axis=0)
    py = np.sort(Y @ theta.T, axis=0)
    return float(np.mean(np.abs(px - py)))


def median_heuristic_gamma(X, Y=None, max_points=MEDIAN_MAX_POINTS, rng=0):
    """``1 / (2 * median squared pairwise distance)`` over the pooled sample.

    Exact for pooled samples up to ``max_points``; larger pools are
    subsampled with ``rng``.
    """
    P = as_points(X) if Y is None else np.vstack([as_points(X), as_points(Y)])
    if P.shape[0] > max_points:
        P = P[np.random.default_rng(rng).choice(P.shape[0], max_points, replace=False)]
    diff = P[:, None, :] - P[None, :, :]
    d2 = np.sum(diff * diff, axis=-1)[np.triu_indices(P.shape[0], k=1)]
    med = float(np.median(d2)) if d2.size else 0.0
    if med <= 0.0:
        return 1.0
    return 1.0 / (2.0 * med)


def mmd2(X, Y, gamma=None):
    """Biased (V-statistic) MMD^2 with kernel ``exp(-gamma |x - y|^2)``."""
    X, Y = as_points(X), as_points(Y)
    _same_dim(X, Y)
    if gamma is None:
        gamma = median_heuristic_gamma(X, Y)
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    kxx = _kernels.mean_pairwise_gaussian(X, X, gamma)
    kyy = _kernels.mean_pairwise_gaussian(Y, Y, gamma)
    kxy = _kernels.mean_pairwise_gaussian(X, Y, gamma)
    return max(kxx + kyy - 2.0 * kxy, 0.0)


def energy_distance(X, Y):
    """``2 E|X - Y| - E|X - X'| - E|Y - Y'|`` over all pairs."""
    X, Y = as_points(X), as_points(Y)
    _same_dim(X, Y)
    exy = _kernels.mean_pairwise_distance(X, Y)
    exx = _kernels.mean_pairwise_distance(X, X)
    eyy = _kernels.mean_pairwise_distance(Y, Y)
    return max(2.0 * exy - exx - eyy, 0.0)


def chi2_quantile(p, dof):
    """Inverse CDF of chi-square: exact for 1 and 2 dof, Wilson-Hilferty otherwise."""
    if not 0.0 < p < 1.0:
        raise ValueError("confidence must lie in (0, 1)")
    if dof == 2:
        return -2.0 * math.log1p(-p)
    if dof == 1:
        return _normal_quantile(0.5 + 0.5 * p) ** 2
    z = _normal_quantile(p)
    h = 2.0 / (9.0 * dof)
    return dof * (1.0 - h + z * math.sqrt(h)) ** 3


def _normal_quantile(p):
    # Acklam's rational approximation refined by one Halley step on erfc
    a = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
         1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
    b = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
         6.680131188771972e+01, -1.328068155288572e+01)
    c = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
         -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
    dd = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
          3.754408661907416e+00)
    lo = 0.02425
    if p < lo:
        q = math.sqrt(-2 * math.log(p))
        x = (((((c[0]*q+c[1])*q+c[2])*q+c[3])*q+c[4])*q+c[5]) / \
            ((((dd[0]*q+dd[1])*q+dd[2])*q+dd[3])*q+1)
    elif p <= 1 - lo:
        q = p - 0.5
        r = q * q
        x = (((((a[0]*r+a[1])*r+a[2])*r+a[3])*r+a[4])*r+a[5])*q / \
            (((((b[0]*r+b[1])*r+b[2])*r+b[3])*r+b[4])*r+1)
    else:
        q = math.sqrt(-2 * math.log1p(-p))
        x = -(((((c[0]*q+c[1])*q+c[2])*q+c[3])*q+c[4])*q+c[5]) / \
            ((((dd[0]*q+dd[1])*q+dd[2])*q+dd[3])*q+1)
    e = 0.5 * math.erfc(-x / math.sqrt(2)) - p
    u = e * math.sqrt(2 * math.pi) * math.exp(x * x / 2)
    return x - u / (1 + x * u / 2)


def mode_coverage(X, modes, confidence=DEFAULT_CONFIDENCE):
    """Number of modes whose confidence ellipse contains at least one sample.

    ``modes`` is a sequence of ``(mean, cov)``; ``cov`` may be a full matrix
    or a vector holding its diagonal.
    """
    X = as_points(X)
    if X.shape[0] == 0:
        raise ValueError("empty sample set")
    d = X.shape[1]
    thr = chi2_quantile(confidence, d)
    covered = 0
    for mu, cov in modes:
        mu = np.asarray(mu, dtype=np.float64)
        cov = np.asarray(cov, dtype=np.float64)
        if cov.ndim == 1:
            cov = np.diag(cov)
        try:
            L = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValueError("mode covariance is singular or not positive definite") from None
        z = np.linalg.solve(L, (X - mu).T)
        if np.min(np.sum(z * z, axis=0)) <= thr:
            covered += 1
    return covered


# --- repeated evaluation ----------------------------------------------------

METRIC_NAMES = ("sliced_w1", "mmd2", "energy", "covered_modes")


@dataclass
class MetricsReport:
    sliced_w1: tuple
    mmd2: tuple
    energy: tuple
    covered_modes: tuple
    config: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)

    def rows(self):
        return [(name, *getattr(self, name)) for name in METRIC_NAMES]

    def to_dict(self):
        out = asdict(self)
        out.pop("raw")
        return out


def _mean_std(vals):
    v = np.asarray(vals, dtype=np.float64)
    return (float(v.mean()), float(v.std()))


def evaluate(generate, target, modes=None, n=10000, n_repeats=DEFAULT_REPEATS, rng=0,
             n_proj=DEFAULT_PROJECTIONS, gamma=None, confidence=DEFAULT_CONFIDENCE,
             metrics=METRIC_NAMES):
    """Mean and std of each metric over repeated fresh draws.

    ``generate(n, rng)`` and ``target(n, rng)`` return ``(n, d)`` arrays.
    Metrics not listed in ``metrics`` are reported as NaN.
    """
    rng = np.random.default_rng(rng)
    raw = {name: [] for name in METRIC_NAMES}
    for _ in range(n_repeats):
        gen_rng, tgt_rng, proj_rng = rng.spawn(3)
        Xg = as_points(generate(n, gen_rng))
        Yt = as_points(target(n, tgt_rng))
        g = gamma if gamma is not None else median_heuristic_gamma(Xg, Yt, rng=proj_rng)
        nan = float("nan")
        raw["sliced_w1"].append(sliced_w1(Xg, Yt, n_proj, proj_rng) if "sliced_w1" in metrics else nan)
        raw["mmd2"].append(mmd2(Xg, Yt, g) if "mmd2" in metrics else nan)
        raw["energy"].append(energy_distance(Xg, Yt) if "energy" in metrics else nan)
        raw["covered_modes"].append(
            mode_coverage(Xg, modes, confidence)
            if (modes is not None and "covered_modes" in metrics) else nan)
    config = {"n_projections": n_proj, "kernel_gamma": gamma, "confidence": confidence,
              "n_repeats": n_repeats, "n": n}
    return MetricsReport(*(_mean_std(raw[k]) for k in METRIC_NAMES), config=config, raw=raw)


def write_report_csv(path, report, extra=None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = list(extra) if extra else []
        w.writerow(head + ["metric", "mean", "std"])
        for name, mean, std in report.rows():
            w.writerow([*(extra.values() if extra else []), name, repr(mean), repr(std)])


def format_summary(report):
    lines = [f"{'metric':<14} {'mean':>12} {'std':>12}"]
    for name, mean, std in report.rows():
        lines.append(f"{name:<14} {mean:>12.6g} {std:>12.6g}")
    return "\n".join(lines)
