"""Synthetic benchmark distributions, sample providers and CSV ingestion."""
from dataclasses import dataclass, field
import csv
import json
import math

import numpy as np

VARIANTS = ("standard", "irregular", "anisotropic")

# geometry of the 25-mode benchmarks: 5x5 grid spanning [-HALF_SPAN, HALF_SPAN]^2
HALF_SPAN = 4.0
STANDARD_SCALE = 0.2
MAX_CONDITION = 10.0


class DataError(ValueError):
    pass


@dataclass
class PointCloud:
    points: np.ndarray
    label: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise DataError(f"point cloud needs shape (n>=1, d), got {pts.shape}")
        bad = ~np.isfinite(pts).all(axis=1)
        if bad.any():
            raise DataError(f"non-finite value in row {int(np.argmax(bad))}")
        self.points = pts

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]

    def __len__(self):
        return self.n


def as_points(x):
    """Accept a PointCloud or an array and return the ``(n, d)`` array."""
    if isinstance(x, PointCloud):
        return x.points
    x = np.asarray(x, dtype=np.float64)
    return x[:, None] if x.ndim == 1 else x


@dataclass
class GaussianMixtureSpec:
    means: np.ndarray          # (K, d)
    covs: np.ndarray           # (K, d, d)
    weights: np.ndarray        # (K,)
    seed: int | None = None
    name: str = ""

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64)
        self.covs = np.asarray(self.covs, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        K, d = self.means.shape
        if self.covs.shape != (K, d, d):
            raise DataError(f"covs shape {self.covs.shape} != {(K, d, d)}")
        if self.weights.shape != (K,) or np.any(self.weights <= 0):
            raise DataError("weights must be K positive numbers")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise DataError("weights must sum to 1")
        for k, c in enumerate(self.covs):
            if not np.allclose(c, c.T, atol=1e-12):
                raise DataError(f"covariance {k} is not symmetric")
            if np.linalg.eigvalsh(c).min() < 0:
                raise DataError(f"covariance {k} is not positive semidefinite")

    @property
    def K(self):
        return self.means.shape[0]

    @property
    def d(self):
        return self.means.shape[1]

    def cov_roots(self):
        """PSD square roots (via eigh, so singular covariances work); cached."""
        roots = getattr(self, "_roots", None)
        if roots is None:
            lam, vec = np.linalg.eigh(self.covs)
            roots = vec * np.sqrt(np.clip(lam, 0.0, None))[:, None, :]
            self._roots = roots
        return roots

    def modes(self):
        return list(zip(self.means, self.covs))

    def to_dict(self):
        return {
            "name": self.name,
            "seed": self.seed,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covs": self.covs.tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(means=doc["means"], covs=doc["covs"], weights=doc["weights"],
                   seed=doc.get("seed"), name=doc.get("name", ""))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _grid_means():
    ticks = np.linspace(-HALF_SPAN, HALF_SPAN, 5)
    gx, gy = np.meshgrid(ticks, ticks, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def make_25gauss(variant="standard", seed=0, scale=STANDARD_SCALE):
    """One of the three 25-mode planar benchmark targets.

    standard    -- 5x5 grid over [-4, 4]^2, covariance ``scale^2 I``
    irregular   -- 25 means uniform in the same box, covariance ``scale^2 I``
    anisotropic -- grid means, rotated diagonal covariances with
                   condition number at most 10
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    rng = np.random.default_rng(seed)
    K = 25
    iso = np.broadcast_to(scale ** 2 * np.eye(2), (K, 2, 2)).copy()
    if variant == "standard":
        means, covs = _grid_means(), iso
    elif variant == "irregular":
        means, covs = rng.uniform(-HALF_SPAN, HALF_SPAN, size=(K, 2)), iso
    else:
        means = _grid_means()
        covs = np.empty((K, 2, 2))
        for k in range(K):
            # eigenvalues scale^2 * [c, c / ratio]; keeps the same overall size as standard
            ratio = rng.uniform(1.0, MAX_CONDITION)
            big = scale ** 2 * math.sqrt(ratio) * rng.uniform(0.75, 1.25)
            lam = np.array([big, big / ratio])
            angle = rng.uniform(0.0, math.pi)
            c, s = math.cos(angle), math.sin(angle)
            R = np.array([[c, -s], [s, c]])
            cov = R @ np.diag(lam) @ R.T
            covs[k] = 0.5 * (cov + cov.T)
    return GaussianMixtureSpec(means=means, covs=covs, weights=np.full(K, 1.0 / K),
                               seed=seed, name=variant)


def sample_mixture(spec, n, rng):
    """Ancestral sampling: component counts first, then Gaussian draws."""
    rng = np.random.default_rng(rng)
    comp = rng.choice(spec.K, size=n, p=spec.weights)
    z = rng.standard_normal((n, spec.d))
    roots = spec.cov_roots()
    pts = spec.means[comp] + np.einsum("nij,nj->ni", roots[comp], z)
    return PointCloud(pts, label=f"mixture:{spec.name}")


def sample_standard_normal(d, n, rng):
    rng = np.random.default_rng(rng)
    return PointCloud(rng.standard_normal((n, d)), label="standard-normal")


def load_csv(path, has_header=False):
    """Read a rectangular numeric CSV into a PointCloud."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader):
            if lineno == 0 and has_header:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise DataError(f"row {lineno}: non-numeric cell ({exc})") from None
            if not all(math.isfinite(v) for v in vals):
                raise DataError(f"row {lineno}: NaN or Inf value")
            if rows and len(vals) != len(rows[0]):
                raise DataError(
                    f"row {lineno}: {len(vals)} columns, expected {len(rows[0])}")
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return PointCloud(np.array(rows), label=f"csv:{path}")


def write_csv(path, points, header=None):
    pts = as_points(points)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(header)
        for row in pts:
            w.writerow([repr(float(v)) for v in row])


# --- sample providers -------------------------------------------------------
# A provider is any callable ``provider(n, rng) -> (n, d) array``.

@dataclass
class MixtureProvider:
    spec: GaussianMixtureSpec

    def __call__(self, n, rng):
        return sample_mixture(self.spec, n, rng).points

    @property
    def d(self):
        return self.spec.d


@dataclass
class NormalProvider:
    d: int

    def __call__(self, n, rng):
        return rng.standard_normal((n, self.d))


@dataclass
class PointMassProvider:
    x0: np.ndarray

    def __post_init__(self):
        self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=np.float64))

    def __call__(self, n, rng):
        return np.broadcast_to(self.x0, (n, self.x0.shape[0])).copy()

    @property
    def d(self):
        return self.x0.shape[0]


@dataclass
class DatasetProvider:
    """Finite dataset; batches are drawn uniformly with replacement."""

    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.data = as_points(self.data)

    def __call__(self, n, rng):
        return self.data[rng.integers(0, self.data.shape[0], size=n)]

    @property
    def d(self):
        return self.data.shape[1]


@dataclass
class GaussianProvider:
    mean: np.ndarray
    std: np.ndarray

    def __call__(self, n, rng):
        mean = np.atleast_1d(self.mean)
        return mean + np.atleast_1d(self.std) * rng.standard_normal((n, mean.shape[0]))

    @property
    def d(self):
        return np.atleast_1d(self.mean).shape[0]
