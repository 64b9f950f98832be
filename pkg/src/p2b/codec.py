"""Context normalization, grid enumeration and the k-means context encoder.

Contexts live on the grid of non-negative vectors whose entries are integer
multiples of ``10**-q`` and sum to one.  Vectors are stored as integer
``units`` (multiples of ``10**-q``) so the sum invariant is exact; floats are
only produced for distance and bandit arithmetic.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

ENUMERATION_CAP = 10**7
MAX_ITER = 300
MODEL_FORMAT_VERSION = 1


class GridCapExceeded(ValueError):
    """Raised when a grid is too large to enumerate."""

    def __init__(self, n: int, cap: int):
        super().__init__(f"grid has n={n} points, above the enumeration cap of {cap}")
        self.n = n
        self.cap = cap


@dataclass(frozen=True)
class ContextVector:
    """A normalized context at fixed decimal precision ``q``."""

    units: tuple[int, ...]
    q: int

    def __post_init__(self):
        if len(self.units) < 1:
            raise ValueError("context must have at least one entry")
        if any(u < 0 for u in self.units):
            raise ValueError("context entries must be non-negative")
        if sum(self.units) != 10**self.q:
            raise ValueError(f"units must sum to 10**q={10**self.q}, got {sum(self.units)}")

    @property
    def d(self) -> int:
        return len(self.units)

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.units, dtype=float) / 10**self.q

    def __len__(self):
        return len(self.units)


def cardinality(d: int, q: int) -> int:
    """Number of grid points: C(10**q + d - 1, d - 1)."""
    if d < 1 or q < 1:
        raise ValueError(f"cardinality needs d >= 1 and q >= 1, got d={d}, q={q}")
    return math.comb(10**q + d - 1, d - 1)


def _check_cap(d: int, q: int, cap: int) -> int:
    n = cardinality(d, q)
    if n > cap:
        raise GridCapExceeded(n, cap)
    return n


def _compositions(d: int, total: int) -> Iterator[tuple[int, ...]]:
    # Bar positions in lexicographic order give compositions in lexicographic order.
    slots = total + d - 1
    for bars in itertools.combinations(range(slots), d - 1):
        prev = -1
        parts = []
        for b in bars:
            parts.append(b - prev - 1)
            prev = b
        parts.append(slots - prev - 1)
        yield tuple(parts)


def enumerate_grid(d: int, q: int, cap: int = ENUMERATION_CAP) -> Iterator[ContextVector]:
    """Yield every grid point in lexicographic order of its units."""
    _check_cap(d, q, cap)
    for units in _compositions(d, 10**q):
        yield ContextVector(units, q)


def grid_units(d: int, q: int, cap: int = ENUMERATION_CAP) -> np.ndarray:
    """The enumerated grid as an ``(n, d)`` integer array, same order as :func:`enumerate_grid`."""
    n = _check_cap(d, q, cap)
    out = np.empty((n, d), dtype=np.int64)
    for i, units in enumerate(_compositions(d, 10**q)):
        out[i] = units
    return out


def sample_grid_units(d: int, q: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``size`` grid points uniformly (with replacement) via random bar placement."""
    total = 10**q
    slots = total + d - 1
    out = np.empty((size, d), dtype=np.int64)
    for i in range(size):
        bars = np.sort(rng.choice(slots, size=d - 1, replace=False))
        edges = np.concatenate(([-1], bars, [slots]))
        out[i] = np.diff(edges) - 1
    return out


def round_units(raw: np.ndarray, q: int) -> np.ndarray:
    """Largest-remainder rounding of rows of ``raw`` onto the grid.

    Each row is divided by its sum and scaled to ``10**q`` units.  Leftover
    units go to the largest fractional parts, lowest index first on ties.
    Accepts a 1-d vector or a 2-d batch.
    """
    arr = np.asarray(raw, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] < 1:
        raise ValueError("context must have at least one entry")
    if not np.all(np.isfinite(arr)):
        raise ValueError("context entries must be finite")
    if np.any(arr < 0):
        raise ValueError("context entries must be non-negative")
    sums = arr.sum(axis=1)
    if np.any(sums <= 0):
        raise ValueError("context must have at least one strictly positive entry")

    total = 10**q
    scaled = arr / sums[:, None] * total
    floors = np.floor(scaled + 1e-9)
    rem = np.round(scaled - floors, 9)
    deficit = (total - floors.sum(axis=1)).astype(np.int64)
    # stable sort on -rem keeps lowest index first among equal remainders
    order = np.argsort(-rem, axis=1, kind="stable")
    ranks = np.empty_like(order)
    rows = np.arange(arr.shape[0])[:, None]
    ranks[rows, order] = np.arange(arr.shape[1])[None, :]
    units = floors.astype(np.int64) + (ranks < deficit[:, None])
    return units[0] if single else units


def normalize_and_round(raw: Sequence[float], q: int) -> ContextVector:
    """Normalize ``raw`` to sum one and round it onto the precision-``q`` grid."""
    if q < 1:
        raise ValueError(f"precision q must be >= 1, got {q}")
    return ContextVector(tuple(int(u) for u in round_units(np.asarray(raw, dtype=float), q)), q)


@dataclass(frozen=True, eq=False)
class EncoderModel:
    """Trained k-means encoder over the normalized grid."""

    centroids: np.ndarray
    d: int
    q: int
    seed: int
    converged: bool
    cluster_sizes: tuple[int, ...]
    min_cluster_size: int = field(init=False)

    def __post_init__(self):
        c = np.asarray(self.centroids, dtype=float)
        c.setflags(write=False)
        object.__setattr__(self, "centroids", c)
        if c.ndim != 2 or c.shape[1] != self.d:
            raise ValueError(f"centroids must have shape (k, {self.d}), got {c.shape}")
        if len(self.cluster_sizes) != c.shape[0]:
            raise ValueError("cluster_sizes must have one entry per centroid")
        object.__setattr__(self, "min_cluster_size", int(min(self.cluster_sizes)))

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def encode(self, x) -> int:
        return encode(self, x)

    def encode_many(self, points: np.ndarray) -> np.ndarray:
        return _nearest(np.asarray(points, dtype=float), self.centroids)

    def to_dict(self) -> dict:
        return {
            "version": MODEL_FORMAT_VERSION,
            "d": self.d,
            "q": self.q,
            "k": self.k,
            "centroids": self.centroids.tolist(),
            "min_cluster_size": self.min_cluster_size,
            "cluster_sizes": list(self.cluster_sizes),
            "seed": self.seed,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EncoderModel":
        if doc.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported encoder model version {doc.get('version')!r}")
        model = cls(
            centroids=np.asarray(doc["centroids"], dtype=float),
            d=int(doc["d"]),
            q=int(doc["q"]),
            seed=int(doc["seed"]),
            converged=bool(doc["converged"]),
            cluster_sizes=tuple(int(s) for s in doc["cluster_sizes"]),
        )
        if model.k != int(doc["k"]) or model.min_cluster_size != int(doc["min_cluster_size"]):
            raise ValueError("encoder model document is inconsistent")
        return model

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "EncoderModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _nearest(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    labels = np.empty(points.shape[0], dtype=np.int64)
    chunk = max(1, 2**21 // centroids.size)
    for start in range(0, points.shape[0], chunk):
        block = points[start:start + chunk]
        # exact differences so that ties resolve to the lowest index
        d2 = ((block[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        labels[start:start + chunk] = np.argmin(d2, axis=1)
    return labels


def _kmeans_pp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    first = rng.integers(n)
    centers[0] = points[first]
    closest = ((points - centers[0]) ** 2).sum(1)
    for i in range(1, k):
        total = closest.sum()
        if total <= 0:
            raise ValueError("not enough distinct points for k-means++ seeding")
        idx = rng.choice(n, p=closest / total)
        centers[i] = points[idx]
        closest = np.minimum(closest, ((points - centers[i]) ** 2).sum(1))
    return centers


def kmeans(points: np.ndarray, k: int, rng: np.random.Generator,
           max_iter: int = MAX_ITER) -> tuple[np.ndarray, np.ndarray, bool]:
    """Lloyd's algorithm with k-means++ seeding.

    Returns ``(centroids, labels, converged)``.  Empty clusters are re-seeded
    with the point farthest from its current centroid.
    """
    centers = _kmeans_pp(points, k, rng)
    labels = np.full(points.shape[0], -1, dtype=np.int64)
    for _ in range(max_iter):
        new_labels = _nearest(points, centers)
        if np.array_equal(new_labels, labels):
            return centers, labels, True
        labels = new_labels
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, points)
        nonempty = counts > 0
        centers[nonempty] = sums[nonempty] / counts[nonempty, None]
        for j in np.flatnonzero(~nonempty):
            far = ((points - centers[labels]) ** 2).sum(1)
            idx = int(np.argmax(far))
            centers[j] = points[idx]
            labels[idx] = j
    return centers, _nearest(points, centers), False


def train_encoder(d: int, q: int, k: int, samples: int = 100_000, seed: int = 0,
                  cap: int = ENUMERATION_CAP, max_iter: int = MAX_ITER) -> EncoderModel:
    """Fit a k-means encoder on points drawn uniformly from the grid.

    The full grid is used when it fits under ``cap``; otherwise ``samples``
    uniform grid draws.  Cluster sizes count every training point.
    """
    n = cardinality(d, q)
    if k < 1 or k > n:
        raise ValueError(
            f"k={k} must satisfy 1 <= k <= n, where n = C(10^q+d-1, d-1) = {n} for d={d}, q={q}")
    rng = np.random.default_rng(seed)
    if n <= cap:
        units = grid_units(d, q, cap)
    else:
        if samples < k:
            raise ValueError(f"samples={samples} must be at least k={k}")
        units = sample_grid_units(d, q, samples, rng)
    points = units / 10**q
    centers, labels, converged = kmeans(points, k, rng, max_iter=max_iter)
    sizes = np.bincount(labels, minlength=k)
    return EncoderModel(centroids=centers, d=d, q=q, seed=seed, converged=converged,
                        cluster_sizes=tuple(int(s) for s in sizes))


def encode(model: EncoderModel, x) -> int:
    """Index of the nearest centroid (Euclidean), lowest index on ties."""
    values = x.values if isinstance(x, ContextVector) else np.asarray(x, dtype=float)
    if values.ndim != 1 or values.shape[0] != model.d:
        raise ValueError(f"context has dimension {values.shape}, encoder expects {model.d}")
    d2 = ((model.centroids - values) ** 2).sum(axis=1)
    return int(np.argmin(d2))
