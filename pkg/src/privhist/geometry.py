"""Points, datasets, regions, distances, volumes and t-radii.

Conventions
-----------
* Points are 1-D float64 arrays; a Dataset wraps an (n, d) array.
* Boxes are closed on low faces and open on high faces, except faces flagged
  in ``closed_high`` (the global root box is closed on all faces), so every
  subdivision produced by the sanitizers is a true partition.
* Balls are closed.
* Voronoi ties break toward the lowest center index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, InputError
from .rng import substream


# ---------------------------------------------------------------------------
# points and datasets


def as_point(coords) -> np.ndarray:
    p = np.asarray(coords, dtype=float)
    if p.ndim == 0:
        p = p.reshape(1)
    if p.ndim != 1 or p.size < 1:
        raise InputError("a point must be a 1-D sequence with at least one coordinate")
    if not np.all(np.isfinite(p)):
        raise InputError("point coordinates must be finite")
    return p


class Dataset:
    """Ordered collection of n points in d-dimensional Euclidean space."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2:
            raise InputError("dataset points must form an (n, d) array")
        if pts.shape[0] > 0 and pts.shape[1] < 1:
            raise InputError("dataset dimension must be >= 1")
        if not np.all(np.isfinite(pts)):
            raise InputError("dataset coordinates must be finite")
        self._points = pts
        self._points.setflags(write=False)

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def n(self) -> int:
        return self._points.shape[0]

    @property
    def d(self) -> int:
        return self._points.shape[1]

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other) -> bool:
        return isinstance(other, Dataset) and np.array_equal(self._points, other._points)


def distance(x, y) -> float:
    """Euclidean distance; raises InputError on dimension mismatch."""
    a, b = as_point(x), as_point(y)
    if a.shape != b.shape:
        raise InputError(f"dimension mismatch: {a.size} vs {b.size}")
    return float(np.linalg.norm(a - b))


# ---------------------------------------------------------------------------
# regions


class Region:
    """Base class for membership-decidable bounded convex regions."""

    dim: int

    def contains_many(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x) -> bool:
        p = as_point(x)
        if p.size != self.dim:
            raise InputError(f"dimension mismatch: region is {self.dim}-d, point is {p.size}-d")
        return bool(self.contains_many(p.reshape(1, -1))[0])

    def bounding_ball(self) -> tuple[np.ndarray, float]:
        """(center, radius) of a ball guaranteed to contain the region."""
        raise NotImplementedError


@dataclass(frozen=True)
class Box(Region):
    low: np.ndarray
    high: np.ndarray
    closed_high: np.ndarray = None  # per-axis bool; None means open everywhere

    def __post_init__(self):
        lo = np.asarray(self.low, dtype=float)
        hi = np.asarray(self.high, dtype=float)
        object.__setattr__(self, "low", lo)
        object.__setattr__(self, "high", hi)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise InputError("box low/high must be 1-D arrays of equal length")
        if not np.all(lo < hi):
            raise InputError("box requires low[i] < high[i] on every axis")
        ch = self.closed_high
        if ch is None:
            ch = np.zeros(lo.size, dtype=bool)
        else:
            ch = np.asarray(ch, dtype=bool)
            if ch.shape != lo.shape:
                raise InputError("closed_high must match box dimension")
        object.__setattr__(self, "closed_high", ch)

    @property
    def dim(self) -> int:
        return self.low.size

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.low + self.high)

    @property
    def sides(self) -> np.ndarray:
        return self.high - self.low

    def diameter(self) -> float:
        return float(np.linalg.norm(self.sides))

    def volume(self) -> float:
        return float(np.prod(self.sides))

    def contains_many(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        below = np.where(self.closed_high, X <= self.high, X < self.high)
        return np.logical_and(X >= self.low, below).all(axis=1)

    def bounding_ball(self):
        return self.center, 0.5 * self.diameter()


@dataclass(frozen=True)
class Ball(Region):
    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = as_point(self.center)
        object.__setattr__(self, "center", c)
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise InputError("ball radius must be positive and finite")

    @property
    def dim(self) -> int:
        return self.center.size

    def diameter(self) -> float:
        return 2.0 * self.radius

    def volume(self) -> float:
        return unit_ball_volume(self.dim) * self.radius**self.dim

    def contains_many(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.linalg.norm(X - self.center, axis=1) <= self.radius

    def bounding_ball(self):
        return self.center, self.radius


class VoronoiClip(Region):
    """Voronoi cell of one center among siblings, clipped to a parent region.

    ``centers`` holds the full ordered center list (own + siblings); ties in
    the nearest-center assignment break toward the lowest index, which makes
    sibling cells disjoint and exhaustive on the parent.
    """

    __slots__ = ("centers", "own_index", "parent")

    def __init__(self, centers, own_index: int, parent: Region):
        centers = np.asarray(centers, dtype=float)
        if centers.ndim != 2 or centers.shape[0] < 1:
            raise InputError("centers must form an (m, d) array")
        if not (0 <= own_index < centers.shape[0]):
            raise InputError("own_index out of range")
        own = centers[own_index]
        dup = np.all(centers == own, axis=1)
        if int(dup.sum()) != 1:
            raise InputError("own center must appear exactly once among the centers")
        if not parent.contains(own):
            raise InputError("own center must be a member of the parent region")
        self.centers = centers
        self.centers.setflags(write=False)
        self.own_index = int(own_index)
        self.parent = parent

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    @property
    def own_center(self) -> np.ndarray:
        return self.centers[self.own_index]

    @property
    def sibling_centers(self) -> np.ndarray:
        m = self.centers.shape[0]
        return self.centers[[i for i in range(m) if i != self.own_index]]

    def contains_many(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        assigned = voronoi_assign(self.centers, X) == self.own_index
        return assigned & self.parent.contains_many(X)

    def bounding_ball(self):
        # Any cell point is in the parent, hence within parent_radius of the
        # parent ball center; from the own center that is at most
        # parent_radius + |own - parent_center|.
        pc, pr = self.parent.bounding_ball()
        return self.own_center, pr + float(np.linalg.norm(self.own_center - pc))

    def ancestry(self) -> list[Region]:
        """Chain [root, ..., self]; the root is always a Ball or Box."""
        chain = [self]
        node = self.parent
        while isinstance(node, VoronoiClip):
            chain.append(node)
            node = node.parent
        chain.append(node)
        return chain[::-1]


def voronoi_assign(centers: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Index of the nearest center for each row of X (ties -> lowest index).

    Uses the expansion |x-c|^2 = |x|^2 - 2 x.c + |c|^2; the |x|^2 term is
    constant per row and dropped, so the argmin runs on a BLAS product.
    """
    scores = (centers * centers).sum(axis=1)[None, :] - 2.0 * (X @ centers.T)
    return np.argmin(scores, axis=1)


def root_support(region: Region) -> Region:
    while isinstance(region, VoronoiClip):
        region = region.parent
    return region


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


# ---------------------------------------------------------------------------
# counting and t-radii


def count_in_region(dataset: Dataset, region: Region) -> int:
    """Exact number of dataset points inside the region."""
    if dataset.n == 0:
        return 0
    if dataset.d != region.dim:
        raise InputError("dataset and region dimensions differ")
    return int(region.contains_many(dataset.points).sum())


def t_radius(dataset: Dataset, x, t: int) -> float:
    """Distance from x to its t-th nearest dataset point.

    When x coincides exactly with a dataset point, one copy of itself is
    excluded before ranking neighbours.
    """
    p = as_point(x)
    if p.size != dataset.d:
        raise InputError("dimension mismatch")
    if t < 1:
        raise InputError("t must be a positive integer")
    dists = np.linalg.norm(dataset.points - p, axis=1)
    exact = np.all(dataset.points == p, axis=1)
    if exact.any():
        drop = int(np.flatnonzero(exact)[0])
        dists = np.delete(dists, drop)
    if t > dists.size:
        raise InputError(f"t={t} exceeds the {dists.size} available neighbours")
    return float(np.partition(dists, t - 1)[t - 1])


# ---------------------------------------------------------------------------
# uniform sampling inside regions


def uniform_in_box(low, high, n: int, rng: np.random.Generator) -> np.ndarray:
    low = np.asarray(low, float)
    high = np.asarray(high, float)
    return low + (high - low) * rng.random((n, low.size))


def uniform_in_ball(center, radius: float, n: int, rng: np.random.Generator) -> np.ndarray:
    center = np.asarray(center, float)
    d = center.size
    g = rng.standard_normal((n, d))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    radii = radius * rng.random(n) ** (1.0 / d)
    return center + g / norms * radii[:, None]


def uniform_in_region(
    region: Region,
    n: int,
    rng: np.random.Generator,
    *,
    envelope: tuple[np.ndarray, float] | None = None,
    max_batches: int = 1000,
) -> np.ndarray:
    """n points uniform in the region.

    Boxes and balls are sampled exactly.  VoronoiClip cells are sampled by
    rejection from ``envelope`` (a (center, radius) ball) when given, else
    from the root support region, which is exact.  Raises
    DegenerateGeometryError on rejection starvation.
    """
    if isinstance(region, Box):
        return uniform_in_box(region.low, region.high, n, rng)
    if isinstance(region, Ball):
        return uniform_in_ball(region.center, region.radius, n, rng)
    if n == 0:
        return np.empty((0, region.dim))

    root = root_support(region)
    out = []
    got = 0
    batch = max(2048, 2 * n)
    for _ in range(max_batches):
        if envelope is not None:
            cand = uniform_in_ball(envelope[0], envelope[1], batch, rng)
        elif isinstance(root, Box):
            cand = uniform_in_box(root.low, root.high, batch, rng)
        else:
            cand = uniform_in_ball(root.center, root.radius, batch, rng)
        keep = cand[region.contains_many(cand)]
        if keep.shape[0]:
            out.append(keep)
            got += keep.shape[0]
        if got >= n:
            return np.concatenate(out)[:n]
    raise DegenerateGeometryError(
        f"rejection starvation: {got}/{n} samples after {max_batches} batches"
    )


# ---------------------------------------------------------------------------
# volumes


def region_volume(
    region: Region, oracle_samples: int = 200_000, seed: int = 0
) -> tuple[float, float]:
    """(volume estimate, standard error).

    Boxes and balls are exact (stderr 0).  VoronoiClip cells use hit-or-miss
    Monte Carlo from the closed-form root support, deterministic given seed.
    """
    if isinstance(region, Box):
        return region.volume(), 0.0
    if isinstance(region, Ball):
        return region.volume(), 0.0
    if not isinstance(region, VoronoiClip):
        raise InputError(f"unsupported region type {type(region).__name__}")
    root = root_support(region)
    base_volume = root.volume()
    rng = substream(seed, "region-volume")
    if isinstance(root, Box):
        cand = uniform_in_box(root.low, root.high, oracle_samples, rng)
    else:
        cand = uniform_in_ball(root.center, root.radius, oracle_samples, rng)
    hits = int(region.contains_many(cand).sum())
    p = hits / oracle_samples
    return base_volume * p, base_volume * math.sqrt(p * (1.0 - p) / oracle_samples)


def intersection_volume_ratio(
    q,
    r: float,
    c: float,
    region: Region,
    samples: int = 200_000,
    seed: int = 0,
) -> tuple[float, float]:
    """Monte Carlo estimate of Vol(B(q,r) n C) / Vol(B(q,cr) n C).

    Samples uniformly in the enclosing ball B(q, c*r); the estimate is the
    fraction of in-C samples that also fall in B(q, r).  Deterministic given
    seed.  Raises DegenerateGeometryError when no sample lands in C.
    """
    qp = as_point(q)
    if qp.size != region.dim:
        raise InputError("dimension mismatch")
    if not (r > 0 and c > 1):
        raise InputError("requires r > 0 and c > 1")
    rng = substream(seed, "volume-ratio")
    pts = uniform_in_ball(qp, c * r, samples, rng)
    in_c = region.contains_many(pts)
    denom = int(in_c.sum())
    if denom == 0:
        raise DegenerateGeometryError("no samples of B(q, c*r) fell inside the cell")
    in_small = np.linalg.norm(pts[in_c] - qp, axis=1) <= r
    hits = int(in_small.sum())
    ratio = hits / denom
    stderr = math.sqrt(ratio * (1.0 - ratio) / denom)
    return ratio, stderr
