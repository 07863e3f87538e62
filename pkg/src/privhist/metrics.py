"""Histogram-induced distance, expected cell diameters, cut probabilities,
and MST cost comparison against sanitized histograms.

The histogram distance between two points is the furthest distance between
their smallest containing cells (sup-sup).  For box pairs that is exact via
per-axis farthest spans; for certified cells we return the certificate upper
bound |p_x - p_y| + R_x + R_y.  Both versions satisfy the two-sided sandwich
|x - y| <= d_H(x, y) <= |x - y| + diam(C_x) + diam(C_y).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .geometry import Ball, Box, Dataset, Region, as_point, uniform_in_region, voronoi_assign
from .rng import substream
from .roundness import certify_roundness
from .sanitizer import HistogramNode, SanitizedHistogram, build_shifted_grid, build_voronoi


# ---------------------------------------------------------------------------
# leaf location and diameters


def locate_leaf(hist: SanitizedHistogram, x) -> HistogramNode:
    p = as_point(x)
    if not hist.root.region.contains(p):
        raise InputError("point lies outside the histogram root region")
    node = hist.root
    while node.children:
        for child in node.children:
            if child.region.contains(p):
                node = child
                break
        else:  # pragma: no cover - children partition the parent
            raise InputError("no child region contains the point")
    return node


def locate_leaves(hist: SanitizedHistogram, X: np.ndarray) -> list[HistogramNode]:
    """Leaf per row of X; single tree walk with vectorized membership."""
    X = np.asarray(X, dtype=float)
    inside = hist.root.region.contains_many(X)
    if not inside.all():
        raise InputError(f"point index {int(np.flatnonzero(~inside)[0])} is outside the root")
    out: list = [None] * X.shape[0]

    def walk(node, rows):
        if not node.children:
            for r in rows:
                out[r] = node
            return
        remaining = rows
        for child in node.children:
            if remaining.size == 0:
                break
            mask = child.region.contains_many(X[remaining])
            sel = remaining[mask]
            if sel.size:
                walk(child, sel)
            remaining = remaining[~mask]

    walk(hist.root, np.arange(X.shape[0]))
    return out


class _CertCache:
    def __init__(self, samples=128, seed=0):
        self.samples = samples
        self.seed = seed
        self._store = {}

    def get(self, node: HistogramNode):
        key = id(node)
        if key not in self._store:
            self._store[key] = certify_roundness(node.region, samples=self.samples,
                                                 seed=self.seed + len(self._store))
        return self._store[key]


def leaf_diameter(node: HistogramNode, certs: _CertCache | None = None) -> float:
    region = node.region
    if isinstance(region, Box):
        return region.diameter()
    if isinstance(region, Ball):
        return region.diameter()
    certs = certs or _CertCache()
    return 2.0 * certs.get(node).radius


def _leaf_pair_distance(a: HistogramNode, b: HistogramNode, certs: _CertCache) -> float:
    ra, rb = a.region, b.region
    if isinstance(ra, Box) and isinstance(rb, Box):
        span = np.maximum(ra.high - rb.low, rb.high - ra.low)
        return float(np.linalg.norm(span))
    pa, Ra = _witness_radius(a, certs)
    pb, Rb = _witness_radius(b, certs)
    return float(np.linalg.norm(pa - pb)) + Ra + Rb


def _witness_radius(node: HistogramNode, certs: _CertCache):
    region = node.region
    if isinstance(region, Ball):
        return region.center, region.radius
    if isinstance(region, Box):
        return region.center, 0.5 * region.diameter()
    cert = certs.get(node)
    return cert.witness, cert.radius


def hist_distance(hist: SanitizedHistogram, x, y, certs: _CertCache | None = None) -> float:
    """Distance induced by the smallest containing cells (see module doc)."""
    certs = certs or _CertCache()
    leaf_x = locate_leaf(hist, x)
    leaf_y = locate_leaf(hist, y)
    return _leaf_pair_distance(leaf_x, leaf_y, certs)


def hist_distance_with_diameters(hist, x, y, certs: _CertCache | None = None):
    """(d_H, diam(C_x), diam(C_y)) with the diameters d_H itself uses."""
    certs = certs or _CertCache()
    leaf_x = locate_leaf(hist, x)
    leaf_y = locate_leaf(hist, y)
    return (
        _leaf_pair_distance(leaf_x, leaf_y, certs),
        leaf_diameter(leaf_x, certs),
        leaf_diameter(leaf_y, certs),
    )


# ---------------------------------------------------------------------------
# expected diameters vs t-radius bounds


def grid_diameter_bound(d: int, t: int, r: float) -> float:
    """Per-point diameter bound 2 * min(d^1.5, t*d) * r * log2(1/r), with the
    level factor clamped to at least one level."""
    levels = max(math.log2(1.0 / r), 1.0) if r > 0 else 1.0
    return 2.0 * min(d**1.5, t * d) * r * levels


@dataclass
class DiameterStats:
    method: str
    t: int
    trials: int
    per_point: list  # (index, t_radius, mean_diameter, bound)
    fitted_coeff: float | None = None

    def all_within_bound(self) -> bool:
        return all(mean <= bound for _, _, mean, bound in self.per_point)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "t": self.t,
            "trials": self.trials,
            "fitted_coeff": self.fitted_coeff,
            "per_point": [
                {"index": i, "t_radius": r, "mean_diameter": m, "bound": b}
                for i, r, m, b in self.per_point
            ],
        }


def measure_diameters(
    dataset: Dataset,
    t: int,
    trials: int,
    seed: int = 0,
    method: str = "grid",
    max_depth: int = 8,
    support: Region | None = None,
    **builder_kwargs,
) -> DiameterStats:
    """Rebuild a randomized histogram `trials` times and compare each point's
    mean smallest-cell diameter with its t-radius bound.

    Grid bounds are closed-form; Voronoi bounds fit one coefficient kappa to
    mean ~ kappa * (max_depth * d * r + 2^-max_depth) and report it.
    """
    if method not in ("grid", "voronoi-greedy", "voronoi-uniform"):
        raise InputError("measure_diameters needs a randomized builder (grid or voronoi)")
    if trials < 1:
        raise InputError("trials must be positive")
    if dataset.n < 2:
        raise InputError("need at least two points")
    d = dataset.d
    from .geometry import t_radius as t_radius_fn

    radii = np.array([t_radius_fn(dataset, dataset.points[i], t) for i in range(dataset.n)])

    sums = np.zeros(dataset.n)
    for trial in range(trials):
        tseed = int(substream(seed, "trial", trial).integers(0, 2**62))
        if method == "grid":
            hist = build_shifted_grid(dataset, t, max_depth, seed=tseed)
        else:
            if support is None:
                raise InputError("voronoi diameter measurement needs a support region")
            hist = build_voronoi(dataset, support, t, max_depth,
                                 method=method.split("-")[1], seed=tseed, **builder_kwargs)
        certs = _CertCache(seed=tseed)
        leaves = locate_leaves(hist, dataset.points)
        diam_cache: dict[int, float] = {}
        for i, leaf in enumerate(leaves):
            key = id(leaf)
            if key not in diam_cache:
                diam_cache[key] = leaf_diameter(leaf, certs)
            sums[i] += diam_cache[key]
    means = sums / trials

    per_point = []
    fitted = None
    if method == "grid":
        for i in range(dataset.n):
            per_point.append((i, float(radii[i]), float(means[i]),
                              grid_diameter_bound(d, t, float(radii[i]))))
    else:
        basis = max_depth * d * radii + 2.0 ** (-max_depth)
        fitted = float((means @ basis) / (basis @ basis))
        for i in range(dataset.n):
            per_point.append((i, float(radii[i]), float(means[i]),
                              fitted * float(basis[i])))
    return DiameterStats(method=method, t=t, trials=trials, per_point=per_point,
                         fitted_coeff=fitted)


# ---------------------------------------------------------------------------
# cut probability of small balls under random Voronoi partitions


def cut_probability(
    region: Region,
    x,
    r_values,
    m: int,
    trials: int,
    seed: int = 0,
    n_random_probes: int = 100,
) -> list[tuple[float, float, float]]:
    """Empirical probability that a ball around x is cut by a random Voronoi
    partition of the region (m uniform centers), for each radius.

    Probes are cumulative across the sorted radii under common random
    numbers, so the estimates are exactly monotone in r.  Probe-based cut
    detection can only miss cuts, biasing estimates down.
    """
    p = as_point(x)
    if not region.contains(p):
        raise InputError("x must lie inside the region")
    cert = certify_roundness(region, samples=128, seed=seed)
    rho = cert.radius
    rs = np.sort(np.asarray(list(r_values), dtype=float))
    if rs.size == 0 or rs[0] <= 0:
        raise InputError("radii must be positive")
    if rs[-1] >= rho:
        raise InputError(f"radius {rs[-1]} is not below the cell radius {rho}")
    d = region.dim
    axis_dirs = np.concatenate([np.eye(d), -np.eye(d)])
    cuts = np.zeros(rs.size, dtype=float)
    for trial in range(trials):
        rng = substream(seed, "cut-trial", trial)
        centers = uniform_in_region(region, m, rng)
        rand = rng.standard_normal((n_random_probes, d))
        rand /= np.maximum(np.linalg.norm(rand, axis=1, keepdims=True), 1e-300)
        dirs = np.concatenate([axis_dirs, rand])
        pts = (p[None, None, :] + rs[:, None, None] * dirs[None, :, :]).reshape(-1, d)
        pts = np.concatenate([p[None, :], pts])
        assign = voronoi_assign(centers, pts)
        base = assign[0]
        per_r = assign[1:].reshape(rs.size, dirs.shape[0])
        cut_here = (per_r != base).any(axis=1)
        cuts += np.maximum.accumulate(cut_here)
    probs = cuts / trials
    return [
        (float(r), float(prob), float(math.sqrt(prob * (1 - prob) / trials)))
        for r, prob in zip(rs, probs)
    ]


# ---------------------------------------------------------------------------
# MST comparison


@dataclass
class MstComparison:
    actual_cost: float
    hist_cost: float
    gap: float
    gap_bound: float

    def to_dict(self) -> dict:
        return {
            "actual_cost": self.actual_cost,
            "hist_cost": self.hist_cost,
            "gap": self.gap,
            "gap_bound": self.gap_bound,
        }


def _prim(W: np.ndarray):
    n = W.shape[0]
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = W[0].copy()
    best_from = np.zeros(n, dtype=int)
    cost = 0.0
    edges = []
    for _ in range(n - 1):
        masked = np.where(in_tree, np.inf, best)
        j = int(np.argmin(masked))
        cost += float(masked[j])
        edges.append((int(best_from[j]), j))
        in_tree[j] = True
        upd = W[j] < best
        best = np.minimum(best, W[j])
        best_from[upd] = j
    return cost, edges


def mst_compare(hist: SanitizedHistogram, dataset: Dataset,
                certs: _CertCache | None = None) -> MstComparison:
    """Exact Euclidean MST cost vs MST cost under the histogram distance.

    gap_bound sums the endpoint leaf diameters over the histogram MST's
    edges (the additive error the distance sandwich allows per edge).
    """
    if dataset.n < 2:
        raise InputError("MST comparison needs at least two points")
    certs = certs or _CertCache()
    pts = dataset.points
    diff = pts[:, None, :] - pts[None, :, :]
    W = np.linalg.norm(diff, axis=2)
    actual, _ = _prim(W)

    leaves = locate_leaves(hist, pts)
    uniq: dict[int, int] = {}
    leaf_objs = []
    leaf_of = np.empty(dataset.n, dtype=int)
    for i, leaf in enumerate(leaves):
        key = id(leaf)
        if key not in uniq:
            uniq[key] = len(leaf_objs)
            leaf_objs.append(leaf)
        leaf_of[i] = uniq[key]
    L = len(leaf_objs)
    pair = np.zeros((L, L))
    for a in range(L):
        for b in range(a, L):
            pair[a, b] = pair[b, a] = _leaf_pair_distance(leaf_objs[a], leaf_objs[b], certs)
    WH = pair[leaf_of][:, leaf_of]
    hist_cost, edges = _prim(WH)

    diam = np.array([leaf_diameter(leaf, certs) for leaf in leaf_objs])
    gap_bound = float(sum(diam[leaf_of[a]] + diam[leaf_of[b]] for a, b in edges))
    return MstComparison(
        actual_cost=float(actual),
        hist_cost=float(hist_cost),
        gap=float(hist_cost - actual),
        gap_bound=gap_bound,
    )
