"""Histogram tree builders and sanitized (counts-only) output.

Three constructions:

* recursive cube: deterministic dyadic subdivision of a root cube, splitting
  every cell holding at least 2t points into its 2^d half-side subcubes;
* shifted grid: nested meshes over a doubled, randomly centered cube sharing
  one offset across levels, refined where at least 2t points remain, with
  every cell that straddles the domain surface disbanded and absorbed into
  its adjacent interior cell per axis;
* Voronoi: cells holding more than t points are subdivided by the Voronoi
  partition of centers chosen greedily (well-spread) or uniformly at random.

All published regions are construction artifacts (mesh lines, centers); a
final scan aborts if any dataset coordinate vector appears in the output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, InternalError, ResourceError
from .geometry import (
    Ball,
    Box,
    Dataset,
    Region,
    VoronoiClip,
    uniform_in_region,
    voronoi_assign,
)
from .rng import seed_commitment, substream
from .roundness import RoundnessCertificate, certify_roundness

DEFAULT_NODE_BUDGET = 2_000_000
DEFAULT_CENTERS_BUDGET = 1_000_000
DEFAULT_PROBE_SAMPLES = 100_000


@dataclass
class HistogramNode:
    region: Region
    count: int
    level: int
    children: list = field(default_factory=list)

    def is_leaf(self) -> bool:
        return not self.children

    def walk(self):
        yield self
        for ch in self.children:
            yield from ch.walk()

    def leaves(self):
        return [n for n in self.walk() if n.is_leaf()]


@dataclass
class SanitizedHistogram:
    """Counts-only histogram: regions, per-cell counts, and parameters."""

    root: HistogramNode
    method: str
    t: int
    max_depth: int
    seed_commitment: str
    component_index: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.root.region.dim

    def leaf_count_sum(self) -> int:
        return sum(n.count for n in self.root.leaves())


class _Budget:
    def __init__(self, limit: int):
        self.limit = limit
        self.used = 0

    def charge(self, n: int):
        self.used += n
        if self.used > self.limit:
            raise ResourceError(
                f"node budget exceeded: {self.used} nodes requested, limit {self.limit}"
            )


def _require_inside(dataset: Dataset, region: Region, what: str):
    if dataset.n == 0:
        return
    if dataset.d != region.dim:
        raise InputError(f"dataset dimension {dataset.d} does not match {what}")
    ok = region.contains_many(dataset.points)
    if not ok.all():
        bad = int(np.flatnonzero(~ok)[0])
        raise InputError(f"point index {bad} lies outside the {what}")


def default_root_box(d: int) -> Box:
    return Box(-np.ones(d), np.ones(d), closed_high=np.ones(d, dtype=bool))


# ---------------------------------------------------------------------------
# recursive cube


def build_recursive_cube(
    dataset: Dataset,
    t: int,
    max_depth: int = 8,
    root: Box | None = None,
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> SanitizedHistogram:
    """Deterministic dyadic histogram: split every cell with count >= 2t."""
    if t < 1 or max_depth < 1:
        raise InputError("t and max_depth must be positive")
    d = dataset.d if dataset.n else (root.dim if root is not None else None)
    if d is None:
        raise InputError("empty dataset requires an explicit root box")
    if root is None:
        root = default_root_box(d)
    _require_inside(dataset, root, "root box")
    if 2**d > node_budget:
        raise ResourceError(f"2^{d} children per split exceeds the node budget {node_budget}")
    budget = _Budget(node_budget)
    budget.charge(1)

    def grow(box: Box, idx: np.ndarray, level: int) -> HistogramNode:
        node = HistogramNode(region=box, count=int(idx.size), level=level)
        if idx.size >= 2 * t and level < max_depth:
            budget.charge(2**d)
            mid = box.center
            pts = dataset.points[idx]
            codes = ((pts >= mid) << np.arange(d)).sum(axis=1)
            for key in range(2**d):
                bits = (key >> np.arange(d)) & 1
                lo = np.where(bits, mid, box.low)
                hi = np.where(bits, box.high, mid)
                closed = box.closed_high & (bits == 1)
                child_box = Box(lo, hi, closed_high=closed)
                node.children.append(grow(child_box, idx[codes == key], level + 1))
        return node

    tree = grow(root, np.arange(dataset.n), 0)
    return strip_to_sanitized(tree, dataset, method="cube", t=t, max_depth=max_depth,
                              seed=None)


# ---------------------------------------------------------------------------
# randomized shifted grid


def _axis_strip_bounds(base: float, w: float, lo: float, hi: float) -> np.ndarray:
    """Merged strip boundaries on one axis for mesh lines base + k*w.

    Mesh lines strictly inside (lo, hi) are x_1 < ... < x_q.  Cells
    straddling the domain surface are disbanded and absorbed into their
    adjacent interior strips, which keeps boundary strip widths in (w, 2w].
    With fewer than three interior lines no interior strip survives and the
    axis stays unrefined.
    """
    k_lo = math.floor((lo - base) / w)
    k_hi = math.ceil((hi - base) / w)
    lines = base + np.arange(k_lo, k_hi + 1) * w
    lines = lines[(lines > lo) & (lines < hi)]
    if lines.size <= 2:
        return np.array([lo, hi])
    return np.concatenate(([lo], lines[1:-1], [hi]))


def build_shifted_grid(
    dataset: Dataset,
    t: int,
    max_depth: int = 8,
    seed: int = 0,
    root: Box | None = None,
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> SanitizedHistogram:
    """Randomized nested-mesh histogram with boundary-cell disbanding.

    One center is drawn uniformly in the root cube; the inflated cube has
    twice the root's side and the level-i mesh has edge side * 2^(1-i) at a
    fixed offset, so raw cells nest across levels.  Cells refine while they
    hold at least 2t points and mesh levels remain.
    """
    if t < 1 or max_depth < 1:
        raise InputError("t and max_depth must be positive")
    d = dataset.d if dataset.n else (root.dim if root is not None else None)
    if d is None:
        raise InputError("empty dataset requires an explicit root box")
    if root is None:
        root = default_root_box(d)
    sides = root.sides
    if not np.allclose(sides, sides[0]):
        raise InputError("shifted grid requires a cubical root region")
    side = float(sides[0])
    _require_inside(dataset, root, "root box")
    budget = _Budget(node_budget)
    budget.charge(1)

    center = uniform_in_region(root, 1, substream(seed, "grid-offset"))[0]
    bases = center - side  # low corner of the inflated cube, fixed across levels

    bounds_cache: dict[int, list[np.ndarray]] = {}

    def level_bounds(level: int) -> list[np.ndarray]:
        if level not in bounds_cache:
            w = side * 2.0 ** (1 - level)
            bounds_cache[level] = [
                _axis_strip_bounds(bases[j], w, root.low[j], root.high[j]) for j in range(d)
            ]
        return bounds_cache[level]

    def sub_bounds(box: Box, level: int) -> list[np.ndarray] | None:
        """Per-axis strip boundaries of the level mesh inside the box, or None
        when the mesh does not subdivide the box."""
        per_axis = []
        nontrivial = False
        for j in range(d):
            bnds = level_bounds(level)[j]
            i0 = int(np.searchsorted(bnds, box.low[j]))
            i1 = int(np.searchsorted(bnds, box.high[j]))
            seg = bnds[i0 : i1 + 1]
            if seg.size < 2 or seg[0] != box.low[j] or seg[-1] != box.high[j]:
                raise InternalError("mesh nesting violated")  # pragma: no cover
            per_axis.append(seg)
            if seg.size > 2:
                nontrivial = True
        return per_axis if nontrivial else None

    def grow(box: Box, idx: np.ndarray, level: int) -> HistogramNode:
        node = HistogramNode(region=box, count=int(idx.size), level=level)
        if idx.size < 2 * t:
            return node
        for lvl in range(level + 1, max_depth + 1):
            per_axis = sub_bounds(box, lvl)
            if per_axis is None:
                continue
            counts = [len(b) - 1 for b in per_axis]
            budget.charge(int(np.prod(counts)))
            pts = dataset.points[idx]
            digits = np.zeros((idx.size, d), dtype=int)
            for j in range(d):
                digits[:, j] = np.clip(
                    np.searchsorted(per_axis[j], pts[:, j], side="right") - 1,
                    0,
                    counts[j] - 1,
                )
            keys = np.ravel_multi_index(digits.T, counts) if idx.size else np.array([], int)
            for key in range(int(np.prod(counts))):
                digit = np.unravel_index(key, counts)
                lo = np.array([per_axis[j][digit[j]] for j in range(d)])
                hi = np.array([per_axis[j][digit[j] + 1] for j in range(d)])
                closed = box.closed_high & (hi == box.high)
                child = Box(lo, hi, closed_high=closed)
                node.children.append(grow(child, idx[keys == key], lvl))
            return node
        return node

    tree = grow(root, np.arange(dataset.n), 0)
    return strip_to_sanitized(tree, dataset, method="grid", t=t, max_depth=max_depth,
                              seed=seed, extra={"offset_center": center.tolist()})


# ---------------------------------------------------------------------------
# Voronoi subdivision


def method2_center_count(d: int) -> int:
    """Default number of uniform centers per split: 4 * d * 8^d."""
    return 4 * d * 8**d


def pick_centers_greedy(
    region: Region,
    cert: RoundnessCertificate,
    probe_samples: int = DEFAULT_PROBE_SAMPLES,
    seed: int = 0,
) -> np.ndarray:
    """Well-spread centers: scan a uniform probe stream, keeping the first
    probe at distance >= R/4 from everything kept so far.

    After one pass every probe is within R/4 of a kept center, so the kept
    set is R/4-well-spread and R/4-covers the cell up to probe resolution.
    """
    if probe_samples < 1:
        raise InputError("probe_samples must be positive")
    rng = substream(seed, "greedy-centers")
    envelope = None
    if isinstance(region, VoronoiClip):
        envelope = (cert.witness, cert.radius * 1.02)
    probes = uniform_in_region(region, probe_samples, rng, envelope=envelope)
    threshold = cert.radius / 4.0
    selected = [0]
    mind = np.linalg.norm(probes - probes[0], axis=1)
    ptr = 1
    while ptr < probe_samples:
        ahead = np.flatnonzero(mind[ptr:] >= threshold)
        if ahead.size == 0:
            break
        i = ptr + int(ahead[0])
        selected.append(i)
        np.minimum(mind, np.linalg.norm(probes - probes[i], axis=1), out=mind)
        ptr = i + 1
    return probes[np.array(selected)]


def pick_centers_uniform(
    region: Region,
    override_m: int | None = None,
    centers_budget: int = DEFAULT_CENTERS_BUDGET,
    seed: int = 0,
    envelope=None,
) -> np.ndarray:
    """m i.i.d. uniform centers from the cell; m defaults to 4*d*8^d."""
    d = region.dim
    m = override_m if override_m is not None else method2_center_count(d)
    if m < 1:
        raise InputError("center count must be positive")
    if m > centers_budget:
        raise ResourceError(
            f"uniform center rule requires m={m} centers in d={d}, "
            f"exceeding the budget of {centers_budget}; pass an explicit override"
        )
    rng = substream(seed, "uniform-centers")
    return uniform_in_region(region, m, rng, envelope=envelope)


def build_voronoi(
    dataset: Dataset,
    support: Region,
    t: int,
    max_depth: int = 3,
    method: str = "greedy",
    centers_budget: int = DEFAULT_CENTERS_BUDGET,
    override_m: int | None = None,
    probe_samples: int = DEFAULT_PROBE_SAMPLES,
    cert_samples: int = 256,
    seed: int = 0,
) -> SanitizedHistogram:
    """Voronoi histogram: cells holding more than t points subdivide."""
    if t < 1 or max_depth < 1:
        raise InputError("t and max_depth must be positive")
    if method not in ("greedy", "uniform"):
        raise InputError("method must be 'greedy' or 'uniform'")
    if not isinstance(support, (Ball, Box)):
        raise InputError("support must be a ball or a box")
    _require_inside(dataset, support, "support region")
    d = support.dim

    def grow(region: Region, idx: np.ndarray, level: int, path: tuple) -> HistogramNode:
        node = HistogramNode(region=region, count=int(idx.size), level=level)
        if idx.size <= t or level >= max_depth:
            return node
        cert = certify_roundness(region, samples=cert_samples,
                                 seed=_path_seed(seed, "cert", path))
        if method == "greedy":
            centers = pick_centers_greedy(region, cert, probe_samples,
                                          seed=_path_seed(seed, "centers", path))
        else:
            envelope = (cert.witness, cert.radius * 1.02) if isinstance(region, VoronoiClip) else None
            centers = pick_centers_uniform(region, override_m, centers_budget,
                                           seed=_path_seed(seed, "centers", path),
                                           envelope=envelope)
        assign = (
            voronoi_assign(centers, dataset.points[idx]) if idx.size else np.array([], int)
        )
        for i in range(centers.shape[0]):
            child_region = VoronoiClip(centers, i, region)
            node.children.append(grow(child_region, idx[assign == i], level + 1, path + (i,)))
        return node

    tree = grow(support, np.arange(dataset.n), 0, ())
    extra = {"center_method": method}
    if method == "uniform":
        extra["default_center_formula_used"] = override_m is None
        if override_m is not None:
            extra["uniform_center_guarantee_voided"] = True
    return strip_to_sanitized(tree, dataset, method=f"voronoi-{method}", t=t,
                              max_depth=max_depth, seed=seed, extra=extra)


def _path_seed(seed: int, label: str, path: tuple) -> int:
    return int(substream(seed, label, *path).integers(0, 2**62))


# ---------------------------------------------------------------------------
# sanitized output


def _construction_vectors(region: Region, seen_center_arrays: set) -> list[np.ndarray]:
    if isinstance(region, Box):
        return [region.low, region.high]
    if isinstance(region, Ball):
        return [region.center]
    if isinstance(region, VoronoiClip):
        # sibling cells share one centers array; scan it once
        if id(region.centers) in seen_center_arrays:
            return []
        seen_center_arrays.add(id(region.centers))
        return list(region.centers)
    return []


def strip_to_sanitized(
    tree: HistogramNode,
    dataset: Dataset,
    method: str,
    t: int,
    max_depth: int,
    seed: int | None,
    component_index: int | None = None,
    extra: dict | None = None,
) -> SanitizedHistogram:
    """Copy the tree keeping only regions, counts and levels, then assert no
    dataset coordinate vector leaks into the published geometry."""

    def copy(node: HistogramNode) -> HistogramNode:
        return HistogramNode(
            region=node.region,
            count=node.count,
            level=node.level,
            children=[copy(ch) for ch in node.children],
        )

    clean = copy(tree)
    if dataset.n:
        data_rows = {np.ascontiguousarray(row).tobytes() for row in dataset.points}
        seen: set = set()
        for node in clean.walk():
            for vec in _construction_vectors(node.region, seen):
                if np.ascontiguousarray(vec).tobytes() in data_rows:
                    raise InternalError(
                        "sanitization aborted: a dataset point coordinate appeared "
                        "in the output geometry"
                    )
    total = sum(n.count for n in clean.leaves())
    if total != dataset.n:
        raise InternalError("leaf counts do not sum to the dataset size")
    return SanitizedHistogram(
        root=clean,
        method=method,
        t=t,
        max_depth=max_depth,
        seed_commitment=seed_commitment(seed) if seed is not None else "deterministic",
        component_index=component_index,
        extra=dict(extra or {}),
    )


# ---------------------------------------------------------------------------
# mixtures


def component_seed(seed: int, index: int) -> int:
    """Seed used for one mixture component; exposed so that single-component
    sanitizations can be reproduced exactly."""
    return int(substream(seed, "mixture", index).integers(0, 2**62))


def sanitize_mixture(
    dataset: Dataset,
    labels: np.ndarray,
    supports: list[Region],
    t: int,
    max_depth: int,
    method: str = "voronoi-greedy",
    seed: int = 0,
    **kwargs,
) -> list[SanitizedHistogram]:
    """Sanitize each mixture component independently over its own support.

    The sanitizer is assumed to know component membership (generator labels);
    labels never appear in the output.
    """
    labels = np.asarray(labels)
    if labels.shape != (dataset.n,):
        raise InputError("labels must align with the dataset")
    out = []
    for index, support in enumerate(supports):
        sub = Dataset(dataset.points[labels == index].copy())
        cseed = component_seed(seed, index)
        if method == "cube":
            if not isinstance(support, Box):
                raise InputError("cube sanitizer needs a box support; use voronoi for balls")
            hist = build_recursive_cube(sub, t, max_depth, root=support)
        elif method == "grid":
            if not isinstance(support, Box):
                raise InputError("grid sanitizer needs a box support; use voronoi for balls")
            hist = build_shifted_grid(sub, t, max_depth, seed=cseed, root=support)
        elif method in ("voronoi-greedy", "voronoi-uniform"):
            hist = build_voronoi(sub, support, t, max_depth,
                                 method=method.split("-")[1], seed=cseed, **kwargs)
        else:
            raise InputError(f"unknown sanitizer method {method!r}")
        hist.component_index = index
        out.append(hist)
    return out
