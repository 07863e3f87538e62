"""Isolation predicate and Monte Carlo attack strategies on sanitized output.

An observed attack success rate is a lower-bound probe of isolation risk:
it is evidence of weakness when high, and is not proof of privacy when low.
Every report carries that framing.  Attacks read only the published fields
of a sanitized histogram; the raw dataset is held by the harness purely to
score candidate points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .geometry import Dataset, as_point, uniform_in_region
from .rng import substream

RATE_INTERPRETATION = (
    "observed success rate is a lower-bound probe over sampled adversary "
    "strategies; a low rate is not a proof of privacy"
)

STRATEGIES = ("uniform-in-leaf", "leaf-center-weighted", "aux-informed")


@dataclass(frozen=True)
class IsolationParams:
    c: float
    t: int

    def __post_init__(self):
        if not (self.c >= 1.0):
            raise InputError("isolation requires c >= 1")
        if self.t < 1:
            raise InputError("isolation requires t >= 1")


@dataclass
class IsolationReport:
    strategy: str
    queries: int
    successes: int
    rate: float
    per_point_hits: np.ndarray
    aux_subset_size: int
    interpretation: str = RATE_INTERPRETATION

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "queries": self.queries,
            "successes": self.successes,
            "rate": self.rate,
            "per_point_hits": self.per_point_hits.tolist(),
            "aux_subset_size": self.aux_subset_size,
            "interpretation": self.interpretation,
        }


def isolates(q, dataset: Dataset, params: IsolationParams):
    """Does q (c,t)-isolate some dataset point?

    q isolates y when the closed ball of radius c*|q-y| around q holds fewer
    than t dataset points (y itself always counts, being inside that ball).
    Returns (isolated, victim index or None); ties resolve to the lowest
    index.
    """
    qp = as_point(q)
    if dataset.n == 0:
        raise InputError("isolation needs a non-empty dataset")
    if qp.size != dataset.d:
        raise InputError("dimension mismatch")
    dists = np.linalg.norm(dataset.points - qp, axis=1)
    order = np.sort(dists)
    counts = np.searchsorted(order, params.c * dists, side="right")
    hits = np.flatnonzero(counts < params.t)
    if hits.size:
        return True, int(hits[0])
    return False, None


def _score_queries(Q: np.ndarray, dataset: Dataset, params: IsolationParams,
                   allowed_victims: np.ndarray) -> np.ndarray:
    """Victim index per query (-1 when none); vectorized over query blocks."""
    n = dataset.n
    victims = np.full(Q.shape[0], -1, dtype=int)
    block = max(1, int(4_000_000 / max(n, 1)))
    for lo in range(0, Q.shape[0], block):
        qb = Q[lo : lo + block]
        dists = np.linalg.norm(qb[:, None, :] - dataset.points[None, :, :], axis=2)
        order = np.sort(dists, axis=1)
        counts = np.empty_like(dists, dtype=int)
        for i in range(qb.shape[0]):
            counts[i] = np.searchsorted(order[i], params.c * dists[i], side="right")
        isolated = (counts < params.t) & allowed_victims[None, :]
        any_hit = isolated.any(axis=1)
        first = np.argmax(isolated, axis=1)
        victims[lo : lo + block] = np.where(any_hit, first, -1)
    return victims


def attack(
    hist,
    dataset: Dataset,
    params: IsolationParams,
    strategy: str,
    queries: int,
    seed: int = 0,
    aux_indices=None,
) -> IsolationReport:
    """Generate candidate isolation points from the sanitized histogram and
    score them against the raw dataset.

    Strategies: 'uniform-in-leaf' samples a count-weighted leaf then a point
    uniform in it; 'leaf-center-weighted' emits certified leaf centers;
    'aux-informed' additionally knows the exact coordinates of aux_indices
    points and aims at leaves with few unknown points (known points are
    excluded as victims).
    """
    from .documents import histogram_from_doc, histogram_to_doc

    if strategy not in STRATEGIES:
        raise InputError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    if strategy != "aux-informed" and aux_indices is not None:
        raise InputError("aux_indices is only valid for the aux-informed strategy")
    if queries < 1:
        raise InputError("queries must be positive")
    # attacks may read published fields only: round-trip through the document
    hist = histogram_from_doc(histogram_to_doc(hist))

    aux = np.zeros(dataset.n, dtype=bool)
    if strategy == "aux-informed" and aux_indices is not None:
        aux[np.fromiter(aux_indices, dtype=int)] = True
    allowed = ~aux

    rng = substream(seed, "attack", {"uniform-in-leaf": 0,
                                     "leaf-center-weighted": 1,
                                     "aux-informed": 2}[strategy])
    leaves = hist.root.leaves()
    counts = np.array([leaf.count for leaf in leaves], dtype=float)
    if counts.sum() <= 0:
        raise InputError("histogram has no populated leaves to attack")

    if strategy == "uniform-in-leaf":
        Q = _sample_count_weighted(leaves, counts, queries, rng)
    elif strategy == "leaf-center-weighted":
        Q = _sample_leaf_centers(leaves, counts, queries, rng, seed)
    else:
        Q = _sample_aux_informed(leaves, counts, dataset, aux, queries, rng)

    victims = _score_queries(Q, dataset, params, allowed)
    hits = np.bincount(victims[victims >= 0], minlength=dataset.n)
    successes = int((victims >= 0).sum())
    return IsolationReport(
        strategy=strategy,
        queries=queries,
        successes=successes,
        rate=successes / queries,
        per_point_hits=hits,
        aux_subset_size=int(aux.sum()),
    )


def _sample_count_weighted(leaves, counts, queries, rng):
    probs = counts / counts.sum()
    chosen = rng.choice(len(leaves), size=queries, p=probs)
    Q = np.empty((queries, leaves[0].region.dim))
    for li in np.unique(chosen):
        rows = np.flatnonzero(chosen == li)
        Q[rows] = uniform_in_region(leaves[li].region, rows.size, rng)
    return Q


def _sample_leaf_centers(leaves, counts, queries, rng, seed):
    from .roundness import certify_roundness

    probs = counts / counts.sum()
    centers = {}
    chosen = rng.choice(len(leaves), size=queries, p=probs)
    Q = np.empty((queries, leaves[0].region.dim))
    for li in np.unique(chosen):
        if li not in centers:
            cert = certify_roundness(leaves[li].region, samples=64,
                                     seed=seed + 31 * int(li))
            centers[li] = cert.witness
        Q[chosen == li] = centers[li]
    return Q


def _sample_aux_informed(leaves, counts, dataset, aux, queries, rng):
    """Aim at leaves holding the fewest unknown points; occasionally emit
    small offsets from known points to probe their neighbourhoods."""
    d = leaves[0].region.dim
    known = dataset.points[aux]
    known_per_leaf = np.array(
        [int(leaf.region.contains_many(known).sum()) if known.size else 0 for leaf in leaves]
    )
    unknown = counts - known_per_leaf
    cand = np.flatnonzero(unknown >= 1)
    if cand.size == 0:
        cand = np.flatnonzero(counts > 0)
        weights = counts[cand]
    else:
        weights = 1.0 / unknown[cand]
    probs = weights / weights.sum()

    Q = np.empty((queries, d))
    use_offset = (known.shape[0] > 0) & (rng.random(queries) < 0.25)
    n_off = int(use_offset.sum())
    if n_off:
        picks = rng.choice(known.shape[0], size=n_off)
        leaf_sizes = np.array([_leaf_scale(leaves[i]) for i in rng.choice(cand, size=n_off, p=probs)])
        dirs = rng.standard_normal((n_off, d))
        dirs /= np.maximum(np.linalg.norm(dirs, axis=1, keepdims=True), 1e-300)
        Q[use_offset] = known[picks] + 0.05 * leaf_sizes[:, None] * dirs
    rest = np.flatnonzero(~use_offset)
    chosen = rng.choice(cand, size=rest.size, p=probs)
    for li in np.unique(chosen):
        rows = rest[chosen == li]
        Q[rows] = uniform_in_region(leaves[li].region, rows.size, rng)
    return Q


def _leaf_scale(leaf) -> float:
    center, radius = leaf.region.bounding_ball()
    return 2.0 * radius
