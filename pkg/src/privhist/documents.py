"""Structured text (JSON) documents, content digests, and atomic writes.

All numbers are IEEE-754 doubles rendered in shortest round-trip decimal
(Python's float repr), so documents rebuilt from equal inputs are
byte-identical.  Every CLI output embeds a run manifest; wall-clock timing
is reported on stderr rather than in the document so reruns stay
byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile

import numpy as np

from . import __version__
from .datagen import DistributionSpec, TruncatedGaussian, UniformBall, UniformCube
from .errors import InputError
from .geometry import Ball, Box, Dataset, Region, VoronoiClip
from .sanitizer import HistogramNode, SanitizedHistogram

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# low-level I/O


def write_json_atomic(path: str, doc: dict):
    """Serialize to a temp file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    payload = json.dumps(doc, indent=1) + "\n"
    fd, tmp = tempfile.mkstemp(prefix=".privhist-", dir=directory)
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_json(path: str) -> dict:
    with open(path) as handle:
        return json.load(handle)


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def build_manifest(command: list[str], seed: int | None, input_paths: list[str]) -> dict:
    return {
        "command": command,
        "seed": seed,
        "inputs": {path: sha256_file(path) for path in sorted(set(input_paths))},
        "tool_version": __version__,
    }


# ---------------------------------------------------------------------------
# datasets


def dataset_to_doc(dataset: Dataset) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "dataset",
        "d": dataset.d,
        "n": dataset.n,
        "points": [[float(v) for v in row] for row in dataset.points],
    }


def dataset_from_doc(doc: dict) -> Dataset:
    _expect_kind(doc, "dataset")
    pts = np.array(doc["points"], dtype=float).reshape(doc["n"], doc["d"])
    return Dataset(pts)


# ---------------------------------------------------------------------------
# distribution specs


def spec_to_doc(spec: DistributionSpec) -> dict:
    comps = []
    for weight, shape in spec.components:
        if isinstance(shape, UniformCube):
            body = {"kind": "uniform_cube", "center": shape.center.tolist(),
                    "half_side": shape.half_side}
        elif isinstance(shape, UniformBall):
            body = {"kind": "uniform_ball", "center": shape.center.tolist(),
                    "radius": shape.radius}
        elif isinstance(shape, TruncatedGaussian):
            body = {"kind": "truncated_gaussian", "mean": shape.mean.tolist(),
                    "stdev": shape.stdev, "truncation_radius": shape.truncation_radius}
        else:
            raise InputError(f"unknown shape {type(shape).__name__}")
        comps.append({"weight": float(weight), "shape": body})
    return {"schema_version": SCHEMA_VERSION, "kind": "distribution_spec",
            "d": spec.d, "components": comps}


def spec_from_doc(doc: dict) -> DistributionSpec:
    _expect_kind(doc, "distribution_spec")
    comps = []
    for entry in doc["components"]:
        body = entry["shape"]
        kind = body["kind"]
        if kind == "uniform_cube":
            shape = UniformCube(np.array(body["center"], float), float(body["half_side"]))
        elif kind == "uniform_ball":
            shape = UniformBall(np.array(body["center"], float), float(body["radius"]))
        elif kind == "truncated_gaussian":
            shape = TruncatedGaussian(np.array(body["mean"], float), float(body["stdev"]),
                                      float(body["truncation_radius"]))
        else:
            raise InputError(f"unknown shape kind {kind!r}")
        comps.append((float(entry["weight"]), shape))
    return DistributionSpec(components=tuple(comps))


# ---------------------------------------------------------------------------
# sanitized histograms


def _region_to_doc(region: Region) -> dict:
    if isinstance(region, Box):
        return {
            "kind": "box",
            "low": region.low.tolist(),
            "high": region.high.tolist(),
            "closed_high": [bool(b) for b in region.closed_high],
        }
    if isinstance(region, Ball):
        return {"kind": "ball", "center": region.center.tolist(), "radius": region.radius}
    if isinstance(region, VoronoiClip):
        return {
            "kind": "voronoi",
            "own_index": region.own_index,
            "own_center": region.own_center.tolist(),
            "sibling_centers": [row.tolist() for row in region.sibling_centers],
        }
    raise InputError(f"unknown region type {type(region).__name__}")


def _region_from_doc(doc: dict, parent: Region | None) -> Region:
    kind = doc["kind"]
    if kind == "box":
        return Box(np.array(doc["low"], float), np.array(doc["high"], float),
                   closed_high=np.array(doc["closed_high"], bool))
    if kind == "ball":
        return Ball(np.array(doc["center"], float), float(doc["radius"]))
    if kind == "voronoi":
        if parent is None:
            raise InputError("voronoi region requires a parent region")
        own_index = int(doc["own_index"])
        siblings = [np.array(row, float) for row in doc["sibling_centers"]]
        own = np.array(doc["own_center"], float)
        centers = siblings[:own_index] + [own] + siblings[own_index:]
        return VoronoiClip(np.array(centers), own_index, parent)
    raise InputError(f"unknown region kind {kind!r}")


def _node_to_doc(node: HistogramNode) -> dict:
    return {
        "region": _region_to_doc(node.region),
        "count": node.count,
        "level": node.level,
        "children": [_node_to_doc(ch) for ch in node.children],
    }


def _node_from_doc(doc: dict, parent_region: Region | None) -> HistogramNode:
    region = _region_from_doc(doc["region"], parent_region)
    node = HistogramNode(region=region, count=int(doc["count"]), level=int(doc["level"]))
    node.children = [_node_from_doc(ch, region) for ch in doc["children"]]
    return node


def histogram_to_doc(hist: SanitizedHistogram) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "sanitized_histogram",
        "method": hist.method,
        "parameters": {
            "t": hist.t,
            "max_depth": hist.max_depth,
            "seed_commitment": hist.seed_commitment,
        },
        "component_index": hist.component_index,
        "extra": hist.extra,
        "root": _node_to_doc(hist.root),
    }


def histogram_from_doc(doc: dict) -> SanitizedHistogram:
    _expect_kind(doc, "sanitized_histogram")
    root = _node_from_doc(doc["root"], None)
    params = doc["parameters"]
    return SanitizedHistogram(
        root=root,
        method=doc["method"],
        t=int(params["t"]),
        max_depth=int(params["max_depth"]),
        seed_commitment=params["seed_commitment"],
        component_index=doc.get("component_index"),
        extra=doc.get("extra", {}),
    )


def _expect_kind(doc: dict, kind: str):
    if doc.get("kind") != kind:
        raise InputError(f"expected a {kind} document, found {doc.get('kind')!r}")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise InputError(f"unsupported schema_version {doc.get('schema_version')!r}")


def report_doc(kind: str, body: dict) -> dict:
    doc = {"schema_version": SCHEMA_VERSION, "kind": kind}
    doc.update(body)
    return doc
