import json
import os

import numpy as np
import pytest

from privhist.cli import main
from privhist.datagen import DistributionSpec, TruncatedGaussian, UniformBall, UniformCube, sample, single
from privhist.documents import (
    dataset_from_doc,
    dataset_to_doc,
    histogram_from_doc,
    histogram_to_doc,
    read_json,
    spec_from_doc,
    spec_to_doc,
    write_json_atomic,
)
from privhist.geometry import Ball, Dataset
from privhist.sanitizer import build_shifted_grid, build_voronoi


class TestRoundTrips:
    def test_dataset_round_trip_bit_exact(self):
        data, _ = sample(single(UniformCube(np.zeros(3), 1.0)), 50, seed=1)
        doc = dataset_to_doc(data)
        again = dataset_from_doc(json.loads(json.dumps(doc)))
        assert np.array_equal(again.points, data.points)

    def test_spec_round_trip(self):
        spec = DistributionSpec(components=(
            (0.25, UniformCube(np.array([1.0, -1.0]), 0.5)),
            (0.5, UniformBall(np.zeros(2), 2.0)),
            (0.25, TruncatedGaussian(np.array([0.1, 0.2]), 0.3)),
        ))
        doc = json.loads(json.dumps(spec_to_doc(spec)))
        again = spec_from_doc(doc)
        assert spec_to_doc(again) == spec_to_doc(spec)

    def test_histogram_round_trip_including_voronoi(self):
        data, _ = sample(single(UniformBall(np.zeros(2), 1.0)), 90, seed=2)
        hist = build_voronoi(data, Ball(np.zeros(2), 1.0), t=10, max_depth=2,
                             method="greedy", probe_samples=6_000, seed=3)
        doc = json.loads(json.dumps(histogram_to_doc(hist)))
        again = histogram_from_doc(doc)
        assert histogram_to_doc(again) == histogram_to_doc(hist)
        # membership semantics survive the round trip
        for p in data.points[:20]:
            orig = [n.count for n in hist.root.walk() if n.is_leaf() and n.region.contains(p)]
            back = [n.count for n in again.root.walk() if n.is_leaf() and n.region.contains(p)]
            assert orig == back

    def test_grid_histogram_round_trip(self):
        data, _ = sample(single(UniformCube(np.zeros(2), 1.0)), 150, seed=4)
        hist = build_shifted_grid(data, t=2, max_depth=5, seed=5)
        doc = histogram_to_doc(hist)
        assert histogram_to_doc(histogram_from_doc(json.loads(json.dumps(doc)))) == doc


class TestAtomicWrites:
    def test_write_and_read(self, tmp_path):
        path = str(tmp_path / "doc.json")
        write_json_atomic(path, {"kind": "x", "v": 1.5})
        assert read_json(path) == {"kind": "x", "v": 1.5}

    def test_failed_write_leaves_no_partial_file(self, tmp_path):
        path = str(tmp_path / "doc.json")
        with pytest.raises(TypeError):
            write_json_atomic(path, {"bad": object()})
        assert not os.path.exists(path)
        assert not [f for f in os.listdir(tmp_path) if f.startswith(".privhist-")]


@pytest.fixture
def workspace(tmp_path):
    old = os.getcwd()
    os.chdir(tmp_path)
    spec = single(UniformCube(np.zeros(2), 1.0))
    write_json_atomic("spec.json", spec_to_doc(spec))
    yield tmp_path
    os.chdir(old)


class TestCli:
    def test_generate_rerun_byte_identical(self, workspace):
        argv = ["generate", "--dist", "spec.json", "--n", "80", "--seed", "7",
                "--out", "d.json"]
        assert main(argv) == 0
        first = open("d.json", "rb").read()
        assert main(argv) == 0
        assert open("d.json", "rb").read() == first

    def test_threads_flag_does_not_change_bytes(self, workspace):
        base = ["generate", "--dist", "spec.json", "--n", "40", "--seed", "3",
                "--out", "t.json"]
        assert main(base) == 0
        first = open("t.json", "rb").read()
        assert main(["--threads", "4"] + base) == 0
        assert open("t.json", "rb").read() == first

    def test_sanitize_attack_pipeline(self, workspace):
        assert main(["generate", "--dist", "spec.json", "--n", "120", "--seed", "1",
                     "--out", "d.json"]) == 0
        assert main(["sanitize", "--method", "grid", "--t", "2", "--max-depth", "5",
                     "--seed", "2", "--in", "d.json", "--out", "h.json"]) == 0
        hist_doc = read_json("h.json")
        assert hist_doc["kind"] == "sanitized_histogram"
        assert hist_doc["parameters"]["t"] == 2
        assert "seed_commitment" in hist_doc["parameters"]
        assert main(["attack", "--hist", "h.json", "--data", "d.json", "--c", "4",
                     "--t", "2", "--strategy", "uniform-in-leaf", "--queries", "500",
                     "--seed", "3", "--out", "a.json"]) == 0
        report = read_json("a.json")
        assert report["kind"] == "isolation_report"
        assert 0.0 <= report["rate"] <= 1.0
        assert report["manifest"]["inputs"].keys() == {"h.json", "d.json"}

    def test_point_outside_root_exits_one_naming_index(self, workspace, capsys):
        bad = Dataset(np.array([[0.0, 0.0], [3.0, 0.0]]))
        write_json_atomic("bad.json", dataset_to_doc(bad))
        code = main(["sanitize", "--method", "cube", "--t", "2", "--seed", "1",
                     "--in", "bad.json", "--out", "h.json"])
        assert code == 1
        assert "index 1" in capsys.readouterr().err
        assert not os.path.exists("h.json")

    def test_unknown_flag_exits_one(self, workspace):
        assert main(["generate", "--nonsense", "1"]) == 1

    def test_uniform_centers_high_dimension_needs_override(self, workspace):
        spec6 = single(UniformCube(np.zeros(6), 1.0))
        write_json_atomic("spec6.json", spec_to_doc(spec6))
        assert main(["generate", "--dist", "spec6.json", "--n", "30", "--seed", "1",
                     "--out", "d6.json"]) == 0
        code = main(["sanitize", "--method", "voronoi", "--centers", "uniform",
                     "--t", "2", "--seed", "1", "--in", "d6.json", "--out", "h6.json"])
        assert code == 1
        assert main(["sanitize", "--method", "voronoi", "--centers", "uniform",
                     "--t", "2", "--max-depth", "1", "--seed", "1", "--override-m",
                     "64", "--in", "d6.json", "--out", "h6.json"]) == 0
        doc = read_json("h6.json")
        assert doc["extra"]["uniform_center_guarantee_voided"] is True

    def test_dimension_mismatch_exits_one(self, workspace):
        assert main(["generate", "--dist", "spec.json", "--n", "10", "--d", "5",
                     "--seed", "1", "--out", "x.json"]) == 1

    def test_exhausted_center_budget_exits_two(self, workspace):
        assert main(["generate", "--dist", "spec.json", "--n", "30", "--seed", "2",
                     "--out", "d.json"]) == 0
        code = main(["sanitize", "--method", "voronoi", "--centers", "uniform",
                     "--t", "2", "--max-depth", "1", "--seed", "1",
                     "--centers-budget", "100", "--in", "d.json", "--out", "h.json"])
        assert code == 2
        assert not os.path.exists("h.json")

    def test_manifest_replay(self, workspace):
        assert main(["generate", "--dist", "spec.json", "--n", "25", "--seed", "9",
                     "--out", "r.json"]) == 0
        first = open("r.json", "rb").read()
        os.unlink("r.json")
        assert main(["repro", "--manifest-missing"]) == 1
        write_json_atomic("r2.json", json.loads(first.decode()))
        assert main(["repro", "--manifest", "r2.json"]) == 0
        assert open("r.json", "rb").read() == first

    def test_manifest_replay_rejects_modified_inputs(self, workspace):
        assert main(["generate", "--dist", "spec.json", "--n", "25", "--seed", "9",
                     "--out", "r.json"]) == 0
        spec_doc = read_json("spec.json")
        spec_doc["components"][0]["shape"]["half_side"] = 0.9
        write_json_atomic("spec.json", spec_doc)
        assert main(["repro", "--manifest", "r.json"]) == 1

    def test_certify_and_check_privacy(self, workspace):
        assert main(["generate", "--dist", "spec.json", "--n", "60", "--seed", "2",
                     "--out", "d.json"]) == 0
        assert main(["sanitize", "--method", "cube", "--t", "3", "--max-depth", "3",
                     "--seed", "1", "--in", "d.json", "--out", "h.json"]) == 0
        assert main(["certify", "--in", "h.json", "--samples", "64", "--seed", "1",
                     "--out", "c.json"]) == 0
        certs = read_json("c.json")["cells"]
        assert len(certs) >= 1 and all(c["k"] >= 1.0 for c in certs)
        assert main(["check-privacy", "--in", "h.json", "--c", "8", "--q-probes", "2",
                     "--r-grid", "3", "--vol-samples", "2000", "--seed", "4",
                     "--max-cells", "4", "--out", "p.json"]) == 0
        rep = read_json("p.json")
        total = rep["containment_count"] + rep["ratio_count"] + rep["degenerate_count"]
        assert total == rep["cells_checked"] * rep["probes_per_cell"]

    def test_repro_suite_runs(self, workspace):
        assert main(["repro", "--suite", "lemma21-decay", "--seed", "1",
                     "--out", "suite.json"]) == 0
        doc = read_json("suite.json")
        assert doc["kind"] == "repro_suite"
        assert doc["pass"] is True
