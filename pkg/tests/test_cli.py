import csv
import json

import numpy as np
import pytest

from sparse_selector.cli import main
from sparse_selector.geometry import backproject_pixel_ray
from sparse_selector.pnm import read_pnm
from sparse_selector.ras import read_mask
from sparse_selector.scene import load_scene


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture
def scene_file(tmp_path):
    path = tmp_path / "scene.json"
    assert run("gen-scene", "--seed", 7, "--boxes", 30, "--out", path) == 0
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestGenScene:
    def test_empty(self, tmp_path):
        assert run("gen-scene", "--seed", 7, "--boxes", 0, "--out", tmp_path / "e.json") == 0
        assert load_scene(tmp_path / "e.json").boxes == ()

    def test_deterministic(self, tmp_path):
        for name in ("a.json", "b.json"):
            run("gen-scene", "--seed", 3, "--boxes", 25, "--out", tmp_path / name)
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_printed_distribution_matches_file(self, tmp_path, capsys):
        assert run("gen-scene", "--seed", 1, "--class-mix", "0.9,0.1", "--boxes", 200, "--out", tmp_path / "s.json") == 0
        printed = dict(line.split(",") for line in capsys.readouterr().out.split())
        data = json.loads((tmp_path / "s.json").read_text())
        for k, name in enumerate(data["class_names"]):
            assert int(printed[name]) == sum(1 for b in data["boxes"] if b["class_id"] == k)

    def test_bad_flags(self, tmp_path):
        assert run("gen-scene", "--class-mix", "0.5,0.9", "--out", tmp_path / "s.json") == 2
        assert run("gen-scene", "--boxes", "many", "--out", tmp_path / "s.json") == 2
        assert run("gen-scene", "--out", tmp_path / "no" / "such" / "dir" / "s.json") == 3


class TestSupervise:
    def test_empty_scene(self, tmp_path):
        run("gen-scene", "--boxes", 0, "--out", tmp_path / "e.json")
        assert run("supervise", "--scene", tmp_path / "e.json", "--out-dir", tmp_path / "m") == 0
        files = {p.name for p in (tmp_path / "m").iterdir()}
        assert files == {f"mask_camera{k}.txt" for k in range(6)} | {"mask_bev.txt"}
        for p in (tmp_path / "m").iterdir():
            assert not read_mask(p)[1].any()

    def test_oracle_agrees(self, tmp_path, scene_file):
        assert run("supervise", "--scene", scene_file, "--out-dir", tmp_path / "m", "--oracle", "--march-step", 0.01) == 0
        rows = read_rows(tmp_path / "m" / "disagreements.csv")
        assert len(rows) == 7
        assert all(int(r["disagreements"]) == 0 for r in rows)
        assert (tmp_path / "m" / "oracle_bev.txt").exists()

    def test_missing_scene(self, tmp_path, capsys):
        assert run("supervise", "--scene", tmp_path / "nope.json", "--out-dir", tmp_path / "m") == 3
        assert "nope.json" in capsys.readouterr().err

    def test_corrupt_scene(self, tmp_path):
        (tmp_path / "bad.json").write_text('{"region": 1}')
        assert run("supervise", "--scene", tmp_path / "bad.json", "--out-dir", tmp_path / "m") == 3

    def test_workers_byte_identical(self, tmp_path, scene_file):
        for w in (1, 4):
            assert run("supervise", "--scene", scene_file, "--out-dir", tmp_path / f"w{w}", "--workers", w) == 0
        for p in (tmp_path / "w1").iterdir():
            assert p.read_bytes() == (tmp_path / "w4" / p.name).read_bytes()


class TestSample:
    def test_full_ratio_keeps_all(self, tmp_path, scene_file):
        assert run("sample", "--scene", scene_file, "--rho", 1.0, "--out", tmp_path / "o") == 0
        assert len(read_rows(tmp_path / "o" / "tokens.csv")) == 180 * 180
        assert len(read_rows(tmp_path / "o" / "weights.csv")) == 180 * 180

    def test_sparse_scene_full_recall(self, tmp_path, scene_file, capsys):
        assert run("sample", "--scene", scene_file, "--rho", 0.25, "--out", tmp_path / "o") == 0
        assert "foreground recall 1.000000" in capsys.readouterr().out
        assert len(read_rows(tmp_path / "o" / "tokens.csv")) == 8100

    def test_lambda_below_one(self, tmp_path, scene_file):
        assert run("sample", "--scene", scene_file, "--lambda", 0.5, "--out", tmp_path / "o") == 2

    def test_bad_grid_and_logits(self, tmp_path, scene_file):
        assert run("sample", "--scene", scene_file, "--grid", "camera:9", "--out", tmp_path / "o") == 2
        assert run("sample", "--scene", scene_file, "--logits", "noisy:x", "--out", tmp_path / "o") == 2
        assert run("sample", "--scene", scene_file, "--logits", tmp_path / "none.npy", "--out", tmp_path / "o") == 3

    def test_logits_file(self, tmp_path, scene_file):
        logits = np.random.default_rng(0).normal(size=(20, 50, 10))
        np.save(tmp_path / "l.npy", logits)
        args = ("sample", "--scene", scene_file, "--grid", "camera:2", "--logits", tmp_path / "l.npy", "--rho", 0.5)
        assert run(*args, "--out", tmp_path / "o") == 0
        assert len(read_rows(tmp_path / "o" / "tokens.csv")) == 500

    def test_noisy_seeded(self, tmp_path, scene_file):
        for name, seed in (("a", 1), ("b", 1), ("c", 2)):
            run("sample", "--scene", scene_file, "--logits", "noisy:1.0", "--seed", seed, "--rho", 0.3, "--out", tmp_path / name)
        a, b, c = ((tmp_path / n / "weights.csv").read_bytes() for n in "abc")
        assert a == b and a != c


class TestEval:
    def test_sweep(self, tmp_path, scene_file):
        assert run("eval", "--scene", scene_file, "--rhos", "0.25,0.5,0.75,1.0", "--out", tmp_path / "r.csv") == 0
        rows = read_rows(tmp_path / "r.csv")
        assert [float(r["rho"]) for r in rows] == [0.25, 0.5, 0.75, 1.0]
        assert [int(r["tokens_kept"]) for r in rows] == [8100, 16200, 24300, 32400]
        assert float(rows[0]["flop_proxy"]) == 0.25
        assert float(rows[-1]["flop_proxy"]) == 1.0
        assert float(rows[-1]["foreground_recall"]) == 1.0
        assert "recall_car" in rows[0]

    def test_noisy_recall_monotone(self, tmp_path, scene_file):
        rhos = "0.05,0.1,0.2,0.3,0.5,0.8,1.0"
        args = ("eval", "--scene", scene_file, "--logits", "noisy:3.0", "--rhos", rhos, "--out", tmp_path / "r.csv")
        assert run(*args) == 0
        recall = [float(r["foreground_recall"]) for r in read_rows(tmp_path / "r.csv")]
        assert all(b >= a for a, b in zip(recall, recall[1:]))
        assert recall[0] < 1.0

    @pytest.mark.parametrize("rhos", ["0,0.5", "1.5", "abc"])
    def test_bad_rho(self, tmp_path, scene_file, rhos):
        assert run("eval", "--scene", scene_file, "--rhos", rhos, "--out", tmp_path / "r.csv") == 2


class TestRender:
    def test_mask_and_overlay(self, tmp_path, scene_file):
        run("supervise", "--scene", scene_file, "--out-dir", tmp_path / "m")
        run("sample", "--scene", scene_file, "--rho", 0.1, "--out", tmp_path / "o")
        assert run("render", "--mask", tmp_path / "m" / "mask_bev.txt", "--scale", 2, "--out", tmp_path / "m.pgm") == 0
        _, values = read_mask(tmp_path / "m" / "mask_bev.txt")
        img = read_pnm(tmp_path / "m.pgm")
        assert np.array_equal(img[::2, ::2], values * 255)
        args = ("render", "--mask", tmp_path / "m" / "mask_bev.txt", "--tokens", tmp_path / "o" / "tokens.csv")
        assert run(*args, "--out", tmp_path / "o.ppm") == 0
        assert read_pnm(tmp_path / "o.ppm").shape == (180, 180, 3)

    def test_malformed_mask(self, tmp_path):
        (tmp_path / "bad.txt").write_text("RAS bev 2 2\n01\n")
        assert run("render", "--mask", tmp_path / "bad.txt", "--out", tmp_path / "x.pgm") == 3
        assert run("render", "--mask", tmp_path / "none.txt", "--out", tmp_path / "x.pgm") == 3


class TestRaype:
    def test_two_anchors(self, tmp_path, scene_file):
        assert run("raype", "--scene", scene_file, "--pixel", "10,25", "--d", 2, "--out", tmp_path / "r") == 0
        rows = read_rows(tmp_path / "r" / "anchors.csv")
        assert len(rows) == 4
        assert rows[0]["source"] == "camera:0:10:25" and rows[2]["source"].startswith("bev:")
        assert len(read_rows(tmp_path / "r" / "encoding_query.csv")) == 512

    def test_anchors_lie_on_ray(self, tmp_path, scene_file):
        assert run("raype", "--scene", scene_file, "--camera", 3, "--pixel", "4,7", "--out", tmp_path / "r") == 0
        ray = backproject_pixel_ray(load_scene(scene_file).rig(3), 4, 7)
        rows = [r for r in read_rows(tmp_path / "r" / "anchors.csv") if r["source"].startswith("camera")]
        assert len(rows) == 16
        pts = np.array([[float(r["x"]), float(r["y"]), float(r["z"])] for r in rows])
        free = np.array([r["clamped"] == "0" for r in rows])
        cross = np.cross(pts - ray.origin, ray.direction)
        assert np.all(np.linalg.norm(cross[free], axis=1) <= 1e-9)
        t = (pts - ray.origin) @ np.array(ray.direction)
        assert np.all(np.diff(t) > 0)

    def test_principal_ray_is_optical_axis(self, tmp_path):
        # a single camera with identity extrinsics: camera +z is LiDAR +z
        data = json.loads(json.dumps(MINIMAL_IDENTITY))
        (tmp_path / "s.json").write_text(json.dumps(data))
        assert run("raype", "--scene", tmp_path / "s.json", "--pixel", "0,0", "--d", 3, "--out", tmp_path / "r") == 0
        rows = read_rows(tmp_path / "r" / "anchors.csv")[:3]
        pts = [[float(r["x"]), float(r["y"]), float(r["z"])] for r in rows]
        assert pts[0] == pytest.approx([0.0, 0.0, 1.0], abs=1e-12)
        assert all(abs(p[0]) < 1e-12 and abs(p[1]) < 1e-12 for p in pts)

    def test_bad_indices(self, tmp_path, scene_file):
        assert run("raype", "--scene", scene_file, "--pixel", "20,0", "--out", tmp_path / "r") == 2
        assert run("raype", "--scene", scene_file, "--pixel", "1", "--out", tmp_path / "r") == 2
        assert run("raype", "--scene", scene_file, "--camera", 6, "--pixel", "0,0", "--out", tmp_path / "r") == 2


# one 16x16 camera whose single feature cell is centred on the principal point
MINIMAL_IDENTITY = {
    "region": {"x_min": -10, "x_max": 10, "y_min": -10, "y_max": 10, "z_min": -5, "z_max": 3},
    "class_names": ["car"],
    "boxes": [],
    "cameras": [
        {
            "id": 0,
            "intrinsics": {"fx": 100, "fy": 100, "cx": 8, "cy": 8, "width": 16, "height": 16},
            "cam_to_lidar": {"rotation": [1, 0, 0, 0, 1, 0, 0, 0, 1], "translation": [0, 0, 0]},
            "feature_stride": 16,
        }
    ],
    "bev": {"rows": 40, "cols": 40, "cell_size": 0.5, "origin": [-10, -10, -5]},
}


class TestConfig:
    def test_config_sets_defaults_and_flags_win(self, tmp_path, scene_file):
        (tmp_path / "c.yaml").write_text("rho: 0.5\nlambda: 2.0\n")
        assert run("--config", tmp_path / "c.yaml", "sample", "--scene", scene_file, "--out", tmp_path / "a") == 0
        assert len(read_rows(tmp_path / "a" / "tokens.csv")) == 16200
        assert run("--config", tmp_path / "c.yaml", "sample", "--scene", scene_file, "--rho", 0.25, "--out", tmp_path / "b") == 0
        assert len(read_rows(tmp_path / "b" / "tokens.csv")) == 8100

    def test_config_json_and_errors(self, tmp_path, scene_file):
        (tmp_path / "c.json").write_text(json.dumps({"lambda": 0.2}))
        assert run("--config", tmp_path / "c.json", "sample", "--scene", scene_file, "--out", tmp_path / "a") == 2
        (tmp_path / "bad.yaml").write_text("[1, 2")
        assert run("--config", tmp_path / "bad.yaml", "sample", "--scene", scene_file, "--out", tmp_path / "a") == 3
        assert run("--config", tmp_path / "none.yaml", "sample", "--scene", scene_file, "--out", tmp_path / "a") == 3
