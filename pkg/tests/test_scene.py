import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparse_selector.geometry import OrientedBox3D
from sparse_selector.scene import (
    ClassDistribution,
    GridSpec,
    SceneInvariantError,
    SceneRegion,
    SceneSchemaError,
    generate_scene,
    gt_distribution,
    load_scene,
    save_scene,
    scene_to_dict,
    scene_to_json,
)

from conftest import make_scene

MINIMAL = {
    "region": {"x_min": -10, "x_max": 10, "y_min": -10, "y_max": 10, "z_min": -5, "z_max": 3},
    "class_names": ["car", "cone"],
    "boxes": [{"center": [4.0, 1.0, -1.0], "dims": [4.0, 2.0, 1.5], "yaw": 0.25, "class_id": 0}],
    "cameras": [
        {
            "id": 0,
            "intrinsics": {"fx": 400, "fy": 400, "cx": 400, "cy": 160, "width": 800, "height": 320},
            "cam_to_lidar": {"rotation": [0, 0, 1, -1, 0, 0, 0, -1, 0], "translation": [0, 0, 0]},
            "feature_stride": 16,
        }
    ],
    "bev": {"rows": 40, "cols": 40, "cell_size": 0.5, "origin": [-10, -10, -5]},
}


def write(tmp_path, data, name="scene.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


class TestGenerate:
    def test_empty_scene(self):
        scene = generate_scene(7, 0, [0.1] * 10)
        assert scene.boxes == ()
        assert len(scene.rigs) == 6
        assert gt_distribution(scene).counts == (0,) * 10

    def test_deterministic_serialization(self):
        a = scene_to_json(generate_scene(7, 40, [0.1] * 10))
        b = scene_to_json(generate_scene(7, 40, [0.1] * 10))
        assert a == b
        assert a != scene_to_json(generate_scene(8, 40, [0.1] * 10))

    def test_class_counts_replay_the_generator(self):
        mix = [0.9, 0.1]
        scene = generate_scene(7, 50, mix)
        replay = np.random.default_rng(7).choice(2, size=50, p=mix)
        assert gt_distribution(scene).counts == tuple(np.bincount(replay, minlength=2))

    def test_defaults_match_configuration(self):
        scene = generate_scene(0, 5, [0.1] * 10)
        r = scene.region
        assert (r.x_min, r.x_max, r.y_min, r.y_max, r.z_min, r.z_max) == (-54, 54, -54, 54, -5, 3)
        assert (scene.bev.rows, scene.bev.cols, scene.bev.cell_size) == (180, 180, 0.6)
        rig = scene.rigs[0]
        assert (rig.intrinsics.width, rig.intrinsics.height) == (800, 320)
        assert rig.grid_shape == (20, 50)
        # 60 degree spacing, optical axes level and pointing outward
        for k, rig in enumerate(scene.rigs):
            axis = rig.cam_to_lidar.apply_vector([0.0, 0.0, 1.0])
            assert axis == pytest.approx([math.cos(k * math.pi / 3), math.sin(k * math.pi / 3), 0.0], abs=1e-12)
            assert rig.optical_center == tuple(rig.cam_to_lidar.apply([0.0, 0.0, 0.0]))

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(class_mix=[]),
            dict(class_mix=[0.5, 0.6]),
            dict(class_mix=[1.2, -0.2]),
            dict(n_boxes=-1),
            dict(n_cameras=0),
            dict(class_mix=[1 / 11] * 11),
        ],
    )
    def test_rejects_bad_arguments(self, kwargs):
        args = dict(seed=0, n_boxes=3, class_mix=[1.0], n_cameras=6)
        args.update(kwargs)
        with pytest.raises(ValueError):
            generate_scene(**args)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31), n=st.integers(0, 60))
    def test_generated_boxes_valid(self, seed, n):
        scene = generate_scene(seed, n, [0.1] * 10)
        region = scene.region
        for box in scene.boxes:
            assert min(box.dims) > 0 and -math.pi <= box.yaw < math.pi
            assert region.contains(box.corners().min(axis=0))
            assert region.contains(box.corners().max(axis=0))
            assert box.class_id < scene.n_classes
        assert gt_distribution(scene).total == n


class TestDistribution:
    def test_direct_count(self):
        boxes = [OrientedBox3D((5.0 + 3 * k, 0.0, 0.0), (1.0, 1.0, 1.0), 0.0, c) for k, c in enumerate([0, 0, 2, 0])]
        scene = make_scene(boxes, class_names=("a", "b", "c"))
        assert gt_distribution(scene) == ClassDistribution((3, 0, 1))

    def test_recount_from_file(self, tmp_path):
        scene = generate_scene(11, 45, [0.1] * 10)
        save_scene(scene, tmp_path / "s.json")
        data = json.loads((tmp_path / "s.json").read_text())
        counts = [0] * len(data["class_names"])
        for box in data["boxes"]:
            counts[box["class_id"]] += 1
        assert list(gt_distribution(scene).counts) == counts


class TestFileFormat:
    def test_round_trip(self, tmp_path, scene7):
        save_scene(scene7, tmp_path / "s.json")
        assert load_scene(tmp_path / "s.json") == scene7

    @pytest.mark.parametrize("seed", range(100))
    def test_round_trip_many_seeds(self, seed):
        from sparse_selector.scene import scene_from_dict

        scene = generate_scene(seed, 20, [0.25, 0.25, 0.5], n_cameras=1 + seed % 6)
        assert scene_from_dict(json.loads(scene_to_json(scene))) == scene

    def test_minimal_scene(self, tmp_path):
        scene = load_scene(write(tmp_path, MINIMAL))
        assert gt_distribution(scene).counts == (1, 0)
        assert scene.rig(0).grid_shape == (20, 50)

    def test_top_level_keys(self, scene7):
        assert list(scene_to_dict(scene7)) == ["region", "class_names", "boxes", "cameras", "bev"]

    def test_zero_dims_names_box(self, tmp_path):
        data = json.loads(json.dumps(MINIMAL))
        data["boxes"].append({"center": [1.0, 1.0, 0.0], "dims": [0, 1, 1], "yaw": 0.0, "class_id": 1})
        with pytest.raises(SceneInvariantError, match="box 1"):
            load_scene(write(tmp_path, data))

    def test_box_outside_region(self, tmp_path):
        data = json.loads(json.dumps(MINIMAL))
        data["boxes"][0]["center"] = [40.0, 0.0, 0.0]
        with pytest.raises(SceneInvariantError, match="box 0"):
            load_scene(write(tmp_path, data))

    def test_schema_error_has_field_path(self, tmp_path):
        data = json.loads(json.dumps(MINIMAL))
        data["boxes"][0]["dims"] = [1.0, 1.0]
        with pytest.raises(SceneSchemaError) as err:
            load_scene(write(tmp_path, data))
        assert err.value.path == "boxes[0].dims"

    def test_missing_key(self, tmp_path):
        data = json.loads(json.dumps(MINIMAL))
        del data["cameras"][0]["intrinsics"]["fx"]
        with pytest.raises(SceneSchemaError) as err:
            load_scene(write(tmp_path, data))
        assert err.value.path == "cameras[0].intrinsics"

    def test_class_out_of_range(self, tmp_path):
        data = json.loads(json.dumps(MINIMAL))
        data["boxes"][0]["class_id"] = 2
        with pytest.raises(SceneInvariantError, match="class_id"):
            load_scene(write(tmp_path, data))

    def test_bev_must_span_region(self, tmp_path):
        data = json.loads(json.dumps(MINIMAL))
        data["bev"]["rows"] = 20
        with pytest.raises(SceneInvariantError, match="bev"):
            load_scene(write(tmp_path, data))

    def test_bad_rotation(self, tmp_path):
        data = json.loads(json.dumps(MINIMAL))
        data["cameras"][0]["cam_to_lidar"]["rotation"] = [1, 0, 0, 0, 1, 0, 0, 0, 2]
        with pytest.raises(SceneInvariantError, match="camera 0"):
            load_scene(write(tmp_path, data))

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(SceneSchemaError):
            load_scene(path)

    def test_full_precision(self, tmp_path):
        scene = generate_scene(3, 5, [1.0])
        save_scene(scene, tmp_path / "s.json")
        data = json.loads((tmp_path / "s.json").read_text())
        assert data["boxes"][0]["yaw"] == scene.boxes[0].yaw
        assert tuple(data["boxes"][0]["center"]) == scene.boxes[0].center


class TestGrid:
    def test_bev_cell_centers(self):
        grid = GridSpec.bev_for_region(SceneRegion())
        centers = grid.cell_centers()
        assert centers[0, 0] == pytest.approx((-53.7, -53.7))
        assert centers[179, 179] == pytest.approx((53.7, 53.7))
        assert grid.cell_of(-53.7, 53.7) == (179, 0)

    def test_grid_kind_checked(self):
        with pytest.raises(ValueError):
            GridSpec("bev", 10, 10)
        with pytest.raises(ValueError):
            GridSpec("camera", 10, 10)
        with pytest.raises(ValueError):
            GridSpec("radar", 10, 10, rig_id=0)
