"""Placement validation, expert planner, and dataset file tests."""

import numpy as np
import pytest

from stabledrop.errors import DataFormatError, DegenerateRotation, Exhausted
from stabledrop.geom import apply_pose, pose_of, rot_z
from stabledrop.planner import (generate_dataset, load_dataset,
                                propose_placement, read_dataset, rebuild_scene,
                                record_object, sample_expert_placement,
                                validate_placement)
from stabledrop.scenes import build_scene, default_object, draw_augment, augment_scene

EDGE = 2.0 ** (1.0 / 3.0)


def haar_rotation(rng):
    M = rng.normal(size=(3, 3))
    Q, R = np.linalg.qr(M)
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 2] = -Q[:, 2]
    return Q


@pytest.fixture(scope="module")
def table():
    return build_scene("table")


@pytest.fixture(scope="module")
def shelf_cloud():
    from stabledrop.cloud import featurize
    scene = build_scene("shelf")
    sc, _ = featurize(scene, default_object(), seed=21)
    return scene, sc


class TestValidate:
    def test_cube_on_table_top_is_valid(self, table):
        pose = pose_of(np.eye(3), [0.0, 0.0, 1.2 + EDGE / 2])
        out = validate_placement(table, default_object(), pose, with_stats=False)
        assert out.penetration_free and out.stable and out.valid

    def test_hovering_cube_is_not_stable(self, table):
        pose = pose_of(np.eye(3), [0.0, 0.0, 1.2 + EDGE / 2 + 0.5])
        out = validate_placement(table, default_object(), pose, with_stats=False)
        assert out.penetration_free
        assert not out.stable and not out.valid

    def test_sunken_cube_is_not_penetration_free(self, table):
        pose = pose_of(np.eye(3), [0.0, 0.0, 1.2])
        out = validate_placement(table, default_object(), pose, with_stats=False)
        assert not out.penetration_free and not out.valid

    def test_degenerate_pose_raises(self, table):
        pose = np.zeros(9)
        with pytest.raises(DegenerateRotation):
            validate_placement(table, default_object(), pose)

    def test_stats_populated_when_valid(self, table):
        pose = pose_of(np.eye(3), [0.0, 0.0, 1.2 + EDGE / 2])
        out = validate_placement(table, default_object(), pose, with_stats=True)
        assert out.valid
        assert out.min_robustness is not None
        assert 0.0 < out.min_robustness <= out.median_robustness
        assert out.wall_time > 0.0

    def test_stats_skipped_when_invalid(self, table):
        pose = pose_of(np.eye(3), [0.0, 0.0, 5.0])
        out = validate_placement(table, default_object(), pose, with_stats=True)
        assert out.min_robustness is None and out.median_robustness is None

    @pytest.mark.slow
    def test_random_pose_validity_below_one_percent(self, table):
        rng = np.random.default_rng(99)
        obj = default_object()
        n, valid = 10_000, 0
        for _ in range(n):
            pose = pose_of(haar_rotation(rng), rng.uniform(-5.0, 5.0, size=3))
            if validate_placement(table, obj, pose, with_stats=False).valid:
                valid += 1
        assert valid / n < 0.01


class TestExpert:
    def test_finds_valid_placement_on_shelf(self, shelf_cloud):
        scene, sc = shelf_cloud
        out = sample_expert_placement(scene, default_object(), seed=1,
                                      scene_cloud=sc, with_stats=False)
        assert out.valid
        check = validate_placement(scene, default_object(), out.pose,
                                   with_stats=False)
        assert check.valid

    def test_deterministic_per_seed(self, shelf_cloud):
        scene, sc = shelf_cloud
        a = sample_expert_placement(scene, default_object(), seed=7,
                                    scene_cloud=sc, with_stats=False)
        b = sample_expert_placement(scene, default_object(), seed=7,
                                    scene_cloud=sc, with_stats=False)
        np.testing.assert_array_equal(a.pose, b.pose)

    def test_oversized_object_exhausts_budget(self, shelf_cloud):
        scene, sc = shelf_cloud
        giant = default_object(volume=1000.0)
        with pytest.raises(Exhausted):
            sample_expert_placement(scene, giant, seed=0, budget=5,
                                    scene_cloud=sc, with_stats=False)

    def test_bad_budget_rejected(self, shelf_cloud):
        scene, sc = shelf_cloud
        with pytest.raises(ValueError):
            sample_expert_placement(scene, default_object(), seed=0, budget=0,
                                    scene_cloud=sc)

    def test_proposal_mates_bottom_face(self, shelf_cloud):
        # proposed pose maps the object's -z normal onto -n_s
        scene, sc = shelf_cloud
        rng = np.random.default_rng(3)
        obj = default_object()
        for _ in range(20):
            pose = propose_placement(sc, obj, rng)
            _, down = apply_pose(pose, np.zeros((1, 3)),
                                 np.array([[0.0, 0.0, -1.0]]))
            # bottom normal must oppose some scene normal in the cloud
            agree = sc[:, 3:6] @ down[0]
            assert agree.min() < -0.999

    def test_mapped_placements_stay_valid(self, shelf_cloud):
        scene, sc = shelf_cloud
        obj = default_object()
        out = sample_expert_placement(scene, obj, seed=5, scene_cloud=sc,
                                      with_stats=False)
        rng = np.random.default_rng(17)
        for _ in range(3):
            params = draw_augment(rng)
            aug, (R, t) = augment_scene(scene, params)
            mapped = np.empty(9)
            mapped[0:3] = R @ out.pose[0:3] + t
            mapped[3:6] = R @ out.pose[3:6]
            mapped[6:9] = R @ out.pose[6:9]
            assert validate_placement(aug, obj, mapped, with_stats=False).valid


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "mini.jsonl"
    n = generate_dataset(["table", "cantilever"], n_per_scene=3, seed=42,
                         out_path=path)
    return path, n


class TestDataset:
    def test_record_count(self, small_dataset):
        path, n = small_dataset
        assert n == 6
        header, records = load_dataset(path)
        assert len(records) == 6
        assert [r.scene_name for r in records] == ["table"] * 3 + ["cantilever"] * 3

    def test_cloud_shapes_and_dtype(self, small_dataset):
        path, _ = small_dataset
        _, records = load_dataset(path)
        for r in records:
            assert r.scene_cloud.shape == (1024, 9)
            assert r.scene_cloud.dtype == np.dtype("<f4")
            assert r.object_cloud.shape == (1024, 8)

    def test_labels_revalidate_after_round_trip(self, small_dataset):
        path, _ = small_dataset
        header, records = load_dataset(path)
        obj = record_object(header)
        for r in records:
            scene = rebuild_scene(header, r)
            assert validate_placement(scene, obj, r.pose, with_stats=False).valid

    def test_clouds_follow_augmentation(self, small_dataset):
        # record clouds are the base cloud carried through the record transform
        path, _ = small_dataset
        header, records = load_dataset(path)
        r = records[0]
        scene = rebuild_scene(header, r)
        top = max(b.world_vertices()[:, 2].max() for b in scene.bodies)
        assert abs(r.scene_cloud[:, 2].max() - top) < 1e-3
        tr = np.asarray(r.augment.translation)
        assert np.abs(r.scene_cloud[:, 0:2].mean(axis=0) - tr[0:2]).max() < 1.0

    def test_byte_identical_reruns(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        generate_dataset(["cantilever"], n_per_scene=2, seed=7, out_path=a)
        generate_dataset(["cantilever"], n_per_scene=2, seed=7, out_path=b)
        assert a.read_bytes() == b.read_bytes()

    def test_worker_pool_matches_serial(self, tmp_path):
        a, b = tmp_path / "serial.jsonl", tmp_path / "pool.jsonl"
        generate_dataset(["cantilever"], n_per_scene=2, seed=11, out_path=a)
        generate_dataset(["cantilever"], n_per_scene=2, seed=11, out_path=b,
                         workers=2)
        assert a.read_bytes() == b.read_bytes()

    def test_exhausted_reports_scene_and_record(self, tmp_path):
        giant = default_object(volume=1000.0)
        with pytest.raises(Exhausted, match="cantilever.*record 0"):
            generate_dataset(["cantilever"], n_per_scene=1, seed=0,
                             out_path=tmp_path / "x.jsonl", obj=giant, budget=3)

    def test_rejects_garbage_and_wrong_version(self, tmp_path):
        p = tmp_path / "bad.jsonl"
        p.write_text("not json\n")
        with pytest.raises(DataFormatError):
            load_dataset(p)
        p.write_text('{"format":"other"}\n')
        with pytest.raises(DataFormatError):
            load_dataset(p)
        p.write_text('{"format":"stabledrop-dataset","version":99}\n')
        with pytest.raises(DataFormatError, match="version"):
            load_dataset(p)
        p.write_text("")
        with pytest.raises(DataFormatError):
            load_dataset(p)

    def test_truncated_payload_rejected(self, small_dataset, tmp_path):
        path, _ = small_dataset
        lines = path.read_text().splitlines()
        doc_line = lines[1]
        import json
        doc = json.loads(doc_line)
        doc["scene_cloud"] = doc["scene_cloud"][: len(doc["scene_cloud"]) // 2]
        bad = tmp_path / "trunc.jsonl"
        bad.write_text(lines[0] + "\n" + json.dumps(doc) + "\n")
        with pytest.raises(DataFormatError, match="bytes"):
            load_dataset(bad)
