import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stabledrop import geom
from stabledrop.errors import DegenerateRotation, InvalidDimensions
from stabledrop.geom import (
    EPS_CONTACT,
    Proximity,
    ProximityKind,
    apply_pose,
    classify_proximity,
    cuboid_at,
    gram_schmidt_6d,
    identity_pose,
    make_cuboid,
    pose_of,
    rot6_of,
    rot_z,
    sample_surface,
)


def random_rot6(rng):
    return rng.standard_normal(6)


class TestGramSchmidt:
    def test_identity_passthrough(self):
        R = gram_schmidt_6d([1, 0, 0, 0, 1, 0])
        np.testing.assert_allclose(R, np.eye(3), atol=1e-15)

    def test_scaling_invariant(self):
        R = gram_schmidt_6d([2, 0, 0, 0, 3, 0])
        np.testing.assert_allclose(R, np.eye(3), atol=1e-15)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(min_value=0, max_value=10**9))
    def test_orthonormal_and_proper(self, seed):
        rng = np.random.default_rng(seed)
        R = gram_schmidt_6d(random_rot6(rng))
        np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-9)
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-9)

    def test_idempotent(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            R = gram_schmidt_6d(random_rot6(rng))
            R2 = gram_schmidt_6d(rot6_of(R))
            np.testing.assert_allclose(R2, R, atol=1e-12)

    def test_zero_first_column_raises(self):
        with pytest.raises(DegenerateRotation):
            gram_schmidt_6d([0, 0, 0, 0, 1, 0])

    def test_parallel_columns_raise(self):
        with pytest.raises(DegenerateRotation):
            gram_schmidt_6d([1, 0, 0, 1 + 1e-12, 0, 0])


class TestApplyPose:
    def test_identity(self):
        pts = np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]])
        np.testing.assert_array_equal(apply_pose(identity_pose(), pts), pts)

    def test_pure_translation(self):
        pose = pose_of(np.eye(3), [1.0, -2.0, 0.5])
        out = apply_pose(pose, np.array([[0.0, 0.0, 0.0]]))
        np.testing.assert_allclose(out, [[1.0, -2.0, 0.5]])

    def test_yaw_quarter_turn(self):
        pose = pose_of(rot_z(np.pi / 2), [0.0, 0.0, 0.0])
        out = apply_pose(pose, np.array([[1.0, 0.0, 0.0]]))
        np.testing.assert_allclose(out, [[0.0, 1.0, 0.0]], atol=1e-15)

    def test_normals_rotate_only(self):
        pose = pose_of(rot_z(np.pi / 2), [5.0, 5.0, 5.0])
        pts, nrm = apply_pose(pose, np.zeros((1, 3)), np.array([[1.0, 0.0, 0.0]]))
        np.testing.assert_allclose(pts, [[5.0, 5.0, 5.0]])
        np.testing.assert_allclose(nrm, [[0.0, 1.0, 0.0]], atol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=0, max_value=10**9))
    def test_isometry(self, seed):
        rng = np.random.default_rng(seed)
        pose = np.concatenate((rng.uniform(-5, 5, 3), random_rot6(rng)))
        pts = rng.uniform(-2, 2, (10, 3))
        out = apply_pose(pose, pts)
        din = np.linalg.norm(pts[:, None] - pts[None, :], axis=-1)
        dout = np.linalg.norm(out[:, None] - out[None, :], axis=-1)
        np.testing.assert_allclose(dout, din, atol=1e-9)


class TestMakeCuboid:
    def test_volume_and_com(self):
        b = cuboid_at("b", [2.0, 3.0, 0.5], [1.0, 0.0, 4.0])
        assert b.volume == pytest.approx(3.0)
        np.testing.assert_allclose(b.com, [1.0, 0.0, 4.0])

    def test_volume_matches_divergence_theorem(self):
        # independent volume from the face mesh: V = (1/3) sum over faces of
        # centroid . n * area
        b = cuboid_at("b", [1.2, 0.7, 2.1], [0.0, 0.0, 0.0], R=rot_z(0.3))
        verts = b.world_vertices()
        vol = 0.0
        for f, n in zip(b.faces, b.face_normals()):
            poly = verts[list(f)]
            c = poly.mean(axis=0)
            e1 = poly[1] - poly[0]
            e2 = poly[3] - poly[0]
            area = np.linalg.norm(np.cross(e1, e2))
            vol += (c @ n) * area / 3.0
        assert vol == pytest.approx(b.volume, rel=1e-12)

    def test_com_inside_hull(self):
        b = cuboid_at("b", [1.0, 1.0, 1.0], [3.0, 3.0, 3.0], R=rot_z(1.0))
        assert b.contains(b.com[None, :])[0]

    def test_invalid_extents(self):
        with pytest.raises(InvalidDimensions):
            make_cuboid("b", [1.0, 0.0, 1.0], 1.0, 0.5)

    def test_invalid_mass(self):
        with pytest.raises(InvalidDimensions):
            make_cuboid("b", [1.0, 1.0, 1.0], -2.0, 0.5)

    def test_default_cube_edge_from_volume(self):
        from stabledrop.scenes import default_object

        cube = default_object()
        assert cube.volume == pytest.approx(2.0, rel=1e-12)
        np.testing.assert_allclose(cube.extents, 2.0 ** (1.0 / 3.0))


class TestClassifyProximity:
    def test_separated_analytic_gap(self):
        a = cuboid_at("a", [1, 1, 1], [0.0, 0.0, 0.0])
        b = cuboid_at("b", [1, 1, 1], [3.0, 0.0, 0.0])
        r = classify_proximity(a, b)
        assert r.kind is ProximityKind.SEPARATED
        assert r.distance == pytest.approx(2.0, abs=1e-12)

    def test_penetrating_depth(self):
        a = cuboid_at("a", [1, 1, 1], [0.0, 0.0, 0.0])
        b = cuboid_at("b", [1, 1, 1], [0.9, 0.0, 0.0])
        r = classify_proximity(a, b)
        assert r.kind is ProximityKind.PENETRATING
        assert r.distance == pytest.approx(-0.1, abs=1e-12)

    def test_resting_contact_patch(self):
        slab = cuboid_at("slab", [4, 4, 0.4], [0.0, 0.0, -0.2])
        cube = cuboid_at("cube", [1, 1, 1], [0.0, 0.0, 0.5])
        r = classify_proximity(slab, cube)
        assert r.kind is ProximityKind.CONTACT
        assert r.patch.shape == (4, 3)
        np.testing.assert_allclose(r.normal, [0, 0, 1], atol=1e-12)
        np.testing.assert_allclose(r.patch[:, 2], 0.0, atol=1e-12)
        np.testing.assert_allclose(np.sort(np.abs(r.patch[:, 0])), 0.5)

    def test_symmetry_up_to_normal_flip(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            a = cuboid_at("a", rng.uniform(0.2, 1.5, 3), rng.uniform(-1, 1, 3),
                          R=gram_schmidt_6d(rng.standard_normal(6)))
            b = cuboid_at("b", rng.uniform(0.2, 1.5, 3), rng.uniform(-1, 1, 3),
                          R=gram_schmidt_6d(rng.standard_normal(6)))
            rab = classify_proximity(a, b)
            rba = classify_proximity(b, a)
            assert rab.kind is rba.kind
            assert rab.distance == pytest.approx(rba.distance, abs=1e-9)
            if rab.kind is ProximityKind.CONTACT:
                np.testing.assert_allclose(rab.normal, -rba.normal, atol=1e-9)

    def test_touching_within_eps_is_contact(self):
        a = cuboid_at("a", [1, 1, 1], [0.0, 0.0, 0.0])
        b = cuboid_at("b", [1, 1, 1], [1.0 + 0.5e-4, 0.0, 0.0])
        assert classify_proximity(a, b).kind is ProximityKind.CONTACT
        c = cuboid_at("c", [1, 1, 1], [1.0 - 0.5e-4, 0.0, 0.0])
        assert classify_proximity(a, c).kind is ProximityKind.CONTACT

    def test_voxel_oracle_agreement(self):
        # brute-force occupancy at 1 cm; only classifications with
        # |distance| > 2 cm are asserted
        rng = np.random.default_rng(11)
        checked = 0
        for _ in range(120):
            a = cuboid_at("a", rng.uniform(0.2, 1.0, 3), rng.uniform(-0.6, 0.6, 3),
                          R=gram_schmidt_6d(rng.standard_normal(6)))
            b = cuboid_at("b", rng.uniform(0.2, 1.0, 3), rng.uniform(-0.6, 0.6, 3),
                          R=gram_schmidt_6d(rng.standard_normal(6)))
            r = classify_proximity(a, b)
            if abs(r.distance) <= 0.02:
                continue
            va, vb = a.world_vertices(), b.world_vertices()
            lo = np.maximum(va.min(axis=0), vb.min(axis=0)) - 0.005
            hi = np.minimum(va.max(axis=0), vb.max(axis=0)) + 0.005
            if np.any(hi <= lo):
                overlap = False
            else:
                axes = [np.arange(l, h + 0.01, 0.01) for l, h in zip(lo, hi)]
                grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
                overlap = bool(np.any(a.contains(grid) & b.contains(grid)))
            assert overlap == (r.kind is ProximityKind.PENETRATING), (
                f"voxel oracle disagrees at distance {r.distance}")
            checked += 1
        assert checked >= 50

    def test_edge_edge_contact_single_point(self):
        # two unit cubes, one yawed 45 degrees, meeting edge-to-edge
        a = cuboid_at("a", [1, 1, 1], [0.0, 0.0, 0.0])
        off = 0.5 + np.sqrt(2) / 2
        b = cuboid_at("b", [1, 1, 1], [off, 0.0, 0.2], R=rot_z(np.pi / 4))
        r = classify_proximity(a, b)
        assert r.kind is ProximityKind.CONTACT
        assert r.patch.shape[0] >= 1


class TestSampleSurface:
    def test_face_count_binomial(self):
        b = cuboid_at("b", [1, 1, 1], [0, 0, 0])
        s = sample_surface(b, 6000, np.random.default_rng(0))
        counts = np.bincount(s.faces, minlength=6)
        # each face has probability 1/6; 5 sigma ~ 145
        assert np.all(np.abs(counts - 1000) < 150), counts

    def test_points_on_surface_with_outward_normals(self):
        b = cuboid_at("b", [1.0, 2.0, 0.5], [1.0, 1.0, 1.0], R=rot_z(0.7))
        s = sample_surface(b, 500, np.random.default_rng(1))
        assert np.all(b.contains(s.points, tol=1e-9))
        # stepping outward along the normal leaves the body
        outside = s.points + 1e-6 * s.normals
        assert not np.any(b.contains(outside))
        np.testing.assert_allclose(np.linalg.norm(s.normals, axis=1), 1.0)

    def test_single_sample(self):
        b = cuboid_at("b", [1, 1, 1], [0, 0, 0])
        s = sample_surface(b, 1, np.random.default_rng(2))
        assert len(s) == 1

    def test_deterministic_per_seed(self):
        b = cuboid_at("b", [1, 1, 1], [0, 0, 0])
        s1 = sample_surface(b, 100, np.random.default_rng(9))
        s2 = sample_surface(b, 100, np.random.default_rng(9))
        np.testing.assert_array_equal(s1.points, s2.points)
        np.testing.assert_array_equal(s1.faces, s2.faces)

    def test_area_weighting_flat_slab(self):
        # slab 2x2x0.2: top/bottom faces carry 4/(4+4+0.4+0.4+0.4+0.4) each
        b = cuboid_at("b", [2, 2, 0.2], [0, 0, 0])
        s = sample_surface(b, 8000, np.random.default_rng(3))
        frac_top = np.mean(s.faces == 5)
        assert frac_top == pytest.approx(4.0 / 9.6, abs=0.03)
