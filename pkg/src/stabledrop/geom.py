"""Convex rigid-body geometry: poses, cuboids, proximity, surface sampling.

A pose is a flat ``(9,)`` float array: ``pose[0:3]`` is the world translation
and ``pose[3:9]`` holds the first two columns of the rotation matrix
(the 6D rotation representation). ``gram_schmidt_6d`` maps any usable
6-vector to a proper rotation; orthonormal inputs map to themselves.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DegenerateRotation, InvalidDimensions

# Gap/overlap magnitudes below this count as touching contact.
EPS_CONTACT = 1e-4
# Pre-inverse tolerance for unusable 6D rotation inputs.
EPS_DEGENERATE = 1e-9


def cross3(u, v):
    """Cross product of 3-vectors; numpy.cross has too much call overhead."""
    return np.array([u[1] * v[2] - u[2] * v[1],
                     u[2] * v[0] - u[0] * v[2],
                     u[0] * v[1] - u[1] * v[0]])


def cross_rows(u, v):
    """Broadcasting cross product over trailing axis 3."""
    ux, uy, uz = u[..., 0], u[..., 1], u[..., 2]
    vx, vy, vz = v[..., 0], v[..., 1], v[..., 2]
    return np.stack([uy * vz - uz * vy,
                     uz * vx - ux * vz,
                     ux * vy - uy * vx], axis=-1)


def gram_schmidt_6d(r6):
    """Project a 6D rotation representation onto SO(3).

    Args:
        r6: array-like ``(6,)``, the first two (approximate) rotation columns.

    Returns:
        ``(3, 3)`` rotation matrix with orthonormal columns, det +1.

    Raises:
        DegenerateRotation: if the first column is near zero or the two
            columns are near parallel.
    """
    r6 = np.asarray(r6, dtype=float)
    a1, a2 = r6[0:3], r6[3:6]
    n1 = np.sqrt(a1 @ a1)
    if n1 <= EPS_DEGENERATE:
        raise DegenerateRotation(f"first column norm {n1:.3e}")
    c1 = a1 / n1
    u2 = a2 - (c1 @ a2) * c1
    n2 = np.sqrt(u2 @ u2)
    if n2 <= EPS_DEGENERATE:
        raise DegenerateRotation(f"columns parallel, residual {n2:.3e}")
    c2 = u2 / n2
    c3 = cross3(c1, c2)
    return np.column_stack((c1, c2, c3))


def rot6_of(R):
    """First two columns of a rotation matrix as a flat 6-vector."""
    R = np.asarray(R, dtype=float)
    return np.concatenate((R[:, 0], R[:, 1]))


def pose_of(R, t):
    """Pack a rotation matrix and translation into a 9-vector pose."""
    return np.concatenate((np.asarray(t, dtype=float), rot6_of(R)))


def identity_pose():
    return np.array([0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0])


def rotation_of(pose):
    """Rotation matrix of a pose (Gram-Schmidt applied to the 6D block)."""
    return gram_schmidt_6d(np.asarray(pose, dtype=float)[3:9])


def rot_z(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def align_z_to(n):
    """Rotation taking the +z axis to unit vector ``n`` (minimal twist)."""
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n)
    z = np.array([0.0, 0.0, 1.0])
    c = float(z @ n)
    if c > 1.0 - 1e-12:
        return np.eye(3)
    if c < -1.0 + 1e-12:
        # half turn about x
        return np.diag([1.0, -1.0, -1.0])
    axis = cross3(z, n)
    s = np.linalg.norm(axis)
    axis = axis / s
    K = np.array([[0.0, -axis[2], axis[1]],
                  [axis[2], 0.0, -axis[0]],
                  [-axis[1], axis[0], 0.0]])
    return np.eye(3) + s * K + (1.0 - c) * (K @ K)


def apply_pose(pose, points, normals=None):
    """Transform points (and optionally normals) by a pose.

    Points get ``R p + t``; normals get ``R n`` only. Returns the
    transformed points, or ``(points, normals)`` when normals are given.
    """
    pose = np.asarray(pose, dtype=float)
    R = rotation_of(pose)
    t = pose[0:3]
    pts = np.asarray(points, dtype=float) @ R.T + t
    if normals is None:
        return pts
    return pts, np.asarray(normals, dtype=float) @ R.T


def compose_pose(R, t, pose):
    """Apply a world transform (R, t) on top of an existing pose."""
    Rp = rotation_of(pose)
    return pose_of(np.asarray(R, dtype=float) @ Rp,
                   np.asarray(R, dtype=float) @ np.asarray(pose, dtype=float)[0:3] + np.asarray(t, dtype=float))


# Unit cuboid topology: vertex signs and outward-wound quad faces.
_CUBOID_SIGNS = np.array([
    [-1, -1, -1], [-1, -1, 1], [-1, 1, -1], [-1, 1, 1],
    [1, -1, -1], [1, -1, 1], [1, 1, -1], [1, 1, 1],
], dtype=float)
_CUBOID_FACES = (
    (0, 1, 3, 2),   # -x
    (4, 6, 7, 5),   # +x
    (0, 4, 5, 1),   # -y
    (2, 3, 7, 6),   # +y
    (0, 2, 6, 4),   # -z
    (1, 5, 7, 3),   # +z
)


@dataclass
class ConvexBody:
    """A convex rigid body (cuboid) with body-frame geometry and a world pose.

    Vertices are centered on the center of mass; ``com`` in world
    coordinates is therefore the pose translation.
    """

    id: str
    extents: np.ndarray            # full side lengths (3,)
    mass: float
    mu: float
    pose: np.ndarray = field(default_factory=identity_pose)
    fixed: bool = False            # fixed bodies are excluded from equilibrium

    def __post_init__(self):
        self.extents = np.asarray(self.extents, dtype=float)
        self.pose = np.asarray(self.pose, dtype=float)
        if self.extents.shape != (3,) or np.any(self.extents <= 0):
            raise InvalidDimensions(f"extents {self.extents}")
        if not np.isfinite(self.mass) or self.mass <= 0:
            raise InvalidDimensions(f"mass {self.mass}")
        if not 0.0 <= self.mu:
            raise InvalidDimensions(f"mu {self.mu}")

    @property
    def vertices(self):
        """Body-frame vertices ``(8, 3)``."""
        return _CUBOID_SIGNS * (self.extents / 2.0)

    @property
    def faces(self):
        return _CUBOID_FACES

    @property
    def volume(self):
        return float(np.prod(self.extents))

    @property
    def com(self):
        """World center of mass."""
        return np.asarray(self.pose, dtype=float)[0:3]

    def _world(self):
        """Cached (rotation, world vertices, world face normals).

        Keyed on the identity of the pose array: assigning a new pose
        invalidates the cache, mutating one in place does not. Treat
        bodies as immutable and rebuild via dataclasses.replace.
        """
        cached = self.__dict__.get("_world_cache")
        if cached is None or cached[0] is not self.pose:
            R = gram_schmidt_6d(self.pose[3:9])
            wv = self.vertices @ R.T + self.pose[0:3]
            fn = np.empty((6, 3))
            fn[0], fn[1] = -R[:, 0], R[:, 0]
            fn[2], fn[3] = -R[:, 1], R[:, 1]
            fn[4], fn[5] = -R[:, 2], R[:, 2]
            cached = (self.pose, R, wv, fn)
            self.__dict__["_world_cache"] = cached
        return cached

    @property
    def rotation(self):
        return self._world()[1]

    def world_vertices(self):
        return self._world()[2]

    def face_normals(self):
        """Outward world face normals ``(6, 3)``, one per face."""
        return self._world()[3]

    def edge_directions(self):
        """Unique world edge directions (3 for a cuboid)."""
        return self._world()[1].T  # rows are rotated axes

    def contains(self, points, tol=0.0):
        """Boolean mask of world points inside the body (within tol)."""
        R = self._world()[1]
        local = (np.atleast_2d(points) - self.pose[0:3]) @ R
        half = self.extents / 2.0
        return np.all(np.abs(local) <= half + tol, axis=1)


def make_cuboid(body_id, extents, mass, mu, pose=None, fixed=False):
    """Build an axis-aligned cuboid body; pose places it in the world."""
    if pose is None:
        pose = identity_pose()
    return ConvexBody(id=body_id, extents=np.asarray(extents, dtype=float),
                      mass=float(mass), mu=float(mu),
                      pose=np.asarray(pose, dtype=float), fixed=fixed)


def cuboid_at(body_id, extents, center, mass=1.0, mu=0.5, R=None, fixed=False):
    """Convenience: cuboid with center translation and optional rotation."""
    R = np.eye(3) if R is None else R
    return make_cuboid(body_id, extents, mass, mu, pose=pose_of(R, center), fixed=fixed)


class ProximityKind(Enum):
    SEPARATED = "separated"
    CONTACT = "contact"
    PENETRATING = "penetrating"


@dataclass
class Proximity:
    """Result of a proximity query between two bodies.

    ``distance`` is the signed minimum-translation distance along the best
    separating axis: positive gap, negative penetration depth. For touching
    bodies (|distance| <= eps) ``patch`` holds coplanar world contact points
    and ``normal`` the shared unit normal pointing from body a into body b.
    """

    kind: ProximityKind
    distance: float
    patch: np.ndarray | None = None      # (k, 3) world points
    normal: np.ndarray | None = None     # (3,) unit, a -> b


def _face_polygon(body, face_index):
    return body.world_vertices()[list(body.faces[face_index])]


def _clip_polygon(poly, plane_points, plane_normals):
    """Sutherland-Hodgman clip of a polygon by inward half-planes."""
    out = list(poly)
    for p0, n in zip(plane_points, plane_normals):
        if not out:
            break
        inp = out
        out = []
        d = [float((q - p0) @ n) for q in inp]
        for i in range(len(inp)):
            j = (i + 1) % len(inp)
            if d[i] >= 0.0:
                out.append(inp[i])
            if (d[i] >= 0.0) != (d[j] >= 0.0):
                t = d[i] / (d[i] - d[j])
                out.append(inp[i] + t * (inp[j] - inp[i]))
    return out


def _dedupe_points(points, tol=1e-9):
    kept = []
    for p in points:
        if not any(np.linalg.norm(p - q) <= tol for q in kept):
            kept.append(p)
    return kept


def _segment_closest(p0, p1, q0, q1):
    """Closest points between two segments."""
    u = p1 - p0
    v = q1 - q0
    w = p0 - q0
    a, b, c = u @ u, u @ v, v @ v
    d, e = u @ w, v @ w
    den = a * c - b * b
    s = np.clip((b * e - c * d) / den, 0.0, 1.0) if den > 1e-12 else 0.0
    t = np.clip((a * e - b * d) / den, 0.0, 1.0) if den > 1e-12 else np.clip(e / c, 0.0, 1.0)
    return p0 + s * u, q0 + t * v


def classify_proximity(a, b, eps=EPS_CONTACT):
    """Separating-axis classification of two convex bodies.

    Axes tested: outward face normals of both bodies and cross products of
    edge directions. The largest signed gap over all axes is the reported
    distance. Touching pairs get a contact patch by clipping the incident
    face against the reference face.

    Returns:
        Proximity with kind Separated (distance > eps), Contact
        (|distance| <= eps, patch populated), or Penetrating (< -eps).
    """
    va = a.world_vertices()
    vb = b.world_vertices()
    fa = a.face_normals()
    fb = b.face_normals()

    # cross-product axes of edge directions, oriented a -> b
    w = cross_rows(a.edge_directions()[:, None, :],
                   b.edge_directions()[None, :, :]).reshape(-1, 3)
    wn = np.sqrt((w * w).sum(axis=1))
    ok = wn > 1e-12
    w = w[ok] / wn[ok][:, None]
    if len(w):
        sep = vb.mean(axis=0) - va.mean(axis=0)
        w[(w @ sep) < 0.0] *= -1.0

    # one-sided gaps beyond each face keep every axis oriented a -> b
    axes = np.concatenate([fa, fb, w])
    pa = va @ axes.T
    pb = vb @ axes.T
    gaps = pb.min(axis=0) - pa.max(axis=0)
    gaps[6:12] = pa[:, 6:12].min(axis=0) - pb[:, 6:12].max(axis=0)

    best = int(np.argmax(gaps))
    d = float(gaps[best])
    if d > eps:
        return Proximity(ProximityKind.SEPARATED, d)
    if d < -eps:
        return Proximity(ProximityKind.PENETRATING, d)
    if best < 6:
        descriptor = ("face_a", best, fa[best])
    elif best < 12:
        descriptor = ("face_b", best - 6, fb[best - 6])
    else:
        descriptor = ("edge", None, axes[best])
    return _contact_patch(a, b, d, descriptor, eps)


def _contact_patch(a, b, d, descriptor, eps):
    source, idx, axis = descriptor
    if source == "edge":
        # single-point patch at the midpoint of closest edge approach
        pa, pb = _closest_edge_points(a, b, axis)
        point = 0.5 * (pa + pb)
        return Proximity(ProximityKind.CONTACT, d, patch=point[None, :], normal=axis)

    if source == "face_a":
        ref_body, inc_body, normal_ab = a, b, axis
        ref_outward = axis
    else:
        ref_body, inc_body, normal_ab = b, a, -axis
        ref_outward = axis

    ref_poly = _face_polygon(ref_body, idx)
    inc_normals = inc_body.face_normals()
    inc_idx = int(np.argmin(inc_normals @ ref_outward))
    inc_poly = _face_polygon(inc_body, inc_idx)

    # inward side planes of the reference face (outward winding assumed)
    k = len(ref_poly)
    plane_pts = [ref_poly[i] for i in range(k)]
    edges = np.roll(ref_poly, -1, axis=0) - ref_poly
    plane_ns = cross_rows(ref_outward[None, :], edges)
    clipped = _clip_polygon(list(inc_poly), plane_pts, plane_ns)

    # keep near-touching points and snap them onto the reference plane
    p_ref = ref_poly[0]
    kept = []
    for q in clipped:
        h = float((q - p_ref) @ ref_outward)
        if abs(h) <= eps:
            kept.append(q - h * ref_outward)
    kept = _dedupe_points(kept)
    if not kept:
        # degenerate overlap; fall back to deepest incident vertex
        heights = (inc_poly - p_ref) @ ref_outward
        q = inc_poly[int(np.argmin(heights))]
        kept = [q - float((q - p_ref) @ ref_outward) * ref_outward]
    return Proximity(ProximityKind.CONTACT, d, patch=np.array(kept), normal=normal_ab)


def _closest_edge_points(a, b, axis):
    """Closest points over all edge pairs, used for edge-edge contacts."""
    best = (np.inf, None, None)
    va, vb = a.world_vertices(), b.world_vertices()

    def edges(verts, faces):
        seen = set()
        for f in faces:
            for i in range(len(f)):
                e = tuple(sorted((f[i], f[(i + 1) % len(f)])))
                if e not in seen:
                    seen.add(e)
                    yield verts[e[0]], verts[e[1]]

    for p0, p1 in edges(va, a.faces):
        for q0, q1 in edges(vb, b.faces):
            cp, cq = _segment_closest(p0, p1, q0, q1)
            dist = float(np.linalg.norm(cp - cq))
            if dist < best[0]:
                best = (dist, cp, cq)
    return best[1], best[2]


@dataclass
class SurfaceSamples:
    """Area-weighted surface samples with outward normals."""

    points: np.ndarray        # (n, 3) world
    normals: np.ndarray       # (n, 3) world, unit, outward
    body_ids: np.ndarray      # (n,) str
    faces: np.ndarray         # (n,) int face index within the body

    def __len__(self):
        return len(self.points)


def concat_samples(parts):
    return SurfaceSamples(
        points=np.concatenate([p.points for p in parts]),
        normals=np.concatenate([p.normals for p in parts]),
        body_ids=np.concatenate([p.body_ids for p in parts]),
        faces=np.concatenate([p.faces for p in parts]),
    )


def surface_area(body):
    e = body.extents
    return 2.0 * float(e[0] * e[1] + e[1] * e[2] + e[0] * e[2])


def sample_surface(body, n, rng):
    """Draw ``n`` area-weighted points on the body surface.

    Deterministic for a given generator state; points land exactly on faces.
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    e = body.extents
    face_areas = np.array([e[1] * e[2], e[1] * e[2],
                           e[0] * e[2], e[0] * e[2],
                           e[0] * e[1], e[0] * e[1]])
    probs = face_areas / face_areas.sum()
    face_idx = rng.choice(6, size=n, p=probs)

    half = e / 2.0
    # local axes spanning each face and its fixed coordinate
    spans = {0: (1, 2), 1: (1, 2), 2: (0, 2), 3: (0, 2), 4: (0, 1), 5: (0, 1)}
    fixed_axis = {0: 0, 1: 0, 2: 1, 3: 1, 4: 2, 5: 2}
    sign = {0: -1.0, 1: 1.0, 2: -1.0, 3: 1.0, 4: -1.0, 5: 1.0}

    uv = rng.uniform(-1.0, 1.0, size=(n, 2))
    local = np.zeros((n, 3))
    normals_local = np.zeros((n, 3))
    for f in range(6):
        m = face_idx == f
        if not np.any(m):
            continue
        i, j = spans[f]
        k = fixed_axis[f]
        local[m, i] = uv[m, 0] * half[i]
        local[m, j] = uv[m, 1] * half[j]
        local[m, k] = sign[f] * half[k]
        normals_local[m, k] = sign[f]

    pts, nrm = apply_pose(body.pose, local, normals_local)
    ids = np.array([body.id] * n)
    return SurfaceSamples(points=pts, normals=nrm, body_ids=ids, faces=face_idx.astype(int))
