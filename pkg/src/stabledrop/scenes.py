"""Benchmark scenes, augmentation, and the scene file format.

Four structures (table, cantilever, balance, shelf) sit on a bounded fixed
ground cuboid whose top face is z = 0. All dimensions and masses are plain
dims-map entries with documented defaults; bodies default to 1 kg and
mu = 0.5. Augmentation is a yaw about the gravity axis plus a world
translation, applied to every body pose; point order shuffling is recorded
as a seed and applied where clouds are built.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ParseError, UnstableBaseScene
from .geom import ConvexBody, compose_pose, cuboid_at, pose_of, rot_z
from .statics import scene_in_equilibrium

CUBE_VOLUME = 2.0        # volume of the default placed cube, m^3
SCENE_NAMES = ("table", "cantilever", "balance", "shelf")


@dataclass
class SceneSpec:
    name: str
    bodies: list                      # ConvexBody, ground first
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    dims: dict = field(default_factory=dict)

    def body(self, body_id):
        return next(b for b in self.bodies if b.id == body_id)

    @property
    def structure(self):
        """Bodies excluding the fixed ground."""
        return [b for b in self.bodies if not b.fixed]


@dataclass
class AugmentParams:
    yaw: float
    translation: np.ndarray           # (3,)
    shuffle_seed: int


def draw_augment(rng):
    return AugmentParams(
        yaw=float(rng.uniform(0.0, 2.0 * np.pi)),
        translation=rng.uniform(-5.0, 5.0, 3),
        shuffle_seed=int(rng.integers(0, 2**31 - 1)),
    )


def identity_augment():
    return AugmentParams(yaw=0.0, translation=np.zeros(3), shuffle_seed=0)


def augment_scene(scene, params):
    """Yaw the scene about the gravity axis and translate it.

    Returns the transformed scene and the world transform ``(R, t)`` with
    ``p' = R p + t``.
    """
    R = rot_z(params.yaw)
    t = np.asarray(params.translation, dtype=float)
    bodies = [replace(b, pose=compose_pose(R, t, b.pose)) for b in scene.bodies]
    out = SceneSpec(name=scene.name, bodies=bodies, gravity=scene.gravity.copy(),
                    dims=dict(scene.dims))
    return out, (R, t)


def default_object(volume=CUBE_VOLUME, mass=1.0, mu=0.5):
    """The placed object: a homogeneous cube of the given volume."""
    edge = volume ** (1.0 / 3.0)
    return cuboid_at("object", [edge, edge, edge], [0.0, 0.0, edge / 2.0],
                     mass=mass, mu=mu)


def _merged(defaults, overrides):
    dims = dict(defaults)
    if overrides:
        unknown = set(overrides) - set(dims)
        if unknown:
            raise KeyError(f"unknown dims: {sorted(unknown)}")
        dims.update(overrides)
    return dims


def _with_ground(name, structure, dims):
    verts = np.vstack([b.world_vertices() for b in structure])
    lo, hi = verts.min(axis=0), verts.max(axis=0)
    m = dims["ground_margin"]
    th = dims["ground_thick"]
    ground = cuboid_at(
        "ground",
        [hi[0] - lo[0] + 2 * m, hi[1] - lo[1] + 2 * m, th],
        [(lo[0] + hi[0]) / 2, (lo[1] + hi[1]) / 2, -th / 2],
        mass=1.0, mu=dims["mu"], fixed=True)
    scene = SceneSpec(name=name, bodies=[ground] + structure, dims=dims)
    if not scene_in_equilibrium(scene.bodies):
        raise UnstableBaseScene(f"{name} is not in equilibrium with dims {dims}")
    return scene


_TABLE_DIMS = {
    "slab_x": 2.0, "slab_y": 2.0, "slab_thick": 0.2, "slab_mass": 1.0,
    "slab_offset_x": 0.0,
    "leg_side": 0.2, "leg_height": 1.0, "leg_mass": 1.0,
    "support_half": 0.4,          # leg center offset; outer hull 1 x 1 m
    "mu": 0.5, "ground_margin": 0.4, "ground_thick": 0.5,
}


def _build_table(dims):
    d = dims
    legs = []
    for i, (sx, sy) in enumerate(((-1, -1), (-1, 1), (1, -1), (1, 1))):
        legs.append(cuboid_at(
            f"leg{i}", [d["leg_side"], d["leg_side"], d["leg_height"]],
            [sx * d["support_half"], sy * d["support_half"], d["leg_height"] / 2],
            mass=d["leg_mass"], mu=d["mu"]))
    slab = cuboid_at(
        "slab", [d["slab_x"], d["slab_y"], d["slab_thick"]],
        [d["slab_offset_x"], 0.0, d["leg_height"] + d["slab_thick"] / 2],
        mass=d["slab_mass"], mu=d["mu"])
    return legs + [slab]


_SHELF_DIMS = {
    "slab_x": 4.0, "slab_y": 1.0, "slab_thick": 0.2, "slab_mass": 1.0,
    "wall_thick": 0.2, "wall_height": 1.0, "wall_mass": 1.0,
    "wall_offset": 1.5,
    "mu": 0.5, "ground_margin": 0.4, "ground_thick": 0.5,
}


def _build_shelf(dims):
    d = dims
    walls = [
        cuboid_at(f"wall{i}", [d["wall_thick"], d["slab_y"], d["wall_height"]],
                  [s * d["wall_offset"], 0.0, d["wall_height"] / 2],
                  mass=d["wall_mass"], mu=d["mu"])
        for i, s in enumerate((-1, 1))
    ]
    slab = cuboid_at(
        "slab", [d["slab_x"], d["slab_y"], d["slab_thick"]],
        [0.0, 0.0, d["wall_height"] + d["slab_thick"] / 2],
        mass=d["slab_mass"], mu=d["mu"])
    return walls + [slab]


_CANTILEVER_DIMS = {
    "support_side": 1.0, "support_mass": 1.0,
    "slab_len": 3.0, "slab_y": 1.0, "slab_thick": 0.2, "slab_mass": 1.0,
    "overhang": 1.8,              # slab beyond the +x support face
    "cw_side": 0.4, "cw_mass": 1.0,
    "mu": 0.5, "ground_margin": 0.4, "ground_thick": 0.5,
}


def _build_cantilever(dims):
    d = dims
    s = d["support_side"]
    support = cuboid_at("support", [s, s, s], [0.0, 0.0, s / 2],
                        mass=d["support_mass"], mu=d["mu"])
    slab_cx = s / 2 + d["overhang"] - d["slab_len"] / 2
    slab = cuboid_at(
        "slab", [d["slab_len"], d["slab_y"], d["slab_thick"]],
        [slab_cx, 0.0, s + d["slab_thick"] / 2],
        mass=d["slab_mass"], mu=d["mu"])
    cw_cx = slab_cx - d["slab_len"] / 2 + d["cw_side"] / 2
    cw = cuboid_at(
        "counterweight", [d["cw_side"]] * 3,
        [cw_cx, 0.0, s + d["slab_thick"] + d["cw_side"] / 2],
        mass=d["cw_mass"], mu=d["mu"])
    return [support, slab, cw]


_BALANCE_DIMS = {
    "leg_thick": 0.2, "leg_y": 1.0, "leg_height": 0.8, "leg_mass": 1.0,
    "leg1_x": -0.7, "leg2_x": 0.1, "leg3_x": 0.25,
    "bottom_len": 2.0, "top_len": 1.8,
    "slab_y": 1.0, "slab_thick": 0.2, "slab_mass": 1.0,
    "mu": 0.5, "ground_margin": 0.4, "ground_thick": 0.5,
}


def _build_balance(dims):
    d = dims
    lt, ly, lh = d["leg_thick"], d["leg_y"], d["leg_height"]
    leg1 = cuboid_at("leg1", [lt, ly, lh], [d["leg1_x"], 0.0, lh / 2],
                     mass=d["leg_mass"], mu=d["mu"])
    leg2 = cuboid_at("leg2", [lt, ly, lh], [d["leg2_x"], 0.0, lh / 2],
                     mass=d["leg_mass"], mu=d["mu"])
    z0 = lh + d["slab_thick"] / 2
    bottom = cuboid_at("bottom_slab", [d["bottom_len"], d["slab_y"], d["slab_thick"]],
                       [0.0, 0.0, z0], mass=d["slab_mass"], mu=d["mu"])
    z1 = lh + d["slab_thick"]
    leg3 = cuboid_at("leg3", [lt, ly, lh], [d["leg3_x"], 0.0, z1 + lh / 2],
                     mass=d["leg_mass"], mu=d["mu"])
    top = cuboid_at("top_slab", [d["top_len"], d["slab_y"], d["slab_thick"]],
                    [d["leg3_x"], 0.0, z1 + lh + d["slab_thick"] / 2],
                    mass=d["slab_mass"], mu=d["mu"])
    return [leg1, leg2, bottom, leg3, top]


_BUILDERS = {
    "table": (_build_table, _TABLE_DIMS),
    "shelf": (_build_shelf, _SHELF_DIMS),
    "cantilever": (_build_cantilever, _CANTILEVER_DIMS),
    "balance": (_build_balance, _BALANCE_DIMS),
}


def build_scene(name, overrides=None):
    """Build a named benchmark scene, optionally overriding dims entries.

    Raises:
        KeyError: unknown scene name or dims key.
        UnstableBaseScene: the dims produce a structure that is not in
            equilibrium before any placement.
    """
    if name not in _BUILDERS:
        raise KeyError(f"unknown scene {name!r}; choose from {sorted(_BUILDERS)}")
    builder, defaults = _BUILDERS[name]
    dims = _merged(defaults, overrides)
    return _with_ground(name, builder(dims), dims)


# -- scene file format -------------------------------------------------------

_MAGIC = "stabledrop-scene 1"


def save_scene(scene, path):
    """Write a scene as the line-oriented key/value format (round-trip exact)."""
    lines = [_MAGIC, f"name {scene.name}",
             "gravity " + " ".join(repr(float(v)) for v in scene.gravity)]
    for key in sorted(scene.dims):
        lines.append(f"dim {key} {scene.dims[key]!r}")
    for b in scene.bodies:
        lines.append(f"body {b.id}")
        lines.append("  extents " + " ".join(repr(float(v)) for v in b.extents))
        lines.append(f"  mass {float(b.mass)!r}")
        lines.append(f"  mu {float(b.mu)!r}")
        lines.append("  pose " + " ".join(repr(float(v)) for v in b.pose))
        lines.append(f"  fixed {'true' if b.fixed else 'false'}")
        lines.append("end")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def _parse_floats(parts, n, lineno, col):
    if len(parts) != n:
        raise ParseError(f"expected {n} numbers, got {len(parts)}", lineno, col)
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise ParseError(str(exc), lineno, col) from None


def load_scene(path):
    """Parse a scene file; unknown keys and bad values raise ParseError."""
    with open(path) as f:
        raw = f.read().splitlines()
    if not raw or raw[0].strip() != _MAGIC:
        raise ParseError(f"missing header {_MAGIC!r}", 1, 1)

    name = None
    gravity = np.array([0.0, 0.0, -9.81])
    dims = {}
    bodies = []
    i = 1
    while i < len(raw):
        line = raw[i]
        lineno = i + 1
        stripped = line.strip()
        i += 1
        if not stripped or stripped.startswith("#"):
            continue
        col = line.index(stripped[0]) + 1
        parts = stripped.split()
        key = parts[0]
        if key == "name":
            name = parts[1] if len(parts) > 1 else ""
        elif key == "gravity":
            gravity = np.array(_parse_floats(parts[1:], 3, lineno, col))
        elif key == "dim":
            if len(parts) != 3:
                raise ParseError("dim takes a key and a value", lineno, col)
            dims[parts[1]] = _parse_floats(parts[2:], 1, lineno, col)[0]
        elif key == "body":
            if len(parts) != 2:
                raise ParseError("body takes an id", lineno, col)
            body, i = _parse_body(raw, i, parts[1])
            bodies.append(body)
        else:
            raise ParseError(f"unknown key {key!r}", lineno, col)
    if name is None:
        raise ParseError("missing name", len(raw), 1)
    return SceneSpec(name=name, bodies=bodies, gravity=gravity, dims=dims)


def _parse_body(raw, i, body_id):
    fields = {}
    while i < len(raw):
        line = raw[i]
        lineno = i + 1
        stripped = line.strip()
        i += 1
        if not stripped or stripped.startswith("#"):
            continue
        col = line.index(stripped[0]) + 1
        parts = stripped.split()
        key = parts[0]
        if key == "end":
            break
        if key == "extents":
            fields["extents"] = _parse_floats(parts[1:], 3, lineno, col)
        elif key == "mass":
            v = _parse_floats(parts[1:], 1, lineno, col)[0]
            if v <= 0.0:
                raise ParseError(f"mass must be positive, got {v!r}", lineno, col)
            fields["mass"] = v
        elif key == "mu":
            v = _parse_floats(parts[1:], 1, lineno, col)[0]
            if v < 0.0:
                raise ParseError(f"mu must be nonnegative, got {v!r}", lineno, col)
            fields["mu"] = v
        elif key == "pose":
            fields["pose"] = np.array(_parse_floats(parts[1:], 9, lineno, col))
        elif key == "fixed":
            if parts[1] not in ("true", "false"):
                raise ParseError(f"fixed must be true or false, got {parts[1]!r}",
                                 lineno, col)
            fields["fixed"] = parts[1] == "true"
        else:
            raise ParseError(f"unknown key {key!r}", lineno, col)
    else:
        raise ParseError(f"body {body_id!r} missing end", len(raw), 1)
    missing = {"extents", "mass", "mu", "pose"} - set(fields)
    if missing:
        raise ParseError(f"body {body_id!r} missing {sorted(missing)}", i, 1)
    return ConvexBody(id=body_id, extents=np.array(fields["extents"]),
                      mass=fields["mass"], mu=fields["mu"], pose=fields["pose"],
                      fixed=fields.get("fixed", False)), i
