"""Placement validity, the expert contact-point planner, and dataset files.

A placement is valid when no body pair penetrates beyond the contact
tolerance and the scene together with the placed object admits glue-free
equilibrium under gravity. The expert planner proposes contact points on
the scene surface with probability proportional to the normalized
robustness feature, mates the object's bottom face to them with a random
yaw, and keeps the first proposal that validates. Datasets are JSON-lines
files: one self-describing header line, then one record per line with f32
cloud payloads base64-encoded.
"""

from __future__ import annotations

import base64
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import scenes as scenes_mod
from .cloud import N_CLOUD, featurize, sample_scene_surfaces, transform_scene_cloud
from .errors import DataFormatError, Exhausted
from .geom import (EPS_CONTACT, ProximityKind, align_z_to, classify_proximity,
                   identity_pose, pose_of, rot_z, rotation_of)
from .scenes import AugmentParams, augment_scene, draw_augment
from .statics import Contact, detect_contacts, equilibrium_feasible, robustness_field

DATASET_MAGIC = "stabledrop-dataset"
DATASET_VERSION = 1
EXPERT_BUDGET = 1000

SCENE_FIELDS = ["x", "y", "z", "nx", "ny", "nz",
                "seg_scene", "seg_object", "robustness"]
OBJECT_FIELDS = ["x", "y", "z", "nx", "ny", "nz", "seg_scene", "seg_object"]


@dataclass
class PlacementOutcome:
    """Verdict for one candidate pose; robustness stats only when valid."""

    pose: np.ndarray
    penetration_free: bool
    stable: bool
    min_robustness: float | None = None
    median_robustness: float | None = None
    wall_time: float | None = None
    degenerate: bool = False

    @property
    def valid(self):
        return self.penetration_free and self.stable


@dataclass
class PlacementRecord:
    scene_name: str
    augment: AugmentParams
    scene_cloud: np.ndarray    # (N_CLOUD, 9) f32
    object_cloud: np.ndarray   # (N_CLOUD, 8) f32
    pose: np.ndarray           # (9,) label


def validate_placement(scene, obj, pose, eps=EPS_CONTACT, with_stats=True,
                       stats_seed=0, workers=None, scene_contacts=None):
    """Check one placement; optionally attach a fresh robustness summary.

    ``scene_contacts`` optionally carries precomputed contacts among the
    scene bodies themselves, sparing repeated callers the rescan.
    """
    start = time.perf_counter()
    pose = np.asarray(pose, dtype=float)
    rotation_of(pose)
    placed = replace(obj, pose=pose)
    bodies = list(scene.bodies) + [placed]

    penetration_free = True
    own = []
    for other in scene.bodies:
        prox = classify_proximity(other, placed, eps=eps)
        if prox.kind is ProximityKind.PENETRATING:
            penetration_free = False
            break
        if prox.kind is ProximityKind.CONTACT:
            mu = min(other.mu, placed.mu)
            own.extend(Contact(other.id, placed.id, p, prox.normal, mu)
                       for p in prox.patch)

    stable = False
    # a contact-free body cannot balance gravity; skip the LP
    if penetration_free and own:
        if scene_contacts is None:
            scene_contacts = detect_contacts(scene.bodies, eps=eps)
        stable = equilibrium_feasible(bodies, scene_contacts + own)

    outcome = PlacementOutcome(pose=pose, penetration_free=penetration_free,
                               stable=stable)
    if outcome.valid and with_stats:
        rng = np.random.default_rng(stats_seed)
        # stats sample movable surfaces only; every press on the fixed
        # ground is unbounded and would pin the median at +inf
        movable = [b for b in bodies if not b.fixed]
        samples = sample_scene_surfaces(movable, N_CLOUD, rng)
        values, _ = robustness_field(bodies, samples, workers=workers)
        outcome.min_robustness = float(np.min(values))
        outcome.median_robustness = float(np.median(values))
    outcome.wall_time = time.perf_counter() - start
    return outcome


def _bottom_face_point(obj, rng):
    """Uniform point on the object's -z face, body frame, with its normal."""
    hx, hy, hz = np.asarray(obj.extents, dtype=float) / 2.0
    u = rng.uniform(-hx, hx)
    v = rng.uniform(-hy, hy)
    return np.array([u, v, -hz])


def propose_placement(scene_cloud, obj, rng):
    """One expert proposal: robustness-weighted scene point, mated bottom face."""
    weights = scene_cloud[:, 8]
    total = weights.sum()
    if total <= 0.0:
        probs = np.full(len(weights), 1.0 / len(weights))
    else:
        probs = weights / total
    i = rng.choice(len(scene_cloud), p=probs)
    p_s = scene_cloud[i, 0:3]
    n_s = scene_cloud[i, 3:6]
    p_o = _bottom_face_point(obj, rng)
    yaw = rng.uniform(0.0, 2.0 * np.pi)
    R = align_z_to(n_s) @ rot_z(yaw)
    t = p_s - R @ p_o
    return pose_of(R, t)


def sample_expert_placement(scene, obj, seed, budget=EXPERT_BUDGET,
                            scene_cloud=None, with_stats=True):
    """Draw robustness-guided proposals until one validates.

    ``scene_cloud`` is an optional precomputed featurized cloud for this
    scene; without it one is featurized from ``seed``. Raises Exhausted
    when the budget runs out.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    start = time.perf_counter()
    if scene_cloud is None:
        scene_cloud, _ = featurize(scene, obj, rng)
    scene_contacts = detect_contacts(scene.bodies)
    for _ in range(budget):
        pose = propose_placement(scene_cloud, obj, rng)
        outcome = validate_placement(scene, obj, pose, with_stats=False,
                                     scene_contacts=scene_contacts)
        if outcome.valid:
            if with_stats:
                outcome = validate_placement(scene, obj, pose, with_stats=True)
            outcome.wall_time = time.perf_counter() - start
            return outcome
    raise Exhausted(f"no valid placement in {budget} proposals")


def _shuffled(cloud, shuffle_seed):
    perm = np.random.default_rng(shuffle_seed).permutation(len(cloud))
    return cloud[perm]


def make_record(scene_name, base_scene, base_scene_cloud, object_cloud, obj,
                record_seed, budget=EXPERT_BUDGET):
    """Generate one dataset record: augment, transform the cloud, run the expert."""
    rng = np.random.default_rng(record_seed)
    params = draw_augment(rng)
    aug_scene, (R, t) = augment_scene(base_scene, params)
    cloud = _shuffled(transform_scene_cloud(base_scene_cloud, R, t),
                      params.shuffle_seed)
    outcome = sample_expert_placement(aug_scene, obj, rng, budget=budget,
                                      scene_cloud=cloud, with_stats=False)
    return PlacementRecord(scene_name=scene_name, augment=params,
                           scene_cloud=cloud.astype(np.float32),
                           object_cloud=object_cloud, pose=outcome.pose)


def _encode(arr):
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f4").tobytes()).decode("ascii")


def _decode(text, shape):
    raw = base64.b64decode(text.encode("ascii"), validate=True)
    expect = int(np.prod(shape)) * 4
    if len(raw) != expect:
        raise DataFormatError(f"cloud payload is {len(raw)} bytes, expected {expect}")
    return np.frombuffer(raw, dtype="<f4").reshape(shape)


def _record_line(rec):
    doc = {
        "scene": rec.scene_name,
        "augment": {"yaw": rec.augment.yaw,
                    "translation": list(rec.augment.translation),
                    "shuffle_seed": int(rec.augment.shuffle_seed)},
        "pose": [float(v) for v in rec.pose],
        "scene_cloud": _encode(rec.scene_cloud),
    }
    return json.dumps(doc, separators=(",", ":"))


def _task(args):
    name, dims, cloud, object_cloud, obj, rec_seed, budget = args
    base = scenes_mod.build_scene(name, dims)
    return _record_line(make_record(name, base, cloud, object_cloud, obj,
                                    rec_seed, budget=budget))


def generate_dataset(scene_names, n_per_scene, seed, out_path, obj=None,
                     budget=EXPERT_BUDGET, workers=None, dims=None):
    """Write a JSONL dataset of expert placements; returns records written.

    Deterministic per seed: each record runs on its own stream keyed by
    (seed, scene index, record index), so worker count never changes bytes.
    The shared object cloud lives in the header; records carry only their
    scene cloud and label.
    """
    if n_per_scene < 1:
        raise ValueError("n_per_scene must be >= 1")
    if obj is None:
        obj = scenes_mod.default_object()
    dims = dims or {}

    base_scenes = {}
    base_clouds = {}
    object_cloud = None
    for si, name in enumerate(scene_names):
        base_scenes[name] = scenes_mod.build_scene(name, dims.get(name))
        sc, oc = featurize(base_scenes[name], obj, seed=[seed, si])
        base_clouds[name] = sc
        if object_cloud is None:
            object_cloud = oc.astype(np.float32)

    header = {
        "format": DATASET_MAGIC,
        "version": DATASET_VERSION,
        "seed": int(seed),
        "points_per_scene": N_CLOUD,
        "points_per_object": N_CLOUD,
        "scene_fields": SCENE_FIELDS,
        "object_fields": OBJECT_FIELDS,
        "dtype": "<f4",
        "object": {"extents": [float(v) for v in obj.extents],
                   "mass": float(obj.mass), "mu": float(obj.mu)},
        "scenes": {name: {k: float(v) for k, v in sorted(base_scenes[name].dims.items())}
                   for name in scene_names},
        "object_cloud": _encode(object_cloud),
    }

    tasks = []
    for si, name in enumerate(scene_names):
        for ri in range(n_per_scene):
            tasks.append((name, base_scenes[name].dims, base_clouds[name],
                          object_cloud, obj, [seed, si, ri], budget))

    count = 0
    with open(out_path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        if workers:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for line in pool.map(_task, tasks, chunksize=4):
                    fh.write(line + "\n")
                    count += 1
        else:
            for args in tasks:
                try:
                    fh.write(_task(args) + "\n")
                except Exhausted as e:
                    raise Exhausted(f"scene {args[0]!r} record {args[5][2]}: {e}") from e
                count += 1
    return count


def read_dataset(path):
    """Yield (header, record) pairs; header repeats for convenience."""
    with open(path, "r", encoding="ascii") as fh:
        first = fh.readline()
        if not first:
            raise DataFormatError("empty dataset file")
        try:
            header = json.loads(first)
        except json.JSONDecodeError as e:
            raise DataFormatError(f"bad header line: {e}") from e
        if header.get("format") != DATASET_MAGIC:
            raise DataFormatError("not a stabledrop dataset")
        if header.get("version") != DATASET_VERSION:
            raise DataFormatError(f"unsupported dataset version {header.get('version')!r}")
        n = header["points_per_scene"]
        object_cloud = _decode(header["object_cloud"],
                               (header["points_per_object"], len(header["object_fields"])))
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataFormatError(f"line {lineno}: {e}") from e
            aug = doc["augment"]
            rec = PlacementRecord(
                scene_name=doc["scene"],
                augment=AugmentParams(yaw=aug["yaw"],
                                      translation=tuple(aug["translation"]),
                                      shuffle_seed=int(aug["shuffle_seed"])),
                scene_cloud=_decode(doc["scene_cloud"], (n, len(header["scene_fields"]))),
                object_cloud=object_cloud,
                pose=np.array(doc["pose"], dtype=float),
            )
            yield header, rec


def load_dataset(path):
    """Read a dataset fully: (header, [records])."""
    header = None
    records = []
    for header, rec in read_dataset(path):
        records.append(rec)
    if header is None:
        raise DataFormatError("dataset has no records")
    return header, records


def rebuild_scene(header, rec):
    """Reconstruct the augmented scene a record's label refers to."""
    base = scenes_mod.build_scene(rec.scene_name, header["scenes"][rec.scene_name])
    scene, _ = augment_scene(base, rec.augment)
    return scene


def record_object(header):
    """The placed object described by a dataset header."""
    spec = header["object"]
    from .geom import make_cuboid
    return make_cuboid("object", spec["extents"], mass=spec["mass"],
                       mu=spec["mu"], pose=identity_pose())
