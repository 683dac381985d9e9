"""Point-cloud observations: featurization and KNN local context.

Scene points carry 9 features: position (3), outward normal (3), one-hot
segmentation (1, 0), and normalized robustness. Object points carry 8:
body-frame position, normal, one-hot (0, 1). The local context of a posed
object is the union of the k nearest scene points of every object point,
ordered by distance to the object, truncated or padded to M entries, and
centered (with the object cloud) on its position centroid.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .geom import concat_samples, identity_pose, rotation_of, sample_surface, surface_area
from .statics import normalize_robustness, robustness_field

N_CLOUD = 1024           # points per scene cloud and per object cloud
K_NEIGHBORS = 8
M_CONTEXT = 512
SCENE_DIM = 9
OBJECT_DIM = 8


@dataclass
class Observation:
    """Centered conditioning input for one noisy pose."""

    scene: np.ndarray         # (M, 9), positions centered
    obj: np.ndarray           # (n_obj, 8), posed then centered
    centroid: np.ndarray      # (3,) world centroid removed from positions


def sample_scene_surfaces(bodies, n, rng):
    """Area-weighted joint surface sampling across all bodies."""
    areas = np.array([surface_area(b) for b in bodies])
    counts = rng.multinomial(n, areas / areas.sum())
    parts = [sample_surface(b, int(c), rng) for b, c in zip(bodies, counts) if c > 0]
    return concat_samples(parts)


def featurize(scene, obj, seed, n=N_CLOUD, n_gen=None, workers=None):
    """Sample and feature both clouds for a scene and an object.

    Returns ``(scene_cloud (n, 9), object_cloud (n, 8))``. Scene robustness
    features come from a fresh inward-press robustness field, normalized to
    [0, 1]; fixed-ground points get exactly 1.0.
    """
    from .statics import N_GENERATORS
    if n_gen is None:
        n_gen = N_GENERATORS
    rng = np.random.default_rng(seed)
    s = sample_scene_surfaces(scene.bodies, n, rng)
    values, _ = robustness_field(scene.bodies, s, n_gen=n_gen, workers=workers)
    feat = normalize_robustness(values)
    scene_cloud = np.zeros((n, SCENE_DIM))
    scene_cloud[:, 0:3] = s.points
    scene_cloud[:, 3:6] = s.normals
    scene_cloud[:, 6] = 1.0
    scene_cloud[:, 8] = feat

    body_frame = replace(obj, pose=identity_pose())
    o = sample_surface(body_frame, n, rng)
    object_cloud = np.zeros((n, OBJECT_DIM))
    object_cloud[:, 0:3] = o.points
    object_cloud[:, 3:6] = o.normals
    object_cloud[:, 7] = 1.0
    return scene_cloud, object_cloud


def transform_scene_cloud(scene_cloud, R, t):
    """Map a scene cloud through a world transform; features ride along."""
    out = scene_cloud.copy()
    out[:, 0:3] = scene_cloud[:, 0:3] @ np.asarray(R).T + np.asarray(t)
    out[:, 3:6] = scene_cloud[:, 3:6] @ np.asarray(R).T
    return out


def local_context(scene_cloud, object_cloud, pose, k=K_NEIGHBORS, m=M_CONTEXT):
    """Build the centered Observation for an object at a (possibly noisy) pose.

    The pose's rotation block is orthogonalized before posing the object.
    """
    R = rotation_of(pose)
    t = np.asarray(pose, dtype=float)[0:3]
    obj_pos = object_cloud[:, 0:3] @ R.T + t
    obj_nrm = object_cloud[:, 3:6] @ R.T

    spos = scene_cloud[:, 0:3]
    d2 = obj_pos @ spos.T
    d2 *= -2.0
    d2 += np.sum(obj_pos**2, axis=1)[:, None]
    d2 += np.sum(spos**2, axis=1)[None, :]
    k_eff = min(k, spos.shape[0])
    near = np.argpartition(d2, k_eff - 1, axis=1)[:, :k_eff] if k_eff > 1 \
        else np.argmin(d2, axis=1)[:, None]
    union = np.unique(near)
    dist_to_obj = d2.min(axis=0)[union]
    order = np.lexsort((union, dist_to_obj))
    chosen = union[order]
    idx = chosen[np.arange(m) % len(chosen)] if len(chosen) < m else chosen[:m]

    sel = scene_cloud[idx].copy()
    centroid = sel[:, 0:3].mean(axis=0)
    sel[:, 0:3] -= centroid

    obj_out = object_cloud.copy()
    obj_out[:, 0:3] = obj_pos - centroid
    obj_out[:, 3:6] = obj_nrm
    return Observation(scene=sel, obj=obj_out, centroid=centroid)


def encoder_input(obs):
    """Stack positions and one-hots of both clouds: ``(M + n_obj, 5)``.

    Only these five channels feed the network; normals and robustness
    features stay on the observation for guidance and inspection.
    """
    s = np.concatenate([obs.scene[:, 0:3], obs.scene[:, 6:8]], axis=1)
    o = np.concatenate([obs.obj[:, 0:3], obs.obj[:, 6:8]], axis=1)
    return np.concatenate([s, o], axis=0)
