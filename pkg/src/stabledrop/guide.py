"""Stability-guided reverse sampling.

The stability loss rewards poses whose surface hugs high-robustness scene
points with opposed normals; its analytic gradient, pulled back through
the Gram-Schmidt projection, nudges the clean-pose prediction between
posterior steps. Guidance runs only at inference and never touches the
trained model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .cloud import K_NEIGHBORS, M_CONTEXT, featurize
from .errors import DegenerateRotation
from .geom import EPS_CONTACT, cross3, gram_schmidt_6d, rotation_of
from .planner import PlacementOutcome, validate_placement
from .score import POSE_DIM, make_schedule, predict_x0, respace
from .statics import detect_contacts

GAMMA = 0.1
GUIDE_INTERVAL = 2
D_MAX = 0.05
T_INFER = 50
BATCH = 10
# below this separation a pair's distance direction is undefined
EPS_PAIR = 1e-9


@dataclass
class GuidanceConfig:
    gamma: float = GAMMA
    n: int = GUIDE_INTERVAL
    d_max: float = D_MAX
    t_infer: int = T_INFER
    batch: int = BATCH

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.n < 1:
            raise ValueError("guidance interval must be >= 1")
        if self.d_max <= 0:
            raise ValueError("d_max must be positive")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")


def stability_loss(pose, scene_cloud, object_cloud, d_max=D_MAX):
    """Negative contact-affinity of a pose; 0 when nothing attracts.

    Every scene/object point pair contributes |n_s . R n_o| weighted by
    exp(-dist / d_max) and the scene point's normalized robustness; the
    sum is averaged over scene points and negated, so tight opposed
    contact at high-robustness spots drives the value down. Never
    positive.
    """
    pose = np.asarray(pose, dtype=float)
    scene_cloud = np.asarray(scene_cloud, dtype=float)
    object_cloud = np.asarray(object_cloud, dtype=float)
    R = rotation_of(pose)
    ps, ns, rhat = scene_cloud[:, 0:3], scene_cloud[:, 3:6], scene_cloud[:, 8]
    q = object_cloud[:, 0:3] @ R.T + pose[0:3]
    m = object_cloud[:, 3:6] @ R.T
    w = np.abs(ns @ m.T)
    w *= np.exp(cdist(ps, q) / -d_max)
    w *= rhat[:, None]
    return -float(w.sum()) / len(ps)


def stability_grad(pose, scene_cloud, object_cloud, d_max=D_MAX):
    """Analytic d(stability_loss)/d(pose), all nine components.

    Differentiates through both the world transform of the object points
    and the Gram-Schmidt map from the six rotation entries. Pairs closer
    than 1e-9 m get a zero distance direction (subgradient choice); their
    normal-alignment term still flows.
    """
    pose = np.asarray(pose, dtype=float)
    scene_cloud = np.asarray(scene_cloud, dtype=float)
    object_cloud = np.asarray(object_cloud, dtype=float)
    R = rotation_of(pose)
    ps, ns, rhat = scene_cloud[:, 0:3], scene_cloud[:, 3:6], scene_cloud[:, 8]
    o, nu = object_cloud[:, 0:3], object_cloud[:, 3:6]
    n_s = len(ps)
    q = o @ R.T + pose[0:3]
    m = nu @ R.T
    dot = ns @ m.T
    d = cdist(ps, q)
    e = np.exp(d / -d_max)

    # distance term: dJ/dd_ij = |dot| rhat e / (S d_max), direction (q-p)/d
    c = np.abs(dot) * e * rhat[:, None]
    c /= n_s * d_max
    np.divide(c, d, out=c, where=d > EPS_PAIR)
    c[d <= EPS_PAIR] = 0.0
    dq = q * c.sum(axis=0)[:, None] - c.T @ ps
    dt = dq.sum(axis=0)

    # alignment term: dJ/dm_j = -(1/S) sum_i rhat_i e_ij sign_ij n_i
    dm = ((np.sign(dot) * e * rhat[:, None]) / -n_s).T @ ns
    dR = dq.T @ o + dm.T @ nu
    return np.concatenate((dt, _pullback_6d(pose[3:9], dR)))


def _pullback_6d(r6, dR):
    """Chain a gradient w.r.t. the rotation matrix back to the raw 6."""
    a1, a2 = r6[0:3], r6[3:6]
    n1 = np.sqrt(a1 @ a1)
    c1 = a1 / n1
    proj = c1 @ a2
    u2 = a2 - proj * c1
    n2 = np.sqrt(u2 @ u2)
    c2 = u2 / n2
    g1, g2, g3 = dR[:, 0].copy(), dR[:, 1].copy(), dR[:, 2]
    # third column is c1 x c2
    g1 += cross3(c2, g3)
    g2 += cross3(g3, c1)
    du2 = (g2 - (c2 @ g2) * c2) / n2
    da2 = du2 - (c1 @ du2) * c1
    g1 -= (c1 @ du2) * a2 + proj * du2
    da1 = (g1 - (c1 @ g1) * c1) / n1
    return np.concatenate((da1, da2))


def _run_chain(params, inf, scene_cloud, object_cloud, config, rng, k, m,
               trace=None):
    """One reverse chain; returns (pose, degenerate_flag)."""
    x = None
    for _ in range(2):
        x = rng.standard_normal(POSE_DIM)
        try:
            for i in range(config.t_infer, 0, -1):
                R = gram_schmidt_6d(x[3:9])
                x[3:6], x[6:9] = R[:, 0], R[:, 1]
                x0h = predict_x0(params, scene_cloud, object_cloud, x,
                                 inf.steps[i - 1], k=k, m=m)
                if config.gamma > 0.0 and i % config.n == 0:
                    x0h -= config.gamma * stability_grad(
                        x, scene_cloud, object_cloud, config.d_max)
                x = inf.coef_x0[i] * x0h + inf.coef_xt[i] * x
                if i > 1:
                    x += inf.sigma[i] * rng.standard_normal(POSE_DIM)
                if trace is not None:
                    trace.append(x.copy())
            R = gram_schmidt_6d(x[3:9])
            x[3:6], x[6:9] = R[:, 0], R[:, 1]
            return x, False
        except DegenerateRotation:
            continue
    return x, True


def sample_placements(checkpoint, scene, obj, config=None, seed=0,
                      clouds=None, eps=EPS_CONTACT):
    """Reverse-sample a batch of placements and validate each one.

    Each chain owns the rng stream (seed, chain index), starts from
    standard normal noise, rebuilds its observation at every step, and on
    every n-th step with gamma > 0 shifts the clean-pose prediction down
    the stability-loss gradient evaluated at the current pose. A chain
    that hits a degenerate rotation restarts once with fresh noise, then
    comes back flagged instead of validated.

    ``clouds`` optionally carries a precomputed (scene cloud, object
    cloud) pair; by default both are featurized here with ``seed``.
    ``eps`` is the contact tolerance handed to validation.
    """
    config = config or GuidanceConfig()
    t_train = int(checkpoint.meta["t_train"])
    if config.t_infer > t_train:
        raise ValueError(
            f"t_infer {config.t_infer} exceeds trained steps {t_train}")
    inf = respace(make_schedule(t_train), config.t_infer)
    key = list(seed) if isinstance(seed, (list, tuple)) else [seed]
    if clouds is None:
        clouds = featurize(scene, obj, key)
    scene_cloud = np.asarray(clouds[0], dtype=float)
    object_cloud = np.asarray(clouds[1], dtype=float)
    k = int(checkpoint.meta.get("k", K_NEIGHBORS))
    m = int(checkpoint.meta.get("m", M_CONTEXT))
    scene_contacts = detect_contacts(scene.bodies, eps=eps)
    outcomes = []
    for chain in range(config.batch):
        rng = np.random.default_rng(key + [chain])
        pose, bad = _run_chain(checkpoint.params, inf, scene_cloud,
                               object_cloud, config, rng, k, m)
        if bad:
            outcomes.append(PlacementOutcome(
                pose=pose, penetration_free=False, stable=False,
                degenerate=True))
        else:
            outcomes.append(validate_placement(
                scene, obj, pose, eps=eps, with_stats=False,
                scene_contacts=scene_contacts))
    return outcomes
