"""Diffusion prior over placement poses.

Forward process: squared-cosine noise schedule applied componentwise to the
9-vector pose (translation + two rotation columns). The model predicts the
clean pose directly: a permutation-invariant point encoder (shared per-point
map, coordinatewise max pool, 1024-dim latent) conditions a residual MLP
denoiser on the observation built at the current noisy pose. Observation
clouds are centered on their context centroid; the pose channel stays in
world coordinates.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .cloud import K_NEIGHBORS, M_CONTEXT, N_CLOUD, encoder_input, local_context
from .errors import (CorruptPayload, DataFormatError, DegenerateRotation,
                     MissingCheckpoint, NonFiniteLoss, VersionMismatch)
from .nn import (AdamW, cosine_lr, linear, linear_bwd, linear_params, relu,
                 relu_bwd, time_embedding, zero_grads)

POSE_DIM = 9
TIME_DIM = 64
LATENT_DIM = 1024
ENC_WIDTHS = (5, 64, 128, 256)
DEN_WIDTHS = (POSE_DIM + TIME_DIM + LATENT_DIM, 512, 256, 512, POSE_DIM)

CKPT_MAGIC = b"SDCKPT01"
CKPT_VERSION = 1


# ---------------------------------------------------------------------------
# schedule

@dataclass
class Schedule:
    """Squared-cosine noise schedule; index 0 is the clean state."""

    t_train: int
    alpha_bar: np.ndarray   # (T+1,), alpha_bar[0] = 1
    alpha: np.ndarray       # (T+1,), alpha[0] = 1
    beta: np.ndarray        # (T+1,), beta[0] = 0


def make_schedule(t_train, s=0.008):
    if t_train < 2:
        raise ValueError("need at least 2 noising steps")
    ts = np.arange(t_train + 1) / t_train
    f = np.cos((ts + s) / (1.0 + s) * (np.pi / 2.0)) ** 2
    raw = f / f[0]
    beta = np.clip(1.0 - raw[1:] / raw[:-1], 0.0, 0.999)
    alpha = 1.0 - beta
    abar = np.concatenate([[1.0], np.cumprod(alpha)])
    return Schedule(t_train=t_train,
                    alpha_bar=abar,
                    alpha=np.concatenate([[1.0], alpha]),
                    beta=np.concatenate([[0.0], beta]))


def q_sample(schedule, pose0, t, noise):
    """Closed-form forward noising to step t."""
    ab = schedule.alpha_bar[t]
    return np.sqrt(ab) * np.asarray(pose0, dtype=float) + np.sqrt(1.0 - ab) * noise


@dataclass
class InferenceSchedule:
    """Respaced reverse chain: posterior coefficients per chain position.

    Position i in [1, n] denoises from training step steps[i-1] to the
    previous retained step; coef arrays are 1-indexed alongside.
    """

    steps: np.ndarray     # ascending retained training steps, last = T
    coef_x0: np.ndarray   # (n+1,)
    coef_xt: np.ndarray   # (n+1,)
    sigma: np.ndarray     # (n+1,)


def respace(schedule, t_infer):
    t = schedule.t_train
    if not (1 <= t_infer <= t):
        raise ValueError(f"t_infer must be in [1, {t}]")
    if t % t_infer != 0:
        raise ValueError(f"t_infer must divide t_train ({t})")
    stride = t // t_infer
    steps = np.arange(1, t_infer + 1) * stride
    coef_x0 = np.zeros(t_infer + 1)
    coef_xt = np.zeros(t_infer + 1)
    sigma = np.zeros(t_infer + 1)
    for i in range(1, t_infer + 1):
        cur = steps[i - 1]
        prev = steps[i - 2] if i >= 2 else 0
        ab_cur = schedule.alpha_bar[cur]
        ab_prev = schedule.alpha_bar[prev]
        a = ab_cur / ab_prev
        b = 1.0 - a
        coef_x0[i] = np.sqrt(ab_prev) * b / (1.0 - ab_cur)
        coef_xt[i] = np.sqrt(a) * (1.0 - ab_prev) / (1.0 - ab_cur)
        sigma[i] = np.sqrt(b * (1.0 - ab_prev) / (1.0 - ab_cur))
    return InferenceSchedule(steps=steps, coef_x0=coef_x0, coef_xt=coef_xt,
                             sigma=sigma)


# ---------------------------------------------------------------------------
# model

_LAYERS = [("enc1", ENC_WIDTHS[0], ENC_WIDTHS[1]),
           ("enc2", ENC_WIDTHS[1], ENC_WIDTHS[2]),
           ("enc3", ENC_WIDTHS[2], ENC_WIDTHS[3]),
           ("enc4", ENC_WIDTHS[3], LATENT_DIM),
           ("den1", DEN_WIDTHS[0], DEN_WIDTHS[1]),
           ("den2", DEN_WIDTHS[1], DEN_WIDTHS[2]),
           ("den3", DEN_WIDTHS[2], DEN_WIDTHS[3]),
           ("den4", DEN_WIDTHS[3], DEN_WIDTHS[4])]


def init_params(seed, dtype=np.float32):
    rng = np.random.default_rng(seed)
    params = {}
    for name, n_in, n_out in _LAYERS:
        W, b = linear_params(rng, n_in, n_out, dtype=dtype)
        params[f"{name}.W"] = W
        params[f"{name}.b"] = b
    return params


def encode_batch(x, params, cache=None):
    """Latents for stacked point sets x: (B, P, 5) -> (B, LATENT_DIM)."""
    B, P, _ = x.shape
    flat = x.reshape(B * P, -1)
    h1 = relu(linear(params, "enc1", flat))
    h2 = relu(linear(params, "enc2", h1))
    h3 = relu(linear(params, "enc3", h2))
    h3r = h3.reshape(B, P, -1)
    pooled = h3r.max(axis=1)
    lat = linear(params, "enc4", pooled)
    if cache is not None:
        cache["enc"] = (flat, h1, h2, h3, h3r.argmax(axis=1), pooled, (B, P))
    return lat


def encode_batch_bwd(dlat, params, grads, cache):
    flat, h1, h2, h3, arg, pooled, (B, P) = cache["enc"]
    dpooled = linear_bwd(params, grads, "enc4", pooled, dlat)
    dh3r = np.zeros((B, P, h3.shape[1]), dtype=h3.dtype)
    np.put_along_axis(dh3r, arg[:, None, :], dpooled[:, None, :], axis=1)
    dh3 = relu_bwd(h3, dh3r.reshape(B * P, -1))
    dh2 = relu_bwd(h2, linear_bwd(params, grads, "enc3", h2, dh3))
    dh1 = relu_bwd(h1, linear_bwd(params, grads, "enc2", h1, dh2))
    linear_bwd(params, grads, "enc1", flat, dh1)


def encode(obs_points, params):
    """Latent for a single observation's encoder input (P, 5)."""
    return encode_batch(obs_points[None], params)[0]


def denoise_batch(pose, taus, latent, params, cache=None):
    """x0 predictions: (B, 9) poses, (B,) training-step indices, latents."""
    temb = time_embedding(taus, dim=TIME_DIM, dtype=latent.dtype)
    z = np.concatenate([pose, temb, latent], axis=1)
    a1 = relu(linear(params, "den1", z))
    a2 = relu(linear(params, "den2", a1))
    a3 = relu(linear(params, "den3", a2) + a1)
    out = linear(params, "den4", a3)
    if cache is not None:
        cache["den"] = (z, a1, a2, a3)
    return out


def denoise_batch_bwd(dout, params, grads, cache):
    """Returns gradient w.r.t. the latent."""
    z, a1, a2, a3 = cache["den"]
    da3 = linear_bwd(params, grads, "den4", a3, dout)
    ds = relu_bwd(a3, da3)
    da2 = relu_bwd(a2, linear_bwd(params, grads, "den3", a2, ds))
    da1 = linear_bwd(params, grads, "den2", a1, da2) + ds
    dz = linear_bwd(params, grads, "den1", z, relu_bwd(a1, da1))
    return dz[:, POSE_DIM + TIME_DIM:]


def denoise(pose, t, latent, params):
    return denoise_batch(np.asarray(pose, dtype=latent.dtype)[None],
                         np.array([t]), latent[None], params)[0]


def predict_x0_batch(params, scene_cloud, object_cloud, poses, taus,
                     k=K_NEIGHBORS, m=M_CONTEXT):
    """World-frame x0 predictions for a batch of world-frame noisy poses."""
    B = len(poses)
    dtype = params["enc1.W"].dtype
    enc_in = np.empty((B, m + len(object_cloud), ENC_WIDTHS[0]), dtype=dtype)
    for i, pose in enumerate(poses):
        obs = local_context(scene_cloud, object_cloud, pose, k=k, m=m)
        enc_in[i] = encoder_input(obs).astype(dtype)
    lat = encode_batch(enc_in, params)
    poses = np.asarray(poses, dtype=dtype)
    out = denoise_batch(poses, np.asarray(taus), lat, params)
    return out.astype(float)


def predict_x0(params, scene_cloud, object_cloud, pose, tau,
               k=K_NEIGHBORS, m=M_CONTEXT):
    return predict_x0_batch(params, scene_cloud, object_cloud,
                            np.asarray(pose, dtype=float)[None], [tau],
                            k=k, m=m)[0]


# ---------------------------------------------------------------------------
# training

@dataclass
class TrainConfig:
    epochs: int = 300
    batch_size: int = 32
    lr: float = 1e-3
    weight_decay: float = 1e-4
    seed: int = 0
    t_train: int = 100
    leave_out: str | None = None
    k: int = K_NEIGHBORS
    m: int = M_CONTEXT
    loss_csv: str | None = None


@dataclass
class Checkpoint:
    params: dict
    moment_m: dict
    moment_v: dict
    meta: dict
    losses: list = field(default_factory=list)


def _dataset_records(dataset):
    """Accept a path or a preloaded (header, records) pair."""
    from .planner import load_dataset
    if isinstance(dataset, (str, os.PathLike)):
        header, records = load_dataset(dataset)
        digest = hashlib.sha256(open(dataset, "rb").read()).hexdigest()
        return header, records, digest
    header, records = dataset
    h = hashlib.sha256()
    for r in records:
        h.update(r.scene_cloud.tobytes())
        h.update(np.asarray(r.pose).tobytes())
    return header, records, h.hexdigest()


def train(dataset, config=None):
    """Fit the prior on expert placements; returns a Checkpoint.

    Per example a uniform step t and fresh noise produce the noisy pose;
    the conditioning observation is rebuilt at that pose, and the loss is
    the mean squared error of the clean-pose prediction. Deterministic
    per seed.
    """
    config = config or TrainConfig()
    header, records, digest = _dataset_records(dataset)
    if config.leave_out is not None:
        records = [r for r in records if r.scene_name != config.leave_out]
    if not records:
        raise DataFormatError("no training records after filtering")

    clouds = [(r.scene_cloud.astype(float), r.object_cloud.astype(float),
               np.asarray(r.pose, dtype=float)) for r in records]
    sched = make_schedule(config.t_train)
    params = init_params(config.seed)
    dtype = params["enc1.W"].dtype
    opt = AdamW(params, lr=config.lr, weight_decay=config.weight_decay)
    rng = np.random.default_rng([config.seed, 1])

    n = len(records)
    steps_per_epoch = math.ceil(n / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    n_pts = config.m + N_CLOUD
    losses = []
    step = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            B = len(idx)
            enc_in = np.empty((B, n_pts, ENC_WIDTHS[0]), dtype=dtype)
            noisy = np.empty((B, POSE_DIM))
            target = np.empty((B, POSE_DIM))
            taus = np.empty(B, dtype=int)
            for bi, ri in enumerate(idx):
                sc, oc, x0 = clouds[ri]
                while True:
                    t = int(rng.integers(1, config.t_train + 1))
                    noise = rng.standard_normal(POSE_DIM)
                    xt = q_sample(sched, x0, t, noise)
                    try:
                        obs = local_context(sc, oc, xt, k=config.k, m=config.m)
                    except DegenerateRotation:
                        continue
                    break
                enc_in[bi] = encoder_input(obs).astype(dtype)
                noisy[bi] = xt
                target[bi] = x0
                taus[bi] = t

            cache = {}
            lat = encode_batch(enc_in, params, cache)
            pred = denoise_batch(noisy.astype(dtype), taus, lat, params, cache)
            diff = pred.astype(float) - target
            loss = float(np.mean(diff ** 2))
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"step {step}/{total_steps}: loss={loss}")
            grads = zero_grads(params)
            dpred = (2.0 / diff.size) * diff
            dlat = denoise_batch_bwd(dpred.astype(dtype), params, grads, cache)
            encode_batch_bwd(dlat, params, grads, cache)
            opt.step(params, grads, lr=cosine_lr(config.lr, step, total_steps))
            losses.append((step, loss))
            step += 1

    if config.loss_csv:
        with open(config.loss_csv, "w", encoding="ascii") as fh:
            fh.write("step,loss\n")
            for s, l in losses:
                fh.write(f"{s},{l!r}\n")

    meta = {"seed": config.seed, "epochs": config.epochs,
            "t_train": config.t_train, "k": config.k, "m": config.m,
            "batch_size": config.batch_size, "lr": config.lr,
            "weight_decay": config.weight_decay,
            "leave_out": config.leave_out, "dataset_hash": digest,
            "records": n,
            "scenes_seen": sorted({r.scene_name for r in records}),
            "final_loss": losses[-1][1]}
    return Checkpoint(params=params, moment_m=opt.m, moment_v=opt.v,
                      meta=meta, losses=losses)


# ---------------------------------------------------------------------------
# checkpoints

def save_checkpoint(ckpt, path):
    names = list(ckpt.params)
    header = {"version": CKPT_VERSION,
              "dtype": "<f4",
              "tensors": [[n, list(ckpt.params[n].shape)] for n in names],
              "moments": bool(ckpt.moment_m),
              "meta": ckpt.meta}
    blob = json.dumps(header, separators=(",", ":")).encode("ascii")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(ckpt.params[n], dtype="<f4").tobytes())
        if ckpt.moment_m:
            for n in names:
                fh.write(np.ascontiguousarray(ckpt.moment_m[n], dtype="<f4").tobytes())
            for n in names:
                fh.write(np.ascontiguousarray(ckpt.moment_v[n], dtype="<f4").tobytes())


def load_checkpoint(path):
    if not os.path.exists(path):
        raise MissingCheckpoint(f"no checkpoint at {path}")
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != CKPT_MAGIC:
        raise VersionMismatch("not a stabledrop checkpoint")
    if len(data) < 12:
        raise CorruptPayload("truncated header")
    (hlen,) = struct.unpack("<I", data[8:12])
    if len(data) < 12 + hlen:
        raise CorruptPayload("truncated header")
    try:
        header = json.loads(data[12:12 + hlen].decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptPayload(f"unreadable header: {e}") from e
    if header.get("version") != CKPT_VERSION:
        raise VersionMismatch(f"checkpoint version {header.get('version')!r}, "
                              f"expected {CKPT_VERSION}")
    sizes = [int(np.prod(shape)) for _, shape in header["tensors"]]
    copies = 3 if header["moments"] else 1
    expect = sum(sizes) * 4 * copies
    payload = data[12 + hlen:]
    if len(payload) != expect:
        raise CorruptPayload(f"payload is {len(payload)} bytes, expected {expect}")

    arrays = []
    off = 0
    for (name, shape), size in zip(header["tensors"] * copies,
                                   sizes * copies):
        arrays.append(np.frombuffer(payload, dtype="<f4", count=size,
                                    offset=off).reshape(shape).copy())
        off += size * 4
    k = len(sizes)
    names = [n for n, _ in header["tensors"]]
    params = dict(zip(names, arrays[:k]))
    if header["moments"]:
        mm = dict(zip(names, arrays[k:2 * k]))
        mv = dict(zip(names, arrays[2 * k:]))
    else:
        mm, mv = {}, {}
    return Checkpoint(params=params, moment_m=mm, moment_v=mv,
                      meta=header["meta"])
