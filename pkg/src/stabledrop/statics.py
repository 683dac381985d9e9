"""Rigid-body statics: contact detection, equilibrium feasibility, robustness.

Equilibrium is posed glue-free: each contact transmits a force inside a
linearized Coulomb cone (a pyramid of ``N_GENERATORS`` nonnegative generator
multipliers, an inner approximation), and every non-fixed body must balance
forces and torques about its center of mass under gravity plus any external
load. Robustness at a surface point is the largest magnitude of an inward
external force that still admits equilibrium; it is computed as an LP whose
unboundedness certifies an infinite capacity.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import simplex
from .errors import LpNumericalFailure, PenetratingScene, PointOffSurface
from .geom import (EPS_CONTACT, ProximityKind, classify_proximity, cross3,
                   cross_rows, rotation_of)

GRAVITY = 9.81            # m/s^2, acting along -z
MU_DEFAULT = 0.5
N_GENERATORS = 8          # friction pyramid edges
R0 = 10.0                 # robustness normalization scale (N)
SURFACE_TOL = 1e-6        # how close a query point must be to a surface
INF_CUTOFF = 1e9          # optima beyond this are reported as unbounded


@dataclass
class Contact:
    """A single contact point transmitting force from body_a into body_b."""

    body_a: str
    body_b: str
    point: np.ndarray     # world
    normal: np.ndarray    # unit, a -> b
    mu: float


def detect_contacts(bodies, eps=EPS_CONTACT):
    """All touching contact points between pairs of bodies.

    Pairs are visited in list order; patches are flattened into per-point
    contacts with the shared patch normal and the pairwise minimum friction
    coefficient.

    Raises:
        PenetratingScene: if any pair overlaps deeper than ``eps``.
    """
    contacts = []
    for i in range(len(bodies)):
        for j in range(i + 1, len(bodies)):
            a, b = bodies[i], bodies[j]
            if a.fixed and b.fixed:
                continue
            prox = classify_proximity(a, b, eps=eps)
            if prox.kind is ProximityKind.PENETRATING:
                raise PenetratingScene(
                    f"{a.id} and {b.id} overlap by {-prox.distance:.6f} m")
            if prox.kind is ProximityKind.CONTACT:
                mu = min(a.mu, b.mu)
                for p in prox.patch:
                    contacts.append(Contact(a.id, b.id, p, prox.normal, mu))
    return contacts


def tangent_basis(n):
    """Deterministic orthonormal tangent pair for a unit normal."""
    n = np.asarray(n, dtype=float)
    e = np.array([1.0, 0.0, 0.0]) if abs(n[2]) >= 0.9 else np.array([0.0, 0.0, 1.0])
    t1 = cross3(n, e)
    t1 = t1 / np.linalg.norm(t1)
    t2 = cross3(n, t1)
    return t1, t2


def friction_generators(normal, mu, n_gen=N_GENERATORS):
    """Unit generators of the linearized friction cone at a contact.

    Every generator satisfies ``g . n = 1 / sqrt(1 + mu^2)``; a frictionless
    contact collapses to the single normal direction.
    """
    n = np.asarray(normal, dtype=float)
    if mu < 1e-12:
        return n[None, :]
    t1, t2 = tangent_basis(n)
    k = np.arange(n_gen)
    ang = 2.0 * np.pi * k / n_gen
    tang = np.outer(np.cos(ang), t1) + np.outer(np.sin(ang), t2)
    gens = (n[None, :] + mu * tang) / np.sqrt(1.0 + mu * mu)
    return gens


@dataclass
class EquilibriumProblem:
    """Assembled force/torque balance ``A_contact lam = b`` for free bodies."""

    A: np.ndarray                 # (6 * n_free, K * n_gen)
    b: np.ndarray                 # (6 * n_free,)
    row_offset: dict              # body id -> row index of its 6-row block
    coms: dict                    # body id -> world com


def build_equilibrium(bodies, contacts, n_gen=N_GENERATORS):
    """Assemble the contact-force balance system for the non-fixed bodies."""
    free = [b for b in bodies if not b.fixed]
    row_offset = {b.id: 6 * i for i, b in enumerate(free)}
    coms = {b.id: b.com for b in bodies}
    nrows = 6 * len(free)

    cols = []
    for c in contacts:
        gens = friction_generators(c.normal, c.mu, n_gen)
        block = np.zeros((nrows, gens.shape[0]))
        for body_id, sign in ((c.body_b, 1.0), (c.body_a, -1.0)):
            if body_id not in row_offset:
                continue
            r = row_offset[body_id]
            arm = c.point - coms[body_id]
            block[r:r + 3] += sign * gens.T
            block[r + 3:r + 6] += sign * cross_rows(arm, gens).T
        cols.append(block)
    A = np.hstack(cols) if cols else np.zeros((nrows, 0))

    b = np.zeros(nrows)
    for body in free:
        b[row_offset[body.id] + 2] = body.mass * GRAVITY  # -(-mg) on the RHS
    return EquilibriumProblem(A=A, b=b, row_offset=row_offset, coms=coms)


def external_column(problem, body_id, point, direction):
    """Column of the unit external force ``e`` applied at ``point``."""
    col = np.zeros(problem.b.shape[0])
    if body_id not in problem.row_offset:
        return col
    r = problem.row_offset[body_id]
    e = np.asarray(direction, dtype=float)
    col[r:r + 3] = e
    col[r + 3:r + 6] = cross3(point - problem.coms[body_id], e)
    return col


def equilibrium_feasible(bodies, contacts=None, external=None, n_gen=N_GENERATORS):
    """True when gravity (plus an optional external wrench) can be balanced.

    Args:
        external: optional ``(body_id, force_vec, point)`` applied in world
            coordinates.
    """
    if contacts is None:
        contacts = detect_contacts(bodies)
    prob = build_equilibrium(bodies, contacts, n_gen)
    b = prob.b.copy()
    if external is not None:
        body_id, force, point = external
        force = np.asarray(force, dtype=float)
        mag = np.linalg.norm(force)
        if mag > 0.0 and body_id in prob.row_offset:
            col = external_column(prob, body_id, np.asarray(point, dtype=float),
                                  force / mag)
            b -= mag * col
    return simplex.feasible(prob.A, b)


def surface_distance(body, p):
    """Signed distance from a world point to the body surface (negative inside)."""
    R = rotation_of(body.pose)
    local = (np.asarray(p, dtype=float) - body.pose[0:3]) @ R
    q = np.abs(local) - body.extents / 2.0
    outside = np.linalg.norm(np.maximum(q, 0.0))
    inside = float(q.max())
    return outside if outside > 0.0 else inside


def _locate_body(bodies, p, tol=SURFACE_TOL):
    best = (np.inf, None)
    for body in bodies:
        d = abs(surface_distance(body, p))
        if d < best[0]:
            best = (d, body)
    if best[0] > tol:
        raise PointOffSurface(f"point {np.asarray(p)} is {best[0]:.2e} m from the nearest surface")
    return best[1]


def robustness(bodies, contacts, p, e, n_gen=N_GENERATORS, body_id=None):
    """Largest inward force magnitude at ``p`` along unit ``e`` before motion.

    Returns +inf when the LP is unbounded (the scene absorbs any such force)
    and 0.0 when even the unloaded scene admits no equilibrium.

    Raises:
        PointOffSurface: if ``p`` lies on no body surface.
    """
    p = np.asarray(p, dtype=float)
    e = np.asarray(e, dtype=float)
    e = e / np.linalg.norm(e)
    if body_id is None:
        body = _locate_body(bodies, p)
    else:
        body = next(b for b in bodies if b.id == body_id)
    if body.fixed:
        return np.inf

    prob = build_equilibrium(bodies, contacts, n_gen)
    col = external_column(prob, body.id, p, e)
    A = np.hstack([prob.A, col[:, None]])
    c = np.zeros(A.shape[1])
    c[-1] = 1.0
    res = simplex.solve_lp(A, prob.b, c)
    if res.status == simplex.UNBOUNDED:
        return np.inf
    if res.status == simplex.INFEASIBLE:
        return 0.0
    val = float(res.x[-1])
    return np.inf if val > INF_CUTOFF else val


def _solve_field_point(sys_payload, row, com, point, e, n_gen):
    A_contact, b = sys_payload
    nrows = b.shape[0]
    col = np.zeros(nrows)
    col[row:row + 3] = e
    col[row + 3:row + 6] = cross3(point - com, e)
    A = np.hstack([A_contact, col[:, None]])
    c = np.zeros(A.shape[1])
    c[-1] = 1.0
    res = simplex.solve_lp(A, b, c)
    if res.status == simplex.UNBOUNDED:
        return np.inf, False
    if res.status == simplex.INFEASIBLE:
        return 0.0, False
    val = float(res.x[-1])
    return (np.inf if val > INF_CUTOFF else val), False


def _field_chunk(args):
    sys_payload, tasks, n_gen = args
    out = []
    for row, com, point, e in tasks:
        try:
            out.append(_solve_field_point(sys_payload, row, com, point, e, n_gen))
        except LpNumericalFailure:
            out.append((np.inf, True))
    return out


def robustness_field(bodies, samples, n_gen=N_GENERATORS, workers=None):
    """Robustness at every surface sample, pressing inward (``e = -n``).

    The contact system is assembled once and shared across points. With
    ``workers`` set, points are evaluated by a process pool in deterministic
    chunk order.

    Returns:
        ``(values, flagged)``: float array with +inf entries allowed, and a
        bool array marking points whose LP failed numerically (value +inf).
    """
    contacts = detect_contacts(bodies)
    prob = build_equilibrium(bodies, contacts, n_gen)
    sys_payload = (prob.A, prob.b)
    by_id = {b.id: b for b in bodies}

    n = len(samples.points)
    values = np.zeros(n)
    flagged = np.zeros(n, dtype=bool)

    tasks = []
    task_idx = []
    for i in range(n):
        body = by_id[str(samples.body_ids[i])]
        if body.fixed:
            values[i] = np.inf
            continue
        e = -samples.normals[i]
        tasks.append((prob.row_offset[body.id], body.com, samples.points[i], e))
        task_idx.append(i)

    if not tasks:
        return values, flagged

    if workers is None or workers <= 1:
        results = _field_chunk((sys_payload, tasks, n_gen))
    else:
        chunk = max(1, (len(tasks) + 4 * workers - 1) // (4 * workers))
        parts = [(sys_payload, tasks[i:i + chunk], n_gen)
                 for i in range(0, len(tasks), chunk)]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = [r for part in ex.map(_field_chunk, parts) for r in part]

    for i, (val, flag) in zip(task_idx, results):
        values[i] = val
        flagged[i] = flag
    return values, flagged


def normalize_robustness(r, r0=R0):
    """Map robustness in [0, inf] to [0, 1) via ``r / (r + r0)``; inf -> 1."""
    r = np.asarray(r, dtype=float)
    finite = np.where(np.isinf(r), 0.0, r)
    out = np.where(np.isinf(r), 1.0, finite / (finite + r0))
    return out if out.ndim else float(out)


def scene_in_equilibrium(bodies, n_gen=N_GENERATORS):
    """Convenience: contacts detected, feasibility under gravity alone."""
    return equilibrium_feasible(bodies, detect_contacts(bodies), n_gen=n_gen)
