"""Rigid-body dynamics on the kinematic tree.

Implements the classic O(n) / O(n^2) recursions over spatial vectors:
inverse dynamics (recursive Newton-Euler), the joint-space mass matrix
(composite rigid body), forward dynamics (articulated body), plus an
independent mass-matrix-factorization route to forward dynamics and a
fixed-step check integrator.

Gravity is folded in as a fictitious base acceleration of -g, so a single
code path serves gravity on and off.  All functions are pure and generic
over the scalar type of their state/inertia arguments (floats, numpy
batches, autodiff scalars).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .kinematics import local_transforms
from .spatial import ForceVector, Mat33, MotionVector, SpatialInertia, Vec3, \
    cross_force, cross_motion

DEFAULT_GRAVITY = Vec3(0.0, 0.0, -9.81)


class _NonFiniteState(Exception):
    """Internal: a simulation step produced or received a non-finite state."""


class DynamicsError(RuntimeError):
    """Dynamics computation impossible on this model or state."""


def _as_gravity(gravity):
    if gravity is None:
        return DEFAULT_GRAVITY
    if isinstance(gravity, Vec3):
        return gravity
    return Vec3.fromlist(list(gravity))


def _require_dynamics(model, inertias):
    if model.kinematics_only:
        raise DynamicsError("dynamics unavailable: model was built kinematics_only")
    for body, I in zip(model.bodies, inertias):
        if I is None:
            raise DynamicsError(f"dynamics unavailable: link '{body.name}' has no inertia")


def _check_len(name, v, n):
    if len(v) != n:
        raise ValueError(f"{name} must have length {n}, got {len(v)}")


def _subspace(body):
    """Joint motion subspace in body coordinates."""
    if body.joint_type == "prismatic":
        return MotionVector(Vec3.zero(), body.axis)
    return MotionVector(body.axis, Vec3.zero())


def rnea(model, q, qd, qdd, gravity=None, inertias=None):
    """Inverse dynamics: generalized forces for configuration (q, qd, qdd).

    Two sweeps: outward velocity/acceleration propagation (gravity as a
    -g base acceleration), inward force accumulation projected onto the
    joint axes.  Returns a list of n joint torques/forces.
    """
    n = model.n
    _check_len("q", q, n)
    _check_len("qd", qd, n)
    _check_len("qdd", qdd, n)
    g = _as_gravity(gravity)
    if inertias is None:
        inertias = model.inertias()
    _require_dynamics(model, inertias)

    xs = local_transforms(model, q)
    nb = len(model.bodies)
    v = [None] * nb
    a = [None] * nb
    f = [None] * nb
    a_base = MotionVector(Vec3.zero(), -g)

    for i, body in enumerate(model.bodies):
        X = xs[i]
        vp = v[body.parent] if body.parent >= 0 else MotionVector.zero()
        ap = a[body.parent] if body.parent >= 0 else a_base
        if body.dof is None:
            v[i] = X.apply_motion_inv(vp)
            a[i] = X.apply_motion_inv(ap)
        else:
            S = _subspace(body)
            vj = S.scale(qd[body.dof])
            v[i] = X.apply_motion_inv(vp) + vj
            a[i] = X.apply_motion_inv(ap) + S.scale(qdd[body.dof]) \
                + cross_motion(v[i], vj)
        I = inertias[i]
        f[i] = I.times_motion(a[i]) + cross_force(v[i], I.times_motion(v[i]))

    tau = [None] * n
    for i in range(nb - 1, -1, -1):
        body = model.bodies[i]
        if body.dof is not None:
            tau[body.dof] = _subspace(body).dot(f[i])
        if body.parent >= 0:
            f[body.parent] = f[body.parent] + xs[i].apply_force(f[i])
    return tau


def gravity_term(model, q, gravity=None, inertias=None):
    """Generalized gravity forces: rnea with zero velocity and acceleration."""
    zero = [0.0] * model.n
    return rnea(model, q, zero, zero, gravity=gravity, inertias=inertias)


def bias_force(model, q, qd, gravity=None, inertias=None):
    """Coriolis/centripetal plus gravity forces: rnea with zero acceleration."""
    return rnea(model, q, qd, [0.0] * model.n, gravity=gravity, inertias=inertias)


class _ArticulatedInertia:
    """Symmetric 6x6 inertia-like operator stored as 3x3 blocks [[A, B], [B^T, D]]."""

    __slots__ = ("A", "B", "D")

    def __init__(self, A, B, D):
        self.A = A
        self.B = B
        self.D = D

    @staticmethod
    def from_rigid(I):
        h = I.com.scale(I.mass)
        return _ArticulatedInertia(I.rot_inertia, Mat33.skew(h),
                                   Mat33.identity().scale(I.mass))

    def __add__(self, o):
        return _ArticulatedInertia(self.A + o.A, self.B + o.B, self.D + o.D)

    def apply(self, v):
        return ForceVector(self.A.matvec(v.ang) + self.B.matvec(v.lin),
                           self.B.T().matvec(v.ang) + self.D.matvec(v.lin))

    def minus_rank1(self, U, dinv):
        """self - U U^T / d for a spatial force vector U."""
        tu, fu = U.ang, U.lin
        return _ArticulatedInertia(
            self.A - Mat33.outer(tu, tu).scale(dinv),
            self.B - Mat33.outer(tu, fu).scale(dinv),
            self.D - Mat33.outer(fu, fu).scale(dinv))

    def transform(self, X):
        """Re-express in the parent frame of X (congruence by the motion map)."""
        R, p = X.rot, X.trans
        P = Mat33.skew(p)
        RA = self.A.rotate_sym(R)
        RB = R.matmat(self.B).matmat(R.T())
        RD = self.D.rotate_sym(R)
        A = RA - RB.matmat(P) + P.matmat(RB.T()) - P.matmat(RD).matmat(P)
        B = RB + P.matmat(RD)
        return _ArticulatedInertia(A, B, RD)


def mass_matrix(model, q, inertias=None):
    """Joint-space mass matrix via the composite-rigid-body recursion.

    Symmetric by construction (one triangle computed, both filled).
    Returns an n x n numpy array for float inputs, else a nested list.
    """
    n = model.n
    _check_len("q", q, n)
    if inertias is None:
        inertias = model.inertias()
    _require_dynamics(model, inertias)

    xs = local_transforms(model, q)
    nb = len(model.bodies)
    Ic = [_ArticulatedInertia.from_rigid(I) for I in inertias]
    for i in range(nb - 1, 0, -1):
        p = model.bodies[i].parent
        if p >= 0:
            Ic[p] = Ic[p] + Ic[i].transform(xs[i])

    M = [[0.0] * n for _ in range(n)]
    for i, body in enumerate(model.bodies):
        if body.dof is None:
            continue
        j = body.dof
        S = _subspace(body)
        F = Ic[i].apply(S)
        M[j][j] = S.dot(F)
        k = i
        while model.bodies[k].parent >= 0:
            F = xs[k].apply_force(F)
            k = model.bodies[k].parent
            anc = model.bodies[k]
            if anc.dof is not None:
                m_ij = _subspace(anc).dot(F)
                M[j][anc.dof] = m_ij
                M[anc.dof][j] = m_ij
    if all(isinstance(M[i][j], (int, float)) for i in range(n) for j in range(n)):
        return np.array(M, dtype=float)
    return M


def aba(model, q, qd, tau, gravity=None, inertias=None):
    """Forward dynamics via the articulated-body recursion (three sweeps)."""
    n = model.n
    _check_len("q", q, n)
    _check_len("qd", qd, n)
    _check_len("tau", tau, n)
    g = _as_gravity(gravity)
    if inertias is None:
        inertias = model.inertias()
    _require_dynamics(model, inertias)

    xs = local_transforms(model, q)
    nb = len(model.bodies)
    v = [None] * nb
    c = [None] * nb
    IA = [None] * nb
    pA = [None] * nb

    for i, body in enumerate(model.bodies):
        X = xs[i]
        vp = v[body.parent] if body.parent >= 0 else MotionVector.zero()
        if body.dof is None:
            v[i] = X.apply_motion_inv(vp)
            c[i] = MotionVector.zero()
        else:
            vj = _subspace(body).scale(qd[body.dof])
            v[i] = X.apply_motion_inv(vp) + vj
            c[i] = cross_motion(v[i], vj)
        IA[i] = _ArticulatedInertia.from_rigid(inertias[i])
        pA[i] = cross_force(v[i], inertias[i].times_motion(v[i]))

    U = [None] * nb
    dinv = [None] * nb
    u = [None] * nb
    for i in range(nb - 1, -1, -1):
        body = model.bodies[i]
        if body.dof is not None:
            S = _subspace(body)
            U[i] = IA[i].apply(S)
            d = S.dot(U[i])
            if ad.value(d) <= 1e-12:
                raise DynamicsError(
                    f"singular articulated projection at joint '{body.joint_name}' "
                    f"(axis inertia {ad.value(d):.3g}); check link inertias")
            dinv[i] = 1.0 / d
            u[i] = tau[body.dof] - S.dot(pA[i])
        if body.parent >= 0:
            if body.dof is not None:
                Ia = IA[i].minus_rank1(U[i], dinv[i])
                pa = pA[i] + Ia.apply(c[i]) + U[i].scale(dinv[i] * u[i])
            else:
                Ia = IA[i]
                pa = pA[i] + Ia.apply(c[i])
            IA[body.parent] = IA[body.parent] + Ia.transform(xs[i])
            pA[body.parent] = pA[body.parent] + xs[i].apply_force(pa)

    a = [None] * nb
    qdd = [None] * n
    a_base = MotionVector(Vec3.zero(), -g)
    for i, body in enumerate(model.bodies):
        ap = a[body.parent] if body.parent >= 0 else a_base
        ai = xs[i].apply_motion_inv(ap) + c[i]
        if body.dof is not None:
            qdd_i = dinv[i] * (u[i] - ai.dot(U[i]))
            qdd[body.dof] = qdd_i
            ai = ai + _subspace(body).scale(qdd_i)
        a[i] = ai
    return qdd


def _cholesky_solve(M, b, n):
    """Solve M x = b for symmetric positive-definite M (nested-list, generic)."""
    L = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1):
            s = M[i][j]
            for k in range(j):
                s = s - L[i][k] * L[j][k]
            if i == j:
                if ad.value(s) <= 0.0:
                    raise DynamicsError(
                        "mass matrix is not positive definite (invalid inertias?)")
                L[i][i] = ad.sqrt(s)
            else:
                L[i][j] = s / L[j][j]
    y = [0.0] * n
    for i in range(n):
        s = b[i]
        for k in range(i):
            s = s - L[i][k] * y[k]
        y[i] = s / L[i][i]
    x = [0.0] * n
    for i in range(n - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, n):
            s = s - L[k][i] * x[k]
        x[i] = s / L[i][i]
    return x


def forward_dynamics_cholesky(model, q, qd, tau, gravity=None, inertias=None):
    """Forward dynamics via M(q) qdd = tau - bias: the independent check route."""
    n = model.n
    _check_len("tau", tau, n)
    M = mass_matrix(model, q, inertias=inertias)
    if isinstance(M, np.ndarray):
        M = M.tolist()
    h = bias_force(model, q, qd, gravity=gravity, inertias=inertias)
    rhs = [tau[i] - h[i] for i in range(n)]
    return _cholesky_solve(M, rhs, n)


def potential_energy(model, q, gravity=None, inertias=None):
    """-sum_i m_i g . com_world_i (zero reference at the base origin)."""
    from .kinematics import world_transforms
    g = _as_gravity(gravity)
    if inertias is None:
        inertias = model.inertias()
    world = world_transforms(model, q)
    U = 0.0
    for X, I in zip(world, inertias):
        com_w = X.apply_point(I.com)
        U = U - I.mass * g.dot(com_w)
    return U


def total_energy(model, q, qd, gravity=None, inertias=None):
    """Kinetic plus gravitational potential energy of the whole tree."""
    M = mass_matrix(model, q, inertias=inertias)
    qd = np.asarray(qd, dtype=float)
    kin = 0.5 * float(qd @ np.asarray(M) @ qd)
    return kin + float(potential_energy(model, q, gravity=gravity, inertias=inertias))


def simulate(model, q0, qd0, torque_fn, dt, steps, gravity=None,
             integrator="rk4", inertias=None):
    """Fixed-step rollout with accelerations from the articulated-body solver.

    ``torque_fn(t, q, qd)`` returns the joint torque vector (may be None for
    passive motion).  Returns a list of (t, q, qd, qdd) with numpy arrays,
    including the initial state.  This is a verification tool, not a
    production simulator: no contacts, no constraints.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if integrator not in ("rk4", "semi-implicit-euler"):
        raise ValueError(f"unknown integrator '{integrator}'")

    n = model.n
    q = np.asarray(q0, dtype=float).copy()
    qd = np.asarray(qd0, dtype=float).copy()

    def accel(t, q, qd):
        tau = torque_fn(t, q, qd) if torque_fn is not None else None
        if tau is None:
            tau = np.zeros(n)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))
                and np.all(np.isfinite(tau))):
            raise _NonFiniteState()
        return np.array(aba(model, list(q), list(qd), list(tau),
                            gravity=gravity, inertias=inertias))

    try:
        traj = [(0.0, q.copy(), qd.copy(), accel(0.0, q, qd))]
    except _NonFiniteState:
        raise DynamicsError("non-finite initial state") from None
    t = 0.0
    for step_idx in range(steps):
        try:
            if integrator == "semi-implicit-euler":
                qdd = accel(t, q, qd)
                qd = qd + dt * qdd
                q = q + dt * qd
            else:
                k1q, k1v = qd, accel(t, q, qd)
                k2q, k2v = qd + 0.5 * dt * k1v, accel(t + 0.5 * dt,
                                                      q + 0.5 * dt * k1q,
                                                      qd + 0.5 * dt * k1v)
                k3q, k3v = qd + 0.5 * dt * k2v, accel(t + 0.5 * dt,
                                                      q + 0.5 * dt * k2q,
                                                      qd + 0.5 * dt * k2v)
                k4q, k4v = qd + dt * k3v, accel(t + dt, q + dt * k3q,
                                                qd + dt * k3v)
                q = q + dt / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
                qd = qd + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
            t += dt
            if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
                raise _NonFiniteState()
            traj.append((t, q.copy(), qd.copy(), accel(t, q, qd)))
        except _NonFiniteState:
            raise DynamicsError(
                f"non-finite state at step {step_idx}") from None
    return traj
