"""Learnable rigid-body parameters and gradient-based identification.

Selected inertial fields (mass, CoM, rotational inertia) are exposed to an
optimizer through constrained parametrizations mapping unconstrained raw
vectors to valid physical values, so no optimizer step can produce invalid
physics: mass stays positive (softplus), the rotational inertia stays
symmetric positive definite (Cholesky factor with softplus diagonal plus a
small diagonal floor).

Identification minimizes a torque-regression loss: mean squared difference
between inverse-dynamics torques predicted with the mapped parameters and
the recorded torques.  Gradients come from the reverse-mode engine in
:mod:`robotdyn.autodiff`; the dataset dimension is evaluated as one
numpy-batched sweep, so the tape length is independent of the sample count.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .dynamics import rnea
from .spatial import Mat33, SpatialInertia, Vec3, parallel_axis_term

SPD_EPS = 1e-9  # diagonal floor keeping mapped inertias safely invertible


def positive_scalar_map(raw):
    """Overflow-safe softplus log(1 + exp(raw)); strictly positive and increasing.

    Both tails use their asymptotic forms: the upper to avoid exp overflow,
    the lower because log(1 + exp(raw)) underflows to exactly zero there.
    """
    capped = ad.minimum(ad.maximum(raw, -30.0), 30.0)
    mid = ad.log(1.0 + ad.exp(capped))
    low = ad.exp(ad.maximum(raw, -745.0))  # softplus(x) ~ exp(x) as x -> -inf
    val = np.asarray(ad.value(raw))
    return ad.where(val > 30.0, raw, ad.where(val < -30.0, low, mid))


def positive_scalar_init(target):
    """Inverse softplus: raw with positive_scalar_map(raw) == target."""
    if target <= 0.0:
        raise ValueError(f"target must be positive, got {target}")
    if target > 30.0:
        return float(target)
    return math.log(math.expm1(target))


def spd_map(raw):
    """raw[6] -> L L^T + eps*I with softplus diagonal: always SPD.

    Raw layout: (d0, d1, d2, l10, l20, l21).
    """
    d0 = positive_scalar_map(raw[0])
    d1 = positive_scalar_map(raw[1])
    d2 = positive_scalar_map(raw[2])
    l10, l20, l21 = raw[3], raw[4], raw[5]
    # L L^T for lower-triangular L, plus the floor
    return Mat33(
        d0 * d0 + SPD_EPS, d0 * l10, d0 * l20,
        d0 * l10, l10 * l10 + d1 * d1 + SPD_EPS, l10 * l20 + d1 * l21,
        d0 * l20, l10 * l20 + d1 * l21, l20 * l20 + l21 * l21 + d2 * d2 + SPD_EPS)


def spd_init(target):
    """Raw vector whose spd_map reproduces ``target`` (eigenvalues floored at 1e-8)."""
    T = np.array(target.values() if isinstance(target, Mat33) else target, dtype=float)
    T = 0.5 * (T + T.T)
    w, V = np.linalg.eigh(T)
    w = np.maximum(w, 1e-8)
    L = np.linalg.cholesky(V @ np.diag(w) @ V.T - SPD_EPS * np.eye(3))
    return [positive_scalar_init(L[0, 0]), positive_scalar_init(L[1, 1]),
            positive_scalar_init(L[2, 2]), float(L[1, 0]), float(L[2, 0]),
            float(L[2, 1])]


class PositiveScalar:
    """Softplus-constrained positive scalar (e.g. a mass)."""

    size = 1

    def init_raw(self, current):
        return [positive_scalar_init(float(current))]

    def map(self, raw):
        return positive_scalar_map(raw[0])

    def physical(self, raw):
        return float(ad.value(self.map(raw)))


class FreeVector3:
    """Unconstrained 3-vector (e.g. a centre of mass)."""

    size = 3

    def init_raw(self, current):
        return [float(current.x), float(current.y), float(current.z)]

    def map(self, raw):
        return Vec3(raw[0], raw[1], raw[2])

    def physical(self, raw):
        return [float(ad.value(v)) for v in raw]


class SpdMatrix3:
    """Symmetric positive-definite 3x3 (a rotational inertia)."""

    size = 6

    def init_raw(self, current):
        return spd_init(current)

    def map(self, raw):
        return spd_map(raw)

    def physical(self, raw):
        return self.map([float(ad.value(r)) for r in raw]).values()


class FixedParam:
    """Placeholder that keeps a field pinned at its URDF value."""

    size = 0

    def init_raw(self, current):
        return []

    def map(self, raw):
        return None

    def physical(self, raw):
        return None


PARAM_KINDS = {
    "positive_scalar": PositiveScalar,
    "free_vector3": FreeVector3,
    "spd_matrix3": SpdMatrix3,
    "fixed": FixedParam,
}

_FIELD_KINDS = {
    "mass": ("positive_scalar", "fixed"),
    "com": ("free_vector3", "fixed"),
    "rot_inertia": ("spd_matrix3", "fixed"),
}


@dataclass
class _Entry:
    body: int
    field: str
    param: object
    offset: int


class ParamStore:
    """Registry of learnable (body, field) parametrizations with a flat raw view."""

    def __init__(self, model):
        if model.kinematics_only:
            raise ValueError("cannot attach learnable parameters to a "
                             "kinematics_only model")
        self.model = model
        self.entries = []
        self.raw = np.zeros(0)
        self._base_inertias = model.inertias()

    def make_learnable(self, link, field, kind=None):
        """Register a parametrization, initialized at the model's current value."""
        idx = self.model.body_index(link)
        if field not in _FIELD_KINDS:
            raise ValueError(f"unknown field '{field}' (expected mass/com/rot_inertia)")
        body = self.model.bodies[idx]
        if body.inertia is None or float(ad.value(body.inertia.mass)) <= 0.0:
            raise ValueError(f"link '{link}' has no inertial data to learn")
        for e in self.entries:
            if e.body == idx and e.field == field:
                raise ValueError(f"{link}.{field} is already learnable")
        if kind is None:
            kind = _FIELD_KINDS[field][0]
        if kind not in PARAM_KINDS:
            raise ValueError(f"unknown parametrization kind '{kind}'")
        if kind not in _FIELD_KINDS[field]:
            raise ValueError(f"kind '{kind}' cannot parametrize field '{field}'")
        param = PARAM_KINDS[kind]()
        current = getattr(body.inertia, {"mass": "mass", "com": "com",
                                         "rot_inertia": "rot_inertia"}[field])
        raw0 = param.init_raw(current)
        self.entries.append(_Entry(idx, field, param, len(self.raw)))
        self.raw = np.concatenate([self.raw, np.asarray(raw0, dtype=float)])
        return self

    @property
    def size(self):
        return len(self.raw)

    def inertias(self, raw=None):
        """Per-body inertias with learnable fields mapped from ``raw``.

        ``raw`` may hold floats or autodiff scalars; defaults to the stored
        raw vector.
        """
        if raw is None:
            raw = list(self.raw)
        out = list(self._base_inertias)
        touched = {}
        for e in self.entries:
            chunk = list(raw[e.offset:e.offset + e.param.size])
            mapped = e.param.map(chunk)
            if mapped is None:
                continue
            touched.setdefault(e.body, {})[e.field] = mapped
        for body, fields in touched.items():
            base = self._base_inertias[body]
            mass = fields.get("mass", base.mass)
            com = fields.get("com", base.com)
            if "rot_inertia" in fields:
                # the SPD parametrization owns the full origin-referenced tensor
                rot = fields["rot_inertia"]
            else:
                # keep the CoM-referenced part fixed and recompose the
                # parallel-axis term, so it tracks a learnable mass/CoM
                i_com = base.rot_inertia - parallel_axis_term(base.mass, base.com)
                rot = i_com + parallel_axis_term(mass, com)
            out[body] = SpatialInertia(mass, com, rot)
        return out

    def physical_values(self, raw=None):
        """Mapped values keyed 'link.field'."""
        if raw is None:
            raw = list(self.raw)
        vals = {}
        for e in self.entries:
            chunk = [float(ad.value(r)) for r in raw[e.offset:e.offset + e.param.size]]
            vals[f"{self.model.bodies[e.body].name}.{e.field}"] = e.param.physical(chunk)
        return vals


def make_learnable(model, link, field, kind=None, store=None):
    """Create (or extend) a ParamStore with one learnable (link, field)."""
    if store is None:
        store = ParamStore(model)
    return store.make_learnable(link, field, kind)


class TrajectoryDataset:
    """Records of (q, qd, qdd, tau), stored column-batched as (N, n) arrays."""

    def __init__(self, q, qd, qdd, tau):
        self.q = np.asarray(q, dtype=float)
        self.qd = np.asarray(qd, dtype=float)
        self.qdd = np.asarray(qdd, dtype=float)
        self.tau = np.asarray(tau, dtype=float)
        shapes = {a.shape for a in (self.q, self.qd, self.qdd, self.tau)}
        if len(shapes) != 1 or self.q.ndim != 2:
            raise ValueError(f"inconsistent record shapes: {sorted(shapes)}")
        if not all(np.all(np.isfinite(a)) for a in (self.q, self.qd, self.qdd, self.tau)):
            raise ValueError("dataset contains non-finite values")

    def __len__(self):
        return self.q.shape[0]

    @property
    def dof(self):
        return self.q.shape[1]

    def subset(self, idx):
        return TrajectoryDataset(self.q[idx], self.qd[idx], self.qdd[idx], self.tau[idx])

    def save_jsonl(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for i in range(len(self)):
                rec = {"q": self.q[i].tolist(), "qd": self.qd[i].tolist(),
                       "qdd": self.qdd[i].tolist(), "tau": self.tau[i].tolist()}
                fh.write(json.dumps(rec) + "\n")

    @classmethod
    def load_jsonl(cls, path):
        rows = {"q": [], "qd": [], "qdd": [], "tau": []}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as e:
                    raise ValueError(f"{path}:{lineno}: bad JSON: {e}") from None
                for key in rows:
                    if key not in rec:
                        raise ValueError(f"{path}:{lineno}: missing '{key}'")
                    rows[key].append(rec[key])
        if not rows["q"]:
            raise ValueError(f"{path}: empty dataset")
        lengths = {len(v) for row in rows.values() for v in row}
        if len(lengths) != 1:
            raise ValueError(f"{path}: records have mixed vector lengths {sorted(lengths)}")
        return cls(rows["q"], rows["qd"], rows["qdd"], rows["tau"])


def generate_dataset(model, n_samples, q_range=(-np.pi, np.pi), qd_range=(-2.0, 2.0),
                     qdd_range=(-2.0, 2.0), gravity=None, seed=0, noise_std=0.0):
    """Seeded random states with torques from inverse dynamics.

    The same seed always yields the identical dataset.  ``noise_std`` adds
    optional Gaussian noise to the torque column.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    n = model.n
    rng = np.random.default_rng(seed)
    q = rng.uniform(q_range[0], q_range[1], size=(n_samples, n))
    qd = rng.uniform(qd_range[0], qd_range[1], size=(n_samples, n))
    qdd = rng.uniform(qdd_range[0], qdd_range[1], size=(n_samples, n))
    tau_cols = rnea(model, list(q.T), list(qd.T), list(qdd.T), gravity=gravity)
    tau = np.stack([np.asarray(c) for c in tau_cols], axis=1)
    if noise_std > 0.0:
        tau = tau + rng.normal(0.0, noise_std, size=tau.shape)
    return TrajectoryDataset(q, qd, qdd, tau)


def inverse_dynamics_loss(store, dataset, raw=None, gravity=None):
    """Mean squared torque residual of the model with mapped parameters.

    ``raw`` may hold autodiff scalars; the dataset is evaluated as one
    batched sweep.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    model = store.model
    if dataset.dof != model.n:
        raise ValueError(f"dataset has {dataset.dof} DoF, model has {model.n}")
    inertias = store.inertias(raw)
    pred = rnea(model, list(dataset.q.T), list(dataset.qd.T), list(dataset.qdd.T),
                gravity=gravity, inertias=inertias)
    loss = 0.0
    for j in range(model.n):
        res = pred[j] - dataset.tau[:, j]
        loss = loss + ad.amean(res * res)
    if not np.isfinite(float(ad.value(loss))):
        raise ad.NonFiniteError("inverse dynamics loss is not finite")
    return loss


def loss_gradient(store, dataset, raw, gravity=None):
    """Reverse-mode gradient of the loss with respect to the raw vector."""
    return ad.gradient(lambda rs: inverse_dynamics_loss(store, dataset, rs,
                                                        gravity=gravity), raw)


@dataclass
class TrainReport:
    losses: list
    final_loss: float
    final_params: dict
    iterations: int
    converged: bool


def fit(store, dataset, optimizer="adam", learning_rate=0.01, epochs=1000,
        batch_size=None, tol=1e-10, rel_tol=1e-12, patience=10, gravity=None,
        seed=0):
    """Gradient-descent identification loop over the store's raw vector.

    ``optimizer`` is "gd" (plain descent) or "adam" (per-coordinate adaptive
    with momentum).  Stops when the loss drops below ``tol`` or its relative
    improvement stays under ``rel_tol`` for ``patience`` epochs.  Divergence
    (loss above 1e12 or non-finite) raises with the epoch index.
    """
    if store.size == 0:
        raise ValueError("no learnable parameters registered")
    if optimizer not in ("gd", "adam"):
        raise ValueError(f"unknown optimizer '{optimizer}'")
    raw = store.raw.astype(float).copy()
    m = np.zeros_like(raw)
    v = np.zeros_like(raw)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    rng = np.random.default_rng(seed)

    losses = []
    converged = False
    epoch = 0
    best_loss = math.inf
    best_raw = raw.copy()
    since_best = 0
    cur_lr = learning_rate
    adam_t = 0
    for epoch in range(1, epochs + 1):
        if batch_size is None or batch_size >= len(dataset):
            batches = [dataset]
        else:
            order = rng.permutation(len(dataset))
            batches = [dataset.subset(order[i:i + batch_size])
                       for i in range(0, len(order), batch_size)]
        for batch in batches:
            g = loss_gradient(store, batch, list(raw), gravity=gravity)
            if optimizer == "gd":
                raw -= cur_lr * g
            else:
                adam_t += 1
                m = beta1 * m + (1.0 - beta1) * g
                v = beta2 * v + (1.0 - beta2) * g * g
                mhat = m / (1.0 - beta1 ** adam_t)
                vhat = v / (1.0 - beta2 ** adam_t)
                raw -= cur_lr * mhat / (np.sqrt(vhat) + eps)
        loss = float(ad.value(inverse_dynamics_loss(store, dataset, list(raw),
                                                    gravity=gravity)))
        if not np.isfinite(loss) or loss > 1e12:
            raise RuntimeError(f"training diverged at epoch {epoch} (loss {loss:g})")
        losses.append(loss)
        if loss < best_loss * (1.0 - rel_tol):
            best_loss = loss
            best_raw = raw.copy()
            since_best = 0
        else:
            since_best += 1
        if loss < tol:
            converged = True
            break
        if since_best >= patience:
            # plateau: restart from the best point with a halved step; give up
            # once the step has shrunk ~1e-9x without further improvement
            cur_lr *= 0.5
            if cur_lr < learning_rate * 1e-9:
                converged = True
                break
            raw = best_raw.copy()
            m[:] = 0.0
            v[:] = 0.0
            adam_t = 0
            since_best = 0

    if best_loss < losses[-1]:
        raw = best_raw
        losses.append(best_loss)
    store.raw = raw
    return TrainReport(losses=losses, final_loss=losses[-1],
                       final_params=store.physical_values(), iterations=epoch,
                       converged=converged)
