"""Learnable inertial parameters: parametrizations, datasets, loss, fitting."""

import math

import numpy as np
import pytest

import robotdyn as rd
from robotdyn import autodiff as ad
from robotdyn.dynamics import rnea
from robotdyn.learn import (
    ParamStore,
    TrajectoryDataset,
    fit,
    generate_dataset,
    inverse_dynamics_loss,
    loss_gradient,
    make_learnable,
    positive_scalar_init,
    positive_scalar_map,
    spd_init,
    spd_map,
)
from robotdyn.spatial import Mat33

G = 9.81


# ---------------------------------------------------------------------------
# positive scalar parametrization


def test_softplus_at_zero_is_log_two():
    np.testing.assert_allclose(positive_scalar_map(0.0), math.log(2.0),
                               rtol=1e-12)


def test_softplus_saturates_at_large_raw():
    np.testing.assert_allclose(positive_scalar_map(100.0), 100.0, rtol=1e-15)


def test_softplus_is_strictly_monotonic():
    raws = np.linspace(-20, 40, 200)
    vals = [float(ad.value(positive_scalar_map(r))) for r in raws]
    assert all(a < b for a, b in zip(vals, vals[1:]))
    assert all(v > 0 for v in vals)


def test_softplus_init_closed_forms():
    np.testing.assert_allclose(positive_scalar_init(math.log(2.0)), 0.0,
                               atol=1e-12)
    np.testing.assert_allclose(positive_scalar_init(1.0), math.log(math.e - 1),
                               rtol=1e-12)


def test_softplus_roundtrip_random():
    rng = np.random.default_rng(0)
    for t in rng.uniform(1e-3, 1e3, size=50):
        got = float(ad.value(positive_scalar_map(positive_scalar_init(t))))
        np.testing.assert_allclose(got, t, rtol=1e-9)


def test_softplus_init_rejects_nonpositive_target():
    with pytest.raises(ValueError):
        positive_scalar_init(0.0)
    with pytest.raises(ValueError):
        positive_scalar_init(-1.0)


# ---------------------------------------------------------------------------
# SPD parametrization


def test_spd_identity_raw():
    raw = [positive_scalar_init(1.0)] * 3 + [0.0, 0.0, 0.0]
    M = np.array(spd_map(raw).rows())
    np.testing.assert_allclose(M, np.eye(3), atol=1e-8)


def test_spd_map_always_positive_definite():
    rng = np.random.default_rng(1)
    for _ in range(50):
        raw = rng.uniform(-100, 100, size=6)
        M = np.array(spd_map(list(raw)).rows())
        np.testing.assert_allclose(M, M.T, atol=1e-9)
        assert np.min(np.linalg.eigvalsh(M)) > 0.0


def test_spd_target_recoverable_via_cholesky():
    target = Mat33.diag(1.0, 2.0, 3.0)
    M = np.array(spd_map(spd_init(target)).rows())
    np.testing.assert_allclose(M, np.diag([1.0, 2.0, 3.0]), atol=1e-9)


def test_spd_roundtrip_random_spd_matrix():
    rng = np.random.default_rng(2)
    A = rng.normal(size=(3, 3))
    T = A @ A.T + 0.1 * np.eye(3)
    M = np.array(spd_map(spd_init(Mat33.fromrows(T.tolist()))).rows())
    np.testing.assert_allclose(M, T, rtol=1e-8, atol=1e-8)


# ---------------------------------------------------------------------------
# ParamStore


def test_make_learnable_init_at_current(pendulum):
    store = make_learnable(pendulum, "bob", "mass")
    base = pendulum.inertias()
    mapped = store.inertias()
    for a, b in zip(base, mapped):
        np.testing.assert_allclose(float(ad.value(b.mass)),
                                   float(ad.value(a.mass)), atol=1e-10)
    # model outputs are unchanged before any optimizer step
    t1 = rnea(pendulum, [0.4], [0.3], [0.2])
    t2 = rnea(pendulum, [0.4], [0.3], [0.2], inertias=mapped)
    np.testing.assert_allclose([float(ad.value(x)) for x in t2], t1,
                               atol=1e-10)


def test_make_learnable_unknown_link(pendulum):
    with pytest.raises((KeyError, ValueError)):
        make_learnable(pendulum, "ghost", "mass")


def test_make_learnable_duplicate_registration(pendulum):
    store = make_learnable(pendulum, "bob", "mass")
    with pytest.raises(ValueError):
        store.make_learnable("bob", "mass")


def test_make_learnable_unknown_field_and_kind(pendulum):
    with pytest.raises(ValueError):
        make_learnable(pendulum, "bob", "friction")
    with pytest.raises(ValueError):
        make_learnable(pendulum, "bob", "mass", kind="spd_matrix3")


def test_make_learnable_link_without_inertial(two_link):
    with pytest.raises(ValueError):
        make_learnable(two_link, "tool", "mass")


def test_param_store_rejects_kinematics_only_model():
    model = rd.load_model(rd.fixture_path("pendulum"), kinematics_only=True)
    with pytest.raises(ValueError):
        ParamStore(model)


def test_param_store_multiple_fields(pendulum):
    store = make_learnable(pendulum, "bob", "mass")
    store.make_learnable("bob", "com")
    store.make_learnable("bob", "rot_inertia")
    assert store.size == 1 + 3 + 6
    vals = store.physical_values()
    assert set(vals) == {"bob.mass", "bob.com", "bob.rot_inertia"}
    np.testing.assert_allclose(vals["bob.mass"], 1.0, rtol=1e-9)
    np.testing.assert_allclose(vals["bob.com"], [1.0, 0.0, 0.0], atol=1e-12)


def test_constraints_hold_under_large_raw_perturbations(pendulum):
    store = make_learnable(pendulum, "bob", "mass")
    store.make_learnable("bob", "rot_inertia")
    rng = np.random.default_rng(3)
    for _ in range(20):
        raw = list(store.raw + rng.uniform(-100, 100, size=store.size))
        inertias = store.inertias(raw)
        bob = inertias[pendulum.body_index("bob")]
        assert float(ad.value(bob.mass)) > 0.0
        I = np.array([[float(ad.value(v)) for v in row]
                      for row in bob.rot_inertia.rows()])
        assert np.min(np.linalg.eigvalsh(I)) > 0.0


# ---------------------------------------------------------------------------
# datasets


def test_generate_dataset_is_deterministic(pendulum, tmp_path):
    a = generate_dataset(pendulum, 50, seed=7)
    b = generate_dataset(pendulum, 50, seed=7)
    pa, pb = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    a.save_jsonl(pa)
    b.save_jsonl(pb)
    assert pa.read_bytes() == pb.read_bytes()


def test_generate_dataset_tau_matches_rnea(two_link):
    ds = generate_dataset(two_link, 20, seed=1)
    for i in range(len(ds)):
        tau = rnea(two_link, list(ds.q[i]), list(ds.qd[i]), list(ds.qdd[i]))
        np.testing.assert_allclose(ds.tau[i], tau, atol=1e-12)


def test_generate_dataset_rejects_empty(pendulum):
    with pytest.raises(ValueError):
        generate_dataset(pendulum, 0)


def test_generate_dataset_noise_perturbs_tau(pendulum):
    clean = generate_dataset(pendulum, 30, seed=2)
    noisy = generate_dataset(pendulum, 30, seed=2, noise_std=0.1)
    np.testing.assert_allclose(noisy.q, clean.q)
    assert np.max(np.abs(noisy.tau - clean.tau)) > 1e-3


def test_dataset_jsonl_roundtrip(two_link, tmp_path):
    ds = generate_dataset(two_link, 10, seed=3)
    path = tmp_path / "ds.jsonl"
    ds.save_jsonl(path)
    back = TrajectoryDataset.load_jsonl(path)
    np.testing.assert_allclose(back.q, ds.q, atol=1e-15)
    np.testing.assert_allclose(back.tau, ds.tau, atol=1e-15)


def test_dataset_load_rejects_bad_input(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("not json\n")
    with pytest.raises(ValueError):
        TrajectoryDataset.load_jsonl(bad)
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    with pytest.raises(ValueError):
        TrajectoryDataset.load_jsonl(empty)
    missing = tmp_path / "missing.jsonl"
    missing.write_text('{"q": [0.0], "qd": [0.0], "qdd": [0.0]}\n')
    with pytest.raises(ValueError):
        TrajectoryDataset.load_jsonl(missing)


def test_dataset_rejects_nonfinite_values():
    with pytest.raises(ValueError):
        TrajectoryDataset([[np.nan]], [[0.0]], [[0.0]], [[0.0]])


def test_dataset_subset(pendulum):
    ds = generate_dataset(pendulum, 10, seed=4)
    sub = ds.subset(np.arange(3))
    assert len(sub) == 3
    np.testing.assert_allclose(sub.q, ds.q[:3])


# ---------------------------------------------------------------------------
# loss


def test_loss_at_ground_truth_is_tiny(pendulum):
    ds = generate_dataset(pendulum, 100, seed=5)
    store = make_learnable(pendulum, "bob", "mass")
    loss = float(ad.value(inverse_dynamics_loss(store, ds)))
    assert loss < 1e-20


def test_loss_rejects_empty_dataset(pendulum):
    store = make_learnable(pendulum, "bob", "mass")
    empty = TrajectoryDataset(np.zeros((0, 1)), np.zeros((0, 1)),
                              np.zeros((0, 1)), np.zeros((0, 1)))
    with pytest.raises(ValueError):
        inverse_dynamics_loss(store, empty)


def test_loss_rejects_dof_mismatch(pendulum, two_link):
    store = make_learnable(pendulum, "bob", "mass")
    ds = generate_dataset(two_link, 5, seed=6)
    with pytest.raises(ValueError):
        inverse_dynamics_loss(store, ds)


def test_loss_closed_form_for_doubled_mass(pendulum):
    # static data (qd = qdd = 0) from the true model (m = 1); evaluating with
    # m = 2 leaves a residual (2-1) g l cos q per sample
    ds = generate_dataset(pendulum, 200, qd_range=(0.0, 0.0),
                          qdd_range=(0.0, 0.0), seed=7)
    store = make_learnable(pendulum, "bob", "mass")
    raw = [positive_scalar_init(2.0)]
    loss = float(ad.value(inverse_dynamics_loss(store, ds, raw)))
    want = np.mean((G * np.cos(ds.q[:, 0])) ** 2)
    np.testing.assert_allclose(loss, want, rtol=1e-9)


def test_loss_gradient_matches_finite_difference(pendulum):
    ds = generate_dataset(pendulum, 50, seed=8)
    store = make_learnable(pendulum, "bob", "mass")
    store.make_learnable("bob", "com")
    raw0 = list(store.raw + 0.1)
    g = loss_gradient(store, ds, raw0)
    step = 1e-6
    for i in range(store.size):
        rp, rm = list(raw0), list(raw0)
        rp[i] += step
        rm[i] -= step
        fd = (float(ad.value(inverse_dynamics_loss(store, ds, rp)))
              - float(ad.value(inverse_dynamics_loss(store, ds, rm)))) / (2 * step)
        assert abs(g[i] - fd) / max(1.0, abs(g[i])) < 1e-5


# ---------------------------------------------------------------------------
# fit


def test_fit_recovers_pendulum_mass(pendulum, pendulum_mass2):
    ds = generate_dataset(pendulum, 200, seed=9)
    store = make_learnable(pendulum_mass2, "bob", "mass")
    report = fit(store, ds, optimizer="adam", learning_rate=0.05, epochs=1000,
                 tol=1e-10)
    assert report.final_loss < 1e-8
    np.testing.assert_allclose(report.final_params["bob.mass"], 1.0,
                               rtol=0.01)


def test_fit_gd_optimizer_also_recovers(pendulum, pendulum_mass2):
    ds = generate_dataset(pendulum, 200, seed=10)
    store = make_learnable(pendulum_mass2, "bob", "mass")
    report = fit(store, ds, optimizer="gd", learning_rate=0.01, epochs=2000,
                 tol=1e-10)
    np.testing.assert_allclose(report.final_params["bob.mass"], 1.0,
                               rtol=0.01)


def test_fit_without_gravity_recovers_via_inertia(pendulum, pendulum_mass2):
    # with g = 0 the mass is still identified through the m l^2 qdd term
    ds = generate_dataset(pendulum, 200, seed=11, gravity=(0.0, 0.0, 0.0))
    store = make_learnable(pendulum_mass2, "bob", "mass")
    report = fit(store, ds, optimizer="adam", learning_rate=0.05, epochs=1000,
                 tol=1e-10, gravity=(0.0, 0.0, 0.0))
    np.testing.assert_allclose(report.final_params["bob.mass"], 1.0,
                               rtol=0.01)


def test_fit_minibatch_path(pendulum, pendulum_mass2):
    ds = generate_dataset(pendulum, 64, seed=12)
    store = make_learnable(pendulum_mass2, "bob", "mass")
    report = fit(store, ds, optimizer="adam", learning_rate=0.05, epochs=400,
                 batch_size=16, tol=1e-10)
    np.testing.assert_allclose(report.final_params["bob.mass"], 1.0,
                               rtol=0.05)


def test_fit_loss_curve_is_recorded(pendulum, pendulum_mass2):
    ds = generate_dataset(pendulum, 100, seed=13)
    store = make_learnable(pendulum_mass2, "bob", "mass")
    report = fit(store, ds, optimizer="adam", learning_rate=0.05, epochs=50,
                 tol=0.0)
    assert len(report.losses) >= 50
    assert report.final_loss == report.losses[-1]
    assert min(report.losses) == report.final_loss


def test_fit_rejects_empty_store(pendulum):
    ds = generate_dataset(pendulum, 10, seed=14)
    with pytest.raises(ValueError):
        fit(ParamStore(pendulum), ds)


def test_fit_rejects_unknown_optimizer(pendulum, pendulum_mass2):
    ds = generate_dataset(pendulum, 10, seed=15)
    store = make_learnable(pendulum_mass2, "bob", "mass")
    with pytest.raises(ValueError):
        fit(store, ds, optimizer="lbfgs")


def test_fit_divergence_raises_with_epoch(pendulum, pendulum_mass2):
    ds = generate_dataset(pendulum, 20, seed=16)
    store = make_learnable(pendulum_mass2, "bob", "com")
    with pytest.raises(RuntimeError) as exc:
        fit(store, ds, optimizer="gd", learning_rate=1e6, epochs=50)
    assert "epoch" in str(exc.value)
