"""Shared fixtures: the bundled robot models, loaded once per session."""

import numpy as np
import pytest

import robotdyn as rd


@pytest.fixture(scope="session")
def pendulum():
    return rd.load_model(rd.fixture_path("pendulum"))


@pytest.fixture(scope="session")
def pendulum_mass2():
    return rd.load_model(rd.fixture_path("pendulum_mass2"))


@pytest.fixture(scope="session")
def two_link():
    return rd.load_model(rd.fixture_path("two_link_planar"))


@pytest.fixture(scope="session")
def six_dof():
    return rd.load_model(rd.fixture_path("six_dof_arm"))


@pytest.fixture(scope="session")
def all_models(pendulum, two_link, six_dof):
    return [pendulum, two_link, six_dof]


def random_state(model, rng, scale=1.0):
    """Random in-limit joint state used across the dynamics tests."""
    lo, hi = model.joint_limits()
    lo = np.where(np.isfinite(lo), np.maximum(lo, -np.pi), -np.pi)
    hi = np.where(np.isfinite(hi), np.minimum(hi, np.pi), np.pi)
    q = rng.uniform(lo, hi)
    qd = rng.uniform(-scale, scale, size=model.n)
    tau = rng.uniform(-scale, scale, size=model.n)
    return q, qd, tau
