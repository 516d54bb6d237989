"""Shared builders for randomized operator instances."""

import numpy as np
import pytest

from rlmp.features import sample_rff
from rlmp.qfunc import BellmanInstance
from rlmp.variational import VariationalInstance

GRID = (1.0, 1.25, 1.5, 1.75, 2.0)


def random_points(rng, n):
    """Random states and grid actions for n state-action points."""
    states = rng.standard_normal((n, 4))
    actions = np.asarray(GRID)[rng.integers(0, len(GRID), size=n)]
    return states, actions


def make_bellman_instance(rng, n=4, feature_dim=32, alpha=0.9, sigma=0.1,
                          rff_seed=0):
    """Random sampled-operator instance built from trajectory data."""
    rff = sample_rff(rff_seed, feature_dim)
    states, actions = random_points(rng, n)
    next_states, next_actions = random_points(rng, n)
    g_values = rng.standard_normal(n)
    inst = BellmanInstance.from_trajectories(
        rff, states, actions, next_states, next_actions, g_values,
        alpha, sigma)
    return inst, rff


def make_variational_instance(rng, n=5, feature_dim=24, alpha=0.5, sigma=0.1):
    """Random variational instance over plain Gaussian feature columns."""
    phi_traj = rng.standard_normal((feature_dim, n))
    phi_next = rng.standard_normal((feature_dim, n))
    g_values = rng.standard_normal(n)
    return VariationalInstance(phi_traj=phi_traj, phi_next=phi_next,
                               g_values=g_values, alpha=alpha, sigma=sigma)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
