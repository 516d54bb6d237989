"""Q-functions and data-driven Bellman operators in feature coordinates.

A Q-function is represented by its weight vector q in R^D, so that
Q(z) = q . phi(z) for the random Fourier feature map phi.  A Bellman
operator instance is assembled from sampled trajectory data: column-stacked
features of the sampled state-action points, the one-step losses observed
there, and the features of the successor points under a policy.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from ._linalg import gram, solve_regularized_gram
from .exceptions import EnumerationBudgetError
from .features import (RandomFourierFeatures, encode_batch, feature_matrix,
                       featurize)
from .validation import as_float_array, check_action_grid, check_scalar

# Exact Lipschitz evaluation enumerates |grid|^{n_av} action assignments;
# beyond this budget the caller is pointed at the closed-form upper bound.
ENUMERATION_BUDGET = 100_000


def ridge_dual_basis(phi: np.ndarray, sigma: float) -> np.ndarray:
    """Dual basis Phi (K + sigma I)^{-1} of column-stacked features.

    Inner products of phi(z) with the returned columns are the ridge
    interpolation weights of z against the sampled points: the i-th output
    column, paired with a query feature vector, yields the i-th coefficient
    of the regularized kernel regression on the sample.
    """
    phi = as_float_array(phi, "phi", ndim=2)
    sigma = check_scalar(sigma, "sigma", low=0.0)
    k = gram(phi)
    return solve_regularized_gram(k, phi.T, sigma).T


@dataclass
class BellmanInstance:
    """Data defining one application of the sampled Bellman operator.

    Attributes
    ----------
    psi : (D, n_av) array
        Averaging functions paired with the successor features.
    phi_av : (D, n_av) array
        Features of the averaging points under the evaluated policy.
    g_weights : (D,) array
        Weight-space representation of the one-step loss term.
    alpha : float
        Discount factor in [0, 1].
    sigma : float
        Ridge parameter used to build psi and g_weights.
    phi_traj, g_values, av_states
        Provenance of the instance when built from trajectory samples; kept
        for hyperplane construction and Lipschitz evaluation.
    """

    psi: np.ndarray
    phi_av: np.ndarray
    g_weights: np.ndarray
    alpha: float
    sigma: float
    phi_traj: np.ndarray | None = None
    g_values: np.ndarray | None = None
    av_states: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_features(cls, phi_traj, g_values, phi_av, alpha, sigma,
                      av_states=None) -> "BellmanInstance":
        """Build psi and the loss representation from sampled features.

        The loss vector g is carried into weight space as Phi c with
        (K + sigma I) c = g, the same regularized system that defines psi,
        so a single factorization serves both.
        """
        phi_traj = as_float_array(phi_traj, "phi_traj", ndim=2)
        g_values = as_float_array(g_values, "g_values", ndim=1)
        phi_av = as_float_array(phi_av, "phi_av", ndim=2)
        alpha = check_scalar(alpha, "alpha", low=0.0, high=1.0)
        sigma = check_scalar(sigma, "sigma", low=0.0)
        n = phi_traj.shape[1]
        if g_values.shape[0] != n:
            raise ValueError("g_values length must match phi_traj columns")
        k = gram(phi_traj)
        rhs = np.concatenate([phi_traj.T, g_values[:, None]], axis=1)
        sol = solve_regularized_gram(k, rhs, sigma)
        psi = sol[:, :-1].T
        g_weights = phi_traj @ sol[:, -1]
        return cls(psi=psi, phi_av=phi_av, g_weights=g_weights, alpha=alpha,
                   sigma=sigma, phi_traj=phi_traj, g_values=g_values,
                   av_states=av_states)

    @classmethod
    def from_trajectories(cls, rff: RandomFourierFeatures, states, actions,
                          next_states, next_actions, g_values, alpha,
                          sigma) -> "BellmanInstance":
        """Featurize trajectory samples and their policy successors."""
        states = as_float_array(states, "states", ndim=2)
        next_states = as_float_array(next_states, "next_states", ndim=2)
        phi_traj = feature_matrix(rff, states, actions)
        phi_av = feature_matrix(rff, next_states, next_actions)
        return cls.from_features(phi_traj, g_values, phi_av, alpha, sigma,
                                 av_states=next_states)


def apply_bellman_policy(inst: BellmanInstance, q: np.ndarray) -> np.ndarray:
    """One policy-evaluation Bellman application in weight space.

    Returns the weights of  g + alpha * Psi (Phi_av^T q).
    """
    return inst.g_weights + inst.alpha * (inst.psi @ (inst.phi_av.T @ q))


def apply_bellman_greedy(inst: BellmanInstance, q: np.ndarray,
                         rff: RandomFourierFeatures, action_grid) -> np.ndarray:
    """Greedy Bellman application: entrywise best action at each averaging point.

    The policy-evaluation average Phi_av^T q is replaced by the vector whose
    i-th entry is min over the action grid of Q at the i-th averaging state.
    """
    grid = check_action_grid(action_grid)
    if inst.av_states is None:
        raise ValueError("instance carries no averaging states; "
                         "build it from trajectories to use the greedy map")
    states = inst.av_states
    n = states.shape[0]
    rep_states = np.repeat(states, grid.size, axis=0)
    rep_actions = np.tile(grid, n)
    enc = encode_batch(rep_states, rep_actions)
    vals = (rff.transform(enc) @ q).reshape(n, grid.size)
    vec_min = vals.min(axis=1)
    return inst.g_weights + inst.alpha * (inst.psi @ vec_min)


def hyperplane_normal(inst: BellmanInstance, phi_point: np.ndarray) -> np.ndarray:
    """Normal vector of the one-point Bellman consistency hyperplane.

    For an anchor point with features phi_point, Q-functions consistent with
    the sampled operator at that point satisfy  q . h = g(anchor)  where

        h = phi_point - alpha * sum_i <psi_i, phi_point> phi_av_i.

    The returned h is that normal; pairing it with any q gives
    Q(anchor) - alpha * sum_i psi_i(anchor) Q(averaging point i).
    """
    coefs = inst.psi.T @ phi_point
    return phi_point - inst.alpha * (inst.phi_av @ coefs)


def hyperplane_loss(q: np.ndarray, normal: np.ndarray, target: float) -> float:
    """Quadratic penalty 0.5 * (q . normal - target)^2."""
    resid = float(q @ normal - target)
    return 0.5 * resid * resid


def sgd_step(q: np.ndarray, normal: np.ndarray, target: float,
             eta: float) -> np.ndarray:
    """Gradient step on the hyperplane loss.

    With eta = 1 / ||normal||^2 this is the exact metric projection onto the
    hyperplane {q : q . normal = target}; a zero normal leaves q unchanged.
    """
    eta = check_scalar(eta, "eta", positive=True)
    resid = float(q @ normal - target)
    return q - (eta * resid) * normal


def _spectral_norm_psd(mat: np.ndarray) -> float:
    vals = np.linalg.eigvalsh(mat)
    return float(max(vals[-1], 0.0))


def lipschitz_constant(inst: BellmanInstance, rff: RandomFourierFeatures,
                       action_grid, mode: str = "exact",
                       budget: int = ENUMERATION_BUDGET) -> float:
    """Lipschitz constant of the sampled Bellman maps in weight space.

    The constant is  alpha * sqrt(||Psi^T Psi||_2 * s)  where s bounds the
    spectral norm of the Gram matrix of averaging-point features over all
    action assignments.  mode="exact" maximizes over every assignment of grid
    actions to the averaging states (|grid|^{n_av} cases, refused above
    `budget`); mode="upper_bound" uses the trace bound
    s <= n_av * max_z ||phi(z)||^2, which never falls below the exact value.
    """
    grid = check_action_grid(action_grid)
    if inst.av_states is None:
        raise ValueError("instance carries no averaging states")
    states = inst.av_states
    n_av = states.shape[0]
    k_psi_norm = _spectral_norm_psd(gram(inst.psi))

    rep_states = np.repeat(states, grid.size, axis=0)
    rep_actions = np.tile(grid, n_av)
    feats = rff.transform(encode_batch(rep_states, rep_actions))
    feats = feats.reshape(n_av, grid.size, -1)

    if mode == "upper_bound":
        max_diag = float(np.max(np.sum(feats * feats, axis=2)))
        s = n_av * max_diag
    elif mode == "exact":
        n_comb = grid.size ** n_av
        if n_comb > budget:
            raise EnumerationBudgetError(
                f"exact mode needs {n_comb} action assignments "
                f"(budget {budget}); use mode='upper_bound'")
        rows = np.arange(n_av)
        s = 0.0
        for assign in itertools.product(range(grid.size), repeat=n_av):
            sel = feats[rows, assign]
            s = max(s, _spectral_norm_psd(sel @ sel.T))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return inst.alpha * float(np.sqrt(k_psi_norm * s))
