"""Closed-form policy-evaluation maps and their common two-parameter form.

Several classical policy-evaluation operators arise as solutions of ridge
variational problems over sampled trajectory data.  Each solution can also be
rebuilt from a pair (loss representation, averaging functions) applied through
the generic map  q -> g + alpha * Psi (Phi_av^T q),  which is how the sampled
operator of :mod:`rlmp.qfunc` is parameterized.  This module provides both
routes for each map so they can be checked against each other, plus an exact
tabular operator for finite MDPs.

A note on domains: the closed forms produce outputs in the span of the
sampled feature columns.  The unconstrained variational minimizers agree with
them there, but carry the input's orthogonal component through the ridge
term unchanged.  Identities between the two routes are therefore exact on the
feature span, while general inputs pick up that orthogonal component; the
residual map keeps it (it is a proximal operator on the whole space), and the
tests pin down both relations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._linalg import COND_LIMIT, gram, pinv_psd, solve_regularized_gram
from .exceptions import SingularSystemError
from .qfunc import BellmanInstance, apply_bellman_policy
from .validation import as_float_array, check_scalar


@dataclass
class VariationalInstance:
    """Sampled data for the variational maps.

    phi_traj : (D, N) column features of the sampled state-action points.
    phi_next : (D, N) column features of the successor points under the
        evaluated policy.
    g_values : (N,) one-step losses at the sampled points.
    alpha : discount factor in [0, 1).
    sigma : ridge parameter, >= 0.
    """

    phi_traj: np.ndarray
    phi_next: np.ndarray
    g_values: np.ndarray
    alpha: float
    sigma: float

    def __post_init__(self):
        self.phi_traj = as_float_array(self.phi_traj, "phi_traj", ndim=2)
        self.phi_next = as_float_array(self.phi_next, "phi_next", ndim=2)
        self.g_values = as_float_array(self.g_values, "g_values", ndim=1)
        if self.phi_next.shape != self.phi_traj.shape:
            raise ValueError("phi_next must match phi_traj in shape")
        if self.g_values.shape[0] != self.phi_traj.shape[1]:
            raise ValueError("g_values length must match feature columns")
        self.alpha = check_scalar(self.alpha, "alpha", low=0.0, high=1.0)
        self.sigma = check_scalar(self.sigma, "sigma", low=0.0)


def lspe_map(inst: VariationalInstance, q: np.ndarray,
             verify: bool = True) -> np.ndarray:
    """Least-squares policy-evaluation map in closed form.

    Returns Phi (K + sigma I)^{-1} (g + sigma K^+ Phi^T q + alpha Phi_next^T q),
    the span component of the ridge variational solution; see the module note
    for how it relates to the unconstrained minimizer.

    With verify=True and sigma > 0 the result is checked against an
    independent dense ridge solve in the ambient feature space (whose output
    carries q's orthogonal component through unchanged); disagreement beyond
    1e-8 relative raises SingularSystemError.
    """
    phi = inst.phi_traj
    k = gram(phi)
    rhs = inst.g_values + inst.alpha * (inst.phi_next.T @ q)
    k_pinv = None
    if inst.sigma > 0.0:
        k_pinv = pinv_psd(k)
        rhs = rhs + inst.sigma * (k_pinv @ (phi.T @ q))
    out = phi @ solve_regularized_gram(k, rhs, inst.sigma)
    if verify and inst.sigma > 0.0:
        dim = phi.shape[0]
        lhs = phi @ phi.T + inst.sigma * np.eye(dim)
        target = phi @ (inst.g_values + inst.alpha * (inst.phi_next.T @ q))
        direct = np.linalg.solve(lhs, target + inst.sigma * q)
        q_orth = q - phi @ (k_pinv @ (phi.T @ q))
        gap = float(np.linalg.norm(out - (direct - q_orth)))
        lim = 1.0e-8 * (1.0 + float(np.linalg.norm(out)))
        if gap > lim:
            raise SingularSystemError(
                f"closed form disagrees with dense ridge solve by {gap:.3e}")
    return out


def lspe_map_reconstructed(inst: VariationalInstance, q: np.ndarray) -> np.ndarray:
    """LSPE rebuilt from its two-parameter form and applied generically.

    The loss representation is Phi gamma with gamma = (K + sigma I)^{-1} g;
    the averaging family pairs the doubled point set [Phi, Phi_next] with
    the product  alpha * Upsilon = (K + sigma I)^{-1} [sigma K^+, alpha I],
    which is formed directly so the construction stays defined at alpha = 0.
    """
    phi = inst.phi_traj
    n = phi.shape[1]
    k = gram(phi)
    gamma = solve_regularized_gram(k, inst.g_values, inst.sigma)
    bracket = np.concatenate(
        [inst.sigma * pinv_psd(k), inst.alpha * np.eye(n)], axis=1)
    upsilon_alpha = solve_regularized_gram(k, bracket, inst.sigma)
    phi_av = np.concatenate([phi, inst.phi_next], axis=1)
    return phi @ gamma + (phi @ upsilon_alpha) @ (phi_av.T @ q)


def lstd_fixed_point(inst: VariationalInstance) -> np.ndarray:
    """Least-squares temporal-difference solution Phi (K - alpha Phi_next^T Phi)^{-1} g.

    The result is a fixed point of the LSPE map; the residual of the weight-
    space fixed-point relation is verified before returning.
    """
    if inst.alpha >= 1.0:
        raise ValueError("alpha must be < 1 for the fixed-point solve")
    phi = inst.phi_traj
    k = gram(phi)
    m = k - inst.alpha * (inst.phi_next.T @ phi)
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularSystemError(
            f"temporal-difference system has condition estimate {cond:.3e}")
    coef = np.linalg.solve(m, inst.g_values)
    q = phi @ coef
    resid = float(np.linalg.norm(lspe_map(inst, q, verify=False) - q))
    lim = 1.0e-8 * (1.0 + float(np.linalg.norm(q)))
    if resid > lim:
        raise SingularSystemError(
            f"fixed-point residual {resid:.3e} exceeds {lim:.3e}")
    return q


def bellman_residual_map(inst: VariationalInstance, q: np.ndarray) -> np.ndarray:
    """Bellman-residual map: the proximal ridge solution on the whole space.

    Solves  min_w ||Phi_td^T w - g||^2 + sigma ||w - q||^2  with
    Phi_td = Phi - alpha Phi_next, via the equivalent small-system form
    w = Phi_td (K_td + sigma I)^{-1} (g - Phi_td^T q) + q.
    Requires sigma > 0.
    """
    if inst.sigma <= 0.0:
        raise ValueError("the residual map requires sigma > 0")
    phi_td = inst.phi_traj - inst.alpha * inst.phi_next
    k_td = gram(phi_td)
    coef = solve_regularized_gram(k_td, inst.g_values - phi_td.T @ q, inst.sigma)
    return q + phi_td @ coef


def bellman_residual_reconstructed(inst: VariationalInstance,
                                   q: np.ndarray) -> np.ndarray:
    """Residual map rebuilt from its two-parameter form.

    Uses the temporal-difference features Phi_td for both the loss
    representation (gamma = (K_td + sigma I)^{-1} g) and the averaging
    functions, with the product
    alpha * Upsilon = (K_td + sigma I)^{-1} K_td^+ [sigma I, -alpha sigma I]
    over the doubled point set [Phi, Phi_next].  Exact on the span of
    Phi_td; see the module note.
    """
    if inst.sigma <= 0.0:
        raise ValueError("the residual map requires sigma > 0")
    phi_td = inst.phi_traj - inst.alpha * inst.phi_next
    n = phi_td.shape[1]
    k_td = gram(phi_td)
    gamma = solve_regularized_gram(k_td, inst.g_values, inst.sigma)
    eye = np.eye(n)
    bracket = pinv_psd(k_td) @ np.concatenate(
        [inst.sigma * eye, -inst.alpha * inst.sigma * eye], axis=1)
    upsilon_alpha = solve_regularized_gram(k_td, bracket, inst.sigma)
    phi_av = np.concatenate([inst.phi_traj, inst.phi_next], axis=1)
    return phi_td @ gamma + (phi_td @ upsilon_alpha) @ (phi_av.T @ q)


def ridge_bellman_map(inst: VariationalInstance, q: np.ndarray) -> np.ndarray:
    """Ridge-interpolated Bellman map: Phi (K + sigma I)^{-1} (g + alpha Phi_next^T q).

    This is the map the sampled operator of :mod:`rlmp.qfunc` applies when its
    instance is assembled from the same data, with the averaging family taken
    directly as the successor features.
    """
    phi = inst.phi_traj
    k = gram(phi)
    rhs = inst.g_values + inst.alpha * (inst.phi_next.T @ q)
    return phi @ solve_regularized_gram(k, rhs, inst.sigma)


def as_bellman_instance(inst: VariationalInstance) -> BellmanInstance:
    """Assemble the equivalent sampled-operator instance."""
    return BellmanInstance.from_features(
        inst.phi_traj, inst.g_values, inst.phi_next, inst.alpha, inst.sigma)


def apply_equivalent_bellman(inst: VariationalInstance, q: np.ndarray) -> np.ndarray:
    """Apply the qfunc sampled operator built from the same data."""
    return apply_bellman_policy(as_bellman_instance(inst), q)


def tabular_bellman(transitions: np.ndarray, losses: np.ndarray, alpha: float,
                    q_table: np.ndarray, policy=None) -> np.ndarray:
    """Exact Bellman application on a finite MDP.

    transitions : (S, A, S) row-stochastic kernel (rows sum to 1 within 1e-12).
    losses : (S, A) one-step losses.
    alpha : discount in [0, 1].
    q_table : (S, A) current Q values.
    policy : optional (S,) integer actions; greedy (entrywise min) when None.
    """
    p = as_float_array(transitions, "transitions")
    g = as_float_array(losses, "losses", ndim=2)
    q = as_float_array(q_table, "q_table", ndim=2)
    alpha = check_scalar(alpha, "alpha", low=0.0, high=1.0)
    if p.ndim != 3 or p.shape[0] != p.shape[2] or p.shape[:2] != g.shape:
        raise ValueError("transitions must have shape (S, A, S) matching losses")
    if q.shape != g.shape:
        raise ValueError("q_table must match losses in shape")
    if np.any(p < 0.0):
        raise ValueError("transitions must be nonnegative")
    row_sums = p.sum(axis=2)
    if np.max(np.abs(row_sums - 1.0)) > 1.0e-12:
        raise ValueError("transition rows must sum to 1 within 1e-12")
    if policy is None:
        next_vals = q.min(axis=1)
    else:
        policy = np.asarray(policy)
        next_vals = q[np.arange(q.shape[0]), policy]
    return g + alpha * (p @ next_vals)
