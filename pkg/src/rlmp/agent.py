"""Online exponent-selection agent for the LMP filter.

The agent treats the filter exponent as an action, summarizes the filter's
situation in the 4-dimensional environment state, and learns a Q-function in
random Fourier feature space by approximate policy iteration: the greedy
policy is refreshed every `improvement_period` iterations and held fixed in
between, while every iteration performs one hyperplane-projection update of
the Q weights anchored at the previous state-action point, optionally
followed by one replayed update anchored at a buffered point.

The buffer stores experienced transitions together with counterfactual ones:
whenever the pre-transition state is novel (kernel distance to every stored
state above a threshold), the realized tuple is inserted along with one tuple
per grid action, each rebuilt by re-running the previous filter update with
that action and re-deriving the successor state and loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .environment import FilterState, lmp_step
from .exceptions import EmptyTrajectoryError, FilterDivergenceError
from .features import (RandomFourierFeatures, action_features, encode_batch,
                       feature_matrix, featurize, sample_rff)
from .filters import EpisodeRecord, SegmentSchedule, _StreamFilter
from ._linalg import solve_regularized_gram
from .validation import as_float_array, check_action_grid, check_scalar

STATE_DIM = 4

# When enabled, every projection update asserts that it weakly decreased its
# own anchored hyperplane loss (valid whenever eta < 2 / ||normal||^2).
DEBUG_CHECKS = False


@dataclass
class AgentConfig:
    """Hyperparameters of the exponent-selection agent."""

    action_grid: tuple = (1.0, 1.25, 1.5, 1.75, 2.0)
    alpha: float = 0.9
    eta: float = 0.1
    sigma: float = 0.1
    delta_s: float = 0.01
    delta_z: float = 0.02
    improvement_period: int = 500
    buffer_cap: int = 5000
    replay: bool = True
    feature_dim: int = 200
    bandwidth: float = 1.0
    rho: float = 1e-3
    m_av: int = 300
    varpi: float = 0.3

    def __post_init__(self):
        self.action_grid = tuple(float(a) for a in
                                 check_action_grid(self.action_grid))
        check_scalar(self.alpha, "alpha", low=0.0, high=1.0)
        check_scalar(self.eta, "eta", positive=True)
        check_scalar(self.sigma, "sigma", low=0.0)
        check_scalar(self.delta_s, "delta_s", low=0.0)
        check_scalar(self.delta_z, "delta_z", low=0.0)
        check_scalar(self.bandwidth, "bandwidth", positive=True)
        if self.improvement_period < 1:
            raise ValueError("improvement_period must be >= 1")
        if self.buffer_cap < 1:
            raise ValueError("buffer_cap must be >= 1")


def _kernel_sq_threshold(delta: float, bandwidth: float) -> float:
    """Squared-distance threshold equivalent to a kernel-distance bound.

    1 - exp(-d^2 / (2 w^2)) <= delta  iff  d^2 <= -2 w^2 log(1 - delta);
    delta = 0 admits only exact matches and delta >= 1 admits everything.
    """
    if delta >= 1.0:
        return np.inf
    return -2.0 * bandwidth * bandwidth * math.log1p(-delta)


class ReplayBuffer:
    """Ring buffer of transition tuples (state, action, loss, next state).

    Eviction is oldest-first once capacity is reached.  Novelty and
    trajectory queries use Gaussian-kernel distances: on states alone for
    novelty, on state-action points for trajectory matching.
    """

    def __init__(self, capacity: int, bandwidth: float):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.bandwidth = bandwidth
        self.states = np.empty((capacity, STATE_DIM))
        self.actions = np.empty(capacity)
        self.losses = np.empty(capacity)
        self.next_states = np.empty((capacity, STATE_DIM))
        self.count = 0
        self._head = 0

    def __len__(self) -> int:
        return self.count

    def is_novel(self, state: np.ndarray, delta_s: float) -> bool:
        """True when every stored state is farther than delta_s in kernel distance."""
        if self.count == 0:
            return True
        thresh = _kernel_sq_threshold(delta_s, self.bandwidth)
        diff = self.states[:self.count] - state
        sq = np.einsum("ij,ij->i", diff, diff)
        return bool(np.min(sq) > thresh)

    def insert_rows(self, states, actions, losses, next_states):
        """Append rows, wrapping over the oldest entries at capacity."""
        states = np.atleast_2d(states)
        m = states.shape[0]
        if m > self.capacity:
            raise ValueError("cannot insert more rows than the capacity")
        idx = (self._head + np.arange(m)) % self.capacity
        self.states[idx] = states
        self.actions[idx] = actions
        self.losses[idx] = losses
        self.next_states[idx] = np.atleast_2d(next_states)
        self._head = int((self._head + m) % self.capacity)
        self.count = min(self.count + m, self.capacity)

    def select_indices(self, state: np.ndarray, action: float,
                       delta_z: float) -> np.ndarray:
        """Indices whose state-action point is within delta_z of the anchor."""
        if self.count == 0:
            return np.empty(0, dtype=np.intp)
        thresh = _kernel_sq_threshold(delta_z, self.bandwidth)
        diff = self.states[:self.count] - state
        sq = np.einsum("ij,ij->i", diff, diff)
        da = self.actions[:self.count] - action
        sq = sq + da * da
        return np.nonzero(sq <= thresh)[0]

    def eligible_excluding(self, state: np.ndarray, action: float) -> np.ndarray:
        """Indices whose (state, action) differs from the given anchor exactly."""
        if self.count == 0:
            return np.empty(0, dtype=np.intp)
        same_a = self.actions[:self.count] == action
        same_s = np.all(self.states[:self.count] == state, axis=1)
        return np.nonzero(~(same_a & same_s))[0]


def greedy_action(q: np.ndarray, state: np.ndarray, action_grid,
                  rff: RandomFourierFeatures) -> float:
    """Action minimizing the Q-function at a state; ties pick the smallest."""
    grid = np.asarray(action_grid, dtype=np.float64)
    vals = action_features(rff, state, grid) @ q
    return float(grid[int(np.argmin(vals))])


def greedy_actions_batch(q: np.ndarray, states: np.ndarray, grid: np.ndarray,
                         rff: RandomFourierFeatures) -> np.ndarray:
    """Greedy actions at several states at once."""
    m = states.shape[0]
    enc = encode_batch(np.repeat(states, grid.size, axis=0),
                       np.tile(grid, m))
    vals = (rff._scale * np.cos(enc @ rff.frequencies_.T + rff.phases_)) @ q
    idx = vals.reshape(m, grid.size).argmin(axis=1)
    return grid[idx]


def buffer_update(buffer: ReplayBuffer, delta_s: float, state_prev, action_prev,
                  loss_value: float, state_now, cf_actions, cf_states,
                  cf_losses) -> bool:
    """Insert the realized tuple plus all counterfactuals when the state is novel.

    Returns True when an insertion happened.  The realized tuple and one
    tuple per grid action are inserted together (the realized action appears
    twice, once realized and once rebuilt).
    """
    if not buffer.is_novel(np.asarray(state_prev, dtype=np.float64), delta_s):
        return False
    cf_actions = np.asarray(cf_actions, dtype=np.float64)
    m = cf_actions.size + 1
    states = np.broadcast_to(np.asarray(state_prev, dtype=np.float64),
                             (m, STATE_DIM))
    actions = np.concatenate([[action_prev], cf_actions])
    losses = np.concatenate([[loss_value], np.asarray(cf_losses)])
    nexts = np.concatenate([np.asarray(state_now)[None, :], cf_states], axis=0)
    buffer.insert_rows(states, actions, losses, nexts)
    return True


def select_trajectories(buffer: ReplayBuffer, state, action, delta_z: float,
                        current: tuple | None = None):
    """Trajectory triples near an anchor state-action point.

    Returns (states, actions, next_states) stacking the buffer entries within
    `delta_z` of the anchor, with the current realized triple appended last
    when given.  Raises EmptyTrajectoryError when nothing qualifies and no
    current triple is supplied.
    """
    state = np.asarray(state, dtype=np.float64)
    idx = buffer.select_indices(state, action, delta_z)
    if idx.size == 0 and current is None:
        raise EmptyTrajectoryError(
            "no buffer entry lies within delta_z of the anchor and no "
            "current triple was supplied")
    parts_s = [buffer.states[idx]]
    parts_a = [buffer.actions[idx]]
    parts_n = [buffer.next_states[idx]]
    if current is not None:
        cur_s, cur_a, cur_n = current
        parts_s.append(np.asarray(cur_s, dtype=np.float64)[None, :])
        parts_a.append(np.asarray([cur_a], dtype=np.float64))
        parts_n.append(np.asarray(cur_n, dtype=np.float64)[None, :])
    return (np.concatenate(parts_s, axis=0), np.concatenate(parts_a),
            np.concatenate(parts_n, axis=0))


def _projection_update(q, cfg, rff, policy_weights, states, actions,
                       next_states, phi_anchor, target):
    """One hyperplane SGD step anchored at phi_anchor with the given target.

    Builds the sampled operator's averaging coefficients from the trajectory
    features, forms the consistency-hyperplane normal, and steps q against
    its quadratic loss.
    """
    grid = np.asarray(cfg.action_grid)
    next_actions = greedy_actions_batch(policy_weights, next_states, grid, rff)
    phi_traj = feature_matrix(rff, states, actions)
    phi_next = feature_matrix(rff, next_states, next_actions)
    k = phi_traj.T @ phi_traj
    coefs = solve_regularized_gram(k, phi_traj.T @ phi_anchor, cfg.sigma)
    normal = phi_anchor - cfg.alpha * (phi_next @ coefs)
    resid = float(q @ normal - target)
    q_new = q - (cfg.eta * resid) * normal
    if DEBUG_CHECKS:
        norm_sq = float(normal @ normal)
        if norm_sq > 0.0 and cfg.eta < 2.0 / norm_sq:
            before = 0.5 * resid * resid
            resid_after = float(q_new @ normal - target)
            after = 0.5 * resid_after * resid_after
            assert after <= before + 1.0e-12, (
                f"projection step raised its own loss: {before} -> {after}")
    return q_new


def evaluation_step(q: np.ndarray, buffer: ReplayBuffer, cfg: AgentConfig,
                    rff: RandomFourierFeatures, policy_weights: np.ndarray,
                    state_prev, action_prev, loss_value: float,
                    state_now) -> np.ndarray:
    """Policy-evaluation update anchored at the previous state-action point.

    The trajectory set joins the buffer entries near the anchor with the
    current realized triple; the one-step loss target is the freshly computed
    windowed loss of the transition.
    """
    states, actions, nexts = select_trajectories(
        buffer, state_prev, action_prev, cfg.delta_z,
        current=(state_prev, action_prev, state_now))
    phi_anchor = featurize(rff, np.asarray(state_prev, dtype=np.float64),
                           action_prev)
    return _projection_update(q, cfg, rff, policy_weights, states, actions,
                              nexts, phi_anchor, loss_value)


def replay_step(q: np.ndarray, buffer: ReplayBuffer, cfg: AgentConfig,
                rff: RandomFourierFeatures, policy_weights: np.ndarray,
                exclude_state, exclude_action, rng: np.random.Generator
                ) -> np.ndarray:
    """One replayed update anchored at a uniformly sampled buffer entry.

    Entries whose state-action point exactly equals the excluded anchor are
    not sampled; with no eligible entry the weights are returned unchanged.
    The anchor's stored loss is the target, and its trajectory set is drawn
    from the buffer alone.
    """
    pool = buffer.eligible_excluding(
        np.asarray(exclude_state, dtype=np.float64), exclude_action)
    if pool.size == 0:
        return q
    j = int(pool[rng.integers(pool.size)])
    anchor_state = buffer.states[j].copy()
    anchor_action = float(buffer.actions[j])
    target = float(buffer.losses[j])
    states, actions, nexts = select_trajectories(
        buffer, anchor_state, anchor_action, cfg.delta_z, current=None)
    phi_anchor = featurize(rff, anchor_state, anchor_action)
    return _projection_update(q, cfg, rff, policy_weights, states, actions,
                              nexts, phi_anchor, target)


def run_episode(X, Y, cfg: AgentConfig, rff: RandomFourierFeatures,
                rng: np.random.Generator | None = None,
                theta_star_segments=None) -> EpisodeRecord:
    """Run the agent over a data stream.

    X is the (T, L) regressor matrix in time order and Y the observations.
    The filter starts at zero, the Q weights at zero, and the greedy policy
    is refreshed at iteration 0 and every `improvement_period` iterations
    thereafter.  The first iteration performs no evaluation update (there is
    no previous transition yet).  Non-finite errors or filter vectors abort
    the run with a FilterDivergenceError carrying the iteration.
    """
    X = as_float_array(X, "X", ndim=2)
    Y = as_float_array(Y, "Y", ndim=1)
    if Y.shape[0] != X.shape[0]:
        raise ValueError("Y length must match X rows")
    if rng is None:
        rng = np.random.default_rng(0)
    n_iters, dim = X.shape
    grid = np.asarray(cfg.action_grid)

    fs = FilterState(dim=dim, rho=cfg.rho, m_av=cfg.m_av, varpi=cfg.varpi)
    buffer = ReplayBuffer(cfg.buffer_cap, cfg.bandwidth)
    q = np.zeros(cfg.feature_dim)
    policy_weights = q
    schedule = (SegmentSchedule(theta_star_segments)
                if theta_star_segments is not None else None)

    exponents = np.empty(n_iters)
    deviation = np.full(n_iters, np.nan)
    states = np.empty((n_iters, STATE_DIM))
    losses = np.empty(n_iters)
    state_prev = None
    action_prev = None

    for n in range(n_iters):
        x = X[n]
        y = float(Y[n])
        err = y - float(x @ fs.theta)
        if not math.isfinite(err):
            raise FilterDivergenceError(
                f"prediction error became non-finite ({err})", iteration=n)
        state_now = fs.successor_allow_empty(err, x)

        if n % cfg.improvement_period == 0:
            policy_weights = q.copy()
        action = greedy_action(policy_weights, state_now, grid, rff)

        if schedule is not None:
            deviation[n] = np.linalg.norm(fs.theta - schedule.theta_at(n))
        exponents[n] = action
        states[n] = state_now
        losses[n] = state_now[1]

        theta_new, _ = lmp_step(fs.theta, x, y, action, cfg.rho)
        if not np.all(np.isfinite(theta_new)):
            raise FilterDivergenceError(
                "filter vector became non-finite", iteration=n)

        if n >= 1:
            loss_value = float(state_now[1])
            cf_states = fs.counterfactual_successors(grid, x, y)
            buffer_update(buffer, cfg.delta_s, state_prev, action_prev,
                          loss_value, state_now, grid, cf_states,
                          cf_states[:, 1])
            q = evaluation_step(q, buffer, cfg, rff, policy_weights,
                                state_prev, action_prev, loss_value,
                                state_now)
            if cfg.replay:
                q = replay_step(q, buffer, cfg, rff, policy_weights,
                                state_prev, action_prev, rng)

        fs.advance(theta_new, x, y, err, state_now)
        state_prev = state_now
        action_prev = action

    return EpisodeRecord(exponents=exponents, deviation=deviation,
                         theta=fs.theta, states=states, losses=losses,
                         q_weights=q)


class PolicyIterationLmp(_StreamFilter):
    """Exponent-learning LMP filter with the estimator surface of the baselines.

    `run` executes the full agent episode; `fit` wraps it and exposes the
    final filter vector as `coef_`.  All randomness (feature map draws and
    replay sampling) derives from `seed`.
    """

    def __init__(self, action_grid=(1.0, 1.25, 1.5, 1.75, 2.0),
                 rho: float = 1e-3, m_av: int = 300, varpi: float = 0.3,
                 alpha: float = 0.9, eta: float = 0.1, sigma: float = 0.1,
                 delta_s: float = 0.01, delta_z: float = 0.02,
                 improvement_period: int = 500, buffer_cap: int = 5000,
                 replay: bool = True, feature_dim: int = 200,
                 bandwidth: float = 1.0, seed: int = 0):
        self.action_grid = action_grid
        self.rho = rho
        self.m_av = m_av
        self.varpi = varpi
        self.alpha = alpha
        self.eta = eta
        self.sigma = sigma
        self.delta_s = delta_s
        self.delta_z = delta_z
        self.improvement_period = improvement_period
        self.buffer_cap = buffer_cap
        self.replay = replay
        self.feature_dim = feature_dim
        self.bandwidth = bandwidth
        self.seed = seed

    def _config(self) -> AgentConfig:
        return AgentConfig(
            action_grid=tuple(self.action_grid), alpha=self.alpha,
            eta=self.eta, sigma=self.sigma, delta_s=self.delta_s,
            delta_z=self.delta_z, improvement_period=self.improvement_period,
            buffer_cap=self.buffer_cap, replay=self.replay,
            feature_dim=self.feature_dim, bandwidth=self.bandwidth,
            rho=self.rho, m_av=self.m_av, varpi=self.varpi)

    def run(self, X, y, theta_star_segments=None) -> EpisodeRecord:
        cfg = self._config()
        rff = sample_rff(self.seed, cfg.feature_dim, cfg.bandwidth)
        rng = np.random.default_rng([self.seed, 1])
        return run_episode(X, y, cfg, rff, rng,
                           theta_star_segments=theta_star_segments)
