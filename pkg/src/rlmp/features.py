"""Gaussian-kernel feature maps for state-action points.

A point pairs a 4-dimensional filter state with a scalar action (the LMP
exponent).  Points are encoded as vectors in R^5 by appending the action to
the state, and all kernel evaluations and random Fourier features operate on
that encoding.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

STATE_DIM = 4
ENC_DIM = STATE_DIM + 1


def encode(state, action) -> np.ndarray:
    """Concatenate a state vector and scalar action into one R^5 point."""
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (STATE_DIM,):
        raise ValueError(f"state must have shape ({STATE_DIM},), got {state.shape}")
    out = np.empty(ENC_DIM)
    out[:STATE_DIM] = state
    out[STATE_DIM] = action
    return out


def encode_batch(states, actions) -> np.ndarray:
    """Encode N states and N actions into an (N, 5) array."""
    states = np.asarray(states, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.float64)
    if states.ndim != 2 or states.shape[1] != STATE_DIM:
        raise ValueError(f"states must have shape (N, {STATE_DIM})")
    if actions.shape != (states.shape[0],):
        raise ValueError("actions must be a vector matching states")
    return np.hstack([states, actions[:, None]])


def gaussian_kernel(a, b, bandwidth: float) -> np.ndarray | float:
    """Gaussian kernel exp(-||a - b||^2 / (2 bandwidth^2)).

    `a` may be a single vector or an (n, d) batch of rows; `b` is a single
    vector.  Returns a scalar or a length-n array accordingly.
    """
    if bandwidth <= 0.0:
        raise ValueError("bandwidth must be > 0")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    diff = a - b
    sq = np.sum(diff * diff, axis=-1)
    return np.exp(-sq / (2.0 * bandwidth**2))


class RandomFourierFeatures(TransformerMixin, BaseEstimator):
    """Random Fourier feature map approximating a Gaussian kernel.

    The map is z -> sqrt(2/D) * cos(V z + u) with frequency rows V drawn
    i.i.d. from N(0, I / bandwidth^2) and phases u drawn uniformly from
    [0, 2*pi).  Inner products of mapped points approximate
    exp(-||z - z'||^2 / (2 bandwidth^2)).

    Parameters
    ----------
    feature_dim : int
        Number of random features D.
    bandwidth : float
        Kernel bandwidth (length scale) of the approximated Gaussian kernel.
    seed : int
        Seed for the frequency and phase draws; the map is a deterministic
        function of (seed, feature_dim, bandwidth, input dimension).
    """

    def __init__(self, feature_dim: int = 200, bandwidth: float = 1.0, seed: int = 0):
        self.feature_dim = feature_dim
        self.bandwidth = bandwidth
        self.seed = seed

    def _sample(self, n_features: int):
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")
        if self.bandwidth <= 0.0:
            raise ValueError("bandwidth must be > 0")
        rng = np.random.default_rng(self.seed)
        self.frequencies_ = rng.standard_normal((self.feature_dim, n_features)) / self.bandwidth
        self.phases_ = rng.uniform(0.0, 2.0 * np.pi, size=self.feature_dim)
        self.n_features_in_ = n_features
        # cached views for the state-action fast paths
        self._scale = np.sqrt(2.0 / self.feature_dim)
        if n_features == ENC_DIM:
            self._state_freq = self.frequencies_[:, :STATE_DIM]
            self._action_freq = self.frequencies_[:, STATE_DIM]
        return self

    def fit(self, X, y=None):
        """Draw frequencies and phases sized to the width of X."""
        X = check_array(X, dtype=np.float64)
        return self._sample(X.shape[1])

    def transform(self, X) -> np.ndarray:
        """Map rows of X to random Fourier features, one row per sample."""
        check_is_fitted(self, "frequencies_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} columns, expected {self.n_features_in_}")
        return self._scale * np.cos(X @ self.frequencies_.T + self.phases_)


def sample_rff(seed: int, feature_dim: int, bandwidth: float = 1.0,
               n_features: int = ENC_DIM) -> RandomFourierFeatures:
    """Build a fitted feature map without reference data."""
    rff = RandomFourierFeatures(feature_dim=feature_dim, bandwidth=bandwidth, seed=seed)
    return rff._sample(n_features)


def featurize(rff: RandomFourierFeatures, state, action: float) -> np.ndarray:
    """Feature vector of a single state-action point, shape (feature_dim,)."""
    z = encode(state, action)
    return rff._scale * np.cos(rff.frequencies_ @ z + rff.phases_)


def feature_matrix(rff: RandomFourierFeatures, states, actions) -> np.ndarray:
    """Column-stacked features of N points, shape (feature_dim, N)."""
    enc = encode_batch(states, actions)
    if enc.shape[0] == 0:
        raise ValueError("at least one point is required")
    return (rff._scale * np.cos(enc @ rff.frequencies_.T + rff.phases_)).T


def action_features(rff: RandomFourierFeatures, state, action_grid) -> np.ndarray:
    """Features of one state paired with every action, shape (len(grid), feature_dim).

    Computes the state part of the phase once and sweeps the action column,
    which is the hot path of greedy action selection.
    """
    state = np.asarray(state, dtype=np.float64)
    base = rff._state_freq @ state + rff.phases_
    grid = np.asarray(action_grid, dtype=np.float64)
    return rff._scale * np.cos(base[None, :] + grid[:, None] * rff._action_freq[None, :])
