"""LMP filter baselines with a sklearn-style estimator surface.

Every filter consumes a regressor matrix X (one row per iteration, in time
order) and observations y, runs its online recursion from a zero initial
vector, and reports the per-iteration exponent and (optionally) the deviation
from a known ground-truth system.  `fit` wraps the recursion for ecosystem
use; `run` exposes the full per-iteration record.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_X_y, check_array, check_is_fitted

from .environment import lmp_step
from .exceptions import FilterDivergenceError
from .validation import check_action_grid, check_scalar


@dataclass
class EpisodeRecord:
    """Per-iteration trace of one filter run.

    exponents : (T,) exponent used at each iteration.
    deviation : (T,) Euclidean distance of the filter vector from the active
        ground-truth system at the start of each iteration (NaN when no
        ground truth was supplied).
    theta : final filter vector.
    states, losses, q_weights : populated by the learning agent only.
    """

    exponents: np.ndarray
    deviation: np.ndarray
    theta: np.ndarray
    states: np.ndarray | None = None
    losses: np.ndarray | None = None
    q_weights: np.ndarray | None = None


class SegmentSchedule:
    """Piecewise-constant ground-truth schedule [(start_iter, theta), ...]."""

    def __init__(self, segments):
        starts = [int(s) for s, _ in segments]
        if starts != sorted(starts) or (segments and starts[0] != 0):
            raise ValueError("segments must start at 0 and be sorted")
        self._starts = starts
        self._thetas = [np.asarray(t, dtype=np.float64) for _, t in segments]
        self._idx = 0

    def theta_at(self, n: int) -> np.ndarray:
        while (self._idx + 1 < len(self._starts)
               and n >= self._starts[self._idx + 1]):
            self._idx += 1
        return self._thetas[self._idx]


class _StreamFilter(RegressorMixin, BaseEstimator):
    """Shared recursion frame; subclasses choose the exponent per iteration."""

    def _setup_run(self, n_iters: int):
        """Hook for per-run randomness; called once before the loop."""

    def _exponent_at(self, n: int) -> float:
        raise NotImplementedError

    def _update(self, theta, x, y, n):
        p = self._exponent_at(n)
        theta_new, _ = lmp_step(theta, x, y, p, self.rho)
        return theta_new, p

    def run(self, X, y, theta_star_segments=None) -> EpisodeRecord:
        """Run the recursion over the stream and return its trace."""
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValueError("X must be (T, L) with matching y of length T")
        check_scalar(self.rho, "rho", positive=True)
        n_iters, dim = X.shape
        schedule = (SegmentSchedule(theta_star_segments)
                    if theta_star_segments is not None else None)
        self._setup_run(n_iters)
        theta = np.zeros(dim)
        exponents = np.empty(n_iters)
        deviation = np.full(n_iters, np.nan)
        for n in range(n_iters):
            if schedule is not None:
                deviation[n] = np.linalg.norm(theta - schedule.theta_at(n))
            try:
                theta, p = self._update(theta, X[n], y[n], n)
            except FilterDivergenceError as exc:
                raise FilterDivergenceError(str(exc), iteration=n) from None
            if not np.all(np.isfinite(theta)):
                raise FilterDivergenceError(
                    "filter vector became non-finite", iteration=n)
            exponents[n] = p
        return EpisodeRecord(exponents=exponents, deviation=deviation,
                             theta=theta)

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        record = self.run(X, y)
        self.record_ = record
        self.coef_ = record.theta
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return X @ self.coef_


class LmpFilter(_StreamFilter):
    """Fixed-exponent LMP filter; p=2 is LMS with step 2*rho, p=1 sign-LMS."""

    def __init__(self, p: float = 2.0, rho: float = 1e-3):
        self.p = p
        self.rho = rho

    def _exponent_at(self, n: int) -> float:
        if not 1.0 <= self.p <= 2.0:
            raise ValueError("p must lie in [1, 2]")
        return self.p


class RandomExponentLmp(_StreamFilter):
    """LMP filter drawing its exponent uniformly from a grid each iteration."""

    def __init__(self, action_grid=(1.0, 1.25, 1.5, 1.75, 2.0),
                 rho: float = 1e-3, seed: int = 0):
        self.action_grid = action_grid
        self.rho = rho
        self.seed = seed

    def _setup_run(self, n_iters: int):
        grid = check_action_grid(self.action_grid)
        rng = np.random.default_rng(self.seed)
        self._draws = grid[rng.integers(0, grid.size, size=n_iters)]

    def _exponent_at(self, n: int) -> float:
        return float(self._draws[n])


class MixedNormLmp(_StreamFilter):
    """Convex combination of two LMP gradient terms with a fixed weight.

    The update direction is
        weight * p_low |e|^(p_low-1) + (1-weight) * p_high |e|^(p_high-1)
    times sign(e) x, scaled by rho.  The recorded exponent is the weighted
    average of the two norms.
    """

    def __init__(self, p_low: float = 1.0, p_high: float = 2.0,
                 weight: float = 0.5, rho: float = 1e-3):
        self.p_low = p_low
        self.p_high = p_high
        self.weight = weight
        self.rho = rho

    def _update(self, theta, x, y, n):
        w = check_scalar(self.weight, "weight", low=0.0, high=1.0)
        p_eff = w * self.p_low + (1.0 - w) * self.p_high
        # degenerate weights collapse to the plain fixed-exponent update
        if w == 1.0 or w == 0.0:
            p = self.p_low if w == 1.0 else self.p_high
            theta_new, _ = lmp_step(theta, x, y, p, self.rho)
            return theta_new, p_eff
        err = float(y - x @ theta)
        if not np.isfinite(err):
            raise FilterDivergenceError(
                f"prediction error became non-finite ({err})")
        if err == 0.0:
            return theta.copy(), p_eff
        sign = 1.0 if err > 0.0 else -1.0
        mag = (w * self.p_low * abs(err) ** (self.p_low - 1.0)
               + (1.0 - w) * self.p_high * abs(err) ** (self.p_high - 1.0))
        return theta + (self.rho * mag * sign) * x, p_eff

    def _exponent_at(self, n: int) -> float:  # pragma: no cover - unused
        return self.weight * self.p_low + (1.0 - self.weight) * self.p_high
