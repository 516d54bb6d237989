"""System-identification environment: data model, noise, and filter state.

The plant is a linear system y = theta_star . x + noise observed under
heavy-tailed or sparse-outlier noise.  An LMP adaptive filter tracks
theta_star; its exponent p in [1, 2] is the action an agent may pick per
iteration.  The 4-dimensional state summarizing the filter's situation is
built from base-10 logs of the instantaneous error, a windowed average of
posterior errors, the regressor norm, and a smoothed update-magnitude term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import FilterDivergenceError
from .validation import as_float_array, check_scalar

# Applied inside every log10 to keep degenerate arguments finite.
EPS_FLOOR = 1.0e-30


@dataclass
class LinearSystem:
    """Ground-truth linear plant y = theta_star . x + noise."""

    theta_star: np.ndarray

    def __post_init__(self):
        self.theta_star = as_float_array(self.theta_star, "theta_star", ndim=1)

    @property
    def dim(self) -> int:
        return self.theta_star.shape[0]

    def observe(self, x, noise):
        """Noisy output for one regressor or a batch of regressor rows."""
        x = np.asarray(x, dtype=np.float64)
        return x @ self.theta_star + noise


def alpha_stable(rng: np.random.Generator, stability: float, skew: float = 0.0,
                 scale: float = 1.0, size=None):
    """Draw alpha-stable noise via the Chambers-Mallows-Stuck transform.

    stability in (0, 2], skew in [-1, 1]; the standard variate is multiplied
    by `scale`.  stability=2 gives a Gaussian with variance 2*scale^2;
    stability=1, skew=0 gives a standard Cauchy times scale.
    """
    stability = check_scalar(stability, "stability", positive=True, high=2.0)
    skew = check_scalar(skew, "skew", low=-1.0, high=1.0)
    scale = check_scalar(scale, "scale", positive=True)
    half_pi = 0.5 * np.pi
    v = rng.uniform(-half_pi, half_pi, size=size)
    w = rng.exponential(1.0, size=size)
    if stability == 1.0:
        shifted = half_pi + skew * v
        x = (shifted * np.tan(v)
             - skew * np.log((half_pi * w * np.cos(v)) / shifted)) / half_pi
    else:
        t = skew * np.tan(half_pi * stability)
        b = np.arctan(t) / stability
        s = (1.0 + t * t) ** (1.0 / (2.0 * stability))
        a_vb = stability * (v + b)
        x = (s * np.sin(a_vb) / np.cos(v) ** (1.0 / stability)
             * (np.cos(v - a_vb) / w) ** ((1.0 - stability) / stability))
    return scale * x


def sparse_outlier_noise(rng: np.random.Generator, outlier_prob: float,
                         outlier_range=(-100.0, 100.0), snr_db: float = 30.0,
                         signal_power: float = 1.0, size=None):
    """Gaussian background noise with uniform outliers.

    With probability `outlier_prob` a draw is uniform on `outlier_range`;
    otherwise it is zero-mean Gaussian with variance set so the Gaussian
    part sits `snr_db` decibels below `signal_power`.
    """
    outlier_prob = check_scalar(outlier_prob, "outlier_prob", low=0.0, high=1.0)
    lo, hi = (float(outlier_range[0]), float(outlier_range[1]))
    if hi <= lo:
        raise ValueError("outlier_range must satisfy hi > lo")
    signal_power = check_scalar(signal_power, "signal_power", positive=True)
    noise_std = math.sqrt(signal_power / 10.0 ** (snr_db / 10.0))
    u = rng.random(size=size)
    gauss = noise_std * rng.standard_normal(size=size)
    outl = rng.uniform(lo, hi, size=size)
    return np.where(u < outlier_prob, outl, gauss)


def lmp_step(theta: np.ndarray, x: np.ndarray, y: float, p: float,
             rho: float) -> tuple[np.ndarray, float]:
    """One least-mean-p-power update.

    Returns (theta_new, err) with err = y - theta . x and

        theta_new = theta + rho * p * |err|^(p-1) * sign(err) * x.

    p=2 reduces to LMS with step 2*rho; p=1 to the sign-LMS update, where a
    zero error contributes nothing (sign(0) = 0).  A non-finite error aborts
    the run.
    """
    err = float(y - x @ theta)
    if not math.isfinite(err):
        raise FilterDivergenceError(
            f"prediction error became non-finite ({err})")
    if err == 0.0:
        return theta.copy(), err
    sign = 1.0 if err > 0.0 else -1.0
    step = rho * p * abs(err) ** (p - 1.0) * sign
    return theta + step * x, err


def lmp_displacements(theta: np.ndarray, x: np.ndarray, err: float,
                      exponents: np.ndarray, rho: float) -> np.ndarray:
    """Candidate updates of one LMP step under each exponent, stacked row-wise.

    Returns an (m, L) array whose i-th row is the filter vector produced from
    `theta` by the update with exponent exponents[i] on data (x, err).
    """
    exponents = np.asarray(exponents, dtype=np.float64)
    if err == 0.0:
        return np.broadcast_to(theta, (exponents.size, theta.size)).copy()
    sign = 1.0 if err > 0.0 else -1.0
    steps = rho * exponents * np.abs(err) ** (exponents - 1.0) * sign
    return theta[None, :] + steps[:, None] * x[None, :]


def _successor_core(thetas: np.ndarray, theta_prev: np.ndarray,
                    errs: np.ndarray, x_now: np.ndarray,
                    win_x: np.ndarray, win_y: np.ndarray,
                    win_xnorm_sq: np.ndarray, s4_prev: float,
                    varpi: float, rho: float) -> np.ndarray:
    """Successor states for a batch of candidate filter vectors.

    thetas has shape (m, L) and errs shape (m,): row i describes the filter
    after an update with the i-th candidate exponent.  An empty window
    contributes a zero second component (warm start).  Returns (m, 4).
    """
    m = thetas.shape[0]
    out = np.empty((m, 4))
    out[:, 0] = np.log10(np.maximum(errs * errs, EPS_FLOOR))
    if win_x.shape[0] == 0:
        out[:, 1] = 0.0
    else:
        werr = win_y[None, :] - thetas @ win_x.T
        ratio = np.maximum(werr * werr, EPS_FLOOR) / win_xnorm_sq[None, :]
        out[:, 1] = np.mean(np.log10(ratio), axis=1)
    out[:, 2] = np.log10(max(float(np.linalg.norm(x_now)), EPS_FLOOR))
    disp = np.linalg.norm(thetas - theta_prev[None, :], axis=1) / rho
    out[:, 3] = varpi * s4_prev + (1.0 - varpi) * np.log10(
        np.maximum(disp, EPS_FLOOR))
    return out


def successor_state(theta_now: np.ndarray, theta_prev: np.ndarray,
                    err_now: float, x_now: np.ndarray, window_x: np.ndarray,
                    window_y: np.ndarray, s4_prev: float, varpi: float,
                    rho: float) -> np.ndarray:
    """State reached after the update that produced theta_now.

    Components (all base-10 logs, floored at 1e-30 inside the log):
      0: log of the squared instantaneous prediction error;
      1: windowed mean log of squared posterior errors of theta_now over the
         stored data pairs, each normalized by its regressor's squared norm;
      2: log of the current regressor norm;
      3: convex combination of the previous value with the log of the last
         update magnitude normalized by the step size rho.

    The window must hold at least one data pair.
    """
    window_x = as_float_array(window_x, "window_x", ndim=2)
    window_y = as_float_array(window_y, "window_y", ndim=1)
    if window_x.shape[0] == 0:
        raise ValueError("window is empty: at least one stored data pair "
                         "is required to form the state")
    if window_y.shape[0] != window_x.shape[0]:
        raise ValueError("window_y length must match window_x rows")
    theta_now = as_float_array(theta_now, "theta_now", ndim=1)
    xnorm_sq = np.sum(window_x * window_x, axis=1)
    return _successor_core(
        theta_now[None, :], np.asarray(theta_prev, dtype=np.float64),
        np.asarray([err_now], dtype=np.float64), x_now, window_x, window_y,
        xnorm_sq, s4_prev, varpi, rho)[0]


def one_step_loss(state: np.ndarray) -> float:
    """One-step loss assigned to the transition that led to `state`.

    This is the windowed posterior-error component of the successor state.
    """
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (4,):
        raise ValueError(f"state must have shape (4,), got {state.shape}")
    return float(state[1])


@dataclass
class FilterState:
    """Recursion state of the adaptive filter and its feature window.

    Holds the current and previous filter vectors, a ring buffer of the most
    recent data pairs (capacity m_av) used by the windowed state component,
    the smoothed fourth component, and the last regressor/error pair needed
    to rebuild counterfactual updates.
    """

    dim: int
    rho: float
    m_av: int
    varpi: float
    theta: np.ndarray = field(init=False)
    theta_prev: np.ndarray = field(init=False)
    s4_prev: float = field(init=False, default=0.0)
    x_prev: np.ndarray | None = field(init=False, default=None)
    e_prev: float = field(init=False, default=0.0)

    def __post_init__(self):
        check_scalar(self.rho, "rho", positive=True)
        check_scalar(self.varpi, "varpi", low=0.0, high=1.0)
        if self.m_av < 1:
            raise ValueError("m_av must be >= 1")
        self.theta = np.zeros(self.dim)
        self.theta_prev = np.zeros(self.dim)
        self._win_x = np.zeros((self.m_av, self.dim))
        self._win_y = np.zeros(self.m_av)
        self._win_xnorm_sq = np.zeros(self.m_av)
        self._win_count = 0
        self._win_head = 0

    @property
    def window_size(self) -> int:
        return self._win_count

    def push_pair(self, x: np.ndarray, y: float):
        """Store a data pair, evicting the oldest once at capacity."""
        h = self._win_head
        self._win_x[h] = x
        self._win_y[h] = y
        self._win_xnorm_sq[h] = float(x @ x)
        self._win_head = (h + 1) % self.m_av
        self._win_count = min(self._win_count + 1, self.m_av)

    def window_views(self):
        """Stored pairs as array views (order-free, for averaged statistics)."""
        c = self._win_count
        return (self._win_x[:c], self._win_y[:c], self._win_xnorm_sq[:c])

    def successor(self, err_now: float, x_now: np.ndarray) -> np.ndarray:
        """State formed by the current filter vector; requires stored pairs."""
        wx, wy, wn = self.window_views()
        if wx.shape[0] == 0:
            raise ValueError("window is empty: push at least one data pair "
                             "before forming the state")
        return self.successor_allow_empty(err_now, x_now)

    def successor_allow_empty(self, err_now: float, x_now: np.ndarray) -> np.ndarray:
        """Like successor(), but an empty window contributes 0 to component 1."""
        wx, wy, wn = self.window_views()
        return _successor_core(
            self.theta[None, :], self.theta_prev,
            np.asarray([err_now]), x_now, wx, wy, wn,
            self.s4_prev, self.varpi, self.rho)[0]

    def counterfactual_successors(self, exponents: np.ndarray, x_now: np.ndarray,
                                  y_now: float) -> np.ndarray:
        """Successor states had the previous update used each given exponent.

        Rebuilds the update from the stored (x_prev, e_prev) pair for every
        exponent and forms each resulting state against the current window
        and regressor.  Returns (m, 4).
        """
        if self.x_prev is None:
            raise ValueError("no previous update is stored")
        thetas = lmp_displacements(self.theta_prev, self.x_prev, self.e_prev,
                                   exponents, self.rho)
        errs = y_now - thetas @ x_now
        wx, wy, wn = self.window_views()
        return _successor_core(thetas, self.theta_prev, errs, x_now, wx, wy,
                               wn, self.s4_prev, self.varpi, self.rho)

    def advance(self, theta_new: np.ndarray, x_now: np.ndarray, y_now: float,
                err_now: float, state_now: np.ndarray):
        """Shift the recursion one step after the update at this iteration."""
        self.push_pair(x_now, y_now)
        self.theta_prev = self.theta
        self.theta = theta_new
        self.x_prev = x_now
        self.e_prev = err_now
        self.s4_prev = float(state_now[3])
