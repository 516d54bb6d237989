"""Shared solvers for the small Gram systems used by the operator modules."""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .exceptions import SingularSystemError

# Unregularized systems beyond this condition estimate are refused.
COND_LIMIT = 1.0e12
# Relative spectral cutoff for pseudo-inverses of PSD Gram matrices.
PINV_RCOND = 1.0e-10


def gram(phi: np.ndarray) -> np.ndarray:
    """Gram matrix of column-stacked features, phi.T @ phi."""
    return phi.T @ phi


def solve_regularized_gram(k: np.ndarray, rhs: np.ndarray, sigma: float) -> np.ndarray:
    """Solve (K + sigma I) X = rhs for a PSD Gram matrix K.

    With sigma == 0 the system is only accepted when the condition estimate
    stays below COND_LIMIT; otherwise SingularSystemError reports it.
    """
    n = k.shape[0]
    if sigma < 0.0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    a = k if sigma == 0.0 else k + sigma * np.eye(n)
    if sigma == 0.0:
        cond = np.linalg.cond(a)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise SingularSystemError(
                f"unregularized Gram system has condition estimate {cond:.3e} "
                f"(limit {COND_LIMIT:.1e}); add a ridge term to proceed")
    try:
        return scipy.linalg.solve(a, rhs, assume_a="pos")
    except np.linalg.LinAlgError as exc:
        cond = np.linalg.cond(a)
        raise SingularSystemError(
            f"Gram solve failed (condition estimate {cond:.3e}): {exc}") from exc


def pinv_psd(k: np.ndarray) -> np.ndarray:
    """Pseudo-inverse of a PSD matrix with spectral cutoff PINV_RCOND."""
    return np.linalg.pinv(k, rcond=PINV_RCOND, hermitian=True)
