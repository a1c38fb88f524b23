"""Input validation helpers shared by the estimators and evaluation code."""
from __future__ import annotations

import numbers

import numpy as np


class NumericalError(RuntimeError):
    """Raised when a numerical routine fails (e.g. eigensolver non-convergence)."""


def check_steering_matrix(X, n_ports=None, *, name="X", allow_1d=True):
    """Validate a stack of complex steering vectors.

    Parameters
    ----------
    X : array-like of shape (n_samples, n_ports) or (n_ports,)
        Complex port responses.
    n_ports : int, optional
        Required second dimension.
    allow_1d : bool
        If True a single vector is promoted to shape (1, n_ports).

    Returns
    -------
    ndarray of complex128, always 2-D.
    """
    X = np.asarray(X)
    if X.dtype == object:
        raise ValueError(f"{name} must be numeric, got object array")
    X = X.astype(np.complex128, copy=False)
    if X.ndim == 1 and allow_1d:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-D (n_samples, n_ports), got shape {X.shape}")
    if X.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if n_ports is not None and X.shape[1] != n_ports:
        raise ValueError(
            f"dimension mismatch: {name} has {X.shape[1]} ports, expected {n_ports}"
        )
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def check_directions(D, *, name="directions"):
    """Validate an (n, 2) array of (theta, phi) pairs in degrees.

    Theta must lie in [0, 180]; phi is wrapped into [0, 360).
    """
    D = np.asarray(D, dtype=float)
    if D.ndim == 1 and D.shape[0] == 2:
        D = D[None, :]
    if D.ndim != 2 or D.shape[1] != 2:
        raise ValueError(f"{name} must have shape (n, 2), got {D.shape}")
    if not np.all(np.isfinite(D)):
        raise ValueError(f"{name} contains non-finite values")
    theta = D[:, 0]
    if np.any(theta < 0) or np.any(theta > 180):
        raise ValueError(f"{name}: theta must lie in [0, 180] degrees")
    out = D.copy()
    out[:, 1] = np.mod(out[:, 1], 360.0)
    out[out[:, 1] >= 360.0, 1] = 0.0
    return out


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_seed(seed):
    """Master seeds are explicit non-negative integers; there is no random default."""
    if isinstance(seed, bool) or not isinstance(seed, numbers.Integral) or seed < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed!r}")
    return int(seed)
