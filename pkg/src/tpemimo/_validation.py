"""Input validation helpers shared by the estimators and free functions.

sklearn's ``check_array`` refuses complex input, so channel matrices go
through :func:`check_channel` instead.
"""
import numpy as np


class NotFittedError(ValueError, AttributeError):
    """Raised when an estimator is used before ``fit``."""


def check_channel(h, *, name="h", allow_zero_columns=True):
    """Return ``h`` as a 2-D complex128 array with at least one column."""
    h = np.asarray(h)
    if h.ndim == 1:
        h = h[:, None]
    if h.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got shape {h.shape}")
    if h.shape[1] < 1 or h.shape[0] < 1:
        raise ValueError(f"{name} must be non-empty, got shape {h.shape}")
    h = h.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(h)):
        raise ValueError(f"{name} contains NaN or inf")
    if not allow_zero_columns:
        norms = np.linalg.norm(h, axis=0)
        if np.any(norms == 0):
            raise ValueError(f"{name} has zero column(s) {np.flatnonzero(norms == 0).tolist()}")
    return h


def check_powers(p, n_users, *, name="p"):
    """Return a nonnegative float vector of length ``n_users``."""
    if p is None:
        return np.ones(n_users)
    p = np.asarray(p, dtype=float).reshape(-1)
    if p.shape[0] != n_users:
        raise ValueError(f"{name} has length {p.shape[0]}, expected {n_users}")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError(f"{name} must be finite and nonnegative")
    return p


def check_unit_columns(v, tol=1e-6, *, name="v"):
    v = check_channel(v, name=name)
    norms = np.linalg.norm(v, axis=0)
    if np.any(np.abs(norms - 1.0) > tol):
        raise ValueError(f"{name} columns must have unit norm (max deviation {np.max(np.abs(norms - 1)):.2e})")
    return v


def check_is_fitted(estimator, attributes):
    if isinstance(attributes, str):
        attributes = [attributes]
    if not all(hasattr(estimator, a) for a in attributes):
        raise NotFittedError(
            f"This {type(estimator).__name__} instance is not fitted yet; call 'fit' first."
        )


def normalize_columns(v):
    """Scale every column of ``v`` to unit Euclidean norm."""
    norms = np.linalg.norm(v, axis=0)
    if np.any(norms == 0):
        raise ValueError("cannot normalize a zero column")
    return v / norms
