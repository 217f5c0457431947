"""Truncated polynomial expansion (TPE) receivers / precoders.

The uplink receiver of user k is ``v_k = H sum_l w_{k,l} (P G)^l e_k`` with
``G = H^H H``. Its SINR is a generalized Rayleigh quotient in ``w_k`` whose
coefficients ``(a, B, C)`` are Hankel arrangements of the quadratic forms
``rho_{k,i} = hbar_k^H Gammabar^i hbar_k``. Those come either from the
channel realization (``coefficients="finite"``) or from channel statistics
through :mod:`tpemimo.asymptotics` (``coefficients="asymptotic"``).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import asymptotics
from ._validation import check_channel, check_is_fitted, check_powers, normalize_columns
from .asymptotics import MAX_ORDER
from .channel import CovarianceModel, variance_profile

JITTER_START = 1e-12
JITTER_MAX = 1e-6
IMAG_TOL = 1e-10


@dataclass(frozen=True)
class TpeQuadratics:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    order: int
    user: int = 0


@dataclass(frozen=True)
class TpeWeights:
    w: np.ndarray
    alpha_star: float
    sinr: float


def _check_order(J):
    if int(J) != J or J < 0 or J > MAX_ORDER:
        raise ValueError(f"TPE order must be an integer in [0, {MAX_ORDER}], got {J}")
    return int(J)


def finite_moments(hbar, n_max):
    """``rho[i, k] = hbar_k^H Gammabar^i hbar_k`` for i = 0..n_max.

    Uses ``hbar_k^H Gammabar^i hbar_k = [Gbar^{i+1}]_{kk}`` with the K x K Gram
    matrix ``Gbar = Hbar^H Hbar``, so Gammabar (M x M) is never formed.
    """
    hbar = check_channel(hbar, name="hbar")
    gram = hbar.conj().T @ hbar
    K = gram.shape[0]
    out = np.empty((n_max + 1, K))
    power = gram.copy()
    scale = max(1.0, float(np.max(np.abs(np.diag(gram)))))
    for i in range(n_max + 1):
        d = np.diag(power)
        if np.max(np.abs(d.imag)) > IMAG_TOL * max(scale, float(np.max(np.abs(d.real)))):
            raise ValueError("quadratic forms have a non-negligible imaginary part")
        out[i] = d.real
        power = power @ gram
    return out


def quadratics_from_moments(rho, J, user=0):
    """Hankel arrangement ``a_l = rho_l``, ``B = rho_{l+l'+1}``, ``C = rho_{l+l'}``."""
    J = _check_order(J)
    rho = np.asarray(rho, dtype=float).reshape(-1)
    if rho.shape[0] < 2 * J + 2:
        raise ValueError(f"need {2 * J + 2} moments for order J={J}, got {rho.shape[0]}")
    idx = np.add.outer(np.arange(J + 1), np.arange(J + 1))
    return TpeQuadratics(rho[: J + 1].copy(), rho[idx + 1], rho[idx], J, user)


def quadratics_finite(hbar, k, J):
    """Coefficients of user k from one realization of the power-scaled channel."""
    J = _check_order(J)
    rho = finite_moments(hbar, 2 * J + 1)
    return quadratics_from_moments(rho[:, k], J, k)


def quadratics_asymptotic(rho_row, J, user=0):
    """Coefficients from a large-system ``rho`` sequence of length >= 2J+2."""
    return quadratics_from_moments(rho_row, J, user)


def _spd_solve(A, rhs):
    """Solve a positive semidefinite Gram-type system.

    After Jacobi scaling, eigenvalues below ``n eps`` of the largest are the
    null space of a rank-deficient Krylov basis (e.g. ``J >= K`` or a
    rank-one channel). That null space carries no receiver energy, so it is
    dropped (pseudo-inverse solve). A genuinely indefinite matrix falls back to
    Cholesky with diagonal jitter escalating x10 from 1e-12 to 1e-6 of tr/n.

    Returns the solution and the jitter that was added.
    """
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    base = np.trace(A) / n
    if not np.isfinite(base) or base <= 0:
        raise np.linalg.LinAlgError("system matrix has nonpositive trace")
    diag = np.diag(A)
    if np.all(diag > 0):
        d = 1.0 / np.sqrt(diag)
        lam, U = np.linalg.eigh(A * d[:, None] * d[None, :])
        cut = n * np.finfo(float).eps * lam[-1]
        if lam[0] >= -cut:
            keep = lam > cut
            y = U[:, keep].T @ (d * rhs)
            return d * (U[:, keep] @ (y / lam[keep])), 0.0
    jitter = 0.0
    while True:
        try:
            L = np.linalg.cholesky(A + jitter * np.eye(n))
            y = np.linalg.solve(L, rhs)
            return np.linalg.solve(L.T, y), jitter
        except np.linalg.LinAlgError:
            jitter = JITTER_START * base if jitter == 0.0 else jitter * 10
            if jitter > JITTER_MAX * base * (1 + 1e-9):
                raise np.linalg.LinAlgError(
                    "B + nu C is not positive definite even after maximum jitter"
                ) from None


def optimal_weights(q, nu, p_k):
    """SINR-optimal weights, scaled so that ``||v_k|| = 1`` in expectation.

    Returns ``w = alpha* (B + nu C)^{-1} a`` and the SINR ``s / (1 - s)`` with
    ``s = a^T (B + nu C)^{-1} a``. If jitter was needed, the reported SINR is
    the Rayleigh quotient of the returned weights under the unperturbed
    matrices, which is accurate to second order in the perturbation.
    """
    if nu <= 0:
        raise ValueError("nu must be positive")
    if p_k <= 0:
        raise ValueError("p_k must be positive to normalize the receiver")
    y, jitter = _spd_solve(q.b + nu * q.c, q.a)
    s = float(q.a @ y)
    if not s < 1.0:
        raise ValueError(f"inconsistent coefficients: a^T (B + nu C)^-1 a = {s:.6g} >= 1")
    energy = float(y @ q.c @ y)
    if energy <= 0:
        raise ValueError("receiver energy w^T C w is not positive")
    alpha = np.sqrt(p_k / energy)
    sinr = s / (1.0 - s) if jitter == 0.0 else rayleigh_sinr(q, nu, y)
    return TpeWeights(alpha * y, float(alpha), float(sinr))


def rayleigh_sinr(q, nu, w):
    """Evaluate the SINR quotient ``(w^T a)^2 / w^T (B + nu C - a a^T) w``."""
    w = np.asarray(w, dtype=float)
    num = float(w @ q.a) ** 2
    return num / (float(w @ (q.b + nu * q.c) @ w) - num)


def _weight_matrix(weights):
    if isinstance(weights, np.ndarray):
        W = np.atleast_2d(weights)
    else:
        W = np.stack([np.asarray(getattr(w, "w", w), dtype=float) for w in weights])
    return W


def horner_precoder(h, p, weights, normalize=True):
    """``V = H V^(0)`` with ``V^(n) = W^(n) + P G V^(n+1)``, ``V^(J) = W^(J)``.

    ``weights`` is a (K, J+1) array or a sequence of :class:`TpeWeights`.
    Columns are rescaled to unit norm when ``normalize`` is set.
    """
    h = check_channel(h)
    K = h.shape[1]
    p = check_powers(p, K)
    W = _weight_matrix(weights)
    if W.shape[0] != K:
        raise ValueError(f"weights for {W.shape[0]} users, channel has {K}")
    J = W.shape[1] - 1
    PG = p[:, None] * (h.conj().T @ h)
    V = np.diag(W[:, J]).astype(np.complex128)
    for n in range(J - 1, -1, -1):
        V = np.diag(W[:, n]) + PG @ V
    out = h @ V
    return normalize_columns(out) if normalize else out


def normalized_weights(h, p, weights):
    """Rescale each user's weights so the Horner output has unit-norm columns."""
    W = _weight_matrix(weights)
    norms = np.linalg.norm(horner_precoder(h, p, W, normalize=False), axis=0)
    if np.any(norms == 0):
        raise ValueError("a TPE receiver vanished; cannot normalize")
    return W / norms[:, None]


def direct_tpe_transmit(h, p, weights, s):
    """Precoded transmit vector ``H x^(0)`` by the symbol-level Horner iteration.

    ``x^(J) = W^(J) s`` and ``x^(n) = W^(n) s + P G x^(n+1)``. Equals
    ``horner_precoder(h, p, weights, normalize=False) @ s``; pass
    :func:`normalized_weights` to match the unit-norm precoder.
    """
    h = check_channel(h)
    K = h.shape[1]
    p = check_powers(p, K)
    W = _weight_matrix(weights)
    s = np.asarray(s).reshape(-1)
    if s.shape[0] != K:
        raise ValueError(f"symbol vector has length {s.shape[0]}, expected {K}")
    J = W.shape[1] - 1
    G = h.conj().T @ h
    x = W[:, J] * s
    for n in range(J - 1, -1, -1):
        x = W[:, n] * s + p * (G @ x)
    return h @ x


def coupling(h, v):
    """``phi[k, j] = |v_k^H h_j|^2``."""
    return np.abs(v.conj().T @ h) ** 2


def finite_sinr(h, v, p=None, nu=1.0, k=None, side="uplink", q=None):
    """Per-user SINR of unit receivers (uplink) or precoders (downlink).

    Uplink: ``|v_k^H h_k|^2 p_k / (sum_{j!=k} p_j |v_k^H h_j|^2 + nu ||v_k||^2)``.
    Downlink: ``|h_k^H v_k|^2 q_k / (nu + sum_{j!=k} |h_k^H v_j|^2 q_j)``.
    """
    h = check_channel(h)
    v = check_channel(v, name="v")
    if v.shape != h.shape:
        raise ValueError(f"v shape {v.shape} != h shape {h.shape}")
    K = h.shape[1]
    phi = coupling(h, v)
    diag = np.diag(phi)
    if side == "uplink":
        p = check_powers(p, K)
        num = diag * p
        den = phi @ p - num + nu * np.sum(np.abs(v) ** 2, axis=0)
    elif side == "downlink":
        q = check_powers(q, K, name="q")
        num = diag * q
        den = nu + phi.T @ q - num
    else:
        raise ValueError(f"side must be 'uplink' or 'downlink', got {side!r}")
    if np.any(den <= 0):
        raise ZeroDivisionError("SINR denominator is zero")
    out = num / den
    return out if k is None else float(out[k])


def solve_weights(rho, J, nu, p):
    """Optimal weights for every user from a (>= 2J+2, K) moment table."""
    return [
        optimal_weights(quadratics_from_moments(rho[:, k], J, k), nu, p[k])
        for k in range(rho.shape[1])
    ]


def asymptotic_weights(spectrum, p, J, nu):
    """Weights from channel statistics only (circulant spectra times powers)."""
    D = variance_profile(spectrum, p)
    table = asymptotics.moment_table(D, 2 * J + 1)
    return solve_weights(table.rho, J, nu, p), table


def finite_weights(h, p, J, nu):
    hbar = check_channel(h) * np.sqrt(p)[None, :]
    return solve_weights(finite_moments(hbar, 2 * J + 1), J, nu, p)


def write_weights_csv(fh, weights):
    w = csv.writer(fh)
    J = len(weights[0].w) - 1 if weights else 0
    w.writerow(["user", "order"] + [f"weight_{l}" for l in range(J + 1)] + ["alpha_star", "sinr"])
    for k, tw in enumerate(weights):
        w.writerow([k, J] + [repr(float(x)) for x in tw.w] + [repr(float(tw.alpha_star)), repr(float(tw.sinr))])


class TPEPrecoder(TransformerMixin, BaseEstimator):
    """Per-user TPE precoder with uplink-optimized weights.

    Parameters
    ----------
    order : int
        Polynomial degree J.
    snr : float
        Linear transmit SNR; the noise level is ``nu = (K / M) / snr``.
    coefficients : {"asymptotic", "finite"}
        Large-system coefficients computed once in :meth:`fit` from the
        covariance model, or per-realization coefficients computed in
        :meth:`transform`.

    Attributes
    ----------
    weights_ : ndarray of shape (K, J+1)
        Set by ``fit`` in asymptotic mode.
    sinr_ : ndarray of shape (K,)
        Large-system SINR prediction (asymptotic mode).
    """

    def __init__(self, order=2, snr=10.0, coefficients="asymptotic"):
        self.order = order
        self.snr = snr
        self.coefficients = coefficients

    def fit(self, X, p=None):
        """Compute TPE weights from channel statistics.

        ``X`` is a :class:`CovarianceModel` or an (M, K) array of circulant
        eigenvalues; ``p`` the uplink power allocation (default all ones).
        """
        spectrum = X.circulant_eigs if isinstance(X, CovarianceModel) else np.asarray(X, dtype=float)
        if spectrum.ndim != 2:
            raise ValueError("X must be a CovarianceModel or an (M, K) spectrum")
        M, K = spectrum.shape
        self.n_antennas_, self.n_users_ = M, K
        self.p_ = check_powers(p, K)
        self.nu_ = (K / M) / self.snr
        J = _check_order(self.order)
        if self.coefficients == "asymptotic":
            weights, table = asymptotic_weights(spectrum, self.p_, J, self.nu_)
            self.weights_ = np.stack([w.w for w in weights])
            self.sinr_ = np.array([w.sinr for w in weights])
            self.moments_ = table
        elif self.coefficients != "finite":
            raise ValueError(f"coefficients must be 'asymptotic' or 'finite', got {self.coefficients!r}")
        return self

    def _weights_for(self, h):
        if self.coefficients == "finite":
            return np.stack([w.w for w in finite_weights(h, self.p_, self.order, self.nu_)])
        return self.weights_

    def transform(self, X):
        """Unit-norm TPE vectors (M, K) for the channel realization ``X``."""
        check_is_fitted(self, "p_")
        h = check_channel(X)
        if h.shape != (self.n_antennas_, self.n_users_):
            raise ValueError(f"channel shape {h.shape} != fitted ({self.n_antennas_}, {self.n_users_})")
        return horner_precoder(h, self.p_, self._weights_for(h))

    def uplink_sinr(self, X):
        V = self.transform(X)
        return finite_sinr(X, V, self.p_, self.nu_)
