"""Reference linear precoders and detectors.

Conjugate beamforming, exact MMSE and RZF (the latter inverting through a
Householder QR pipeline), and the free-probability TPE of Zarei et al.,
which assumes i.i.d. channels with per-user pathloss only.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_channel, check_is_fitted, check_powers, normalize_columns
from .asymptotics import MAX_ORDER
from .channel import CovarianceModel
from .tpe import _spd_solve, finite_sinr


def conj_bf(h):
    """``v_k = h_k / ||h_k||``."""
    h = check_channel(h, allow_zero_columns=False)
    return normalize_columns(h)


def mmse_receiver(h, p=None, nu=1.0):
    """Unit-norm MMSE receivers and their SINRs.

    ``v_k`` is proportional to ``H (G P G + nu G)^{-1} g_k`` with
    ``g_k = G e_k``; since ``(G P G + nu G)^{-1} G = (P G + nu I)^{-1}``
    both the vectors and the SINR ``t / (1 - t)``, ``t = p_k g_k^H (.)^{-1} g_k``,
    are evaluated through the K x K matrix ``P G + nu I``.
    """
    h = check_channel(h, allow_zero_columns=False)
    K = h.shape[1]
    p = check_powers(p, K)
    if nu <= 0:
        raise ValueError("nu must be positive")
    G = h.conj().T @ h
    try:
        S = np.linalg.solve(p[:, None] * G + nu * np.eye(K), np.eye(K))
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("MMSE system is singular") from exc
    t = p * np.real(np.einsum("ij,ji->i", G, S))
    if np.any(t >= 1.0):
        raise np.linalg.LinAlgError("MMSE system is numerically singular")
    return normalize_columns(h @ S), t / (1.0 - t)


def householder_vector(Gk, k):
    """Reflector ``(phi, zeta)`` zeroing column ``k`` of ``Gk`` below the diagonal.

    ``mu = 1 + sqrt(1 + sigma / alpha)`` with ``sigma`` the energy below the
    diagonal and ``alpha = |Gk[k, k]|^2``; the reflector acts on rows k..K only,
    so entries above the diagonal do not enter ``mu``.
    """
    col = Gk[:, k]
    sigma = float(np.vdot(col[k + 1:], col[k + 1:]).real)
    alpha = float((np.conj(col[k]) * col[k]).real)
    if alpha == 0.0:
        raise ZeroDivisionError(f"zero pivot at column {k}")
    mu = 1.0 + np.sqrt(1.0 + sigma / alpha)
    phi = np.zeros(Gk.shape[0], dtype=np.complex128)
    phi[k] = mu * col[k]
    phi[k + 1:] = col[k + 1:]
    return phi, 2.0 / (sigma + float((phi[k] * np.conj(phi[k])).real))


def householder_apply(A, phi, zeta):
    """``A - zeta phi (phi^H A)``: one reflection of every column of ``A``."""
    return A - np.outer(zeta * phi, phi.conj() @ A)


def back_substitute(R, Q):
    """``X = R^{-1} Q`` for upper-triangular ``R``, row by row from the bottom."""
    Q = np.array(Q, dtype=np.complex128)
    K = R.shape[0]
    X = np.zeros_like(Q)
    for k in range(K - 1, -1, -1):
        if R[k, k] == 0:
            raise ZeroDivisionError(f"zero pivot R[{k}, {k}]")
        X[k] = Q[k] / R[k, k]
        Q[:k] -= np.outer(R[:k, k], X[k])
    return X


def qrh_invert(g):
    """Inverse of a Hermitian positive definite matrix via Householder QR.

    After K-1 reflections ``Q_K G = R`` with ``Q_K`` the accumulated
    reflector product, hence ``G^{-1} = R^{-1} Q_K``.
    """
    g = np.asarray(g, dtype=np.complex128)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {g.shape}")
    K = g.shape[0]
    Gk = g.copy()
    Q = np.eye(K, dtype=np.complex128)
    for k in range(K - 1):
        phi, zeta = householder_vector(Gk, k)
        Gk = householder_apply(Gk, phi, zeta)
        Q = householder_apply(Q, phi, zeta)
    return back_substitute(Gk, Q)


def rzf_precoder(h, epsilon):
    """Unit-norm columns of ``H (G + epsilon I)^{-1}``."""
    h = check_channel(h, allow_zero_columns=False)
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    K = h.shape[1]
    return normalize_columns(h @ qrh_invert(h.conj().T @ h + epsilon * np.eye(K)))


def zarei_moment(beta, ell):
    """``(1/l) sum_{i<l} C(l,i) C(l,i+1) beta^i``, normalized per user (rho_1 = 1)."""
    if ell < 1:
        raise ValueError("ell must be >= 1")
    return sum(comb(ell, i) * comb(ell, i + 1) * beta**i for i in range(ell)) / ell


@dataclass(frozen=True)
class ZareiModel:
    omega: np.ndarray
    b1: float
    b2: float
    moments: np.ndarray
    pathloss: np.ndarray


def zarei_weights(beta, b1, b2, nu, J):
    """Minimum total-MSE polynomial coefficients for an i.i.d. channel."""
    if int(J) != J or J < 0 or J > MAX_ORDER:
        raise ValueError(f"order must be an integer in [0, {MAX_ORDER}]")
    J = int(J)
    rho = np.array([np.nan] + [zarei_moment(beta, l) for l in range(1, 2 * J + 3)])
    idx = np.add.outer(np.arange(J + 1), np.arange(J + 1))
    a = rho[1: J + 2]
    B = rho[idx + 2]
    C = rho[idx + 1]
    A = (1 - b1 * b2) * np.outer(a, a) + b1 * b2 * B + nu * b1 * C
    try:
        omega, _ = _spd_solve(A, a)
    except np.linalg.LinAlgError:
        # the rank-one term can make the system indefinite when b1 b2 > 1
        omega = np.linalg.solve(A, a)
    return omega


def zarei_model(pathloss, p, beta, nu, J):
    A = np.asarray(pathloss, dtype=float).reshape(-1)
    if np.any(A <= 0):
        raise ValueError("pathloss coefficients must be positive")
    pb = check_powers(p, A.shape[0]) * A
    b1, b2 = float(np.mean(1.0 / pb)), float(np.mean(pb))
    omega = zarei_weights(beta, b1, b2, nu, J)
    moments = np.array([zarei_moment(beta, l) for l in range(1, 2 * J + 3)])
    return ZareiModel(omega, b1, b2, moments, A)


def zarei_precoder(h, model):
    """Unit-norm columns of ``Hs sum_l omega_l (Hs^H Hs)^l``, ``Hs = H A^{-1/2}``."""
    h = check_channel(h, allow_zero_columns=False)
    hs = h / np.sqrt(model.pathloss)[None, :]
    gram = hs.conj().T @ hs
    K = h.shape[1]
    poly = model.omega[-1] * np.eye(K, dtype=np.complex128)
    for w in model.omega[-2::-1]:
        poly = w * np.eye(K) + gram @ poly
    return normalize_columns(hs @ poly)


class _Precoder(TransformerMixin, BaseEstimator):
    """Shared ``fit``: record powers and, when available, pathlosses."""

    def fit(self, X=None, p=None):
        if isinstance(X, CovarianceModel):
            self.pathloss_ = np.asarray(X.pathloss, dtype=float)
            K = X.K
        elif X is not None:
            spectrum = np.asarray(X, dtype=float)
            self.pathloss_ = spectrum.mean(axis=0)
            K = spectrum.shape[1]
        else:
            K = None if p is None else len(np.ravel(p))
        self.p_ = None if K is None else check_powers(p, K)
        return self

    def _powers(self, h):
        check_is_fitted(self, "p_")
        return check_powers(self.p_, h.shape[1])

    def _nu(self, h):
        M, K = h.shape
        return (K / M) / self.snr

    def uplink_sinr(self, X):
        h = check_channel(X)
        return finite_sinr(h, self.transform(h), self._powers(h), self._nu(h))


class ConjugateBeamformer(_Precoder):
    def __init__(self, snr=10.0):
        self.snr = snr

    def transform(self, X):
        check_is_fitted(self, "p_")
        return conj_bf(X)


class MMSEPrecoder(_Precoder):
    """Dual MMSE: uplink MMSE receivers reused as downlink precoders."""

    def __init__(self, snr=10.0):
        self.snr = snr

    def transform(self, X):
        h = check_channel(X)
        return mmse_receiver(h, self._powers(h), self._nu(h))[0]


class RZFPrecoder(_Precoder):
    """RZF with regularization ``epsilon`` (default: the noise level ``nu``)."""

    def __init__(self, snr=10.0, epsilon=None):
        self.snr = snr
        self.epsilon = epsilon

    def transform(self, X):
        check_is_fitted(self, "p_")
        h = check_channel(X)
        eps = self._nu(h) if self.epsilon is None else self.epsilon
        return rzf_precoder(h, eps)


class ZareiPrecoder(_Precoder):
    """Free-probability TPE using only per-user pathlosses (mismatched on correlated channels)."""

    def __init__(self, order=2, snr=10.0):
        self.order = order
        self.snr = snr

    def fit(self, X=None, p=None):
        super().fit(X, p)
        if not hasattr(self, "pathloss_"):
            raise ValueError("ZareiPrecoder.fit needs a covariance model or spectrum")
        M, K = (X.M, X.K) if isinstance(X, CovarianceModel) else np.shape(X)
        self.model_ = zarei_model(self.pathloss_, self.p_, K / M, (K / M) / self.snr, self.order)
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        return zarei_precoder(X, self.model_)
