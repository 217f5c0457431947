"""Uplink/downlink SINR duality for fixed beamforming vectors.

With unit receivers ``v_k``, unit transmit directions ``u_j`` and coupling
``phi[k, j] = |v_k^H H u_j|^2``, hitting SINR targets ``Gamma`` in the
uplink requires ``(I - diag(mu) Phi) p' = mu`` with
``mu_k = Gamma_k / ((1 + Gamma_k) phi[k, k])`` and ``p' = p / nu``. The
downlink uses ``Phi^T``. Both power vectors have the same sum.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import check_channel, check_powers

POWER_ITER_TOL = 1e-12
POWER_ITER_CAP = 10_000
FEASIBILITY_MARGIN = 1e-9


class InfeasibleError(ValueError):
    """SINR targets cannot be met with finite power."""


@dataclass(frozen=True)
class DualityCoupling:
    phi: np.ndarray
    targets: np.ndarray
    nu: float = 1.0

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        g = np.asarray(self.targets, dtype=float).reshape(-1)
        if phi.ndim != 2 or phi.shape[0] != phi.shape[1] or phi.shape[0] != g.shape[0]:
            raise ValueError(f"phi {phi.shape} and targets {g.shape} are inconsistent")
        if np.any(phi < 0):
            raise ValueError("coupling matrix must be nonnegative")
        if np.any(g < 0):
            raise ValueError("SINR targets must be nonnegative")
        if np.any(np.diag(phi) <= 0):
            raise ValueError("coupling matrix needs a positive diagonal")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "targets", g)

    @property
    def mu(self):
        g = self.targets
        return g / ((1.0 + g) * np.diag(self.phi))


def coupling_matrix(h, u, v):
    """``phi[k, j] = |v_k^H H u_j|^2`` for (M, K) ``h``, (K, K) ``u``, (M, K) ``v``."""
    h = check_channel(h)
    u = check_channel(u, name="u")
    v = check_channel(v, name="v")
    return np.abs(v.conj().T @ h @ u) ** 2


def spectral_radius(A, tol=POWER_ITER_TOL, max_iter=POWER_ITER_CAP):
    """Perron root of a nonnegative matrix by power iteration from all-ones.

    After a few plain steps the iteration runs on the resolvent
    ``(sigma I - A)^{-1}`` with ``sigma`` the current Collatz-Wielandt upper
    bound (Wielandt shift). The resolvent is nonnegative for ``sigma`` above
    the Perron root, so the iterate stays positive and the bounds stay
    valid, while nearly degenerate spectra converge in a few steps.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    x = np.ones(n)
    for it in range(max_iter):
        Ax = A @ x
        live = x > tol
        ratio = Ax[live] / x[live]
        lo, hi = ratio.min(), ratio.max()
        if hi <= 0.0:
            return 0.0
        if hi - lo <= tol * max(hi, 1.0):
            return float(0.5 * (lo + hi))
        y = Ax
        if it >= 8:
            try:
                z = np.linalg.solve((hi + (hi - lo)) * np.eye(n) - A, x)
                if np.all(np.isfinite(z)) and np.all(z >= 0):
                    y = z
            except np.linalg.LinAlgError:
                pass
        y = y / np.max(y)
        if np.max(np.abs(y - x)) <= tol * 1e-3:
            # stationary iterate with spread ratios: reducible matrix
            return float(hi)
        x = y
    raise RuntimeError(f"power iteration did not converge in {max_iter} iterations")


def feasibility(coupling):
    """Return ``(feasible, radius)`` with radius the Perron root of ``diag(mu) Phi``."""
    r = spectral_radius(coupling.mu[:, None] * coupling.phi)
    return r < 1.0 - FEASIBILITY_MARGIN, r


def min_powers(coupling, side="uplink"):
    """Noise-normalized minimum powers ``p'`` (multiply by ``nu`` for actual powers)."""
    if side not in ("uplink", "downlink"):
        raise ValueError(f"side must be 'uplink' or 'downlink', got {side!r}")
    ok, r = feasibility(coupling)
    if not ok:
        raise InfeasibleError(f"targets infeasible: spectral radius {r:.6g} >= 1")
    phi = coupling.phi if side == "uplink" else coupling.phi.T
    mu = coupling.mu
    return np.linalg.solve(np.eye(len(mu)) - mu[:, None] * phi, mu)


def uplink_sinr(phi, p, nu):
    d = np.diag(phi) * p
    return d / (nu + phi @ p - d)


def downlink_sinr(phi, q, nu):
    d = np.diag(phi) * q
    return d / (nu + phi.T @ q - d)


def ul_to_dl(h, v, p, nu):
    """Downlink powers giving every user its uplink SINR with precoders ``v``.

    The receivers ``v`` are reused as precoders and must have unit-norm
    columns. The returned ``q`` has the same sum as ``p``.
    """
    h = check_channel(h)
    v = check_channel(v, name="v")
    K = h.shape[1]
    p = check_powers(p, K)
    norms = np.linalg.norm(v, axis=0)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise ValueError("ul_to_dl needs unit-norm vectors")
    phi = coupling_matrix(h, np.eye(K), v)
    gamma = uplink_sinr(phi, p, nu)
    return nu * min_powers(DualityCoupling(phi, gamma, nu), "downlink")
