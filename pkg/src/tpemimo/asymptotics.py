"""Large-system moments of a channel with a variance profile.

For ``Hbar = F (X * sqrt(D))`` with ``X`` i.i.d. CN(0, 1/M), the functions
``xi_l(m/M)`` follow a recursion over ordered integer partitions (compositions).
The leave-one-out quadratic forms ``gamma[l, k]`` are averages of ``xi_l``
against user k's profile, and ``rho[l, k]`` (the full-Gram quadratic forms)
follow from ``gamma`` by an exact finite-dimensional recursion.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from math import comb

import numpy as np

MAX_ORDER = 8
MAX_COMPOSITION = 16


@dataclass(frozen=True)
class MomentTable:
    """``xi`` is (L+1, M); ``gamma`` and ``rho`` are (L+1, K)."""

    xi: np.ndarray
    gamma: np.ndarray
    rho: np.ndarray

    @property
    def max_order(self) -> int:
        return self.xi.shape[0] - 1

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            write_moments_csv(fh, self)


def compositions(n):
    """All ordered tuples of positive integers summing to ``n`` (2**(n-1) of them)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if n > MAX_COMPOSITION:
        raise ValueError(f"n={n} exceeds the composition guard {MAX_COMPOSITION}")
    out = []
    # each subset of the n-1 gaps between unit cells is a cut pattern
    for cuts in itertools.product((False, True), repeat=n - 1):
        parts, run = [], 1
        for cut in cuts:
            if cut:
                parts.append(run)
                run = 1
            else:
                run += 1
        parts.append(run)
        out.append(tuple(parts))
    out.sort(key=lambda c: (len(c), tuple(-x for x in c)))
    return out


def _check_profile(D):
    D = np.asarray(D, dtype=float)
    if D.ndim != 2:
        raise ValueError(f"variance profile must be 2-D (M, K), got shape {D.shape}")
    if np.any(D < 0) or not np.all(np.isfinite(D)):
        raise ValueError("variance profile must be finite and nonnegative")
    return D


def _composition_sums(t, n_max):
    """S[n, k] = sum over compositions of n of prod_mu t[n_mu - 1, k]; S[0] = 1."""
    K = t.shape[1]
    S = np.zeros((n_max + 1, K))
    S[0] = 1.0
    for n in range(1, n_max + 1):
        for first in range(1, n + 1):
            S[n] += t[first - 1] * S[n - first]
    return S


def xi_table(D, L):
    """Discretized ``xi_l(m/M)`` for l = 0..L, shape (L+1, M)."""
    D = _check_profile(D)
    if L < 0 or L > MAX_ORDER:
        raise ValueError(f"order L={L} outside [0, {MAX_ORDER}]")
    M, K = D.shape
    beta = K / M
    xi = np.zeros((L + 1, M))
    xi[0] = 1.0
    for ell in range(1, L + 1):
        # t[n, k] = (1/M) sum_m' D[m', k] xi_n(m'/M), n = 0..ell-1
        t = xi[:ell] @ D / M
        S = _composition_sums(t, ell - 1)
        acc = np.zeros(M)
        for j in range(1, ell + 1):
            acc += xi[j - 1] * (D @ S[ell - j]) / K
        xi[ell] = beta * acc
    return xi


def xi_table_enumerated(D, L):
    """Same recursion with explicit composition enumeration (slow; a test oracle)."""
    D = _check_profile(D)
    M, K = D.shape
    beta = K / M
    xi = np.zeros((L + 1, M))
    xi[0] = 1.0
    for ell in range(1, L + 1):
        row_mean = D.mean(axis=1)
        total = beta * xi[ell - 1] * row_mean
        for j in range(1, ell):
            inner = np.zeros(K)
            for comp in compositions(ell - j):
                prod = np.ones(K)
                for part in comp:
                    prod *= xi[part - 1] @ D / M
                inner += prod
            total = total + beta * xi[j - 1] * (D @ inner) / K
        xi[ell] = total
    return xi


def gamma_infty(D, xi):
    """``gamma[l, k] = (1/M) sum_m xi_l(m/M) D[m, k]``."""
    D = _check_profile(D)
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    if xi.shape[1] != D.shape[0]:
        raise ValueError(f"xi has {xi.shape[1]} columns, profile has M={D.shape[0]} rows")
    return xi @ D / D.shape[0]


def rho_from_gamma(gamma):
    """Full-Gram quadratic forms from leave-one-out ones.

    ``rho_l = gamma_l + sum_{i=1}^{l} gamma_{l-i} rho_{i-1}``. Works on a
    single sequence or column-wise on an (L+1, K) table.
    """
    g = np.asarray(gamma, dtype=float)
    rho = np.zeros_like(g)
    for ell in range(g.shape[0]):
        acc = g[ell].copy() if g.ndim > 1 else float(g[ell])
        for i in range(1, ell + 1):
            acc = acc + g[ell - i] * rho[i - 1]
        rho[ell] = acc
    return rho


def mp_moment(beta, ell):
    """Marchenko-Pastur moment ``(1/l) sum_i C(l,i) C(l,i-1) beta^i``."""
    if ell < 1:
        raise ValueError("ell must be >= 1")
    if beta <= 0:
        raise ValueError("beta must be positive")
    return sum(comb(ell, i) * comb(ell, i - 1) * beta**i for i in range(1, ell + 1)) / ell


def trace_moment(xi, ell):
    """Asymptotic normalized trace moment ``lim (1/M) tr((Hbar Hbar^H)^l)``."""
    xi = np.asarray(xi, dtype=float)
    if ell > xi.shape[0] - 1:
        raise ValueError(f"order {ell} not present in a table of max order {xi.shape[0] - 1}")
    return float(xi[ell].mean())


def moment_table(D, L):
    xi = xi_table(D, L)
    gamma = gamma_infty(D, xi)
    return MomentTable(xi, gamma, rho_from_gamma(gamma))


def write_moments_csv(fh, table):
    w = csv.writer(fh)
    w.writerow(["user", "order", "gamma", "rho"])
    L1, K = table.gamma.shape
    for k in range(K):
        for ell in range(L1):
            w.writerow([k, ell, repr(float(table.gamma[ell, k])), repr(float(table.rho[ell, k]))])


def read_moments_csv(fh):
    """Inverse of :func:`write_moments_csv`; returns (gamma, rho) tables."""
    rows = list(csv.DictReader(fh))
    if not rows:
        return np.zeros((0, 0)), np.zeros((0, 0))
    K = max(int(r["user"]) for r in rows) + 1
    L1 = max(int(r["order"]) for r in rows) + 1
    gamma, rho = np.zeros((L1, K)), np.zeros((L1, K))
    for r in rows:
        gamma[int(r["order"]), int(r["user"])] = float(r["gamma"])
        rho[int(r["order"]), int(r["user"])] = float(r["rho"])
    return gamma, rho
