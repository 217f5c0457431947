"""Uplink power allocation for TPE receivers.

Contains pathloss inversion, the Yates fixed point for minimum powers,
max-min SINR by bisection on a common target, a log-domain geometric
program for the (high-SINR) weighted sum rate, and a virtual-queue
scheduler step.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from . import tpe
from ._validation import check_channel, check_powers

YATES_EPS = 1e-3
YATES_TOL = 1e-8
YATES_BLOWUP = 1e6
YATES_MAX_ITER = 10_000

BISECTION_BUDGET_TOL = 1e-3
BISECTION_MAX_ITER = 60

GP_DAMPING = 0.5
GP_BARRIER_STEP = 10.0
GP_MAX_NEWTON = 500
GP_FINAL_T = 1e9


@dataclass
class PowerTrace:
    """Per-iteration record: total power, min SINR, objective."""

    rows: list = field(default_factory=list)

    def log(self, iteration, p, sinr, objective=float("nan")):
        self.rows.append((int(iteration), float(np.sum(p)), float(np.min(sinr)), float(objective)))

    def to_csv(self, fh):
        w = csv.writer(fh)
        w.writerow(["iteration", "sum_power", "min_sinr", "objective"])
        for r in self.rows:
            w.writerow([r[0]] + [repr(float(x)) for x in r[1:]])


@dataclass(frozen=True)
class YatesResult:
    p: np.ndarray
    feasible: bool
    iterations: int
    sinr: np.ndarray
    trace: PowerTrace


def conventional_power(pathloss):
    """Pathloss inversion normalized to ``sum(p) = K``."""
    A = np.asarray(pathloss, dtype=float).reshape(-1)
    if np.any(~np.isfinite(A)) or np.any(A <= 0):
        raise ValueError("pathloss coefficients must be positive and finite")
    inv = 1.0 / A
    return inv * (len(A) / inv.sum())


def asymptotic_sinr_fn(spectrum, J, nu):
    """``p -> SINR`` predicted from statistics only (large-system coefficients)."""
    spectrum = np.asarray(spectrum, dtype=float)

    def fn(p):
        weights, _ = tpe.asymptotic_weights(spectrum, np.asarray(p, dtype=float), J, nu)
        return np.array([w.sinr for w in weights])

    return fn


def finite_sinr_fn(h, J, nu):
    """``p -> SINR`` of finite-sample optimal TPE receivers on one realization."""
    h = check_channel(h)

    def fn(p):
        return np.array([w.sinr for w in tpe.finite_weights(h, np.asarray(p, dtype=float), J, nu)])

    return fn


def yates_min_power(targets, sinr_fn, eps=YATES_EPS, tol=YATES_TOL, blowup=YATES_BLOWUP,
                    max_iter=YATES_MAX_ITER):
    """Minimum powers meeting ``targets`` via ``p <- p * Gamma / SINR(p)``.

    ``feasible`` is False when some power exceeds ``blowup`` or the iteration
    cap is reached; ``p`` then holds the last iterate.
    """
    gamma = np.asarray(targets, dtype=float).reshape(-1)
    if np.any(gamma < 0) or not np.all(np.isfinite(gamma)):
        raise ValueError("targets must be finite and nonnegative")
    trace = PowerTrace()
    p = np.full(gamma.shape, eps)
    sinr = sinr_fn(p)
    for it in range(1, max_iter + 1):
        p_new = p * gamma / sinr
        if np.any(~np.isfinite(p_new)) or np.any(p_new > blowup):
            return YatesResult(p_new, False, it, sinr, trace)
        change = np.max(np.abs(p_new - p) / np.maximum(p, np.finfo(float).tiny))
        p = p_new
        sinr = sinr_fn(p)
        trace.log(it, p, sinr)
        if change < tol:
            return YatesResult(p, True, it, sinr, trace)
    return YatesResult(p, False, max_iter, sinr, trace)


def max_min_sinr(sinr_fn, budget, xi_max, n_users=None, max_iter=BISECTION_MAX_ITER,
                 budget_tol=BISECTION_BUDGET_TOL):
    """Largest common SINR target reachable with ``sum(p) <= budget``.

    Bisection on the target over ``[0, xi_max]``; each probe is a Yates
    solve, and infeasible or over-budget probes shrink the upper bracket.
    ``n_users`` defaults to ``budget`` (the ``sum(p) = K`` convention).
    Returns ``(xi, p, trace)`` with ``p`` rescaled to sum to ``budget``.
    """
    if budget <= 0 or xi_max <= 0:
        raise ValueError("budget and xi_max must be positive")
    K = int(round(budget)) if n_users is None else int(n_users)
    lo, hi = 0.0, float(xi_max)
    best = None
    trace = PowerTrace()
    for it in range(1, max_iter + 1):
        xi = 0.5 * (lo + hi)
        res = yates_min_power(np.full(K, xi), sinr_fn)
        total = float(np.sum(res.p))
        if res.feasible:
            trace.log(it, res.p, res.sinr, xi)
        if res.feasible and total <= budget * (1 + budget_tol):
            lo, best = xi, res
            if abs(total - budget) <= budget_tol * budget:
                break
        else:
            hi = xi
    if best is None:
        raise RuntimeError("no feasible common target found in the bracket")
    return lo, best.p * (budget / np.sum(best.p)), trace


def _mwsr_terms(x, Q, phi_off, nu):
    """Objective ``sum_k Q_k [log(nu + sum_{j!=k} phi_kj e^x_j) - x_k]`` with derivatives."""
    e = np.exp(x)
    s = nu + phi_off @ e
    pi = phi_off * e[None, :] / s[:, None]
    f = float(Q @ (np.log(s) - x))
    grad = Q @ pi - Q
    hess = np.diag(Q @ pi) - (pi.T * Q) @ pi
    return f, grad, hess


def _budget_terms(x, log_budget):
    m = np.max(x)
    w = np.exp(x - m)
    lse = m + np.log(w.sum())
    sm = w / w.sum()
    return lse - log_budget, sm, np.diag(sm) - np.outer(sm, sm)


def mwsr_power(Q, phi, nu, budget=None, return_info=False):
    """Weighted high-SINR sum rate power allocation for fixed receivers.

    Minimizes ``prod_k T_k^{Q_k}`` with ``T_k >= (nu + sum_{j!=k} phi_kj p_j) /
    (phi_kk p_k)`` and ``sum(p) <= budget`` (default K). In ``x = log p`` with
    ``T`` eliminated this is a smooth convex program, solved by a log-barrier
    with damped Newton steps. The budget is active at the optimum; the result
    is rescaled to meet it exactly.
    """
    Q = np.asarray(Q, dtype=float).reshape(-1)
    phi = np.asarray(phi, dtype=float)
    K = Q.shape[0]
    if phi.shape != (K, K):
        raise ValueError(f"phi must be ({K}, {K}), got {phi.shape}")
    if np.any(Q < 0):
        raise ValueError("queue weights must be nonnegative")
    if np.any(np.diag(phi) <= 0):
        raise ValueError("coupling matrix needs a positive diagonal")
    if nu <= 0:
        raise ValueError("nu must be positive")
    budget = float(K if budget is None else budget)
    phi_off = phi - np.diag(np.diag(phi))
    log_budget = np.log(budget)
    x = np.full(K, np.log(0.5 * budget / K))
    t = 1.0
    newton = 0

    def barrier(x, t):
        f, gf, hf = _mwsr_terms(x, Q, phi_off, nu)
        g, gg, hg = _budget_terms(x, log_budget)
        if g >= 0:
            return np.inf, None, None
        val = t * f - np.log(-g)
        grad = t * gf - gg / g
        hess = t * hf - hg / g + np.outer(gg, gg) / g**2
        return val, grad, hess

    while True:
        while True:
            val, grad, hess = barrier(x, t)
            step = -np.linalg.solve(hess + 1e-14 * np.trace(hess) / K * np.eye(K), grad)
            decrement = float(-grad @ step)
            if decrement / 2 <= 1e-12:
                break
            newton += 1
            if newton > GP_MAX_NEWTON:
                raise RuntimeError("MWSR Newton iterations did not converge")
            a = 1.0
            while True:
                cand, _, _ = barrier(x + a * step, t)
                if cand <= val - 0.25 * a * decrement:
                    break
                a *= GP_DAMPING
                if a < 1e-12:
                    break
            if a < 1e-12 or val - cand <= 64 * np.finfo(float).eps * abs(val):
                # round-off floor: no representable decrease left
                if a >= 1e-12:
                    x = x + a * step
                break
            x = x + a * step
        if t >= GP_FINAL_T:
            break
        t *= GP_BARRIER_STEP

    p = np.exp(x)
    p *= budget / p.sum()
    # stationarity of the active-budget problem at the rescaled point
    _, gf, _ = _mwsr_terms(np.log(p), Q, phi_off, nu)
    _, gg, _ = _budget_terms(np.log(p), log_budget)
    lam = max(0.0, -float(gf @ gg) / float(gg @ gg))
    kkt = float(np.max(np.abs(gf + lam * gg)))
    if return_info:
        return p, {"kkt_residual": kkt, "newton_steps": newton, "objective": mwsr_objective(Q, phi, nu, p)}
    return p


def mwsr_objective(Q, phi, nu, p):
    """``sum_k Q_k log SINR_k`` for ``SINR_k = phi_kk p_k / (nu + sum_{j!=k} phi_kj p_j)``."""
    d = np.diag(phi) * p
    return float(np.asarray(Q) @ np.log(d / (nu + phi @ p - d)))


@dataclass(frozen=True)
class SchedulerState:
    queues: np.ndarray
    V: float
    b_max: float
    utility: str = "proportional-fair"

    def __post_init__(self):
        q = np.asarray(self.queues, dtype=float).reshape(-1)
        if np.any(q < 0):
            raise ValueError("queues must be nonnegative")
        if self.V <= 0 or self.b_max <= 0:
            raise ValueError("V and b_max must be positive")
        if self.utility not in ("proportional-fair", "max-min", "sum-rate"):
            raise ValueError(f"unknown utility {self.utility!r}")
        object.__setattr__(self, "queues", q)


def arrivals(state):
    """Maximizer of ``V U(b) - sum_k Q_k b_k`` over ``[0, b_max]^K``."""
    Q, V, bm = state.queues, state.V, state.b_max
    if state.utility == "proportional-fair":
        with np.errstate(divide="ignore"):
            return np.where(Q > 0, np.minimum(bm, V / np.where(Q > 0, Q, 1.0)), bm)
    if state.utility == "sum-rate":
        return np.where(Q < V, bm, 0.0)
    # max-min: the optimum is a common level, linear objective (V - sum Q) b
    return np.full(Q.shape, bm if Q.sum() < V else 0.0)


def scheduler_step(state, rates):
    """One virtual-queue update; returns ``(new_state, arrivals)``."""
    R = np.asarray(rates, dtype=float).reshape(-1)
    if R.shape != state.queues.shape:
        raise ValueError("rates and queues differ in length")
    if np.any(R < 0):
        raise ValueError("rates must be nonnegative")
    B = arrivals(state)
    return replace(state, queues=np.maximum(state.queues - R + B, 0.0)), B


def alternate_weights_powers(h, Q, J, nu, spectrum=None, p0=None, tol=1e-4, max_rounds=50):
    """Alternate TPE weight optimization and the MWSR geometric program.

    Weights come from the realization ``h`` (finite coefficients) unless a
    circulant ``spectrum`` is given. Because the polynomial basis ``(PG)^l``
    itself moves with ``p``, a round can lower the objective
    ``sum_k Q_k log SINR_k``; the loop then stops and keeps the best round,
    so the logged objective is nondecreasing.

    Returns ``(weights, p, trace)``; ``weights`` is a (K, J+1) array.
    """
    h = check_channel(h)
    K = h.shape[1]
    Q = np.asarray(Q, dtype=float).reshape(-1)
    p = check_powers(p0, K).copy()
    trace = PowerTrace()
    best = None
    for rnd in range(1, max_rounds + 1):
        if spectrum is None:
            ws = tpe.finite_weights(h, p, J, nu)
        else:
            ws, _ = tpe.asymptotic_weights(spectrum, p, J, nu)
        W = np.stack([w.w for w in ws])
        V = tpe.horner_precoder(h, p, W)
        p_new = mwsr_power(Q, tpe.coupling(h, V), nu)
        sinr = tpe.finite_sinr(h, V, p_new, nu)
        objective = float(Q @ np.log(sinr))
        if best is not None and objective < best[3] - 1e-12 * abs(best[3]):
            break
        trace.log(rnd, p_new, sinr, objective)
        done = best is not None and np.max(np.abs(sinr - best[2]) / best[2]) < tol
        best = (W, p_new, sinr, objective)
        p = p_new
        if done:
            break
    return best[0], best[1], trace
