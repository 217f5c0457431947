"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` (the verdict lines are
printed with capture disabled, so they also appear without ``-s``).
"""
import time
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest
import scipy.linalg
from scipy import stats

from tpemimo import latency as lat
from tpemimo import power_control as pc
from tpemimo.asymptotics import mp_moment, moment_table, rho_from_gamma, xi_table
from tpemimo.baselines import mmse_receiver, qrh_invert
from tpemimo.channel import SystemConfig, build_covariance_model
from tpemimo.duality import DualityCoupling, min_powers, ul_to_dl
from tpemimo.experiment import builtin_scenarios, run_experiment
from tpemimo.scenarios import builtin_geometry
from tpemimo.tpe import (
    direct_tpe_transmit,
    finite_moments,
    finite_sinr,
    finite_weights,
    horner_precoder,
    normalized_weights,
)

from conftest import crandn

SEED = 20240611


@pytest.fixture
def verdict(capsys):
    def report(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n:2d}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail

    return report


def test_criterion_01_marchenko_pastur(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    closed = True
    for beta in (0.1, 0.5, 1.0):
        M = 40
        K = int(round(beta * M))
        xi = xi_table(np.ones((M, K)), 6)
        for ell in range(1, 7):
            worst = max(worst, float(np.max(np.abs(xi[ell] - mp_moment(beta, ell)))))
        b = Fraction(beta).limit_denominator(1000)  # exact rational beta
        closed &= mp_moment(b, 1) == b
        closed &= mp_moment(b, 2) == b + b**2
        closed &= mp_moment(b, 3) == b + 3 * b**2 + b**3
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and closed and dt < 1.0
    verdict(1, ok, f"max |xi - MP| = {worst:.1e}, closed forms exact: {closed}, {dt:.3f} s")


def test_criterion_02_lemma_finite_exactness(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    M, K, L = 64, 8, 5
    worst = 0.0
    for _ in range(100):
        h = crandn(rng, M, K) / np.sqrt(M) * np.sqrt(rng.uniform(0.2, 2.0, K))
        rho = finite_moments(h, L)
        for k in range(K):
            others = np.delete(h, k, axis=1)
            s, gam = h[:, k], []
            for _ in range(L + 1):
                gam.append(np.vdot(h[:, k], s).real)
                s = others @ (others.conj().T @ s)
            worst = max(worst, float(np.max(np.abs(rho_from_gamma(np.array(gam)) / rho[:, k] - 1))))
    dt = time.perf_counter() - t0
    verdict(2, worst <= 1e-10 and dt < 10.0, f"max relative error {worst:.1e} on 100 instances, {dt:.2f} s")


def test_criterion_03_horner_equivalence(verdict):
    rng = np.random.default_rng(SEED)
    M, K, J = 32, 4, 4
    worst_h = worst_d = 0.0
    for _ in range(100):
        h = crandn(rng, M, K) / np.sqrt(M) * np.sqrt(rng.uniform(0.3, 2.0, K))
        p = rng.uniform(0.5, 1.5, K)
        W = rng.standard_normal((K, J + 1))
        G = h.conj().T @ h
        PG = np.diag(p) @ G
        powers = [np.linalg.matrix_power(PG, l) for l in range(J + 1)]
        dense = np.stack([h @ sum(W[k, l] * powers[l][:, k] for l in range(J + 1)) for k in range(K)], axis=1)
        scale = max(1.0, float(np.max(np.abs(dense))))
        raw = horner_precoder(h, p, W, normalize=False)
        worst_h = max(worst_h, float(np.max(np.abs(raw - dense))) / scale)
        unit = horner_precoder(h, p, W)
        worst_h = max(worst_h, float(np.max(np.abs(unit - dense / np.linalg.norm(dense, axis=0)))))
        s = crandn(rng, K)
        worst_d = max(worst_d, float(np.max(np.abs(direct_tpe_transmit(h, p, W, s) - raw @ s))) / scale)
        Wn = normalized_weights(h, p, W)
        worst_d = max(worst_d, float(np.max(np.abs(direct_tpe_transmit(h, p, Wn, s) - unit @ s))))
    ok = worst_h <= 1e-10 and worst_d <= 1e-10
    verdict(3, ok, f"Horner vs dense {worst_h:.1e}, direct transmit vs V s {worst_d:.1e} (100 instances)")


def test_criterion_04_mmse_recovery(verdict):
    rng = np.random.default_rng(SEED)
    M, K = 32, 4
    nu = (K / M) / 10.0
    worst = 0.0
    for _ in range(50):
        h = crandn(rng, M, K) / np.sqrt(M) * np.sqrt(rng.uniform(0.3, 2.0, K))
        p = rng.uniform(0.5, 1.5, K)
        assert np.linalg.matrix_rank(h) == K
        V = horner_precoder(h, p, finite_weights(h, p, K, nu))
        _, ref = mmse_receiver(h, p, nu)
        worst = max(worst, float(np.max(np.abs(finite_sinr(h, V, p, nu) / ref - 1))))
    verdict(4, worst <= 1e-8, f"max relative SINR gap TPE(J=K) vs MMSE {worst:.1e} on 50 instances")


def test_criterion_05_duality(verdict):
    rng = np.random.default_rng(SEED)
    worst_sum = worst_sinr = 0.0
    for _ in range(100):
        M, K = 32, int(rng.integers(2, 9))
        h = crandn(rng, M, K) / np.sqrt(M)
        v = crandn(rng, M, K)
        v /= np.linalg.norm(v, axis=0)
        p = rng.uniform(0.2, 2.0, K)
        nu = rng.uniform(0.01, 1.0)
        ul = finite_sinr(h, v, p, nu)
        q = ul_to_dl(h, v, p, nu)
        dl = finite_sinr(h, v, nu=nu, side="downlink", q=q)
        coupling = DualityCoupling(np.abs(v.conj().T @ h) ** 2, ul, nu)
        p_min, q_min = min_powers(coupling, "uplink"), min_powers(coupling, "downlink")
        worst_sum = max(worst_sum, abs(p_min.sum() - q_min.sum()) / p_min.sum(), abs(q.sum() - p.sum()) / p.sum())
        worst_sinr = max(worst_sinr, float(np.max(np.abs(dl / ul - 1))))
    ok = worst_sum <= 1e-10 and worst_sinr <= 1e-8
    verdict(5, ok, f"sum-power mismatch {worst_sum:.1e}, DL/UL SINR mismatch {worst_sinr:.1e} (100 sets)")


def smooth_profile(M, K):
    """Per-user pathloss times a one-harmonic angular ripple, fixed across M."""
    rng = np.random.default_rng(SEED)
    depth, phase, gain = rng.uniform(0, 0.9, 64), rng.uniform(0, 2 * np.pi, 64), rng.uniform(0.5, 1.5, 64)
    m = np.arange(M)[:, None] / M
    return gain[:K] * (1 + depth[:K] * np.cos(2 * np.pi * m - phase[:K]))


def mc_gamma(D, trials, L, rng):
    """Trial-averaged leave-one-out forms ``h_k^H Gamma_k^l h_k`` on circulant channels."""
    M, K = D.shape
    acc = np.zeros((L + 1, K))
    for _ in range(trials):
        H = np.fft.fft(crandn(rng, M, K) * np.sqrt(D / M), axis=0) / np.sqrt(M)
        G = H.conj().T @ H
        for k in range(K):
            keep = np.arange(K) != k
            Gk, gk = G[np.ix_(keep, keep)], G[keep, k]
            acc[0, k] += G[k, k].real
            s = gk
            for ell in range(1, L + 1):
                acc[ell, k] += np.vdot(gk, s).real
                s = Gk @ s
    return acc / trials


@pytest.mark.slow
def test_criterion_06_asymptotic_accuracy(verdict):
    t0 = time.perf_counter()
    L, trials = 4, 200
    errs = {}
    for M in (64, 128, 256, 512):
        K = round(M * 52 / 512)
        D = smooth_profile(M, K)
        table = moment_table(D, L)
        g = mc_gamma(D, trials, L, np.random.default_rng([SEED, M]))
        r = rho_from_gamma(g)
        errs[M] = (
            float(np.max(np.abs(g / table.gamma - 1))),
            float(np.max(np.abs(r / table.rho - 1))),
        )
    dt = time.perf_counter() - t0
    g512, r512 = errs[512]
    Ms = sorted(errs)
    dec_g = all(errs[b][0] < errs[a][0] for a, b in zip(Ms, Ms[1:]))
    dec_r = all(errs[b][1] < errs[a][1] for a, b in zip(Ms, Ms[1:]))
    ok = g512 <= 0.05 and r512 <= 0.05 and dec_g and dec_r and dt < 300
    trend = ", ".join(f"M={M}: {errs[M][0]:.3f}/{errs[M][1]:.3f}" for M in Ms)
    verdict(6, ok, f"max rel. error gamma/rho per user and order: {trend}; decreasing {dec_g}/{dec_r}; {dt:.0f} s")


def test_criterion_07_latency_numbers(verdict):
    t0 = time.perf_counter()
    prm = lat.LatencyParams(M=160, K=16, J=4, U=4, f_d=300e6, B=100, s=12)
    rep = lat.unit_latencies(prm)
    tpe_us = 1e6 * lat.wall_clock(prm, rep.tpe)
    rzf_us = 1e6 * lat.wall_clock(prm, rep.rzf)
    checks = {
        "L_TPE": abs(rep.tpe / 130 - 1) <= 0.03,
        "TPE wall clock": abs(tpe_us / 43.3 - 1) <= 0.03,
        "RZF wall clock": abs(rzf_us / 243 - 1) <= 0.03,
        "alpha": abs(rep.alpha / 5.6 - 1) <= 0.05,
        "DTPEP alpha": abs(rep.alpha_dtpep / 2.2 - 1) <= 0.05,
    }
    above_one = True
    for M in range(30, 161, 10):
        K = M // 10
        for s in (6, 12, 20):
            for U in lat.u_grid(K):
                above_one &= lat.dtpep_comparison(lat.LatencyParams(M=M, K=K, J=4, U=U, s=s))[0] > 1
    checks["DTPEP alpha > 1 on grid"] = above_one
    dt = time.perf_counter() - t0
    ok = all(checks.values()) and dt < 1.0
    bad = [k for k, v in checks.items() if not v]
    verdict(7, ok, f"L_TPE={rep.tpe}, {tpe_us:.2f} us, RZF {rzf_us:.2f} us, alpha={rep.alpha:.3f}, "
                   f"DTPEP alpha={rep.alpha_dtpep:.3f}, grid>1 {above_one}, {dt * 1e3:.0f} ms"
                   + (f"; failing: {bad}" if bad else ""))


def test_criterion_08_qrh(verdict):
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for K in (4, 8, 16, 32):
        for i in range(25):
            if i % 2:
                A = crandn(rng, K, K)
                G = A @ A.conj().T + 0.1 * K * np.eye(K)
            else:
                h = crandn(rng, 10 * K, K) / np.sqrt(10 * K)
                G = h.conj().T @ h + 0.01 * np.eye(K)
            ref = scipy.linalg.lu_solve(scipy.linalg.lu_factor(G), np.eye(K))
            worst = max(worst, float(np.linalg.norm(qrh_invert(G) - ref) / np.linalg.norm(ref)))
    verdict(8, worst <= 1e-9, f"max relative error vs LU {worst:.1e} on 100 matrices, K in 4..32")


ORDERED = ("conjbf", "tpe1-finite", "tpe2-finite", "tpe3-finite", "mmse")


@pytest.mark.slow
def test_criterion_09_ordering(verdict):
    trials = 500
    tables = {
        name: run_experiment(builtin_scenarios(name, trials=trials, precoders=ORDERED, seed=SEED))
        for name in ("single-cluster", "quasi-orthogonal-8", "mixed-table1")
    }
    violations, worst = 0, 0.0
    failures = {n: t.failures for n, t in tables.items() if t.failures}
    for t in tables.values():
        for snr in (0.0, 10.0, 20.0, 30.0):
            s = np.stack([t.sum_rates(p, snr) for p in ORDERED])
            d = np.diff(s, axis=0)
            violations += int(np.sum(d < -1e-8))
            worst = min(worst, float(d.min()))
    qo = tables["quasi-orthogonal-8"]
    c, t2, m = (qo.sum_rates(p, 20.0).mean() for p in ("conjbf", "tpe2-finite", "mmse"))
    closed = (t2 - c) / (m - c)
    sc = tables["single-cluster"]
    lower = {}
    for snr in (0.0, 10.0, 20.0, 30.0):
        gap = sc.sum_rates("mmse", snr) - sc.sum_rates("tpe3-finite", snr)
        lower[snr] = gap.mean() - stats.t.ppf(0.95, gap.size - 1) * gap.std(ddof=1) / np.sqrt(gap.size)
    ok = not failures and violations == 0 and closed >= 0.8 and all(v > 0 for v in lower.values())
    lb = ", ".join(f"{s:g} dB {v:.3f}" for s, v in lower.items())
    verdict(9, ok, f"{violations} ordering violations (worst step {worst:.1e}); quasi-orthogonal TPE2 closes "
                   f"{100 * closed:.1f}% of the gap at 20 dB; single-cluster MMSE-TPE3 gap 95% lower bound: {lb}"
                   + (f"; failed cells {failures}" if failures else ""))


def test_criterion_10_power_control(verdict):
    notes, ok = [], True
    geom = builtin_geometry("mixed-table1")
    snr = 10.0
    cfg = SystemConfig(160, 16, snr)
    cov = build_covariance_model(geom, cfg)
    fn = pc.asymptotic_sinr_fn(cov.circulant_eigs, 2, cfg.nu)

    targets = np.linspace(0.5, 2.0, 16)
    res = pc.yates_min_power(targets, fn)
    shortfall = float(np.max(targets - fn(res.p))) if res.feasible else np.inf
    ok &= res.feasible and shortfall <= 1e-6
    notes.append(f"Yates feasible={res.feasible} in {res.iterations} it, max shortfall {shortfall:.1e}")
    absurd = pc.yates_min_power(np.full(16, 1e6 * snr), fn)
    ok &= not absurd.feasible
    notes.append(f"absurd targets flagged={not absurd.feasible}")

    xi, p, _ = pc.max_min_sinr(fn, 16, xi_max=snr * 160 * float(np.max(cov.pathloss)))
    s = fn(p)
    spread, budget = float(s.max() / s.min()), abs(float(p.sum()) - 16) / 16
    ok &= spread <= 1.01 and budget <= 1e-3
    notes.append(f"max-min spread {spread:.4f}, budget error {budget:.1e}")

    rng = np.random.default_rng(SEED)
    worst = 0.0
    g = np.linspace(2.0 / 200, 2.0, 200)
    P1, P2 = np.meshgrid(g, g)
    keep = P1 + P2 <= 2.0 + 1e-12
    for _ in range(5):
        phi = rng.uniform(0.05, 0.4, (2, 2)) + np.diag(rng.uniform(0.8, 1.5, 2))
        Q, nu = rng.uniform(0.5, 2.0, 2), 0.1
        obj = pc.mwsr_objective(Q, phi, nu, pc.mwsr_power(Q, phi, nu))
        grid = max(pc.mwsr_objective(Q, phi, nu, np.array([a, b])) for a, b in zip(P1[keep], P2[keep]))
        worst = max(worst, grid - obj)
    ok &= worst <= 1e-4
    notes.append(f"MWSR grid excess {worst:.1e}")
    verdict(10, ok, "; ".join(notes))


def _paired_rates(spec, ours, theirs):
    t = run_experiment(spec)
    if t.failures:
        raise AssertionError(f"failed cells: {t.failures}")
    return t.sum_rates(ours, 20.0), t.sum_rates(theirs, 20.0)


@pytest.mark.slow
def test_criterion_11_competitor(verdict):
    spec = builtin_scenarios("mixed-table1", trials=500, precoders=("tpe3", "zarei3"), snr_db=(20.0,), seed=SEED)
    a, b = _paired_rates(spec, "tpe3", "zarei3")
    d = a - b
    se = d.std(ddof=1) / np.sqrt(d.size)
    upper = d.mean() + stats.t.ppf(0.95, d.size - 1) * se
    # diagnostic only: the same comparison with unit pathloss per user
    au, bu = _paired_rates(replace(spec, unit_pathloss=True), "tpe3", "zarei3")
    ok = upper >= 0
    verdict(11, ok, f"TPE3 {a.mean():.2f} vs Zarei3 {b.mean():.2f} bit/s/Hz, difference {d.mean():+.2f} "
                    f"(95% one-sided upper bound {upper:+.2f}); with unit pathloss {au.mean():.2f} vs {bu.mean():.2f}")
