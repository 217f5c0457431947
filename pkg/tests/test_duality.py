import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tpemimo._validation import normalize_columns
from tpemimo.duality import (
    DualityCoupling,
    InfeasibleError,
    coupling_matrix,
    downlink_sinr,
    feasibility,
    min_powers,
    spectral_radius,
    ul_to_dl,
    uplink_sinr,
)
from tpemimo.tpe import finite_sinr, finite_weights, horner_precoder

from conftest import crandn


def test_coupling_examples(rng, channel):
    K = 4
    Q, _ = np.linalg.qr(crandn(rng, 8, K))
    phi = coupling_matrix(Q, np.eye(K), Q)
    assert np.allclose(phi, np.eye(K), atol=1e-12)
    v = normalize_columns(channel)
    phi = coupling_matrix(channel, np.eye(K), v)
    G = channel.conj().T @ channel
    ref = np.abs(G) ** 2 / np.real(np.diag(G))[:, None]
    assert np.allclose(phi, ref, rtol=1e-12)
    u = normalize_columns(crandn(rng, K, K))
    phi = coupling_matrix(channel, u, v)
    for k in range(K):
        for j in range(K):
            assert phi[k, j] == pytest.approx(abs(np.vdot(v[:, k], channel @ u[:, j])) ** 2, rel=1e-12)


def test_coupling_validation():
    with pytest.raises(ValueError):
        DualityCoupling(np.ones((2, 3)), [1.0, 1.0])
    with pytest.raises(ValueError):
        DualityCoupling(-np.ones((2, 2)), [1.0, 1.0])
    with pytest.raises(ValueError):
        DualityCoupling(np.ones((2, 2)), [1.0, -1.0])
    with pytest.raises(ValueError):
        DualityCoupling(np.array([[0.0, 1.0], [1.0, 1.0]]), [1.0, 1.0])


def test_feasibility_diagonal():
    g = np.array([1.0, 10.0, 100.0])
    ok, r = feasibility(DualityCoupling(np.diag([0.5, 2.0, 3.0]), g))
    assert ok and r == pytest.approx(np.max(g / (1 + g)))


def test_spectral_radius_two_by_two():
    A = np.array([[0.2, 0.7], [0.7, 0.4]])
    tr, det = np.trace(A), np.linalg.det(A)
    ref = 0.5 * (tr + np.sqrt(tr**2 - 4 * det))
    assert spectral_radius(A) == pytest.approx(ref, rel=1e-12)


def test_spectral_radius_near_degenerate_and_reducible():
    A = np.array([[1.0, 1e-9], [1e-9, 1.0 - 1e-10]])
    assert spectral_radius(A) == pytest.approx(np.max(np.linalg.eigvals(A).real), rel=1e-11)
    B = np.array([[0.3, 0.0], [0.0, 0.8]])
    assert spectral_radius(B) == pytest.approx(0.8)
    assert spectral_radius(np.zeros((3, 3))) == 0.0


def test_feasibility_flip_matches_dense_eigensolver(rng):
    phi = rng.random((4, 4)) * 0.3 + np.diag(rng.uniform(1, 2, 4))
    base = rng.uniform(0.5, 1.5, 4)

    def radius(scale):
        c = DualityCoupling(phi, base * scale)
        return np.max(np.abs(np.linalg.eigvals(c.mu[:, None] * c.phi)))

    lo, hi = 0.0, 1e3
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if radius(mid) < 1 else (lo, mid)
    for s in (0.99 * lo, 1.01 * hi):
        ok, r = feasibility(DualityCoupling(phi, base * s))
        assert ok == (s < lo)
        assert r == pytest.approx(radius(s), rel=1e-9)


def test_min_powers_trivial_cases():
    c = DualityCoupling(np.array([[2.0]]), [3.0], nu=0.5)
    assert min_powers(c)[0] == pytest.approx(3.0 / 2.0)
    phi = np.diag([1.0, 4.0])
    c = DualityCoupling(phi, [2.0, 2.0])
    assert np.allclose(min_powers(c), [2.0, 0.5])
    assert np.allclose(min_powers(c, "downlink"), [2.0, 0.5])
    with pytest.raises(ValueError):
        min_powers(c, "sideways")


def test_min_powers_infeasible():
    with pytest.raises(InfeasibleError):
        min_powers(DualityCoupling(np.ones((2, 2)), [10.0, 10.0]))


def test_min_powers_meet_targets_and_equal_sums(rng):
    for _ in range(20):
        K = 5
        phi = rng.random((K, K)) * 0.2 + np.diag(rng.uniform(1, 2, K))
        g = rng.uniform(0.2, 1.5, K)
        c = DualityCoupling(phi, g)
        p, q = min_powers(c), min_powers(c, "downlink")
        assert np.sum(p) == pytest.approx(np.sum(q), rel=1e-10)
        assert np.allclose(uplink_sinr(phi, p, 1.0), g, rtol=1e-8)
        assert np.allclose(downlink_sinr(phi, q, 1.0), g, rtol=1e-8)


def test_min_powers_componentwise_minimal(rng):
    K = 4
    phi = rng.random((K, K)) * 0.2 + np.diag(rng.uniform(1, 2, K))
    g = rng.uniform(0.2, 1.0, K)
    pmin = min_powers(DualityCoupling(phi, g))
    for _ in range(2000):
        cand = pmin * rng.uniform(0.5, 3.0, K)
        if np.all(uplink_sinr(phi, cand, 1.0) >= g):
            assert np.all(cand >= pmin - 1e-8)


def test_ul_to_dl_symmetric_orthogonal():
    h = np.eye(4, 3, dtype=complex) * 0.7
    p = np.ones(3)
    q = ul_to_dl(h, normalize_columns(h), p, 0.1)
    assert np.allclose(q, p)


def test_ul_to_dl_two_user_crafted():
    h = np.array([[1.0, 0.4], [0.2, 0.9j], [0.0, 0.3]], dtype=complex)
    v = normalize_columns(h)
    p, nu = np.array([0.5, 1.5]), 0.2
    q = ul_to_dl(h, v, p, nu)
    ul = finite_sinr(h, v, p, nu)
    # direct evaluation of the downlink SINR
    dl = np.empty(2)
    for k in range(2):
        sig = abs(np.vdot(h[:, k], v[:, k])) ** 2 * q[k]
        intf = sum(abs(np.vdot(h[:, k], v[:, j])) ** 2 * q[j] for j in range(2) if j != k)
        dl[k] = sig / (nu + intf)
    assert np.allclose(dl, ul, rtol=1e-8)
    assert np.sum(q) == pytest.approx(np.sum(p), rel=1e-10)


def test_ul_to_dl_tpe_vectors(rng):
    nu = 0.05
    for _ in range(10):
        h = crandn(rng, 32, 4) / np.sqrt(32)
        p = rng.uniform(0.5, 1.5, 4)
        V = horner_precoder(h, p, finite_weights(h, p, 2, nu))
        q = ul_to_dl(h, V, p, nu)
        assert np.sum(q) == pytest.approx(np.sum(p), rel=1e-10)
        assert np.allclose(finite_sinr(h, V, nu=nu, side="downlink", q=q), finite_sinr(h, V, p, nu), rtol=1e-8)


def test_ul_to_dl_requires_unit_norm(channel):
    with pytest.raises(ValueError):
        ul_to_dl(channel, 2 * normalize_columns(channel), None, 0.1)


@given(seed=st.integers(0, 100_000), K=st.integers(1, 6))
def test_property_sum_power_conservation(seed, K):
    rng = np.random.default_rng(seed)
    h = crandn(rng, 10, K)
    v = normalize_columns(crandn(rng, 10, K))
    p = rng.uniform(0.1, 2.0, K)
    nu = rng.uniform(0.05, 1.0)
    q = ul_to_dl(h, v, p, nu)
    assert np.sum(q) == pytest.approx(np.sum(p), rel=1e-10)
    assert np.allclose(finite_sinr(h, v, nu=nu, side="downlink", q=q), finite_sinr(h, v, p, nu), rtol=1e-8)
