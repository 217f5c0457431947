import io
from dataclasses import replace

import pytest

from tpemimo import latency as lat

GRID = [(M, K, J) for M in (40, 80, 160) for K in (8, 16) for J in (2, 4)]


def test_clog2_and_cdiv():
    assert [lat.clog2(n) for n in (1, 2, 3, 4, 5, 16, 17)] == [0, 1, 2, 2, 3, 4, 5]
    assert lat.cdiv(160, 4) == 40 and lat.cdiv(161, 4) == 41
    with pytest.raises(ValueError):
        lat.clog2(0)


def test_dot_product_latency():
    assert lat.dot_product_latency(16) == 6


def test_tr_pipeline_term_vanishes_at_full_parallelism():
    prm = lat.LatencyParams(K=16, U=16, J=4)
    step = prm.n_cm + lat.clog2(16) * prm.n_ca + prm.n_ca
    assert lat.tr_latency(prm) == prm.n_cm + prm.n_ca + 3 * step


def test_dsp_counts():
    rep = lat.unit_latencies(lat.LatencyParams())
    assert rep.chi_qrh == 1216
    assert rep.chi_tr == 4096
    assert lat.LatencyParams.from_dsp_blocks(4096).U == 4
    with pytest.raises(ValueError):
        lat.LatencyParams.from_dsp_blocks(4000)


def test_hcz_per_iteration_sums_into_qrh():
    prm = lat.LatencyParams()
    hcz = [lat.hcz_latency(prm, k) for k in range(1, prm.K)]
    K = prm.K
    expect = (K - 1) * lat.hvc_latency(prm) + lat.bks_latency(prm) + sum(hcz) + 2 * prm.n_cm + prm.n_ca + prm.n_ca
    assert lat.qrh_latency(prm) == expect
    with pytest.raises(ValueError):
        lat.hcz_latency(prm, 0)


def test_latencies_are_deterministic_integers():
    a = lat.unit_latencies(lat.LatencyParams())
    b = lat.unit_latencies(lat.LatencyParams())
    assert a == b
    for name in ("hvc", "bks", "qrh", "tr", "gc", "pc", "p", "dtpe", "rzf", "tpe", "tpep", "dtpep"):
        v = getattr(a, name)
        assert isinstance(v, int) and v > 0


@pytest.mark.parametrize("M,K,J", GRID)
def test_amplification_monotone_in_u(M, K, J):
    base = lat.LatencyParams(M=M, K=K, J=J)
    reps = [lat.unit_latencies(replace(base, U=U)) for U in lat.u_grid(K)]
    alphas = [r.alpha for r in reps]
    assert alphas[0] >= 1
    assert all(b >= a for a, b in zip(alphas, alphas[1:]))
    trs = [r.tr for r in reps]
    assert all(b <= a for a, b in zip(trs, trs[1:]))
    assert len({r.qrh for r in reps}) == 1


@pytest.mark.parametrize("M", [40, 80, 120, 160])
def test_dtpep_amplification_above_one(M):
    # beta = 0.1, J = 4
    K = M // 10
    for s in (6, 12, 24):
        for U in lat.u_grid(K):
            prm = lat.LatencyParams(M=M, K=K, J=4, U=U, s=s)
            assert lat.dtpep_comparison(prm)[0] > 1


def test_dtpep_independent_of_blocks():
    a1 = lat.dtpep_comparison(lat.LatencyParams(B=1))[0]
    a100 = lat.dtpep_comparison(lat.LatencyParams(B=100))[0]
    assert abs(a1 - a100) <= 1e-15


def test_totals_and_wall_clock():
    prm = lat.LatencyParams(B=1, f_d=1e6)
    rep = lat.unit_latencies(prm)
    assert lat.total_latency(prm, "tpe") == rep.gc + rep.tr + rep.pc
    assert lat.total_latency(prm, "rzf") == rep.gc + rep.qrh + rep.pc
    assert lat.wall_clock(prm, 250) == pytest.approx(250e-6)
    with pytest.raises(ValueError):
        lat.total_latency(prm, "zf")


def test_gc_branches():
    small = lat.LatencyParams(M=40, K=8, U=2)  # K^2 >= M
    big = lat.LatencyParams(M=160, K=8, U=2)  # K^2 < M
    assert lat.gc_latency(small) == small.n_a + small.n_cm + lat.clog2(40) + 19
    assert lat.gc_latency(big) == big.n_a + big.n_cm + lat.clog2(64) + lat.clog2(3) + 79 * 4


@pytest.mark.parametrize("kw", [dict(K=2, U=2), dict(U=3), dict(U=32), dict(J=0), dict(f_d=0.0), dict(M=0)])
def test_parameter_validation(kw):
    with pytest.raises(ValueError):
        lat.LatencyParams(**kw)


def test_sweep_csv():
    rows = lat.amplification_sweep([(160, 16, 4), (40, 8, 2)])
    assert len(rows) == 4 + 3
    buf = io.StringIO()
    lat.write_sweep_csv(buf, rows)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "dsp_blocks,M,K,J,L_tpe,L_rzf,alpha"
    first = lines[1].split(",")
    assert first[:4] == ["2048", "160", "16", "4"]
