"""Clock-cycle cost model for precoder computation on a pipelined DSP fabric.

Latencies are integers: every ``log2`` is rounded up, and so is every
pipeline-fill term such as ``M / U - 1``. Only ratios and wall-clock times
are floating point.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, replace


def clog2(n):
    """``ceil(log2(n))`` for a positive integer, exactly."""
    n = int(n)
    if n < 1:
        raise ValueError(f"log2 of {n} is undefined here")
    return (n - 1).bit_length()


def cdiv(a, b):
    return -(-int(a) // int(b))


def _is_pow2(n):
    return n >= 1 and n & (n - 1) == 0


@dataclass(frozen=True)
class LatencyParams:
    """Primitive latencies and system sizes.

    ``n_cd`` (complex division) defaults to ``n_cm + n_rd``: ``a conj(b)``
    and ``|b|^2`` run in parallel, then two real divisions in parallel.
    """

    M: int = 160
    K: int = 16
    J: int = 4
    U: int = 4
    n_a: int = 1
    n_m: int = 1
    n_rd: int = 4
    n_s: int = 4
    n_cd: int | None = None
    f_d: float = 300e6
    B: int = 100
    s: int = 12

    def __post_init__(self):
        for name in ("M", "K", "n_a", "n_m", "n_rd", "n_s", "B"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v}")
        if self.K < 3:
            raise ValueError("the Householder vector latency needs K >= 3")
        if int(self.J) != self.J or self.J < 1:
            raise ValueError("J must be a positive integer")
        if not _is_pow2(self.U) or self.U > self.K:
            raise ValueError(f"U must be a power of two not exceeding K, got {self.U}")
        if self.f_d <= 0:
            raise ValueError("f_d must be positive")
        if self.s < 0:
            raise ValueError("s must be nonnegative")
        if self.n_cd is None:
            object.__setattr__(self, "n_cd", self.n_cm + self.n_rd)

    @property
    def n_ca(self):
        return self.n_a

    @property
    def n_cm(self):
        return self.n_m + self.n_a

    @property
    def n_ccm(self):
        return self.n_cm

    @classmethod
    def from_dsp_blocks(cls, chi, **kw):
        """Parameters whose TR unit uses ``chi = 4 U K^2`` DSP blocks."""
        K = kw.get("K", cls.K)
        U = int(chi) // (4 * K * K)
        if 4 * U * K * K != chi:
            raise ValueError(f"{chi} DSP blocks is not 4 U K^2 for K={K}")
        return cls(U=U, **kw)


@dataclass(frozen=True)
class LatencyReport:
    hvc: int
    hcz: tuple
    bks: int
    qrh: int
    tr: int
    gc: int
    pc: int
    p: int
    dtpe: int
    rzf: int
    tpe: int
    tpep: int
    dtpep: int
    chi_qrh: int
    chi_tr: int
    alpha: float
    alpha_dtpep: float


def dot_product_latency(S, prm=None):
    """Cycles for one S-dimensional complex inner product on an adder tree."""
    prm = prm or LatencyParams()
    return prm.n_cm + clog2(S) * prm.n_ca


def hvc_latency(prm):
    return 2 * prm.n_ccm + (4 + clog2(prm.K - 2)) * prm.n_a + prm.n_m + 2 * prm.n_rd + prm.n_s


def hcz_latency(prm, k):
    """Column zeroing at iteration ``k`` (1-based)."""
    if not 1 <= k <= prm.K:
        raise ValueError(f"iteration k={k} outside 1..{prm.K}")
    return 2 * prm.n_cm + (1 + clog2(prm.K - k + 1)) * prm.n_ca


def bks_latency(prm):
    return prm.K * (prm.n_cd + prm.n_cm + prm.n_ca)


def qrh_latency(prm):
    K = prm.K
    hcz_total = K * (2 * prm.n_cm + prm.n_ca) + prm.n_ca + prm.n_ca * sum(clog2(K - k + 1) for k in range(1, K))
    return (K - 1) * hvc_latency(prm) + bks_latency(prm) + hcz_total


def tr_latency(prm):
    K, U = prm.K, prm.U
    step = (prm.n_cm + clog2(K) * prm.n_ca) + (cdiv(K, U) - 1) + prm.n_ca
    return prm.n_cm + prm.n_ca + (prm.J - 1) * step


def gc_latency(prm):
    M, K, U = prm.M, prm.K, prm.U
    head = prm.n_a + prm.n_cm
    fill = cdiv(M, U) - 1
    if K * K >= M:
        return head + clog2(M) * prm.n_ca + fill
    return head + (clog2(K * K) + clog2(cdiv(M, K * K))) * prm.n_ca + fill * (1 + cdiv(M, K * K))


def pc_latency(prm):
    return prm.n_cm + clog2(prm.K) * prm.n_ca + cdiv(prm.M, prm.U) - 1


def p_latency(prm):
    base = prm.n_cm + clog2(prm.K) * prm.n_ca
    UK = prm.U * prm.K
    return base + cdiv(prm.M, UK) - 1 if UK < prm.M else base


def dtpe_latency(prm):
    return prm.n_cm + prm.J * (prm.n_cm + clog2(prm.K) * prm.n_ca + prm.n_ca) + p_latency(prm)


def unit_latencies(prm):
    K = prm.K
    gc, pc, tr, qrh = gc_latency(prm), pc_latency(prm), tr_latency(prm), qrh_latency(prm)
    p, dtpe = p_latency(prm), dtpe_latency(prm)
    rzf, tpe = gc + qrh + pc, gc + tr + pc
    return LatencyReport(
        hvc=hvc_latency(prm),
        hcz=tuple(hcz_latency(prm, k) for k in range(1, K + 1)),
        bks=bks_latency(prm),
        qrh=qrh,
        tr=tr,
        gc=gc,
        pc=pc,
        p=p,
        dtpe=dtpe,
        rzf=rzf,
        tpe=tpe,
        tpep=prm.B * tpe + prm.s * prm.B * p,
        dtpep=prm.B * gc + prm.s * prm.B * dtpe,
        chi_qrh=4 * (K * K + 3 * K),
        chi_tr=4 * prm.U * K * K,
        alpha=rzf / tpe,
        alpha_dtpep=(gc + prm.s * dtpe) / (tpe + prm.s * p),
    )


def total_latency(prm, scheme):
    rep = unit_latencies(prm)
    if scheme not in ("rzf", "tpe", "tpep", "dtpep"):
        raise ValueError(f"unknown scheme {scheme!r}")
    return getattr(rep, scheme)


def wall_clock(prm, cycles):
    """Seconds to compute ``B`` precoders of ``cycles`` each at clock ``f_d``."""
    return prm.B * cycles / prm.f_d


def dtpep_comparison(prm):
    """Return ``(alpha, L_tpep, L_dtpep)`` for direct versus precomputed TPE."""
    rep = unit_latencies(prm)
    return rep.alpha_dtpep, rep.tpep, rep.dtpep


def u_grid(K):
    """Parallelization indices ``2, 4, ..., K`` (powers of two)."""
    out, U = [], 2
    while U <= K:
        out.append(U)
        U *= 2
    return out


def amplification_sweep(configs, base=None):
    """Rows ``(dsp_blocks, M, K, J, L_tpe, L_rzf, alpha)`` over ``U`` for each ``(M, K, J)``."""
    base = base or LatencyParams()
    rows = []
    for M, K, J in configs:
        for U in u_grid(K):
            prm = replace(base, M=M, K=K, J=J, U=U)
            rep = unit_latencies(prm)
            rows.append((rep.chi_tr, M, K, J, rep.tpe, rep.rzf, rep.alpha))
    return rows


SWEEP_HEADER = ("dsp_blocks", "M", "K", "J", "L_tpe", "L_rzf", "alpha")


def write_sweep_csv(fh, rows):
    w = csv.writer(fh)
    w.writerow(SWEEP_HEADER)
    for r in rows:
        w.writerow(list(r[:6]) + [repr(float(r[6]))])


def params_dict(prm):
    return asdict(prm)
