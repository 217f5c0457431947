"""Geometric ULA channel model.

Angular scattering clusters define per-user Toeplitz covariances. Their
circulant approximations share the DFT eigenbasis, which is what the
large-system moment machinery in :mod:`tpemimo.asymptotics` consumes.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import toeplitz

# eigenvalues in [-PSD_ERROR, 0) are clipped to zero, below that is an error
PSD_CLIP = 1e-10
PSD_ERROR = 1e-6

GL_NODES_PER_PANEL = 64
MIN_PANELS = 8
# max phase excursion (radians) covered by one 64-node panel
MAX_PANEL_PHASE = 20.0


@dataclass(frozen=True)
class SystemConfig:
    """Antenna/user counts and the normalized noise level.

    ``nu`` is the per-component noise variance ``beta / snr`` of the
    normalized uplink model ``y = H x + sqrt(nu) z``.
    """

    M: int
    K: int
    snr: float
    antenna_spacing_ratio: float = 0.5

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 2:
            raise ValueError(f"M must be an integer >= 2, got {self.M}")
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be an integer >= 1, got {self.K}")
        if self.K > self.M:
            raise ValueError(f"need M >= K, got M={self.M}, K={self.K}")
        if not self.snr > 0:
            raise ValueError(f"snr must be positive, got {self.snr}")
        if not self.antenna_spacing_ratio > 0:
            raise ValueError("antenna_spacing_ratio must be positive")

    @classmethod
    def from_db(cls, M, K, snr_db, antenna_spacing_ratio=0.5):
        return cls(M, K, 10.0 ** (snr_db / 10.0), antenna_spacing_ratio)

    @property
    def beta(self) -> float:
        return self.K / self.M

    @property
    def nu(self) -> float:
        return self.beta / self.snr

    def with_snr(self, snr):
        return SystemConfig(self.M, self.K, snr, self.antenna_spacing_ratio)


@dataclass(frozen=True)
class ScatteringGeometry:
    """Clusters with flat angular densities and their user association.

    Parameters
    ----------
    clusters : sequence of (center, spread)
        Center angle of arrival and angular spread, both in radians.
    association : sequence of sets
        ``association[k]`` holds the (0-based) cluster indices seen by user k.
    sector : (low, high)
        Every cluster support must fit inside this AoA interval.
    """

    clusters: tuple
    association: tuple
    sector: tuple = (-math.pi / 3, math.pi / 3)

    def __post_init__(self):
        clusters = tuple((float(c), float(d)) for c, d in self.clusters)
        association = tuple(frozenset(int(s) for s in a) for a in self.association)
        object.__setattr__(self, "clusters", clusters)
        object.__setattr__(self, "association", association)
        lo, hi = self.sector
        tol = 1e-12
        for s, (center, spread) in enumerate(clusters):
            if spread <= 0:
                raise ValueError(f"cluster {s} has nonpositive spread {spread}")
            if center - spread / 2 < lo - tol or center + spread / 2 > hi + tol:
                raise ValueError(f"cluster {s} support leaves the sector [{lo:.4f}, {hi:.4f}]")
        for k, a in enumerate(association):
            if not a:
                raise ValueError(f"user {k} is associated with no cluster")
            bad = [s for s in a if not 0 <= s < len(clusters)]
            if bad:
                raise ValueError(f"user {k} references unknown cluster(s) {bad}")

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    @property
    def n_users(self) -> int:
        return len(self.association)

    def pathloss(self):
        """Channel strength ``|S_k| / S`` implied by the 1/S cluster weights."""
        return np.array([len(a) / self.n_clusters for a in self.association])

    def association_matrix(self):
        """Boolean (clusters x users) grid, the layout of an asterisk table."""
        grid = np.zeros((self.n_clusters, self.n_users), dtype=bool)
        for k, a in enumerate(self.association):
            grid[sorted(a), k] = True
        return grid

    @classmethod
    def from_association_matrix(cls, clusters, grid, sector=(-math.pi / 3, math.pi / 3)):
        grid = np.asarray(grid, dtype=bool)
        association = [set(np.flatnonzero(grid[:, k]).tolist()) for k in range(grid.shape[1])]
        return cls(tuple(clusters), tuple(association), tuple(sector))


def array_response(theta, cfg):
    """ULA response ``exp(-j 2 pi m (d/lambda) sin(theta))``, m = 0..M-1."""
    m = np.arange(cfg.M)
    return np.exp(-2j * np.pi * m * cfg.antenna_spacing_ratio * np.sin(theta))


def _cluster_column(center, spread, weight, M, spacing):
    """Integral of exp(-j 2 pi d m sin t) * weight / spread over one cluster support."""
    lo, hi = center - spread / 2, center + spread / 2
    phase_span = 2 * np.pi * spacing * (M - 1) * abs(np.sin(hi) - np.sin(lo))
    n_panels = max(MIN_PANELS, math.ceil(phase_span / MAX_PANEL_PHASE))
    x, w = np.polynomial.legendre.leggauss(GL_NODES_PER_PANEL)
    edges = np.linspace(lo, hi, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    m = np.arange(M)
    phase = np.exp(-2j * np.pi * spacing * np.outer(m, np.sin(nodes)))
    return phase @ weights * (weight / spread)


def toeplitz_covariance(geom, k, cfg):
    """First column ``r_m = [R_k]_{m,0}`` of user k's Toeplitz covariance.

    Each associated cluster contributes a flat density of total mass
    ``1 / S``, so ``r_0`` equals the pathloss ``|S_k| / S``.
    """
    if not 0 <= k < geom.n_users:
        raise IndexError(f"user index {k} out of range")
    assoc = geom.association[k]
    if not assoc:
        raise ValueError(f"user {k} has an empty association")
    weight = 1.0 / geom.n_clusters
    col = np.zeros(cfg.M, dtype=np.complex128)
    for s in sorted(assoc):
        center, spread = geom.clusters[s]
        col += _cluster_column(center, spread, weight, cfg.M, cfg.antenna_spacing_ratio)
    col[0] = col[0].real
    return col


def toeplitz_matrix(first_column):
    """Hermitian Toeplitz matrix generated by its first column."""
    c = np.asarray(first_column, dtype=np.complex128)
    return toeplitz(c, np.conj(c))


def circulant_column(first_column):
    """Wrapped generator ``r_m + r_{m-M}`` with ``r_{-n} = conj(r_n)``."""
    r = np.asarray(first_column, dtype=np.complex128)
    wrapped = r.copy()
    # r_{m-M} = conj(r_{M-m}) for m = 1..M-1
    wrapped[1:] += np.conj(r[:0:-1])
    return wrapped


def _clip_eigenvalues(lam, what):
    lam = np.asarray(lam, dtype=float)
    if lam.size and lam.min() < -PSD_ERROR:
        raise ValueError(f"{what} has eigenvalue {lam.min():.3e} below -{PSD_ERROR:g}")
    return np.where(lam < 0, 0.0, lam)


def circulant_eigenvalues(first_column, M=None, repair="strict"):
    """Eigenvalues of the circulant approximation of a Hermitian Toeplitz matrix.

    Ordered to match the unitary DFT basis ``F[n, m] = exp(-j 2 pi n m / M) / sqrt(M)``,
    i.e. ``circ(c) = F diag(lam) F^H``.

    Parameters
    ----------
    first_column : array_like, shape (M,)
    M : int, optional
        Expected length, checked when given.
    repair : {"strict", "clip"}
        ``"strict"`` zeroes round-off negatives and raises below ``-PSD_ERROR``.
        ``"clip"`` accepts the undershoot of the wrapped generator, which is a
        truncated Fourier series of the angular density and rings below zero
        next to the edges of flat scattering functions: negatives are set to
        zero and the spectrum is rescaled so its mean stays ``r_0``.
    """
    if repair not in ("strict", "clip"):
        raise ValueError(f"unknown repair mode {repair!r}")
    c = np.asarray(first_column, dtype=np.complex128)
    if M is not None and c.shape[0] != M:
        raise ValueError(f"generator length {c.shape[0]} != M={M}")
    wrapped = circulant_column(c)
    lam = c.shape[0] * np.fft.ifft(wrapped)
    scale = max(1.0, float(np.max(np.abs(lam))))
    if np.max(np.abs(lam.imag)) > 1e-10 * scale:
        raise ValueError("circulant spectrum is not real: generator is not Hermitian Toeplitz")
    lam = lam.real
    if repair == "clip" and lam.min() < 0:
        lam = np.maximum(lam, 0.0)
        total = lam.sum()
        if total <= 0:
            raise ValueError("circulant spectrum has no positive mass")
        return lam * (c.shape[0] * c[0].real / total)
    lam[(lam < 0) & (lam >= -PSD_CLIP * scale)] = 0.0
    return _clip_eigenvalues(lam, "circulant approximation")


def dft_matrix(M):
    """Unitary DFT matrix with ``F[n, m] = exp(-j 2 pi n m / M) / sqrt(M)``."""
    n = np.arange(M)
    return np.exp(-2j * np.pi * np.outer(n, n) / M) / np.sqrt(M)


@dataclass
class CovarianceModel:
    """Per-user Toeplitz generators, circulant spectra and pathlosses.

    Attributes
    ----------
    first_columns : ndarray, shape (K, M)
    circulant_eigs : ndarray, shape (M, K)
        Column k is the circulant spectrum of user k, laid out like the
        variance profile.
    pathloss : ndarray, shape (K,)
        ``tr(R_k) / M``.
    """

    first_columns: np.ndarray
    circulant_eigs: np.ndarray
    pathloss: np.ndarray
    _sqrt_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def M(self):
        return self.first_columns.shape[1]

    @property
    def K(self):
        return self.first_columns.shape[0]

    def covariance(self, k):
        return toeplitz_matrix(self.first_columns[k])

    def covariance_sqrt(self, k):
        """Hermitian square root of ``R_k`` with small negative eigenvalues clipped."""
        if k not in self._sqrt_cache:
            R = self.covariance(k)
            lam, U = np.linalg.eigh(0.5 * (R + R.conj().T))
            lam = _clip_eigenvalues(lam, f"covariance of user {k}")
            self._sqrt_cache[k] = (U * np.sqrt(lam)) @ U.conj().T
        return self._sqrt_cache[k]

    @classmethod
    def from_first_columns(cls, first_columns, repair="strict"):
        cols = np.atleast_2d(np.asarray(first_columns, dtype=np.complex128))
        eigs = np.stack([circulant_eigenvalues(c, repair=repair) for c in cols], axis=1)
        pathloss = cols[:, 0].real.copy()
        return cls(cols, eigs, pathloss)

    @classmethod
    def identity(cls, M, K):
        cols = np.zeros((K, M), dtype=np.complex128)
        cols[:, 0] = 1.0
        return cls.from_first_columns(cols)


def build_covariance_model(geom, cfg, unit_pathloss=False):
    """Integrate every user's covariance and its circulant spectrum.

    Flat cluster densities make the wrapped generator ring below zero, so the
    spectra are built with ``repair="clip"`` (see :func:`circulant_eigenvalues`).
    With ``unit_pathloss`` each ``R_k`` is rescaled to ``tr(R_k) / M = 1``
    instead of keeping ``A_k = |S_k| / S``.
    """
    if geom.n_users != cfg.K:
        raise ValueError(f"geometry has {geom.n_users} users but config has K={cfg.K}")
    cache = {}
    cols = []
    for k in range(cfg.K):
        key = tuple(sorted(geom.association[k]))
        if key not in cache:
            cache[key] = toeplitz_covariance(geom, k, cfg)
        cols.append(cache[key])
    cols = np.stack(cols)
    if unit_pathloss:
        cols = cols / cols[:, :1].real
    return CovarianceModel.from_first_columns(cols, repair="clip")


def variance_profile(cov, p):
    """Variance profile ``D[m, k] = Lambda[m, k] * p[k]``."""
    lam = cov.circulant_eigs if isinstance(cov, CovarianceModel) else np.asarray(cov, dtype=float)
    p = np.asarray(p, dtype=float).reshape(-1)
    if lam.ndim != 2 or lam.shape[1] != p.shape[0]:
        raise ValueError(f"spectrum shape {lam.shape} does not match {p.shape[0]} powers")
    if np.any(p < 0):
        raise ValueError("powers must be nonnegative")
    return lam * p[None, :]


@dataclass(frozen=True)
class ChannelRealization:
    """One channel draw. ``h`` is M x K; ``seed``/``trial`` record provenance."""

    h: np.ndarray
    seed: int
    trial: int
    mode: str


def trial_rng(seed, trial=0):
    """Generator for (seed, trial), independent of how trials are scheduled."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(trial),)))


def complex_gaussian(rng, shape, variance=1.0):
    """Circularly symmetric Gaussian samples; real and imaginary parts have variance/2 each."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def sample_channel(cov, p=None, cfg=None, seed=0, trial=0, mode="exact"):
    """Draw a normalized channel matrix including the power scaling ``sqrt(p_k)``.

    ``mode="exact"`` colors white Gaussian columns with ``R_k^{1/2} / sqrt(M)``;
    ``mode="circulant"`` draws ``F (X * sqrt(D))`` with X i.i.d. CN(0, 1/M).
    """
    M, K = cov.M, cov.K
    if cfg is not None and (cfg.M, cfg.K) != (M, K):
        raise ValueError(f"config (M={cfg.M}, K={cfg.K}) does not match covariance model ({M}, {K})")
    p = np.ones(K) if p is None else np.asarray(p, dtype=float).reshape(-1)
    if p.shape[0] != K or np.any(p < 0):
        raise ValueError("p must be a nonnegative vector of length K")
    rng = trial_rng(seed, trial)
    if mode == "circulant":
        D = variance_profile(cov, p)
        x = complex_gaussian(rng, (M, K), 1.0 / M)
        h = dft_matrix(M) @ (x * np.sqrt(D))
    elif mode == "exact":
        g = complex_gaussian(rng, (M, K))
        h = np.empty((M, K), dtype=np.complex128)
        for k in range(K):
            h[:, k] = cov.covariance_sqrt(k) @ g[:, k]
        h *= np.sqrt(p)[None, :] / np.sqrt(M)
    else:
        raise ValueError(f"unknown sampling mode {mode!r}")
    return ChannelRealization(h, int(seed), int(trial), mode)


_TRUE = {"*", "1", "x", "X", "true", "yes"}
_FALSE = {".", "-", "0", "false", "no"}


def parse_association_rows(rows, n_users):
    grid = []
    for i, row in enumerate(rows):
        tokens = row.split()
        if len(tokens) != n_users:
            raise ValueError(f"association row {i + 1} has {len(tokens)} entries, expected {n_users}")
        cells = []
        for t in tokens:
            if t in _TRUE:
                cells.append(True)
            elif t in _FALSE:
                cells.append(False)
            else:
                raise ValueError(f"association row {i + 1}: unrecognized cell {t!r}")
        grid.append(cells)
    return np.array(grid, dtype=bool)


def load_geometry(path):
    """Read ``[system]``, ``[clusters]`` and ``[association]`` sections of an INI file.

    Angles in ``[clusters]`` are degrees: ``c1 = <center> <spread>``. Each
    ``[association]`` entry is one cluster row of ``*``/``.`` cells, one per user.
    """
    path = Path(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=(";",))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise OSError(f"cannot read geometry file {path}: {exc}") from exc
    return geometry_from_parser(parser)


def geometry_from_parser(parser):
    sysc = parser["system"]
    snr = 10.0 ** (sysc.getfloat("snr_db", 10.0) / 10.0) if "snr" not in sysc else sysc.getfloat("snr")
    cfg = SystemConfig(
        sysc.getint("M"), sysc.getint("K"), snr, sysc.getfloat("antenna_spacing_ratio", 0.5)
    )
    clusters = []
    for key in parser["clusters"]:
        center, spread = (float(v) for v in parser["clusters"][key].split())
        clusters.append((math.radians(center), math.radians(spread)))
    rows = [parser["association"][key] for key in parser["association"]]
    if len(rows) != len(clusters):
        raise ValueError(f"{len(rows)} association rows for {len(clusters)} clusters")
    grid = parse_association_rows(rows, cfg.K)
    sector = (-math.pi / 3, math.pi / 3)
    if parser.has_option("system", "sector_deg"):
        lo, hi = (math.radians(float(v)) for v in parser["system"]["sector_deg"].split())
        sector = (lo, hi)
    return cfg, ScatteringGeometry.from_association_matrix(clusters, grid, sector)
