"""Monte Carlo ergodic-rate experiments.

Each trial draws one channel (shared by every precoder and SNR point),
computes every precoder's unit-norm vectors, maps them to the downlink by
duality and records per-user rates ``log2(1 + SINR)``. Trials are
independent and seeded by ``(seed, trial)``, so results do not depend on how
trials are spread across worker processes.
"""
from __future__ import annotations

import configparser
import csv
import json
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import power_control as pc
from .baselines import ConjugateBeamformer, MMSEPrecoder, RZFPrecoder, ZareiPrecoder
from .channel import SystemConfig, build_covariance_model, geometry_from_parser, sample_channel
from .duality import ul_to_dl
from .scenarios import K_DEFAULT, M_DEFAULT, builtin_geometry
from .tpe import TPEPrecoder, finite_sinr

RESULT_HEADER = ("precoder", "snr_db", "user", "rate_mean", "rate_stderr")
_PRECODER_RE = re.compile(r"^(conjbf|mmse|rzf|tpe(\d+)(-finite)?|zarei(\d+))$")
_POWER_RE = re.compile(r"^(uniform|conventional|maxmin|minpower:[^\s]+|mwsr(:[^\s]+)?)$")


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything that determines a run.

    ``precoders`` entries are ``conjbf``, ``mmse``, ``rzf``, ``tpe<J>``
    (large-system coefficients), ``tpe<J>-finite`` (per-realization
    coefficients) or ``zarei<J>``. ``power`` is ``uniform``,
    ``conventional``, ``maxmin``, ``minpower:<target>`` or
    ``mwsr[:<Q_1>,...,<Q_K>]``. ``unit_pathloss`` rescales every user's
    covariance to unit trace per antenna instead of ``A_k = |S_k| / S``.
    """

    geometry: object
    M: int = M_DEFAULT
    K: int = K_DEFAULT
    antenna_spacing_ratio: float = 0.5
    precoders: tuple = ("conjbf", "tpe1-finite", "tpe2-finite", "tpe3-finite", "mmse")
    power: str = "uniform"
    snr_db: tuple = (0.0, 10.0, 20.0, 30.0)
    trials: int = 50
    seed: int = 0
    sampling: str = "exact"
    policy_order: int = 2
    unit_pathloss: bool = False
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "precoders", tuple(self.precoders))
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.snr_db:
            raise ValueError("snr grid must be nonempty")
        if not self.precoders:
            raise ValueError("at least one precoder is required")
        for p in self.precoders:
            if not _PRECODER_RE.match(p):
                raise ValueError(f"unknown precoder {p!r}")
        if self.sampling not in ("exact", "circulant"):
            raise ValueError(f"unknown sampling mode {self.sampling!r}")
        if not _POWER_RE.match(self.power):
            raise ValueError(f"unknown power policy {self.power!r}")
        if self.geometry.n_users != self.K:
            raise ValueError(f"geometry has {self.geometry.n_users} users, spec has K={self.K}")
        SystemConfig(self.M, self.K, 1.0, self.antenna_spacing_ratio)


def builtin_scenarios(name, **overrides):
    """Spec for a named geometry at M=160, K=16 with the default comparison set."""
    return replace(ExperimentSpec(builtin_geometry(name), name=name), **overrides)


def make_precoder(name, snr):
    m = _PRECODER_RE.match(name)
    if not m:
        raise ValueError(f"unknown precoder {name!r}")
    if name == "conjbf":
        return ConjugateBeamformer(snr)
    if name == "mmse":
        return MMSEPrecoder(snr)
    if name == "rzf":
        return RZFPrecoder(snr)
    if m.group(2) is not None:
        return TPEPrecoder(int(m.group(2)), snr, "finite" if m.group(3) else "asymptotic")
    return ZareiPrecoder(int(m.group(4)), snr)


@dataclass
class ResultTable:
    """Per-cell per-trial user rates (bits/channel use) and failed cells."""

    rates: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)

    def sum_rates(self, precoder, snr_db):
        return self.rates[(precoder, float(snr_db))].sum(axis=1)

    def rows(self):
        out = []
        for (prec, snr), r in self.rates.items():
            n = r.shape[0]
            se = r.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(r.shape[1])
            for k in range(r.shape[1]):
                out.append((prec, snr, str(k), float(r[:, k].mean()), float(se[k])))
            s = r.sum(axis=1)
            s_se = s.std(ddof=1) / np.sqrt(n) if n > 1 else 0.0
            out.append((prec, snr, "sum", float(s.mean()), float(s_se)))
        return out


class _Context:
    """Per-process precomputation: covariances, powers and fitted precoders."""

    def __init__(self, spec):
        self.spec = spec
        cfg = SystemConfig(spec.M, spec.K, 1.0, spec.antenna_spacing_ratio)
        self.cov = build_covariance_model(spec.geometry, cfg, spec.unit_pathloss)
        self.setup = {}
        for snr_db in spec.snr_db:
            snr = 10.0 ** (snr_db / 10.0)
            nu = (spec.K / spec.M) / snr
            try:
                p = self._static_powers(snr, nu)
            except Exception as exc:  # noqa: BLE001 - recorded per cell
                self.setup[snr_db] = (None, nu, {}, f"power policy failed: {exc}")
                continue
            fitted, errors = {}, {}
            for name in spec.precoders:
                try:
                    est = make_precoder(name, snr)
                    fitted[name] = est.fit(self.cov, p) if p is not None else est
                except Exception as exc:  # noqa: BLE001
                    errors[name] = f"{type(exc).__name__}: {exc}"
            self.setup[snr_db] = (p, nu, fitted, errors)

    def _static_powers(self, snr, nu):
        policy, spec, cov = self.spec.power, self.spec, self.cov
        if policy == "uniform":
            return np.ones(spec.K)
        if policy == "conventional":
            return pc.conventional_power(cov.pathloss)
        fn = pc.asymptotic_sinr_fn(cov.circulant_eigs, spec.policy_order, nu)
        if policy == "maxmin":
            xi_max = snr * spec.M * float(np.max(cov.pathloss))
            return pc.max_min_sinr(fn, spec.K, xi_max)[1]
        if policy.startswith("minpower:"):
            res = pc.yates_min_power(np.full(spec.K, float(policy.split(":", 1)[1])), fn)
            if not res.feasible:
                raise ValueError("SINR targets are infeasible")
            return res.p
        return None  # mwsr: per realization

    def trial(self, t):
        spec = self.spec
        h = sample_channel(self.cov, None, seed=spec.seed, trial=t, mode=spec.sampling).h
        out = {}
        for snr_db in spec.snr_db:
            p, nu, fitted, errors = self.setup[snr_db]
            if isinstance(errors, str):
                for name in spec.precoders:
                    out[(name, snr_db)] = errors
                continue
            if p is None:
                try:
                    Q = _mwsr_weights(spec)
                    _, p_t, _ = pc.alternate_weights_powers(h, Q, spec.policy_order, nu)
                except Exception as exc:  # noqa: BLE001
                    for name in spec.precoders:
                        out[(name, snr_db)] = f"mwsr failed: {exc}"
                    continue
            else:
                p_t = p
            for name in spec.precoders:
                if name in errors:
                    out[(name, snr_db)] = errors[name]
                    continue
                try:
                    est = fitted[name] if p is not None else make_precoder(name, 10 ** (snr_db / 10)).fit(self.cov, p_t)
                    V = est.transform(h)
                    q = ul_to_dl(h, V, p_t, nu)
                    sinr = finite_sinr(h, V, nu=nu, side="downlink", q=q)
                    out[(name, snr_db)] = np.log2(1.0 + sinr)
                except Exception as exc:  # noqa: BLE001
                    out[(name, snr_db)] = f"{type(exc).__name__}: {exc}"
        return out


def _mwsr_weights(spec):
    if ":" in spec.power:
        Q = np.array([float(x) for x in spec.power.split(":", 1)[1].split(",")])
        if Q.shape[0] != spec.K:
            raise ValueError(f"mwsr needs {spec.K} weights, got {Q.shape[0]}")
        return Q
    return np.ones(spec.K)


@lru_cache(maxsize=4)
def _context(spec):
    return _Context(spec)


def _run_chunk(spec, trials):
    ctx = _context(spec)
    return [ctx.trial(t) for t in trials]


def run_experiment(spec, workers=1):
    """Run all trials and reduce them in trial order."""
    trials = list(range(spec.trials))
    if workers <= 1 or spec.trials == 1:
        results = _run_chunk(spec, trials)
    else:
        chunks = [trials[i::workers] for i in range(workers)]
        chunks = [c for c in chunks if c]
        with ProcessPoolExecutor(max_workers=len(chunks)) as ex:
            parts = list(ex.map(_run_chunk, [spec] * len(chunks), chunks))
        by_trial = {}
        for c, part in zip(chunks, parts):
            by_trial.update(zip(c, part))
        results = [by_trial[t] for t in trials]
    table = ResultTable()
    for name in spec.precoders:
        for snr_db in spec.snr_db:
            key = (name, snr_db)
            cells = [r[key] for r in results]
            failed = [c for c in cells if isinstance(c, str)]
            if failed:
                table.failures[key] = failed[0]
            else:
                table.rates[key] = np.stack(cells)
    return table


def empirical_cdf(samples):
    """``(x, F)`` with ``F`` stepping by 1/N from 1/N to 1."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    return x, np.arange(1, x.size + 1) / x.size


def emit(table, out_dir, formats=("csv", "json")):
    """Write results.csv / results.json and one CDF file per cell; returns paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    rows = table.rows()
    written = []
    try:
        if "csv" in formats:
            path = out / "results.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(RESULT_HEADER)
                for r in rows:
                    w.writerow([r[0], repr(float(r[1])), r[2], repr(float(r[3])), repr(float(r[4]))])
            written.append(path)
        if "json" in formats:
            path = out / "results.json"
            doc = {
                "rows": [dict(zip(RESULT_HEADER, r)) for r in rows],
                "failures": [{"precoder": k[0], "snr_db": k[1], "reason": v} for k, v in table.failures.items()],
            }
            path.write_text(json.dumps(doc, indent=1))
            written.append(path)
        for (prec, snr), r in table.rates.items():
            path = out / f"cdf_{prec}_{snr:g}dB.dat"
            x, F = empirical_cdf(r)
            with open(path, "w") as fh:
                fh.write("# rate empirical_probability\n")
                for a, b in zip(x, F):
                    fh.write(f"{float(a)!r} {float(b)!r}\n")
            written.append(path)
    except OSError as exc:
        raise OSError(f"writing results under {out} failed: {exc}") from exc
    return written


def read_results_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != RESULT_HEADER:
            raise ValueError(f"unexpected header {header}")
        return [(r[0], float(r[1]), r[2], float(r[3]), float(r[4])) for r in reader]


def load_spec(path):
    """Read an INI experiment file.

    ``[experiment]`` holds ``scenario`` (a built-in name) or the file carries
    ``[system]``, ``[clusters]`` and ``[association]`` sections; other keys are
    ``precoders``, ``power``, ``snr_db``, ``trials``, ``seed``, ``sampling``,
    ``policy_order``, ``unit_pathloss``.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=(";",))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise OSError(f"cannot read spec file {path}: {exc}") from exc
    if not parser.has_section("experiment"):
        raise ValueError(f"{path}: missing [experiment] section")
    ex = parser["experiment"]
    kw = {}
    if "scenario" in ex:
        spec = builtin_scenarios(ex["scenario"].strip())
    elif parser.has_section("system"):
        cfg, geom = geometry_from_parser(parser)
        spec = ExperimentSpec(geom, M=cfg.M, K=cfg.K, antenna_spacing_ratio=cfg.antenna_spacing_ratio)
    else:
        raise ValueError(f"{path}: give experiment.scenario or [system]/[clusters]/[association]")
    if "precoders" in ex:
        kw["precoders"] = tuple(s.strip() for s in ex["precoders"].split(",") if s.strip())
    if "snr_db" in ex:
        kw["snr_db"] = tuple(float(s) for s in ex["snr_db"].split(",") if s.strip())
    for key, conv in (("power", str), ("trials", int), ("seed", int), ("sampling", str), ("policy_order", int), ("name", str)):
        if key in ex:
            kw[key] = conv(ex[key].strip())
    if "unit_pathloss" in ex:
        kw["unit_pathloss"] = ex.getboolean("unit_pathloss")
    return replace(spec, **kw)
