"""Experiment runner: config validation, Monte-Carlo orchestration over paths,
persistence and CSV/JSON reports.

    spdewave simulate --config sim.json --out runs/sim --paths 8 --seed 1 --threads 4

Settings resolve as command-line flag, then ``SPDEWAVE_*`` environment variable,
then the config file, then built-in defaults.
"""
from __future__ import annotations

import os

# one BLAS thread per process keeps floating-point results independent of the pool size
for _v in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_v, "1")

import argparse
import dataclasses
import hashlib
import json
import math
import platform
import shutil
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .approx import approximation_study, default_ns, fit_rate
from .besov import BesovParams, besov_norm_modulus, besov_norm_wavelet, estimate_smoothness
from .domain import extension_policy, load_domain, EXTENSIONS
from .functions import TEST_FAMILY
from .grid import grid_coords
from .noise import NoiseModel, h1_summability_check, isometry_check
from .rng import derive_seed
from .spde import SpdeConfig, run as run_spde, write_csv
from .wavelet import FAMILIES, build_basis, dwt2

KINDS = ("simulate", "regularity", "approx-rates", "noise-check", "norm-equivalence")
ENV_PREFIX = "SPDEWAVE_"


class ConfigError(ValueError):
    """A config value failed validation; the message names the offending field."""


# --- validation helpers --------------------------------------------------------------

def _number(value, where: str, *, integer=False, lo=None, hi=None, lo_open=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if integer and (not float(value).is_integer()):
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{where}: must be finite")
    if lo is not None and (value <= lo if lo_open else value < lo):
        raise ConfigError(f"{where}: must be {'>' if lo_open else '>='} {lo}, got {value!r}")
    if hi is not None and value > hi:
        raise ConfigError(f"{where}: must be <= {hi}, got {value!r}")
    return int(value) if integer else float(value)


def _choice(value, where: str, options):
    if value not in options:
        raise ConfigError(f"{where}: expected one of {sorted(options)}, got {value!r}")
    return value


def _build(cls, payload, where: str):
    """Instantiate config dataclass ``cls`` from a mapping, rejecting unknown keys."""
    if payload is None:
        payload = {}
    if not isinstance(payload, dict):
        raise ConfigError(f"{where}: expected an object, got {type(payload).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(payload) - names)
    if unknown:
        raise ConfigError(f"{where}.{unknown[0]}: unknown field (allowed: {', '.join(sorted(names))})")
    obj = cls(**payload)
    obj.validate(where)
    return obj


def _domain(name, where):
    try:
        return load_domain(name)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


# --- kind-specific payloads ------------------------------------------------------------

@dataclass
class NoiseConfig:
    a: float = 2.5
    b: float = 0.0
    c: float = 0.0
    j0: int = 0
    mode: str = "dense"
    J_noise: int | None = None

    def validate(self, where):
        self.a = _number(self.a, f"{where}.a", lo=0)
        self.b = _number(self.b, f"{where}.b", lo=0, hi=1)
        self.c = _number(self.c, f"{where}.c")
        self.j0 = _number(self.j0, f"{where}.j0", integer=True, lo=0)
        self.mode = _choice(self.mode, f"{where}.mode", ("dense", "sparse"))
        if self.J_noise is not None:
            self.J_noise = _number(self.J_noise, f"{where}.J_noise", integer=True, lo=self.j0)
        try:
            self.model()
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None

    def model(self) -> NoiseModel:
        return NoiseModel(self.a, self.b, self.c, self.j0, self.mode, self.J_noise)


def _initial_datum(name, domain):
    """Named initial data; ``sine`` is the first Dirichlet eigenfunction of the bounding square."""
    if name is None:
        return None
    if name == "sine":
        (ox, oy), L = domain.origin, domain.side
        return lambda x, y: np.sin(np.pi * (x - ox) / L) * np.sin(np.pi * (y - oy) / L)
    return TEST_FAMILY[name]


@dataclass
class SimulateConfig:
    domain: str | dict = "l-shape"
    J: int = 9
    T: float = 0.1
    steps: int = 256
    a: list = field(default_factory=lambda: [[1.0, 0.0], [0.0, 1.0]])
    noise: dict | None = field(default_factory=dict)
    u0: str | None = None
    snapshots: list = field(default_factory=list)
    family: str = "cdf4.8"
    noise_scale: float = 1.0

    def validate(self, where):
        self._domain = _domain(self.domain, f"{where}.domain")
        self.J = _number(self.J, f"{where}.J", integer=True, lo=2, hi=12)
        self.T = _number(self.T, f"{where}.T", lo=0, lo_open=True)
        self.steps = _number(self.steps, f"{where}.steps", integer=True, lo=1)
        arr = np.asarray(self.a, dtype=float) if isinstance(self.a, list) else None
        if arr is None or arr.shape != (2, 2):
            raise ConfigError(f"{where}.a: expected a 2x2 list of numbers")
        if arr[0, 1] != arr[1, 0] or np.linalg.eigvalsh(arr).min() <= 0:
            raise ConfigError(f"{where}.a: diffusion matrix must be symmetric positive definite")
        self.a = arr.tolist()
        if self.noise is not None:
            self._noise = _build(NoiseConfig, self.noise, f"{where}.noise")
            self.noise = dataclasses.asdict(self._noise)
        if self.u0 is not None:
            _choice(self.u0, f"{where}.u0", set(TEST_FAMILY) | {"sine"})
        if not isinstance(self.snapshots, list):
            raise ConfigError(f"{where}.snapshots: expected a list of step counts")
        self.snapshots = [_number(s, f"{where}.snapshots[{i}]", integer=True, lo=0, hi=self.steps)
                          for i, s in enumerate(self.snapshots)]
        self.family = _choice(self.family, f"{where}.family", FAMILIES)
        self.noise_scale = _number(self.noise_scale, f"{where}.noise_scale", lo=0)

    def spde_config(self, seed: int) -> SpdeConfig:
        return SpdeConfig(self._domain, self.J, self.T, self.steps, a=np.array(self.a),
                          noise=None if self.noise is None else self._noise.model(),
                          u0=_initial_datum(self.u0, self._domain), seed=seed,
                          snapshots=tuple(self.snapshots), basis=build_basis(self.family),
                          noise_scale=self.noise_scale)


SOURCES = tuple(TEST_FAMILY) + ("spde",)


@dataclass
class SourceMixin:
    def source_field(self, seed: int):
        """The analysed field: a bundled test function or the SPDE state at time T."""
        dom = self._domain
        if self.source == "spde":
            traj = run_spde(self._spde.spde_config(seed))
            return traj.fields[-1]
        X, Y = grid_coords(self.J, dom.origin, dom.side)
        return dom.zeros(self.J).with_values(TEST_FAMILY[self.source](X, Y)).masked()

    def _validate_source(self, where):
        self._domain = _domain(self.domain, f"{where}.domain")
        self.J = _number(self.J, f"{where}.J", integer=True, lo=4, hi=12)
        self.source = _choice(self.source, f"{where}.source", SOURCES)
        self.family = _choice(self.family, f"{where}.family", FAMILIES)
        self.extension = _choice(self.extension, f"{where}.extension", EXTENSIONS)
        if self.source == "spde":
            spde = dict(self.spde or {})
            for key in ("domain", "J"):
                if key in spde and spde[key] != getattr(self, key):
                    raise ConfigError(f"{where}.spde.{key}: must match {where}.{key}")
                spde[key] = getattr(self, key)
            self._spde = _build(SimulateConfig, spde, f"{where}.spde")
            self.spde = {k: v for k, v in dataclasses.asdict(self._spde).items() if not k.startswith("_")}

    def coefficients(self, fld):
        ext = extension_policy(self.extension, self._domain)
        return dwt2(fld, build_basis(self.family), 0, extension=ext)


@dataclass
class RegularityConfig(SourceMixin):
    domain: str | dict = "l-shape"
    J: int = 10
    source: str = "singular"
    spde: dict | None = None
    family: str = "cdf4.8"
    extension: str = "zero"
    p: float = 2.0
    drop_coarse: int = 1
    drop_fine: int = 2
    fit_levels: int | None = 4

    def validate(self, where):
        self._validate_source(where)
        self.p = _number(self.p, f"{where}.p", lo=1)
        self.drop_coarse = _number(self.drop_coarse, f"{where}.drop_coarse", integer=True, lo=0)
        self.drop_fine = _number(self.drop_fine, f"{where}.drop_fine", integer=True, lo=0)
        if self.fit_levels is not None:
            self.fit_levels = _number(self.fit_levels, f"{where}.fit_levels", integer=True, lo=4)
        if self.J - self.drop_coarse - self.drop_fine < 4:
            raise ConfigError(f"{where}.J: fewer than 4 levels remain after discarding")


@dataclass
class ApproxConfig(SourceMixin):
    domain: str | dict = "l-shape"
    J: int = 9
    source: str = "spde"
    spde: dict | None = None
    family: str = "cdf4.8"
    extension: str = "zero"
    norm: str = "W12"
    ns: list | None = None
    window: list = field(default_factory=lambda: [16, 1024])
    weighting: str = "unit"

    def validate(self, where):
        self._validate_source(where)
        if not (self.norm in ("L2", "W12") or (isinstance(self.norm, str) and self.norm.startswith("Lp:"))):
            raise ConfigError(f"{where}.norm: expected 'L2', 'W12' or 'Lp:<p>', got {self.norm!r}")
        if self.ns is None:
            self.ns = default_ns()
        if not isinstance(self.ns, list) or len(self.ns) < 5:
            raise ConfigError(f"{where}.ns: expected a list of at least 5 term counts")
        self.ns = [_number(n, f"{where}.ns[{i}]", integer=True, lo=0) for i, n in enumerate(self.ns)]
        if not isinstance(self.window, list) or len(self.window) != 2:
            raise ConfigError(f"{where}.window: expected [N_lo, N_hi]")
        lo = _number(self.window[0], f"{where}.window[0]", lo=1)
        hi = _number(self.window[1], f"{where}.window[1]", lo=lo)
        self.window = [lo, hi]
        self.weighting = _choice(self.weighting, f"{where}.weighting", ("unit", "plain"))


@dataclass
class NoiseCheckConfig:
    J: int = 12
    points: list = field(default_factory=lambda: [
        [1.25, 0.0], [1.5, 0.25], [1.75, 0.0], [1.5, 0.5], [2.0, 0.0],
        [2.25, 0.0], [2.5, 0.0], [2.0, 0.5], [1.5, 1.0], [3.0, 0.5]])
    c: float = 0.0
    isometry: dict | None = field(default_factory=lambda: {"a": 2.5, "J": 4, "dt": 0.01, "samples": 100000})

    def validate(self, where):
        self.J = _number(self.J, f"{where}.J", integer=True, lo=1, hi=60)
        self.c = _number(self.c, f"{where}.c")
        if not isinstance(self.points, list) or not self.points:
            raise ConfigError(f"{where}.points: expected a non-empty list of [a, b] pairs")
        pts = []
        for i, pt in enumerate(self.points):
            if not isinstance(pt, list) or len(pt) != 2:
                raise ConfigError(f"{where}.points[{i}]: expected [a, b]")
            a = _number(pt[0], f"{where}.points[{i}][0]", lo=0)
            b = _number(pt[1], f"{where}.points[{i}][1]", lo=0, hi=1)
            if a + b <= 1:
                raise ConfigError(f"{where}.points[{i}]: a + b must exceed 1")
            pts.append([a, b])
        self.points = pts
        if self.isometry is not None:
            iso = self.isometry
            allowed = {"a", "b", "c", "J", "dt", "samples"}
            if not isinstance(iso, dict) or set(iso) - allowed:
                raise ConfigError(f"{where}.isometry: expected an object with keys {sorted(allowed)}")
            out = {"a": _number(iso.get("a", 2.5), f"{where}.isometry.a", lo=0),
                   "b": _number(iso.get("b", 0.0), f"{where}.isometry.b", lo=0, hi=1),
                   "c": _number(iso.get("c", 0.0), f"{where}.isometry.c"),
                   "J": _number(iso.get("J", 4), f"{where}.isometry.J", integer=True, lo=1, hi=8),
                   "dt": _number(iso.get("dt", 0.01), f"{where}.isometry.dt", lo=0, lo_open=True),
                   "samples": _number(iso.get("samples", 100000), f"{where}.isometry.samples", integer=True, lo=2)}
            if out["a"] + out["b"] <= 1:
                raise ConfigError(f"{where}.isometry: a + b must exceed 1")
            self.isometry = out


@dataclass
class NormEquivalenceConfig:
    domain: str | dict = "l-shape"
    functions: list = field(default_factory=lambda: list(TEST_FAMILY))
    params: list = field(default_factory=lambda: [[1.0, 2.0, 2.0], [0.8, 3.0, 3.0]])
    levels: list = field(default_factory=lambda: [8, 9, 10])
    family: str = "cdf4.8"
    extension: str = "zero"

    def validate(self, where):
        self._domain = _domain(self.domain, f"{where}.domain")
        if not isinstance(self.functions, list) or not self.functions:
            raise ConfigError(f"{where}.functions: expected a non-empty list")
        for i, f in enumerate(self.functions):
            _choice(f, f"{where}.functions[{i}]", TEST_FAMILY)
        self.family = _choice(self.family, f"{where}.family", FAMILIES)
        self.extension = _choice(self.extension, f"{where}.extension", EXTENSIONS)
        r = build_basis(self.family).r
        if not isinstance(self.params, list) or not self.params:
            raise ConfigError(f"{where}.params: expected a list of [s, p, q]")
        for i, pr in enumerate(self.params):
            if not isinstance(pr, list) or len(pr) != 3:
                raise ConfigError(f"{where}.params[{i}]: expected [s, p, q]")
            s = _number(pr[0], f"{where}.params[{i}][0]", lo=0, lo_open=True)
            _number(pr[1], f"{where}.params[{i}][1]", lo=1)
            _number(pr[2], f"{where}.params[{i}][2]", lo=0, lo_open=True)
            if s >= r:
                raise ConfigError(f"{where}.params[{i}][0]: s={s} needs a basis with more than {r} vanishing moments")
        if not isinstance(self.levels, list) or not self.levels:
            raise ConfigError(f"{where}.levels: expected a non-empty list")
        self.levels = [_number(j, f"{where}.levels[{i}]", integer=True, lo=4, hi=12)
                       for i, j in enumerate(self.levels)]


PAYLOADS = {"simulate": SimulateConfig, "regularity": RegularityConfig, "approx-rates": ApproxConfig,
            "noise-check": NoiseCheckConfig, "norm-equivalence": NormEquivalenceConfig}


def _public(cfg) -> dict:
    return {k: v for k, v in dataclasses.asdict(cfg).items() if not k.startswith("_")}


@dataclass
class Experiment:
    kind: str
    config: dict = field(default_factory=dict)
    out: Path = Path("runs/out")
    paths: int = 1
    seed: int = 0
    threads: int = 1
    plots: bool = False

    def validate(self):
        """Check the payload for this kind; returns the typed config object."""
        if self.kind not in KINDS:
            raise ConfigError(f"kind: expected one of {list(KINDS)}, got {self.kind!r}")
        self.paths = _number(self.paths, "paths", integer=True, lo=1)
        self.seed = _number(self.seed, "seed", integer=True, lo=0, hi=2**64 - 1)
        self.threads = _number(self.threads, "threads", integer=True, lo=1)
        return _build(PAYLOADS[self.kind], self.config, "config")

    def path_seeds(self) -> list[int]:
        return [derive_seed(self.seed, i, "path") for i in range(self.paths)]


# --- per-path work ----------------------------------------------------------------------

def _simulate_path(cfg: SimulateConfig, seed: int) -> dict:
    traj = run_spde(cfg.spde_config(seed))
    return {"rows": traj.diagnostics, "trajectory": traj}


def _regularity_path(cfg: RegularityConfig, seed: int) -> dict:
    fld = cfg.source_field(seed)
    coeffs = cfg.coefficients(fld)
    kw = dict(p=cfg.p, drop_coarse=cfg.drop_coarse, drop_fine=cfg.drop_fine, fit_levels=cfg.fit_levels)
    sob = estimate_smoothness(coeffs, mode="sobolev-scale", **kw)
    ada = estimate_smoothness(coeffs, mode="adaptivity-scale", **kw)
    row = {"s_star": sob.s_star, "alpha_star": ada.alpha_star, "tau_star": ada.tau_star,
           "sobolev_residual": sob.residual, "adaptivity_residual": ada.residual}
    return {"rows": [row], "levels": sob.to_csv()}


def _approx_path(cfg: ApproxConfig, seed: int) -> dict:
    fld = cfg.source_field(seed)
    coeffs = cfg.coefficients(fld)
    rep = approximation_study(fld, coeffs, cfg._domain, cfg.norm, cfg.ns, cfg.weighting)
    row = {}
    for scheme, pairs in rep.results.items():
        fit = fit_rate(pairs, tuple(cfg.window), min_points=3)
        row[f"{scheme}_exponent"] = fit.exponent
        row[f"{scheme}_stderr"] = fit.stderr
        row[f"{scheme}_points"] = float(fit.n)
    return {"rows": [row], "errors": rep.to_csv()}


def _noise_path(cfg: NoiseCheckConfig, seed: int) -> dict:
    rows = []
    for a, b in cfg.points:
        model = NoiseModel(a, b, cfg.c, mode="sparse" if b > 0 else "dense")
        rep = h1_summability_check(model, cfg.J)
        rows.append({"a": a, "b": b, "a_plus_b": a + b, "tail_fraction": rep.tail_fraction,
                     "converges": float(rep.converges), "partial_sum": rep.partial_sums[-1]})
    out = {"rows": rows}
    if cfg.isometry is not None:
        iso = cfg.isometry
        model = NoiseModel(iso["a"], iso["b"], iso["c"], mode="sparse" if iso["b"] > 0 else "dense")
        res = isometry_check(model, build_basis("cdf4.8"), iso["J"], iso["dt"], iso["samples"], seed)
        out["isometry"] = [{"level": r.level, "samples": r.samples, "variance": r.variance,
                            "expected": r.expected, "stderr": r.stderr, "z": r.z} for r in res]
    return out


def _norm_equivalence_path(cfg: NormEquivalenceConfig, seed: int) -> dict:
    rows = []
    dom = cfg._domain
    basis = build_basis(cfg.family)
    ext = extension_policy(cfg.extension, dom)
    for name in cfg.functions:
        for J in cfg.levels:
            X, Y = grid_coords(J, dom.origin, dom.side)
            fld = dom.zeros(J).with_values(TEST_FAMILY[name](X, Y)).masked()
            coeffs = dwt2(fld, basis, 0, extension=ext)
            for s, p, q in cfg.params:
                params = BesovParams(s, p, q)
                w = besov_norm_wavelet(coeffs.to_lp(p), params).total
                m = besov_norm_modulus(fld, dom, params, seed=seed)
                rows.append({"function": name, "J": J, "s": s, "p": p, "q": q,
                             "wavelet": w, "modulus": m, "ratio": w / m})
    return {"rows": rows}


WORKERS = {"simulate": _simulate_path, "regularity": _regularity_path, "approx-rates": _approx_path,
           "noise-check": _noise_path, "norm-equivalence": _norm_equivalence_path}


def _work(args):
    kind, payload, seed = args
    cfg = _build(PAYLOADS[kind], payload, "config")
    return WORKERS[kind](cfg, seed)


# --- aggregation --------------------------------------------------------------------------

@dataclass
class AggregateReport:
    keys: tuple
    rows: list  # one dict per key combination: keys, then <name>_mean and <name>_stderr
    overall: dict  # mean and stderr across paths and rows
    paths: int


def _mean_stderr(x: np.ndarray) -> tuple[float, float]:
    if x.size == 1:
        return float(x[0]), 0.0
    return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(x.size))


def aggregate(paths: list[list[dict]], keys: tuple = (), tau: float | None = None) -> AggregateReport:
    """Mean and standard error of each numeric column across paths.

    Every path contributes a list of rows with the same columns and the same
    values in the ``keys`` columns (e.g. snapshot step). With ``tau`` the
    columns are averaged as ``|x|^tau`` and the mean reported as ``mean^(1/tau)``.
    The fold runs in path order, so the result does not depend on scheduling.
    """
    if not paths:
        raise ValueError("need at least one path")
    ref = paths[0]
    cols = list(ref[0]) if ref else []
    for i, rows in enumerate(paths):
        if len(rows) != len(ref):
            raise ValueError(f"path {i} has {len(rows)} rows, path 0 has {len(ref)}")
        for r, (row, row0) in enumerate(zip(rows, ref)):
            if list(row) != cols:
                raise ValueError(f"path {i} row {r}: columns {list(row)} differ from {cols}")
            if any(row[k] != row0[k] for k in keys):
                raise ValueError(f"path {i} row {r}: key columns {keys} differ from path 0")
    values = [c for c in cols if c not in keys and isinstance(ref[0][c], (int, float))
              and not isinstance(ref[0][c], bool)]

    def stat(x):
        x = np.asarray(x, float)
        if tau is None:
            return _mean_stderr(x)
        m, se = _mean_stderr(np.abs(x) ** tau)
        return m ** (1.0 / tau), se

    out = []
    for r, row0 in enumerate(ref):
        agg = {k: row0[k] for k in keys}
        for c in values:
            agg[f"{c}_mean"], agg[f"{c}_stderr"] = stat([p[r][c] for p in paths])
        out.append(agg)
    overall = {}
    for c in values:
        overall[f"{c}_mean"], overall[f"{c}_stderr"] = stat([row[c] for p in paths for row in p])
    return AggregateReport(tuple(keys), out, overall, len(paths))


AGG_KEYS = {"simulate": ("step", "time"), "regularity": (), "approx-rates": (),
            "noise-check": ("a", "b"), "norm-equivalence": ("function", "J", "s", "p", "q")}


# --- orchestration ----------------------------------------------------------------------

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_rows(path: Path, rows: list[dict]):
    write_csv(path, rows)


PLOT_TEMPLATE = '''"""Plot {kind} aggregates; run with matplotlib installed."""
import csv
import matplotlib.pyplot as plt

with open("aggregate.csv") as fh:
    rows = list(csv.DictReader(fh))
cols = [c for c in rows[0] if c.endswith("_mean")]
fig, ax = plt.subplots()
for c in cols:
    ax.plot([float(r[c]) for r in rows], marker="o", label=c[:-5])
ax.set_xlabel("row")
ax.legend()
fig.savefig("aggregate.png", dpi=150)
'''


def run_experiment(exp: Experiment) -> dict:
    """Run every path, write outputs into ``exp.out`` (replaced atomically) and
    return the manifest."""
    cfg = exp.validate()
    payload = _public(cfg)
    seeds = exp.path_seeds()
    tasks = [(exp.kind, payload, s) for s in seeds]
    if exp.threads == 1 or exp.paths == 1:
        results = [_work(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(exp.threads, exp.paths)) as pool:
            results = list(pool.map(_work, tasks))  # map preserves path order

    out = Path(exp.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        for i, res in enumerate(results):
            d = tmp / "paths" / f"path_{i:04d}"
            d.mkdir(parents=True)
            _write_rows(d / "summary.csv", res["rows"])
            if "trajectory" in res:
                res["trajectory"].save(d)
            for extra in ("levels", "errors"):
                if extra in res:
                    (d / f"{extra}.csv").write_text(res[extra])
            if "isometry" in res:
                _write_rows(d / "isometry.csv", res["isometry"])
        agg = aggregate([r["rows"] for r in results], AGG_KEYS[exp.kind])
        _write_rows(tmp / "aggregate.csv", agg.rows)
        (tmp / "overall.json").write_text(json.dumps(agg.overall, indent=2, sort_keys=True) + "\n")
        if exp.plots:
            (tmp / "plot_aggregate.py").write_text(PLOT_TEMPLATE.format(kind=exp.kind))
        files = sorted(p for p in tmp.rglob("*") if p.is_file())
        manifest = {
            "kind": exp.kind, "config": payload, "paths": exp.paths, "base_seed": exp.seed,
            "path_seeds": seeds,
            "versions": {"spdewave": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__},
            "files": {p.relative_to(tmp).as_posix(): _sha256(p) for p in files},
        }
        (tmp / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        if out.exists():
            shutil.rmtree(out)
        os.replace(tmp, out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return manifest


# --- command line ------------------------------------------------------------------------

def _env(name, cast, where):
    raw = os.environ.get(ENV_PREFIX + name)
    if raw is None:
        return None
    try:
        return cast(raw)
    except ValueError:
        raise ConfigError(f"{where}: environment variable {ENV_PREFIX + name}={raw!r} is not valid") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spdewave", description="Wavelet regularity experiments for SPDEs on polygons.")
    ap.add_argument("kind", help=f"one of: {', '.join(KINDS)}")
    ap.add_argument("--config", help="JSON file with the payload for this kind")
    ap.add_argument("--out", help="output directory (replaced on re-run)")
    ap.add_argument("--paths", type=int, help="number of Monte-Carlo paths")
    ap.add_argument("--seed", type=int, help="base seed")
    ap.add_argument("--threads", type=int, help="worker processes")
    ap.add_argument("--plots", action="store_true", help="also emit a matplotlib script")
    return ap


def experiment_from_args(argv=None) -> Experiment:
    args = build_parser().parse_args(argv)
    payload = {}
    if args.config:
        try:
            payload = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--config: invalid JSON ({exc})") from None
        except OSError as exc:
            raise ConfigError(f"--config: {exc}") from None

    def pick(flag, env_name, cast, default):
        if flag is not None:
            return flag
        env = _env(env_name, cast, env_name.lower())
        return default if env is None else env

    return Experiment(
        kind=args.kind, config=payload,
        out=Path(pick(args.out, "OUT", str, f"runs/{args.kind}")),
        paths=pick(args.paths, "PATHS", int, 1), seed=pick(args.seed, "SEED", int, 0),
        threads=pick(args.threads, "THREADS", int, 1),
        plots=args.plots or os.environ.get(ENV_PREFIX + "PLOTS", "") not in ("", "0"),
    )


def main(argv=None) -> int:
    try:
        exp = experiment_from_args(argv)
        manifest = run_experiment(exp)
    except ConfigError as exc:
        print(f"spdewave: invalid configuration: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {len(manifest['files'])} files to {exp.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
