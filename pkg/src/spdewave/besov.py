"""Besov (quasi-)norms from the modulus of smoothness and from wavelet coefficients,
plus decay-rate estimates of the smoothness exponent."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field as dc_field
from typing import NamedTuple

import numpy as np
from scipy.special import comb

from .domain import PolygonDomain
from .grid import Field
from .rng import stream
from .wavelet import CoefficientTable, NormalizationError

D = 2


@dataclass(frozen=True)
class BesovParams:
    s: float
    p: float
    q: float
    n: int | None = None
    d: int = D

    def __post_init__(self):
        if self.s <= 0 or self.p <= 0 or self.q <= 0:
            raise ValueError("s, p and q must be positive")
        if self.n is None:
            object.__setattr__(self, "n", int(math.floor(self.s)) + 1)
        if self.n <= self.s:
            raise ValueError(f"difference order n={self.n} must exceed s={self.s}")


def tau_for(alpha: float, p: float, d: int = D) -> float:
    """Integrability of the adaptivity scale: ``1/tau = alpha/d + 1/p``."""
    inv = alpha / d + 1.0 / p
    if inv <= 0:
        raise ValueError("alpha/d + 1/p must be positive")
    return 1.0 / inv


# --- modulus of smoothness -------------------------------------------------------

COMPASS = np.array([[1, 0], [1, 1], [0, 1], [-1, 1], [-1, 0], [-1, -1], [0, -1], [1, -1]], float)
COMPASS /= np.linalg.norm(COMPASS, axis=1)[:, None]


def directions(n_random: int = 8, seed: int = 0) -> np.ndarray:
    ang = stream(seed, "direction").uniform(0.0, 2 * np.pi, n_random)
    return np.vstack([COMPASS, np.column_stack([np.cos(ang), np.sin(ang)])])


def _offsets(t: float, h: float, dirs: np.ndarray) -> list[tuple[int, int]]:
    """Distinct nonzero grid offsets of length at most ``t`` along ``dirs``."""
    out = set()
    for u in dirs:
        v = np.rint(u * t / h)
        if np.hypot(*v) * h > t * (1 + 1e-12):
            v = np.trunc(u * t / h)
        if v[0] or v[1]:
            out.add((int(v[0]), int(v[1])))
    return sorted(out)


def _difference_norm(values: np.ndarray, inside: np.ndarray, off, n: int, p: float, h: float) -> float:
    """``||Delta_v^n f||_{L_p}`` with the stencil restricted to nodes inside the domain."""
    a, b = off
    m = values.shape[0]
    lo_x, hi_x = max(0, -n * a), m - max(0, n * a)
    lo_y, hi_y = max(0, -n * b), m - max(0, n * b)
    if lo_x >= hi_x or lo_y >= hi_y:
        return 0.0
    acc = np.zeros((hi_x - lo_x, hi_y - lo_y))
    ok = np.ones_like(acc, dtype=bool)
    for i in range(n + 1):
        sx, sy = slice(lo_x + i * a, hi_x + i * a), slice(lo_y + i * b, hi_y + i * b)
        acc += (-1) ** (n - i) * comb(n, i, exact=True) * values[sx, sy]
        ok &= inside[sx, sy]
    return float((np.sum(np.abs(acc[ok]) ** p) * h * h) ** (1.0 / p))


def _raw_moduli(fld: Field, domain: PolygonDomain | None, n: int, ts, p: float, seed: int) -> np.ndarray:
    """Largest difference norm over offsets of length about ``t`` (not yet cumulative)."""
    inside = domain.mask(fld.level) if domain is not None else fld.inside()
    dirs = directions(seed=seed)
    out = []
    for t in ts:
        offs = _offsets(t, fld.h, dirs)
        out.append(max((_difference_norm(fld.values, inside, o, n, p, fld.h) for o in offs), default=0.0))
    return np.array(out)


def modulus_of_smoothness(fld: Field, domain: PolygonDomain | None, n: int, t: float, p: float,
                          seed: int = 0) -> float:
    """Lower estimate of ``sup_{|h|<t} ||Delta_h^n f||_{L_p(O)}``.

    The sup runs over 16 directions (8 compass, 8 seeded random) and dyadic
    magnitudes ``t, t/2, ...`` down to the grid spacing.
    """
    if n < 1:
        raise ValueError("difference order must be at least 1")
    if t < fld.h * (1 - 1e-12):
        raise ValueError(f"t={t} is below the grid spacing {fld.h}")
    k = int(math.floor(math.log2(t / fld.h) + 1e-12))
    ts = t * 2.0 ** -np.arange(k + 1)
    return float(_raw_moduli(fld, domain, n, ts, p, seed).max())


def _lp_norm(fld: Field, domain: PolygonDomain | None, p: float) -> float:
    inside = domain.mask(fld.level) if domain is not None else fld.inside()
    return float((np.sum(np.abs(fld.values[inside]) ** p) * fld.h**2) ** (1.0 / p))


def modulus_profile(fld: Field, domain: PolygonDomain, n: int, p: float, levels: int | None = None,
                    seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Dyadic ``t_l = diam * 2^-l`` (l = 0..L, L = J - 2 by default) and ``omega^n(t_l)``."""
    L = fld.level - 2 if levels is None else levels
    ts = domain.diameter * 2.0 ** -np.arange(L + 1)
    if ts[-1] < fld.h:
        raise ValueError("finest t is below the grid spacing; lower the number of levels")
    raw = _raw_moduli(fld, domain, n, ts, p, seed)
    # omega is nondecreasing in t: cumulative max from the finest scale up
    return ts, np.maximum.accumulate(raw[::-1])[::-1]


def seminorm_terms(ts: np.ndarray, omega: np.ndarray, s: float, q: float) -> np.ndarray:
    """Lower Riemann sum pieces of ``int (t^-s omega(t))^q dt/t``.

    Entry 0 is the closed-form tail above ``ts[0]``; entry l covers
    ``[ts[l], ts[l-1]]`` with ``omega(ts[l])``.
    """
    sq = s * q
    terms = [omega[0] ** q * ts[0] ** (-sq) / sq]
    for l in range(1, len(ts)):
        terms.append(omega[l] ** q * (ts[l] ** (-sq) - ts[l - 1] ** (-sq)) / sq)
    return np.array(terms)


def besov_seminorm_modulus(fld: Field, domain: PolygonDomain, params: BesovParams,
                           levels: int | None = None, seed: int = 0) -> float:
    ts, om = modulus_profile(fld, domain, params.n, params.p, levels, seed)
    return float(np.sum(seminorm_terms(ts, om, params.s, params.q)) ** (1.0 / params.q))


def besov_norm_modulus(fld: Field, domain: PolygonDomain, params: BesovParams,
                       levels: int | None = None, seed: int = 0) -> float:
    """``||f||_{L_p(O)} + |f|_{B^s_{p,q}(O)}`` with a dyadic lower Riemann sum in t."""
    return _lp_norm(fld, domain, params.p) + besov_seminorm_modulus(fld, domain, params, levels, seed)


@dataclass
class DivergenceCheck:
    diverging: bool
    growth_exponent: float
    terms: list


def divergence_check(fld: Field, domain: PolygonDomain, params: BesovParams, levels: int | None = None,
                     seed: int = 0, tail: int = 4) -> DivergenceCheck:
    """Flag a seminorm whose dyadic pieces stop decaying at the fine end.

    The pieces ``(2^l)^{sq} omega(2^-l)^q`` behave like ``2^{l(s - s_f) q}`` for a
    function of smoothness ``s_f``; a nonnegative fitted exponent over the ``tail``
    finest pieces means the sum grows without bound under refinement.
    """
    ts, om = modulus_profile(fld, domain, params.n, params.p, levels, seed)
    terms = seminorm_terms(ts, om, params.s, params.q)
    tt = terms[-tail:]
    ll = np.arange(len(terms))[-tail:]
    if np.any(tt <= 0):
        return DivergenceCheck(False, -np.inf, terms.tolist())
    slope = float(np.polyfit(ll, np.log2(tt), 1)[0])
    return DivergenceCheck(slope >= 0.0, slope, terms.tolist())


# --- wavelet route ----------------------------------------------------------------

class WaveletNorm(NamedTuple):
    scaling: float
    wavelet: float
    total: float


def _require_lp(coeffs: CoefficientTable, p: float):
    if coeffs.normalization != "Lp" or not math.isclose(coeffs.p, p):
        raise NormalizationError(f"coefficients must be L_p-normalised with p={p} "
                                 f"(got {coeffs.normalization}, p={coeffs.p})")


def besov_norm_wavelet(coeffs: CoefficientTable, params: BesovParams) -> WaveletNorm:
    """Sequence-space Besov norm of a table truncated at its finest level."""
    s, p, q, d = params.s, params.p, params.q, params.d
    if s <= max(0.0, d * (1.0 / p - 1.0)):
        raise ValueError("s must exceed max(0, d(1/p - 1))")
    if coeffs.basis.r <= s:
        raise ValueError(f"basis has r={coeffs.basis.r} vanishing moments, need r > s={s}")
    _require_lp(coeffs, p)
    sc = float(np.sum(np.abs(coeffs.scaling) ** p) ** (1.0 / p))
    acc = 0.0
    for j, lv in zip(range(coeffs.j0, coeffs.J), coeffs.details):
        for arr in lv:
            acc += 2.0 ** (j * s * q) * np.sum(np.abs(arr) ** p) ** (q / p)
    wv = float(acc ** (1.0 / q))
    return WaveletNorm(sc, wv, sc + wv)


def besov_norm_adaptivity_scale(coeffs: CoefficientTable, alpha: float, p: float, d: int = D) -> WaveletNorm:
    """ell_tau quasi-norm of all L_p-normalised coefficients, ``1/tau = alpha/d + 1/p``."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    tau = tau_for(alpha, p, d)
    _require_lp(coeffs, p)
    return lp_tau_norm(coeffs, tau)


def lp_tau_norm(coeffs: CoefficientTable, tau: float) -> WaveletNorm:
    sc = float(np.sum(np.abs(coeffs.scaling) ** tau) ** (1.0 / tau))
    vec = coeffs.to_vector()[coeffs.scaling.size:]
    wv = float(np.sum(np.abs(vec) ** tau) ** (1.0 / tau))
    return WaveletNorm(sc, wv, sc + wv)


# --- smoothness estimation ---------------------------------------------------------

@dataclass
class SmoothnessReport:
    mode: str
    p: float
    level_norms: dict = dc_field(default_factory=dict)
    levels_used: list = dc_field(default_factory=list)
    s_star: float | None = None
    alpha_star: float | None = None
    tau_star: float | None = None
    decay: float | None = None
    window: tuple | None = None
    residual: float = 0.0

    def to_json(self) -> str:
        doc = asdict(self)
        doc["level_norms"] = {str(k): v for k, v in self.level_norms.items()}
        return json.dumps(doc, indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "lp_norm", "used"])
        for j, v in sorted(self.level_norms.items()):
            w.writerow([j, f"{v:.17g}", int(j in self.levels_used)])
        return buf.getvalue()


def level_norms(coeffs: CoefficientTable, p: float) -> dict[int, float]:
    """ell_p norm of all L_p-normalised wavelet coefficients per level."""
    t = coeffs if coeffs.normalization == "Lp" else coeffs.to_lp(p)
    _require_lp(t, p)
    return {j: float(sum(np.sum(np.abs(a) ** p) for a in lv) ** (1.0 / p))
            for j, lv in zip(range(t.j0, t.J), t.details)}


def _usable_levels(coeffs: CoefficientTable, drop_coarse: int, drop_fine: int,
                   fit_levels: int | None) -> list[int]:
    lv = list(range(coeffs.j0 + drop_coarse, coeffs.J - drop_fine))
    if len(lv) < 4:
        raise ValueError(f"only {len(lv)} usable levels after discarding; need at least 4")
    if fit_levels is not None:
        lv = lv[-max(fit_levels, 4):]
    return lv


def estimate_smoothness(coeffs: CoefficientTable, p: float = 2.0, mode: str = "sobolev-scale",
                        drop_coarse: int = 1, drop_fine: int = 2, fit_levels: int | None = 4,
                        window: tuple | None = None, d: int = D) -> SmoothnessReport:
    """Fit the decay of coefficients to a smoothness exponent.

    ``sobolev-scale``: level norms ~ 2^{-j s*}. ``adaptivity-scale``: the n-th
    largest coefficient ~ n^{-1/tau*}, reported as ``alpha* = d (1/tau* - 1/p)``.

    The coarsest ``drop_coarse`` and finest ``drop_fine`` levels are discarded;
    of the rest only the ``fit_levels`` finest enter the fit (None keeps all),
    since coarse levels are pre-asymptotic when supports are wide.
    """
    if mode not in ("sobolev-scale", "adaptivity-scale"):
        raise ValueError(f"unknown mode {mode!r}")
    used = _usable_levels(coeffs, drop_coarse, drop_fine, fit_levels)
    norms = level_norms(coeffs, p)
    if not any(norms[j] > 0 for j in used):
        raise ValueError("all coefficients in the usable levels vanish")
    rep = SmoothnessReport(mode=mode, p=p, level_norms=norms, levels_used=used)

    if mode == "sobolev-scale":
        x = np.array(used, float)
        y = np.log2(np.maximum([norms[j] for j in used], np.finfo(float).tiny))
        coef, res, *_ = np.polyfit(x, y, 1, full=True)
        rep.s_star = float(-coef[0])
        rep.residual = float(np.sqrt(res[0] / len(x))) if len(res) else 0.0
        return rep

    t = coeffs if coeffs.normalization == "Lp" else coeffs.to_lp(p)
    lev = t.index_arrays()["level"]
    vec = np.abs(t.to_vector())
    keep = (lev >= used[0]) & (lev <= used[-1])
    c = np.sort(vec[keep])[::-1]
    c = c[c > 1e-12 * c[0]]
    if window is None:
        window = (min(16, max(1, len(c) // 64)), max(len(c) // 4, 8))
    lo, hi = window
    hi = min(hi, len(c))
    if hi - lo < 4:
        raise ValueError("rearrangement too short for a decay fit")
    n = np.arange(lo, hi + 1)
    y = np.log(c[lo - 1:hi])
    coef, res, *_ = np.polyfit(np.log(n), y, 1, full=True)
    beta = -float(coef[0])
    rep.decay = beta
    rep.tau_star = 1.0 / beta if beta > 0 else math.inf
    rep.alpha_star = d * (beta - 1.0 / p)
    rep.window = (int(lo), int(hi))
    rep.residual = float(np.sqrt(res[0] / len(n))) if len(res) else 0.0
    return rep
