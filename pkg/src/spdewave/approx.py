"""Uniform (linear) and best-N-term (nonlinear) wavelet approximation, their errors
in L_p and in the W^1_2 energy norm, and power-law rate fits."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from .domain import PolygonDomain, cube_geometry
from .grid import Field
from .wavelet import CoefficientTable, _level_ops, _prefilter, idwt2, support_cubes
from .wsobolev import w12_norm

NORMS = ("L2", "Lp", "W12")


def _norm_tag(norm) -> tuple[str, float]:
    """Accepts "L2", "W12", ("Lp", p) or "Lp:3"."""
    if isinstance(norm, tuple):
        tag, p = norm
    elif isinstance(norm, str) and norm.startswith("Lp"):
        tag, p = "Lp", float(norm.split(":")[1]) if ":" in norm else 2.0
    else:
        tag, p = norm, 2.0
    if tag not in NORMS:
        raise ValueError(f"unknown norm tag {norm!r}; expected one of {NORMS}")
    return tag, float(p)


# --- primal function norms -----------------------------------------------------------

@lru_cache(maxsize=64)
def _norms_1d(key, j: int, high: bool, p: float, J: int) -> np.ndarray:
    """Discrete L_p norms on the level-J unit grid (node sum times h, as the error
    functional measures them) of the level-j primal scaling or wavelet functions."""
    n = 2**j + (0 if high else 1)
    X = np.eye(n)
    if j < J:
        X = (_level_ops(key, 2 ** (j + 1) + 1).s_hi if high else _level_ops(key, 2 ** (j + 1) + 1).s_lo) @ X
        for l in range(j + 1, J):
            X = _level_ops(key, 2 ** (l + 1) + 1).s_lo @ X
    P, _ = _prefilter(key, X.shape[0])
    if P is not None:
        X = P @ X
    X = np.abs(X) * np.sqrt(2.0**J)
    return (np.sum(X**p, axis=0) / 2**J) ** (1.0 / p)


def basis_norms(coeffs: CoefficientTable, p: float = 2.0) -> np.ndarray:
    """Grid ``L_p`` norm of every synthesised primal function, in table vector order.

    Tensor products factor, so 2-D norms are outer products of 1-D norms.
    """
    key, J = coeffs.basis.key, coeffs.J
    sc = _norms_1d(key, coeffs.j0, False, p, J)
    parts = [np.outer(sc, sc).ravel()]
    for j in range(coeffs.j0, coeffs.J):
        phi, psi = _norms_1d(key, j, False, p, J), _norms_1d(key, j, True, p, J)
        parts += [np.outer(psi, phi).ravel(), np.outer(phi, psi).ravel(), np.outer(psi, psi).ravel()]
    return np.concatenate(parts) * coeffs.side ** (2.0 / p - 1.0)


# --- selection -------------------------------------------------------------------

def relevant_indices(coeffs: CoefficientTable, domain: PolygonDomain | None) -> np.ndarray:
    """Mask of indices whose support cube meets the open domain (all if no domain)."""
    if domain is None:
        return np.ones(len(coeffs), bool)
    boxes = support_cubes(coeffs.j0, coeffs.J, coeffs.basis.support_radius, coeffs.origin, coeffs.side)
    return _meets(domain, boxes)


def _meets(domain, boxes):
    return cube_geometry(domain, boxes)[0]


def scores(coeffs: CoefficientTable, norm="L2", weighting: str = "unit") -> np.ndarray:
    """Selection score of each index.

    ``weighting="unit"`` ranks the contribution ``|c_lambda| ||psi_lambda||`` in
    the target norm (W12: ``2^j |c| ||psi||_2``); ``"plain"`` ranks the raw L2
    coefficients (W12: ``2^j |c|``, L_p: the L_p-renormalised coefficient).
    """
    tag, p = _norm_tag(norm)
    t = coeffs if coeffs.normalization == "L2" else coeffs.to_l2()
    c = np.abs(t.to_vector())
    ia = t.index_arrays()
    spatial = np.where(ia["type"] == 0, t.j0, ia["level"]).astype(float)
    if weighting == "plain":
        if tag == "L2":
            return c
        if tag == "Lp":
            return c * t.level_factors(p)
        return c * 2.0**spatial
    if weighting != "unit":
        raise ValueError(f"unknown weighting {weighting!r}")
    if tag == "Lp":
        return c * basis_norms(t, p)
    w = basis_norms(t, 2.0)
    return c * w * (2.0**spatial if tag == "W12" else 1.0)


def selection_order(coeffs: CoefficientTable, norm="L2", domain: PolygonDomain | None = None,
                    weighting: str = "unit") -> np.ndarray:
    """Vector positions by decreasing score, ties broken by (level, type, k1, k2);
    indices whose support misses the domain are left out."""
    sc = scores(coeffs, norm, weighting)
    ia = coeffs.index_arrays()
    keep = relevant_indices(coeffs, domain) & (sc > 0)
    pos = np.flatnonzero(keep)
    order = np.lexsort((ia["k2"][pos], ia["k1"][pos], ia["type"][pos], ia["level"][pos], -sc[pos]))
    return pos[order]


def best_n_term(coeffs: CoefficientTable, N: int, norm="L2", domain: PolygonDomain | None = None,
                weighting: str = "unit", order: np.ndarray | None = None) -> CoefficientTable:
    """Keep the N highest-scoring coefficients, zero the rest."""
    if N < 0:
        raise ValueError("N must be nonnegative")
    if order is None:
        order = selection_order(coeffs, norm, domain, weighting)
    vec = coeffs.to_vector()
    out = np.zeros_like(vec)
    sel = order[:N]
    out[sel] = vec[sel]
    return coeffs.with_vector(out)


def uniform_approx(coeffs: CoefficientTable, n: int, domain: PolygonDomain | None = None
                   ) -> tuple[CoefficientTable, int]:
    """Keep every coefficient at levels ``<= j0 - 1 + n``; returns the table and N(n),
    the number of retained indices whose support meets the domain."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    top = coeffs.j0 - 1 + n
    if top > coeffs.J - 1:
        raise ValueError(f"n={n} exceeds the table (finest level {coeffs.J - 1})")
    lev = coeffs.index_arrays()["level"]
    keep = lev <= top
    vec = np.where(keep, coeffs.to_vector(), 0.0)
    count = int(np.sum(keep & relevant_indices(coeffs, domain)))
    return coeffs.with_vector(vec), count


# --- errors -----------------------------------------------------------------------

def field_norm(fld: Field, norm="L2", domain: PolygonDomain | None = None) -> float:
    tag, p = _norm_tag(norm)
    if tag == "W12":
        if domain is None:
            raise ValueError("the W12 norm needs a domain")
        return w12_norm(fld, domain)
    inside = domain.mask(fld.level) if domain is not None else np.ones(fld.values.shape, bool)
    return float((np.sum(np.abs(fld.values[inside]) ** p) * fld.h**2) ** (1.0 / p))


def error(f: Field, approx: CoefficientTable, norm="L2", domain: PolygonDomain | None = None) -> float:
    """Norm over the domain of ``f`` minus the synthesised approximant."""
    g = idwt2(approx if approx.normalization == "L2" else approx.to_l2())
    if g.values.shape != f.values.shape:
        raise ValueError("approximation and field live on different grids")
    return field_norm(f.with_values(f.values - g.values), norm, domain)


# --- rates ------------------------------------------------------------------------

@dataclass
class RateFit:
    exponent: float
    intercept: float
    residual: float
    stderr: float
    n: int
    window: tuple

    def band(self, z: float = 1.96) -> tuple[float, float]:
        return self.exponent - z * self.stderr, self.exponent + z * self.stderr


def fit_rate(pairs, window: tuple | None = None, min_points: int = 5) -> RateFit:
    """Least-squares fit ``error ~ C N^{-exponent}`` over ``window = (N_lo, N_hi)``.

    Level cuts give only one point per octave pair, so uniform schemes usually
    need ``min_points=3``.
    """
    pairs = sorted((float(n), float(e)) for n, e in pairs)
    if window is not None:
        pairs = [(n, e) for n, e in pairs if window[0] <= n <= window[1]]
    if len(pairs) < max(min_points, 3):
        raise ValueError(f"need at least {max(min_points, 3)} (N, error) pairs in the window, got {len(pairs)}")
    N, E = np.array(pairs).T
    if np.any(E <= 0):
        raise ValueError("errors in the fit window must be positive")
    x, y = np.log(N), np.log(E)
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    r = y - A @ coef
    dof = max(len(x) - 2, 1)
    s2 = float(r @ r) / dof
    se = float(np.sqrt(s2 / np.sum((x - x.mean()) ** 2)))
    return RateFit(float(-coef[0]), float(np.exp(coef[1])), float(np.sqrt(np.mean(r**2))), se,
                   len(x), (float(N[0]), float(N[-1])))


@dataclass
class ApproxReport:
    norm: str
    results: dict = field(default_factory=dict)  # scheme -> list of (N, error)
    fits: dict = field(default_factory=dict)  # scheme -> RateFit
    meta: dict = field(default_factory=dict)

    def fit(self, window: tuple | None = None, min_points: int = 3) -> "ApproxReport":
        for scheme, pairs in self.results.items():
            self.fits[scheme] = fit_rate(pairs, window, min_points)
        return self

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scheme", "N", "error"])
        for scheme, pairs in self.results.items():
            for n, e in pairs:
                w.writerow([scheme, int(n), f"{e:.17g}"])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {"norm": self.norm, "meta": self.meta,
               "fits": {k: asdict(v) for k, v in self.fits.items()},
               "results": {k: [[int(n), e] for n, e in v] for k, v in self.results.items()}}
        return json.dumps(doc, indent=2, sort_keys=True)


def default_ns(n_min: int = 16, n_max: int = 4096, per_octave: int = 2) -> list[int]:
    k = int(round(np.log2(n_max / n_min) * per_octave))
    return sorted({int(round(n_min * 2 ** (i / per_octave))) for i in range(k + 1)})


def approximation_study(f: Field, coeffs: CoefficientTable, domain: PolygonDomain, norm="W12",
                        ns=None, weighting: str = "unit") -> ApproxReport:
    """Errors of best-N-term approximation at ``ns`` and of uniform approximation at
    every level cut, in the given norm on the domain."""
    ns = default_ns() if ns is None else list(ns)
    order = selection_order(coeffs, norm, domain, weighting)
    best = [(n, error(f, best_n_term(coeffs, n, order=order), norm, domain)) for n in ns]
    uni = []
    for n in range(0, coeffs.J - coeffs.j0 + 1):
        t, count = uniform_approx(coeffs, n, domain)
        uni.append((count, error(f, t, norm, domain)))
    return ApproxReport(_norm_tag(norm)[0], {"best": best, "uniform": uni},
                        meta={"weighting": weighting, "J": coeffs.J, "j0": coeffs.j0,
                              "basis": coeffs.basis.family})


# --- exhaustive oracle --------------------------------------------------------------

def gram_matrix(coeffs: CoefficientTable, positions, domain: PolygonDomain | None = None) -> np.ndarray:
    """Grid L2 inner products over the domain of the primal functions at ``positions``."""
    template = coeffs.zeros_like() if coeffs.normalization == "L2" else coeffs.to_l2().zeros_like()
    inside = None
    rows = []
    for pos in positions:
        e = np.zeros(len(template))
        e[pos] = 1.0
        fld = idwt2(template.with_vector(e))
        if inside is None:
            inside = domain.mask(fld.level) if domain is not None else np.ones(fld.values.shape, bool)
            h2 = fld.h**2
        rows.append(fld.values[inside])
    Phi = np.array(rows)
    return Phi @ Phi.T * h2


def exhaustive_errors(values, gram: np.ndarray) -> np.ndarray:
    """Smallest L2 error ``min_{|S| = N} ||sum_{i not in S} c_i psi_i||`` for N = 0..k,
    by enumerating all 2^k subsets (k <= 16)."""
    c = np.asarray(values, float)
    k = c.size
    if k > 16:
        raise ValueError("exhaustive search is limited to 16 coefficients")
    keep = ((np.arange(2**k)[:, None] >> np.arange(k)) & 1).astype(bool)
    R = np.where(keep, 0.0, c)
    err = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", R, gram, R), 0.0))
    sizes = keep.sum(axis=1)
    return np.array([err[sizes == n].min() for n in range(k + 1)])


def greedy_errors(coeffs: CoefficientTable, positions, gram: np.ndarray, weighting: str = "unit") -> np.ndarray:
    """Errors of the greedy selection restricted to ``positions``, for N = 0..k."""
    positions = np.asarray(positions)
    c = coeffs.to_vector()[positions] if coeffs.normalization == "L2" else coeffs.to_l2().to_vector()[positions]
    order = selection_order(coeffs, "L2", None, weighting)
    order = order[np.isin(order, positions)]
    out = []
    for n in range(positions.size + 1):
        r = np.where(np.isin(positions, order[:n]), 0.0, c)
        out.append(np.sqrt(max(r @ gram @ r, 0.0)))
    return np.array(out)
