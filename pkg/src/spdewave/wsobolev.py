"""Integer-order weighted Sobolev norms with boundary-distance weights, computed
by finite differences and midpoint quadrature on grid cells inside the domain."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import PolygonDomain
from .grid import Field

D = 2
MULTI_INDICES = {0: [(0, 0)], 1: [(1, 0), (0, 1)], 2: [(2, 0), (1, 1), (0, 2)]}


@dataclass(frozen=True)
class WeightedParams:
    """Order ``m``, integrability ``p`` and weight exponent ``theta``; ``delta = 1 + (d - theta)/p``."""

    m: int
    p: float
    theta: float
    d: int = D
    delta: float = field(init=False)

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("order must be nonnegative")
        if not self.p > 1:
            raise ValueError("p must exceed 1")
        object.__setattr__(self, "delta", 1.0 + (self.d - self.theta) / self.p)

    @property
    def theta_status(self) -> str:
        """'unconditional' if theta is admissible for every kappa0 in (0,1),
        'conditional' if only for kappa0 close to 1, else 'outside'."""
        lo, hi = self.d, self.d - 2 + self.p
        if lo <= self.theta <= hi:
            return "unconditional"
        if self.d - 1 < self.theta < self.d - 1 + self.p:
            return "conditional"
        return "outside"


@dataclass
class CellData:
    """Quantities at midpoints of the grid cells whose four corners lie in the mask."""

    h: float
    rho: np.ndarray
    derivs: dict  # multi-index -> values


def _nodal_second(u: np.ndarray, inside: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Second difference along ``axis``: central where both neighbours are inside,
    one-sided (first order) otherwise, NaN if no stencil fits."""
    v = np.moveaxis(u, axis, 0)
    m = np.moveaxis(inside, axis, 0)
    out = np.full(v.shape, np.nan)
    c = m[1:-1] & m[:-2] & m[2:]
    out[1:-1] = np.where(c, v[:-2] - 2 * v[1:-1] + v[2:], np.nan)
    fwd = m[:-2] & m[1:-1] & m[2:]  # stencil i, i+1, i+2
    val = v[:-2] - 2 * v[1:-1] + v[2:]
    tgt = out[:-2]
    out[:-2] = np.where(np.isnan(tgt) & fwd, val, tgt)
    tgt = out[2:]
    out[2:] = np.where(np.isnan(tgt) & fwd, val, tgt)
    return np.moveaxis(out / h**2, 0, axis)


def cell_data(fld: Field, domain: PolygonDomain, m: int) -> CellData:
    """Derivatives of order <= m (m <= 2) at midpoints of fully interior cells."""
    if m > 2:
        raise ValueError("orders above 2 are not supported")
    inside = domain.mask(fld.level)
    cells = inside[:-1, :-1] & inside[1:, :-1] & inside[:-1, 1:] & inside[1:, 1:]
    if not cells.any():
        raise ValueError("no grid cell lies inside the domain at this level")
    u, h = fld.values, fld.h
    u00, u10, u01, u11 = u[:-1, :-1], u[1:, :-1], u[:-1, 1:], u[1:, 1:]
    d = {(0, 0): 0.25 * (u00 + u10 + u01 + u11)}
    if m >= 1:
        d[(1, 0)] = (u10 + u11 - u00 - u01) / (2 * h)
        d[(0, 1)] = (u01 + u11 - u00 - u10) / (2 * h)
    if m >= 2:
        d[(1, 1)] = (u11 - u10 - u01 + u00) / h**2
        for ax, key in ((0, (2, 0)), (1, (0, 2))):
            s = _nodal_second(u, inside, ax, h)
            d[key] = 0.25 * (s[:-1, :-1] + s[1:, :-1] + s[:-1, 1:] + s[1:, 1:])
    ok = cells.copy()
    for v in d.values():
        ok &= np.isfinite(v)
    X, Y = fld.coords()
    xm, ym = X[:-1, :-1] + h / 2, Y[:-1, :-1] + h / 2
    rho = domain.rho(xm[ok], ym[ok])
    return CellData(h, rho, {k: v[ok] for k, v in d.items()})


def weighted_terms(fld: Field, domain: PolygonDomain, params: WeightedParams) -> dict[int, float]:
    """``int |rho^{|a|} D^a u|^p rho^{theta-d} dx`` summed over |a| = k, for k = 0..m."""
    cd = cell_data(fld, domain, params.m)
    w = cd.rho ** (params.theta - params.d)
    out = {}
    for k in range(params.m + 1):
        acc = sum(np.sum(np.abs(cd.rho**k * cd.derivs[a]) ** params.p * w) for a in MULTI_INDICES[k])
        out[k] = float(acc * cd.h**2)
    return out


def weighted_sobolev_norm(fld: Field, domain: PolygonDomain, params: WeightedParams) -> float:
    return float(sum(weighted_terms(fld, domain, params).values()) ** (1.0 / params.p))


def derivative_lp(derivs: dict, m: int, p: float) -> np.ndarray:
    """Pointwise ``|D^m u|_{l_p}``: the l_p norm over multi-indices of order m."""
    return sum(np.abs(derivs[a]) ** p for a in MULTI_INDICES[m]) ** (1.0 / p)


def weighted_hessian_diagnostic(fld: Field, domain: PolygonDomain, m: int, p: float, theta: float) -> float:
    """``|| rho^{m - delta} |D^m u|_{l_p} ||_{L_p(O)}`` with ``delta = 1 + (d - theta)/p``."""
    if m not in (1, 2):
        raise ValueError("diagnostic defined for m in {1, 2}")
    params = WeightedParams(m, p, theta)
    cd = cell_data(fld, domain, m)
    g = cd.rho ** (m - params.delta) * derivative_lp(cd.derivs, m, p)
    return float((np.sum(g**p) * cd.h**2) ** (1.0 / p))


def w12_norm(fld: Field, domain: PolygonDomain) -> float:
    """Plain ``(||u||_2^2 + ||grad u||_2^2)^{1/2}`` over interior cells."""
    cd = cell_data(fld, domain, 1)
    tot = sum(np.sum(cd.derivs[a] ** 2) for a in MULTI_INDICES[0] + MULTI_INDICES[1])
    return float(np.sqrt(tot * cd.h**2))
