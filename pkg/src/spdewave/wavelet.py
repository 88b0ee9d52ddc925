"""Biorthogonal spline wavelets and the 2-D tensor-product transform.

The primal scaling function is the centred cardinal B-spline of order
``primal_order``; the dual lowpass filters are the Cohen-Daubechies-Feauveau
partners with ``dual_order`` zeros at pi.  The dual (analysis) wavelet
therefore has ``r = primal_order`` vanishing moments, which is the ``r`` the
Besov characterisations need.

Transforms act on the ``(2**J + 1)**2`` node grid of a bounding square with
whole-sample symmetric extension at the square edges.  Coefficients are
L2-normalised in physical coordinates: a unit coefficient at level ``j``
synthesises ``2**j * psi(2**j x - k) / side``-type atoms (reference
coordinates rescaled to the square).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .grid import Field

FORMAT_VERSION = 1
_SQRT2 = math.sqrt(2.0)

# Centre-outward halves of the dual lowpass filters, normalised to sum 2.
_DUAL_HALVES: dict[tuple[int, int], tuple[str, ...]] = {
    (2, 2): ("3/2", "1/2", "-1/4"),
    (2, 4): ("45/32", "19/32", "-1/4", "-3/32", "3/64"),
    (4, 8): (
        "8085/4096", "11319/16384", "-1403/2048", "-1807/8192", "523/2048",
        "205/8192", "-133/2048", "217/32768", "63/8192", "-63/32768",
    ),
}
# Default dual order per r: the shortest dual whose scaling function is continuous.
_DEFAULT_DUAL = {2: 4, 4: 8}
FAMILIES = tuple(f"cdf{p}.{q}" for p, q in _DUAL_HALVES)
_ALIASES = {"spline-biorthogonal", "cdf", "bspline-biorthogonal"}


class UnsupportedFamily(ValueError):
    pass


class NormalizationError(ValueError):
    pass


def _bspline_filter(order: int) -> tuple[Fraction, ...]:
    return tuple(Fraction(math.comb(order, k), 2 ** (order - 1)) for k in range(order + 1))


def _symmetric(half) -> tuple[Fraction, ...]:
    half = [Fraction(v) for v in half]
    return tuple(half[:0:-1] + half)


@dataclass(frozen=True)
class WaveletBasis:
    """A biorthogonal spline filter bank.

    ``lowpass`` synthesises (primal), ``dual_lowpass`` analyses.  Both are odd
    length, symmetric about their middle tap and sum to sqrt(2).
    """

    family: str
    primal_order: int
    dual_order: int
    exact_lowpass: tuple[Fraction, ...] = field(repr=False)
    exact_dual_lowpass: tuple[Fraction, ...] = field(repr=False)

    @property
    def r(self) -> int:
        return self.primal_order

    @property
    def smoothness(self) -> int:
        # B-spline of order m is C^{m-2}; documentation only
        return self.primal_order - 2

    @property
    def lowpass(self) -> np.ndarray:
        return np.array([float(v) for v in self.exact_lowpass]) / _SQRT2

    @property
    def dual_lowpass(self) -> np.ndarray:
        return np.array([float(v) for v in self.exact_dual_lowpass]) / _SQRT2

    @property
    def highpass(self) -> np.ndarray:
        """Synthesis highpass, taps at offsets -L..L around the odd sample."""
        lo = self.dual_lowpass
        half = len(lo) // 2
        return lo * (-1.0) ** np.arange(-half, half + 1)

    @property
    def dual_highpass(self) -> np.ndarray:
        lo = self.lowpass
        half = len(lo) // 2
        return lo * (-1.0) ** np.arange(-half, half + 1)

    @property
    def primal_support(self) -> tuple[float, float]:
        """Support of psi relative to its location index k."""
        a, b = len(self.exact_lowpass) // 2, len(self.exact_dual_lowpass) // 2
        return ((1 - b - a) / 2, (1 + b + a) / 2)

    @property
    def support_radius(self) -> float:
        """Half-width N with phi, psi and their duals supported in [-N, N]."""
        a, b = len(self.exact_lowpass) // 2, len(self.exact_dual_lowpass) // 2
        return float(max(a, b, (1 + a + b) / 2))

    @property
    def key(self) -> tuple[int, int]:
        return (self.primal_order, self.dual_order)

    def scaling_values(self) -> np.ndarray:
        """phi at the integers -a..a (a = primal_order // 2), exact up to rounding."""
        return _integer_values(self.key)


def build_basis(family: str = "spline-biorthogonal", min_vanishing_moments: int = 2,
                dual_order: int | None = None) -> WaveletBasis:
    """Return the shortest supported spline basis with ``r >= min_vanishing_moments``.

    ``family`` may also name a member directly, e.g. ``"cdf4.8"``.
    """
    fam = family.lower()
    if fam.startswith("cdf") and "." in fam:
        try:
            p, q = (int(s) for s in fam[3:].split("."))
        except ValueError:
            raise UnsupportedFamily(f"cannot parse family {family!r}") from None
        if (p, q) not in _DUAL_HALVES:
            raise UnsupportedFamily(f"no filters for {family!r}")
        if p < min_vanishing_moments:
            raise ValueError(f"{family} has only {p} vanishing moments")
        return _make(family, p, q)
    if fam not in _ALIASES:
        raise UnsupportedFamily(f"unsupported wavelet family {family!r}")
    if min_vanishing_moments < 1:
        raise ValueError("min_vanishing_moments must be >= 1")
    for r in sorted(_DEFAULT_DUAL):
        if r >= min_vanishing_moments:
            q = dual_order if dual_order is not None else _DEFAULT_DUAL[r]
            if (r, q) not in _DUAL_HALVES:
                raise UnsupportedFamily(f"no dual of order {q} for r = {r}")
            return _make("spline-biorthogonal", r, q)
    raise ValueError(f"r >= {min_vanishing_moments} is not achievable with spline-biorthogonal filters")


def _make(name, p, q) -> WaveletBasis:
    return WaveletBasis(name, p, q, _bspline_filter(p), _symmetric(_DUAL_HALVES[(p, q)]))


def _basis_for(key) -> WaveletBasis:
    return _make("spline-biorthogonal", *key)


@lru_cache(maxsize=None)
def _integer_values(key) -> np.ndarray:
    # phi(n) solves phi(n) = sum_m h_m phi(2n - m) with h summing to 2, sum phi(n) = 1
    h = [float(v) for v in _bspline_filter(key[0])]
    a = key[0] // 2
    idx = list(range(-a, a + 1))
    T = np.zeros((len(idx), len(idx)))
    for r, n in enumerate(idx):
        for m, hm in zip(range(-a, a + 1), h):
            t = 2 * n - m
            if -a <= t <= a:
                T[r, t + a] += hm
    w, V = np.linalg.eig(T)
    v = np.real(V[:, np.argmin(np.abs(w - 1.0))])
    return v / v.sum()


# --- 1-D operators ---------------------------------------------------------------

def _reflect_ws(i: np.ndarray, n: int) -> np.ndarray:
    """Whole-sample symmetric index folding onto 0..n-1."""
    if n == 1:
        return np.zeros_like(i)
    period = 2 * (n - 1)
    i = np.mod(i, period)
    return np.where(i > n - 1, period - i, i)


def _reflect_hs(i: np.ndarray, n: int) -> np.ndarray:
    """Half-sample symmetric folding onto 0..n-1 (mirror at -1/2 and n-1/2)."""
    i = np.mod(i, 2 * n)
    return np.where(i > n - 1, 2 * n - 1 - i, i)


def _conv_matrix(rows, cols, vals, shape):
    return sps.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()


@dataclass(frozen=True)
class _LevelOps:
    a_lo: sps.csr_matrix
    a_hi: sps.csr_matrix
    s_lo: sps.csr_matrix
    s_hi: sps.csr_matrix


@lru_cache(maxsize=None)
def _level_ops(key, n: int) -> _LevelOps:
    """Analysis/synthesis matrices between length n = 2M+1 and lengths M+1, M."""
    basis = _basis_for(key)
    M = (n - 1) // 2
    lo, dlo = basis.lowpass, basis.dual_lowpass
    hi, dhi = basis.highpass, basis.dual_highpass
    la, lb = len(lo) // 2, len(dlo) // 2

    rows, cols, vals = [], [], []
    k = np.arange(M + 1)
    for m, c in zip(range(-lb, lb + 1), dlo):
        rows.append(k); cols.append(_reflect_ws(2 * k + m, n)); vals.append(np.full(M + 1, c))
    a_lo = _conv_matrix(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), (M + 1, n))

    rows, cols, vals = [], [], []
    k = np.arange(M)
    for m, c in zip(range(-la, la + 1), dhi):
        rows.append(k); cols.append(_reflect_ws(2 * k + 1 + m, n)); vals.append(np.full(M, c))
    a_hi = _conv_matrix(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), (M, n))

    nn = np.arange(n)
    rows, cols, vals = [], [], []
    for m, c in zip(range(-la, la + 1), lo):
        sel = nn[(nn - m) % 2 == 0]
        rows.append(sel); cols.append(_reflect_ws((sel - m) // 2, M + 1)); vals.append(np.full(len(sel), c))
    s_lo = _conv_matrix(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), (n, M + 1))

    rows, cols, vals = [], [], []
    for m, c in zip(range(-lb, lb + 1), hi):
        sel = nn[(nn - 1 - m) % 2 == 0]
        rows.append(sel); cols.append(_reflect_hs((sel - 1 - m) // 2, M)); vals.append(np.full(len(sel), c))
    s_hi = _conv_matrix(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), (n, M))
    return _LevelOps(a_lo, a_hi, s_lo, s_hi)


@lru_cache(maxsize=None)
def _prefilter(key, n: int):
    """Sampling matrix P (values = P @ coefficients) and its LU factorisation."""
    vals = _integer_values(key)
    a = len(vals) // 2
    if a == 0:
        return None, None
    rows, cols, data = [], [], []
    nn = np.arange(n)
    for m, v in zip(range(-a, a + 1), vals):
        rows.append(nn); cols.append(_reflect_ws(nn - m, n)); data.append(np.full(n, v))
    P = _conv_matrix(np.concatenate(rows), np.concatenate(cols), np.concatenate(data), (n, n)).tocsc()
    return P, spla.splu(P)


def _left(A, X):
    return np.asarray(A @ X)


def _right(X, A):
    # X @ A.T for sparse A
    return np.asarray(A @ X.T).T


# --- coefficient tables ------------------------------------------------------------

@dataclass(frozen=True)
class WaveletIndex:
    """``type`` 0 is a scaling function (stored at level j0 - 1), 1..3 wavelets."""

    type: int
    level: int
    k: tuple[int, int]


def _detail_shapes(j: int) -> tuple[tuple[int, int], ...]:
    n = 2**j
    return ((n, n + 1), (n + 1, n), (n, n))


def level_count(j: int, j0: int = 0) -> int:
    """Number of indices stored at level j (j = j0 - 1 is the scaling level)."""
    if j == j0 - 1:
        return (2**j0 + 1) ** 2
    return sum(a * b for a, b in _detail_shapes(j))


@dataclass
class CoefficientTable:
    """Wavelet coefficients on the bounding square, levels j0-1 (scaling) .. J-1.

    ``details[j - j0]`` holds the three type arrays of level ``j``; type 1 is
    high-pass in x, type 2 high-pass in y, type 3 in both.
    """

    basis: WaveletBasis
    j0: int
    J: int
    scaling: np.ndarray
    details: list
    normalization: str = "L2"
    p: float | None = None
    origin: tuple[float, float] = (0.0, 0.0)
    side: float = 1.0

    @classmethod
    def zeros(cls, basis, j0, J, origin=(0.0, 0.0), side=1.0) -> "CoefficientTable":
        if not 0 <= j0 < J:
            raise ValueError("need 0 <= j0 < J")
        s = np.zeros((2**j0 + 1,) * 2)
        d = [tuple(np.zeros(sh) for sh in _detail_shapes(j)) for j in range(j0, J)]
        return cls(basis, j0, J, s, d, "L2", None, tuple(origin), float(side))

    def copy(self) -> "CoefficientTable":
        return replace(self, scaling=self.scaling.copy(),
                       details=[tuple(a.copy() for a in lv) for lv in self.details])

    def zeros_like(self) -> "CoefficientTable":
        t = CoefficientTable.zeros(self.basis, self.j0, self.J, self.origin, self.side)
        return replace(t, normalization=self.normalization, p=self.p)

    @property
    def levels(self) -> range:
        return range(self.j0 - 1, self.J)

    def level(self, j: int) -> tuple[np.ndarray, ...]:
        if j == self.j0 - 1:
            return (self.scaling,)
        return self.details[j - self.j0]

    def __getitem__(self, idx: WaveletIndex) -> float:
        arr = self.scaling if idx.type == 0 else self.details[idx.level - self.j0][idx.type - 1]
        return float(arr[idx.k])

    def __setitem__(self, idx: WaveletIndex, value: float):
        if idx.type == 0:
            if idx.level != self.j0 - 1:
                raise IndexError("scaling indices live at level j0 - 1")
            self.scaling[idx.k] = value
        else:
            self.details[idx.level - self.j0][idx.type - 1][idx.k] = value

    def __len__(self) -> int:
        return (2**self.J + 1) ** 2

    def to_vector(self) -> np.ndarray:
        parts = [self.scaling.ravel()]
        for lv in self.details:
            parts.extend(a.ravel() for a in lv)
        return np.concatenate(parts)

    def with_vector(self, vec: np.ndarray) -> "CoefficientTable":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (len(self),):
            raise ValueError("vector length does not match table")
        pos = self.scaling.size
        scaling = vec[:pos].reshape(self.scaling.shape).copy()
        details = []
        for lv in self.details:
            out = []
            for a in lv:
                out.append(vec[pos:pos + a.size].reshape(a.shape).copy())
                pos += a.size
            details.append(tuple(out))
        return replace(self, scaling=scaling, details=details)

    def index_arrays(self) -> dict[str, np.ndarray]:
        """Per-entry ``type``, ``level``, ``k1``, ``k2`` in ``to_vector`` order."""
        return _index_arrays(self.j0, self.J)

    # -- normalisation --------------------------------------------------------

    def level_factors(self, p: float) -> np.ndarray:
        """Per-entry factor turning L2 coefficients into L_p ones: 2^{j d (1/2 - 1/p)}."""
        lev = self.index_arrays()["level"]
        spatial = np.where(lev == self.j0 - 1, self.j0, lev)
        return 2.0 ** (spatial * 2 * (0.5 - 1.0 / p))

    def to_lp(self, p: float) -> "CoefficientTable":
        if self.normalization != "L2":
            raise NormalizationError("table is already L_p-normalised")
        if p <= 0:
            raise ValueError("p must be positive")
        t = self.with_vector(self.to_vector() * self.level_factors(p))
        return replace(t, normalization="Lp", p=float(p))

    def to_l2(self) -> "CoefficientTable":
        if self.normalization == "L2":
            return self.copy()
        t = self.with_vector(self.to_vector() / self.level_factors(self.p))
        return replace(t, normalization="L2", p=None)

    # -- persistence ----------------------------------------------------------

    def _meta(self) -> dict:
        return {
            "format": "spdewave.coefficients", "version": FORMAT_VERSION,
            "family": self.basis.family, "r": self.basis.r,
            "primal_order": self.basis.primal_order, "dual_order": self.basis.dual_order,
            "j0": self.j0, "J": self.J, "normalization": self.normalization, "p": self.p,
            "origin": list(self.origin), "side": self.side,
        }

    def save(self, path) -> None:
        """Binary container (npz): metadata JSON plus row-major per-level arrays."""
        arrays = {"scaling": self.scaling}
        for j, lv in zip(range(self.j0, self.J), self.details):
            for i, a in enumerate(lv, start=1):
                arrays[f"L{j}_T{i}"] = a
        arrays["meta"] = np.frombuffer(json.dumps(self._meta()).encode(), dtype=np.uint8)
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path) -> "CoefficientTable":
        with np.load(path) as z:
            meta = json.loads(bytes(z["meta"]).decode())
            cls._check_meta(meta)
            basis = build_basis(f"cdf{meta['primal_order']}.{meta['dual_order']}")
            basis = replace(basis, family=meta["family"])
            details = [tuple(z[f"L{j}_T{i}"].copy() for i in (1, 2, 3)) for j in range(meta["j0"], meta["J"])]
            return cls(basis, meta["j0"], meta["J"], z["scaling"].copy(), details,
                       meta["normalization"], meta["p"], tuple(meta["origin"]), meta["side"])

    def to_json(self) -> str:
        doc = self._meta()
        doc["levels"] = {str(self.j0 - 1): [self.scaling.tolist()]}
        for j, lv in zip(range(self.j0, self.J), self.details):
            doc["levels"][str(j)] = [a.tolist() for a in lv]
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "CoefficientTable":
        doc = json.loads(text)
        cls._check_meta(doc)
        basis = replace(build_basis(f"cdf{doc['primal_order']}.{doc['dual_order']}"), family=doc["family"])
        j0, J = doc["j0"], doc["J"]
        scaling = np.array(doc["levels"][str(j0 - 1)][0], dtype=float)
        details = [tuple(np.array(a, dtype=float).reshape(sh) for a, sh in zip(doc["levels"][str(j)], _detail_shapes(j)))
                   for j in range(j0, J)]
        return cls(basis, j0, J, scaling, details, doc["normalization"], doc["p"], tuple(doc["origin"]), doc["side"])

    @staticmethod
    def _check_meta(meta):
        if meta.get("format") != "spdewave.coefficients":
            raise ValueError("not a coefficient container")
        if meta.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported container version {meta.get('version')}")


@lru_cache(maxsize=32)
def _index_arrays(j0: int, J: int) -> dict[str, np.ndarray]:
    types, levels, k1, k2 = [], [], [], []

    def add(t, j, shape):
        a, b = np.meshgrid(np.arange(shape[0]), np.arange(shape[1]), indexing="ij")
        types.append(np.full(a.size, t)); levels.append(np.full(a.size, j))
        k1.append(a.ravel()); k2.append(b.ravel())

    add(0, j0 - 1, (2**j0 + 1, 2**j0 + 1))
    for j in range(j0, J):
        for t, sh in enumerate(_detail_shapes(j), start=1):
            add(t, j, sh)
    out = {"type": np.concatenate(types), "level": np.concatenate(levels),
           "k1": np.concatenate(k1), "k2": np.concatenate(k2)}
    for v in out.values():
        v.setflags(write=False)
    return out


# --- transforms ----------------------------------------------------------------------

def dwt2(fld: Field, basis: WaveletBasis, j0: int = 0,
         extension: str | Callable[[Field], Field] = "zero") -> CoefficientTable:
    """Analyse a grid field into an L2-normalised coefficient table.

    Values outside ``fld.mask`` are first replaced according to ``extension``
    ("zero", "none" or a callable returning the extended field).
    """
    J = fld.level
    if not 0 <= j0 < J:
        raise ValueError(f"need 0 <= j0 < J, got j0={j0}, J={J}")
    if J > 14:
        raise ValueError("grid level too fine for dense in-memory transforms")
    if not callable(extension) and extension not in ("zero", "none"):
        raise ValueError(f"unknown extension policy {extension!r}")
    if fld.mask is not None:
        if extension == "zero":
            fld = fld.masked()
        elif callable(extension):
            fld = extension(fld)

    key = basis.key
    n = fld.n
    _, lu = _prefilter(key, n)
    C = np.array(fld.values, dtype=float)
    if lu is not None:
        C = lu.solve(C)
        C = lu.solve(C.T).T
    C *= fld.side / 2**J

    details = []
    for j in range(J - 1, j0 - 1, -1):
        ops = _level_ops(key, 2 ** (j + 1) + 1)
        lo_r, hi_r = _left(ops.a_lo, C), _left(ops.a_hi, C)
        C = _right(lo_r, ops.a_lo)
        details.append((_right(hi_r, ops.a_lo), _right(lo_r, ops.a_hi), _right(hi_r, ops.a_hi)))
    details.reverse()
    return CoefficientTable(basis, j0, J, C, details, "L2", None, tuple(fld.origin), float(fld.side))


def idwt2(coeffs: CoefficientTable, basis: WaveletBasis | None = None) -> Field:
    """Synthesise the grid samples of ``sum_lambda c_lambda psi_lambda``."""
    if coeffs.normalization != "L2":
        raise NormalizationError("idwt2 needs L2-normalised coefficients; call to_l2() first")
    basis = basis or coeffs.basis
    key = basis.key
    C = coeffs.scaling
    for j, (t1, t2, t3) in zip(range(coeffs.j0, coeffs.J), coeffs.details):
        ops = _level_ops(key, 2 ** (j + 1) + 1)
        lo_r = _right(C, ops.s_lo) + _right(t2, ops.s_hi)
        hi_r = _right(t1, ops.s_lo) + _right(t3, ops.s_hi)
        C = _left(ops.s_lo, lo_r) + _left(ops.s_hi, hi_r)
    P, _ = _prefilter(key, C.shape[0])
    if P is not None:
        C = _left(P, _right(C, P))
    C = C * (2**coeffs.J / coeffs.side)
    return Field(C, coeffs.J, tuple(coeffs.origin), coeffs.side)


def synthesize_index(basis: WaveletBasis, idx: WaveletIndex, J: int, j0: int = 0,
                     origin=(0.0, 0.0), side: float = 1.0) -> Field:
    """Grid samples of the single primal function psi_idx (or phi for type 0)."""
    t = CoefficientTable.zeros(basis, j0, J, origin, side)
    t[idx] = 1.0
    return idwt2(t)


def index_position(type_: np.ndarray, level: np.ndarray, k1: np.ndarray, k2: np.ndarray, j0: int = 0):
    """Reference-square centre 2^{-j} k of each index (scaling indices use level j0)."""
    spatial = np.where(type_ == 0, j0, level)
    scale = 2.0 ** (-spatial.astype(float))
    return k1 * scale, k2 * scale, scale


def support_cube(idx: WaveletIndex, basis: WaveletBasis | float, origin=(0.0, 0.0), side: float = 1.0,
                 j0: int | None = None) -> tuple[float, float, float, float]:
    """``Q_{j,k} = 2^{-j}k + 2^{-j}[-N, N]^2`` as ``(xmin, xmax, ymin, ymax)``.

    Scaling indices (type 0, stored at level j0 - 1) use the spatial level j0.
    Without ``origin``/``side`` the cube is returned in reference coordinates.
    """
    N = basis if isinstance(basis, (int, float)) else basis.support_radius
    j = idx.level + 1 if idx.type == 0 else idx.level
    s = 2.0**-j
    cx, cy = idx.k[0] * s, idx.k[1] * s
    x0, y0 = origin
    return (x0 + side * (cx - N * s), x0 + side * (cx + N * s),
            y0 + side * (cy - N * s), y0 + side * (cy + N * s))


def support_cubes(j0: int, J: int, radius: float, origin=(0.0, 0.0), side: float = 1.0) -> np.ndarray:
    """All support cubes of a (j0, J) table, shape (n_indices, 4), in table order."""
    ia = _index_arrays(j0, J)
    cx, cy, s = index_position(ia["type"], ia["level"], ia["k1"], ia["k2"], j0)
    x0, y0 = origin
    return np.stack([x0 + side * (cx - radius * s), x0 + side * (cx + radius * s),
                     y0 + side * (cy - radius * s), y0 + side * (cy + radius * s)], axis=1)
