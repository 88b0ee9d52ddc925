"""Semi-implicit Euler / finite-difference solver for linear parabolic SPDEs with
additive wavelet noise and zero Dirichlet data on a polygon."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg, splu

from .domain import PolygonDomain
from .grid import Field, grid_coords
from .noise import NoiseModel, increment, sample_pattern
from .wavelet import WaveletBasis, build_basis, idwt2
from .wsobolev import weighted_hessian_diagnostic


def check_diffusion(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape != (2, 2):
        raise ValueError("diffusion matrix must be 2x2")
    if a[0, 1] != a[1, 0]:
        raise ValueError("diffusion matrix must be symmetric")
    if np.linalg.eigvalsh(a).min() <= 0:
        raise ValueError("diffusion matrix must be positive definite")
    return a


@dataclass
class SpdeConfig:
    """Experiment description for one path. ``snapshots`` lists step counts
    (0 = initial datum) at which the state is recorded."""

    domain: PolygonDomain
    J: int
    T: float
    steps: int
    a: np.ndarray = field(default_factory=lambda: np.eye(2))
    noise: NoiseModel | None = None
    u0: Callable | np.ndarray | None = None
    seed: int = 0
    snapshots: tuple = ()
    basis: WaveletBasis | None = None
    noise_scale: float = 1.0
    cg_tol: float = 1e-10

    def __post_init__(self):
        self.a = check_diffusion(self.a)
        if self.T <= 0 or self.steps <= 0:
            raise ValueError("need T > 0 and at least one step")
        if not self.snapshots:
            self.snapshots = (self.steps,)
        if any(s < 0 or s > self.steps for s in self.snapshots):
            raise ValueError("snapshot steps must lie in [0, steps]")
        self.snapshots = tuple(sorted(set(int(s) for s in self.snapshots)))
        if self.basis is None:
            self.basis = build_basis(min_vanishing_moments=4)

    @property
    def dt(self) -> float:
        return self.T / self.steps

    def initial_field(self) -> Field:
        dom = self.domain
        if self.u0 is None:
            return dom.zeros(self.J)
        if callable(self.u0):
            X, Y = grid_coords(self.J, dom.origin, dom.side)
            vals = np.asarray(self.u0(X, Y), float) * np.ones_like(X)
        else:
            vals = np.asarray(self.u0, float)
        raw = dom.zeros(self.J).with_values(vals)
        off = ~raw.inside()
        scale = max(np.abs(raw.values).max(), 1.0)
        if np.abs(raw.values[off]).max(initial=0.0) > 1e-12 * scale:
            raise ValueError("initial datum must vanish outside the domain mask (zero Dirichlet data)")
        return raw.masked()

    def echo(self) -> dict:
        return {
            "domain": json.loads(self.domain.to_json()), "J": self.J, "T": self.T, "steps": self.steps,
            "a": self.a.tolist(), "noise": None if self.noise is None else self.noise.to_dict(),
            "seed": self.seed, "snapshots": list(self.snapshots), "basis": self.basis.family,
            "noise_scale": self.noise_scale,
        }


@dataclass
class Operator:
    """Discrete ``sum a_{mn} d_m d_n`` on the interior mask nodes (Dirichlet zero outside)."""

    matrix: sp.csr_matrix
    mask: np.ndarray
    index: np.ndarray  # flat grid indices of the unknowns
    h: float
    _lu: dict = field(default_factory=dict, repr=False)

    def solver(self, dt: float):
        if dt not in self._lu:
            n = self.matrix.shape[0]
            self._lu[dt] = splu((sp.identity(n, format="csc") - dt * self.matrix).tocsc())
        return self._lu[dt]


def assemble_operator(domain: PolygonDomain, J: int, a=np.eye(2)) -> Operator:
    """Five-point stencil for the diagonal part, symmetric four-point stencil for a_12."""
    a = check_diffusion(a)
    mask = domain.mask(J)
    n = 2**J + 1
    h = domain.side / 2**J
    number = -np.ones((n, n), dtype=np.int64)
    idx = np.flatnonzero(mask)
    number.ravel()[idx] = np.arange(idx.size)
    I, Jj = np.divmod(idx, n)
    stencil = [((0, 0), -2 * (a[0, 0] + a[1, 1])),
               ((1, 0), a[0, 0]), ((-1, 0), a[0, 0]), ((0, 1), a[1, 1]), ((0, -1), a[1, 1])]
    if a[0, 1] != 0:
        q = a[0, 1] / 2  # 2 a12 u_xy, u_xy with the 1/(4h^2) four-point stencil
        stencil += [((1, 1), q), ((-1, -1), q), ((1, -1), -q), ((-1, 1), -q)]
    rows, cols, vals = [], [], []
    for (di, dj), w in stencil:
        ii, jj = I + di, Jj + dj
        inb = (ii >= 0) & (ii < n) & (jj >= 0) & (jj < n)
        col = np.full(idx.size, -1)
        col[inb] = number[ii[inb], jj[inb]]
        ok = col >= 0
        rows.append(np.arange(idx.size)[ok])
        cols.append(col[ok])
        vals.append(np.full(ok.sum(), w / h**2))
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(idx.size, idx.size))
    A.sum_duplicates()
    return Operator(A, mask, idx, h)


def step(u: Field, op: Operator, dM: Field | np.ndarray | None, dt: float, tol: float = 1e-10,
         maxiter: int = 200) -> Field:
    """One semi-implicit Euler step: solve ``(I - dt A) u+ = u + dM`` on the mask."""
    rhs = u.values.ravel()[op.index].copy()
    if dM is not None:
        dm = dM.values if isinstance(dM, Field) else np.asarray(dM)
        if dm.shape != u.values.shape:
            raise ValueError("noise increment and state have different grids")
        rhs += dm.ravel()[op.index]
    if dt == 0:
        sol = rhs
    elif dt < 0:
        raise ValueError("dt must be nonnegative")
    else:
        n = rhs.size
        B = sp.identity(n, format="csr") - dt * op.matrix
        lu = op.solver(dt)
        M = LinearOperator((n, n), matvec=lu.solve, dtype=float)
        sol, info = cg(B, rhs, x0=lu.solve(rhs), rtol=tol, atol=0.0, maxiter=maxiter, M=M)
        if info != 0:
            raise RuntimeError(f"conjugate gradients did not converge (info={info})")
        res = np.linalg.norm(B @ sol - rhs)
        if res > tol * max(np.linalg.norm(rhs), 1e-300):
            raise RuntimeError(f"relative residual {res / np.linalg.norm(rhs):.3e} above {tol}")
    out = np.zeros(u.values.size)
    out[op.index] = sol
    return u.with_values(out.reshape(u.values.shape))


@dataclass
class Trajectory:
    times: list
    fields: list
    diagnostics: list
    config: dict

    def save(self, directory, stem: str = "trajectory") -> list[Path]:
        """Snapshots as one ``.npy`` stack plus a JSON sidecar, and a diagnostics CSV."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        stack = np.stack([f.values for f in self.fields]) if self.fields else np.zeros((0, 0, 0))
        npy, meta, csvp = d / f"{stem}.npy", d / f"{stem}.json", d / f"{stem}_diagnostics.csv"
        np.save(npy, stack)
        f0 = self.fields[0] if self.fields else None
        meta.write_text(json.dumps({
            "format": "spdewave.trajectory", "version": 1, "layout": "row-major, values[i, j] = u(x_i, y_j)",
            "shape": list(stack.shape), "dtype": "float64", "times": self.times,
            "level": f0.level if f0 else None, "origin": list(f0.origin) if f0 else None,
            "side": f0.side if f0 else None, "config": self.config,
        }, indent=2, sort_keys=True))
        write_csv(csvp, self.diagnostics)
        return [npy, meta, csvp]

    @staticmethod
    def load(directory, stem: str = "trajectory") -> "Trajectory":
        d = Path(directory)
        meta = json.loads((d / f"{stem}.json").read_text())
        stack = np.load(d / f"{stem}.npy")
        fields = [Field(a, meta["level"], tuple(meta["origin"]), meta["side"]) for a in stack]
        with open(d / f"{stem}_diagnostics.csv") as fh:
            diags = [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]
        return Trajectory(meta["times"], fields, diags, meta["config"])


def write_csv(path, rows: list[dict]) -> None:
    """CSV with '.' decimals and 17 significant digits."""
    if not rows:
        Path(path).write_text("")
        return
    keys = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for r in rows:
            w.writerow([f"{r[k]:.17g}" if isinstance(r[k], float) else r[k] for k in keys])


def l2_norm(u: Field, mask: np.ndarray) -> float:
    return float(np.sqrt(np.sum(u.values[mask] ** 2) * u.h**2))


def diagnostics(u: Field, domain: PolygonDomain, mask: np.ndarray) -> dict:
    return {"l2": l2_norm(u, mask), "weighted_d2": weighted_hessian_diagnostic(u, domain, 2, 2.0, 2.0)}


def run(config: SpdeConfig, op: Operator | None = None) -> Trajectory:
    """Advance one path; deterministic given ``config.seed``."""
    dom = config.domain
    op = op or assemble_operator(dom, config.J, config.a)
    u = config.initial_field()
    real = None
    if config.noise is not None:
        real = sample_pattern(config.noise, config.basis, config.J, seed=config.seed,
                              origin=dom.origin, side=dom.side)
    times, fields, diags = [], [], []

    def record(n, u):
        times.append(n * config.dt)
        fields.append(u)
        diags.append({"step": n, "time": n * config.dt, **diagnostics(u, dom, op.mask)})

    if 0 in config.snapshots:
        record(0, u)
    for n in range(config.steps):
        dM = None
        if real is not None:
            dM = idwt2(increment(real, config.dt, n)).values * config.noise_scale
        u = step(u, op, dM, config.dt, config.cg_tol)
        if n + 1 in config.snapshots:
            record(n + 1, u)
    return Trajectory(times, fields, diags, config.echo())
