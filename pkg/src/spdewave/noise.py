"""Wavelet-diagonal driving noise: dense Q-Wiener type and the sparse stochastic
wavelet model with Bernoulli activation, as per-step coefficient increments."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rng import stream
from .wavelet import CoefficientTable, WaveletBasis, level_count

D = 2
MODES = ("dense", "sparse")


@dataclass(frozen=True)
class NoiseModel:
    """Amplitudes ``sigma_j = (j - j0 + 2)^{c d/2} 2^{-a (j - j0 + 1) d/2}`` and
    activation probabilities ``p_j = 2^{-b (j - j0 + 1) d}``.

    ``J_noise`` is one past the finest noise level (None: the grid level).
    """

    a: float
    b: float = 0.0
    c: float = 0.0
    j0: int = 0
    mode: str = "dense"
    J_noise: int | None = None
    seed: int = 0
    d: int = D

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.a < 0:
            raise ValueError("a must be nonnegative")
        if not 0 <= self.b <= 1:
            raise ValueError("b must lie in [0, 1]")
        if self.mode == "dense" and self.b != 0:
            raise ValueError("dense mode activates every index; set b = 0")
        if self.a + self.b <= 1:
            raise ValueError(f"a + b = {self.a + self.b} <= 1: the noise series does not converge in L2")

    @property
    def h1_regime(self) -> bool:
        return self.a + self.b > 2

    def sigma(self, j) -> np.ndarray:
        j = np.asarray(j, float)
        return (j - (self.j0 - 2)) ** (self.c * self.d / 2) * 2.0 ** (-self.a * (j - (self.j0 - 1)) * self.d / 2)

    def prob(self, j) -> np.ndarray:
        j = np.asarray(j, float)
        if self.mode == "dense":
            return np.ones_like(j)
        return 2.0 ** (-self.b * (j - (self.j0 - 1)) * self.d)

    def levels(self, J: int) -> range:
        top = J if self.J_noise is None else self.J_noise
        return range(self.j0 - 1, top)

    def tables(self, J: int) -> dict[int, tuple[float, float]]:
        return {j: (float(self.sigma(j)), float(self.prob(j))) for j in self.levels(J)}

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c, "j0": self.j0, "mode": self.mode,
                "J_noise": self.J_noise, "seed": self.seed}


@dataclass(frozen=True)
class NoiseRealization:
    """A path's activation pattern (drawn once, read-only) and its stream seed."""

    model: NoiseModel
    basis: WaveletBasis
    J: int
    seed: int
    pattern: np.ndarray
    origin: tuple = (0.0, 0.0)
    side: float = 1.0
    _amp: np.ndarray = field(default=None, repr=False)

    def template(self) -> CoefficientTable:
        return CoefficientTable.zeros(self.basis, self.model.j0, self.J, self.origin, self.side)

    @property
    def amplitudes(self) -> np.ndarray:
        """``sigma_j Y_lambda`` in table vector order (read-only)."""
        return self._amp

    def active_count(self, j: int) -> int:
        lev = self.template().index_arrays()["level"]
        return int(self.pattern[lev == j].sum())


def _level_slices(j0: int, J: int) -> dict[int, slice]:
    out, pos = {}, 0
    for j in range(j0 - 1, J):
        n = level_count(j, j0)
        out[j] = slice(pos, pos + n)
        pos += n
    return out


def sample_pattern(model: NoiseModel, basis: WaveletBasis, J: int, seed: int | None = None,
                   origin=(0.0, 0.0), side: float = 1.0) -> NoiseRealization:
    """Draw ``Y_lambda ~ Bernoulli(p_j)`` for every index below the noise cutoff.

    Each level uses its own counter-based stream, so the pattern at a level does
    not depend on the truncation or on the order in which levels are drawn.
    """
    if model.J_noise is not None and model.J_noise > J:
        raise ValueError(f"J_noise={model.J_noise} exceeds the grid level {J}")
    seed = model.seed if seed is None else seed
    sl = _level_slices(model.j0, J)
    total = sl[J - 1].stop
    pattern = np.zeros(total, bool)
    amp = np.zeros(total)
    for j in model.levels(J):
        n = sl[j].stop - sl[j].start
        if model.mode == "dense":
            y = np.ones(n, bool)
        else:
            y = stream(seed, "pattern", j - model.j0 + 1).random(n) < model.prob(j)
        pattern[sl[j]] = y
        amp[sl[j]] = model.sigma(j) * y
    pattern.setflags(write=False)
    amp.setflags(write=False)
    return NoiseRealization(model, basis, J, int(seed), pattern, tuple(origin), float(side), amp)


def increment(real: NoiseRealization, dt: float, step: int = 0) -> CoefficientTable:
    """L2-normalised table with entries ``sigma_j Y_lambda xi_lambda sqrt(dt)``.

    ``xi`` is standard normal, drawn from the stream keyed by (path seed, step, level).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    model = real.model
    sl = _level_slices(model.j0, real.J)
    vec = np.zeros(real.pattern.size)
    for j in model.levels(real.J):
        s = sl[j]
        if not real.pattern[s].any():
            continue
        xi = stream(real.seed, "increment", step, j - model.j0 + 1).standard_normal(s.stop - s.start)
        vec[s] = real.amplitudes[s] * xi
    vec *= math.sqrt(dt)
    return real.template().with_vector(vec)


@dataclass
class SummabilityReport:
    a: float
    b: float
    c: float
    J: int
    levels: list
    counts: list
    summands: list
    partial_sums: list
    tail_fraction: float
    converges: bool
    l2_partial_sums: list
    l2_tail_fraction: float


def _log2_summands(model: NoiseModel, js: np.ndarray, extra_log2: np.ndarray) -> np.ndarray:
    counts = np.array([level_count(int(j), model.j0) for j in js], float)
    with np.errstate(divide="ignore"):
        lp = np.log2(model.prob(js)) if model.mode == "sparse" else np.zeros(len(js))
    # log2 sigma_j^2, kept in log form so the extended sum cannot overflow
    log_sigma2 = model.c * model.d * np.log2(js - (model.j0 - 2)) - model.a * (js - (model.j0 - 1)) * model.d
    return np.log2(counts) + log_sigma2 + lp + extra_log2


def h1_summability_check(model: NoiseModel, J: int, extension: int = 400) -> SummabilityReport:
    """Partial sums of ``sum_j |nabla_j| sigma_j^2 p_j 2^{2j}`` up to level J.

    The tail fraction is the share of the sum extended by ``extension`` levels
    that lies beyond J; ``converges`` is the analytic verdict ``a + b > 2``.
    """
    js = np.arange(model.j0 - 1, J + 1, dtype=float)
    jx = np.arange(model.j0 - 1, J + 1 + extension, dtype=float)
    spatial = np.maximum(jx, model.j0)
    log_h1 = _log2_summands(model, jx, 2 * spatial)
    log_l2 = _log2_summands(model, jx, np.zeros_like(jx))
    n = len(js)
    with np.errstate(over="ignore"):
        h1 = np.exp2(log_h1)
        l2 = np.exp2(log_l2)
    part = np.cumsum(h1[:n])
    l2part = np.cumsum(l2[:n])
    converges = model.a + model.b > 2
    # measured in both regimes; a divergent series leaves most of its mass in the extension
    total = np.sum(h1)
    tail = float(max(1 - part[-1] / total, 0.0)) if np.isfinite(total) else 1.0
    l2tail = float(max(1 - l2part[-1] / np.sum(l2), 0.0))
    counts = [level_count(int(j), model.j0) for j in js]
    return SummabilityReport(model.a, model.b, model.c, J, js.astype(int).tolist(), counts,
                             h1[:n].tolist(), part.tolist(), tail, converges, l2part.tolist(), l2tail)


@dataclass
class IsometryRow:
    level: int
    samples: int
    variance: float
    expected: float
    stderr: float

    @property
    def z(self) -> float:
        return (self.variance - self.expected) / self.stderr


def isometry_check(model: NoiseModel, basis: WaveletBasis, J: int, dt: float,
                   samples: int = 100_000, seed: int = 0) -> list[IsometryRow]:
    """Empirical variance of active increment coefficients per level against
    ``sigma_j^2 dt``; enough steps are drawn for ``samples`` values per level."""
    real = sample_pattern(model, basis, J, seed=seed)
    sl = _level_slices(model.j0, J)
    active = {j: np.flatnonzero(real.pattern[sl[j]]) + sl[j].start for j in model.levels(J)}
    active = {j: a for j, a in active.items() if a.size}
    if not active:
        raise ValueError("no active coefficients in this realisation")
    steps = max(math.ceil(samples / a.size) for a in active.values())
    draws = {j: [] for j in active}
    for n in range(steps):
        vec = increment(real, dt, n).to_vector()
        for j, a in active.items():
            draws[j].append(vec[a])
    rows = []
    for j, parts in draws.items():
        x = np.concatenate(parts)[:samples]
        expected = float(model.sigma(j)) ** 2 * dt
        # squares of N(0, v) have variance 2 v^2
        rows.append(IsometryRow(j, x.size, float(np.mean(x**2)), expected,
                                expected * math.sqrt(2.0 / x.size)))
    return rows
