"""Bundled test functions: a smooth bump, a tensor cubic spline and the
truncated corner singularity of the L-shape."""
from __future__ import annotations

import numpy as np


def _smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, float)
    a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def cutoff(r, r_inner: float, r_outer: float):
    """1 on [0, r_inner], 0 beyond r_outer, smooth in between."""
    return 1.0 - _smooth_step((np.asarray(r, float) - r_inner) / (r_outer - r_inner))


def corner_singularity(x, y, corner=(0.0, 0.0), start_angle=np.pi / 2, opening=1.5 * np.pi,
                       r_inner=0.3, r_outer=0.8):
    """``r^{pi/w} sin(pi theta / w) * chi(r)`` around a corner of opening ``w``.

    ``theta`` is measured counterclockwise from the edge leaving the corner at
    ``start_angle``; the defaults describe the reentrant corner of the L-shape.
    """
    dx, dy = np.asarray(x, float) - corner[0], np.asarray(y, float) - corner[1]
    r = np.hypot(dx, dy)
    theta = np.mod(np.arctan2(dy, dx) - start_angle, 2 * np.pi)
    lam = np.pi / opening
    inside = theta <= opening
    val = r**lam * np.sin(lam * np.where(inside, theta, 0.0)) * cutoff(r, r_inner, r_outer)
    return np.where(inside, val, 0.0)


def bump(x, y, center=(-0.5, -0.5), radius=0.4):
    """Compactly supported C-infinity bump, peak value 1."""
    r2 = ((np.asarray(x, float) - center[0]) ** 2 + (np.asarray(y, float) - center[1]) ** 2) / radius**2
    safe = np.where(r2 < 1, r2, 0.0)
    return np.where(r2 < 1, np.exp(1.0 - 1.0 / (1.0 - safe)), 0.0)


def cubic_bspline(t):
    """Centred cardinal cubic B-spline, support [-2, 2]."""
    a = np.abs(np.asarray(t, float))
    return np.where(a < 1, 2 / 3 - a**2 + a**3 / 2, np.where(a < 2, (2 - a) ** 3 / 6, 0.0))


def tensor_spline(x, y, center=(-0.5, 0.5), width=0.2):
    return cubic_bspline((np.asarray(x) - center[0]) / width) * cubic_bspline((np.asarray(y) - center[1]) / width)


TEST_FAMILY = {
    "bump": bump,
    "spline": tensor_spline,
    "singular": corner_singularity,
}
