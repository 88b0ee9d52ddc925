import numpy as np
import pytest
from scipy.sparse.linalg import eigsh

from spdewave.grid import grid_coords
from spdewave.noise import NoiseModel
from spdewave.spde import SpdeConfig, Trajectory, assemble_operator, check_diffusion, l2_norm, run, step

from conftest import sample


def eigenfunction(x, y):
    return np.sin(np.pi * x) * np.sin(np.pi * y)


def test_diffusion_validation():
    with pytest.raises(ValueError):
        check_diffusion([[1, 0.2], [0.1, 1]])
    with pytest.raises(ValueError):
        check_diffusion([[1, 2], [2, 1]])
    with pytest.raises(ValueError):
        check_diffusion(np.eye(3))


def test_laplacian_interior_row(square):
    op = assemble_operator(square, 5)
    h2 = op.h**2
    row = op.matrix.getrow(op.matrix.shape[0] // 2)
    assert sorted(row.data * h2) == [-4.0, 1.0, 1.0, 1.0, 1.0]


def test_operator_is_symmetric(lshape):
    for a in (np.eye(2), [[2.0, 0.5], [0.5, 1.0]]):
        A = assemble_operator(lshape, 5, a).matrix
        assert abs(A - A.T).max() == 0


def test_cross_term_is_exact_on_quadratics(square):
    a = np.array([[1.5, 0.4], [0.4, 0.7]])
    op = assemble_operator(square, 5, a)
    X, Y = grid_coords(5)
    u = (X**2 + 3 * X * Y - Y**2).ravel()[op.index]
    # sum a_mn d_m d_n u = 2 a11 + 2 * 3 a12 - 2 a22 at nodes whose stencil stays inside
    Au = op.matrix @ u
    interior = (X.ravel()[op.index] > 1.5 * op.h) & (X.ravel()[op.index] < 1 - 1.5 * op.h) \
        & (Y.ravel()[op.index] > 1.5 * op.h) & (Y.ravel()[op.index] < 1 - 1.5 * op.h)
    assert np.allclose(Au[interior], 2 * 1.5 + 6 * 0.4 - 2 * 0.7)


def test_smallest_eigenvalue_near_2_pi_squared(square):
    A = assemble_operator(square, 7).matrix
    lam = -eigsh(A.tocsc(), k=1, sigma=0, which="LM", return_eigenvectors=False)[0]
    assert lam == pytest.approx(2 * np.pi**2, rel=0.02)


def test_zero_state_stays_zero(square):
    op = assemble_operator(square, 5)
    u = square.zeros(5)
    assert not step(u, op, None, 0.01).values.any()


def test_zero_dt_adds_increment_exactly(lshape):
    op = assemble_operator(lshape, 5)
    u = sample(lshape, lambda x, y: np.cos(x) * np.sin(y), 5)
    dm = sample(lshape, lambda x, y: x * y, 5)
    out = step(u, op, dM=dm, dt=0.0)
    assert np.array_equal(out.values, u.values + dm.values)
    with pytest.raises(ValueError):
        step(u, op, None, -0.1)


def test_one_implicit_step_on_eigenfunction(square):
    J, dt = 7, 1e-3
    op = assemble_operator(square, J)
    u = sample(square, eigenfunction, J)
    out = step(u, op, None, dt)
    ratio = out.values[op.mask] / u.values[op.mask]
    assert np.allclose(ratio, 1 / (1 + 2 * np.pi**2 * dt), rtol=1e-4)


def test_heat_decay_matches_semigroup(square):
    cfg = SpdeConfig(square, 7, 0.1, 512, u0=eigenfunction)
    traj = run(cfg)
    mask = square.mask(7)
    u0 = sample(square, eigenfunction, 7)
    ratio = l2_norm(traj.fields[-1], mask) / l2_norm(u0, mask)
    assert ratio == pytest.approx(np.exp(-2 * np.pi**2 * 0.1), rel=0.03)


def test_noise_off_zero_datum_gives_zero_snapshots(lshape):
    traj = run(SpdeConfig(lshape, 5, 0.1, 8, snapshots=(0, 4, 8)))
    assert traj.times == pytest.approx([0.0, 0.05, 0.1])
    assert all(not f.values.any() for f in traj.fields)


def test_same_seed_same_path(lshape):
    cfg = dict(domain=lshape, J=5, T=0.05, steps=10, noise=NoiseModel(2.0, b=0.5, mode="sparse"))
    a = run(SpdeConfig(seed=3, **cfg)).fields[-1].values
    b = run(SpdeConfig(seed=3, **cfg)).fields[-1].values
    c = run(SpdeConfig(seed=4, **cfg)).fields[-1].values
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert np.all(a[~lshape.mask(5)] == 0)


def test_initial_datum_must_vanish_off_domain(lshape):
    with pytest.raises(ValueError):
        SpdeConfig(lshape, 5, 0.1, 4, u0=lambda x, y: 1.0 + 0 * x).initial_field()


def test_config_validation(lshape):
    with pytest.raises(ValueError):
        SpdeConfig(lshape, 5, 0.0, 4)
    with pytest.raises(ValueError):
        SpdeConfig(lshape, 5, 0.1, 4, snapshots=(5,))


def test_trajectory_round_trip(tmp_path, lshape):
    traj = run(SpdeConfig(lshape, 5, 0.02, 4, noise=NoiseModel(2.5), snapshots=(0, 2, 4)))
    files = traj.save(tmp_path)
    assert [f.name for f in files] == ["trajectory.npy", "trajectory.json", "trajectory_diagnostics.csv"]
    back = Trajectory.load(tmp_path)
    assert back.times == traj.times
    for f, g in zip(back.fields, traj.fields):
        assert np.array_equal(f.values, g.values)
    assert back.diagnostics[1]["l2"] == traj.diagnostics[1]["l2"]  # 17 significant digits survive the CSV
