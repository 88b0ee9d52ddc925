import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spdewave.approx import (ApproxReport, approximation_study, best_n_term, default_ns, error,
                             exhaustive_errors, fit_rate, gram_matrix, greedy_errors, scores,
                             selection_order, uniform_approx)
from spdewave.functions import corner_singularity
from spdewave.wavelet import CoefficientTable, dwt2, idwt2

from conftest import sample


def random_table(basis, J, seed, j0=0, domain=None):
    where = (domain.origin, domain.side) if domain is not None else ()
    t = CoefficientTable.zeros(basis, j0, J, *where)
    return t.with_vector(np.random.default_rng(seed).standard_normal(len(t)))


def test_uniform_full_depth_is_identity(b4):
    t = random_table(b4, 6, 0)
    u, count = uniform_approx(t, t.J - t.j0)
    assert np.array_equal(u.to_vector(), t.to_vector())
    assert count == len(t)
    assert error(idwt2(t), u) <= 1e-10


def test_uniform_zero_keeps_coarse_part(b4):
    t = random_table(b4, 6, 1, j0=2)
    u, count = uniform_approx(t, 0)
    lev = t.index_arrays()["level"]
    v = u.to_vector()
    assert np.all(v[lev > 1] == 0) and np.array_equal(v[lev <= 1], t.to_vector()[lev <= 1])
    assert count == (2**2 + 1) ** 2
    with pytest.raises(ValueError):
        uniform_approx(t, -1)
    with pytest.raises(ValueError):
        uniform_approx(t, 5)


def test_uniform_counts_grow_like_four_to_the_n(b4, lshape):
    t = random_table(b4, 9, 2, domain=lshape)
    counts = [uniform_approx(t, n, lshape)[1] for n in range(2, 10)]
    ratios = np.array(counts[1:]) / np.array(counts[:-1])
    assert np.all((ratios > 2) & (ratios < 8))
    assert abs(ratios[-1] - 4) < 0.5


def test_best_n_term_extremes(b4, lshape):
    f = sample(lshape, corner_singularity, 6)
    t = dwt2(f, b4)
    zero = best_n_term(t, 0)
    assert not zero.to_vector().any()
    for norm in ("L2", "W12"):
        assert error(f, zero, norm, lshape) == pytest.approx(
            error(f, t.zeros_like(), norm, lshape))
    full = best_n_term(t, len(t) + 5)
    assert np.array_equal(full.to_vector(), t.to_vector())
    assert error(f, full, "L2", lshape) <= 1e-10
    with pytest.raises(ValueError):
        best_n_term(t, -1)


def test_zero_approximant_error_is_field_norm(b4, lshape):
    f = sample(lshape, corner_singularity, 6)
    t = dwt2(f, b4)
    expected = np.sqrt(np.sum(f.values[lshape.mask(6)] ** 2) * f.h**2)
    assert error(f, t.zeros_like(), "L2", lshape) == pytest.approx(expected)


def test_unknown_norm_tag(b4):
    t = random_table(b4, 4, 0)
    with pytest.raises(ValueError):
        scores(t, "H1")
    with pytest.raises(ValueError):
        error(idwt2(t), t, "sup")
    assert scores(t, "Lp:3").shape == scores(t, ("Lp", 3.0)).shape


def test_ties_broken_by_level_type_position(b4):
    t = CoefficientTable.zeros(b4, 0, 3, ).with_vector(np.ones(len(CoefficientTable.zeros(b4, 0, 3))))
    order = selection_order(t, weighting="plain")
    ia = t.index_arrays()
    keys = list(zip(ia["level"][order], ia["type"][order], ia["k1"][order], ia["k2"][order]))
    assert keys == sorted(keys)


def test_indices_off_the_domain_are_never_selected(b4, lshape):
    t = random_table(b4, 7, 3, domain=lshape)
    order = selection_order(t, "L2", lshape)
    assert order.size < len(t)


@given(seed=st.integers(0, 2**32 - 1), norm=st.sampled_from(["L2", "W12", "Lp:3"]))
def test_greedy_sets_are_nested(b2, seed, norm):
    t = random_table(b2, 5, seed)
    order = selection_order(t, norm)
    kept = [set(np.flatnonzero(best_n_term(t, n, order=order).to_vector())) for n in (5, 20, 80)]
    assert kept[0] <= kept[1] <= kept[2]


def test_greedy_errors_are_monotone_on_random_tables(b4):
    for seed in range(100):
        rng = np.random.default_rng(seed)
        t = CoefficientTable.zeros(b4, 0, 5)
        vec = np.where(rng.random(len(t)) < 0.3, rng.standard_normal(len(t)), 0.0)
        t = t.with_vector(vec)
        f = idwt2(t)
        order = selection_order(t)
        errs = [error(f, best_n_term(t, n, order=order)) for n in (2, 8, 32, 128)]
        assert all(a >= b - 1e-12 for a, b in zip(errs, errs[1:]))


def test_greedy_matches_exhaustive_on_disjoint_supports(b4):
    # well separated fine-level wavelets: the Gram matrix is diagonal and greedy is optimal
    t = CoefficientTable.zeros(b4, 0, 8)
    ia = t.index_arrays()
    rng = np.random.default_rng(5)
    pos = []
    for k1 in (10, 30, 50, 70, 90, 110):
        for k2 in (20, 100):
            hit = np.flatnonzero((ia["level"] == 7) & (ia["type"] == 3) & (ia["k1"] == k1) & (ia["k2"] == k2))
            pos.append(int(hit[0]))
    vec = np.zeros(len(t))
    vec[pos] = rng.standard_normal(len(pos))
    t = t.with_vector(vec)
    G = gram_matrix(t, pos)
    assert np.abs(G - np.diag(np.diag(G))).max() <= 1e-12 * np.diag(G).max()
    opt = exhaustive_errors(vec[pos], G)
    greedy = greedy_errors(t, pos, G)
    assert np.allclose(greedy, opt, rtol=1e-12, atol=1e-15)


def test_exhaustive_search_limit():
    with pytest.raises(ValueError):
        exhaustive_errors(np.ones(17), np.eye(17))
    assert np.allclose(exhaustive_errors([3.0, 1.0, 2.0], np.eye(3)), [np.sqrt(14), np.sqrt(5), 1.0, 0.0])


def test_fit_exact_power_law():
    pairs = [(n, 3 * n**-0.5) for n in default_ns()]
    fit = fit_rate(pairs)
    assert fit.exponent == pytest.approx(0.5, abs=1e-9)
    assert fit.intercept == pytest.approx(3.0)
    assert fit.residual < 1e-12


def test_fit_constant_errors():
    assert fit_rate([(n, 0.7) for n in (16, 32, 64, 128, 256)]).exponent == pytest.approx(0.0, abs=1e-12)


def test_fit_window_and_errors():
    pairs = [(n, n**-1.0) for n in default_ns()]
    fit = fit_rate(pairs, window=(16, 1024))
    assert fit.window == (16.0, 1024.0)
    with pytest.raises(ValueError):
        fit_rate(pairs[:4])
    with pytest.raises(ValueError):
        fit_rate([(16, 1.0), (32, 0.0), (64, 0.1), (128, 0.1), (256, 0.1)])
    assert fit_rate(pairs[:3], min_points=3).n == 3


@pytest.mark.parametrize("alpha", [1.0, 2.0])
def test_rearrangement_decay_sets_the_l2_rate(b4, alpha):
    t = CoefficientTable.zeros(b4, 0, 9)
    rng = np.random.default_rng(11)
    n = 20000
    pos = rng.choice(len(t), n, replace=False)
    vec = np.zeros(len(t))
    vec[pos] = rng.choice([-1.0, 1.0], n) * np.arange(1, n + 1) ** -(alpha / 2 + 0.5)
    t = t.with_vector(vec)
    f = idwt2(t)
    order = selection_order(t)
    pairs = [(N, error(f, best_n_term(t, N, order=order))) for N in default_ns(16, 4096)]
    assert fit_rate(pairs, window=(16, 1024)).exponent == pytest.approx(alpha / 2, abs=0.05)


def test_singular_function_energy_rates(b4, lshape):
    f = sample(lshape, corner_singularity, 9)
    t = dwt2(f, b4)
    rep = approximation_study(f, t, lshape, "W12", ns=default_ns(16, 1024)).fit((16, 1024))
    best, uni = rep.fits["best"].exponent, rep.fits["uniform"].exponent
    assert best >= 0.30
    assert best >= uni + 0.05
    errs = [e for _, e in rep.results["best"]]
    assert all(a >= b for a, b in zip(errs, errs[1:]))


def test_report_serialisation():
    rep = ApproxReport("L2", {"best": [(16, 0.5), (32, 0.25), (64, 0.125)]}).fit()
    lines = rep.to_csv().splitlines()
    assert lines[0] == "scheme,N,error" and lines[2] == "best,32,0.25"
    doc = json.loads(rep.to_json())
    assert doc["fits"]["best"]["exponent"] == pytest.approx(1.0)
