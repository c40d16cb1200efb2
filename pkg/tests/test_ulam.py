import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import example, given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from oracles import fibre_exponent
from vianalab.dynamics import MapParams
from vianalab.exponents import ThermoConstants
from vianalab.ulam import (
    Grid, MeasureExponents, MeasureOnGrid, TransitionMatrix, build_ulam, entropy_pesin,
    k_membership, mean_log_abs_2x, measure_exponents, stationary, total_variation, ulam_1d,
)

WEAK = MapParams(alpha=0.01)
PRODUCT = MapParams(alpha=0.0)


@pytest.fixture(scope="module")
def weak_ulam():
    g = Grid.uniform(64, 128, WEAK.beta)
    T = build_ulam(WEAK, g, 64, rng_seed=0)
    return g, T, stationary(T)


def test_grid_partition_and_indexing():
    g = Grid.uniform(8, 16, 1.5)
    assert g.areas.sum() == pytest.approx(2 * 1.5)
    assert np.all(np.diff(g.x_edges) > 0)
    t, x = g.centers()
    assert np.array_equal(g.locate(t, x), np.arange(g.n_cells))
    assert g.index(3, 2) == 3 * g.n_x + 2
    # band refinement splits the cells meeting |x| <= 0.05
    assert g.n_x > 16


def test_grid_refinement_nests():
    g = Grid.uniform(8, 16, 1.5)
    f = g.refined()
    assert f.n_theta == 16 and f.n_x == 2 * g.n_x
    cm = g.coarsen_map(f)
    assert np.array_equal(np.bincount(cm), np.full(g.n_cells, 4))
    # coarse area is the sum of its children
    assert np.allclose(g.coarsen(f, f.areas), g.areas)
    with pytest.raises(ValueError):
        Grid(3, np.array([-1.0, 0.0, 1.0]), 1.0).coarsen_map(Grid(4, np.array([-1.0, 1.0]), 1.0))


def test_grid_rejects_bad_edges():
    with pytest.raises(ValueError):
        Grid(4, np.array([-1.0, 0.5, 0.2, 1.0]), 1.0)
    with pytest.raises(ValueError):
        Grid(0, np.array([-1.0, 1.0]), 1.0)


def test_rows_stochastic(weak_ulam):
    _, T, _ = weak_ulam
    assert np.max(np.abs(T.row_sums - 1)) <= 1e-12
    assert T.P.min() >= 0


def test_build_is_deterministic():
    g = Grid.uniform(16, 32, WEAK.beta)
    a = build_ulam(WEAK, g, 16, rng_seed=5)
    b = build_ulam(WEAK, g, 16, rng_seed=5, rows_per_chunk=3)
    assert (a.P != b.P).nnz == 0


def test_build_validation():
    g = Grid.uniform(8, 8, WEAK.beta)
    with pytest.raises(ValueError):
        build_ulam(WEAK, g, 8)
    with pytest.raises(ValueError):
        build_ulam(WEAK, Grid.uniform(8, 8, 1.0), 16)


def test_theta_factor_exhaustive_images():
    # n_theta = d m: the image of an angle cell is d consecutive cells
    d, m = 4, 3
    mp = MapParams(d=d, alpha=0.0, validate=False)
    g = Grid(d * m, np.array([-mp.beta, mp.beta]), mp.beta)
    T = build_ulam(mp, g, 1024, rng_seed=1)
    P = T.P.toarray()
    for i in range(d * m):
        # image of [i, i+1)/(d m) under d theta covers cells d i .. d i + d - 1 (mod d m)
        expect = np.zeros(d * m)
        expect[(d * i + np.arange(d)) % (d * m)] = 1.0 / d
        assert np.allclose(P[i], expect, atol=0.06)
        assert set(np.flatnonzero(P[i])) == set(np.flatnonzero(expect))


def test_doubling_map_stationary_uniform():
    mp = MapParams(d=2, alpha=0.0, validate=False)
    g = Grid(64, np.array([-mp.beta, mp.beta]), mp.beta)
    mu = stationary(build_ulam(mp, g, 256, rng_seed=2))
    assert np.allclose(mu.weights, 1 / 64, atol=1e-3)
    assert mu.irreducible


def test_factorisation_at_product_case():
    g = Grid.uniform(32, 64, PRODUCT.beta)
    T = build_ulam(PRODUCT, g, 64, rng_seed=3)
    mu = stationary(T)
    one_d = ulam_1d(PRODUCT, g.x_edges, samples=2048, rng_seed=3)
    prod = np.outer(np.full(g.n_theta, 1 / g.n_theta), one_d).ravel()
    assert total_variation(mu, prod) <= 0.05
    assert np.allclose(mu.theta_marginal(), 1 / g.n_theta, atol=2e-3)


def test_stationary_uniform_rows_one_step():
    n = 10
    P = sp.csr_matrix(np.full((n, n), 1 / n))
    mu = stationary(P, init=np.arange(1, n + 1, dtype=float))
    assert np.allclose(mu.weights, 1 / n, atol=1e-15)
    assert mu.iterations <= 2


def test_stationary_identity_returns_initial_and_flags():
    P = sp.identity(5, format="csr")
    init = np.array([0.1, 0.2, 0.3, 0.2, 0.2])
    mu = stationary(P, init=init)
    assert np.allclose(mu.weights, init)
    assert not mu.irreducible


def test_stationary_periodic_chain_needs_cesaro():
    P = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    mu = stationary(P, init=np.array([1.0, 0.0]))
    assert np.allclose(mu.weights, 0.5)


def test_stationary_residual(weak_ulam):
    _, T, mu = weak_ulam
    assert mu.residual <= 1e-12
    assert mu.mass == pytest.approx(1.0, abs=1e-12)
    assert mu.irreducible
    res = np.abs(T.P.T @ mu.weights - mu.weights).sum()
    assert res <= 1e-11


@settings(max_examples=100, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(1e-3, 1.0))
@example(-1.1125369292536007e-308, 1.0)  # a sliver of width ~1e-308 left of 0
def test_mean_log_abs_2x_matches_quadrature(a, w):
    b = a + w

    # on each side of 0, t = s^2 turns log|2t| dt into the smooth 2 s log(2 s^2) ds
    def side(lo, hi):
        if hi <= lo:
            return 0.0
        f = lambda s: 2 * s * math.log(2 * s * s) if s * s > 0 else 0.0
        return quad(f, math.sqrt(lo), math.sqrt(hi), limit=200)[0]

    ref = side(max(a, 0.0), b) + side(max(-b, 0.0), -a) if a < 0 else side(a, b)
    assert float(mean_log_abs_2x(a, b)) == pytest.approx(ref / w, abs=1e-7)


def test_band_integral_closed_form():
    g = Grid(1, np.array([-WEAK.beta, -0.5, -0.4, 0.4, 0.5, WEAK.beta]), WEAK.beta)
    w = np.array([0.0, 0.5, 0.0, 0.5, 0.0])
    ex = measure_exponents(PRODUCT, MeasureOnGrid(w, g))
    closed = math.log(2) + ((0.5 * math.log(0.5) - 0.5) - (0.4 * math.log(0.4) - 0.4)) / 0.1
    assert ex.lambda_c == pytest.approx(closed, abs=1e-13)


def test_measure_exponents_product_case_matches_fibre_oracle():
    g = Grid.uniform(16, 512, PRODUCT.beta)
    mu = stationary(build_ulam(PRODUCT, g, 64, rng_seed=4))
    ex = measure_exponents(PRODUCT, mu)
    ref = float(np.mean(fibre_exponent(PRODUCT.a0, n_orbits=2000, n_steps=5000)))
    assert ex.lambda_c == pytest.approx(ref, abs=0.02)
    assert ex.lambda_u == pytest.approx(math.log(16), abs=1e-12)


def test_measure_exponents_conformal_and_pesin_rule(weak_ulam):
    _, _, mu = weak_ulam
    ex = measure_exponents(WEAK, mu)
    assert math.log(16 - 0.05) <= ex.lambda_u <= math.log(16 + 0.05)
    assert entropy_pesin(ex) == pytest.approx(ex.log_det, rel=0.02)


def test_entropy_pesin_examples():
    assert entropy_pesin(MeasureExponents(math.log(16), 0.3, 0)) == pytest.approx(math.log(16) + 0.3)
    assert entropy_pesin((math.log(16), -0.2)) == pytest.approx(math.log(16))


def test_k_membership_examples():
    tc = ThermoConstants(c0=0.32, eps=0.05, d=16)
    assert k_membership(tc.zeta / 2, tc)
    assert not k_membership(0.0, tc)
    assert k_membership(tc.c0, tc)
    bad = ThermoConstants(c0=0.32, eps=0.05, d=16, form="literal")
    with pytest.raises(ValueError):
        k_membership(0.3, bad)


def test_two_resolution_agreement_small():
    # same sampling density on both grids: 4 fine cells per coarse cell
    tv = []
    for nt, nx in ((32, 64), (64, 128)):
        g = Grid.uniform(nt, nx, WEAK.beta)
        f = g.refined()
        mu_c = stationary(build_ulam(WEAK, g, 256, rng_seed=1))
        mu_f = stationary(build_ulam(WEAK, f, 64, rng_seed=2))
        tv.append(total_variation(mu_c, g.coarsen(f, mu_f.weights)))
    assert tv[1] < tv[0]
    assert tv[1] <= 0.05


def test_csv_exports(tmp_path, weak_ulam):
    g, T, mu = weak_ulam
    mu.to_csv(tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "cell_index,value" and len(lines) == g.n_cells + 1
    assert float(lines[1].split(",")[1]) == mu.weights[0]
    small = TransitionMatrix(sp.csr_matrix(np.array([[0.5, 0.5], [1.0, 0.0]])), None, 2)
    small.to_csv(tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "row,col,value"
