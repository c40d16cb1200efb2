import math
import warnings

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import chain_entropy, dense_pressure
from vianalab.dynamics import MapParams
from vianalab.errors import InvalidParamsError, UndefinedConstantError
from vianalab.exponents import ThermoConstants
from vianalab.thermo import (
    Candidate, MarkovModel, PotentialSpec, gap_check, gibbs_measure, mme_candidate,
    nearly_constant_check, periodic_orbit_candidates, perron, pressure, pressure_refinement,
)
from vianalab.ulam import Grid, build_ulam, total_variation

GOLDEN = math.log((1 + math.sqrt(5)) / 2)
TC = ThermoConstants(c0=0.324, eps=0.01, d=16)
WEAK = MapParams(alpha=0.01)


def _random_scc(n, p, rng):
    """Random strongly connected 0/1 matrix: a Hamiltonian cycle plus noise."""
    A = (rng.random((n, n)) < p).astype(float)
    perm = rng.permutation(n)
    A[perm, np.roll(perm, 1)] = 1.0
    return A


def test_nearly_constant_examples():
    n = 10
    assert nearly_constant_check(PotentialSpec.constant(n, 3.0), TC)
    half = np.zeros(n)
    half[0] = TC.zeta / 2
    assert not nearly_constant_check(PotentialSpec(half), TC)
    full = np.zeros(n)
    full[0] = TC.zeta
    assert not nearly_constant_check(PotentialSpec(full), TC)
    with pytest.raises(UndefinedConstantError):
        nearly_constant_check(PotentialSpec.constant(n), ThermoConstants(0.3, 0.05, 16, "literal"))
    with pytest.raises(InvalidParamsError):
        PotentialSpec([0.0, np.inf])


def test_pressure_oracles():
    assert pressure(MarkovModel.full_shift(16)) == pytest.approx(math.log(16), abs=1e-10)
    assert pressure(MarkovModel.golden_mean()) == pytest.approx(GOLDEN, abs=1e-10)
    phi = np.random.default_rng(0).normal(size=7)
    assert pressure(MarkovModel.full_shift(7, phi)) == pytest.approx(
        math.log(np.exp(phi).sum()), abs=1e-10)


def test_gibbs_oracles():
    g = gibbs_measure(MarkovModel.full_shift(16))
    assert np.allclose(g.mu, 1 / 16, atol=1e-14)
    assert g.entropy == pytest.approx(math.log(16), abs=1e-10)
    g = gibbs_measure(MarkovModel.golden_mean())
    assert g.entropy == pytest.approx(GOLDEN, abs=1e-10)
    phi_ = (1 + math.sqrt(5)) / 2
    # Parry measure of the golden-mean shift
    assert g.mu[0] == pytest.approx(phi_ ** 2 / (1 + phi_ ** 2), abs=1e-12)


@pytest.mark.parametrize("seed", range(8))
def test_gibbs_identity_random_50_node(seed):
    rng = np.random.default_rng(seed)
    A = _random_scc(50, 0.1, rng)
    phi = rng.uniform(-0.5, 0.5, 50)
    g = gibbs_measure(MarkovModel(sp.csr_matrix(A), phi))
    assert g.residual <= 1e-8
    P = g.transition.toarray()
    assert np.allclose(P.sum(axis=1), 1, atol=1e-13)
    assert np.allclose(g.mu @ P, g.mu, atol=1e-12)
    assert chain_entropy(P, g.mu) == pytest.approx(g.entropy, abs=1e-10)
    assert g.entropy + float(g.mu @ phi) == pytest.approx(g.pressure, abs=1e-8)
    assert g.entropy >= 0


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2 ** 31))
def test_dense_equivalence_small_models(n, seed):
    rng = np.random.default_rng(seed)
    A = _random_scc(n, 0.4, rng)
    phi = rng.uniform(-1, 1, n)
    assert pressure(MarkovModel(sp.csr_matrix(A), phi)) == pytest.approx(
        dense_pressure(A, phi), abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 30), st.floats(-3, 3), st.integers(0, 2 ** 31))
def test_constant_shift_property(n, c, seed):
    rng = np.random.default_rng(seed)
    A = sp.csr_matrix(_random_scc(n, 0.3, rng))
    phi = rng.uniform(-1, 1, n)
    g0 = gibbs_measure(MarkovModel(A, phi))
    g1 = gibbs_measure(MarkovModel(A, phi + c))
    assert g1.pressure == pytest.approx(g0.pressure + c, abs=1e-10)
    assert total_variation(g0.mu, g1.mu) <= 1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 30), st.integers(0, 2 ** 31))
def test_adding_edges_and_submodels(n, seed):
    rng = np.random.default_rng(seed)
    A = _random_scc(n, 0.2, rng)
    phi = rng.uniform(-1, 1, n)
    base = pressure(MarkovModel(sp.csr_matrix(A), phi))
    B = A.copy()
    i, j = rng.integers(0, n, 2)
    B[i, j] = 1.0
    assert pressure(MarkovModel(sp.csr_matrix(B), phi)) >= base - 1e-12
    # a sub-model: drop a node, keep its largest SCC
    keep = np.delete(np.arange(n), rng.integers(0, n))
    sub = MarkovModel(sp.csr_matrix(A[np.ix_(keep, keep)]), phi[keep])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            p_sub = pressure(sub)
        except ValueError as exc:
            # an acyclic sub-model carries no invariant measure
            assert "no cycles" in str(exc) or "zero" in str(exc)
        else:
            assert p_sub <= base + 1e-12


def test_reducible_and_zero_models():
    A = sp.csr_matrix(np.array([[1.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))
    with pytest.warns(UserWarning, match="reducible"):
        assert pressure(MarkovModel(A, None)) == pytest.approx(GOLDEN, abs=1e-10)
    with pytest.raises(ValueError):
        pressure(MarkovModel(sp.csr_matrix((3, 3)), None))
    with pytest.raises(ValueError):
        perron(sp.csr_matrix((2, 2)))


def test_periodic_model_converges():
    # a pure cycle is periodic; iteration on M + I still converges
    A = sp.csr_matrix(np.roll(np.eye(5), 1, axis=1))
    rho, v, _, _ = perron(A)
    assert rho == pytest.approx(1.0, abs=1e-12)


def test_adjacency_cut():
    from vianalab.ulam import TransitionMatrix

    P = sp.csr_matrix(np.array([[0.5, 0.49, 0.01], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]))
    m = MarkovModel.from_transition(TransitionMatrix(P, None, 16))
    # 0.01 <= 1/64 is cut
    assert m.A.toarray().tolist() == [[1, 1, 0], [0, 1, 0], [1, 0, 0]]


def test_kappa0_and_gap_self_comparison():
    assert TC.kappa0 == pytest.approx(0.693147, abs=1e-6)
    best = Candidate("best", 3.4, 0.0, 0.3)
    low = Candidate("atom", 0.0, 0.0, -0.05)
    rep = gap_check([best, low], TC)
    assert rep.passed and rep.best == "best"
    assert rep.entries[0]["margin"] is None
    assert rep.entries[1]["margin"] == pytest.approx(3.4)
    close = Candidate("close", 3.0, 0.0, 0.01)
    assert not gap_check([best, close], TC).passed
    with pytest.raises(ValueError):
        gap_check([best], TC)
    with pytest.raises(ValueError):
        gap_check([best, Candidate("k", 1.0, 0, 0.3)], TC)


def test_periodic_candidates_exact_exponents():
    cands = periodic_orbit_candidates(WEAK, max_period=4)
    fixed = next(c for c in cands if c.name == "periodic_theta0_p1")
    # fixed point of a0 - x^2 on the negative side, exponent log|2 x*|
    a = WEAK.a0
    xs = np.roots([1, 1, -a])
    ref = min(math.log(abs(2 * x)) for x in xs.real)
    assert fixed.lambda_c == pytest.approx(ref, abs=1e-12)
    assert fixed.entropy == 0.0
    # an attracting cycle over a fixed angle lies outside K
    atoms = [c for c in cands if c.name.startswith("attracting")]
    assert atoms and all(c.lambda_c < 0 for c in atoms)
    th = 13 / 15
    x = 0.0
    for _ in range(20_000):
        x = WEAK.a0 + WEAK.alpha * math.sin(2 * math.pi * th) - x * x
    orb = [x]
    for _ in range(9):
        orb.append(WEAK.a0 + WEAK.alpha * math.sin(2 * math.pi * th) - orb[-1] ** 2)
    got = next(c for c in atoms if "13of15" in c.name)
    assert got.lambda_c == pytest.approx(np.mean(np.log(np.abs(2 * np.array(orb)))), abs=1e-9)


def test_mme_product_case_pressure_at_least_log_d():
    g = Grid.uniform(32, 64, MapParams(alpha=0.0).beta)
    rep = mme_candidate(MapParams(alpha=0.0), g, None, TC, 64, rng_seed=0)
    assert rep.pressure >= math.log(16) - 1e-9
    assert rep.entropy == pytest.approx(rep.pressure, abs=1e-8)


def test_mme_rejects_wild_potential():
    g = Grid.uniform(16, 32, WEAK.beta)
    phi = PotentialSpec(np.linspace(0, 1, g.n_cells))
    with pytest.raises(InvalidParamsError):
        mme_candidate(WEAK, g, phi, TC)
    with pytest.raises(ValueError):
        mme_candidate(WEAK, g, PotentialSpec(np.zeros(3)), TC)


def test_mme_weak_coupling_pipeline():
    g = Grid.uniform(64, 128, WEAK.beta)
    T = build_ulam(WEAK, g, 64, rng_seed=0)
    rep = mme_candidate(WEAK, g, None, TC, transition=T)
    assert rep.in_K and rep.hyperbolic
    assert rep.exponents.lambda_c > TC.k_threshold
    assert rep.measure.mass == pytest.approx(1.0, abs=1e-12)
    d = rep.as_dict()
    assert d["min_exponent"] == min(rep.exponents.lambda_u, rep.exponents.lambda_c)
    # small nearly constant potential keeps the Gibbs identity
    phi = PotentialSpec.from_function(g, lambda t, x: 0.2 * TC.zeta * np.sin(2 * np.pi * t))
    assert nearly_constant_check(phi, TC)
    rep2 = mme_candidate(WEAK, g, phi, TC, transition=T)
    assert rep2.gibbs.residual <= 1e-8
    # variational bound against the measure of maximal entropy on the same graph
    assert rep2.pressure >= rep.entropy + float(phi.values @ rep.measure.weights) - 1e-9
    assert rep2.pressure <= rep.pressure + phi.values.max() + 1e-9


def test_pressure_refinement_reports_each_grid():
    rows = pressure_refinement(WEAK, [(16, 32), (32, 64)], samples_per_cell=64)
    assert [r["n_theta"] for r in rows] == [16, 32]
    # the graph pressure sits near log d + log 2 (topological entropy of the fibre)
    for r in rows:
        assert abs(r["pressure"] - math.log(2 * WEAK.d)) < 0.05
    shifted = pressure_refinement(WEAK, [(16, 32)], lambda t, x: np.full_like(t, 0.1))
    assert shifted[0]["pressure"] == pytest.approx(rows[0]["pressure"] + 0.1, abs=1e-10)
