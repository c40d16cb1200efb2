"""Finite thermodynamic formalism on Markov models induced by Ulam graphs.

For a 0/1 adjacency ``A`` and a potential ``phi`` on the nodes, the weight
matrix is ``M[i, j] = A[i, j] exp(phi_j)``.  On an irreducible model the
pressure is ``log rho(M)``, and the Markov chain

    p[i, j] = M[i, j] v_j / (rho v_i),   mu_i ~ u_i v_i

built from the right/left Perron vectors ``v``/``u`` attains
``h(mu) + int phi dmu = log rho``.  With ``phi = 0`` this is the Parry
measure, the unique measure of maximal entropy of the graph.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.sparse.csgraph import connected_components

from .dynamics import MapParams
from .errors import ConvergenceError, InvalidParamsError
from .exponents import ThermoConstants
from .ulam import (
    Grid, MeasureExponents, MeasureOnGrid, TransitionMatrix, build_ulam, measure_exponents,
)

__all__ = [
    "PotentialSpec",
    "MarkovModel",
    "GibbsResult",
    "Candidate",
    "MMEReport",
    "GapReport",
    "nearly_constant_check",
    "pressure",
    "perron",
    "gibbs_measure",
    "mme_candidate",
    "gap_check",
    "periodic_orbit_candidates",
    "pressure_refinement",
]


@dataclass
class PotentialSpec:
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise InvalidParamsError("potential values must be finite")

    @property
    def oscillation(self):
        return float(self.values.max() - self.values.min()) if self.values.size else 0.0

    @classmethod
    def constant(cls, n, value=0.0):
        return cls(np.full(n, float(value)))

    @classmethod
    def from_function(cls, grid: Grid, fn):
        """Piecewise-constant potential from ``fn(theta, x)`` at cell centres."""
        t, x = grid.centers()
        return cls(np.broadcast_to(fn(t, x), t.shape).astype(float))


def nearly_constant_check(phi: PotentialSpec, tc: ThermoConstants) -> bool:
    """``max phi - min phi < zeta / 2`` (strict)."""
    zeta = tc.require_positive_zeta()
    return phi.oscillation < zeta / 2.0


@dataclass
class MarkovModel:
    """Node-weighted directed graph.

    ``nodes`` maps model indices back to the indices of the model this one
    was cut from (grid cells for Ulam-derived models).
    """

    A: sp.csr_matrix
    phi: np.ndarray
    nodes: np.ndarray | None = None

    def __post_init__(self):
        A = sp.csr_matrix(self.A, dtype=float)
        A.data = (A.data != 0).astype(float)
        A.eliminate_zeros()
        self.A = A
        self.phi = np.zeros(A.shape[0]) if self.phi is None else np.asarray(self.phi, dtype=float)
        if self.phi.shape != (A.shape[0],):
            raise ValueError("phi must have one value per node")
        if self.nodes is None:
            self.nodes = np.arange(A.shape[0])

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def M(self):
        return (self.A @ sp.diags(np.exp(self.phi))).tocsr()

    @classmethod
    def from_transition(cls, T: TransitionMatrix, phi=None, cut=None):
        """Adjacency ``P > cut``; default cut ``1 / (4 samples_per_cell)``."""
        if cut is None:
            cut = 1.0 / (4 * T.samples_per_cell)
        P = T.P.tocsr()
        A = P.copy()
        A.data = (A.data > cut).astype(float)
        A.eliminate_zeros()
        vals = None if phi is None else (phi.values if isinstance(phi, PotentialSpec) else phi)
        return cls(A, vals)

    @classmethod
    def full_shift(cls, d, phi=None):
        return cls(sp.csr_matrix(np.ones((d, d))), phi)

    @classmethod
    def golden_mean(cls, phi=None):
        return cls(sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 0.0]])), phi)

    def components(self):
        return connected_components(self.A, directed=True, connection="strong")

    def largest_scc(self):
        """Restriction to the largest strongly connected component.

        Components without an internal edge (single nodes without a
        self-loop) carry no entropy and are ignored.
        """
        n_comp, labels = self.components()
        if n_comp == 1:
            return self
        sizes = np.bincount(labels)
        order = np.argsort(-sizes, kind="stable")
        for lab in order:
            idx = np.flatnonzero(labels == lab)
            sub = self.A[idx][:, idx]
            if sub.nnz:
                return MarkovModel(sub, self.phi[idx], self.nodes[idx])
        raise ValueError("model has no cycles")


def perron(M, tol=1e-13, max_iter=100_000, left=False):
    """Perron root and vector of an irreducible nonnegative matrix.

    Power iteration on ``M + I`` (primitive even if ``M`` is periodic),
    stopped when the Collatz-Wielandt bounds ``min (Mv)_i / v_i <= rho <=
    max (Mv)_i / v_i`` agree to relative ``tol``.
    """
    M = sp.csr_matrix(M)
    if left:
        M = M.T.tocsr()
    n = M.shape[0]
    if M.nnz == 0:
        raise ValueError("zero matrix has no Perron root")
    v = np.full(n, 1.0 / n)
    lo = hi = math.nan
    for it in range(1, max_iter + 1):
        Mv = M @ v
        if np.any(v <= 0):
            w = Mv + v
            v = w / w.sum()
            continue
        q = Mv / v
        lo, hi = q.min(), q.max()
        if hi - lo <= tol * hi:
            rho = 0.5 * (lo + hi)
            return rho, v, it, (hi - lo) / hi
        w = Mv + v
        v = w / w.sum()
    raise ConvergenceError(f"Perron iteration stalled (bounds {lo}, {hi})", residual=(hi - lo) / hi)


def pressure(model: MarkovModel, tol=1e-13) -> float:
    """``log`` of the spectral radius of the weighted matrix on the largest SCC."""
    if model.A.nnz == 0:
        raise ValueError("zero adjacency matrix")
    sub = model.largest_scc()
    if sub is not model:
        warnings.warn(f"reducible model: using SCC with {sub.n} of {model.n} nodes", stacklevel=2)
    rho, _, _, _ = perron(sub.M, tol=tol)
    return math.log(rho)


@dataclass
class GibbsResult:
    pressure: float
    entropy: float
    integral: float
    right: np.ndarray = field(repr=False)
    left: np.ndarray = field(repr=False)
    mu: np.ndarray = field(repr=False)
    transition: sp.csr_matrix = field(repr=False)
    nodes: np.ndarray = field(repr=False)
    n_nodes: int = 0
    residual: float = 0.0

    @property
    def free_energy(self):
        return self.entropy + self.integral

    def edge_measure(self):
        return sp.diags(self.mu) @ self.transition

    def as_dict(self):
        return {"pressure": self.pressure, "entropy": self.entropy, "integral": self.integral,
                "gibbs_residual": self.residual, "n_nodes": self.n_nodes}


def gibbs_measure(model: MarkovModel, tol=1e-13, identity_tol=1e-8) -> GibbsResult:
    sub = model.largest_scc()
    if sub is not model:
        warnings.warn(f"reducible model: using SCC with {sub.n} of {model.n} nodes", stacklevel=2)
    M = sub.M
    rho, v, _, _ = perron(M, tol=tol)
    _, u, _, _ = perron(M, tol=tol, left=True)
    Mv = M @ v
    # rows normalised by (Mv)_i rather than rho v_i: exactly stochastic
    Pm = (sp.diags(1.0 / Mv) @ M @ sp.diags(v)).tocsr()
    mu = u * v
    mu /= mu.sum()
    coo = Pm.tocoo()
    plogp = coo.data * np.log(coo.data)
    row_ent = -np.bincount(coo.row, weights=plogp, minlength=sub.n)
    entropy = float(mu @ row_ent)
    integral = float(mu @ sub.phi)
    press = math.log(rho)
    resid = abs(entropy + integral - press)
    if resid > identity_tol:
        raise ConvergenceError(f"Gibbs identity residual {resid:.3g} > {identity_tol}", residual=resid)
    return GibbsResult(pressure=press, entropy=entropy, integral=integral, right=v, left=u, mu=mu,
                       transition=Pm, nodes=sub.nodes, n_nodes=sub.n, residual=resid)


@dataclass
class Candidate:
    """An invariant-measure proxy entering the gap check."""

    name: str
    entropy: float
    integral: float
    lambda_c: float
    lambda_u: float = math.nan

    @property
    def free_energy(self):
        return self.entropy + self.integral

    def as_dict(self):
        return {"name": self.name, "entropy": self.entropy, "integral": self.integral,
                "lambda_c": self.lambda_c, "lambda_u": self.lambda_u,
                "free_energy": self.free_energy}


@dataclass
class MMEReport:
    pressure: float
    entropy: float
    integral: float
    exponents: MeasureExponents
    in_K: bool
    hyperbolic: bool
    lambda0: float
    gibbs: GibbsResult = field(repr=False)
    measure: MeasureOnGrid = field(repr=False)

    def candidate(self, name="equilibrium"):
        return Candidate(name, self.entropy, self.integral, self.exponents.lambda_c,
                         self.exponents.lambda_u)

    def as_dict(self):
        out = self.gibbs.as_dict()
        out.update(self.exponents.as_dict())
        out.update({"in_K": self.in_K, "hyperbolic": self.hyperbolic, "lambda0": self.lambda0,
                    "min_exponent": min(self.exponents.lambda_u, self.exponents.lambda_c)})
        return out


def mme_candidate(params: MapParams, grid: Grid, phi: PotentialSpec | None, tc: ThermoConstants,
                  samples_per_cell=64, rng_seed=0, lambda0=0.01, transition=None,
                  cut=None) -> MMEReport:
    """Equilibrium-state proxy: Ulam graph, Gibbs chain, exponents of its cell marginal."""
    if phi is None:
        phi = PotentialSpec.constant(grid.n_cells)
    if phi.values.shape != (grid.n_cells,):
        raise ValueError("phi must have one value per grid cell")
    if phi.oscillation > 0 and not nearly_constant_check(phi, tc):
        raise InvalidParamsError(
            f"potential oscillation {phi.oscillation:.4g} >= zeta/2 = {tc.zeta / 2:.4g}"
        )
    T = transition if transition is not None else build_ulam(params, grid, samples_per_cell, rng_seed)
    model = MarkovModel.from_transition(T, phi, cut=cut)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        gibbs = gibbs_measure(model)
    w = np.zeros(grid.n_cells)
    w[gibbs.nodes] = gibbs.mu
    meas = MeasureOnGrid(w, grid)
    ex = measure_exponents(params, meas, rng_seed=rng_seed)
    in_k = bool(ex.lambda_c > tc.k_threshold)
    return MMEReport(
        pressure=gibbs.pressure, entropy=gibbs.entropy, integral=gibbs.integral, exponents=ex,
        in_K=in_k, hyperbolic=bool(min(ex.lambda_u, ex.lambda_c) > lambda0), lambda0=lambda0,
        gibbs=gibbs, measure=meas,
    )


@dataclass
class GapReport:
    best: str
    best_value: float
    kappa0: float
    threshold: float
    entries: list

    @property
    def passed(self):
        return all(e["ok"] for e in self.entries if not e["in_K"])

    def as_dict(self):
        return {"best": self.best, "best_value": self.best_value, "kappa0": self.kappa0,
                "k_threshold": self.threshold, "passed": self.passed, "entries": self.entries}


def gap_check(candidates, tc: ThermoConstants) -> GapReport:
    """Every candidate with ``lambda_c <= zeta/4`` must trail the best by ``kappa0``."""
    if len(candidates) < 2:
        raise ValueError("need at least two candidates")
    thr = tc.k_threshold
    if not any(c.lambda_c <= thr for c in candidates):
        raise ValueError("need at least one candidate outside K")
    ib = int(np.argmax([c.free_energy for c in candidates]))
    best = candidates[ib]
    entries = []
    for i, c in enumerate(candidates):
        in_k = bool(c.lambda_c > thr)
        e = c.as_dict()
        e["in_K"] = in_k
        if i == ib:
            e["margin"] = None
            e["ok"] = True
        else:
            e["margin"] = best.free_energy - c.free_energy
            e["ok"] = bool(in_k or e["margin"] >= tc.kappa0)
        entries.append(e)
    return GapReport(best=best.name, best_value=best.free_energy, kappa0=tc.kappa0, threshold=thr,
                     entries=entries)


def _fibre_periodic_points(params, period, n_grid=200_001):
    """Roots of ``h^p(x) = x`` for the fibre map over the fixed angle 0."""
    a = float(params.a(0.0))

    def g(x):
        y = x
        for _ in range(period):
            y = a - y * y
        return y - x

    xs = np.linspace(-params.beta, params.beta, n_grid)
    ys = g(xs)
    roots = []
    for i in np.flatnonzero(np.sign(ys[:-1]) * np.sign(ys[1:]) < 0):
        roots.append(brentq(g, xs[i], xs[i + 1], xtol=1e-15))
    return np.array(roots)


def _attracting_cycle(a_vals, burn_in=20_000, max_period=2_000, tol=1e-12):
    """Cycle attracting the critical point of the composed fibre maps, if any."""
    t = len(a_vals)
    x = 0.0
    for i in range(burn_in * t):
        x = a_vals[i % t] - x * x
    orb = [x]
    for i in range(max_period * t):
        x = a_vals[i % t] - x * x
        orb.append(x)
        if (i + 1) % t == 0 and abs(x - orb[0]) < tol:
            cyc = np.array(orb[:-1])
            lc = float(np.mean(np.log(np.abs(2 * cyc))))
            return cyc if lc < 0 else None
    return None


def periodic_orbit_candidates(params: MapParams, max_period=12, phi=None, grid=None):
    """Atomic invariant measures on periodic orbits over fixed angles.

    A fixed angle ``theta_k = k / (d - 1)`` turns the fibre dynamics into
    the interval map ``a(theta_k) - x^2``, so its periodic points are
    periodic orbits of the skew product, and along them the central
    exponent is exactly the orbit average of ``log |2x|``.

    Two kinds are returned: for ``theta = 0`` (where ``a = a0``) the
    repelling orbit of each period ``<= max_period`` with the smallest
    central exponent; for every ``theta_k`` the attracting cycle of the critical
    point when there is one (a periodic window of the perturbed parameter).
    """
    out = []

    def integral_of(thetas, xs):
        if phi is None or grid is None:
            return 0.0
        return float(np.mean(phi.values[grid.locate(thetas, xs)]))

    a = float(params.a(0.0))
    for p in range(1, max_period + 1):
        roots = _fibre_periodic_points(params, p)
        best = None
        for r in roots:
            orb = [r]
            for _ in range(p - 1):
                orb.append(a - orb[-1] ** 2)
            orb = np.array(orb)
            lc = float(np.mean(np.log(np.abs(2 * orb))))
            if best is None or lc < best[0]:
                best = (lc, orb)
        if best is None:
            continue
        out.append(Candidate(f"periodic_theta0_p{p}", 0.0, integral_of(np.zeros(p), best[1]),
                             best[0], math.log(params.d)))
    for k in range(params.d - 1):
        th = k / (params.d - 1)
        cyc = _attracting_cycle([float(params.a(th))])
        if cyc is None:
            continue
        lc = float(np.mean(np.log(np.abs(2 * cyc))))
        out.append(Candidate(f"attracting_theta{k}of{params.d - 1}_p{len(cyc)}", 0.0,
                             integral_of(np.full(len(cyc), th), cyc), lc, math.log(params.d)))
    return out


def pressure_refinement(params: MapParams, sizes, phi_fn=None, samples_per_cell=64, rng_seed=0,
                        cut=None):
    """Finite-model pressure on a sequence of grids.

    The graph pressure is only an operational stand-in for the pressure of
    the map; this reports how it moves as the grid is refined, it does not
    prove convergence.

    Parameters
    ----------
    sizes : sequence of (n_theta, n_x)
    phi_fn : callable (theta, x) -> values, optional
        Potential evaluated at cell centres; zero when omitted.

    Returns
    -------
    list of dict with keys n_theta, n_x, n_cells, pressure, n_nodes.
    """
    rows = []
    for nt, nx in sizes:
        g = Grid.uniform(int(nt), int(nx), params.beta)
        phi = None if phi_fn is None else PotentialSpec.from_function(g, phi_fn).values
        T = build_ulam(params, g, samples_per_cell, rng_seed)
        model = MarkovModel.from_transition(T, phi, cut=cut)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = gibbs_measure(model)
        rows.append({"n_theta": g.n_theta, "n_x": g.n_x, "n_cells": g.n_cells,
                     "pressure": res.pressure, "n_nodes": res.n_nodes})
    return rows
