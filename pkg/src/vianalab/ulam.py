"""Ulam discretisation of the transfer operator on the strip.

Cells are products of a uniform angle partition with an arbitrary (by
default uniform, refined near ``x = 0``) partition of ``[-beta, beta]``.
Cell ``(i_theta, i_x)`` has flat index ``i_theta * n_x + i_x``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .dynamics import TWO_PI, MapParams
from .errors import ConvergenceError, RegionExitError

__all__ = [
    "Grid",
    "TransitionMatrix",
    "MeasureOnGrid",
    "MeasureExponents",
    "build_ulam",
    "stationary",
    "measure_exponents",
    "entropy_pesin",
    "k_membership",
    "total_variation",
    "mean_log_abs_2x",
    "ulam_1d",
]


@dataclass
class Grid:
    n_theta: int
    x_edges: np.ndarray
    beta: float

    def __post_init__(self):
        self.x_edges = np.asarray(self.x_edges, dtype=float)
        e = self.x_edges
        if not (np.all(np.diff(e) > 0) and np.isclose(e[0], -self.beta) and np.isclose(e[-1], self.beta)):
            raise ValueError("x_edges must increase from -beta to beta")
        if self.n_theta < 1:
            raise ValueError("n_theta must be positive")

    @classmethod
    def uniform(cls, n_theta, n_x, beta, band=0.05, band_factor=4):
        """Uniform grid; cells meeting ``|x| <= band`` are split ``band_factor`` ways."""
        e = np.linspace(-beta, beta, n_x + 1)
        if band and band_factor > 1:
            lo, hi = e[:-1], e[1:]
            pieces = []
            for a, b in zip(lo, hi):
                if b > -band and a < band:
                    pieces.append(np.linspace(a, b, band_factor + 1)[:-1])
                else:
                    pieces.append([a])
            e = np.concatenate(pieces + [[beta]])
        return cls(n_theta, e, beta)

    @property
    def n_x(self):
        return len(self.x_edges) - 1

    @property
    def n_cells(self):
        return self.n_theta * self.n_x

    @property
    def x_widths(self):
        return np.diff(self.x_edges)

    @property
    def areas(self):
        """Lebesgue measure of every cell, flat order."""
        return np.tile(self.x_widths / self.n_theta, self.n_theta)

    @property
    def diameter(self):
        return float(math.hypot(1.0 / self.n_theta, self.x_widths.max()))

    def index(self, i_theta, i_x):
        return np.asarray(i_theta) * self.n_x + np.asarray(i_x)

    def locate(self, theta, x):
        it = np.minimum((np.asarray(theta) * self.n_theta).astype(np.int64), self.n_theta - 1)
        ix = np.searchsorted(self.x_edges, x, side="right") - 1
        ix = np.clip(ix, 0, self.n_x - 1)
        return it * self.n_x + ix

    def centers(self):
        tc = (np.arange(self.n_theta) + 0.5) / self.n_theta
        xc = 0.5 * (self.x_edges[:-1] + self.x_edges[1:])
        return np.repeat(tc, self.n_x), np.tile(xc, self.n_theta)

    def refined(self):
        """Halve every cell in both directions (nested refinement)."""
        e = self.x_edges
        mid = 0.5 * (e[:-1] + e[1:])
        fe = np.empty(2 * len(e) - 1)
        fe[0::2] = e
        fe[1::2] = mid
        return Grid(2 * self.n_theta, fe, self.beta)

    def coarsen_map(self, fine: "Grid"):
        """Coarse flat index of every fine cell (fine must nest in self)."""
        if fine.n_theta % self.n_theta:
            raise ValueError("angle partitions do not nest")
        ft, fx = fine.centers()
        return self.locate(ft, fx)

    def coarsen(self, fine: "Grid", weights):
        return np.bincount(self.coarsen_map(fine), weights=weights, minlength=self.n_cells)

    def as_dict(self):
        return {"n_theta": self.n_theta, "n_x": self.n_x, "beta": self.beta,
                "diameter": self.diameter}


@dataclass
class TransitionMatrix:
    P: sp.csr_matrix
    grid: Grid | None
    samples_per_cell: int

    @property
    def row_sums(self):
        return np.asarray(self.P.sum(axis=1)).ravel()

    def to_csv(self, path):
        coo = self.P.tocoo()
        with open(path, "w") as fh:
            fh.write("row,col,value\n")
            for i, j, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{i},{j},{v:.17g}\n")


def _strata(spc):
    k = int(math.isqrt(spc))
    while spc % k:
        k -= 1
    return k, spc // k


def build_ulam(params: MapParams, grid: Grid, samples_per_cell=64, rng_seed=0,
               rows_per_chunk=None) -> TransitionMatrix:
    """Sampled Ulam matrix: ``P[i, j]`` is the fraction of cell ``i``'s points landing in ``j``.

    Points are jittered on a ``k_theta x k_x`` lattice inside each cell
    (``k_theta * k_x = samples_per_cell``).  Each angle row draws from its
    own stream seeded by ``(rng_seed, row)``, so the result depends only on
    the seed and not on the chunking.
    """
    if samples_per_cell < 16:
        raise ValueError("samples_per_cell must be >= 16")
    if params.beta != grid.beta:
        raise ValueError("grid and map disagree on beta")
    kt, kx = _strata(samples_per_cell)
    spc = samples_per_cell
    nx, nt = grid.n_x, grid.n_theta
    if rows_per_chunk is None:
        rows_per_chunk = max(1, 2_000_000 // (nx * spc))
    lo = grid.x_edges[:-1]
    w = grid.x_widths
    st = (np.arange(kt) + 0.0) / kt
    sx = (np.arange(kx) + 0.0) / kx
    pieces = []
    for start in range(0, nt, rows_per_chunk):
        rows = np.arange(start, min(nt, start + rows_per_chunk))
        shape = (len(rows), nx, kt, kx)
        # one stream per angle row, so chunking does not change the samples
        jt = np.empty(shape)
        jx = np.empty(shape)
        for k, row in enumerate(rows):
            g = np.random.default_rng([rng_seed, int(row)])
            jt[k] = g.random(shape[1:])
            jx[k] = g.random(shape[1:])
        theta = (rows[:, None, None, None] + st[None, None, :, None] + jt / kt) / nt
        x = lo[None, :, None, None] + w[None, :, None, None] * (sx[None, None, None, :] + jx / kx)
        tn = params.d * theta
        tn -= np.floor(tn)
        xn = params.a0 + params.alpha * np.sin(TWO_PI * theta) - x * x
        if np.any(np.abs(xn) > params.beta):
            raise RegionExitError("cell images leave the strip: grid or MapParams misconfigured")
        src = grid.index(rows[:, None], np.arange(nx)[None, :]).reshape(len(rows), nx, 1, 1)
        src = np.broadcast_to(src, shape).ravel()
        dst = grid.locate(tn.ravel(), xn.ravel())
        key = src.astype(np.int64) * grid.n_cells + dst
        uk, cnt = np.unique(key, return_counts=True)
        pieces.append((uk // grid.n_cells, uk % grid.n_cells, cnt))
    r = np.concatenate([p[0] for p in pieces])
    c = np.concatenate([p[1] for p in pieces])
    v = np.concatenate([p[2] for p in pieces]) / spc
    P = sp.csr_matrix((v, (r, c)), shape=(grid.n_cells, grid.n_cells))
    return TransitionMatrix(P=P, grid=grid, samples_per_cell=spc)


@dataclass
class MeasureOnGrid:
    weights: np.ndarray
    grid: Grid | None = None
    residual: float = 0.0
    iterations: int = 0
    irreducible: bool | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)

    @property
    def mass(self):
        return float(self.weights.sum())

    def density(self):
        return self.weights / self.grid.areas

    def x_marginal(self):
        return self.weights.reshape(self.grid.n_theta, self.grid.n_x).sum(axis=0)

    def theta_marginal(self):
        return self.weights.reshape(self.grid.n_theta, self.grid.n_x).sum(axis=1)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("cell_index,value\n")
            for i, v in enumerate(self.weights):
                fh.write(f"{i},{v:.17g}\n")


def total_variation(mu, nu):
    mu = mu.weights if isinstance(mu, MeasureOnGrid) else np.asarray(mu)
    nu = nu.weights if isinstance(nu, MeasureOnGrid) else np.asarray(nu)
    return 0.5 * float(np.abs(mu - nu).sum())


def _support_irreducible(P, support):
    sub = P[support][:, support]
    n_comp, _ = connected_components(sub, directed=True, connection="strong")
    return n_comp == 1


def stationary(P, tol=1e-12, max_iter=20000, init=None, cesaro_every=32) -> MeasureOnGrid:
    """Left fixed vector of a row-stochastic matrix by power iteration.

    Every ``cesaro_every`` steps the iterate is replaced by the mean of the
    last ``cesaro_every`` iterates, which removes periodic components.  The
    start is Lebesgue (cell areas) for a :class:`TransitionMatrix` with a
    grid, uniform otherwise.
    """
    grid = P.grid if isinstance(P, TransitionMatrix) else None
    M = P.P if isinstance(P, TransitionMatrix) else sp.csr_matrix(P)
    n = M.shape[0]
    if init is not None:
        mu = np.asarray(init, dtype=float).copy()
    elif grid is not None:
        mu = grid.areas.copy()
    else:
        mu = np.full(n, 1.0 / n)
    mu /= mu.sum()
    MT = M.T.tocsr()
    acc = np.zeros(n)
    res = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        nxt = MT @ mu
        res = float(np.abs(nxt - mu).sum())
        if res <= tol:
            break
        acc += nxt
        mu = nxt
        if it % cesaro_every == 0:
            mu = acc / cesaro_every
            mu /= mu.sum()
            acc[:] = 0.0
    else:
        raise ConvergenceError(f"no stationary vector after {max_iter} steps", residual=res)
    mu = mu / mu.sum()
    res = float(np.abs(MT @ mu - mu).sum())
    support = np.flatnonzero(mu > 0)
    irreducible = _support_irreducible(M, support)
    return MeasureOnGrid(weights=mu, grid=grid, residual=res, iterations=it,
                         irreducible=irreducible)


def mean_log_abs_2x(a, b):
    """Average of ``log|2x|`` over ``[a, b]`` (integrable across 0)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)

    def F(t):
        at = np.abs(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(at > 0, t * np.log(at) - t, 0.0)

    return math.log(2.0) + (F(b) - F(a)) / (b - a)


@dataclass
class MeasureExponents:
    lambda_u: float
    lambda_c: float
    log_det: float

    def as_dict(self):
        return {"lambda_u": self.lambda_u, "lambda_c": self.lambda_c, "log_det": self.log_det}


def measure_exponents(params: MapParams, mu: MeasureOnGrid, samples_per_cell=16, rng_seed=0):
    """Exponents of a grid measure.

    The vertical line field is invariant (the Jacobian is lower triangular),
    so the central exponent is ``int log|2x| dmu``, evaluated with the exact
    cell average of ``log|2x|``.  The unstable exponent is the sampled
    average of ``log |Df h|`` for the horizontal unit vector ``h``, the
    axis of the unstable cone.
    """
    g = mu.grid
    w = mu.weights.reshape(g.n_theta, g.n_x)
    cell_c = mean_log_abs_2x(g.x_edges[:-1], g.x_edges[1:])
    lam_c = float((w * cell_c[None, :]).sum())
    # the unstable integrand depends on theta only
    rng = np.random.default_rng(rng_seed)
    th = (np.arange(g.n_theta)[:, None] + (np.arange(samples_per_cell) + rng.random(samples_per_cell)) / samples_per_cell) / g.n_theta
    c = params.alpha * params.db(th)
    cell_u = 0.5 * np.log(params.d ** 2 + c ** 2).mean(axis=1)
    lam_u = float((w.sum(axis=1) * cell_u).sum())
    log_det = math.log(params.d) * float(w.sum()) + lam_c
    return MeasureExponents(lambda_u=lam_u, lambda_c=lam_c, log_det=log_det)


def entropy_pesin(exps) -> float:
    """Sum of the positive exponents."""
    if isinstance(exps, MeasureExponents):
        vals = (exps.lambda_u, exps.lambda_c)
    else:
        vals = tuple(exps)
    return float(sum(v for v in vals if v > 0))


def k_membership(exps, tc) -> bool:
    """Whether the central exponent exceeds ``zeta / 4``."""
    lam_c = exps.lambda_c if hasattr(exps, "lambda_c") else float(exps)
    return bool(lam_c > tc.k_threshold)


def ulam_1d(params: MapParams, x_edges, samples=1024, rng_seed=0, theta=0.0, tol=1e-13):
    """Stationary weights of the fibre map ``x -> a(theta) - x^2`` on ``x_edges``."""
    rng = np.random.default_rng(rng_seed)
    x_edges = np.asarray(x_edges, dtype=float)
    n = len(x_edges) - 1
    u = (np.arange(samples)[None, :] + rng.random((n, samples))) / samples
    x = x_edges[:-1, None] + np.diff(x_edges)[:, None] * u
    xn = float(params.a(theta)) - x * x
    dst = np.clip(np.searchsorted(x_edges, xn, side="right") - 1, 0, n - 1)
    src = np.repeat(np.arange(n), samples)
    P = sp.csr_matrix((np.full(src.size, 1.0 / samples), (src, dst.ravel())), shape=(n, n))
    init = np.diff(x_edges)
    return stationary(P, tol=tol, init=init).weights


def write_summary(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
