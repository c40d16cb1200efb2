"""Hyperbolic times, slow recurrence, and the expansion they buy.

``n`` is a (sigma, delta)-hyperbolic time for ``p`` when, for every
``1 <= k <= n``,

    sum_{j=n-k}^{n-1} log ||Df(f^j p)^{-1}|| <= k log sigma
    log dist_delta(f^{n-k} p, C)             >= b k log sigma.

With ``S_j`` the prefix sums of the ``u_j = log ||Df(f^j p)^{-1}||`` the
first condition reads ``T_n <= min_{m<n} T_m`` for ``T_j = S_j - j log
sigma``; the second reads ``n >= max_{m<n} c_m`` with ``c_m = m + r_m / (b
log sigma)``.  Both are running extrema, so detection is linear in ``n``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np

from .dynamics import (
    MODULUS, TWO_PI, MapParams, OrbitRecord, PhasePoint, orbit, random_points, theta_to_residue,
    truncated_log_distance,
)
from .errors import InvalidParamsError
from .exponents import ThermoConstants

__all__ = [
    "HTParams",
    "HTReport",
    "RecurrenceProfile",
    "HMembership",
    "ExpansivityReport",
    "SeparationReport",
    "detect",
    "detect_sequences",
    "density_study",
    "slow_recurrence_profile",
    "h_sigma_membership",
    "expansivity_check",
    "separation_experiment",
    "DYADIC_DELTAS",
    "TIE_TOL",
]

# Absolute slack on both defining inequalities, so exact ties (u_j = log sigma)
# survive floating-point prefix sums.
TIE_TOL = 1e-9

DYADIC_DELTAS = 2.0 ** -np.arange(1, 41)


@dataclass(frozen=True)
class HTParams:
    """``b_ht`` must lie in ``(0, min(1/2, 1/(2 ell)))``; default is half the bound at ell = 1."""

    sigma: float
    delta: float
    b_ht: float = 0.25
    ell: float = 1.0

    def __post_init__(self):
        if not 0 < self.sigma < 1:
            raise InvalidParamsError(f"sigma={self.sigma} outside (0, 1)")
        if not self.delta > 0:
            raise InvalidParamsError(f"delta={self.delta} must be positive")
        if not self.ell > 0:
            raise InvalidParamsError("ell must be positive")
        bound = min(0.5, 1.0 / (2.0 * self.ell))
        if not 0 < self.b_ht < bound:
            raise InvalidParamsError(f"b_ht={self.b_ht} outside (0, {bound})")

    @property
    def log_sigma(self):
        return math.log(self.sigma)


@dataclass
class HTReport:
    times: np.ndarray
    density: float
    params: HTParams
    N: int

    def __len__(self):
        return len(self.times)


def detect_sequences(u, r, sigma, b_ht, tol=TIE_TOL):
    """Hyperbolic times from raw series ``u_j`` and ``r_j = log dist_delta``.

    Returns the ascending array of all ``1 <= n <= len(u)`` satisfying both
    conditions.
    """
    u = np.asarray(u, dtype=float)
    r = np.asarray(r, dtype=float)
    N = len(u)
    if N == 0:
        return np.empty(0, dtype=np.int64)
    ls = math.log(sigma)
    j = np.arange(N + 1)
    S = np.concatenate(([0.0], np.cumsum(u)))
    T = S - j * ls
    prior_min = np.minimum.accumulate(T[:-1])  # min_{m<n} T_m, n = 1..N
    deriv_ok = T[1:] <= prior_min + tol
    with np.errstate(invalid="ignore"):
        c = np.arange(N) + (r + tol) / (b_ht * ls)
    c = np.where(np.isnan(c), np.inf, c)
    prior_max = np.maximum.accumulate(c)  # max_{m<n} c_m
    dist_ok = np.arange(1, N + 1) >= prior_max
    return np.flatnonzero(deriv_ok & dist_ok) + 1


def _record_series(record: OrbitRecord, delta, central=False):
    if central:
        with np.errstate(divide="ignore"):
            u = -np.log(2.0 * record.dist)
    else:
        u = record.log_inv_norm
    return u, truncated_log_distance(record.dist, delta)


def detect(record: OrbitRecord, ht: HTParams, central=False) -> HTReport:
    """All (sigma, delta)-hyperbolic times ``n <= N`` along an orbit record.

    ``central=True`` uses ``1 / |2 x_j|`` (the exact vertical contraction)
    in place of the full inverse norm.
    """
    u, r = _record_series(record, ht.delta, central)
    times = detect_sequences(u, r, ht.sigma, ht.b_ht)
    return HTReport(times=times, density=len(times) / len(u), params=ht, N=len(u))


def density_study(params: MapParams, ht: HTParams, horizons, n_points, rng_seed=0, burn_in=0):
    """Empirical density ``l / N`` of hyperbolic times for each horizon.

    Each point is iterated once to the largest horizon; the densities of the
    shorter horizons are read off the same time list.  Returns a dict with
    the per-point density matrix and per-horizon means.
    """
    horizons = sorted(int(h) for h in horizons)
    rng = np.random.default_rng(rng_seed)
    ms, xs = random_points(params, n_points, rng)
    dens = np.empty((n_points, len(horizons)))
    for i in range(n_points):
        rec = orbit(params, (ms[i], xs[i]), horizons[-1] + burn_in, keep_points=False)
        u, r = _record_series(rec, ht.delta)
        times = detect_sequences(u[burn_in:], r[burn_in:], ht.sigma, ht.b_ht)
        for k, h in enumerate(horizons):
            dens[i, k] = np.searchsorted(times, h, side="right") / h
    mean = dens.mean(axis=0)
    if np.any(dens[:, -1] == 0):
        warnings.warn(
            f"{int(np.sum(dens[:, -1] == 0))} orbits without hyperbolic times at N={horizons[-1]}; "
            "sigma may be too close to 1 or delta too small",
            stacklevel=2,
        )
    return {"horizons": horizons, "density": dens, "mean": mean, "min": dens.min(axis=0)}


@dataclass
class RecurrenceProfile:
    """Birkhoff averages of ``-log dist_delta`` over a grid of ``delta``.

    ``delta`` is the largest grid value whose average is at most
    ``gamma / 2`` (``None`` if there is none).
    """

    gamma: float
    delta: float | None
    deltas: np.ndarray
    averages: np.ndarray


def _recurrence_averages(dist, deltas):
    # -log dist_delta summed in one pass: sort distances, accumulate -log.
    dist = np.asarray(dist, dtype=float)
    n = len(dist)
    ds = np.sort(dist)
    with np.errstate(divide="ignore"):
        acc = np.concatenate(([0.0], np.cumsum(-np.log(ds))))
    k = np.searchsorted(ds, deltas, side="left")  # count with dist < delta
    return acc[k] / n


def slow_recurrence_profile(record, gamma, deltas=DYADIC_DELTAS) -> RecurrenceProfile:
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    deltas = np.asarray(deltas, dtype=float)
    if np.any(deltas > 1):
        raise ValueError("deltas above 1 break the monotonicity of the profile")
    dist = record.dist if isinstance(record, OrbitRecord) else np.asarray(record)
    avg = _recurrence_averages(dist, deltas)
    ok = np.flatnonzero(avg <= gamma / 2)
    best = float(deltas[ok[np.argmax(deltas[ok])]]) if len(ok) else None
    return RecurrenceProfile(gamma=gamma, delta=best, deltas=deltas, averages=avg)


@dataclass
class HMembership:
    member: bool
    derivative_margin: float
    recurrence_margin: float
    central_member: bool
    central_derivative_margin: float
    log_sigma: float

    def __bool__(self):
        return self.member


def h_sigma_membership(record: OrbitRecord, tc, gamma, delta, min_length=10_000) -> HMembership:
    """Finite-orbit proxy for membership in H(sigma).

    ``tc`` is a :class:`ThermoConstants` or a bare sigma.  Margins are
    positive when the corresponding inequality holds: ``3 log sigma -
    mean(u)`` and ``gamma - mean(-log dist_delta)``.  The central variant
    replaces ``u_j`` by ``-log |2 x_j|``.
    """
    if record.n < min_length:
        raise ValueError(f"orbit of length {record.n} < {min_length}")
    sigma = tc.sigma if isinstance(tc, ThermoConstants) else float(tc)
    ls = math.log(sigma)
    u_mean = float(np.mean(record.log_inv_norm))
    with np.errstate(divide="ignore"):
        uc_mean = float(np.mean(-np.log(2.0 * record.dist)))
    rec_avg = float(-np.mean(truncated_log_distance(record.dist, delta)))
    dm = 3 * ls - u_mean
    cm = 3 * ls - uc_mean
    rm = gamma - rec_avg
    return HMembership(
        member=bool(dm >= 0 and rm >= 0 and ls < 0),
        derivative_margin=dm,
        recurrence_margin=rm,
        central_member=bool(cm >= 0 and rm >= 0),
        central_derivative_margin=cm,
        log_sigma=ls,
    )


@dataclass
class ExpansivityReport:
    """Backward contraction at a hyperbolic time.

    ``ratios`` has shape ``(n_pairs, n)``; entry ``[i, k-1]`` is
    ``dist(f^{n-k} y_i, f^{n-k} z_i) / (sigma^{k/2} dist(f^n y_i, f^n z_i))``.
    Pullback failures (no preimage in the branch) are stored as ``inf``.
    """

    n: int
    radius: float
    ratios: np.ndarray = field(repr=False)
    tol: float = 0.05
    delta1: float | None = None

    @property
    def worst_ratio(self):
        return float(np.max(self.ratios)) if self.ratios.size else 0.0

    @property
    def ok(self):
        return self.ratios <= 1.0 + self.tol

    @property
    def fraction_ok(self):
        return float(np.mean(self.ok)) if self.ratios.size else 1.0

    @property
    def passed(self):
        return bool(np.all(self.ok))

    @property
    def violations(self):
        """``(k, pair)`` index pairs of failing instances."""
        i, k = np.nonzero(~self.ok)
        return np.stack([k + 1, i], axis=1)


def _pullback_ratios(params, th_p, x_p, n, sigma, w_dth, w_dx):
    """Pull image pairs back along the inverse branch followed by ``p``.

    ``th_p``, ``x_p`` are ``p_0 .. p_n``.  ``w_dth``/``w_dx`` have shape
    ``(2, n_pairs)``: offsets of ``y_n`` and ``z_n`` from ``p_n``.  The angle
    branch is affine, so offsets divide by ``d``; the fibre branch is
    ``x = s sqrt(a(theta) - x')`` with ``s`` the sign of ``x_j``.  The
    pair difference is propagated in the cancellation-free form
    ``x_y - x_z = s (a_y - a_z - (x'_y - x'_z)) / (|x_y| + |x_z|)``.
    """
    n_pairs = w_dth.shape[1]
    d = params.d
    ratios = np.empty((n_pairs, n))
    dth = w_dth.copy()  # angle offsets from p_j
    xy = x_p[n] + w_dx[0]
    xz = x_p[n] + w_dx[1]
    diff_x = w_dx[0] - w_dx[1]
    diff_th = dth[0] - dth[1]
    d_n = np.hypot(diff_th, diff_x)
    failed = np.zeros(n_pairs, dtype=bool)
    sq = math.sqrt(sigma)
    with np.errstate(invalid="ignore", divide="ignore"):
        for k in range(1, n + 1):
            j = n - k
            dth = dth / d
            diff_th = diff_th / d
            ty = th_p[j] + dth[0]
            tz = th_p[j] + dth[1]
            ay = params.a0 + params.alpha * np.sin(TWO_PI * ty)
            az = params.a0 + params.alpha * np.sin(TWO_PI * tz)
            ry = ay - xy
            rz = az - xz
            failed |= (ry < 0) | (rz < 0)
            s = 1.0 if x_p[j] >= 0 else -1.0
            my = np.sqrt(np.maximum(ry, 0.0))
            mz = np.sqrt(np.maximum(rz, 0.0))
            # a_y - a_z = 2 alpha cos(pi (ty + tz)) sin(pi (ty - tz))
            da = 2 * params.alpha * np.cos(math.pi * (ty + tz)) * np.sin(math.pi * diff_th)
            diff_x = s * (da - diff_x) / (my + mz)
            xy = s * my
            xz = s * mz
            dist = np.hypot(diff_th, diff_x)
            ratios[:, k - 1] = np.where(d_n > 0, dist / (sq ** k * d_n), 0.0)
    ratios[failed | ~np.isfinite(ratios).all(axis=1)] = np.inf
    return ratios


def _sample_ball(rng, radius, n_pairs):
    r = radius * np.sqrt(rng.random((2, n_pairs)))
    phi = rng.uniform(0, TWO_PI, (2, n_pairs))
    return r * np.cos(phi), r * np.sin(phi)


def expansivity_check(params: MapParams, p, n: int, ht: HTParams, n_pairs, radius, rng_seed=0,
                      tol=0.05, search_delta1=False, r_max=1.0):
    """Sample pairs in the ``n``-th preimage of ``B_radius(f^n p)`` and test contraction.

    With ``search_delta1`` the largest radius (log-bisection on ``(0,
    r_max]``) at which every sampled instance passes is stored as
    ``delta1``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rec = orbit(params, p, n + 1)
    th_p, x_p = rec.theta, rec.x
    rng = np.random.default_rng(rng_seed)
    w_dth, w_dx = _sample_ball(rng, radius, n_pairs)
    ratios = _pullback_ratios(params, th_p, x_p, n, ht.sigma, w_dth, w_dx)
    rep = ExpansivityReport(n=n, radius=radius, ratios=ratios, tol=tol)
    if search_delta1:
        rep.delta1 = empirical_delta1(params, th_p, x_p, n, ht.sigma, n_pairs, rng_seed, tol, r_max)
    return rep


def empirical_delta1(params, th_p, x_p, n, sigma, n_pairs, rng_seed=0, tol=0.05, r_max=1.0,
                     iters=40):
    def passes(radius):
        rng = np.random.default_rng(rng_seed)
        w_dth, w_dx = _sample_ball(rng, radius, n_pairs)
        return bool(np.all(_pullback_ratios(params, th_p, x_p, n, sigma, w_dth, w_dx) <= 1 + tol))

    if passes(r_max):
        return r_max
    lo, hi = math.log(1e-300), math.log(r_max)
    if not passes(math.exp(lo)):
        return 0.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if passes(math.exp(mid)):
            lo = mid
        else:
            hi = mid
    return math.exp(lo)


@dataclass
class SeparationReport:
    all_separated: bool
    first_times: np.ndarray
    stubborn: np.ndarray
    eps: float
    N: int


@numba.njit(cache=True)
def _separation_kernel(d, a0, alpha, mp, xp, mz, xz, eps, N, modulus, out):
    inv_q = 1.0 / modulus
    for i in range(len(mz)):
        m1, x1 = mp, xp
        m2, x2 = mz[i], xz[i]
        out[i] = -1
        for j in range(N + 1):
            dm = (m2 - m1) % modulus
            if dm > modulus - dm:
                dm = modulus - dm
            dt = dm * inv_q
            dx = x2 - x1
            if math.sqrt(dt * dt + dx * dx) > eps:
                out[i] = j
                break
            t1 = m1 * inv_q
            t2 = m2 * inv_q
            x1n = a0 + alpha * math.sin(TWO_PI * t1) - x1 * x1
            x2n = a0 + alpha * math.sin(TWO_PI * t2) - x2 * x2
            m1 = (d * m1) % modulus
            m2 = (d * m2) % modulus
            x1, x2 = x1n, x2n


def separation_experiment(params: MapParams, p, eps, N, n_probes, rng_seed=0, probes=None):
    """First time each probe near ``p`` drifts more than ``eps`` away.

    Probes are uniform in the ``eps``-ball around ``p`` (or given as
    ``(residues, x)``); probes equal to ``p`` are rejected.
    """
    if isinstance(p, PhasePoint):
        mp, xp = theta_to_residue(p.theta), p.x
    else:
        mp, xp = int(p[0]), float(p[1])
    if probes is None:
        rng = np.random.default_rng(rng_seed)
        r = eps * np.sqrt(rng.random(n_probes)) * (1 - 1e-9)
        phi = rng.uniform(0, TWO_PI, n_probes)
        off = np.rint(r * np.cos(phi) * MODULUS).astype(np.int64)
        mz = (mp + off) % MODULUS
        xz = xp + r * np.sin(phi)
    else:
        mz = np.asarray(probes[0], dtype=np.int64) % MODULUS
        xz = np.asarray(probes[1], dtype=float)
    same = (mz == mp) & (xz == xp)
    if same.any():
        raise ValueError("probes must differ from p")
    out = np.empty(len(mz), dtype=np.int64)
    _separation_kernel(params.d, params.a0, params.alpha, np.int64(mp), xp, mz, xz, eps, N,
                       np.int64(MODULUS), out)
    stubborn = np.flatnonzero(out < 0)
    return SeparationReport(all_separated=len(stubborn) == 0, first_times=out, stubborn=stubborn,
                            eps=eps, N=N)
