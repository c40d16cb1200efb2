"""Lyapunov exponents of the skew product and the derived constants.

Two estimators are provided.  :func:`lyapunov_qr` pushes an orthonormal
frame through the derivative cocycle and re-orthogonalises every
``reortho`` steps; :func:`lyapunov_split` follows a single vector from the
horizontal cone and recovers the central exponent from the determinant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .dynamics import MODULUS, TWO_PI, MapParams, PhasePoint, random_points, theta_to_residue
from .errors import RegionExitError, UndefinedConstantError

__all__ = [
    "ExponentEstimate",
    "ThermoConstants",
    "Survey",
    "IntegrabilityReport",
    "lyapunov_qr",
    "lyapunov_split",
    "conformal_bound_check",
    "exponent_survey",
    "ensemble_exponents",
    "integrability_estimate",
    "default_eps",
]

REORTHO = 20
# Re-orthogonalise early once the frame's column ratio may exceed this;
# near x = 0 one step alone stretches it by d / |2x|.
COND_LIMIT = 1e6
N_BATCHES = 50


@dataclass
class ExponentEstimate:
    """Finite-time exponents in nats per iterate.

    ``stderr_u``/``stderr_c`` are batch-means standard errors of the two
    Birkhoff averages; ``converged`` is False when either exceeds the
    threshold the estimator was called with.
    """

    lambda_u: float
    lambda_c: float
    log_det_avg: float
    n: int
    stderr_u: float
    stderr_c: float
    converged: bool = True
    cone_escape: bool = False
    method: str = "qr"

    @property
    def stderr(self):
        return max(self.stderr_u, self.stderr_c)


def _start(p0):
    if isinstance(p0, PhasePoint):
        return np.int64(theta_to_residue(p0.theta)), p0.x
    return np.int64(int(p0[0]) % MODULUS), float(p0[1])


@numba.njit(cache=True, inline="always")
def _acc(s, comp, v):
    """Neumaier-compensated ``s + v``; returns the new (sum, compensation)."""
    t = s + v
    if abs(s) >= abs(v):
        comp += (s - t) + v
    else:
        comp += (v - t) + s
    return t, comp


@numba.njit(cache=True, error_model="numpy")
def _qr_kernel(d, a0, alpha, beta, m0, x0, n, modulus, reortho, n_batches, out_u, out_c):
    """Returns (status, step, sum log R11, sum log R22, sum log|det|)."""
    di = np.int64(d)  # residue update must stay in integer arithmetic
    m = m0
    x = x0
    inv_q = 1.0 / modulus
    log_d = math.log(d)
    # frame columns (q11, q21), (q12, q22)
    q11, q21, q12, q22 = 1.0, 0.0, 0.0, 1.0
    s1 = s2 = sdet = 0.0
    k1 = k2 = kdet = 0.0
    bsize = n // n_batches
    b1 = 0.0
    b2 = 0.0
    bi = 0
    cond = 1.0
    since = 0
    for j in range(n):
        th = m * inv_q
        c = alpha * TWO_PI * math.cos(TWO_PI * th)
        e = -2.0 * x
        sdet, kdet = _acc(sdet, kdet, log_d + math.log(abs(e)))
        cond *= (d * d + c * c + e * e) / abs(d * e)
        since += 1
        # [[d, 0], [c, e]] @ frame
        n11 = d * q11
        n21 = c * q11 + e * q21
        n12 = d * q12
        n22 = c * q12 + e * q22
        q11, q21, q12, q22 = n11, n21, n12, n22
        if since >= reortho or cond > COND_LIMIT or j == n - 1:
            cond = 1.0
            since = 0
            r11 = math.sqrt(q11 * q11 + q21 * q21)
            q11 /= r11
            q21 /= r11
            r12 = q11 * q12 + q21 * q22
            q12 -= r12 * q11
            q22 -= r12 * q21
            r22 = math.sqrt(q12 * q12 + q22 * q22)
            q12 /= r22
            q22 /= r22
            l1 = math.log(r11)
            l2 = math.log(r22)
            s1, k1 = _acc(s1, k1, l1)
            s2, k2 = _acc(s2, k2, l2)
            b1 += l1
            b2 += l2
        if bsize > 0 and (j + 1) % bsize == 0 and bi < n_batches:
            out_u[bi] = b1 / bsize
            out_c[bi] = b2 / bsize
            b1 = 0.0
            b2 = 0.0
            bi += 1
        xn = a0 + alpha * math.sin(TWO_PI * th) - x * x
        if not abs(xn) <= beta:
            return 1, j + 1, s1 + k1, s2 + k2, sdet + kdet
        m = (di * m) % modulus
        x = xn
    return 0, n, s1 + k1, s2 + k2, sdet + kdet


@numba.njit(cache=True, error_model="numpy")
def _split_kernel(d, a0, alpha, beta, m0, x0, n, modulus, n_batches, cone_slope, out_u, out_c):
    di = np.int64(d)  # residue update must stay in integer arithmetic
    m = m0
    x = x0
    inv_q = 1.0 / modulus
    log_d = math.log(d)
    v1, v2 = 1.0, 0.0
    s1 = sdet = 0.0
    k1 = kdet = 0.0
    bsize = n // n_batches
    b1 = 0.0
    bd = 0.0
    bi = 0
    escaped = False
    for j in range(n):
        th = m * inv_q
        c = alpha * TWO_PI * math.cos(TWO_PI * th)
        e = -2.0 * x
        ld = log_d + math.log(abs(e))
        sdet, kdet = _acc(sdet, kdet, ld)
        w1 = d * v1
        w2 = c * v1 + e * v2
        r = math.sqrt(w1 * w1 + w2 * w2)
        v1 = w1 / r
        v2 = w2 / r
        if abs(v2) > cone_slope * abs(v1):
            escaped = True
        lr = math.log(r)
        s1, k1 = _acc(s1, k1, lr)
        b1 += lr
        bd += ld
        if bsize > 0 and (j + 1) % bsize == 0 and bi < n_batches:
            out_u[bi] = b1 / bsize
            out_c[bi] = (bd - b1) / bsize
            b1 = 0.0
            bd = 0.0
            bi += 1
        xn = a0 + alpha * math.sin(TWO_PI * th) - x * x
        if not abs(xn) <= beta:
            return 1, j + 1, s1 + k1, sdet + kdet, escaped
        m = (di * m) % modulus
        x = xn
    return 0, n, s1 + k1, sdet + kdet, escaped


def _batch_stderr(batches):
    b = batches[np.isfinite(batches)]
    if len(b) < len(batches):
        return math.inf
    return float(np.std(b, ddof=1) / math.sqrt(len(b)))


def lyapunov_qr(params: MapParams, p0, n: int, reortho=REORTHO, stderr_tol=0.05,
                n_batches=N_BATCHES) -> ExponentEstimate:
    """Both exponents from the QR-orthogonalised derivative cocycle."""
    if n < 1000:
        raise ValueError("n must be >= 1000")
    m0, x0 = _start(p0)
    bu = np.full(n_batches, np.nan)
    bc = np.full(n_batches, np.nan)
    status, idx, s1, s2, sdet = _qr_kernel(
        float(params.d), params.a0, params.alpha, params.beta, m0, x0, n, np.int64(MODULUS),
        reortho, n_batches, bu, bc,
    )
    if status:
        raise RegionExitError(f"orbit left the strip at step {idx}", step=idx)
    l1, l2 = s1 / n, s2 / n
    e1, e2 = _batch_stderr(bu), _batch_stderr(bc)
    if l2 > l1:
        l1, l2, e1, e2 = l2, l1, e2, e1
    return ExponentEstimate(
        lambda_u=l1, lambda_c=l2, log_det_avg=sdet / n, n=n, stderr_u=e1, stderr_c=e2,
        converged=max(e1, e2) <= stderr_tol, method="qr",
    )


def lyapunov_split(params: MapParams, p0, n: int, cone_slope=1.0, stderr_tol=0.05,
                   n_batches=N_BATCHES) -> ExponentEstimate:
    """Unstable exponent from a horizontal-cone vector; central from the determinant.

    ``cone_escape`` is set when the iterated vector leaves the cone
    ``|v_x| <= cone_slope |v_theta|``, i.e. the coupling is too strong for the
    dominated splitting to be visible at this resolution.
    """
    if n < 1000:
        raise ValueError("n must be >= 1000")
    m0, x0 = _start(p0)
    bu = np.full(n_batches, np.nan)
    bc = np.full(n_batches, np.nan)
    status, idx, s1, sdet, escaped = _split_kernel(
        float(params.d), params.a0, params.alpha, params.beta, m0, x0, n, np.int64(MODULUS),
        n_batches, cone_slope, bu, bc,
    )
    if status:
        raise RegionExitError(f"orbit left the strip at step {idx}", step=idx)
    lu = s1 / n
    ldet = sdet / n
    e1, e2 = _batch_stderr(bu), _batch_stderr(bc)
    return ExponentEstimate(
        lambda_u=lu, lambda_c=ldet - lu, log_det_avg=ldet, n=n, stderr_u=e1, stderr_c=e2,
        converged=max(e1, e2) <= stderr_tol, cone_escape=bool(escaped), method="split",
    )


@numba.njit(cache=True, error_model="numpy")
def _ensemble_kernel(d, a0, alpha, beta, ms, xs, n, modulus, reortho, lu, lc, status):
    dummy = np.empty(1)
    for i in range(len(ms)):
        st, idx, s1, s2, sdet = _qr_kernel(d, a0, alpha, beta, ms[i], xs[i], n, modulus,
                                           reortho, 1, dummy, dummy)
        status[i] = st
        a = s1 / n
        b = s2 / n
        if b > a:
            a, b = b, a
        lu[i] = a
        lc[i] = b


def ensemble_exponents(params: MapParams, residues, xs, n: int, reortho=REORTHO):
    """Finite-time ``(lambda_u, lambda_c)`` arrays for many starting points."""
    ms = np.asarray(residues, dtype=np.int64)
    xs = np.asarray(xs, dtype=float)
    lu = np.empty(len(ms))
    lc = np.empty(len(ms))
    status = np.zeros(len(ms), dtype=np.int64)
    _ensemble_kernel(float(params.d), params.a0, params.alpha, params.beta, ms, xs, n,
                     np.int64(MODULUS), reortho, lu, lc, status)
    if status.any():
        raise RegionExitError(f"{int(status.sum())} ensemble orbits left the strip")
    return lu, lc


@dataclass
class ThermoConstants:
    """Constants built from an exponent floor ``c0`` and a tolerance ``eps``.

    ``zeta = c0 - L`` where ``L`` is ``log((d+eps)/(d-eps))`` for
    ``form="ratio"`` and ``log(d+eps)/log(d-eps)`` for ``form="literal"``.
    The literal quotient tends to 1 as ``eps -> 0``, so it needs ``c0 > 1``
    for ``zeta`` to be positive; the ratio tends to 0.
    """

    c0: float
    eps: float
    d: int
    form: str = "ratio"

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not self.eps < self.d:
            raise ValueError("eps must be smaller than d")
        if self.form not in ("ratio", "literal"):
            raise ValueError(f"unknown zeta form {self.form!r}")

    @property
    def distortion(self):
        if self.form == "ratio":
            return math.log((self.d + self.eps) / (self.d - self.eps))
        return math.log(self.d + self.eps) / math.log(self.d - self.eps)

    @property
    def zeta(self):
        return self.c0 - self.distortion

    def require_positive_zeta(self):
        z = self.zeta
        if not z > 0:
            raise UndefinedConstantError(
                f"zeta = c0 - {self.distortion:.6g} = {z:.6g} <= 0 (form={self.form!r}, "
                f"c0={self.c0:.6g}); sigma, the K threshold and the potential bound are undefined"
            )
        return z

    @property
    def sigma(self):
        return math.exp(-self.require_positive_zeta() / 12.0)

    @property
    def kappa0(self):
        return 0.25 * math.log(self.d)

    @property
    def k_threshold(self):
        """Central-exponent threshold ``zeta / 4`` defining the set K."""
        return self.require_positive_zeta() / 4.0

    @classmethod
    def from_survey(cls, survey, d, eps=None, form="ratio"):
        if eps is None:
            eps = survey.suggested_eps
        return cls(c0=survey.c0, eps=eps, d=d, form=form)

    def as_dict(self):
        out = {"c0": self.c0, "eps": self.eps, "d": self.d, "form": self.form,
               "zeta": self.zeta, "kappa0": self.kappa0}
        out["sigma"] = self.sigma if self.zeta > 0 else None
        return out


def conformal_bound_check(est: ExponentEstimate, tc: ThermoConstants, d=None) -> bool:
    """``log(d - eps) <= lambda_u <= log(d + eps)``."""
    d = tc.d if d is None else d
    return math.log(d - tc.eps) <= est.lambda_u <= math.log(d + tc.eps)


def default_eps(lambda_u, d, floor=0.01):
    """Twice the worst observed deviation of ``lambda_u`` from ``log d``."""
    dev = float(np.max(np.abs(np.asarray(lambda_u) - math.log(d))))
    return max(2.0 * dev, floor)


@dataclass
class Survey:
    lambda_u: np.ndarray = field(repr=False)
    lambda_c: np.ndarray = field(repr=False)
    n_iter: int
    d: int

    @property
    def c0(self):
        """1st percentile of the finite-time central exponents."""
        return float(np.percentile(self.lambda_c, 1.0))

    @property
    def fraction_positive(self):
        return float(np.mean(self.lambda_c > 0))

    @property
    def suggested_eps(self):
        return default_eps(self.lambda_u, self.d)

    def summary(self):
        q = np.percentile(self.lambda_c, [1, 5, 25, 50, 75, 95, 99])
        return {
            "n_points": int(len(self.lambda_c)),
            "n_iter": int(self.n_iter),
            "c0": self.c0,
            "fraction_positive": self.fraction_positive,
            "lambda_c_mean": float(self.lambda_c.mean()),
            "lambda_c_quantiles": dict(zip(["1", "5", "25", "50", "75", "95", "99"],
                                           map(float, q))),
            "lambda_u_mean": float(self.lambda_u.mean()),
            "lambda_u_max_dev": float(np.max(np.abs(self.lambda_u - math.log(self.d)))),
            "suggested_eps": self.suggested_eps,
        }


def exponent_survey(params: MapParams, n_points: int, n_iter: int, rng_seed=0) -> Survey:
    """Finite-time exponents at Lebesgue-random points of the strip."""
    rng = np.random.default_rng(rng_seed)
    m, x = random_points(params, n_points, rng)
    lu, lc = ensemble_exponents(params, m, x, n_iter)
    return Survey(lambda_u=lu, lambda_c=lc, n_iter=n_iter, d=params.d)


@dataclass
class IntegrabilityReport:
    """Birkhoff average of ``|log dist(., C)|`` and the central comparability.

    ``ratio[j] = dist(p_j, C) / ||Df(p_j) v_j||`` where ``v_j`` is the most
    contracted direction of ``Df^w`` at ``p_j``; comparability asks
    ``1/3 <= ratio <= 3``.
    """

    mean_abs_log_dist: float
    running: np.ndarray = field(repr=False)
    checkpoints: np.ndarray = field(repr=False)
    hits_critical: np.ndarray = field(repr=False)
    ratio: np.ndarray = field(repr=False)
    violations: np.ndarray = field(repr=False)
    window: int = 50
    factor: float = 3.0

    @property
    def finite(self):
        return bool(np.isfinite(self.mean_abs_log_dist))

    @property
    def comparable(self):
        return len(self.violations) == 0

    @property
    def worst_factor(self):
        r = self.ratio[np.isfinite(self.ratio) & (self.ratio > 0)]
        if len(r) == 0:
            return math.nan
        return float(max(r.max(), 1.0 / r.min()))


def _central_directions(params, theta, x, w):
    """Most contracted direction of ``Df^w`` at every ``p_j`` with ``j + w <= n``.

    Backward iteration of a generic vector through the inverse derivatives
    converges to the top singular direction of ``(Df^w)^{-1}``, which is the
    bottom singular direction of ``Df^w``; this avoids forming the badly
    conditioned product.
    """
    n = len(x) - w + 1
    d = float(params.d)
    v1 = np.full(n, math.sqrt(0.5))
    v2 = np.full(n, math.sqrt(0.5))
    with np.errstate(divide="ignore", invalid="ignore"):
        for s in range(w - 1, -1, -1):
            th = theta[s:s + n]
            e = -2.0 * x[s:s + n]
            c = params.alpha * params.db(th)
            # inverse of [[d, 0], [c, e]]
            w1 = v1 / d
            w2 = -c * v1 / (d * e) + v2 / e
            r = np.hypot(w1, w2)
            v1 = w1 / r
            v2 = w2 / r
    return v1, v2


def integrability_estimate(record, window=50, factor=3.0, n_checkpoints=20):
    if record.theta is None:
        raise ValueError("orbit record must keep points")
    if record.n < window:
        raise ValueError("orbit shorter than the window")
    with np.errstate(divide="ignore"):
        terms = np.abs(np.log(record.dist))
    hits = np.flatnonzero(record.dist == 0)
    csum = np.cumsum(terms)
    checkpoints = np.unique(np.geomspace(min(100, record.n), record.n, n_checkpoints).astype(int))
    running = csum[checkpoints - 1] / checkpoints
    v1, v2 = _central_directions(record.params, record.theta, record.x, window)
    k = len(v1)
    th = record.theta[:k]
    c = record.params.alpha * record.params.db(th)
    e = -2.0 * record.x[:k]
    norm = np.hypot(record.params.d * v1, c * v1 + e * v2)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = record.dist[:k] / norm
    bad = ~((ratio >= 1.0 / factor) & (ratio <= factor))
    bad &= record.dist[:k] > 0
    return IntegrabilityReport(
        mean_abs_log_dist=float(csum[-1] / record.n),
        running=running,
        checkpoints=checkpoints,
        hits_critical=hits,
        ratio=ratio,
        violations=np.flatnonzero(bad),
        window=window,
        factor=factor,
    )
