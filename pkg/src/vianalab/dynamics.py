"""Viana skew products on the strip S^1 x [-beta, beta].

The map is

    f(theta, x) = (d * theta mod 1, a0 + alpha * sin(2 pi theta) - x**2)

with Jacobian ``[[d, 0], [alpha * b'(theta), -2 x]]``.  The critical set is
the circle ``x = 0`` where the determinant ``-2 d x`` vanishes.

Long orbits keep the angle as an exact residue ``m / MODULUS`` with
``MODULUS`` a safe prime, so ``d * theta mod 1`` is integer arithmetic.
In binary floating point the base map would shift out four bits per step
(d = 16) and every orbit would land on ``theta = 0`` after ~13 iterates.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import InitVar, dataclass, field

import numba
import numpy as np
from scipy.optimize import brentq

from .errors import InvalidParamsError, RegionExitError

__all__ = [
    "MODULUS",
    "PRESETS",
    "MapParams",
    "PhasePoint",
    "Jacobian",
    "PowerDistanceParams",
    "OrbitRecord",
    "RegionReport",
    "PowerDistanceReport",
    "misiurewicz_a0",
    "misiurewicz_residual",
    "step",
    "jacobian",
    "orbit",
    "dist_to_critical",
    "truncated_log_distance",
    "phase_distance",
    "invariant_region_check",
    "power_of_distance_check",
    "theta_to_residue",
    "random_points",
]

# 2 * p + 1 with p prime; for any 2 <= d < 128 the multiplicative order of d
# is p or 2p (~3.6e16), and d * m < 2**63 for every residue m.
MODULUS = 72057594037925687
_MAX_D = 127

TWO_PI = 2.0 * math.pi

PRESETS = {"product": 0.0, "weak": 0.01, "moderate": 0.05}


def misiurewicz_residual(a):
    """``h^2(0) + q`` for ``h(x) = a - x^2`` and positive fixed point ``q``."""
    q = 0.5 * (-1.0 + math.sqrt(1.0 + 4.0 * a))
    return a - a * a + q


def misiurewicz_a0(tol=1e-12):
    """Parameter in (1, 2) for which 0 is pre-periodic under ``a - x^2``.

    The critical orbit is ``0 -> a -> -q -> q`` with ``q`` the positive fixed
    point, i.e. the returned value solves ``a - a^2 + q(a) = 0``.  The
    residual changes sign on [1, 2], so the root is bracketed.

    Parameters
    ----------
    tol : float
        Bound on ``|h^2(0) + q|`` at the returned parameter.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    xtol = tol
    while True:
        a = brentq(misiurewicz_residual, 1.0, 2.0, xtol=xtol, rtol=4 * np.finfo(float).eps)
        if abs(misiurewicz_residual(a)) <= tol or xtol < 1e-300:
            return a
        xtol /= 8.0


_DEFAULT_A0 = misiurewicz_a0(1e-12)


def _default_beta(a0, alpha):
    upper = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * (a0 - alpha)))
    return 0.5 * ((a0 + alpha) + upper)


@dataclass(frozen=True)
class MapParams:
    """Parameters of the skew product.

    ``beta`` defaults to the midpoint of ``(a0 + alpha, r)`` where ``r`` is
    the positive root of ``beta^2 - beta - (a0 - alpha)``; both ends of the
    strip then map strictly inside it.  Pass ``validate=False`` to build
    deliberately broken parameters (used by the region check).
    """

    d: int = 16
    a0: float = _DEFAULT_A0
    alpha: float = 0.0
    beta: float | None = None
    morse: str = "sin"
    validate: InitVar[bool] = True

    def __post_init__(self, validate):
        if self.beta is None:
            object.__setattr__(self, "beta", _default_beta(self.a0, self.alpha))
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "a0", float(self.a0))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))
        if self.morse != "sin":
            raise InvalidParamsError(f"unsupported Morse function {self.morse!r}; only 'sin'")
        if not 2 <= self.d <= _MAX_D:
            raise InvalidParamsError(f"d={self.d} outside [2, {_MAX_D}]")
        if not validate:
            return
        if not 1.0 < self.a0 < 2.0:
            raise InvalidParamsError(f"a0={self.a0} outside (1, 2)")
        if self.alpha < 0:
            raise InvalidParamsError(f"alpha={self.alpha} must be >= 0")
        if not self.a0 + self.alpha < self.beta < self.repeller_distance:
            raise InvalidParamsError(
                f"beta={self.beta} outside (a0 + alpha, |x0|) = "
                f"({self.a0 + self.alpha}, {self.repeller_distance}); strip not forward invariant"
            )
        if self.d < 16:
            warnings.warn(
                f"d={self.d} < 16: outside the d >= 16 regime of the exponent theorems",
                stacklevel=3,
            )

    @classmethod
    def preset(cls, name, **kw):
        """Build from one of the coupling presets ``product``, ``weak``, ``moderate``."""
        return cls(alpha=PRESETS[name], **kw)

    @property
    def repeller_distance(self):
        """``|x0|`` for the repelling fixed point ``x0 < 0`` of ``a0 - x^2``."""
        return 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * self.a0))

    def a(self, theta):
        return self.a0 + self.alpha * np.sin(TWO_PI * np.asarray(theta))

    def db(self, theta):
        """Derivative of the Morse function ``sin(2 pi theta)``."""
        return TWO_PI * np.cos(TWO_PI * np.asarray(theta))


@dataclass(frozen=True)
class PhasePoint:
    theta: float
    x: float

    def __post_init__(self):
        t = float(self.theta)
        t -= math.floor(t)
        if t >= 1.0:
            t = 0.0
        object.__setattr__(self, "theta", t)
        object.__setattr__(self, "x", float(self.x))


@dataclass(frozen=True)
class Jacobian:
    """Lower-triangular derivative ``[[a11, a12], [a21, a22]]`` with ``a12 = 0``."""

    a11: float
    a12: float
    a21: float
    a22: float

    @property
    def det(self):
        return self.a11 * self.a22 - self.a12 * self.a21

    def as_array(self):
        return np.array([[self.a11, self.a12], [self.a21, self.a22]])

    def singular_values(self):
        """(largest, smallest) singular value, closed form."""
        return _singular_values(self.a11, self.a12, self.a21, self.a22)

    @property
    def inverse_norm(self):
        """Operator norm of the inverse, ``1 / s_min`` (inf on the critical set)."""
        smin = self.singular_values()[1]
        return math.inf if smin == 0 else 1.0 / smin


@dataclass(frozen=True)
class PowerDistanceParams:
    """Constants of the power-of-distance bounds.

    The upper norm bound needs ``B >= ||Df|| dist`` which is about ``d beta``
    (roughly 27 at ``d = 16``), hence the default.
    """

    B: float = 32.0
    ell: float = 1.0

    def __post_init__(self):
        if not self.B > 1:
            raise InvalidParamsError("B must exceed 1")
        if not self.ell > 0:
            raise InvalidParamsError("ell must be positive")


@numba.njit(cache=True)
def _singular_values(a11, a12, a21, a22):
    frob = a11 * a11 + a12 * a12 + a21 * a21 + a22 * a22
    det = abs(a11 * a22 - a12 * a21)
    disc = frob * frob - 4.0 * det * det
    if disc < 0.0:
        disc = 0.0
    smax = math.sqrt(0.5 * (frob + math.sqrt(disc)))
    if smax == 0.0:
        return 0.0, 0.0
    return smax, det / smax


def step(params: MapParams, p: PhasePoint) -> PhasePoint:
    """One application of the map in plain floating point."""
    t = params.d * p.theta
    t -= math.floor(t)
    x = params.a0 + params.alpha * math.sin(TWO_PI * p.theta) - p.x * p.x
    if abs(x) > params.beta:
        raise RegionExitError(
            f"image x={x} of {p} leaves I=[-{params.beta}, {params.beta}]: invalid MapParams", step=1
        )
    return PhasePoint(t, x)


def jacobian(params: MapParams, p: PhasePoint) -> Jacobian:
    return Jacobian(
        float(params.d), 0.0, params.alpha * TWO_PI * math.cos(TWO_PI * p.theta), -2.0 * p.x
    )


def theta_to_residue(theta):
    """Nearest residue ``m`` with ``m / MODULUS`` approximating ``theta``."""
    t = float(theta) % 1.0
    return int(round(t * MODULUS)) % MODULUS


def random_points(params, n, rng):
    """Lebesgue-random points on the strip as ``(residues, x)`` arrays."""
    m = rng.integers(1, MODULUS, size=n, dtype=np.int64)
    x = rng.uniform(-params.beta, params.beta, size=n)
    return m, x


@dataclass
class OrbitRecord:
    """Per-step series along ``p_j = f^j(p_0)``, ``j = 0 .. n-1``.

    ``log_inv_norm[j]`` is ``log ||Df(p_j)^{-1}||``, ``log_det[j]`` is
    ``log |det Df(p_j)|`` and ``dist[j] = |x_j|``.  ``theta``/``x`` are
    ``None`` when the orbit was computed with ``keep_points=False``.
    """

    params: MapParams
    log_inv_norm: np.ndarray
    log_det: np.ndarray
    dist: np.ndarray
    theta: np.ndarray | None
    x: np.ndarray | None
    final: PhasePoint
    final_residue: int
    start_residue: int

    @property
    def n(self):
        return len(self.dist)


@numba.njit(cache=True, error_model="numpy")
def _orbit_kernel(d, a0, alpha, beta, m0, x0, n, modulus, keep, th_out, x_out, u_out, ld_out,
                  dist_out):
    m = m0
    x = x0
    inv_q = 1.0 / modulus
    log_d = math.log(d)
    for j in range(n):
        th = m * inv_q
        c = alpha * TWO_PI * math.cos(TWO_PI * th)
        e = -2.0 * x
        if keep:
            th_out[j] = th
            x_out[j] = x
        smax, smin = _singular_values(float(d), 0.0, c, e)
        u_out[j] = -math.log(smin)
        ld_out[j] = log_d + math.log(abs(e))
        dist_out[j] = abs(x)
        xn = a0 + alpha * math.sin(TWO_PI * th) - x * x
        if not abs(xn) <= beta:
            return 1, j + 1, m, xn
        m = (d * m) % modulus
        x = xn
    return 0, n, m, x


def orbit(params: MapParams, p0, n: int, keep_points=True) -> OrbitRecord:
    """Iterate ``n`` steps from ``p0`` and collect derivative summaries.

    ``p0`` is a :class:`PhasePoint` or a ``(residue, x)`` pair; the latter
    skips the float-to-residue rounding of the angle.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if isinstance(p0, PhasePoint):
        m0, x0 = theta_to_residue(p0.theta), p0.x
    else:
        m0, x0 = int(p0[0]) % MODULUS, float(p0[1])
    if abs(x0) > params.beta:
        raise RegionExitError(f"initial x={x0} outside the strip", step=0)
    u = np.empty(n)
    ld = np.empty(n)
    dist = np.empty(n)
    th = np.empty(n if keep_points else 0)
    xs = np.empty(n if keep_points else 0)
    status, idx, m, x = _orbit_kernel(
        params.d, params.a0, params.alpha, params.beta, np.int64(m0), x0, n,
        np.int64(MODULUS), keep_points, th, xs, u, ld, dist,
    )
    if status != 0:
        raise RegionExitError(f"orbit left the strip at step {idx} (x={x})", step=idx)
    return OrbitRecord(
        params=params,
        log_inv_norm=u,
        log_det=ld,
        dist=dist,
        theta=th if keep_points else None,
        x=xs if keep_points else None,
        final=PhasePoint(m / MODULUS, x),
        final_residue=int(m),
        start_residue=int(m0),
    )


def dist_to_critical(p: PhasePoint, delta=None):
    """Distance ``|x|`` to the critical circle, optionally delta-truncated.

    With ``delta`` given the value is 1 whenever ``|x| >= delta``.
    """
    r = abs(p.x)
    if delta is None:
        return r
    if not delta > 0:
        raise ValueError("delta must be positive")
    return 1.0 if r >= delta else r


def truncated_log_distance(dist, delta):
    """Vectorised ``log dist_delta``: 0 where ``dist >= delta``."""
    dist = np.asarray(dist, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(dist >= delta, 0.0, np.log(dist))


def phase_distance(theta1, x1, theta2, x2):
    """Euclidean distance on S^1 x R with the circle metric in theta."""
    dt = np.abs(np.asarray(theta1) - np.asarray(theta2)) % 1.0
    dt = np.minimum(dt, 1.0 - dt)
    return np.hypot(dt, np.asarray(x1) - np.asarray(x2))


@dataclass
class RegionReport:
    margin: float
    worst_theta: float
    worst_x: float

    @property
    def ok(self):
        return self.margin > 0


def invariant_region_check(params: MapParams, n_samples: int, strict=True) -> RegionReport:
    """Smallest gap ``beta - |x'|`` over images of the extremal fibres.

    ``|a(theta) - x^2|`` is extremal at ``x = 0`` (top of the image) and at
    ``|x| = beta`` (bottom), so those three fibres are sampled on a uniform
    theta grid.  With ``strict`` a non-positive margin raises.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    theta = np.arange(n_samples) / n_samples
    xs = np.array([-params.beta, 0.0, params.beta])
    img = params.a(theta)[:, None] - xs[None, :] ** 2
    gap = params.beta - np.abs(img)
    i, j = np.unravel_index(np.argmin(gap), gap.shape)
    rep = RegionReport(float(gap[i, j]), float(theta[i]), float(xs[j]))
    if strict and not rep.ok:
        raise InvalidParamsError(
            f"strip is not forward invariant: margin {rep.margin:.3g} at theta={rep.worst_theta}, "
            f"x={rep.worst_x}"
        )
    return rep


@dataclass
class PowerDistanceReport:
    """Worst constants needed by the three power-of-distance bounds.

    ``B_norm`` covers ``dist^ell / B <= |Df v| / |v| <= B dist^-ell``;
    ``B_inv`` and ``B_det`` the log-Lipschitz bounds for ``||Df^-1||`` and
    ``|det Df^-1|``.  ``B_literal_upper`` is ``max s_max / dist^ell``, the
    constant the upper bound would need with a positive exponent.
    """

    B: float
    ell: float
    n_pairs: int
    B_norm: float
    B_inv: float
    B_det: float
    B_literal_upper: float
    violations: np.ndarray = field(repr=False)

    @property
    def worst(self):
        return max(self.B_norm, self.B_inv, self.B_det)

    @property
    def passed(self):
        return len(self.violations) == 0


def _jacobian_arrays(params, theta, x):
    c = params.alpha * params.db(theta)
    e = -2.0 * np.asarray(x)
    d = float(params.d)
    frob = d * d + c * c + e * e
    det = np.abs(d * e)
    smax = np.sqrt(0.5 * (frob + np.sqrt(np.maximum(frob * frob - 4 * det * det, 0.0))))
    return smax, det / smax, det


def power_of_distance_check(params: MapParams, pd: PowerDistanceParams, n_pairs: int,
                            rng_seed=0) -> PowerDistanceReport:
    """Sample pairs with ``2 dist(p, q) < dist(p, C)`` and measure the constants."""
    rng = np.random.default_rng(rng_seed)
    th_p = rng.random(n_pairs)
    x_p = rng.uniform(-params.beta, params.beta, n_pairs)
    x_p[x_p == 0.0] = params.beta / 2
    dp = np.abs(x_p)
    r = 0.5 * dp * rng.random(n_pairs) * (1 - 1e-12)
    phi = rng.uniform(0, TWO_PI, n_pairs)
    th_q = (th_p + r * np.cos(phi)) % 1.0
    x_q = x_p + r * np.sin(phi)
    dpq = phase_distance(th_p, x_p, th_q, x_q)

    smax_p, smin_p, det_p = _jacobian_arrays(params, th_p, x_p)
    smax_q, smin_q, det_q = _jacobian_arrays(params, th_q, x_q)
    dl = dp ** pd.ell
    b_norm = np.maximum(dl / smin_p, smax_p * dl)
    with np.errstate(divide="ignore", invalid="ignore"):
        b_inv = np.abs(np.log(smin_q) - np.log(smin_p)) * dl / dpq
        b_det = np.abs(np.log(det_q) - np.log(det_p)) * dl / dpq
    b_inv = np.where(dpq > 0, b_inv, 0.0)
    b_det = np.where(dpq > 0, b_det, 0.0)
    worst = np.maximum(b_norm, np.maximum(b_inv, b_det))
    return PowerDistanceReport(
        B=pd.B,
        ell=pd.ell,
        n_pairs=n_pairs,
        B_norm=float(b_norm.max()),
        B_inv=float(b_inv.max()),
        B_det=float(b_det.max()),
        B_literal_upper=float((smax_p / dl).max()),
        violations=np.flatnonzero(worst > pd.B),
    )
