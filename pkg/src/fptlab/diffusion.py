"""
Deterministic mathematics for one-dimensional diffusions and curved boundaries.

Contains the diffusion model types, the unit-diffusion (Lamperti) state
transform, and every closed-form density and probability used by the
samplers and estimators: the Gaussian kernel, linear-boundary formulas,
Kendall's identity, the Daniels boundary family, meander endpoint and
transition densities, and the drift growth diagnostic.

All operations are pure and reentrant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.special import erfc

__all__ = [
    "DiffusionModel",
    "TransformedModel",
    "Boundary",
    "GrowthDiagnostic",
    "norm_cdf",
    "norm_sf",
    "lamperti_transform",
    "brownian_model",
    "ou_model",
    "bm_transition_density",
    "linear_noncross_prob",
    "linear_survival",
    "linear_fpt_density",
    "linear_fpt_cdf",
    "linear_boundary_closed_forms",
    "kendall_fpt_density",
    "make_boundary",
    "linear_boundary",
    "daniels_boundary",
    "daniels_fpt_density",
    "daniels_f",
    "piecewise_poly_boundary",
    "meander_endpoint_density",
    "meander_laplace",
    "meander_transition_density",
    "check_growth_condition",
]

_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def norm_cdf(x):
    """Standard normal CDF via erfc (accurate in both tails)."""
    return 0.5 * erfc(-np.asarray(x, dtype=float) / _SQRT2)


def norm_sf(x):
    """Standard normal tail probability 1 - Phi(x), computed directly."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / _SQRT2)


# ---------------------------------------------------------------------------
# model types


@dataclass(frozen=True)
class DiffusionModel:
    """A scalar diffusion dU = nu(U) ds + sigma(U) dW on an open interval.

    sigma must be positive and continuously differentiable on the interval.
    """

    nu: Callable
    sigma: Callable
    sigma_prime: Callable
    interval: tuple = (-np.inf, np.inf)

    def __post_init__(self):
        lo, hi = self.interval
        if not lo < hi:
            raise ValueError("diffusion interval must be nonempty")


@dataclass(frozen=True)
class TransformedModel:
    """Unit-diffusion form dX = mu(X) ds + dW with drift antiderivative G.

    F maps original to transformed coordinates (F(y0) = 0, strictly
    increasing); F_inv is its inverse. mu_is_zero marks a drift that is
    identically zero (set by the Brownian preset), which lets downstream
    estimators skip terms that vanish exactly.
    """

    mu: Callable
    mu_prime: Callable
    G: Callable
    F: Callable
    F_inv: Callable
    y0: float
    mu_is_zero: bool = False


@dataclass(frozen=True)
class Boundary:
    """Twice-differentiable upper boundary on [0, T].

    K_plus and K_minus are one-sided Lipschitz constants:
    -K_minus*h <= g(t+h) - g(t) <= K_plus*h.
    """

    g: Callable
    g_prime: Callable
    g_second: Callable
    T: float
    K_plus: float
    K_minus: float


@dataclass(frozen=True)
class GrowthDiagnostic:
    """Sampled values of mu' + mu^2 and the negative-tail quadratic ratio.

    A pass is necessary evidence for the drift growth requirement, not a
    proof; see check_growth_condition.
    """

    grid: np.ndarray
    values: np.ndarray
    limsup_ratio: float
    threshold: float

    @property
    def passes(self) -> bool:
        return self.limsup_ratio < self.threshold


# ---------------------------------------------------------------------------
# state transform


def _invert_monotone(fn, deriv_inv, target, start, lo, hi):
    # Bisection+Newton hybrid for a strictly increasing fn. deriv_inv(y)
    # returns 1/fn'(y); for the state transform that is sigma(y).
    y = float(start)
    fy = fn(y)
    # establish a bracket, expanding geometrically toward the needed side
    if fy < target:
        ya, fa = y, fy
        yb = y
        step = 1.0
        for _ in range(200):
            yb = min(yb + step, hi - (hi - yb) / 2) if np.isfinite(hi) else yb + step
            fb = fn(yb)
            if fb >= target:
                break
            step *= 2.0
        else:
            raise ValueError("could not bracket the transform inverse")
    else:
        yb, fb = y, fy
        ya = y
        step = 1.0
        for _ in range(200):
            ya = max(ya - step, lo + (ya - lo) / 2) if np.isfinite(lo) else ya - step
            fa = fn(ya)
            if fa <= target:
                break
            step *= 2.0
        else:
            raise ValueError("could not bracket the transform inverse")
    y = 0.5 * (ya + yb)
    for _ in range(100):
        fy = fn(y)
        if fy < target:
            ya = y
        else:
            yb = y
        if abs(fy - target) < 1e-12:
            return y
        y_newton = y - (fy - target) * deriv_inv(y)
        if ya < y_newton < yb:
            y = y_newton
        else:
            y = 0.5 * (ya + yb)
        if yb - ya < 1e-14 * max(1.0, abs(ya), abs(yb)):
            return y
    return y


def lamperti_transform(model: DiffusionModel, y0: float) -> TransformedModel:
    """Transform a diffusion to unit diffusion coefficient.

    F(y) = int_{y0}^{y} du/sigma(u) (adaptive quadrature, abs tol 1e-10),
    mu(F(y)) = nu(y)/sigma(y) - sigma'(y)/2, and G is the antiderivative
    of mu from F(y0) = 0.

    Raises ValueError if y0 lies outside the diffusion interval or a
    non-positive sigma is detected at a quadrature node.
    """
    lo, hi = model.interval
    if not (lo < y0 < hi):
        raise ValueError("y0 must lie inside the diffusion interval")
    if not np.all(np.asarray(model.sigma(y0)) > 0):
        raise ValueError("sigma must be positive on the diffusion interval")

    def inv_sigma(u):
        s = model.sigma(u)
        if not np.all(np.asarray(s) > 0):
            raise ValueError("sigma must be positive on the diffusion interval")
        return 1.0 / s

    def F_scalar(y):
        y = float(y)
        if not (lo < y < hi):
            raise ValueError("argument outside the diffusion interval")
        val, _ = quad(inv_sigma, y0, y, epsabs=1e-10, limit=200)
        return val

    def F_inv_scalar(v):
        return _invert_monotone(F_scalar, model.sigma, float(v), y0, lo, hi)

    def mu_scalar(v):
        y = F_inv_scalar(v)
        return model.nu(y) / model.sigma(y) - 0.5 * model.sigma_prime(y)

    def mu_prime_scalar(v):
        h = 1e-6 * max(1.0, abs(v))
        return (mu_scalar(v + h) - mu_scalar(v - h)) / (2 * h)

    def G_scalar(v):
        val, _ = quad(mu_scalar, 0.0, float(v), epsabs=1e-10, limit=200)
        return val

    return TransformedModel(
        mu=np.vectorize(mu_scalar, otypes=[float]),
        mu_prime=np.vectorize(mu_prime_scalar, otypes=[float]),
        G=np.vectorize(G_scalar, otypes=[float]),
        F=np.vectorize(F_scalar, otypes=[float]),
        F_inv=np.vectorize(F_inv_scalar, otypes=[float]),
        y0=float(y0),
    )


def brownian_model() -> TransformedModel:
    """Standard Brownian motion in transformed coordinates (mu identically 0)."""
    zero = lambda y: np.zeros_like(np.asarray(y, dtype=float))
    ident = lambda y: np.asarray(y, dtype=float)
    return TransformedModel(mu=zero, mu_prime=zero, G=zero, F=ident,
                            F_inv=ident, y0=0.0, mu_is_zero=True)


def ou_model(theta: float) -> TransformedModel:
    """Ornstein-Uhlenbeck drift mu(y) = -theta*y with G(y) = -theta*y^2/2."""
    th = float(theta)
    return TransformedModel(
        mu=lambda y: -th * np.asarray(y, dtype=float),
        mu_prime=lambda y: np.full_like(np.asarray(y, dtype=float), -th),
        G=lambda y: -0.5 * th * np.asarray(y, dtype=float) ** 2,
        F=lambda y: np.asarray(y, dtype=float),
        F_inv=lambda y: np.asarray(y, dtype=float),
        y0=0.0,
    )


# ---------------------------------------------------------------------------
# closed-form densities and probabilities


def bm_transition_density(t, x, z):
    """Gaussian transition kernel q(t, x, z) = (2*pi*t)^{-1/2} e^{-(z-x)^2/(2t)}."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    out = np.exp(-((z - x) ** 2) / (2.0 * t)) / np.sqrt(2.0 * np.pi * t)
    return out if out.ndim else float(out)


def linear_noncross_prob(x: float, g0: float, gt: float, t: float, z: float) -> float:
    """Brownian bridge non-crossing probability for a linear boundary.

    Pr_x(sup_{s<=t}(W_s - g(s)) < 0 | W_t = z) = 1 - exp{-(2/t)(g0-x)(gt-z)}
    for a linear g with g(0) = g0 > x, g(t) = gt >= z. Vanishes linearly
    with slope 2(g0-x)/t as z approaches gt.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    if g0 <= x:
        raise ValueError("start point must be strictly below the boundary")
    if z > gt:
        raise ValueError("endpoint already exceeds the boundary")
    return -math.expm1(-(2.0 / t) * (g0 - x) * (gt - z))


def linear_survival(a: float, b: float, horizon: float = 1.0) -> float:
    """Probability the Brownian path stays below a + b*s up to the horizon.

    The unit-horizon form is Phi(a+b) - e^{-2ab} Phi(b-a); other horizons
    use Brownian scaling, (a, b) -> (a/sqrt(T), b*sqrt(T)). Requires a > 0.
    """
    if a <= 0:
        raise ValueError("a must be positive (start below the boundary)")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if horizon != 1.0:
        rt = math.sqrt(horizon)
        a, b = a / rt, b * rt
    return float(norm_cdf(a + b) - math.exp(-2.0 * a * b) * norm_cdf(b - a))


def linear_fpt_density(a: float, b: float, t) -> float:
    """First-passage density of a + b*s: a/(sqrt(2*pi) t^{3/2}) e^{-(a+bt)^2/(2t)}."""
    if a <= 0:
        raise ValueError("a must be positive")
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    out = a / (_SQRT_2PI * t**1.5) * np.exp(-((a + b * t) ** 2) / (2.0 * t))
    return out if out.ndim else float(out)


def linear_fpt_cdf(a: float, b: float, t) -> float:
    """P(tau <= t) for the boundary a + b*s: Phi(-(a+bt)/rt) + e^{-2ab} Phi((bt-a)/rt)."""
    if a <= 0:
        raise ValueError("a must be positive")
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    rt = np.sqrt(t)
    out = norm_cdf(-(a + b * t) / rt) + np.exp(-2.0 * a * b) * norm_cdf((b * t - a) / rt)
    return out if np.ndim(out) else float(out)


def linear_boundary_closed_forms(a: float, b: float, t: float):
    """Survival at horizon 1 and the first-passage density at t, for a + b*s.

    Returns (survival, fpt_density). The survival value is the unit-horizon
    form; rescale other horizons with linear_survival(a, b, horizon=T).
    """
    return linear_survival(a, b), linear_fpt_density(a, b, t)


def kendall_fpt_density(y: float, x: float, t: float,
                        transition_density=bm_transition_density) -> float:
    """Constant-boundary first-passage density ((y - x)/t) * p(t, x, y)."""
    if x >= y:
        raise ValueError("start point must be strictly below the level")
    if t <= 0:
        raise ValueError("t must be positive")
    return (y - x) / t * transition_density(t, x, y)


# ---------------------------------------------------------------------------
# boundaries


def _fd_first(g, t):
    h = 1e-5 * max(1.0, abs(t))
    return (g(t - 2 * h) - 8 * g(t - h) + 8 * g(t + h) - g(t + 2 * h)) / (12 * h)


def _fd_second(g, t):
    h = 1e-5 * max(1.0, abs(t))
    return (-g(t - 2 * h) + 16 * g(t - h) - 30 * g(t) + 16 * g(t + h)
            - g(t + 2 * h)) / (12 * h * h)


def make_boundary(g, T: float, g_prime=None, g_second=None,
                  K_plus=None, K_minus=None, n_probe: int = 257) -> Boundary:
    """Build a Boundary, filling missing derivatives by 5-point differences.

    The fallback stencil uses step 1e-5 * max(1, |t|) and evaluates g in a
    small neighbourhood of [0, T], so g must extend smoothly slightly past
    the endpoints. Lipschitz envelopes default to the extrema of g' probed
    on an n_probe grid.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    gp = g_prime if g_prime is not None else (lambda t: _fd_first(g, t))
    gpp = g_second if g_second is not None else (lambda t: _fd_second(g, t))
    if K_plus is None or K_minus is None:
        ts = np.linspace(0.0, T, n_probe)
        slopes = np.array([gp(t) for t in ts], dtype=float)
        if K_plus is None:
            K_plus = float(max(0.0, slopes.max()))
        if K_minus is None:
            K_minus = float(max(0.0, -slopes.min()))
    return Boundary(g=g, g_prime=gp, g_second=gpp, T=float(T),
                    K_plus=float(K_plus), K_minus=float(K_minus))


def linear_boundary(a: float, b: float, T: float = 1.0) -> Boundary:
    """Boundary g(s) = a + b*s with exact derivatives."""
    a, b = float(a), float(b)
    return Boundary(
        g=lambda s: a + b * np.asarray(s, dtype=float),
        g_prime=lambda s: np.full_like(np.asarray(s, dtype=float), b),
        g_second=lambda s: np.zeros_like(np.asarray(s, dtype=float)),
        T=float(T), K_plus=max(0.0, b), K_minus=max(0.0, -b))


def _daniels_parts(delta, k1, k2, s):
    # A(s) = k1/2 + sqrt(k1^2/4 + k2*exp(-4 delta^2 / s)) and derivatives.
    # k1^2 + 4 k2 > 0 keeps the radicand positive for all s > 0.
    with np.errstate(divide="ignore", over="ignore", under="ignore"):
        si = np.where(s > 0, s, np.inf)
        E = np.exp(-4.0 * delta * delta / si)
        Ep = E * (4.0 * delta * delta / si**2)
        Epp = E * (16.0 * delta**4 / si**4 - 8.0 * delta * delta / si**3)
    R = np.sqrt(k1 * k1 / 4.0 + k2 * E)
    Rp = k2 * Ep / (2.0 * R)
    Rpp = k2 * (Epp * R - Ep * Rp) / (2.0 * R * R)
    A = k1 / 2.0 + R
    return A, Rp, Rpp


def daniels_boundary(delta: float, k1: float, k2: float, T: float = 1.0) -> Boundary:
    """The two-parameter image-method boundary family with closed derivatives.

    g(s) = delta - (s/(2*delta)) * log(k1/2 + sqrt(k1^2/4 + k2 e^{-4 delta^2/s})),
    with the removable limit g(0) = delta taken explicitly for s < 1e-8.
    Requires delta != 0, k1 > 0 and k1^2 + 4*k2 > 0.
    """
    if delta == 0:
        raise ValueError("delta must be nonzero")
    if k1 <= 0:
        raise ValueError("k1 must be positive")
    if k1 * k1 + 4.0 * k2 <= 0:
        raise ValueError("k1^2 + 4*k2 must be positive")
    d = float(delta)
    lim_slope = -math.log(k1) / (2.0 * d)

    def g(s):
        s = np.asarray(s, dtype=float)
        A, _, _ = _daniels_parts(d, k1, k2, np.where(s < 1e-8, 1.0, s))
        out = np.where(s < 1e-8, d, d - (s / (2.0 * d)) * np.log(A))
        return out if out.ndim else float(out)

    def g_prime(s):
        s = np.asarray(s, dtype=float)
        ss = np.where(s < 1e-8, 1.0, s)
        A, Ap, _ = _daniels_parts(d, k1, k2, ss)
        val = -np.log(A) / (2.0 * d) - (ss / (2.0 * d)) * Ap / A
        out = np.where(s < 1e-8, lim_slope, val)
        return out if out.ndim else float(out)

    def g_second(s):
        s = np.asarray(s, dtype=float)
        ss = np.where(s < 1e-8, 1.0, s)
        A, Ap, App = _daniels_parts(d, k1, k2, ss)
        r = Ap / A
        val = -r / d - (ss / (2.0 * d)) * (App / A - r * r)
        out = np.where(s < 1e-8, 0.0, val)
        return out if out.ndim else float(out)

    ts = np.linspace(0.0, T, 257)
    slopes = g_prime(ts)
    return Boundary(g=g, g_prime=g_prime, g_second=g_second, T=float(T),
                    K_plus=float(max(0.0, slopes.max())),
                    K_minus=float(max(0.0, -slopes.min())))


def daniels_fpt_density(delta: float, k1: float, k2: float, t):
    """Closed-form first-passage density for the Daniels boundary.

    p_tau(t) = (2*pi)^{-1/2} t^{-3/2} (delta*k1*e^{-(g(t)-2 delta)^2/(2t)}
               + 2*delta*k2*e^{-(g(t)-4 delta)^2/(2t)}).
    """
    b = daniels_boundary(delta, k1, k2)
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    gt = b.g(t)
    out = (delta * k1 * np.exp(-((gt - 2 * delta) ** 2) / (2 * t))
           + 2 * delta * k2 * np.exp(-((gt - 4 * delta) ** 2) / (2 * t)))
    out = out / (_SQRT_2PI * t**1.5)
    return out if out.ndim else float(out)


def daniels_f(delta: float, k1: float, k2: float, t, x: float):
    """Asymptotic non-crossing coefficient f(t, x) for the Daniels boundary.

    f(t,x) = (2/t)(delta*k1*e^{-(2d-x)(2d+x-2g(t))/(2t)}
             + 2*delta*k2*e^{-(4d-x)(4d+x-2g(t))/(2t)}).
    Both exponents carry the 1/(2t) factor, which makes
    p_tau(t) = f(t,0)/2 * q(t,0,g(t)) an exact identity for every t.
    """
    b = daniels_boundary(delta, k1, k2)
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    gt = b.g(t)
    d = delta
    out = (2.0 / t) * (
        d * k1 * np.exp(-(2 * d - x) * (2 * d + x - 2 * gt) / (2 * t))
        + 2 * d * k2 * np.exp(-(4 * d - x) * (4 * d + x - 2 * gt) / (2 * t)))
    return out if out.ndim else float(out)


def piecewise_poly_boundary(pieces: Sequence[dict], T: float) -> Boundary:
    """Boundary from a coefficient table of contiguous polynomial pieces.

    Each piece is {"t0": ..., "t1": ..., "coef": [c0, c1, ...]} evaluated as
    sum_k c_k (t - t0)^k on [t0, t1]. Pieces must be sorted and contiguous
    and cover [0, T]. Smoothness across knots is the caller's responsibility.
    """
    if not pieces:
        raise ValueError("need at least one piece")
    ordered = sorted(pieces, key=lambda p: p["t0"])
    if abs(ordered[0]["t0"]) > 1e-12 or ordered[-1]["t1"] < T - 1e-12:
        raise ValueError("pieces must cover [0, T]")
    for left, right in zip(ordered, ordered[1:]):
        if abs(left["t1"] - right["t0"]) > 1e-12:
            raise ValueError("pieces must be contiguous")
    starts = [p["t0"] for p in ordered]
    coefs = [np.asarray(p["coef"], dtype=float) for p in ordered]

    def _eval(t, order):
        t = float(t)
        i = max(0, min(len(ordered) - 1,
                       int(np.searchsorted(starts, t, side="right")) - 1))
        c = coefs[i]
        for _ in range(order):
            c = c[1:] * np.arange(1, len(c))
        u = t - starts[i]
        out = 0.0
        for ck in c[::-1]:
            out = out * u + ck
        return out

    g = np.vectorize(lambda t: _eval(t, 0), otypes=[float])
    gp = np.vectorize(lambda t: _eval(t, 1), otypes=[float])
    gpp = np.vectorize(lambda t: _eval(t, 2), otypes=[float])
    ts = np.linspace(0.0, T, 257)
    slopes = gp(ts)
    return Boundary(g=lambda t: g(t) if np.ndim(t) else float(g(t)),
                    g_prime=lambda t: gp(t) if np.ndim(t) else float(gp(t)),
                    g_second=lambda t: gpp(t) if np.ndim(t) else float(gpp(t)),
                    T=float(T), K_plus=float(max(0.0, slopes.max())),
                    K_minus=float(max(0.0, -slopes.min())))


# ---------------------------------------------------------------------------
# meander laws


def meander_endpoint_density(y):
    """Endpoint density of the unit-time meander: y * e^{-y^2/2} for y > 0."""
    y = np.asarray(y, dtype=float)
    out = np.where(y > 0, y * np.exp(-(y * y) / 2.0), 0.0)
    return out if out.ndim else float(out)


def meander_laplace(lam: float) -> float:
    """E[e^{lam * M_1}] for the unit-time meander endpoint M_1.

    Equals 1 + sqrt(2*pi) * lam * e^{lam^2/2} * (1 - Phi(-lam)).
    """
    lam = float(lam)
    return 1.0 + _SQRT_2PI * lam * math.exp(lam * lam / 2.0) * float(norm_sf(-lam))


def meander_transition_density(a: float, s: float, y: float, t: float,
                               z: float) -> float:
    """Transition density of the positive bridge to level a at time 1.

    This is the Brownian motion pinned at a at time 1 and conditioned to
    stay positive on (0, 1); equivalently the Brownian meander conditioned
    on its endpoint. From the origin,

        p(0,0,t,z) = (z/(t a)) (1 - e^{-2za/(1-t)}) * k(t, z),

    and between interior times,

        p(s,y,t,z) = (1 - e^{-2zy/(t-s)})(1 - e^{-2za/(1-t)})
                     / (1 - e^{-2ay/(1-s)}) * k(s,y,t,z),

    where k is the Gaussian law of the pinned Brownian motion (mean
    interpolating toward a, variance (t-s)(1-t)/(1-s)).
    """
    if a <= 0:
        raise ValueError("a must be positive")
    if z <= 0:
        raise ValueError("z must be positive")
    if s == 0:
        if y != 0:
            raise ValueError("y must be 0 when s = 0")
        if not 0 < t < 1:
            raise ValueError("need 0 < t < 1")
        var = t * (1.0 - t)
        kernel = math.exp(-((z - a * t) ** 2) / (2 * var)) / math.sqrt(2 * math.pi * var)
        return (z / (t * a)) * (-math.expm1(-2.0 * z * a / (1.0 - t))) * kernel
    if not 0 < s < t < 1:
        raise ValueError("need 0 < s < t < 1")
    if y <= 0:
        raise ValueError("y must be positive for interior times")
    var = (t - s) * (1.0 - t) / (1.0 - s)
    mean = y + (a - y) * (t - s) / (1.0 - s)
    kernel = math.exp(-((z - mean) ** 2) / (2 * var)) / math.sqrt(2 * math.pi * var)
    ratio = (-math.expm1(-2.0 * z * y / (t - s))) * \
        (-math.expm1(-2.0 * z * a / (1.0 - t))) / (-math.expm1(-2.0 * a * y / (1.0 - s)))
    return ratio * kernel


# ---------------------------------------------------------------------------
# drift growth diagnostic


def check_growth_condition(tm: TransformedModel, t: float, y_range: tuple,
                           n: int, threshold: Optional[float] = None) -> GrowthDiagnostic:
    """Sample mu' + mu^2 and report the negative-tail quadratic-growth ratio.

    The ratio max(-(mu'+mu^2)(y)/y^2) is taken over the most negative tenth
    of the grid and compared against the threshold (4/t^2 by default; pass
    threshold=1.0 for the boundary-sensitivity context). A pass is
    heuristic evidence only.
    """
    if n < 2:
        raise ValueError("need at least two grid points")
    lo, hi = y_range
    grid = np.linspace(lo, hi, n)
    values = np.asarray(tm.mu_prime(grid), dtype=float) + \
        np.asarray(tm.mu(grid), dtype=float) ** 2
    tail = max(2, n // 10)
    gy = grid[:tail]
    gv = values[:tail]
    mask = gy < 0
    if not mask.any():
        ratio = 0.0
    else:
        ratio = float(np.max(-gv[mask] / gy[mask] ** 2))
    thr = float(threshold) if threshold is not None else 4.0 / (t * t)
    return GrowthDiagnostic(grid=grid, values=values, limsup_ratio=ratio,
                            threshold=thr)
