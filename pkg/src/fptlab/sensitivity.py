"""Directional sensitivity of boundary non-crossing probabilities.

For a unit diffusion dX = mu(X) ds + dW started below a twice-differentiable
upper boundary g on [0, 1], the derivative of the non-crossing probability
P(g + eps*h) in eps at 0 is an integral of h against the first-passage law
near the horizon, weighted by an expectation over Brownian meander paths:

    d/d_eps P = sqrt(2/pi) * Int_0^1 h(1-t)/sqrt(t) * E[w_t] Pr(1 - tau in dt),

    w_t = exp{ G(-sqrt(t) M_1 + g(1)) - G(g(1-t)) + sqrt(t) M_1 g'(1)
               - (t/2) Int_0^1 (mu' + mu^2)(-sqrt(t) M_u + g(1-t+tu)) du
               - t^{3/2} Int_0^1 g''(1-t+tu) M_u du
               - (t/2) Int_0^1 g'(1-t+tu)^2 du },

where M is the unit-time Brownian meander and G the drift antiderivative.
gateaux_derivative evaluates this with a common set of meander paths across
all t (per-sample integrals first, averaging last, so the reported stderr
reflects the meander noise of the final value). For Brownian motion with a
linear boundary the derivative also has a closed form and an equivalent
one-dimensional quadrature; both are provided as independent cross-checks
of the Monte Carlo route.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad_vec
from scipy.optimize import brentq

from .density import FptDistribution
from .diffusion import (
    Boundary,
    TransformedModel,
    check_growth_condition,
    linear_fpt_cdf,
    linear_fpt_density,
    meander_laplace,
    norm_cdf,
)
from .simulate import (
    KIND_MEANDER,
    _resolve_times,
    _run_ranges,
    _trapz,
    sample_meander,
    substream,
)

__all__ = [
    "GateauxResult",
    "gateaux_derivative",
    "bm_linear_gateaux_closed_lhs",
    "bm_linear_gateaux_quadrature_rhs",
    "fpt_distribution_bm_linear",
]

_SQ2PI = math.sqrt(2.0 / math.pi)

# substream kind tag for the inverse-CDF sampler below
KIND_INVCDF = 4

# largest meander path matrix held resident; larger runs regenerate paths
# chunkwise from their substreams (slower, same result)
_RESIDENT_CAP = 40_000_000
_CHUNK_FLOATS = 2_000_000


@dataclass(frozen=True)
class GateauxResult:
    """Directional-derivative estimate with its error decomposition.

    mc_stderr covers the meander Monte Carlo noise, quadrature_error the
    adaptive-integration residual, and t_min_truncation bounds the mass of
    first-passage samples discarded below the t_min cutoff (zero when the
    input law is closed-form and no cutoff applies).
    """

    value: float
    mc_stderr: float
    quadrature_error: float
    t_min_truncation: float
    n_meander: int
    seed: int
    excluded: int = 0

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError("value must be finite")
        for name in ("mc_stderr", "quadrature_error", "t_min_truncation"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and nonnegative")
        if self.n_meander < 1:
            raise ValueError("n_meander must be positive")
        if self.excluded < 0:
            raise ValueError("excluded must be nonnegative")


def _eval_on(fn, x):
    # vectorized call when supported, scalar loop otherwise
    try:
        vals = np.asarray(fn(x), dtype=float)
        if vals.shape == x.shape:
            return vals
    except Exception:
        pass
    return np.array([float(fn(v)) for v in x])


def _scalar(fn, x):
    v = np.asarray(fn(float(x)), dtype=float)
    return float(v) if v.ndim == 0 else float(v.ravel()[0])


class _MeanderWeights:
    """Per-sample meander weights w_t, shared across every t evaluated.

    Path sample i always comes from substream(seed, i, 0, KIND_MEANDER),
    so the weights are independent of chunking and thread count. When the
    drift vanishes identically and the boundary has no curvature the
    exponent depends on the path only through its endpoint, and only the
    endpoint (the first variate of each substream) is drawn.
    """

    def __init__(self, tm: TransformedModel, g: Boundary, grid, n: int,
                 seed: int):
        self.tm = tm
        self.g = g
        self.n = n
        self.seed = seed
        self.grid = grid
        self.ug = _resolve_times(grid)
        if abs(self.ug[-1] - 1.0) > 1e-12:
            raise ValueError("meander grid must end at 1")
        self.g1 = _scalar(g.g, 1.0)
        self.gp1 = _scalar(g.g_prime, 1.0)
        self.mu_zero = bool(tm.mu_is_zero)
        probe = np.linspace(0.0, 1.0, 513)
        self.gpp_zero = bool(np.all(_eval_on(g.g_second, probe) == 0.0))
        self.bad = np.zeros(n, dtype=bool)
        self._scratch = None
        m1 = len(self.ug)
        if self.mu_zero and self.gpp_zero:
            self.endpoints = np.empty(n)
            ends = self.endpoints

            def worker(a, b):
                for i in range(a, b):
                    ends[i] = substream(seed, i, 0, KIND_MEANDER).rayleigh()

            _run_ranges(n, 8192, worker)
            self.paths = None
        else:
            self.endpoints = None
            if n * m1 <= _RESIDENT_CAP:
                self.paths = np.empty((n, m1))
                rows = self.paths

                def worker(a, b):
                    for i in range(a, b):
                        rows[i] = sample_meander(
                            grid, substream(seed, i, 0, KIND_MEANDER)).values

                _run_ranges(n, 1024, worker)
            else:
                self.paths = None

    def _blocks(self):
        m1 = len(self.ug)
        if self.paths is not None:
            step = max(1, _CHUNK_FLOATS // m1)
            for a in range(0, self.n, step):
                b = min(a + step, self.n)
                yield a, b, self.paths[a:b]
            return
        step = max(1, _CHUNK_FLOATS // m1)
        if self._scratch is None or len(self._scratch) < step:
            self._scratch = np.empty((step, m1))
        for a in range(0, self.n, step):
            b = min(a + step, self.n)
            block = self._scratch[: b - a]
            for i in range(a, b):
                block[i - a] = sample_meander(
                    self.grid, substream(self.seed, i, 0, KIND_MEANDER)).values
            yield a, b, block

    def _guard(self, expo, out, a, b):
        with np.errstate(over="ignore"):
            w = np.exp(expo)
        fin = np.isfinite(expo) & np.isfinite(w)
        if not fin.all():
            self.bad[a:b] |= ~fin
            w = np.where(fin, w, 0.0)
        out[a:b] = w

    def weights(self, t: float) -> np.ndarray:
        t = float(t)
        st = math.sqrt(t)
        nodes = 1.0 - t + t * self.ug
        gp_nodes = _eval_on(self.g.g_prime, nodes)
        base = -0.5 * t * float(_trapz(gp_nodes * gp_nodes, self.ug))
        out = np.empty(self.n)
        if self.endpoints is not None:
            self._guard(base + st * self.gp1 * self.endpoints, out, 0, self.n)
            return out
        gvals = _eval_on(self.g.g, nodes)
        gpp = None if self.gpp_zero else _eval_on(self.g.g_second, nodes)
        if self.mu_zero:
            g_shift = 0.0
        else:
            g_shift = _scalar(self.tm.G, _scalar(self.g.g, 1.0 - t))
        for a, b, W in self._blocks():
            w1 = W[:, -1]
            expo = base + st * self.gp1 * w1
            if not self.mu_zero:
                y = -st * W + gvals[None, :]
                integ = np.asarray(self.tm.mu_prime(y), dtype=float) + \
                    np.asarray(self.tm.mu(y), dtype=float) ** 2
                expo = expo - 0.5 * t * _trapz(integ, self.ug, axis=1)
                expo = expo + np.asarray(self.tm.G(-st * w1 + self.g1),
                                         dtype=float) - g_shift
            if gpp is not None:
                expo = expo - st * t * _trapz(gpp[None, :] * W, self.ug, axis=1)
            self._guard(expo, out, a, b)
        return out


def _finish(acc, quad_err, trunc, n_meander, seed, bad):
    excluded = int(bad.sum())
    if excluded > 1e-3 * n_meander:
        raise RuntimeError(
            f"{excluded} of {n_meander} meander samples produced a non-finite "
            "weight (more than 0.1%); the model likely violates the growth "
            "requirements")
    good = acc[~bad]
    value = float(good.mean())
    stderr = float(good.std(ddof=1) / math.sqrt(len(good))) if len(good) > 1 else 0.0
    return GateauxResult(value=value, mc_stderr=stderr,
                         quadrature_error=float(quad_err),
                         t_min_truncation=float(trunc), n_meander=n_meander,
                         seed=seed, excluded=excluded)


def gateaux_derivative(tm: TransformedModel, g: Boundary, h, fpt: FptDistribution,
                       n_meander: int, grid, t_min: float = 1e-4,
                       seed: int = 0, quad_tol: float = 1e-4) -> GateauxResult:
    """Directional derivative of the non-crossing probability at g toward h.

    fpt supplies the first-passage law of the diffusion over g started at
    the (implicit) initial point: a closed_form law is integrated over the
    full horizon by adaptive quadrature (t_min is ignored and the reported
    truncation is 0), while an empirical law is averaged over its crossing
    samples, discarding those within t_min of the horizon and reporting a
    bound on the discarded mass. h may be a Boundary or a plain callable on
    [0, 1]; only its values enter. The same meander sample set (one
    substream per sample index) is used at every time point, so repeated
    calls with equal seeds are coupled.
    """
    if not isinstance(fpt, FptDistribution):
        raise ValueError("fpt must be an FptDistribution")
    if abs(fpt.T - 1.0) > 1e-12 or abs(g.T - 1.0) > 1e-12:
        raise ValueError("the sensitivity formula is stated on horizon 1")
    if n_meander < 2:
        raise ValueError("need at least two meander samples")
    if not tm.mu_is_zero:
        diag = check_growth_condition(tm, 1.0, (-30.0, 5.0), 400, threshold=1.0)
        if not diag.passes:
            warnings.warn(
                "drift growth diagnostic failed (limsup ratio "
                f"{diag.limsup_ratio:.3g} >= 1); the meander weights may be "
                "unstable", UserWarning, stacklevel=2)
    h_fn = h.g if isinstance(h, Boundary) else h
    mw = _MeanderWeights(tm, g, grid, int(n_meander), int(seed))

    if fpt.source == "closed_form":
        pdf = fpt.pdf
        zeros = np.zeros(mw.n)

        def integrand(u):
            # substituting t = u^2 absorbs the 1/sqrt(t) factor
            t = u * u
            tau = 1.0 - t
            if tau <= 0.0 or t <= 0.0:
                return zeros
            c = 2.0 * _SQ2PI * _scalar(h_fn, tau) * float(pdf(tau))
            if c == 0.0:
                return zeros
            return c * mw.weights(t)

        res, err, info = quad_vec(integrand, 0.0, 1.0, epsabs=quad_tol,
                                  epsrel=0.0, norm="max", quadrature="gk15",
                                  full_output=True)
        if not getattr(info, "success", True):
            raise RuntimeError("adaptive quadrature did not reach the "
                               f"requested tolerance {quad_tol:g}")
        return _finish(res, err, 0.0, mw.n, int(seed), mw.bad)

    if not 0.0 < t_min < 1.0:
        raise ValueError("t_min must lie in (0, 1) for empirical input")
    t_all = 1.0 - np.asarray(fpt.samples, dtype=float)
    t_all = t_all[t_all > 0.0]
    if t_all.size == 0:
        raise ValueError("FPT sample contains no crossings")
    kept = t_all[t_all >= t_min]
    if kept.size == 0:
        raise ValueError("FPT sample is empty after the t_min truncation")
    n_total = fpt.n_total

    # discarded-mass bound: 1.2x the tallest histogram bar bounds the FPT
    # density of 1-tau near 0, and Int_0^{t_min} t^{-1/2} dt = 2 sqrt(t_min)
    nb = max(10, int(math.sqrt(t_all.size)))
    counts, edges = np.histogram(t_all, bins=nb, range=(0.0, 1.0))
    c_hat = 1.2 * float(counts.max()) / (n_total * (edges[1] - edges[0]))
    h_sup = float(np.max(np.abs(_eval_on(h_fn, np.linspace(1.0 - t_min, 1.0, 33)))))
    trunc = _SQ2PI * h_sup * c_hat * 2.0 * math.sqrt(t_min)

    uniq, mult = np.unique(kept, return_counts=True)
    acc = np.zeros(mw.n)
    for t_i, k_i in zip(uniq, mult):
        coef = k_i * _scalar(h_fn, 1.0 - t_i) / math.sqrt(t_i)
        acc += coef * mw.weights(float(t_i))
    acc *= _SQ2PI / n_total
    return _finish(acc, 0.0, trunc, mw.n, int(seed), mw.bad)


def bm_linear_gateaux_closed_lhs(a1: float, a2: float, b1: float,
                                 b2: float) -> float:
    """Closed directional derivative for Brownian motion, linear boundary.

    P(eps) is the probability that a standard Brownian path stays below
    (a1 + eps*a2) + (b1 + eps*b2) s on [0, 1]; this returns P'(0):

        a2 sqrt(2/pi) e^{-(a1+b1)^2/2} + 2 (a2 b1 + a1 b2) e^{-2 a1 b1} Phi(b1 - a1).
    """
    a1, a2, b1, b2 = float(a1), float(a2), float(b1), float(b2)
    if a1 <= 0:
        raise ValueError("a1 must be positive (start below the boundary)")
    return (a2 * _SQ2PI * math.exp(-0.5 * (a1 + b1) ** 2)
            + 2.0 * (a2 * b1 + a1 * b2) * math.exp(-2.0 * a1 * b1)
            * float(norm_cdf(b1 - a1)))


def bm_linear_gateaux_quadrature_rhs(a1: float, a2: float, b1: float,
                                     b2: float, tol: float = 1e-4) -> float:
    """The same derivative via the sensitivity integral, computed by
    adaptive quadrature.

    For Brownian motion over a1 + b1*s the meander expectation collapses to
    a closed endpoint transform, leaving a one-dimensional integral

        (a1/pi) Int_0^1 (a2 + b2(1-t)) t^{-1/2} (1-t)^{-3/2}
                e^{-(a1+b1(1-t))^2/(2(1-t)) - b1^2 t/2} L(sqrt(t) b1) dt,

    with L the meander-endpoint exponential moment. Evaluated after the
    substitution t = u^2 (which removes the t^{-1/2} singularity) to the
    requested absolute tolerance; raises if the tolerance is not reached.
    This route is independent of the closed form in bm_linear_gateaux_closed_lhs.
    """
    a1, a2, b1, b2 = float(a1), float(a2), float(b1), float(b2)
    if a1 <= 0:
        raise ValueError("a1 must be positive (start below the boundary)")
    if tol <= 0:
        raise ValueError("tol must be positive")

    def integrand(u):
        t = u * u
        omt = 1.0 - t
        if omt <= 0.0:
            return np.array([0.0])
        arg = a1 + b1 * omt
        expo = -arg * arg / (2.0 * omt) - 0.5 * b1 * b1 * t
        if expo < -745.0:
            return np.array([0.0])
        val = (2.0 * a1 / math.pi) * (a2 + b2 * omt) * omt ** -1.5 \
            * math.exp(expo) * meander_laplace(math.sqrt(t) * b1)
        return np.array([val])

    res, err, info = quad_vec(integrand, 0.0, 1.0, epsabs=tol, epsrel=0.0,
                              norm="max", quadrature="gk15", full_output=True)
    if not getattr(info, "success", True):
        raise RuntimeError(f"quadrature did not reach tolerance {tol:g} "
                           f"(estimated error {err:.3g})")
    return float(res[0])


def fpt_distribution_bm_linear(a1: float, b1: float, n=None,
                               seed: int = 0) -> FptDistribution:
    """First-passage law of Brownian motion over a1 + b1*s on [0, 1].

    With n=None the closed-form law is returned (pdf/cdf callables, no
    samples). With an integer n, n paths are drawn by inverting the CDF:
    uniforms above the total crossing mass become censored paths, the rest
    are bracketed to machine precision. Useful as a controlled empirical
    input to gateaux_derivative.
    """
    a1, b1 = float(a1), float(b1)
    if a1 <= 0:
        raise ValueError("a1 must be positive (start below the boundary)")
    if n is None:
        return FptDistribution(
            samples=np.empty(0), censored=0, T=1.0, source="closed_form",
            pdf=lambda t: linear_fpt_density(a1, b1, t),
            cdf=lambda t: linear_fpt_cdf(a1, b1, t))
    n = int(n)
    if n < 1:
        raise ValueError("n must be positive")
    total = float(linear_fpt_cdf(a1, b1, 1.0))
    u = substream(int(seed), 0, 0, KIND_INVCDF).random(n)
    hits = u[u < total]
    samples = np.empty(hits.size)
    for i, ui in enumerate(hits):
        samples[i] = brentq(lambda tt: linear_fpt_cdf(a1, b1, tt) - ui,
                            1e-300, 1.0, xtol=1e-15, rtol=8.9e-16)
    return FptDistribution(samples=samples, censored=int(n - hits.size),
                           T=1.0, source="empirical")
