"""
Seeded Monte Carlo sampling of Brownian bridges, meanders, and diffusion
paths, with boundary-crossing detection and the Girsanov-weighted
conditional non-crossing estimator.

Reproducibility contract: every path draws from its own counter-based
substream keyed by (seed, path index, stream, kind), so results are
bit-identical no matter how paths are partitioned across worker threads.
The FPTLAB_THREADS environment variable caps the worker count and must
never change numeric output.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .density import FptDistribution
from .diffusion import Boundary, TransformedModel

__all__ = [
    "PathGrid",
    "PathSample",
    "MCEstimate",
    "FEstimate",
    "KIND_BRIDGE",
    "KIND_MEANDER",
    "KIND_FPT",
    "substream",
    "two_regime_times",
    "sample_brownian_bridge",
    "sample_meander",
    "estimate_cond_noncross_prob",
    "estimate_f_regression",
    "sample_fpt",
]

# draw-kind tags keep the substreams of different samplers disjoint
KIND_BRIDGE = 1
KIND_MEANDER = 2
KIND_FPT = 3

_MASK64 = (1 << 64) - 1

_trapz = np.trapezoid if hasattr(np, "trapezoid") else np.trapz


def substream(seed: int, index: int, stream: int = 0, kind: int = 0):
    """Counter-based RNG substream for one sample path.

    The Philox key packs (index, stream, kind) into the second word:
    index in bits 0..39, stream in 40..55, kind in 56..63. Same arguments
    always give the same generator, independent of call order.
    """
    if not 0 <= index < (1 << 40):
        raise ValueError("path index out of range")
    if not 0 <= stream < (1 << 16):
        raise ValueError("stream out of range")
    if not 0 <= kind < (1 << 8):
        raise ValueError("kind out of range")
    key1 = index | (stream << 40) | (kind << 56)
    key = np.array([int(seed) & _MASK64, key1], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _as_generator(seed, kind):
    if isinstance(seed, np.random.Generator):
        return seed
    return substream(int(seed), 0, 0, kind)


@dataclass(frozen=True)
class PathGrid:
    """Uniform time grid t_i = i * t_end / n_steps on [0, t_end]."""

    t_end: float
    n_steps: int

    def __post_init__(self):
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")
        if self.n_steps < 1:
            raise ValueError("need at least one step")

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.n_steps + 1)

    @property
    def step(self) -> float:
        return self.t_end / self.n_steps


@dataclass
class PathSample:
    """One simulated path: values[i] at the grid's i-th time."""

    grid: Union[PathGrid, np.ndarray]
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expect = (self.grid.n_steps + 1 if isinstance(self.grid, PathGrid)
                  else len(np.asarray(self.grid)))
        if len(self.values) != expect:
            raise ValueError("values length does not match the grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("path values must be finite")


@dataclass(frozen=True)
class MCEstimate:
    """Monte Carlo point estimate with its provenance."""

    value: float
    stderr: float
    n: int
    seed: int
    grid_step: float
    excluded: int = 0

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError("stderr must be nonnegative")
        if self.n < 1:
            raise ValueError("n must be positive")


@dataclass(frozen=True)
class FEstimate:
    """Regression estimate of the non-crossing coefficient f(t, x).

    points holds (offset, MCEstimate) pairs for each boundary offset
    g(t) - z used in the fit.
    """

    slope: float
    window: float
    points: tuple
    through_origin: bool
    intercept: float = 0.0


def two_regime_times(t_end: float = 1.0, split: float = 0.99,
                     step1: float = 1e-4, step2: float = 1e-5) -> np.ndarray:
    """Time grid with step1 on [0, split] and a finer step2 on [split, t_end]."""
    if step1 <= 0 or step2 <= 0:
        raise ValueError("steps must be positive")
    if not 0 < split < t_end:
        raise ValueError("need 0 < split < t_end")
    n1 = max(1, int(round(split / step1)))
    n2 = max(1, int(round((t_end - split) / step2)))
    head = np.linspace(0.0, split, n1 + 1)
    tail = np.linspace(split, t_end, n2 + 1)[1:]
    return np.concatenate([head, tail])


def _resolve_times(grid) -> np.ndarray:
    if isinstance(grid, PathGrid):
        return grid.times
    times = np.asarray(grid, dtype=float)
    if times.ndim != 1 or len(times) < 2:
        raise ValueError("time grid must be a 1-d array of at least 2 points")
    if times[0] != 0.0:
        raise ValueError("time grid must start at 0")
    if np.any(np.diff(times) <= 0):
        raise ValueError("time grid must be strictly increasing")
    return times


def _grid_step(grid, times) -> float:
    if isinstance(grid, PathGrid):
        return grid.step
    return float(np.max(np.diff(times)))


def _boundary_values(boundary: Boundary, times: np.ndarray) -> np.ndarray:
    try:
        vals = np.asarray(boundary.g(times), dtype=float)
        if vals.shape == times.shape:
            return vals
    except Exception:
        pass
    return np.array([float(boundary.g(tt)) for tt in times])


def _thread_count() -> int:
    raw = os.environ.get("FPTLAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _run_ranges(n: int, chunk: int, worker) -> None:
    # workers write disjoint slices of preallocated arrays, so any thread
    # count yields identical results
    ranges = [(a, min(a + chunk, n)) for a in range(0, n, chunk)]
    tc = _thread_count()
    if tc <= 1 or len(ranges) <= 1:
        for a, b in ranges:
            worker(a, b)
        return
    with ThreadPoolExecutor(max_workers=min(tc, len(ranges))) as ex:
        for fut in [ex.submit(worker, a, b) for a, b in ranges]:
            fut.result()


def _bridge_values(x: float, z: float, times: np.ndarray, sqrt_dts: np.ndarray,
                   frac: np.ndarray, rng) -> np.ndarray:
    # B_s = x + (s/t)((z - x) - W_t) + W_s from one BM path W
    m = len(times) - 1
    incr = rng.standard_normal(m) * sqrt_dts
    W = np.cumsum(incr)
    vals = np.empty(m + 1)
    vals[0] = x
    vals[1:] = x + frac * ((z - x) - W[-1]) + W
    vals[-1] = z
    return vals


def sample_brownian_bridge(x: float, z: float, grid, seed) -> PathSample:
    """Brownian bridge from x at time 0 to z at the grid horizon.

    seed may be an integer (one default substream is derived) or an
    np.random.Generator for caller-managed substreams. Endpoints are set
    exactly.
    """
    times = _resolve_times(grid)
    rng = _as_generator(seed, KIND_BRIDGE)
    sqrt_dts = np.sqrt(np.diff(times))
    frac = times[1:] / times[-1]
    return PathSample(grid=grid,
                      values=_bridge_values(x, z, times, sqrt_dts, frac, rng))


def sample_meander(grid, seed) -> PathSample:
    """Brownian meander on [0, t_end]: positive path started at 0.

    Draw order per path: one Rayleigh endpoint (scaled by sqrt(t_end)),
    then a (3, n_steps) block of normals for the three-dimensional
    Brownian bridge from the origin to (r, 0, 0) whose norm is the meander
    conditioned on that endpoint.
    """
    times = _resolve_times(grid)
    rng = _as_generator(seed, KIND_MEANDER)
    t = times[-1]
    r = math.sqrt(t) * rng.rayleigh()
    m = len(times) - 1
    sqrt_dts = np.sqrt(np.diff(times))
    frac = times[1:] / t
    incr = rng.standard_normal((3, m)) * sqrt_dts
    W = np.cumsum(incr, axis=1)
    ends = np.array([r, 0.0, 0.0])
    comps = frac * (ends[:, None] - W[:, -1:]) + W
    vals = np.empty(m + 1)
    vals[0] = 0.0
    vals[1:] = np.sqrt(np.sum(comps * comps, axis=0))
    vals[-1] = r
    return PathSample(grid=grid, values=vals)


def estimate_cond_noncross_prob(tm: TransformedModel, boundary: Boundary,
                                t: float, x: float, z: float, grid, n: int,
                                seed: int, *, stream: int = 0,
                                bridge_correction: bool = False) -> MCEstimate:
    """Conditional non-crossing probability of the diffusion pinned at z.

    Simulates Brownian bridges from x to z and weights each path by
    exp(N), N = -1/2 * trapezoid of (mu' + mu^2) along the path; the
    normalizing constants of the measure change cancel in the ratio
    E[w 1_below] / E[w]. A drift that is identically zero skips the
    weighting entirely and the estimator is the plain indicator mean.

    Paths with non-finite weight are excluded and counted; the run fails
    if more than 0.1% of paths are excluded. bridge_correction replaces
    the discrete below-boundary indicator with the product of per-step
    bridge survival probabilities.
    """
    times = _resolve_times(grid)
    if abs(times[-1] - t) > 1e-12 * max(1.0, abs(t)):
        raise ValueError("grid horizon must equal t")
    if n < 1:
        raise ValueError("n must be positive")
    gvals = _boundary_values(boundary, times)
    if x >= gvals[0]:
        raise ValueError("start point must be below the boundary")
    if z > gvals[-1] + 1e-15:
        raise ValueError("endpoint must not exceed the boundary")

    mu_zero = bool(getattr(tm, "mu_is_zero", False))
    dts = np.diff(times)
    sqrt_dts = np.sqrt(dts)
    frac = times[1:] / times[-1]
    noncross = np.empty(n)
    logw = None if mu_zero else np.empty(n)

    def worker(i0, i1):
        for i in range(i0, i1):
            rng = substream(seed, i, stream, KIND_BRIDGE)
            vals = _bridge_values(x, z, times, sqrt_dts, frac, rng)
            crossed = bool(np.any(vals > gvals))
            if bridge_correction and not crossed:
                gaps = gvals - vals
                surv = -np.expm1(-2.0 * gaps[:-1] * gaps[1:] / dts)
                noncross[i] = float(np.prod(surv))
            else:
                noncross[i] = 0.0 if crossed else 1.0
            if logw is not None:
                integrand = (np.asarray(tm.mu_prime(vals), dtype=float)
                             + np.asarray(tm.mu(vals), dtype=float) ** 2)
                logw[i] = -0.5 * _trapz(integrand, times)

    _run_ranges(n, 1024, worker)

    step = _grid_step(grid, times)
    if mu_zero:
        value = float(np.mean(noncross))
        stderr = float(np.std(noncross, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return MCEstimate(value=value, stderr=stderr, n=n, seed=int(seed),
                          grid_step=step)

    finite = np.isfinite(logw)
    excluded = int(n - finite.sum())
    if excluded > 0.001 * n:
        raise RuntimeError(
            f"{excluded} of {n} paths had non-finite weights; drift is not "
            "integrable along the sampled bridges")
    lw = logw[finite]
    nc = noncross[finite]
    nf = len(lw)
    # centering by the max keeps weights in (0, 1] and makes the ratio
    # exactly the plain mean when all weights are equal
    w = np.exp(lw - lw.max())
    sw = float(np.sum(w))
    value = float(np.sum(w * nc) / sw)
    if nf > 1:
        resid = w * nc - value * w
        stderr = float(np.std(resid, ddof=1) / (np.mean(w) * math.sqrt(nf)))
    else:
        stderr = 0.0
    return MCEstimate(value=value, stderr=stderr, n=n, seed=int(seed),
                      grid_step=step, excluded=excluded)


def estimate_f_regression(tm: TransformedModel, boundary: Boundary, t: float,
                          x: float, window: float, offsets: Sequence[float],
                          n_per_offset: int, grid, seed: int,
                          through_origin: bool = True,
                          bridge_correction: bool = False) -> FEstimate:
    """Slope of the conditional non-crossing probability in the boundary gap.

    Runs the pinned-path estimator at z = g(t) - offset for each offset and
    fits value ~ slope * offset by weighted least squares (weights
    1/stderr^2). The through-origin fit is the default since the
    probability vanishes at zero gap; a free intercept is available for
    diagnostic comparisons. Each offset uses its own RNG stream.
    """
    offsets = [float(o) for o in offsets]
    if not offsets:
        raise ValueError("need at least one offset")
    if any(not 0 < o <= window + 1e-15 for o in offsets):
        raise ValueError("offsets must lie in (0, window]")
    if not through_origin and len(offsets) < 2:
        raise ValueError("free-intercept fit needs at least two offsets")
    times = _resolve_times(grid)
    gvals = _boundary_values(boundary, times)
    gt = gvals[-1]

    points = []
    for j, off in enumerate(offsets):
        est = estimate_cond_noncross_prob(tm, boundary, t, x, gt - off, grid,
                                          n_per_offset, seed, stream=j,
                                          bridge_correction=bridge_correction)
        points.append((off, est))

    wts = np.array([1.0 / max(e.stderr, 1e-12) ** 2 for _, e in points])
    xs = np.array([o for o, _ in points])
    ys = np.array([e.value for _, e in points])
    if through_origin:
        if len(points) == 1:
            slope = ys[0] / xs[0]
        else:
            slope = float(np.sum(wts * xs * ys) / np.sum(wts * xs * xs))
        intercept = 0.0
    else:
        s0 = float(np.sum(wts))
        s1 = float(np.sum(wts * xs))
        s2 = float(np.sum(wts * xs * xs))
        sy = float(np.sum(wts * ys))
        sxy = float(np.sum(wts * xs * ys))
        det = s0 * s2 - s1 * s1
        if det <= 0:
            raise ValueError("degenerate regression design")
        slope = (s0 * sxy - s1 * sy) / det
        intercept = (s2 * sy - s1 * sxy) / det
    if not np.isfinite(slope):
        raise ValueError("regression produced a non-finite slope")
    return FEstimate(slope=slope, window=float(window), points=tuple(points),
                     through_origin=through_origin, intercept=float(intercept))


def sample_fpt(tm: TransformedModel, boundary: Boundary, x: float, grid,
               n: int, seed: int, guard: float = 1e6,
               chunk: Optional[int] = None) -> FptDistribution:
    """Empirical first-passage-time distribution by Euler-Maruyama.

    Records the first grid time at which the simulated path strictly
    exceeds the boundary; paths that never cross by the horizon are
    censored. Paths whose state leaves [-guard, guard] (or turns
    non-finite) before crossing are counted as exploded and excluded.
    """
    times = _resolve_times(grid)
    m = len(times) - 1
    gvals = _boundary_values(boundary, times)
    if x >= gvals[0]:
        raise ValueError("start point must be below the boundary")
    if n < 1:
        raise ValueError("n must be positive")
    dts = np.diff(times)
    sqrt_dts = np.sqrt(dts)
    mu_zero = bool(getattr(tm, "mu_is_zero", False))
    hit = np.full(n, -1, dtype=np.int64)
    expl = np.zeros(n, dtype=bool)
    if chunk is None:
        chunk = max(16, 4_000_000 // max(1, m))

    def worker(i0, i1):
        c = i1 - i0
        rows = np.empty((c, m))
        for k in range(c):
            rows[k] = substream(seed, i0 + k, 0, KIND_FPT).standard_normal(m)
        if mu_zero:
            paths = x + np.cumsum(rows * sqrt_dts, axis=1)
            over = paths > gvals[1:]
            has = over.any(axis=1)
            first = np.argmax(over, axis=1)
            out = np.full(c, -1, dtype=np.int64)
            out[has] = first[has] + 1
            hit[i0:i1] = out
            return
        state = np.full(c, float(x))
        hitc = np.full(c, -1, dtype=np.int64)
        explc = np.zeros(c, dtype=bool)
        for k in range(m):
            active = np.flatnonzero((hitc < 0) & ~explc)
            if active.size == 0:
                break
            xa = state[active]
            drift = np.asarray(tm.mu(xa), dtype=float)
            xa = xa + drift * dts[k] + sqrt_dts[k] * rows[active, k]
            state[active] = xa
            finite = np.isfinite(xa)
            crossed = finite & (xa > gvals[k + 1])
            blown = ~crossed & (~finite | (np.abs(xa) > guard))
            hitc[active[crossed]] = k + 1
            explc[active[blown]] = True
        hit[i0:i1] = hitc
        expl[i0:i1] = explc

    _run_ranges(n, chunk, worker)

    good = hit >= 1
    samples = times[hit[good]]
    censored = int(np.sum((hit < 0) & ~expl))
    return FptDistribution(samples=samples, censored=censored,
                           T=float(times[-1]), source="empirical",
                           exploded=int(expl.sum()))
