"""
Assembly of first-passage density identities and empirical density curves.

The core identity is p_tau(t) = f(t,x)/2 * p(t,x,g(t)): the first-passage
density is half the asymptotic non-crossing coefficient times the free
transition density evaluated on the boundary. This module exposes that
identity as scalar algebra, its original-coordinates form, its pinned
(bridge) form, and the histogram estimator used to compare simulated
first-passage laws against the closed forms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .diffusion import bm_transition_density

__all__ = [
    "FptDistribution",
    "DensityCurve",
    "fpt_density_from_f",
    "original_fpt_density",
    "bridge_fpt_density",
    "bridge_kernel",
    "bridge_fpt_density_from_f",
    "empirical_density",
]

_SOURCES = ("empirical", "closed_form")


@dataclass
class FptDistribution:
    """First-passage-time sample (or closed-form reference) on [0, T].

    samples holds crossing times in (0, T]; censored counts paths that
    never crossed by T; exploded counts paths discarded by the numerical
    guard. A closed_form source has no samples and carries pdf/cdf
    callables instead.
    """

    samples: np.ndarray
    censored: int
    T: float
    source: str
    pdf: Optional[Callable] = None
    cdf: Optional[Callable] = None
    exploded: int = 0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.source not in _SOURCES:
            raise ValueError(f"unknown source {self.source!r}")
        if self.censored < 0 or self.exploded < 0:
            raise ValueError("counts must be nonnegative")
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.samples.size and (
                self.samples.min() <= 0 or self.samples.max() > self.T * (1 + 1e-12)):
            raise ValueError("samples must lie in (0, T]")

    @property
    def n_total(self) -> int:
        return int(self.samples.size) + self.censored


@dataclass
class DensityCurve:
    """A density evaluated on a time grid, with optional per-point stderr."""

    ts: np.ndarray
    values: np.ndarray
    meta: dict
    stderr: Optional[np.ndarray] = None

    def __post_init__(self):
        self.ts = np.asarray(self.ts, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float)
            if self.stderr.shape != self.ts.shape:
                raise ValueError("stderr length must match ts")
        if self.ts.shape != self.values.shape:
            raise ValueError("ts and values must have the same length")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ValueError("values must be finite and nonnegative")

    def to_csv(self) -> str:
        err = self.stderr if self.stderr is not None else np.zeros_like(self.ts)
        lines = ["t,value,stderr"]
        for t, v, e in zip(self.ts, self.values, err):
            lines.append(f"{t:.17g},{v:.17g},{e:.17g}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        err = self.stderr if self.stderr is not None else np.zeros_like(self.ts)
        return json.dumps({"ts": self.ts.tolist(), "values": self.values.tolist(),
                           "stderr": err.tolist(), "meta": self.meta}, indent=2)

    @staticmethod
    def from_json(text: str) -> "DensityCurve":
        data = json.loads(text)
        return DensityCurve(ts=np.asarray(data["ts"]),
                            values=np.asarray(data["values"]),
                            meta=data.get("meta", {}),
                            stderr=np.asarray(data["stderr"]))


def fpt_density_from_f(f_t_x, p_txz):
    """First-passage density from the non-crossing coefficient: f/2 * p."""
    if np.any(np.asarray(f_t_x) < 0) or np.any(np.asarray(p_txz) < 0):
        raise ValueError("inputs must be nonnegative")
    return 0.5 * f_t_x * p_txz

def original_fpt_density(f_t_u, sigma_at_g, pU):
    """Back-transformed density f/2 * sigma(g(t))^2 * p_U(t, u, g(t)).

    f_t_u is the non-crossing coefficient measured in the original state
    coordinates (the boundary gap g(t) - z is an original-space gap, which
    absorbs one factor of sigma relative to the unit-diffusion form).
    """
    if (np.any(np.asarray(f_t_u) < 0) or np.any(np.asarray(sigma_at_g) < 0)
            or np.any(np.asarray(pU) < 0)):
        raise ValueError("inputs must be nonnegative")
    return 0.5 * f_t_u * sigma_at_g**2 * pU


def bridge_fpt_density(ptau_t, p_Tmt_gt_y, p_T_x_y):
    """Pinned-process first-passage density, ratio form.

    p_tau^y(t) = p(T-t, g(t), y) / p(T, x, y) * p_tau(t): the free density
    reweighted by the likelihood of reaching the pin from the boundary.
    """
    if p_T_x_y <= 0:
        raise ValueError("pinning density must be positive")
    if ptau_t < 0 or p_Tmt_gt_y < 0:
        raise ValueError("densities must be nonnegative")
    return ptau_t * p_Tmt_gt_y / p_T_x_y


def bridge_kernel(t, x, z, y, T, transition=bm_transition_density):
    """Transition density of the process pinned at y at time T.

    p^y(0, x, t, z) = p(t, x, z) * p(T-t, z, y) / p(T, x, y).
    """
    if not 0 < t < T:
        raise ValueError("need 0 < t < T")
    den = transition(T, x, y)
    if den <= 0:
        raise ValueError("pinning density must be positive")
    return transition(t, x, z) * transition(T - t, z, y) / den


def bridge_fpt_density_from_f(f_t_x, t, x, g_t, y, T,
                              transition=bm_transition_density):
    """Pinned-process first-passage density, kernel form: f/2 * p^y(0,x,t,g(t))."""
    if f_t_x < 0:
        raise ValueError("coefficient must be nonnegative")
    return 0.5 * f_t_x * bridge_kernel(t, x, g_t, y, T, transition)


def _fd_bin_count(samples: np.ndarray, T: float) -> int:
    # Freedman-Diaconis width over the horizon, clipped to a sane range
    q75, q25 = np.percentile(samples, [75, 25])
    width = 2.0 * (q75 - q25) / max(1.0, len(samples)) ** (1.0 / 3.0)
    if width <= 0:
        return 20
    return int(np.clip(np.ceil(T / width), 20, 2000))


def empirical_density(dist: FptDistribution, bins: Optional[int] = None,
                      ts: Optional[np.ndarray] = None) -> DensityCurve:
    """Density curve from a first-passage distribution.

    Empirical sources produce a histogram over [0, T] normalized by the
    total path count (censored included), so the curve integrates to the
    crossing fraction. Per-bin stderr is binomial. Closed-form sources
    evaluate their pdf on ts (default: 200 points) exactly.
    """
    if dist.source == "closed_form":
        if dist.pdf is None:
            raise ValueError("closed_form source must carry a pdf")
        if ts is None:
            ts = np.linspace(dist.T / 200.0, dist.T, 200)
        values = np.array([dist.pdf(t) for t in ts], dtype=float)
        return DensityCurve(ts=np.asarray(ts, dtype=float), values=values,
                            meta={"source": "closed_form"},
                            stderr=np.zeros(len(values)))

    samples = dist.samples
    n_total = dist.n_total
    if samples.size == 0:
        if dist.censored == 0:
            raise ValueError("empty distribution")
        nb = bins or 20
        edges = np.linspace(0.0, dist.T, nb + 1)
        zeros = np.zeros(nb)
        return DensityCurve(ts=0.5 * (edges[:-1] + edges[1:]), values=zeros,
                            meta={"source": "empirical", "edges": edges.tolist(),
                                  "n_total": n_total, "censored": dist.censored},
                            stderr=zeros.copy())
    if samples.size < 100:
        raise ValueError("need at least 100 samples for a histogram")
    nb = bins if bins is not None else _fd_bin_count(samples, dist.T)
    edges = np.linspace(0.0, dist.T, nb + 1)
    counts, _ = np.histogram(samples, bins=edges)
    widths = np.diff(edges)
    phat = counts / n_total
    values = phat / widths
    stderr = np.sqrt(phat * (1.0 - phat) / n_total) / widths
    return DensityCurve(
        ts=0.5 * (edges[:-1] + edges[1:]), values=values,
        meta={"source": "empirical", "edges": edges.tolist(),
              "n_total": n_total, "censored": dist.censored,
              "exploded": dist.exploded},
        stderr=stderr)
