"""Command-line front end.

Every computation is exposed as a subcommand that writes a JSON result
envelope (or CSV for tabular payloads) with the inputs echoed, a method
tag on every numeric result, the seed actually used, and the package
version. Exit codes: 0 success, 1 usage (unknown subcommand/flag), 2
validation error, 3 numerical failure (verification threshold missed,
exclusion budget exceeded, quadrature tolerance unreachable).
"""

import csv
import io
import json
import math
import os
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__
from .density import (
    DensityCurve,
    bridge_fpt_density,
    empirical_density,
    fpt_density_from_f,
)
from .diffusion import (
    bm_transition_density,
    brownian_model,
    check_growth_condition,
    daniels_boundary,
    daniels_f,
    daniels_fpt_density,
    kendall_fpt_density,
    linear_boundary,
    linear_fpt_density,
    meander_endpoint_density,
    meander_laplace,
    meander_transition_density,
    ou_model,
    piecewise_poly_boundary,
)
from .sensitivity import (
    bm_linear_gateaux_closed_lhs,
    bm_linear_gateaux_quadrature_rhs,
    fpt_distribution_bm_linear,
    gateaux_derivative,
)
from .simulate import (
    PathGrid,
    _grid_step,
    estimate_cond_noncross_prob,
    estimate_f_regression,
    sample_fpt,
    two_regime_times,
)

__all__ = ["main", "cli"]

ENVELOPE_SCHEMA = "fptlab-envelope/1"


class NumericalFailure(RuntimeError):
    """A verification threshold was missed; the envelope was still written."""


# ---------------------------------------------------------------------------
# envelope plumbing


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k in sorted(obj):
            yield from _flatten(obj[k], f"{prefix}{k}." if prefix or True else k)
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}{i}.")
    else:
        yield prefix[:-1], obj


def _envelope_csv(env):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "value"])
    for k, v in _flatten(env):
        w.writerow([k, v])
    return buf.getvalue()


def _emit(command, inputs, results, seed, fmt, out, t0, csv_text=None):
    env = {
        "schema": ENVELOPE_SCHEMA,
        "version": __version__,
        "command": command,
        "inputs": inputs,
        "seed": seed,
        "results": results,
        "wall_time_s": time.perf_counter() - t0,
    }
    if fmt == "csv":
        text = csv_text if csv_text is not None else _envelope_csv(env)
    else:
        text = json.dumps(env, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        click.echo(text, nl=False)
    return env


def _pick_seed(seed):
    if seed is not None:
        return int(seed)
    return int.from_bytes(os.urandom(8), "little") & ((1 << 63) - 1)


# ---------------------------------------------------------------------------
# preset parsing


def _parse_floats(text, k, what):
    parts = text.split(",")
    if len(parts) != k:
        raise click.BadParameter(f"{what} needs {k} comma-separated numbers")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise click.BadParameter(f"{what}: could not parse {text!r}")


def _make_model(name):
    s = name.strip().lower()
    if s == "bm":
        return brownian_model(), "bm"
    if s.startswith("ou:") or s.startswith("ou,"):
        theta = float(s[3:])
        return ou_model(theta), f"ou:{theta}"
    raise click.BadParameter(f"unknown model {name!r} (use 'bm' or 'ou:<theta>')")


def _load_table_boundary(path):
    data = json.loads(Path(path).read_text())
    try:
        return piecewise_poly_boundary(data["pieces"], float(data["T"]))
    except (KeyError, TypeError) as e:
        raise click.BadParameter(f"boundary table {path}: {e}")


def _make_boundary(linear, daniels, table, horizon):
    given = [v is not None for v in (linear, daniels, table)]
    if sum(given) != 1:
        raise click.BadParameter(
            "choose exactly one boundary: --linear a,b | --daniels d,k1,k2 "
            "| --boundary-table file")
    if linear is not None:
        a, b = _parse_floats(linear, 2, "--linear")
        return linear_boundary(a, b, T=horizon), f"linear:{a},{b}", ("linear", (a, b))
    if daniels is not None:
        d, k1, k2 = _parse_floats(daniels, 3, "--daniels")
        return (daniels_boundary(d, k1, k2, T=horizon),
                f"daniels:{d},{k1},{k2}", ("daniels", (d, k1, k2)))
    return _load_table_boundary(table), f"table:{table}", ("table", None)


def _make_grid(t_end, step, step2, split):
    if step <= 0:
        raise click.BadParameter("--step must be positive")
    if step2 is not None:
        return two_regime_times(t_end, split, step, step2)
    return PathGrid(t_end, max(1, int(round(t_end / step))))


def _wls_slope_stderr(points, through_origin):
    # propagated WLS error with weights 1/stderr^2
    xs = np.array([p[0] for p in points])
    es = np.array([max(p[1].stderr, 1e-12) for p in points])
    w = 1.0 / es**2
    if through_origin or len(points) == 1:
        return float(1.0 / math.sqrt(np.sum(w * xs * xs)))
    sw, swx, swxx = np.sum(w), np.sum(w * xs), np.sum(w * xs * xs)
    det = sw * swxx - swx * swx
    return float(math.sqrt(sw / det)) if det > 0 else float("nan")


def _mc_entry(est):
    return {
        "value": est.value,
        "stderr": est.stderr,
        "provenance": "monte_carlo",
        "n": est.n,
        "grid_step": est.grid_step,
        "excluded": est.excluded,
    }


# shared options


def _out_options(fn):
    fn = click.option("--format", "fmt", type=click.Choice(["json", "csv"]),
                      default="json", help="Envelope format.")(fn)
    fn = click.option("--out", type=click.Path(dir_okay=False), default=None,
                      help="Write to this path instead of stdout.")(fn)
    return fn


def _seed_option(fn):
    return click.option("--seed", type=int, default=None,
                        help="RNG seed (auto-generated and echoed if omitted).")(fn)


def _boundary_options(fn):
    fn = click.option("--boundary-table", type=click.Path(exists=True),
                      default=None, help="Piecewise-polynomial boundary JSON.")(fn)
    fn = click.option("--daniels", default=None,
                      help="Daniels boundary preset: delta,k1,k2.")(fn)
    fn = click.option("--linear", default=None,
                      help="Linear boundary preset: a,b.")(fn)
    return fn


def _grid_options(fn):
    fn = click.option("--split", type=float, default=0.99,
                      help="Changeover time for the two-regime grid.")(fn)
    fn = click.option("--step2", type=float, default=None,
                      help="Finer step past --split (two-regime grid).")(fn)
    fn = click.option("--step", type=float, default=1e-3,
                      help="Simulation step size.")(fn)
    return fn


@click.group()
@click.version_option(version=__version__, prog_name="fptlab")
def cli():
    """First-passage densities, boundary sensitivities, and their simulators.

    Worker threads are capped by the FPTLAB_THREADS environment variable;
    results do not depend on it.
    """


# ---------------------------------------------------------------------------
# simulation commands


@cli.command("cond-prob")
@click.option("--model", default="bm", help="bm or ou:<theta>.")
@_boundary_options
@click.option("--t", type=float, required=True, help="Pinning time.")
@click.option("--x", type=float, required=True, help="Start point.")
@click.option("--z", type=float, required=True, help="Pinned endpoint.")
@click.option("--n", type=int, default=10000, help="Bridge paths.")
@_grid_options
@click.option("--bridge-correction", is_flag=True,
              help="Apply the within-step crossing correction.")
@_seed_option
@_out_options
def cond_prob(model, linear, daniels, boundary_table, t, x, z, n, step, step2,
              split, bridge_correction, seed, out, fmt):
    """Conditional non-crossing probability of a pinned unit diffusion."""
    t0 = time.perf_counter()
    tm, model_tag = _make_model(model)
    boundary, btag, _ = _make_boundary(linear, daniels, boundary_table, t)
    grid = _make_grid(t, step, step2, split)
    seed = _pick_seed(seed)
    est = estimate_cond_noncross_prob(tm, boundary, t, x, z, grid, n, seed,
                                      bridge_correction=bridge_correction)
    inputs = {"model": model_tag, "boundary": btag, "t": t, "x": x, "z": z,
              "n": n, "step": step, "step2": step2, "split": split,
              "bridge_correction": bridge_correction}
    _emit("cond-prob", inputs, {"cond_noncross_prob": _mc_entry(est)},
          seed, fmt, out, t0)


@cli.command("estimate-f")
@click.option("--model", default="bm", help="bm or ou:<theta>.")
@_boundary_options
@click.option("--t", type=float, required=True)
@click.option("--x", type=float, required=True)
@click.option("--window", type=float, default=0.1,
              help="Largest boundary offset used in the regression.")
@click.option("--offsets", default=None,
              help="Comma-separated offsets; default 10 evenly spaced.")
@click.option("--n", type=int, default=10000, help="Paths per offset.")
@_grid_options
@click.option("--free-intercept", is_flag=True,
              help="Fit an intercept instead of forcing the line through 0.")
@click.option("--bridge-correction", is_flag=True)
@_seed_option
@_out_options
def estimate_f(model, linear, daniels, boundary_table, t, x, window, offsets,
               n, step, step2, split, free_intercept, bridge_correction, seed,
               out, fmt):
    """Regression estimate of the non-crossing coefficient f(t, x).

    CSV output is the per-offset table (offset,value,stderr,n), ready for
    plotting the regression line.
    """
    t0 = time.perf_counter()
    tm, model_tag = _make_model(model)
    boundary, btag, preset = _make_boundary(linear, daniels, boundary_table, t)
    grid = _make_grid(t, step, step2, split)
    seed = _pick_seed(seed)
    if offsets is not None:
        offs = [float(p) for p in offsets.split(",")]
    else:
        offs = list(np.linspace(window / 10.0, window, 10))
    est = estimate_f_regression(tm, boundary, t, x, window, offs, n, grid,
                                seed, through_origin=not free_intercept,
                                bridge_correction=bridge_correction)
    gstep = _grid_step(grid, None) if isinstance(grid, PathGrid) else float(
        np.max(np.diff(grid)))
    results = {
        "slope": {
            "value": est.slope,
            "stderr": _wls_slope_stderr(est.points, est.through_origin),
            "provenance": "monte_carlo",
            "n": n * len(offs),
            "grid_step": gstep,
            "through_origin": est.through_origin,
        },
        "points": [
            {"offset": off, "value": m.value, "stderr": m.stderr, "n": m.n,
             "provenance": "monte_carlo"}
            for off, m in est.points
        ],
    }
    if not est.through_origin:
        results["intercept"] = {"value": est.intercept,
                                "provenance": "monte_carlo"}
    kind, params = preset
    if kind == "daniels" and tm.mu_is_zero:
        d, k1, k2 = params
        results["exact_reference"] = {"value": daniels_f(d, k1, k2, t, x),
                                      "provenance": "closed_form"}
    elif kind == "linear" and tm.mu_is_zero:
        a, b = params
        results["exact_reference"] = {"value": 2.0 * (a - x) / t,
                                      "provenance": "closed_form"}
    inputs = {"model": model_tag, "boundary": btag, "t": t, "x": x,
              "window": window, "offsets": [float(o) for o in offs], "n": n,
              "step": step, "step2": step2, "split": split,
              "free_intercept": free_intercept,
              "bridge_correction": bridge_correction}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["offset", "value", "stderr", "n"])
    for off, m in est.points:
        w.writerow([f"{off:.17g}", f"{m.value:.17g}", f"{m.stderr:.17g}", m.n])
    _emit("estimate-f", inputs, results, seed, fmt, out, t0,
          csv_text=buf.getvalue())


@cli.command("fpt-density")
@click.option("--model", default="bm", help="bm or ou:<theta>.")
@_boundary_options
@click.option("--x", type=float, default=0.0, help="Start point.")
@click.option("--horizon", type=float, default=1.0, help="Time horizon T.")
@click.option("--empirical", is_flag=True,
              help="Histogram from simulated first passages instead of the "
                   "closed form.")
@click.option("--n", type=int, default=10000, help="Paths (empirical mode).")
@_grid_options
@click.option("--bins", type=int, default=None, help="Histogram bin count.")
@click.option("--grid-points", type=int, default=200,
              help="Evaluation points (closed-form mode).")
@click.option("--f", "f_value", type=float, default=None,
              help="Evaluate (f/2)*kernel at --t with this coefficient.")
@click.option("--t", type=float, default=None,
              help="Single evaluation time (with --f).")
@_seed_option
@_out_options
def fpt_density(model, linear, daniels, boundary_table, x, horizon, empirical,
                n, step, step2, split, bins, grid_points, f_value, t, seed,
                out, fmt):
    """First-passage density curve (CSV: t,value,stderr).

    Closed-form mode needs the Brownian model with a linear or Daniels
    boundary; --empirical simulates any supported model; --f builds the
    density from a supplied coefficient and the Gaussian kernel.
    """
    t0 = time.perf_counter()
    tm, model_tag = _make_model(model)
    boundary, btag, preset = _make_boundary(linear, daniels, boundary_table,
                                            horizon)
    kind, params = preset
    inputs = {"model": model_tag, "boundary": btag, "x": x, "horizon": horizon,
              "empirical": empirical, "grid_points": grid_points}
    if f_value is not None:
        if t is None:
            raise ValueError("--f needs --t")
        if not tm.mu_is_zero:
            raise ValueError("--f mode uses the Gaussian kernel: model must be bm")
        g_t = float(np.asarray(boundary.g(t), dtype=float))
        val = fpt_density_from_f(f_value, bm_transition_density(t, x, g_t))
        inputs.update({"f": f_value, "t": t})
        results = {"fpt_density": {"value": val, "provenance": "closed_form",
                                   "t": t}}
        _emit("fpt-density", inputs, results, None, fmt, out, t0)
        return
    if empirical:
        seed = _pick_seed(seed)
        grid = _make_grid(horizon, step, step2, split)
        dist = sample_fpt(tm, boundary, x, grid, n, seed)
        curve = empirical_density(dist, bins=bins)
        inputs.update({"n": n, "step": step, "step2": step2, "split": split,
                       "bins": bins})
        gstep = grid.step if isinstance(grid, PathGrid) else \
            float(np.max(np.diff(grid)))
        results = {
            "curve": {"provenance": "monte_carlo", "n": n,
                      "grid_step": gstep,
                      "points": len(curve.ts),
                      "crossed": int(dist.samples.size),
                      "censored": dist.censored, "exploded": dist.exploded},
        }
        _emit("fpt-density", inputs, results, seed, fmt, out, t0,
              csv_text=curve.to_csv())
        return
    if not tm.mu_is_zero:
        raise ValueError("closed-form densities need the Brownian model; "
                         "use --empirical for other models")
    ts = np.linspace(horizon / grid_points, horizon, grid_points)
    if kind == "linear":
        a, b = params
        values = np.asarray(linear_fpt_density(a, b, ts), dtype=float)
    elif kind == "daniels":
        d, k1, k2 = params
        values = np.array([daniels_fpt_density(d, k1, k2, float(tt))
                           for tt in ts])
    else:
        raise ValueError("no closed form for table boundaries; use --empirical")
    curve = DensityCurve(ts=ts, values=values,
                         meta={"provenance": "closed_form", "boundary": btag})
    results = {"curve": {"provenance": "closed_form", "points": len(ts)}}
    _emit("fpt-density", inputs, results, None, fmt, out, t0,
          csv_text=curve.to_csv())


@cli.command("bridge-fpt")
@_boundary_options
@click.option("--t", type=float, required=True, help="Density argument.")
@click.option("--x", type=float, default=0.0)
@click.option("--y", type=float, required=True, help="Pinned endpoint at T.")
@click.option("--horizon", "T", type=float, default=1.0)
@_out_options
def bridge_fpt(linear, daniels, boundary_table, t, x, y, T, out, fmt):
    """Closed-form first-passage density of the pinned Brownian path.

    Multiplies the free density by the endpoint-likelihood ratio
    p(T-t, g(t), y)/p(T, x, y).
    """
    t0 = time.perf_counter()
    boundary, btag, preset = _make_boundary(linear, daniels, boundary_table, T)
    if not 0 < t < T:
        raise ValueError("need 0 < t < horizon")
    kind, params = preset
    if kind == "linear":
        a, b = params
        ptau = float(linear_fpt_density(a, b, t))
    elif kind == "daniels":
        d, k1, k2 = params
        ptau = float(daniels_fpt_density(d, k1, k2, t))
    else:
        raise ValueError("bridge-fpt needs a linear or daniels boundary")
    g_t = float(np.asarray(boundary.g(t), dtype=float))
    num = bm_transition_density(T - t, g_t, y)
    den = bm_transition_density(T, x, y)
    val = bridge_fpt_density(ptau, num, den)
    inputs = {"boundary": btag, "t": t, "x": x, "y": y, "horizon": T}
    results = {
        "bridge_fpt_density": {"value": val, "provenance": "closed_form"},
        "free_fpt_density": {"value": ptau, "provenance": "closed_form"},
        "endpoint_ratio": {"value": num / den, "provenance": "closed_form"},
    }
    _emit("bridge-fpt", inputs, results, None, fmt, out, t0)


@cli.command("daniels")
@click.option("--params", required=True, help="delta,k1,k2.")
@click.option("--t", type=float, default=1.0)
@click.option("--x", type=float, default=0.0)
@_out_options
def daniels_cmd(params, t, x, out, fmt):
    """Evaluate the Daniels boundary, its derivatives, density and coefficient."""
    t0 = time.perf_counter()
    d, k1, k2 = _parse_floats(params, 3, "--params")
    b = daniels_boundary(d, k1, k2)
    results = {
        "g": {"value": float(np.asarray(b.g(t), dtype=float)),
              "provenance": "closed_form"},
        "g_prime": {"value": float(np.asarray(b.g_prime(t), dtype=float)),
                    "provenance": "closed_form"},
        "g_second": {"value": float(np.asarray(b.g_second(t), dtype=float)),
                     "provenance": "closed_form"},
        "fpt_density": {"value": float(daniels_fpt_density(d, k1, k2, t)),
                        "provenance": "closed_form"},
        "f": {"value": float(daniels_f(d, k1, k2, t, x)),
              "provenance": "closed_form"},
    }
    inputs = {"params": [d, k1, k2], "t": t, "x": x}
    _emit("daniels", inputs, results, None, fmt, out, t0)


@cli.command("kendall")
@click.option("--y", type=float, required=True, help="Constant boundary level.")
@click.option("--x", type=float, default=0.0, help="Start point.")
@click.option("--t", type=float, required=True)
@_out_options
def kendall(y, x, t, out, fmt):
    """First-passage density over a constant boundary: ((y-x)/t) q(t,x,y)."""
    t0 = time.perf_counter()
    val = kendall_fpt_density(y, x, t)
    inputs = {"y": y, "x": x, "t": t}
    _emit("kendall", inputs,
          {"kendall_fpt_density": {"value": val, "provenance": "closed_form"}},
          None, fmt, out, t0)


@cli.command("meander-density")
@click.option("--a", type=float, default=None, help="Pinned endpoint at 1.")
@click.option("--s", type=float, default=0.0)
@click.option("--y", type=float, default=0.0)
@click.option("--t", type=float, default=None)
@click.option("--z", type=float, default=None)
@click.option("--endpoint", type=float, default=None,
              help="Evaluate the endpoint density at this value instead.")
@click.option("--laplace", type=float, default=None,
              help="Evaluate the endpoint exponential moment at this rate.")
@_out_options
def meander_density(a, s, y, t, z, endpoint, laplace, out, fmt):
    """Meander-related closed forms: pinned transition density by default."""
    t0 = time.perf_counter()
    if laplace is not None:
        results = {"meander_laplace": {"value": meander_laplace(laplace),
                                       "provenance": "closed_form"}}
        inputs = {"laplace": laplace}
    elif endpoint is not None:
        results = {"meander_endpoint_density":
                   {"value": float(meander_endpoint_density(endpoint)),
                    "provenance": "closed_form"}}
        inputs = {"endpoint": endpoint}
    else:
        if a is None or t is None or z is None:
            raise ValueError("transition density needs --a, --t and --z")
        val = meander_transition_density(a, s, y, t, z)
        results = {"meander_transition_density":
                   {"value": val, "provenance": "closed_form"}}
        inputs = {"a": a, "s": s, "y": y, "t": t, "z": z}
    _emit("meander-density", inputs, results, None, fmt, out, t0)


# ---------------------------------------------------------------------------
# sensitivity commands


def _gateaux_boundary(linear, table, what, horizon=1.0):
    if (linear is None) == (table is None):
        raise click.BadParameter(f"choose exactly one {what} preset")
    if linear is not None:
        a, b = _parse_floats(linear, 2, what)
        return linear_boundary(a, b, T=horizon), f"linear:{a},{b}", (a, b)
    return _load_table_boundary(table), f"table:{table}", None


@cli.command("gateaux")
@click.option("--model", default="bm", help="bm or ou:<theta>.")
@click.option("--g-linear", default=None, help="Boundary g: a,b.")
@click.option("--g-daniels", default=None, help="Boundary g: delta,k1,k2.")
@click.option("--g-table", type=click.Path(exists=True), default=None)
@click.option("--h-linear", default=None, help="Perturbation h: a,b.")
@click.option("--h-table", type=click.Path(exists=True), default=None)
@click.option("--fpt-source", type=click.Choice(["closed", "simulate"]),
              default="closed",
              help="closed = exact Brownian/linear law; simulate = "
                   "Euler-Maruyama first passages.")
@click.option("--x", type=float, default=0.0, help="Start (simulate mode).")
@click.option("--fpt-n", type=int, default=10000,
              help="Simulated paths (simulate mode).")
@_grid_options
@click.option("--n", type=int, default=100000, help="Meander samples.")
@click.option("--meander-steps", type=int, default=1000,
              help="Meander grid resolution.")
@click.option("--t-min", type=float, default=1e-4,
              help="Horizon-side truncation for empirical input.")
@click.option("--quad-tol", type=float, default=1e-4)
@_seed_option
@_out_options
def gateaux(model, g_linear, g_daniels, g_table, h_linear, h_table,
            fpt_source, x, fpt_n, step, step2, split, n, meander_steps,
            t_min, quad_tol, seed, out, fmt):
    """Directional derivative of the non-crossing probability along h."""
    t0 = time.perf_counter()
    tm, model_tag = _make_model(model)
    if g_daniels is not None:
        if g_linear is not None or g_table is not None:
            raise click.BadParameter("choose exactly one boundary g preset")
        d, k1, k2 = _parse_floats(g_daniels, 3, "--g-daniels")
        g, gtag, g_params = daniels_boundary(d, k1, k2), f"daniels:{d},{k1},{k2}", None
    else:
        g, gtag, g_params = _gateaux_boundary(g_linear, g_table, "--g boundary")
    h, htag, _ = _gateaux_boundary(h_linear, h_table, "--h perturbation")
    seed = _pick_seed(seed)
    if fpt_source == "closed":
        if not (tm.mu_is_zero and g_params is not None):
            raise ValueError("closed FPT input exists only for bm with a "
                             "linear boundary; use --fpt-source simulate")
        a1, b1 = g_params
        fpt = fpt_distribution_bm_linear(a1, b1)
    else:
        grid = _make_grid(1.0, step, step2, split)
        fpt = sample_fpt(tm, g, x, grid, fpt_n, seed)
    res = gateaux_derivative(tm, g, h, fpt, n, PathGrid(1.0, meander_steps),
                             t_min=t_min, seed=seed, quad_tol=quad_tol)
    inputs = {"model": model_tag, "g": gtag, "h": htag,
              "fpt_source": fpt_source, "x": x, "fpt_n": fpt_n, "n": n,
              "meander_steps": meander_steps, "t_min": t_min,
              "quad_tol": quad_tol, "step": step, "step2": step2,
              "split": split}
    results = {
        "derivative": {
            "value": res.value,
            "stderr": res.mc_stderr,
            "provenance": "monte_carlo",
            "n": res.n_meander,
            "grid_step": 1.0 / meander_steps,
            "quadrature_error": res.quadrature_error,
            "t_min_truncation": res.t_min_truncation,
            "excluded": res.excluded,
        },
    }
    if tm.mu_is_zero and g_params is not None and h_linear is not None:
        a1, b1 = g_params
        a2, b2 = _parse_floats(h_linear, 2, "--h-linear")
        results["closed_reference"] = {
            "value": bm_linear_gateaux_closed_lhs(a1, a2, b1, b2),
            "provenance": "closed_form",
        }
    _emit("gateaux", inputs, results, seed, fmt, out, t0)


@cli.command("verify-example1")
@click.option("--a1", type=float, default=1.0)
@click.option("--a2", type=float, default=1.0)
@click.option("--b1", type=float, default=1.0)
@click.option("--b2", type=float, default=1.0)
@click.option("--tol", type=float, default=1e-6, help="Quadrature tolerance.")
@click.option("--threshold", type=float, default=0.002,
              help="Allowed |lhs - rhs|.")
@_out_options
def verify_example1(a1, a2, b1, b2, tol, threshold, out, fmt):
    """Check the closed derivative against the independent quadrature.

    Reference values: 0.379 for a1=a2=b1=b2=1 and 0.442 for
    (1, -0.5, -1, 2). Exits 3 when the two routes disagree beyond the
    threshold.
    """
    t0 = time.perf_counter()
    lhs = bm_linear_gateaux_closed_lhs(a1, a2, b1, b2)
    rhs = bm_linear_gateaux_quadrature_rhs(a1, a2, b1, b2, tol=tol)
    diff = abs(lhs - rhs)
    passed = bool(diff < threshold)
    inputs = {"a1": a1, "a2": a2, "b1": b1, "b2": b2, "tol": tol,
              "threshold": threshold}
    results = {
        "lhs": {"value": lhs, "provenance": "closed_form"},
        "rhs": {"value": rhs, "provenance": "quadrature", "tol": tol},
        "comparison": {"abs_diff": diff, "threshold": threshold,
                       "passed": passed, "provenance": "quadrature"},
    }
    _emit("verify-example1", inputs, results, None, fmt, out, t0)
    if not passed:
        raise NumericalFailure(
            f"|lhs - rhs| = {diff:.3g} exceeds threshold {threshold:g}")


@cli.command("verify-example2")
@click.option("--n", type=int, default=10000, help="Paths per offset.")
@click.option("--window", type=float, default=0.1)
@click.option("--offsets", default=None,
              help="Comma-separated offsets; default 10 evenly spaced.")
@click.option("--step", type=float, default=1e-4)
@click.option("--step2", type=float, default=1e-5)
@click.option("--split", type=float, default=0.99)
@click.option("--slope-lo", type=float, default=1.30)
@click.option("--slope-hi", type=float, default=1.40)
@_seed_option
@_out_options
def verify_example2(n, window, offsets, step, step2, split, slope_lo,
                    slope_hi, seed, out, fmt):
    """Daniels-boundary regression for f(1, 0) against its exact value.

    Reference values: simulated slope near 1.35 (discrete detection biases
    it above the exact 1.33); exact coefficient 1.3301. Exits 3 when the
    slope leaves [--slope-lo, --slope-hi].
    """
    t0 = time.perf_counter()
    d = k1 = k2 = 0.5
    t = 1.0
    x = 0.0
    boundary = daniels_boundary(d, k1, k2)
    grid = two_regime_times(t, split, step, step2)
    seed = _pick_seed(seed)
    if offsets is not None:
        offs = [float(p) for p in offsets.split(",")]
    else:
        offs = list(np.linspace(window / 10.0, window, 10))
    est = estimate_f_regression(brownian_model(), boundary, t, x, window,
                                offs, n, grid, seed)
    exact = daniels_f(d, k1, k2, t, x)
    in_range = bool(slope_lo <= est.slope <= slope_hi)
    inputs = {"boundary": f"daniels:{d},{k1},{k2}", "t": t, "x": x,
              "window": window, "offsets": [float(o) for o in offs], "n": n,
              "step": step, "step2": step2, "split": split,
              "slope_lo": slope_lo, "slope_hi": slope_hi}
    results = {
        "slope": {
            "value": est.slope,
            "stderr": _wls_slope_stderr(est.points, est.through_origin),
            "provenance": "monte_carlo",
            "n": n * len(offs),
            "grid_step": float(np.max(np.diff(grid))),
        },
        "exact_reference": {"value": exact, "provenance": "closed_form"},
        "points": [
            {"offset": off, "value": m.value, "stderr": m.stderr, "n": m.n,
             "provenance": "monte_carlo"}
            for off, m in est.points
        ],
        "comparison": {"in_range": in_range, "slope_lo": slope_lo,
                       "slope_hi": slope_hi, "provenance": "monte_carlo"},
    }
    _emit("verify-example2", inputs, results, seed, fmt, out, t0)
    if not in_range:
        raise NumericalFailure(
            f"slope {est.slope:.4f} outside [{slope_lo}, {slope_hi}]")


@cli.command("check-conditions")
@click.option("--model", default="bm", help="bm or ou:<theta>.")
@click.option("--t", type=float, default=1.0)
@click.option("--y-lo", type=float, default=-30.0)
@click.option("--y-hi", type=float, default=5.0)
@click.option("--points", type=int, default=400)
@click.option("--threshold", type=float, default=None,
              help="Override the 4/t^2 default (1.0 for the sensitivity "
                   "context).")
@_out_options
def check_conditions(model, t, y_lo, y_hi, points, threshold, out, fmt):
    """Drift growth diagnostic for the transformed model. Exits 3 on failure."""
    t0 = time.perf_counter()
    tm, model_tag = _make_model(model)
    diag = check_growth_condition(tm, t, (y_lo, y_hi), points,
                                  threshold=threshold)
    inputs = {"model": model_tag, "t": t, "y_lo": y_lo, "y_hi": y_hi,
              "points": points, "threshold": threshold}
    results = {
        "growth": {"limsup_ratio": diag.limsup_ratio,
                   "threshold": diag.threshold,
                   "passes": bool(diag.passes),
                   "provenance": "closed_form"},
    }
    _emit("check-conditions", inputs, results, None, fmt, out, t0)
    if not diag.passes:
        raise NumericalFailure(
            f"growth ratio {diag.limsup_ratio:.3g} >= {diag.threshold:.3g}")


# ---------------------------------------------------------------------------
# entry point


def main(argv=None):
    """Run the CLI with the documented exit-code contract."""
    try:
        cli.main(args=argv, standalone_mode=False, prog_name="fptlab")
        return 0
    except click.exceptions.Exit as e:
        return int(e.exit_code)
    except click.exceptions.NoSuchOption as e:
        click.echo(f"Error: {e.format_message()}", err=True)
        if e.ctx is not None:
            click.echo(e.ctx.get_usage(), err=True)
        return 1
    except click.exceptions.MissingParameter as e:
        click.echo(f"Error: {e.format_message()}", err=True)
        if e.ctx is not None:
            click.echo(e.ctx.get_usage(), err=True)
        return 1
    except click.exceptions.BadParameter as e:
        click.echo(f"Error: {e.format_message()}", err=True)
        return 2
    except click.exceptions.UsageError as e:
        click.echo(f"Error: {e.format_message()}", err=True)
        if e.ctx is not None:
            click.echo(e.ctx.get_usage(), err=True)
        return 1
    except click.exceptions.Abort:
        click.echo("Aborted.", err=True)
        return 1
    except NumericalFailure as e:
        click.echo(f"Error: {e}", err=True)
        return 3
    except (ValueError, TypeError) as e:
        click.echo(f"Error: {e}", err=True)
        return 2
    except RuntimeError as e:
        click.echo(f"Error: {e}", err=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())
