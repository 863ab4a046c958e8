"""File-driven command line: simulation, variogram tables, fitting, kriging,
extremes workflows and mesh-convergence diagnostics.

All outputs are plain CSV/JSON for downstream plotting; every output file
starts with a comment line carrying the hash of the fully resolved config.
Exit codes: 0 success (including unconverged fits, which are flagged in the
report), 2 input/schema error, 3 numerical failure.
"""

import hashlib
import json
import sys

import click
import numpy as np

from . import extremes, fem, gmrf, inference, kriging, meshing, rational, variogram
from .sparse import SparseLinAlgError

MODEL_KEYS = {"tau", "kappa", "alpha", "beta", "sigma2", "d"}
TOP_KEYS = {"schema", "model", "orders", "seed"}


class InputError(Exception):
    pass


def _load_config(path, fixes=()):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config: {exc}") from exc
    if cfg.get("schema") != 1:
        raise InputError("config must declare \"schema\": 1")
    unknown = set(cfg) - TOP_KEYS
    if unknown:
        raise InputError(f"unknown config keys: {sorted(unknown)}")
    model = dict(cfg.get("model", {}))
    unknown = set(model) - MODEL_KEYS
    if unknown:
        raise InputError(f"unknown model keys: {sorted(unknown)}")
    for fix in fixes:
        if "=" not in fix:
            raise InputError(f"--fix expects name=value, got {fix!r}")
        name, value = fix.split("=", 1)
        if name not in MODEL_KEYS:
            raise InputError(f"--fix refers to unknown parameter {name!r}")
        model[name] = float(value) if name != "d" else int(value)
    cfg["model"] = model
    return cfg


def _params(cfg):
    try:
        return gmrf.ModelParams(**cfg["model"])
    except (TypeError, gmrf.ModelError) as exc:
        raise InputError(f"invalid model parameters: {exc}") from exc


def _config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _resolve_mesh(cfg, mesh_path, grid_spec, d):
    if mesh_path and grid_spec:
        raise InputError("give either --mesh or --grid, not both")
    if mesh_path:
        return meshing.read_mesh(mesh_path)
    if grid_spec is None:
        raise InputError("a mesh is required: pass --mesh or --grid")
    parts = grid_spec.split(":")
    try:
        gd = int(parts[0])
        if gd == 1:
            lo, hi, n = float(parts[1]), float(parts[2]), int(parts[3])
            m = meshing.build_uniform(1, (lo, hi), n)
        else:
            lo1, hi1, n1, lo2, hi2, n2 = (float(parts[1]), float(parts[2]),
                                          int(parts[3]), float(parts[4]),
                                          float(parts[5]), int(parts[6]))
            m = meshing.build_uniform(2, ((lo1, hi1), (lo2, hi2)), (n1, n2))
    except (IndexError, ValueError) as exc:
        raise InputError(f"bad --grid spec {grid_spec!r}: "
                         "use d:lo:hi:n or 2:lo1:hi1:n1:lo2:hi2:n2") from exc
    if gd != d:
        raise InputError(f"grid dimension {gd} does not match model d={d}")
    return m


def _write_lines(out, header_cfg, lines):
    text = f"# config-sha256={_config_hash(header_cfg)}\n" + "\n".join(lines) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _read_obs_csv(path, d):
    try:
        raw = np.genfromtxt(path, delimiter=",", names=True)
    except OSError as exc:
        raise InputError(f"cannot read observations: {exc}") from exc
    names = raw.dtype.names
    if names is None or len(names) != d + 1:
        raise InputError(f"observation CSV must have {d + 1} columns (s1[,s2],value)")
    cols = np.vstack([raw[n] for n in names]).T
    return cols[:, :d], cols[:, d]


def _read_exceedance_csv(path, d):
    """Header cells carry the site coordinates ('x' or 'x|y'); rows are events."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip()
            while header.startswith("#"):
                header = fh.readline().strip()
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read exceedance CSV: {exc}") from exc
    sites = []
    for cell in header.split(","):
        coords = [float(t) for t in cell.strip().split("|")]
        if len(coords) != d:
            raise InputError("exceedance header does not match the model dimension")
        sites.append(coords)
    sites = np.array(sites)
    if data.shape[1] != len(sites):
        raise InputError("exceedance rows do not match the number of sites")
    return sites, data


def _write_exceedance_csv(out, cfg, sites, rows):
    header = ",".join("|".join(repr(float(c)) for c in site) for site in sites)
    lines = [header] + [",".join(repr(float(x)) for x in row) for row in rows]
    _write_lines(out, cfg, lines)


@click.group()
def main():
    """Intrinsic Whittle-Matern fields: simulation, inference and extremes."""


@main.command("variogram")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--h", "h_spec", default="0.1:10:25", show_default=True,
              help="distance grid start:stop:num (log-spaced)")
@click.option("--backend", default="auto",
              type=click.Choice(["auto", "quadrature", "closed-form", "box"]))
@click.option("--box-side", default=None, type=float)
@click.option("--out", default=None, type=click.Path())
def cmd_variogram(config_path, h_spec, backend, box_side, out):
    """Tabulate the variogram on a distance grid."""
    cfg = _load_config(config_path)
    p = _params(cfg)
    lo, hi, num = h_spec.split(":")
    if float(lo) == 0.0:
        hs = np.concatenate([[0.0], np.geomspace(float(hi) / 10 ** (int(num) - 2),
                                                 float(hi), int(num) - 1)])
    else:
        hs = np.geomspace(float(lo), float(hi), int(num))
    lines = ["h,gamma,backend"]
    for h in hs:
        if backend == "quadrature":
            g, tag = variogram.stationary(p, h), "quadrature"
        elif backend == "closed-form":
            g, tag = variogram.evaluate(p, h, backend="closed-form"), "closed-form"
        elif backend == "box":
            g, tag = variogram.evaluate(p, h, backend="box", L=box_side), "box"
        else:
            try:
                g, tag = variogram.evaluate(p, h, backend="closed-form"), "closed-form"
            except variogram.RegimeError:
                g, tag = variogram.stationary(p, h), "quadrature"
        lines.append(f"{float(h)!r},{float(g)!r},{tag}")
    _write_lines(out, cfg, lines)


@main.command("simulate")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--mesh", "mesh_path", default=None, type=click.Path())
@click.option("--grid", "grid_spec", default=None)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--n", "n_samples", default=1, type=int, show_default=True)
@click.option("--out", default=None, type=click.Path())
def cmd_simulate(config_path, mesh_path, grid_spec, seed, n_samples, out):
    """Sample the field at the mesh nodes."""
    cfg = _load_config(config_path)
    p = _params(cfg)
    mesh = _resolve_mesh(cfg, mesh_path, grid_spec, p.d)
    model = gmrf.build(mesh, p, orders=tuple(cfg["orders"]) if "orders" in cfg else "auto")
    W = gmrf.sample(model, seed, size=n_samples)
    coords = mesh.vertices
    head = ",".join(f"x{i+1}" for i in range(p.d))
    lines = [head + "," + ",".join(f"w{j+1}" for j in range(n_samples))]
    for i in range(mesh.n_vertices):
        lines.append(",".join(repr(float(c)) for c in coords[i]) + ","
                     + ",".join(repr(float(W[j, i])) for j in range(n_samples)))
    _write_lines(out, cfg, lines)


@main.command("fit")
@click.argument("observations", type=click.Path())
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--mesh", "mesh_path", default=None, type=click.Path())
@click.option("--grid", "grid_spec", default=None)
@click.option("--fix", "fixes", multiple=True,
              help="pin a parameter, e.g. --fix beta=1 (repeatable)")
@click.option("--extremes", "extremes_mode", is_flag=True, default=False)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--out", default=None, type=click.Path())
def cmd_fit(observations, config_path, mesh_path, grid_spec, fixes,
            extremes_mode, seed, out):
    """Maximum likelihood fit from an observation (or exceedance) CSV."""
    cfg = _load_config(config_path, fixes)
    p = _params(cfg)
    mesh = _resolve_mesh(cfg, mesh_path, grid_spec, p.d)
    fixed_names = tuple(f.split("=", 1)[0] for f in fixes)
    if extremes_mode:
        sites, Y = _read_exceedance_csv(observations, p.d)
        report = _fit_extremes(mesh, p, sites, Y, fixed_names, seed)
    else:
        sites, values = _read_obs_csv(observations, p.d)
        obs = inference.ObservationSet(sites, values)
        report = inference.fit(mesh, obs, p, fixed=fixed_names, seed=seed)
    _write_lines(out, cfg, report.to_json().splitlines())


@main.command("extremes-fit")
@click.argument("observations", type=click.Path())
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--mesh", "mesh_path", default=None, type=click.Path())
@click.option("--grid", "grid_spec", default=None)
@click.option("--fix", "fixes", multiple=True)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--out", default=None, type=click.Path())
def cmd_extremes_fit(observations, config_path, mesh_path, grid_spec, fixes,
                     seed, out):
    """Fit the extremal dependence parameters from an exceedance CSV."""
    cfg = _load_config(config_path, fixes)
    p = _params(cfg)
    mesh = _resolve_mesh(cfg, mesh_path, grid_spec, p.d)
    sites, Y = _read_exceedance_csv(observations, p.d)
    fixed_names = tuple(f.split("=", 1)[0] for f in fixes)
    report = _fit_extremes(mesh, p, sites, Y, fixed_names, seed)
    _write_lines(out, cfg, report.to_json().splitlines())


def _fit_extremes(mesh, init, sites, Y, fixed, seed, restarts=2):
    """Nelder-Mead on the sparse surrogate likelihood of the exceedances."""
    from scipy.optimize import minimize
    free = [n for n in ("tau", "kappa", "alpha", "beta", "sigma2")
            if n not in set(fixed) and n in ("tau", "kappa")]
    base = {k: getattr(init, k) for k in ("tau", "kappa", "alpha", "beta", "sigma2")}

    def objective(x):
        kw = dict(base)
        for name, xi in zip(free, x):
            kw[name] = float(np.exp(xi))
        try:
            pp = gmrf.ModelParams(d=init.d, **kw)
            return -extremes.surrogate_loglik(mesh, pp, sites, Y, j0=0)
        except Exception:
            return 1e12

    x0 = np.array([np.log(base[n]) for n in free])
    rng = np.random.default_rng(seed)
    best = None
    nit = 0
    ok = False
    for r in range(restarts):
        start = x0 if r == 0 else x0 + 0.2 * rng.standard_normal(len(free))
        res = minimize(objective, start, method="Nelder-Mead",
                       options=dict(maxiter=120, xatol=1e-3, fatol=1e-5))
        nit += res.nit
        ok = ok or bool(res.success)
        if best is None or res.fun < best.fun:
            best = res
    kw = dict(base)
    for name, xi in zip(free, best.x):
        kw[name] = float(np.exp(xi))
    p_best = gmrf.ModelParams(d=init.d, **kw)
    model = gmrf.build(mesh, p_best)
    return inference.FitReport(p_best, float(-best.fun), nit, int(best.nfev),
                               ok, model.orders)


@main.command("krige")
@click.argument("observations", type=click.Path())
@click.argument("targets", type=click.Path())
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--mesh", "mesh_path", default=None, type=click.Path())
@click.option("--grid", "grid_spec", default=None)
@click.option("--truth", "truth_path", default=None, type=click.Path(),
              help="CSV of true values at the targets; appends a CRPS line")
@click.option("--out", default=None, type=click.Path())
def cmd_krige(observations, targets, config_path, mesh_path, grid_spec,
              truth_path, out):
    """Kriging predictions (mean, sd) at target sites from an observation CSV."""
    cfg = _load_config(config_path)
    p = _params(cfg)
    mesh = _resolve_mesh(cfg, mesh_path, grid_spec, p.d)
    sites, values = _read_obs_csv(observations, p.d)
    tgt = np.loadtxt(targets, delimiter=",", skiprows=1, ndmin=2)[:, :p.d]
    model = gmrf.build(mesh, p)
    A = fem.projection(mesh, sites)
    Gam = gmrf.fem_variogram(model, A, include_nugget=True)
    lines = [",".join(f"x{i+1}" for i in range(p.d)) + ",mean,sd"]
    full = gmrf.fem_variogram(
        model, fem.projection(mesh, np.vstack([tgt, sites])), include_nugget=True)
    nt = len(tgt)
    means = np.empty(nt)
    sds = np.empty(nt)
    for i in range(nt):
        g0 = full[nt:, i]
        res = kriging.krige_variogram(Gam, g0, values)
        means[i] = res.prediction
        sds[i] = np.sqrt(max(res.variance, 1e-300))
        lines.append(",".join(repr(float(c)) for c in tgt[i])
                     + f",{float(means[i])!r},{float(sds[i])!r}")
    if truth_path is not None:
        truth = np.loadtxt(truth_path, delimiter=",", skiprows=1, ndmin=1)
        lines.append(f"# mean_crps,{crps_gaussian(means, sds, truth)!r}")
    _write_lines(out, cfg, lines)


@main.command("extremes-simulate")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--mesh", "mesh_path", default=None, type=click.Path())
@click.option("--grid", "grid_spec", default=None)
@click.option("--sites", "sites_spec", required=True,
              help="comma-separated site coordinates, e.g. 0.1,0.3,0.7 "
                   "(d=2: x|y triples)")
@click.option("--s0", default=0, type=int, show_default=True)
@click.option("--n", "n_events", default=100, type=int, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--out", default=None, type=click.Path())
def cmd_extremes_simulate(config_path, mesh_path, grid_spec, sites_spec, s0,
                          n_events, seed, out):
    """Simulate r-Pareto exceedance events at the given sites."""
    cfg = _load_config(config_path)
    p = _params(cfg)
    mesh = _resolve_mesh(cfg, mesh_path, grid_spec, p.d)
    sites = np.array([[float(t) for t in cell.split("|")]
                      for cell in sites_spec.split(",")])
    rows = extremes.simulate_pareto(mesh, p, sites, s0, n_events, seed)
    _write_exceedance_csv(out, cfg, sites, rows)


@main.command("extremes-krige")
@click.argument("observations", type=click.Path())
@click.argument("targets", type=click.Path())
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--mesh", "mesh_path", default=None, type=click.Path())
@click.option("--grid", "grid_spec", default=None)
@click.option("--event", default=0, type=int, show_default=True,
              help="row index of the conditioning event")
@click.option("--simulate", "n_sim", default=0, type=int, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--out", default=None, type=click.Path())
def cmd_extremes_krige(observations, targets, config_path, mesh_path,
                       grid_spec, event, n_sim, seed, out):
    """Extremal kriging at target sites given one conditioning event."""
    cfg = _load_config(config_path)
    p = _params(cfg)
    mesh = _resolve_mesh(cfg, mesh_path, grid_spec, p.d)
    sites, Y = _read_exceedance_csv(observations, p.d)
    tgt = np.loadtxt(targets, delimiter=",", skiprows=1, ndmin=2)[:, :p.d]
    if not 0 <= event < len(Y):
        raise InputError("event row out of range")
    stacked = np.vstack([sites, tgt])
    hr = extremes.HuslerReissModel.from_fem(mesh, p, stacked)
    O = np.arange(len(sites))
    U = np.arange(len(sites), len(stacked))
    mean, Quu = extremes.conditional_law(hr.theta, O, U, Y[event])
    sd = np.sqrt(extremes.Factor(Quu).inverse_diagonal())
    lines = [",".join(f"x{i+1}" for i in range(p.d)) + ",mean,sd"]
    for i in range(len(tgt)):
        lines.append(",".join(repr(float(c)) for c in tgt[i])
                     + f",{float(mean[i])!r},{float(sd[i])!r}")
    _write_lines(out, cfg, lines)
    if n_sim > 0:
        sims = extremes.conditional_simulate(hr.theta, Y[event], O, U, n_sim, seed)
        sim_out = (out + ".samples.csv") if out else None
        _write_exceedance_csv(sim_out, cfg, tgt, sims)


@main.command("convergence")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--levels", default=4, type=int, show_default=True)
@click.option("--base-n", default=9, type=int, show_default=True)
@click.option("--out", default=None, type=click.Path())
def cmd_convergence(config_path, levels, base_n, out):
    """Variogram L2 error against the box-expansion reference per refinement."""
    if levels > 6:
        raise InputError("at most 6 refinement levels")
    cfg = _load_config(config_path)
    p = _params(cfg)
    deltas, errors, orders_used = convergence_study(p, levels, base_n)
    lines = ["delta,l2_error,m,m_tilde"]
    for dl, er, (m, mt) in zip(deltas, errors, orders_used):
        lines.append(f"{float(dl)!r},{float(er)!r},{m},{mt}")
    slope = fitted_slope(deltas, errors)
    lines.append(f"# fitted_slope,{float(slope)!r}")
    _write_lines(out, cfg, lines)


def convergence_study(p, levels, base_n=9, n_eval=17):
    """Refinement ladder of variogram L2 errors on the unit interval/square."""
    if p.d != 1:
        raise InputError("the convergence study is implemented on the unit interval")
    mesh = meshing.build_uniform(1, (0.0, 1.0), base_n)
    pts = np.linspace(0.02, 0.98, n_eval)
    exact = np.array([[variogram.box_series(p, 1.0, [a], [b]) for b in pts]
                      for a in pts])
    deltas, errors, orders_used = [], [], []
    for _ in range(levels):
        delta = meshing.quality(mesh).delta
        # margin 3 absorbs the minimax prefactor hidden by the asymptotics
        m, mt = rational.select_orders(p.alpha, p.beta, p.d, delta, margin=3.0)
        model = gmrf.build(mesh, p, orders=(m, mt))
        A = fem.projection(mesh, pts[:, None])
        Gam = gmrf.fem_variogram(model, A, include_nugget=False)
        err = np.sqrt(np.mean((Gam - exact) ** 2))
        deltas.append(delta)
        errors.append(float(err))
        orders_used.append((m, mt))
        mesh = meshing.refine(mesh)
    return deltas, errors, orders_used


def fitted_slope(deltas, errors):
    return float(np.polyfit(np.log(deltas), np.log(errors), 1)[0])


def crps_gaussian(mean, sd, truth):
    """CRPS of a normal predictive distribution (small scoring utility)."""
    from scipy.special import ndtr
    z = (truth - mean) / sd
    pdf = np.exp(-0.5 * z ** 2) / np.sqrt(2 * np.pi)
    return float(np.mean(sd * (z * (2 * ndtr(z) - 1) + 2 * pdf - 1 / np.sqrt(np.pi))))


def run():
    try:
        main(standalone_mode=False)
    except (InputError, click.ClickException, click.UsageError) as exc:
        click.echo(f"input error: {exc}", err=True)
        sys.exit(2)
    except (SparseLinAlgError, variogram.RegimeError, gmrf.ModelError,
            extremes.ExtremesError, ArithmeticError, np.linalg.LinAlgError) as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(3)


if __name__ == "__main__":
    run()
