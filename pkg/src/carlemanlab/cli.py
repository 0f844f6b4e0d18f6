"""Command-line batch runner.

Each command reads a ``RunConfig``, runs one verification and writes
``<command>.json``, ``<command>.csv`` and ``<command>_plot.dat`` to the output
directory. Exit codes: 0 all checks pass, 1 a tolerance is violated, 2 the
configuration is invalid, 3 an input lies outside its domain.
"""

import argparse
import sys
from dataclasses import dataclass, field

import numpy as np

from .carleman import default_bump, integral_carleman_check, reparam_label, vanishing_order_fit
from .config import RunConfig, parse_grid_spec
from .errors import ConfigError, DomainError, StepTooLarge, ToleranceError
from .fields import foliation_field, random_power_field
from .foliation import (
    ZeroMass,
    eval_f,
    minkowski_pi_closed,
    positivity_threshold,
    pseudoconvexity_tensor,
    schwarzschild_pi_closed,
    tortoise_constant,
)
from .geometry import (
    MetricSpec,
    christoffel_closed,
    christoffel_fd_oracle,
    eval_metric,
    hessian_fd_oracle,
    hessian_scalar,
    relative_error,
)
from .kerr import kerr_class_certificate
from .modes import f_sigma_grid
from .reports import write_report

EXIT_OK, EXIT_TOLERANCE, EXIT_CONFIG, EXIT_DOMAIN = 0, 1, 2, 3


@dataclass
class CommandResult:
    """Summary for JSON, table rows for CSV and ``(x, y)`` plot columns."""

    name: str
    passed: bool
    summary: dict
    header: list
    rows: list
    plot: tuple = ((), ())
    plot_header: str = ""
    notes: list = field(default_factory=list)


def _grid_points(cfg, mode):
    f, s, angles = cfg.grid_axes()
    return f_sigma_grid(mode, cfg.n, f, s, angles)


# -- commands ---------------------------------------------------------------------------


def cmd_geometry_check(cfg):
    """Closed-form Christoffels and Hessians against finite-difference oracles."""
    spec = cfg.metric_spec()
    mode = cfg.mode()
    x = _grid_points(cfg, mode)
    step = cfg.getfloat("geometry", "step")
    summary = {"command": "geometry-check", "background": spec.family, "picture": spec.picture, "points": x.shape[1],
               "step": step}
    notes = []
    passed = True
    try:
        gam_fd, _ = christoffel_fd_oracle(spec, x, step=step, tol=cfg.tolerance("fd_error"))
    except StepTooLarge as exc:
        summary.update({"status": "StepTooLarge", "diagnostic": str(exc)})
        return CommandResult("geometry-check", False, summary, ["point", "christoffel_rel"], [],
                             notes=["StepTooLarge: " + str(exc)])
    chris = relative_error(gam_fd, christoffel_closed(spec, x), 3)
    metric = eval_metric(spec, x, pole_margin=0.0)
    rng = np.random.default_rng(cfg.seed)
    fields = [foliation_field(mode, cfg.n)] + [
        random_power_field(rng, mode, cfg.n) for _ in range(cfg.getint("geometry", "random_fields"))
    ]
    hstep = cfg.getfloat("geometry", "hessian_step")
    hess = np.zeros(x.shape[1])
    for fld in fields:
        closed = hessian_scalar(spec, fld, x, metric)
        oracle = hessian_fd_oracle(spec, fld.value, x, step=hstep)
        hess = np.maximum(hess, relative_error(oracle, closed, 2))
    summary["max_christoffel_discrepancy"] = float(np.max(chris))
    summary["max_hessian_discrepancy"] = float(np.max(hess))
    passed &= bool(np.max(chris) <= cfg.tolerance("christoffel"))
    passed &= bool(np.max(hess) <= cfg.tolerance("hessian"))
    p = spec.param_dict
    if spec.family == "Kerr" and p["a"] == 0:
        schw = MetricSpec.create("Schwarzschild", n=3, picture=spec.picture, warp=spec.warp, mode=spec.mode,
                                 m=p["m"], r0=p["r0"])
        diff = float(np.max(relative_error(spec.metric(x), schw.metric(x), 2)))
        summary["schwarzschild_discrepancy"] = diff
        ok = diff <= cfg.tolerance("reduction")
        passed &= ok
        notes.append("reduces to Schwarzschild" if ok else "Kerr with a=0 differs from Schwarzschild")
    summary["notes"] = notes
    summary["status"] = "pass" if passed else "fail"
    rows = [[i, float(c), float(h)] for i, (c, h) in enumerate(zip(chris, hess))]
    rstar = x[1] - x[0]
    order = np.argsort(rstar, kind="stable")
    return CommandResult("geometry-check", passed, summary, ["point", "christoffel_rel", "hessian_rel"], rows,
                         (rstar[order], chris[order]), "r* christoffel_rel", notes)


def _closed_pi(spec, mode, x):
    """Closed-form tangential ``pi`` where one is known, else ``None``."""
    if spec.family == "Minkowski" and isinstance(mode, ZeroMass) and spec.picture in ("physical", "inverted"):
        f, _ = eval_f(mode, x)
        return minkowski_pi_closed(mode, x[1] - x[0], f, spec.picture)
    if spec.family == "Schwarzschild" and spec.picture == "inverted":
        p = spec.param_dict
        return schwarzschild_pi_closed(p["m"], spec.scalar("r", x), x[1] - x[0], tortoise_constant(p["m"], p["r0"]))
    return None


def cmd_pseudoconvexity(cfg):
    """Tangential block of ``pi`` on the grid, closed forms, and the positivity threshold."""
    spec = cfg.metric_spec()
    mode = cfg.mode()
    x = _grid_points(cfg, mode)
    h = cfg.get("pseudoconvexity", "h")
    closed = _closed_pi(spec, mode, x)
    if h == "auto":
        h = "model" if closed is not None else "shifted"
    res = pseudoconvexity_tensor(spec, mode, x, h)
    tang = res.pi[:-1, :-1]
    summary = {"command": "pseudoconvexity", "background": spec.family, "picture": spec.picture, "h": h,
               "points": x.shape[1], "min_tangential_eigenvalue": float(np.min(res.min_tangential_eigenvalue)),
               "positive_fraction": float(np.mean(res.min_tangential_eigenvalue > 0))}
    passed = True
    rel = np.full(x.shape[1], np.nan)
    if closed is not None:
        k = tang.shape[0]
        diag = np.stack([tang[i, i] for i in range(k)])
        rel = np.max(np.abs(diag - closed) / np.abs(closed), axis=0)
        off = max((float(np.max(np.abs(tang[i, j]))) for i in range(k) for j in range(k) if i != j), default=0.0)
        summary["closed_form_rel_error"] = float(np.max(rel))
        summary["max_off_diagonal"] = off
        passed = bool(np.max(rel) <= cfg.tolerance("closed_form"))
    f_ray = np.geomspace(cfg.getfloat("pseudoconvexity", "ray_f_min"), cfg.getfloat("grid", "f_max"),
                         cfg.getint("pseudoconvexity", "ray_count"))
    threshold, rs, eig = positivity_threshold(spec, mode, h, f_ray)
    summary["positivity_threshold_rstar"] = threshold
    summary["status"] = "pass" if passed else "fail"
    rows = [[i, float(e), float(r)] for i, (e, r) in enumerate(zip(res.min_tangential_eigenvalue, rel))]
    return CommandResult("pseudoconvexity", passed, summary, ["point", "min_tangential_eigenvalue", "closed_rel"],
                         rows, (rs, eig), "r* min_tangential_eigenvalue")


def cmd_carleman(cfg):
    """Weighted Carleman integrals for the reference bump over the lambda sweep."""
    spec = cfg.metric_spec(picture=cfg.get("carleman", "picture"))
    mode = cfg.mode()
    reparam = cfg.reparam()
    half = cfg.getfloat("carleman", "sigma_half_width")
    psi = default_bump(mode, cfg.n, cfg.getfloat("carleman", "omega_prime"), (-half, half))
    sweep = integral_carleman_check(spec, mode, reparam, psi, cfg.lambdas, refine_tol=cfg.tolerance("refinement"),
                                    raise_on_violation=False)
    tol = cfg.tolerance("exponent")
    expected = {"rhs_normal": 1.0, "rhs_tangential": 1.0, "rhs_zero": 3.0}
    exps_ok = all(abs(sweep.exponents[k] - v) <= tol for k, v in expected.items()) if sweep.exponents else True
    passed = bool(sweep.passed and exps_ok)
    ratios = [r.ratio for r in sweep.reports]
    summary = {
        "command": "carleman",
        "background": spec.family,
        "picture": spec.picture,
        "reparam": reparam_label(reparam),
        "lambdas": [r.lam for r in sweep.reports],
        "ratios": ratios,
        "constant": sweep.constant,
        "exponents": {k: sweep.exponents.get(k) for k in ("rhs_normal", "rhs_tangential", "rhs_zero", "lhs")},
        "refinement_change": sweep.refinement_change,
        "constant_holds": bool(sweep.passed),
        "exponents_match": bool(exps_ok),
        "verdict": "pass" if passed else "fail",
        "status": "pass" if passed else "fail",
    }
    keys = ["lambda", "lhs", "rhs_normal", "rhs_tangential", "rhs_zero", "ratio", "divergence_residual"]
    rows = [[r.as_dict()[k] for k in keys] for r in sweep.reports]
    return CommandResult("carleman", passed, summary, keys, rows, (summary["lambdas"], ratios), "lambda ratio")


def cmd_kerr_certificate(cfg):
    """Decay orders of Kerr minus Schwarzschild in comoving coordinates."""
    params = cfg.kerr_params()
    cert = kerr_class_certificate(params, cfg.kerr_radii(), cfg.getfloat("kerr", "theta0"),
                                  tol=cfg.tolerance("kerr_order"), raise_on_failure=False)
    summary = {
        "command": "kerr-certificate",
        "m": params.m,
        "a": params.a,
        "theta0": cert.theta0,
        "identically_zero": cert.identically_zero,
        "mass_deviation": cert.mass_deviation,
        "components": cert.rows,
        "notes": cert.notes,
        "status": "pass" if cert.passed else "fail",
    }
    rows = [[r["component"], r["predicted_order"], "zero" if r["fitted_order"] is None else float(r["fitted_order"]),
             r["pass"]] for r in cert.rows]
    px = [r["predicted_order"] for r in cert.rows]
    py = [0.0 if r["fitted_order"] is None else r["fitted_order"] for r in cert.rows]
    return CommandResult("kerr-certificate", cert.passed, summary,
                         ["component", "predicted_order", "fitted_order", "pass"], rows, (px, py),
                         "predicted_order fitted_order", cert.notes)


def cmd_vanishing_orders(cfg):
    """Decay orders of the exterior harmonics ``phi_N``."""
    orders = [int(t) for t in cfg.getlist("vanishing", "orders")]
    if any(N < 0 for N in orders):
        raise ConfigError("vanishing orders must be nonnegative")
    fits = [vanishing_order_fit(N, cfg.n) for N in orders]
    tol, box_tol = cfg.tolerance("vanishing_order"), cfg.tolerance("box_residual")
    expected = {"n": cfg.n}
    rows, passed = [], True
    for fit in fits:
        pred = fit.N + cfg.n - 2
        ok = abs(fit.order - pred) <= tol and fit.box_residual <= box_tol
        passed &= ok
        rows.append([fit.N, pred, fit.order, fit.box_residual, ok])
    summary = {
        "command": "vanishing-orders",
        **expected,
        "fits": [{"N": r[0], "predicted_order": r[1], "fitted_order": r[2], "box_residual": r[3], "pass": r[4]}
                 for r in rows],
        "status": "pass" if passed else "fail",
    }
    return CommandResult("vanishing-orders", bool(passed), summary,
                         ["N", "predicted_order", "fitted_order", "box_residual", "pass"], rows,
                         ([r[0] for r in rows], [r[2] for r in rows]), "N fitted_order")


COMMANDS = {
    "geometry-check": cmd_geometry_check,
    "pseudoconvexity": cmd_pseudoconvexity,
    "carleman": cmd_carleman,
    "kerr-certificate": cmd_kerr_certificate,
    "vanishing-orders": cmd_vanishing_orders,
}


# -- entry point ------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="carlemanlab", description="Numerical checks for Carleman estimates.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.splitlines()[0])
        p.add_argument("--config", help="INI config file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="seed for random test functions")
        p.add_argument("--lambda", dest="lambdas", help="comma-separated lambda sweep")
        p.add_argument("--grid", help="grid spec such as f=1e-3:1e-1:4,sigma=-1:1:3")
    return parser


def _overrides(args):
    out = {}
    if args.out:
        out["output"] = {"dir": args.out}
    if args.seed is not None:
        out["run"] = {"seed": str(args.seed)}
    if args.lambdas:
        out["sweep"] = {"lambdas": args.lambdas}
    if args.grid:
        out["grid"] = parse_grid_spec(args.grid)
    return out


def run(argv=None, env=None):
    """Run a command; return ``(exit_code, CommandResult or None)``."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.load(args.config, env=env, overrides=_overrides(args))
        result = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG, None
    except DomainError as exc:
        print(f"domain error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_DOMAIN, None
    except ToleranceError as exc:
        print(f"tolerance violation ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_TOLERANCE, None
    result.summary["config"] = cfg.as_dict()
    paths = write_report(cfg.out_dir, result.name, result.summary, result.header, result.rows, result.plot,
                         result.plot_header)
    for note in result.notes:
        print(note)
    print(f"{result.name}: {'PASS' if result.passed else 'FAIL'} ({paths['json']})")
    return (EXIT_OK if result.passed else EXIT_TOLERANCE), result


def main(argv=None):
    code, _ = run(argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
