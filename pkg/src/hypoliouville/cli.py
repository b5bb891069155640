"""Command line interface.

    hypoliouville check CONFIG            hypotheses of the Liouville theorems
    hypoliouville kolmogorov CONFIG       classification of a Kolmogorov block
    hypoliouville representation CONFIG   lens measures + residual table
    hypoliouville counterexample CONFIG   annulus-ratio sharpness experiment
    hypoliouville sharp CONFIG            Q and p*

CONFIG is a TOML path or the name of a shipped fixture.  Exit codes: 0 pass,
1 verification failure, 2 usage/parse error, 3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from fractions import Fraction
from typing import Optional

import numpy as np

from . import __version__
from .config import FIXTURES, ConfigError, OperatorConfig, load_config
from .dilation import automorphism_check, homogeneity_degree, sharp_exponent
from .expr import render
from .fields import hormander_check, hormander_fields
from .group import InversionError, invariance_residual, monomial_basis, unimodularity_check, verify_axioms
from .kolmogorov import QuadratureError as KolmogorovQuadratureError
from .kolmogorov import classify

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_NONCONVERGENCE = 0, 1, 2, 3
DEFAULT_POINTS = 100
DEFAULT_DEPTH = 4
REPRESENTATION_TOL = 5e-3
MASS_TOL = 1e-8


class UsageError(ValueError):
    pass


# ------------------------------------------------------------------ helpers


def _number(text: str) -> float:
    """Float from ``0.25``, ``1/64`` or ``1e-3``."""
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _sample_points(n: int, count: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).uniform(-2, 2, size=(count, n))


def _entry(name: str, passed: Optional[bool], **detail) -> dict:
    return {"name": name, "passed": passed, **detail}


def _wrap(name: str, report: dict) -> dict:
    return {**report, "name": name}


def _retol(report: dict, tol: Optional[float]) -> dict:
    """Apply a user tolerance to sampled (non-exact) checks."""
    if tol is None:
        return report
    for c in report.get("checks", []):
        if c.get("method") != "exact":
            c["passed"] = c["worst_residual"] <= tol
    if "checks" in report:
        report["passed"] = all(c["passed"] for c in report["checks"])
    elif report.get("method") not in (None, "exact"):
        report["passed"] = report["worst_residual"] <= tol
    return report


# ------------------------------------------------------------------- check


def cmd_check(cfg: OperatorConfig, args) -> tuple[dict, int]:
    L = cfg.operator
    n = cfg.dimension
    pts = _sample_points(n, args.points, args.seed)
    checks: list[dict] = []
    skipped: list[str] = []
    flags: list[dict] = []

    psd = L.psd_report(pts)
    checks.append(_entry("A_symmetric", True, detail="enforced when the operator is built"))
    checks.append(_entry("A_psd", psd["psd"], min_eigenvalue=psd["min_eigenvalue"], points=psd["n_points"]))

    fields = cfg.fields if cfg.fields is not None else hormander_fields(L)
    hr = hormander_check(fields, pts, max_depth=args.depth)
    checks.append(_entry("hormander", hr.full_rank, **hr.to_dict()))

    if cfg.group is not None:
        ax = _retol(verify_axioms(cfg.group, seed=args.seed).to_dict(), args.tol)
        checks.append(_wrap("group_axioms", ax))
        inv = _retol(invariance_residual(L, cfg.group, seed=args.seed), args.tol)
        checks.append(_wrap("left_invariance", inv))
        uni = _retol(unimodularity_check(cfg.group, seed=args.seed).to_dict(), args.tol)
        checks.append(_wrap("unimodular", uni))
    else:
        skipped += ["group_axioms", "left_invariance", "unimodular"]

    out: dict = {"config": cfg.name, "dimension": n, "time_index": cfg.time_index}
    if cfg.dilation is not None:
        d = cfg.dilation
        if cfg.group is not None:
            auto = _retol(automorphism_check(d, cfg.group, seed=args.seed).to_dict(), args.tol)
            checks.append(_wrap("dilation_automorphism", auto))
        else:
            skipped.append("dilation_automorphism")
        deg = homogeneity_degree(L, d, seed=args.seed)
        checks.append(_entry("homogeneity_degree", deg == 2, degree=None if deg is None else str(deg), expected="2"))
        out["sigma"] = [str(s) for s in d.sigma]
        out["Q"] = str(d.Q)
        out["p_star"] = str(sharp_exponent(d.Q)) if d.Q >= 3 else None
    else:
        skipped += ["dilation_automorphism", "homogeneity_degree", "Q", "p_star"]

    if cfg.kolmogorov is not None:
        cl = classify(cfg.kolmogorov).to_dict()
        checks.append(_entry("kolmogorov_hypoelliptic", cl["hypoelliptic"] is True, kalman_rank=cl["kalman_rank"],
                             gram_min_eigenvalues=cl["gram_min_eigenvalues"], gram_margins=cl["gram_margins"]))
        checks.append(_entry("kolmogorov_unimodular", cl["unimodular"], trace_B=cl["trace_B"]))
        # not a hypothesis of the L^p theorems: reported, never fails the run
        flags.append({"name": "Linf_liouville", "value": "PASS" if cl["Linf_liouville"] else "FAIL",
                      "boundary": cl["Linf_liouville_boundary"], "eigenvalues": cl["eigenvalues"]})

    notes = [hr.note]
    if cfg.group is None:
        notes.append("no group law supplied: group checks skipped")
    if cfg.dilation is None:
        notes.append("no dilation supplied: homogeneity checks skipped")
    passed = all(c["passed"] for c in checks)
    out.update({"passed": passed, "checks": checks, "skipped": skipped, "flags": flags, "notes": notes})
    return out, EXIT_PASS if passed else EXIT_FAIL


def _check_text(r: dict) -> list[str]:
    lines = [f"config {r['config']} (n={r['dimension']}, time={r['time_index']})"]
    for c in r["checks"]:
        extra = ""
        if "worst_residual" in c:
            extra = f" worst_residual={c['worst_residual']:.3g}"
        elif "checks" in c:
            extra = " " + ", ".join(f"{s['name']}:{s['method']}:{s['worst_residual']:.3g}" for s in c["checks"])
        elif "min_rank" in c:
            extra = f" rank {c['min_rank']}..{c['max_rank']}/{r['dimension']} at depth {c['depth_used']}"
        elif "degree" in c:
            extra = f" degree={c['degree']}"
        lines.append(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}{extra}")
    for name in r["skipped"]:
        lines.append(f"SKIP {name}")
    for f in r["flags"]:
        lines.append(f"FLAG {f['name']}: {f['value']}")
    if "Q" in r:
        lines.append(f"Q = {r['Q']}, p* = {r['p_star']}")
    lines += [f"note: {n}" for n in r["notes"]]
    lines.append("overall: " + ("PASS" if r["passed"] else "FAIL"))
    return lines


# -------------------------------------------------------------- kolmogorov


def cmd_kolmogorov(cfg: OperatorConfig, args) -> tuple[dict, int]:
    if cfg.kolmogorov is None:
        raise UsageError("config has no [kolmogorov] block")
    cl = classify(cfg.kolmogorov)
    out = {"config": cfg.name, "A": _matrix_str(cfg.kolmogorov.A), "B": _matrix_str(cfg.kolmogorov.B), **cl.to_dict()}
    # the classification itself succeeded unless the two hypoellipticity tests disagree
    return out, EXIT_PASS if cl.hypoelliptic is not None else EXIT_FAIL


def _matrix_str(M) -> list[list[str]]:
    return [[str(x) for x in row] for row in M]


def _kolmogorov_text(r: dict) -> list[str]:
    eig = ", ".join(f"{a:.10g}{b:+.10g}i" for a, b in r["eigenvalues"])
    return [
        f"config {r['config']}",
        f"hypoelliptic: {r['hypoelliptic']} (Kalman rank {r['kalman_rank']})",
        f"unimodular: {r['unimodular']} (trace B = {r['trace_B']})",
        f"Linf_liouville: {'PASS' if r['Linf_liouville'] else 'FAIL'}" + (" (boundary)" if r["Linf_liouville_boundary"] else ""),
        f"eigenvalues of B: {eig}",
        "Gram min eigenvalues: " + ", ".join(f"t={t}: {v:.6g}" for t, v in r["gram_min_eigenvalues"].items()),
        "Gram rank margins: " + ", ".join(f"t={t}: {v:.6g}" for t, v in r["gram_margins"].items()),
    ] + [f"diagnostic: {d}" for d in r["diagnostics"]]


# ---------------------------------------------------------- representation


def cmd_representation(cfg: OperatorConfig, args) -> tuple[dict, int]:
    from .lens import DEFAULT_REG, GEOMETRY_NOTE, LensDomain, discretize, measures_on_grid, representation_check

    n = cfg.dimension
    if n not in (2, 3):
        raise UsageError("the lens solver supports dimensions 2 and 3")
    dom = LensDomain(n, args.R, args.eps)
    reg = args.reg
    if reg is None:
        probe = _sample_points(n, 200, args.seed) * (dom.radius / 2)
        reg = 0.0 if cfg.operator.psd_report(probe)["min_eigenvalue"] > 1e-12 else DEFAULT_REG
    grid = discretize(cfg.operator, dom, args.grid, reg)
    meas = measures_on_grid(grid)
    tol = args.tol if args.tol is not None else REPRESENTATION_TOL
    table = []
    for u in monomial_basis(n, 3):
        res = representation_check(meas, u)
        table.append({"u": render(u), "residual": res, "passed": res <= tol})
    worst = max(r["residual"] for r in table)
    mass_ok = abs(meas.mu_total - 1) <= MASS_TOL
    passed = mass_ok and meas.nonnegative and worst <= tol
    if args.csv:
        meas.to_csv(args.csv)
    out = {
        "config": cfg.name,
        "measures": meas.summary(),
        "mass_ok": mass_ok,
        "nonnegative": meas.nonnegative,
        "residuals": table,
        "worst_residual": worst,
        "tol": tol,
        "passed": passed,
        "notes": [GEOMETRY_NOTE] + ([] if reg == 0 else [f"operator regularised with {reg} * Laplacian"]),
    }
    return out, EXIT_PASS if passed else EXIT_FAIL


def _representation_text(r: dict) -> list[str]:
    m = r["measures"]
    lines = [
        f"config {r['config']}: h={m['h']} R={m['R']} eps={m['eps']} reg={m['reg']}",
        f"interior nodes {m['n_interior']}, boundary nodes {m['n_boundary']}",
        f"sum mu = {m['mu_total']:.15g} ({'ok' if r['mass_ok'] else 'FAIL'}), sum nu = {m['nu_total']:.6g}",
        f"min weight = {m['min_weight']:.3g} ({'ok' if r['nonnegative'] else 'FAIL'})",
    ]
    lines += [f"{'PASS' if t['passed'] else 'FAIL'} {t['u']:<16} residual {t['residual']:.3e}" for t in r["residuals"]]
    lines.append("overall: " + ("PASS" if r["passed"] else "FAIL"))
    return lines


# ---------------------------------------------------------- counterexample


def _gamma(cfg: OperatorConfig):
    from .liouville import gamma_euclidean, gamma_heisenberg

    if cfg.fundamental_solution is None:
        raise UsageError("config has no [fundamental_solution] builtin")
    if cfg.fundamental_solution == "heisenberg":
        if cfg.dimension != 3:
            raise UsageError("the Heisenberg kernel lives on R^3")
        return gamma_heisenberg()
    return gamma_euclidean(cfg.dimension)


def cmd_counterexample(cfg: OperatorConfig, args) -> tuple[dict, int]:
    from .liouville.counterexample import counterexample, verdict_for

    gamma = _gamma(cfg)
    reports = counterexample(
        gamma, p=list(args.p), K=args.annuli, M=args.ratio, samples=args.samples, seed=args.seed,
        check_signs=not args.no_sign_checks,
    )
    runs = []
    ok = True
    for rep in reports:
        d = rep.to_dict()
        d.pop("sign_checks")
        d["expected_verdict"] = verdict_for(rep.theoretical_ratio)
        d["verdict_ok"] = d["verdict"] == d["expected_verdict"]
        ok &= d["verdict_ok"]
        runs.append(d)
    signs = reports[0].sign_checks
    signs_ok = signs["u_nonpositive_on_samples"] and all(
        signs.get(k, True) for k in ("u_nonpositive", "Lu_nonnegative", "residual_ok")
    )
    passed = ok and signs_ok
    out = {"config": cfg.name, "kernel": gamma.name, "c": gamma.c, "runs": runs, "sign_checks": signs,
           "passed": passed}
    return out, EXIT_PASS if passed else EXIT_FAIL


def _counterexample_text(r: dict) -> list[str]:
    lines = [f"config {r['config']}: kernel {r['kernel']} (c = {r['c']:.6g})"]
    for d in r["runs"]:
        lines.append(
            f"p={d['p']:g}: measured ratio {d['measured_ratio']:.4f}, theoretical {d['theoretical_ratio']:.4f}, "
            f"verdict {d['verdict']} ({'ok' if d['verdict_ok'] else 'expected ' + d['expected_verdict']})"
        )
    s = r["sign_checks"]
    lines.append(
        f"sign checks: u<=0 on samples {s['u_nonpositive_on_samples']}"
        + (f", Lu>=0 {s['Lu_nonnegative']}, worst FD residual {s['worst_relative_residual']:.2e}" if "Lu_nonnegative" in s else "")
    )
    lines.append("overall: " + ("PASS" if r["passed"] else "FAIL"))
    return lines


# ------------------------------------------------------------------- sharp


def cmd_sharp(cfg: OperatorConfig, args) -> tuple[dict, int]:
    if cfg.dilation is None:
        raise UsageError("config has no [dilation] block")
    d = cfg.dilation.heat_lift() if args.heat_lift else cfg.dilation
    out = {"config": cfg.name, "heat_lift": bool(args.heat_lift), "sigma": [str(s) for s in d.sigma], "Q": str(d.Q)}
    if d.Q < 3:
        out["p_star"] = None
        out["note"] = "p* needs Q >= 3"
        return out, EXIT_FAIL
    out["p_star"] = str(sharp_exponent(d.Q))
    return out, EXIT_PASS


def _sharp_text(r: dict) -> list[str]:
    q = "Q^" if r["heat_lift"] else "Q"
    return [f"{r['config']}: {q} = {r['Q']}, p* = {r['p_star']}"]


COMMANDS = {
    "check": (cmd_check, _check_text),
    "kolmogorov": (cmd_kolmogorov, _kolmogorov_text),
    "representation": (cmd_representation, _representation_text),
    "counterexample": (cmd_counterexample, _counterexample_text),
    "sharp": (cmd_sharp, _sharp_text),
}


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help=f"TOML file or fixture name ({', '.join(FIXTURES)})")
    common.add_argument("--format", choices=("json", "text"), default="text")
    common.add_argument("--tol", type=_number, default=None, help="override the command's numerical tolerance")
    common.add_argument("--seed", type=int, default=0)

    p = argparse.ArgumentParser(prog="hypoliouville", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", parents=[common], help="verify the hypotheses for a config")
    c.add_argument("--depth", type=int, default=DEFAULT_DEPTH, help="maximum Lie bracket depth")
    c.add_argument("--points", type=int, default=DEFAULT_POINTS, help="sample points for rank and PSD tests")

    sub.add_parser("kolmogorov", parents=[common], help="classify a [kolmogorov] config")

    r = sub.add_parser("representation", parents=[common], help="discrete representation measures on the lens")
    r.add_argument("--grid", type=_number, default=None, help="mesh width h (default 1/64 in 2D, 1/16 in 3D)")
    r.add_argument("--R", type=_number, default=4.0)
    r.add_argument("--eps", type=_number, default=1.0)
    r.add_argument("--reg", type=_number, default=None, help="elliptic regularisation (default 0, or 0.05 if degenerate)")
    r.add_argument("--csv", default=None, help="write the measures to this CSV file")

    x = sub.add_parser("counterexample", parents=[common], help="annulus-ratio sharpness experiment")
    x.add_argument("--p", type=_number, nargs="+", default=[2.0])
    x.add_argument("--annuli", type=int, default=8, help="number of dyadic annuli K")
    x.add_argument("--ratio", type=_number, default=2.0, help="annulus ratio M")
    x.add_argument("--samples", type=int, default=100_000, help="Monte Carlo samples per annulus")
    x.add_argument("--no-sign-checks", action="store_true")

    s = sub.add_parser("sharp", parents=[common], help="homogeneous dimension and sharp exponent")
    s.add_argument("--heat-lift", action="store_true", help="use the dilation of L - d/dt on R^{n+1}")
    return p


def _emit(result: dict, fmt: str, text_fn) -> None:
    if fmt == "json":
        print(json.dumps(_jsonable(result), indent=2, sort_keys=True))
    else:
        print("\n".join(text_fn(result)))


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    run, text_fn = COMMANDS[args.command]
    from .lens import DiscretizationError
    from .liouville.fundamental import QuadratureError

    try:
        cfg = load_config(args.config)
        result, code = run(cfg, args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (QuadratureError, KolmogorovQuadratureError, InversionError, DiscretizationError) as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _emit(result, args.format, text_fn)
    return code


if __name__ == "__main__":
    sys.exit(main())
