"""Command-line surface: construct solutions, trace branches, run verification suites.

Exit codes: 0 success, 1 usage error, 2 convergence or numeric failure.
Configuration precedence is command-line flags over config-file entries over
defaults; the resolved configuration is echoed into meta.txt next to every
artifact so runs can be reproduced from their outputs alone.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import branch as br
from . import equivalence as eq
from . import expansions as ex
from . import towers as tw
from .corrector import EtaSpaceConfig, PicardConvergenceError, picard_solve
from .numerics import atomic_write_text, fmt, write_csv
from .singular import DescentError, SingularSolution, build_singular, ode_residual
from .transform import log_to_radial, read_profile_csv, write_profile_csv

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    n: int = 3
    m: int = 1
    oracle: bool = False
    T: float | None = None
    t_max: float | None = None
    M: float | None = None
    tol: float = 1e-11
    rho_min: float = 0.1
    rho_max: float = 4.8
    rho_step: float = 0.02
    outdir: str = "."
    seed: int = 0
    singular_ref: str | None = None

    def validate(self):
        if int(self.n) != self.n or self.n < 3:
            raise UsageError("dimension n must be an integer >= 3")
        if int(self.m) != self.m or self.m < 1:
            raise UsageError("tower height m must be an integer >= 1")
        if self.tol <= 0:
            raise UsageError("tol must be positive")
        if self.T is not None and self.T < 1:
            raise UsageError("T must be >= 1")

    @property
    def m_effective(self):
        # the oracle flag selects the plain-exponential nonlinearity
        return 0 if self.oracle else int(self.m)

    def eta_config(self):
        return EtaSpaceConfig(T=self.T, t_max=self.t_max, M=self.M, tol=self.tol)

    def echo_lines(self):
        out = []
        for f in fields(self):
            out.append(f"{f.name} = {getattr(self, f.name)}")
        return out


def _load_config_file(path):
    values = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"bad config line: {raw.rstrip()}")
            key, val = (s.strip() for s in line.split("=", 1))
            values[key] = val
    return values


def _build_runconfig(args):
    cfg = RunConfig()
    file_values = _load_config_file(args.config) if getattr(args, "config", None) else {}
    casts = {f.name: f for f in fields(RunConfig)}
    for key, val in file_values.items():
        if key not in casts:
            raise UsageError(f"unknown config key: {key}")
        cur = getattr(cfg, key)
        if key in ("oracle",):
            setattr(cfg, key, val.lower() in ("1", "true", "yes"))
        elif key in ("n", "m", "seed"):
            setattr(cfg, key, int(val))
        elif key in ("outdir", "singular_ref"):
            setattr(cfg, key, val)
        else:
            setattr(cfg, key, float(val))
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            setattr(cfg, f.name, flag)
    cfg.validate()
    return cfg


def _write_meta(path, cfg, results):
    lines = ["[config]"] + cfg.echo_lines() + ["", "[results]"]
    for key, val in results.items():
        lines.append(f"{key} = {val if isinstance(val, str) else fmt(val)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def cmd_singular(cfg):
    os.makedirs(cfg.outdir, exist_ok=True)
    sol = build_singular(cfg.n, cfg.m_effective, cfg.eta_config())
    res = ode_residual(sol.profile, cfg.n, cfg.m_effective)
    write_profile_csv(os.path.join(cfg.outdir, "profile_log.csv"), sol.profile)
    write_profile_csv(os.path.join(cfg.outdir, "profile_radial.csv"),
                      log_to_radial(sol.profile, sol.lambda_star))
    eta = sol.eta
    _write_meta(os.path.join(cfg.outdir, "meta.txt"), cfg, {
        "lambda_star": sol.lambda_star,
        "t_star": sol.t_star,
        "handoff_t": sol.handoff_t,
        "max_relative_residual": res,
        "monotone": str(sol.monotone),
        "picard_iterations": eta.iterations,
        "picard_final_defect": eta.final_defect,
        "picard_T": eta.T,
        "picard_t_max": eta.t_max,
        "picard_M": eta.M,
        "picard_sup_weighted": eta.sup_weighted,
    })
    print(f"lambda_star = {fmt(sol.lambda_star)}  (t_star = {fmt(sol.t_star)}, "
          f"max relative residual {res:.3e})")
    return EXIT_OK


def _load_singular_reference(path, n, m):
    """Reconstruct a singular reference from a `singular construct` output directory."""
    meta_path = os.path.join(path, "meta.txt") if os.path.isdir(path) else path
    base = os.path.dirname(meta_path)
    lam = None
    in_results = False
    with open(meta_path) as fh:
        for line in fh:
            if line.strip() == "[results]":
                in_results = True
            elif in_results and line.split("=")[0].strip() == "lambda_star":
                lam = float(line.split("=", 1)[1])
    if lam is None:
        raise UsageError(f"no lambda_star entry found in {meta_path}")
    profile = read_profile_csv(os.path.join(base, "profile_log.csv"))
    return SingularSolution(n=n, m=m, t_star=-0.5 * math.log(lam),
                            lambda_star=lam, profile=profile, eta=None,
                            handoff_t=profile.t_min, monotone=True)


def cmd_bifurcation(cfg):
    os.makedirs(cfg.outdir, exist_ok=True)
    if cfg.rho_max <= cfg.rho_min or cfg.rho_step <= 0:
        raise UsageError("need rho_min < rho_max and rho_step > 0")
    grid = np.arange(cfg.rho_min, cfg.rho_max + 0.5 * cfg.rho_step, cfg.rho_step)
    if len(grid) < 3:
        raise UsageError("rho grid has fewer than 3 points")
    reference = None
    lam_star = None
    if cfg.singular_ref:
        reference = _load_singular_reference(cfg.singular_ref, cfg.n, cfg.m_effective)
        lam_star = reference.lambda_star
    curve = br.trace_curve(cfg.n, cfg.m_effective, grid, lambda_star=lam_star)
    rho = curve.rho
    lam = curve.lam
    turning_rho = np.array([p[0] for p in curve.turning])
    flags = np.zeros(len(rho), dtype=int)
    for tr in turning_rho:
        flags[int(np.argmin(np.abs(rho - tr)))] = 1
    write_csv(os.path.join(cfg.outdir, "curve.csv"),
              ["rho", "lambda", "R", "turning_flag"],
              [rho, lam, np.array([p.R for p in curve.points]), flags])
    tp_cols = [turning_rho, np.array([p[1] for p in curve.turning])]
    tp_hdr = ["rho", "lambda"]
    if lam_star is not None:
        tp_hdr.append("lambda_minus_lambda_star")
        tp_cols.append(tp_cols[1] - lam_star)
    write_csv(os.path.join(cfg.outdir, "turning_points.csv"), tp_hdr, tp_cols)
    results = {"points": len(rho), "turning_points": len(curve.turning)}
    if reference is not None:
        rows = []
        for rho_q in sorted({2.0, 4.0, 6.0} & set(np.round(rho, 9))) or []:
            point = br.shoot_regular(cfg.n, cfg.m_effective, float(rho_q))
            rows.append((rho_q, br.intersection_count(point, reference)))
        if rows:
            write_csv(os.path.join(cfg.outdir, "intersections.csv"),
                      ["rho", "count"],
                      [np.array([r[0] for r in rows]),
                       np.array([r[1] for r in rows], dtype=int)])
            results["intersection_rhos"] = ";".join(fmt(r[0]) for r in rows)
    _write_meta(os.path.join(cfg.outdir, "meta.txt"), cfg, results)
    print(f"traced {len(rho)} points, {len(curve.turning)} turning points")
    return EXIT_OK


def _suite_iterexp(cfg):
    rows = []

    def add(label, value, bound, gating=True):
        rows.append({"label": label, "value": float(value), "bound": float(bound),
                     "passed": bool(value <= bound), "gating": gating})

    # upper ends keep G_m(y) representable
    for m, y_hi in ((1, 3.0), (2, 1.8), (3, 1.4)):
        ys = np.linspace(-2.0, y_hi, 41)
        err = max(abs(tw.h_tower(m, tw.g_tower(m, y)) - y) for y in ys)
        add(f"roundtrip_m{m}", err, 1e-12)
    for m in (1, 2, 3):
        ts = np.geomspace(max(tw.tower_domain_lower(m), 0.5) + 4.0, 1e3, 25)
        worst = 0.0
        for k in (1, 2, 3):
            h = 1e-3
            for t in ts:
                fd = {1: (tw.h_tower(m, t + h) - tw.h_tower(m, t - h)) / (2 * h),
                      2: (tw.h_deriv(m, 1, t + h) - tw.h_deriv(m, 1, t - h)) / (2 * h),
                      3: (tw.h_deriv(m, 2, t + h) - tw.h_deriv(m, 2, t - h)) / (2 * h)}[k]
                worst = max(worst, abs(tw.h_deriv(m, k, t) - fd) / max(abs(fd), 1e-300))
        add(f"h_deriv_fd_m{m}", worst, 1e-5)
    for m in (1, 2, 3):
        ts = np.geomspace(10.0 + tw.g_tower(min(m, 2), 1.0), 1e6, 40)
        for k in (1, 2, 3):
            vals = np.abs(tw.h_deriv(m, k, ts)) * ts ** k * np.log(ts)
            add(f"decay_bound_m{m}_k{k}", np.max(vals), 50.0)
    try:
        from scipy.integrate import quad
        v, _ = quad(lambda s: math.exp(-math.exp(s)), 0.0, 40.0)
        add("f_tail_zero_vs_quadrature", abs(tw.f_tail(0.0) - v), 1e-10)
    except Exception:
        add("f_tail_zero_vs_quadrature", 1.0, 1e-10)
    add("f_tail_fflim_t5", abs(tw.f_tail(5.0) * math.exp(5.0 + math.exp(5.0)) - 0.9933510653),
        1e-6)
    add("f_tail_inverse_roundtrip", abs(tw.f_tail_inverse(tw.f_tail(1.0)) - 1.0), 1e-10)
    return rows


def _write_expansion_reports(outdir, reports):
    write_csv(os.path.join(outdir, "expansion_reports.csv"),
              ["label", "t_lo", "t_hi", "order", "weighted_sup", "empirical_slope"],
              [np.array([r.label for r in reports], dtype=object),
               np.array([r.t_lo for r in reports]),
               np.array([r.t_hi for r in reports]),
               np.array([r.order for r in reports]),
               np.array([r.weighted_sup for r in reports]),
               np.array([r.empirical_slope for r in reports])])


def _suite_asymptotics(cfg):
    n, m = cfg.n, cfg.m_effective
    rows = []
    sol = build_singular(n, max(m, 1), cfg.eta_config())
    T = sol.eta.T
    win1 = (T + 5.0, 2.0 * T)
    win2 = (T + 5.0, 4.0 * T)
    if m <= 1:
        r1 = ex.residual_order(sol.profile, lambda t: ex.expansion_w_m1(n, t, "ansatz"),
                               2.0, win1)
        r1.label = "profile_vs_ansatz"
        r2 = ex.residual_order(sol.profile, lambda t: ex.expansion_w_m1(n, t, "ansatz"),
                               2.0, win2)
        r2.label = "profile_vs_ansatz_doubled"
        rows.append({"label": "profile_vs_ansatz_weighted_sup", "value": r2.weighted_sup,
                     "bound": 10.0 * sol.eta.M, "passed": r2.weighted_sup <= 10.0 * sol.eta.M,
                     "gating": True})
        stable = r2.weighted_sup <= 3.0 * max(r1.weighted_sup, 1e-300)
        rows.append({"label": "window_doubling_stable", "value": r2.weighted_sup /
                     max(r1.weighted_sup, 1e-300), "bound": 3.0, "passed": stable,
                     "gating": True})
        r4 = ex.residual_order(sol.profile, lambda t: ex.expansion_w_m1(n, t, "four_term"),
                               2.0, win2)
        r4.label = "profile_vs_four_term"
        rows.append({"label": "four_term_slope", "value": r4.empirical_slope,
                     "bound": 0.3, "passed": abs(r4.empirical_slope + 2.0) <= 0.3,
                     "gating": True})
        c1 = ex.gradient_residual_constant(sol, win1)
        c2 = ex.gradient_residual_constant(sol, win2)
        rows.append({"label": "gradient_constant_stable", "value": c2 /
                     max(c1, 1e-300), "bound": 3.0, "passed": c2 <= 3.0 * max(c1, 1e-300),
                     "gating": True})
        if cfg.outdir:
            _write_expansion_reports(cfg.outdir, [r1, r2, r4])
    else:
        sel = (sol.profile.t >= win2[0]) & (sol.profile.t <= win2[1])
        t = sol.profile.t[sel]
        bound_vals = t ** 2 * np.abs(sol.profile.w_t[sel]
                                     - 2.0 * _hm_prime_shifted(n, m, t))
        rows.append({"label": "wt_vs_2Hm_prime_weighted_sup",
                     "value": float(np.max(bound_vals)), "bound": 10.0 * sol.eta.M,
                     "passed": float(np.max(bound_vals)) <= 10.0 * sol.eta.M,
                     "gating": True})
        diff = np.abs(sol.profile.w[sel] - ex.expansion_w_m(n, m, t))
        half = t <= math.sqrt(win2[0] * win2[1])
        trend = float(np.max(diff[~half])) <= float(np.max(diff[half]))
        rows.append({"label": "expansion_residual_decays", "value": float(np.max(diff[~half])),
                     "bound": float(np.max(diff[half])), "passed": trend, "gating": False})
    return rows


def _hm_prime_shifted(n, m, t):
    from .corrector import phi_m
    from .towers import h_deriv
    phi, _, _ = phi_m(n, m, t)
    return h_deriv(m, 1, 2.0 * t + phi)


def _suite_miyamoto(cfg):
    sol = build_singular(cfg.n, 1, cfg.eta_config())
    rep = eq.equivalence_report(sol)
    rows = [{"label": "tail_sup", "value": rep.tail_sup, "bound": 0.05,
             "passed": rep.tail_sup < 0.05, "gating": True},
            {"label": "traces_decreasing", "value": float(rep.decreasing), "bound": 1.0,
             "passed": rep.decreasing, "gating": True}]
    if cfg.outdir:
        write_csv(os.path.join(cfg.outdir, "equivalence_trace.csv"),
                  ["t", "x_star", "y_star"], [rep.t, rep.x_star, rep.y_star])
    return rows


def cmd_verify(cfg, suite):
    os.makedirs(cfg.outdir, exist_ok=True)
    suites = {"iterexp": _suite_iterexp, "asymptotics": _suite_asymptotics,
              "miyamoto": _suite_miyamoto}
    names = list(suites) if suite == "all" else [suite]
    any_fail = False
    for name in names:
        rows = suites[name](cfg)
        gates = [r for r in rows if r["gating"]]
        ok = all(r["passed"] for r in gates)
        any_fail |= not ok
        print(json.dumps({"suite": name, "passed": ok,
                          "checks": len(rows), "failed":
                          [r["label"] for r in gates if not r["passed"]]}))
        write_csv(os.path.join(cfg.outdir, f"verify_{name}.csv"),
                  ["label", "value", "bound", "passed", "gating"],
                  [np.array([r["label"] for r in rows], dtype=object),
                   np.array([r["value"] for r in rows]),
                   np.array([r["bound"] for r in rows]),
                   np.array([int(r["passed"]) for r in rows]),
                   np.array([int(r["gating"]) for r in rows])])
    return EXIT_NUMERIC if any_fail else EXIT_OK


def cmd_iterexp_eval(args):
    m = args.m
    kind = args.kind
    y = args.at
    try:
        if kind == "g":
            val = tw.g_tower(m, y)
        elif kind == "h":
            val = tw.h_tower(m, y)
        elif kind == "gderiv":
            val = tw.g_deriv(m, args.k, y)
        elif kind == "hderiv":
            val = tw.h_deriv(m, args.k, y)
        elif kind == "ftail":
            val = tw.f_tail(y)
        elif kind == "ftail-log":
            val = tw.f_tail_log(y)
        elif kind == "ftail-inv":
            val = tw.f_tail_inverse(y)
        else:
            raise UsageError(f"unknown function kind: {kind}")
    except (tw.TowerOverflowError, tw.TowerDomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(fmt(val))
    return EXIT_OK


def _add_common(p):
    p.add_argument("--n", type=int, default=None, help="space dimension (>= 3)")
    p.add_argument("--m", type=int, default=None, help="tower height (>= 1)")
    p.add_argument("--oracle-gelfand", dest="oracle", action="store_const", const=True,
                   default=None, help="use the plain-exponential oracle nonlinearity")
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--t-max", dest="t_max", type=float, default=None)
    p.add_argument("--M", type=float, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--outdir", type=str, default=None)
    p.add_argument("--config", type=str, default=None,
                   help="key = value config file (flags take precedence)")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def make_parser():
    parser = _Parser(prog="itergelfand",
                     description="Singular solutions and solution branches for "
                                 "iterated-exponential Gelfand-type ball problems")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ie = sub.add_parser("iterexp", help="tower function evaluation")
    ie_sub = p_ie.add_subparsers(dest="subcommand", required=True)
    p_eval = ie_sub.add_parser("eval", help="evaluate a tower primitive")
    p_eval.add_argument("--m", type=int, default=1)
    p_eval.add_argument("--kind", required=True,
                        choices=["g", "h", "gderiv", "hderiv", "ftail",
                                 "ftail-log", "ftail-inv"])
    p_eval.add_argument("--k", type=int, default=1, help="derivative order")
    p_eval.add_argument("--at", type=float, required=True, help="evaluation point")

    p_s = sub.add_parser("singular", help="singular solution construction")
    s_sub = p_s.add_subparsers(dest="subcommand", required=True)
    p_sc = s_sub.add_parser("construct", help="build (lambda*, u*)")
    _add_common(p_sc)

    p_b = sub.add_parser("bifurcation", help="regular branch tracing")
    b_sub = p_b.add_subparsers(dest="subcommand", required=True)
    p_bt = b_sub.add_parser("trace", help="trace lambda(rho) by shooting")
    _add_common(p_bt)
    p_bt.add_argument("--rho-min", dest="rho_min", type=float, default=None)
    p_bt.add_argument("--rho-max", dest="rho_max", type=float, default=None)
    p_bt.add_argument("--rho-step", dest="rho_step", type=float, default=None)
    p_bt.add_argument("--lambda-star", dest="singular_ref", type=str, default=None,
                      help="singular construct output (dir or meta.txt) for "
                           "turning-point annotation and intersection counts")

    p_v = sub.add_parser("verify", help="verification suites")
    p_v.add_argument("suite", choices=["asymptotics", "miyamoto", "iterexp", "all"])
    _add_common(p_v)
    return parser


def main(argv=None):
    argv = argv if argv is not None else sys.argv[1:]
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "iterexp":
            return cmd_iterexp_eval(args)
        cfg = _build_runconfig(args)
        if args.command == "singular":
            return cmd_singular(cfg)
        if args.command == "bifurcation":
            return cmd_bifurcation(cfg)
        if args.command == "verify":
            return cmd_verify(cfg, args.suite)
        raise UsageError(f"unknown command {args.command}")
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PicardConvergenceError, DescentError, br.ShootError,
            tw.TowerOverflowError, tw.TowerDomainError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
