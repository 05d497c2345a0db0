"""Command-line front end.

Subcommands: check (fixed-point conditions), certify (rate bisection),
sweep (grid certification to CSV), simulate (gossip rollouts vs
certificates), compare (baseline-alpha vs certified-optimal-alpha table).
Exit codes: 0 success, 1 analysis-negative, 2 usage/parse error,
3 solver failure.
"""

import argparse
import itertools
import math
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .baseline import baseline_rate_given_alpha, baseline_stepsize
from .basis import build_basis_maps, build_psi
from .certify import (
    CvxpyBackend,
    NoCertificate,
    RateBound,
    bisect_rate,
    certificate_gamma,
    optimize_stepsize,
)
from .errors import ParseError, SolverFailure
from .gossip import generate_sequence
from .realization import (
    BUILTIN_REALIZATIONS,
    FunctionClass,
    NetworkClass,
    check_fixed_point_conditions,
)
from .simulate import (
    QuadraticEnsemble,
    diging_initial_state,
    empirical_rate,
    simulate,
    trajectory_lyapunov_state,
)
from .textio import (
    certificate_to_text,
    export_sdpa,
    parse_kv_text,
    realization_from_text,
    write_csv,
)

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_USAGE = 2
EXIT_SOLVER = 3

ITER_EPS = 1e-6


def _add_common(parser):
    parser.add_argument("--config", help="structured-text config file; CLI "
                        "flags override its values")
    parser.add_argument("--builtin", choices=sorted(BUILTIN_REALIZATIONS),
                        help="builtin realization name")
    parser.add_argument("--realization", help="realization file path")
    parser.add_argument("--alpha", type=float, help="stepsize for builtins")
    parser.add_argument("--alpha-grid", type=float, nargs="+",
                        help="stepsize grid (best certified rate wins)")
    parser.add_argument("--m", type=float, default=1.0)
    parser.add_argument("--L", type=float, default=10.0)
    parser.add_argument("--sigma", type=float)
    parser.add_argument("--sigma-grid", type=float, nargs="+")
    parser.add_argument("--B", type=int)
    parser.add_argument("--B-grid", type=int, nargs="+")
    parser.add_argument("--kappa-grid", type=float, nargs="+",
                        help="condition-ratio grid (m stays fixed, L varies)")
    parser.add_argument("--n", type=int, default=2,
                        help="agent count (baseline and simulation only)")
    parser.add_argument("--bisect-tol", type=float, default=1e-3)
    parser.add_argument("--feas-tol", type=float, default=1e-7)
    parser.add_argument("--eps-pd", type=float, default=1e-6)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", help="output path")
    parser.add_argument("--workers", type=int, default=0,
                        help="sweep worker processes (0 = all cores)")
    parser.add_argument("--export-sdpa", help="write the assembled program "
                        "in sparse SDPA text to this path")
    parser.add_argument("--diagnostics", action="store_true",
                        help="emit extra diagnostics (literal nullspace "
                        "test, basis-map dump, decoupled-lambda gap)")
    parser.add_argument("--timing", action="store_true",
                        help="add a wall_time_s column (breaks byte-for-byte "
                        "reproducibility of the CSV)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ratecert",
        description="Worst-case rate certificates for distributed "
                    "optimization over jointly-connected networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, summary in [
        ("check", "fixed-point condition verdicts"),
        ("certify", "bisect the tightest certified rate"),
        ("sweep", "grid certification table"),
        ("simulate", "gossip rollouts cross-validating certificates"),
        ("compare", "baseline-alpha vs certified-optimal-alpha table"),
    ]:
        p = sub.add_parser(name, help=summary)
        _add_common(p)
        if name == "simulate":
            p.add_argument("--K", type=int, default=3000,
                           help="simulation iterations")
            p.add_argument("--d", type=int, default=2,
                           help="decision-variable dimension")
            p.add_argument("--scheme", default="auto",
                           choices=("auto", "complete", "periodic_edge_cycle",
                                    "random_matchings"))
    return parser


def _apply_config(args, argv):
    """Config-file values fill in every option not given on the command
    line (an option counts as given when its flag appears in argv)."""
    if not args.config:
        return args
    with open(args.config) as fh:
        config = parse_kv_text(fh.read())
    given = set(argv or [])
    for key, value in config.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise ParseError(f"unknown config key {key!r}")
        flag = "--" + key.replace("_", "-")
        if flag not in given and key != "config":
            setattr(args, attr, value)
    return args


def _load_realization(args, alpha=None):
    if args.realization:
        with open(args.realization) as fh:
            return realization_from_text(fh.read())
    if args.builtin:
        a = alpha if alpha is not None else args.alpha
        if a is None:
            raise ParseError(f"builtin {args.builtin!r} needs --alpha")
        return BUILTIN_REALIZATIONS[args.builtin](a)
    raise ParseError("need --builtin or --realization")


def cmd_check(args):
    realization = _load_realization(args)
    report = check_fixed_point_conditions(realization)
    print(f"realization: {realization.name or args.realization} "
          f"(s={realization.s}, c={realization.c}, r={realization.r})")
    print(f"condition (a) fixed-point output direction: "
          f"{'pass' if report.cond_a else 'FAIL'}")
    print(f"condition (b) gradient-column alignment:    "
          f"{'pass' if report.cond_b else 'FAIL'}")
    if args.diagnostics:
        print(f"literal rowspace reading of (a): {report.cond_a_literal} "
              f"(agrees with operational form: {report.literal_agrees})")
        for name, sv in report.singular_values.items():
            print(f"  singular values {name}: {np.array2string(sv, precision=3)}")
    return EXIT_OK if report.both else EXIT_NEGATIVE


def _dump_maps(realization, B):
    maps = build_basis_maps(realization, B)
    psi = build_psi(realization, maps)
    labeled = [("Xi", maps.Xi), ("Xi_plus", maps.Xi_plus), ("Psi", psi)]
    for l in range(B + 1):
        labeled.append((f"x({l})", maps.xm[l]))
    for l in range(B):
        labeled += [(f"u({l})", maps.um[l]), (f"v({l})", maps.vm[l]),
                    (f"y({l})", maps.ym[l]), (f"z({l})", maps.zm[l])]
    for l in range(B + 1):
        labeled.append((f"w({l})", maps.wm[l]))
    for name, mat in labeled:
        print(f"-- {name} ({mat.shape[0]}x{mat.shape[1]})")
        for row in np.atleast_2d(mat):
            print("   " + " ".join(f"{val: .6g}" for val in row))


def cmd_certify(args):
    if args.sigma is None or args.B is None:
        raise ParseError("certify needs --sigma and --B")
    fc = FunctionClass(m=args.m, L=args.L)
    nc = NetworkClass(sigma=args.sigma, B=args.B)
    backend = CvxpyBackend()

    alphas = args.alpha_grid or ([args.alpha] if args.alpha is not None else [None])
    best = None
    best_alpha = None
    for alpha in alphas:
        realization = _load_realization(args, alpha=alpha)
        if args.diagnostics and best is None:
            _dump_maps(realization, nc.B)
        result = bisect_rate(realization, fc, nc, bisect_tol=args.bisect_tol,
                             feas_tol=args.feas_tol, eps_pd=args.eps_pd,
                             backend=backend)
        if isinstance(result, RateBound):
            if best is None or result.rho_hi < best.rho_hi:
                best, best_alpha = result, alpha

    if args.export_sdpa:
        from .lmi import assemble_feasibility

        rho = best.rho_hi if best is not None else 1.0 - args.bisect_tol
        realization = _load_realization(args, alpha=best_alpha or alphas[0])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            program = assemble_feasibility(realization, fc, nc, rho,
                                           eps_pd=args.eps_pd)
        export_sdpa(program, args.export_sdpa)
        print(f"wrote SDPA export to {args.export_sdpa}")

    if best is None:
        print(f"NoCertificate: no rate below {1.0 - args.bisect_tol!r} "
              f"certifiable at sigma={args.sigma}, B={args.B}")
        return EXIT_NEGATIVE

    iters = best.iterations_to_eps(ITER_EPS)
    print(f"certified rate rho_hi = {best.rho_hi!r} "
          f"(bracket [{best.rho_lo!r}, {best.rho_hi!r}], "
          f"{best.n_solves} solves)")
    if best_alpha is not None:
        print(f"alpha = {best_alpha!r}")
    print(f"iterations to 1e-6: {iters}")
    print(f"cond(T) = {best.certificate.cond_T()!r}")
    for key, value in best.certificate.residuals.items():
        print(f"residual {key} = {value:.3e}")
    for flag in best.flags:
        print(f"flag: {flag}")
    if args.diagnostics:
        gap = _decoupled_gap(args, best_alpha, fc, nc, backend)
        if gap is not None:
            print(f"decoupled-lambda rate (diagnostic, outside the theorem): "
                  f"{gap!r}")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(certificate_to_text(best.certificate))
        print(f"wrote certificate to {args.out}")
    return EXIT_OK


def _decoupled_gap(args, alpha, fc, nc, backend):
    realization = _load_realization(args, alpha=alpha)
    result = bisect_rate(realization, fc, nc, bisect_tol=args.bisect_tol,
                         feas_tol=args.feas_tol, eps_pd=args.eps_pd,
                         backend=CvxpyBackend(), decouple_lambda=True)
    return result.rho_hi if isinstance(result, RateBound) else None


def _sweep_grids(args):
    sigmas = args.sigma_grid or ([args.sigma] if args.sigma is not None else None)
    kappas = getattr(args, "kappa_grid", None) or [args.L / args.m]
    bs = args.B_grid or ([args.B] if args.B is not None else None)
    if not sigmas or not bs:
        raise ParseError("sweep needs --sigma/--sigma-grid and --B/--B-grid")
    return [float(s) for s in sigmas], [float(k) for k in kappas], [int(b) for b in bs]


def _sweep_point(task):
    """One grid point; module-level so a process pool can pickle it."""
    (args_dict, sigma, kappa, B) = task
    args = argparse.Namespace(**args_dict)
    m = args.m
    L = kappa * m
    fc = FunctionClass(m=m, L=L)
    nc = NetworkClass(sigma=sigma, B=B)
    backend = CvxpyBackend()
    start = time.perf_counter()

    base = baseline_stepsize(m, L, args.n, B, sigma)
    if args.alpha is not None:
        alphas = [args.alpha]
    elif args.alpha_grid:
        alphas = list(args.alpha_grid)
    else:
        if base.vacuous:
            raise ParseError(
                "no alpha given and the baseline stepsize is vacuous; "
                "pass --alpha or --alpha-grid"
            )
        alphas = [base.alpha]

    best = None
    best_alpha = None
    for alpha in alphas:
        realization = _load_realization(args, alpha=alpha)
        result = bisect_rate(realization, fc, nc, bisect_tol=args.bisect_tol,
                             feas_tol=args.feas_tol, eps_pd=args.eps_pd,
                             backend=backend)
        if isinstance(result, RateBound):
            if best is None or result.rho_hi < best.rho_hi:
                best, best_alpha = result, alpha
    alpha_used = best_alpha if best_alpha is not None else alphas[0]
    base_rho = baseline_rate_given_alpha(alpha_used, m, B,
                                         alpha_max=base.alpha
                                         if not base.vacuous else None)
    wall = time.perf_counter() - start

    def iters(rho):
        return math.ceil(math.log(1.0 / ITER_EPS) / math.log(1.0 / rho))

    row = [sigma, kappa, B, alpha_used]
    if best is None:
        row += ["", "", ]
    else:
        row += [best.rho_hi, best.iterations_to_eps(ITER_EPS)]
    row += [base.alpha if not base.vacuous else ""]
    row += [base_rho if base_rho is not None else ""]
    row += [iters(base_rho) if base_rho is not None else ""]
    row += [base.vacuous or base_rho is None, best is None]
    if args.timing:
        row.append(wall)
    return row


SWEEP_HEADER = ["sigma", "kappa", "B", "alpha", "rho_hi", "iterations",
                "baseline_alpha", "baseline_rho", "baseline_iterations",
                "baseline_vacuous", "no_certificate"]


def cmd_sweep(args):
    sigmas, kappas, bs = _sweep_grids(args)
    grid = list(itertools.product(sigmas, kappas, bs))
    args_dict = vars(args).copy()
    args_dict.pop("func", None)
    tasks = [(args_dict, s, k, b) for (s, k, b) in grid]

    workers = args.workers or os.cpu_count() or 1
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(task) for task in tasks]

    header = SWEEP_HEADER + (["wall_time_s"] if args.timing else [])
    out = args.out or "sweep.csv"
    write_csv(out, header, rows)
    print(f"wrote {len(rows)} rows to {out}")
    negative = any(row[10] for row in rows)
    return EXIT_NEGATIVE if negative else EXIT_OK


def _auto_scheme(n, B):
    if B == 1:
        return "complete"
    if B >= n - 1:
        return "periodic_edge_cycle"
    return "random_matchings"


def cmd_simulate(args):
    if args.B is None and not args.B_grid:
        raise ParseError("simulate needs --B/--B-grid")
    bs = args.B_grid or [args.B]
    kappas = getattr(args, "kappa_grid", None) or [args.L / args.m]
    if args.alpha is None and not args.alpha_grid:
        raise ParseError("simulate needs --alpha or --alpha-grid")

    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    backend = CvxpyBackend()
    comparison = []
    index = 0
    for B in bs:
        for kappa in kappas:
            m = args.m
            L = kappa * m
            scheme = args.scheme if args.scheme != "auto" else _auto_scheme(args.n, B)
            seq = generate_sequence(args.n, B, scheme=scheme,
                                    seed=args.seed + index)
            fc = FunctionClass(m=m, L=L)
            nc = NetworkClass(sigma=seq.sigma_measured, B=B)
            # With a grid, take the largest stepsize that certifies.
            candidates = (sorted(args.alpha_grid, reverse=True)
                          if args.alpha_grid else [args.alpha])
            alpha = candidates[0]
            result = None
            for alpha in candidates:
                realization = _load_realization(args, alpha=alpha)
                result = bisect_rate(realization, fc, nc,
                                     bisect_tol=args.bisect_tol,
                                     feas_tol=args.feas_tol,
                                     eps_pd=args.eps_pd, backend=backend)
                if isinstance(result, RateBound):
                    break
            if not isinstance(result, RateBound):
                comparison.append([index, args.n, B, kappa,
                                   seq.sigma_measured, alpha, "", "", "",
                                   "", True])
                index += 1
                continue
            ensemble = QuadraticEnsemble.random(args.n, d=args.d, m=m, L=L,
                                                seed=args.seed + index)
            x0 = diging_initial_state(ensemble,
                                      rng=np.random.default_rng(args.seed + index))
            traj = simulate(realization, seq, ensemble, x0, args.K)
            emp = empirical_rate(traj.errors[: args.K])
            xi0 = trajectory_lyapunov_state(traj, B, k=0)
            gamma = certificate_gamma(result.certificate, xi0)
            ks = np.arange(args.K + 1)
            envelope = gamma * result.rho_hi**ks
            margin = 10.0 * np.finfo(float).eps * max(1.0, gamma)
            ok = traj.errors <= envelope + margin
            burn_in = int(np.argmax(ok)) if ok.any() else -1
            env_ok = bool(ok[burn_in:].all()) if burn_in >= 0 else False

            traj_path = os.path.join(out_dir, f"trajectory_{index:02d}.csv")
            header = ["k", "e_k"] + [f"y_dist_{i}" for i in range(args.n)]
            rows = []
            for k in range(args.K):
                rows.append([k, traj.errors[k]]
                            + [traj.y_errors[i, k] for i in range(args.n)])
            write_csv(traj_path, header, rows)

            comparison.append([index, args.n, B, kappa, seq.sigma_measured,
                               alpha, result.rho_hi, emp.rho, gamma,
                               burn_in if env_ok else "", not env_ok])
            index += 1

    cmp_path = os.path.join(out_dir, "simulation_vs_certificates.csv")
    write_csv(cmp_path,
              ["instance", "n", "B", "kappa", "sigma_measured", "alpha",
               "rho_hi", "rho_emp", "gamma", "envelope_burn_in",
               "envelope_violated"],
              comparison)
    print(f"wrote {len(comparison)} instances to {cmp_path}")
    bad = any(row[-1] for row in comparison)
    return EXIT_NEGATIVE if bad else EXIT_OK


COMPARE_HEADER = ["regime", "sigma", "kappa", "B", "alpha", "rho_hi",
                  "iterations", "baseline_rho", "baseline_iterations",
                  "baseline_vacuous"]


def cmd_compare(args):
    sigmas, kappas, bs = _sweep_grids(args)
    backend = CvxpyBackend()
    rows = []

    def iters(rho):
        return math.ceil(math.log(1.0 / ITER_EPS) / math.log(1.0 / rho))

    search_rows = []
    for sigma, kappa, B in itertools.product(sigmas, kappas, bs):
        m = args.m
        L = kappa * m
        fc = FunctionClass(m=m, L=L)
        nc = NetworkClass(sigma=sigma, B=B)
        base = baseline_stepsize(m, L, args.n, B, sigma)

        if not base.vacuous:
            realization = _load_realization(args, alpha=base.alpha)
            result = bisect_rate(realization, fc, nc,
                                 bisect_tol=args.bisect_tol,
                                 feas_tol=args.feas_tol,
                                 eps_pd=args.eps_pd, backend=backend)
            got = isinstance(result, RateBound)
            rows.append(["baseline_alpha", sigma, kappa, B, base.alpha,
                         result.rho_hi if got else "",
                         result.iterations_to_eps(ITER_EPS) if got else "",
                         base.rho, iters(base.rho), False])

        factory = (BUILTIN_REALIZATIONS[args.builtin] if args.builtin
                   else None)
        if factory is None:
            continue
        search = optimize_stepsize(factory, fc, nc,
                                   bisect_tol=args.bisect_tol,
                                   feas_tol=args.feas_tol,
                                   eps_pd=args.eps_pd, backend=backend)
        if search is None:
            rows.append(["theorem_alpha", sigma, kappa, B, "", "", "", "",
                         "", True])
            continue
        for alpha, rho in search.evaluations:
            search_rows.append([sigma, kappa, B, alpha,
                                rho if rho is not None else ""])
        base_rho = baseline_rate_given_alpha(
            search.alpha, m, B,
            alpha_max=base.alpha if not base.vacuous else None)
        rows.append(["theorem_alpha", sigma, kappa, B, search.alpha,
                     search.bound.rho_hi,
                     search.bound.iterations_to_eps(ITER_EPS),
                     base_rho if base_rho is not None else "",
                     iters(base_rho) if base_rho is not None else "",
                     base_rho is None])

    out = args.out or "compare.csv"
    write_csv(out, COMPARE_HEADER, rows)
    root, ext = os.path.splitext(out)
    write_csv(root + "_search" + (ext or ".csv"),
              ["sigma", "kappa", "B", "alpha", "rho_hi"], search_rows)
    print(f"wrote {len(rows)} rows to {out} "
          f"(stepsize search record alongside)")
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    try:
        args = parser.parse_args(argv)
        args = _apply_config(args, argv)
        handler = {
            "check": cmd_check,
            "certify": cmd_certify,
            "sweep": cmd_sweep,
            "simulate": cmd_simulate,
            "compare": cmd_compare,
        }[args.command]
        return handler(args)
    except (ParseError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
