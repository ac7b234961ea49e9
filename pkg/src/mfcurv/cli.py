"""Command-line interface.

Subcommands: validate, simulate, stationary, curvature, two-point,
separable-bound, distance, geodesic, verify {mlsi|et|fwi|decay|contraction|
evi|dissipation}, report.  Exit codes: 0 success/pass, 1 check failure,
2 usage or model-spec error.  All floating-point CSV output carries 17
significant digits, and identical invocations with identical seeds produce
byte-identical files.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import curvature, dynamics, inequalities, metric, models
from .models import ModelError


def _threads_default():
    env = os.environ.get("MFCURV_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ModelError(f"MFCURV_THREADS must be an integer, got {env!r}")
    return os.cpu_count() or 1


def _parse_vector(text):
    try:
        return np.array([float(tok) for tok in text.split(",") if tok.strip()])
    except ValueError as exc:
        raise ModelError(f"cannot parse vector {text!r}: {exc}") from exc


def _add_model_args(parser):
    group = parser.add_argument_group("model selection")
    group.add_argument("--model", help="path to a JSON model-spec file")
    group.add_argument("--builtin",
                       choices=["curie-weiss", "two-point-linear",
                                "complete-uniform", "separable"],
                       help="built-in model family")
    group.add_argument("--beta", type=float, default=0.5,
                       help="inverse temperature for curie-weiss")
    group.add_argument("--rate-rule", default=models.GLAUBER,
                       choices=[models.GLAUBER, models.METROPOLIS])
    group.add_argument("--p", type=float, default=1.0,
                       help="0->1 rate for two-point-linear")
    group.add_argument("--q", type=float, default=1.0,
                       help="1->0 rate for two-point-linear")
    group.add_argument("--n", type=int, default=3,
                       help="state count for separable / complete-uniform")
    group.add_argument("--a-poly", default="1",
                       help="arrival polynomial coefficients, constant first")
    group.add_argument("--b-poly", default="1",
                       help="departure polynomial coefficients, constant first")


def _build_model(args):
    if args.model and args.builtin:
        raise ModelError("--model and --builtin are mutually exclusive")
    if args.model:
        return models.load_model(args.model)
    if args.builtin == "curie-weiss":
        return models.curie_weiss(args.beta, args.rate_rule)
    if args.builtin == "two-point-linear":
        return models.two_point_linear(args.p, args.q)
    if args.builtin == "complete-uniform":
        return models.complete_uniform(args.n)
    if args.builtin == "separable":
        return models.build_separable(args.n, _parse_vector(args.a_poly),
                                      _parse_vector(args.b_poly))
    raise ModelError("select a model with --model or --builtin")


def _fmt(x):
    return f"{x:.17g}"


def cmd_validate(args):
    triple = _build_model(args)
    report = models.validate(triple, n_samples=args.samples, seed=args.seed)
    print(report)
    return 0 if report.passed else 1


def cmd_simulate(args):
    triple = _build_model(args)
    mu0 = _parse_vector(args.mu0) if args.mu0 else np.full(triple.n, 1.0 / triple.n)
    traj = dynamics.integrate(triple, mu0, args.t_max, tol=args.tol)
    if args.out:
        traj.to_csv(triple, args.out)
        print(f"wrote {len(traj.times)} rows to {args.out}")
    final = traj.final()
    print("final state:", " ".join(_fmt(v) for v in final))
    print("free energy:", _fmt(dynamics.free_energy(triple, final)))
    print("stationary reached:", traj.stationary_reached)
    return 0


def cmd_stationary(args):
    triple = _build_model(args)
    sset = dynamics.find_stationary(triple, n_starts=args.starts, seed=args.seed)
    for i, (point, res, fish, fe) in enumerate(zip(
            sset.points, sset.residuals, sset.fisher_values,
            sset.free_energies)):
        tag = " (global minimum)" if i == sset.global_min_index else ""
        print(f"point {i}: [{', '.join(_fmt(v) for v in point.weights)}] "
              f"residual={res:.2e} I={fish:.2e} F={_fmt(fe)}{tag}")
    return 0


def cmd_curvature(args):
    triple = _build_model(args)
    margins = tuple(float(t) for t in args.margins.split(","))
    report = curvature.kappa_opt(triple, margins=margins,
                                 n_starts=args.starts, seed=args.seed)
    print(report)
    if triple.n == 2:
        oracle = curvature.two_point_kappa(triple)
        print(f"two-point closed form: {oracle:.6f} "
              f"(|diff| = {abs(oracle - report.kappa_opt):.2e})")
    if args.out:
        report.to_csv(args.out)
        print(f"wrote margin profile to {args.out}")
    return 0


def cmd_two_point(args):
    triple = _build_model(args)
    value = curvature.two_point_kappa(triple, grid_size=args.grid)
    print(f"kappa_opt (closed form) = {_fmt(value)}")
    if args.beta is not None and args.builtin == "curie-weiss" and args.beta > 1:
        print("note: the 2(1-beta) reference value is proven for beta <= 1; "
              "beyond that it is extrapolation")
    return 0


def cmd_separable_bound(args):
    bound = curvature.separable_bound(_parse_vector(args.a_poly),
                                      _parse_vector(args.b_poly), args.n)
    print(bound)
    print(json.dumps({
        "lambda": bound.lam, "kappa_bound": bound.kappa_bound,
        "applicable": bound.applicable, "a_min": bound.a_min,
        "a_max": bound.a_max, "b_min": bound.b_min, "b_max": bound.b_max,
        "lip_a": bound.lip_a, "lip_b": bound.lip_b, "degree": bound.degree}))
    return 0


def _path_command(args, want_geodesic):
    triple = _build_model(args)
    mu0 = _parse_vector(args.mu0)
    mu1 = _parse_vector(args.mu1)
    if want_geodesic:
        path = metric.geodesic(triple, mu0, mu1, K=args.K)
        w = path.distance
    else:
        w, path = metric.distance(triple, mu0, mu1, K=args.K)
    print(f"W = {_fmt(w)}")
    print(f"midpoint action = {_fmt(path.action_value)}, "
          f"refined action = {_fmt(path.refined_action)}")
    print(f"continuity residual = {path.continuity_residual:.2e}, "
          f"min knot mass = {path.min_knot_mass:.3e}, "
          f"converged = {path.converged}, clamped = {path.clamped}")
    if want_geodesic:
        print(f"geodesic residual = {path.geodesic_residual:.3e}")
    if args.out:
        path.to_csv(args.out)
        print(f"wrote path to {args.out}")
    return 0


def cmd_distance(args):
    return _path_command(args, want_geodesic=False)


def cmd_geodesic(args):
    return _path_command(args, want_geodesic=True)


def cmd_verify(args):
    triple = _build_model(args)
    threads = args.threads or _threads_default()
    name = args.check
    if name == "dissipation":
        mu0 = (_parse_vector(args.mu0) if args.mu0
               else np.full(triple.n, 1.0 / triple.n))
        traj = dynamics.integrate(triple, mu0, args.T, tol=1e-9)
        residual = dynamics.dissipation_residual(traj, triple)
        ok = residual <= args.tol
        print(f"dissipation: {'PASS' if ok else 'FAIL'} "
              f"(max residual {residual:.3e}, tol {args.tol:.0e})")
        return 0 if ok else 1
    kwargs = {"n_samples": args.samples, "seed": args.seed}
    if name == "mlsi":
        report = inequalities.check_mlsi(triple, args.lam, **kwargs)
    elif name == "et":
        report = inequalities.check_et(triple, args.lam, K=args.K,
                                       threads=threads, **kwargs)
    elif name == "fwi":
        report = inequalities.check_fwi(triple, args.kappa, K=args.K,
                                        threads=threads, **kwargs)
    elif name == "decay":
        report = inequalities.check_decay(triple, args.lam, T=args.T, **kwargs)
    elif name == "contraction":
        report = inequalities.check_contraction(
            triple, args.kappa, T=args.T, K=args.K, threads=threads, **kwargs)
    elif name == "evi":
        report = inequalities.check_evi(triple, args.kappa, K=args.K,
                                        threads=threads, **kwargs)
    else:
        raise ModelError(f"unknown check {name!r}")
    print(report)
    print(json.dumps(report.summary(), default=str))
    if args.out:
        report.to_csv(args.out)
        print(f"wrote per-sample rows to {args.out}")
    return 0 if report.passed else 1


def cmd_report(args):
    """Full reproduction suite: curvature sweep, separable bounds, and the
    inequality checks at the established constants."""
    failures = []
    threads = args.threads or _threads_default()
    outdir = args.out_dir
    if outdir:
        os.makedirs(outdir, exist_ok=True)

    print("== Curie-Weiss curvature sweep (expected 2(1-beta)) ==")
    for beta in (0.0, 0.25, 0.5, 0.75, 1.0):
        triple = models.curie_weiss(beta)
        rep = curvature.kappa_opt(triple, seed=args.seed)
        oracle = curvature.two_point_kappa(triple)
        target = 2.0 * (1.0 - beta)
        ok = abs(rep.kappa_opt - target) <= 0.02 and \
            abs(rep.kappa_opt - oracle) <= 1e-3
        print(f"beta={beta:4.2f}: kappa_opt={rep.kappa_opt: .5f} "
              f"closed-form={oracle: .5f} target={target: .2f} "
              f"{'ok' if ok else 'MISMATCH'}")
        if not ok:
            failures.append(f"curvature beta={beta}")
        if outdir:
            rep.to_csv(os.path.join(outdir, f"curvature_cw_beta{beta:g}.csv"))

    print("\n== Separable bound vs numerical optimum (a = 20 + r, b = 1) ==")
    for n in (3, 5):
        bound = curvature.separable_bound([20.0, 1.0], [1.0], n)
        triple = models.build_separable(n, [20.0, 1.0], [1.0])
        rep = curvature.kappa_opt(triple, seed=args.seed)
        ok = bound.applicable and rep.kappa_opt >= bound.kappa_bound - 1e-6
        print(f"n={n}: lambda={bound.lam:.4f} bound={bound.kappa_bound:.4f} "
              f"kappa_opt={rep.kappa_opt:.4f} {'ok' if ok else 'VIOLATED'}")
        if not ok:
            failures.append(f"separable n={n}")

    print("\n== Dissipation identity ==")
    for label, triple, mu0, horizon in (
            ("curie-weiss beta=0.5", models.curie_weiss(0.5),
             np.array([0.9, 0.1]), 5.0),
            ("separable n=5 a=1+r", models.build_separable(5, [1.0, 1.0], [1.0]),
             np.array([0.4, 0.3, 0.15, 0.1, 0.05]), 2.0)):
        traj = dynamics.integrate(triple, mu0, horizon, tol=1e-9)
        residual = dynamics.dissipation_residual(traj, triple)
        ok = residual <= 1e-6
        print(f"{label}: residual={residual:.3e} {'ok' if ok else 'FAIL'}")
        if not ok:
            failures.append(f"dissipation {label}")

    print("\n== Functional inequalities (curie-weiss beta=0.5, lambda=kappa=1) ==")
    cw = models.curie_weiss(0.5)
    stationary = dynamics.find_stationary(cw, n_starts=8, seed=args.seed)
    checks = [
        inequalities.check_mlsi(cw, 1.0, n_samples=args.samples * 20,
                                seed=args.seed, stationary=stationary),
        inequalities.check_et(cw, 1.0, n_samples=args.samples, seed=args.seed,
                              stationary=stationary, threads=threads),
        inequalities.check_fwi(cw, 1.0, n_samples=args.samples, seed=args.seed,
                               threads=threads),
        inequalities.check_decay(cw, 1.0, n_samples=args.samples,
                                 seed=args.seed, stationary=stationary),
        inequalities.check_contraction(cw, 1.0, n_samples=max(args.samples // 5, 3),
                                       seed=args.seed, threads=threads),
        inequalities.check_evi(cw, 1.0, n_samples=max(args.samples // 2, 5),
                               seed=args.seed, threads=threads),
    ]
    for report in checks:
        print(report)
        if not report.passed:
            failures.append(report.name)
        if outdir:
            report.to_csv(os.path.join(outdir, f"check_{report.name}.csv"))

    print("\n== Supercritical counterexample (beta=1.5, forced lambda=0.5) ==")
    cw15 = models.curie_weiss(1.5)
    st15 = dynamics.find_stationary(cw15, n_starts=8, seed=args.seed)
    witness = inequalities.check_mlsi(cw15, 0.5, n_samples=args.samples * 20,
                                      seed=args.seed, stationary=st15)
    if witness.passed:
        failures.append("expected mlsi counterexample not found")
        print("no violation found (unexpected)")
    else:
        print(f"violation found as expected; witness "
              f"{witness.worst_case_input} slack {witness.worst_slack:.3e}")

    print()
    if failures:
        print("REPORT: FAIL -", ", ".join(failures))
        return 1
    print("REPORT: all checks passed")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mfcurv",
        description="Curvature, transport distance and convergence "
                    "diagnostics for nonlinear Markov dynamics")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker cap for batch work "
                             "(default: MFCURV_THREADS or cpu count)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, samples=100):
        _add_model_args(p)
        p.add_argument("--samples", type=int, default=samples)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="CSV output path")

    p = sub.add_parser("validate", help="check rate-matrix structure")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("simulate", help="integrate the dynamics")
    common(p)
    p.add_argument("--mu0", help="initial state, comma separated")
    p.add_argument("--t-max", type=float, default=10.0)
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("stationary", help="locate stationary points")
    common(p)
    p.add_argument("--starts", type=int, default=8)
    p.set_defaults(func=cmd_stationary)

    p = sub.add_parser("curvature", help="estimate the optimal curvature bound")
    common(p)
    p.add_argument("--margins", default="1e-2,1e-3,1e-4")
    p.add_argument("--starts", type=int, default=curvature.DEFAULT_STARTS)
    p.set_defaults(func=cmd_curvature)

    p = sub.add_parser("two-point", help="closed-form two-state curvature")
    common(p)
    p.add_argument("--grid", type=int, default=10_000)
    p.set_defaults(func=cmd_two_point)

    p = sub.add_parser("separable-bound",
                       help="analytic bound for separable rates")
    p.add_argument("--a-poly", required=True)
    p.add_argument("--b-poly", required=True)
    p.add_argument("--n", type=int, required=True)
    p.set_defaults(func=cmd_separable_bound)

    for name, fn in (("distance", cmd_distance), ("geodesic", cmd_geodesic)):
        p = sub.add_parser(name, help=f"compute a transport {name}")
        common(p)
        p.add_argument("--mu0", required=True)
        p.add_argument("--mu1", required=True)
        p.add_argument("--K", type=int, default=metric.DEFAULT_K)
        p.set_defaults(func=fn)

    p = sub.add_parser("verify", help="run one inequality checker")
    p.add_argument("check", choices=["mlsi", "et", "fwi", "decay",
                                     "contraction", "evi", "dissipation"])
    common(p)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0,
                   help="curvature constant for mlsi/et/decay")
    p.add_argument("--kappa", type=float, default=1.0,
                   help="curvature constant for fwi/contraction/evi")
    p.add_argument("--K", type=int, default=metric.DEFAULT_K)
    p.add_argument("--T", type=float, default=3.0)
    p.add_argument("--mu0", help="initial state for dissipation")
    p.add_argument("--tol", type=float, default=1e-6,
                   help="residual tolerance for dissipation")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="run the full reproduction suite")
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", help="directory for CSV artifacts")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
