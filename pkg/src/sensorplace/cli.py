"""Command-line interface.

Exit codes: 0 success, 1 verification failure, 2 input error,
3 numerical failure, 4 infeasible model.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
import warnings

import numpy as np

from .config import load_config
from .errors import InfeasibleError, InputError, SensorPlaceError, ValidationError
from .hydraulics import NullSpaceSolver, link_coefficients
from .network import load_network
from .pareto import DegenerateFrontWarning, chebyshev_front, write_plot_csv, write_results_json
from .problem import build_problem
from .roundswap import convex_heuristic

log = logging.getLogger("sensorplace")


def _load(args):
    cfg = load_config(args.config)
    try:
        net = load_network(args.network, args.scenarios)
    except OSError as exc:
        raise InputError(f"cannot read input: {exc}") from exc
    return cfg, net


def _parse_m(values):
    """``["2:5"]`` or ``["2", "3"]`` -> list of budgets."""
    out = []
    for v in values:
        try:
            if ":" in v:
                lo, hi = v.split(":")
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(v))
        except ValueError:
            raise ValidationError(f"bad sensor budget {v!r}; use an integer or lo:hi")
    if not out:
        raise ValidationError("no sensor budget given")
    return out


def cmd_hydraulics(args):
    cfg, net = _load(args)
    theta = cfg.theta if cfg.theta is not None else net.nominal_roughness()
    if np.any(~np.isfinite(theta)):
        raise ValidationError("no roughness estimate for some groups; set theta in the config")
    solver = NullSpaceSolver(net, headloss=cfg.headloss)
    coeffs = link_coefficients(net, theta, cfg.headloss)
    rows = []
    for k in range(net.n_t):
        st = solver.solve(theta, k)
        energy, mass = solver.residuals(coeffs, st.q, st.h, k)
        rows += [(k, "flow", l.id, st.q[i], abs(energy[i])) for i, l in enumerate(net.links)]
        rows += [(k, "head", nd.id, st.h[i], abs(mass[i])) for i, nd in enumerate(net.nodes)]
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["scenario", "kind", "id", "value", "residual"])
        for k, kind, eid, value, res in rows:
            w.writerow([k, kind, eid, repr(float(value)), repr(float(res))])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def single_rows(problem, objective, budgets, cfg):
    """Per-budget results of the single-objective heuristic."""
    obj = problem.d_objective() if objective == "doptimal" else problem.t_objective()
    max_iter = cfg.max_iter_smooth if obj.smooth else cfg.max_iter_nonsmooth
    rows = []
    for m in budgets:
        try:
            res = convex_heuristic(obj, m, problem.adjacency, problem.fixed, problem.excluded,
                                   n=problem.n, max_iter=max_iter,
                                   max_swap_evals=cfg.max_swap_evals, polish=cfg.swap_polish)
        except InfeasibleError as exc:
            rows.append({"m": m, "error": str(exc)})
            continue
        rows.append({
            "m": m, "value": res.value, "lower_bound": res.lower_bound, "gap": res.gap,
            "sensors": problem.node_ids(res.z), "converged": res.relaxation.converged,
            "iterations": res.relaxation.iterations, "swap_evaluations": res.swap.evaluations,
            "seconds": res.seconds,
        })
    return rows


def cmd_single(args):
    cfg, net = _load(args)
    problem = build_problem(net, **cfg.problem_kwargs())
    rows = single_rows(problem, args.objective, _parse_m(args.m), cfg)
    text = json.dumps({"objective": args.objective, "network": net.name, "rows": rows},
                      indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_pareto(args):
    cfg, net = _load(args)
    N = args.N if args.N is not None else cfg.N
    problem = build_problem(net, **cfg.problem_kwargs())
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DegenerateFrontWarning)
        art = chebyshev_front(problem, args.m, N=N, betas=cfg.betas,
                              max_iter_smooth=cfg.max_iter_smooth,
                              max_iter_nonsmooth=cfg.max_iter_nonsmooth,
                              max_swap_evals=cfg.max_swap_evals, polish=cfg.swap_polish,
                              workers=cfg.threads)
    for w in caught:
        log.warning("%s", w.message)
    os.makedirs(args.out, exist_ok=True)
    status = 0
    verification = None
    if args.verify_enum:
        from .verify import verify_front

        checks = verify_front(problem, args.m, art)
        for c in checks:
            print(c.line())
        verification = [{"check": c.name, "passed": c.passed, "detail": c.detail} for c in checks]
        status = 0 if all(c.passed for c in checks) else 1
    results = os.path.join(args.out, "pareto-results.json")
    write_results_json(results, art, problem)
    if verification is not None:
        with open(results) as fh:
            data = json.load(fh)
        data["verification"] = verification
        with open(results, "w") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
            fh.write("\n")
    write_plot_csv(os.path.join(args.out, "pareto-plot.csv"), art)
    log.info("wrote %s and pareto-plot.csv", results)
    return status


def cmd_verify(args):
    from . import synthetic
    from .verify import verify_front

    cfg = load_config(args.config)
    if args.network:
        cases = [(load_network(path, args.scenarios), m) for path in args.network
                 for m in _parse_m(args.m)]
    else:
        nets = [synthetic.grid_network(3, 3, seed=1), synthetic.random_looped_network(10, seed=2),
                synthetic.tree_network(9, seed=3), synthetic.random_looped_network(12, seed=4)]
        cases = [(net, m) for net in nets for m in _parse_m(args.m)]
    kwargs = cfg.problem_kwargs()
    if not math.isfinite(kwargs["lam"]) and not args.network:
        kwargs["lam"] = 1e4
    failed = 0
    for net, m in cases:
        t0 = time.perf_counter()
        problem = build_problem(net, **kwargs)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateFrontWarning)
            art = chebyshev_front(problem, m, N=args.N, max_swap_evals=cfg.max_swap_evals,
                                  polish=cfg.swap_polish)
        checks = verify_front(problem, m, art)
        print(f"# {net.name or 'network'} m={m} ({time.perf_counter() - t0:.2f}s)")
        for c in checks:
            print(c.line())
            failed += not c.passed
    print(f"{'PASS' if not failed else 'FAIL'}: {failed} failed checks")
    return 0 if not failed else 1


def build_parser():
    p = argparse.ArgumentParser(prog="sensorplace",
                                description="Bi-objective pressure-sensor placement.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def inputs(sp, optional=False):
        if optional:
            sp.add_argument("network", nargs="*", help="INP network file(s)")
        else:
            sp.add_argument("network", help="INP network file")
        sp.add_argument("-s", "--scenarios", help="scenario CSV (id,v1,...,vn; SI units)")
        sp.add_argument("-c", "--config", help="TOML config file")

    h = sub.add_parser("hydraulics", help="solve every scenario, write flows and heads as CSV")
    inputs(h)
    h.add_argument("-o", "--out", help="output CSV (default stdout)")
    h.set_defaults(func=cmd_hydraulics)

    s = sub.add_parser("single", help="single-objective heuristic over a range of budgets")
    inputs(s)
    s.add_argument("--objective", choices=("doptimal", "pmedian"), required=True)
    s.add_argument("-m", nargs="+", required=True, help="budgets, e.g. 2:5 or 2 3 4")
    s.add_argument("-o", "--out", help="output JSON (default stdout)")
    s.set_defaults(func=cmd_single)

    f = sub.add_parser("pareto", help="Chebyshev front with bound sets")
    inputs(f)
    f.add_argument("-m", type=int, required=True, help="number of sensors")
    f.add_argument("-N", type=int, help="number of scalarised problems (default from config)")
    f.add_argument("-o", "--out", default=".", help="output directory")
    f.add_argument("--verify-enum", action="store_true",
                   help="check the result against exhaustive enumeration")
    f.set_defaults(func=cmd_pareto)

    v = sub.add_parser("verify", help="enumeration checks on small networks")
    inputs(v, optional=True)
    v.add_argument("-m", nargs="+", default=["2:3"], help="budgets (default 2:3)")
    v.add_argument("-N", type=int, default=3)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SensorPlaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
