"""Command-line front end.

Four subcommands: simulate (Monte Carlo throughput sweeps), solve (belief-grid
value iteration), qbd (finite-controller stability bounds) and validate (the
cross-module consistency battery). All outputs are deterministic given the
flags: CSV files carry a versioned schema comment, numeric output is printed
to six significant digits, and sweep rows are sorted by the sweep value no
matter how workers finish.

Exit codes: 0 success, 1 validation failure, 2 usage or configuration error,
3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import sys

import numpy as np

from . import belief as bf
from . import mdp, qbd, simulate as sm
from .belief import BeliefPair, Observation, ObservationScheme
from .errors import ConvergenceError, ParameterError
from .model import (ServerParams, SystemConfig, config_from_dict,
                    from_gamma_rho, load_config, mu_star_full, mu_star_no,
                    symmetric_system)
from .policy import (FiniteController, MyopicPolicy, controller_from_curve,
                     myopic_controller)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_USAGE = 2
EXIT_NONCONVERGENCE = 3

_SIM_SCHEMES = ("full", "state", "output", "queue", "none")
_SOLVE_SCHEMES = ("state", "output", "queue")
_TABLE1_RHO1 = (0.2, 0.4, 0.6, 0.8)
_TABLE1_RHO2 = 0.5


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _parse_sweep(text: str, name: str) -> np.ndarray:
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise ParameterError(f"{name} must look like from:to[:step], got {text!r}")
    lo, hi = float(parts[0]), float(parts[1])
    step = float(parts[2]) if len(parts) == 3 else 1.0
    if step <= 0 or hi < lo:
        raise ParameterError(f"{name} needs from <= to and step > 0, got {text!r}")
    n = int(round((hi - lo) / step))
    grid = lo + step * np.arange(n + 1)
    return np.round(grid, 12)


def _with_rhos(cfg: SystemConfig, rho1: float, rho2: float) -> SystemConfig:
    g1 = cfg.server1.chain.gamma
    g2 = cfg.server2.chain.gamma
    return SystemConfig(
        cfg.lam,
        ServerParams(from_gamma_rho(g1, rho1), cfg.server1.mu0, cfg.server1.mu1),
        ServerParams(from_gamma_rho(g2, rho2), cfg.server2.mu0, cfg.server2.mu1))


def _base_config(args) -> SystemConfig:
    """Benchmark parameters unless a config file is given; flags override."""
    cfg = load_config(args.config) if getattr(args, "config", None) else symmetric_system(0.5)
    rho1 = getattr(args, "rho", None)
    rho2 = getattr(args, "rho2", None)
    if rho1 is not None or rho2 is not None:
        cfg = _with_rhos(cfg,
                         rho1 if rho1 is not None else cfg.server1.chain.rho,
                         rho2 if rho2 is not None else
                         (rho1 if rho1 is not None else cfg.server2.chain.rho))
    lam = getattr(args, "lam", None)
    if lam is not None:
        cfg = SystemConfig(lam, cfg.server1, cfg.server2)
    return cfg


def _write_csv(path: str | None, schema: str, header: list[str],
               rows: list[list]) -> None:
    lines = [f"# {schema}", ",".join(header)]
    for row in rows:
        lines.append(",".join(str(c) for c in row))
    text = "\n".join(lines) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _load_controller(path: str) -> FiniteController:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return FiniteController.from_json(fh.read())
    except FileNotFoundError:
        raise ParameterError(f"controller file not found: {path}") from None
    except (json.JSONDecodeError, ValueError, KeyError) as exc:
        raise ParameterError(f"malformed controller file {path}: {exc}") from None


def cmd_simulate(args) -> int:
    cfg = _base_config(args)
    schemes = (_SIM_SCHEMES if args.scheme == "all"
               else (ObservationScheme.parse(args.scheme).value,))
    rhos = (_parse_sweep(args.rho_sweep, "--rho-sweep")
            if args.rho_sweep else
            np.array([cfg.server1.chain.rho]))
    seeds = [args.seed_base + k for k in range(args.seeds)]
    g1 = cfg.server1.chain.gamma
    g2 = cfg.server2.chain.gamma

    def one_point(rho: float, scheme_name: str):
        point_cfg = (_with_rhos(cfg, rho, rho) if args.rho_sweep else cfg)
        scheme = ObservationScheme.parse(scheme_name)
        policy = (_load_controller(args.controller) if args.controller
                  else MyopicPolicy.from_config(point_cfg))
        vals = []
        for seed in seeds:
            simc = sm.SimConfig(system=point_cfg, scheme=scheme,
                                horizon=args.horizon, seed=seed,
                                mode=args.mode, warmup=args.warmup,
                                init_beliefs=(g1, g2))
            vals.append(sm.run(simc, policy).throughput)
        arr = np.asarray(vals)
        se = arr.std(ddof=1) / np.sqrt(arr.size) if arr.size > 1 else 0.0
        return float(arr.mean()), float(se)

    tasks = [(float(rho), s) for rho in rhos for s in schemes]
    results = {}
    if args.jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=args.jobs) as pool:
            futs = {pool.submit(one_point, rho, s): (rho, s) for rho, s in tasks}
            for fut in concurrent.futures.as_completed(futs):
                results[futs[fut]] = fut.result()
    else:
        for rho, s in tasks:
            results[(rho, s)] = one_point(rho, s)

    rows = [[_fmt(rho), s, _fmt(results[(rho, s)][0]), _fmt(results[(rho, s)][1]),
             len(seeds)]
            for rho, s in sorted(tasks, key=lambda t: (t[0], _SIM_SCHEMES.index(t[1])))]
    _write_csv(args.output, "throughput sweep v1: rho, scheme, throughput, stderr, seeds",
               ["rho", "scheme", "throughput", "stderr", "seeds"], rows)
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = _base_config(args)
    if args.table1:
        summaries = []
        for rho1 in _TABLE1_RHO1:
            row_cfg = _with_rhos(cfg, rho1, _TABLE1_RHO2)
            entry = {"rho1": rho1, "rho2": _TABLE1_RHO2}
            for scheme in _SOLVE_SCHEMES:
                table = mdp.solve_rvi(ObservationScheme.parse(scheme), row_cfg,
                                      args.cells, args.tol, args.max_iters)
                entry[f"mu_{scheme}"] = float(_fmt(table.mu_star))
            summaries.append(entry)
            print(f"rho1={rho1} rho2={_TABLE1_RHO2}: "
                  + " ".join(f"mu_{s}={entry[f'mu_{s}']:.6g}" for s in _SOLVE_SCHEMES))
        if args.output:
            with open(args.output, "w", encoding="utf-8") as fh:
                json.dump({"M_cells": args.cells, "tol": args.tol,
                           "rows": summaries}, fh, indent=2, sort_keys=True)
                fh.write("\n")
        return EXIT_OK

    if args.scheme is None:
        raise ParameterError("solve needs --scheme or --table1")
    if args.scheme in ("full", "none"):
        raise ParameterError(
            f"scheme {args.scheme} has a closed form; use validate")
    scheme = ObservationScheme.parse(args.scheme)
    table = mdp.solve_rvi(scheme, cfg, args.cells, args.tol, args.max_iters)
    print(f"mu_star={table.mu_star:.6g} iterations={table.iterations} "
          f"span={table.residual_span:.3g}")
    if args.output:
        mdp.export_solve_summary(table, args.output)
    if args.policy_csv:
        mdp.export_value_csv(table, args.policy_csv)
    if args.emit_curve:
        curve = mdp.extract_switching_curve(table)
        centers = table.grid.centers
        rows = []
        for i in range(curve.M):
            thr = int(curve.thresholds[i])
            boundary = _fmt(centers[thr]) if thr < curve.M else ""
            rows.append([_fmt(centers[i]), boundary])
        _write_csv(args.emit_curve,
                   "switching curve v1: omega1, omega2_threshold (empty = never Server 2)",
                   ["omega1", "omega2_threshold"], rows)
    if args.emit_controller:
        curve = mdp.extract_switching_curve(table)
        target_m = args.controller_cells or min(curve.M, 100)
        ctl = controller_from_curve(curve.resample(target_m), cfg,
                                    epsilon=args.epsilon)
        with open(args.emit_controller, "w", encoding="utf-8") as fh:
            fh.write(ctl.to_json())
    return EXIT_OK


def cmd_qbd(args) -> int:
    cfg = _base_config(args)
    if args.controller:
        base_controller = _load_controller(args.controller)
        ms = [base_controller.M]
        if args.M_sweep or args.M:
            raise ParameterError("--controller fixes M; drop --M/--M-sweep")
    else:
        if args.M_sweep:
            ms = [int(m) for m in _parse_sweep(args.M_sweep, "--M-sweep")]
        else:
            ms = [args.M or 100]
        base_controller = None

    rows = []
    for M in ms:
        controller = base_controller or myopic_controller(cfg, M, args.epsilon)
        report = qbd.stability_report(controller, cfg)
        rows.append([controller.M, _fmt(report.mu_star)])
        last = report
    _write_csv(args.output, "qbd stability bound v1: M, mu_star",
               ["M", "mu_star"], rows)
    if args.summary:
        qbd.export_summary(last, args.summary)
    return EXIT_OK


def _check(name: str, ok: bool, detail: str, failures: list) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    if not ok:
        failures.append(name)


def cmd_validate(args) -> int:
    cfg = _base_config(args)
    failures: list[str] = []
    quick = args.quick
    rng = np.random.default_rng(20_240_501)

    # closed forms and their ordering
    no, full = mu_star_no(cfg), mu_star_full(cfg)
    benchmark = cfg == symmetric_system(cfg.server1.chain.rho,
                                        cfg.server2.chain.rho, cfg.lam)
    detail = f"mu_no={no:.6g} mu_full={full:.6g}"
    ok = no <= full + 1e-12
    if benchmark:
        ok = ok and abs(no - 0.5) < 1e-12 and abs(full - 0.65) < 1e-12
        detail += " (benchmark targets 0.5 / 0.65)"
    _check("closed-form bounds", ok, detail, failures)

    # parametrization round trip
    err = 0.0
    for server in cfg.servers:
        ch = server.chain
        back = from_gamma_rho(ch.gamma, ch.rho)
        err = max(err, abs(back.p - ch.p), abs(back.q - ch.q))
    _check("gamma-rho round trip", err < 1e-12, f"max error {err:.2e}", failures)

    # fixed points and belief-space trapping
    worst_resid = 0.0
    worst_escape = 0.0
    for server in cfg.servers:
        try:
            lo, hi = bf.belief_space(server)
        except Exception as exc:
            _check("belief space", False, str(exc), failures)
            break
        for kind, op in (("f", bf.tau_f), ("s", bf.tau_s)):
            w = bf.stable_fixed_point(kind, server)
            worst_resid = max(worst_resid, abs(op(w, server) - w))
        for start in (0.0, 1.0):
            w = start
            for _ in range(50):
                w = (bf.tau_s(w, server) if rng.random() < 0.5
                     else bf.tau_f(w, server))
            worst_escape = max(worst_escape, lo - w, w - hi)
    else:
        _check("belief fixed points", worst_resid < 1e-10,
               f"residual {worst_resid:.2e}", failures)
        _check("belief space traps tau orbits", worst_escape < 1e-9,
               f"max escape {worst_escape:.2e}", failures)

    # recursion vs enumeration oracle (queue scheme pinned at lambda in {0,1})
    n_traj = 10 if quick else 40
    worst = 0.0
    for scheme, lam in ((ObservationScheme.STATE, cfg.lam),
                        (ObservationScheme.OUTPUT, cfg.lam),
                        (ObservationScheme.QUEUE, 0.0),
                        (ObservationScheme.QUEUE, 1.0)):
        check_cfg = SystemConfig(lam, cfg.server1, cfg.server2)
        for _ in range(n_traj):
            worst = max(worst, _oracle_gap(scheme, check_cfg, rng, T=5))
    _check("filter matches enumeration oracle", worst < 1e-10,
           f"max gap {worst:.2e}", failures)

    # simulated ordering of the information regimes
    horizon = 200_000 if quick else 1_000_000
    seeds = [1, 2, 3] if quick else [1, 2, 3, 4, 5]
    policy = MyopicPolicy.from_config(cfg)
    est = {}
    for scheme in (ObservationScheme.NONE, ObservationScheme.QUEUE,
                   ObservationScheme.OUTPUT, ObservationScheme.STATE,
                   ObservationScheme.FULL):
        est[scheme] = sm.estimate_mu_star(cfg, scheme, policy, horizon, seeds)
    chain = [ObservationScheme.NONE, ObservationScheme.QUEUE,
             ObservationScheme.OUTPUT, ObservationScheme.STATE,
             ObservationScheme.FULL]
    ok = True
    for a, b in zip(chain, chain[1:]):
        slack = 2.0 * (est[a][1] + est[b][1]) + 1e-9
        ok = ok and est[a][0] <= est[b][0] + slack
    _check("scheme throughput ordering", ok,
           " <= ".join(f"{est[s][0]:.4f}" for s in chain), failures)

    # QBD: drift identity and lambda invariance
    M = 6
    controller = myopic_controller(cfg, M)
    mu_a = qbd.stability_bound(controller, SystemConfig(0.1, cfg.server1, cfg.server2))
    mu_b = qbd.stability_bound(controller, SystemConfig(0.9, cfg.server1, cfg.server2))
    _check("stability bound ignores lambda", mu_a == mu_b,
           f"{mu_a:.12g} vs {mu_b:.12g}", failures)
    gap = 0.0
    for _ in range(3 if quick else 8):
        lam = float(rng.uniform(0, 1))
        rep = qbd.drift_check(controller, SystemConfig(lam, cfg.server1, cfg.server2))
        gap = max(gap, abs(rep.drift - (lam - rep.mu_star)))
    _check("drift identity", gap < 1e-10, f"max gap {gap:.2e}", failures)

    # misconfiguration must be rejected with the violated inequality named
    try:
        config_from_dict({"lambda": 0.5,
                          "server1": {"p": 0.25, "q": 0.25, "mu0": 0.1, "mu1": 0.7},
                          "server2": {"p": 0.25, "q": 0.25, "mu0": 0.3, "mu1": 0.8}})
        _check("ordering violation rejected", False, "no error raised", failures)
    except ParameterError as exc:
        _check("ordering violation rejected", "mu0(2) <= mu0(1)" in str(exc),
               str(exc), failures)

    print(f"{len(failures)} failure(s)" if failures else "all checks passed")
    return EXIT_VALIDATION if failures else EXIT_OK


def _oracle_gap(scheme: ObservationScheme, cfg: SystemConfig, rng,
                T: int) -> float:
    """Simulate a short consistent trajectory; compare recursion to oracle."""
    s1, s2 = cfg.server1, cfg.server2
    w = BeliefPair(s1.chain.gamma, s2.chain.gamma)
    x1 = int(rng.random() < s1.chain.gamma)
    x2 = int(rng.random() < s2.chain.gamma)
    actions, observations = [], []
    for _ in range(T):
        x1 = _step(rng, x1, s1.chain)
        x2 = _step(rng, x2, s2.chain)
        action = int(rng.integers(1, 3))
        xs = x1 if action == 1 else x2
        server = s1 if action == 1 else s2
        success = int(rng.random() < (server.mu1 if xs else server.mu0))
        arrival = int(rng.random() < cfg.lam)
        if scheme is ObservationScheme.STATE:
            value = xs
        elif scheme is ObservationScheme.OUTPUT:
            value = success
        else:
            value = arrival - success
        obs = Observation(action, value)
        actions.append(action)
        observations.append(obs)
        w = bf.update_belief(scheme, action, obs, w, cfg)
    oracle = bf.exact_filter_oracle(scheme, actions, observations, cfg)
    return max(abs(w.omega1 - oracle.omega1), abs(w.omega2 - oracle.omega2))


def _step(rng, x: int, chain) -> int:
    if x == 0:
        return 1 if rng.random() < chain.p else 0
    return 0 if rng.random() < chain.q else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beliefq",
        description="Stability analysis of a queue with two Markov-modulated servers")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="system config JSON path")
        p.add_argument("--rho", type=float, help="override rho of both servers")
        p.add_argument("--rho2", type=float, help="override rho of server 2")
        p.add_argument("--lambda", dest="lam", type=float, help="override arrival rate")

    p = sub.add_parser("simulate", help="Monte Carlo throughput estimation")
    add_common(p)
    p.add_argument("--scheme", default="all", help="full/state/output/queue/none/all")
    p.add_argument("--rho-sweep", help="from:to:step over rho1=rho2")
    p.add_argument("--horizon", type=int, default=5_000_000)
    p.add_argument("--warmup", type=int, default=10_000)
    p.add_argument("--seeds", type=int, default=3, help="number of replications")
    p.add_argument("--seed-base", type=int, default=1)
    p.add_argument("--mode", choices=("saturated", "queueing"), default="saturated")
    p.add_argument("--controller", help="simulate this controller JSON instead of myopic")
    p.add_argument("--jobs", type=int, default=1, help="parallel sweep workers")
    p.add_argument("--output", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("solve", help="relative value iteration on the belief grid")
    add_common(p)
    p.add_argument("--scheme", help="state/output/queue")
    p.add_argument("--cells", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-iters", type=int, default=100_000)
    p.add_argument("--table1", action="store_true",
                   help="solve the standard 4x3 sweep (rho1 in 0.2..0.8, rho2=0.5)")
    p.add_argument("--output", help="JSON summary path")
    p.add_argument("--policy-csv", help="per-cell value/action CSV path")
    p.add_argument("--emit-curve", help="switching-curve CSV path")
    p.add_argument("--emit-controller", help="controller JSON path")
    p.add_argument("--controller-cells", type=int,
                   help="controller resolution for --emit-controller")
    p.add_argument("--epsilon", type=float, default=0.001)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("qbd", help="matrix-analytic stability bound")
    add_common(p)
    p.add_argument("--policy", choices=("myopic",), default="myopic")
    p.add_argument("--controller", help="controller JSON path")
    p.add_argument("--M", type=int, help="controller grid size")
    p.add_argument("--M-sweep", help="from:to[:step] over M")
    p.add_argument("--epsilon", type=float, default=0.001)
    p.add_argument("--output", help="CSV path (default stdout)")
    p.add_argument("--summary", help="JSON summary path")
    p.set_defaults(func=cmd_qbd)

    p = sub.add_parser("validate", help="cross-module consistency checks")
    add_common(p)
    p.add_argument("--quick", action="store_true", help="reduced battery")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
