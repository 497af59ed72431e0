"""Acceptance suite: every criterion runs at its stated tolerance and prints
one pass/fail line. The heavy solver criteria run the CI grid profile
(M_cells=200, tolerance 0.005); the full-grid profile (M_cells=1000,
tolerance 0.002) is the CLI default (`beliefq solve --table1`)."""

import numpy as np

from beliefq.belief import BeliefPair, ObservationScheme, exact_filter_oracle, update_belief
from beliefq.mdp import scheme_iv_limit_check, solve_rvi
from beliefq.model import SystemConfig, mu_star_full, mu_star_no, symmetric_system
from beliefq.policy import FiniteController, MyopicPolicy, myopic_controller
from beliefq.qbd import drift_check, stability_bound
from beliefq.simulate import estimate_mu_star

from conftest import (random_valid_config, simulate_observation_trajectory,
                      strict_config)

OS = ObservationScheme

CI_CELLS = 200
CI_TOL = 1e-4
CI_VALUE_TOL = 0.005

TABLE1 = {
    # rho1: (mu_state, mu_output, mu_queue) at rho2 = 0.5, lambda = 0.5
    0.2: (0.5543, 0.5314, 0.5190),
    0.4: (0.5673, 0.5400, 0.5231),
    0.6: (0.5823, 0.5489, 0.5289),
    0.8: (0.6009, 0.5647, 0.5360),
}
FIG4_LIMITS = {0.2: 0.5179, 0.4: 0.5359, 0.6: 0.5539, 0.8: 0.5815}


def _report(num: int, ok: bool, detail: str) -> None:
    print(f"criterion {num}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {num}: {detail}"


def test_criterion_1_closed_forms(benchmark):
    no = mu_star_no(benchmark)
    full = mu_star_full(benchmark)
    ok = abs(no - 0.5) <= 1e-12 and abs(full - 0.65) <= 1e-12
    _report(1, ok, f"mu*_no={no!r}, mu*_full={full!r} (exact to 1e-12)")


def _table1_worst_diff(cells: int, tol: float) -> float:
    worst = 0.0
    for rho1, targets in TABLE1.items():
        cfg = symmetric_system(rho1, 0.5, lam=0.5)
        for scheme, target in zip((OS.STATE, OS.OUTPUT, OS.QUEUE), targets):
            table = solve_rvi(scheme, cfg, cells, tol)
            worst = max(worst, abs(table.mu_star - target))
    return worst


def test_criterion_2_table1_reproduction_ci_profile():
    worst = _table1_worst_diff(CI_CELLS, CI_TOL)
    ok = worst <= CI_VALUE_TOL
    _report(2, ok, f"12 entries at M={CI_CELLS}, max |diff| = {worst:.4f} "
                   f"<= {CI_VALUE_TOL} (CI profile)")


def test_criterion_2_table1_reproduction_full_grid():
    worst = _table1_worst_diff(1000, CI_TOL)
    ok = worst <= 0.002
    _report(2, ok, f"12 entries at M=1000, max |diff| = {worst:.4f} "
                   f"<= 0.002 (full grid)")


def test_criterion_3_qbd_limits():
    worst = 0.0
    lam_variant = True
    for rho, target in FIG4_LIMITS.items():
        cfg = symmetric_system(rho)
        ctl = myopic_controller(cfg, 100)
        mu = stability_bound(ctl, cfg)
        worst = max(worst, abs(mu - target))
        others = {stability_bound(
            ctl, SystemConfig(lam, cfg.server1, cfg.server2))
            for lam in (0.1, 0.5, 0.9)}
        lam_variant = lam_variant and others == {mu}
    ok = worst <= 0.002 and lam_variant
    _report(3, ok, f"M=100 myopic C: max |diff| = {worst:.5f} <= 0.002, "
                   f"lambda-invariant bit-for-bit: {lam_variant}")


def test_criterion_4_figure2_qualitative():
    seeds = [11, 12, 13, 14]
    horizon = 1_000_000
    order = (OS.NONE, OS.QUEUE, OS.OUTPUT, OS.STATE, OS.FULL)
    ordering_ok = True
    for rho in (0.0, 0.25, 0.5, 0.75, 0.9):
        cfg = symmetric_system(rho)
        pol = MyopicPolicy.from_config(cfg)
        est = {s: estimate_mu_star(cfg, s, pol, horizon, seeds) for s in order}
        for a, b in zip(order, order[1:]):
            slack = 2.0 * (est[a][1] + est[b][1]) + 1e-12
            if est[a][0] > est[b][0] + slack:
                ordering_ok = False
        if rho == 0.0:
            flat_ok = all(abs(est[s][0] - 0.5) <= 0.003
                          for s in (OS.STATE, OS.OUTPUT, OS.QUEUE, OS.NONE))
    cfg = symmetric_system(0.98)
    est_hi, _ = estimate_mu_star(cfg, OS.STATE, MyopicPolicy.from_config(cfg),
                                 horizon, list(range(8)))
    limit_ok = abs(est_hi - 0.65) <= 0.01
    ok = ordering_ok and flat_ok and limit_ok
    _report(4, ok, f"ordering within 2 se on rho grid: {ordering_ok}; "
                   f"rho=0 schemes II-V at 0.5 +- 0.003: {flat_ok}; "
                   f"state scheme at rho=0.98: {est_hi:.4f} within 0.01 of 0.65")


def test_criterion_5_filter_correctness():
    """Recursion equals the exact enumeration oracle on random configs.

    The queue scheme runs at lambda in {0, 1}: at interior arrival rates its
    published mixture update is not the exact posterior (see the decisions
    ledger), so exactness there is out of reach by construction.
    """
    rng = np.random.default_rng(20_240_823)
    worst = 0.0
    n = 0
    for k in range(500):
        scheme = (OS.STATE, OS.OUTPUT, OS.QUEUE)[k % 3]
        lam = float(rng.integers(0, 2)) if scheme is OS.QUEUE else None
        cfg = random_valid_config(rng, lam=lam)
        T = int(rng.integers(1, 9))
        actions, observations = simulate_observation_trajectory(scheme, cfg,
                                                                rng, T)
        w = BeliefPair(cfg.server1.chain.gamma, cfg.server2.chain.gamma)
        for a, o in zip(actions, observations):
            w = update_belief(scheme, a, o, w, cfg)
        oracle = exact_filter_oracle(scheme, actions, observations, cfg)
        worst = max(worst, abs(w.omega1 - oracle.omega1),
                    abs(w.omega2 - oracle.omega2))
        n += 1
    ok = worst <= 1e-10 and n == 500
    _report(5, ok, f"{n} random configs, trajectories up to length 8: "
                   f"max |recursion - oracle| = {worst:.2e} <= 1e-10")


def test_criterion_6_corner_conditions():
    """Strictly ordered rates on the Table-1 (rho, lambda) grid select
    Server 1 at cell (0,0) and Server 2 at cell (1,1)."""
    ok = True
    checked = 0
    for rho1 in TABLE1:
        cfg = strict_config(rho1, 0.5, lam=0.5)
        for scheme in (OS.STATE, OS.OUTPUT, OS.QUEUE):
            table = solve_rvi(scheme, cfg, CI_CELLS, CI_TOL)
            ok = ok and table.policy[0, 0] == 1 and table.policy[-1, -1] == 2
            checked += 1
    _report(6, ok, f"{checked} solves: greedy action is Server 1 at (0,0) "
                   f"and Server 2 at (1,1)")


def test_criterion_7_scheme_iv_limits(benchmark):
    report = scheme_iv_limit_check(benchmark, M_cells=CI_CELLS, tol=CI_TOL)
    ok = report.max_mu_diff < 2 * CI_TOL
    _report(7, ok, f"|mu_queue(lam in {{0,1}}) - mu_output| = "
                   f"{report.max_mu_diff:.2e} < 2e-4")


def test_criterion_8_cross_oracle_consistency():
    cfg = symmetric_system(0.6)
    ctl = myopic_controller(cfg, 40)
    bound = stability_bound(ctl, cfg)
    est, se = estimate_mu_star(cfg, OS.OUTPUT, ctl, 1_000_000,
                               seeds=list(range(1, 11)))
    gap = abs(est - bound)
    ok = gap <= 3 * se
    _report(8, ok, f"simulated {est:.5f} +- {se:.5f} vs bound {bound:.5f}: "
                   f"gap {gap:.5f} <= 3 se")


def test_criterion_9_drift_identity():
    rng = np.random.default_rng(77)
    worst = 0.0
    for _ in range(20):
        cfg = random_valid_config(rng)
        M = int(rng.integers(1, 7))
        base = myopic_controller(cfg, M)
        ctl = FiniteController(M, base.epsilon, rng.random((M, M)),
                               base.N1, base.S1, base.F1,
                               base.N2, base.S2, base.F2)
        rep = drift_check(ctl, cfg)
        worst = max(worst, abs(rep.drift - (cfg.lam - rep.mu_star)))
    ok = worst <= 1e-10
    _report(9, ok, f"20 random (controller, lambda) pairs: "
                   f"max |pi(A1-A-1)1 - (lambda - pi S 1)| = {worst:.2e}")
