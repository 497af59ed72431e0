"""Average-reward value iteration on the discretized belief square.

For the state, output and queue observation regimes the maximal throughput
mu* solves an average-reward Bellman equation over belief pairs:

    mu* + h(w1, w2) = max{ h1(w1, w2), h2(w1, w2) },

where hj adds the immediate believed success rate r_j to the
observation-weighted value at the successor beliefs. The square [0, 1]^2 is
covered by M_cells uniform cells per axis and h lives at cell centers;
successor beliefs rarely land on centers, so h is looked up by bilinear
interpolation. Each sweep is synchronous and factorizes into a handful of
sparse 1-D interpolation products, so full sweeps cost far less than
touching every (cell, successor) pair.

Relative value iteration normalizes h at the cell holding the stationary
beliefs and stops when the span of the one-step gain falls below tol; mu* is
read off as the midpoint of that span.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import belief as bf
from .belief import ObservationScheme
from .errors import ConvergenceError, ParameterError
from .model import ServerParams, SystemConfig
from .policy import SwitchingCurve

__all__ = [
    "BeliefGrid",
    "ValueTable",
    "bellman_backup",
    "action_values",
    "solve_rvi",
    "extract_switching_curve",
    "scheme_iv_limit_check",
    "export_value_csv",
    "export_solve_summary",
]

log = logging.getLogger(__name__)

_GRID_SCHEMES = (ObservationScheme.STATE, ObservationScheme.OUTPUT,
                 ObservationScheme.QUEUE)


@dataclass(frozen=True)
class BeliefGrid:
    """Uniform cell grid on [0, 1] per axis; h lives at cell centers."""

    M_cells: int

    def __post_init__(self) -> None:
        if self.M_cells < 2:
            raise ParameterError(f"M_cells must be >= 2, got {self.M_cells}")

    @cached_property
    def centers(self) -> np.ndarray:
        return (np.arange(self.M_cells) + 0.5) / self.M_cells

    def cell_of(self, omega: float) -> int:
        return min(int(omega * self.M_cells), self.M_cells - 1)


def _interp_weights(x: np.ndarray, M: int) -> tuple[np.ndarray, np.ndarray]:
    """Left cell index and left weight of linear interpolation at centers.

    Points beyond the outermost centers clamp to them (constant
    extrapolation); belief operators keep successors inside (0, 1), so the
    clamped band is at most half a cell wide.
    """
    t = np.clip(np.asarray(x, dtype=float) * M - 0.5, 0.0, M - 1.0)
    i0 = np.minimum(t.astype(int), M - 2)
    w0 = 1.0 - (t - i0)
    return i0, w0


def _interp_matrix(points: np.ndarray, M: int) -> sp.csr_matrix:
    """Rows interpolate h-values on the center grid at the given points."""
    i0, w0 = _interp_weights(points, M)
    rows = np.repeat(np.arange(points.size), 2)
    cols = np.stack([i0, i0 + 1], axis=1).ravel()
    data = np.stack([w0, 1.0 - w0], axis=1).ravel()
    return sp.csr_matrix((data, (rows, cols)), shape=(points.size, M))


def _interp_vector(point: float, M: int) -> np.ndarray:
    v = np.zeros(M)
    i0, w0 = _interp_weights(np.array([point]), M)
    v[i0[0]] = w0[0]
    v[i0[0] + 1] = 1.0 - w0[0]
    return v


def _tau_grid(op, centers: np.ndarray, server: ServerParams, *extra) -> np.ndarray:
    return np.array([op(w, server, *extra) for w in centers])


class _SweepOperator:
    """Precomputed interpolation products for one (scheme, grid, config)."""

    def __init__(self, scheme: ObservationScheme, grid: BeliefGrid,
                 config: SystemConfig):
        if scheme not in _GRID_SCHEMES:
            raise ParameterError(
                f"the grid solver covers state/output/queue observation; "
                f"{scheme.value} has a closed form in the model module")
        self.scheme = scheme
        self.grid = grid
        self.config = config
        M = grid.M_cells
        w = grid.centers
        s1, s2 = config.server1, config.server2
        self.r1 = np.array([bf.success_prob(x, s1) for x in w])
        self.r2 = np.array([bf.success_prob(x, s2) for x in w])
        self.Rn1 = _interp_matrix(_tau_grid(bf.tau_n, w, s1), M)
        self.Rn2 = _interp_matrix(_tau_grid(bf.tau_n, w, s2), M)
        if scheme is ObservationScheme.STATE:
            c1, c2 = s1.chain, s2.chain
            self.v_p1 = _interp_vector(c1.p, M)
            self.v_q1 = _interp_vector(1.0 - c1.q, M)
            self.v_p2 = _interp_vector(c2.p, M)
            self.v_q2 = _interp_vector(1.0 - c2.q, M)
        else:
            self.Rf1 = _interp_matrix(_tau_grid(bf.tau_f, w, s1), M)
            self.Rs1 = _interp_matrix(_tau_grid(bf.tau_s, w, s1), M)
            self.Rf2 = _interp_matrix(_tau_grid(bf.tau_f, w, s2), M)
            self.Rs2 = _interp_matrix(_tau_grid(bf.tau_s, w, s2), M)
        if scheme is ObservationScheme.QUEUE:
            lam = config.lam
            self.Rc1 = _interp_matrix(_tau_grid(bf.tau_c, w, s1, lam), M)
            self.Rc2 = _interp_matrix(_tau_grid(bf.tau_c, w, s2, lam), M)

    def action_value_grids(self, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """One synchronous evaluation of both actions' values at every cell."""
        r1c = self.r1[:, None]
        r2r = self.r2[None, :]
        hn2 = h @ self.Rn2.T          # h(., tau_n(w2)) on the grid
        hn1 = self.Rn1 @ h            # h(tau_n(w1), .)
        if self.scheme is ObservationScheme.STATE:
            gp1 = self.v_p1 @ hn2
            gq1 = self.v_q1 @ hn2
            gp2 = hn1 @ self.v_p2
            gq2 = hn1 @ self.v_q2
            w = self.grid.centers
            h1 = r1c + (1.0 - w)[:, None] * gp1[None, :] + w[:, None] * gq1[None, :]
            h2 = r2r + (1.0 - w)[None, :] * gp2[:, None] + w[None, :] * gq2[:, None]
            return h1, h2
        if self.scheme is ObservationScheme.OUTPUT:
            h1 = r1c + (1.0 - r1c) * (self.Rf1 @ hn2) + r1c * (self.Rs1 @ hn2)
            h2 = r2r + (1.0 - r2r) * (hn1 @ self.Rf2.T) + r2r * (hn1 @ self.Rs2.T)
            return h1, h2
        lam = self.config.lam
        h1 = (r1c
              + lam * (1.0 - r1c) * (self.Rf1 @ hn2)
              + (1.0 - lam) * r1c * (self.Rs1 @ hn2)
              + ((1.0 - lam) * (1.0 - r1c) + lam * r1c) * (self.Rc1 @ hn2))
        h2 = (r2r
              + lam * (1.0 - r2r) * (hn1 @ self.Rf2.T)
              + (1.0 - lam) * r2r * (hn1 @ self.Rs2.T)
              + ((1.0 - lam) * (1.0 - r2r) + lam * r2r) * (hn1 @ self.Rc2.T))
        return h1, h2


def _reference_cell(grid: BeliefGrid, config: SystemConfig) -> tuple[int, int]:
    return (grid.cell_of(config.server1.chain.gamma),
            grid.cell_of(config.server2.chain.gamma))


def bellman_backup(scheme: ObservationScheme, grid: BeliefGrid, h: np.ndarray,
                   config: SystemConfig) -> tuple[np.ndarray, float, float]:
    """One synchronous sweep: (normalized next h, gain midpoint, gain span)."""
    op = _SweepOperator(scheme, grid, config)
    h1, h2 = op.action_value_grids(np.asarray(h, dtype=float))
    Th = np.maximum(h1, h2)
    gain = Th - h
    lo, hi = gain.min(), gain.max()
    ref = _reference_cell(grid, config)
    return Th - Th[ref], 0.5 * (lo + hi), hi - lo


def _interp_at(h: np.ndarray, w1: float, w2: float, M: int) -> float:
    i1, a1 = _interp_weights(np.array([w1]), M)
    i2, a2 = _interp_weights(np.array([w2]), M)
    i1, a1, i2, a2 = i1[0], a1[0], i2[0], a2[0]
    return (a1 * (a2 * h[i1, i2] + (1 - a2) * h[i1, i2 + 1])
            + (1 - a1) * (a2 * h[i1 + 1, i2] + (1 - a2) * h[i1 + 1, i2 + 1]))


def action_values(scheme: ObservationScheme, beliefs: tuple[float, float],
                  h: np.ndarray, grid: BeliefGrid,
                  config: SystemConfig) -> tuple[float, float]:
    """Both actions' backup values at an arbitrary belief point.

    Mirrors the grid sweep but evaluates the successor beliefs exactly, so
    boundary identities (e.g. both actions reaching h(p1, p2) from the origin)
    can be checked without discretization error in the query point.
    """
    w1, w2 = beliefs
    s1, s2 = config.server1, config.server2
    M = grid.M_cells
    lam = config.lam

    def at(x: float, y: float) -> float:
        return _interp_at(h, x, y, M)

    n1, n2 = bf.tau_n(w1, s1), bf.tau_n(w2, s2)
    r1, r2 = bf.success_prob(w1, s1), bf.success_prob(w2, s2)
    if scheme is ObservationScheme.STATE:
        h1 = r1 + (1 - w1) * at(s1.chain.p, n2) + w1 * at(1 - s1.chain.q, n2)
        h2 = r2 + (1 - w2) * at(n1, s2.chain.p) + w2 * at(n1, 1 - s2.chain.q)
    elif scheme is ObservationScheme.OUTPUT:
        h1 = r1 + (1 - r1) * at(bf.tau_f(w1, s1), n2) + r1 * at(bf.tau_s(w1, s1), n2)
        h2 = r2 + (1 - r2) * at(n1, bf.tau_f(w2, s2)) + r2 * at(n1, bf.tau_s(w2, s2))
    elif scheme is ObservationScheme.QUEUE:
        h1 = (r1 + lam * (1 - r1) * at(bf.tau_f(w1, s1), n2)
              + (1 - lam) * r1 * at(bf.tau_s(w1, s1), n2)
              + ((1 - lam) * (1 - r1) + lam * r1) * at(bf.tau_c(w1, s1, lam), n2))
        h2 = (r2 + lam * (1 - r2) * at(n1, bf.tau_f(w2, s2))
              + (1 - lam) * r2 * at(n1, bf.tau_s(w2, s2))
              + ((1 - lam) * (1 - r2) + lam * r2) * at(n1, bf.tau_c(w2, s2, lam)))
    else:
        raise ParameterError(f"no grid backup for scheme {scheme.value}")
    return h1, h2


@dataclass(frozen=True)
class ValueTable:
    """Solved relative values, gain and greedy policy on the belief grid."""

    scheme: ObservationScheme
    grid: BeliefGrid
    config: SystemConfig
    h: np.ndarray
    mu_star: float
    policy: np.ndarray
    residual_span: float
    iterations: int
    tol: float


def solve_rvi(scheme: ObservationScheme, config: SystemConfig,
              M_cells: int = 1000, tol: float = 1e-4,
              max_iters: int = 100_000) -> ValueTable:
    """Relative value iteration until the gain span drops below tol.

    Sweeps are synchronous (the new table is computed wholly from the old),
    h is pinned to zero at the cell holding the stationary beliefs, and the
    returned mu* is the midpoint of the final gain span. Greedy ties go to
    Server 1.
    """
    grid = BeliefGrid(M_cells)
    op = _SweepOperator(scheme, grid, config)
    ref = _reference_cell(grid, config)
    h = np.zeros((M_cells, M_cells))
    span = np.inf
    mu = np.nan
    for it in range(1, max_iters + 1):
        h1, h2 = op.action_value_grids(h)
        Th = np.maximum(h1, h2)
        gain = Th - h
        lo, hi = gain.min(), gain.max()
        span = hi - lo
        mu = 0.5 * (lo + hi)
        h = Th - Th[ref]
        if span < tol:
            break
        if it % 100 == 0:
            log.debug("rvi %s M=%d sweep %d: span=%.3g mu=%.6f",
                      scheme.value, M_cells, it, span, mu)
    else:
        raise ConvergenceError(
            f"relative value iteration did not reach span < {tol} within "
            f"{max_iters} sweeps (final span {span:.3g})",
            residual=span, iterations=max_iters)
    h1, h2 = op.action_value_grids(h)
    policy = np.where(h2 > h1, 2, 1).astype(np.int8)
    return ValueTable(scheme=scheme, grid=grid, config=config, h=h,
                      mu_star=float(mu), policy=policy,
                      residual_span=float(span), iterations=it, tol=tol)


def extract_switching_curve(table: ValueTable) -> SwitchingCurve:
    """First Server-2 cell per omega1 column of the greedy policy.

    Monotonicity is a property of the solution, not an assumption: violations
    are logged and left in the data.
    """
    M = table.grid.M_cells
    is2 = table.policy == 2
    any2 = is2.any(axis=1)
    thresholds = np.where(any2, is2.argmax(axis=1), M)
    curve = SwitchingCurve(M=M, thresholds=thresholds)
    bad = curve.monotonicity_violations
    if bad.size:
        log.warning("switching curve decreases at %d of %d columns (first at %d)",
                    bad.size, M, int(bad[0]))
    return curve


@dataclass(frozen=True)
class SchemeIvLimitReport:
    """Queue observation at extreme arrival rates versus output observation."""

    mu_output: float
    mu_queue_lam0: float
    mu_queue_lam1: float
    max_mu_diff: float
    policy_disagreement_lam0: float
    policy_disagreement_lam1: float


def scheme_iv_limit_check(config: SystemConfig, M_cells: int = 200,
                          tol: float = 1e-4) -> SchemeIvLimitReport:
    """At lambda 0 or 1 every queue change pins down the service outcome,
    so the queue scheme should collapse to the output scheme."""
    out = solve_rvi(ObservationScheme.OUTPUT, config, M_cells, tol)
    reports = {}
    for lam in (0.0, 1.0):
        cfg = SystemConfig(lam, config.server1, config.server2)
        q = solve_rvi(ObservationScheme.QUEUE, cfg, M_cells, tol)
        reports[lam] = (q.mu_star,
                        float(np.mean(q.policy != out.policy)))
    return SchemeIvLimitReport(
        mu_output=out.mu_star,
        mu_queue_lam0=reports[0.0][0],
        mu_queue_lam1=reports[1.0][0],
        max_mu_diff=max(abs(reports[0.0][0] - out.mu_star),
                        abs(reports[1.0][0] - out.mu_star)),
        policy_disagreement_lam0=reports[0.0][1],
        policy_disagreement_lam1=reports[1.0][1],
    )


def export_value_csv(table: ValueTable, path: str) -> None:
    """Per-cell CSV: omega1, omega2, h, action."""
    M = table.grid.M_cells
    w = table.grid.centers
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# belief value table v1: omega1, omega2, h, action\n")
        writer = csv.writer(fh)
        writer.writerow(["omega1", "omega2", "h", "action"])
        for i in range(M):
            for j in range(M):
                writer.writerow([f"{w[i]:.6g}", f"{w[j]:.6g}",
                                 f"{table.h[i, j]:.6g}", int(table.policy[i, j])])


def export_solve_summary(table: ValueTable, path: str) -> None:
    doc = {"scheme": table.scheme.value,
           "mu_star": float(f"{table.mu_star:.6g}"),
           "iterations": table.iterations,
           "span": table.residual_span,
           "M_cells": table.grid.M_cells,
           "tol": table.tol}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
