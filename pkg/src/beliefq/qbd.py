"""Quasi-birth-and-death stability bound for finite-state controllers.

The queue, the two environment bits and the controller cells form a Markov
chain whose transition matrix is block-tridiagonal in the queue length: a QBD
with 4 * M^2 phases per level. The repeating blocks factor through three
phase-transition matrices S~, F~ and N~ (phase change joint with a service
success, failure, or no attempt). The chain is positive recurrent iff

    lambda < mu* = pi_inf @ S~ @ 1,

where pi_inf is the stationary distribution of S~ + F~; lambda cancels out of
that computation entirely.

Phase layout (pinned by tests): index = (2*x1 + x2) * M^2 + (psi1-1) * M
+ (psi2-1), i.e. environment-major with the belief pair in row-major order.
This matches vec(C') in the diagonal action weights: that vector stacks the
rows of C.

Explicit block matrices are only built for small M (tests, exports); the
stability bound itself works matrix-free through the Kronecker factors, so
the 4 M^2-square blocks are never materialized.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, ParameterError
from .model import SystemConfig
from .policy import FiniteController

__all__ = [
    "QbdBlocks",
    "phase_index",
    "phase_unpack",
    "build_env_blocks",
    "assemble_tilde",
    "level_blocks",
    "stationary_phase_distribution",
    "stability_bound",
    "stability_report",
    "drift_check",
    "export_blocks",
    "export_summary",
]

_ENV_ORDER = ((0, 0), (0, 1), (1, 0), (1, 1))
_EXPLICIT_MAX_M = 24
_DIRECT_MAX_DIM = 2048


def phase_index(x1: int, x2: int, psi1: int, psi2: int, M: int) -> int:
    """Flat phase index of (X1, X2, psi1, psi2) with psi 1-based."""
    if x1 not in (0, 1) or x2 not in (0, 1):
        raise ParameterError("environment bits must be 0 or 1")
    if not (1 <= psi1 <= M and 1 <= psi2 <= M):
        raise ParameterError("controller cells must lie in 1..M")
    return (2 * x1 + x2) * M * M + (psi1 - 1) * M + (psi2 - 1)


def phase_unpack(index: int, M: int) -> tuple[int, int, int, int]:
    """Inverse of phase_index."""
    if not 0 <= index < 4 * M * M:
        raise ParameterError(f"phase index must lie in 0..{4 * M * M - 1}")
    env, rest = divmod(index, M * M)
    psi1, psi2 = divmod(rest, M)
    return env >> 1, env & 1, psi1 + 1, psi2 + 1


def _mus(config: SystemConfig) -> tuple[tuple[float, float], tuple[float, float]]:
    return ((config.server1.mu0, config.server1.mu1),
            (config.server2.mu0, config.server2.mu1))


def _check_explicit(M: int) -> None:
    if M > _EXPLICIT_MAX_M:
        raise ParameterError(
            f"explicit QBD blocks are limited to M <= {_EXPLICIT_MAX_M} "
            f"(got {M}); use stability_bound, which never materializes them")


def build_env_blocks(controller: FiniteController, config: SystemConfig) -> dict:
    """The M^2-square blocks indexed by the current environment pair (k, l).

    S_kl = mu_l(2) diag(vec(C')) (N1 x S2) + mu_k(1) diag(vec(Cbar')) (S1 x N2),
    F_kl the same with failure rates and F matrices, N_kl = N1 x N2. The
    diagonal action weights are row scalings, so no M^2-square diagonal matrix
    is ever formed.
    """
    _check_explicit(controller.M)
    mu1, mu2 = _mus(config)
    c = controller.C.ravel()[:, None]
    cbar = 1.0 - c
    kNS = np.kron(controller.N1, controller.S2)
    kSN = np.kron(controller.S1, controller.N2)
    kNF = np.kron(controller.N1, controller.F2)
    kFN = np.kron(controller.F1, controller.N2)
    kNN = np.kron(controller.N1, controller.N2)
    blocks = {}
    for k, l in _ENV_ORDER:
        S = mu2[l] * (c * kNS) + mu1[k] * (cbar * kSN)
        F = (1.0 - mu2[l]) * (c * kNF) + (1.0 - mu1[k]) * (cbar * kFN)
        blocks[(k, l)] = (S, F, kNN.copy())
    return blocks


def assemble_tilde(env_blocks: dict, config: SystemConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mix the environment blocks by the joint chain P1 x P2.

    Block (r, c) of the 4 x 4 layout is (P1 x P2)[r, c] times the env block of
    the *row* environment: the belief transition depends on where the
    environments are now, the environment transition on where they go.
    """
    PP = np.kron(config.server1.chain.transition_matrix(),
                 config.server2.chain.transition_matrix())
    MM = next(iter(env_blocks.values()))[0].shape[0]
    out = []
    for which in range(3):
        big = np.zeros((4 * MM, 4 * MM))
        for r, env in enumerate(_ENV_ORDER):
            D = env_blocks[env][which]
            for col in range(4):
                big[r * MM:(r + 1) * MM, col * MM:(col + 1) * MM] = PP[r, col] * D
        out.append(big)
    return tuple(out)


@dataclass(frozen=True)
class QbdBlocks:
    """Repeating and boundary blocks of the level process."""

    S_tilde: np.ndarray
    F_tilde: np.ndarray
    N_tilde: np.ndarray
    A_minus1: np.ndarray
    A_0: np.ndarray
    A_1: np.ndarray
    A0_boundary: np.ndarray
    A1_boundary: np.ndarray


def level_blocks(tilde: tuple[np.ndarray, np.ndarray, np.ndarray],
                 lam: float) -> QbdBlocks:
    """Split the phase matrices into level-change blocks at arrival rate lambda."""
    if not 0.0 <= lam <= 1.0:
        raise ParameterError(f"lambda must lie in [0, 1], got {lam}")
    S, F, N = tilde
    return QbdBlocks(
        S_tilde=S, F_tilde=F, N_tilde=N,
        A_minus1=(1.0 - lam) * S,
        A_0=(1.0 - lam) * F + lam * S,
        A_1=lam * F,
        A0_boundary=(1.0 - lam) * N,
        A1_boundary=lam * N,
    )


def _power_iteration(apply_left, dim: int, tol: float,
                     max_iters: int) -> tuple[np.ndarray, float, int]:
    v = np.full(dim, 1.0 / dim)
    resid = np.inf
    for it in range(1, max_iters + 1):
        w = apply_left(v)
        w /= w.sum()
        resid = np.abs(w - v).sum()
        v = w
        if resid < tol:
            return v, resid, it
    raise ConvergenceError(
        f"power iteration did not reach {tol} in {max_iters} steps",
        residual=resid, iterations=max_iters)


def stationary_phase_distribution(S_tilde: np.ndarray, F_tilde: np.ndarray,
                                  tol: float = 1e-12,
                                  max_iters: int = 200_000) -> np.ndarray:
    """Stationary vector of S~ + F~ from explicit matrices.

    Small systems go through a direct linear solve; larger ones through power
    iteration (the smoothed chain is strictly positive, so it converges
    geometrically). The result is checked to residual 1e-10.
    """
    T = np.asarray(S_tilde) + np.asarray(F_tilde)
    n = T.shape[0]
    if n <= _DIRECT_MAX_DIM:
        A = T.T - np.eye(n)
        A[0, :] = 1.0
        b = np.zeros(n)
        b[0] = 1.0
        pi = np.linalg.solve(A, b)
        iterations = 0
    else:
        pi, _, iterations = _power_iteration(lambda v: v @ T, n, tol, max_iters)
    resid = np.abs(pi @ T - pi).sum()
    if resid > 1e-10 or pi.min() < -1e-12:
        raise ConvergenceError(
            f"stationary solve residual {resid} exceeds 1e-10",
            residual=resid, iterations=iterations)
    return np.maximum(pi, 0.0) / max(pi.sum(), 1e-300)


class _TildeOperator:
    """Matrix-free left action of S~ + F~ through the Kronecker factors."""

    def __init__(self, controller: FiniteController, config: SystemConfig):
        self.M = controller.M
        self.c = controller.C.ravel()
        self.cbar = 1.0 - self.c
        mu1, mu2 = _mus(config)
        self.N1, self.N2 = controller.N1, controller.N2
        # success-probability mixes of the chosen server's update matrices
        self.B1 = [mu1[k] * controller.S1 + (1.0 - mu1[k]) * controller.F1
                   for k in (0, 1)]
        self.B2 = [mu2[l] * controller.S2 + (1.0 - mu2[l]) * controller.F2
                   for l in (0, 1)]
        self.PP = np.kron(config.server1.chain.transition_matrix(),
                          config.server2.chain.transition_matrix())
        self.s_mass = np.stack([mu2[l] * self.c + mu1[k] * self.cbar
                                for k, l in _ENV_ORDER])
        self.f_mass = 1.0 - self.s_mass

    def apply_left_sf(self, v: np.ndarray) -> np.ndarray:
        """v @ (S~ + F~) for v of shape (4, M*M)."""
        M = self.M
        u = np.empty_like(v)
        for r, (k, l) in enumerate(_ENV_ORDER):
            Wc = (v[r] * self.c).reshape(M, M)
            Wb = (v[r] * self.cbar).reshape(M, M)
            u[r] = (self.N1.T @ Wc @ self.B2[l]
                    + self.B1[k].T @ Wb @ self.N2).ravel()
        return self.PP.T @ u


def _stationary_from_operator(controller: FiniteController, config: SystemConfig,
                              tol: float, max_iters: int) -> tuple[np.ndarray, float, int]:
    op = _TildeOperator(controller, config)
    MM = controller.M * controller.M
    pi, resid, iters = _power_iteration(
        lambda v: op.apply_left_sf(v.reshape(4, MM)).ravel(), 4 * MM, tol, max_iters)
    return pi, resid, iters


@dataclass(frozen=True)
class StabilityResult:
    """Stability bound plus solver diagnostics."""

    mu_star: float
    residual: float
    iterations: int
    M: int
    epsilon: float


def stability_report(controller: FiniteController, config: SystemConfig,
                     tol: float = 1e-12, max_iters: int = 200_000) -> StabilityResult:
    """Compute mu* = pi_inf @ S~ @ 1 without materializing the blocks.

    The arrival rate never enters: the bound depends on the controller and
    the server parameters only.
    """
    op = _TildeOperator(controller, config)
    pi, resid, iters = _stationary_from_operator(controller, config, tol, max_iters)
    mu = float(pi.reshape(4, -1).ravel() @ op.s_mass.ravel())
    return StabilityResult(mu_star=mu, residual=resid, iterations=iters,
                           M=controller.M, epsilon=controller.epsilon)


def stability_bound(controller: FiniteController, config: SystemConfig,
                    tol: float = 1e-12, max_iters: int = 200_000) -> float:
    """The queue is positive recurrent for every lambda below this rate."""
    return stability_report(controller, config, tol, max_iters).mu_star


@dataclass(frozen=True)
class DriftReport:
    """Outcome of the mean-drift stability test at a given arrival rate."""

    stable: bool
    margin: float
    mu_star: float
    drift: float


def drift_check(controller: FiniteController, config: SystemConfig,
                tol: float = 1e-12) -> DriftReport:
    """Evaluate pi_inf (A_1 - A_-1) 1 and confirm it equals lambda - mu*.

    The identity is algebra (A_1 - A_-1 = lambda F~ - (1-lambda) S~ and
    F~ row masses complement S~ row masses), so a mismatch beyond 1e-10
    signals a broken assembly rather than a modeling question.
    """
    op = _TildeOperator(controller, config)
    pi, _, _ = _stationary_from_operator(controller, config, tol, 200_000)
    s = float(pi @ op.s_mass.ravel())
    f = float(pi @ op.f_mass.ravel())
    lam = config.lam
    drift = lam * f - (1.0 - lam) * s
    if abs(drift - (lam - s)) > 1e-10:
        raise ConvergenceError(
            f"drift form {drift} disagrees with lambda - mu* = {lam - s}",
            residual=abs(drift - (lam - s)))
    return DriftReport(stable=lam < s, margin=s - lam, mu_star=s, drift=drift)


def export_blocks(blocks: QbdBlocks, directory: str, digits: int = 12) -> list[str]:
    """Write each block as a sparse triplet CSV (row, col, value); returns paths."""
    import os

    written = []
    for name in ("S_tilde", "F_tilde", "N_tilde", "A_minus1", "A_0", "A_1",
                 "A0_boundary", "A1_boundary"):
        A = getattr(blocks, name)
        path = os.path.join(directory, f"{name}.csv")
        rows, cols = np.nonzero(A)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            fh.write("# qbd block triplets v1: row, col, value\n")
            writer.writerow(["row", "col", "value"])
            for r, c in zip(rows, cols):
                writer.writerow([r, c, f"{A[r, c]:.{digits}g}"])
        written.append(path)
    return written


def export_summary(result: StabilityResult, path: str) -> None:
    """JSON summary of a stability computation."""
    doc = {"M": result.M, "epsilon": result.epsilon,
           "mu_star": float(f"{result.mu_star:.6g}"),
           "residual": result.residual, "iterations": result.iterations}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
