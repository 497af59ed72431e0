"""Monte Carlo engine for the two-server queue.

Each slot replays the model's event order: arrival, autonomous environment
moves, a decision from previously observed information, service and queue
update, then the observation the active scheme grants. Under full observation
the observation instead lands just before the decision, which is the only
ordering difference between the regimes.

Two modes: queueing tracks the queue and forbids service when it is empty;
saturated assumes an infinite backlog and measures raw throughput, which is
the quantity the stability bounds are about. Runs are bit-reproducible from
the seed, and the same seed exposes identical primitive sequences to every
scheme and policy, so throughput comparisons can use common random numbers.
"""

from __future__ import annotations

import csv
import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .belief import BeliefPair, ObservationScheme
from .errors import ParameterError
from .model import EnvState, SystemConfig
from .policy import FiniteController, MyopicPolicy, SwitchingCurve, curve_control_matrix

__all__ = [
    "SimConfig",
    "SimResult",
    "run",
    "estimate_mu_star",
    "stability_probe",
    "ProbePoint",
    "write_trace_csv",
]

_SCHEME_CODE = {
    ObservationScheme.FULL: 0,
    ObservationScheme.STATE: 1,
    ObservationScheme.OUTPUT: 2,
    ObservationScheme.QUEUE: 3,
    ObservationScheme.NONE: 4,
}

_EMPTY_F = np.empty(0, dtype=np.float64)
_EMPTY_I = np.empty(0, dtype=np.int64)
_DUMMY_M = np.zeros((1, 1), dtype=np.float64)


@dataclass(frozen=True)
class SimConfig:
    """One reproducible run: system, information regime, length and mode."""

    system: SystemConfig
    scheme: ObservationScheme
    horizon: int
    seed: int
    mode: str = "saturated"
    warmup: int = 10_000
    init_beliefs: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("queueing", "saturated"):
            raise ParameterError(f"mode must be queueing or saturated, got {self.mode!r}")
        if not 0 <= self.warmup < self.horizon:
            raise ParameterError(
                f"need horizon > warmup >= 0, got horizon={self.horizon}, "
                f"warmup={self.warmup}")


@dataclass(frozen=True)
class SimResult:
    """Throughput and terminal state of one run; trace columns if requested."""

    throughput: float
    mean_queue: float | None
    final_beliefs: BeliefPair
    final_env: EnvState
    final_queue: int
    trace: dict | None = None


def _initial_beliefs(sim: SimConfig) -> tuple[float, float]:
    if sim.init_beliefs is not None:
        w1, w2 = sim.init_beliefs
        if not (0.0 <= w1 <= 1.0 and 0.0 <= w2 <= 1.0):
            raise ParameterError("initial beliefs must lie in [0, 1]")
        return float(w1), float(w2)
    try:
        return (sim.system.server1.chain.gamma, sim.system.server2.chain.gamma)
    except ParameterError:
        raise ParameterError(
            "a frozen chain has no stationary belief; pass init_beliefs "
            "explicitly") from None


def _policy_args(sim: SimConfig, policy) -> tuple:
    """(policy_kind, slope, intercept, C, Mpol, cdf matrices x6)."""
    scheme = sim.scheme
    belief_schemes = (ObservationScheme.STATE, ObservationScheme.OUTPUT,
                      ObservationScheme.QUEUE)
    dummies = (_DUMMY_M,) * 6
    if isinstance(policy, MyopicPolicy):
        return (0, policy.slope, policy.intercept, _DUMMY_M, 0) + dummies
    if isinstance(policy, SwitchingCurve):
        if scheme not in belief_schemes:
            raise ParameterError(
                f"a switching curve needs belief updates; scheme "
                f"{scheme.value} does not provide them")
        return (1, 0.0, 0.0, curve_control_matrix(policy), policy.M) + dummies
    if isinstance(policy, FiniteController):
        if scheme is not ObservationScheme.OUTPUT:
            raise ParameterError(
                "finite controllers evolve their cells by success/failure "
                "rows, which is output observation; got scheme "
                f"{scheme.value}")
        cdfs = tuple(np.ascontiguousarray(np.cumsum(A, axis=1))
                     for A in (policy.N1, policy.S1, policy.F1,
                               policy.N2, policy.S2, policy.F2))
        return (2, 0.0, 0.0, policy.C, policy.M) + cdfs
    raise ParameterError(f"unsupported policy object {type(policy).__name__}")


def _run_sampled(sim: SimConfig, policy, trace: bool,
                 q_stride: int) -> tuple[SimResult, np.ndarray]:
    sys_ = sim.system
    w1_0, w2_0 = _initial_beliefs(sim)
    kind, slope, intercept, C, Mpol, *cdfs = _policy_args(sim, policy)
    n_samples = (sim.horizon + q_stride - 1) // q_stride if q_stride else 0
    q_samples = np.zeros(n_samples, dtype=np.int64)
    if trace:
        t_int = [np.zeros(sim.horizon, dtype=np.int64) for _ in range(6)]
        t_flt = [np.zeros(sim.horizon, dtype=np.float64) for _ in range(2)]
    else:
        t_int = [_EMPTY_I] * 6
        t_flt = [_EMPTY_F] * 2
    c1, c2 = sys_.server1.chain, sys_.server2.chain
    successes, counted, qsum, w1, w2, x1, x2, q_final = _kernels.simulate_core(
        _SCHEME_CODE[sim.scheme], sim.mode == "queueing",
        sim.horizon, sim.warmup, np.uint64(sim.seed & 0xFFFFFFFFFFFFFFFF),
        sys_.lam,
        c1.p, c1.q, c1.rho, sys_.server1.mu0, sys_.server1.mu1,
        c2.p, c2.q, c2.rho, sys_.server2.mu0, sys_.server2.mu1,
        w1_0, w2_0,
        kind, slope, intercept, np.ascontiguousarray(C, dtype=np.float64), Mpol,
        *cdfs,
        t_int[0], t_int[1], t_int[2], t_int[3], t_int[4], t_int[5],
        t_flt[0], t_flt[1], q_samples, q_stride)
    trace_doc = None
    if trace:
        trace_doc = {"t": np.arange(sim.horizon), "Q": t_int[0],
                     "X1": t_int[1], "X2": t_int[2], "U": t_int[3],
                     "E": t_int[4], "I": t_int[5],
                     "omega1": t_flt[0], "omega2": t_flt[1]}
    result = SimResult(
        throughput=successes / counted,
        mean_queue=(qsum / counted) if sim.mode == "queueing" else None,
        final_beliefs=BeliefPair(min(max(w1, 0.0), 1.0), min(max(w2, 0.0), 1.0)),
        final_env=EnvState(int(x1), int(x2)),
        final_queue=int(q_final),
        trace=trace_doc)
    return result, q_samples


def run(sim: SimConfig, policy, trace: bool = False) -> SimResult:
    """Execute one run; identical SimConfig and policy give identical results."""
    return _run_sampled(sim, policy, trace, 0)[0]


def estimate_mu_star(system: SystemConfig, scheme: ObservationScheme, policy,
                     horizon: int, seeds: Sequence[int],
                     warmup: int = 10_000,
                     common_random_numbers: bool = True) -> tuple[float, float]:
    """Saturated throughput averaged over seeds; returns (mean, standard error).

    With common random numbers (the default) the given seeds address the same
    primitive draws in every scheme/policy, so paired comparisons across
    estimates cancel most of the noise. Disabling salts the seeds per scheme
    and policy type.
    """
    if len(seeds) == 0:
        raise ParameterError("estimate_mu_star needs at least one seed")
    values = []
    for seed in seeds:
        if not common_random_numbers:
            salt = f"{scheme.value}:{type(policy).__name__}".encode()
            seed = int(seed) ^ (zlib.crc32(salt) << 16)
        sim = SimConfig(system=system, scheme=scheme, horizon=horizon,
                        seed=int(seed), mode="saturated", warmup=warmup)
        values.append(run(sim, policy).throughput)
    arr = np.asarray(values)
    stderr = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
    return float(arr.mean()), stderr


@dataclass(frozen=True)
class ProbePoint:
    """Queue-growth regression at one arrival rate."""

    lam: float
    slope: float
    mean_queue: float


def stability_probe(system: SystemConfig, scheme: ObservationScheme, policy,
                    lambda_grid: Sequence[float], horizon: int,
                    seed: int = 20_240_501) -> list[ProbePoint]:
    """Fit the queue trajectory's drift at each arrival rate.

    Below the stability bound the regression slope sits near zero; above it
    the queue grows linearly at close to lambda - mu*.
    """
    stride = max(1, horizon // 4096)
    points = []
    for lam in lambda_grid:
        cfg = SystemConfig(float(lam), system.server1, system.server2,
                           check_ordering=False)
        sim = SimConfig(system=cfg, scheme=scheme, horizon=horizon, seed=seed,
                        mode="queueing", warmup=0)
        res, samples = _run_sampled(sim, policy, False, stride)
        t = np.arange(samples.size, dtype=float) * stride
        slope = float(np.polyfit(t, samples.astype(float), 1)[0])
        points.append(ProbePoint(lam=float(lam), slope=slope,
                                 mean_queue=float(res.mean_queue)))
    return points


def write_trace_csv(result: SimResult, path: str) -> None:
    """Per-step trace with columns t, Q, X1, X2, U, E, I, omega1, omega2."""
    if result.trace is None:
        raise ParameterError("run(..., trace=True) to collect a trace first")
    cols = ["t", "Q", "X1", "X2", "U", "E", "I", "omega1", "omega2"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# simulation trace v1: " + ", ".join(cols) + "\n")
        writer = csv.writer(fh)
        writer.writerow(cols)
        tr = result.trace
        for k in range(tr["t"].size):
            writer.writerow([tr["t"][k], tr["Q"][k], tr["X1"][k], tr["X2"][k],
                             tr["U"][k], tr["E"][k], tr["I"][k],
                             f"{tr['omega1'][k]:.6g}", f"{tr['omega2'][k]:.6g}"])
