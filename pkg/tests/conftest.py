import numpy as np
import pytest

from beliefq.belief import Observation, ObservationScheme
from beliefq.model import (ServerParams, SystemConfig, from_gamma_rho,
                           symmetric_system)


@pytest.fixture(scope="session")
def benchmark():
    """gamma=0.5, mu=(0.2, 0.8) on both servers, rho=0.5, lambda=0.5."""
    return symmetric_system(0.5)


@pytest.fixture(scope="session")
def benchmark_server(benchmark):
    return benchmark.server1


def strict_config(rho1: float, rho2: float, lam: float = 0.5) -> SystemConfig:
    """Benchmark-like instance with strictly ordered success rates."""
    return SystemConfig(
        lam,
        ServerParams(from_gamma_rho(0.5, rho1), 0.22, 0.78),
        ServerParams(from_gamma_rho(0.5, rho2), 0.20, 0.80))


def random_valid_config(rng: np.random.Generator,
                        lam: float | None = None) -> SystemConfig:
    """Config drawn uniformly over the admissible parameter region."""
    mu02, mu01 = np.sort(rng.uniform(0.02, 0.45, size=2))
    mu11, mu12 = np.sort(rng.uniform(0.55, 0.98, size=2))
    g1, g2 = rng.uniform(0.15, 0.85, size=2)
    r1, r2 = rng.uniform(0.05, 0.9, size=2)
    if lam is None:
        lam = float(rng.uniform(0.05, 0.95))
    return SystemConfig(
        lam,
        ServerParams(from_gamma_rho(g1, r1), mu01, mu11),
        ServerParams(from_gamma_rho(g2, r2), mu02, mu12))


def step_chain(rng: np.random.Generator, x: int, chain) -> int:
    if x == 0:
        return 1 if rng.random() < chain.p else 0
    return 0 if rng.random() < chain.q else 1


def simulate_observation_trajectory(scheme: ObservationScheme,
                                    cfg: SystemConfig,
                                    rng: np.random.Generator, T: int):
    """Roll the true dynamics forward, returning consistent actions/observations."""
    s1, s2 = cfg.server1, cfg.server2
    x1 = int(rng.random() < s1.chain.gamma)
    x2 = int(rng.random() < s2.chain.gamma)
    actions, observations = [], []
    for _ in range(T):
        x1 = step_chain(rng, x1, s1.chain)
        x2 = step_chain(rng, x2, s2.chain)
        if rng.random() < 0.1:
            action, value = None, None
            if scheme is ObservationScheme.QUEUE:
                value = int(rng.random() < cfg.lam)
        else:
            action = int(rng.integers(1, 3))
            xs, server = (x1, s1) if action == 1 else (x2, s2)
            success = int(rng.random() < (server.mu1 if xs else server.mu0))
            arrival = int(rng.random() < cfg.lam)
            value = {ObservationScheme.STATE: xs,
                     ObservationScheme.OUTPUT: success,
                     ObservationScheme.QUEUE: arrival - success}[scheme]
        actions.append(action)
        observations.append(Observation(action, value))
    return actions, observations
