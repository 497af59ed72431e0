"""System primitives: two-state server environments, arrival rate, closed-form bounds.

A single discrete-time queue is served by one of two servers per slot. Each
server lives in a two-state Markov environment (good/bad) and succeeds with
probability mu1 or mu0 depending on that state. Arrivals are Bernoulli(lambda).
This module owns the parameter types, the (p, q) <-> (gamma, rho)
parametrization, the closed-form throughput bounds for the no-information and
full-information regimes, and the one-step environment transition.
"""

from __future__ import annotations

import json
import math
from dataclasses import InitVar, dataclass
from typing import Sequence

import numpy as np

from .errors import ParameterError

__all__ = [
    "ChannelChain",
    "ServerParams",
    "SystemConfig",
    "EnvState",
    "from_gamma_rho",
    "mu_star_no",
    "mu_star_full",
    "stationary_moments",
    "step_environment",
    "symmetric_system",
    "config_from_dict",
    "config_to_dict",
    "load_config",
]


def _check_prob(name: str, x: float) -> float:
    if not 0.0 <= x <= 1.0:
        raise ParameterError(f"{name} must lie in [0, 1], got {x!r}")
    return float(x)


@dataclass(frozen=True)
class ChannelChain:
    """Two-state environment chain with up-rate p (0 -> 1) and down-rate q (1 -> 0).

    Equivalent parametrization: gamma = p / (p + q) is the stationary chance of
    state 1 and rho = 1 - p - q is the second eigenvalue (the chain's memory).
    """

    p: float
    q: float

    def __post_init__(self) -> None:
        _check_prob("p", self.p)
        _check_prob("q", self.q)

    @property
    def gamma(self) -> float:
        if self.p + self.q == 0.0:
            raise ParameterError(
                "gamma is undefined for a frozen chain (p + q = 0)")
        return self.p / (self.p + self.q)

    @property
    def rho(self) -> float:
        return 1.0 - self.p - self.q

    def transition_matrix(self) -> np.ndarray:
        """Row-stochastic 2x2 matrix [[1-p, p], [q, 1-q]]."""
        return np.array([[1.0 - self.p, self.p], [self.q, 1.0 - self.q]])


def from_gamma_rho(gamma: float, rho: float) -> ChannelChain:
    """Build a chain from its stationary probability and second eigenvalue.

    Inverse of (p, q) -> (gamma, rho): p = gamma * (1 - rho),
    q = (1 - gamma) * (1 - rho). rho is admissible on
    [1 - min(1/gamma, 1/(1-gamma)), 1].
    """
    _check_prob("gamma", gamma)
    inv_g = 1.0 / gamma if gamma > 0.0 else math.inf
    inv_gbar = 1.0 / (1.0 - gamma) if gamma < 1.0 else math.inf
    rho_min = 1.0 - min(inv_g, inv_gbar)
    if rho > 1.0:
        raise ParameterError(f"rho must be <= 1, got {rho!r}")
    if rho < rho_min:
        raise ParameterError(
            f"rho must be >= 1 - min(1/gamma, 1/(1-gamma)) = {rho_min}, got {rho!r}")
    return ChannelChain(p=gamma * (1.0 - rho), q=(1.0 - gamma) * (1.0 - rho))


@dataclass(frozen=True)
class ServerParams:
    """One server: its environment chain and per-state success rates."""

    chain: ChannelChain
    mu0: float
    mu1: float

    def __post_init__(self) -> None:
        _check_prob("mu0", self.mu0)
        _check_prob("mu1", self.mu1)
        if self.mu0 > self.mu1:
            raise ParameterError(
                f"state 1 must be the better state: mu0 <= mu1 required, "
                f"got mu0={self.mu0}, mu1={self.mu1}")


@dataclass(frozen=True)
class SystemConfig:
    """Arrival rate plus the two server descriptions.

    The cross-server ordering mu0(2) <= mu0(1) < mu1(1) <= mu1(2) is enforced
    by default (Server 2 has the wider spread); pass check_ordering=False to
    explore configurations outside it.
    """

    lam: float
    server1: ServerParams
    server2: ServerParams
    check_ordering: InitVar[bool] = True

    def __post_init__(self, check_ordering: bool) -> None:
        _check_prob("lambda", self.lam)
        if check_ordering:
            s1, s2 = self.server1, self.server2
            if not s2.mu0 <= s1.mu0:
                raise ParameterError(
                    f"cross-server ordering violated: mu0(2) <= mu0(1) "
                    f"required, got {s2.mu0} > {s1.mu0}")
            if not s1.mu0 < s1.mu1:
                raise ParameterError(
                    f"cross-server ordering violated: mu0(1) < mu1(1) "
                    f"required, got {s1.mu0} >= {s1.mu1}")
            if not s1.mu1 <= s2.mu1:
                raise ParameterError(
                    f"cross-server ordering violated: mu1(1) <= mu1(2) "
                    f"required, got {s1.mu1} > {s2.mu1}")

    @property
    def servers(self) -> tuple[ServerParams, ServerParams]:
        return (self.server1, self.server2)


@dataclass(frozen=True)
class EnvState:
    """Current environment states (bits) of the two servers."""

    x1: int
    x2: int

    def __post_init__(self) -> None:
        if self.x1 not in (0, 1) or self.x2 not in (0, 1):
            raise ParameterError(
                f"environment states must be bits, got ({self.x1}, {self.x2})")


def _stationary_mean(server: ServerParams) -> float:
    g = server.chain.gamma
    return (1.0 - g) * server.mu0 + g * server.mu1


def mu_star_no(config: SystemConfig) -> float:
    """Throughput of the best fixed server: max_j of the stationary mean rate.

    This is the stability bound when the controller observes nothing.
    """
    return max(_stationary_mean(config.server1), _stationary_mean(config.server2))


def mu_star_full(config: SystemConfig) -> float:
    """Stability bound with full environment knowledge.

    The controller picks Server 1 only when it is at least as good, which
    under the cross-server ordering happens exactly when Server 2 is in its
    bad state: gbar1*gbar2*mu0(1) + g2*mu1(2) + g1*gbar2*mu1(1).
    """
    g1 = config.server1.chain.gamma
    g2 = config.server2.chain.gamma
    return ((1.0 - g1) * (1.0 - g2) * config.server1.mu0
            + g2 * config.server2.mu1
            + g1 * (1.0 - g2) * config.server1.mu1)


def stationary_moments(server: ServerParams) -> tuple[float, float]:
    """Mean and variance of the per-slot success indicator at stationarity."""
    g = server.chain.gamma
    gbar = 1.0 - g
    m0, m1 = server.mu0, server.mu1
    mean = gbar * m0 + g * m1
    var = gbar * m0 * (1.0 - m0) + g * m1 * (1.0 - m1) + g * gbar * (m1 - m0) ** 2
    return mean, var


def _step_bit(x: int, u: float, p: float, q: float) -> int:
    if x == 0:
        return 1 if u < p else 0
    return 0 if u < q else 1


def step_environment(state: EnvState, config: SystemConfig,
                     draws: Sequence[float]) -> EnvState:
    """Advance both environments one slot using two externally supplied uniforms.

    Randomness is passed in so that callers own reproducibility; arrivals,
    queue length and the control choice never influence this transition.
    """
    u1, u2 = draws
    c1, c2 = config.server1.chain, config.server2.chain
    return EnvState(
        x1=_step_bit(state.x1, u1, c1.p, c1.q),
        x2=_step_bit(state.x2, u2, c2.p, c2.q),
    )


def symmetric_system(rho1: float, rho2: float | None = None, lam: float = 0.5,
                     gamma: float = 0.5, mu0: float = 0.2,
                     mu1: float = 0.8) -> SystemConfig:
    """Config with identical success rates on both servers (the common test case)."""
    if rho2 is None:
        rho2 = rho1
    return SystemConfig(
        lam=lam,
        server1=ServerParams(from_gamma_rho(gamma, rho1), mu0, mu1),
        server2=ServerParams(from_gamma_rho(gamma, rho2), mu0, mu1),
    )


def _server_from_dict(name: str, d: dict) -> ServerParams:
    keys = set(d)
    has_pq = {"p", "q"} <= keys
    has_gr = {"gamma", "rho"} <= keys
    if has_pq == has_gr:
        raise ParameterError(
            f"{name} must carry exactly one parametrization: "
            "either {p, q} or {gamma, rho}")
    if not {"mu0", "mu1"} <= keys:
        raise ParameterError(f"{name} must carry mu0 and mu1")
    chain = (ChannelChain(float(d["p"]), float(d["q"])) if has_pq
             else from_gamma_rho(float(d["gamma"]), float(d["rho"])))
    return ServerParams(chain, float(d["mu0"]), float(d["mu1"]))


def config_from_dict(doc: dict, check_ordering: bool = True) -> SystemConfig:
    """Parse {lambda, server1: {...}, server2: {...}} into a SystemConfig."""
    try:
        lam = float(doc["lambda"])
        s1 = _server_from_dict("server1", doc["server1"])
        s2 = _server_from_dict("server2", doc["server2"])
    except KeyError as exc:
        raise ParameterError(f"config document is missing field {exc}") from exc
    return SystemConfig(lam, s1, s2, check_ordering=check_ordering)


def config_to_dict(config: SystemConfig) -> dict:
    """Serialize in the canonical (p, q) form."""
    def server(s: ServerParams) -> dict:
        return {"p": s.chain.p, "q": s.chain.q, "mu0": s.mu0, "mu1": s.mu1}
    return {"lambda": config.lam,
            "server1": server(config.server1),
            "server2": server(config.server2)}


def load_config(path: str, check_ordering: bool = True) -> SystemConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_dict(json.load(fh), check_ordering=check_ordering)
