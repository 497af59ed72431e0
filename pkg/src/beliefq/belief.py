"""Belief-state filtering for the two-server system.

The controller summarizes its observation history into a pair of beliefs
(omega1, omega2), each the posterior probability that a server's environment
is currently in the good state. Four operators cover every update the five
observation regimes need; each maps the belief held at one decision epoch to
the belief held at the next (Bayes step and one slot of environment drift
combined):

    tau_n(w) = w*rho + gamma*(1 - rho)        no observation
    tau_f(w) = (qbar*mu1bar*w + p*mu0bar*wbar) / (1 - r(w))   observed failure
    tau_s(w) = (qbar*mu1*w + p*mu0*wbar) / r(w)               observed success
    tau_c(w) = lambda*tau_s(w) + (1 - lambda)*tau_f(w)        unchanged queue

with r(w) = wbar*mu0 + w*mu1 the believed chance of a service success.

tau_f and tau_s are hyperbolic Moebius maps; their stable fixed points bound
the belief space each server's posterior contracts into. An exact enumeration
oracle over all joint environment paths is provided for validating the
recursions; it is exponential in the trajectory length and meant for tests.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (DegenerateObservationError, DegenerateTransformError,
                     ParameterError)
from .model import ServerParams, SystemConfig

__all__ = [
    "BeliefPair",
    "ObservationScheme",
    "Observation",
    "success_prob",
    "tau_n",
    "tau_f",
    "tau_s",
    "tau_c",
    "tau_c_bayes",
    "stable_fixed_point",
    "belief_space",
    "update_belief",
    "exact_filter_oracle",
]

_ORACLE_MAX_LEN = 12
_ORACLE_CHUNK = 1 << 18


@dataclass(frozen=True)
class BeliefPair:
    """Posterior probability that each server is in its good state."""

    omega1: float
    omega2: float

    def __post_init__(self) -> None:
        for name, w in (("omega1", self.omega1), ("omega2", self.omega2)):
            if not 0.0 <= w <= 1.0:
                raise ParameterError(f"{name} must lie in [0, 1], got {w!r}")

    def as_tuple(self) -> tuple[float, float]:
        return (self.omega1, self.omega2)


class ObservationScheme(enum.Enum):
    """What the controller gets to see each slot."""

    FULL = "full"      # both environment states, before the decision
    STATE = "state"    # the selected server's environment state
    OUTPUT = "output"  # the selected server's success/failure
    QUEUE = "queue"    # the queue-length change only
    NONE = "none"      # nothing

    @classmethod
    def parse(cls, name: str) -> "ObservationScheme":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ParameterError(
                f"unknown observation scheme {name!r}; expected one of "
                f"{[s.value for s in cls]}") from None


@dataclass(frozen=True)
class Observation:
    """One slot's observation: which server was used and what was seen.

    value is a state bit (STATE), a success bit (OUTPUT), a queue change in
    {-1, 0, +1} (QUEUE), a pair of state bits (FULL) or None (NONE / no
    service attempt).
    """

    server: int | None
    value: object = None


def success_prob(omega: float, server: ServerParams) -> float:
    """Believed chance of a success this slot: r(w) = wbar*mu0 + w*mu1."""
    return (1.0 - omega) * server.mu0 + omega * server.mu1


def _clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else (1.0 if x > 1.0 else x)


def tau_n(omega: float, server: ServerParams) -> float:
    """Belief drift with no observation: one application of the chain."""
    c = server.chain
    return _clamp01(omega * c.rho + c.p)


def tau_f(omega: float, server: ServerParams) -> float:
    """Posterior after observing a service failure."""
    c = server.chain
    rbar = 1.0 - success_prob(omega, server)
    if rbar <= 0.0:
        raise DegenerateObservationError(
            "failure has probability zero at this belief (r(omega) = 1)")
    num = ((1.0 - c.q) * (1.0 - server.mu1) * omega
           + c.p * (1.0 - server.mu0) * (1.0 - omega))
    return _clamp01(num / rbar)


def tau_s(omega: float, server: ServerParams) -> float:
    """Posterior after observing a service success."""
    c = server.chain
    r = success_prob(omega, server)
    if r <= 0.0:
        raise DegenerateObservationError(
            "success has probability zero at this belief (r(omega) = 0)")
    num = (1.0 - c.q) * server.mu1 * omega + c.p * server.mu0 * (1.0 - omega)
    return _clamp01(num / r)


def tau_c(omega: float, server: ServerParams, lam: float) -> float:
    """Belief after seeing an unchanged queue: arrival-weighted mix of tau_s and tau_f.

    The mix happens after each branch's own normalization, which is how the
    controller is defined here; see tau_c_bayes for the fully conditioned
    alternative. The two coincide at lam in {0, 1}.
    """
    if lam <= 0.0:
        return tau_f(omega, server)
    if lam >= 1.0:
        return tau_s(omega, server)
    return lam * tau_s(omega, server) + (1.0 - lam) * tau_f(omega, server)


def tau_c_bayes(omega: float, server: ServerParams, lam: float) -> float:
    """Exact posterior given only that the queue did not move.

    An unchanged queue means the arrival and success indicators agreed, an
    event of probability mu_i*lam + (1-mu_i)*(1-lam) in state i, so this is a
    Moebius update with those effective rates. It weights the tau_s branch by
    the posterior arrival probability where tau_c uses the prior lam.
    """
    if lam <= 0.0:
        return tau_f(omega, server)
    if lam >= 1.0:
        return tau_s(omega, server)
    c = server.chain
    e1 = lam * server.mu1 + (1.0 - lam) * (1.0 - server.mu1)
    e0 = lam * server.mu0 + (1.0 - lam) * (1.0 - server.mu0)
    den = omega * e1 + (1.0 - omega) * e0
    num = (1.0 - c.q) * e1 * omega + c.p * e0 * (1.0 - omega)
    return _clamp01(num / den)


def _moebius_coeffs(kind: str, server: ServerParams) -> tuple[float, float, float, float]:
    c = server.chain
    if kind == "f":
        m0, m1 = 1.0 - server.mu0, 1.0 - server.mu1
    else:
        m0, m1 = server.mu0, server.mu1
    return ((1.0 - c.q) * m1 - c.p * m0, c.p * m0, m1 - m0, m0)


def stable_fixed_point(kind: str, server: ServerParams) -> float:
    """Stable fixed point of tau_n ("n"), tau_f ("f") or tau_s ("s").

    tau_n's fixed point is the stationary probability gamma. tau_f and tau_s
    are Moebius maps (a*w + b)/(c*w + d) with one stable fixed point
    (a - d + sqrt((a - d)^2 + 4*b*c)) / (2*c) inside (0, 1), provided the map
    is genuinely hyperbolic: rho != 0, mu0 != mu1 and p, q not in {0, 1}.
    """
    if kind == "n":
        return server.chain.gamma
    if kind not in ("f", "s"):
        raise ParameterError(f"kind must be one of 'n', 'f', 's', got {kind!r}")
    ch = server.chain
    if ch.rho == 0.0 or server.mu0 == server.mu1 or ch.p in (0.0, 1.0) or ch.q in (0.0, 1.0):
        raise DegenerateTransformError(
            "stable fixed point requires rho != 0, mu0 != mu1 and p, q "
            f"outside {{0, 1}}; got p={ch.p}, q={ch.q}, mu0={server.mu0}, "
            f"mu1={server.mu1}")
    a, b, c, d = _moebius_coeffs(kind, server)
    w = (a - d + math.sqrt((a - d) ** 2 + 4.0 * b * c)) / (2.0 * c)
    op = tau_f if kind == "f" else tau_s
    if not 0.0 < w < 1.0 or abs(op(w, server) - w) > 1e-10:
        raise DegenerateTransformError(
            f"fixed point of tau_{kind} fell outside (0, 1) or failed the "
            f"residual check: w={w}")
    return w


def belief_space(server: ServerParams) -> tuple[float, float]:
    """Interval the belief contracts into: between the tau_f and tau_s fixed points."""
    wf = stable_fixed_point("f", server)
    ws = stable_fixed_point("s", server)
    return (min(wf, ws), max(wf, ws))


def _expect_value(scheme: ObservationScheme, value: object) -> None:
    if scheme is ObservationScheme.STATE and value not in (0, 1):
        raise ValueError(f"state observation must be a bit, got {value!r}")
    if scheme is ObservationScheme.OUTPUT and value not in (0, 1):
        raise ValueError(f"output observation must be a bit, got {value!r}")
    if scheme is ObservationScheme.QUEUE and value not in (-1, 0, 1):
        raise ValueError(
            f"queue observation must be a change in {{-1, 0, 1}}, got {value!r}")


def update_belief(scheme: ObservationScheme, action: int | None,
                  obs: Observation, beliefs: BeliefPair,
                  config: SystemConfig) -> BeliefPair:
    """Advance the belief pair one slot, given the action taken and what was seen.

    The returned pair is the belief held at the next decision epoch. With no
    service attempt (action None, empty queue) both components drift by tau_n.
    For the STATE scheme the observed bit is propagated one step, so the next
    decision sees p (bit 0) or 1 - q (bit 1); note tau_n(bit) is exactly that.
    """
    s1, s2 = config.server1, config.server2

    if scheme is ObservationScheme.NONE:
        if obs.server is not None or obs.value is not None:
            raise ValueError("the no-observation scheme carries no payload")
        return BeliefPair(tau_n(beliefs.omega1, s1), tau_n(beliefs.omega2, s2))

    if obs.server != action:
        raise ValueError(
            f"observation was produced under action {obs.server!r}, "
            f"not {action!r}")

    if scheme is ObservationScheme.FULL:
        if not (isinstance(obs.value, tuple) and len(obs.value) == 2):
            raise ValueError("full observation carries both state bits")
        x1, x2 = obs.value
        return BeliefPair(float(x1), float(x2))

    if action is None:
        if scheme is not ObservationScheme.QUEUE and obs.value is not None:
            raise ValueError("no service attempt: observation must be empty")
        return BeliefPair(tau_n(beliefs.omega1, s1), tau_n(beliefs.omega2, s2))

    if action not in (1, 2):
        raise ValueError(f"action must be 1, 2 or None, got {action!r}")
    _expect_value(scheme, obs.value)

    chosen, other = (s1, s2) if action == 1 else (s2, s1)
    w_chosen, w_other = ((beliefs.omega1, beliefs.omega2) if action == 1
                         else (beliefs.omega2, beliefs.omega1))

    if scheme is ObservationScheme.STATE:
        new_chosen = tau_n(float(obs.value), chosen)
    elif scheme is ObservationScheme.OUTPUT:
        new_chosen = tau_s(w_chosen, chosen) if obs.value else tau_f(w_chosen, chosen)
    elif scheme is ObservationScheme.QUEUE:
        if obs.value == 1:
            new_chosen = tau_f(w_chosen, chosen)
        elif obs.value == -1:
            new_chosen = tau_s(w_chosen, chosen)
        else:
            new_chosen = tau_c(w_chosen, chosen, config.lam)
    else:  # pragma: no cover - exhaustive over schemes
        raise ValueError(f"unsupported scheme {scheme!r}")

    new_other = tau_n(w_other, other)
    if action == 1:
        return BeliefPair(new_chosen, new_other)
    return BeliefPair(new_other, new_chosen)


def _obs_likelihood(scheme: ObservationScheme, action: int | None, value: object,
                    x1: np.ndarray, x2: np.ndarray,
                    config: SystemConfig) -> np.ndarray | float:
    """P(observation | current environment states), vectorized over paths."""
    lam = config.lam
    if scheme is ObservationScheme.NONE:
        return 1.0
    if scheme is ObservationScheme.FULL:
        b1, b2 = value
        return ((x1 == b1) & (x2 == b2)).astype(float)
    if action is None:
        if scheme is ObservationScheme.QUEUE:
            if value not in (0, 1):
                raise ValueError(
                    "queue change with no service attempt must be 0 or +1")
            return lam if value == 1 else 1.0 - lam
        return 1.0
    server = config.server1 if action == 1 else config.server2
    x = x1 if action == 1 else x2
    mu = np.where(x == 1, server.mu1, server.mu0)
    if scheme is ObservationScheme.STATE:
        return (x == value).astype(float)
    if scheme is ObservationScheme.OUTPUT:
        return mu if value == 1 else 1.0 - mu
    # QUEUE: the arrival is independent of the environments
    if value == 1:
        return lam * (1.0 - mu)
    if value == -1:
        return (1.0 - lam) * mu
    return lam * mu + (1.0 - lam) * (1.0 - mu)


def exact_filter_oracle(scheme: ObservationScheme,
                        actions: Sequence[int | None],
                        observations: Sequence[Observation],
                        config: SystemConfig,
                        init_beliefs: BeliefPair | None = None) -> BeliefPair:
    """Posterior over the final environment states by exhaustive path enumeration.

    Sums joint probabilities over all 4^(T+1) environment trajectories
    consistent with the observed history. Cost is exponential in the
    trajectory length (guarded at T <= 12); intended as a test oracle for the
    recursive updates, never as a runtime filter.
    """
    T = len(actions)
    if len(observations) != T:
        raise ValueError("actions and observations must have equal length")
    if T > _ORACLE_MAX_LEN:
        raise ValueError(
            f"trajectory of length {T} would enumerate 4^{T + 1} paths; "
            f"the oracle is capped at T <= {_ORACLE_MAX_LEN}")
    for act, obs in zip(actions, observations):
        if obs.server != act:
            raise ValueError("each observation must match its slot's action")

    if init_beliefs is None:
        init_beliefs = BeliefPair(config.server1.chain.gamma,
                                  config.server2.chain.gamma)
    w1, w2 = init_beliefs.omega1, init_beliefs.omega2
    P1 = config.server1.chain.transition_matrix()
    P2 = config.server2.chain.transition_matrix()

    n_steps = T + 1
    total = 4 ** n_steps
    den = 0.0
    num1 = 0.0
    num2 = 0.0
    for start in range(0, total, _ORACLE_CHUNK):
        idx = np.arange(start, min(start + _ORACLE_CHUNK, total), dtype=np.uint64)
        x1 = np.empty((idx.size, n_steps), dtype=np.int8)
        x2 = np.empty((idx.size, n_steps), dtype=np.int8)
        for t in range(n_steps):
            x1[:, t] = (idx >> np.uint64(2 * t)) & np.uint64(1)
            x2[:, t] = (idx >> np.uint64(2 * t + 1)) & np.uint64(1)
        prob = (np.where(x1[:, 0] == 1, w1, 1.0 - w1)
                * np.where(x2[:, 0] == 1, w2, 1.0 - w2))
        for t in range(T):
            prob *= _obs_likelihood(scheme, actions[t], observations[t].value,
                                    x1[:, t], x2[:, t], config)
            prob *= P1[x1[:, t], x1[:, t + 1]] * P2[x2[:, t], x2[:, t + 1]]
        den += prob.sum()
        num1 += prob[x1[:, -1] == 1].sum()
        num2 += prob[x2[:, -1] == 1].sum()
    if den <= 0.0:
        raise ValueError("trajectory has probability zero under this config")
    return BeliefPair(_clamp01(num1 / den), _clamp01(num2 / den))
