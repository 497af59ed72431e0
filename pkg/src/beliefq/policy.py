"""Policy representations: myopic line, switching curves, finite-state controllers.

Three interchangeable ways of mapping beliefs to a server choice. The myopic
policy compares immediate expected throughput and is an affine threshold in
the belief square. A switching curve tabulates, for each omega1 grid cell,
the first omega2 cell at which Server 2 is preferred. A finite-state
controller discretizes the belief operators themselves into row-stochastic
M x M matrices (N for no service, S for success, F for failure, one set per
server) plus a randomized action matrix C; this is the object the QBD
stability analysis consumes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import ceil, floor

import numpy as np

from .belief import BeliefPair, tau_f, tau_n, tau_s
from .errors import ParameterError
from .model import ServerParams, SystemConfig

__all__ = [
    "MyopicPolicy",
    "SwitchingCurve",
    "FiniteController",
    "myopic_choice",
    "myopic_control_matrix",
    "curve_control_matrix",
    "build_controller_matrices",
    "myopic_controller",
    "belief_cell",
]

DEFAULT_EPSILON = 0.001


@dataclass(frozen=True)
class MyopicPolicy:
    """Affine threshold of the immediate-throughput comparison.

    Server 2 is chosen iff omega2 >= slope * omega1 + intercept, with
    slope = (mu1(1) - mu0(1)) / (mu1(2) - mu0(2)) and
    intercept = (mu0(1) - mu0(2)) / (mu1(2) - mu0(2)). Ties go to Server 2.
    """

    slope: float
    intercept: float

    @classmethod
    def from_config(cls, config: SystemConfig) -> "MyopicPolicy":
        spread2 = config.server2.mu1 - config.server2.mu0
        if spread2 <= 0.0:
            raise ParameterError(
                "myopic threshold requires mu1(2) > mu0(2)")
        return cls(
            slope=(config.server1.mu1 - config.server1.mu0) / spread2,
            intercept=(config.server1.mu0 - config.server2.mu0) / spread2,
        )

    def choose(self, beliefs: BeliefPair) -> int:
        if beliefs.omega2 >= self.slope * beliefs.omega1 + self.intercept:
            return 2
        return 1


def myopic_choice(beliefs: BeliefPair, config: SystemConfig) -> int:
    """Server with the larger believed success chance (ties to Server 2)."""
    return MyopicPolicy.from_config(config).choose(beliefs)


def belief_cell(omega: float, M: int) -> int:
    """Controller cell of a belief: ceil(M * omega), with cell 1 at omega = 0."""
    return min(max(ceil(M * omega), 1), M)


@dataclass(frozen=True)
class SwitchingCurve:
    """Tabulated decision boundary on an M x M belief grid.

    thresholds[i] is the first omega2 cell (0-based) at which Server 2 is
    chosen when omega1 lies in cell i; M means Server 2 is never chosen in
    that column. tie_mask flags threshold cells that sit exactly on the
    boundary; those receive tie_value instead of a hard decision when the
    curve is turned into a control matrix.
    """

    M: int
    thresholds: np.ndarray
    tie_value: float = 0.0
    tie_mask: np.ndarray | None = None

    def __post_init__(self) -> None:
        thr = np.asarray(self.thresholds, dtype=int)
        if thr.shape != (self.M,):
            raise ParameterError(
                f"thresholds must have length M={self.M}, got {thr.shape}")
        if thr.min() < 0 or thr.max() > self.M:
            raise ParameterError("thresholds must lie in 0..M")
        object.__setattr__(self, "thresholds", thr)
        if self.tie_mask is not None:
            mask = np.asarray(self.tie_mask, dtype=bool)
            if mask.shape != (self.M,):
                raise ParameterError("tie_mask must have length M")
            object.__setattr__(self, "tie_mask", mask)

    @property
    def monotonicity_violations(self) -> np.ndarray:
        """Columns where the threshold decreases (reported, never repaired)."""
        return np.nonzero(np.diff(self.thresholds) < 0)[0]

    def resample(self, M_new: int) -> "SwitchingCurve":
        """Re-tabulate at another resolution through the boundary beliefs."""
        if M_new == self.M:
            return self
        src = np.minimum(((np.arange(M_new) + 0.5) * self.M / M_new).astype(int),
                         self.M - 1)
        boundary = self.thresholds / self.M
        new_thr = np.clip(np.round(boundary[src] * M_new), 0, M_new).astype(int)
        return SwitchingCurve(M=M_new, thresholds=new_thr, tie_value=self.tie_value)

    @classmethod
    def from_myopic(cls, config: SystemConfig, M: int) -> "SwitchingCurve":
        """Discretize the myopic line at cell centers.

        Identical servers give exact ties on the diagonal; those cells carry
        tie value 0.5 so the induced control matrix reproduces the randomized
        symmetric policy.
        """
        pol = MyopicPolicy.from_config(config)
        centers = (np.arange(M) + 0.5) / M
        line = pol.slope * centers + pol.intercept
        thresholds = np.searchsorted(centers, line, side="left")
        tie_mask = np.zeros(M, dtype=bool)
        inside = thresholds < M
        tie_mask[inside] = centers[thresholds[inside]] == line[inside]
        symmetric = config.server1 == config.server2
        return cls(M=M, thresholds=thresholds,
                   tie_value=0.5 if symmetric else 0.0, tie_mask=tie_mask)


def myopic_control_matrix(M: int) -> np.ndarray:
    """Randomized symmetric-myopic action matrix: 1 above the diagonal, 0.5 on it."""
    if M < 1:
        raise ParameterError(f"M must be >= 1, got {M}")
    C = np.zeros((M, M))
    iu = np.triu_indices(M, k=1)
    C[iu] = 1.0
    np.fill_diagonal(C, 0.5)
    return C


def curve_control_matrix(curve: SwitchingCurve, M: int | None = None) -> np.ndarray:
    """Chance of choosing Server 2 per belief cell, induced by a switching curve."""
    if M is not None and M != curve.M:
        raise ParameterError(
            f"curve has resolution {curve.M}, control matrix asked for {M}")
    M = curve.M
    C = np.zeros((M, M))
    for i, thr in enumerate(curve.thresholds):
        if thr < M:
            C[i, thr:] = 1.0
            if curve.tie_mask is not None and curve.tie_mask[i]:
                C[i, thr] = curve.tie_value
    return C


def _tau_for(kind: str, server: ServerParams, omega: float) -> float:
    if kind == "n":
        return tau_n(omega, server)
    if kind == "s":
        return tau_s(omega, server)
    return tau_f(omega, server)


def _placement_matrix(M: int, kind: str, server: ServerParams) -> np.ndarray:
    """Pre-smoothing one-hot rows: row i sends mass to cell M * tau((i-1)/M).

    The target j = M * tau((i-1)/M) lands on the column j when integer,
    otherwise on floor(j) when that is a valid cell and ceil(j) when not.
    """
    A = np.zeros((M, M))
    for i in range(1, M + 1):
        j = M * _tau_for(kind, server, (i - 1) / M)
        j_round = round(j)
        if abs(j - j_round) < 1e-9:
            col = min(max(j_round, 1), M)
        elif 1 <= floor(j) <= M:
            col = floor(j)
        else:
            col = ceil(j)
        A[i - 1, col - 1] = 1.0
    return A


def _smooth(A: np.ndarray, epsilon: float) -> np.ndarray:
    M = A.shape[0]
    return (A + epsilon / M) / (1.0 + epsilon)


def build_controller_matrices(M: int, epsilon: float,
                              server: ServerParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row-stochastic (N, S, F) encoding tau_n, tau_s, tau_f on the M-cell grid.

    Each row places unit mass per the cell rule above, then epsilon/M is added
    everywhere and rows are renormalized; every entry ends up at least
    epsilon / (M * (1 + epsilon)), which makes the controller chain irreducible.
    """
    if M < 1:
        raise ParameterError(f"M must be >= 1, got {M}")
    if not 0.0 < epsilon < 1.0:
        raise ParameterError(f"epsilon must lie in (0, 1), got {epsilon}")
    return (_smooth(_placement_matrix(M, "n", server), epsilon),
            _smooth(_placement_matrix(M, "s", server), epsilon),
            _smooth(_placement_matrix(M, "f", server), epsilon))


def _as_matrix(name: str, x, M: int) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.shape != (M, M):
        raise ParameterError(f"{name} must be {M}x{M}, got {a.shape}")
    return a


@dataclass(frozen=True)
class FiniteController:
    """Discrete belief-state controller: action matrix C and update matrices.

    C[i, j] is the chance of choosing Server 2 when the belief cells are
    (i+1, j+1). N/S/F rows give the next-cell distribution for no service,
    success and failure respectively; they are strictly positive after
    epsilon-smoothing.
    """

    M: int
    epsilon: float
    C: np.ndarray
    N1: np.ndarray
    S1: np.ndarray
    F1: np.ndarray
    N2: np.ndarray
    S2: np.ndarray
    F2: np.ndarray

    def __post_init__(self) -> None:
        for name in ("C", "N1", "S1", "F1", "N2", "S2", "F2"):
            object.__setattr__(self, name,
                               _as_matrix(name, getattr(self, name), self.M))
        if self.C.min() < 0.0 or self.C.max() > 1.0:
            raise ParameterError("C entries must lie in [0, 1]")
        for name in ("N1", "S1", "F1", "N2", "S2", "F2"):
            A = getattr(self, name)
            if A.min() < 0.0 or np.abs(A.sum(axis=1) - 1.0).max() > 1e-9:
                raise ParameterError(f"{name} must be row-stochastic")

    def update_matrices(self, server: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if server == 1:
            return self.N1, self.S1, self.F1
        if server == 2:
            return self.N2, self.S2, self.F2
        raise ParameterError(f"server must be 1 or 2, got {server}")

    def to_json(self) -> str:
        doc = {"M": self.M, "epsilon": self.epsilon}
        for name in ("C", "N1", "S1", "F1", "N2", "S2", "F2"):
            doc[name] = getattr(self, name).tolist()
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "FiniteController":
        doc = json.loads(text)
        try:
            return cls(M=int(doc["M"]), epsilon=float(doc["epsilon"]),
                       **{k: np.asarray(doc[k], dtype=float)
                          for k in ("C", "N1", "S1", "F1", "N2", "S2", "F2")})
        except KeyError as exc:
            raise ParameterError(f"controller document missing field {exc}") from exc


def myopic_controller(config: SystemConfig, M: int,
                      epsilon: float = DEFAULT_EPSILON) -> FiniteController:
    """Finite controller combining the symmetric-myopic C with tau-derived updates."""
    N1, S1, F1 = build_controller_matrices(M, epsilon, config.server1)
    N2, S2, F2 = build_controller_matrices(M, epsilon, config.server2)
    return FiniteController(M=M, epsilon=epsilon, C=myopic_control_matrix(M),
                            N1=N1, S1=S1, F1=F1, N2=N2, S2=S2, F2=F2)


def controller_from_curve(curve: SwitchingCurve, config: SystemConfig,
                          epsilon: float = DEFAULT_EPSILON) -> FiniteController:
    """Finite controller whose action matrix realizes a switching curve."""
    M = curve.M
    N1, S1, F1 = build_controller_matrices(M, epsilon, config.server1)
    N2, S2, F2 = build_controller_matrices(M, epsilon, config.server2)
    return FiniteController(M=M, epsilon=epsilon, C=curve_control_matrix(curve),
                            N1=N1, S1=S1, F1=F1, N2=N2, S2=S2, F2=F2)
