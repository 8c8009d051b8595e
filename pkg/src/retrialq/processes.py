"""Markovian arrival processes and phase-type distributions.

All process records are immutable after construction and every operation
here is a pure function, so they can be shared freely across threads.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ATOL = 1e-12


def _as_matrix(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    return a


def _is_irreducible(q: np.ndarray) -> bool:
    """Reachability check on the nonzero pattern of a generator."""
    n = q.shape[0]
    if n == 1:
        return True
    adj = (np.abs(q) > 0) & ~np.eye(n, dtype=bool)
    reach = np.eye(n, dtype=bool) | adj
    for _ in range(n):
        new = reach @ reach
        if (new == reach).all():
            break
        reach = new
    return bool(reach.all())


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    errors: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.ok


def _report(errors: list[str]) -> ValidationReport:
    return ValidationReport(ok=not errors, errors=tuple(errors))


@dataclass(frozen=True)
class PhaseTypeDistribution:
    """PH distribution given by an initial row vector and a subgenerator."""

    init: np.ndarray
    subgen: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "init", np.asarray(self.init, dtype=float).ravel())
        object.__setattr__(self, "subgen", _as_matrix(self.subgen))
        self.init.setflags(write=False)
        self.subgen.setflags(write=False)

    @property
    def order(self) -> int:
        return self.subgen.shape[0]

    @property
    def exit(self) -> np.ndarray:
        return -self.subgen.sum(axis=1)

    def validate(self) -> ValidationReport:
        errs = []
        m = self.order
        if self.init.shape != (m,):
            errs.append(f"init length {self.init.shape[0]} != order {m}")
            return _report(errs)
        if (self.init < -ATOL).any():
            errs.append(f"init has negative entries at {np.where(self.init < -ATOL)[0].tolist()}")
        if abs(self.init.sum() - 1.0) > ATOL:
            errs.append(f"init sums to {self.init.sum()}, expected 1")
        d = np.diag(self.subgen)
        if (d >= 0).any():
            errs.append(f"diagonal must be negative, offending rows {np.where(d >= 0)[0].tolist()}")
        off = self.subgen - np.diag(d)
        if (off < -ATOL).any():
            errs.append("off-diagonal entries must be nonnegative")
        if (self.exit < -ATOL).any():
            errs.append(f"exit vector has negative entries at {np.where(self.exit < -ATOL)[0].tolist()}")
        if not errs:
            if np.linalg.eigvals(self.subgen).real.max() >= -1e-14:
                errs.append("subgenerator must be nonsingular with negative spectrum")
        return _report(errs)

    def mean(self) -> float:
        return float(self.init @ np.linalg.solve(-self.subgen, np.ones(self.order)))

    def scaled(self, factor: float) -> "PhaseTypeDistribution":
        return PhaseTypeDistribution(self.init, self.subgen * factor)


def ph_fundamental_rate(p: PhaseTypeDistribution) -> float:
    """Reciprocal of the mean absorption time."""
    return 1.0 / p.mean()


def exponential_ph(rate: float) -> PhaseTypeDistribution:
    return PhaseTypeDistribution(np.ones(1), -np.array([[rate]], dtype=float))


@dataclass(frozen=True)
class RetrialProcess:
    """PH retrial clock with the absorption flow split into abandonment
    (call quits the cell) and an actual retrial attempt."""

    base: PhaseTypeDistribution
    exit_abandon: np.ndarray
    exit_retry: np.ndarray
    theta: float
    cap: int
    level_rates: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "exit_abandon", np.asarray(self.exit_abandon, dtype=float).ravel())
        object.__setattr__(self, "exit_retry", np.asarray(self.exit_retry, dtype=float).ravel())
        if not self.level_rates:
            object.__setattr__(self, "level_rates", tuple([self.theta] * (self.cap + 1)))

    @property
    def order(self) -> int:
        return self.base.order

    def validate(self) -> ValidationReport:
        errs = list(self.base.validate().errors)
        split = self.exit_abandon + self.exit_retry + self.base.subgen.sum(axis=1)
        if np.abs(split).max() > 1e-9:
            errs.append("exit_abandon + exit_retry must equal -subgen*1")
        if (self.exit_abandon < -ATOL).any() or (self.exit_retry < -ATOL).any():
            errs.append("exit vectors must be nonnegative")
        if self.theta <= 0:
            errs.append("theta must be positive")
        if self.cap < 1:
            errs.append("cap M must be >= 1")
        if len(self.level_rates) != self.cap + 1:
            errs.append(f"level_rates needs {self.cap + 1} entries, got {len(self.level_rates)}")
        if any(r <= 0 for r in self.level_rates):
            errs.append("level_rates must be positive")
        return _report(errs)

    @staticmethod
    def from_ph(base: PhaseTypeDistribution, theta: float, cap: int,
                abandon_fraction: float = 0.0,
                level_rates: tuple[float, ...] = ()) -> "RetrialProcess":
        """Split the absorption flow by a scalar abandonment fraction and
        rescale the clock so its fundamental rate equals theta."""
        scaled = base.scaled(theta * base.mean())
        total = scaled.exit
        return RetrialProcess(
            base=scaled,
            exit_abandon=abandon_fraction * total,
            exit_retry=(1.0 - abandon_fraction) * total,
            theta=theta,
            cap=cap,
            level_rates=level_rates,
        )


@dataclass(frozen=True)
class MarkedArrivalProcess:
    """MMAP: background rate matrix c0 plus one marked matrix per call class."""

    c0: np.ndarray
    class_mats: dict[str, np.ndarray]

    def __post_init__(self):
        object.__setattr__(self, "c0", _as_matrix(self.c0))
        mats = {k: _as_matrix(v) for k, v in self.class_mats.items()}
        object.__setattr__(self, "class_mats", mats)

    @property
    def order(self) -> int:
        return self.c0.shape[0]

    @property
    def total_generator(self) -> np.ndarray:
        g = self.c0.copy()
        for m in self.class_mats.values():
            g = g + m
        return g

    def validate(self) -> ValidationReport:
        errs = []
        d = np.diag(self.c0)
        if (d >= 0).any():
            errs.append("c0 diagonal must be negative")
        if (self.c0 - np.diag(d) < -ATOL).any():
            errs.append("c0 off-diagonal entries must be nonnegative")
        for name, m in self.class_mats.items():
            if m.shape != self.c0.shape:
                errs.append(f"class matrix {name} has mismatched shape")
            elif (m < -ATOL).any():
                errs.append(f"class matrix {name} must be nonnegative")
        if not errs:
            g = self.total_generator
            rs = np.abs(g.sum(axis=1)).max()
            if rs > 1e-9:
                errs.append(f"c0 + class matrices is not conservative (max |row sum| {rs:.2e})")
            if not _is_irreducible(g):
                errs.append("summed generator is not irreducible")
        return _report(errs)

    def with_class_scaled(self, name: str, factor: float) -> "MarkedArrivalProcess":
        """Scale one marked matrix, compensating c0's diagonal to stay conservative."""
        mats = dict(self.class_mats)
        old = mats[name]
        mats[name] = old * factor
        c0 = self.c0 - np.diag((factor - 1.0) * old.sum(axis=1))
        return MarkedArrivalProcess(c0=c0, class_mats=mats)


@dataclass(frozen=True)
class CatastropheProcess:
    """MAP of disaster events: d0 background, d1 event-marked."""

    d0: np.ndarray
    d1: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "d0", _as_matrix(self.d0))
        object.__setattr__(self, "d1", _as_matrix(self.d1))

    @property
    def order(self) -> int:
        return self.d0.shape[0]

    def validate(self) -> ValidationReport:
        errs = []
        d = np.diag(self.d0)
        if (d >= 0).any():
            errs.append("d0 diagonal must be negative")
        if (self.d0 - np.diag(d) < -ATOL).any():
            errs.append("d0 off-diagonal entries must be nonnegative")
        if (self.d1 < -ATOL).any():
            errs.append("d1 must be nonnegative")
        if self.d1.shape != self.d0.shape:
            errs.append("d0/d1 shape mismatch")
        if not errs:
            g = self.d0 + self.d1
            if np.abs(g.sum(axis=1)).max() > 1e-9:
                errs.append("d0 + d1 is not conservative")
            if not _is_irreducible(g):
                errs.append("d0 + d1 is not irreducible")
        return _report(errs)

    def event_rate(self) -> float:
        pi = stationary_phase_vector(self.d0 + self.d1)
        return float(pi @ self.d1.sum(axis=1))


def validate_process(p) -> ValidationReport:
    """Dispatch to the record's own validation."""
    return p.validate()


def stationary_phase_vector(q) -> np.ndarray:
    """Solve pi q = 0, pi 1 = 1 for an irreducible conservative generator.

    Deterministic LU solve: the last column of q^T is replaced by the
    normalization constraint.
    """
    q = _as_matrix(q)
    n = q.shape[0]
    if np.abs(q.sum(axis=1)).max() > 1e-9:
        raise ValueError("generator rows must sum to zero")
    if n == 1:
        return np.ones(1)
    if not _is_irreducible(q):
        raise ValueError("not irreducible")
    a = q.T.copy()
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    pi = np.linalg.solve(a, b)
    res = max(np.abs(pi @ q).max(), abs(pi.sum() - 1.0))
    if res > 1e-10 or (pi < -1e-12).any():
        raise ValueError(f"not irreducible (solve residual {res:.2e})")
    return pi


def class_arrival_rate(m: MarkedArrivalProcess, cls: str) -> float:
    """Long-run arrival rate of one marked class: pi C_class 1."""
    if cls not in m.class_mats:
        raise KeyError(f"unknown class {cls!r}; have {sorted(m.class_mats)}")
    pi = stationary_phase_vector(m.total_generator)
    return float(pi @ m.class_mats[cls].sum(axis=1))


def total_arrival_rate(m: MarkedArrivalProcess) -> float:
    return sum(class_arrival_rate(m, c) for c in m.class_mats)


def _map_interarrival_moments(d0: np.ndarray, d1: np.ndarray):
    """First two moments, lag-1 joint moment of consecutive inter-arrival
    times of a MAP, via the embedded chain at arrival epochs:
    P = (-d0)^-1 d1, phi P = phi, E[T] = phi (-d0)^-1 1,
    E[T^2] = 2 phi (-d0)^-2 1, E[T0 T1] = phi (-d0)^-1 P (-d0)^-1 1.
    """
    n = d0.shape[0]
    m0inv = np.linalg.inv(-d0)
    p = m0inv @ d1
    pi = stationary_phase_vector(d0 + d1)
    lam = float(pi @ d1.sum(axis=1))
    phi = pi @ d1 / lam
    one = np.ones(n)
    m1 = float(phi @ m0inv @ one)
    m2 = 2.0 * float(phi @ m0inv @ m0inv @ one)
    joint = float(phi @ m0inv @ p @ m0inv @ one)
    return m1, m2, joint


def map_correlation_coefficient(d0, d1) -> float:
    """Lag-1 correlation of consecutive inter-arrival times."""
    d0, d1 = _as_matrix(d0), _as_matrix(d1)
    m1, m2, joint = _map_interarrival_moments(d0, d1)
    var = m2 - m1 * m1
    if var <= 0:
        return 0.0
    return (joint - m1 * m1) / var


def map_variation_coefficient(d0, d1) -> float:
    """Coefficient of variation of the inter-arrival time."""
    d0, d1 = _as_matrix(d0), _as_matrix(d1)
    m1, m2, _ = _map_interarrival_moments(d0, d1)
    return float(np.sqrt(max(m2 - m1 * m1, 0.0)) / m1)


def mmap_class_map(m: MarkedArrivalProcess, cls: str) -> tuple[np.ndarray, np.ndarray]:
    """View one marked class as a MAP: its matrix is d1, everything else d0."""
    if cls not in m.class_mats:
        raise KeyError(f"unknown class {cls!r}")
    d1 = m.class_mats[cls]
    d0 = m.c0.copy()
    for name, mat in m.class_mats.items():
        if name != cls:
            d0 = d0 + mat
    return d0, d1
