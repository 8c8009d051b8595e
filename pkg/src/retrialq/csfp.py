"""Count-server-for-phase occupancy bases and their transition matrices.

A basis enumerates all ways n busy servers can be spread over m phases.
Matrices built here describe service start (P), internal phase motion (A)
and completion (L) on that collapsed representation, plus the retrial
variants with a split absorption flow and the frozen top-level variants.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .processes import PhaseTypeDistribution, RetrialProcess

_MAX_ORDER = 2**31 - 1


def occupancy_count(n: int, m: int) -> int:
    """Number of ways to place n indistinguishable servers into m phases."""
    if n < 0 or m < 1:
        raise ValueError(f"need n >= 0, m >= 1, got n={n}, m={m}")
    order = math.comb(n + m - 1, m - 1)
    if order > _MAX_ORDER:
        raise OverflowError(f"basis order {order} exceeds machine range")
    return order


@dataclass(frozen=True)
class CsfpBasis:
    """Lexicographically ordered (descending on counts) occupancy basis."""

    n: int
    m: int
    vectors: tuple[tuple[int, ...], ...]
    _index: dict

    @property
    def order(self) -> int:
        return len(self.vectors)

    def index_of(self, v) -> int:
        v = tuple(int(x) for x in v)
        if sum(v) != self.n:
            raise ValueError(f"vector {v} does not sum to {self.n}")
        return self._index[v]

    def vector_of(self, i: int) -> tuple[int, ...]:
        return self.vectors[i]


@lru_cache(maxsize=None)
def basis(n: int, m: int) -> CsfpBasis:
    order = occupancy_count(n, m)
    vectors: list[tuple[int, ...]] = []

    def rec(prefix: tuple[int, ...], remaining: int, slots: int):
        if slots == 1:
            vectors.append(prefix + (remaining,))
            return
        for c in range(remaining, -1, -1):
            rec(prefix + (c,), remaining - c, slots - 1)

    rec((), n, m)
    assert len(vectors) == order
    index = {v: i for i, v in enumerate(vectors)}
    return CsfpBasis(n=n, m=m, vectors=tuple(vectors), _index=index)


def build_P(kappa: int, beta: np.ndarray) -> np.ndarray:
    """Service-start matrix from basis(kappa, m) to basis(kappa+1, m):
    one extra server enters phase j with probability beta[j]."""
    beta = np.asarray(beta, dtype=float).ravel()
    m = beta.shape[0]
    src, dst = basis(kappa, m), basis(kappa + 1, m)
    out = np.zeros((src.order, dst.order))
    for si, s in enumerate(src.vectors):
        for j in range(m):
            if beta[j] == 0.0:
                continue
            t = list(s)
            t[j] += 1
            out[si, dst.index_of(t)] += beta[j]
    return out


def build_A(n: int, subgen: np.ndarray) -> np.ndarray:
    """Phase-motion generator of n parallel clocks on basis(n, m):
    rate s_i * A[i, j] moves one server from phase i to j; the diagonal is
    sum_i s_i * A[i, i], so absorption intensity sits on the diagonal."""
    subgen = np.asarray(subgen, dtype=float)
    m = subgen.shape[0]
    b = basis(n, m)
    out = np.zeros((b.order, b.order))
    for si, s in enumerate(b.vectors):
        diag = 0.0
        for i in range(m):
            if s[i] == 0:
                continue
            diag += s[i] * subgen[i, i]
            for j in range(m):
                if j == i or subgen[i, j] == 0.0:
                    continue
                t = list(s)
                t[i] -= 1
                t[j] += 1
                out[si, b.index_of(t)] += s[i] * subgen[i, j]
        out[si, si] = diag
    return out


def build_L(n: int, exit: np.ndarray, m: int | None = None) -> np.ndarray:
    """Completion matrix from basis(n, m) to basis(n-1, m): one clock in
    phase i absorbs at rate s_i * exit[i]."""
    exit = np.asarray(exit, dtype=float).ravel()
    if m is None:
        m = exit.shape[0]
    if n < 1:
        raise ValueError("build_L needs n >= 1")
    src, dst = basis(n, m), basis(n - 1, m)
    out = np.zeros((src.order, dst.order))
    for si, s in enumerate(src.vectors):
        for i in range(m):
            if s[i] == 0 or exit[i] == 0.0:
                continue
            t = list(s)
            t[i] -= 1
            out[si, dst.index_of(t)] += s[i] * exit[i]
    return out


def build_remove(n: int, m: int) -> np.ndarray:
    """Uniform removal from basis(n, m) to basis(n-1, m): a uniformly chosen
    server leaves, i.e. probability s_i / n of removing phase i."""
    if n < 1:
        raise ValueError("build_remove needs n >= 1")
    src, dst = basis(n, m), basis(n - 1, m)
    out = np.zeros((src.order, dst.order))
    for si, s in enumerate(src.vectors):
        for i in range(m):
            if s[i] == 0:
                continue
            t = list(s)
            t[i] -= 1
            out[si, dst.index_of(t)] += s[i] / n
    return out


def start_rows(j: int, beta: np.ndarray) -> np.ndarray:
    """Row vector over basis(j, m): j clocks all started afresh from beta
    (multinomial occupancy probabilities)."""
    beta = np.asarray(beta, dtype=float).ravel()
    m = beta.shape[0]
    row = np.ones((1, 1))
    for k in range(j):
        row = row @ build_P(k, beta)
    return row


def build_retrial_blocks(l: int, r: RetrialProcess,
                         frozen: bool | None = None) -> dict[str, np.ndarray]:
    """Retrial-orbit blocks at orbit size l (l <= cap): abandonment L1,
    successful attempt L2, orbit entry P, phase motion A.  At l == cap the
    frozen square variants are returned by default: only cap clocks stay
    tracked, each absorption re-enters a fresh clock drawn from the initial
    vector, and orbit entries leave the tracked counts unchanged.  Callers
    that need the rectangular blocks coupling level cap to cap-1 pass
    frozen=False.
    """
    if l > r.cap:
        raise ValueError(f"orbit block level {l} beyond cap M={r.cap}")
    if frozen is None:
        frozen = l == r.cap
    n = r.order
    g = r.base.subgen
    if not frozen:
        return {
            "L1": build_L(l, r.exit_abandon, n) if l >= 1 else np.zeros((1, 0)),
            "L2": build_L(l, r.exit_retry, n) if l >= 1 else np.zeros((1, 0)),
            "P": build_P(l, r.base.init),
            "A": build_A(l, g),
        }
    if l < r.cap:
        raise ValueError("frozen variants exist only at l == cap")
    m = r.cap
    redraw = build_P(m - 1, r.base.init)
    return {
        "L1": build_L(m, r.exit_abandon, n) @ redraw,
        "L2": build_L(m, r.exit_retry, n) @ redraw,
        "P": np.eye(occupancy_count(m, n)),
        "A": build_A(m, g),
    }
