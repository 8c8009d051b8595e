"""Stability analysis via the asymptotic tail blocks of the level process.

Above the tracking cap M the level blocks stop depending on the level, so
the chain has a quasi-Toeplitz tail.  Stability is decided by the drift of
that tail: with x the stationary vector of the phase process
Q0 + Q1 + Q2 (disaster jumps folded into the diagonal, since they only
ever shrink the orbit), the chain is ergodic iff x Q2 e < x Q0 e.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .generator import assemble_diag, assemble_lower, assemble_upper, kron_all
from .layout import layout
from .processes import class_arrival_rate, stationary_phase_vector


@dataclass(frozen=True)
class ErgodicityReport:
    stable: bool
    up_drift: float            # x Q2 e, rate of orbit growth
    down_drift: float          # x Q0 e, abandonment + successful retries
    reduced_lhs: float         # lambda_H + lambda_N, the simplified bound
    margin: float              # down_drift - up_drift

    def __str__(self):
        word = "stable" if self.stable else "unstable"
        return (f"{word}: up drift {self.up_drift:.6g} vs down drift "
                f"{self.down_drift:.6g} (margin {self.margin:.6g}); "
                f"total arrival rate {self.reduced_lhs:.6g}")


def _fold_disaster(cfg: ModelConfig, l: int) -> np.ndarray:
    """Dense within-level matrix moving the disaster phase by D1 while
    leaving everything else unchanged (used to close the tail generator,
    as disaster jumps always point back to level 0)."""
    lay = layout(cfg, l)
    out = np.zeros((lay.dim, lay.dim))
    d1 = cfg.catastrophe.d1
    for s in lay.strata:
        la, lc = s.dims[0], s.dims[1]
        rest = s.size // (la * lc)
        blk = kron_all(np.eye(la), d1, np.eye(rest))
        out[s.offset:s.offset + s.size, s.offset:s.offset + s.size] = blk
    return out


def limit_matrices(cfg: ModelConfig) -> dict:
    """Normalized tail blocks {U0, U1, U2, T} of the embedded jump chain.

    U0 + U1 + U2 is stochastic; its existence places the chain in the
    class admitting tail-drift stability analysis.
    """
    l = cfg.M + 1
    q0 = assemble_lower(cfg, l).toarray()
    q1 = assemble_diag(cfg, l).toarray() + _fold_disaster(cfg, l)
    q2 = assemble_upper(cfg, l).toarray()
    t = -np.diag(q1)
    if (t <= 0).any():
        raise ValueError("tail diagonal must be strictly negative")
    tinv = np.diag(1.0 / t)
    return {
        "U0": tinv @ q0,
        "U1": tinv @ q1 + np.eye(q1.shape[0]),
        "U2": tinv @ q2,
        "T": np.diag(t),
    }


def tail_blocks(cfg: ModelConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    l = cfg.M + 1
    return (assemble_lower(cfg, l).toarray(),
            assemble_diag(cfg, l).toarray() + _fold_disaster(cfg, l),
            assemble_upper(cfg, l).toarray())


def check_ergodicity(cfg: ModelConfig) -> ErgodicityReport:
    q0, q1, q2 = tail_blocks(cfg)
    x = stationary_phase_vector(q0 + q1 + q2)
    up = float(x @ q2.sum(axis=1))
    down = float(x @ q0.sum(axis=1))
    lam = (class_arrival_rate(cfg.arrivals_normal, "handoff")
           + class_arrival_rate(cfg.arrivals_normal, "new"))
    return ErgodicityReport(stable=up < down, up_drift=up, down_drift=down,
                            reduced_lhs=lam, margin=down - up)
