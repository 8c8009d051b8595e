"""Stationary distribution of the level process.

Two routes are provided:

  solve_stationary        windowed backward G recursion with a dual seed,
                          then a forward pass over the levels until the
                          level mass drops below eps_f
  direct_truncated_solve  sparse LU on the whole truncated generator,
                          used as an oracle and for small models

The windowed solver picks its starting window from a memoryless surrogate
of the model (every process collapsed to its fundamental rate), which
gives a cheap estimate of where the orbit mass becomes negligible.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .config import ConfigError, ModelConfig, config_from_dict
from .ergodicity import ErgodicityReport, check_ergodicity
from .generator import (
    assemble_diag,
    assemble_first_col,
    assemble_lower,
    assemble_truncated,
    assemble_upper,
)
from .layout import layout
from .processes import (
    class_arrival_rate,
    ph_fundamental_rate,
)


class UnstableConfigError(RuntimeError):
    def __init__(self, report: ErgodicityReport):
        self.report = report
        super().__init__(str(report))


class NumericalFailure(RuntimeError):
    pass


@dataclass
class StationaryDistribution:
    """Per-level stationary probability vectors z(0..i_star)."""

    config: ModelConfig
    levels: list[np.ndarray]
    i_star: int
    method: str
    residual: float = 0.0
    meta: dict = field(default_factory=dict)

    def level(self, l: int) -> np.ndarray:
        if l <= self.i_star:
            return self.levels[l]
        return np.zeros(layout(self.config, l).dim)

    def mass(self, l: int) -> float:
        return float(self.level(l).sum()) if l <= self.i_star else 0.0

    def level_masses(self) -> np.ndarray:
        return np.array([v.sum() for v in self.levels])

    def total_mass(self) -> float:
        return float(sum(v.sum() for v in self.levels))

    def stratum_mass(self, l: int, *key) -> float:
        lay = layout(self.config, l)
        s = lay.stratum(*key)
        return float(self.level(l)[s.offset:s.offset + s.size].sum())

    def stratum_vector(self, l: int, *key) -> np.ndarray:
        lay = layout(self.config, l)
        s = lay.stratum(*key)
        return self.level(l)[s.offset:s.offset + s.size]


def _clamp(v: np.ndarray, floor: float = -1e-12) -> np.ndarray:
    if (v < floor).any():
        raise NumericalFailure(f"probability entry below {floor}: min {v.min():.3e}")
    return np.where(v < 0.0, 0.0, v)


def direct_truncated_solve(cfg: ModelConfig, l_max: int) -> StationaryDistribution:
    """Sparse LU solve of the truncated chain, exact up to truncation."""
    q = assemble_truncated(cfg, l_max)
    n = q.shape[0]
    a = q.transpose().tocsr().tolil()
    a[n - 1, :] = np.ones(n)
    b = np.zeros(n)
    b[n - 1] = 1.0
    try:
        x = spla.splu(a.tocsc()).solve(b)
    except RuntimeError as e:
        raise NumericalFailure(f"LU factorization failed: {e}")
    res = float(np.abs(x @ q).max())
    x = _clamp(x, -1e-9)
    x = x / x.sum()
    dims = [layout(cfg, l).dim for l in range(l_max + 1)]
    offs = np.concatenate([[0], np.cumsum(dims)]).astype(int)
    levels = [x[offs[l]:offs[l + 1]] for l in range(l_max + 1)]
    return StationaryDistribution(config=cfg, levels=levels, i_star=l_max,
                                  method="direct", residual=res)


def _surrogate_config(cfg: ModelConfig) -> ModelConfig:
    """Memoryless sibling of the model: every process replaced by a
    single-phase one with the same fundamental rate."""
    lam_h = class_arrival_rate(cfg.arrivals_normal, "handoff")
    lam_n = class_arrival_rate(cfg.arrivals_normal, "new")
    lhc = class_arrival_rate(cfg.arrivals_catastrophic, "handoff")
    lnc = class_arrival_rate(cfg.arrivals_catastrophic, "new")
    lec = class_arrival_rate(cfg.arrivals_catastrophic, "emergency")
    cat = cfg.catastrophe.event_rate()
    rt = cfg.retrial
    theta = rt.theta
    # long-run share of retrial absorptions that are abandonments
    w = np.linalg.solve(-rt.base.subgen.T, rt.base.init)
    tot = w @ (rt.exit_abandon + rt.exit_retry)
    p_ab = float(w @ rt.exit_abandon / tot) if tot > 0 else 0.0
    data = {
        "model": {"S": cfg.S, "K": cfg.K, "K1": cfg.K1, "K2": cfg.K2, "M": cfg.M},
        "arrivals_normal": {"c0": [[-(lam_h + lam_n)]],
                            "handoff": [[lam_h]], "new": [[lam_n]]},
        "arrivals_catastrophic": {"c0": [[-(lhc + lnc + lec)]],
                                  "handoff": [[lhc]], "new": [[lnc]],
                                  "emergency": [[lec]]},
        "catastrophe": {"d0": [[-cat]], "d1": [[cat]]},
        "service_handoff": {"init": [1.0],
                            "subgen": [[-ph_fundamental_rate(cfg.service_handoff)]]},
        "service_new": {"init": [1.0],
                        "subgen": [[-ph_fundamental_rate(cfg.service_new)]]},
        "service_emergency": {"init": [1.0],
                              "subgen": [[-ph_fundamental_rate(cfg.service_emergency)]]},
        "repair": {"init": [1.0], "subgen": [[-ph_fundamental_rate(cfg.repair)]]},
        "retrial": {"init": [1.0], "subgen": [[-theta]], "theta": theta,
                    "abandon_fraction": p_ab},
        "solver": {k: getattr(cfg.solver, k)
                   for k in type(cfg.solver).__dataclass_fields__},
    }
    return config_from_dict(data)


def choose_initial_level(cfg: ModelConfig, delta: float | None = None) -> int:
    """Smallest level whose mass in the memoryless surrogate model falls
    below delta; lower bound 1."""
    delta = cfg.solver.delta if delta is None else delta
    sur = _surrogate_config(cfg)
    l_max = max(4 * sur.M, 16)
    while True:
        z = direct_truncated_solve(sur, l_max)
        masses = z.level_masses()
        below = np.where(masses < delta)[0]
        if below.size and below[0] < l_max - 2:
            return max(int(below[0]), 1)
        if l_max >= cfg.solver.l_hard_cap:
            raise NumericalFailure(
                f"surrogate orbit mass stays above delta up to {l_max}")
        l_max *= 2


class _Blocks:
    """Level-block access with caching of the frozen tail blocks."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        self.m = cfg.M
        self._cache = {}

    def _get(self, kind, l):
        key = (kind, min(l, self.m + 2))
        if key not in self._cache:
            fn = {"diag": assemble_diag, "upper": assemble_upper,
                  "lower": assemble_lower, "first": assemble_first_col}[kind]
            self._cache[key] = fn(self.cfg, key[1])
        return self._cache[key]

    def diag(self, l):
        return self._get("diag", l if l <= self.m else self.m + 1)

    def upper(self, l):
        return self._get("upper", l if l < self.m else self.m + 1)

    def lower(self, l):
        return self._get("lower", l if l <= self.m else self.m + 1)

    def first(self, l):
        return self._get("first", l if l <= self.m else self.m + 1)

    def to_zero(self, l):
        """Q_{l,0}: the disaster flush, plus the retrial flows when l=1."""
        if l == 1:
            return (self.first(1) + self.lower(1)).tocsr()
        return self.first(l)


def g_recursion(cfg: ModelConfig, kappa_start: int,
                eps_g: float | None = None) -> dict:
    """Backward first-passage recursion started from the two extreme seeds
    at kappa_start.  Returns the dictionary of level matrices (a shared
    converged matrix above the cap) and where the seeds agreed."""
    eps_g = cfg.solver.eps_g if eps_g is None else eps_g
    if kappa_start < cfg.M:
        raise ValueError("seed level must lie in the frozen tail")
    bl = _Blocks(cfg)
    dim_tail = layout(cfg, cfg.M).dim
    g1 = np.zeros((dim_tail, dim_tail))
    g2 = np.eye(dim_tail)
    converged_at = None
    kappa = kappa_start
    while kappa >= cfg.M:
        d = bl.diag(kappa + 1).toarray()
        u = bl.upper(kappa + 1).toarray()
        lo = bl.lower(kappa + 1).toarray()
        g1 = -np.linalg.solve(d + u @ g1, lo)
        g2 = -np.linalg.solve(d + u @ g2, lo)
        if np.abs(g1 - g2).max() < eps_g:
            converged_at = kappa
            break
        kappa -= 1
    if converged_at is None:
        return {"converged_at": None, "G": {}, "G_tail": None}
    gs = {l: g1 for l in (converged_at,)}
    g_tail = g1
    # exact level-dependent matrices below the cap
    g = g1
    for i in range(min(converged_at, cfg.M) - 1, -1, -1):
        d = bl.diag(i + 1).toarray()
        u = bl.upper(i + 1).toarray()
        lo = bl.lower(i + 1).toarray()
        g = -np.linalg.solve(d + u @ g, lo)
        gs[i] = g
    return {"converged_at": converged_at, "G": gs, "G_tail": g_tail}


def _g_at(gres, cfg, i):
    if i >= cfg.M:
        return gres["G_tail"]
    return gres["G"][i]


def solve_stationary(cfg: ModelConfig, settings=None) -> StationaryDistribution:
    """Windowed level-by-level solve.

    The window starts at i0 from the surrogate estimate with width
    s = 2 * i0; if either the backward recursion fails to converge inside
    the window or the forward level masses have not dropped below eps_f by
    its end, the window is doubled and the pass continues.
    """
    st = settings or cfg.solver
    report = check_ergodicity(cfg)
    if not report.stable:
        raise UnstableConfigError(report)
    bl = _Blocks(cfg)

    i0 = choose_initial_level(cfg, st.delta)
    s = max(2 * i0, cfg.M + 2)
    kappa = i0 - 1 + s
    gres = g_recursion(cfg, kappa, st.eps_g)
    while gres["converged_at"] is None:
        s *= 2
        kappa = i0 - 1 + s
        if kappa > st.l_hard_cap:
            raise NumericalFailure("backward recursion window exceeded hard cap")
        gres = g_recursion(cfg, kappa, st.eps_g)
    kappa = gres["converged_at"]

    # forward ratio matrices z(i) = z(i-1) R(i); the tail factor is shared
    tail_inv = {}

    def minv(i):
        if i > cfg.M:
            if "m" not in tail_inv:
                m = bl.diag(i).toarray() + bl.upper(i).toarray() @ _g_at(gres, cfg, i)
                tail_inv["m"] = np.linalg.inv(m)
            return tail_inv["m"]
        m = bl.diag(i).toarray() + bl.upper(i).toarray() @ _g_at(gres, cfg, i)
        return np.linalg.inv(m)

    # censored level-0 generator, accumulated downward from kappa:
    # B_i = Q_{i,0} + R(i+1) B_{i+1}, finishing with Q_{0,0} + R(1) B_1
    b = bl.to_zero(kappa).toarray()
    for i in range(kappa - 1, -1, -1):
        rb = -bl.upper(i) @ (minv(i + 1) @ b)
        if i >= 1:
            b = bl.to_zero(i).toarray() + rb
        else:
            b = bl.diag(0).toarray() + rb

    n0 = b.shape[0]
    a = b.T.copy()
    a[-1, :] = 1.0
    rhs = np.zeros(n0)
    rhs[-1] = 1.0
    try:
        z0 = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError as e:
        raise NumericalFailure(f"level-0 solve failed: {e}")
    z0 = _clamp(z0, -1e-9)

    levels = [z0]
    i = 1
    while True:
        zi = -(levels[i - 1] @ bl.upper(i - 1)) @ minv(i)
        zi = _clamp(zi, -1e-9)
        levels.append(zi)
        if zi.sum() < st.eps_f:
            i_star = i
            break
        if i >= st.l_hard_cap:
            raise NumericalFailure("forward pass exceeded hard cap before "
                                   "the level mass dropped below eps_f")
        i += 1

    total = sum(v.sum() for v in levels)
    levels = [v / total for v in levels]

    # residual of the interior global balance equations under the
    # computed vector (the truncated top level is excluded)
    res = 0.0
    col0 = levels[0] @ bl.diag(0)
    for j in range(1, i_star + 1):
        col0 += levels[j] @ bl.to_zero(j)
    res = max(res, float(np.abs(col0).max()))
    for i in range(1, i_star):
        col = (levels[i - 1] @ bl.upper(i - 1)
               + levels[i] @ bl.diag(i)
               + levels[i + 1] @ bl.lower(i + 1))
        res = max(res, float(np.abs(col).max()))

    return StationaryDistribution(config=cfg, levels=levels, i_star=i_star,
                                  method="windowed", residual=res,
                                  meta={"i0": i0, "kappa": kappa,
                                        "window": s, "ergodicity": report})
