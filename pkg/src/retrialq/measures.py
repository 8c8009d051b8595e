"""Steady-state performance measures.

Every probability here is an event-flux ratio: the long-run rate of the
event of interest (computed from the stationary vector and the rate
matrices of the triggering process) divided by the long-run rate of the
triggering arrivals.  Occupancy distributions are plain state masses.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ModelConfig, patch_config
from .csfp import basis
from .layout import layout
from .processes import class_arrival_rate
from .solver import StationaryDistribution, UnstableConfigError, solve_stationary


@dataclass
class PerformanceReport:
    e_orbit: float
    p_orbit: list[float]
    p_drop_handoff: float          # lost handoff arrivals, main channels up
    p_drop_handoff_outage: float   # lost handoff arrivals while on backups
    p_block_new_outage: float      # lost new arrivals while on backups
    p_block_emergency: float       # lost emergency arrivals
    p_preempt_new: float           # handoff preempts an in-service new call
    p_preempt_emergency: float     # emergency preempts a call on a backup
    p_repair: float                # some channel is under repair
    occupancy_handoff: list[float]
    occupancy_new: list[float]
    occupancy_emergency: list[float]
    disaster_rate_busy: float      # disasters striking a busy system
    retrial_success_rate: float
    rates: dict = field(default_factory=dict)

    SCALAR_FIELDS = ("e_orbit", "p_drop_handoff", "p_drop_handoff_outage",
                     "p_block_new_outage", "p_block_emergency",
                     "p_preempt_new", "p_preempt_emergency", "p_repair",
                     "disaster_rate_busy", "retrial_success_rate")

    def scalars(self) -> dict:
        return {k: getattr(self, k) for k in self.SCALAR_FIELDS}

    def as_dict(self) -> dict:
        d = self.scalars()
        d["p_orbit"] = self.p_orbit
        d["occupancy_handoff"] = self.occupancy_handoff
        d["occupancy_new"] = self.occupancy_new
        d["occupancy_emergency"] = self.occupancy_emergency
        d["rates"] = self.rates
        return d


def _stratum_axis_marginal(z: StationaryDistribution, l: int, stratum,
                           axis: int) -> np.ndarray:
    v = z.level(l)[stratum.offset:stratum.offset + stratum.size]
    cube = v.reshape(stratum.dims)
    axes = tuple(a for a in range(len(stratum.dims)) if a != axis)
    return cube.sum(axis=axes)


def compute_report(cfg: ModelConfig, z: StationaryDistribution) -> PerformanceReport:
    an, ac = cfg.arrivals_normal, cfg.arrivals_catastrophic
    lam_h = class_arrival_rate(an, "handoff")
    lam_n = class_arrival_rate(an, "new")
    lam_hc = class_arrival_rate(ac, "handoff")
    lam_nc = class_arrival_rate(ac, "new")
    lam_e = class_arrival_rate(ac, "emergency")
    chn_out = an.class_mats["handoff"].sum(axis=1)
    chc_out = ac.class_mats["handoff"].sum(axis=1)
    cnc_out = ac.class_mats["new"].sum(axis=1)
    cec_out = ac.class_mats["emergency"].sum(axis=1)
    d1_out = cfg.catastrophe.d1.sum(axis=1)
    rt = cfg.retrial

    p_orbit = []
    drop_h = 0.0
    preempt_new = 0.0
    disaster_busy = 0.0
    retry_success = 0.0
    occ_h = np.zeros(cfg.S + 1)
    occ_n = np.zeros(cfg.S + 1)
    occ_e = np.zeros(cfg.K + 1)

    for l in range(z.i_star + 1):
        lay = layout(cfg, l)
        lvl_orbit_mass = 0.0
        for s in lay.strata:
            if s.kind == "normal":
                m = float(z.level(l)[s.offset:s.offset + s.size].sum())
                lvl_orbit_mass += m
                occ_h[s.k1] += m
                occ_n[s.k2] += m
                occ_e[0] += m
                arr = _stratum_axis_marginal(z, l, s, 0)
                if s.k1 + s.k2 == cfg.S and not (s.k1 < cfg.K2 and s.k2 >= 1):
                    drop_h += float(arr @ chn_out)
                if s.k1 + s.k2 == cfg.S and (s.k1 < cfg.K2 and s.k2 >= 1):
                    preempt_new += float(arr @ chn_out)
                if s.k1 + s.k2 >= 1:
                    cat = _stratum_axis_marginal(z, l, s, 1)
                    disaster_busy += float(cat @ d1_out)
                if l >= 1 and s.k1 + s.k2 < cfg.S:
                    orbit = _stratum_axis_marginal(z, l, s, 4)
                    b_vecs = np.array(basis(min(l, cfg.M), rt.order).vectors,
                                      dtype=float)
                    retry_success += float(orbit @ (b_vecs @ rt.exit_retry))
            elif s.kind == "repair":
                m = float(z.level(l)[s.offset:s.offset + s.size].sum())
                occ_h[0] += m
                occ_n[0] += m
                occ_e[0] += m
            else:
                m = float(z.level(l)[s.offset:s.offset + s.size].sum())
                occ_h[s.k1] += m
                occ_n[s.k2] += m
                occ_e[s.i] += m
        p_orbit.append(lvl_orbit_mass)

    e_orbit = float(sum(l * p for l, p in enumerate(p_orbit)))

    # outage-time fluxes live entirely at level 0
    lay0 = layout(cfg, 0)
    drop_h_out = block_n_out = block_e = preempt_e = 0.0
    p_repair = 0.0
    for s in lay0.strata:
        if s.kind == "normal":
            continue
        p_repair += float(z.level(0)[s.offset:s.offset + s.size].sum())
        if s.kind == "repair":
            # arrivals lost during bare repair are not charged to the
            # backup-channel loss measures
            continue
        arr = _stratum_axis_marginal(z, 0, s, 0)
        t_busy = s.k1 + s.k2 + s.i
        if t_busy == cfg.K:
            drop_h_out += float(arr @ chc_out)
            block_n_out += float(arr @ cnc_out)
            can_preempt = s.i < cfg.K1 and (s.k1 + s.k2) >= 1
            if can_preempt:
                preempt_e += float(arr @ cec_out)
            else:
                block_e += float(arr @ cec_out)

    report = PerformanceReport(
        e_orbit=e_orbit,
        p_orbit=p_orbit,
        p_drop_handoff=drop_h / lam_h,
        p_drop_handoff_outage=drop_h_out / lam_hc,
        p_block_new_outage=block_n_out / lam_nc,
        p_block_emergency=block_e / lam_e,
        p_preempt_new=preempt_new / lam_h,
        p_preempt_emergency=preempt_e / lam_e,
        p_repair=p_repair,
        occupancy_handoff=occ_h.tolist(),
        occupancy_new=occ_n.tolist(),
        occupancy_emergency=occ_e.tolist(),
        disaster_rate_busy=disaster_busy,
        retrial_success_rate=retry_success,
        rates={"lambda_handoff": lam_h, "lambda_new": lam_n,
               "lambda_handoff_outage": lam_hc, "lambda_new_outage": lam_nc,
               "lambda_emergency": lam_e},
    )
    return report


@dataclass
class SweepRow:
    value: float
    stable: bool
    report: PerformanceReport | None
    error: str = ""


def sweep(cfg: ModelConfig, param: str, values) -> list[SweepRow]:
    """Independent solve per value of one scalar config parameter; unstable
    points are flagged and kept in place."""
    rows = []
    for v in values:
        patched = patch_config(cfg, param, v)
        try:
            z = solve_stationary(patched)
        except UnstableConfigError as e:
            rows.append(SweepRow(value=float(v), stable=False, report=None,
                                 error=str(e)))
            continue
        rows.append(SweepRow(value=float(v), stable=True,
                             report=compute_report(patched, z)))
    return rows
