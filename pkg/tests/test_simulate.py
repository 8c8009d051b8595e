import pytest

from retrialq.measures import compute_report
from retrialq.processes import class_arrival_rate
from retrialq.simulate import simulate
from retrialq.solver import solve_stationary

from util import exp_config, two_phase_config

# measure name -> arrival process / class used as the flux denominator
RATE_OF = {
    "p_drop_handoff": ("arrivals_normal", "handoff"),
    "p_preempt_new": ("arrivals_normal", "handoff"),
    "p_drop_handoff_outage": ("arrivals_catastrophic", "handoff"),
    "p_block_new_outage": ("arrivals_catastrophic", "new"),
    "p_block_emergency": ("arrivals_catastrophic", "emergency"),
    "p_preempt_emergency": ("arrivals_catastrophic", "emergency"),
}


def _check_all(cfg, res, sigmas=4.0):
    rep = compute_report(cfg, solve_stationary(cfg))
    misses = []
    for name, (proc, cls) in RATE_OF.items():
        rate = class_arrival_rate(getattr(cfg, proc), cls)
        if not res.consistent_with(name, getattr(rep, name), rate, sigmas):
            misses.append(name)
    e = res["e_orbit"]
    lo, hi = e.interval(sigmas)
    if not lo <= rep.e_orbit <= hi:
        misses.append("e_orbit")
    return misses


def test_simulation_matches_analysis_exponential():
    cfg = exp_config(S=3, K=2, K1=1, K2=2, M=2)
    res = simulate(cfg, events=400_000, seed=7)
    assert _check_all(cfg, res) == []


def test_simulation_matches_analysis_two_phase():
    cfg = two_phase_config()
    res = simulate(cfg, events=500_000, seed=11)
    assert _check_all(cfg, res) == []


def test_same_seed_reproduces():
    cfg = exp_config(S=2, K=1, K1=1, K2=1, M=1)
    a = simulate(cfg, events=50_000, seed=3)
    b = simulate(cfg, events=50_000, seed=3)
    assert a.estimates == b.estimates
    assert a.counts == b.counts


def test_different_seed_differs():
    cfg = exp_config(S=2, K=1, K1=1, K2=1, M=1)
    a = simulate(cfg, events=50_000, seed=3)
    b = simulate(cfg, events=50_000, seed=4)
    assert a["e_orbit"].mean != b["e_orbit"].mean


def test_no_catastrophes_no_repair_time():
    cfg = exp_config(S=2, K=1, K1=1, K2=1, M=1, cat_rate=1e-12)
    res = simulate(cfg, events=100_000, seed=5)
    assert res["p_repair"].mean == 0.0
    assert res.counts["block_e"] == 0


def test_unstable_config_builds_up_orbit():
    # overload with no abandonment: the simulated orbit keeps growing,
    # mirroring the analytic instability verdict
    cfg = exp_config(S=1, K=1, K1=1, K2=0, M=1, lam_h=0.01, lam_n=9.0,
                     mu_n=0.5, mu_h=0.5, theta=0.2, abandon=0.0,
                     cat_rate=1e-9)
    short = simulate(cfg, events=50_000, seed=9)
    long = simulate(cfg, events=400_000, seed=9)
    assert long["e_orbit"].mean > 4 * short["e_orbit"].mean
    assert long["e_orbit"].mean > 100


def test_estimates_carry_standard_errors():
    cfg = two_phase_config()
    res = simulate(cfg, events=100_000, seed=2, batches=25)
    assert res["e_orbit"].se > 0
    assert res.total_time > 0
    lo, hi = res["e_orbit"].interval(2)
    assert lo < res["e_orbit"].mean < hi
