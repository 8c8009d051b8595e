"""Acceptance gate: ten end-to-end checks with pinned tolerances.

Each test prints one PASS/FAIL line (run with -s to see them inline).
The checks lean on independent oracles: labeled product spaces for the
lumped constructions, a brute-force truncated linear solve for the
windowed solver, an event-driven simulation for the measures, and
exhaustive enumeration for the optimizer machinery.
"""
import itertools
import math
import random
import time

import numpy as np
import pytest

from retrialq.cli import main as cli_main
from retrialq.config import dump_config, parse_config, patch_config
from retrialq.csfp import basis, build_A, build_L
from retrialq.ergodicity import check_ergodicity
from retrialq.generator import assemble_truncated
from retrialq.measures import compute_report
from retrialq.nsga2 import (crowding_distance, dominates, hypervolume,
                            non_dominated_sort, _poly_mutate, _sbx,
                            _tournament)
from retrialq.oracle import enumerate_transitions_oracle
from retrialq.processes import class_arrival_rate
from retrialq.simulate import simulate
from retrialq.solver import direct_truncated_solve, solve_stationary

from util import exp_config, two_phase_config

BASELINE = "configs/baseline_s6.yaml"


def _verdict(num: int, label: str, ok: bool, detail: str = ""):
    status = "PASS" if ok else "FAIL"
    print(f"[criterion {num:2d}] {status}: {label}" + (f" ({detail})" if detail else ""))
    assert ok, f"criterion {num} failed: {label} {detail}"


# ---------------------------------------------------------------- caches

_solve_cache = {}


def _cached_report(cfg, key):
    if key not in _solve_cache:
        _solve_cache[key] = compute_report(cfg, solve_stationary(cfg))
    return _solve_cache[key]


@pytest.fixture(scope="module")
def baseline():
    return parse_config(BASELINE)


@pytest.fixture(scope="module")
def s3_variant(baseline):
    return patch_config(baseline, "model.S", 3)


# ---------------------------------------------------------- criterion 1


def test_criterion_01_generator_conservation():
    t0 = time.time()
    configs = [
        exp_config(S=1, K=1, K1=1, K2=1, M=1),
        exp_config(S=2, K=1, K1=0, K2=1, M=2),
        exp_config(S=3, K=2, K1=1, K2=2, M=1),
        two_phase_config(S=2, K=1, K1=1, K2=1, M=2),
        two_phase_config(S=3, K=2, K1=2, K2=3, M=1),
        two_phase_config(S=2, K=2, K1=1, K2=2, M=1),
    ]
    worst_row, worst_off = 0.0, 0.0
    for cfg in configs:
        q = assemble_truncated(cfg, cfg.M + 3)
        worst_row = max(worst_row, float(np.abs(np.asarray(q.sum(axis=1))).max()))
        off = q.tolil()
        off.setdiag(0.0)
        worst_off = min(worst_off, float(off.tocsr().min()))
    elapsed = time.time() - t0
    ok = worst_row < 1e-10 and worst_off >= -1e-12 and elapsed < 10
    _verdict(1, "generator rows conserve and off-diagonals are nonnegative",
             ok, f"max |row sum| {worst_row:.2e}, min offdiag {worst_off:.2e}, {elapsed:.1f}s")


# ---------------------------------------------------------- criterion 2


def test_criterion_02_construction_oracle():
    t0 = time.time()
    worst = 0.0
    for cfg in (exp_config(S=1, K=1, K1=1, K2=1, M=1), two_phase_config()):
        l_max = cfg.M + 3
        q = assemble_truncated(cfg, l_max)
        qo = enumerate_transitions_oracle(cfg, l_max)
        worst = max(worst, float(abs(q - qo).max()))
    elapsed = time.time() - t0
    ok = worst < 1e-12 and elapsed < 30
    _verdict(2, "assembled generator equals per-state enumeration",
             ok, f"max diff {worst:.2e}, {elapsed:.1f}s")


# ---------------------------------------------------------- criterion 3


def test_criterion_03_csfp_lumping():
    t0 = time.time()
    subgen = np.array([[-2.0, 0.5], [1.2, -3.0]])
    exit = -subgen.sum(axis=1)
    worst = 0.0
    for n in (2, 3):
        states_n = list(itertools.product(range(2), repeat=n))
        states_d = list(itertools.product(range(2), repeat=n - 1))
        qf = np.zeros((len(states_n), len(states_n)))
        lf = np.zeros((len(states_n), len(states_d)))
        for a, sa in enumerate(states_n):
            for pos in range(n):
                for to in range(2):
                    tgt = list(sa)
                    tgt[pos] = to
                    qf[a, states_n.index(tuple(tgt))] += subgen[sa[pos], to]
                lf[a, states_d.index(sa[:pos] + sa[pos + 1:])] += exit[sa[pos]]

        def agg(k, states):
            b = basis(k, 2)
            v = np.zeros((len(states), b.order))
            for a, sa in enumerate(states):
                v[a, b.index_of((sa.count(0), sa.count(1)))] = 1.0
            return v

        vn, vd = agg(n, states_n), agg(n - 1, states_d)
        worst = max(worst, float(np.abs(qf @ vn - vn @ build_A(n, subgen)).max()))
        worst = max(worst, float(np.abs(lf @ vd - vn @ build_L(n, exit)).max()))
    elapsed = time.time() - t0
    ok = worst < 1e-12 and elapsed < 5
    _verdict(3, "count-based constructions lump the labeled product space",
             ok, f"max diff {worst:.2e}, {elapsed:.1f}s")


# ---------------------------------------------------------- criterion 4


def test_criterion_04_solver_oracle():
    t0 = time.time()
    cfg = exp_config(S=2, K=1, K1=1, K2=1, M=2)
    zw = solve_stationary(cfg)
    zd = direct_truncated_solve(cfg, 200)
    l1 = sum(np.abs(zw.level(l) - zd.level(l)).sum()
             for l in range(min(zw.i_star, 30) + 1))
    elapsed = time.time() - t0
    ok = l1 < 1e-8 and elapsed < 60
    _verdict(4, "windowed solve matches 200-level truncated direct solve",
             ok, f"L1 distance {l1:.2e}, {elapsed:.1f}s")


# ---------------------------------------------------------- criterion 5


def test_criterion_05_ergodicity_boundary():
    t0 = time.time()
    s, mu = 3, 1.0

    def stable_at(lam):
        cfg = exp_config(S=s, K=1, K1=1, K2=0, M=1, lam_h=1e-8, lam_n=lam,
                         mu_n=mu, mu_h=mu, theta=1e3, abandon=0.0,
                         cat_rate=1e-8)
        return check_ergodicity(cfg).stable

    lo, hi = 0.5, 6.0
    assert stable_at(lo) and not stable_at(hi)
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if stable_at(mid):
            lo = mid
        else:
            hi = mid
    flip = 0.5 * (lo + hi)
    rel = abs(flip - s * mu) / (s * mu)
    elapsed = time.time() - t0
    ok = rel < 0.02 and elapsed < 60
    _verdict(5, "instant-retrial stability boundary sits at full service capacity",
             ok, f"flip at {flip:.4f} vs {s * mu}, rel err {rel:.3%}, {elapsed:.1f}s")


# ---------------------------------------------------------- criterion 6


def test_criterion_06_simulation_cross_validation(baseline):
    t0 = time.time()
    rep = _cached_report(baseline, "baseline")
    res = simulate(baseline, events=10_000_000, seed=20240513)
    lam_h = class_arrival_rate(baseline.arrivals_normal, "handoff")
    lam_hc = class_arrival_rate(baseline.arrivals_catastrophic, "handoff")
    lam_nc = class_arrival_rate(baseline.arrivals_catastrophic, "new")
    lam_e = class_arrival_rate(baseline.arrivals_catastrophic, "emergency")
    checks = {
        "p_drop_handoff": lam_h,
        "p_preempt_new": lam_h,
        "p_block_emergency": lam_e,
        "p_preempt_emergency": lam_e,
        "p_block_new_outage": lam_nc,
        "p_drop_handoff_outage": lam_hc,
    }
    misses = [name for name, rate in checks.items()
              if not res.consistent_with(name, getattr(rep, name), rate, 3.0)]
    lo, hi = res["e_orbit"].interval(3.0)
    if not lo <= rep.e_orbit <= hi:
        misses.append("e_orbit")
    elapsed = time.time() - t0
    ok = not misses and elapsed < 600
    _verdict(6, "ten-million-event simulation brackets the analytic measures",
             ok, f"misses {misses or 'none'}, {elapsed:.0f}s")


# ---------------------------------------------------------- criterion 7


def _increasing(xs):
    return all(b > a for a, b in zip(xs, xs[1:]))


def _decreasing(xs):
    return all(b < a for a, b in zip(xs, xs[1:]))


def _unimodal(xs):
    peak = xs.index(max(xs))
    return _increasing(xs[:peak + 1] or [0]) and _decreasing(xs[peak:])


def test_criterion_07_trend_reproduction(baseline, s3_variant):
    t0 = time.time()
    s3 = s3_variant

    def rep_at(key, *patches):
        if key not in _solve_cache:
            c = s3
            for path, val in patches:
                c = patch_config(c, path, val)
            _solve_cache[key] = compute_report(c, solve_stationary(c))
        return _solve_cache[key]

    def series(measure, patches_list, prefix):
        out = []
        for i, patches in enumerate(patches_list):
            r = rep_at((prefix, i), *patches)
            out.append(getattr(r, measure))
        return out

    failures = []

    lam_h_grid = [0.1, 0.3, 0.6, 1.0, 1.6, 2.4, 3.5, 5.0]
    lam_h_patches = [[("arrivals_normal.lambda_H", v)] for v in lam_h_grid]
    mu_h_patches = [[("service_handoff.mu", v)] for v in (0.5, 1.0, 2.0, 4.0)]
    k2_patches = [[("model.K2", v)] for v in (0, 1, 2, 3)]
    lam_e_patches = [[("arrivals_catastrophic.lambda_E", v)]
                     for v in (0.1, 0.5, 1.5, 4.0, 8.0)]
    mu_e_patches = [[("service_emergency.mu", v)] for v in (0.3, 1.0, 3.0, 9.0)]
    k_patches = [[("model.K1", 0), ("model.K", v), ("model.K1", 1)]
                 for v in (1, 2, 3)]
    k1_patches = [[("model.K1", v)] for v in (0, 1, 2)]
    # the emergency-preemption shape is probed with the full reservation
    # K1 = K, where preemption is the dominant overflow route
    res_patches = lambda extra: [[("model.K1", 2)] + p for p in extra]

    # (a) handoff drop
    if not _increasing(series("p_drop_handoff", lam_h_patches, "lamH")):
        failures.append("P_dn not increasing in lambda_H")
    if not _decreasing(series("p_drop_handoff", mu_h_patches, "muH")):
        failures.append("P_dn not decreasing in mu_H")
    if not _decreasing(series("p_drop_handoff", k2_patches, "K2")):
        failures.append("P_dn not decreasing in K2")
    s_values = []
    for s in (3, 4, 5):
        key = ("S", s)
        if key not in _solve_cache:
            c = patch_config(baseline, "model.S", s)
            _solve_cache[key] = compute_report(c, solve_stationary(c))
        s_values.append(_solve_cache[key].p_drop_handoff)
    if not _decreasing(s_values):
        failures.append("P_dn not decreasing in S")

    # (b) new-call preemption by handoffs
    ppn_lam = series("p_preempt_new", lam_h_patches, "lamH")
    if not (_unimodal(ppn_lam) and ppn_lam.index(max(ppn_lam)) not in (0, len(ppn_lam) - 1)):
        failures.append("P_preempt_new not unimodal in lambda_H")
    if not _decreasing(series("p_preempt_new", mu_h_patches, "muH")):
        failures.append("P_preempt_new not decreasing in mu_H")

    # (c) emergency blocking
    if not _increasing(series("p_block_emergency", lam_e_patches, "lamE")):
        failures.append("P_e not increasing in lambda_E")
    if not _decreasing(series("p_block_emergency", mu_e_patches, "muE")):
        failures.append("P_e not decreasing in mu_E")
    if not _decreasing(series("p_block_emergency", k_patches, "K")):
        failures.append("P_e not decreasing in K")
    if not _decreasing(series("p_block_emergency", k1_patches, "K1")):
        failures.append("P_e not decreasing in K1")

    # (d) new-call blocking during outage
    if not _increasing(series("p_block_new_outage", lam_e_patches, "lamE")):
        failures.append("P_bc not increasing in lambda_E")
    if not _decreasing(series("p_block_new_outage", mu_e_patches, "muE")):
        failures.append("P_bc not decreasing in mu_E")
    if not _decreasing(series("p_block_new_outage", k_patches, "K")):
        failures.append("P_bc not decreasing in K")

    # (e) emergency preemption of backup calls
    lam_e_res = res_patches([[("arrivals_catastrophic.lambda_E", v)]
                             for v in (0.05, 0.3, 1.0, 3.0, 8.0)])
    ppe_lam = series("p_preempt_emergency", lam_e_res, "lamE_res")
    if not (_unimodal(ppe_lam) and ppe_lam.index(max(ppe_lam)) not in (0, len(ppe_lam) - 1)):
        failures.append("P_preempt_emr not unimodal in lambda_E")
    if not _decreasing(series("p_preempt_emergency",
                              res_patches(mu_e_patches), "muE_res")):
        failures.append("P_preempt_emr not decreasing in mu_E")
    k_res = [[("model.K1", 0), ("model.K", v), ("model.K1", 2)] for v in (2, 3)]
    if not _decreasing(series("p_preempt_emergency", k_res, "K_res")):
        failures.append("P_preempt_emr not decreasing in K")
    if not _increasing(series("p_preempt_emergency", k1_patches, "K1")):
        failures.append("P_preempt_emr not increasing in K1")

    elapsed = time.time() - t0
    ok = not failures and elapsed < 900
    _verdict(7, "all five experiment families reproduce their trends",
             ok, f"failures {failures or 'none'}, {elapsed:.0f}s")


# ---------------------------------------------------------- criterion 8


class _Pt:
    def __init__(self, objs, violation=0.0):
        self.objs = objs
        self.violation = violation
        self.rank = 0
        self.crowding = 0.0

    @property
    def feasible(self):
        return self.violation == 0.0

    @property
    def objectives(self):
        return self.objs


def test_criterion_08_nsga2_machinery():
    t0 = time.time()
    rng = random.Random(2024)
    pop = [_Pt((rng.randint(0, 9), rng.randint(0, 9)),
               rng.choice([0.0, 0.0, rng.random()])) for _ in range(200)]
    fast = non_dominated_sort(pop)
    remaining, slow = list(pop), []
    while remaining:
        front = [p for p in remaining
                 if not any(dominates(q, p) for q in remaining if q is not p)]
        slow.append(front)
        remaining = [p for p in remaining if p not in front]
    sort_ok = (len(fast) == len(slow)
               and all({id(p) for p in a} == {id(p) for p in b}
                       for a, b in zip(fast, slow)))

    # constrained biobjective benchmark: minimize (x1, x2), x1 + x2 >= 1
    def make(x1, x2):
        x1 = min(max(x1, 0.0), 1.0)
        x2 = min(max(x2, 0.0), 1.0)
        return _Pt((x1, x2), max(0.0, 1.0 - x1 - x2))

    pop = [make(rng.random(), rng.random()) for _ in range(48)]
    for _ in range(60):
        fronts = non_dominated_sort(pop)
        for f in fronts:
            crowding_distance(f)
        kids = []
        while len(kids) < 48:
            p1, p2 = _tournament(rng, pop), _tournament(rng, pop)
            a1, a2 = _sbx(rng, p1.objs[0], p2.objs[0], 15)
            b1, b2 = _sbx(rng, p1.objs[1], p2.objs[1], 15)
            for x1, x2 in ((a1, b1), (a2, b2)):
                if rng.random() < 0.3:
                    x1 = _poly_mutate(rng, x1, 0.0, 1.0, 20)
                if rng.random() < 0.3:
                    x2 = _poly_mutate(rng, x2, 0.0, 1.0, 20)
                kids.append(make(x1, x2))
        merged = pop + kids[:48]
        fronts = non_dominated_sort(merged)
        nxt = []
        for f in fronts:
            crowding_distance(f)
            if len(nxt) + len(f) <= 48:
                nxt.extend(f)
            else:
                f.sort(key=lambda c: -c.crowding)
                nxt.extend(f[:48 - len(nxt)])
                break
        pop = nxt
    ref = (2.0, 2.0)
    hv_ref = hypervolume([(i / 2000, 1.0 - i / 2000) for i in range(2001)], ref)
    hv = hypervolume([p.objs for p in pop if p.feasible], ref)
    hv_rel = abs(hv - hv_ref) / hv_ref
    elapsed = time.time() - t0
    ok = sort_ok and hv_rel < 0.01 and elapsed < 120
    _verdict(8, "sorting matches brute force and the benchmark front "
                "reaches the reference hypervolume",
             ok, f"hv rel err {hv_rel:.3%}, {elapsed:.0f}s")


# ---------------------------------------------------------- criterion 9


def test_criterion_09_reported_optimum_diagnostic(s3_variant):
    t0 = time.time()
    c = patch_config(s3_variant, "model.K1", 0)
    c = patch_config(c, "model.K", 2)
    c = patch_config(c, "model.K1", 1)
    c = patch_config(c, "arrivals_catastrophic.lambda_E", 10.2141)
    c = patch_config(c, "service_emergency.mu", 12.1111)
    rep = compute_report(c, solve_stationary(c))
    vals = (rep.p_block_emergency, rep.p_block_new_outage,
            rep.p_preempt_emergency)
    elapsed = time.time() - t0
    ok = all(v <= 1e-3 for v in vals) and elapsed < 120
    _verdict(9, "reference three-channel design point satisfies the "
                "1e-3 loss targets under this solver",
             ok, f"losses {tuple(f'{v:.2e}' for v in vals)}, {elapsed:.0f}s")


# --------------------------------------------------------- criterion 10


def test_criterion_10_determinism(tmp_path, capsys):
    cfg = exp_config(S=2, K=2, K1=1, K2=1, M=1, cat_rate=0.02,
                     nsga2={"population": 8, "generations": 2, "seed": 1,
                            "lambda_e_bounds": [0.05, 2.0],
                            "mu_e_bounds": [0.5, 8.0]})
    yml = tmp_path / "model.yaml"
    dump_config(cfg, str(yml))
    y = str(yml)

    runs = {
        "validate": ["validate", y],
        "stability": ["stability", y],
        "solve": ["solve", y, "--dump-dist", "{d}/dist.csv"],
        "measures": ["measures", y, "--out", "{d}/measures.csv"],
        "sweep": ["sweep", y, "--param", "catastrophe.scale",
                  "--values", "0.5,1.0", "--out", "{d}/sweep.csv"],
        "simulate": ["simulate", y, "--events", "30000", "--out", "{d}/sim.csv"],
        "optimize": ["optimize", y, "--out", "{d}/front.csv"],
    }
    mismatches = []
    for name, argv in runs.items():
        outputs = []
        for tag in ("a", "b"):
            d = tmp_path / f"{name}_{tag}"
            d.mkdir()
            args = [a.format(d=d) for a in argv]
            rc = cli_main(args)
            assert rc == 0, f"{name} exited {rc}"
            # the dump path is echoed back; normalize it before comparing
            stdout = capsys.readouterr().out.replace(str(d), "OUTDIR")
            files = {f.name: f.read_bytes() for f in sorted(d.iterdir())}
            outputs.append((stdout, files))
        if outputs[0] != outputs[1]:
            mismatches.append(name)
    ok = not mismatches
    _verdict(10, "every subcommand is byte-identical across repeated runs",
             ok, f"mismatches {mismatches or 'none'}")
