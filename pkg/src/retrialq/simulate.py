"""Discrete-event simulation of the full model.

Serves as a behavioral oracle for the analytic pipeline: calls are
exchangeable, so only per-phase counts are tracked, and every transition
is an exponential clock race identical to the generator's event catalog.
The orbit follows the same tracking-cap semantics as the analytic chain:
at most M retrial clocks run, an absorbed clock at a deeper orbit is
replaced by a freshly drawn one, and the per-clock rates honor the
configured per-level multipliers.

Estimates are batch means of event-count fluxes divided by the analytic
class arrival rates, matching the stationary measure definitions exactly.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .config import ModelConfig
from .processes import class_arrival_rate


@dataclass
class SimEstimate:
    mean: float
    se: float

    def interval(self, sigmas: float = 3.0) -> tuple[float, float]:
        return self.mean - sigmas * self.se, self.mean + sigmas * self.se


@dataclass
class SimResult:
    estimates: dict[str, SimEstimate]
    counts: dict[str, int]
    total_time: float
    events: int
    seed: int

    def __getitem__(self, key: str) -> SimEstimate:
        return self.estimates[key]

    def items(self):
        return self.estimates.items()

    def consistent_with(self, name: str, value: float, rate: float,
                        sigmas: float = 3.0) -> bool:
        """Check an analytic flux ratio against the simulation.

        Uses the batch-means interval when the event was observed, and a
        Poisson count comparison otherwise, so rare events with zero or
        few occurrences are judged on the expected count rather than on a
        degenerate standard error.
        """
        est = self.estimates[name]
        lo, hi = est.interval(sigmas)
        if lo <= value <= hi:
            return True
        key = _COUNT_FOR_MEASURE.get(name)
        if key is None:
            return False
        observed = self.counts[key]
        expected = value * rate * self.total_time
        spread = math.sqrt(max(observed, expected, 1.0))
        return abs(observed - expected) <= sigmas * spread


_COUNT_FOR_MEASURE = {
    "p_drop_handoff": "drop_h",
    "p_preempt_new": "preempt_new",
    "p_drop_handoff_outage": "drop_h_out",
    "p_block_new_outage": "block_n_out",
    "p_block_emergency": "block_e",
    "p_preempt_emergency": "preempt_e",
}


_COUNT_KEYS = ("drop_h", "preempt_new", "drop_h_out", "block_n_out",
               "block_e", "preempt_e", "retry_success")


def _draw(rng, weights):
    u = rng.random()
    acc = 0.0
    for i, w in enumerate(weights):
        acc += w
        if u < acc:
            return i
    return len(weights) - 1


def _pick_count(rng, counts, total):
    u = rng.random() * total
    acc = 0.0
    for i, c in enumerate(counts):
        acc += c
        if u < acc:
            return i
    return len(counts) - 1


def simulate(cfg: ModelConfig, events: int = 1_000_000, seed: int = 20240513,
             batches: int = 40) -> SimResult:
    rng = random.Random(seed)
    an, ac, cat = cfg.arrivals_normal, cfg.arrivals_catastrophic, cfg.catastrophe
    c0n, chn, cnn = an.c0.tolist(), an.class_mats["handoff"].tolist(), an.class_mats["new"].tolist()
    c0c, chc = ac.c0.tolist(), ac.class_mats["handoff"].tolist()
    cnc, cec = ac.class_mats["new"].tolist(), ac.class_mats["emergency"].tolist()
    d0, d1 = cat.d0.tolist(), cat.d1.tolist()
    bh, bn, be, rep, rt = (cfg.service_handoff, cfg.service_new,
                           cfg.service_emergency, cfg.repair, cfg.retrial)
    bh_i, bh_a, bh_e = bh.init.tolist(), bh.subgen.tolist(), bh.exit.tolist()
    bn_i, bn_a, bn_e = bn.init.tolist(), bn.subgen.tolist(), bn.exit.tolist()
    be_i, be_a, be_e = be.init.tolist(), be.subgen.tolist(), be.exit.tolist()
    rp_i, rp_a, rp_e = rep.init.tolist(), rep.subgen.tolist(), rep.exit.tolist()
    g_i, g_a = rt.base.init.tolist(), rt.base.subgen.tolist()
    g_ab, g_rt = rt.exit_abandon.tolist(), rt.exit_retry.tolist()
    mh, mn, me, mr, no = bh.order, bn.order, be.order, rep.order, rt.order
    S, K, K1, K2, M = cfg.S, cfg.K, cfg.K1, cfg.K2, cfg.M
    scale = cfg.backup_rate_scale
    lvl_mult = [r / rt.theta for r in rt.level_rates]

    # state
    v1 = v2 = 0
    h = [0] * mh
    n = [0] * mn
    o = [0] * no
    l_orbit = 0
    regime_j = 0            # 0: all channels up; 1..S: channels under repair
    r_cnt = [0] * mr
    hb, nb, eb = [0] * mh, [0] * mn, [0] * me

    lam_h = class_arrival_rate(an, "handoff")
    lam_hc = class_arrival_rate(ac, "handoff")
    lam_nc = class_arrival_rate(ac, "new")
    lam_e = class_arrival_rate(ac, "emergency")

    batch_rows = []
    counts = dict.fromkeys(_COUNT_KEYS, 0)
    t_batch = 0.0
    orbit_area = 0.0
    repair_time = 0.0
    per_batch = max(events // batches, 1)

    def orbit_add():
        nonlocal l_orbit
        l_orbit += 1
        if sum(o) < M:
            o[_draw(rng, g_i)] += 1

    def orbit_remove(i):
        """Tracked clock i absorbed and the call leaves the orbit."""
        nonlocal l_orbit
        o[i] -= 1
        l_orbit -= 1
        if l_orbit >= M:
            o[_draw(rng, g_i)] += 1

    def enter_outage(j):
        nonlocal regime_j, l_orbit
        regime_j = j
        for a in (h, n, o, hb, nb, eb):
            for i in range(len(a)):
                a[i] = 0
        l_orbit = 0
        for i in range(mr):
            r_cnt[i] = 0
        for _ in range(j):
            r_cnt[_draw(rng, rp_i)] += 1

    ev = 0
    while ev < events:
        moves = []
        rates = []
        if regime_j == 0:
            k1, k2 = sum(h), sum(n)
            full = k1 + k2 == S
            row0, rowh, rown = c0n[v1], chn[v1], cnn[v1]
            for w in range(an.order):
                if w != v1 and row0[w]:
                    moves.append(("bg1", w)); rates.append(row0[w])
                if rowh[w]:
                    moves.append(("arr_h", w)); rates.append(rowh[w])
                if rown[w]:
                    moves.append(("arr_n", w)); rates.append(rown[w])
            for w in range(cat.order):
                if w != v2 and d0[v2][w]:
                    moves.append(("bg2", w)); rates.append(d0[v2][w])
                if d1[v2][w]:
                    moves.append(("cat", w)); rates.append(d1[v2][w])
            for i in range(mh):
                if h[i] == 0:
                    continue
                for j in range(mh):
                    if j != i and bh_a[i][j]:
                        moves.append(("mv_h", i, j)); rates.append(h[i] * bh_a[i][j])
                if bh_e[i]:
                    moves.append(("done_h", i)); rates.append(h[i] * bh_e[i])
            for i in range(mn):
                if n[i] == 0:
                    continue
                for j in range(mn):
                    if j != i and bn_a[i][j]:
                        moves.append(("mv_n", i, j)); rates.append(n[i] * bn_a[i][j])
                if bn_e[i]:
                    moves.append(("done_n", i)); rates.append(n[i] * bn_e[i])
            mult = lvl_mult[min(l_orbit, M)]
            for i in range(no):
                if o[i] == 0:
                    continue
                for j in range(no):
                    if j != i and g_a[i][j]:
                        moves.append(("mv_o", i, j)); rates.append(mult * o[i] * g_a[i][j])
                if g_ab[i]:
                    moves.append(("abandon", i)); rates.append(mult * o[i] * g_ab[i])
                if g_rt[i]:
                    moves.append(("retry", i)); rates.append(mult * o[i] * g_rt[i])
        else:
            j_rep = regime_j
            t_busy = sum(hb) + sum(nb) + sum(eb)
            row0, rowh = c0c[v1], chc[v1]
            rown, rowe = cnc[v1], cec[v1]
            for w in range(ac.order):
                if w != v1 and row0[w]:
                    moves.append(("bg1", w)); rates.append(row0[w])
                if rowh[w]:
                    moves.append(("carr_h", w)); rates.append(rowh[w])
                if rown[w]:
                    moves.append(("carr_n", w)); rates.append(rown[w])
                if rowe[w]:
                    moves.append(("carr_e", w)); rates.append(rowe[w])
            for w in range(cat.order):
                q = d0[v2][w] + d1[v2][w]
                if w != v2 and q:
                    moves.append(("bg2", w)); rates.append(q)
            for i in range(mr):
                if r_cnt[i] == 0:
                    continue
                for j in range(mr):
                    if j != i and rp_a[i][j]:
                        moves.append(("mv_r", i, j)); rates.append(r_cnt[i] * rp_a[i][j])
                if rp_e[i]:
                    moves.append(("done_r", i)); rates.append(r_cnt[i] * rp_e[i])
            if j_rep == S:
                for i in range(mh):
                    if hb[i] == 0:
                        continue
                    for j in range(mh):
                        if j != i and bh_a[i][j]:
                            moves.append(("bmv_h", i, j)); rates.append(scale * hb[i] * bh_a[i][j])
                    if bh_e[i]:
                        moves.append(("bdone_h", i)); rates.append(scale * hb[i] * bh_e[i])
                for i in range(mn):
                    if nb[i] == 0:
                        continue
                    for j in range(mn):
                        if j != i and bn_a[i][j]:
                            moves.append(("bmv_n", i, j)); rates.append(scale * nb[i] * bn_a[i][j])
                    if bn_e[i]:
                        moves.append(("bdone_n", i)); rates.append(scale * nb[i] * bn_e[i])
                for i in range(me):
                    if eb[i] == 0:
                        continue
                    for j in range(me):
                        if j != i and be_a[i][j]:
                            moves.append(("bmv_e", i, j)); rates.append(scale * eb[i] * be_a[i][j])
                    if be_e[i]:
                        moves.append(("bdone_e", i)); rates.append(scale * eb[i] * be_e[i])

        total = math.fsum(rates)
        dt = rng.expovariate(total)
        t_batch += dt
        orbit_area += l_orbit * dt
        if regime_j:
            repair_time += dt

        u = rng.random() * total
        acc = 0.0
        idx = len(moves) - 1
        for i, rr in enumerate(rates):
            acc += rr
            if u < acc:
                idx = i
                break
        mv = moves[idx]
        tag = mv[0]

        if tag == "bg1":
            v1 = mv[1]
        elif tag == "bg2":
            v2 = mv[1]
        elif tag == "arr_h":
            v1 = mv[1]
            if sum(h) + sum(n) < S:
                h[_draw(rng, bh_i)] += 1
            elif sum(h) < K2 and sum(n) >= 1:
                n[_pick_count(rng, n, sum(n))] -= 1
                h[_draw(rng, bh_i)] += 1
                orbit_add()
                counts["preempt_new"] += 1
            else:
                counts["drop_h"] += 1
        elif tag == "arr_n":
            v1 = mv[1]
            if sum(h) + sum(n) < S:
                n[_draw(rng, bn_i)] += 1
            else:
                orbit_add()
        elif tag == "cat":
            v2 = mv[1]
            j = sum(h) + sum(n)
            if j >= 1:
                enter_outage(j)
            else:
                l_orbit = 0
                for i in range(no):
                    o[i] = 0
        elif tag == "mv_h":
            h[mv[1]] -= 1; h[mv[2]] += 1
        elif tag == "mv_n":
            n[mv[1]] -= 1; n[mv[2]] += 1
        elif tag == "mv_o":
            o[mv[1]] -= 1; o[mv[2]] += 1
        elif tag == "done_h":
            h[mv[1]] -= 1
        elif tag == "done_n":
            n[mv[1]] -= 1
        elif tag == "abandon":
            orbit_remove(mv[1])
        elif tag == "retry":
            if sum(h) + sum(n) < S:
                orbit_remove(mv[1])
                n[_draw(rng, bn_i)] += 1
                counts["retry_success"] += 1
            else:
                o[mv[1]] -= 1
                o[_draw(rng, g_i)] += 1
        elif tag == "mv_r":
            r_cnt[mv[1]] -= 1; r_cnt[mv[2]] += 1
        elif tag == "done_r":
            r_cnt[mv[1]] -= 1
            if regime_j == S:
                for a in (hb, nb, eb):
                    for i in range(len(a)):
                        a[i] = 0
            regime_j -= 1
            if regime_j == 0:
                pass  # channels back up, system empty
        elif tag == "carr_h":
            v1 = mv[1]
            if regime_j == S and sum(hb) + sum(nb) + sum(eb) < K:
                hb[_draw(rng, bh_i)] += 1
            elif regime_j == S:
                counts["drop_h_out"] += 1
        elif tag == "carr_n":
            v1 = mv[1]
            if regime_j == S and sum(hb) + sum(nb) + sum(eb) < K:
                nb[_draw(rng, bn_i)] += 1
            elif regime_j == S:
                counts["block_n_out"] += 1
        elif tag == "carr_e":
            v1 = mv[1]
            if regime_j != S:
                pass
            elif sum(hb) + sum(nb) + sum(eb) < K:
                eb[_draw(rng, be_i)] += 1
            elif sum(eb) < K1 and sum(nb) >= 1:
                nb[_pick_count(rng, nb, sum(nb))] -= 1
                eb[_draw(rng, be_i)] += 1
                counts["preempt_e"] += 1
            elif sum(eb) < K1 and sum(hb) >= 1:
                hb[_pick_count(rng, hb, sum(hb))] -= 1
                eb[_draw(rng, be_i)] += 1
                counts["preempt_e"] += 1
            else:
                counts["block_e"] += 1
        elif tag == "bmv_h":
            hb[mv[1]] -= 1; hb[mv[2]] += 1
        elif tag == "bmv_n":
            nb[mv[1]] -= 1; nb[mv[2]] += 1
        elif tag == "bmv_e":
            eb[mv[1]] -= 1; eb[mv[2]] += 1
        elif tag == "bdone_h":
            hb[mv[1]] -= 1
        elif tag == "bdone_n":
            nb[mv[1]] -= 1
        elif tag == "bdone_e":
            eb[mv[1]] -= 1

        ev += 1
        if ev % per_batch == 0:
            batch_rows.append({
                "duration": t_batch,
                "orbit_area": orbit_area,
                "repair_time": repair_time,
                **counts,
            })
            counts = dict.fromkeys(_COUNT_KEYS, 0)
            t_batch = orbit_area = repair_time = 0.0

    def batch_stat(fn) -> SimEstimate:
        vals = [fn(b) for b in batch_rows]
        nb = len(vals)
        mean = math.fsum(vals) / nb
        var = math.fsum((v - mean) ** 2 for v in vals) / max(nb - 1, 1)
        return SimEstimate(mean=mean, se=math.sqrt(var / nb))

    grand_time = math.fsum(b["duration"] for b in batch_rows)
    grand_counts = {k: sum(b[k] for b in batch_rows) for k in _COUNT_KEYS}
    estimates = {
        "e_orbit": batch_stat(lambda b: b["orbit_area"] / b["duration"]),
        "p_repair": batch_stat(lambda b: b["repair_time"] / b["duration"]),
        "p_drop_handoff": batch_stat(lambda b: b["drop_h"] / (lam_h * b["duration"])),
        "p_preempt_new": batch_stat(lambda b: b["preempt_new"] / (lam_h * b["duration"])),
        "p_drop_handoff_outage": batch_stat(lambda b: b["drop_h_out"] / (lam_hc * b["duration"])),
        "p_block_new_outage": batch_stat(lambda b: b["block_n_out"] / (lam_nc * b["duration"])),
        "p_block_emergency": batch_stat(lambda b: b["block_e"] / (lam_e * b["duration"])),
        "p_preempt_emergency": batch_stat(lambda b: b["preempt_e"] / (lam_e * b["duration"])),
        "retrial_success_rate": batch_stat(lambda b: b["retry_success"] / b["duration"]),
    }
    return SimResult(estimates=estimates, counts=grand_counts,
                     total_time=grand_time, events=events, seed=seed)
