"""Direct per-state transition enumeration for small models.

Builds the same truncated generator as generator.assemble_truncated but
without any Kronecker algebra: every state is decoded into its arrival
phase, disaster phase and clock count vectors, and every event rule is
applied clock-by-clock.  Used purely as a cross-check oracle, so clarity
beats speed and the state count is capped.
"""
from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp

from .config import ModelConfig
from .csfp import basis
from .layout import layout

MAX_STATES = 200_000


def _multinomial_rows(j: int, alpha: np.ndarray):
    """Probability of each occupancy vector when j clocks start fresh."""
    b = basis(j, alpha.shape[0])
    out = []
    for v in b.vectors:
        p = math.factorial(j)
        for c, a in zip(v, alpha):
            p /= math.factorial(c)
            p *= a ** c
        out.append(p)
    return b, np.array(out)


def enumerate_transitions_oracle(cfg: ModelConfig, l_max: int) -> sp.csr_matrix:
    if l_max <= cfg.M:
        raise ValueError(f"l_max must exceed M={cfg.M}")
    lays = [layout(cfg, l) for l in range(l_max + 1)]
    dims = [la.dim for la in lays]
    offs = np.concatenate([[0], np.cumsum(dims)]).astype(int)
    total = int(offs[-1])
    if total > MAX_STATES:
        raise ValueError(f"{total} states exceeds oracle cap {MAX_STATES}")

    an, ac, cat = cfg.arrivals_normal, cfg.arrivals_catastrophic, cfg.catastrophe
    c0n, chn, cnn = an.c0, an.class_mats["handoff"], an.class_mats["new"]
    c0c, chc, cnc, cec = (ac.c0, ac.class_mats["handoff"],
                          ac.class_mats["new"], ac.class_mats["emergency"])
    d0, d1 = cat.d0, cat.d1
    bh, bn, be, rep, rt = (cfg.service_handoff, cfg.service_new,
                           cfg.service_emergency, cfg.repair, cfg.retrial)
    gamma, gam_m = rt.base.init, rt.base.subgen
    scale = cfg.backup_rate_scale
    rows, cols, data = [], [], []

    def emit(src: int, rate: float, level: int, key, phases):
        if rate == 0.0:
            return
        la = lays[level]
        st = la.stratum(*key)
        idx = []
        for d, comp in zip(st.dims, phases):
            if isinstance(comp, tuple):
                n = sum(comp)
                idx.append(basis(n, len(comp)).index_of(comp))
            else:
                idx.append(comp)
        dst = offs[level] + la.flatten(st, tuple(idx))
        rows.append(src)
        cols.append(dst)
        data.append(rate)

    def bump(vec, i, d):
        v = list(vec)
        v[i] += d
        return tuple(v)

    for l in range(l_max + 1):
        la = lays[l]
        r = la.orbit_tracked
        up_level = min(l + 1, l_max)
        frozen_up = l >= cfg.M
        frozen_dn = l > cfg.M
        for local in range(la.dim):
            src = int(offs[l]) + local
            st, idx = la.locate(local)
            if st.kind == "normal":
                v1, v2 = idx[0], idx[1]
                h = basis(st.k1, bh.order).vector_of(idx[2])
                nn = basis(st.k2, bn.order).vector_of(idx[3])
                o = basis(r, rt.order).vector_of(idx[4])
                k1, k2 = st.k1, st.k2
                full = k1 + k2 == cfg.S
                key = ("normal", k1, k2)
                # modulating chain background (diagonal included verbatim)
                for w in range(an.order):
                    emit(src, c0n[v1, w], l, key, (w, v2, h, nn, o))
                for w in range(cat.order):
                    emit(src, d0[v2, w], l, key, (v1, w, h, nn, o))
                # per-clock phase motion, absorption intensity on the diagonal
                for group, mat, vec in (("h", bh.subgen, h), ("n", bn.subgen, nn),
                                        ("o", gam_m, o)):
                    diag = sum(vec[i] * mat[i, i] for i in range(len(vec)))
                    emit(src, diag, l, key, (v1, v2, h, nn, o))
                    for i in range(len(vec)):
                        if vec[i] == 0:
                            continue
                        for jj in range(len(vec)):
                            if jj == i or mat[i, jj] == 0.0:
                                continue
                            rate = vec[i] * mat[i, jj]
                            if group == "h":
                                emit(src, rate, l, key, (v1, v2, bump(bump(h, i, -1), jj, 1), nn, o))
                            elif group == "n":
                                emit(src, rate, l, key, (v1, v2, h, bump(bump(nn, i, -1), jj, 1), o))
                            else:
                                emit(src, rate, l, key, (v1, v2, h, nn, bump(bump(o, i, -1), jj, 1)))
                # service completions
                for i in range(bh.order):
                    if h[i] and bh.exit[i]:
                        emit(src, h[i] * bh.exit[i], l, ("normal", k1 - 1, k2),
                             (v1, v2, bump(h, i, -1), nn, o))
                for i in range(bn.order):
                    if nn[i] and bn.exit[i]:
                        emit(src, nn[i] * bn.exit[i], l, ("normal", k1, k2 - 1),
                             (v1, v2, h, bump(nn, i, -1), o))
                # handoff arrivals
                for w in range(an.order):
                    q = chn[v1, w]
                    if q == 0.0:
                        continue
                    if not full:
                        for p in range(bh.order):
                            if bh.init[p]:
                                emit(src, q * bh.init[p], l, ("normal", k1 + 1, k2),
                                     (w, v2, bump(h, p, 1), nn, o))
                    elif k1 < cfg.K2 and k2 >= 1:
                        for i in range(bn.order):
                            if nn[i] == 0:
                                continue
                            pick = nn[i] / k2
                            for p in range(bh.order):
                                if bh.init[p] == 0.0:
                                    continue
                                base = q * pick * bh.init[p]
                                tgt_key = ("normal", k1 + 1, k2 - 1)
                                if frozen_up:
                                    emit(src, base, up_level, tgt_key,
                                         (w, v2, bump(h, p, 1), bump(nn, i, -1), o))
                                else:
                                    for op in range(rt.order):
                                        if gamma[op]:
                                            emit(src, base * gamma[op], up_level, tgt_key,
                                                 (w, v2, bump(h, p, 1), bump(nn, i, -1), bump(o, op, 1)))
                    else:
                        emit(src, q, l, key, (w, v2, h, nn, o))
                # new arrivals
                for w in range(an.order):
                    q = cnn[v1, w]
                    if q == 0.0:
                        continue
                    if not full:
                        for p in range(bn.order):
                            if bn.init[p]:
                                emit(src, q * bn.init[p], l, ("normal", k1, k2 + 1),
                                     (w, v2, h, bump(nn, p, 1), o))
                    elif frozen_up:
                        emit(src, q, up_level, key, (w, v2, h, nn, o))
                    else:
                        for op in range(rt.order):
                            if gamma[op]:
                                emit(src, q * gamma[op], up_level, key,
                                     (w, v2, h, nn, bump(o, op, 1)))
                # retrial clock absorptions
                if l >= 1:
                    for i in range(rt.order):
                        if o[i] == 0:
                            continue
                        ab, ret = o[i] * rt.exit_abandon[i], o[i] * rt.exit_retry[i]
                        if frozen_dn:
                            # untracked calls backfill the absorbed clock
                            if ab:
                                for op in range(rt.order):
                                    if gamma[op]:
                                        emit(src, ab * gamma[op], l - 1, key,
                                             (v1, v2, h, nn, bump(bump(o, i, -1), op, 1)))
                        else:
                            if ab:
                                emit(src, ab, l - 1, key, (v1, v2, h, nn, bump(o, i, -1)))
                        if ret == 0.0:
                            continue
                        if not full:
                            for p in range(bn.order):
                                if bn.init[p] == 0.0:
                                    continue
                                if frozen_dn:
                                    for op in range(rt.order):
                                        if gamma[op]:
                                            emit(src, ret * bn.init[p] * gamma[op], l - 1,
                                                 ("normal", k1, k2 + 1),
                                                 (v1, v2, h, bump(nn, p, 1), bump(bump(o, i, -1), op, 1)))
                                else:
                                    emit(src, ret * bn.init[p], l - 1, ("normal", k1, k2 + 1),
                                         (v1, v2, h, bump(nn, p, 1), bump(o, i, -1)))
                        else:
                            # failed retry: the clock restarts from scratch
                            for op in range(rt.order):
                                if gamma[op]:
                                    emit(src, ret * gamma[op], l, key,
                                         (v1, v2, h, nn, bump(bump(o, i, -1), op, 1)))
                # disasters
                j = k1 + k2
                for w in range(cat.order):
                    q = d1[v2, w]
                    if q == 0.0:
                        continue
                    if j == 0:
                        emit(src, q, 0, ("normal", 0, 0),
                             (v1, w, (0,) * bh.order, (0,) * bn.order, (0,) * rt.order))
                    else:
                        b, probs = _multinomial_rows(j, rep.init)
                        for u, p in zip(b.vectors, probs):
                            if p == 0.0:
                                continue
                            if j < cfg.S:
                                emit(src, q * p, 0, ("repair", j), (v1, w, u))
                            else:
                                emit(src, q * p, 0, ("backup", 0, 0, 0),
                                     (v1, w, (0,) * bh.order, (0,) * bn.order,
                                      (0,) * be.order, u))
            elif st.kind == "repair":
                v1, v2 = idx[0], idx[1]
                u = basis(st.j, rep.order).vector_of(idx[2])
                key = ("repair", st.j)
                for mat in (c0c, chc, cnc, cec):
                    for w in range(ac.order):
                        emit(src, mat[v1, w], 0, key, (w, v2, u))
                for w in range(cat.order):
                    emit(src, d0[v2, w] + d1[v2, w], 0, key, (v1, w, u))
                diag = sum(u[i] * rep.subgen[i, i] for i in range(rep.order))
                emit(src, diag, 0, key, (v1, v2, u))
                for i in range(rep.order):
                    if u[i] == 0:
                        continue
                    for jj in range(rep.order):
                        if jj != i and rep.subgen[i, jj]:
                            emit(src, u[i] * rep.subgen[i, jj], 0, key,
                                 (v1, v2, bump(bump(u, i, -1), jj, 1)))
                    if rep.exit[i]:
                        rate = u[i] * rep.exit[i]
                        if st.j >= 2:
                            emit(src, rate, 0, ("repair", st.j - 1),
                                 (v1, v2, bump(u, i, -1)))
                        else:
                            emit(src, rate, 0, ("normal", 0, 0),
                                 (v1, v2, (0,) * bh.order, (0,) * bn.order,
                                  (0,) * rt.order))
            else:  # backup
                v1, v2 = idx[0], idx[1]
                k1, k2, i_e = st.k1, st.k2, st.i
                h = basis(k1, bh.order).vector_of(idx[2])
                nn = basis(k2, bn.order).vector_of(idx[3])
                em = basis(i_e, be.order).vector_of(idx[4])
                u = basis(cfg.S, rep.order).vector_of(idx[5])
                t_busy = k1 + k2 + i_e
                key = ("backup", k1, k2, i_e)
                state = (v1, v2, h, nn, em, u)
                emit(src, c0c[v1, v1], 0, key, state)
                for w in range(ac.order):
                    if w != v1 and c0c[v1, w]:
                        emit(src, c0c[v1, w], 0, key, (w, v2, h, nn, em, u))
                for w in range(cat.order):
                    emit(src, d0[v2, w] + d1[v2, w], 0, key, (v1, w, h, nn, em, u))
                for tag, mat, vec in (("h", bh.subgen, h), ("n", bn.subgen, nn),
                                      ("e", be.subgen, em)):
                    diag = scale * sum(vec[q] * mat[q, q] for q in range(len(vec)))
                    emit(src, diag, 0, key, state)
                    for a in range(len(vec)):
                        if vec[a] == 0:
                            continue
                        for bb in range(len(vec)):
                            if bb == a or mat[a, bb] == 0.0:
                                continue
                            rate = scale * vec[a] * mat[a, bb]
                            moved = bump(bump(vec, a, -1), bb, 1)
                            if tag == "h":
                                emit(src, rate, 0, key, (v1, v2, moved, nn, em, u))
                            elif tag == "n":
                                emit(src, rate, 0, key, (v1, v2, h, moved, em, u))
                            else:
                                emit(src, rate, 0, key, (v1, v2, h, nn, moved, u))
                diag = sum(u[q] * rep.subgen[q, q] for q in range(rep.order))
                emit(src, diag, 0, key, state)
                for a in range(rep.order):
                    if u[a] == 0:
                        continue
                    for bb in range(rep.order):
                        if bb != a and rep.subgen[a, bb]:
                            emit(src, u[a] * rep.subgen[a, bb], 0, key,
                                 (v1, v2, h, nn, em, bump(bump(u, a, -1), bb, 1)))
                    if rep.exit[a]:
                        rate = u[a] * rep.exit[a]
                        if cfg.S >= 2:
                            emit(src, rate, 0, ("repair", cfg.S - 1),
                                 (v1, v2, bump(u, a, -1)))
                        else:
                            emit(src, rate, 0, ("normal", 0, 0),
                                 (v1, v2, (0,) * bh.order, (0,) * bn.order,
                                  (0,) * rt.order))
                # completions at the backups
                for a in range(bh.order):
                    if h[a] and bh.exit[a]:
                        emit(src, scale * h[a] * bh.exit[a], 0,
                             ("backup", k1 - 1, k2, i_e), (v1, v2, bump(h, a, -1), nn, em, u))
                for a in range(bn.order):
                    if nn[a] and bn.exit[a]:
                        emit(src, scale * nn[a] * bn.exit[a], 0,
                             ("backup", k1, k2 - 1, i_e), (v1, v2, h, bump(nn, a, -1), em, u))
                for a in range(be.order):
                    if em[a] and be.exit[a]:
                        emit(src, scale * em[a] * be.exit[a], 0,
                             ("backup", k1, k2, i_e - 1), (v1, v2, h, nn, bump(em, a, -1), u))
                # arrivals during the outage
                for w in range(ac.order):
                    qh, qn, qe = chc[v1, w], cnc[v1, w], cec[v1, w]
                    if t_busy < cfg.K:
                        for p in range(bh.order):
                            if bh.init[p] and qh:
                                emit(src, qh * bh.init[p], 0, ("backup", k1 + 1, k2, i_e),
                                     (w, v2, bump(h, p, 1), nn, em, u))
                        for p in range(bn.order):
                            if bn.init[p] and qn:
                                emit(src, qn * bn.init[p], 0, ("backup", k1, k2 + 1, i_e),
                                     (w, v2, h, bump(nn, p, 1), em, u))
                        for p in range(be.order):
                            if be.init[p] and qe:
                                emit(src, qe * be.init[p], 0, ("backup", k1, k2, i_e + 1),
                                     (w, v2, h, nn, bump(em, p, 1), u))
                    else:
                        if qh:
                            emit(src, qh, 0, key, (w, v2, h, nn, em, u))
                        if qn:
                            emit(src, qn, 0, key, (w, v2, h, nn, em, u))
                        if qe == 0.0:
                            continue
                        if i_e < cfg.K1 and k2 >= 1:
                            for a in range(bn.order):
                                if nn[a] == 0:
                                    continue
                                for p in range(be.order):
                                    if be.init[p]:
                                        emit(src, qe * (nn[a] / k2) * be.init[p], 0,
                                             ("backup", k1, k2 - 1, i_e + 1),
                                             (w, v2, h, bump(nn, a, -1), bump(em, p, 1), u))
                        elif i_e < cfg.K1 and k1 >= 1:
                            for a in range(bh.order):
                                if h[a] == 0:
                                    continue
                                for p in range(be.order):
                                    if be.init[p]:
                                        emit(src, qe * (h[a] / k1) * be.init[p], 0,
                                             ("backup", k1 - 1, k2, i_e + 1),
                                             (w, v2, bump(h, a, -1), nn, bump(em, p, 1), u))
                        else:
                            emit(src, qe, 0, key, (w, v2, h, nn, em, u))

    q = sp.coo_matrix((np.array(data), (np.array(rows), np.array(cols))),
                      shape=(total, total))
    return q.tocsr()
