"""State-space layout of one orbit level of the block-tridiagonal chain.

A level collects every system configuration with a given orbit size l.
Within a level, states are grouped into strata keyed by the in-service
call mix:

    normal  (k1, k2):    k1 handoff + k2 new calls on main channels,
                         k1 + k2 <= S; present at every level
    repair  (j):         post-disaster, j channels under repair, no calls
                         in service, 1 <= j <= S-1; level 0 only
    backup  (k1, k2, i): all S channels down, k1 + k2 + i calls on the K
                         backup channels (i of them emergency); level 0 only

Each stratum is a Kronecker product of factor spaces, leftmost slowest:
arrival phase, disaster phase, then the occupancy bases of the active
clock groups (services, orbit clocks, repair clocks, emergency services).
The orbit occupancy basis is frozen at M clocks for levels above M.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .config import ModelConfig
from .csfp import occupancy_count


@dataclass(frozen=True)
class Stratum:
    kind: str
    k1: int = 0
    k2: int = 0
    j: int = 0
    i: int = 0
    offset: int = 0
    dims: tuple[int, ...] = ()

    @property
    def size(self) -> int:
        return math.prod(self.dims)

    @property
    def key(self):
        if self.kind == "normal":
            return ("normal", self.k1, self.k2)
        if self.kind == "repair":
            return ("repair", self.j)
        return ("backup", self.k1, self.k2, self.i)


@dataclass(frozen=True)
class LevelLayout:
    level: int
    orbit_tracked: int
    strata: tuple[Stratum, ...]
    dim: int
    _by_key: dict

    def stratum(self, *key) -> Stratum:
        return self._by_key[key]

    def has(self, *key) -> bool:
        return key in self._by_key

    def locate(self, global_index: int) -> tuple[Stratum, tuple[int, ...]]:
        """Decode a within-level index into its stratum and the mixed-radix
        factor indices (same order as Stratum.dims)."""
        for s in self.strata:
            if global_index < s.offset + s.size:
                rem = global_index - s.offset
                idx = []
                for d in reversed(s.dims):
                    idx.append(rem % d)
                    rem //= d
                return s, tuple(reversed(idx))
        raise IndexError(global_index)

    def flatten(self, stratum: Stratum, idx) -> int:
        flat = 0
        for d, k in zip(stratum.dims, idx):
            flat = flat * d + k
        return stratum.offset + flat


def layout(cfg: ModelConfig, l: int) -> LevelLayout:
    """Enumerate the strata of level l in canonical order: k1-major, then
    k2; at level 0 each (k1, k2) cell lists its normal stratum first, the
    (0, 0) cell then carries the repair strata j = 1..S-1, and every cell
    with k1 + k2 <= K carries backup strata i = 0..K-k1-k2."""
    if l < 0:
        raise ValueError("level must be nonnegative")
    la = cfg.arrivals_normal.order
    lc = cfg.catastrophe.order
    mh = cfg.service_handoff.order
    mn = cfg.service_new.order
    me = cfg.service_emergency.order
    mr = cfg.repair.order
    nr = cfg.retrial.order
    r = min(l, cfg.M)
    orb = occupancy_count(r, nr)

    strata: list[Stratum] = []
    offset = 0

    def push(kind, k1=0, k2=0, j=0, i=0, dims=()):
        nonlocal offset
        s = Stratum(kind=kind, k1=k1, k2=k2, j=j, i=i, offset=offset, dims=dims)
        strata.append(s)
        offset += s.size

    for k1 in range(cfg.S + 1):
        for k2 in range(cfg.S - k1 + 1):
            push("normal", k1, k2, dims=(
                la, lc,
                occupancy_count(k1, mh),
                occupancy_count(k2, mn),
                orb,
            ))
            if l == 0:
                if k1 == 0 and k2 == 0:
                    for j in range(1, cfg.S):
                        push("repair", j=j, dims=(la, lc, occupancy_count(j, mr)))
                if k1 + k2 <= cfg.K:
                    for i in range(cfg.K - k1 - k2 + 1):
                        push("backup", k1, k2, j=cfg.S, i=i, dims=(
                            la, lc,
                            occupancy_count(k1, mh),
                            occupancy_count(k2, mn),
                            occupancy_count(i, me),
                            occupancy_count(cfg.S, mr),
                        ))

    by_key = {s.key: s for s in strata}
    return LevelLayout(level=l, orbit_tracked=r, strata=tuple(strata),
                       dim=offset, _by_key=by_key)
