"""Backup-channel dimensioning via NSGA-II.

Searches over the number of backup channels K, the emergency reservation
K1, and the emergency arrival and service rates, minimizing (K, K1)
subject to upper bounds on the outage loss probabilities. Uses the
standard machinery: constrained domination (feasible beats infeasible,
less-violating beats more-violating), fast non-dominated sorting,
crowding distance, binary tournaments, simulated binary crossover and
polynomial mutation on the real genes, uniform crossover and unit steps
on the integer genes, and (mu + lambda) elitism. Fitness evaluations are
cached so a repeated gene tuple never triggers a second solve.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from .config import ConfigError, ModelConfig, Nsga2Settings, patch_config
from .measures import compute_report
from .solver import NumericalFailure, UnstableConfigError, solve_stationary


@dataclass
class Candidate:
    k: int
    k1: int
    lam_e: float
    mu_e: float
    measures: dict[str, float] = field(default_factory=dict)
    violation: float = math.inf
    rank: int = 0
    crowding: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.violation == 0.0

    @property
    def objectives(self) -> tuple[int, int]:
        return (self.k, self.k1)

    @property
    def genes(self) -> tuple[int, int, float, float]:
        return (self.k, self.k1, self.lam_e, self.mu_e)


@dataclass
class OptimizationResult:
    front: list[Candidate]
    best: Candidate | None
    evaluations: int
    cache_hits: int
    log: list[str]


CSV_COLUMNS = ("K", "K1", "lambda_E", "mu_E",
               "p_block_emergency", "p_block_new_outage", "p_preempt_emergency")


def candidate_row(c: Candidate) -> dict[str, float]:
    return {
        "K": c.k, "K1": c.k1, "lambda_E": c.lam_e, "mu_E": c.mu_e,
        "p_block_emergency": c.measures.get("p_block_emergency", math.inf),
        "p_block_new_outage": c.measures.get("p_block_new_outage", math.inf),
        "p_preempt_emergency": c.measures.get("p_preempt_emergency", math.inf),
    }


def dominates(a: Candidate, b: Candidate) -> bool:
    """Constrained domination in the sense of Deb."""
    if a.feasible != b.feasible:
        return a.feasible
    if not a.feasible:
        return a.violation < b.violation
    ao, bo = a.objectives, b.objectives
    return all(x <= y for x, y in zip(ao, bo)) and ao != bo


def non_dominated_sort(pop: list[Candidate]) -> list[list[Candidate]]:
    dominated_by: list[list[int]] = [[] for _ in pop]
    n_dom = [0] * len(pop)
    fronts: list[list[int]] = [[]]
    for i, p in enumerate(pop):
        for j, q in enumerate(pop):
            if i == j:
                continue
            if dominates(p, q):
                dominated_by[i].append(j)
            elif dominates(q, p):
                n_dom[i] += 1
        if n_dom[i] == 0:
            p.rank = 0
            fronts[0].append(i)
    k = 0
    while fronts[k]:
        nxt = []
        for i in fronts[k]:
            for j in dominated_by[i]:
                n_dom[j] -= 1
                if n_dom[j] == 0:
                    pop[j].rank = k + 1
                    nxt.append(j)
        fronts.append(nxt)
        k += 1
    return [[pop[i] for i in f] for f in fronts if f]


def crowding_distance(front: list[Candidate]) -> None:
    n = len(front)
    for c in front:
        c.crowding = 0.0
    if n <= 2:
        for c in front:
            c.crowding = math.inf
        return
    for m in range(2):
        front.sort(key=lambda c: c.objectives[m])
        span = front[-1].objectives[m] - front[0].objectives[m]
        front[0].crowding = front[-1].crowding = math.inf
        if span == 0:
            continue
        for i in range(1, n - 1):
            front[i].crowding += (front[i + 1].objectives[m]
                                  - front[i - 1].objectives[m]) / span


def hypervolume(points: list[tuple[float, float]],
                ref: tuple[float, float]) -> float:
    """Dominated area of a 2-D minimization front relative to ref."""
    pts = sorted(p for p in points if p[0] < ref[0] and p[1] < ref[1])
    vol = 0.0
    y_prev = ref[1]
    for x, y in pts:
        if y < y_prev:
            vol += (ref[0] - x) * (y_prev - y)
            y_prev = y
    return vol


class _Evaluator:
    def __init__(self, cfg: ModelConfig, settings: Nsga2Settings):
        self.cfg = cfg
        self.settings = settings
        self.cache: dict[tuple, tuple[dict[str, float], float]] = {}
        self.evaluations = 0
        self.hits = 0

    def clamp(self, c: Candidate) -> None:
        st = self.cfg
        c.k = max(1, min(c.k, st.S))
        c.k1 = max(0, min(c.k1, c.k))
        lo, hi = self.settings.lambda_e_bounds
        c.lam_e = min(max(c.lam_e, lo), hi)
        lo, hi = self.settings.mu_e_bounds
        c.mu_e = min(max(c.mu_e, lo), hi)

    def evaluate(self, c: Candidate) -> None:
        self.clamp(c)
        key = (c.k, c.k1, round(c.lam_e, 9), round(c.mu_e, 9))
        cached = self.cache.get(key)
        if cached is not None:
            c.measures, c.violation = cached
            self.hits += 1
            return
        self.evaluations += 1
        try:
            cfg = patch_config(self.cfg, "model.K1", 0)
            cfg = patch_config(cfg, "model.K", c.k)
            cfg = patch_config(cfg, "model.K1", c.k1)
            cfg = patch_config(cfg, "arrivals_catastrophic.lambda_E", c.lam_e)
            cfg = patch_config(cfg, "service_emergency.mu", c.mu_e)
            z = solve_stationary(cfg)
            rep = compute_report(cfg, z)
            c.measures = rep.as_dict()
            st = self.settings
            c.violation = (
                max(0.0, rep.p_block_emergency - st.eps_e)
                + max(0.0, rep.p_block_new_outage - st.eps_b)
                + max(0.0, rep.p_preempt_emergency - st.eps_p)
            )
        except (UnstableConfigError, NumericalFailure, ConfigError):
            c.measures = {}
            c.violation = math.inf
        self.cache[key] = (c.measures, c.violation)


def _tournament(rng: random.Random, pop: list[Candidate]) -> Candidate:
    a, b = rng.sample(pop, 2)
    ka = (a.rank, -a.crowding)
    kb = (b.rank, -b.crowding)
    if ka != kb:
        return a if ka < kb else b
    return a if rng.random() < 0.5 else b


def _sbx(rng: random.Random, x: float, y: float, eta: float) -> tuple[float, float]:
    if abs(x - y) < 1e-14:
        return x, y
    u = rng.random()
    if u <= 0.5:
        beta = (2 * u) ** (1 / (eta + 1))
    else:
        beta = (1 / (2 * (1 - u))) ** (1 / (eta + 1))
    c1 = 0.5 * ((1 + beta) * x + (1 - beta) * y)
    c2 = 0.5 * ((1 - beta) * x + (1 + beta) * y)
    return c1, c2


def _poly_mutate(rng: random.Random, x: float, lo: float, hi: float,
                 eta: float) -> float:
    if hi <= lo:
        return x
    u = rng.random()
    if u < 0.5:
        delta = (2 * u) ** (1 / (eta + 1)) - 1
    else:
        delta = 1 - (2 * (1 - u)) ** (1 / (eta + 1))
    return x + delta * (hi - lo)


def optimize(cfg: ModelConfig,
             settings: Nsga2Settings | None = None) -> OptimizationResult:
    st = settings or cfg.nsga2
    if st is None:
        raise ConfigError(["optimization requested but no nsga2 section present"])
    rng = random.Random(st.seed)
    ev = _Evaluator(cfg, st)
    log: list[str] = []

    def spawn() -> Candidate:
        return Candidate(
            k=rng.randint(1, cfg.S),
            k1=rng.randint(0, cfg.S),
            lam_e=rng.uniform(*st.lambda_e_bounds),
            mu_e=rng.uniform(*st.mu_e_bounds),
        )

    pop = [spawn() for _ in range(st.population)]
    for c in pop:
        ev.evaluate(c)

    for gen in range(st.generations):
        fronts = non_dominated_sort(pop)
        for f in fronts:
            crowding_distance(f)
        children: list[Candidate] = []
        while len(children) < st.population:
            p1, p2 = _tournament(rng, pop), _tournament(rng, pop)
            g1, g2 = list(p1.genes), list(p2.genes)
            if rng.random() < st.crossover_prob:
                for gi in (0, 1):
                    if rng.random() < 0.5:
                        g1[gi], g2[gi] = g2[gi], g1[gi]
                for gi in (2, 3):
                    g1[gi], g2[gi] = _sbx(rng, g1[gi], g2[gi], st.sbx_index)
            for g in (g1, g2):
                if rng.random() < st.mutation_prob:
                    g[0] += rng.choice((-1, 1))
                if rng.random() < st.mutation_prob:
                    g[1] += rng.choice((-1, 1))
                if rng.random() < st.mutation_prob:
                    g[2] = _poly_mutate(rng, g[2], *st.lambda_e_bounds,
                                        st.poly_index)
                if rng.random() < st.mutation_prob:
                    g[3] = _poly_mutate(rng, g[3], *st.mu_e_bounds,
                                        st.poly_index)
                children.append(Candidate(int(round(g[0])), int(round(g[1])),
                                          g[2], g[3]))
        children = children[:st.population]
        for c in children:
            ev.evaluate(c)
        merged = pop + children
        fronts = non_dominated_sort(merged)
        nxt: list[Candidate] = []
        for f in fronts:
            crowding_distance(f)
            if len(nxt) + len(f) <= st.population:
                nxt.extend(f)
            else:
                f.sort(key=lambda c: -c.crowding)
                nxt.extend(f[:st.population - len(nxt)])
                break
        pop = nxt
        n_feas = sum(c.feasible for c in pop)
        log.append(f"gen {gen + 1}: {n_feas}/{len(pop)} feasible, "
                   f"{ev.evaluations} solves, {ev.hits} cache hits")

    feasible = [c for c in pop if c.feasible]
    front: list[Candidate] = []
    seen = set()
    for c in feasible:
        if any(dominates(o, c) for o in feasible):
            continue
        if c.objectives in seen:
            continue
        seen.add(c.objectives)
        front.append(c)
    front.sort(key=lambda c: c.objectives)
    best = None
    if front:
        best = min(front, key=lambda c: (c.k, c.k1, c.lam_e, c.mu_e))
    return OptimizationResult(front=front, best=best,
                              evaluations=ev.evaluations,
                              cache_hits=ev.hits, log=log)
