"""Structured model configuration: YAML schema, validation, patching.

A config file has nested sections with inline matrices as row lists:

    model:            S, K, K1, K2, M, optional backup_rate_scale
    arrivals_normal:  c0, handoff, new
    arrivals_catastrophic: c0, handoff, new, emergency
    catastrophe:      d0, d1
    service_handoff / service_new / service_emergency / repair:
                      init, subgen
    retrial:          init, subgen, theta, and either abandon_fraction or
                      explicit exit_abandon / exit_retry vectors; optional
                      level_rates (length M+1)
    solver:           optional numeric tolerances
    nsga2:            optional optimizer section

Scalar parameters are addressable by dotted paths for sweeps and
optimization, e.g. ``model.K2``, ``retrial.theta``,
``arrivals_normal.scale_H`` (multiplier on the handoff matrix with the
background diagonal compensated) or ``service_handoff.mu`` (sets the
fundamental service rate by scaling the subgenerator).
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from .processes import (
    CatastropheProcess,
    MarkedArrivalProcess,
    PhaseTypeDistribution,
    RetrialProcess,
    class_arrival_rate,
    ph_fundamental_rate,
)


class ConfigError(ValueError):
    """Schema or invariant violation; carries one message per problem."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class SolverSettings:
    delta: float = 1e-12
    eps_g: float = 1e-10
    eps_f: float = 1e-10
    l_hard_cap: int = 4000

    def validate(self, errs: list[str]):
        for name in ("delta", "eps_g", "eps_f"):
            v = getattr(self, name)
            if not (0 < v < 1):
                errs.append(f"solver.{name} must be in (0, 1), got {v}")
        if self.l_hard_cap < 10:
            errs.append("solver.l_hard_cap must be >= 10")


@dataclass(frozen=True)
class Nsga2Settings:
    population: int = 40
    generations: int = 60
    crossover_prob: float = 0.9
    mutation_prob: float = 0.25
    sbx_index: float = 15.0
    poly_index: float = 20.0
    seed: int = 20240513
    eps_e: float = 1e-3
    eps_b: float = 1e-3
    eps_p: float = 1e-3
    lambda_e_bounds: tuple[float, float] = (0.05, 15.0)
    mu_e_bounds: tuple[float, float] = (0.05, 15.0)

    def validate(self, errs: list[str]):
        if self.population < 4 or self.population % 2:
            errs.append("nsga2.population must be even and >= 4")
        if self.generations < 1:
            errs.append("nsga2.generations must be >= 1")
        for name in ("crossover_prob", "mutation_prob"):
            v = getattr(self, name)
            if not (0 <= v <= 1):
                errs.append(f"nsga2.{name} must be in [0, 1]")
        for name in ("lambda_e_bounds", "mu_e_bounds"):
            lo, hi = getattr(self, name)
            if not (0 < lo < hi):
                errs.append(f"nsga2.{name} must satisfy 0 < lo < hi")


@dataclass(frozen=True)
class ModelConfig:
    """Fully validated model: structural integers plus all process records."""

    S: int
    K: int
    K1: int
    K2: int
    M: int
    arrivals_normal: MarkedArrivalProcess
    arrivals_catastrophic: MarkedArrivalProcess
    catastrophe: CatastropheProcess
    service_handoff: PhaseTypeDistribution
    service_new: PhaseTypeDistribution
    service_emergency: PhaseTypeDistribution
    repair: PhaseTypeDistribution
    retrial: RetrialProcess
    backup_rate_scale: float = 1.0
    solver: SolverSettings = field(default_factory=SolverSettings)
    nsga2: Nsga2Settings | None = None
    raw: dict | None = field(default=None, compare=False, repr=False)

    def validate(self) -> list[str]:
        errs: list[str] = []
        if self.S < 1:
            errs.append(f"model.S must be >= 1, got {self.S}")
        if not (0 <= self.K2 <= self.S):
            errs.append(f"model.K2={self.K2} must satisfy 0 <= K2 <= S={self.S}")
        if not (0 <= self.K1 <= self.K <= self.S):
            errs.append(f"model.K1={self.K1}, model.K={self.K} must satisfy 0 <= K1 <= K <= S={self.S}")
        if self.M < 1:
            errs.append(f"model.M must be >= 1, got {self.M}")
        if self.backup_rate_scale <= 0:
            errs.append("model.backup_rate_scale must be positive")
        for name, rec in (
            ("arrivals_normal", self.arrivals_normal),
            ("arrivals_catastrophic", self.arrivals_catastrophic),
            ("catastrophe", self.catastrophe),
            ("service_handoff", self.service_handoff),
            ("service_new", self.service_new),
            ("service_emergency", self.service_emergency),
            ("repair", self.repair),
            ("retrial", self.retrial),
        ):
            rep = rec.validate()
            errs.extend(f"{name}: {e}" for e in rep.errors)
        for cls in ("handoff", "new"):
            if cls not in self.arrivals_normal.class_mats:
                errs.append(f"arrivals_normal: missing class matrix {cls!r}")
        for cls in ("handoff", "new", "emergency"):
            if cls not in self.arrivals_catastrophic.class_mats:
                errs.append(f"arrivals_catastrophic: missing class matrix {cls!r}")
        if self.arrivals_normal.order != self.arrivals_catastrophic.order:
            errs.append("arrivals_normal and arrivals_catastrophic must share the phase space")
        if self.retrial.cap != self.M:
            errs.append(f"retrial cap {self.retrial.cap} must equal model.M={self.M}")
        self.solver.validate(errs)
        if self.nsga2 is not None:
            self.nsga2.validate(errs)
        return errs


def _matrix(section: dict, key: str, path: str, errs: list[str]):
    if key not in section:
        errs.append(f"{path}.{key}: missing")
        return None
    try:
        m = np.asarray(section[key], dtype=float)
    except (TypeError, ValueError):
        errs.append(f"{path}.{key}: not a numeric array")
        return None
    return m

def _require(section, key, path, errs, cast=float):
    if key not in section:
        errs.append(f"{path}.{key}: missing")
        return None
    try:
        return cast(section[key])
    except (TypeError, ValueError):
        errs.append(f"{path}.{key}: expected {cast.__name__}")
        return None


def _parse_ph(section, path, errs) -> PhaseTypeDistribution | None:
    if not isinstance(section, dict):
        errs.append(f"{path}: expected a mapping with init/subgen")
        return None
    init = _matrix(section, "init", path, errs)
    subgen = _matrix(section, "subgen", path, errs)
    if init is None or subgen is None:
        return None
    try:
        return PhaseTypeDistribution(init=init, subgen=subgen)
    except ValueError as e:
        errs.append(f"{path}: {e}")
        return None


def _parse_mmap(section, path, classes, errs) -> MarkedArrivalProcess | None:
    if not isinstance(section, dict):
        errs.append(f"{path}: expected a mapping")
        return None
    c0 = _matrix(section, "c0", path, errs)
    mats = {}
    for cls in classes:
        m = _matrix(section, cls, path, errs)
        if m is not None:
            mats[cls] = m
    if c0 is None or len(mats) != len(classes):
        return None
    try:
        return MarkedArrivalProcess(c0=c0, class_mats=mats)
    except ValueError as e:
        errs.append(f"{path}: {e}")
        return None


def _parse_retrial(section, cap, path, errs) -> RetrialProcess | None:
    ph = _parse_ph(section, path, errs)
    theta = _require(section, "theta", path, errs)
    if ph is None or theta is None or cap is None:
        return None
    level_rates = tuple(float(x) for x in section.get("level_rates", ()))
    try:
        if "exit_abandon" in section or "exit_retry" in section:
            ab = _matrix(section, "exit_abandon", path, errs)
            rt = _matrix(section, "exit_retry", path, errs)
            if ab is None or rt is None:
                return None
            return RetrialProcess(base=ph, exit_abandon=ab, exit_retry=rt,
                                  theta=float(theta), cap=cap,
                                  level_rates=level_rates)
        frac = float(section.get("abandon_fraction", 0.0))
        if not (0 <= frac < 1):
            errs.append(f"{path}.abandon_fraction must be in [0, 1)")
            return None
        return RetrialProcess.from_ph(ph, theta=float(theta), cap=cap,
                                      abandon_fraction=frac,
                                      level_rates=level_rates)
    except ValueError as e:
        errs.append(f"{path}: {e}")
        return None


def _settings_from(section, cls, path, errs):
    if not isinstance(section, dict):
        errs.append(f"{path}: expected a mapping")
        return cls()
    known = cls.__dataclass_fields__
    kwargs = {}
    for key, val in section.items():
        if key not in known:
            errs.append(f"{path}.{key}: unknown field")
            continue
        if key.endswith("_bounds"):
            kwargs[key] = tuple(float(x) for x in val)
        else:
            kwargs[key] = type(getattr(cls(), key))(val)
    return cls(**kwargs)


def config_from_dict(data: dict) -> ModelConfig:
    """Build and fully validate a ModelConfig from a parsed mapping.

    Raises ConfigError listing every problem found, each prefixed with the
    config-section path it belongs to.
    """
    errs: list[str] = []
    if not isinstance(data, dict):
        raise ConfigError(["top level: expected a mapping of sections"])
    model = data.get("model")
    if not isinstance(model, dict):
        errs.append("model: section missing")
        model = {}
    s = _require(model, "S", "model", errs, int)
    k = _require(model, "K", "model", errs, int)
    k1 = _require(model, "K1", "model", errs, int)
    k2 = _require(model, "K2", "model", errs, int)
    m = _require(model, "M", "model", errs, int)
    scale = float(model.get("backup_rate_scale", 1.0))

    sections = {}
    for name, parser in (
        ("arrivals_normal", lambda sec, p: _parse_mmap(sec, p, ("handoff", "new"), errs)),
        ("arrivals_catastrophic", lambda sec, p: _parse_mmap(sec, p, ("handoff", "new", "emergency"), errs)),
        ("service_handoff", lambda sec, p: _parse_ph(sec, p, errs)),
        ("service_new", lambda sec, p: _parse_ph(sec, p, errs)),
        ("service_emergency", lambda sec, p: _parse_ph(sec, p, errs)),
        ("repair", lambda sec, p: _parse_ph(sec, p, errs)),
    ):
        if name not in data:
            errs.append(f"{name}: section missing")
            sections[name] = None
        else:
            sections[name] = parser(data[name], name)
    if "catastrophe" not in data:
        errs.append("catastrophe: section missing")
        cat = None
    else:
        d0 = _matrix(data["catastrophe"], "d0", "catastrophe", errs)
        d1 = _matrix(data["catastrophe"], "d1", "catastrophe", errs)
        cat = None
        if d0 is not None and d1 is not None:
            try:
                cat = CatastropheProcess(d0=d0, d1=d1)
            except ValueError as e:
                errs.append(f"catastrophe: {e}")
    if "retrial" not in data:
        errs.append("retrial: section missing")
        retrial = None
    else:
        retrial = _parse_retrial(data["retrial"], m, "retrial", errs)

    solver = _settings_from(data.get("solver", {}), SolverSettings, "solver", errs)
    nsga2 = None
    if "nsga2" in data:
        nsga2 = _settings_from(data["nsga2"], Nsga2Settings, "nsga2", errs)

    if errs:
        raise ConfigError(errs)
    cfg = ModelConfig(
        S=s, K=k, K1=k1, K2=k2, M=m,
        arrivals_normal=sections["arrivals_normal"],
        arrivals_catastrophic=sections["arrivals_catastrophic"],
        catastrophe=cat,
        service_handoff=sections["service_handoff"],
        service_new=sections["service_new"],
        service_emergency=sections["service_emergency"],
        repair=sections["repair"],
        retrial=retrial,
        backup_rate_scale=scale,
        solver=solver,
        nsga2=nsga2,
        raw=copy.deepcopy(data),
    )
    errs = cfg.validate()
    if errs:
        raise ConfigError(errs)
    return cfg


def parse_config(path: str) -> ModelConfig:
    """Load and validate a YAML config file."""
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as e:
        raise ConfigError([f"{path}: {e}"])
    except yaml.YAMLError as e:
        raise ConfigError([f"{path}: malformed YAML: {e}"])
    return config_from_dict(data)


def config_to_dict(cfg: ModelConfig) -> dict:
    """Serialize a config back to plain lists/floats (round-trips through
    config_from_dict to a structurally identical record)."""

    def ph(p: PhaseTypeDistribution) -> dict:
        return {"init": p.init.tolist(), "subgen": p.subgen.tolist()}

    def mmap(m: MarkedArrivalProcess) -> dict:
        out = {"c0": m.c0.tolist()}
        out.update({k: v.tolist() for k, v in m.class_mats.items()})
        return out

    out = {
        "model": {"S": cfg.S, "K": cfg.K, "K1": cfg.K1, "K2": cfg.K2,
                  "M": cfg.M, "backup_rate_scale": cfg.backup_rate_scale},
        "arrivals_normal": mmap(cfg.arrivals_normal),
        "arrivals_catastrophic": mmap(cfg.arrivals_catastrophic),
        "catastrophe": {"d0": cfg.catastrophe.d0.tolist(),
                        "d1": cfg.catastrophe.d1.tolist()},
        "service_handoff": ph(cfg.service_handoff),
        "service_new": ph(cfg.service_new),
        "service_emergency": ph(cfg.service_emergency),
        "repair": ph(cfg.repair),
        "retrial": {
            **ph(cfg.retrial.base),
            "theta": cfg.retrial.theta,
            "exit_abandon": cfg.retrial.exit_abandon.tolist(),
            "exit_retry": cfg.retrial.exit_retry.tolist(),
            "level_rates": list(cfg.retrial.level_rates),
        },
        "solver": {k: getattr(cfg.solver, k)
                   for k in SolverSettings.__dataclass_fields__},
    }
    if cfg.nsga2 is not None:
        d = {k: getattr(cfg.nsga2, k) for k in Nsga2Settings.__dataclass_fields__}
        d["lambda_e_bounds"] = list(d["lambda_e_bounds"])
        d["mu_e_bounds"] = list(d["mu_e_bounds"])
        out["nsga2"] = d
    return out


def dump_config(cfg: ModelConfig, path: str):
    with open(path, "w") as fh:
        yaml.safe_dump(config_to_dict(cfg), fh, sort_keys=False)


def _class_scale_for_rate(mmap: MarkedArrivalProcess, cls: str,
                          target: float) -> float:
    """Scale factor on one class matrix so its long-run rate hits target.

    The compensated background diagonal shifts the modulating chain's
    stationary vector, so the rate is nonlinear in the factor; it is still
    monotone increasing, which makes bracketing safe.
    """
    from scipy.optimize import brentq

    if target <= 0:
        raise ValueError(f"target rate for {cls!r} must be positive")
    cur = class_arrival_rate(mmap, cls)

    def gap(f):
        return class_arrival_rate(mmap.with_class_scaled(cls, f), cls) - target

    lo = hi = target / cur
    for _ in range(200):
        if gap(lo) <= 0:
            break
        lo *= 0.5
    for _ in range(200):
        if gap(hi) >= 0:
            break
        hi *= 2.0
    if lo == hi:
        return lo
    return float(brentq(gap, lo, hi, xtol=1e-14, rtol=1e-14))


_CLASS_KEYS = {"H": "handoff", "N": "new", "E": "emergency"}
_SERVICE_SECTIONS = {"service_handoff", "service_new", "service_emergency", "repair"}


def patch_config(cfg: ModelConfig, path: str, value: float) -> ModelConfig:
    """Return a new config with one scalar parameter changed.

    Supported paths: ``model.<S|K|K1|K2|M|backup_rate_scale>``;
    ``retrial.theta``; ``<service section>.mu`` (fundamental rate);
    ``arrivals_<kind>.scale_<H|N|E>`` (multiplier on that class matrix,
    background-compensated) and ``arrivals_<kind>.lambda_<H|N|E>`` (absolute
    class rate); ``catastrophe.scale`` (multiplier on the event matrix).
    """
    section, _, leaf = path.partition(".")
    if not leaf:
        raise ConfigError([f"parameter path {path!r} must be section.field"])

    if section == "model":
        if leaf not in ("S", "K", "K1", "K2", "M", "backup_rate_scale"):
            raise ConfigError([f"unknown model field {leaf!r}"])
        val = float(value) if leaf == "backup_rate_scale" else int(value)
        if leaf == "M":
            base = cfg.retrial
            rt = replace(base, cap=val,
                         level_rates=tuple([base.theta] * (val + 1)))
            new = replace(cfg, M=val, retrial=rt)
        else:
            new = replace(cfg, **{leaf: val})
    elif section == "retrial" and leaf == "theta":
        scaled = cfg.retrial.base.scaled(float(value) / cfg.retrial.theta)
        ratio = float(value) / cfg.retrial.theta
        rt = replace(cfg.retrial, base=scaled,
                     exit_abandon=cfg.retrial.exit_abandon * ratio,
                     exit_retry=cfg.retrial.exit_retry * ratio,
                     theta=float(value),
                     level_rates=tuple(float(value) for _ in cfg.retrial.level_rates))
        new = replace(cfg, retrial=rt)
    elif section in _SERVICE_SECTIONS and leaf == "mu":
        cur: PhaseTypeDistribution = getattr(cfg, section)
        factor = float(value) / ph_fundamental_rate(cur)
        new = replace(cfg, **{section: cur.scaled(factor)})
    elif section in ("arrivals_normal", "arrivals_catastrophic"):
        mmap: MarkedArrivalProcess = getattr(cfg, section)
        kind, _, tag = leaf.partition("_")
        if tag not in _CLASS_KEYS:
            raise ConfigError([f"unknown arrival class tag {tag!r} in {path!r}"])
        cls = _CLASS_KEYS[tag]
        if cls not in mmap.class_mats:
            raise ConfigError([f"{section} has no class {cls!r}"])
        if kind == "scale":
            factor = float(value)
        elif kind == "lambda":
            factor = _class_scale_for_rate(mmap, cls, float(value))
        else:
            raise ConfigError([f"unknown arrival field {leaf!r}"])
        new = replace(cfg, **{section: mmap.with_class_scaled(cls, factor)})
    elif section == "catastrophe" and leaf == "scale":
        f = float(value)
        d1 = cfg.catastrophe.d1 * f
        d0 = cfg.catastrophe.d0 - np.diag((f - 1.0) * cfg.catastrophe.d1.sum(axis=1))
        new = replace(cfg, catastrophe=CatastropheProcess(d0=d0, d1=d1))
    else:
        raise ConfigError([f"unsupported parameter path {path!r}"])

    errs = new.validate()
    if errs:
        raise ConfigError([f"after patching {path}={value}: {e}" for e in errs])
    return replace(new, raw=None)
