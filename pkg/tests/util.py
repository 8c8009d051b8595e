"""Shared construction helpers for the test suite."""
from __future__ import annotations

import numpy as np

from retrialq.config import ModelConfig, config_from_dict


def exp_config(S=1, K=1, K1=1, K2=1, M=1, lam_h=0.15, lam_n=0.3, lam_e=0.2,
               mu_h=1.0, mu_n=0.8, mu_e=1.2, theta=1.5, mu_rep=0.7,
               cat_rate=0.05, abandon=0.1, **overrides) -> ModelConfig:
    """Single-phase everything: the smallest nontrivial model family."""
    data = {
        "model": {"S": S, "K": K, "K1": K1, "K2": K2, "M": M},
        "arrivals_normal": {
            "c0": [[-(lam_h + lam_n)]],
            "handoff": [[lam_h]],
            "new": [[lam_n]],
        },
        "arrivals_catastrophic": {
            "c0": [[-(lam_h + lam_n + lam_e)]],
            "handoff": [[lam_h]],
            "new": [[lam_n]],
            "emergency": [[lam_e]],
        },
        "catastrophe": {"d0": [[-cat_rate]], "d1": [[cat_rate]]},
        "service_handoff": {"init": [1.0], "subgen": [[-mu_h]]},
        "service_new": {"init": [1.0], "subgen": [[-mu_n]]},
        "service_emergency": {"init": [1.0], "subgen": [[-mu_e]]},
        "repair": {"init": [1.0], "subgen": [[-mu_rep]]},
        "retrial": {"init": [1.0], "subgen": [[-theta]], "theta": theta,
                    "abandon_fraction": abandon},
    }
    data.update(overrides)
    return config_from_dict(data)


def two_phase_config(S=2, K=1, K1=1, K2=1, M=2, cat_rate=0.04,
                     abandon=0.15, **overrides) -> ModelConfig:
    """Two phases in every process, two modulating states: exercises all
    Kronecker factors with nontrivial dimensions."""
    c0n = [[-0.9, 0.1], [0.05, -0.45]]
    chn = [[0.3, 0.05], [0.1, 0.02]]
    cnn = [[0.4, 0.05], [0.2, 0.08]]
    c0c = [[-1.0, 0.1], [0.05, -0.55]]
    data = {
        "model": {"S": S, "K": K, "K1": K1, "K2": K2, "M": M,
                  "backup_rate_scale": 0.8},
        "arrivals_normal": {"c0": c0n, "handoff": chn, "new": cnn},
        "arrivals_catastrophic": {
            "c0": c0c, "handoff": chn, "new": cnn,
            "emergency": [[0.1, 0.0], [0.05, 0.05]],
        },
        "catastrophe": {"d0": [[-0.1, 0.06], [0.02, -0.06]],
                        "d1": [[0.03, 0.01], [0.01, 0.03]]},
        "service_handoff": {"init": [0.3, 0.7], "subgen": [[-2.0, 0.5], [0.0, -3.0]]},
        "service_new": {"init": [0.6, 0.4], "subgen": [[-1.5, 0.2], [0.3, -2.5]]},
        "service_emergency": {"init": [0.5, 0.5], "subgen": [[-2.2, 0.0], [0.4, -1.8]]},
        "repair": {"init": [0.8, 0.2], "subgen": [[-1.0, 0.6], [0.0, -1.4]]},
        "retrial": {"init": [1.0, 0.0], "subgen": [[-2.0, 2.0], [0.0, -2.0]],
                    "theta": 1.0, "abandon_fraction": abandon},
    }
    for key, val in overrides.items():
        if isinstance(val, dict) and key in data:
            data[key].update(val)
        else:
            data[key] = val
    return config_from_dict(data)
