import numpy as np
import pytest

from retrialq.solver import (NumericalFailure, UnstableConfigError,
                             direct_truncated_solve, solve_stationary)

from util import exp_config, two_phase_config


def _l1(z1, z2, levels):
    return sum(np.abs(z1.level(l) - z2.level(l)).sum() for l in range(levels))


def test_windowed_matches_direct_exponential():
    cfg = exp_config(S=2, K=1, K1=1, K2=1, M=2)
    zw = solve_stationary(cfg)
    zd = direct_truncated_solve(cfg, max(zw.i_star + 20, 60))
    assert _l1(zw, zd, 12) < 1e-9


def test_windowed_matches_direct_two_phase():
    cfg = two_phase_config()
    zw = solve_stationary(cfg)
    zd = direct_truncated_solve(cfg, max(zw.i_star + 20, 60))
    assert _l1(zw, zd, 12) < 1e-9


def test_distribution_is_proper():
    cfg = two_phase_config()
    z = solve_stationary(cfg)
    assert z.total_mass() == pytest.approx(1.0, abs=1e-12)
    for l in range(z.i_star + 1):
        assert z.level(l).min() >= 0.0
    masses = z.level_masses()
    # orbit tail decays
    assert masses[-1] < 1e-8
    assert z.residual < 1e-8


def test_unstable_config_raises():
    cfg = exp_config(S=1, K=1, K1=1, K2=0, M=1, lam_h=0.01, lam_n=9.0,
                     mu_n=0.5, mu_h=0.5, theta=0.2, abandon=0.0,
                     cat_rate=1e-9)
    with pytest.raises(UnstableConfigError):
        solve_stationary(cfg)


def test_meta_reports_window():
    cfg = exp_config(S=2, K=1, K1=1, K2=1, M=1)
    z = solve_stationary(cfg)
    assert z.meta["kappa"] >= cfg.M
    assert z.meta["i0"] >= 1
    assert z.method == "windowed"


def test_stratum_masses_partition_level():
    from retrialq.layout import layout
    cfg = two_phase_config()
    z = solve_stationary(cfg)
    lay = layout(cfg, 0)
    total = sum(float(z.level(0)[s.offset:s.offset + s.size].sum())
                for s in lay.strata)
    assert total == pytest.approx(float(z.level(0).sum()), abs=1e-14)
