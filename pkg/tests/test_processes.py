import numpy as np
import pytest
from hypothesis import given, strategies as st

from retrialq.processes import (CatastropheProcess, MarkedArrivalProcess,
                                PhaseTypeDistribution, RetrialProcess,
                                class_arrival_rate, exponential_ph,
                                map_correlation_coefficient,
                                map_variation_coefficient, mmap_class_map,
                                ph_fundamental_rate, stationary_phase_vector,
                                total_arrival_rate)
from retrialq.config import parse_config


def test_exponential_ph_mean():
    p = exponential_ph(2.5)
    assert p.mean() == pytest.approx(0.4)
    assert ph_fundamental_rate(p) == pytest.approx(2.5)


def test_ph_exit_complements_subgen():
    p = PhaseTypeDistribution(init=np.array([0.3, 0.7]),
                              subgen=np.array([[-2.0, 0.5], [1.0, -3.0]]))
    assert np.allclose(p.subgen.sum(axis=1) + p.exit, 0.0)
    assert p.validate().ok


def test_ph_mean_two_phase_closed_form():
    # sequential Erlang-2 with rates 2 and 4: mean = 1/2 + 1/4
    p = PhaseTypeDistribution(init=np.array([1.0, 0.0]),
                              subgen=np.array([[-2.0, 2.0], [0.0, -4.0]]))
    assert p.mean() == pytest.approx(0.75)


@given(st.floats(min_value=0.1, max_value=50), st.floats(min_value=0.1, max_value=10))
def test_ph_scaling_scales_mean(rate, factor):
    p = exponential_ph(rate)
    assert p.scaled(factor).mean() == pytest.approx(p.mean() / factor)


def test_stationary_phase_vector_two_state():
    # birth-death on two states with rates 1 and 3: pi = (3/4, 1/4)
    q = np.array([[-1.0, 1.0], [3.0, -3.0]])
    pi = stationary_phase_vector(q)
    assert np.allclose(pi, [0.75, 0.25])
    assert np.allclose(pi @ q, 0.0, atol=1e-14)


def test_stationary_phase_vector_rejects_reducible():
    q = np.array([[-1.0, 1.0], [0.0, 0.0]])
    with pytest.raises(ValueError):
        stationary_phase_vector(q)


def test_poisson_map_statistics():
    # a Poisson stream has zero lag correlation and unit variation
    d0 = np.array([[-1.7]])
    d1 = np.array([[1.7]])
    assert map_correlation_coefficient(d0, d1) == pytest.approx(0.0, abs=1e-12)
    assert map_variation_coefficient(d0, d1) == pytest.approx(1.0)


def test_bundled_arrival_rates():
    cfg = parse_config("configs/baseline_s6.yaml")
    an, ac = cfg.arrivals_normal, cfg.arrivals_catastrophic
    assert class_arrival_rate(an, "handoff") == pytest.approx(0.15, rel=5e-3)
    assert class_arrival_rate(an, "new") == pytest.approx(0.45, rel=5e-3)
    assert class_arrival_rate(ac, "handoff") == pytest.approx(0.144, rel=5e-3)
    assert class_arrival_rate(ac, "new") == pytest.approx(0.217, rel=5e-3)
    assert class_arrival_rate(ac, "emergency") == pytest.approx(0.217, rel=5e-3)
    assert total_arrival_rate(an) == pytest.approx(0.6, rel=5e-3)


def test_with_class_scaled_stays_conservative():
    cfg = parse_config("configs/baseline_s6.yaml")
    m = cfg.arrivals_normal.with_class_scaled("handoff", 3.0)
    assert np.allclose(m.total_generator.sum(axis=1), 0.0, atol=1e-12)
    assert class_arrival_rate(m, "handoff") > class_arrival_rate(
        cfg.arrivals_normal, "handoff")


def test_mmap_class_map_is_valid_map():
    cfg = parse_config("configs/baseline_s6.yaml")
    d0, d1 = mmap_class_map(cfg.arrivals_normal, "handoff")
    assert np.allclose((d0 + d1).sum(axis=1), 0.0, atol=1e-12)
    assert (d1 >= 0).all()


def test_catastrophe_event_rate():
    c = CatastropheProcess(d0=np.array([[-0.05]]), d1=np.array([[0.05]]))
    assert c.event_rate() == pytest.approx(0.05)


def test_retrial_from_ph_splits_exits():
    base = PhaseTypeDistribution(init=np.array([1.0, 0.0]),
                                 subgen=np.array([[-2.0, 2.0], [0.0, -2.0]]))
    r = RetrialProcess.from_ph(base, theta=1.5, cap=2, abandon_fraction=0.25)
    total_exit = r.exit_abandon + r.exit_retry
    assert np.allclose(r.base.subgen.sum(axis=1) + total_exit, 0.0, atol=1e-12)
    assert np.allclose(r.exit_abandon, 0.25 * total_exit)
    assert len(r.level_rates) == r.cap + 1
    assert r.validate().ok
