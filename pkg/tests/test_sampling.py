"""Collocation sampling: stratification, ranges, seeded determinism."""

import numpy as np
import pytest

from flamelet_pinn.pinn import sampling as sp


def test_latin_hypercube_stratification():
    n = 64
    pts = sp.latin_hypercube(n, 3, np.random.default_rng(0))
    assert pts.shape == (n, 3)
    assert np.all((pts >= 0.0) & (pts < 1.0 + 1e-12))
    for d in range(3):
        strata = np.floor(pts[:, d] * n).astype(int)
        assert sorted(strata) == list(range(n))


def test_latin_hypercube_rejects_empty():
    with pytest.raises(ValueError):
        sp.latin_hypercube(0, 2, np.random.default_rng(0))


def test_log_time_endpoints_and_monotonicity():
    eps = 1e-8
    t = sp.log_time(np.array([0.0, 0.25, 0.5, 1.0]), 0.0, 0.02, eps)
    assert t[0] == pytest.approx(eps, rel=1e-12)
    assert t[-1] == pytest.approx(0.02, rel=1e-12)
    assert np.all(np.diff(t) > 0)
    # log spacing: equal xi increments give equal ratios
    assert t[2] / t[1] == pytest.approx((t[-1] / t[0]) ** 0.25, rel=1e-10)


def test_sample_ivp_range_and_near_origin_bias():
    rng = np.random.default_rng(1)
    t = sp.sample_ivp(4096, 0.02, 1e-8, rng)
    assert t.min() >= 1e-8 and t.max() <= 0.02
    # log-uniform: about half the points land below sqrt(eps * t_max)
    frac = np.mean(t < np.sqrt(1e-8 * 0.02))
    assert 0.4 < frac < 0.6


def test_sample_bvp_range():
    z = sp.sample_bvp(512, np.random.default_rng(2))
    assert z.shape == (512,)
    assert z.min() >= 0.0 and z.max() <= 1.0


def test_sample_pde_ranges_and_stratification():
    t, z = sp.sample_pde(128, 0.02, np.random.default_rng(3))
    assert t.min() >= 0.0 and t.max() <= 0.02
    assert z.min() >= 0.0 and z.max() <= 1.0
    strata = np.floor(z * 128).astype(int)
    assert sorted(strata) == list(range(128))


def test_sample_alpha_bounds_and_validation():
    rng = np.random.default_rng(4)
    draws = [sp.sample_alpha(1.0, 100.0, rng) for _ in range(200)]
    assert min(draws) >= 1.0 and max(draws) <= 100.0
    # log-uniform: roughly half the draws below the geometric mean
    frac = np.mean(np.array(draws) < 10.0)
    assert 0.35 < frac < 0.65
    assert sp.sample_alpha(5.0, 5.0, rng) == pytest.approx(5.0, rel=1e-14)
    with pytest.raises(ValueError):
        sp.sample_alpha(0.0, 10.0, rng)
    with pytest.raises(ValueError):
        sp.sample_alpha(10.0, 1.0, rng)


def test_sampling_deterministic_per_seed():
    a = sp.sample_pde(32, 0.02, np.random.default_rng(9))
    b = sp.sample_pde(32, 0.02, np.random.default_rng(9))
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
