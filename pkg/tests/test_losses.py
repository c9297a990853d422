"""Residual algebra, weighting behavior, and loss assembly."""

import numpy as np
import pytest

import flamelet_pinn.autodiff as ad
import flamelet_pinn.pinn.training as tr
from flamelet_pinn.pinn import losses as ls


def tiny_cfg(kind, **over):
    over.setdefault("width", 8)
    over.setdefault("depth", 2)
    over.setdefault("n_col", 8)
    return tr.RunConfig(kind=kind, **over)


def test_residual_formulas():
    sigma = [np.array([1.0, 2.0]), np.array([-1.0, 0.5])]
    dt = [np.array([3.0, 3.0]), np.array([0.0, 1.0])]
    d2 = [np.array([2.0, -2.0]), np.array([4.0, 0.0])]
    chi_half = np.array([0.5, 2.0])
    r = ls.residual("ivp", sigma, dY_dt=dt)
    np.testing.assert_allclose(r[0], [2.0, 1.0])
    np.testing.assert_allclose(r[1], [1.0, 0.5])
    r = ls.residual("bvp", sigma, d2Y_dZ2=d2, chi_half=chi_half)
    np.testing.assert_allclose(r[0], [-0.5 * 2 - 1, -2.0 * -2 - 2])
    r = ls.residual("pde", sigma, dY_dt=dt, d2Y_dZ2=d2, chi_half=chi_half)
    np.testing.assert_allclose(r[0], [3 - 0.5 * 2 - 1, 3 - 2.0 * -2 - 2])


def test_residual_weights_shape_and_bounds():
    sig = [np.array([0.0, 10.0, -1e6])]
    (w,) = ls.residual_weights(sig, lam=1.0)
    assert w[0] == 1.0
    assert w[1] == pytest.approx(1.0 / 11.0)
    assert w[2] == pytest.approx(1.0 / (1.0 + 1e6))
    assert np.all((w > 0) & (w <= 1.0))
    (w0,) = ls.residual_weights(sig, lam=0.0)
    np.testing.assert_array_equal(w0, np.ones(3))
    # smaller lam weakens the down-weighting
    (ws,) = ls.residual_weights(sig, lam=0.02)
    assert np.all(ws >= w)


def test_causality_weights_start_at_one_and_decay():
    L = np.array([2.0, 1.0, 0.0, 5.0])
    w = ls.causality_weights(L, gamma=1.0)
    np.testing.assert_allclose(w, np.exp(-np.array([0.0, 2.0, 3.0, 3.0])))
    assert w[0] == 1.0
    assert np.all(np.diff(w) <= 0)
    np.testing.assert_array_equal(ls.causality_weights(L, gamma=0.0),
                                  np.ones(4))


def test_causality_loss_hand_computed():
    cfgless = type("M", (), {"flags": frozenset()})()
    axis01 = np.array([0.05, 0.3, 0.55, 0.8, 0.9, 0.2])
    sq = [np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
          np.array([0.5, 0.5, 0.5, 0.5, 0.5, 0.5])]
    n_slices, gamma = 4, 0.7
    total = ls.causality_loss(cfgless, sq, axis01, n_slices, gamma)
    idx = np.minimum((axis01 * n_slices).astype(int), n_slices - 1)
    slice_vals = []
    for k in range(n_slices):
        m = idx == k
        slice_vals.append(np.mean([s[m].sum() for s in sq]) / m.sum()
                          if m.any() else 0.0)
    w = np.exp(-gamma * np.concatenate([[0], np.cumsum(slice_vals)[:-1]]))
    expected = float(np.sum(w * np.asarray(slice_vals)))
    assert float(ad.value_of(total)) == pytest.approx(expected, rel=1e-12)


def test_epoch_loss_ivp_parts_and_finiteness():
    cfg = tiny_cfg("ivp")
    model = tr.build_model(cfg)
    rng = np.random.default_rng(0)
    theta = model.init_params(rng)
    batch = tr.sample_batch(cfg, rng)
    tape = ad.Tape()
    tape.set_params(theta)
    parts = ls.epoch_loss(model, tape, batch)
    assert np.isfinite(parts.value())
    assert parts.value() == parts.value("physics")
    assert len(parts.sigma_values) == model.S
    ad.backward(parts.total)
    assert np.all(np.isfinite(tape.param_grad))
    assert np.abs(tape.param_grad).max() > 0


def grad_of(cfg, theta, batch):
    model = tr.build_model(cfg)
    tape = ad.Tape()
    tape.set_params(theta)
    parts = ls.epoch_loss(model, tape, batch)
    ad.backward(parts.total)
    return float(ad.value_of(parts.total)), tape.param_grad.copy()


def test_epoch_loss_gradient_matches_finite_differences():
    # no_res_scaling removes the only detached quantity, so plain central
    # differences of the total loss are directly comparable
    cfg = tiny_cfg("ivp", flags=("no_res_scaling",))
    model = tr.build_model(cfg)
    rng = np.random.default_rng(3)
    theta = model.init_params(rng)
    batch = tr.sample_batch(cfg, rng)
    _, g = grad_of(cfg, theta, batch)
    for idx in np.random.default_rng(1).choice(model.n_params, 6,
                                               replace=False):
        h = 1e-5 * max(1.0, abs(theta[idx]))
        tp, tm = theta.copy(), theta.copy()
        tp[idx] += h
        tm[idx] -= h
        fp, _ = grad_of(cfg, tp, batch)
        fm, _ = grad_of(cfg, tm, batch)
        fd = (fp - fm) / (2 * h)
        scale = max(abs(fd), abs(g[idx]), 1e-8)
        assert abs(g[idx] - fd) / scale < 1e-4


def test_weighted_gradient_with_replayed_weights(monkeypatch):
    """The scaling weights are held fixed during backprop; finite
    differences must replay the captured weights to probe the same map."""
    cfg = tiny_cfg("ivp")
    model = tr.build_model(cfg)
    rng = np.random.default_rng(3)
    theta = model.init_params(rng)
    batch = tr.sample_batch(cfg, rng)
    _, g = grad_of(cfg, theta, batch)
    captured = ls.residual_weights(
        [np.asarray(s) for s in _sigma_values_at(model, theta, batch)],
        cfg.lambda_scale)
    monkeypatch.setattr(ls, "residual_weights", lambda sig, lam: captured)
    for idx in np.random.default_rng(8).choice(model.n_params, 6,
                                               replace=False):
        h = 1e-5 * max(1.0, abs(theta[idx]))
        tp, tm = theta.copy(), theta.copy()
        tp[idx] += h
        tm[idx] -= h
        fp, _ = grad_of(cfg, tp, batch)
        fm, _ = grad_of(cfg, tm, batch)
        fd = (fp - fm) / (2 * h)
        scale = max(abs(fd), abs(g[idx]), 1e-8)
        assert abs(g[idx] - fd) / scale < 1e-4


def _sigma_values_at(model, theta, batch):
    tape = ad.Tape()
    tape.set_params(theta)
    parts = ls.epoch_loss(model, tape, batch)
    return parts.sigma_values


def test_frozen_chemistry_changes_gradient_not_value():
    rng = np.random.default_rng(5)
    cfg_live = tiny_cfg("ivp")
    cfg_froz = tiny_cfg("ivp", flags=("no_diff_chem",))
    theta = tr.build_model(cfg_live).init_params(np.random.default_rng(2))
    batch = tr.sample_batch(cfg_live, rng)
    v_live, g_live = grad_of(cfg_live, theta, batch)
    v_froz, g_froz = grad_of(cfg_froz, theta, batch)
    assert v_live == pytest.approx(v_froz, rel=1e-12)
    assert np.abs(g_live - g_froz).max() > 1e-12 * np.abs(g_live).max()


def test_sigma_override_bypasses_chemistry():
    cfg = tiny_cfg("ivp")
    model = tr.build_model(cfg)
    rng = np.random.default_rng(7)
    theta = model.init_params(rng)
    batch = tr.sample_batch(cfg, rng)
    override = [np.zeros(cfg.n_col) for _ in range(model.S)]
    tape = ad.Tape()
    tape.set_params(theta)
    parts = ls.epoch_loss(model, tape, batch, sigma_override=override)
    # with sigma = 0 the residual is pure dY/dt and weights are all one
    assert np.isfinite(parts.value())
    np.testing.assert_array_equal(parts.sigma_values[0], 0.0)


def test_bvp_total_combines_physics_and_boundaries():
    cfg = tiny_cfg("bvp", lambda_f=0.25)
    model = tr.build_model(cfg)
    rng = np.random.default_rng(1)
    theta = model.init_params(rng)
    batch = tr.sample_batch(cfg, rng)
    tape = ad.Tape()
    tape.set_params(theta)
    parts = ls.epoch_loss(model, tape, batch)
    assert parts.value("bc") >= 0.0
    assert parts.value() == pytest.approx(
        0.25 * parts.value("physics") + parts.value("bc"), rel=1e-12)


def test_inverse_data_loss_zero_on_own_prediction():
    cfg = tiny_cfg("inverse", data_nt=3, data_nz=5)
    model = tr.build_model(cfg)
    rng = np.random.default_rng(2)
    theta = model.init_params(rng)
    nt, nz = 3, 5
    tt, zz = np.meshgrid(np.linspace(0, cfg.t_max, nt),
                         np.linspace(0, 1, nz), indexing="ij")
    own = model.predict_values(theta, t=tt.ravel(), z=zz.ravel())
    batch = tr.sample_batch(cfg, rng, observations={
        "t": tt.ravel(), "z": zz.ravel(), "Y": own})
    tape = ad.Tape()
    tape.set_params(theta)
    parts = ls.epoch_loss(model, tape, batch)
    assert parts.value("data") == pytest.approx(0.0, abs=1e-18)
    # perturbed observations raise the misfit by the summed square
    batch["data_Y"] = own + 0.01
    tape = ad.Tape()
    tape.set_params(theta)
    parts = ls.epoch_loss(model, tape, batch)
    assert parts.value("data") == pytest.approx(own.size * 1e-4, rel=1e-10)
    assert parts.value() == pytest.approx(
        cfg.lambda_f * parts.value("physics") + parts.value("data"),
        rel=1e-12)


def test_causality_baseline_uses_sliced_loss():
    cfg_c = tiny_cfg("ivp", flags=("causality_baseline",), n_col=32)
    cfg_p = tiny_cfg("ivp", n_col=32)
    theta = tr.build_model(cfg_p).init_params(np.random.default_rng(4))
    batch = tr.sample_batch(cfg_p, np.random.default_rng(4))
    v_c, g_c = grad_of(cfg_c, theta, batch)
    v_p, g_p = grad_of(cfg_p, theta, batch)
    assert np.isfinite(v_c) and np.isfinite(v_p)
    assert v_c != v_p
    assert np.abs(g_c - g_p).max() > 0
