"""Loss assembly: governing-equation residuals, weighting, and totals.

The residual helpers work on anything with arithmetic (tape nodes, jets, or
plain arrays), so reference solutions can be plugged in for consistency
checks.  The epoch assembler wires prediction jets, chemistry, and the
ablation flags into a single scalar loss node.
"""

import numpy as np

from .. import autodiff as ad
from .. import chemistry as ch


def residual(kind, sigma, dY_dt=None, d2Y_dZ2=None, chi_half=None):
    """Per-species residual of the governing equation.

    ivp:  dY/dt - sigma
    bvp:  -chi_half * d2Y/dZ2 - sigma
    pde:  dY/dt - chi_half * d2Y/dZ2 - sigma
    """
    n = len(sigma)
    if kind == "ivp":
        return [dY_dt[i] - sigma[i] for i in range(n)]
    if kind == "bvp":
        return [-(chi_half * d2Y_dZ2[i]) - sigma[i] for i in range(n)]
    return [dY_dt[i] - chi_half * d2Y_dZ2[i] - sigma[i] for i in range(n)]


def residual_weights(sigma_values, lam):
    """Down-weighting of fast-chemistry points: 1 / (1 + lam |sigma|).

    Detached by construction (plain arrays in, plain arrays out); the
    weights act as fixed per-point masks during backprop.
    """
    return [1.0 / (1.0 + lam * np.abs(np.asarray(s))) for s in sigma_values]


def causality_weights(slice_loss_values, gamma):
    """w_k = exp(-gamma * sum of slice losses before k); w_1 = 1."""
    acc = np.concatenate([[0.0], np.cumsum(slice_loss_values)[:-1]])
    return np.exp(-gamma * acc)


def _primal(y):
    return y.primal if isinstance(y, ad.Dual) else y


def _tangent(y):
    return y.tangent if isinstance(y, ad.Dual) else 0.0


def _tangent2(y):
    if isinstance(y, ad.Dual) and y.tangent2 is not None:
        return y.tangent2
    return 0.0


def _lane_mean(x):
    if isinstance(x, ad.Node):
        return ad.mean_lanes(x)
    return float(np.mean(x))


def _lane_sum(x, lanes):
    return _lane_mean(x) * float(lanes)


def _species_mean(terms):
    return ad.sum_nodes(terms) * (1.0 / len(terms))


class LossParts:
    """Scalar loss nodes plus the detached values the loop records."""

    def __init__(self, total, physics=0.0, bc=0.0, data=0.0, sigma_values=None):
        self.total = total
        self.physics = physics
        self.bc = bc
        self.data = data
        self.sigma_values = sigma_values

    def value(self, which="total"):
        return float(ad.value_of(getattr(self, which)))


def _sigma_for(model, Y, z, sigma_override):
    frozen = "no_diff_chem" in model.flags
    if sigma_override is not None:
        sigma = list(sigma_override)
    else:
        sigma = model.specific_rates(Y, z=z, frozen=frozen)
        if frozen:
            sigma = [np.asarray(ad.value_of(s), dtype=float) for s in sigma]
    values = [np.asarray(ad.value_of(s), dtype=float) for s in sigma]
    return sigma, values


def _scaled_square(model, resids, sigma_values, lam):
    use_scaling = ("no_res_scaling" not in model.flags
                   and "vanilla_baseline" not in model.flags
                   and "causality_baseline" not in model.flags)
    if use_scaling:
        w = residual_weights(sigma_values, lam)
        return [(w[i] * r) * (w[i] * r) for i, r in enumerate(resids)]
    return [r * r for r in resids]


def physics_loss(model, sq_terms):
    """Mean of the (scaled) squared residuals over points and species."""
    return _species_mean([_lane_mean(s) for s in sq_terms])


def causality_loss(model, sq_terms, axis01, n_slices, gamma):
    """Time-sliced loss with exponentially accumulated weights.

    ``axis01`` maps each collocation point onto [0, 1] along the time axis
    (log-mapped for the reactor problem); slices are uniform in that map.
    """
    lanes = axis01.shape[0]
    idx = np.minimum((axis01 * n_slices).astype(int), n_slices - 1)
    slice_nodes, slice_values = [], []
    for k in range(n_slices):
        mask = (idx == k).astype(float)
        n_k = mask.sum()
        if n_k == 0:
            slice_nodes.append(None)
            slice_values.append(0.0)
            continue
        terms = [_lane_sum(mask * s, lanes) for s in sq_terms]
        node = ad.sum_nodes(terms) * (1.0 / (n_k * len(sq_terms)))
        slice_nodes.append(node)
        slice_values.append(float(ad.value_of(node)))
    w = causality_weights(np.asarray(slice_values), gamma)
    total = ad.sum_nodes([float(w[k]) * node
                          for k, node in enumerate(slice_nodes)
                          if node is not None])
    return total


def _physics_for(model, tape, t, z, alpha, cfg, sigma_override):
    """Physics loss plus the sigma values, for any problem kind."""
    kind = model.kind
    if kind == "ivp":
        tj = ad.Dual(t, 1.0)
        Y = model.predict(tape, t=tj)
        dY_dt = [_tangent(y) for y in Y]
        prim = [_primal(y) for y in Y]
        sigma, sig_val = _sigma_for(model, prim, None, sigma_override)
        resids = residual("ivp", sigma, dY_dt=dY_dt)
        axis01 = ((np.log(t + cfg.eps_log) - np.log(cfg.eps_log))
                  / (np.log(cfg.t_max + cfg.eps_log) - np.log(cfg.eps_log)))
    elif kind == "bvp":
        zj = ad.Dual(z, 1.0, 0.0)
        Y = model.predict(tape, z=zj)
        d2 = [_tangent2(y) for y in Y]
        prim = [_primal(y) for y in Y]
        sigma, sig_val = _sigma_for(model, prim, z, sigma_override)
        chi_half = 0.5 * ch.chi(z, cfg.alpha)
        resids = residual("bvp", sigma, d2Y_dZ2=d2, chi_half=chi_half)
        axis01 = None
    else:
        a_in = alpha if kind == "parametric" else None
        tj = ad.Dual(t, 1.0)
        Yt_pass = model.predict(tape, t=tj, z=z, alpha=a_in)
        dY_dt = [_tangent(y) for y in Yt_pass]
        zj = ad.Dual(z, 1.0, 0.0)
        Yz_pass = model.predict(tape, t=t, z=zj, alpha=a_in)
        d2 = [_tangent2(y) for y in Yz_pass]
        prim = [_primal(y) for y in Yz_pass]
        sigma, sig_val = _sigma_for(model, prim, z, sigma_override)
        if kind == "inverse":
            chi_half = 0.5 * ch.chi(z, 1.0) * model.alpha_node(tape)
        else:
            chi_half = 0.5 * ch.chi(z, alpha if kind == "parametric"
                                    else cfg.alpha)
        resids = residual("pde", sigma, dY_dt=dY_dt, d2Y_dZ2=d2,
                          chi_half=chi_half)
        axis01 = t / cfg.t_max
    sq = _scaled_square(model, resids, sig_val, cfg.lambda_scale)
    if "causality_baseline" in model.flags:
        lf = causality_loss(model, sq, axis01, cfg.causality_slices,
                            cfg.causality_gamma)
    else:
        lf = physics_loss(model, sq)
    return lf, sig_val


def _bvp_boundary_losses(model, tape):
    """Soft Dirichlet and gradient penalties at the domain endpoints."""
    zb = np.array([0.0, 1.0])
    Y = model.predict(tape, z=ad.Dual(zb, 1.0))
    coflow, fuel = model.coflow.Y, model.fuel.Y
    bc_terms = []
    for i in range(model.S):
        target = np.array([coflow[i], fuel[i]])
        diff = _primal(Y[i]) - target
        bc_terms.append(_lane_sum(diff * diff, 2))
    l_bc = ad.sum_nodes(bc_terms)
    i_h2 = model.mech.index["H2"]
    i_o2 = model.mech.index["O2"]
    mask0 = np.array([1.0, 0.0])
    mask1 = np.array([0.0, 1.0])
    dh2 = _tangent(Y[i_h2])
    do2 = _tangent(Y[i_o2])
    l_nm = (_lane_sum(mask0 * (dh2 * dh2), 2)
            + _lane_sum(mask1 * (do2 * do2), 2))
    return l_bc, l_nm


def _data_loss(model, tape, batch):
    """Summed squared misfit against the observations (all species)."""
    Y = model.predict(tape, t=batch["data_t"], z=batch["data_z"])
    obs = batch["data_Y"]
    lanes = obs.shape[0]
    terms = []
    for i in range(model.S):
        diff = Y[i] - obs[:, i]
        terms.append(_lane_sum(diff * diff, lanes))
    return ad.sum_nodes(terms)


def epoch_loss(model, tape, batch, sigma_override=None):
    """Total loss for one epoch's batch; returns LossParts of tape nodes."""
    cfg = model.cfg
    kind = model.kind
    lf, sig_val = _physics_for(model, tape, batch.get("t"), batch.get("z"),
                               batch.get("alpha"), cfg, sigma_override)
    if kind == "bvp":
        l_bc, l_nm = _bvp_boundary_losses(model, tape)
        bc = l_bc + l_nm
        total = cfg.lambda_f * lf + bc
        return LossParts(total, physics=lf, bc=bc, sigma_values=sig_val)
    if kind == "inverse":
        l_data = _data_loss(model, tape, batch)
        total = cfg.lambda_f * lf + l_data
        return LossParts(total, physics=lf, data=l_data, sigma_values=sig_val)
    return LossParts(lf, physics=lf, sigma_values=sig_val)
