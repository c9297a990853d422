"""Constrained mass-fraction prediction heads for each problem kind.

A head wraps the raw network outputs in the problem's hard constraints:
initial/boundary interpolants, the pinned inert fraction, and the
normalization that keeps the predicted fractions on the unit simplex.
Ablation flags peel these layers off selectively.
"""

import numpy as np

from .. import autodiff as ad
from .. import chemistry as ch
from .networks import MLP, BranchedNet


class ModelError(Exception):
    pass


KINDS = ("ivp", "bvp", "pde", "parametric", "inverse")

FLAGS = ("no_res_scaling", "no_diff_chem", "no_inert_constraint",
         "no_mass_conservation", "vanilla_baseline", "causality_baseline")


def scale_unit(x, lo, hi):
    """Affine map of [lo, hi] onto [-1, 1]; works on arrays, Nodes, Duals."""
    return (x - lo) * (2.0 / (hi - lo)) - 1.0


def scale_log_time(t, t_max, eps):
    """Logarithmic time input, mapped so t=0 -> -1 and t=t_max -> +1."""
    return scale_unit(ad.log(t + eps), np.log(eps), np.log(t_max + eps))


def scale_alpha(alpha, alpha_min, alpha_max):
    """Log-transformed strain rate mapped onto [-1, 1] over its range."""
    return scale_unit(ad.log(alpha), np.log(alpha_min), np.log(alpha_max))


def _values(x):
    return ad.value_of(x.primal) if isinstance(x, ad.Dual) else ad.value_of(x)


class PinnModel:
    """Network plus constraint head for one problem configuration.

    The flat parameter vector holds the network weights; for the inverse
    problem one extra trailing entry carries the log strain rate.
    """

    def __init__(self, cfg, mech, fuel=None, coflow=None):
        if cfg.kind not in KINDS:
            raise ModelError(f"unknown problem kind {cfg.kind!r}")
        for f in cfg.flags:
            if f not in FLAGS:
                raise ModelError(f"unknown ablation flag {f!r}")
        if cfg.kind == "bvp" and "causality_baseline" in cfg.flags:
            raise ModelError("causality weighting needs a time axis; "
                             "the steady problem has none")
        self.cfg = cfg
        self.mech = mech
        self.kind = cfg.kind
        self.flags = frozenset(cfg.flags)
        self.vanilla = "vanilla_baseline" in self.flags
        self.pin_inert = (not self.vanilla
                          and "no_inert_constraint" not in self.flags)
        self.normalize = (not self.vanilla
                          and "no_mass_conservation" not in self.flags)
        self.S = mech.n_species
        self.inert = mech.inert_index
        self.reactive = list(mech.reactive_indices)
        n_out = len(self.reactive) if self.pin_inert else self.S

        if self.kind == "ivp":
            y0 = np.asarray(cfg.y0, dtype=float)
            if y0.shape != (self.S,) or abs(y0.sum() - 1.0) > 1e-8:
                raise ModelError("initial mass fractions must be one per "
                                 "species and sum to 1")
            self.y0 = y0
            self.h0 = float(ad.value_of(ch.mixture_enthalpy(
                list(y0), cfg.temperature, mech)))
            self.net = MLP([1] + [cfg.width] * cfg.depth + [n_out])
        else:
            if fuel is None or coflow is None:
                raise ModelError(f"{self.kind} needs fuel and coflow streams")
            self.fuel = fuel
            self.coflow = coflow
            if self.kind == "bvp":
                self.net = MLP([1] + [cfg.width] * cfg.depth + [n_out])
            elif self.kind == "parametric":
                if self.vanilla:
                    self.net = MLP([3] + [cfg.vanilla_width] * cfg.depth
                                   + [n_out])
                else:
                    self.net = BranchedNet(2, 1, n_out, width=cfg.width,
                                           enc_depth=cfg.enc_depth,
                                           dec_depth=cfg.dec_depth)
            else:
                self.net = MLP([2] + [cfg.width] * cfg.depth + [n_out])
        self.n_net_params = self.net.n_params
        self.n_params = self.n_net_params + (1 if self.kind == "inverse" else 0)

    # -- parameters -----------------------------------------------------------

    def init_params(self, rng):
        theta = self.net.init_params(rng)
        if self.kind == "inverse":
            theta = np.append(theta, np.log(self.cfg.alpha_init))
        return theta

    def alpha_node(self, tape):
        """Learnable strain rate of the inverse problem, as a tape node."""
        if self.kind != "inverse":
            raise ModelError("only the inverse problem learns the strain rate")
        return ad.exp(tape.param_leaf(self.n_params - 1))

    def alpha_value(self, theta):
        return float(np.exp(theta[self.n_params - 1]))

    # -- constraint head ------------------------------------------------------

    def _assemble(self, raw, tilde_of, inert_frac):
        """Apply the constraint stack to raw network outputs.

        ``tilde_of(raw_i, i)`` builds the pre-normalization prediction for
        output slot i; ``inert_frac`` is the pinned inert fraction (or None
        when the network predicts it).
        """
        if self.pin_inert:
            tilde = [tilde_of(raw[k], i) for k, i in enumerate(self.reactive)]
            if self.normalize:
                tilde = _normalized(tilde, 1.0 - inert_frac)
            out = [None] * self.S
            for k, i in enumerate(self.reactive):
                out[i] = tilde[k]
            out[self.inert] = inert_frac
            return out
        tilde = [tilde_of(raw[i], i) for i in range(self.S)]
        if self.normalize:
            tilde = _normalized(tilde, 1.0)
        return tilde

    def predict_ivp(self, tape, t):
        """Species fractions at times ``t`` (array or Dual jet in t)."""
        x = scale_log_time(t, self.cfg.t_max, self.cfg.eps_log)
        raw = self.net.forward(tape, [x])
        y0 = self.y0
        inert = None if not self.pin_inert else y0[self.inert]
        return self._assemble(raw, lambda f, i: y0[i] + t * f, inert)

    def _flamelet_parts(self, z):
        yf, yc = self.fuel.Y, self.coflow.Y
        inert = (z * yf[self.inert] + (1.0 - z) * yc[self.inert])
        blend = lambda i: z * yf[i] + (1.0 - z) * yc[i]
        return inert, blend

    def predict_bvp(self, tape, z):
        x = scale_unit(z, 0.0, 1.0)
        raw = self.net.forward(tape, [x])
        inert, _ = self._flamelet_parts(z)
        return self._assemble(raw, lambda f, i: f,
                              inert if self.pin_inert else None)

    def predict_pde(self, tape, t, z, alpha=None):
        """Field prediction; exactly one of t, z may carry a jet.

        ``alpha`` is the parametric input value (plain float), ignored for
        the fixed-strain kinds.
        """
        xt = scale_unit(t, 0.0, self.cfg.t_max)
        xz = scale_unit(z, 0.0, 1.0)
        if self.kind == "parametric":
            lanes = np.shape(_values(z))[0]
            xa = np.full(lanes, scale_alpha(alpha, self.cfg.alpha_min,
                                            self.cfg.alpha_max))
            if self.vanilla:
                raw = self.net.forward(tape, [xt, xz, xa])
            else:
                raw = self.net.forward(tape, [xt, xz], [xa])
        else:
            raw = self.net.forward(tape, [xt, xz])
        inert, blend = self._flamelet_parts(z)
        bump = (t * (1.0 / self.cfg.t_max)) * z * (1.0 - z)
        return self._assemble(raw, lambda f, i: blend(i) + f * bump,
                              inert if self.pin_inert else None)

    def predict(self, tape, t=None, z=None, alpha=None):
        if self.kind == "ivp":
            return self.predict_ivp(tape, t)
        if self.kind == "bvp":
            return self.predict_bvp(tape, z)
        return self.predict_pde(tape, t, z, alpha)

    # -- plain evaluation -----------------------------------------------------

    def predict_values(self, theta, t=None, z=None, alpha=None):
        """Constraint-complete prediction as a plain (lanes, S) array."""
        if self.kind == "ivp":
            t = np.asarray(t, dtype=float)
            x = scale_log_time(t, self.cfg.t_max, self.cfg.eps_log)
            raw = self.net.forward_plain(theta[:self.n_net_params], x)
            tilde_of = lambda f, i: self.y0[i] + t * f
            inert = self.y0[self.inert] if self.pin_inert else None
            lanes = t.shape[0]
        elif self.kind == "bvp":
            z = np.asarray(z, dtype=float)
            raw = self.net.forward_plain(theta, scale_unit(z, 0.0, 1.0))
            tilde_of = lambda f, i: f
            inert, _ = self._flamelet_parts(z)
            lanes = z.shape[0]
        else:
            t = np.asarray(t, dtype=float)
            z = np.asarray(z, dtype=float)
            xt = scale_unit(t, 0.0, self.cfg.t_max)
            xz = scale_unit(z, 0.0, 1.0)
            th = theta[:self.n_net_params]
            if self.kind == "parametric":
                xa = np.full(1, scale_alpha(alpha, self.cfg.alpha_min,
                                            self.cfg.alpha_max))
                if self.vanilla:
                    raw = self.net.forward_plain(
                        th, np.vstack([xt, xz, np.full_like(xt, xa[0])]))
                else:
                    raw = self.net.forward_plain(th, np.vstack([xt, xz]),
                                                 xa[None, :])
            else:
                raw = self.net.forward_plain(th, np.vstack([xt, xz]))
            inert, blend = self._flamelet_parts(z)
            bump = (t / self.cfg.t_max) * z * (1.0 - z)
            tilde_of = lambda f, i: blend(i) + f * bump
            lanes = z.shape[0]

        if self.pin_inert:
            tilde = np.stack([np.broadcast_to(tilde_of(raw[k], i), (lanes,))
                              for k, i in enumerate(self.reactive)])
            if self.normalize:
                s = tilde.sum(axis=0)
                _check_positive(s)
                tilde = tilde * ((1.0 - inert) / s)
            out = np.empty((lanes, self.S))
            for k, i in enumerate(self.reactive):
                out[:, i] = tilde[k]
            out[:, self.inert] = inert
            return out
        tilde = np.stack([np.broadcast_to(tilde_of(raw[i], i), (lanes,))
                          for i in range(self.S)])
        if self.normalize:
            s = tilde.sum(axis=0)
            _check_positive(s)
            tilde = tilde / s
        return tilde.T.copy()

    # -- chemistry ------------------------------------------------------------

    def enthalpy_at(self, z):
        """Mixture enthalpy pinned by the mixing line (plain values)."""
        if self.kind == "ivp":
            return self.h0
        zv = _values(z)
        return zv * self.fuel.h + (1.0 - zv) * self.coflow.h

    def specific_rates(self, Y, z=None, frozen=False):
        """Specific production rates at the predicted composition.

        ``Y`` holds per-species predictions (Duals allowed; their primal is
        used).  With ``frozen`` the rates are computed from detached values
        and returned as plain arrays, cutting the chemistry out of the
        gradient path.
        """
        prim = [y.primal if isinstance(y, ad.Dual) else y for y in Y]
        if frozen:
            prim = [np.clip(_values(y), 0.0, None) for y in Y]
        h = self.enthalpy_at(z)
        T = ch.temperature_from_enthalpy(h, prim, self.mech, clamp=True)
        state = ch.MixtureState(p=self.cfg.pressure, Y=prim, T=T)
        _, sigma, _ = ch.species_rates(state, self.mech, return_aux=True)
        return sigma


def _normalized(tilde, target_sum):
    total = ad.sum_nodes(tilde)
    _check_positive(_values(total))
    inv = target_sum / total
    return [y * inv for y in tilde]


def _check_positive(total):
    if np.any(np.asarray(total) <= 0.0):
        raise ModelError("pre-normalization mass-fraction sum is not positive; "
                         "the run has blown up")
