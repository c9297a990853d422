"""Training drivers: configuration, the Adam loop, inference, and metrics.

A single RunConfig describes problem, network, and training choices; the
drivers consume it together with a mechanism and stream states and return
parameters plus a per-epoch history.  Reference solutions for evaluation come
from the classical solvers.
"""

import dataclasses
import json

import numpy as np

from .. import autodiff as ad
from .. import chemistry as ch
from .. import oracle as orc
from .. import runio
from . import sampling
from .losses import epoch_loss
from .model import PinnModel, KINDS, FLAGS


class TrainingError(Exception):
    pass


_KIND_DEFAULTS = {
    # lr, epochs, lambda_f
    "ivp": (1e-3, 20000, 1.0),
    "bvp": (1e-3, 20000, 0.1),
    "pde": (5e-4, 50000, 1.0),
    "parametric": (5e-4, 50000, 1.0),
    "inverse": (5e-4, 50000, 1e-3),
}

DEFAULT_Y0 = {"H2": 0.02, "O2": 0.22, "H2O": 0.0, "N2": 0.76}


@dataclasses.dataclass
class RunConfig:
    """Everything one training or solve run depends on.

    Fields left as None pick up the per-kind defaults listed in
    ``_KIND_DEFAULTS`` when the config is resolved.
    """

    kind: str = "ivp"
    # problem
    alpha: float = 1.0
    alpha_min: float = 1.0
    alpha_max: float = 100.0
    alpha_init: float = 5.0
    t_max: float = 0.02
    pressure: float = 101325.0
    temperature: float = 1000.0
    y0: dict = None
    noise: float = 0.0
    data_nt: int = 11
    data_nz: int = 41
    oracle_grid_n: int = 201
    eval_nt: int = 11
    eval_n_time: int = 200
    eval_n_alpha: int = 5
    # network
    width: int = 50
    depth: int = 4
    enc_depth: int = 2
    dec_depth: int = 2
    vanilla_width: int = 70
    # training
    seed: int = 1
    epochs: int = None
    n_col: int = 1024
    lr: float = None
    lambda_scale: float = 1.0
    lambda_f: float = None
    eps_log: float = 1e-8
    causality_slices: int = 32
    causality_gamma: float = 1.0
    # ablation
    flags: tuple = ()
    # chemistry
    mechanism: str = None
    fuel: str = "fuel"
    coflow: str = "coflow"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise TrainingError(f"unknown problem kind {self.kind!r}")
        lr, epochs, lambda_f = _KIND_DEFAULTS[self.kind]
        if self.lr is None:
            self.lr = lr
        if self.epochs is None:
            self.epochs = epochs
        if self.lambda_f is None:
            self.lambda_f = lambda_f
        if self.y0 is None:
            self.y0 = dict(DEFAULT_Y0)
        self.flags = tuple(self.flags)
        for f in self.flags:
            if f not in FLAGS:
                raise TrainingError(f"unknown ablation flag {f!r}")

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise TrainingError(f"unknown config fields: {sorted(extra)}")
        return cls(**d)

    def hash(self):
        return runio.config_hash(self.to_dict())


def load_problem(cfg):
    """Mechanism, streams, and the ordered initial fractions for a config."""
    mech = ch.load_mechanism(cfg.mechanism)
    fuel = coflow = None
    if cfg.kind != "ivp":
        fuel = ch.load_stream(cfg.fuel, mech)
        coflow = ch.load_stream(cfg.coflow, mech)
    return mech, fuel, coflow


def y0_vector(cfg, mech):
    y0 = np.zeros(mech.n_species)
    for name, v in cfg.y0.items():
        if name not in mech.index:
            raise TrainingError(f"initial fraction for unknown species {name!r}")
        y0[mech.index[name]] = float(v)
    return y0


def build_model(cfg, mech=None, fuel=None, coflow=None):
    if mech is None:
        mech, fuel, coflow = load_problem(cfg)
    cfg = dataclasses.replace(cfg)
    cfg.y0 = y0_vector(cfg, mech)
    return PinnModel(cfg, mech, fuel=fuel, coflow=coflow)


class Adam:
    """Standard first-order moment optimizer with bias correction."""

    def __init__(self, n, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, theta, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        mhat = self.m / (1.0 - self.beta1 ** self.t)
        vhat = self.v / (1.0 - self.beta2 ** self.t)
        return theta - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def sample_batch(cfg, rng, observations=None):
    """One epoch's collocation batch for the configured problem kind."""
    if cfg.kind == "ivp":
        return {"t": sampling.sample_ivp(cfg.n_col, cfg.t_max, cfg.eps_log, rng)}
    if cfg.kind == "bvp":
        return {"z": sampling.sample_bvp(cfg.n_col, rng)}
    t, z = sampling.sample_pde(cfg.n_col, cfg.t_max, rng)
    batch = {"t": t, "z": z}
    if cfg.kind == "parametric":
        batch["alpha"] = sampling.sample_alpha(cfg.alpha_min, cfg.alpha_max, rng)
    if cfg.kind == "inverse":
        if observations is None:
            raise TrainingError("the inverse problem needs observations")
        batch["data_t"] = observations["t"]
        batch["data_z"] = observations["z"]
        batch["data_Y"] = observations["Y"]
    return batch


@dataclasses.dataclass
class TrainResult:
    params: np.ndarray
    history: list
    model: PinnModel
    aborted: bool = False
    adam_state: dict = None


def train(cfg, mech=None, fuel=None, coflow=None, observations=None,
          progress=None):
    """Run the Adam loop for ``cfg.epochs`` epochs from a seeded init.

    Returns the final parameters and the per-epoch history rows
    (epoch, loss_total, loss_physics, loss_bc, loss_data, alpha_current).
    On a non-finite loss the loop stops and returns the last finite state
    with ``aborted`` set.
    """
    model = build_model(cfg, mech, fuel, coflow)
    rng = np.random.default_rng(cfg.seed)
    theta = model.init_params(rng)
    adam = Adam(model.n_params, cfg.lr)
    history = []
    aborted = False
    prev = theta.copy()
    for epoch in range(cfg.epochs):
        batch = sample_batch(cfg, rng, observations)
        tape = ad.Tape()
        tape.set_params(theta)
        parts = epoch_loss(model, tape, batch)
        total = parts.value()
        if not np.isfinite(total):
            aborted = True
            theta = prev
            break
        alpha_cur = _current_alpha(model, theta, batch, cfg)
        history.append((epoch, total, parts.value("physics"),
                        parts.value("bc"), parts.value("data"), alpha_cur))
        ad.backward(parts.total)
        prev = theta
        theta = adam.step(theta, tape.param_grad)
        if progress is not None and (epoch + 1) % progress == 0:
            print(f"epoch {epoch + 1}/{cfg.epochs}  loss {total:.6e}")
    adam_state = {"m": adam.m, "v": adam.v, "t": adam.t}
    return TrainResult(theta, history, model, aborted, adam_state)


def _current_alpha(model, theta, batch, cfg):
    if cfg.kind == "inverse":
        return model.alpha_value(theta)
    if cfg.kind == "parametric":
        return float(batch["alpha"])
    if cfg.kind == "ivp":
        return 0.0
    return float(cfg.alpha)


def infer_alpha(observations, cfg, mech=None, fuel=None, coflow=None,
                progress=None):
    """Joint network/strain-rate fit; returns (alpha_hat, result)."""
    if cfg.kind != "inverse":
        raise TrainingError("infer_alpha needs an inverse-problem config")
    res = train(cfg, mech, fuel, coflow, observations=observations,
                progress=progress)
    return res.model.alpha_value(res.params), res


def add_noise(Y, eps_level, rng):
    """Additive per-species noise scaled by each species' spread.

    Perturbs Y[:, j] with eps_level * N(0, std(Y[:, j])); eps_level 0 returns
    the data unchanged.
    """
    Y = np.asarray(Y, dtype=float)
    if eps_level == 0.0:
        return Y.copy()
    std = Y.std(axis=0)
    noise = rng.standard_normal(Y.shape) * std
    return Y + eps_level * noise


def make_observations(cfg, mech, fuel, coflow, alpha_true, rng=None):
    """Synthetic inverse-problem observations from the reference solver."""
    times = np.linspace(0.0, cfg.t_max, cfg.data_nt)
    grid = orc.make_grid(cfg.oracle_grid_n)
    sol = orc.solve_pde_mol(mech, fuel, coflow, alpha_true, cfg.t_max,
                            output_times=times, grid=grid)
    zi = np.linspace(0.0, 1.0, cfg.data_nz)
    cols = np.searchsorted(sol.z, zi)
    cols = np.clip(cols, 0, sol.z.shape[0] - 1)
    tt, zz = np.meshgrid(times, sol.z[cols], indexing="ij")
    Y = sol.Y[:, cols, :].reshape(-1, mech.n_species)
    if cfg.noise > 0.0:
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        Y = add_noise(Y, cfg.noise, rng)
    return {"t": tt.ravel(), "z": zz.ravel(), "Y": Y}


def prediction_temperature(model, Y, z=None):
    """Temperature consistent with the enthalpy closure at predicted Y."""
    Y = np.asarray(Y, dtype=float)
    h = model.enthalpy_at(z)
    Yl = [Y[:, i] for i in range(model.S)]
    return ch.temperature_from_enthalpy(h, Yl, model.mech, clamp=True)


# -- evaluation against the reference solvers ---------------------------------

def metrics(pred, ref, names=None):
    """MAE and relative L2 misfit, jointly and per species.

    Both fields are (points, species) arrays on a common grid.
    """
    pred = np.asarray(pred, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if pred.shape != ref.shape:
        raise TrainingError(f"field shapes differ: {pred.shape} vs {ref.shape}")
    diff = pred - ref
    out = {
        "mae": float(np.abs(diff).mean()),
        "rel_l2": float(np.linalg.norm(diff) / np.linalg.norm(ref)),
    }
    if names is not None:
        per = {}
        for j, name in enumerate(names):
            d = diff[:, j]
            per[name] = {
                "mae": float(np.abs(d).mean()),
                "rel_l2": float(np.linalg.norm(d) / np.linalg.norm(ref[:, j])),
            }
        out["per_species"] = per
    return out


def ivp_eval_times(cfg):
    lo = np.log10(cfg.eps_log)
    hi = np.log10(cfg.t_max)
    return np.concatenate([[0.0], np.logspace(lo, hi, cfg.eval_n_time)])


def reference_ivp(cfg, mech, times=None):
    if times is None:
        times = ivp_eval_times(cfg)
    prob = orc.IgnitionProblem(mech, cfg.temperature, y0_vector(cfg, mech),
                               cfg.pressure)
    sol = prob.solve(float(times[-1]), output_times=times)
    return times, sol.Y


def reference_bvp(cfg, mech, fuel, coflow, alpha=None):
    grid = orc.make_grid(cfg.oracle_grid_n)
    sol = orc.solve_bvp_steady(mech, fuel, coflow,
                               cfg.alpha if alpha is None else alpha,
                               grid=grid)
    return grid, sol.Y[0]


def reference_pde(cfg, mech, fuel, coflow, alpha=None, times=None):
    if times is None:
        times = np.linspace(0.0, cfg.t_max, cfg.eval_nt)
    grid = orc.make_grid(cfg.oracle_grid_n)
    sol = orc.solve_pde_mol(mech, fuel, coflow,
                            cfg.alpha if alpha is None else alpha,
                            float(times[-1]), output_times=times, grid=grid)
    return times, grid, sol.Y


def eval_alphas(cfg):
    return np.exp(np.linspace(np.log(cfg.alpha_min), np.log(cfg.alpha_max),
                              cfg.eval_n_alpha))


def evaluate_run(cfg, params, mech=None, fuel=None, coflow=None,
                 reference=None):
    """Metrics of a trained model against the classical reference.

    ``reference`` short-circuits the solver call with precomputed data
    (matching what the corresponding reference_* helper returns).
    """
    if mech is None:
        mech, fuel, coflow = load_problem(cfg)
    model = build_model(cfg, mech, fuel, coflow)
    names = mech.names
    if cfg.kind == "ivp":
        times, ref = reference if reference is not None \
            else reference_ivp(cfg, mech)
        pred = model.predict_values(params, t=times)
        return metrics(pred, ref, names), {"t": times, "pred": pred, "ref": ref}
    if cfg.kind == "bvp":
        grid, ref = reference if reference is not None \
            else reference_bvp(cfg, mech, fuel, coflow)
        pred = model.predict_values(params, z=grid)
        return metrics(pred, ref, names), {"z": grid, "pred": pred, "ref": ref}
    if cfg.kind in ("pde", "inverse"):
        times, grid, ref = reference if reference is not None \
            else reference_pde(cfg, mech, fuel, coflow)
        tt, zz = np.meshgrid(times, grid, indexing="ij")
        pred = model.predict_values(params, t=tt.ravel(), z=zz.ravel())
        ref2 = ref.reshape(-1, mech.n_species)
        return metrics(pred, ref2, names), {
            "t": times, "z": grid, "pred": pred, "ref": ref2}
    # parametric: aggregate jointly over the evaluation strain rates
    alphas = eval_alphas(cfg)
    preds, refs, per_alpha = [], [], {}
    for k, a in enumerate(alphas):
        if reference is not None:
            times, grid, ref = reference[k]
        else:
            times, grid, ref = reference_pde(cfg, mech, fuel, coflow, alpha=a)
        tt, zz = np.meshgrid(times, grid, indexing="ij")
        pred = model.predict_values(params, t=tt.ravel(), z=zz.ravel(),
                                    alpha=float(a))
        ref2 = ref.reshape(-1, mech.n_species)
        per_alpha[f"{a:.6g}"] = metrics(pred, ref2, names)
        preds.append(pred)
        refs.append(ref2)
    joint = metrics(np.vstack(preds), np.vstack(refs), names)
    joint["per_alpha"] = per_alpha
    return joint, {"alphas": alphas}


# -- checkpoints ---------------------------------------------------------------

def save_checkpoint(path, cfg, result):
    """Parameter vector, optimizer state, and config hash in one npz."""
    np.savez(path,
             params=result.params,
             adam_m=result.adam_state["m"],
             adam_v=result.adam_state["v"],
             adam_t=np.array(result.adam_state["t"]),
             aborted=np.array(int(result.aborted)),
             config_json=np.array(json.dumps(cfg.to_dict(), sort_keys=True)),
             config_hash=np.array(cfg.hash()))


def load_checkpoint(path):
    data = np.load(path, allow_pickle=False)
    cfg = RunConfig.from_dict(json.loads(str(data["config_json"])))
    return cfg, {
        "params": data["params"],
        "adam_m": data["adam_m"],
        "adam_v": data["adam_v"],
        "adam_t": int(data["adam_t"]),
        "aborted": bool(int(data["aborted"])),
        "config_hash": str(data["config_hash"]),
    }
