"""Thermochemistry and kinetics for nitrogen-diluted hydrogen oxidation.

NASA-7 polynomial thermodynamics, reversible mass-action kinetics with
equilibrium-based reverse rates, ideal-gas mixture relations, and the
mixing-line scalar dissipation profile used by the diffusion problems.

All public quantities are SI on a kmol basis: molar enthalpy in J/kmol,
molar heat capacity in J/(kmol K), concentrations in kmol/m^3, rate
constants in m-kmol-s units (converted once from the mole-cm-s units of the
mechanism file).  Formulas accept plain floats/arrays, tape nodes, and duals
interchangeably.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import autodiff as ad
from .autodiff import value_of

RU = 8314.462618        # J/(kmol K)
P_REF = 101325.0        # Pa, reference pressure of the NASA fits
SQRT_PI = math.sqrt(math.pi)


class ChemistryError(RuntimeError):
    """Invalid mechanism data or thermodynamic state."""


class TemperatureRangeError(ChemistryError):
    """Temperature outside the validity range of a NASA-7 fit."""


class ConvergenceError(ChemistryError):
    """Iterative solve (temperature recovery, erfc inverse) failed."""


@dataclass
class SpeciesThermo:
    name: str
    W: float                      # kg/kmol
    nasa_low: np.ndarray          # 7 coefficients, T <= T_mid
    nasa_high: np.ndarray         # 7 coefficients, T > T_mid
    T_mid: float
    T_range: tuple[float, float]
    elements: dict[str, int] = field(default_factory=dict)


@dataclass
class Reaction:
    nu_forward: dict[str, int]
    nu_backward: dict[str, int]
    A: float                      # pre-exponential, mole-cm-s units
    beta: float
    Ea: float
    Ea_units: str
    reversible: bool
    A_si: float = 0.0             # converted, m-kmol-s units
    Ea_K: float = 0.0             # activation temperature Ea/R, K


@dataclass
class Mechanism:
    species: list[SpeciesThermo]
    reactions: list[Reaction]
    inert: str
    R_cal: float
    rate_units: str
    source: str = ""

    def __post_init__(self):
        self.names = [s.name for s in self.species]
        self.index = {n: i for i, n in enumerate(self.names)}
        self.W = np.array([s.W for s in self.species])
        if self.inert not in self.index:
            raise ChemistryError(f"inert species {self.inert!r} not in mechanism")
        self.inert_index = self.index[self.inert]
        self.reactive_indices = [i for i, n in enumerate(self.names) if n != self.inert]
        lo = max(s.T_range[0] for s in self.species)
        hi = min(s.T_range[1] for s in self.species)
        self.T_bounds = (lo, hi)
        for r in self.reactions:
            order = sum(r.nu_forward.values())
            r.A_si = r.A * (1e-3) ** (order - 1)
            r.Ea_K = _activation_temperature(r.Ea, r.Ea_units, self.R_cal)
            for n in list(r.nu_forward) + list(r.nu_backward):
                if n not in self.index:
                    raise ChemistryError(f"reaction references unknown species {n!r}")
        # signed stoichiometry per species per reaction
        self.nu = np.zeros((len(self.species), len(self.reactions)))
        for j, r in enumerate(self.reactions):
            for n, v in r.nu_forward.items():
                self.nu[self.index[n], j] -= v
            for n, v in r.nu_backward.items():
                self.nu[self.index[n], j] += v

    @property
    def n_species(self):
        return len(self.species)


def _activation_temperature(Ea, units, r_cal):
    if units == "cal/mol":
        return Ea / r_cal
    if units == "J/mol":
        return Ea / (RU / 1000.0)
    if units == "kJ/mol":
        return Ea * 1000.0 / (RU / 1000.0)
    if units == "K":
        return Ea
    raise ChemistryError(f"unsupported Ea_units {units!r}")


@dataclass
class MixtureState:
    """Thermodynamic state: pressure, mass fractions, and T or h (one resolved)."""
    p: float
    Y: list
    T: object = None
    h: object = None


@dataclass
class StreamState:
    """A boundary stream: given as mole fractions, converted once to mass basis."""
    name: str
    T: float
    p: float
    X: np.ndarray
    Y: np.ndarray
    h: float                      # J/kg
    W_bar: float


# -- mechanism and stream loading ---------------------------------------------

def _require(d, key, where):
    if key not in d:
        raise ChemistryError(f"{where}: missing field {key!r}")
    return d[key]


def load_mechanism(path=None):
    """Load a mechanism JSON file; defaults to the packaged hydrogen mechanism."""
    if path is None:
        text = resources.files("flamelet_pinn.data").joinpath("h2_onestep.json").read_text()
        source = "packaged:h2_onestep.json"
    else:
        with open(path, "r") as f:
            text = f.read()
        source = str(path)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ChemistryError(f"{source}: not valid JSON ({e})") from e
    species = []
    for sp in _require(raw, "species", source):
        where = f"{source}:species[{sp.get('name', '?')}]"
        low = np.asarray(_require(sp, "nasa_low", where), dtype=float)
        high = np.asarray(_require(sp, "nasa_high", where), dtype=float)
        if low.shape != (7,) or high.shape != (7,):
            raise ChemistryError(f"{where}: NASA-7 coefficient arrays must have length 7")
        rng = _require(sp, "T_range", where)
        species.append(SpeciesThermo(
            name=_require(sp, "name", where),
            W=float(_require(sp, "W", where)),
            nasa_low=low, nasa_high=high,
            T_mid=float(_require(sp, "T_mid", where)),
            T_range=(float(rng[0]), float(rng[1])),
            elements={k: int(v) for k, v in sp.get("elements", {}).items()},
        ))
    reactions = []
    for i, rx in enumerate(_require(raw, "reactions", source)):
        where = f"{source}:reactions[{i}]"
        reactions.append(Reaction(
            nu_forward={k: int(v) for k, v in _require(rx, "nu_forward", where).items()},
            nu_backward={k: int(v) for k, v in _require(rx, "nu_backward", where).items()},
            A=float(_require(rx, "A", where)),
            beta=float(rx.get("beta", 0.0)),
            Ea=float(_require(rx, "Ea", where)),
            Ea_units=rx.get("Ea_units", "cal/mol"),
            reversible=bool(rx.get("reversible", True)),
        ))
    return Mechanism(
        species=species,
        reactions=reactions,
        inert=_require(raw, "inert", source),
        R_cal=float(raw.get("R_cal", 1.98720425864083)),
        rate_units=raw.get("rate_units", "mole-cm-s"),
        source=source,
    )


def load_stream(path_or_name, mech):
    """Load a stream JSON file ({T, pressure, mole_fractions}) onto mass basis.

    ``path_or_name`` may be a filesystem path or one of the packaged names
    "fuel" / "coflow".
    """
    if path_or_name in ("fuel", "coflow"):
        text = resources.files("flamelet_pinn.data").joinpath(
            f"stream_{path_or_name}.json").read_text()
        source = f"packaged:{path_or_name}"
    else:
        with open(path_or_name, "r") as f:
            text = f.read()
        source = str(path_or_name)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ChemistryError(f"{source}: not valid JSON ({e})") from e
    T = float(_require(raw, "T", source))
    p = float(_require(raw, "pressure", source))
    xf = _require(raw, "mole_fractions", source)
    X = np.zeros(mech.n_species)
    for name, v in xf.items():
        if name not in mech.index:
            raise ChemistryError(f"{source}: unknown species {name!r}")
        X[mech.index[name]] = float(v)
    if abs(X.sum() - 1.0) > 1e-8:
        raise ChemistryError(f"{source}: mole fractions sum to {X.sum()!r}, expected 1")
    Y = mole_to_mass(X, mech)
    h = float(mixture_enthalpy(list(Y), T, mech))
    return StreamState(name=raw.get("description", source), T=T, p=p, X=X, Y=Y,
                       h=h, W_bar=float(X @ mech.W))


def mole_to_mass(X, mech):
    """Mass fractions from mole fractions: Y_i = X_i W_i / sum_j X_j W_j."""
    X = np.asarray(X, dtype=float)
    wbar = X @ mech.W
    if wbar <= 0:
        raise ChemistryError("mole fractions give a non-positive mean molar mass")
    return X * mech.W / wbar


# -- NASA-7 thermodynamics ----------------------------------------------------

def _check_range(sp, T):
    tv = np.asarray(value_of(T) if not isinstance(T, ad.Dual) else value_of(T.primal))
    lo, hi = sp.T_range
    if np.any(tv < lo) or np.any(tv > hi):
        bad = float(tv.min()) if np.any(tv < lo) else float(tv.max())
        raise TemperatureRangeError(
            f"T = {bad} K outside NASA range [{lo}, {hi}] K for {sp.name}")


def _powers(T):
    T2 = T * T
    return T, T2, T2 * T, T2 * T2


def _branch_mask(sp, T):
    tv = value_of(T.primal if isinstance(T, ad.Dual) else T)
    return np.asarray(tv) <= sp.T_mid


def _eval_cp_R(a, T, T2, T3, T4):
    return a[0] + a[1] * T + a[2] * T2 + a[3] * T3 + a[4] * T4


def _eval_h_RT(a, T, T2, T3, T4):
    return (a[0] + a[1] / 2.0 * T + a[2] / 3.0 * T2 + a[3] / 4.0 * T3
            + a[4] / 5.0 * T4 + a[5] / T)


def _eval_s_R(a, logT, T, T2, T3, T4):
    return (a[0] * logT + a[1] * T + a[2] / 2.0 * T2 + a[3] / 3.0 * T3
            + a[4] / 4.0 * T4 + a[6])


def nasa_cp(sp, T):
    """Molar heat capacity of one species, J/(kmol K)."""
    _check_range(sp, T)
    T1, T2, T3, T4 = _powers(T)
    lo = _eval_cp_R(sp.nasa_low, T1, T2, T3, T4)
    hi = _eval_cp_R(sp.nasa_high, T1, T2, T3, T4)
    return RU * ad.select(_branch_mask(sp, T), lo, hi)


def nasa_h(sp, T):
    """Molar enthalpy of one species (formation + sensible), J/kmol."""
    _check_range(sp, T)
    T1, T2, T3, T4 = _powers(T)
    lo = _eval_h_RT(sp.nasa_low, T1, T2, T3, T4)
    hi = _eval_h_RT(sp.nasa_high, T1, T2, T3, T4)
    return RU * (T * ad.select(_branch_mask(sp, T), lo, hi))


def nasa_s(sp, T):
    """Molar entropy of one species at the reference pressure, J/(kmol K)."""
    _check_range(sp, T)
    T1, T2, T3, T4 = _powers(T)
    logT = ad.log(T)
    lo = _eval_s_R(sp.nasa_low, logT, T1, T2, T3, T4)
    hi = _eval_s_R(sp.nasa_high, logT, T1, T2, T3, T4)
    return RU * ad.select(_branch_mask(sp, T), lo, hi)


def mixture_enthalpy(Y, T, mech):
    """Specific enthalpy of the mixture, J/kg: sum_i Y_i h_i(T) / W_i."""
    terms = [Y[i] * (nasa_h(sp, T) / sp.W) for i, sp in enumerate(mech.species)]
    return ad.sum_nodes(terms)


def mixture_cp_mass(Y, T, mech):
    """Specific heat of the mixture, J/(kg K)."""
    terms = [Y[i] * (nasa_cp(sp, T) / sp.W) for i, sp in enumerate(mech.species)]
    return ad.sum_nodes(terms)


def _cp_mass_plain(Yv, Tv, mech):
    total = np.zeros_like(Tv)
    for i, sp in enumerate(mech.species):
        T1, T2, T3, T4 = _powers(Tv)
        lo = _eval_cp_R(sp.nasa_low, T1, T2, T3, T4)
        hi = _eval_cp_R(sp.nasa_high, T1, T2, T3, T4)
        total += Yv[i] * RU * np.where(Tv <= sp.T_mid, lo, hi) / sp.W
    return total


def _h_mass_plain(Yv, Tv, mech):
    total = np.zeros_like(Tv)
    for i, sp in enumerate(mech.species):
        T1, T2, T3, T4 = _powers(Tv)
        lo = _eval_h_RT(sp.nasa_low, T1, T2, T3, T4)
        hi = _eval_h_RT(sp.nasa_high, T1, T2, T3, T4)
        total += Yv[i] * RU * Tv * np.where(Tv <= sp.T_mid, lo, hi) / sp.W
    return total


def _h_species_plain(Tv, mech):
    out = np.empty((mech.n_species,) + np.shape(Tv))
    for i, sp in enumerate(mech.species):
        T1, T2, T3, T4 = _powers(Tv)
        lo = _eval_h_RT(sp.nasa_low, T1, T2, T3, T4)
        hi = _eval_h_RT(sp.nasa_high, T1, T2, T3, T4)
        out[i] = RU * Tv * np.where(Tv <= sp.T_mid, lo, hi)
    return out


def temperature_from_enthalpy(h, Y, mech, T_guess=None, tol=1e-10, max_iter=100,
                              clamp=False):
    """Invert mixture enthalpy for temperature by safeguarded Newton iteration.

    Converges when |h(T) - h| <= tol * max(|h|, 1) or the safeguarding
    bracket collapses to rounding width (the residual is evaluation-noise
    limited when the target sits near the mixture's enthalpy zero).  With
    ``clamp`` the result is pinned to the mechanism temperature bounds when
    ``h`` is unattainable (gradient is zeroed there); otherwise that raises
    ConvergenceError.
    When ``h`` or any ``Y[i]`` is a tape node the result is a tape node with
    implicit-function partials dT/dh = 1/cp and dT/dY_i = -h_i(T)/(W_i cp).
    """
    hv = np.asarray(value_of(h), dtype=float)
    scalar_in = hv.ndim == 0 and all(np.ndim(value_of(y)) == 0 for y in Y)
    lanes = max([1] + [np.shape(value_of(y))[0] for y in Y if np.ndim(value_of(y)) == 1]
                + ([hv.shape[0]] if hv.ndim == 1 else []))
    hv = np.broadcast_to(hv, (lanes,)).astype(float)
    Yv = np.empty((mech.n_species, lanes))
    for i, y in enumerate(Y):
        Yv[i] = value_of(y)
    lo, hi = mech.T_bounds
    if T_guess is None:
        T = np.full(lanes, 0.5 * (lo + hi))
    else:
        T = np.broadcast_to(np.asarray(T_guess, dtype=float), (lanes,)).copy()
    T = np.clip(T, lo, hi)
    blo = np.full(lanes, lo)
    bhi = np.full(lanes, hi)
    scale = np.maximum(np.abs(hv), 1.0)
    glo = _h_mass_plain(Yv, blo, mech) - hv
    ghi = _h_mass_plain(Yv, bhi, mech) - hv
    below = glo > 0.0      # target colder than the fit range allows
    above = ghi < 0.0
    out_of_range = below | above
    if np.any(out_of_range) and not clamp:
        raise ConvergenceError(
            "enthalpy not attainable inside the mechanism temperature range "
            f"[{lo}, {hi}] K")
    converged = np.zeros(lanes, dtype=bool)
    converged |= out_of_range
    T[below] = lo
    T[above] = hi
    eps_T = 256.0 * np.finfo(float).eps
    for _ in range(max_iter):
        g = _h_mass_plain(Yv, T, mech) - hv
        converged |= np.abs(g) <= tol * scale
        if converged.all():
            break
        # keep the bracket consistent, bisect when Newton leaves it
        neg = g < 0.0
        blo = np.where(~converged & neg, T, blo)
        bhi = np.where(~converged & ~neg, T, bhi)
        converged |= (bhi - blo) <= eps_T * bhi
        if converged.all():
            break
        cp = _cp_mass_plain(Yv, T, mech)
        step = g / cp
        Tn = T - step
        bad = (Tn <= blo) | (Tn >= bhi)
        Tn = np.where(bad, 0.5 * (blo + bhi), Tn)
        T = np.where(converged, T, Tn)
    else:
        raise ConvergenceError(
            f"temperature recovery did not converge in {max_iter} iterations")

    node_parents = [(y, i) for i, y in enumerate(Y) if isinstance(y, ad.Node)]
    h_is_node = isinstance(h, ad.Node)
    if not node_parents and not h_is_node:
        return float(T[0]) if scalar_in else T
    cp = _cp_mass_plain(Yv, T, mech)
    live = (~out_of_range).astype(float)
    parents, partials = [], []
    if h_is_node:
        parents.append(h)
        partials.append(live / cp)
    if node_parents:
        h_sp = _h_species_plain(T, mech)
        for y, i in node_parents:
            parents.append(y)
            partials.append(-(h_sp[i] / mech.species[i].W) / cp * live)
    tape = parents[0].tape
    return tape.implicit_root(T, parents, partials, op="temperature_root")


def resolve_temperature(state, mech, **kw):
    """Fill in state.T from state.h when needed; returns the temperature."""
    if state.T is None:
        if state.h is None:
            raise ChemistryError("state needs T or h")
        state.T = temperature_from_enthalpy(state.h, state.Y, mech, **kw)
    return state.T


# -- kinetics ------------------------------------------------------------------

def arrhenius_rate(rxn, T):
    """Forward rate constant in m-kmol-s units: A T^beta exp(-Ea/(R T))."""
    k = ad.exp(-rxn.Ea_K / T) * rxn.A_si
    if rxn.beta != 0.0:
        k = k * T ** rxn.beta
    return k


def equilibrium_constant(rxn, T, mech):
    """Concentration equilibrium constant K_c = K_p (p_ref/(R_u T))^dnu."""
    T1, T2, T3, T4 = _powers(T)
    logT = ad.log(T)
    dnu = 0
    ds_R = 0.0
    dh_RT = 0.0
    for names, sign in ((rxn.nu_backward, 1.0), (rxn.nu_forward, -1.0)):
        for n, v in names.items():
            sp = mech.species[mech.index[n]]
            _check_range(sp, T)
            mask = _branch_mask(sp, T)
            h = ad.select(mask, _eval_h_RT(sp.nasa_low, T1, T2, T3, T4),
                          _eval_h_RT(sp.nasa_high, T1, T2, T3, T4))
            s = ad.select(mask, _eval_s_R(sp.nasa_low, logT, T1, T2, T3, T4),
                          _eval_s_R(sp.nasa_high, logT, T1, T2, T3, T4))
            ds_R = ds_R + (sign * v) * s
            dh_RT = dh_RT + (sign * v) * h
            dnu += int(sign * v)
    kp = ad.exp(ds_R - dh_RT)
    if dnu == 0:
        return kp
    return kp * (P_REF / RU) ** dnu * T ** (-dnu)


def backward_rate(rxn, T, mech):
    """Reverse rate constant k_b = k_f / K_c; zero for irreversible reactions."""
    if not rxn.reversible:
        return 0.0
    return arrhenius_rate(rxn, T) / equilibrium_constant(rxn, T, mech)


def _int_power(c, n):
    out = None
    for _ in range(n):
        out = c if out is None else out * c
    return 1.0 if out is None else out


def mean_molar_mass(Y, mech):
    terms = [Y[i] / mech.species[i].W for i in range(mech.n_species)]
    return 1.0 / ad.sum_nodes(terms)


def element_matrix(mech):
    """Elemental mass composition of each species.

    Returns (element names, E) with E[e, i] the mass of element e per unit
    mass of species i; E @ Y gives elemental mass fractions and E @ omega
    the elemental production rates (zero for any balanced mechanism).
    Atomic masses are recovered from the species molar masses.
    """
    elements = sorted({e for sp in mech.species for e in sp.elements})
    counts = np.array([[sp.elements.get(e, 0) for e in elements]
                       for sp in mech.species], dtype=float)
    W = np.array([sp.W for sp in mech.species])
    atomic, *_ = np.linalg.lstsq(counts, W, rcond=None)
    return elements, (counts * atomic).T / W


def density(p, T, Y, mech):
    """Ideal-gas density rho = p W_bar / (R_u T), kg/m^3."""
    return p * mean_molar_mass(Y, mech) / (RU * T)


def species_rates(state, mech, return_aux=False):
    """Net volumetric production rates omega_i, kg/(m^3 s), one per species.

    The state temperature must be resolved.  With ``return_aux`` the specific
    rates sigma_i = omega_i / rho (1/s) and the density are returned too.
    """
    if state.T is None:
        raise ChemistryError("species_rates needs a resolved temperature")
    for y in state.Y:
        yv = np.asarray(value_of(y))
        if np.any(yv < -1e-12):
            raise ChemistryError(f"mass fraction below -1e-12: {float(yv.min())}")
    if not (state.p > 0):
        raise ChemistryError(f"non-positive pressure {state.p!r}")
    T = state.T
    rho = density(state.p, T, state.Y, mech)
    conc = [rho * state.Y[i] / mech.species[i].W for i in range(mech.n_species)]
    progress = []
    for rxn in mech.reactions:
        kf = arrhenius_rate(rxn, T)
        fwd = kf
        for n, v in rxn.nu_forward.items():
            fwd = fwd * _int_power(conc[mech.index[n]], v)
        if rxn.reversible:
            kb = backward_rate(rxn, T, mech)
            rev = kb
            for n, v in rxn.nu_backward.items():
                rev = rev * _int_power(conc[mech.index[n]], v)
            progress.append(fwd - rev)
        else:
            progress.append(fwd)
    omega = []
    for i, sp in enumerate(mech.species):
        terms = [float(mech.nu[i, j] * sp.W) * q
                 for j, q in enumerate(progress) if mech.nu[i, j] != 0.0]
        omega.append(ad.sum_nodes(terms) if terms else _zero_like(T))
    if not return_aux:
        return omega
    sigma = [w / rho if not _is_plain_zero(w) else w for w in omega]
    return omega, sigma, rho


def _zero_like(ref):
    v = value_of(ref)
    return np.zeros_like(v) if isinstance(v, np.ndarray) else 0.0


def _is_plain_zero(x):
    return not isinstance(x, (ad.Node, ad.Dual)) and np.all(np.asarray(x) == 0.0)


# -- scalar dissipation and the complementary error function ------------------

def erfc(x):
    """Complementary error function, series for |x| < 2, continued fraction above.

    Plain numpy only; accurate to ~1e-15 absolute.
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    ax = np.abs(x)
    out = np.empty_like(ax)

    small = ax < 2.0
    if np.any(small):
        s = ax[small]
        s2 = s * s
        term = s.copy()             # x^(2n+1)/n! piece, n = 0
        total = term.copy()         # sum of term/(2n+1), n = 0 has factor 1
        for n in range(1, 64):
            term *= -s2 / n
            contrib = term / (2 * n + 1)
            total += contrib
            if np.all(np.abs(contrib) < 1e-18):
                break
        out[small] = 1.0 - (2.0 / SQRT_PI) * total

    large = ~small
    if np.any(large):
        s = ax[large]
        # descending continued fraction: erfc = exp(-x^2)/sqrt(pi) / (x + 1/2/(x + 1/(x + 3/2/(x + ...))))
        b = s.copy()
        for n in range(60, 0, -1):
            b = s + (0.5 * n) / b
        out[large] = np.exp(-s * s) / SQRT_PI / b

    out = np.where(x < 0.0, 2.0 - out, out)
    return float(out[0]) if scalar else out


def erfc_inv(y, tol=1e-12):
    """Inverse of erfc on (0, 2) by bisection; |erfc(x) - y| < tol guaranteed.

    Mirrored around y = 1 so erfc_inv(2 - y) = -erfc_inv(y) exactly.
    """
    y = np.asarray(y, dtype=float)
    scalar = y.ndim == 0
    y = np.atleast_1d(y)
    if np.any(y <= 0.0) or np.any(y >= 2.0):
        raise ChemistryError("erfc_inv requires arguments in the open interval (0, 2)")
    sign = np.where(y > 1.0, -1.0, 1.0)
    yr = np.where(y > 1.0, 2.0 - y, y)       # now in (0, 1]
    lo = np.zeros_like(yr)
    hi = np.full_like(yr, 2.0)
    # grow the bracket until erfc(hi) < yr everywhere it needs to
    for _ in range(8):
        mask = erfc(hi) > yr
        if not np.any(mask):
            break
        hi = np.where(mask, hi * 2.0, hi)
    for _ in range(90):
        mid = 0.5 * (lo + hi)
        too_high = erfc(mid) > yr            # erfc decreasing: root right of mid
        lo = np.where(too_high, mid, lo)
        hi = np.where(too_high, hi, mid)
    x = 0.5 * (lo + hi)
    if np.any(np.abs(erfc(x) - yr) >= tol):
        raise ConvergenceError("erfc_inv bisection failed to reach tolerance")
    x = sign * x
    x = np.where(y == 1.0, 0.0, x)
    return float(x[0]) if scalar else x


def chi(Z, alpha):
    """Scalar dissipation profile chi(Z) = (alpha/pi) exp(-2 erfc_inv(2 Z)^2).

    Z is plain data in [0, 1] (endpoints give the limit value 0); ``alpha``
    may be a tape node, making the profile linear in the dissipation scale.
    """
    Z = np.asarray(Z, dtype=float)
    scalar = Z.ndim == 0
    Z = np.atleast_1d(Z)
    if np.any(Z < 0.0) or np.any(Z > 1.0):
        raise ChemistryError("mixture fraction outside [0, 1]")
    interior = (Z > 0.0) & (Z < 1.0)
    shape = np.zeros_like(Z)
    if np.any(interior):
        x = erfc_inv(2.0 * Z[interior])
        shape[interior] = np.exp(-2.0 * x * x) / math.pi
    if scalar:
        shape = float(shape[0])
    return alpha * shape
