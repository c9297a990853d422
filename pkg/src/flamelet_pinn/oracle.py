"""Classical stiff reference solvers: ignition trajectories and flamelet fields.

The time integrator is TR-BDF2 written as a three-stage ESDIRK (one-leg
trapezoidal stage then BDF2, shared diagonal d = 1 - sqrt(2)/2), L-stable,
with the third-order embedded error estimate filtered through the stage
matrix (I - d h J).  Newton systems reuse an analytic Jacobian assembled from
reverse-mode sweeps of the chemistry; the method-of-lines discretization
keeps node-major unknown ordering so the Jacobian stays banded with
bandwidth 4 (one species block) on each side.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve, solve_banded

from . import autodiff as ad
from . import chemistry as ch

GAMMA = 2.0 - math.sqrt(2.0)
D_STAGE = GAMMA / 2.0
W_B = math.sqrt(2.0) / 4.0
B_MAIN = (W_B, W_B, D_STAGE)
B_ERR = ((math.sqrt(2.0) - 1.0) / 3.0, -1.0 / 3.0, (2.0 - math.sqrt(2.0)) / 3.0)


class OracleError(RuntimeError):
    """Reference-solver failure."""


class IntegrationError(OracleError):
    """Adaptive integration could not proceed (step-size underflow etc.)."""


class RhsEvaluationError(OracleError):
    """Right-hand side not evaluable at a trial state; step will be retried."""


@dataclass
class IntegrationResult:
    t: np.ndarray
    y: np.ndarray
    n_steps: int = 0
    n_rejected: int = 0
    n_fev: int = 0
    n_jev: int = 0


class _LinearSolver:
    """Factor and apply (I - c J) for dense or banded Jacobians."""

    def __init__(self, banded):
        self.banded = banded          # None or (l, u)
        self._fac = None
        self._ab = None

    def factor(self, J, c):
        if self.banded is None:
            M = -c * J
            M[np.diag_indices_from(M)] += 1.0
            self._fac = lu_factor(M)
        else:
            ab = -c * J
            ab[self.banded[1]] += 1.0
            self._ab = ab

    def solve(self, b):
        if self.banded is None:
            return lu_solve(self._fac, b)
        return solve_banded(self.banded, self._ab, b)


def _hermite(t0, y0, f0, t1, y1, f1, s):
    h = t1 - t0
    th = (s - t0) / h
    th2 = th * th
    th3 = th2 * th
    return ((2 * th3 - 3 * th2 + 1) * y0 + (th3 - 2 * th2 + th) * h * f0
            + (-2 * th3 + 3 * th2) * y1 + (th3 - th2) * h * f1)


def integrate_ivp_stiff(rhs, y0, t_span, *, rtol=1e-8, atol=1e-12, jac=None,
                        banded=None, output_times=None, first_step=None,
                        max_step=None, fixed_steps=None, max_newton=8,
                        accept_guard=None):
    """Integrate a stiff ODE system with adaptive TR-BDF2.

    rhs(t, y) -> dy/dt; jac(t, y) -> dense (n, n) matrix, or an (l+u+1, n)
    diagonally-ordered band matrix when ``banded=(l, u)`` is given.  Without
    ``jac`` the Jacobian is built by forward differences.  ``output_times``
    requests cubic-Hermite dense output at the given times; otherwise the
    accepted step points are returned.  ``fixed_steps`` disables adaptivity
    and takes that many uniform steps (used by convergence-order checks).
    Raises IntegrationError when the step size underflows.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    span = t1 - t0
    if span <= 0:
        raise OracleError("t_span must be increasing")
    y = np.array(y0, dtype=float)
    n = y.shape[0]
    stats = dict(n_steps=0, n_rejected=0, n_fev=0, n_jev=0)

    def f(t, u):
        stats["n_fev"] += 1
        return np.asarray(rhs(t, u), dtype=float)

    if jac is None:
        def jac_fd(t, u):
            base = f(t, u)
            J = np.empty((n, n))
            for j in range(n):
                h = 1e-7 * max(1.0, abs(u[j]))
                up = u.copy()
                up[j] += h
                J[:, j] = (f(t, up) - base) / h
            return J
        jac_eval = jac_fd
    else:
        jac_eval = jac

    solver = _LinearSolver(banded)

    out_times = None
    if output_times is not None:
        out_times = np.asarray(output_times, dtype=float)
        if np.any(out_times < t0 - 1e-15) or np.any(out_times > t1 + 1e-12 * max(1.0, abs(t1))):
            raise OracleError("output_times outside t_span")
        out_states = np.empty((out_times.shape[0], n))
        out_states[out_times <= t0] = y
        out_done = out_times <= t0

    ts = [t0]
    ys = [y.copy()]
    scale_floor = atol if np.ndim(atol) == 0 else np.asarray(atol)

    def err_norm(v, uref):
        sc = scale_floor + rtol * np.abs(uref)
        return float(np.sqrt(np.mean((v / sc) ** 2)))

    def newton(t_stage, psi, h, guess, fac_solver):
        """Solve u - d h f(t_stage, u) = psi by modified Newton.

        Accepts once the scaled increment falls below 3% of the tolerance
        band; gives up when the iteration stops contracting.
        """
        u = guess.copy()
        prev = None
        converged = False
        for _ in range(max_newton):
            try:
                fu = f(t_stage, u)
            except RhsEvaluationError:
                return None, None
            F = u - D_STAGE * h * fu - psi
            du = fac_solver.solve(-F)
            u = u + du
            nrm = err_norm(du, u)
            if nrm < 0.03:
                converged = True
                break
            if prev is not None and nrm > 0.9 * prev:
                return None, None
            prev = nrm
        if not converged:
            return None, None
        try:
            fu = f(t_stage, u)
        except RhsEvaluationError:
            return None, None
        return u, fu

    t = t0
    fixed = fixed_steps is not None
    if fixed:
        h = span / int(fixed_steps)
    else:
        h = first_step if first_step is not None else span * 1e-6
    hmax = max_step if max_step is not None else span
    h = min(h, hmax)
    h_floor = max(span * 1e-14, 1e-300)
    f_n = f(t, y)

    while t < t1 - 1e-12 * max(1.0, abs(t1)):
        h = min(h, t1 - t)
        if h < h_floor:
            raise IntegrationError(f"step size underflow at t = {t!r}")
        try:
            J = jac_eval(t, y)
        except RhsEvaluationError as e:
            raise IntegrationError(f"Jacobian evaluation failed at t = {t!r}: {e}")
        stats["n_jev"] += 1
        solver.factor(J, D_STAGE * h)

        yg, fg = newton(t + GAMMA * h, y + D_STAGE * h * f_n, h, y, solver)
        if yg is None:
            if fixed:
                raise IntegrationError("Newton failed in fixed-step mode")
            h *= 0.25
            stats["n_rejected"] += 1
            continue
        c_g = (math.sqrt(2.0) + 1.0) / 2.0
        c_n = (math.sqrt(2.0) - 1.0) / 2.0
        y1s, f1s = newton(t + h, c_g * yg - c_n * y, h, yg, solver)
        if y1s is None:
            if fixed:
                raise IntegrationError("Newton failed in fixed-step mode")
            h *= 0.25
            stats["n_rejected"] += 1
            continue

        if not fixed:
            raw = h * (B_ERR[0] * f_n + B_ERR[1] * fg + B_ERR[2] * f1s)
            err = solver.solve(raw)
            est = err_norm(err, np.maximum(np.abs(y), np.abs(y1s)))
            if not np.isfinite(est):
                h *= 0.25
                stats["n_rejected"] += 1
                continue
            if est > 1.0:
                h *= max(0.2, 0.9 * est ** (-1.0 / 3.0))
                stats["n_rejected"] += 1
                continue

        if accept_guard is not None:
            try:
                accept_guard(t + h, y1s)
            except RhsEvaluationError:
                if fixed:
                    raise IntegrationError("accept guard failed in fixed-step mode")
                h *= 0.25
                stats["n_rejected"] += 1
                continue

        t_new = t + h
        stats["n_steps"] += 1
        if out_times is not None:
            in_step = (~out_done) & (out_times <= t_new + 1e-12 * max(1.0, abs(t_new)))
            for idx in np.nonzero(in_step)[0]:
                out_states[idx] = _hermite(t, y, f_n, t_new, y1s, f1s, min(out_times[idx], t_new))
            out_done |= in_step
        else:
            ts.append(t_new)
            ys.append(y1s.copy())
        t, y, f_n = t_new, y1s, f1s
        if not fixed:
            h = min(hmax, h * min(5.0, max(0.2, 0.9 * est ** (-1.0 / 3.0))))

    if out_times is not None:
        res = IntegrationResult(out_times.copy(), out_states, **stats)
    else:
        res = IntegrationResult(np.array(ts), np.array(ys), **stats)
    return res


# -- flamelet problems ---------------------------------------------------------

def make_grid(n=201, clustering=0.0, center=0.5):
    """Mixture-fraction grid on [0, 1]; uniform by default.

    ``clustering`` > 0 concentrates nodes near ``center`` with a tanh map,
    keeping the grid strictly monotone with fixed endpoints.
    """
    if n < 3:
        raise OracleError("grid needs at least 3 nodes")
    xi = np.linspace(0.0, 1.0, n)
    if clustering == 0.0:
        return xi
    if clustering < 0.0:
        raise OracleError("clustering strength must be non-negative")
    c = float(clustering)
    lo = math.tanh(c * (0.0 - center))
    hi = math.tanh(c * (1.0 - center))
    z = (np.tanh(c * (xi - center)) - lo) / (hi - lo)
    z[0], z[-1] = 0.0, 1.0
    return z


@dataclass
class TrajectorySolution:
    t: np.ndarray
    T: np.ndarray
    Y: np.ndarray          # (nt, n_species)
    meta: dict = field(default_factory=dict)


@dataclass
class FieldSolution:
    t: np.ndarray
    z: np.ndarray
    T: np.ndarray          # (nt, m)
    Y: np.ndarray          # (nt, m, n_species)
    alpha: float = None
    meta: dict = field(default_factory=dict)


def _check_accepted(t, Y):
    """Accepted states may only carry round-off negatives (clipped in the rhs)."""
    if np.any(Y < -1e-10):
        raise RhsEvaluationError(
            f"mass fraction {float(Y.min())} below -1e-10 at t = {t!r}")


class IgnitionProblem:
    """Constant-pressure adiabatic ignition: dY/dt = omega/rho at fixed h."""

    def __init__(self, mech, T0, Y0, p=ch.P_REF):
        self.mech = mech
        self.p = float(p)
        self.Y0 = np.asarray(Y0, dtype=float)
        self.T0 = float(T0)
        self.h0 = float(ch.mixture_enthalpy(list(self.Y0), self.T0, mech))
        self._T_warm = self.T0     # continuity guess for temperature recovery

    def temperature(self, Y, guess=None):
        Yl = [np.asarray(Y)[..., i] for i in range(self.mech.n_species)]
        return ch.temperature_from_enthalpy(self.h0, Yl, self.mech,
                                            T_guess=self._T_warm if guess is None else guess)

    def rhs(self, t, y):
        Y = np.clip(y, 0.0, None)      # trial states may dip negative
        try:
            T = ch.temperature_from_enthalpy(self.h0, list(Y), self.mech,
                                             T_guess=self._T_warm)
            self._T_warm = float(T)
            state = ch.MixtureState(p=self.p, Y=list(Y), T=T)
            _, sigma, _ = ch.species_rates(state, self.mech, return_aux=True)
        except ch.ChemistryError as e:
            raise RhsEvaluationError(str(e))
        return np.array([ad.value_of(s) for s in sigma])

    def jac(self, t, y):
        Y = np.clip(y, 0.0, None)
        tape = ad.Tape()
        leaves = [tape.leaf(float(v)) for v in Y]
        try:
            T = ch.temperature_from_enthalpy(self.h0, leaves, self.mech,
                                             T_guess=self._T_warm)
            state = ch.MixtureState(p=self.p, Y=leaves, T=T)
            _, sigma, _ = ch.species_rates(state, self.mech, return_aux=True)
        except ch.ChemistryError as e:
            raise RhsEvaluationError(str(e))
        n = self.mech.n_species
        J = np.zeros((n, n))
        for i, s in enumerate(sigma):
            if isinstance(s, ad.Node):
                J[i] = ad.grad(s, leaves)
        return J

    def solve(self, t_max, output_times=None, rtol=1e-8, atol=1e-12):
        self._T_warm = self.T0
        res = integrate_ivp_stiff(self.rhs, self.Y0, (0.0, t_max), rtol=rtol,
                                  atol=atol, jac=self.jac, output_times=output_times,
                                  accept_guard=_check_accepted)
        T = np.empty(res.y.shape[0])
        guess = self.T0
        for a, row in enumerate(res.y):
            T[a] = self.temperature(row, guess=guess)
            guess = T[a]
        meta = dict(kind="ivp", T0=self.T0, p=self.p, rtol=rtol, atol=atol,
                    n_steps=res.n_steps, n_rejected=res.n_rejected)
        return TrajectorySolution(res.t, T, res.y, meta)


class FlameletProblem:
    """Method-of-lines flamelet: dY/dt = (chi/2) d2Y/dZ2 + omega/rho.

    Unknowns are the interior grid nodes, node-major, with Dirichlet stream
    values at Z = 0 (coflow) and Z = 1 (fuel).  Mixture enthalpy is the
    linear blend of the stream enthalpies, so temperature is recovered
    pointwise from (h(Z), Y).
    """

    def __init__(self, mech, fuel, coflow, alpha, grid=None, p=None):
        self.mech = mech
        self.fuel = fuel
        self.coflow = coflow
        self.alpha = float(alpha)
        self.z = make_grid() if grid is None else np.asarray(grid, dtype=float)
        self.p = float(p if p is not None else fuel.p)
        self.S = mech.n_species
        self.m = self.z.shape[0] - 2          # interior nodes
        zi = self.z[1:-1]
        self.h_int = zi * fuel.h + (1.0 - zi) * coflow.h
        self.chi_int = ch.chi(zi, self.alpha)
        self.Y_left = coflow.Y.copy()         # Z = 0
        self.Y_right = fuel.Y.copy()          # Z = 1
        self._T_warm = zi * fuel.T + (1.0 - zi) * coflow.T
        self._build_diffusion()

    def _build_diffusion(self):
        z = self.z
        m, S = self.m, self.S
        dz_l = z[1:-1] - z[:-2]
        dz_r = z[2:] - z[1:-1]
        a = 2.0 / (dz_l * (dz_l + dz_r))      # coefficient of y_{k-1}
        b = -2.0 / (dz_l * dz_r)              # coefficient of y_k
        c = 2.0 / (dz_r * (dz_l + dz_r))      # coefficient of y_{k+1}
        w = 0.5 * self.chi_int
        self.diff_lo = w * a                  # (m,)
        self.diff_di = w * b
        self.diff_hi = w * c
        bc = np.zeros((m, S))
        bc[0] += (w[0] * a[0]) * self.Y_left
        bc[-1] += (w[-1] * c[-1]) * self.Y_right
        self.diff_bc = bc

    def initial_state(self):
        zi = self.z[1:-1]
        blend = zi[:, None] * self.Y_right + (1.0 - zi)[:, None] * self.Y_left
        return blend.ravel()

    def _diffusion(self, Yg):
        m = self.m
        out = self.diff_di[:, None] * Yg
        out[1:] += self.diff_lo[1:, None] * Yg[:-1]
        out[:-1] += self.diff_hi[:-1, None] * Yg[1:]
        return out + self.diff_bc

    def _sigma_plain(self, Yg):
        Yl = [Yg[:, i] for i in range(self.S)]
        T = ch.temperature_from_enthalpy(self.h_int, Yl, self.mech,
                                         T_guess=self._T_warm)
        self._T_warm = T
        state = ch.MixtureState(p=self.p, Y=Yl, T=T)
        _, sigma, _ = ch.species_rates(state, self.mech, return_aux=True)
        return np.stack([np.broadcast_to(ad.value_of(s), (self.m,)) for s in sigma], axis=1)

    def rhs(self, t, u):
        Yg = np.clip(u.reshape(self.m, self.S), 0.0, None)
        try:
            sig = self._sigma_plain(Yg)
        except ch.ChemistryError as e:
            raise RhsEvaluationError(str(e))
        return (self._diffusion(Yg) + sig).ravel()

    def jac(self, t, u):
        """Band matrix (l = u = S) of the MOL right-hand side."""
        m, S = self.m, self.S
        Yg = np.clip(u.reshape(m, S), 0.0, None)
        tape = ad.Tape()
        leaves = [tape.leaf(Yg[:, i]) for i in range(S)]
        try:
            T = ch.temperature_from_enthalpy(self.h_int, leaves, self.mech,
                                             T_guess=self._T_warm)
            state = ch.MixtureState(p=self.p, Y=leaves, T=T)
            _, sigma, _ = ch.species_rates(state, self.mech, return_aux=True)
        except ch.ChemistryError as e:
            raise RhsEvaluationError(str(e))
        n = m * S
        ab = np.zeros((2 * S + 1, n))
        # chemistry block: ab row offset S + (i - j) holds d sigma_i / d Y_j
        for i, s in enumerate(sigma):
            if not isinstance(s, ad.Node):
                continue
            rows = ad.grad(s, leaves)      # one (m,) array per source species
            for j in range(S):
                g = np.broadcast_to(rows[j], (m,))
                cols = np.arange(j, n, S)
                ab[S + i - j, cols] += g
        # diffusion: species-diagonal, node tridiagonal
        cols = np.arange(n)
        ab[S, cols] += np.repeat(self.diff_di, S)
        ab[0, S:] += np.repeat(self.diff_hi[:-1], S)        # super-diagonal +S
        ab[2 * S, :-S] += np.repeat(self.diff_lo[1:], S)    # sub-diagonal -S
        return ab

    def temperature_field(self, Yg, guess=None):
        Yl = [Yg[:, i] for i in range(self.S)]
        return ch.temperature_from_enthalpy(self.h_int, Yl, self.mech,
                                            T_guess=self._T_warm if guess is None else guess)

    def attach_boundaries(self, t, states):
        """Full-grid field (boundary rows included) from interior snapshots."""
        nt = states.shape[0]
        m_full = self.m + 2
        Y = np.empty((nt, m_full, self.S))
        T = np.empty((nt, m_full))
        zi = self.z[1:-1]
        guess = zi * self.fuel.T + (1.0 - zi) * self.coflow.T
        for a in range(nt):
            Yg = states[a].reshape(self.m, self.S)
            Y[a, 1:-1] = Yg
            Y[a, 0] = self.Y_left
            Y[a, -1] = self.Y_right
            T[a, 1:-1] = self.temperature_field(Yg, guess=guess)
            guess = T[a, 1:-1]
            T[a, 0] = self.coflow.T
            T[a, -1] = self.fuel.T
        return T, Y

    def solve_transient(self, t_max, output_times=None, rtol=1e-8, atol=1e-12,
                        y_start=None, t_start=0.0, first_step=None):
        y0 = self.initial_state() if y_start is None else y_start
        res = integrate_ivp_stiff(self.rhs, y0, (t_start, t_max), rtol=rtol,
                                  atol=atol, jac=self.jac, banded=(self.S, self.S),
                                  output_times=output_times, first_step=first_step,
                                  accept_guard=_check_accepted)
        return res

    def residual_norm(self, u):
        return float(np.abs(self.rhs(0.0, u)).max())

    def solve_steady(self, march_tol=1e-6, steady_tol=1e-10, t_limit=1e4,
                     rtol=1e-8, atol=1e-12):
        """March to steady state, then polish with Newton on the steady system.

        The march integrates pseudo-time legs of growing length until the
        right-hand side falls below ``march_tol``; Newton then drives it to
        ``steady_tol`` (max-norm of dY/dt).  Raises OracleError when the
        march passes ``t_limit`` seconds without settling.
        """
        u = self.initial_state()
        t_cur = 0.0
        leg = 0.01
        while self.residual_norm(u) > march_tol:
            if t_cur > t_limit:
                raise OracleError(
                    f"steady march exceeded {t_limit} s of pseudo-time")
            res = self.solve_transient(t_cur + leg, output_times=[t_cur + leg],
                                       rtol=rtol, atol=atol, y_start=u,
                                       t_start=t_cur,
                                       first_step=min(leg * 1e-3, 1e-5))
            u = res.y[-1]
            t_cur += leg
            leg *= 4.0
        # Newton polish: solve rhs(u) = 0 with the banded Jacobian
        for _ in range(50):
            r = self.rhs(0.0, u)
            if np.abs(r).max() <= steady_tol:
                break
            ab = self.jac(0.0, u)
            du = solve_banded((self.S, self.S), ab, -r)
            lam = 1.0
            base = np.abs(r).max()
            for _ in range(30):
                cand = np.clip(u + lam * du, 0.0, None)
                try:
                    if np.abs(self.rhs(0.0, cand)).max() < base:
                        break
                except RhsEvaluationError:
                    pass
                lam *= 0.5
            else:
                raise OracleError("steady Newton polish stalled")
            u = cand
        else:
            raise OracleError("steady Newton polish did not converge")
        return u

    def field_solution(self, t, states, meta_extra=None):
        T, Y = self.attach_boundaries(t, np.atleast_2d(states))
        meta = dict(kind="pde", alpha=self.alpha, p=self.p,
                    grid_points=self.z.shape[0])
        if meta_extra:
            meta.update(meta_extra)
        return FieldSolution(np.atleast_1d(t), self.z.copy(), T, Y, self.alpha, meta)


def solve_pde_mol(mech, fuel, coflow, alpha, t_max, output_times, grid=None,
                  rtol=1e-8, atol=1e-12):
    """Transient flamelet field at the requested output times."""
    prob = FlameletProblem(mech, fuel, coflow, alpha, grid=grid)
    res = prob.solve_transient(t_max, output_times=output_times, rtol=rtol, atol=atol)
    sol = prob.field_solution(res.t, res.y,
                              dict(rtol=rtol, atol=atol, n_steps=res.n_steps,
                                   n_rejected=res.n_rejected, t_max=t_max))
    return sol


def solve_bvp_steady(mech, fuel, coflow, alpha, grid=None, steady_tol=1e-10,
                     rtol=1e-8, atol=1e-12):
    """Steady flamelet: pseudo-time march plus Newton polish."""
    prob = FlameletProblem(mech, fuel, coflow, alpha, grid=grid)
    u = prob.solve_steady(steady_tol=steady_tol, rtol=rtol, atol=atol)
    sol = prob.field_solution(np.array([0.0]), u[None, :],
                              dict(kind="bvp", steady_tol=steady_tol))
    sol.meta["kind"] = "bvp"
    return sol
