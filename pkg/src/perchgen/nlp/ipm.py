"""Primal-dual interior-point solver for sparse nonlinear programs.

Solves ``min f(z)  s.t.  c_E(z) = 0,  c_I(z) >= 0`` with the inequalities
turned into equalities through slacks ``w > 0``. Each iteration solves the
condensed Newton system of the barrier problem with a sparse LU, applies the
fraction-to-boundary rule, and backtracks on an l1 merit function. The barrier
parameter follows the monotone (Fiacco-McCormick) strategy.

A problem object must expose ``n``, ``m_eq``, ``m_in``, ``evaluate(z)``
returning an :class:`Evaluation` and ``values(z)`` returning
``(f, c_eq, c_in)``. ``hess`` must be positive semidefinite: constraint
curvature is not used. An optional ``step_damping`` vector adds a fixed
diagonal to the Newton matrix (in scaled units) for badly coupled columns;
it changes the steps, not the solution.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from perchgen.errors import NumericalFailureError


@dataclass
class Evaluation:
    f: float
    grad: np.ndarray
    hess: sp.spmatrix
    c_eq: np.ndarray
    J_eq: sp.spmatrix
    c_in: np.ndarray
    J_in: sp.spmatrix


@dataclass
class SolverOptions:
    max_iterations: int = 5000
    kkt_tolerance: float = 1e-6
    eq_tolerance: float = 1e-8
    compl_tolerance: float = 1e-8
    mu_init: float = 5e-3
    mu_factor: float = 0.2
    mu_power: float = 1.5
    mu_min: float = 1e-11
    barrier_tolerance_factor: float = 10.0
    fraction_to_boundary: float = 0.995
    regularization: float = 1e-8
    max_regularization: float = 1e-2
    armijo: float = 1e-4
    min_step: float = 1e-12
    gradient_scaling: float = 100.0
    slack_floor: float = 1e-2
    verbose: bool = False


@dataclass
class SolveReport:
    status: str
    iterations: int
    stationarity: float
    primal: float
    complementarity: float
    objective: float
    horizon_T: float = float("nan")
    wall_time: float = 0.0
    stage_complementarity: list = field(default_factory=list)
    merit_history: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "iterations": self.iterations,
            "stationarity": self.stationarity,
            "primal": self.primal,
            "complementarity": self.complementarity,
            "objective": self.objective,
            "horizon_T": self.horizon_T,
            "wall_time": self.wall_time,
        }


@dataclass
class IpmState:
    z: np.ndarray
    w: np.ndarray
    y: np.ndarray
    lam: np.ndarray


def _row_inf_norm(J: sp.spmatrix) -> np.ndarray:
    J = sp.csr_matrix(J)
    out = np.zeros(J.shape[0])
    if J.nnz:
        absJ = abs(J)
        out = np.asarray(absJ.max(axis=1).todense()).ravel()
    return out


class _Scaled:
    """Gradient-based scaling of objective and constraint rows, fixed at the starting point."""

    def __init__(self, problem, ev: Evaluation, gmax: float):
        self.problem = problem
        gnorm = np.max(np.abs(ev.grad)) if ev.grad.size else 0.0
        self.sf = min(1.0, gmax / gnorm) if gnorm > 0 else 1.0
        self.se = np.minimum(1.0, gmax / np.maximum(_row_inf_norm(ev.J_eq), 1e-300))
        self.si = np.minimum(1.0, gmax / np.maximum(_row_inf_norm(ev.J_in), 1e-300))

    def scale(self, ev: Evaluation) -> Evaluation:
        return Evaluation(
            self.sf * ev.f,
            self.sf * ev.grad,
            self.sf * ev.hess,
            self.se * ev.c_eq,
            sp.diags(self.se) @ ev.J_eq,
            self.si * ev.c_in,
            sp.diags(self.si) @ ev.J_in,
        )

    def values(self, z):
        f, ce, ci = self.problem.values(z)
        return self.sf * f, self.se * ce, self.si * ci


def _check_finite(problem, ev: Evaluation):
    for name, arr in (("objective", np.atleast_1d(ev.f)), ("objective gradient", ev.grad)):
        if not np.all(np.isfinite(arr)):
            raise NumericalFailureError(f"non-finite {name}", block=name)
    for kind, c, J in (("eq", ev.c_eq, ev.J_eq), ("in", ev.c_in, ev.J_in)):
        bad = ~np.isfinite(c)
        Jc = sp.csr_matrix(J)
        if Jc.nnz:
            rows = np.repeat(np.arange(Jc.shape[0]), np.diff(Jc.indptr))
            bad[rows[~np.isfinite(Jc.data)]] = True
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            label = problem.row_label(kind, i) if hasattr(problem, "row_label") else f"{kind}[{i}]"
            raise NumericalFailureError(f"non-finite value or derivative in constraint {label}", block=label)


def _fraction_to_boundary(v, dv, tau):
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-tau * v[neg] / dv[neg])))


def solve_nlp(problem, z0, options: SolverOptions | None = None, log=None):
    """Run the interior-point iteration from ``z0``; returns ``(z, report, state)``."""
    opts = options or SolverOptions()
    t_start = time.perf_counter()
    z = np.array(z0, dtype=float)
    ev_raw = problem.evaluate(z)
    _check_finite(problem, ev_raw)
    sc = _Scaled(problem, ev_raw, opts.gradient_scaling)
    ev = sc.scale(ev_raw)
    n, m_eq, m_in = problem.n, problem.m_eq, problem.m_in

    mu = opts.mu_init
    w = np.maximum(ev.c_in, opts.slack_floor)
    lam = mu / w
    y = np.zeros(m_eq)
    nu = 1.0
    reg = opts.regularization
    stalls = 0
    mu_stack = []
    stage_compl = []
    merit_hist = []
    best = None
    status = "max-iterations"
    it = 0

    # stationarity is relative to the starting gradient of the scaled problem
    damping = np.asarray(getattr(problem, "step_damping", np.zeros(n)), dtype=float)
    g_ref = max(1.0, float(np.max(np.abs(ev.grad), initial=0.0)))

    def measures(ev, w, y, lam):
        r_d = ev.grad - ev.J_eq.T @ y - ev.J_in.T @ lam
        s_max = 100.0
        s_d = g_ref * max(s_max, (np.abs(y).sum() + np.abs(lam).sum()) / max(1, m_eq + m_in)) / s_max
        s_c = max(s_max, np.abs(lam).sum() / max(1, m_in)) / s_max
        stat = float(np.max(np.abs(r_d), initial=0.0) / s_d)
        eq_unscaled = max(
            float(np.max(np.abs(ev.c_eq / sc.se), initial=0.0)),
            float(np.max(np.abs((ev.c_in - w) / sc.si), initial=0.0)),
        )
        primal_scaled = max(float(np.max(np.abs(ev.c_eq), initial=0.0)), float(np.max(np.abs(ev.c_in - w), initial=0.0)))
        compl = float(np.max(w * lam, initial=0.0) / s_c)
        return r_d, stat, eq_unscaled, primal_scaled, compl, s_c

    while True:
        r_d, stat, eq_res, primal_s, compl, s_c = measures(ev, w, y, lam)
        err = max(stat / opts.kkt_tolerance, eq_res / opts.eq_tolerance, compl / opts.compl_tolerance)
        if best is None or err < best[0]:
            best = (err, z.copy(), stat, eq_res, compl, ev.f / sc.sf)
        if stat < opts.kkt_tolerance and eq_res < opts.eq_tolerance and compl < opts.compl_tolerance:
            status = "converged"
            break
        if it >= opts.max_iterations:
            status = "max-iterations"
            break

        # barrier stage update
        while mu > opts.mu_min:
            # a stage is done once each residual is within 10 mu, or already within the final tolerance
            k_mu = opts.barrier_tolerance_factor * mu
            cdev = float(np.max(np.abs(w * lam - mu), initial=0.0)) / s_c
            if stat > max(k_mu, opts.kkt_tolerance) or primal_s > max(k_mu, opts.eq_tolerance) or cdev > k_mu:
                break
            stage_compl.append((mu, float(np.mean(w * lam)) if m_in else 0.0))
            mu_stack.append(mu)
            mu = max(opts.mu_min, min(opts.mu_factor * mu, mu**opts.mu_power))

        sigma = lam / w
        r_I = ev.c_in - w
        r_c = w * lam - mu
        H0 = ev.hess + sp.diags(reg + damping, format="csc")
        Ht = H0 + ev.J_in.T @ sp.diags(sigma) @ ev.J_in
        rhs1 = -r_d - ev.J_in.T @ (r_c / w + sigma * r_I)
        K = sp.bmat([[Ht, ev.J_eq.T], [ev.J_eq, -1e-12 * sp.identity(m_eq)]], format="csc")
        try:
            lu = splu(K, permc_spec="COLAMD")
        except RuntimeError:
            reg = max(10 * reg, 1e-6)
            it += 1
            continue
        rhs = np.concatenate([rhs1, -ev.c_eq])
        sol = lu.solve(rhs)
        for _ in range(2):
            # iterative refinement: the barrier terms make K badly conditioned near the end
            sol = sol + lu.solve(rhs - K @ sol)
        dz = sol[:n]
        dy = -sol[n:]
        dw = ev.J_in @ dz + r_I
        dlam = -r_c / w - sigma * dw

        alpha_p = _fraction_to_boundary(w, dw, opts.fraction_to_boundary)
        alpha_d = _fraction_to_boundary(lam, dlam, opts.fraction_to_boundary)

        theta = np.abs(ev.c_eq).sum() + np.abs(r_I).sum()
        gbar = float(ev.grad @ dz - mu * np.sum(dw / w))
        # the Levenberg term is damping, not model curvature: keep it out of the penalty update
        quad = float(dz @ (ev.hess @ dz) + dw @ (sigma * dw))
        if theta > 0:
            nu_trial = (gbar + 0.5 * max(quad, 0.0)) / (0.9 * theta)
            if nu < nu_trial:
                nu = nu_trial + 1.0
        D = gbar - nu * theta

        def merit(f, ce, ci, ww):
            return f - mu * np.sum(np.log(ww)) + nu * (np.abs(ce).sum() + np.abs(ci - ww).sum())

        def trial(z_t, w_t):
            if np.any(w_t <= 0):
                return None
            f_t, ce_t, ci_t = sc.values(z_t)
            if not (np.isfinite(f_t) and np.all(np.isfinite(ce_t)) and np.all(np.isfinite(ci_t))):
                return None
            # slack reset: raising a slack up to its constraint value lowers both merit terms
            w_t = np.maximum(w_t, ci_t)
            return merit(f_t, ce_t, ci_t, w_t), ce_t, ci_t, w_t

        phi0 = merit(ev.f, ev.c_eq, ev.c_in, w)
        # merit differences below this are round-off; the infeasibility sum inherits the
        # rounding of the quantities it is computed from
        slack_eps = 10.0 * np.finfo(float).eps * abs(phi0)
        alpha = alpha_p
        accepted = False
        first = True
        while alpha >= opts.min_step:
            z_t = z + alpha * dz
            w_t = w + alpha * dw
            out = trial(z_t, w_t)
            if out is not None and out[0] <= phi0 + opts.armijo * alpha * D + slack_eps:
                phi_t, w_t = out[0], out[3]
                accepted = True
                break
            if first and out is not None:
                # second-order correction against the constraint curvature missed by the model
                first = False
                rI_t = out[2] - w_t
                sol_c = lu.solve(np.concatenate([-ev.J_in.T @ (sigma * rI_t), -out[1]]))
                dz_c = alpha * dz + sol_c[:n]
                dw_c = ev.J_in @ sol_c[:n] + rI_t + alpha * dw
                # keep the corrected slacks interior
                a_c = _fraction_to_boundary(w, dw_c, opts.fraction_to_boundary)
                if a_c >= 1.0:
                    out_c = trial(z + dz_c, w + dw_c)
                    if out_c is not None and out_c[0] <= phi0 + opts.armijo * alpha * D + slack_eps:
                        z_t, w_t, phi_t = z + dz_c, out_c[3], out_c[0]
                        accepted = True
                        break
            alpha *= 0.5
        it += 1
        if accepted and alpha * np.max(np.abs(dz), initial=0.0) < opts.min_step * (1.0 + np.max(np.abs(z))):
            # a step that does not move z is a stall even if the merit test let it through
            accepted = False

        if not accepted:
            if log is not None:
                log(f"it={it:4d} line search stalled (mu={mu:.1e}, stat={stat:.2e}, eq={eq_res:.2e})")
            stalls += 1
            if stalls >= 2:
                status = "max-iterations"
                break
            if mu_stack:
                mu = mu_stack.pop()
            reg = max(10 * reg, 1e-6)
            continue

        merit_hist.append((phi0, phi_t, mu, nu))
        z, w = z_t, w_t
        y = y + alpha * dy
        lam = lam + alpha_d * dlam
        # keep the primal-dual pair from drifting too far from the central path
        kappa = 1e10
        lam = np.clip(lam, mu / (kappa * w), kappa * mu / w)
        ev_raw = problem.evaluate(z)
        _check_finite(problem, ev_raw)
        ev = sc.scale(ev_raw)
        # Levenberg damping: grow the diagonal while steps come out short, whether cut by
        # the line search or by the bounds (directions the least-squares cost barely
        # sees give huge Newton steps), relax it on full steps
        # a full Newton step on an exact quadratic model realizes half the linear decrease;
        # when the predicted decrease is lost in round-off the ratio says nothing
        measurable = alpha * D < -1e3 * slack_eps
        rho = (phi_t - phi0) / (alpha * D) if measurable else 0.5
        if alpha < 0.25 or (alpha >= 1.0 and rho < 0.1):
            reg = min(opts.max_regularization, max(10.0 * reg, 1e-6))
        elif alpha >= 1.0 and rho > 0.25 and measurable:
            reg = max(opts.regularization, reg / 10.0)

        if log is not None and (opts.verbose or it % 50 == 0):
            log(
                f"it={it:4d} f={ev.f / sc.sf:.6e} stat={stat:.2e} eq={eq_res:.2e} compl={compl:.2e} "
                f"mu={mu:.1e} alpha={alpha:.2e} alpha_p={alpha_p:.2e} nu={nu:.2e} reg={reg:.1e}"
            )

    if status == "converged":
        z_out, stat_o, eq_o, compl_o, f_o = z, stat, eq_res, compl, ev.f / sc.sf
    else:
        _, z_out, stat_o, eq_o, compl_o, f_o = best
    report = SolveReport(
        status=status,
        iterations=it,
        stationarity=stat_o,
        primal=eq_o,
        complementarity=compl_o,
        objective=float(f_o),
        wall_time=time.perf_counter() - t_start,
        stage_complementarity=stage_compl,
        merit_history=merit_hist,
    )
    return z_out, report, IpmState(z, w, y, lam)
