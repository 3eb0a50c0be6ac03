"""Quadratic convex dispatch optimization on the sensitivity model.

The network loss, evaluated on the affine voltage representation
V = U + W.[S_r; S_i], is an exactly quadratic convex function of the
dispatch: f(S) = 1/2 S'HS + F'S + c0 with H = 2 W'.blockdiag(G,G).W.
The module assembles (H, F, c0), solves the box-constrained problem by a
projected Newton method, evaluates the closed-form relaxed solution
S = -H^-1 F, and can re-solve with the polygonal voltage-ball constraint.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import InfeasibleError, SingularMatrixError
from .linflow import LinearFlowModel, VoltageSolution, solve_linear_flow
from .netmodel import AdmittanceSystem, FeederModel

KKT_TOL = 1e-8
RIDGE = 1e-10


@dataclass
class QuadProgram:
    H: np.ndarray
    F: np.ndarray
    c0: float                     # losses of the quadratic model at S = 0
    lo: np.ndarray                # stacked [S_r; S_i] lower bounds
    hi: np.ndarray
    model: LinearFlowModel
    delta_max: float | None = None

    @property
    def dim(self) -> int:
        return self.F.shape[0]

    def objective(self, s: np.ndarray) -> float:
        return float(0.5 * s @ self.H @ s + self.F @ s + self.c0)

    def gradient(self, s: np.ndarray) -> np.ndarray:
        return self.H @ s + self.F

    def split(self, s: np.ndarray) -> np.ndarray:
        g = self.dim // 2
        return s[:g] + 1j * s[g:]


@dataclass
class OpfResult:
    dispatch: np.ndarray          # complex, one entry per dispatch variable
    voltages: VoltageSolution
    predicted_losses: float
    exact_losses: float | None = None
    active_set: list[str] = field(default_factory=list)
    delta_ok: bool | None = None
    iterations: int = 0
    kkt_residual: float = 0.0


def assemble_qp(model: LinearFlowModel, adm: AdmittanceSystem,
                feeder: FeederModel, delta_max: float | None = None) -> QuadProgram:
    """Build the quadratic loss model and the dispatch box."""
    n = model.n_nodes
    g_n, g_0 = adm.g_n, adm.g_0
    wr, wi = model.Wr, model.Wi
    ur, ui = model.U.real, model.U.imag
    v0r, v0i = model.v0.real, model.v0.imag
    h = 2.0 * (wr.T @ g_n @ wr + wi.T @ g_n @ wi)
    h = 0.5 * (h + h.T)
    f = 2.0 * (wr.T @ (g_n @ ur + g_0 @ v0r) + wi.T @ (g_n @ ui + g_0 @ v0i))
    g00 = adm.y00.real
    c0 = float(ur @ g_n @ ur + ui @ g_n @ ui
               + 2.0 * ur @ g_0 @ v0r + 2.0 * ui @ g_0 @ v0i
               + v0r @ g00 @ v0r + v0i @ g00 @ v0i)
    gens = [feeder.generators[gv.gen_index] for gv in model.gen_vars]
    lo = np.concatenate([[g.s_min.real for g in gens], [g.s_min.imag for g in gens]])
    hi = np.concatenate([[g.s_max.real for g in gens], [g.s_max.imag for g in gens]])
    return QuadProgram(H=h, F=f, c0=c0, lo=lo, hi=hi, model=model, delta_max=delta_max)


def _solve_spd(h: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(h, rhs)
    except np.linalg.LinAlgError:
        scale = np.abs(h).max() or 1.0
        warnings.warn("H is singular; applying a small ridge", stacklevel=3)
        try:
            return np.linalg.solve(h + RIDGE * scale * np.eye(h.shape[0]), rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularMatrixError("H remains singular after regularization") from exc


def _result(qp: QuadProgram, s: np.ndarray, iterations: int = 0,
            kkt_residual: float = 0.0) -> OpfResult:
    dispatch = qp.split(s)
    voltages = solve_linear_flow(qp.model, dispatch)
    active = []
    g = qp.dim // 2
    for k in range(qp.dim):
        name = f"S{'r' if k < g else 'i'}[{k % g}]"
        if abs(s[k] - qp.lo[k]) <= 1e-9 * max(1.0, abs(qp.lo[k])):
            active.append(f"{name}=lo")
        elif abs(s[k] - qp.hi[k]) <= 1e-9 * max(1.0, abs(qp.hi[k])):
            active.append(f"{name}=hi")
    res = OpfResult(dispatch=dispatch, voltages=voltages,
                    predicted_losses=qp.objective(s), active_set=active,
                    iterations=iterations, kkt_residual=kkt_residual)
    if qp.delta_max is not None:
        res.delta_ok = check_delta(res, qp.delta_max, qp.model)[0]
    return res


def solve_relaxed(qp: QuadProgram) -> OpfResult:
    """Closed-form stationary point S = -H^-1 F, ignoring all bounds."""
    if qp.dim == 0:
        return _result(qp, np.zeros(0))
    s = _solve_spd(qp.H, -qp.F)
    residual = float(np.abs(qp.H @ s + qp.F).max())
    return _result(qp, s, kkt_residual=residual)


def solve_qp(qp: QuadProgram, x0: np.ndarray | None = None,
             tol: float = KKT_TOL, max_iter: int = 100) -> OpfResult:
    """Box-constrained minimization by projected Newton on the free set.

    Each iteration clamps coordinates whose bound is active with an outward
    gradient, takes an exact Newton step on the remaining coordinates, and
    backtracks along the projected arc.  Terminates at the projected-gradient
    KKT residual ||P_box(S - grad f) - S||_inf <= tol.
    """
    if qp.dim == 0:
        return _result(qp, np.zeros(0))
    h, f, lo, hi = qp.H, qp.F, qp.lo, qp.hi
    x = np.clip(np.zeros(qp.dim) if x0 is None else np.asarray(x0, float), lo, hi)
    span = np.maximum(hi - lo, 1.0)
    kkt = np.inf
    for it in range(1, max_iter + 1):
        g = h @ x + f
        kkt = float(np.abs(np.clip(x - g, lo, hi) - x).max())
        if kkt <= tol:
            return _result(qp, x, iterations=it - 1, kkt_residual=kkt)
        at_lo = (x - lo <= 1e-12 * span) & (g > 0)
        at_hi = (hi - x <= 1e-12 * span) & (g < 0)
        free = ~(at_lo | at_hi)
        if not free.any():
            return _result(qp, x, iterations=it, kkt_residual=kkt)
        dx = np.zeros_like(x)
        dx[free] = _solve_spd(h[np.ix_(free, free)], -g[free])
        fx = qp.objective(x)
        alpha = 1.0
        for _ in range(40):
            x_new = np.clip(x + alpha * dx, lo, hi)
            if qp.objective(x_new) <= fx + 0.1 * (g @ (x_new - x)):
                break
            alpha *= 0.5
        x = x_new
    warnings.warn(f"box QP stopped at iteration limit with KKT residual {kkt:.3e}",
                  stacklevel=2)
    return _result(qp, x, iterations=max_iter, kkt_residual=kkt)


def check_delta(result: OpfResult, delta_max: float,
                model: LinearFlowModel) -> tuple[bool, np.ndarray]:
    """Euclidean voltage-ball post-check with per-bus margins."""
    dev = np.abs(model.T - model.eta * result.voltages.v)
    margins = delta_max - dev
    return bool(np.all(margins >= -1e-12)), margins


def _delta_constraints(model: LinearFlowModel, delta_max: float):
    """Half-plane rows of |Re d| + |Im d| <= delta on the normalized
    deviation d = T - eta*V, affine in the stacked dispatch."""
    eta = model.eta
    dr0 = model.T.real - eta * model.U.real       # d at S = 0
    di0 = model.T.imag - eta * model.U.imag
    rows, rhs, buses = [], [], []
    for s1 in (1.0, -1.0):
        for s2 in (1.0, -1.0):
            a = -s1 * eta * model.Wr - s2 * eta * model.Wi
            b = delta_max - s1 * dr0 - s2 * di0
            rows.append(a)
            rhs.append(b)
            buses.append(np.arange(model.n_nodes))
    return np.vstack(rows), np.concatenate(rhs), np.concatenate(buses)


def enforce_delta(qp: QuadProgram, delta_max: float,
                  tol: float = KKT_TOL) -> OpfResult:
    """Re-solve with the polygonal per-bus voltage constraints added.

    Intended for dispatches whose box-only solution violates the validity
    region; the absolute-value norm keeps the feasible set polyhedral.
    """
    a_d, b_d, bus_of = _delta_constraints(qp.model, delta_max)
    dim = qp.dim
    eye = np.eye(dim)
    a = np.vstack([a_d, eye, -eye])
    b = np.concatenate([b_d, qp.hi, -qp.lo])
    x0 = np.clip(_solve_spd(qp.H, -qp.F), qp.lo, qp.hi) if dim else np.zeros(0)
    viol = a_d @ x0 - b_d
    if viol.size and viol.max() > 1e-10:
        x0 = _phase_one(a_d, b_d, qp.lo, qp.hi, bus_of)
    x, it, kkt = _active_set_qp(qp.H, qp.F, a, b, x0, tol=tol)
    res = _result(qp, x, iterations=it, kkt_residual=kkt)
    res.delta_ok = bool(np.all(np.abs(qp.model.T.real - qp.model.eta * res.voltages.v.real)
                               + np.abs(qp.model.T.imag - qp.model.eta * res.voltages.v.imag)
                               <= delta_max + 1e-8))
    return res


def _phase_one(a_d, b_d, lo, hi, bus_of):
    """Feasibility LP: minimize the worst half-plane violation inside the box."""
    m, n = a_d.shape
    c = np.zeros(n + 1)
    c[-1] = 1.0
    a_ub = np.hstack([a_d, -np.ones((m, 1))])
    bounds = [(lo[k], hi[k]) for k in range(n)] + [(0.0, None)]
    sol = linprog(c, A_ub=a_ub, b_ub=b_d, bounds=bounds, method="highs")
    if not sol.success or sol.x[-1] > 1e-9:
        viol = a_d @ (sol.x[:-1] if sol.success else np.clip(np.zeros(n), lo, hi)) - b_d
        worst = int(bus_of[int(np.argmax(viol))])
        raise InfeasibleError(
            f"voltage-ball constraints are infeasible; most violated at bus node {worst} "
            f"(violation {float(np.max(viol)):.3e})")
    return sol.x[:-1]


def _active_set_qp(h, f, a, b, x0, tol=KKT_TOL, max_iter=None):
    """Primal active-set method for min 1/2 x'Hx + f'x s.t. a x <= b.

    Requires a feasible x0 and positive definite H (ridged upstream if not).
    """
    m = a.shape[0]
    max_iter = max_iter or 50 * (m + 1)
    x = np.asarray(x0, dtype=float).copy()
    scale = np.maximum(np.abs(b), 1.0)
    work = list(np.where(b - a @ x <= 1e-9 * scale)[0])
    for it in range(1, max_iter + 1):
        g = h @ x + f
        aw = a[work] if work else np.zeros((0, x.size))
        kkt = np.block([[h, aw.T], [aw, np.zeros((len(work), len(work)))]])
        rhs = np.concatenate([-g, np.zeros(len(work))])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        p = sol[: x.size]
        lam = sol[x.size:]
        if np.abs(p).max(initial=0.0) <= 1e-12:
            if lam.size == 0 or lam.min() >= -tol:
                resid = float(np.abs(p).max(initial=0.0))
                return x, it, resid
            work.pop(int(np.argmin(lam)))
            continue
        ap = a @ p
        mask = np.ones(m, dtype=bool)
        mask[work] = False
        blocking = mask & (ap > 1e-14 * np.maximum(np.abs(ap).max(), 1.0))
        if blocking.any():
            ratios = (b[blocking] - a[blocking] @ x) / ap[blocking]
            ratios = np.maximum(ratios, 0.0)
            j_local = int(np.argmin(ratios))
            alpha = float(ratios[j_local])
            j = int(np.where(blocking)[0][j_local])
        else:
            alpha, j = 1.0, None
        if alpha >= 1.0:
            x = x + p
        else:
            x = x + alpha * p
            work.append(j)
    raise InfeasibleError("active-set QP failed to converge (degenerate constraints?)")
