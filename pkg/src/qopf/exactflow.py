"""Exact nonlinear power-flow oracles and approximation-error metrics.

Two independent solvers are provided: a back-forward sweep for radial
single-phase feeders, and a fixed-point iteration on the admittance
partition which also covers meshed and three-phase feeders.  Both evaluate
the full nonlinear ZIP load model (|V|^alpha with alpha in {0, 1, 2}) and
constant-power generator injections, and every reported loss number comes
from the same Hermitian network-loss formula.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import ConvergenceError
from .netmodel import (AdmittanceSystem, FeederModel, build_admittance,
                       load_connections, rotation_vector)
from .linflow import VoltageSolution, generator_incidence, gen_variables

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100


@dataclass
class ExactFlowReport:
    v: np.ndarray            # complex voltages, all nodes (slack included)
    v_nodes: np.ndarray      # non-slack nodes only, partition order
    losses: float
    iterations: int
    converged: bool
    residual: float


@dataclass
class ErrorMetrics:
    eps_p: float   # percent loss error
    eps_v: float   # percent max complex-voltage deviation (of the 1 pu base)


def exact_losses(adm: AdmittanceSystem, v_all: np.ndarray) -> float:
    """Network active losses Re(sum_k V_k I_k*) with I = Y V."""
    v_all = np.asarray(v_all, dtype=complex)
    if v_all.shape[0] != adm.y_full.shape[0]:
        raise ValueError(
            f"voltage vector has {v_all.shape[0]} entries, expected {adm.y_full.shape[0]}")
    return float(np.real(np.vdot(adm.y_full @ v_all, v_all)))


def _dispatch_per_node(feeder: FeederModel, s_g) -> np.ndarray:
    """Complex power injected at each non-slack node for a dispatch vector."""
    gvars = gen_variables(feeder)
    s_g = np.zeros(len(gvars), dtype=complex) if s_g is None else np.asarray(s_g, dtype=complex)
    if s_g.shape != (len(gvars),):
        raise ValueError(f"dispatch has shape {s_g.shape}, expected ({len(gvars)},)")
    n = feeder.n_bus - 1
    p_count = 3 if feeder.is_three_phase else 1
    out = np.zeros(p_count * n, dtype=complex)
    for col, gv in enumerate(gvars):
        bus = feeder.generators[gv.gen_index].bus
        if gv.phase is not None:
            out[gv.phase * n + (bus - 1)] += s_g[col]
        elif gv.balanced:
            for p in range(3):
                out[p * n + (bus - 1)] += s_g[col] / 3.0
        else:
            out[bus - 1] += s_g[col]
    return out


def _zip_injection(feeder: FeederModel, v_nodes: np.ndarray,
                   s_node: np.ndarray, eta: float) -> np.ndarray:
    """Nodal injection currents of loads and generators at voltages v_nodes.

    Constant-impedance parts may be excluded by the caller (folded into the
    matrix); here all three ZIP components are evaluated exactly.
    """
    inj = np.zeros_like(v_nodes)
    for cn in load_connections(feeder):
        u = sum(s * v_nodes[r] for r, s in zip(cn.rows, cn.signs))
        tt = abs(cn.t) ** 2
        i_el = 0.0 + 0.0j
        if cn.s_p != 0:
            i_el += np.conj(cn.s_p) / np.conj(u)
        if cn.s_i != 0:
            # constant current: fixed at its nominal value (magnitude and angle)
            i_el += np.conj(cn.s_i) * cn.t / tt * eta
        if cn.s_z != 0:
            i_el += np.conj(cn.s_z) * u / tt * eta ** 2
        for r, s in zip(cn.rows, cn.signs):
            inj[r] -= s * i_el
    nz = s_node != 0
    inj[nz] += np.conj(s_node[nz]) / np.conj(v_nodes[nz])
    return inj


def _nominal_start(feeder: FeederModel, adm: AdmittanceSystem) -> np.ndarray:
    if feeder.is_three_phase:
        return feeder.v_nom * rotation_vector(feeder)
    return np.full(adm.n_nodes, adm.v0[0])


def fixed_point_flow(feeder: FeederModel, adm: AdmittanceSystem, s_g=None,
                     tol: float = DEFAULT_TOL,
                     max_iter: int = DEFAULT_MAX_ITER) -> ExactFlowReport:
    """Fixed-point iteration V <- Ynn^-1 (I_inj(V) - Yn0 V0).

    Constant-impedance load elements are folded into the iteration matrix,
    so a pure constant-impedance feeder converges in one step.
    """
    eta = 1.0 / feeder.v_nom if feeder.is_three_phase else 1.0
    ynn = adm.ynn.astype(complex).copy()
    conns = load_connections(feeder)
    for cn in conns:
        if cn.s_z != 0:
            j = np.zeros(adm.n_nodes)
            for r, s in zip(cn.rows, cn.signs):
                j[r] = s
            ynn += (eta ** 2 * np.conj(cn.s_z) / abs(cn.t) ** 2) * np.outer(j, j)
    lu = lu_factor(ynn)
    s_node = _dispatch_per_node(feeder, s_g)
    rhs0 = adm.yn0 @ adm.v0
    v = _nominal_start(feeder, adm)
    # one warm-up update from the nominal start; with constant injections
    # (no constant-power parts) this already lands on the solution
    v = lu_solve(lu, _zip_pi_injection(feeder, conns, v, s_node, eta) - rhs0)
    scale = eta  # convergence measured on normalized voltages
    residual = np.inf
    for it in range(1, max_iter + 1):
        inj = _zip_pi_injection(feeder, conns, v, s_node, eta)
        v_new = lu_solve(lu, inj - rhs0)
        residual = float(np.abs(v_new - v).max() * scale)
        v = v_new
        if residual <= tol:
            v_all = _full_voltages(adm, v)
            return ExactFlowReport(v=v_all, v_nodes=v, losses=exact_losses(adm, v_all),
                                   iterations=it, converged=True, residual=residual)
    raise ConvergenceError(
        f"fixed-point load flow did not converge in {max_iter} iterations "
        f"(last update {residual:.3e})", residual=residual)


def _zip_pi_injection(feeder, conns, v_nodes, s_node, eta):
    """Like _zip_injection but without constant-impedance parts (folded)."""
    inj = np.zeros_like(v_nodes)
    for cn in conns:
        if cn.s_p == 0 and cn.s_i == 0:
            continue
        u = sum(s * v_nodes[r] for r, s in zip(cn.rows, cn.signs))
        i_el = 0.0 + 0.0j
        if cn.s_p != 0:
            i_el += np.conj(cn.s_p) / np.conj(u)
        if cn.s_i != 0:
            i_el += np.conj(cn.s_i) * cn.t / abs(cn.t) ** 2 * eta
        for r, s in zip(cn.rows, cn.signs):
            inj[r] -= s * i_el
    nz = s_node != 0
    inj[nz] += np.conj(s_node[nz]) / np.conj(v_nodes[nz])
    return inj


def _full_voltages(adm: AdmittanceSystem, v_nodes: np.ndarray) -> np.ndarray:
    out = np.empty(adm.y_full.shape[0], dtype=complex)
    out[adm.slack_idx] = adm.v0
    out[adm.node_idx] = v_nodes
    return out


def sweep_radial(feeder: FeederModel, s_g=None, adm: AdmittanceSystem | None = None,
                 tol: float = DEFAULT_TOL,
                 max_iter: int = DEFAULT_MAX_ITER) -> ExactFlowReport:
    """Back-forward sweep for radial single-phase feeders.

    Backward pass accumulates branch currents from the leaves, forward pass
    applies series voltage drops from the slack.  Shunt halves are treated
    as bus shunt admittances.
    """
    if feeder.is_three_phase:
        raise ValueError("sweep_radial is single-phase only; use fixed_point_flow")
    if not feeder.is_radial():
        raise ValueError("feeder is not radial (branch count != n-1)")
    if adm is None:
        adm = build_admittance(feeder)
    nb = feeder.n_bus
    children: dict[int, list[tuple[int, complex]]] = {k: [] for k in range(nb)}
    adj: dict[int, list[tuple[int, complex]]] = {k: [] for k in range(nb)}
    y_sh = np.zeros(nb, dtype=complex)
    for br in feeder.branches:
        z = complex(np.asarray(br.z).item())
        adj[br.from_bus].append((br.to_bus, z))
        adj[br.to_bus].append((br.from_bus, z))
        y_sh[br.from_bus] += 0.5j * complex(np.asarray(br.b_shunt).item())
        y_sh[br.to_bus] += 0.5j * complex(np.asarray(br.b_shunt).item())
    # orient the tree from the slack
    parent = {0: None}
    order = [0]
    stack = [0]
    while stack:
        k = stack.pop()
        for m, z in adj[k]:
            if m not in parent:
                parent[m] = k
                children[k].append((m, z))
                order.append(m)
                stack.append(m)

    s_node = _dispatch_per_node(feeder, s_g)
    conns = load_connections(feeder)
    v0 = adm.v0[0]
    v = np.full(nb, v0, dtype=complex)
    i_branch = np.zeros(nb, dtype=complex)  # current into bus k from its parent
    for it in range(1, max_iter + 1):
        v_nodes = v[1:]
        draw = -_zip_injection(feeder, v_nodes, s_node, 1.0)
        draw_all = np.concatenate([[0.0 + 0.0j], draw]) + y_sh * v
        # backward: accumulate downstream currents
        for k in reversed(order):
            i_branch[k] = draw_all[k] + sum(i_branch[m] for m, _ in children[k])
        # forward: apply series drops
        v_new = v.copy()
        for k in order:
            for m, z in children[k]:
                v_new[m] = v_new[k] - z * i_branch[m]
        delta = float(np.abs(v_new - v).max())
        v = v_new
        if delta <= tol:
            v_all = _full_voltages(adm, v[1:])
            return ExactFlowReport(v=v_all, v_nodes=v[1:],
                                   losses=exact_losses(adm, v_all),
                                   iterations=it, converged=True, residual=delta)
    raise ConvergenceError(
        f"back-forward sweep did not converge in {max_iter} iterations "
        f"(last update {delta:.3e})", residual=delta)


def branch_losses(feeder: FeederModel, v_all: np.ndarray) -> float:
    """Independent loss evaluation: sum over branches of |I|^2 R (plus shunt
    conductance, which is zero for the purely susceptive shunts modeled)."""
    nb = feeder.n_bus
    p = feeder.phases
    idx = lambda ph, k: ph * nb + k
    total = 0.0
    for br in feeder.branches:
        z = np.asarray(br.z)
        if p == 1:
            zm = np.array([[complex(z.item())]])
        elif z.ndim <= 1:
            zm = np.diag(np.broadcast_to(z, (3,)).astype(complex))
        else:
            zm = z.astype(complex)
        y = np.linalg.inv(zm)
        vf = np.array([v_all[idx(a, br.from_bus)] for a in range(p)])
        vt = np.array([v_all[idx(a, br.to_bus)] for a in range(p)])
        i_ser = y @ (vf - vt)
        total += float(np.real(np.vdot(i_ser, zm @ i_ser)))
    return total


def compare(approx: VoltageSolution, approx_losses: float,
            exact: ExactFlowReport, eta: float = 1.0) -> ErrorMetrics:
    """Percent error metrics of an approximate solution against the oracle.

    eps_v is the largest complex-voltage deviation in percent of the 1 pu
    (eta-normalized) base; eps_p is the relative loss error in percent.
    """
    if not exact.converged:
        raise ValueError("exact side did not converge; metrics undefined")
    dv = np.abs(np.asarray(approx.v) - exact.v_nodes).max() if len(exact.v_nodes) else 0.0
    eps_v = 100.0 * eta * float(dv)
    eps_p = 100.0 * abs(approx_losses - exact.losses) / abs(exact.losses) \
        if exact.losses != 0 else 0.0
    return ErrorMetrics(eps_p=float(eps_p), eps_v=eps_v)
