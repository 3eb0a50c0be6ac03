"""Linearized complex load flow and the voltage sensitivity representation.

The constant-power current S*/V* is replaced near the nominal operating
point by its first-order Laurent expansion, which turns the nodal balance
into the affine complex relation

    A + B V* + C V - Dc S_G* = 0

After splitting into real and imaginary parts the voltages become an
affine function of the generator dispatch, V = U + W [S_r; S_i].  The sign
of the generator term is fixed so that positive injection raises voltages
(checked numerically by the 2-bus test in the suite).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import SingularMatrixError
from .netmodel import (AdmittanceSystem, FeederModel, load_connections,
                       rotation_vector)


@dataclass(frozen=True)
class GenVar:
    """One complex decision variable of the dispatch vector."""

    gen_index: int
    phase: int | None = None  # None: single-phase or balanced three-phase
    balanced: bool = False


@dataclass
class LinearFlowModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Dc: np.ndarray          # complex N x Gv generator incidence (current per unit power)
    M: np.ndarray           # real 2N x 2N
    U: np.ndarray           # complex no-generation voltages
    W: np.ndarray           # real 2N x 2Gv sensitivity
    gen_vars: list[GenVar]
    eta: float = 1.0
    T: np.ndarray = None    # nominal per-node rotation
    v0: np.ndarray = None   # slack voltage(s)
    lu: tuple = field(default=None, repr=False)

    @property
    def n_nodes(self) -> int:
        return self.A.shape[0]

    @property
    def n_vars(self) -> int:
        return len(self.gen_vars)

    @property
    def w_blocks(self):
        n, g = self.n_nodes, self.n_vars
        return (self.W[:n, :g], self.W[:n, g:], self.W[n:, :g], self.W[n:, g:])

    @property
    def Wr(self) -> np.ndarray:
        """Real-voltage rows of W."""
        return self.W[: self.n_nodes]

    @property
    def Wi(self) -> np.ndarray:
        return self.W[self.n_nodes:]


@dataclass
class VoltageSolution:
    v: np.ndarray           # complex, non-slack nodes
    v0: np.ndarray          # slack voltage(s)
    max_drop: float         # max_k ||T_k - eta*V_k|| (Euclidean norm on C)

    def full(self, slack_idx, node_idx) -> np.ndarray:
        out = np.empty(len(self.v) + len(np.atleast_1d(self.v0)), dtype=complex)
        out[slack_idx] = np.atleast_1d(self.v0)
        out[node_idx] = self.v
        return out


def gen_variables(feeder: FeederModel) -> list[GenVar]:
    """Dispatch variable layout: one per generator, except unbalanced
    three-phase generators which get one variable per phase."""
    out: list[GenVar] = []
    for gi, g in enumerate(feeder.generators):
        if feeder.is_three_phase and not g.balanced:
            out.extend(GenVar(gi, phase=p) for p in range(3))
        elif feeder.is_three_phase:
            out.append(GenVar(gi, balanced=True))
        else:
            out.append(GenVar(gi))
    return out


def generator_incidence(feeder: FeederModel) -> np.ndarray:
    """Complex matrix mapping dispatch variables to nodal injection currents.

    Wye-connected constant-power generators near nominal voltage inject the
    current eta*T_k*S* per phase; a balanced generator splits its single
    complex variable as 1/3 per phase.
    """
    n = feeder.n_bus - 1
    eta = 1.0 / feeder.v_nom if feeder.is_three_phase else 1.0
    t_all = rotation_vector(feeder)
    gvars = gen_variables(feeder)
    p_count = 3 if feeder.is_three_phase else 1
    dc = np.zeros((p_count * n, len(gvars)), dtype=complex)
    for col, gv in enumerate(gvars):
        bus = feeder.generators[gv.gen_index].bus
        if gv.phase is not None:
            node = gv.phase * n + (bus - 1)
            dc[node, col] = eta * t_all[node]
        elif gv.balanced:
            for p in range(3):
                node = p * n + (bus - 1)
                dc[node, col] = eta * t_all[node] / 3.0
        else:
            dc[bus - 1, col] = 1.0
    return dc


def _factorize(m: np.ndarray):
    lu = lu_factor(m)
    d = np.abs(np.diag(lu[0]))
    if d.min() <= 1e-14 * max(d.max(), 1.0):
        cond = np.linalg.cond(m)
        raise SingularMatrixError(
            f"load-flow matrix M is numerically singular (cond ~ {cond:.3e})")
    return lu


def linearize(feeder: FeederModel, adm: AdmittanceSystem) -> LinearFlowModel:
    """Assemble A, B, C, Dc, stack M, and solve for U and W.

    Works for single-phase per-unit feeders and for three-phase feeders in
    physical units (where the Laurent expansion is taken around the
    eta-normalized rotated nominal voltage).
    """
    eta = 1.0 / feeder.v_nom if feeder.is_three_phase else 1.0
    v0 = np.atleast_1d(np.asarray(feeder.slack_voltage, dtype=complex))
    if not feeder.is_three_phase and abs(v0[0].imag) > 1e-12:
        raise ValueError("single-phase slack angle must be 0 degrees")
    nn = adm.n_nodes
    a = adm.yn0 @ v0
    b = np.zeros((nn, nn), dtype=complex)
    c = adm.ynn.astype(complex).copy()
    for cn in load_connections(feeder):
        j = np.zeros(nn)
        for r, s in zip(cn.rows, cn.signs):
            j[r] = s
        t = cn.t
        tt = abs(t) ** 2
        # loads consume positive power; their injection enters with a minus
        a += (2.0 * eta * np.conj(cn.s_p) / np.conj(t)
              + eta * np.conj(cn.s_i) * t / tt) * j
        if cn.s_p != 0:
            b -= (eta ** 2 * np.conj(cn.s_p) / np.conj(t) ** 2) * np.outer(j, j)
        if cn.s_z != 0:
            c += (eta ** 2 * np.conj(cn.s_z) / tt) * np.outer(j, j)
    dc = generator_incidence(feeder)

    br, bi, cr, ci = b.real, b.imag, c.real, c.imag
    m = np.block([[br + cr, bi - ci], [bi + ci, -br + cr]])
    lu = _factorize(m)
    u_stack = lu_solve(lu, -np.concatenate([a.real, a.imag]))
    dr, di = dc.real, dc.imag
    w = lu_solve(lu, np.block([[dr, di], [di, -dr]]))
    return LinearFlowModel(A=a, B=b, C=c, Dc=dc, M=m,
                           U=u_stack[:nn] + 1j * u_stack[nn:], W=w,
                           gen_vars=gen_variables(feeder), eta=eta,
                           T=rotation_vector(feeder), v0=v0, lu=lu)


def solve_linear_flow(model: LinearFlowModel, s_g: np.ndarray) -> VoltageSolution:
    """Evaluate V = U + W.[S_r; S_i] for a complex dispatch vector."""
    s_g = np.asarray(s_g, dtype=complex)
    if s_g.shape != (model.n_vars,):
        raise ValueError(f"dispatch has shape {s_g.shape}, expected ({model.n_vars},)")
    s = np.concatenate([s_g.real, s_g.imag])
    v_stack = np.concatenate([model.U.real, model.U.imag]) + model.W @ s
    n = model.n_nodes
    v = v_stack[:n] + 1j * v_stack[n:]
    drop = np.abs(model.T - model.eta * v).max() if n else 0.0
    return VoltageSolution(v=v, v0=model.v0, max_drop=float(drop))


def laurent_error_bound(delta: float) -> float:
    """Worst-case magnitude of 1/V* - (2 - V*) over the disk ||1-V|| <= delta."""
    if not 0.0 <= delta < 1.0:
        raise ValueError("delta must lie in [0, 1)")
    return delta ** 2 / (1.0 - delta)
