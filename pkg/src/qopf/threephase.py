"""Three-phase unbalanced extension of the linearized OPF.

Three-phase feeders carry physical units; voltages are normalized by
eta = 1/v_nom and rotated by the per-phase sequence vector so the Laurent
expansion stays anchored at unity.  Nodes are ordered by phase (all
phase-a nodes, then b, then c).  Balanced generators contribute a single
complex dispatch variable split 1/3 per phase through the incidence
matrix; delta loads enter through their phase-to-phase connection rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import exactflow, linflow, qp
from .netmodel import (DELTA, AdmittanceSystem, FeederModel, build_admittance,
                       rotation_vector)


@dataclass
class ThreePhaseModel:
    eta: float
    T: np.ndarray               # per-node rotation, |T_k| = 1
    J: np.ndarray               # node-level connection matrix of the loads
    D: np.ndarray               # real per-variable incidence (1/3 balanced pattern)
    Dc: np.ndarray              # complex generator matrix eta * diag(T) . D
    v0: np.ndarray              # slack voltages, all three phases


def real_incidence(feeder: FeederModel) -> np.ndarray:
    """Real generator incidence over phase-ordered nodes.

    Unbalanced generators get one unit column per phase; balanced
    generators one column with 1/3 in each of their three phase rows.
    """
    n = feeder.n_bus - 1
    gvars = linflow.gen_variables(feeder)
    d = np.zeros((3 * n, len(gvars)))
    for col, gv in enumerate(gvars):
        bus = feeder.generators[gv.gen_index].bus
        if gv.balanced:
            for p in range(3):
                d[p * n + (bus - 1), col] = 1.0 / 3.0
        else:
            d[gv.phase * n + (bus - 1), col] = 1.0
    return d


def connection_matrix(feeder: FeederModel) -> np.ndarray:
    """Node-level J: identity rows for wye buses, phase-difference rows for
    delta buses (rows of a delta block sum to zero)."""
    n = feeder.n_bus - 1
    j = np.eye(3 * n)
    delta_buses = {ld.bus for ld in feeder.loads if ld.connection == DELTA}
    for bus in delta_buses:
        for p in range(3):
            q = (p + 1) % 3
            row = p * n + (bus - 1)
            j[row, row] = 1.0
            j[row, q * n + (bus - 1)] = -1.0
    return j


def build_threephase(feeder: FeederModel,
                     adm: AdmittanceSystem | None = None
                     ) -> tuple[ThreePhaseModel, linflow.LinearFlowModel]:
    """Linearize a three-phase feeder; returns the phase bookkeeping and the
    shared sensitivity model used by the quadratic OPF."""
    if not feeder.is_three_phase:
        raise ValueError("feeder is not three-phase")
    if adm is None:
        adm = build_admittance(feeder)
    model = linflow.linearize(feeder, adm)
    tpm = ThreePhaseModel(eta=model.eta, T=rotation_vector(feeder),
                          J=connection_matrix(feeder), D=real_incidence(feeder),
                          Dc=model.Dc, v0=model.v0)
    return tpm, model


def solve_threephase_opf(feeder: FeederModel, method: str = "qp",
                         delta_max: float | None = None,
                         adm: AdmittanceSystem | None = None) -> qp.OpfResult:
    """Assemble and solve the three-phase quadratic OPF, then re-evaluate the
    dispatch on the exact fixed-point oracle."""
    if adm is None:
        adm = build_admittance(feeder)
    _, model = build_threephase(feeder, adm)
    program = qp.assemble_qp(model, adm, feeder, delta_max=delta_max)
    if method == "relaxed":
        result = qp.solve_relaxed(program)
    elif method == "qp":
        result = qp.solve_qp(program)
    else:
        raise ValueError(f"unknown method {method!r}")
    if delta_max is not None and not check_ok(result, delta_max, model):
        result = qp.enforce_delta(program, delta_max)
    exact = exactflow.fixed_point_flow(feeder, adm, result.dispatch)
    result.exact_losses = exact.losses
    return result


def check_ok(result: qp.OpfResult, delta_max: float, model) -> bool:
    ok, _ = qp.check_delta(result, delta_max, model)
    return ok
