"""FastAPI service wrapping the solver package.

Endpoints mirror the CLI subcommands: single-case power flow and OPF
solves, three-phase OPF, random feeder generation, and fleet experiments.
Feeder documents use the same JSON schema as the feeder files.
"""

from __future__ import annotations

from typing import Literal, Optional, Union

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import exactflow, fleet, linflow, qp, randgen
from .errors import ConvergenceError, InfeasibleError, SingularMatrixError
from .netmodel import FeederError, FeederModel, build_admittance, feeder_from_dict, feeder_to_dict

Scalar3 = Union[float, list[float]]
Matrix3 = Union[float, list[float], list[list[float]]]


class BusDoc(BaseModel):
    id: int
    kind: Literal["slack", "load"] = "load"
    phases: int = 1
    v_nom: float = 1.0


class BranchDoc(BaseModel):
    from_bus: int = Field(alias="from")
    to_bus: int = Field(alias="to")
    r: Matrix3
    x: Matrix3
    b_shunt: Matrix3 = 0.0

    model_config = {"populate_by_name": True}


class LoadDoc(BaseModel):
    bus: int
    sp_re: Scalar3 = 0.0
    sp_im: Scalar3 = 0.0
    si_re: Scalar3 = 0.0
    si_im: Scalar3 = 0.0
    sz_re: Scalar3 = 0.0
    sz_im: Scalar3 = 0.0
    connection: Literal["wye", "delta"] = "wye"


class GeneratorDoc(BaseModel):
    bus: int
    smax_re: float
    smax_im: float
    smin_re: float = 0.0
    smin_im: float = 0.0
    balanced: bool = False


class SlackVoltageDoc(BaseModel):
    re: Scalar3 = 1.0
    im: Scalar3 = 0.0


class FeederDoc(BaseModel):
    buses: list[BusDoc]
    branches: list[BranchDoc]
    loads: list[LoadDoc] = []
    generators: list[GeneratorDoc] = []
    slack_voltage: SlackVoltageDoc = SlackVoltageDoc()


class ComplexDoc(BaseModel):
    re: float
    im: float


class PfRequest(BaseModel):
    feeder: FeederDoc
    mode: Literal["linear", "exact"] = "exact"
    dispatch: Optional[list[ComplexDoc]] = None


class PfReport(BaseModel):
    mode: str
    v_re: list[float]
    v_im: list[float]
    losses: float
    max_drop: float
    iterations: Optional[int] = None
    converged: Optional[bool] = None
    residual: Optional[float] = None


class OpfRequest(BaseModel):
    feeder: FeederDoc
    method: Literal["qp", "relaxed"] = "qp"
    delta_max: Optional[float] = None


class OpfReport(BaseModel):
    method: str
    dispatch: list[ComplexDoc]
    predicted_losses: float
    exact_losses: Optional[float]
    active_set: list[str]
    delta_ok: Optional[bool]
    delta_enforced: bool = False
    max_drop: float
    kkt_residual: float


class GenParamsDoc(BaseModel):
    n_min: int = 30
    n_max: int = 60
    r_min: float = 0.001
    r_max: float = 0.017
    x_min: float = 0.001
    x_max: float = 0.017
    b_min: float = 0.0
    b_max: float = 0.0002
    load_min: float = 0.0
    load_max: float = 0.2
    pf_min: float = 0.7
    pf_max: float = 1.0
    const_power_fraction: float = 0.5
    dg_fraction: float = 0.05
    dg_cap_min: float = 0.5
    dg_cap_max: float = 1.5


class GenRequest(BaseModel):
    seed: int = 0
    params: Optional[GenParamsDoc] = None


class GenResponse(BaseModel):
    feeder: dict


class FleetRequest(BaseModel):
    count: int = 1000
    seed: int = 0
    params: Optional[GenParamsDoc] = None
    delta_max: float = fleet.DEFAULT_DELTA_MAX
    jobs: int = 1


class FleetResponse(BaseModel):
    rows: list[dict]
    failures: list[dict]
    histograms: dict
    rows_csv: str
    histograms_csv: str


app = FastAPI(title="qopf", description="Quadratic convex OPF for distribution feeders")


def _feeder(doc: FeederDoc) -> FeederModel:
    try:
        return feeder_from_dict(doc.model_dump(by_alias=True))
    except FeederError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


def _params(doc: Optional[GenParamsDoc]) -> randgen.GenParams:
    if doc is None:
        return randgen.GenParams()
    return randgen.GenParams(**doc.model_dump())


def _solver_errors(fn):
    try:
        return fn()
    except (ConvergenceError, InfeasibleError, SingularMatrixError) as exc:
        raise HTTPException(status_code=409, detail=str(exc)) from exc
    except (FeederError, ValueError) as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


@app.get("/health")
def health() -> dict:
    return {"status": "ok"}


@app.post("/pf", response_model=PfReport)
def power_flow(req: PfRequest) -> PfReport:
    feeder = _feeder(req.feeder)

    def run():
        adm = build_admittance(feeder)
        n_vars = len(linflow.gen_variables(feeder))
        s_g = np.zeros(n_vars, dtype=complex)
        if req.dispatch is not None:
            if len(req.dispatch) != n_vars:
                raise ValueError(
                    f"dispatch has {len(req.dispatch)} entries, expected {n_vars}")
            s_g = np.array([d.re + 1j * d.im for d in req.dispatch])
        if req.mode == "linear":
            model = linflow.linearize(feeder, adm)
            sol = linflow.solve_linear_flow(model, s_g)
            v_all = sol.full(adm.slack_idx, adm.node_idx)
            losses = exactflow.exact_losses(adm, v_all)
            return PfReport(mode="linear", v_re=sol.v.real.tolist(),
                            v_im=sol.v.imag.tolist(), losses=losses,
                            max_drop=sol.max_drop)
        if not feeder.is_three_phase and feeder.is_radial():
            rep = exactflow.sweep_radial(feeder, s_g, adm)
        else:
            rep = exactflow.fixed_point_flow(feeder, adm, s_g)
        eta = 1.0 / feeder.v_nom if feeder.is_three_phase else 1.0
        from .netmodel import rotation_vector
        drop = float(np.abs(rotation_vector(feeder) - eta * rep.v_nodes).max())
        return PfReport(mode="exact", v_re=rep.v_nodes.real.tolist(),
                        v_im=rep.v_nodes.imag.tolist(), losses=rep.losses,
                        max_drop=drop, iterations=rep.iterations,
                        converged=rep.converged, residual=rep.residual)

    return _solver_errors(run)


def _opf_report(feeder, method, delta_max) -> OpfReport:
    if not feeder.generators:
        raise ValueError("feeder has no generators; nothing to optimize")
    adm = build_admittance(feeder)
    model = linflow.linearize(feeder, adm)
    program = qp.assemble_qp(model, adm, feeder, delta_max=delta_max)
    result = qp.solve_relaxed(program) if method == "relaxed" else qp.solve_qp(program)
    enforced = False
    if delta_max is not None and not qp.check_delta(result, delta_max, model)[0]:
        result = qp.enforce_delta(program, delta_max)
        enforced = True
    if not feeder.is_three_phase and feeder.is_radial():
        exact = exactflow.sweep_radial(feeder, result.dispatch, adm)
    else:
        exact = exactflow.fixed_point_flow(feeder, adm, result.dispatch)
    delta_ok = result.delta_ok
    if delta_max is not None and delta_ok is None:
        delta_ok = qp.check_delta(result, delta_max, model)[0]
    return OpfReport(method=method,
                     dispatch=[ComplexDoc(re=d.real, im=d.imag) for d in result.dispatch],
                     predicted_losses=result.predicted_losses,
                     exact_losses=exact.losses, active_set=result.active_set,
                     delta_ok=delta_ok, delta_enforced=enforced,
                     max_drop=result.voltages.max_drop,
                     kkt_residual=result.kkt_residual)


@app.post("/opf", response_model=OpfReport)
def opf(req: OpfRequest) -> OpfReport:
    feeder = _feeder(req.feeder)
    return _solver_errors(lambda: _opf_report(feeder, req.method, req.delta_max))


@app.post("/threephase-opf", response_model=OpfReport)
def threephase_opf(req: OpfRequest) -> OpfReport:
    feeder = _feeder(req.feeder)

    def run():
        if not feeder.is_three_phase:
            raise ValueError("feeder is not three-phase; use /opf")
        return _opf_report(feeder, req.method, req.delta_max)

    return _solver_errors(run)


@app.post("/gen", response_model=GenResponse)
def gen(req: GenRequest) -> GenResponse:
    from dataclasses import replace

    def run():
        params = replace(_params(req.params), seed=req.seed)
        return GenResponse(feeder=feeder_to_dict(randgen.generate(params)))

    return _solver_errors(run)


@app.post("/fleet", response_model=FleetResponse)
def run_fleet(req: FleetRequest) -> FleetResponse:
    def run():
        out = fleet.run_fleet(req.count, seed=req.seed, params=_params(req.params),
                              delta_max=req.delta_max, jobs=req.jobs)
        return FleetResponse(rows=out["rows"], failures=out["failures"],
                             histograms=out["histograms"],
                             rows_csv=fleet.rows_to_csv(out["rows"]),
                             histograms_csv=fleet.histograms_to_csv(out["histograms"]))

    return _solver_errors(run)
