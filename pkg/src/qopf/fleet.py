"""Monte-Carlo validation pipeline over random radial feeders.

Each case runs: generate -> exact base flow -> linearize -> assemble QP ->
relaxed solve (QP solve when bounds bind) -> exact re-evaluation at the
dispatch -> error metrics.  Rows are ordered by seed index and formatted
with shortest round-trip floats, so a fixed seed reproduces the CSVs
byte-for-byte.
"""

from __future__ import annotations

import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import exactflow, linflow, qp, randgen
from .errors import ConvergenceError, InfeasibleError, SingularMatrixError
from .netmodel import build_admittance

log = logging.getLogger(__name__)

ROW_FIELDS = ["seed", "n_bus", "base_losses", "opt_losses", "improvement_pct",
              "eps_p", "eps_v", "min_v", "delta_ok", "method"]
HIST_METRICS = ["improvement_pct", "eps_p", "eps_v", "min_v"]
DEFAULT_DELTA_MAX = 0.3


def run_case(seed: int, params: randgen.GenParams | None = None,
             delta_max: float = DEFAULT_DELTA_MAX) -> dict:
    """Run the full validation pipeline on the feeder drawn from `seed`."""
    params = replace(params or randgen.GenParams(), seed=seed)
    feeder = randgen.generate(params)
    adm = build_admittance(feeder)
    base = exactflow.sweep_radial(feeder, None, adm)
    model = linflow.linearize(feeder, adm)
    program = qp.assemble_qp(model, adm, feeder, delta_max=delta_max)
    result = qp.solve_relaxed(program)
    method = "relaxed"
    s = np.concatenate([result.dispatch.real, result.dispatch.imag])
    if np.any(s < program.lo - 1e-9) or np.any(s > program.hi + 1e-9):
        result = qp.solve_qp(program)
        method = "qp"
    exact_opt = exactflow.sweep_radial(feeder, result.dispatch, adm)
    metrics = exactflow.compare(result.voltages, result.predicted_losses, exact_opt)
    improvement = 100.0 * (base.losses - exact_opt.losses) / base.losses
    return {
        "seed": seed,
        "n_bus": feeder.n_bus,
        "base_losses": base.losses,
        "opt_losses": exact_opt.losses,
        "improvement_pct": improvement,
        "eps_p": metrics.eps_p,
        "eps_v": metrics.eps_v,
        "min_v": float(np.abs(base.v_nodes).min()),
        "delta_ok": bool(qp.check_delta(result, delta_max, model)[0]),
        "method": method,
    }


def _case_or_none(args):
    seed, params, delta_max = args
    try:
        return run_case(seed, params, delta_max)
    except (ConvergenceError, InfeasibleError, SingularMatrixError) as exc:
        log.warning("case seed=%d failed: %s", seed, exc)
        return {"seed": seed, "error": str(exc)}


def run_fleet(count: int, seed: int = 0,
              params: randgen.GenParams | None = None,
              delta_max: float = DEFAULT_DELTA_MAX,
              jobs: int = 1) -> dict:
    """Run `count` cases with per-case seeds seed, seed+1, ...

    Returns rows (successful cases, seed order), failures, and 10-bin
    histograms of the headline metrics.
    """
    tasks = [(seed + i, params, delta_max) for i in range(count)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_case_or_none, tasks, chunksize=8))
    else:
        outcomes = [_case_or_none(t) for t in tasks]
    rows = [o for o in outcomes if "error" not in o]
    failures = [o for o in outcomes if "error" in o]
    return {"rows": rows, "failures": failures,
            "histograms": {m: histogram([r[m] for r in rows]) for m in HIST_METRICS}}


def histogram(values, bins: int = 10) -> dict:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return {"edges": [], "counts": []}
    counts, edges = np.histogram(values, bins=bins)
    return {"edges": edges.tolist(), "counts": counts.tolist()}


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows: list[dict]) -> str:
    out = io.StringIO()
    out.write(",".join(ROW_FIELDS) + "\n")
    for r in rows:
        out.write(",".join(_fmt(r[f]) for f in ROW_FIELDS) + "\n")
    return out.getvalue()


def histograms_to_csv(histograms: dict) -> str:
    out = io.StringIO()
    out.write("metric,bin_left,bin_right,count\n")
    for metric, h in histograms.items():
        edges, counts = h["edges"], h["counts"]
        for k, c in enumerate(counts):
            out.write(f"{metric},{edges[k]!r},{edges[k + 1]!r},{c}\n")
    return out.getvalue()
