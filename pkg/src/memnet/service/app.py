"""FastAPI service wrapping the core package.

The handlers are plain functions so the CLI can call them in-process; the
routes are thin wrappers that translate simulator errors into 422
responses. The service is stateless: every request carries the full
netlist/config text and receives the deterministic output files inline.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__, network, simulate
from ..config import RunConfig, parse_device_config
from ..errors import SimulatorError
from ..netlist import parse_netlist
from . import models


def check_handler(req: models.CheckRequest) -> models.CheckResponse:
    netlist = parse_netlist(req.netlist)
    dev = simulate.build_device(parse_device_config(req.device_config))
    structure = network.build_structure(netlist)
    report = network.check_index1(structure)
    resp = models.CheckResponse(
        no_li_cutset=report.no_li_cutset,
        no_cv_loop=report.no_cv_loop,
        cutset_witness=(None if report.cutset_witness is None
                        else list(report.cutset_witness)),
        loop_witness=(None if report.loop_witness is None
                      else list(report.loop_witness)),
        decoupled=False,
        ok=False,
    )
    if not report.ok:
        resp.detail = "index-1 topology conditions violated"
        return resp
    E, A = network.assemble_EA(structure, dev.ops.cap)
    P, Q, _ = network.build_projectors(structure)
    try:
        sys = network.build_decoupled(E, A, P, Q, structure)
    except SimulatorError as exc:
        resp.detail = str(exc)
        return resp
    resp.decoupled = True
    resp.cond_E1 = sys.cond_E1
    x0 = np.zeros(sys.n) if req.x0 is None else np.asarray(req.x0, dtype=float)
    if x0.shape != (sys.n,):
        raise SimulatorError(
            f"x0 has length {x0.size}, state dimension is {sys.n}"
        )
    cons = network.check_consistency(
        x0, network.source_vector(structure, 0.0), sys,
        tol=req.tol, repair=req.repair,
    )
    resp.consistent = cons.consistent
    resp.consistency_residual = cons.residual
    if req.repair:
        resp.repaired_x0 = list(cons.x0)
    resp.ok = report.ok and (cons.consistent or req.repair)
    if not resp.ok:
        resp.detail = "initial state violates the algebraic constraint"
    return resp


def run_handler(req: models.RunRequest) -> models.RunResponse:
    dev = simulate.build_device(parse_device_config(req.device_config))
    run_cfg = RunConfig(
        dt=req.dt, t_end=req.t_end, mode=req.mode, drive=req.drive,
        fields_every=req.fields_every,
        repair_consistency=req.repair_consistency,
        k_trunc=req.k_trunc, gummel_tol=req.gummel_tol,
    )
    netlist = parse_netlist(req.netlist) if req.netlist else None
    x0 = None if req.x0 is None else np.asarray(req.x0, dtype=float)
    result = simulate.run_transient(dev, run_cfg, netlist=netlist, x0=x0)
    files = {"timeseries.csv": simulate.format_timeseries(result.history)}
    files.update(result.field_dumps)
    cons = result.conservation()
    return models.RunResponse(
        files=files,
        columns=result.history.columns,
        summary=result.summary,
        conservation={
            "max_D_drift": cons.max_D_drift,
            "max_n_balance": cons.max_n_balance,
            "max_p_balance": cons.max_p_balance,
            "max_charge_imbalance": cons.max_charge_imbalance,
        },
    )


def steady_handler(req: models.SteadyRequest) -> models.SteadyResponse:
    dev = simulate.build_device(parse_device_config(req.device_config))
    result = simulate.steady(
        dev, req.bias, dt0=req.dt0, tol=req.tol, max_steps=req.max_steps,
    )
    area = dev.mesh.cell_area
    return models.SteadyResponse(
        converged=result.converged,
        steps=result.steps,
        rate=result.rate,
        masses=(
            float(result.state.n.sum() * area),
            float(result.state.p.sum() * area),
            float(result.state.D.sum() * area),
        ),
        min_density=result.state.min(),
        max_density=result.state.max(),
        fields=simulate.format_fields(
            dev.mesh, 0.0, result.state, result.V),
    )


def create_app() -> FastAPI:
    app = FastAPI(title="memnet", version=__version__)

    def guarded(handler, req):
        try:
            return handler(req)
        except SimulatorError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.get("/health", response_model=models.HealthResponse)
    def health():
        return models.HealthResponse(status="ok", version=__version__)

    @app.post("/check", response_model=models.CheckResponse)
    def check(req: models.CheckRequest):
        return guarded(check_handler, req)

    @app.post("/run", response_model=models.RunResponse)
    def run(req: models.RunRequest):
        return guarded(run_handler, req)

    @app.post("/steady", response_model=models.SteadyResponse)
    def steady(req: models.SteadyRequest):
        return guarded(steady_handler, req)

    return app
