"""Request/response models of the simulation service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class CheckRequest(BaseModel):
    """Topology and consistency check of a netlist."""

    netlist: str
    device_config: str
    x0: list[float] | None = None
    repair: bool = False
    tol: float = 1e-10


class CheckResponse(BaseModel):
    no_li_cutset: bool
    no_cv_loop: bool
    cutset_witness: list[float] | None = None
    loop_witness: list[float] | None = None
    decoupled: bool
    cond_E1: float | None = None
    consistent: bool | None = None
    consistency_residual: float | None = None
    repaired_x0: list[float] | None = None
    ok: bool
    detail: str = ""


class RunRequest(BaseModel):
    """Transient run; returns the deterministic output files inline."""

    device_config: str
    netlist: str | None = None
    dt: float = Field(gt=0)
    t_end: float
    mode: str = "coupled"
    drive: str | None = None
    fields_every: int = 0
    repair_consistency: bool = False
    k_trunc: float | None = None
    gummel_tol: float | None = None
    x0: list[float] | None = None


class RunResponse(BaseModel):
    files: dict[str, str]
    columns: list[str]
    summary: dict
    conservation: dict


class SteadyRequest(BaseModel):
    """Pseudo-transient continuation to a stationary state at fixed bias."""

    device_config: str
    bias: tuple[float, float] = (0.0, 0.0)
    dt0: float = 0.1
    tol: float = 1e-10
    max_steps: int = 200


class SteadyResponse(BaseModel):
    converged: bool
    steps: int
    rate: float
    masses: tuple[float, float, float]
    min_density: float
    max_density: float
    fields: str
