"""Transient orchestration, steady solve, and deterministic file outputs.

One coupled step: lift the terminal boundary potential from the current
differential network state, run the self-consistent device step, form the
terminal current integrals and the network forcing from the resulting face
currents, advance the differential component, recover the algebraic one,
and append a diagnostics row. Drive mode bypasses the network and
prescribes the bias directly.

Outputs are deterministic: identical inputs produce byte-identical files.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import coupling, diagnostics, grid, network, poisson, transport
from .config import DeviceConfig, RunConfig
from .errors import (ConsistencyError, SimulatorError, StepError,
                     TopologyError)
from .netlist import Netlist

logger = logging.getLogger(__name__)

FIXED_COLUMNS = [
    "ID1", "ID2",
    "H_total", "H_internal", "H_electric", "H_network",
    "diss_n", "diss_p", "diss_D",
    "mass_n", "mass_p", "mass_D",
    "min_n", "min_p", "min_D",
    "max_n", "max_p", "max_D",
]


@dataclass
class DeviceProblem:
    """Assembled device-side objects shared across a run."""

    cfg: DeviceConfig
    mesh: grid.Mesh
    op: poisson.EllipticOperator
    ops: coupling.CouplingOperators
    doping_cells: np.ndarray
    nbar_faces: np.ndarray
    pbar_faces: np.ndarray
    n_ref: np.ndarray
    p_ref: np.ndarray
    state0: transport.CarrierState

    @property
    def lambda2(self) -> float:
        return self.cfg.lambda2

    @property
    def doping_sup(self) -> float:
        return self.cfg.doping.sup

    def initial_state(self) -> transport.CarrierState:
        return self.state0.copy()

    def boundary_potential(self, u_d) -> np.ndarray:
        return coupling.boundary_potential(self.ops.vbi, u_d, self.mesh)

    def vacancy_reference(self, u_d) -> np.ndarray:
        """exp of the negated built-in plus harmonic bias lift."""
        lift = coupling.lifted_bias_field(self.ops.decomp, u_d)
        return np.exp(-(self.ops.vbi.cells + lift))

    def energy_refs(self, u_d) -> diagnostics.EnergyRefs:
        return diagnostics.EnergyRefs(
            n_ref=self.n_ref,
            p_ref=self.p_ref,
            D_ref=self.vacancy_reference(u_d),
            v_stationary=self.ops.decomp.v_stationary,
            vbi_trace=self.ops.vbi.trace,
            k=self.cfg.k_trunc,
        )


def build_device(cfg: DeviceConfig) -> DeviceProblem:
    mesh = grid.build_mesh(cfg.domain, cfg.nx, cfg.ny)
    doping_cells = cfg.doping.eval(mesh.xc, mesh.yc)
    doping_faces = cfg.doping.eval(mesh.face_mid_x, mesh.face_mid_y)
    vbi = coupling.builtin_potential(mesh, doping_cells, doping_faces, cfg.n_i)
    op = poisson.assemble_operator(mesh, cfg.lambda2)
    ops = coupling.build_coupling(mesh, cfg.lambda2, doping_cells, vbi, op)
    nbar = grid.boundary_value_array(mesh, cfg.n_bar[0], cfg.n_bar[1])
    pbar = grid.boundary_value_array(mesh, cfg.p_bar[0], cfg.p_bar[1])
    # volumetric reference: harmonic lift of the per-terminal constants
    w1, w2 = ops.decomp.w1, ops.decomp.w2
    n_ref = cfg.n_bar[0] * w1 + cfg.n_bar[1] * w2
    p_ref = cfg.p_bar[0] * w1 + cfg.p_bar[1] * w2
    n0 = cfg.n0.eval(mesh.xc, mesh.yc)
    p0 = cfg.p0.eval(mesh.xc, mesh.yc)
    d0 = cfg.D0.eval(mesh.xc, mesh.yc)
    if min(n0.min(), p0.min(), d0.min()) < 0:
        raise SimulatorError("initial densities must be nonnegative")
    state0 = transport.CarrierState(n=n0, p=p0, D=d0)
    return DeviceProblem(
        cfg=cfg, mesh=mesh, op=op, ops=ops,
        doping_cells=doping_cells,
        nbar_faces=nbar, pbar_faces=pbar,
        n_ref=n_ref, p_ref=p_ref,
        state0=state0,
    )


@dataclass
class History:
    """Recorded per-step diagnostics plus side arrays for reports."""

    columns: list[str]
    rows: list[np.ndarray] = field(default_factory=list)
    boundary_fluxes: list[np.ndarray] = field(default_factory=list)
    gummel_iterations: list[int] = field(default_factory=list)
    initial_masses: np.ndarray | None = None
    dt: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.vstack(self.rows)

    def column(self, name: str) -> np.ndarray:
        return self.as_array()[:, self.columns.index(name)]


@dataclass
class RunResult:
    history: History
    state: transport.CarrierState
    V: np.ndarray
    mesh: grid.Mesh
    field_dumps: dict[str, str]
    summary: dict

    def conservation(self) -> diagnostics.ConservationReport:
        h = self.history
        data = h.as_array()
        cols = h.columns

        def block(names):
            return data[:, [cols.index(c) for c in names]]

        return diagnostics.conservation_report(
            h.dt,
            block(["mass_n", "mass_p", "mass_D"]),
            np.vstack(h.boundary_fluxes),
            block(["ID1", "ID2"]),
            h.initial_masses,
        )


def _columns(m: int, n_L: int, n_V: int) -> list[str]:
    cols = ["t"]
    cols += [f"u_{i + 1}" for i in range(m)]
    cols += [f"iL_{i + 1}" for i in range(n_L)]
    cols += [f"iV_{i + 1}" for i in range(n_V)]
    return cols + FIXED_COLUMNS


def _device_step(dev: DeviceProblem, state, u_d, dt, tol, max_iter, k):
    """Boundary lift, self-consistent step, face currents, flux integrals."""
    vbar = dev.boundary_potential(u_d)
    bc_n, bc_p = transport.make_bcs(dev.mesh, vbar, dev.nbar_faces,
                                    dev.pbar_faces)
    new_state, V, info = transport.gummel_solve(
        dev.mesh, state, dev.op, dev.doping_cells, vbar, bc_n, bc_p,
        dt, tol=tol, max_iter=max_iter, k=k,
    )
    currents = transport.face_currents(dev.mesh, new_state, V, bc_n, bc_p, k)
    return vbar, new_state, V, currents, info


def _diag_row(dev: DeviceProblem, state, V, vbar, u_d, I_D, t,
              y=None, net_matrix=None, x=None, sizes=(0, 0, 0)):
    m, n_L, n_V = sizes
    energy = diagnostics.free_energy(
        dev.mesh, state, V, vbar, dev.energy_refs(u_d), dev.lambda2,
        y=y, network_matrix=net_matrix,
    )
    diss = diagnostics.dissipation(dev.mesh, state, V)
    area = dev.mesh.cell_area
    row = [t]
    if x is not None:
        row += list(x[:m]) + list(x[m:m + n_L]) + list(x[m + n_L:])
    row += [I_D[0], I_D[1],
            energy.total, energy.internal, energy.electric, energy.network,
            diss[0], diss[1], diss[2],
            float(state.n.sum() * area), float(state.p.sum() * area),
            float(state.D.sum() * area),
            float(state.n.min()), float(state.p.min()), float(state.D.min()),
            float(state.n.max()), float(state.p.max()), float(state.D.max())]
    return np.array(row)


def _snapshot(state: transport.CarrierState, area: float) -> dict:
    return {
        "masses": [float(state.n.sum() * area), float(state.p.sum() * area),
                   float(state.D.sum() * area)],
        "min": state.min(),
        "max": state.max(),
    }


def _boundary_flux_pair(mesh, currents) -> np.ndarray:
    """Net outward div-form flux of electrons and holes (mass balance)."""
    faces = mesh.dirichlet_faces()
    ln = mesh.face_len[faces]
    return np.array([
        float(np.sum(ln * currents.J_n[faces])),
        float(np.sum(ln * (-currents.J_p[faces]))),
    ])


def _steps(run: RunConfig) -> int:
    steps = int(round(run.t_end / run.dt))
    if abs(steps * run.dt - run.t_end) > 1e-9 * max(1.0, run.t_end):
        steps = int(np.ceil(run.t_end / run.dt - 1e-12))
    return max(steps, 1)


def run_transient(dev: DeviceProblem, run: RunConfig,
                  netlist: Netlist | None = None,
                  x0: np.ndarray | None = None) -> RunResult:
    """Full transient in coupled or drive mode."""
    tol = run.gummel_tol if run.gummel_tol is not None else dev.cfg.gummel_tol
    k = run.k_trunc if run.k_trunc is not None else dev.cfg.k_trunc
    max_iter = dev.cfg.gummel_max_iter
    steps = _steps(run)
    state = dev.initial_state()
    area = dev.mesh.cell_area
    initial_masses = np.array([
        state.n.sum() * area, state.p.sum() * area, state.D.sum() * area,
    ])
    dumps: dict[str, str] = {}

    if run.mode == "drive":
        drive = coupling.parse_drive(run.drive)
        history = History(columns=_columns(0, 0, 0), dt=run.dt,
                          initial_masses=initial_masses)
        V = None
        for step in range(1, steps + 1):
            t1 = step * run.dt
            u_d = drive.u_d(t1)
            try:
                vbar, state, V, currents, info = _device_step(
                    dev, state, u_d, run.dt, tol, max_iter, k)
                script_i = coupling.script_I(dev.ops, currents.total)
            except SimulatorError as exc:
                raise StepError(step, t1, _snapshot(state, area), exc) from exc
            I_D = coupling.terminal_currents(
                script_i, dev.ops.cap, drive.dudt(t1))
            history.rows.append(_diag_row(
                dev, state, V, vbar, u_d, I_D, t1))
            history.boundary_fluxes.append(
                _boundary_flux_pair(dev.mesh, currents))
            history.gummel_iterations.append(info.iterations)
            if run.fields_every and step % run.fields_every == 0:
                dumps[f"fields_{step:06d}.txt"] = format_fields(
                    dev.mesh, t1, state, V)
        summary = {"mode": "drive", "steps": steps, "t_end": steps * run.dt}
        logger.info("drive run: %d steps, mean self-consistency sweeps %.1f",
                    steps, float(np.mean(history.gummel_iterations)))
        return RunResult(history, state, V, dev.mesh, dumps, summary)

    if netlist is None:
        raise SimulatorError("coupled mode needs a netlist with a memristor")
    st = network.build_structure(netlist)
    report = network.check_index1(st)
    if not report.ok:
        raise TopologyError(
            "index-1 conditions fail: "
            + ("inductor/current-source cutset; " if not report.no_li_cutset else "")
            + ("capacitor/voltage-source loop" if not report.no_cv_loop else "")
        )
    E, A = network.assemble_EA(st, dev.ops.cap)
    P, Q, _ = network.build_projectors(st)
    sys = network.build_decoupled(E, A, P, Q, st)
    if x0 is None:
        x0 = np.zeros(sys.n)
    cons = network.check_consistency(
        x0, network.source_vector(st, 0.0), sys,
        repair=run.repair_consistency)
    if not run.repair_consistency and not cons.consistent:
        raise ConsistencyError(
            f"initial network state violates the algebraic constraint "
            f"(residual {cons.residual:.3e}); enable repair or fix x0"
        )
    x0 = cons.x0
    y = sys.P @ x0
    z = sys.Q @ x0
    net_matrix = diagnostics.network_energy_matrix(sys)
    lu_step = network.step_factorization(sys, run.dt)

    history = History(columns=_columns(st.m, st.n_L, st.n_V), dt=run.dt,
                      initial_masses=initial_masses)
    V = None
    for step in range(1, steps + 1):
        t1 = step * run.dt
        u_d = st.S.T @ sys.extract_u(y)
        try:
            vbar, state, V, currents, info = _device_step(
                dev, state, u_d, run.dt, tol, max_iter, k)
            script_i = coupling.script_I(dev.ops, currents.total)
            F = coupling.compute_F(script_i, st.S, sys.n)
            s_next = network.source_vector(st, t1)
            y = network.advance_y(y, F, s_next, run.dt, sys, lu_step)
        except SimulatorError as exc:
            raise StepError(step, t1, _snapshot(state, area), exc) from exc
        z = network.recover_z(y, s_next, sys)
        dudt_d = st.S.T @ sys.extract_u(network.rhs_y(y, F, s_next, sys))
        I_D = coupling.terminal_currents(script_i, dev.ops.cap, dudt_d)
        x = y + z
        history.rows.append(_diag_row(
            dev, state, V, vbar, u_d, I_D, t1,
            y=y, net_matrix=net_matrix, x=x,
            sizes=(st.m, st.n_L, st.n_V)))
        history.boundary_fluxes.append(
            _boundary_flux_pair(dev.mesh, currents))
        history.gummel_iterations.append(info.iterations)
        if run.fields_every and step % run.fields_every == 0:
            dumps[f"fields_{step:06d}.txt"] = format_fields(
                dev.mesh, t1, state, V)
    summary = {
        "mode": "coupled", "steps": steps, "t_end": steps * run.dt,
        "nodes": st.m, "cond_E1": sys.cond_E1,
    }
    logger.info("coupled run: %d steps on %d nodes, mean self-consistency "
                "sweeps %.1f", steps, st.m,
                float(np.mean(history.gummel_iterations)))
    return RunResult(history, state, V, dev.mesh, dumps, summary)


@dataclass
class SteadyResult:
    state: transport.CarrierState
    V: np.ndarray
    steps: int
    rate: float
    converged: bool


def steady(dev: DeviceProblem, bias, dt0: float = 0.1, tol: float = 1e-10,
           max_steps: int = 200, grow: float = 2.0,
           dt_max: float = 1e6) -> SteadyResult:
    """Pseudo-transient continuation to a stationary state at fixed bias.

    Repeated implicit steps until the per-time state change drops below
    ``tol``. The step size grows when the self-consistency loop converges
    quickly and shrinks when it fails (its contraction degrades roughly
    like ``dt * total_density / lambda2``). The no-flux species keeps its
    mass, so the stationary vacancy profile depends on the initial mass.
    """
    from .errors import GummelMaxIterError

    tol_g = dev.cfg.gummel_tol
    state = dev.initial_state()
    u_d = np.asarray(bias, dtype=float)
    dt = dt0
    dt_min = dt0 * 1e-8
    V = None
    rate = np.inf
    for step in range(1, max_steps + 1):
        try:
            _, new_state, V, _, info = _device_step(
                dev, state, u_d, dt, tol_g, dev.cfg.gummel_max_iter,
                dev.cfg.k_trunc)
        except GummelMaxIterError:
            dt = dt / 4.0
            if dt < dt_min:
                return SteadyResult(state, V, step, rate, False)
            continue
        change = max(
            np.abs(new_state.n - state.n).max(),
            np.abs(new_state.p - state.p).max(),
            np.abs(new_state.D - state.D).max(),
        )
        rate = change / dt
        state = new_state
        if rate <= tol:
            return SteadyResult(state, V, step, rate, True)
        if info.iterations <= max(8, dev.cfg.gummel_max_iter // 4):
            dt = min(dt * grow, dt_max)
    return SteadyResult(state, V, max_steps, rate, False)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def format_timeseries(history: History) -> str:
    """CSV text with 17 significant digits per value."""
    lines = [",".join(history.columns)]
    for row in history.rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def format_fields(mesh: grid.Mesh, t: float,
                  state: transport.CarrierState, V) -> str:
    """Plain-text field dump: header ``nx ny hx hy t``, then one block per
    field (name line followed by ny rows of nx values, row-major)."""
    lines = [f"{mesh.nx} {mesh.ny} {_fmt(mesh.hx)} {_fmt(mesh.hy)} {_fmt(t)}"]
    for name, values in (("n", state.n), ("p", state.p),
                         ("D", state.D), ("V", V)):
        lines.append(name)
        grid_vals = np.asarray(values).reshape(mesh.ny, mesh.nx)
        for j in range(mesh.ny):
            lines.append(" ".join(_fmt(v) for v in grid_vals[j]))
    return "\n".join(lines) + "\n"


def write_outputs(result: RunResult, out_dir) -> list[str]:
    """Write the time series and any field dumps; returns written paths."""
    from pathlib import Path

    if not result.history.rows:
        raise SimulatorError("empty history: nothing to write")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    csv_path = out / "timeseries.csv"
    csv_path.write_text(format_timeseries(result.history))
    written.append(str(csv_path))
    for name, text in sorted(result.field_dumps.items()):
        path = out / name
        path.write_text(text)
        written.append(str(path))
    return written
