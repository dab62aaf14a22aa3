"""Device-circuit coupling in both directions.

Device to circuit: the terminal currents are a displacement part (2x2
terminal matrix times the bias rate) plus weighted volume integrals of the
total particle current, corrected by a volume-source solve so that only
square-integrable currents are needed. Circuit to device: the terminal
boundary potential is the built-in potential lifted by the node potentials
at the terminals. An open-loop drive mode prescribes the bias directly for
device characterization sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import grid, poisson
from .errors import ConfigError
from .netlist import Waveform


@dataclass(frozen=True)
class BuiltInPotential:
    """Equilibrium potential ``arcsinh(doping / (2 n_i))`` and its trace."""

    cells: np.ndarray
    trace: np.ndarray
    n_i: float


def builtin_potential(mesh: grid.Mesh, doping_cells, doping_faces,
                      n_i: float) -> BuiltInPotential:
    """Built-in potential on cells and on boundary-face midpoints."""
    if n_i <= 0:
        raise ValueError("intrinsic density must be positive")
    cells = np.arcsinh(np.asarray(doping_cells, dtype=float) / (2.0 * n_i))
    trace = np.arcsinh(np.asarray(doping_faces, dtype=float) / (2.0 * n_i))
    return BuiltInPotential(cells=cells, trace=trace, n_i=n_i)


def compute_M(mesh: grid.Mesh, grad_w1, grad_w2, lambda2: float) -> np.ndarray:
    """Terminal displacement matrix by face-gradient quadrature, symmetrized.

    Closed form: ``lambda2 * ||grad w1||^2 * [[1, -1], [-1, 1]]`` (the two
    weights sum to one, so the rows sum to zero and the matrix has rank
    one).
    """
    grads = (grad_w1, grad_w2)
    M = np.empty((2, 2))
    for j in range(2):
        for kk in range(2):
            M[j, kk] = lambda2 * grid.face_inner(mesh, grads[j], grads[kk])
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class CouplingOperators:
    """Everything the coupled step needs on the device side.

    Holds the harmonic weight gradients, the terminal matrix, the shared
    elliptic operator (used both for the potential and the volume-source
    correction), and the built-in potential.
    """

    mesh: grid.Mesh
    lambda2: float
    op: poisson.EllipticOperator
    decomp: poisson.PotentialDecomposition
    vbi: BuiltInPotential

    @property
    def cap(self) -> np.ndarray:
        return self.decomp.cap


def build_coupling(mesh: grid.Mesh, lambda2: float, doping_cells,
                   vbi: BuiltInPotential,
                   op: poisson.EllipticOperator | None = None) -> CouplingOperators:
    """Assemble stationary potential, harmonic weights, and terminal matrix."""
    if op is None:
        op = poisson.assemble_operator(mesh, lambda2)
    v_stat = poisson.solve_stationary(op, doping_cells, vbi.trace)
    w1 = poisson.solve_harmonic_weight(mesh, 1)
    w2 = poisson.solve_harmonic_weight(mesh, 2)
    g1 = grid.face_gradient(mesh, w1, grid.boundary_value_array(mesh, 1.0, 0.0))
    g2 = grid.face_gradient(mesh, w2, grid.boundary_value_array(mesh, 0.0, 1.0))
    decomp = poisson.PotentialDecomposition(
        v_stationary=v_stat,
        vbi_trace=vbi.trace,
        w1=w1, w2=w2, grad_w1=g1, grad_w2=g2,
        cap=compute_M(mesh, g1, g2, lambda2),
    )
    return CouplingOperators(
        mesh=mesh, lambda2=lambda2, op=op, decomp=decomp, vbi=vbi,
    )


def script_I(ops: CouplingOperators, J_total) -> np.ndarray:
    """Weighted volume integrals of the corrected total current.

    Computes the cellwise divergence of the face current, applies the
    zero-data volume-source solve, and integrates
    ``-grad(w_j) . (J - lambda2 * grad(correction))`` per terminal. The two
    entries sum to zero to roundoff because the weight gradients cancel
    facewise.
    """
    mesh = ops.mesh
    div_j = grid.divergence(mesh, J_total)
    _, grad_f = poisson.green_apply(ops.op, div_j)
    corrected = np.asarray(J_total) - ops.lambda2 * grad_f
    return np.array([
        -grid.face_inner(mesh, ops.decomp.grad_w1, corrected),
        -grid.face_inner(mesh, ops.decomp.grad_w2, corrected),
    ])


def terminal_currents(script_i, cap, dudt_d) -> np.ndarray:
    """Total terminal currents: displacement plus particle integrals.

    ``dudt_d`` must come from the network right-hand side (or the analytic
    drive derivative), not from finite differences of the bias samples.
    """
    return np.asarray(cap) @ np.asarray(dudt_d) + np.asarray(script_i)


def compute_F(script_i, S, n: int) -> np.ndarray:
    """Device forcing for the network: ``-S @ integrals`` in the node block."""
    m = S.shape[0]
    out = np.zeros(n)
    out[:m] = -S @ np.asarray(script_i)
    return out


def boundary_potential(vbi: BuiltInPotential, u_d, mesh: grid.Mesh) -> np.ndarray:
    """Terminal boundary potential: built-in trace lifted per terminal."""
    u_d = np.asarray(u_d, dtype=float)
    vbar = vbi.trace.copy()
    vbar[mesh.faces_with_tag(grid.D1)] += u_d[0]
    vbar[mesh.faces_with_tag(grid.D2)] += u_d[1]
    return vbar


def lifted_bias_field(decomp: poisson.PotentialDecomposition, u_d) -> np.ndarray:
    """Harmonic volumetric extension ``w1 u1 + w2 u2`` of the applied bias."""
    u_d = np.asarray(u_d, dtype=float)
    return decomp.w1 * u_d[0] + decomp.w2 * u_d[1]


@dataclass(frozen=True)
class DriveMode:
    """Open-loop bias prescription; terminal 2 is the ground reference
    unless a second waveform is given."""

    wave1: Waveform
    wave2: Waveform | None = None

    def u_d(self, t: float) -> np.ndarray:
        u2 = self.wave2(t) if self.wave2 is not None else 0.0
        return np.array([self.wave1(t), u2])

    def dudt(self, t: float) -> np.ndarray:
        d2 = self.wave2.derivative(t) if self.wave2 is not None else 0.0
        return np.array([self.wave1.derivative(t), d2])


def parse_drive(spec: str) -> DriveMode:
    """Parse a drive string like ``SIN:amp,freq[,phase]`` or ``DC:v``.

    A second component separated by ``;`` drives terminal 2 (default
    grounded).
    """

    def one(token: str):
        kind, _, args = token.partition(":")
        kind = kind.strip().upper()
        try:
            vals = [float(v) for v in args.split(",") if v.strip()] \
                if args else []
        except ValueError as exc:
            raise ConfigError(f"bad drive number in {token!r}: {exc}") from exc
        if kind == "DC":
            if len(vals) != 1:
                raise ConfigError(f"DC drive takes one value: {token!r}")
            return Waveform(kind="DC", value=vals[0])
        if kind == "SIN":
            if len(vals) not in (2, 3):
                raise ConfigError(
                    f"SIN drive takes amp,freq[,phase]: {token!r}"
                )
            phase = vals[2] if len(vals) == 3 else 0.0
            return Waveform(kind="SIN", amplitude=vals[0],
                            frequency=vals[1], phase=phase)
        raise ConfigError(f"unknown drive kind {kind!r}")

    parts = [p for p in spec.split(";") if p.strip()]
    if not parts or len(parts) > 2:
        raise ConfigError(f"bad drive spec {spec!r}")
    wave1 = one(parts[0])
    wave2 = one(parts[1]) if len(parts) == 2 else None
    return DriveMode(wave1=wave1, wave2=wave2)
