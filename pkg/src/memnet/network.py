"""Modified nodal analysis: incidence structure, projectors, decoupled stepping.

The circuit unknown is ``x = (u, i_L, i_V)`` (node potentials, inductor
currents, voltage-source currents) governed by ``E dx/dt = A x + F + s(t)``.
With the kernel projector ``Q = diag(Q_CS, 0, I)`` (``Q_CS`` orthogonal onto
the common kernel of the capacitor and terminal-selection incidence) and
``P = I - Q``, the system splits into a differential part ``y = P x`` and an
algebraic part ``z = Q x`` recovered from ``y``; ``E1 = E - A Q`` is
invertible exactly when the network has no inductor/current-source cutsets
and no capacitor/voltage-source loops. Matrices are dense: desk-scale
circuits have a handful of nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import SingularSystemError, SolverError
from .netlist import Netlist, Waveform

_RANK_RTOL = 1e-10


@dataclass(frozen=True)
class MnaStructure:
    """Reduced incidence matrices and element values of one netlist.

    Incidence columns carry +1 at the first listed node and -1 at the
    second; the ground row is dropped. ``R`` stores conductances. ``S`` maps
    the two memristor terminals into the node set, one unit entry per
    column.
    """

    m: int
    A_C: np.ndarray
    A_R: np.ndarray
    A_L: np.ndarray
    A_V: np.ndarray
    A_I: np.ndarray
    S: np.ndarray
    C: np.ndarray
    L: np.ndarray
    R: np.ndarray
    v_waveforms: tuple[Waveform, ...]
    i_waveforms: tuple[Waveform, ...]

    @property
    def n_C(self) -> int:
        return self.A_C.shape[1]

    @property
    def n_R(self) -> int:
        return self.A_R.shape[1]

    @property
    def n_L(self) -> int:
        return self.A_L.shape[1]

    @property
    def n_V(self) -> int:
        return self.A_V.shape[1]

    @property
    def n_I(self) -> int:
        return self.A_I.shape[1]

    @property
    def n(self) -> int:
        """State dimension m + n_L + n_V."""
        return self.m + self.n_L + self.n_V


def _incidence(m: int, elements) -> np.ndarray:
    cols = np.zeros((m, len(elements)))
    for idx, el in enumerate(elements):
        a, b = el.nodes
        if a > 0:
            cols[a - 1, idx] = 1.0
        if b > 0:
            cols[b - 1, idx] = -1.0
    return cols


def build_structure(netlist: Netlist) -> MnaStructure:
    """Assemble the reduced incidence matrices from a parsed netlist."""
    mem = netlist.memristor
    if mem is None:
        raise SolverError("netlist has no memristor element")
    m = netlist.node_count
    caps = netlist.of_kind("C")
    res = netlist.of_kind("R")
    inds = netlist.of_kind("L")
    vsrc = netlist.of_kind("V")
    isrc = netlist.of_kind("I")
    S = np.zeros((m, 2))
    S[mem.nodes[0] - 1, 0] = 1.0
    S[mem.nodes[1] - 1, 1] = 1.0
    return MnaStructure(
        m=m,
        A_C=_incidence(m, caps),
        A_R=_incidence(m, res),
        A_L=_incidence(m, inds),
        A_V=_incidence(m, vsrc),
        A_I=_incidence(m, isrc),
        S=S,
        C=np.array([el.value for el in caps]),
        L=np.array([el.value for el in inds]),
        R=np.array([1.0 / el.value for el in res]),
        v_waveforms=tuple(el.waveform for el in vsrc),
        i_waveforms=tuple(el.waveform for el in isrc),
    )


@dataclass(frozen=True)
class IndexReport:
    """Result of the two index-1 topology rank tests.

    A failed test carries a witness vector spanning the offending kernel:
    a node-potential direction unseen by terminals/capacitors/resistors/
    voltage sources (an inductor/current-source cutset), or a voltage-source
    combination invisible after projecting out capacitor/terminal couplings
    (a capacitor/voltage-source loop).
    """

    no_li_cutset: bool
    no_cv_loop: bool
    cutset_witness: np.ndarray | None = None
    loop_witness: np.ndarray | None = None

    @property
    def ok(self) -> bool:
        return self.no_li_cutset and self.no_cv_loop


def kernel_projector(structure: MnaStructure) -> np.ndarray:
    """Orthogonal projector onto the common kernel of (A_C, S) transposed."""
    stacked = np.hstack([structure.A_C, structure.S]).T
    basis = sla.null_space(stacked, rcond=_RANK_RTOL)
    if basis.size == 0:
        return np.zeros((structure.m, structure.m))
    return basis @ basis.T


def check_index1(structure: MnaStructure) -> IndexReport:
    """Rank tests for the two index-1 topology conditions.

    Singular values below ``1e-10 * sigma_max`` count as zero.
    """
    stacked = np.hstack([
        structure.S, structure.A_C, structure.A_R, structure.A_V,
    ])
    u, sv, _ = np.linalg.svd(stacked)
    smax = sv[0] if sv.size else 0.0
    rank = int(np.sum(sv > _RANK_RTOL * smax)) if smax > 0 else 0
    no_cutset = rank == structure.m
    cutset_witness = None if no_cutset else u[:, -1]

    q_cs = kernel_projector(structure)
    no_loop = True
    loop_witness = None
    if structure.n_V:
        b = q_cs.T @ structure.A_V
        _, sv, vt = np.linalg.svd(b)
        smax = sv[0] if sv.size else 0.0
        rank = int(np.sum(sv > _RANK_RTOL * smax)) if smax > 0 else 0
        no_loop = rank == structure.n_V
        if not no_loop:
            loop_witness = vt[-1, :]
    return IndexReport(
        no_li_cutset=no_cutset,
        no_cv_loop=no_loop,
        cutset_witness=cutset_witness,
        loop_witness=loop_witness,
    )


def assemble_EA(structure: MnaStructure, cap: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Block matrices of ``E dx/dt = A x + ...``.

    ``cap`` is the 2x2 terminal displacement matrix from the device; it must
    be symmetric positive semidefinite.
    """
    cap = np.asarray(cap, dtype=float)
    if cap.shape != (2, 2):
        raise ValueError("terminal matrix must be 2x2")
    if not np.allclose(cap, cap.T, atol=1e-12):
        raise ValueError("terminal matrix must be symmetric")
    if np.linalg.eigvalsh(cap).min() < -1e-12:
        raise ValueError("terminal matrix must be positive semidefinite")
    m, n_L, n_V = structure.m, structure.n_L, structure.n_V
    n = structure.n
    E = np.zeros((n, n))
    E[:m, :m] = (
        structure.A_C @ np.diag(structure.C) @ structure.A_C.T
        + structure.S @ cap @ structure.S.T
    )
    E[m:m + n_L, m:m + n_L] = np.diag(structure.L)
    A = np.zeros((n, n))
    A[:m, :m] = -structure.A_R @ np.diag(structure.R) @ structure.A_R.T
    A[:m, m:m + n_L] = -structure.A_L
    A[:m, m + n_L:] = -structure.A_V
    A[m:m + n_L, :m] = structure.A_L.T
    A[m + n_L:, :m] = structure.A_V.T
    return E, A


def build_projectors(structure: MnaStructure) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Differential/algebraic projector pair ``(P, Q)`` plus ``Q_CS``."""
    m, n_L, n_V = structure.m, structure.n_L, structure.n_V
    n = structure.n
    q_cs = kernel_projector(structure)
    Q = np.zeros((n, n))
    Q[:m, :m] = q_cs
    Q[m + n_L:, m + n_L:] = np.eye(n_V)
    P = np.eye(n) - Q
    return P, Q, q_cs


@dataclass(frozen=True)
class DecoupledSystem:
    """Factorized decoupling of the network DAE."""

    structure: MnaStructure
    E: np.ndarray
    A: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    Q_CS: np.ndarray
    E1: np.ndarray
    A1: np.ndarray
    lu_E1: tuple
    cond_E1: float

    @property
    def n(self) -> int:
        return self.E.shape[0]

    def solve_E1(self, rhs: np.ndarray) -> np.ndarray:
        return sla.lu_solve(self.lu_E1, rhs)

    def extract_u(self, x: np.ndarray) -> np.ndarray:
        return x[: self.structure.m]

    def terminal_bias(self, x: np.ndarray) -> np.ndarray:
        """u_D = S^T (node-potential block)."""
        return self.structure.S.T @ self.extract_u(x)


def build_decoupled(E, A, P, Q, structure: MnaStructure) -> DecoupledSystem:
    """Factorize ``E1 = E - A Q``; raise when the index-1 split fails.

    The error names the violated topology condition. With the rank-one
    terminal matrix a circuit can pass both rank tests yet leave the
    terminal common mode unsupported (no capacitor or source path fixes the
    sum of the two terminal potentials); that case is reported separately.
    """
    E1 = E - A @ Q
    sv = np.linalg.svd(E1, compute_uv=False)
    if sv.size == 0 or sv[-1] <= _RANK_RTOL * sv[0]:
        report = check_index1(structure)
        reasons = []
        if not report.no_li_cutset:
            reasons.append(
                "inductor/current-source cutset "
                f"(witness {np.array2string(report.cutset_witness, precision=3)})"
            )
        if not report.no_cv_loop:
            reasons.append(
                "capacitor/voltage-source loop "
                f"(witness {np.array2string(report.loop_witness, precision=3)})"
            )
        if not reasons:
            reasons.append(
                "terminal common mode unsupported: the rank-one terminal "
                "matrix needs a capacitor or source anchoring each terminal"
            )
        raise SingularSystemError(
            "cannot decouple the network: " + "; ".join(reasons)
        )
    return DecoupledSystem(
        structure=structure,
        E=E, A=A, P=P, Q=Q,
        Q_CS=Q[: structure.m, : structure.m],
        E1=E1,
        A1=A @ P,
        lu_E1=sla.lu_factor(E1),
        cond_E1=float(sv[0] / sv[-1]),
    )


def build_network(netlist: Netlist, cap: np.ndarray) -> DecoupledSystem:
    """Structure, projectors, and decoupling in one call."""
    structure = build_structure(netlist)
    E, A = assemble_EA(structure, cap)
    P, Q, _ = build_projectors(structure)
    return build_decoupled(E, A, P, Q, structure)


def source_vector(structure: MnaStructure, t: float) -> np.ndarray:
    """Stack current-source injections and voltage-source values at t."""
    s = np.zeros(structure.n)
    if structure.n_I:
        i_vals = np.array([w(t) for w in structure.i_waveforms])
        s[: structure.m] = structure.A_I @ i_vals
    if structure.n_V:
        s[structure.m + structure.n_L:] = [
            w(t) for w in structure.v_waveforms
        ]
    return s


@dataclass(frozen=True)
class ConsistencyResult:
    consistent: bool
    residual: float
    x0: np.ndarray


def check_consistency(x0, s0, sys: DecoupledSystem, tol: float = 1e-10,
                      repair: bool = False) -> ConsistencyResult:
    """Verify (or repair) the algebraic constraint on the initial state.

    The algebraic block must satisfy ``Q x0 = Q E1^-1 (A1 P x0 + s0)``;
    repair replaces it by the right-hand side, which always succeeds.
    """
    x0 = np.asarray(x0, dtype=float)
    s0 = np.asarray(s0, dtype=float)
    y0 = sys.P @ x0
    z_target = sys.Q @ sys.solve_E1(sys.A1 @ y0 + s0)
    residual = float(np.abs(sys.Q @ x0 - z_target).max())
    if repair:
        return ConsistencyResult(True, residual, y0 + z_target)
    return ConsistencyResult(residual <= tol, residual, x0)


def step_factorization(sys: DecoupledSystem, dt: float):
    """LU of the semi-implicit stepping matrix ``I - dt P E1^-1 A1``."""
    mat = np.eye(sys.n) - dt * (sys.P @ sys.solve_E1(sys.A1))
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv[-1] <= _RANK_RTOL * sv[0]:
        raise SolverError(f"singular stepping matrix at dt={dt}")
    return sla.lu_factor(mat)


def advance_y(y, F, s_next, dt, sys: DecoupledSystem, lu_step=None) -> np.ndarray:
    """Semi-implicit Euler step of the differential component.

    The linear part is implicit, the device forcing explicit; the result is
    projected back onto the differential subspace (exact range
    restoration).
    """
    y = np.asarray(y, dtype=float)
    if lu_step is None:
        lu_step = step_factorization(sys, dt)
    rhs = y + dt * (sys.P @ sys.solve_E1(np.asarray(F) + np.asarray(s_next)))
    y_next = sla.lu_solve(lu_step, rhs)
    return sys.P @ y_next


def recover_z(y, s, sys: DecoupledSystem) -> np.ndarray:
    """Algebraic component from the differential one."""
    y = np.asarray(y, dtype=float)
    return sys.Q @ sys.solve_E1(sys.A1 @ y + np.asarray(s))


def rhs_y(y, F, s, sys: DecoupledSystem) -> np.ndarray:
    """Right-hand side ``P E1^-1 (A1 y + F + s)`` of the differential part."""
    return sys.P @ sys.solve_E1(sys.A1 @ np.asarray(y) + np.asarray(F) + np.asarray(s))


@dataclass(frozen=True)
class NetworkState:
    """Differential/algebraic split of the circuit state.

    ``y`` lies in the differential range, ``z`` in the algebraic one; the
    accessors expose the node potentials and branch currents of the full
    state ``x = y + z``. The terminal bias reads the differential part
    only, which equals the full-state value because the selection never
    sees the algebraic block.
    """

    y: np.ndarray
    z: np.ndarray
    m: int
    n_L: int
    S: np.ndarray

    @classmethod
    def from_system(cls, sys: "DecoupledSystem", y, z) -> "NetworkState":
        st = sys.structure
        return cls(y=np.asarray(y, dtype=float), z=np.asarray(z, dtype=float),
                   m=st.m, n_L=st.n_L, S=st.S)

    @property
    def x(self) -> np.ndarray:
        return self.y + self.z

    @property
    def u(self) -> np.ndarray:
        return self.x[: self.m]

    @property
    def i_L(self) -> np.ndarray:
        return self.x[self.m: self.m + self.n_L]

    @property
    def i_V(self) -> np.ndarray:
        return self.x[self.m + self.n_L:]

    @property
    def u_D(self) -> np.ndarray:
        return self.S.T @ self.y[: self.m]
