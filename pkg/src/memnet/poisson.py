"""Mixed Dirichlet-Neumann elliptic solves on the finite-volume mesh.

One assembled operator covers every elliptic problem in the model: the
self-consistent potential, the stationary potential, the harmonic terminal
weights, and the volume-source solution operator used by the terminal
current integrals. All of them share the five-point stencil with
boundary-face Dirichlet values, so superposition holds discretely to
solver tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import grid
from .errors import SingularOperatorError, SolverError


class EllipticOperator:
    """Factorized discrete ``lambda2 * Laplacian`` with mixed boundaries.

    The assembled matrix is the symmetric positive-definite integrated form
    of ``-lambda2 * Laplacian``: Dirichlet faces (tags in ``dirichlet_tags``)
    contribute half-cell diagonal terms, all other boundary faces are
    homogeneous Neumann. ``solve`` then returns the field ``u`` with
    ``lambda2 * Lap(u) = rhs`` and ``u = boundary_values`` on the Dirichlet
    faces. The operator is immutable after assembly; concurrent solves
    against the shared factorization are safe.
    """

    def __init__(self, mesh: grid.Mesh, lambda2: float, dirichlet_tags,
                 tol: float = 1e-12):
        if lambda2 <= 0:
            raise ValueError("lambda2 must be positive")
        tags = frozenset(
            grid.TAG_CODES[t] if isinstance(t, str) else int(t)
            for t in dirichlet_tags
        )
        if not tags:
            raise SingularOperatorError(
                "no Dirichlet tags: pure-Neumann operator is singular"
            )
        if not tags <= {grid.D1, grid.D2}:
            raise ValueError("dirichlet_tags must be a subset of {D1, D2}")
        self.mesh = mesh
        self.lambda2 = float(lambda2)
        self.dirichlet_tags = tags
        self.tol = tol

        interior = mesh.interior_faces
        own = mesh.face_owner[interior]
        nbr = mesh.face_neighbor[interior]
        coeff = lambda2 * mesh.face_len[interior] / mesh.face_dist[interior]
        self._dir_faces = mesh.dirichlet_faces(sorted(tags))
        self._dir_owner = mesh.face_owner[self._dir_faces]
        self._dir_coeff = (
            lambda2 * mesh.face_len[self._dir_faces]
            / mesh.face_dist[self._dir_faces]
        )

        rows = np.concatenate([own, nbr, own, nbr, self._dir_owner])
        cols = np.concatenate([own, nbr, nbr, own, self._dir_owner])
        data = np.concatenate([coeff, coeff, -coeff, -coeff, self._dir_coeff])
        n = mesh.n_cells
        self.matrix = sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsc()
        self._lu = spla.splu(self.matrix)

    def solve(self, rhs, boundary_values=None) -> np.ndarray:
        """Solve ``lambda2 * Lap(u) = rhs`` with the operator's boundaries.

        ``rhs`` is a cell field (the right-hand side of the PDE, not the
        negated form). ``boundary_values`` is a scalar or full-length face
        array read at the operator's Dirichlet faces; omitted means zero.
        """
        rhs = np.asarray(rhs, dtype=float)
        mesh = self.mesh
        b = -rhs * mesh.cell_area
        if boundary_values is not None:
            bvals = np.broadcast_to(
                np.asarray(boundary_values, dtype=float), (mesh.n_faces,)
            )
            np.add.at(b, self._dir_owner, self._dir_coeff * bvals[self._dir_faces])
        u = self._lu.solve(b)
        residual = float(np.abs(self.matrix @ u - b).max())
        scale = max(1.0, float(np.abs(b).max()))
        if not np.isfinite(residual) or residual > self.tol * scale:
            raise SolverError(
                f"elliptic solve residual {residual:.3e} exceeds "
                f"{self.tol:.1e} * {scale:.3e}",
                residual=residual,
            )
        return u

    def face_gradient(self, u, boundary_values=None) -> np.ndarray:
        """Face gradients of ``u`` honoring the operator's boundary split."""
        mesh = self.mesh
        if boundary_values is None:
            bvals = np.zeros(mesh.n_faces)
        else:
            bvals = np.broadcast_to(
                np.asarray(boundary_values, dtype=float), (mesh.n_faces,)
            )
        return grid.face_gradient(mesh, u, bvals, sorted(self.dirichlet_tags))


def assemble_operator(mesh: grid.Mesh, lambda2: float,
                      dirichlet_tags=("D1", "D2")) -> EllipticOperator:
    """Assemble and factorize the mixed-boundary elliptic operator."""
    return EllipticOperator(mesh, lambda2, dirichlet_tags)


def solve_poisson(op: EllipticOperator, n, p, D, doping, vbar) -> np.ndarray:
    """Self-consistent potential: ``lambda2 * Lap(V) = n - p - D + doping``."""
    rhs = np.asarray(n) - np.asarray(p) - np.asarray(D) + np.asarray(doping)
    return op.solve(rhs, vbar)


def solve_stationary(op: EllipticOperator, doping, vbi) -> np.ndarray:
    """Stationary potential: ``lambda2 * Lap(V) = doping``, built-in trace."""
    return op.solve(np.asarray(doping, dtype=float), vbi)


def solve_harmonic_weight(mesh: grid.Mesh, j: int) -> np.ndarray:
    """Harmonic terminal weight: 1 on terminal ``j``, 0 on the other.

    Discrete maximum principle of the M-matrix stencil keeps the result in
    [0, 1]; the two weights sum to one cellwise.
    """
    if j not in (1, 2):
        raise ValueError("terminal index must be 1 or 2")
    op = EllipticOperator(mesh, 1.0, (grid.D1, grid.D2))
    bvals = grid.boundary_value_array(
        mesh, 1.0 if j == 1 else 0.0, 1.0 if j == 2 else 0.0
    )
    return op.solve(np.zeros(mesh.n_cells), bvals)


def green_apply(op: EllipticOperator, g) -> tuple[np.ndarray, np.ndarray]:
    """Volume-source solve ``lambda2 * Lap(f) = g`` with zero Dirichlet data.

    Returns the cell field and its face gradients (zero boundary values on
    the Dirichlet faces, zero on Neumann faces).
    """
    f = op.solve(g, None)
    return f, op.face_gradient(f, None)


@dataclass(frozen=True)
class PotentialDecomposition:
    """Stationary potential, harmonic weights, and the terminal matrix.

    ``cap`` is the 2x2 displacement coupling matrix
    ``lambda2 * integral(grad(w_j) . grad(w_k))``: symmetric positive
    semidefinite, rank one, zero row sums.
    """

    v_stationary: np.ndarray
    vbi_trace: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    grad_w1: np.ndarray
    grad_w2: np.ndarray
    cap: np.ndarray


def superpose_potential(decomp: PotentialDecomposition, u_d,
                        correction) -> np.ndarray:
    """Potential as stationary part + terminal lifts + volume correction."""
    u_d = np.asarray(u_d, dtype=float)
    correction = np.asarray(correction, dtype=float)
    if u_d.shape != (2,):
        raise ValueError("u_d must be a 2-vector")
    if correction.shape != decomp.v_stationary.shape:
        raise ValueError("correction field size mismatch")
    return (
        decomp.v_stationary + decomp.w1 * u_d[0] + decomp.w2 * u_d[1]
        + correction
    )
