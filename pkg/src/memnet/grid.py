"""Rectangular cell-centered finite-volume mesh with tagged boundary faces.

The device occupies an axis-aligned rectangle. Cells are uniform; unknowns
live at cell centers, boundary data lives at boundary-face midpoints. Each
boundary face carries exactly one tag: terminal 1 (D1), terminal 2 (D2), or
insulating (N). Face-based discrete gradient/divergence pairs defined here
are exact negative adjoints, which the coupling identities rely on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import MeshError

# face tag codes
INTERIOR = 0
D1 = 1
D2 = 2
NEUMANN = 3

TAG_CODES = {"D1": D1, "D2": D2, "N": NEUMANN}
TAG_NAMES = {v: k for k, v in TAG_CODES.items()}
EDGES = ("left", "right", "bottom", "top")

DEFAULT_LAYOUT = {"left": "D1", "right": "D2", "bottom": "N", "top": "N"}

Segment = tuple[float, float, str]
LayoutValue = Union[str, Sequence[Segment]]

_SEG_TOL = 1e-12


def _normalize_edge(edge: str, value: LayoutValue) -> tuple[Segment, ...]:
    """Normalize an edge entry to an ordered partition of [0, 1]."""
    if isinstance(value, str):
        segments = [(0.0, 1.0, value)]
    else:
        segments = sorted((float(a), float(b), lab) for a, b, lab in value)
    if not segments:
        raise MeshError(f"edge '{edge}': empty layout")
    cursor = 0.0
    for a, b, lab in segments:
        if lab not in TAG_CODES:
            raise MeshError(f"edge '{edge}': unknown boundary label {lab!r}")
        if b - a <= _SEG_TOL:
            raise MeshError(
                f"edge '{edge}': zero-measure segment [{a}, {b}] labeled {lab}"
            )
        if abs(a - cursor) > _SEG_TOL:
            raise MeshError(f"edge '{edge}': segments do not partition [0, 1]")
        cursor = b
    if abs(cursor - 1.0) > _SEG_TOL:
        raise MeshError(f"edge '{edge}': segments do not cover [0, 1]")
    return tuple(segments)


@dataclass(frozen=True)
class DomainSpec:
    """Rectangle extents plus the terminal/insulation layout of the boundary.

    ``boundary_layout`` maps each edge to a single label or to fractional
    sub-segments ``(start, end, label)`` with the fraction measured from the
    bottom (left/right edges) or from the left (bottom/top edges). Both
    terminals must be present with positive total length; every boundary
    point carries exactly one label.
    """

    length_x: float = 1.0
    length_y: float = 1.0
    boundary_layout: Mapping[str, LayoutValue] = None

    def __post_init__(self):
        if self.length_x <= 0 or self.length_y <= 0:
            raise MeshError("domain extents must be positive")
        layout = dict(DEFAULT_LAYOUT)
        if self.boundary_layout is not None:
            unknown = set(self.boundary_layout) - set(EDGES)
            if unknown:
                raise MeshError(f"unknown edges in layout: {sorted(unknown)}")
            layout.update(self.boundary_layout)
        normalized = {e: _normalize_edge(e, layout[e]) for e in EDGES}
        object.__setattr__(self, "boundary_layout", normalized)
        for terminal in ("D1", "D2"):
            if self.label_length(terminal) <= 0.0:
                raise MeshError(
                    f"terminal {terminal} is empty; both terminals need "
                    "positive boundary length"
                )

    def edge_length(self, edge: str) -> float:
        return self.length_y if edge in ("left", "right") else self.length_x

    def label_length(self, label: str) -> float:
        total = 0.0
        for edge in EDGES:
            for a, b, lab in self.boundary_layout[edge]:
                if lab == label:
                    total += (b - a) * self.edge_length(edge)
        return total

    def label_at(self, edge: str, fraction: float) -> str:
        segments = self.boundary_layout[edge]
        for a, b, lab in segments:
            if a - _SEG_TOL <= fraction < b:
                return lab
        return segments[-1][2]


@dataclass(frozen=True)
class Mesh:
    """Uniform cell-centered grid.

    Cells are indexed ``j * nx + i``. Faces are stored in a fixed order
    (vertical interior, horizontal interior, then boundary: left, right,
    bottom, top), so construction is fully deterministic. Interior faces are
    oriented owner -> neighbor along +x/+y; boundary faces are oriented
    outward. ``face_dist`` is the center-to-center distance for interior
    faces and the half-cell center-to-face distance for boundary faces;
    ``face_weight = face_len * face_dist`` is the quadrature weight that
    makes face-gradient inner products adjoint to the cell divergence.
    Instances are immutable after construction and safe to share across
    threads.
    """

    nx: int
    ny: int
    hx: float
    hy: float
    length_x: float
    length_y: float
    xc: np.ndarray
    yc: np.ndarray
    cell_area: float
    face_owner: np.ndarray
    face_neighbor: np.ndarray
    face_len: np.ndarray
    face_dist: np.ndarray
    face_weight: np.ndarray
    face_axis: np.ndarray
    face_tag: np.ndarray
    face_mid_x: np.ndarray
    face_mid_y: np.ndarray
    _tag_idx: dict

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def n_faces(self) -> int:
        return self.face_owner.size

    @property
    def interior_faces(self) -> np.ndarray:
        return self._tag_idx[INTERIOR]

    def faces_with_tag(self, tag: int) -> np.ndarray:
        return self._tag_idx[tag]

    @property
    def boundary_faces(self) -> np.ndarray:
        return self._tag_idx["boundary"]

    def dirichlet_faces(self, tags: Sequence[int] = (D1, D2)) -> np.ndarray:
        if tuple(tags) == (D1, D2):
            return self._tag_idx["dirichlet"]
        return np.flatnonzero(np.isin(self.face_tag, tags))


def build_mesh(spec: DomainSpec, nx: int, ny: int) -> Mesh:
    """Build the uniform mesh and tag boundary faces from the layout."""
    if nx < 2 or ny < 2:
        raise MeshError(f"need at least 2 cells per direction, got {nx}x{ny}")
    hx = spec.length_x / nx
    hy = spec.length_y / ny
    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny))
    xc = ((ii.ravel() + 0.5) * hx).astype(float)
    yc = ((jj.ravel() + 0.5) * hy).astype(float)

    owners, neighbors, lens, dists, axes, tags, midx, midy = ([] for _ in range(8))

    def cell(i, j):
        return j * nx + i

    # vertical interior faces between (i, j) and (i + 1, j)
    j, i = np.meshgrid(np.arange(ny), np.arange(nx - 1), indexing="ij")
    owners.append(cell(i, j).ravel())
    neighbors.append(cell(i + 1, j).ravel())
    n_v = (nx - 1) * ny
    lens.append(np.full(n_v, hy))
    dists.append(np.full(n_v, hx))
    axes.append(np.zeros(n_v, dtype=np.int8))
    tags.append(np.zeros(n_v, dtype=np.int8))
    midx.append(((i.ravel() + 1) * hx).astype(float))
    midy.append(((j.ravel() + 0.5) * hy).astype(float))

    # horizontal interior faces between (i, j) and (i, j + 1)
    j, i = np.meshgrid(np.arange(ny - 1), np.arange(nx), indexing="ij")
    owners.append(cell(i, j).ravel())
    neighbors.append(cell(i, j + 1).ravel())
    n_h = nx * (ny - 1)
    lens.append(np.full(n_h, hx))
    dists.append(np.full(n_h, hy))
    axes.append(np.ones(n_h, dtype=np.int8))
    tags.append(np.zeros(n_h, dtype=np.int8))
    midx.append(((i.ravel() + 0.5) * hx).astype(float))
    midy.append(((j.ravel() + 1) * hy).astype(float))

    def add_edge(edge, owner_cells, face_len, face_dist, axis, mx, my, frac):
        n = owner_cells.size
        owners.append(owner_cells)
        neighbors.append(np.full(n, -1, dtype=owner_cells.dtype))
        lens.append(np.full(n, face_len))
        dists.append(np.full(n, face_dist))
        axes.append(np.full(n, axis, dtype=np.int8))
        tags.append(
            np.array(
                [TAG_CODES[spec.label_at(edge, f)] for f in frac], dtype=np.int8
            )
        )
        midx.append(mx)
        midy.append(my)

    jb = np.arange(ny)
    ib = np.arange(nx)
    ymid = (jb + 0.5) * hy
    xmid = (ib + 0.5) * hx
    add_edge("left", cell(0, jb), hy, hx / 2, 0, np.zeros(ny), ymid,
             ymid / spec.length_y)
    add_edge("right", cell(nx - 1, jb), hy, hx / 2, 0,
             np.full(ny, spec.length_x), ymid, ymid / spec.length_y)
    add_edge("bottom", cell(ib, 0), hx, hy / 2, 1, xmid, np.zeros(nx),
             xmid / spec.length_x)
    add_edge("top", cell(ib, ny - 1), hx, hy / 2, 1, xmid,
             np.full(nx, spec.length_y), xmid / spec.length_x)

    face_len = np.concatenate(lens)
    face_dist = np.concatenate(dists)
    face_tag = np.concatenate(tags)
    tag_idx = {t: np.flatnonzero(face_tag == t)
               for t in (INTERIOR, D1, D2, NEUMANN)}
    tag_idx["boundary"] = np.flatnonzero(face_tag != INTERIOR)
    tag_idx["dirichlet"] = np.flatnonzero(np.isin(face_tag, (D1, D2)))
    mesh = Mesh(
        nx=nx, ny=ny, hx=hx, hy=hy,
        length_x=spec.length_x, length_y=spec.length_y,
        xc=xc, yc=yc, cell_area=hx * hy,
        face_owner=np.concatenate(owners).astype(np.int64),
        face_neighbor=np.concatenate(neighbors).astype(np.int64),
        face_len=face_len,
        face_dist=face_dist,
        face_weight=face_len * face_dist,
        face_axis=np.concatenate(axes),
        face_tag=face_tag,
        face_mid_x=np.concatenate(midx),
        face_mid_y=np.concatenate(midy),
        _tag_idx=tag_idx,
    )
    for code, name in ((D1, "D1"), (D2, "D2")):
        if mesh.faces_with_tag(code).size == 0:
            raise MeshError(
                f"terminal {name} received no boundary faces at {nx}x{ny}; "
                "refine the mesh or widen the segment"
            )
    return mesh


def integrate_cells(mesh: Mesh, field) -> float:
    """Discrete volume integral: sum of cell values times cell area."""
    field = np.asarray(field, dtype=float)
    if field.shape != (mesh.n_cells,):
        raise ValueError(
            f"field has shape {field.shape}, expected ({mesh.n_cells},)"
        )
    return float(field.sum() * mesh.cell_area)


def face_gradient(mesh: Mesh, cells, boundary_values=None,
                  dirichlet_tags=(D1, D2)) -> np.ndarray:
    """Normal gradient per face (owner -> neighbor / outward orientation).

    Interior faces difference the two cell values over the center distance.
    Faces tagged in ``dirichlet_tags`` difference the boundary-face value
    (from ``boundary_values``, a full-length face array) against the owner
    cell over the half-cell distance. All other boundary faces carry zero
    gradient (homogeneous Neumann).
    """
    cells = np.asarray(cells, dtype=float)
    grad = np.zeros(mesh.n_faces)
    interior = mesh.interior_faces
    grad[interior] = (
        cells[mesh.face_neighbor[interior]] - cells[mesh.face_owner[interior]]
    ) / mesh.face_dist[interior]
    if boundary_values is not None:
        bvals = np.asarray(boundary_values, dtype=float)
        dir_faces = mesh.dirichlet_faces(dirichlet_tags)
        grad[dir_faces] = (
            bvals[dir_faces] - cells[mesh.face_owner[dir_faces]]
        ) / mesh.face_dist[dir_faces]
    return grad


def divergence(mesh: Mesh, face_field) -> np.ndarray:
    """Cellwise divergence of an oriented face field (per unit area)."""
    face_field = np.asarray(face_field, dtype=float)
    out = np.zeros(mesh.n_cells)
    flux = face_field * mesh.face_len
    np.add.at(out, mesh.face_owner, flux)
    interior = mesh.interior_faces
    np.subtract.at(out, mesh.face_neighbor[interior], flux[interior])
    return out / mesh.cell_area


def face_inner(mesh: Mesh, f1, f2) -> float:
    """Face-weighted inner product sum(w_f * f1 * f2), w_f = len * dist."""
    return float(np.sum(mesh.face_weight * np.asarray(f1) * np.asarray(f2)))


def boundary_value_array(mesh: Mesh, d1_value, d2_value) -> np.ndarray:
    """Full-length face array with per-terminal constants on D1/D2 faces."""
    vals = np.zeros(mesh.n_faces)
    vals[mesh.faces_with_tag(D1)] = d1_value
    vals[mesh.faces_with_tag(D2)] = d2_value
    return vals
