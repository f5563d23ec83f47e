"""Finite-volume geometries with a bulk domain and a reactive boundary.

Each geometry carries cell-centered volumes for the bulk domain, cell-centered
boundary patches, a trace map linking boundary patches to their adjacent bulk
cells, and divergence-form Laplacians for both. The Laplacians are assembled
from explicit face lists (two-point flux), so measure-weighted symmetry and
zero row sums hold by construction; the same face lists feed the entropy
dissipation quadratures.

Conventions:
    - Bulk Laplacian rows discretize the Laplacian with zero-flux outer
      boundaries. Reactive (Robin) boundary terms are injected by the steppers
      through the trace map, never baked into the operator.
    - trace_factors[j] converts a boundary flux density on patch j into a rate
      of change of the adjacent cell average: gamma_weights[j] / omega
      cell volume.
    - The interval geometry has a two-point boundary with counting measure and
      a zero surface Laplacian; it is the degenerate instance of the family
      and only meaningful with zero surface diffusion.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp

__all__ = [
    "GridKind",
    "GridGeometry",
    "build_interval",
    "build_periodic_strip",
    "build_polar_disk",
    "trace",
]


class GridKind(Enum):
    INTERVAL_1D = "interval1d"
    PERIODIC_STRIP_2D = "periodic_strip2d"
    POLAR_DISK_2D = "polar_disk2d"


@dataclass(frozen=True)
class GridGeometry:
    """Immutable description of one discretized geometry.

    Fields ending in ``_faces`` list index pairs of adjacent cells;
    ``_face_coeffs`` hold the matching transmissibilities (face measure over
    center distance). ``unit_coord`` arrays map cell centers to [0, 1] along
    the natural tangential coordinate and exist for initial-data synthesis.
    """

    kind: GridKind
    omega_centers: np.ndarray        # (n_omega, dim)
    omega_weights: np.ndarray        # (n_omega,) cell volumes
    gamma_centers: np.ndarray        # (n_gamma, dim)
    gamma_weights: np.ndarray        # (n_gamma,) patch measures
    trace_cells: np.ndarray          # (n_gamma,) adjacent bulk cell index
    trace_factors: np.ndarray        # (n_gamma,) gamma weight / cell volume
    bulk_laplacian: sp.csr_matrix
    surface_laplacian: sp.csr_matrix
    omega_faces: np.ndarray          # (m, 2) int
    omega_face_coeffs: np.ndarray    # (m,)
    gamma_faces: np.ndarray          # (k, 2) int
    gamma_face_coeffs: np.ndarray    # (k,)
    omega_measure: float
    gamma_measure: float
    omega_unit_coord: np.ndarray = field(repr=False, default=None)
    gamma_unit_coord: np.ndarray = field(repr=False, default=None)

    @property
    def n_omega(self) -> int:
        return self.omega_weights.shape[0]

    @property
    def n_gamma(self) -> int:
        return self.gamma_weights.shape[0]


def _laplacian_from_faces(n: int, weights: np.ndarray, faces: np.ndarray,
                          coeffs: np.ndarray) -> sp.csr_matrix:
    """Divergence-form Laplacian: L = diag(1/w) K with K the symmetric flux
    matrix built from two-point faces. Empty face list gives the zero matrix."""
    if len(faces) == 0:
        return sp.csr_matrix((n, n))
    i = faces[:, 0]
    j = faces[:, 1]
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([j, i, i, j])
    vals = np.concatenate([coeffs, coeffs, -coeffs, -coeffs])
    flux = sp.coo_matrix((vals, (rows, cols)), shape=(n, n))
    lap = sp.diags(1.0 / weights) @ flux.tocsr()
    return sp.csr_matrix(lap)


def build_interval(n_cells: int, length: float) -> GridGeometry:
    """Uniform 1D interval [0, length] with two boundary points.

    Boundary patches carry counting measure (weight 1 each); the surface
    Laplacian is identically zero. Requires n_cells >= 2 so the two boundary
    patches touch distinct cells.
    """
    if n_cells < 2:
        raise ValueError(f"n_cells must be >= 2, got {n_cells}")
    if length <= 0:
        raise ValueError(f"length must be positive, got {length}")
    h = length / n_cells
    centers = (np.arange(n_cells) + 0.5) * h
    weights = np.full(n_cells, h)

    faces = np.column_stack([np.arange(n_cells - 1), np.arange(1, n_cells)])
    coeffs = np.full(n_cells - 1, 1.0 / h)

    gamma_centers = np.array([[0.0], [length]])
    gamma_weights = np.array([1.0, 1.0])
    trace_cells = np.array([0, n_cells - 1])
    trace_factors = gamma_weights / weights[trace_cells]

    lap = _laplacian_from_faces(n_cells, weights, faces, coeffs)
    gamma_faces = np.zeros((0, 2), dtype=int)
    gamma_coeffs = np.zeros(0)
    surf_lap = sp.csr_matrix((2, 2))

    return GridGeometry(
        kind=GridKind.INTERVAL_1D,
        omega_centers=centers[:, None],
        omega_weights=weights,
        gamma_centers=gamma_centers,
        gamma_weights=gamma_weights,
        trace_cells=trace_cells,
        trace_factors=trace_factors,
        bulk_laplacian=lap,
        surface_laplacian=surf_lap,
        omega_faces=faces,
        omega_face_coeffs=coeffs,
        gamma_faces=gamma_faces,
        gamma_face_coeffs=gamma_coeffs,
        omega_measure=float(weights.sum()),
        gamma_measure=float(gamma_weights.sum()),
        omega_unit_coord=centers / length,
        gamma_unit_coord=np.array([0.0, 1.0]),
    )


def build_periodic_strip(nx: int, ny: int, width: float,
                         height: float) -> GridGeometry:
    """x-periodic rectangle with reactive bottom and top edges.

    The boundary consists of two periodic rings of nx patches each, ordered
    bottom ring first (j = 0..nx-1) then top ring (j = nx..2nx-1), matching
    the row-major bulk ordering i = iy*nx + ix.
    """
    if nx < 3:
        raise ValueError(f"nx must be >= 3, got {nx}")
    if ny < 2:
        raise ValueError(f"ny must be >= 2, got {ny}")
    if width <= 0 or height <= 0:
        raise ValueError("width and height must be positive")
    dx = width / nx
    dy = height / ny
    n = nx * ny

    ix = np.tile(np.arange(nx), ny)
    iy = np.repeat(np.arange(ny), nx)
    centers = np.column_stack([(ix + 0.5) * dx, (iy + 0.5) * dy])
    weights = np.full(n, dx * dy)

    faces = []
    coeffs = []
    # x-direction faces, periodic wrap included once per row
    for row in range(ny):
        base = row * nx
        for k in range(nx):
            faces.append((base + k, base + (k + 1) % nx))
            coeffs.append(dy / dx)
    # y-direction faces, zero flux at the outer edges
    for row in range(ny - 1):
        for k in range(nx):
            faces.append((row * nx + k, (row + 1) * nx + k))
            coeffs.append(dx / dy)
    faces = np.array(faces, dtype=int)
    coeffs = np.array(coeffs)

    gx = (np.arange(nx) + 0.5) * dx
    gamma_centers = np.vstack([
        np.column_stack([gx, np.zeros(nx)]),
        np.column_stack([gx, np.full(nx, height)]),
    ])
    gamma_weights = np.full(2 * nx, dx)
    trace_cells = np.concatenate([np.arange(nx), (ny - 1) * nx + np.arange(nx)])
    trace_factors = gamma_weights / weights[trace_cells]

    gfaces = []
    gcoeffs = []
    for ring in range(2):
        base = ring * nx
        for k in range(nx):
            gfaces.append((base + k, base + (k + 1) % nx))
            gcoeffs.append(1.0 / dx)
    gfaces = np.array(gfaces, dtype=int)
    gcoeffs = np.array(gcoeffs)

    lap = _laplacian_from_faces(n, weights, faces, coeffs)
    surf_lap = _laplacian_from_faces(2 * nx, gamma_weights, gfaces, gcoeffs)

    return GridGeometry(
        kind=GridKind.PERIODIC_STRIP_2D,
        omega_centers=centers,
        omega_weights=weights,
        gamma_centers=gamma_centers,
        gamma_weights=gamma_weights,
        trace_cells=trace_cells,
        trace_factors=trace_factors,
        bulk_laplacian=lap,
        surface_laplacian=surf_lap,
        omega_faces=faces,
        omega_face_coeffs=coeffs,
        gamma_faces=gfaces,
        gamma_face_coeffs=gcoeffs,
        omega_measure=float(weights.sum()),
        gamma_measure=float(gamma_weights.sum()),
        omega_unit_coord=centers[:, 0] / width,
        gamma_unit_coord=gamma_centers[:, 0] / width,
    )


def build_polar_disk(nr: int, ntheta: int, radius: float) -> GridGeometry:
    """Uniform polar disk with the outer circle as reactive boundary.

    Cells are annular sectors indexed i = ir*ntheta + itheta; the coordinate
    singularity at r = 0 needs no special casing because the innermost radial
    faces have zero measure.
    """
    if nr < 2:
        raise ValueError(f"nr must be >= 2, got {nr}")
    if ntheta < 3:
        raise ValueError(f"ntheta must be >= 3, got {ntheta}")
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    dr = radius / nr
    dth = 2.0 * np.pi / ntheta
    n = nr * ntheta

    ir = np.repeat(np.arange(nr), ntheta)
    ith = np.tile(np.arange(ntheta), nr)
    rc = (ir + 0.5) * dr
    thc = (ith + 0.5) * dth
    centers = np.column_stack([rc * np.cos(thc), rc * np.sin(thc)])
    # exact sector volume: 0.5*(r_out^2 - r_in^2)*dth = rc*dr*dth
    weights = rc * dr * dth

    faces = []
    coeffs = []
    for k in range(nr - 1):
        r_face = (k + 1) * dr
        for t in range(ntheta):
            faces.append((k * ntheta + t, (k + 1) * ntheta + t))
            coeffs.append(r_face * dth / dr)
    for k in range(nr):
        r_mid = (k + 0.5) * dr
        for t in range(ntheta):
            faces.append((k * ntheta + t, k * ntheta + (t + 1) % ntheta))
            coeffs.append(dr / (r_mid * dth))
    faces = np.array(faces, dtype=int)
    coeffs = np.array(coeffs)

    gth = (np.arange(ntheta) + 0.5) * dth
    gamma_centers = np.column_stack([radius * np.cos(gth), radius * np.sin(gth)])
    gamma_weights = np.full(ntheta, radius * dth)
    trace_cells = (nr - 1) * ntheta + np.arange(ntheta)
    trace_factors = gamma_weights / weights[trace_cells]

    ds = radius * dth
    gfaces = np.column_stack([np.arange(ntheta),
                              (np.arange(ntheta) + 1) % ntheta])
    gcoeffs = np.full(ntheta, 1.0 / ds)

    lap = _laplacian_from_faces(n, weights, faces, coeffs)
    surf_lap = _laplacian_from_faces(ntheta, gamma_weights, gfaces, gcoeffs)

    return GridGeometry(
        kind=GridKind.POLAR_DISK_2D,
        omega_centers=centers,
        omega_weights=weights,
        gamma_centers=gamma_centers,
        gamma_weights=gamma_weights,
        trace_cells=trace_cells,
        trace_factors=trace_factors,
        bulk_laplacian=lap,
        surface_laplacian=surf_lap,
        omega_faces=faces,
        omega_face_coeffs=coeffs,
        gamma_faces=gfaces,
        gamma_face_coeffs=gcoeffs,
        omega_measure=float(weights.sum()),
        gamma_measure=float(gamma_weights.sum()),
        omega_unit_coord=thc / (2.0 * np.pi),
        gamma_unit_coord=gth / (2.0 * np.pi),
    )


def trace(field_u: np.ndarray, geom: GridGeometry) -> np.ndarray:
    """Piecewise-constant trace: boundary patch j reads its adjacent cell."""
    field_u = np.asarray(field_u)
    if field_u.shape != (geom.n_omega,):
        raise ValueError(
            f"field has shape {field_u.shape}, expected ({geom.n_omega},)")
    return field_u[geom.trace_cells]
