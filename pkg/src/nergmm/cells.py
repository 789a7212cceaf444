"""Cell-specific anelastic attenuation: grids, ray segmentation, priors.

The study region is divided into a rectangular grid of cells; each record's
straight source-to-site ray is broken into the lengths it spends inside each
cell (the dR row). Total path attenuation is the dot product of dR with the
per-cell attenuation coefficients, whose prior is a spatial GP on the cell
centers with a scalar mean (by default the ergodic linear attenuation slope)
and whose physical range is the non-positive half line.
"""

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ModelQualityWarning, OutOfGridError, ValidationError
from .kernels import kernel_matrix

# boundary-crossing parameters closer than this are a corner hit
CORNER_TOL = 1e-12


@dataclass(frozen=True)
class CellGrid:
    """Rectangular cell grid.

    Cells are indexed by (ix, iy) with flat index iy * nx + ix, so index 0
    is the lower-left cell and indices advance along +x first. Cell centers
    serve as the GP input coordinates of the attenuation field.
    """

    x0: float
    y0: float
    dx: float
    dy: float
    nx: int
    ny: int

    def __post_init__(self):
        if not (self.dx > 0 and self.dy > 0):
            raise ValidationError(f"cell sizes must be > 0, got {self.dx}, {self.dy}")
        if not (self.nx >= 1 and self.ny >= 1):
            raise ValidationError(f"cell counts must be >= 1, got {self.nx}, {self.ny}")

    @property
    def n_cells(self):
        return self.nx * self.ny

    @property
    def x_max(self):
        return self.x0 + self.nx * self.dx

    @property
    def y_max(self):
        return self.y0 + self.ny * self.dy

    def cell_centers(self):
        """Cell-center coordinates, shape (n_cells, 2), in flat-index order."""
        xs = self.x0 + (np.arange(self.nx) + 0.5) * self.dx
        ys = self.y0 + (np.arange(self.ny) + 0.5) * self.dy
        gx, gy = np.meshgrid(xs, ys)        # row-major over y, matching iy*nx+ix
        return np.column_stack([gx.ravel(), gy.ravel()])

    def contains(self, point):
        x, y = float(point[0]), float(point[1])
        return (self.x0 <= x <= self.x_max) and (self.y0 <= y <= self.y_max)

    def cell_of(self, point):
        """Flat index of the cell containing a point (boundary snaps inward).

        Raises OutOfGridError for points outside the grid rectangle.
        """
        if not self.contains(point):
            raise OutOfGridError(
                f"point {tuple(point)} is outside the grid "
                f"[{self.x0}, {self.x_max}] x [{self.y0}, {self.y_max}]")
        ix = int(np.floor((float(point[0]) - self.x0) / self.dx))
        iy = int(np.floor((float(point[1]) - self.y0) / self.dy))
        ix = min(max(ix, 0), self.nx - 1)
        iy = min(max(iy, 0), self.ny - 1)
        return iy * self.nx + ix


@dataclass(frozen=True)
class PathSegments:
    """Sparse per-cell lengths of one source-to-site ray.

    ``cells`` are flat cell indices in increasing order; ``lengths`` are the
    km spent inside each, summing to the straight-line distance.
    """

    cells: np.ndarray
    lengths: np.ndarray
    source: tuple
    site: tuple

    @property
    def total(self):
        return float(np.sum(self.lengths))


def segment_path(grid, source, site):
    """Split the straight ray from source to site into per-cell lengths.

    Walks the grid cell by cell. At each step the parameters of the next
    vertical and horizontal gridline crossings are computed from the
    absolute gridline coordinates (never accumulated), which keeps the
    segment-sum identity exact. When both crossings coincide (a cell
    corner) the walk steps diagonally and neither side cell receives any
    length.

    Parameters
    ----------
    grid : CellGrid
    source, site : (x, y) in km, both inside the grid.

    Returns
    -------
    PathSegments

    Raises
    ------
    OutOfGridError
        If either endpoint lies outside the grid bounds.
    """
    a = np.asarray(source, dtype=float)
    b = np.asarray(site, dtype=float)
    for name, p in (("source", a), ("site", b)):
        if not grid.contains(p):
            raise OutOfGridError(
                f"{name} point ({p[0]:.6g}, {p[1]:.6g}) outside grid "
                f"[{grid.x0}, {grid.x_max}] x [{grid.y0}, {grid.y_max}]")

    ray = b - a
    dist = float(np.linalg.norm(ray))
    lengths = {}
    if dist == 0.0:
        lengths[grid.cell_of(a)] = 0.0
        return _segments_from_dict(lengths, source, site)

    ix = int(np.floor((a[0] - grid.x0) / grid.dx))
    iy = int(np.floor((a[1] - grid.y0) / grid.dy))
    ix = min(max(ix, 0), grid.nx - 1)
    iy = min(max(iy, 0), grid.ny - 1)
    step_x = 1 if ray[0] > 0 else -1
    step_y = 1 if ray[1] > 0 else -1

    t_cur = 0.0
    max_steps = grid.nx + grid.ny + 4
    for _ in range(max_steps):
        # parameter of the next gridline crossing in each direction, from
        # absolute line coordinates
        if ray[0] > 0:
            tx = (grid.x0 + (ix + 1) * grid.dx - a[0]) / ray[0]
        elif ray[0] < 0:
            tx = (grid.x0 + ix * grid.dx - a[0]) / ray[0]
        else:
            tx = np.inf
        if ray[1] > 0:
            ty = (grid.y0 + (iy + 1) * grid.dy - a[1]) / ray[1]
        elif ray[1] < 0:
            ty = (grid.y0 + iy * grid.dy - a[1]) / ray[1]
        else:
            ty = np.inf

        t_next = min(tx, ty)
        cell = iy * grid.nx + ix
        if t_next >= 1.0:
            lengths[cell] = lengths.get(cell, 0.0) + (1.0 - t_cur) * dist
            return _segments_from_dict(lengths, source, site)
        lengths[cell] = lengths.get(cell, 0.0) + (t_next - t_cur) * dist
        if abs(tx - ty) < CORNER_TOL:
            ix += step_x
            iy += step_y
        elif tx < ty:
            ix += step_x
        else:
            iy += step_y
        t_cur = t_next
    raise OutOfGridError(
        f"ray ({a[0]:.6g}, {a[1]:.6g}) -> ({b[0]:.6g}, {b[1]:.6g}) left the "
        "grid during traversal")


def _segments_from_dict(lengths, source, site):
    cells = np.array(sorted(lengths.keys()), dtype=int)
    vals = np.array([lengths[c] for c in cells], dtype=float)
    return PathSegments(cells=cells, lengths=vals,
                        source=tuple(np.asarray(source, dtype=float)),
                        site=tuple(np.asarray(site, dtype=float)))


def assemble_dR(grid, catalog, origin_convention="closest_point"):
    """Per-record cell-path matrix, shape (n_records, n_cells).

    Row i holds the segment lengths of record i's source-to-site ray. The
    origin convention is metadata here: the catalog carries one source
    coordinate pair per record, already under the convention used upstream.

    Raises
    ------
    OutOfGridError
        Naming the first record whose ray endpoint leaves the grid.
    ValidationError
        For an unknown origin convention string.
    """
    if origin_convention not in ("closest_point", "epicenter"):
        raise ValidationError(
            f"unknown origin convention {origin_convention!r}")
    out = np.zeros((catalog.n_records, grid.n_cells))
    for i in range(catalog.n_records):
        try:
            seg = segment_path(grid, catalog.eq_xy[i], catalog.sta_xy[i])
        except OutOfGridError as exc:
            raise OutOfGridError(f"record {i}: {exc}") from exc
        out[i, seg.cells] = seg.lengths
    return out


def f_atten(dR_row, c_ca):
    """Total path attenuation: dot(dR, c_ca). Non-positive for c_ca <= 0."""
    dR_row = np.asarray(dR_row, dtype=float)
    c_ca = np.asarray(c_ca, dtype=float)
    if dR_row.shape != c_ca.shape:
        raise ValidationError(
            f"dR row and c_ca shapes differ: {dR_row.shape} vs {c_ca.shape}")
    return float(dR_row @ c_ca)


def atten_prior_cov(grid, kernel):
    """Prior covariance of the cell attenuation field on the cell centers."""
    centers = grid.cell_centers()
    return kernel_matrix(kernel, centers, centers)


@dataclass(frozen=True)
class ClampReport:
    """Outcome of enforcing the non-positive attenuation constraint."""

    n_cells: int
    clamped_indices: np.ndarray
    original_values: np.ndarray

    @property
    def n_clamped(self):
        return int(self.clamped_indices.size)

    @property
    def fraction(self):
        return self.n_clamped / self.n_cells if self.n_cells else 0.0


@dataclass(frozen=True)
class CellAttenPosterior:
    """Reported per-cell attenuation posterior (means clamped to <= 0)."""

    mu_ca: np.ndarray       # posterior means, ln-units per km, <= 0
    psi_ca: np.ndarray      # posterior sds
    mu_prior: float
    report: ClampReport


def clamp_and_report(mu_ca):
    """Clamp positive attenuation means to zero and report what moved.

    A clamping fraction above 5% warns: the fitted field disagrees with the
    physical sign constraint often enough that the model deserves a look.

    Returns
    -------
    clamped : ndarray
    report : ClampReport
    """
    mu_ca = np.asarray(mu_ca, dtype=float)
    pos = np.flatnonzero(mu_ca > 0.0)
    clamped = mu_ca.copy()
    clamped[pos] = 0.0
    report = ClampReport(n_cells=mu_ca.size, clamped_indices=pos,
                         original_values=mu_ca[pos].copy())
    if report.fraction > 0.05:
        warnings.warn(
            f"{report.n_clamped} of {report.n_cells} cells "
            f"({100 * report.fraction:.1f}%) had positive attenuation and "
            "were clamped to 0",
            ModelQualityWarning,
            stacklevel=2,
        )
    return clamped, report


GRID_KEYS = ("origin_x", "origin_y", "dx", "dy", "nx", "ny")


def write_grid(grid, path):
    """Write a grid definition file (JSON with the documented keys)."""
    payload = {"origin_x": grid.x0, "origin_y": grid.y0, "dx": grid.dx,
               "dy": grid.dy, "nx": grid.nx, "ny": grid.ny}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def read_grid(path):
    """Read a grid definition file; unknown or missing keys are rejected."""
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    return grid_from_dict(payload)


def grid_from_dict(payload):
    extra = set(payload) - set(GRID_KEYS)
    if extra:
        raise ValidationError(f"unknown grid keys: {sorted(extra)}")
    missing = set(GRID_KEYS) - set(payload)
    if missing:
        raise ValidationError(f"missing grid keys: {sorted(missing)}")
    return CellGrid(x0=float(payload["origin_x"]), y0=float(payload["origin_y"]),
                    dx=float(payload["dx"]), dy=float(payload["dy"]),
                    nx=int(payload["nx"]), ny=int(payload["ny"]))
