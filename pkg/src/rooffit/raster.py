"""Ortho-rectified 2D grids (DTM, DSM, masks) and ASCII grid I/O.

Grid values are stored as a (height, width) array with row 0 at the
*south* edge (y increasing with row index).  The on-disk format is the
usual ASCII grid with header lines and rows listed north to south, so
read/write flips rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["RasterGrid", "read_raster", "write_raster", "rasterize_height"]

NODATA = -9999.0


@dataclass
class RasterGrid:
    origin_x: float
    origin_y: float
    resolution: float
    values: np.ndarray  # (height, width), row 0 = south
    nodata: float = NODATA

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("raster values must be 2D")
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def same_geometry(self, other: "RasterGrid", tol: float = 1e-9) -> bool:
        return (
            self.values.shape == other.values.shape
            and abs(self.origin_x - other.origin_x) <= tol
            and abs(self.origin_y - other.origin_y) <= tol
            and abs(self.resolution - other.resolution) <= tol
        )

    def cell_of(self, x, y):
        """(row, col) arrays for coordinates; -1 where outside the grid."""
        col = np.floor((np.asarray(x, dtype=float) - self.origin_x) / self.resolution)
        row = np.floor((np.asarray(y, dtype=float) - self.origin_y) / self.resolution)
        col = col.astype(int)
        row = row.astype(int)
        bad = (col < 0) | (col >= self.width) | (row < 0) | (row >= self.height)
        return np.where(bad, -1, row), np.where(bad, -1, col)

    def value_at(self, x, y, outside=None):
        """Grid value at coordinates; `outside` (default nodata) off-grid."""
        fill = self.nodata if outside is None else outside
        row, col = self.cell_of(x, y)
        ok = row >= 0
        out = np.full(np.shape(row), fill, dtype=float)
        out[ok] = self.values[row[ok], col[ok]]
        return out

    def cell_centers(self):
        """(xs, ys) 1D arrays of column / row center coordinates."""
        xs = self.origin_x + (np.arange(self.width) + 0.5) * self.resolution
        ys = self.origin_y + (np.arange(self.height) + 0.5) * self.resolution
        return xs, ys

    @property
    def occupied(self) -> np.ndarray:
        return self.values != self.nodata


def write_raster(grid: RasterGrid, path) -> None:
    with open(path, "w") as f:
        f.write(f"ncols {grid.width}\n")
        f.write(f"nrows {grid.height}\n")
        f.write(f"xllcorner {float(grid.origin_x)!r}\n")
        f.write(f"yllcorner {float(grid.origin_y)!r}\n")
        f.write(f"cellsize {float(grid.resolution)!r}\n")
        f.write(f"NODATA_value {float(grid.nodata)!r}\n")
        for row in np.flipud(grid.values):
            f.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_raster(path) -> RasterGrid:
    with open(path) as f:
        header = {}
        for _ in range(6):
            line = f.readline()
            key, val = line.split()
            header[key.lower()] = float(val)
        rows = []
        for line in f:
            if line.strip():
                rows.append([float(t) for t in line.split()])
    values = np.flipud(np.asarray(rows, dtype=float))
    if values.shape != (int(header["nrows"]), int(header["ncols"])):
        raise ValueError(f"{path}: grid shape does not match header")
    return RasterGrid(
        header["xllcorner"],
        header["yllcorner"],
        header["cellsize"],
        values,
        header["nodata_value"],
    )


def _grid_reduce(xy, z, resolution, reducer, extent=None, nodata=NODATA):
    """Reduce z per grid cell. reducer in {max, min, median}."""
    xy = np.asarray(xy, dtype=float)
    z = np.asarray(z, dtype=float)
    if extent is None:
        ox = np.floor(xy[:, 0].min() / resolution) * resolution
        oy = np.floor(xy[:, 1].min() / resolution) * resolution
        nx = int(np.floor((xy[:, 0].max() - ox) / resolution)) + 1
        ny = int(np.floor((xy[:, 1].max() - oy) / resolution)) + 1
    else:
        ox, oy, nx, ny = extent
    col = np.clip(((xy[:, 0] - ox) / resolution).astype(int), 0, nx - 1)
    row = np.clip(((xy[:, 1] - oy) / resolution).astype(int), 0, ny - 1)
    flat = row * nx + col
    order = np.argsort(flat, kind="stable")
    flat_s, z_s = flat[order], z[order]
    cells, starts = np.unique(flat_s, return_index=True)
    values = np.full(nx * ny, nodata)
    if reducer == "max":
        values[cells] = np.maximum.reduceat(z_s, starts)
    elif reducer == "min":
        values[cells] = np.minimum.reduceat(z_s, starts)
    elif reducer == "median":
        bounds = np.append(starts, len(z_s))
        for c, lo, hi in zip(cells, bounds[:-1], bounds[1:]):
            values[c] = np.median(z_s[lo:hi])
    else:
        raise ValueError(f"unknown reducer {reducer!r}")
    return RasterGrid(ox, oy, resolution, values.reshape(ny, nx), nodata)


def rasterize_height(cloud, resolution: float, reducer: str = "max") -> RasterGrid:
    """Grid the cloud's z values; empty cells hold nodata.

    `reducer` is "max" or "median" (even-count median = mean of the two
    middle values).
    """
    if cloud.n == 0:
        raise ValueError("cannot rasterize an empty cloud")
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    if reducer not in ("max", "median"):
        raise ValueError("reducer must be 'max' or 'median'")
    return _grid_reduce(cloud.xyz[:, :2], cloud.xyz[:, 2], resolution, reducer)
