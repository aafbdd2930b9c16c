"""Observation windows, point patterns, and covariate rasters.

All types are immutable after construction (arrays are marked read-only),
so they can be shared freely across threads and replications.

Coordinates are planar (meters); rasters are pixel images with
nearest-pixel lookup and no interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

__all__ = [
    "Window",
    "PointPattern",
    "CovariateField",
    "read_pattern",
    "write_pattern",
    "read_raster",
    "write_raster",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Window:
    """Rectangular observation domain [x_min, x_max] x [y_min, y_max]."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise DomainError(
                f"degenerate window: [{self.x_min},{self.x_max}]x[{self.y_min},{self.y_max}]"
            )

    @property
    def side_x(self) -> float:
        return self.x_max - self.x_min

    @property
    def side_y(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.side_x * self.side_y

    def erode(self, margin: float) -> "Window":
        """Shrink all four bounds inward by `margin` (meters)."""
        if margin < 0:
            raise DomainError(f"erosion margin must be nonnegative, got {margin}")
        if 2.0 * margin >= self.side_x or 2.0 * margin >= self.side_y:
            raise DomainError(
                f"erosion margin {margin} degenerates window with sides "
                f"{self.side_x} x {self.side_y}"
            )
        return Window(
            self.x_min + margin, self.x_max - margin, self.y_min + margin, self.y_max - margin
        )

    def dilate(self, margin: float) -> "Window":
        """Grow all four bounds outward by `margin` (meters)."""
        if margin < 0:
            raise DomainError(f"dilation margin must be nonnegative, got {margin}")
        return Window(
            self.x_min - margin, self.x_max + margin, self.y_min - margin, self.y_max + margin
        )

    def contains(self, xy: np.ndarray) -> np.ndarray:
        """Vectorized membership test for an (n, 2) array (closed window)."""
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        return (
            (xy[:, 0] >= self.x_min)
            & (xy[:, 0] <= self.x_max)
            & (xy[:, 1] >= self.y_min)
            & (xy[:, 1] <= self.y_max)
        )


@dataclass(frozen=True)
class PointPattern:
    """A finite set of planar points observed in a window."""

    points: np.ndarray  # (m, 2)
    window: Window

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if pts.size and not np.isfinite(pts).all():
            raise DomainError("point pattern contains non-finite coordinates")
        if pts.size and not self.window.contains(pts).all():
            bad = np.flatnonzero(~self.window.contains(pts))[0]
            raise DomainError(f"point {tuple(pts[bad])} lies outside the window")
        object.__setattr__(self, "points", _readonly(pts))

    def __len__(self) -> int:
        return self.points.shape[0]

    def subset(self, win: Window) -> "PointPattern":
        """Points falling in `win` (must be contained in the current window)."""
        keep = win.contains(self.points) if len(self) else np.zeros(0, dtype=bool)
        return PointPattern(self.points[keep], win)


def _pixel_index(t: np.ndarray, n: int) -> np.ndarray:
    """Map normalized coordinates t = (x - lo) / pixel_size to pixel indices.

    A coordinate exactly on a pixel boundary is equidistant from the two
    neighboring pixel centers; ties break toward the lower index.
    """
    t = np.asarray(t, dtype=float)
    idx = np.floor(t).astype(int)
    on_boundary = (t == idx) & (idx > 0)
    idx = np.where(on_boundary, idx - 1, idx)
    return np.clip(idx, 0, n - 1)


@dataclass(frozen=True)
class CovariateField:
    """One spatial covariate stored as an ny x nx pixel raster.

    `values[iy, ix]` is the pixel whose center is at
    (x_min + (ix + 1/2) dx, y_min + (iy + 1/2) dy); row 0 is the lowest-y band.
    """

    window: Window
    values: np.ndarray  # (ny, nx)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise DomainError(f"raster values must be a 2-d grid, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise DomainError("raster contains non-finite values")
        object.__setattr__(self, "values", _readonly(v))

    @property
    def ny(self) -> int:
        return self.values.shape[0]

    @property
    def nx(self) -> int:
        return self.values.shape[1]

    @property
    def pixel_dx(self) -> float:
        return self.window.side_x / self.nx

    @property
    def pixel_dy(self) -> float:
        return self.window.side_y / self.ny

    @property
    def pixel_area(self) -> float:
        return self.pixel_dx * self.pixel_dy

    def pixel_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """(x centers of length nx, y centers of length ny)."""
        w = self.window
        cx = w.x_min + (np.arange(self.nx) + 0.5) * self.pixel_dx
        cy = w.y_min + (np.arange(self.ny) + 0.5) * self.pixel_dy
        return cx, cy

    def lookup(self, u: np.ndarray) -> np.ndarray | float:
        """Value of the pixel whose center is nearest to u (no interpolation).

        Accepts a single (x, y) pair or an (n, 2) array.
        """
        u_arr = np.asarray(u, dtype=float)
        scalar = u_arr.ndim == 1
        pts = np.atleast_2d(u_arr)
        inside = self.window.contains(pts)
        if not inside.all():
            bad = np.flatnonzero(~inside)[0]
            raise DomainError(f"lookup at {tuple(pts[bad])} is outside the raster window")
        ix = _pixel_index((pts[:, 0] - self.window.x_min) / self.pixel_dx, self.nx)
        iy = _pixel_index((pts[:, 1] - self.window.y_min) / self.pixel_dy, self.ny)
        out = self.values[iy, ix]
        return float(out[0]) if scalar else out

    def standardize(self) -> "CovariateField":
        """Rescale to pixel mean 0 and sample (n-1) standard deviation 1."""
        v = self.values
        sd = v.std(ddof=1)
        if not sd > 0:
            raise DomainError("cannot standardize a constant raster (zero variance)")
        return CovariateField(self.window, (v - v.mean()) / sd)


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

def write_pattern(pattern: PointPattern, path) -> None:
    """CSV with header ``x,y``, one point per line."""
    with open(path, "w") as fh:
        fh.write("x,y\n")
        for x, y in pattern.points:
            fh.write(f"{x:.17g},{y:.17g}\n")


def read_pattern(path, window: Window) -> PointPattern:
    """Read a ``x,y`` CSV; all points must lie in `window`."""
    with open(path) as fh:
        header = fh.readline().strip()
        if header.replace(" ", "") != "x,y":
            raise DomainError(f"{path}: expected header 'x,y', got {header!r}")
        rows = [line.strip() for line in fh if line.strip()]
    pts = np.array([[float(tok) for tok in row.split(",")] for row in rows], dtype=float)
    return PointPattern(pts.reshape(-1, 2), window)


def write_raster(field: CovariateField, path) -> None:
    """CSV with a 4-line header then ny rows of nx values (row 0 = lowest y)."""
    w = field.window
    with open(path, "w") as fh:
        fh.write(f"nx={field.nx}\n")
        fh.write(f"ny={field.ny}\n")
        fh.write(f"xrange={w.x_min:.17g},{w.x_max:.17g}\n")
        fh.write(f"yrange={w.y_min:.17g},{w.y_max:.17g}\n")
        for row in field.values:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def read_raster(path) -> CovariateField:
    with open(path) as fh:
        lines = [line.strip() for line in fh if line.strip()]
    try:
        nx = int(lines[0].split("=", 1)[1])
        ny = int(lines[1].split("=", 1)[1])
        xlo, xhi = (float(t) for t in lines[2].split("=", 1)[1].split(","))
        ylo, yhi = (float(t) for t in lines[3].split("=", 1)[1].split(","))
    except (IndexError, ValueError) as exc:
        raise DomainError(f"{path}: malformed raster header") from exc
    if len(lines) != 4 + ny:
        raise DomainError(f"{path}: expected {ny} data rows, found {len(lines) - 4}")
    values = np.array(
        [[float(tok) for tok in line.split(",")] for line in lines[4:]], dtype=float
    )
    if values.shape != (ny, nx):
        raise DomainError(f"{path}: data shape {values.shape} does not match nx={nx}, ny={ny}")
    return CovariateField(Window(xlo, xhi, ylo, yhi), values)
