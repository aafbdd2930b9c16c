"""Discrete design problems for the estimating equations.

Berman-Turner quadrature turns the Poisson likelihood integral into a
weighted Poisson GLM over data plus gridded dummy points with counting
weights; the logistic scheme pairs the data with an independent dummy
point process and a per-row offset -log delta(u).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, DomainError
from .geom import PointPattern, Window, _pixel_index

__all__ = [
    "QuadratureScheme",
    "design_matrix",
    "build_berman_turner",
    "default_nd",
    "build_logistic_scheme",
]


@dataclass(frozen=True)
class QuadratureScheme:
    """Locations, responses and design of a discretized estimating equation.

    For ``kind='poisson'`` v holds quadrature weights summing to |D|;
    for ``kind='logistic'`` v holds the per-row offset -log delta(u).
    w is an optional weight-surface value per row (default 1).
    """

    kind: str
    window: Window
    points: np.ndarray   # (M, 2)
    is_data: np.ndarray  # (M,) bool
    v: np.ndarray        # (M,)
    Z: np.ndarray        # (M, p+1), leading column of ones
    w: np.ndarray | None = None  # surface weight per row, defaults to ones

    def __post_init__(self):
        if self.kind not in ("poisson", "logistic"):
            raise ConfigurationError(f"unknown scheme kind {self.kind!r}")
        if not np.isfinite(self.Z).all():
            raise DomainError("design matrix contains non-finite entries")
        if self.w is None:
            object.__setattr__(self, "w", np.ones(self.points.shape[0]))
        elif (np.asarray(self.w) <= 0).any():
            raise DomainError("surface weights must be positive")
        if self.kind == "poisson":
            if (self.v <= 0).any():
                raise DomainError("quadrature weights must be positive")
            total = self.v.sum()
            if abs(total - self.window.area) > 1e-10 * self.window.area:
                raise DomainError(
                    f"quadrature weights sum to {total}, window area {self.window.area}"
                )

    @property
    def n_rows(self) -> int:
        return self.points.shape[0]

    @property
    def n_coef(self) -> int:
        return self.Z.shape[1]

    def response(self) -> np.ndarray:
        """GLM response: counting density Delta/v (poisson) or Delta (logistic)."""
        if self.kind == "poisson":
            return self.is_data.astype(float) / self.v
        return self.is_data.astype(float)

    def with_weights(self, w: np.ndarray) -> "QuadratureScheme":
        return replace(self, w=np.asarray(w, dtype=float))

    def to_csv(self, path) -> None:
        """Debug dump: i,x,y,is_data,v_or_offset,w,z1..zp."""
        p = self.n_coef - 1
        with open(path, "w") as fh:
            fh.write("i,x,y,is_data,v_or_offset,w," +
                     ",".join(f"z{j}" for j in range(1, p + 1)) + "\n")
            for i in range(self.n_rows):
                zrow = ",".join(f"{z:.17g}" for z in self.Z[i, 1:])
                fh.write(f"{i},{self.points[i, 0]:.17g},{self.points[i, 1]:.17g},"
                         f"{int(self.is_data[i])},{self.v[i]:.17g},{self.w[i]:.17g},{zrow}\n")


def design_matrix(covariates, pts: np.ndarray) -> np.ndarray:
    """Rows (1, z_1(u), ..., z_p(u)) for each location u."""
    n = pts.shape[0]
    Z = np.ones((n, len(covariates) + 1), dtype=float)
    for j, field in enumerate(covariates, start=1):
        Z[:, j] = field.lookup(pts) if n else np.zeros(0)
    return Z


def default_nd(pattern: PointPattern) -> int:
    """Dummy grid size: ceil(sqrt(4 m)) with a floor of 10."""
    return max(10, math.ceil(math.sqrt(4 * len(pattern))))


def build_berman_turner(pattern: PointPattern, covariates, nd: int) -> QuadratureScheme:
    """Counting-weight quadrature on an nd x nd grid of equal-area pixels.

    One dummy point sits at each pixel center; every quadrature point in a
    pixel of area a shared by n_i points gets weight a / n_i, so the weights
    sum to |D| exactly.  Points on a pixel boundary go to the lower-index
    pixel.
    """
    if nd < 1:
        raise DomainError(f"nd must be >= 1, got {nd}")
    win = pattern.window
    cw, ch = win.side_x / nd, win.side_y / nd
    cell_area = win.area / (nd * nd)

    jx, jy = np.meshgrid(np.arange(nd), np.arange(nd), indexing="xy")
    dummies = np.column_stack([
        win.x_min + (jx.ravel() + 0.5) * cw,
        win.y_min + (jy.ravel() + 0.5) * ch,
    ])
    pts = np.vstack([pattern.points, dummies])
    is_data = np.zeros(pts.shape[0], dtype=bool)
    is_data[: len(pattern)] = True

    ix = _pixel_index((pts[:, 0] - win.x_min) / cw, nd)
    iy = _pixel_index((pts[:, 1] - win.y_min) / ch, nd)
    cell = iy * nd + ix
    counts = np.bincount(cell, minlength=nd * nd)
    v = cell_area / counts[cell]

    return QuadratureScheme(
        kind="poisson", window=win, points=pts, is_data=is_data, v=v,
        Z=design_matrix(covariates, pts),
    )


def build_logistic_scheme(pattern: PointPattern, covariates, dummies: PointPattern,
                          delta) -> QuadratureScheme:
    """Design for the logistic estimating equation.

    `delta` is the dummy-process intensity: a positive scalar or a callable
    mapping an (n, 2) array to positive rates.  Each row carries the offset
    -log delta(u) in v and the binary label Delta in is_data.
    """
    win = pattern.window
    pts = np.vstack([pattern.points, dummies.points])
    is_data = np.zeros(pts.shape[0], dtype=bool)
    is_data[: len(pattern)] = True
    if callable(delta):
        d = np.asarray(delta(pts), dtype=float)
        d = np.broadcast_to(d, (pts.shape[0],)).astype(float)
    else:
        d = np.full(pts.shape[0], float(delta))
    if (d <= 0).any() or not np.isfinite(d).all():
        raise DomainError("delta must be positive and finite at every location")
    return QuadratureScheme(
        kind="logistic", window=win, points=pts, is_data=is_data, v=-np.log(d),
        Z=design_matrix(covariates, pts),
    )
