"""Second-order summaries, optimal weight surfaces, and plug-in covariances.

The clustering surrogate f is approximated by K(r) - pi r^2 with a
translation-corrected Ripley K estimator; the weight surfaces trade off
intensity against clustering to reduce estimator variance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, RankError
from .geom import PointPattern
from .quadrature import QuadratureScheme

__all__ = [
    "WeightSurface",
    "SandwichVariance",
    "ripley_k",
    "f_hat",
    "weight_surface_poisson",
    "weight_surface_logistic",
    "sandwich_variance",
]

_PAIR_CHUNK = 256


@dataclass(frozen=True)
class WeightSurface:
    """Per-location weight values and the estimating equation they target."""

    values: np.ndarray
    source: str  # poisson | logistic | unit

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if self.source not in ("poisson", "logistic", "unit"):
            raise DomainError(f"unknown weight surface source {self.source!r}")
        if not np.isfinite(vals).all() or (vals <= 0).any():
            raise DomainError("weight surface values must be finite and positive")
        if self.source == "unit" and not np.all(vals == 1.0):
            raise DomainError("unit weight surface must be identically 1")
        object.__setattr__(self, "values", vals)

    @classmethod
    def unit(cls, n: int) -> "WeightSurface":
        return cls(np.ones(n), "unit")


@dataclass(frozen=True)
class SandwichVariance:
    """Plug-in asymptotic covariance pieces restricted to the fitted support."""

    support: np.ndarray  # coefficient indices the blocks refer to
    a11: np.ndarray
    b11: np.ndarray
    c11: np.ndarray
    pi: np.ndarray
    sigma: np.ndarray
    se: np.ndarray       # per-coefficient standard errors sqrt(Sigma_jj / |D|)


def ripley_k(pattern: PointPattern, rho_hat, r: float) -> float:
    """Translation-corrected inhomogeneous K estimator at distance r.

    rho_hat maps an (n, 2) array of locations to positive intensity values;
    the edge correction |D n D_{u-v}| = (Lx - |dx|)(Ly - |dy|) requires
    r < min window side.
    """
    win = pattern.window
    if not 0 < r < min(win.side_x, win.side_y):
        raise DomainError(f"r must lie in (0, {min(win.side_x, win.side_y)}), got {r}")
    m = len(pattern)
    if m < 2:
        return 0.0
    pts = pattern.points
    rho = np.asarray(rho_hat(pts), dtype=float)
    if (rho <= 0).any():
        raise DomainError("rho_hat must be positive at all data points")
    total = 0.0
    for lo in range(0, m, _PAIR_CHUNK):
        hi = min(lo + _PAIR_CHUNK, m)
        dx = np.abs(pts[lo:hi, None, 0] - pts[None, :, 0])
        dy = np.abs(pts[lo:hi, None, 1] - pts[None, :, 1])
        close = (dx**2 + dy**2) <= r * r
        close[:, lo:hi] &= ~np.eye(hi - lo, dtype=bool)
        contrib = np.where(
            close,
            1.0 / ((win.side_x - dx) * (win.side_y - dy)
                   * rho[lo:hi, None] * rho[None, :]),
            0.0,
        )
        total += contrib.sum()
    return float(total)


def f_hat(pattern: PointPattern, rho_hat, r: float) -> float:
    """Clustering surrogate K(r) - pi r^2 (0 for Poisson, > 0 when clustered)."""
    return ripley_k(pattern, rho_hat, r) - np.pi * r * r


def weight_surface_poisson(rho_hat_at: np.ndarray, f: float,
                           f_floor: float = 0.0) -> WeightSurface:
    """w = 1 / (1 + rho f), with f floored at f_floor (default 0).

    Negative f estimates (possible under CSR noise) would give weights above
    one; the floor reverts those cases to unweighted estimation.
    """
    rho = np.asarray(rho_hat_at, dtype=float)
    if (rho < 0).any():
        raise DomainError("rho_hat_at must be nonnegative")
    f_eff = max(f, f_floor)
    return WeightSurface(1.0 / (1.0 + rho * f_eff), "poisson")


def weight_surface_logistic(rho_hat_at: np.ndarray, delta_at: np.ndarray, f: float,
                            f_floor: float = 0.0) -> WeightSurface:
    """w = (rho + delta) / (delta (1 + rho f)), same f floor as the Poisson case."""
    rho = np.asarray(rho_hat_at, dtype=float)
    delta = np.asarray(delta_at, dtype=float) * np.ones_like(rho)
    if (rho < 0).any():
        raise DomainError("rho_hat_at must be nonnegative")
    if (delta <= 0).any():
        raise DomainError("delta_at must be positive")
    f_eff = max(f, f_floor)
    return WeightSurface((rho + delta) / (delta * (1.0 + rho * f_eff)), "logistic")


def sandwich_variance(scheme: QuadratureScheme, beta_hat: np.ndarray,
                      support: np.ndarray, penalty_d2_at_beta: np.ndarray,
                      g_minus_1=None) -> SandwichVariance:
    """Plug-in covariance Sigma = |D| M^-1 (B + C) M^-1 with M = A + |D| Pi.

    A and B are quadrature sums of w z z' rho and w^2 z z' rho over the
    support coordinates; C is 0 unless a pair-correlation hook g_minus_1
    (a vectorized (u, v) -> g(u,v) - 1) is supplied, in which case it is a
    double quadrature sum over the dummy grid.  Pi is the diagonal of penalty
    second derivatives supplied by the caller (one entry per support
    coordinate, 0 for unpenalized coordinates).
    """
    if scheme.kind != "poisson":
        raise DomainError("sandwich_variance needs a quadrature scheme with weights "
                          "(poisson kind); evaluate logistic fits on one")
    support = np.asarray(support, dtype=int)
    if support.size == 0:
        raise DomainError("support must be nonempty")
    beta_hat = np.asarray(beta_hat, dtype=float)
    area = scheme.window.area
    rho = np.exp(np.clip(scheme.Z @ beta_hat, -700, 700))
    zs = scheme.Z[:, support]
    base = scheme.v * scheme.w * rho
    a11 = zs.T @ (base[:, None] * zs)
    b11 = zs.T @ ((base * scheme.w)[:, None] * zs)

    c11 = np.zeros_like(a11)
    if g_minus_1 is not None:
        dummy = ~scheme.is_data
        pts_d = scheme.points[dummy]
        zd = zs[dummy]
        hd = (scheme.v * scheme.w * rho)[dummy]
        for lo in range(0, pts_d.shape[0], _PAIR_CHUNK):
            hi = min(lo + _PAIR_CHUNK, pts_d.shape[0])
            g1 = np.asarray(g_minus_1(pts_d[lo:hi], pts_d), dtype=float)
            weighted = (hd[lo:hi, None] * g1 * hd[None, :])  # (chunk, nd^2)
            c11 += zd[lo:hi].T @ (weighted @ zd)

    pi = np.diag(np.asarray(penalty_d2_at_beta, dtype=float))
    if pi.shape != a11.shape:
        raise DomainError("penalty_d2_at_beta must have one entry per support coordinate")
    m = a11 + area * pi
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > 1e12:
        raise RankError(f"A11 + |D| Pi is numerically singular (cond {cond:.3g})")
    m_inv = np.linalg.inv(m)
    sigma = area * m_inv @ (b11 + c11) @ m_inv
    se = np.sqrt(np.clip(np.diag(sigma), 0.0, None) / area)
    return SandwichVariance(support=support, a11=a11, b11=b11, c11=c11,
                            pi=pi, sigma=sigma, se=se)
