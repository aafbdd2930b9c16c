"""Penalty families for regularized intensity estimation.

Seven families are supported: ridge, lasso, elastic net (``enet``),
adaptive lasso (``al``), adaptive elastic net (``aenet``), SCAD, and MC+
(``mcplus``).  The adaptive families carry one tuning parameter per
coefficient; all others use a single global lambda.

Values and first/second derivatives are evaluated on theta = |beta_j| >= 0.
SCAD and MC+ first derivatives are not differentiable at their kink points;
second derivatives here return the one-sided right limit so every function
is total on theta > 0.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, DomainError

__all__ = [
    "FAMILIES",
    "PenaltySpec",
    "penalty_value",
    "penalty_d1",
    "penalty_d2",
    "soft_threshold",
    "cd_update",
    "adaptive_lambdas",
    "theory_sequences",
]

FAMILIES = ("ridge", "lasso", "enet", "al", "aenet", "scad", "mcplus")
_ADAPTIVE = ("al", "aenet")
_DEFAULT_GAMMA = {"enet": 0.5, "aenet": 0.5, "scad": 3.7, "mcplus": 3.0}


@dataclass(frozen=True)
class PenaltySpec:
    """A penalty family with its tuning parameters.

    lam is the global tuning parameter; gamma is the family shape parameter
    (elastic-net mixing in (0,1), SCAD > 2, MC+ > 1); per_coef_lambda, when
    present, holds one lambda per covariate coefficient and takes precedence
    over lam (required for the adaptive families).
    """

    family: str
    lam: float = 0.0
    gamma: float | None = None
    per_coef_lambda: np.ndarray | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown penalty family {self.family!r}")
        if self.lam < 0:
            raise ConfigurationError(f"lambda must be nonnegative, got {self.lam}")
        gamma = self.gamma if self.gamma is not None else _DEFAULT_GAMMA.get(self.family)
        object.__setattr__(self, "gamma", gamma)
        if self.family in ("enet", "aenet") and not 0 < gamma < 1:
            raise ConfigurationError(f"elastic-net mixing gamma must be in (0,1), got {gamma}")
        if self.family == "scad" and not gamma > 2:
            raise ConfigurationError(f"SCAD requires gamma > 2, got {gamma}")
        if self.family == "mcplus" and not gamma > 1:
            raise ConfigurationError(f"MC+ requires gamma > 1, got {gamma}")
        if self.per_coef_lambda is not None:
            lj = np.asarray(self.per_coef_lambda, dtype=float)
            if lj.ndim != 1 or (lj < 0).any():
                raise ConfigurationError("per_coef_lambda must be a 1-d nonnegative vector")
            object.__setattr__(self, "per_coef_lambda", lj)
        elif self.family in _ADAPTIVE and self.lam > 0:
            raise ConfigurationError(f"{self.family} requires per_coef_lambda")

    def lam_for(self, j: int) -> float:
        """Tuning parameter applied to coefficient j (0-based covariate index)."""
        if self.per_coef_lambda is not None:
            return float(self.per_coef_lambda[j])
        return self.lam

    def with_lambda(self, lam: float, factors: np.ndarray | None = None) -> "PenaltySpec":
        """Copy with a new global lambda; `factors` rescales it per coefficient."""
        per = None if factors is None else lam * np.asarray(factors, dtype=float)
        return replace(self, lam=lam, per_coef_lambda=per)


def _check_theta(theta) -> np.ndarray:
    th = np.asarray(theta, dtype=float)
    if (th < 0).any():
        raise DomainError("penalty argument theta must be nonnegative (pass |beta_j|)")
    return th


def penalty_value(spec: PenaltySpec, theta, j: int = 0):
    """p_lambda(theta) for coefficient j; p(0) = 0 for every family."""
    th = _check_theta(theta)
    lam, g = spec.lam_for(j), spec.gamma
    fam = spec.family
    if fam == "ridge":
        out = 0.5 * lam * th**2
    elif fam in ("lasso", "al"):
        out = lam * th
    elif fam in ("enet", "aenet"):
        out = lam * (g * th + 0.5 * (1.0 - g) * th**2)
    elif fam == "scad":
        mid = (g * lam * th - 0.5 * (th**2 + lam**2)) / (g - 1.0)
        flat = lam**2 * (g**2 - 1.0) / (2.0 * (g - 1.0))
        out = np.where(th <= lam, lam * th, np.where(th <= g * lam, mid, flat))
    else:  # mcplus
        out = np.where(th <= g * lam, lam * th - th**2 / (2.0 * g), 0.5 * g * lam**2)
    return out if isinstance(theta, np.ndarray) else float(out)


def penalty_d1(spec: PenaltySpec, theta, j: int = 0):
    """First derivative p'_lambda(theta) for theta > 0."""
    th = _check_theta(theta)
    if (th == 0).any():
        raise DomainError("penalty derivative is undefined at theta = 0")
    lam, g = spec.lam_for(j), spec.gamma
    fam = spec.family
    if fam == "ridge":
        out = lam * th
    elif fam in ("lasso", "al"):
        out = np.full_like(th, lam)
    elif fam in ("enet", "aenet"):
        out = lam * ((1.0 - g) * th + g)
    elif fam == "scad":
        out = np.where(th <= lam, lam, np.where(th < g * lam, (g * lam - th) / (g - 1.0), 0.0))
    else:  # mcplus
        out = np.where(th < g * lam, lam - th / g, 0.0)
    return out if isinstance(theta, np.ndarray) else float(out)


def penalty_d2(spec: PenaltySpec, theta, j: int = 0):
    """Second derivative p''_lambda(theta) for theta > 0 (right limit at kinks)."""
    th = _check_theta(theta)
    if (th == 0).any():
        raise DomainError("penalty derivative is undefined at theta = 0")
    lam, g = spec.lam_for(j), spec.gamma
    fam = spec.family
    if fam == "ridge":
        out = np.full_like(th, lam)
    elif fam in ("lasso", "al"):
        out = np.zeros_like(th)
    elif fam in ("enet", "aenet"):
        out = np.full_like(th, lam * (1.0 - g))
    elif fam == "scad":
        out = np.where(th < lam, 0.0, np.where(th < g * lam, -1.0 / (g - 1.0), 0.0))
    else:  # mcplus
        out = np.where(th < g * lam, -1.0 / g, 0.0)
    return out if isinstance(theta, np.ndarray) else float(out)


def soft_threshold(z, t):
    """sign(z) (|z| - t)_+."""
    z = np.asarray(z, dtype=float)
    out = np.sign(z) * np.maximum(np.abs(z) - t, 0.0)
    return out if out.ndim else float(out)


def cd_update(family: str, g_tilde: float, eta_tilde: float, lam: float,
              gamma: float | None = None) -> float:
    """Coordinate-wise minimizer of  h(b) = eta b^2 / 2 - g b + p_lambda(|b|).

    For the elastic-net family (which covers ridge at gamma = 0 and lasso at
    gamma = 1) the update is exact for any eta_tilde > 0.  The SCAD and MC+
    updates require the stated gamma bounds, which make h convex.
    """
    if not eta_tilde > 0:
        raise ConfigurationError(f"eta_tilde must be positive, got {eta_tilde}")
    if family in ("ridge", "lasso", "enet", "al", "aenet"):
        if gamma is None:
            gamma = {"ridge": 0.0, "lasso": 1.0, "al": 1.0}.get(family, 0.5)
        return float(soft_threshold(g_tilde, lam * gamma) / (eta_tilde + lam * (1.0 - gamma)))
    if family == "scad":
        gamma = 3.7 if gamma is None else gamma
        if not gamma > 1.0 + 1.0 / eta_tilde:
            raise ConfigurationError(
                f"SCAD update needs gamma > 1 + 1/eta_tilde = {1.0 + 1.0 / eta_tilde:.6g}, "
                f"got {gamma}"
            )
        ag = abs(g_tilde)
        if ag <= lam * (eta_tilde + 1.0):
            return float(soft_threshold(g_tilde, lam) / eta_tilde)
        if ag <= eta_tilde * lam * gamma:
            return float(
                soft_threshold(g_tilde, gamma * lam / (gamma - 1.0))
                / (eta_tilde - 1.0 / (gamma - 1.0))
            )
        return g_tilde / eta_tilde
    if family == "mcplus":
        gamma = 3.0 if gamma is None else gamma
        if not gamma > 1.0 / eta_tilde:
            raise ConfigurationError(
                f"MC+ update needs gamma > 1/eta_tilde = {1.0 / eta_tilde:.6g}, got {gamma}"
            )
        if abs(g_tilde) <= eta_tilde * lam * gamma:
            return float(soft_threshold(g_tilde, lam) / (eta_tilde - 1.0 / gamma))
        return g_tilde / eta_tilde
    raise ConfigurationError(f"unknown penalty family {family!r}")


def adaptive_lambdas(beta_ridge: np.ndarray, lam: float, eps_pilot: float = 1e-8) -> np.ndarray:
    """Per-coefficient tuning parameters lambda_j = lambda / max(|pilot_j|, eps).

    The pilot is the vector of ridge covariate coefficients; exact zeros are
    guarded by eps_pilot so the corresponding lambda_j is finite but huge.
    """
    pilot = np.abs(np.asarray(beta_ridge, dtype=float))
    return lam / np.maximum(pilot, eps_pilot)


def theory_sequences(spec: PenaltySpec, beta0_nonzero: np.ndarray,
                     area: float, k1: float = 1.0) -> tuple[float, float, float]:
    """Diagnostic sequences (a_n, b_n, c_n) at a finite domain size.

    a_n and c_n are extrema of p' and p'' over the nonzero true coefficients;
    b_n is the infimum of p' over (0, eps_n] with eps_n = k1 / sqrt(area),
    taken over the zero-coefficient tuning parameters.  For the adaptive
    families, per_coef_lambda must list the nonzero-coefficient lambdas first.
    """
    b0 = np.abs(np.asarray(beta0_nonzero, dtype=float))
    if (b0 == 0).any():
        raise DomainError("beta0_nonzero must contain only nonzero entries")
    s = b0.size
    a_n = max(abs(penalty_d1(spec, float(th), j)) for j, th in enumerate(b0))
    c_n = max(abs(penalty_d2(spec, float(th), j)) for j, th in enumerate(b0))
    eps_n = k1 / np.sqrt(area)
    if spec.per_coef_lambda is not None:
        zero_lams = spec.per_coef_lambda[s:]
        if zero_lams.size == 0:
            zero_lams = spec.per_coef_lambda[:1]
    else:
        zero_lams = np.array([spec.lam])
    # every family's p' is monotone on (0, inf): the infimum over (0, eps_n]
    # is min of the limit at 0+ and the value at eps_n
    fam, g = spec.family, spec.gamma
    b_candidates = []
    for lam in zero_lams:
        spec_l = replace(spec, lam=float(lam), per_coef_lambda=None)
        if fam == "ridge":
            at_zero = 0.0
        elif fam in ("enet", "aenet"):
            at_zero = lam * g
        else:
            at_zero = lam
        at_eps = penalty_d1(spec_l, float(eps_n)) if lam > 0 else 0.0
        b_candidates.append(min(at_zero, at_eps))
    b_n = min(b_candidates)
    return float(a_n), float(b_n), float(c_n)
