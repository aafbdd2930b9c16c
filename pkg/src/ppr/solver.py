"""Fitting: IRLS outer loop, cyclic coordinate descent, lambda paths, WQBIC.

The penalized objective maximized is  l(w; beta) - |D| sum_j p_lambda(|beta_j|)
with the window area |D| playing the role of the sample size; internally the
coordinate problems are scaled per unit area, so KKT conditions read
|grad_j l| / |D| <= lambda at zero coefficients for the lasso.

The intercept is never penalized and is refit in closed form each sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import AlgorithmError, ConfigurationError, ConvergenceError, RankError
from .geom import PointPattern
from .penalties import PenaltySpec, adaptive_lambdas, cd_update, penalty_d2, penalty_value, soft_threshold
from .quadrature import QuadratureScheme, build_berman_turner, build_logistic_scheme, default_nd
from .simulate import RngSeed, dummy_process
from .summaries import WeightSurface, f_hat, sandwich_variance, weight_surface_logistic, weight_surface_poisson

__all__ = [
    "FitConfig",
    "FitResult",
    "irls_working",
    "loglik",
    "score",
    "fit_unpenalized",
    "lambda_grid",
    "fit_path",
    "fit",
]

METHODS = ("pl", "wpl", "logit", "wlogit")
_CLAMP = 30.0  # linear predictor bound preventing exp overflow
_CONVEX = ("ridge", "lasso", "enet", "al", "aenet")


@dataclass(frozen=True)
class FitConfig:
    """Knobs for a single fit; defaults follow the package conventions."""

    method: str = "pl"
    penalty: PenaltySpec | None = None
    n_lambda: int = 100
    lambda_min_ratio: float = 1e-4
    cd_tol: float = 1e-7
    max_irls: int = 25
    max_cd: int = 10_000
    standardize: bool = True
    nd: int | None = None            # dummy grid size, default ceil(sqrt(4m))
    r_for_f: float | None = None     # K-function radius, default min side / 8
    dummy_kind: str = "stratified"   # dummy process for logistic schemes
    delta: float | None = None       # logistic dummy intensity, default nd^2/|D|
    compute_se: bool = True
    lambdas: np.ndarray | None = None  # explicit grid override

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown method {self.method!r}")
        if self.n_lambda < 1 or self.cd_tol <= 0 or self.lambda_min_ratio <= 0:
            raise ConfigurationError("n_lambda >= 1 and positive tolerances required")


@dataclass
class FitResult:
    """Coefficients along a lambda path plus the WQBIC-selected model."""

    lambda_grid: np.ndarray
    coef_path: np.ndarray          # (n_lambda, p+1)
    wqbic: np.ndarray
    selected_index: int
    beta_hat: np.ndarray
    support: np.ndarray            # nonzero covariate coefficient indices (1..p)
    se: np.ndarray | None = None   # (p+1,), NaN off the fitted support
    diagnostics: dict = field(default_factory=dict)


def _clamped(eta: np.ndarray) -> tuple[np.ndarray, bool]:
    hit = bool((eta < -_CLAMP).any() or (eta > _CLAMP).any())
    return np.clip(eta, -_CLAMP, _CLAMP), hit


def _check_weights(scheme: QuadratureScheme, surface_w: WeightSurface) -> np.ndarray:
    w = surface_w.values
    if w.shape[0] != scheme.n_rows:
        raise ConfigurationError("weight surface length does not match the scheme")
    return w


def loglik(scheme: QuadratureScheme, surface_w: WeightSurface, beta: np.ndarray) -> float:
    """Weighted log-likelihood of the discretized estimating equation."""
    w = _check_weights(scheme, surface_w)
    if scheme.kind == "poisson":
        lp, _ = _clamped(scheme.Z @ beta)
        return float(w[scheme.is_data] @ lp[scheme.is_data] - (w * scheme.v) @ np.exp(lp))
    eta, _ = _clamped(scheme.v + scheme.Z @ beta)
    # log p = -log(1+e^-eta), log(1-p) = -log(1+e^eta)
    ll_data = -np.logaddexp(0.0, -eta[scheme.is_data])
    ll_dummy = -np.logaddexp(0.0, eta[~scheme.is_data])
    return float(w[scheme.is_data] @ ll_data + w[~scheme.is_data] @ ll_dummy)


def score(scheme: QuadratureScheme, surface_w: WeightSurface, beta: np.ndarray) -> np.ndarray:
    """Gradient of `loglik` with respect to beta."""
    w = _check_weights(scheme, surface_w)
    if scheme.kind == "poisson":
        lp, _ = _clamped(scheme.Z @ beta)
        resid = w * (scheme.is_data - scheme.v * np.exp(lp))
    else:
        eta, _ = _clamped(scheme.v + scheme.Z @ beta)
        p = 1.0 / (1.0 + np.exp(-eta))
        resid = w * (scheme.is_data - p)
    return scheme.Z.T @ resid


def irls_working(scheme: QuadratureScheme, surface_w: WeightSurface,
                 beta_tilde: np.ndarray) -> tuple[np.ndarray, np.ndarray, bool]:
    """Working weights and responses of the quadratic approximation.

    Poisson kind: nu_i = w_i v_i exp(z_i'b), y*_i = z_i'b + (y_i - mu_i)/mu_i
    with y_i = Delta_i / v_i.  Logistic kind: the standard Bernoulli working
    quantities with the offset excluded from the working response.  Returns
    (nu, ystar, clamped_flag).
    """
    w = _check_weights(scheme, surface_w)
    lp_raw = scheme.Z @ beta_tilde
    if scheme.kind == "poisson":
        lp, hit = _clamped(lp_raw)
        mu = np.exp(lp)
        nu = w * scheme.v * mu
        ystar = lp_raw + (scheme.response() - mu) / mu
    else:
        eta, hit = _clamped(scheme.v + lp_raw)
        p = 1.0 / (1.0 + np.exp(-eta))
        var = p * (1.0 - p)
        nu = w * var
        ystar = lp_raw + (scheme.response() - p) / var
    return nu, ystar, hit


def _null_intercept(scheme: QuadratureScheme, surface_w: WeightSurface,
                    config: FitConfig) -> float:
    """Intercept of the covariate-null model."""
    w = surface_w.values
    if scheme.kind == "poisson":
        num = w[scheme.is_data].sum()
        den = (w * scheme.v).sum()
        if num == 0:
            return -_CLAMP
        return float(np.log(num / den))
    # logistic: the intercept score sum w (Delta - p) is monotone decreasing
    # in b0, so bisection is safe from any start
    y = scheme.is_data.astype(float)

    def score0(b0):
        p = 1.0 / (1.0 + np.exp(-np.clip(scheme.v + b0, -700, 700)))
        return float(w @ (y - p))

    lo, hi = -_CLAMP, _CLAMP
    if score0(lo) <= 0:
        return lo
    if score0(hi) >= 0:
        return hi
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if score0(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def fit_unpenalized(scheme: QuadratureScheme, surface_w: WeightSurface | None = None,
                    config: FitConfig | None = None) -> FitResult:
    """IRLS fit of the unregularized estimating equation.

    Converges when the score norm drops below 1e-6 |D| per coordinate.
    """
    config = config or FitConfig()
    surface_w = surface_w or WeightSurface.unit(scheme.n_rows)
    area = scheme.window.area
    tol = 1e-6 * area
    beta = np.zeros(scheme.n_coef)
    beta[0] = _null_intercept(scheme, surface_w, config)
    clamped = False
    for it in range(1, config.max_irls + 1):
        nu, ystar, hit = irls_working(scheme, surface_w, beta)
        clamped |= hit
        g = scheme.Z.T @ (nu[:, None] * scheme.Z)
        cond = np.linalg.cond(g)
        if not np.isfinite(cond) or cond > 1e12:
            raise RankError(f"design is numerically rank deficient (cond {cond:.3g})")
        beta_new = np.linalg.solve(g, scheme.Z.T @ (nu * ystar))
        # damped step if the likelihood worsens (full Newton is usual case)
        step = beta_new - beta
        ll_old = loglik(scheme, surface_w, beta)
        for _ in range(30):
            cand = beta + step
            if loglik(scheme, surface_w, cand) >= ll_old - 1e-12 * max(1.0, abs(ll_old)):
                break
            step *= 0.5
        beta = beta + step
        if np.max(np.abs(score(scheme, surface_w, beta))) < tol:
            break
    else:
        raise ConvergenceError(
            f"IRLS did not reach score tolerance {tol:.3g} in {config.max_irls} iterations "
            f"(score norm {np.max(np.abs(score(scheme, surface_w, beta))):.3g})"
        )
    ll = loglik(scheme, surface_w, beta)
    p = scheme.n_coef - 1
    support = np.flatnonzero(beta[1:] != 0.0) + 1
    wqbic = -2.0 * ll + support.size * np.log(area)
    return FitResult(
        lambda_grid=np.array([0.0]),
        coef_path=beta[None, :].copy(),
        wqbic=np.array([wqbic]),
        selected_index=0,
        beta_hat=beta,
        support=support,
        diagnostics={"irls_iters": it, "clamped": clamped, "loglik": ll},
    )


def _penalty_factors(penalty: PenaltySpec, p: int) -> np.ndarray:
    """Per-coefficient multipliers of the global lambda."""
    if penalty.per_coef_lambda is not None:
        if penalty.per_coef_lambda.size != p:
            raise ConfigurationError("per_coef_lambda length must match the covariate count")
        if penalty.lam > 0:
            return penalty.per_coef_lambda / penalty.lam
        return penalty.per_coef_lambda.copy()
    return np.ones(p)


def _mixing(penalty: PenaltySpec) -> float:
    """Effective l1 fraction used to anchor lambda_max (ridge uses 1e-3)."""
    if penalty.family == "ridge":
        return 1e-3
    if penalty.family in ("enet", "aenet"):
        return penalty.gamma
    return 1.0


def lambda_grid(scheme: QuadratureScheme, surface_w: WeightSurface,
                penalty: PenaltySpec, config: FitConfig | None = None) -> np.ndarray:
    """Log-spaced decreasing grid from the smallest all-zero lambda.

    lambda_max is the largest per-area covariate score at the null model,
    rescaled by the penalty factor and l1 mixing of each coordinate.  For
    SCAD/MC+ with per-area curvature below the convexity bound, the exact
    coordinate minimizer zeroes a coefficient only when |score| <=
    lambda sqrt(eta (gamma+1)) (resp. sqrt(eta gamma)), so lambda_max is
    raised accordingly to keep the path all-zero at its head.
    """
    config = config or FitConfig()
    p = scheme.n_coef - 1
    factors = _penalty_factors(penalty, p)
    beta0 = np.zeros(scheme.n_coef)
    beta0[0] = _null_intercept(scheme, surface_w, config)
    area = scheme.window.area
    g = score(scheme, surface_w, beta0)[1:] / area
    denom = np.maximum(factors, 1e-12) * _mixing(penalty)
    if penalty.family in ("scad", "mcplus"):
        nu, _, _ = irls_working(scheme, surface_w, beta0)
        eta = np.einsum("ij,ij->j", scheme.Z[:, 1:], nu[:, None] * scheme.Z[:, 1:]) / area
        shape = penalty.gamma + 1.0 if penalty.family == "scad" else penalty.gamma
        # 1e-8 headroom so the zero-vs-jump tie at the path head resolves to zero
        denom = denom * np.minimum(1.0, np.sqrt(eta * shape)) / (1.0 + 1e-8)
    lam_max = float(np.max(np.abs(g) / denom))
    if lam_max == 0.0:
        return np.array([0.0])
    return np.geomspace(lam_max, lam_max * config.lambda_min_ratio, config.n_lambda)


def _coordinate_update(spec: PenaltySpec, j: int, g: float, eta: float,
                       beta_old: float) -> float:
    """Minimize eta b^2/2 - g b + p_lambda(|b|) in coordinate j.

    Uses the closed-form update whenever its convexity precondition holds;
    otherwise (non-convex penalty with weak curvature) enumerates the branch
    stationary points and boundaries, which is the exact argmin.
    """
    fam, gamma, lam = spec.family, spec.gamma, spec.lam_for(j)
    if fam in _CONVEX:
        return cd_update(fam, g, eta, lam, gamma)
    ok = gamma > 1.0 + 1.0 / eta if fam == "scad" else gamma > 1.0 / eta
    if ok:
        return cd_update(fam, g, eta, lam, gamma)
    sgn = 1.0 if g >= 0 else -1.0
    cands = [0.0, g / eta, beta_old]
    if fam == "scad":
        cands += [soft_threshold(g, lam) / eta, sgn * lam, sgn * gamma * lam]
    else:
        cands += [sgn * gamma * lam]

    def h(b):
        return 0.5 * eta * b * b - g * b + penalty_value(spec, abs(b), j)

    return min(cands, key=h)


def _cd_quadratic(gram: np.ndarray, lin: np.ndarray, beta: np.ndarray,
                  spec: PenaltySpec | None, config: FitConfig) -> tuple[np.ndarray, int]:
    """Cyclic coordinate descent on  beta'G beta/2 - lin'beta + sum_j p(|beta_j|).

    gram and lin are already scaled per unit area; coordinate 0 (intercept)
    is unpenalized.  Returns the minimizer and the sweep count.
    """
    beta = beta.copy()
    r = gram @ beta
    diag = np.diag(gram)
    convex = spec is None or spec.family in _CONVEX
    obj_prev = None
    for sweep in range(1, config.max_cd + 1):
        delta_max = 0.0
        for j in range(beta.size):
            eta_j = diag[j]
            if eta_j <= 0.0:
                continue
            g_j = lin[j] - r[j] + eta_j * beta[j]
            if j == 0 or spec is None:
                b_new = g_j / eta_j
            else:
                b_new = _coordinate_update(spec, j - 1, g_j, eta_j, beta[j])
            step = b_new - beta[j]
            if step != 0.0:
                r += gram[:, j] * step
                beta[j] = b_new
                delta_max = max(delta_max, abs(step))
        if convex and spec is not None:
            pen = sum(penalty_value(spec, abs(beta[j + 1]), j) for j in range(beta.size - 1))
            obj = 0.5 * beta @ gram @ beta - lin @ beta + pen
            if obj_prev is not None and obj > obj_prev + 1e-8 * max(1.0, abs(obj_prev)):
                raise AlgorithmError(
                    f"coordinate descent increased a convex objective "
                    f"({obj_prev:.12g} -> {obj:.12g})"
                )
            obj_prev = obj
        if delta_max <= config.cd_tol * max(1.0, np.max(np.abs(beta))):
            return beta, sweep
    raise ConvergenceError(f"coordinate descent did not converge in {config.max_cd} sweeps")


def _penalized_irls(scheme: QuadratureScheme, surface_w: WeightSurface,
                    spec: PenaltySpec, beta_init: np.ndarray,
                    config: FitConfig) -> tuple[np.ndarray, dict]:
    area = scheme.window.area
    beta = beta_init.copy()
    clamped = False
    sweeps = 0
    for it in range(1, config.max_irls + 1):
        nu, ystar, hit = irls_working(scheme, surface_w, beta)
        clamped |= hit
        gram = scheme.Z.T @ (nu[:, None] * scheme.Z) / area
        lin = scheme.Z.T @ (nu * ystar) / area
        beta_new, s = _cd_quadratic(gram, lin, beta, spec, config)
        sweeps += s
        change = np.max(np.abs(beta_new - beta))
        beta = beta_new
        if change <= config.cd_tol * max(1.0, np.max(np.abs(beta))):
            break
    else:
        it = config.max_irls
    return beta, {"irls_iters": it, "cd_sweeps": sweeps, "clamped": clamped}


def fit_path(scheme: QuadratureScheme, surface_w: WeightSurface,
             penalty: PenaltySpec, config: FitConfig | None = None) -> FitResult:
    """Warm-started penalized path over a decreasing lambda grid.

    WQBIC(lambda) = -2 l(w; beta_hat) + s(lambda) log |D| is computed with
    the unpenalized weighted log-likelihood at the penalized estimate; ties
    in the argmin resolve toward the larger (sparser) lambda.
    """
    config = config or FitConfig()
    area = scheme.window.area
    p = scheme.n_coef - 1
    factors = _penalty_factors(penalty, p)
    grid = np.asarray(config.lambdas, dtype=float) if config.lambdas is not None \
        else lambda_grid(scheme, surface_w, penalty, config)
    beta = np.zeros(scheme.n_coef)
    beta[0] = _null_intercept(scheme, surface_w, config)
    coef_path = np.empty((grid.size, scheme.n_coef))
    wqbic = np.empty(grid.size)
    diag = {"irls_iters": 0, "cd_sweeps": 0, "clamped": False}
    for k, lam in enumerate(grid):
        spec_k = penalty.with_lambda(float(lam), factors)
        beta, info = _penalized_irls(scheme, surface_w, spec_k, beta, config)
        diag["irls_iters"] += info["irls_iters"]
        diag["cd_sweeps"] += info["cd_sweeps"]
        diag["clamped"] |= info["clamped"]
        coef_path[k] = beta
        s_k = int(np.count_nonzero(beta[1:]))
        wqbic[k] = -2.0 * loglik(scheme, surface_w, beta) + s_k * np.log(area)
    # ties (within numerical noise) resolve toward the larger, sparser lambda
    tie_eps = 1e-9 * max(1.0, float(np.abs(wqbic).min()))
    selected = int(np.flatnonzero(wqbic <= wqbic.min() + tie_eps)[0])
    beta_hat = coef_path[selected].copy()
    support = np.flatnonzero(beta_hat[1:] != 0.0) + 1
    diag["loglik"] = loglik(scheme, surface_w, beta_hat)
    spec_sel = penalty.with_lambda(float(grid[selected]), factors)
    pen_total = sum(penalty_value(spec_sel, abs(beta_hat[j + 1]), j) for j in range(p))
    diag["objective"] = -diag["loglik"] + area * pen_total
    return FitResult(
        lambda_grid=grid,
        coef_path=coef_path,
        wqbic=wqbic,
        selected_index=selected,
        beta_hat=beta_hat,
        support=support,
        diagnostics=diag,
    )


def _rho_at(Z: np.ndarray, beta: np.ndarray) -> np.ndarray:
    lp, _ = _clamped(Z @ beta)
    return np.exp(lp)


def fit(pattern: PointPattern, covariates, config: FitConfig,
        rng: RngSeed | None = None) -> FitResult:
    """End-to-end fit: scheme construction, two-stage weights, path, SE.

    Weighted methods run a first-stage unpenalized Poisson fit to plug in
    rho_hat and f_hat = K(r) - pi r^2; adaptive penalties run a ridge pilot
    selected by WQBIC.  Standard errors come from the plug-in sandwich on
    the selected support.
    """
    rng = rng or RngSeed(0)
    win = pattern.window
    covs = [f.standardize() for f in covariates] if config.standardize else list(covariates)
    m = len(pattern)
    nd = config.nd or default_nd(pattern)

    if config.method in ("pl", "wpl"):
        scheme = build_berman_turner(pattern, covs, nd)
        delta_at = None
    else:
        # the offset intensity must match the dummy process actually drawn:
        # nd^2 points on |D| (= 4m/|D| under the default nd rule)
        delta = config.delta if config.delta is not None else nd * nd / win.area
        dummies = dummy_process(config.dummy_kind, nd, win, rng)
        scheme = build_logistic_scheme(pattern, covs, dummies, delta)
        delta_at = np.exp(-scheme.v)

    first_stage = None
    if config.method in ("wpl", "wlogit"):
        bt = scheme if scheme.kind == "poisson" else build_berman_turner(pattern, covs, nd)
        first_stage = fit_unpenalized(bt, WeightSurface.unit(bt.n_rows), config)
        beta_tilde = first_stage.beta_hat
        r = config.r_for_f if config.r_for_f is not None else min(win.side_x, win.side_y) / 8.0
        rho_fn = lambda pts: _rho_at(
            np.column_stack([np.ones(pts.shape[0])] + [f.lookup(pts) for f in covs]), beta_tilde)
        f_val = f_hat(pattern, rho_fn, r)
        rho_scheme = _rho_at(scheme.Z, beta_tilde)
        if config.method == "wpl":
            surface = weight_surface_poisson(rho_scheme, f_val)
        else:
            surface = weight_surface_logistic(rho_scheme, delta_at, f_val)
    else:
        surface = WeightSurface.unit(scheme.n_rows)

    penalty = config.penalty
    pilot = None
    if penalty is not None and penalty.family in ("al", "aenet") \
            and penalty.per_coef_lambda is None:
        ridge_cfg = replace(config, penalty=PenaltySpec("ridge"), lambdas=None)
        pilot = fit_path(scheme, surface, PenaltySpec("ridge"), ridge_cfg)
        factors = adaptive_lambdas(pilot.beta_hat[1:], 1.0)
        penalty = replace(penalty, lam=1.0, per_coef_lambda=factors)

    if penalty is None:
        result = fit_unpenalized(scheme, surface, config)
    else:
        result = fit_path(scheme, surface, penalty, config)

    if first_stage is not None:
        result.diagnostics["f_hat"] = f_val
        result.diagnostics["first_stage"] = first_stage.beta_hat
    if pilot is not None:
        result.diagnostics["ridge_pilot"] = pilot.beta_hat

    if config.compute_se:
        result.se = _support_se(pattern, covs, scheme, surface, penalty, result,
                                delta_at, nd, config)
    return result


def _support_se(pattern, covs, scheme, surface, penalty, result, delta_at, nd, config):
    """Sandwich standard errors on intercept + selected support."""
    coords = np.concatenate([[0], result.support]).astype(int)
    d2 = np.zeros(coords.size)
    if penalty is not None:
        lam_sel = float(result.lambda_grid[result.selected_index])
        spec_sel = penalty.with_lambda(lam_sel, _penalty_factors(penalty, scheme.n_coef - 1))
        for i, c in enumerate(coords[1:], start=1):
            theta = abs(result.beta_hat[c])
            if theta > 0 and lam_sel > 0:
                d2[i] = penalty_d2(spec_sel, theta, c - 1)
    if scheme.kind == "poisson":
        quad = scheme.with_weights(surface.values)
    else:
        # the logistic asymptotics replace w by w delta / (rho + delta); the
        # integrals are evaluated on a counting-weight quadrature grid
        bt = build_berman_turner(pattern, covs, nd)
        rho_bt = _rho_at(bt.Z, result.beta_hat)
        delta_bt = float(np.exp(-scheme.v[0])) if delta_at is not None else 1.0
        if surface.source == "logistic":
            f_val = result.diagnostics.get("f_hat", 0.0)
            beta_ts = result.diagnostics.get("first_stage", result.beta_hat)
            rho_ts = _rho_at(bt.Z, beta_ts)
            w_bt = weight_surface_logistic(rho_ts, delta_bt, f_val).values
        else:
            w_bt = np.ones(bt.n_rows)
        quad = bt.with_weights(w_bt * delta_bt / (rho_bt + delta_bt))
    try:
        sv = sandwich_variance(quad, result.beta_hat, coords, d2)
    except RankError:
        return None
    se = np.full(scheme.n_coef, np.nan)
    se[coords] = sv.se
    return se
