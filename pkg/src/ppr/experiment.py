"""Replication harness: selection/prediction metrics over simulated designs.

Each replication draws its own covariate noise and Thomas pattern from a
dedicated stream, fits every (method, penalty) combination, and aggregates
TPR/FPR/PPV and Bias/SD/RMSE.  Replications are embarrassingly parallel;
results are aggregated in replication order so output is deterministic.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from .errors import ConfigurationError, PprError
from .geom import Window
from .penalties import PenaltySpec
from .simulate import (RngSeed, ThomasParams, calibrate_intercept,
                       gen_scenario_covariates, simulate_thomas, synthetic_terrain)
from .solver import FitConfig, fit

__all__ = [
    "DOMAIN",
    "TRUE_SLOPES",
    "ExperimentSpec",
    "MetricRow",
    "MetricTable",
    "selection_metrics",
    "prediction_metrics",
    "run_experiment",
    "default_terrain",
    "erosion_margin",
    "read_config",
    "write_results",
]

DOMAIN = Window(0.0, 1000.0, 0.0, 500.0)
TRUE_SLOPES = (2.0, 0.75)   # elevation and gradient effects; all others zero
TERRAIN_SEED = 190783       # frozen so the stand-in rasters are a stable fixture
PENALTY_NAMES = ("ridge", "lasso", "enet", "al", "aenet", "scad", "mcplus",
                 "none", "oracle")


@dataclass(frozen=True)
class ExperimentSpec:
    """One simulation design: scenario, interaction level, and fit matrix."""

    scenario: int = 1
    kappa: float = 5e-4
    mu: float = 1600.0          # 400 selects the eroded quarter-area window
    methods: tuple = ("pl",)
    penalties: tuple = ("al",)
    n_reps: int = 100
    seed: int = 0
    nd: int | None = None
    r_for_f: float | None = None
    omega: float = 20.0
    aux_dir: str | None = None  # directory of base rasters; synthetic when absent

    def __post_init__(self):
        if self.n_reps < 1:
            raise ConfigurationError("n_reps must be >= 1")
        if self.mu not in (400.0, 1600.0):
            raise ConfigurationError(f"mu must be 400 or 1600, got {self.mu}")
        for m in self.methods:
            if m not in ("pl", "wpl", "logit", "wlogit"):
                raise ConfigurationError(f"unknown method {m!r}")
        for p in self.penalties:
            if p not in PENALTY_NAMES:
                raise ConfigurationError(f"unknown penalty {p!r}")


@dataclass(frozen=True)
class MetricRow:
    method: str
    penalty: str
    tpr: float
    fpr: float
    ppv: float
    bias: float
    sd: float
    rmse: float
    failures: int


@dataclass(frozen=True)
class MetricTable:
    rows: tuple
    n_reps: int


def selection_metrics(support_hat, true_support, p: int) -> tuple[float, float, float]:
    """(TPR, FPR, PPV) in percent; PPV of an empty selection is 0."""
    s_hat = set(int(j) for j in support_hat)
    s_true = set(int(j) for j in true_support)
    if not s_true or not s_true <= set(range(1, p + 1)):
        raise ConfigurationError("true_support must be a nonempty subset of 1..p")
    tpr = 100.0 * len(s_hat & s_true) / len(s_true)
    fpr = 100.0 * len(s_hat - s_true) / (p - len(s_true)) if p > len(s_true) else 0.0
    ppv = 100.0 * len(s_hat & s_true) / len(s_hat) if s_hat else 0.0
    return tpr, fpr, ppv


def prediction_metrics(estimates: np.ndarray, beta_true) -> tuple[float, float, float]:
    """(Bias, SD, RMSE) aggregated over coefficients.

    SD uses the population (1/n) variance so RMSE^2 = Bias^2 + SD^2 exactly.
    """
    est = np.asarray(estimates, dtype=float)
    if est.ndim != 2 or est.shape[0] < 2:
        raise ConfigurationError("estimates must be an (n_reps >= 2) x p matrix")
    beta = np.asarray(beta_true, dtype=float)
    mean = est.mean(axis=0)
    bias = float(np.sqrt(((mean - beta) ** 2).sum()))
    sd = float(np.sqrt(est.var(axis=0, ddof=0).sum()))
    rmse = float(np.sqrt(((est - beta) ** 2).mean(axis=0).sum()))
    return bias, sd, rmse


def erosion_margin(win: Window, area_ratio: float) -> float:
    """Margin r with area(erode(win, r)) = area_ratio * area(win)."""
    lx, ly = win.side_x, win.side_y
    target = area_ratio * win.area
    disc = (lx + ly) ** 2 - 4.0 * (lx * ly - target)
    return ((lx + ly) - np.sqrt(disc)) / 4.0


def default_terrain(win: Window = DOMAIN):
    """The frozen synthetic elevation/gradient rasters used by the harness."""
    return synthetic_terrain(win, RngSeed(TERRAIN_SEED))


def _penalty_spec(name: str, gamma: float | None = None) -> PenaltySpec | None:
    if name in ("none", "oracle"):
        return None
    return PenaltySpec(name, gamma=gamma)


def _run_rep(spec: ExperimentSpec, aux, rep: int):
    """Simulate one replication and fit every (method, penalty) cell."""
    rng = RngSeed(spec.seed, rep)
    covs = gen_scenario_covariates(spec.scenario, rng.child(0), aux_rasters=aux)
    p = len(covs)
    slopes = np.zeros(p)
    slopes[0], slopes[1] = TRUE_SLOPES
    beta0 = calibrate_intercept(slopes, covs, DOMAIN, 1600.0)
    params = ThomasParams(spec.kappa, spec.omega, np.concatenate([[beta0], slopes]))
    pattern = simulate_thomas(params, covs, DOMAIN, rng.child(1))
    if spec.mu == 400.0:
        pattern = pattern.subset(DOMAIN.erode(erosion_margin(DOMAIN, 0.25)))

    out = {}
    for method in spec.methods:
        for pen_name in spec.penalties:
            fit_covs = covs[:2] if pen_name == "oracle" else covs
            config = FitConfig(
                method=method,
                penalty=_penalty_spec(pen_name),
                nd=spec.nd,
                r_for_f=spec.r_for_f,
                standardize=False,  # scenario covariates are already standardized
                compute_se=False,
            )
            try:
                res = fit(pattern, fit_covs, config, rng)
                coefs = np.zeros(p)
                if pen_name == "oracle":
                    coefs[:2] = res.beta_hat[1:3]
                    support = (1, 2)
                else:
                    coefs = res.beta_hat[1:].copy()
                    support = tuple(int(j) for j in res.support)
                out[(method, pen_name)] = (True, support, coefs)
            except PprError:
                out[(method, pen_name)] = (False, (), np.zeros(p))
    return len(pattern), out


def _n_jobs() -> int:
    env = os.environ.get("PPR_THREADS", "").strip()
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_experiment(spec: ExperimentSpec, aux=None, verbose: bool = False):
    """Run all replications and aggregate a MetricTable.

    Failed fits are excluded from the aggregates; their count is reported
    per cell.  Returns (table, runs) where runs holds the raw per-rep
    records for runs.csv.
    """
    if aux is None and spec.aux_dir is not None:
        from .geom import read_raster
        names = sorted(n for n in os.listdir(spec.aux_dir) if n.endswith(".csv"))
        aux = [read_raster(os.path.join(spec.aux_dir, n)) for n in names]
    if aux is None and spec.scenario in (1, 2):
        aux = list(default_terrain())
    if aux is None and spec.scenario == 3:
        raise ConfigurationError("scenario 3 needs aux rasters (set aux_dir)")
    reps = Parallel(n_jobs=_n_jobs())(
        delayed(_run_rep)(spec, aux, r) for r in range(spec.n_reps)
    )
    p = 15 if spec.scenario == 3 else 20
    true_support = (1, 2)
    beta_true = np.zeros(p)
    beta_true[0], beta_true[1] = TRUE_SLOPES

    rows = []
    runs = []
    for method in spec.methods:
        for pen_name in spec.penalties:
            sel = []
            est = []
            failures = 0
            for rep, (count, cells) in enumerate(reps):
                ok, support, coefs = cells[(method, pen_name)]
                runs.append((rep, method, pen_name, ok, count, support, coefs))
                if not ok:
                    failures += 1
                    continue
                sel.append(selection_metrics(support, true_support, p))
                est.append(coefs)
            if sel:
                tpr, fpr, ppv = (float(np.mean([s[i] for s in sel])) for i in range(3))
            else:
                tpr = fpr = ppv = float("nan")
            if len(est) >= 2:
                bias, sd, rmse = prediction_metrics(np.array(est), beta_true)
            else:
                bias = sd = rmse = float("nan")
            rows.append(MetricRow(method, pen_name, tpr, fpr, ppv, bias, sd, rmse, failures))
            if verbose:
                print(f"{method}+{pen_name}: TPR={tpr:.1f} FPR={fpr:.1f} PPV={ppv:.1f} "
                      f"Bias={bias:.3f} SD={sd:.3f} RMSE={rmse:.3f} failures={failures}")
    return MetricTable(tuple(rows), spec.n_reps), runs


# ---------------------------------------------------------------------------
# Config file and result files
# ---------------------------------------------------------------------------

_INT_KEYS = {"scenario", "n_reps", "seed", "nd"}
_FLOAT_KEYS = {"kappa", "mu", "r_for_f", "omega"}
_LIST_KEYS = {"methods", "penalties"}


def read_config(path) -> ExperimentSpec:
    """Flat ``key = value`` text file; lists are comma separated."""
    kwargs = {}
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{line_no}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key in _INT_KEYS:
                kwargs[key] = int(value)
            elif key in _FLOAT_KEYS:
                kwargs[key] = float(value)
            elif key in _LIST_KEYS:
                kwargs[key] = tuple(tok.strip() for tok in value.split(",") if tok.strip())
            elif key == "aux_dir":
                kwargs[key] = value
            else:
                raise ConfigurationError(f"{path}:{line_no}: unknown key {key!r}")
    return ExperimentSpec(**kwargs)


def write_results(table: MetricTable, runs, out_dir) -> None:
    """selection.csv, prediction.csv, and raw per-rep runs.csv."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "selection.csv"), "w") as fh:
        fh.write("method,penalty,TPR,FPR,PPV,failures\n")
        for r in table.rows:
            fh.write(f"{r.method},{r.penalty},{r.tpr:.10g},{r.fpr:.10g},"
                     f"{r.ppv:.10g},{r.failures}\n")
    with open(os.path.join(out_dir, "prediction.csv"), "w") as fh:
        fh.write("method,penalty,Bias,SD,RMSE\n")
        for r in table.rows:
            fh.write(f"{r.method},{r.penalty},{r.bias:.10g},{r.sd:.10g},{r.rmse:.10g}\n")
    with open(os.path.join(out_dir, "runs.csv"), "w") as fh:
        fh.write("rep,method,penalty,ok,n_points,support,coefs\n")
        for rep, method, pen, ok, count, support, coefs in runs:
            sup = "|".join(str(j) for j in support)
            cof = "|".join(f"{c:.10g}" for c in coefs)
            fh.write(f"{rep},{method},{pen},{int(ok)},{count},{sup},{cof}\n")
