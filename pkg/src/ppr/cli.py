"""Command-line surface: simulate, fit, path, kest, experiment.

Exit codes: 0 success, 1 runtime failure (non-convergence, IO), 2 usage
(missing/unknown verb or flag), 3 missing required flag or invalid flag
value, 4 unparseable number.  Identical flags and seed produce byte
identical output files.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass

import numpy as np

from .errors import PprError
from .experiment import read_config, run_experiment, write_results
from .geom import CovariateField, Window, read_pattern, read_raster, write_pattern
from .penalties import PenaltySpec
from .simulate import (RngSeed, ThomasParams, calibrate_intercept, log_intensity_bound,
                       simulate_poisson, simulate_thomas)
from .solver import FitConfig, fit, fit_unpenalized
from .summaries import ripley_k
from .quadrature import design_matrix

USAGE = """usage: ppr <verb> [--flag value ...]

verbs:
  simulate    draw a point pattern       (--model --covariates --beta --out ...)
  fit         fit one model              (--pattern --covariates --method --penalty --out)
  path        emit a lambda path CSV     (same flags as fit)
  kest        Ripley K estimates         (--pattern --r ... [--rho const|fitted])
  experiment  replication harness        (--config exp.cfg --out results/)

Every verb accepts --seed where randomness exists; --help prints the flag
table of a verb.
"""


class UsageError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class Flag:
    kind: str           # str | int | float | floats | choice
    required: bool = False
    default: object = None
    choices: tuple = ()


_METHODS = ("pl", "wpl", "logit", "wlogit")
_PENALTIES = ("ridge", "lasso", "enet", "al", "aenet", "scad", "mcplus", "none")

_FIT_FLAGS = {
    "--pattern": Flag("str", required=True),
    "--covariates": Flag("str", required=True),
    "--method": Flag("choice", default="pl", choices=_METHODS),
    "--penalty": Flag("choice", default="none", choices=_PENALTIES),
    "--gamma": Flag("float"),
    "--nd": Flag("int"),
    "--r": Flag("float"),
    "--nlambda": Flag("int", default=100),
    "--lambda-min-ratio": Flag("float", default=1e-4),
    "--delta": Flag("float"),
    "--dummy": Flag("choice", default="stratified",
                    choices=("poisson", "binomial", "stratified")),
    "--seed": Flag("int", default=0),
    "--stream": Flag("int", default=0),
    "--out": Flag("str", required=True),
}

VERBS = {
    "simulate": {
        "--model": Flag("choice", required=True, choices=("thomas", "poisson")),
        "--kappa": Flag("float"),
        "--omega": Flag("float"),
        "--beta": Flag("floats", required=True),
        "--covariates": Flag("str", required=True),
        "--mu": Flag("float"),
        "--seed": Flag("int", default=0),
        "--stream": Flag("int", default=0),
        "--out": Flag("str", required=True),
    },
    "fit": dict(_FIT_FLAGS),
    "path": dict(_FIT_FLAGS),
    "kest": {
        "--pattern": Flag("str", required=True),
        "--r": Flag("floats", required=True),
        "--rho": Flag("choice", default="const", choices=("const", "fitted")),
        "--covariates": Flag("str"),
        "--window": Flag("floats"),
        "--out": Flag("str"),
    },
    "experiment": {
        "--config": Flag("str", required=True),
        "--out": Flag("str", required=True),
        "--verbose": Flag("int", default=0),
    },
}


@dataclass(frozen=True)
class Command:
    verb: str
    flags: dict


def _convert(flag: str, spec: Flag, raw: str):
    try:
        if spec.kind == "int":
            return int(raw)
        if spec.kind == "float":
            return float(raw)
        if spec.kind == "floats":
            return tuple(float(tok) for tok in raw.split(",") if tok.strip())
    except ValueError:
        raise UsageError(4, f"flag {flag}: cannot parse number from {raw!r}")
    if spec.kind == "choice":
        if raw not in spec.choices:
            raise UsageError(3, f"flag {flag}: invalid value {raw!r} "
                                f"(choices: {', '.join(spec.choices)})")
        return raw
    return raw


def parse_args(argv) -> Command:
    """Validate argv into a Command; raises UsageError with the exit code."""
    if not argv or argv[0] in ("-h", "--help"):
        raise UsageError(2 if not argv else 0, USAGE)
    verb = argv[0]
    if verb not in VERBS:
        raise UsageError(2, f"unknown verb {verb!r}\n\n{USAGE}")
    table = VERBS[verb]
    if any(a in ("-h", "--help") for a in argv[1:]):
        lines = [f"usage: ppr {verb}"] + [
            f"  {name} <{spec.kind}>{' (required)' if spec.required else ''}"
            for name, spec in table.items()
        ]
        raise UsageError(0, "\n".join(lines))
    flags = {name: spec.default for name, spec in table.items()}
    i = 1
    while i < len(argv):
        name = argv[i]
        if not name.startswith("--") or name not in table:
            raise UsageError(2, f"unknown flag {name!r} for verb {verb!r}")
        if i + 1 >= len(argv):
            raise UsageError(3, f"flag {name}: missing value")
        flags[name] = _convert(name, table[name], argv[i + 1])
        i += 2
    for name, spec in table.items():
        if spec.required and flags[name] is None:
            raise UsageError(3, f"missing required flag {name} for verb {verb!r}")
    return Command(verb, flags)


# ---------------------------------------------------------------------------
# JSON emission with exact 17-significant-digit reals
# ---------------------------------------------------------------------------

def _json(obj) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if np.isnan(x):
            return "null"
        return format(x, ".17g")
    if isinstance(obj, str):
        return '"' + obj.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(obj, dict):
        return "{" + ",".join(f"{_json(str(k))}:{_json(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, np.ndarray):
        return _json(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_json(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj)!r}")


def emit_fit(result, path) -> None:
    """JSON fit artifact; the ``se`` field is omitted when not computed."""
    payload = {
        "lambda_grid": result.lambda_grid,
        "coef_path": result.coef_path,
        "wqbic": result.wqbic,
        "selected_index": result.selected_index,
        "beta_hat": result.beta_hat,
        "support": [int(j) for j in result.support],
    }
    if result.se is not None:
        payload["se"] = result.se
    payload["diagnostics"] = {k: v for k, v in result.diagnostics.items()}
    with open(path, "w") as fh:
        fh.write(_json(payload) + "\n")


def _load_covariates(dir_path) -> list[CovariateField]:
    names = sorted(n for n in os.listdir(dir_path) if n.endswith(".csv"))
    if not names:
        raise PprError(f"no raster .csv files in {dir_path!r}")
    return [read_raster(os.path.join(dir_path, n)) for n in names]


def _fit_config(flags, penalty: PenaltySpec | None) -> FitConfig:
    return FitConfig(
        method=flags["--method"],
        penalty=penalty,
        n_lambda=flags["--nlambda"],
        lambda_min_ratio=flags["--lambda-min-ratio"],
        nd=flags["--nd"],
        r_for_f=flags["--r"],
        delta=flags["--delta"],
        dummy_kind=flags["--dummy"],
    )


def _cmd_simulate(flags) -> int:
    covs = _load_covariates(flags["--covariates"])
    win = covs[0].window
    rng = RngSeed(flags["--seed"], flags["--stream"])
    beta = np.asarray(flags["--beta"], dtype=float)
    if flags["--mu"] is not None:
        # --beta gives slopes only; the intercept is calibrated to the target mean
        covs_std = [c.standardize() for c in covs]
        b0 = calibrate_intercept(beta, covs_std, win, flags["--mu"])
        beta = np.concatenate([[b0], beta])
        covs = covs_std
    if flags["--model"] == "thomas":
        if flags["--kappa"] is None or flags["--omega"] is None:
            raise UsageError(3, "flag --kappa/--omega: required for --model thomas")
        params = ThomasParams(flags["--kappa"], flags["--omega"], beta)
        pattern = simulate_thomas(params, covs, win, rng)
    else:
        def intensity(pts):
            return np.exp(np.clip(design_matrix(covs, pts) @ beta, -700, 700))
        bound = float(np.exp(log_intensity_bound(beta, covs)))
        pattern = simulate_poisson(intensity, bound, win, rng)
    write_pattern(pattern, flags["--out"])
    print(f"wrote {len(pattern)} points to {flags['--out']}")
    return 0


def _cmd_fit(flags, emit_path_csv: bool) -> int:
    covs = _load_covariates(flags["--covariates"])
    pattern = read_pattern(flags["--pattern"], covs[0].window)
    pen = None if flags["--penalty"] == "none" \
        else PenaltySpec(flags["--penalty"], gamma=flags["--gamma"])
    config = _fit_config(flags, pen)
    result = fit(pattern, covs, config, RngSeed(flags["--seed"], flags["--stream"]))
    if emit_path_csv:
        p = result.coef_path.shape[1] - 1
        with open(flags["--out"], "w") as fh:
            fh.write("lambda,wqbic," + ",".join(f"beta{j}" for j in range(p + 1)) + "\n")
            for k in range(result.lambda_grid.size):
                coefs = ",".join(format(c, ".17g") for c in result.coef_path[k])
                fh.write(f"{result.lambda_grid[k]:.17g},{result.wqbic[k]:.17g},{coefs}\n")
    else:
        emit_fit(result, flags["--out"])
    sel = result.lambda_grid[result.selected_index]
    print(f"selected lambda={sel:.6g} support={list(result.support)} -> {flags['--out']}")
    return 0


def _cmd_kest(flags) -> int:
    if flags["--window"] is not None:
        if len(flags["--window"]) != 4:
            raise UsageError(3, "flag --window: expected x_min,x_max,y_min,y_max")
        win = Window(*flags["--window"])
        covs = _load_covariates(flags["--covariates"]) if flags["--covariates"] else []
    elif flags["--covariates"] is not None:
        covs = _load_covariates(flags["--covariates"])
        win = covs[0].window
    else:
        raise UsageError(3, "flag --window: required when --covariates is absent")
    pattern = read_pattern(flags["--pattern"], win)
    if flags["--rho"] == "const":
        rho_bar = len(pattern) / win.area
        rho_fn = lambda pts: np.full(pts.shape[0], rho_bar)
    else:
        if not covs:
            raise UsageError(3, "flag --covariates: required for --rho fitted")
        covs = [c.standardize() for c in covs]
        from .quadrature import build_berman_turner, default_nd
        res = fit_unpenalized(build_berman_turner(pattern, covs, default_nd(pattern)))
        beta = res.beta_hat
        rho_fn = lambda pts: np.exp(np.clip(design_matrix(covs, pts) @ beta, -700, 700))
    lines = ["r,khat,pi_r2"]
    for r in flags["--r"]:
        k = ripley_k(pattern, rho_fn, r)
        lines.append(f"{r:.17g},{k:.17g},{np.pi * r * r:.17g}")
    text = "\n".join(lines) + "\n"
    if flags["--out"]:
        with open(flags["--out"], "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_experiment(flags) -> int:
    spec = read_config(flags["--config"])
    table, runs = run_experiment(spec, verbose=bool(flags["--verbose"]))
    write_results(table, runs, flags["--out"])
    print(f"wrote selection.csv, prediction.csv, runs.csv to {flags['--out']}")
    return 0


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cmd = parse_args(argv)
    except UsageError as err:
        stream = sys.stdout if err.code == 0 else sys.stderr
        print(err, file=stream)
        return err.code
    try:
        if cmd.verb == "simulate":
            return _cmd_simulate(cmd.flags)
        if cmd.verb == "fit":
            return _cmd_fit(cmd.flags, emit_path_csv=False)
        if cmd.verb == "path":
            return _cmd_fit(cmd.flags, emit_path_csv=True)
        if cmd.verb == "kest":
            return _cmd_kest(cmd.flags)
        return _cmd_experiment(cmd.flags)
    except UsageError as err:
        print(err, file=sys.stderr)
        return err.code
    except (PprError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
