"""Command-line front end.

Subcommands: fit, tune, variance, simulate, bootstrap, stone-check. All
outputs are machine-readable JSON/CSV with a top-level schema_version; reruns
with the same config and seed produce byte-identical files. Exit codes:
0 success, 1 numerical failure, 2 input error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .criteria import Method, evaluate_criterion
from .exceptions import SchemaError, TunevarError
from .harness import DGPKind, DGPSpec, PipelineConfig, bootstrap, replicate, simulate
from .model import Dataset
from .models import (
    GaussianLikelihoodModel,
    RidgeLinearModel,
    RidgeLogisticModel,
    make_pima_model,
)
from .rng import derive_stream
from .solver import solve_theta, theta_prime
from .tuner import BoundaryStatus, FitResult, tune
from .variance import select_variance

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# Serialization. json's repr-based float output is the shortest exact
# round-trip (<= 17 significant digits); rounding through %.17g keeps the
# emitted bytes pinned to that contract.
# ---------------------------------------------------------------------------

def _jsonify(obj):
    if isinstance(obj, (np.floating, float)):
        return float(f"{float(obj):.17g}")
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (BoundaryStatus, Method, DGPKind)):
        return obj.value
    return obj


def _write_json(path: Path, payload: dict):
    payload = {"schema_version": SCHEMA_VERSION, **_jsonify(payload)}
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{float(v):.17g}" for v in row])


def fit_result_to_dict(fit: FitResult) -> dict:
    return {
        "theta_hat": fit.theta_hat,
        "lambda_hat": fit.lambda_hat,
        "D_hat": fit.D_hat,
        "boundary_status": [s.value for s in fit.boundary_status],
        "criterion": fit.criterion.value,
        "criterion_value": fit.criterion_value,
        "criterion_slope_at_opt": fit.criterion_slope_at_opt,
        "lambda_box": fit.lambda_box,
        "trace": [list(lam) + [val] for lam, val in fit.trace],
        "diagnostics": fit.diagnostics,
    }


def fit_result_from_dict(d: dict) -> FitResult:
    trace = tuple((tuple(row[:-1]), row[-1]) for row in d["trace"])
    return FitResult(
        theta_hat=np.asarray(d["theta_hat"], float),
        lambda_hat=np.asarray(d["lambda_hat"], float),
        D_hat=np.asarray(d["D_hat"], float),
        boundary_status=tuple(BoundaryStatus(s) for s in d["boundary_status"]),
        criterion=Method(d["criterion"]),
        criterion_value=float(d["criterion_value"]),
        criterion_slope_at_opt=np.asarray(d["criterion_slope_at_opt"], float),
        trace=trace,
        lambda_box=np.asarray(d["lambda_box"], float),
        diagnostics=dict(d.get("diagnostics", {})),
    )


def load_fit_json(path) -> FitResult:
    with open(path) as fh:
        d = json.load(fh)
    if d.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {d.get('schema_version')}")
    return fit_result_from_dict(d)


# ---------------------------------------------------------------------------
# Input handling.
# ---------------------------------------------------------------------------

def load_csv(path, response_col: int = 0) -> Dataset:
    """Generic numeric CSV with a header row; errors name the offending line."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty CSV", line=1)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise SchemaError(
                    f"row has {len(row)} fields, header has {len(header)}", line=lineno
                )
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise SchemaError("non-numeric field", line=lineno)
    if not rows:
        raise SchemaError("CSV has a header but no data rows", line=2)
    return Dataset(np.asarray(rows, float), response_col=response_col)


def build_model(args, data: Dataset):
    """(ModelSpec, LossSpec) from the CLI model selector and a dataset."""
    lam_box = (args.lambda_min, args.lambda_max)
    if args.model == "ridge-linear":
        m = RidgeLinearModel(
            n_covariates=data.d - 1, response_col=args.response_col,
            lambda_domain=lam_box,
        )
        return m.spec(), m.squared_error_loss()
    if args.model == "ridge-logistic":
        m = RidgeLogisticModel(
            n_covariates=data.d - 1, response_col=args.response_col,
            lambda_domain=lam_box,
        )
        return m.spec(), m.brier_loss()
    if args.model == "gaussian":
        m = GaussianLikelihoodModel(column=args.response_col)
        return m.spec(), m.neg_loglik_loss()
    raise SchemaError(f"unknown model {args.model!r}")


def _load_data_and_model(args):
    if args.model == "pima":
        data, spec, loss = make_pima_model(
            args.data, lambda_domain=(args.lambda_min, args.lambda_max)
        )
        return data, spec, loss
    data = load_csv(args.data, response_col=args.response_col)
    spec, loss = build_model(args, data)
    return data, spec, loss


def _pipeline_config(args, spec, loss) -> PipelineConfig:
    return PipelineConfig(
        model=spec, loss=loss, method=Method(args.criterion),
        grid_size=args.grid_size, split=args.split,
    )


# ---------------------------------------------------------------------------
# Commands.
# ---------------------------------------------------------------------------

def cmd_fit(args, out: Path) -> int:
    data, spec, loss = _load_data_and_model(args)
    lam = np.array([args.lam])
    res = solve_theta(spec, data, lam, spec.theta_init)
    D = theta_prime(spec, data, res)
    cv = evaluate_criterion(
        Method(args.criterion), spec, loss, data, lam,
        solve=res, split=args.split, seed=args.seed,
    )
    _write_json(out / "fit.json", {
        "theta_hat": res.theta_hat,
        "lambda_hat": res.lam,
        "D_hat": D,
        "boundary_status": ["interior"] * spec.q,
        "criterion": args.criterion,
        "criterion_value": cv.value,
        "criterion_slope_at_opt": [0.0] * spec.q,
        "lambda_box": [[args.lambda_min, args.lambda_max]] * spec.q,
        "trace": [list(np.atleast_1d(lam)) + [cv.value]],
        "diagnostics": {
            "iterations": res.iterations,
            "residual_norm": res.residual_norm,
            **cv.diagnostics,
        },
    })
    return 0


def cmd_tune(args, out: Path) -> int:
    data, spec, loss = _load_data_and_model(args)
    fit = tune(
        spec, loss, data, Method(args.criterion),
        grid_size=args.grid_size, seed=args.seed, split=args.split,
    )
    _write_json(out / "fit.json", fit_result_to_dict(fit))
    _write_csv(
        out / "trace.csv",
        [f"lambda_{j + 1}" for j in range(spec.q)] + ["value"],
        [list(lam) + [val] for lam, val in fit.trace],
    )
    return 0


def cmd_variance(args, out: Path) -> int:
    data, spec, loss = _load_data_and_model(args)
    if args.fit:
        fit = load_fit_json(args.fit)
    else:
        fit = tune(
            spec, loss, data, Method(args.criterion),
            grid_size=args.grid_size, seed=args.seed, split=args.split,
        )
        _write_json(out / "fit.json", fit_result_to_dict(fit))
    report = select_variance(spec, loss, data, fit, z1_method=args.z1_method)
    _write_json(out / "variance.json", {
        "V1": report.V1,
        "V2": report.V2,
        "selected": report.selected,
        "standard_errors": report.standard_errors,
        "boundary_status": [s.value for s in report.boundary_status],
        "nondegenerate_boundary": bool(report.nondegenerate_boundary),
        "J_hat": report.components.J_hat,
        "K_hat": report.components.K_hat,
    })
    return 0


def _dgp_from_args(args) -> DGPSpec:
    if args.dgp == "gaussmix":
        return DGPSpec(DGPKind.GAUSSMIX_C, n=args.n, params={"C": args.C})
    if args.dgp == "linear":
        return DGPSpec(
            DGPKind.LINEAR_GAUSSIAN, n=args.n,
            params={"beta": tuple(args.beta), "sigma": args.sigma,
                    "coef_sq": args.coef_sq},
        )
    if args.dgp == "logistic":
        return DGPSpec(DGPKind.LOGISTIC_TRUE, n=args.n, params={"beta": tuple(args.beta)})
    raise SchemaError(f"unknown dgp {args.dgp!r}")


def _dgp_model(args, dgp: DGPSpec):
    lam_box = (args.lambda_min, args.lambda_max)
    if dgp.kind is DGPKind.GAUSSMIX_C:
        m = RidgeLogisticModel(n_covariates=2, response_col=0, lambda_domain=lam_box)
        # tuning criterion scores a sub-model prediction using x_1 only
        return m.spec(), m.brier_loss(predictor_covariates=[0])
    if dgp.kind is DGPKind.LINEAR_GAUSSIAN:
        m = RidgeLinearModel(
            n_covariates=len(args.beta) - 1, response_col=0, lambda_domain=lam_box
        )
        return m.spec(), m.squared_error_loss()
    m = RidgeLogisticModel(
        n_covariates=len(args.beta) - 1, response_col=0, lambda_domain=lam_box
    )
    return m.spec(), m.brier_loss()


def _write_summary(out: Path, summary, extra=None) -> None:
    err1, err2 = summary.abs_errors()
    _write_json(out / "summary.json", {
        "n": summary.n,
        "requested": summary.requested,
        "completed": len(summary.theta_draws),
        "failure_indices": list(summary.failure_indices),
        "boundary_count": summary.boundary_count,
        "empirical_variance": summary.empirical_variance,
        "mean_V1": summary.mean_V1,
        "mean_V2": summary.mean_V2,
        "abs_error_V1": err1,
        "abs_error_V2": err2,
        **(extra or {}),
    })
    q = summary.lambda_draws.shape[1]
    p = summary.theta_draws.shape[1]
    _write_csv(
        out / "draws.csv",
        [f"lambda_{j + 1}" for j in range(q)] + [f"theta_{k + 1}" for k in range(p)],
        np.column_stack([summary.lambda_draws, summary.theta_draws]),
    )


def cmd_simulate(args, out: Path) -> int:
    dgp = _dgp_from_args(args)
    spec, loss = _dgp_model(args, dgp)
    config = _pipeline_config(args, spec, loss)
    summary = replicate(dgp, config, B=args.B, seed=args.seed)
    _write_summary(out, summary, extra={"dgp": args.dgp, "C": getattr(args, "C", 0.0)})
    return 0


def cmd_bootstrap(args, out: Path) -> int:
    data, spec, loss = _load_data_and_model(args)
    config = _pipeline_config(args, spec, loss)
    summary = bootstrap(data, config, B=args.B, seed=args.seed)
    _write_summary(out, summary)
    return 0


def cmd_stone_check(args, out: Path) -> int:
    """Scaled gap n * |CV_exact - trace-corrected TE| on a grid of sample sizes."""
    from .criteria import loocv_exact, te_trace_corrected

    rows = []
    medians = {}
    lam = np.array([args.lam])
    for n in args.n_list:
        gaps = []
        for r in range(args.reps):
            dgp = DGPSpec(
                DGPKind.LINEAR_GAUSSIAN, n=n,
                params={"beta": tuple(args.beta), "sigma": args.sigma,
                        "coef_sq": args.coef_sq},
            )
            data = simulate(dgp, seed=derive_stream(args.seed, 1000 * n + r))
            m = RidgeLinearModel(
                n_covariates=len(args.beta) - 1, response_col=0,
                lambda_domain=(args.lambda_min, args.lambda_max),
            )
            spec, loss = m.spec(), m.squared_error_loss()
            cv = loocv_exact(spec, loss, data, lam)
            tc = te_trace_corrected(spec, loss, data, lam)
            gap = n * abs(cv.value - tc.value)
            gaps.append(gap)
            rows.append((n, r, gap))
        medians[str(n)] = float(np.median(gaps))
    _write_json(out / "summary.json", {
        "lambda": args.lam, "reps": args.reps, "scaled_gap_median_by_n": medians,
    })
    _write_csv(out / "draws.csv", ["n", "rep", "scaled_gap"], rows)
    return 0


# ---------------------------------------------------------------------------
# Argument parsing.
# ---------------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--criterion", default="cv",
                   choices=[m.value for m in Method])
    p.add_argument("--grid-size", type=int, default=20, dest="grid_size")
    p.add_argument("--lambda-min", type=float, default=0.0, dest="lambda_min")
    p.add_argument("--lambda-max", type=float, default=1.0, dest="lambda_max")
    p.add_argument("--split", type=float, default=0.5)
    p.add_argument("--threads", type=int, default=1,
                   help="worker cap (current implementation is single-threaded)")


def _add_data_model(p):
    p.add_argument("--data", required=True, help="input CSV (header row)")
    p.add_argument("--model", default="ridge-linear",
                   choices=["ridge-linear", "ridge-logistic", "gaussian", "pima"])
    p.add_argument("--response-col", type=int, default=0, dest="response_col")


def _add_dgp(p):
    p.add_argument("--dgp", default="linear", choices=["gaussmix", "linear", "logistic"])
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--C", type=float, default=0.0)
    p.add_argument("--beta", type=float, nargs="+", default=[1.0, 1.0])
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--coef-sq", type=float, default=0.0, dest="coef_sq")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="tunevar",
        description="Tuning-aware inference for Z-estimators with tuned hyperparameters",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="solve the estimating equation at a fixed lambda")
    _add_common(p)
    _add_data_model(p)
    p.add_argument("--lam", type=float, default=0.0)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("tune", help="minimize a risk criterion over the tuning box")
    _add_common(p)
    _add_data_model(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("variance", help="tuning-aware and pointwise variance report")
    _add_common(p)
    _add_data_model(p)
    p.add_argument("--fit", default=None, help="reuse a previously written fit.json")
    p.add_argument("--z1-method", default="profile", choices=["profile", "chain"],
                   dest="z1_method")
    p.set_defaults(func=cmd_variance)

    p = sub.add_parser("simulate", help="Monte Carlo replication study")
    _add_common(p)
    _add_dgp(p)
    p.add_argument("--B", type=int, default=100)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bootstrap", help="nonparametric bootstrap of the tuned fit")
    _add_common(p)
    _add_data_model(p)
    p.add_argument("--B", type=int, default=200)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("stone-check",
                       help="scaled CV-vs-corrected-TE gap across sample sizes")
    _add_common(p)
    p.add_argument("--n-list", type=int, nargs="+", default=[200, 800], dest="n_list")
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--lam", type=float, default=0.1)
    p.add_argument("--beta", type=float, nargs="+", default=[1.0, 1.0])
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--coef-sq", type=float, default=0.0, dest="coef_sq")
    p.set_defaults(func=cmd_stone_check)

    return ap


def _error_payload(exc: Exception, kind: str) -> str:
    payload = {"schema_version": SCHEMA_VERSION,
               "error": {"type": type(exc).__name__, "kind": kind, "message": str(exc)}}
    if isinstance(exc, SchemaError) and exc.line is not None:
        payload["error"]["line"] = exc.line
    return json.dumps(payload, sort_keys=True)


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        return args.func(args, out)
    except (SchemaError, FileNotFoundError, ValueError) as exc:
        sys.stderr.write(_error_payload(exc, "input") + "\n")
        return 2
    except TunevarError as exc:
        sys.stderr.write(_error_payload(exc, "numerical") + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
