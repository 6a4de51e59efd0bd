"""Command-line interface: fit / predict / spectrum / simulate / boston.

Exit codes: 0 success, 2 input or schema problem, 3 numerical failure or
refused divergence.  All file outputs are CSV (comma, header row) or JSON;
report-style subcommands also render figures next to the delimited output.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .data import Dataset, load_dataset, read_table
from .diagnostics import spectrum_report
from .engine import (
    DEFAULT_GRID_MAX,
    KernelBase,
    TpsBase,
    fit_ibr,
    smoother_from_description,
)
from .exceptions import (
    CalibrationError,
    ExtrapolationError,
    InputError,
    SmootherError,
)
from .harness import (
    SimConfig,
    boston_study,
    load_boston,
    resolve_threads,
    run_simulation,
    sim_function,
)
from .kernels import KERNEL_FUNCTIONS, build_kernel_smoother, default_bandwidths

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3

MODEL_FORMAT = "ibrsmooth-fit"
MODEL_VERSION = 1


def _jsonable(obj):
    """Make numpy scalars/arrays and non-finite floats JSON-safe."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def _write_json(payload: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(payload), fh, indent=2)
        fh.write("\n")


def _path_dict(path) -> dict:
    return {
        "k": path.ks,
        "df": path.df,
        "sigma2": path.sigma2,
        "gcv": path.gcv,
        "bias_norm": path.bias_norm,
        "valid": path.valid,
    }


def cmd_fit(args) -> int:
    data = load_dataset(args.data, args.response)
    if args.base == "kernel":
        base = KernelBase(family=args.kernel, df_per_var=args.df_per_var)
    else:
        base = TpsBase(nu0=args.nu0, df_mult=args.df_mult)
    fit = fit_ibr(data, base, allow_nonpd=args.allow_nonpd, grid_max=args.grid_max)
    if not args.no_extend and any("grid boundary" in n for n in fit.notes):
        print(
            f"GCV minimum at the grid boundary (k = {fit.k_hat}); "
            "extending the grid once by x10",
            file=sys.stderr,
        )
        fit = fit_ibr(
            data, base, allow_nonpd=args.allow_nonpd, grid_max=args.grid_max * 10
        )
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "response": args.response,
        "covariates": list(data.column_names),
        "n": data.n,
        "d": data.d,
        "base": fit.base,
        "k_hat": fit.k_hat,
        "df_hat": fit.df_hat,
        "beta": fit.beta,
        "fitted": fit.fitted,
        "path": _path_dict(fit.path),
        "notes": list(fit.notes),
    }
    _write_json(payload, args.out)
    if args.plot:
        from .figures import gcv_path_figure

        gcv_path_figure(fit, args.plot)
    print(f"fit written to {args.out}: k_hat={fit.k_hat}, df={fit.df_hat:.2f}")
    return EXIT_OK


def cmd_predict(args) -> int:
    with open(args.model, encoding="utf-8") as fh:
        model = json.load(fh)
    if model.get("format") != MODEL_FORMAT:
        raise InputError(f"{args.model} is not a fit file")
    data = load_dataset(args.data, model["response"])
    if data.d != model["d"]:
        raise InputError(
            f"training data has d={data.d} but the model was fit with d={model['d']}"
        )
    if list(data.column_names) != list(model["covariates"]):
        raise InputError("training-data covariate columns differ from the model's")
    points = read_table(args.points)
    missing = [c for c in model["covariates"] if c not in points.columns]
    if missing:
        raise InputError(f"points file lacks covariate columns {missing}")
    beta = np.asarray(model["beta"], dtype=float)
    smoother = smoother_from_description(data, model["base"])
    out_rows = []
    n_extrapolated = 0
    if len(points) == 0:
        preds = []
    elif model["base"]["type"] == "tps":
        Xnew = points[model["covariates"]].to_numpy(dtype=float)
        c, b = smoother.representer(beta)
        preds = smoother.evaluate(c, b, Xnew)
    else:
        preds = []
        for _, row in points[model["covariates"]].iterrows():
            try:
                w = smoother.weight_vector(row.to_numpy(dtype=float))
                preds.append(float(w @ beta))
            except ExtrapolationError:
                preds.append(np.nan)
                n_extrapolated += 1
    out = points[model["covariates"]].copy()
    out["prediction"] = list(preds) if len(points) else []
    out.to_csv(args.out, index=False)
    if n_extrapolated:
        print(
            f"warning: {n_extrapolated} point(s) outside the kernel support "
            "left empty",
            file=sys.stderr,
        )
    print(f"{len(out)} prediction(s) written to {args.out}")
    return EXIT_OK


def cmd_spectrum(args) -> int:
    df = read_table(args.data)
    if args.response is not None:
        cols = {c.lower(): c for c in df.columns}
        key = args.response.lower()
        if key not in cols:
            raise InputError(f"response column {args.response!r} not found")
        df = df.drop(columns=[cols[key]])
    if len(df) == 0:
        raise InputError("CSV contains a header but no data rows")
    try:
        X = df.to_numpy(dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError(f"non-numeric values in CSV: {exc}") from exc
    data = Dataset(X, np.zeros(X.shape[0]))
    if data.n == 1:
        h = np.ones(data.d)
    else:
        h = default_bandwidths(data, args.kernel, args.df_per_var)
    sm = build_kernel_smoother(data, args.kernel, h)
    report = spectrum_report(sm, search_witness=True)
    print(json.dumps(_jsonable(report.to_dict()), indent=2))
    return EXIT_OK


def cmd_simulate(args) -> int:
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    cfg = SimConfig(
        function=sim_function(args.function),
        n=args.n,
        reps=args.reps,
        noise_ratio=args.noise_ratio,
        seed=args.seed,
        methods=methods,
    )
    threads = resolve_threads(args.threads)
    result = run_simulation(cfg, threads=threads)
    result.to_frame().to_csv(outdir / "mse.csv", index=False)
    _write_json(result.summary(), outdir / "summary.json")
    written = ["mse.csv", "summary.json"]
    if not args.no_figures:
        from .figures import mse_boxplot

        mse_boxplot(result, outdir / "mse_boxplot.png")
        written.append("mse_boxplot.png")
    if args.surface_grid:
        written += _emit_surface_grid(cfg, outdir, args.no_figures)
    for note in result.notes:
        print(f"note: {note}", file=sys.stderr)
    print(f"simulation outputs in {outdir}: " + ", ".join(written))
    return EXIT_OK


def _emit_surface_grid(cfg: SimConfig, outdir: Path, no_figures: bool) -> list:
    """Regular-grid surfaces of the truth, pilot and GCV-stopped fit (d=2)."""
    from .engine import fitted_at_k, predict_many, spectrum_of
    from .harness import generate_sample

    if cfg.function.d != 2:
        print(
            f"note: surface grid needs a bivariate function, "
            f"{cfg.function.name} has d={cfg.function.d}; skipped",
            file=sys.stderr,
        )
        return []
    lo, hi = cfg.function.domain
    ticks = np.linspace(lo, hi, 25)
    gx, gy = np.meshgrid(ticks, ticks, indexing="ij")
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    surfaces = {"truth": cfg.function(grid)}
    fit_method = next((m for m in cfg.methods if m.startswith("ibr")), None)
    if fit_method is not None:
        data = generate_sample(cfg, 0)
        base = KernelBase() if fit_method == "ibr-kernel" else TpsBase()
        fit = fit_ibr(data, base)
        pilot_beta = data.y  # beta_1 = Y: the pilot prediction weights S(x)'Y
        pilot_fit = type(fit)(
            k_hat=1, beta=pilot_beta, fitted=fitted_at_k(spectrum_of(fit.smoother), data.y, 1),
            path=fit.path, base=fit.base, smoother=fit.smoother,
        )
        surfaces["pilot"] = predict_many(pilot_fit, data, grid)
        surfaces[f"selected (k={fit.k_hat})"] = predict_many(fit, data, grid)
    frame = pd.DataFrame({"x1": grid[:, 0], "x2": grid[:, 1]})
    for name, vals in surfaces.items():
        key = name.split(" ")[0]
        frame[key] = vals
    frame.to_csv(outdir / "surface_grid.csv", index=False)
    written = ["surface_grid.csv"]
    if not no_figures:
        from .figures import surface_figure

        surface_figure(grid[:, 0], grid[:, 1], surfaces, outdir / "surface_grid.png")
        written.append("surface_grid.png")
    return written


def cmd_boston(args) -> int:
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    data = load_boston(args.data)
    threads = resolve_threads(args.threads)
    result = boston_study(
        data,
        splits=args.splits,
        seed=args.seed,
        threads=threads,
        log_response=args.log_response,
    )
    frame = pd.DataFrame(
        {
            "split": np.arange(result.mpse.size),
            "mpse": result.mpse,
            "k_hat": result.k_hat,
        }
    )
    frame.to_csv(outdir / "splits.csv", index=False)
    _write_json(result.summary(), outdir / "summary.json")
    written = ["splits.csv", "summary.json"]
    if not args.no_figures:
        from .figures import split_errors_figure

        split_errors_figure(result, outdir / "mpse_splits.png")
        written.append("mpse_splits.png")
    for err in result.errors:
        print(f"warning: {err}", file=sys.stderr)
    print(
        f"split study in {outdir}: mean MPSE = {result.mean_mpse:.3f} "
        f"over {result.mpse.size} splits"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ibrsmooth",
        description=(
            "Multivariate nonparametric regression by iterative bias "
            "reduction with GCV stopping."
        ),
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a smoother to a CSV and write a model JSON")
    p_fit.add_argument("--data", required=True)
    p_fit.add_argument("--response", required=True, help="name of the response column")
    p_fit.add_argument("--base", choices=["kernel", "tps"], default="kernel")
    p_fit.add_argument(
        "--kernel", choices=sorted(KERNEL_FUNCTIONS), default="gaussian"
    )
    p_fit.add_argument("--df-per-var", type=float, default=1.1)
    p_fit.add_argument("--nu0", type=int, default=None)
    p_fit.add_argument("--df-mult", type=float, default=1.5)
    p_fit.add_argument("--grid-max", type=int, default=DEFAULT_GRID_MAX)
    p_fit.add_argument("--allow-nonpd", action="store_true")
    p_fit.add_argument(
        "--no-extend",
        action="store_true",
        help="do not extend the grid when GCV selects its last point",
    )
    p_fit.add_argument("--plot", default=None, help="optional GCV-path figure file")
    p_fit.add_argument("--out", required=True)
    p_fit.set_defaults(func=cmd_fit)

    p_pred = sub.add_parser("predict", help="predict at new points from a model JSON")
    p_pred.add_argument("--model", required=True)
    p_pred.add_argument("--data", required=True, help="the training CSV")
    p_pred.add_argument("--points", required=True)
    p_pred.add_argument("--out", required=True)
    p_pred.set_defaults(func=cmd_predict)

    p_spec = sub.add_parser("spectrum", help="eigenvalue-range report for a kernel family")
    p_spec.add_argument("--data", required=True)
    p_spec.add_argument("--kernel", choices=sorted(KERNEL_FUNCTIONS), required=True)
    p_spec.add_argument("--df-per-var", type=float, default=1.1)
    p_spec.add_argument("--response", default=None, help="optional column to exclude")
    p_spec.set_defaults(func=cmd_spectrum)

    p_sim = sub.add_parser("simulate", help="Monte-Carlo method comparison")
    p_sim.add_argument("--function", required=True)
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--reps", type=int, required=True)
    p_sim.add_argument("--methods", default="ibr-kernel,ibr-tps,tps-gcv")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--noise-ratio", type=float, default=0.1)
    p_sim.add_argument("--threads", type=int, default=None)
    p_sim.add_argument("--surface-grid", action="store_true")
    p_sim.add_argument("--no-figures", action="store_true")
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_bos = sub.add_parser("boston", help="random-split prediction study on housing data")
    p_bos.add_argument("--data", required=True)
    p_bos.add_argument("--splits", type=int, default=30)
    p_bos.add_argument("--seed", type=int, default=0)
    p_bos.add_argument("--threads", type=int, default=None)
    p_bos.add_argument("--log-response", action="store_true")
    p_bos.add_argument("--no-figures", action="store_true")
    p_bos.add_argument("--out", required=True)
    p_bos.set_defaults(func=cmd_boston)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, CalibrationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SmootherError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
