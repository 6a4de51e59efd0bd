"""Simulation and benchmark harness.

Monte-Carlo comparison of the bias-reduction smoothers against a single
thin-plate fit with GCV-chosen penalty, plus the housing-data split study.
Replicates are independent (one RNG stream per replicate index) and may run
concurrently; aggregation is always by index, so results do not depend on
the execution order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .data import Dataset, read_table
from .engine import KernelBase, TpsBase, fit_ibr, gcv_score, predict_many
from .exceptions import InputError
from .functions import TestFunction, sim_function, wendelberger_grid
from .tps import TpsSpec, build_tps_smoother, default_nu0, null_space_dim, trace_for_lambda

REFERENCE_METHOD = "ibr-kernel"
DEFAULT_METHODS = ("ibr-kernel", "ibr-tps", "tps-gcv")


def resolve_threads(requested=None) -> int:
    """Thread budget: explicit value, else IBR_THREADS, else machine count."""
    if requested is not None:
        n = int(requested)
    else:
        env = os.environ.get("IBR_THREADS", "").strip()
        n = int(env) if env else (os.cpu_count() or 1)
    if n < 1:
        raise InputError(f"thread count must be >= 1, got {n}")
    return n


def _ordered_map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class SimConfig:
    """One cell of the simulation design."""

    function: TestFunction
    n: int
    reps: int
    noise_ratio: float = 0.1
    seed: int = 0
    methods: tuple = DEFAULT_METHODS

    def __post_init__(self):
        if self.n < 2:
            raise InputError(f"need n >= 2, got {self.n}")
        if self.reps < 1:
            raise InputError(f"need reps >= 1, got {self.reps}")
        if self.noise_ratio < 0:
            raise InputError(f"noise ratio must be >= 0, got {self.noise_ratio}")
        unknown = set(self.methods) - set(DEFAULT_METHODS)
        if unknown:
            raise InputError(f"unknown methods {sorted(unknown)}")


def generate_sample(cfg: SimConfig, rep_index: int) -> Dataset:
    """Draw one replicate: X uniform on the domain, y = m(X) + Gaussian noise.

    The noise level is `noise_ratio` times the sample standard deviation of
    m(X) over the drawn design, so the noise-to-signal ratio is held fixed
    across functions and sample sizes.  Seeding by (seed, rep_index) makes
    replicates independent and individually reproducible.
    """
    rng = np.random.default_rng([cfg.seed, rep_index])
    lo, hi = cfg.function.domain
    X = rng.uniform(lo, hi, size=(cfg.n, cfg.function.d))
    truth = cfg.function(X)
    sigma = cfg.noise_ratio * float(np.std(truth, ddof=1))
    y = truth + rng.normal(0.0, 1.0, size=cfg.n) * sigma
    return Dataset(X, y)


def mse_against_truth(fitted, truth) -> float:
    """Mean squared error against the noiseless regression function."""
    fitted = np.asarray(fitted, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if fitted.size != truth.size:
        raise InputError(
            f"length mismatch: {fitted.size} fitted vs {truth.size} truth"
        )
    return float(np.mean((fitted - truth) ** 2))


def fit_tps_gcv(data: Dataset, nu0: int | None = None, grid_size: int = 30):
    """Single thin-plate fit with penalty chosen by GCV over a df-spanned grid.

    The grid is geometric in lambda0, spanning effective df from M0 + 0.5
    down from min(n - 1, 6 M0); this brackets any sensible single-smoother
    fit without an inner optimizer.
    """
    nu0 = nu0 if nu0 is not None else default_nu0(data.d)
    m0 = null_space_dim(nu0, data.d)
    if m0 >= data.n:
        raise InputError(
            f"thin-plate smoother infeasible: M0 = {m0} >= n = {data.n}"
        )
    sm = build_tps_smoother(data, TpsSpec(nu0=nu0, lambda0=1.0, d=data.d))
    phi = sm.phi
    df_hi = min(data.n - 1, 6 * m0)
    lam_hi = _lambda_for_target(phi, m0, m0 + 0.5)
    lam_lo = _lambda_for_target(phi, m0, df_hi)
    lams = np.geomspace(lam_lo, lam_hi, grid_size)
    z = sm.P.T @ data.y
    n = data.n
    best = None
    for lam in lams:
        vals = np.concatenate([np.ones(m0), (phi / (phi + lam))[::-1]])
        rss = float(np.sum(((1.0 - vals) * z) ** 2))
        df = float(vals.sum())
        try:
            score = gcv_score(rss, df, n)
        except Exception:
            continue
        if best is None or score < best[0]:
            best = (score, lam, vals, df)
    if best is None:
        raise InputError("no penalty value produced a defined GCV score")
    _, lam, vals, df = best
    fitted = sm.P @ (vals * z)
    return fitted, {"lambda0": float(lam), "df": df, "nu0": nu0}


def _lambda_for_target(phi: np.ndarray, m0: int, target: float) -> float:
    lo, hi = 1e-12 * phi.max(), 1e12 * phi.max()
    while trace_for_lambda(phi, m0, lo) < target and lo > 1e-200:
        lo *= 1e-3
    while trace_for_lambda(phi, m0, hi) > target and hi < 1e200:
        hi *= 1e3
    for _ in range(200):
        mid = np.sqrt(lo * hi)
        if trace_for_lambda(phi, m0, mid) > target:
            lo = mid
        else:
            hi = mid
        if hi / lo < 1 + 1e-10:
            break
    return float(np.sqrt(lo * hi))


def _tps_feasible(n: int, d: int) -> bool:
    return null_space_dim(default_nu0(d), d) < n


def _run_method(method: str, data: Dataset, truth: np.ndarray):
    """(mse, k_hat) for one method on one replicate; k_hat None for tps-gcv."""
    if method == "ibr-kernel":
        fit = fit_ibr(data, KernelBase())
        return mse_against_truth(fit.fitted, truth), fit.k_hat
    if method == "ibr-tps":
        fit = fit_ibr(data, TpsBase())
        return mse_against_truth(fit.fitted, truth), fit.k_hat
    if method == "tps-gcv":
        fitted, _ = fit_tps_gcv(data)
        return mse_against_truth(fitted, truth), None
    raise InputError(f"unknown method {method!r}")


@dataclass(frozen=True)
class SimResult:
    """Raw MSE matrix (reps x methods) and aggregates of one simulation cell."""

    config: SimConfig
    methods: tuple
    mse: np.ndarray
    k_hat: dict
    notes: tuple = ()

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.mse, columns=list(self.methods))
        df.insert(0, "rep", np.arange(self.mse.shape[0]))
        return df

    def medians(self) -> dict:
        out = {}
        for j, m in enumerate(self.methods):
            col = self.mse[:, j]
            out[m] = float(np.median(col)) if np.all(np.isfinite(col)) else None
        return out

    def median_ratios(self) -> dict:
        """median(method) / median(ibr-kernel), the cross-method comparison."""
        med = self.medians()
        ref = med.get(REFERENCE_METHOD)
        if ref is None or ref == 0:
            return {m: None for m in self.methods}
        return {
            m: (None if med[m] is None else med[m] / ref) for m in self.methods
        }

    def summary(self) -> dict:
        return {
            "function": self.config.function.name,
            "n": self.config.n,
            "reps": self.config.reps,
            "noise_ratio": self.config.noise_ratio,
            "seed": self.config.seed,
            "methods": list(self.methods),
            "median_mse": self.medians(),
            "median_ratio_vs_ibr-kernel": self.median_ratios(),
            "k_hat": {
                m: ks for m, ks in self.k_hat.items()
            },
            "notes": list(self.notes),
        }


def run_simulation(cfg: SimConfig, threads: int = 1) -> SimResult:
    """Run every replicate of one simulation cell.

    Methods that are infeasible for this (n, d) are recorded as missing
    columns (NaN) with an explanatory note, mirroring empty table cells.
    """
    notes = []
    active = []
    for m in cfg.methods:
        if m in ("ibr-tps", "tps-gcv") and not _tps_feasible(cfg.n, cfg.function.d):
            m0 = null_space_dim(default_nu0(cfg.function.d), cfg.function.d)
            notes.append(
                f"{m} infeasible at n={cfg.n}, d={cfg.function.d} (M0={m0} >= n)"
            )
        else:
            active.append(m)

    def one_rep(r: int):
        data = generate_sample(cfg, r)
        truth = cfg.function(data.X)
        row = np.full(len(cfg.methods), np.nan)
        ks = {}
        for j, m in enumerate(cfg.methods):
            if m not in active:
                continue
            mse, k_hat = _run_method(m, data, truth)
            row[j] = mse
            if k_hat is not None:
                ks[m] = k_hat
        return row, ks

    results = _ordered_map(one_rep, list(range(cfg.reps)), threads)
    mse = np.vstack([row for row, _ in results])
    k_hat = {m: [ks.get(m) for _, ks in results] for m in cfg.methods if m.startswith("ibr")}
    k_hat = {m: v for m, v in k_hat.items() if any(x is not None for x in v)}
    return SimResult(
        config=cfg, methods=tuple(cfg.methods), mse=mse, k_hat=k_hat,
        notes=tuple(notes),
    )


def wendelberger_experiment(
    reps: int = 20,
    seed: int = 0,
    snr: float = 5.0,
    bases: tuple = ("tps", "kernel"),
) -> dict:
    """Grid experiment: pilot versus GCV-stopped fit on the bump surface.

    The design is the fixed 10 x 10 regular grid; only the noise varies
    across replicates, with sd(m)/sigma = snr.  Returns per-replicate MSE of
    the pilot (k = 1) and of the GCV-stopped fit for each base smoother.
    """
    X = wendelberger_grid()
    truth = sim_function("wendelberger")(X)
    sigma = float(np.std(truth, ddof=1)) / snr
    out = {b: {"pilot": [], "selected": [], "k_hat": []} for b in bases}
    for r in range(reps):
        rng = np.random.default_rng([seed, r])
        y = truth + rng.normal(0.0, sigma, size=X.shape[0])
        data = Dataset(X, y)
        for b in bases:
            base = TpsBase(nu0=2) if b == "tps" else KernelBase()
            fit = fit_ibr(data, base)
            spec_pilot_mse = mse_against_truth(
                _pilot_fitted(fit, data), truth
            )
            out[b]["pilot"].append(spec_pilot_mse)
            out[b]["selected"].append(mse_against_truth(fit.fitted, truth))
            out[b]["k_hat"].append(fit.k_hat)
    return out


def _pilot_fitted(fit, data: Dataset) -> np.ndarray:
    from .engine import fitted_at_k, spectrum_of

    return fitted_at_k(spectrum_of(fit.smoother), data.y, 1)


BOSTON_RESPONSE = "medv"
BOSTON_COVARIATES = 13
BOSTON_N = 506
BOSTON_TRAIN = 350


def load_boston(path) -> Dataset:
    """Load the housing CSV: header row, 13 covariate columns plus medv."""
    df = read_table(path)
    if len(df) == 0:
        raise InputError("housing CSV contains a header but no data rows")
    cols = {c.lower(): c for c in df.columns}
    if BOSTON_RESPONSE not in cols:
        raise InputError(
            f"expected a '{BOSTON_RESPONSE}' response column, got {list(df.columns)}"
        )
    covariates = [c for c in df.columns if c != cols[BOSTON_RESPONSE]]
    if len(covariates) != BOSTON_COVARIATES:
        raise InputError(
            f"expected {BOSTON_COVARIATES} covariate columns, found {len(covariates)}"
        )
    try:
        X = df[covariates].to_numpy(dtype=float)
        y = df[cols[BOSTON_RESPONSE]].to_numpy(dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError(f"non-numeric values in housing CSV: {exc}") from exc
    return Dataset(X, y, column_names=tuple(covariates))


@dataclass(frozen=True)
class SplitStudyResult:
    """Per-split test errors and selected iteration counts."""

    mpse: np.ndarray
    k_hat: np.ndarray
    train_size: int
    test_size: int
    seed: int
    log_response: bool = False
    errors: tuple = ()

    @property
    def mean_mpse(self) -> float:
        return float(np.nanmean(self.mpse))

    def summary(self) -> dict:
        finite = self.mpse[np.isfinite(self.mpse)]
        ks = self.k_hat[self.k_hat > 0]
        return {
            "splits": int(self.mpse.size),
            "train_size": self.train_size,
            "test_size": self.test_size,
            "seed": self.seed,
            "log_response": self.log_response,
            "mean_mpse": self.mean_mpse,
            "mpse": [float(v) for v in self.mpse],
            "k_hat": [int(v) for v in self.k_hat],
            "k_hat_median": float(np.median(ks)) if ks.size else None,
            "errors": list(self.errors),
        }


def boston_study(
    data: Dataset,
    splits: int = 30,
    seed: int = 0,
    threads: int = 1,
    log_response: bool = False,
    df_per_var: float = 1.1,
) -> SplitStudyResult:
    """Random 350/156 split study with the gaussian-kernel IBR smoother.

    Per split: fit on the training part (per-variable df calibration, GCV
    stopping), predict the held-out rows, record the mean squared prediction
    error and the selected iteration count.  Per-split failures are recorded
    rather than fatal.
    """
    if data.n != BOSTON_N:
        raise InputError(f"split study expects n = {BOSTON_N}, got {data.n}")
    y = np.log(data.y) if log_response else data.y
    if log_response and not np.all(np.isfinite(y)):
        raise InputError("log response requested but some responses are <= 0")
    test_size = BOSTON_N - BOSTON_TRAIN

    def one_split(s: int):
        rng = np.random.default_rng([seed, s])
        order = rng.permutation(BOSTON_N)
        tr, te = order[:BOSTON_TRAIN], order[BOSTON_TRAIN:]
        try:
            train = Dataset(data.X[tr], y[tr])
            fit = fit_ibr(train, KernelBase(df_per_var=df_per_var))
            pred = predict_many(fit, train, data.X[te])
            mpse = float(np.mean((pred - y[te]) ** 2))
            return mpse, fit.k_hat, None
        except Exception as exc:  # recorded, not fatal
            return np.nan, 0, f"split {s}: {type(exc).__name__}: {exc}"

    results = _ordered_map(one_split, list(range(splits)), threads)
    errors = tuple(msg for _, _, msg in results if msg)
    return SplitStudyResult(
        mpse=np.array([m for m, _, _ in results]),
        k_hat=np.array([k for _, k, _ in results], dtype=int),
        train_size=BOSTON_TRAIN,
        test_size=test_size,
        seed=seed,
        log_response=log_response,
        errors=errors,
    )
