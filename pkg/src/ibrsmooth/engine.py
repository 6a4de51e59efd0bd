"""The iterative bias-reduction engine.

Starting from a deliberately oversmoothed pilot fit m1 = S y, each step
smooths the current residuals to estimate the remaining bias and subtracts
it, giving m_k = [I - (I - S)^k] y.  Everything the path needs (fits, bias
vectors, effective df) is a function of the base smoother's spectrum, so a
single eigendecomposition covers every iteration count; the number of
iterations is then chosen by generalized cross-validation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .exceptions import (
    BoundaryWarning,
    DivergenceError,
    DivergenceWarning,
    InputError,
    SmootherError,
    UndefinedScoreError,
)
from .kernels import (
    POSITIVE_DEFINITE_FAMILIES,
    KernelSmoother,
    build_kernel_smoother,
    default_bandwidths,
)
from .tps import TpsSmoother, TpsSpec, build_tps_smoother, default_nu0, lambda_for_df, null_space_dim

SPECTRUM_TOL = 1e-8
LAMBDA_EPS = 1e-12
# Iterations cost nothing extra along the spectral path, and smooth pilots in
# low dimension place the GCV minimum well beyond 1e5 steps.
DEFAULT_GRID_MAX = 10_000_000


@dataclass(frozen=True)
class BaseSpectrum:
    """Spectral data of a base smoother: S = D^{1/2} P diag(l) P' D^{-1/2}.

    `d_row` holds the diagonal of D (all ones when S is symmetric, as for
    thin-plate smoothers).
    """

    lambdas: np.ndarray
    P: np.ndarray
    d_row: np.ndarray

    @property
    def n(self) -> int:
        return self.lambdas.size

    def validate(self, strict: bool = True) -> list[str]:
        """Check the eigenvalue range; refuse a divergent spectrum if strict."""
        notes = []
        lo = float(self.lambdas.min())
        hi = float(self.lambdas.max())
        if hi > 1.0 + SPECTRUM_TOL:
            raise DivergenceError(
                f"spectrum exceeds 1 (max eigenvalue {hi:.3e}); "
                "the smoother is not a contraction on residuals"
            )
        if lo < -SPECTRUM_TOL:
            msg = (
                f"spectrum has negative eigenvalues (min {lo:.3e}); iterated "
                "residual smoothing will behave erratically and eventually diverge"
            )
            if strict:
                raise DivergenceError(msg)
            warnings.warn(msg, DivergenceWarning, stacklevel=2)
            notes.append(msg)
        return notes


def spectrum_of(smoother) -> BaseSpectrum:
    """Extract the BaseSpectrum from a kernel or thin-plate smoother."""
    return BaseSpectrum(
        lambdas=smoother.lambdas, P=smoother.P, d_row=np.asarray(smoother.d_row)
    )


def _decay_factors(lambdas: np.ndarray, k: int) -> np.ndarray:
    """(1 - l)^k, computed as exp(k * log1p(-l)) to avoid drift for small l."""
    out = np.empty_like(lambdas)
    below = lambdas < 1.0
    out[below] = np.exp(k * np.log1p(-lambdas[below]))
    # l >= 1 only as 1 exactly or rounding-level overshoot; powers stay exact
    out[~below] = np.power(1.0 - lambdas[~below], k)
    return out


def _check_k(k) -> int:
    if not float(k).is_integer() or k < 1:
        raise InputError(f"iteration count must be a positive integer, got {k}")
    return int(k)


def _transform(spec: BaseSpectrum, Y: np.ndarray, factors: np.ndarray) -> np.ndarray:
    """Apply D^{1/2} P diag(factors) P' D^{-1/2} to Y."""
    sd = np.sqrt(spec.d_row)
    z = spec.P.T @ (np.asarray(Y, dtype=float).ravel() / sd)
    return sd * (spec.P @ (factors * z))


def fitted_at_k(spec: BaseSpectrum, Y, k: int) -> np.ndarray:
    """Fitted values of the k-times bias-corrected smoother."""
    k = _check_k(k)
    return _transform(spec, Y, 1.0 - _decay_factors(spec.lambdas, k))


def bias_at_k(spec: BaseSpectrum, Y, k: int) -> np.ndarray:
    """Estimated bias -S (I - S)^k Y after k corrections."""
    k = _check_k(k)
    decay = _decay_factors(spec.lambdas, k)
    return _transform(spec, Y, -spec.lambdas * decay)


def beta_at_k(spec: BaseSpectrum, Y, k: int) -> np.ndarray:
    """Coefficients such that m_k = S beta_k and m_k(x) = S(x)' beta_k."""
    k = _check_k(k)
    return _transform(spec, Y, _geometric_factors(spec.lambdas, k))


def _geometric_factors(lam: np.ndarray, k: int) -> np.ndarray:
    """(1 - (1 - l)^k) / l without cancellation, via expm1; k at l -> 0."""
    out = np.full_like(lam, float(k))
    small = np.abs(lam) <= LAMBDA_EPS
    below = (lam < 1.0) & ~small
    out[below] = -np.expm1(k * np.log1p(-lam[below])) / lam[below]
    above = (lam >= 1.0) & ~small
    out[above] = (1.0 - np.power(1.0 - lam[above], k)) / lam[above]
    return out


def iterate_naive(S: np.ndarray, Y, k: int) -> np.ndarray:
    """Reference implementation: k - 1 explicit residual-smoothing steps."""
    k = _check_k(k)
    S = np.asarray(S, dtype=float)
    y = np.asarray(Y, dtype=float).ravel()
    if S.shape[0] != S.shape[1] or S.shape[0] != y.size:
        raise InputError("shape mismatch between S and Y")
    m = S @ y
    for _ in range(k - 1):
        m = m + S @ (y - m)
    return m


def trace_at_k(lambdas: np.ndarray, k: int) -> float:
    """Effective df of the k-step smoother: sum_j [1 - (1 - l_j)^k]."""
    return float(np.sum(1.0 - _decay_factors(lambdas, _check_k(k))))


def gcv_score(rss: float, df: float, n: int) -> float:
    """log(rss/n) - 2 log(1 - df/n); undefined at df >= n or rss = 0."""
    if df >= n:
        raise UndefinedScoreError(f"df = {df} has reached n = {n}")
    if rss <= 0.0:
        raise UndefinedScoreError("zero residual sum of squares")
    return float(np.log(rss / n) - 2.0 * np.log(1.0 - df / n))


def iteration_grid(cap: int) -> list[int]:
    """{1..10} followed by a geometric ladder of ratio 1.2, capped at `cap`."""
    if cap < 1:
        raise InputError(f"grid cap must be >= 1, got {cap}")
    ks = list(range(1, min(10, cap) + 1))
    value = 10.0
    while True:
        value *= 1.2
        k = int(np.ceil(value))
        if k > cap:
            break
        if k != ks[-1]:
            ks.append(k)
    return ks


@dataclass(frozen=True)
class IbrPath:
    """Per-iteration diagnostics along the grid of candidate stopping points."""

    ks: np.ndarray
    df: np.ndarray
    sigma2: np.ndarray
    gcv: np.ndarray
    bias_norm: np.ndarray
    valid: np.ndarray

    def __len__(self) -> int:
        return self.ks.size


def run_path(spec: BaseSpectrum, Y, grid) -> IbrPath:
    """Evaluate df, residual variance, GCV and bias norm at every grid point.

    Grid points where GCV is undefined (or the iteration has blown up past
    floating-point range) are marked invalid rather than aborting the path.
    """
    ks = [int(k) for k in grid]
    if not ks or any(k < 1 for k in ks) or any(b >= a for a, b in zip(ks[1:], ks)):
        raise InputError("grid must be a nonempty increasing sequence of k >= 1")
    y = np.asarray(Y, dtype=float).ravel()
    n = spec.n
    if y.size != n:
        raise InputError(f"Y has length {y.size}, expected {n}")

    sd = np.sqrt(spec.d_row)
    W = spec.P * sd[:, None]
    z = spec.P.T @ (y / sd)

    m = len(ks)
    df = np.full(m, np.nan)
    sigma2 = np.full(m, np.nan)
    gcv = np.full(m, np.nan)
    bias_norm = np.full(m, np.nan)
    valid = np.zeros(m, dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        for i, k in enumerate(ks):
            decay = _decay_factors(spec.lambdas, k)
            df[i] = np.sum(1.0 - decay)
            residual = W @ (decay * z)
            rss = float(residual @ residual)
            bias = W @ (-spec.lambdas * decay * z)
            bias_norm[i] = np.linalg.norm(bias)
            if not (np.isfinite(df[i]) and np.isfinite(rss)):
                continue
            sigma2[i] = rss / n
            try:
                gcv[i] = gcv_score(rss, df[i], n)
            except UndefinedScoreError:
                continue
            valid[i] = True
    return IbrPath(
        ks=np.asarray(ks), df=df, sigma2=sigma2, gcv=gcv,
        bias_norm=bias_norm, valid=valid,
    )


def select_k_gcv(path: IbrPath) -> int:
    """Smallest k attaining the minimum valid GCV score.

    Selecting the last grid point triggers a BoundaryWarning: the grid was
    probably too short and the minimum may lie beyond it.
    """
    if not np.any(path.valid):
        raise SmootherError("no grid point has a defined GCV score")
    scores = np.where(path.valid, path.gcv, np.inf)
    idx = int(np.argmin(scores))
    k_hat = int(path.ks[idx])
    if idx == len(path) - 1 and len(path) > 1:
        warnings.warn(
            f"GCV minimum sits at the end of the grid (k = {k_hat}); "
            "consider extending the grid",
            BoundaryWarning,
            stacklevel=2,
        )
    return k_hat


@dataclass(frozen=True)
class KernelBase:
    """Request for a kernel base smoother.

    Bandwidths are calibrated per variable so the one-dimensional smoother
    on each column has `df_per_var` effective df (slightly more than a
    constant fit: the pilot must oversmooth).  Explicit `bandwidths` skip
    the calibration.
    """

    family: str = "gaussian"
    df_per_var: float = 1.1
    bandwidths: tuple | None = None


@dataclass(frozen=True)
class TpsBase:
    """Request for a thin-plate base smoother.

    The penalty weight is calibrated so the pilot has `df_mult` times the
    polynomial-block dimension as effective df.  Explicit `lambda0` skips
    the calibration; `nu0` defaults to the smallest degree with 2*nu0 > d.
    """

    nu0: int | None = None
    df_mult: float = 1.5
    lambda0: float | None = None


@dataclass(frozen=True)
class IbrFit:
    """A fitted iterative bias-reduction smoother."""

    k_hat: int
    beta: np.ndarray
    fitted: np.ndarray
    path: IbrPath
    base: dict
    smoother: object = field(repr=False, compare=False, default=None)
    notes: tuple = ()

    @property
    def df_hat(self) -> float:
        i = int(np.nonzero(self.path.ks == self.k_hat)[0][0])
        return float(self.path.df[i])


def _build_base(data: Dataset, base, allow_nonpd: bool):
    if isinstance(base, KernelBase):
        if base.family not in POSITIVE_DEFINITE_FAMILIES and not allow_nonpd:
            raise DivergenceError(
                f"the {base.family} kernel is not positive definite, so the "
                "bias-reduction iteration can diverge; pass allow_nonpd=True "
                "(CLI: --allow-nonpd) to run it anyway"
            )
        if base.bandwidths is not None:
            h = np.asarray(base.bandwidths, dtype=float)
        else:
            h = default_bandwidths(data, base.family, base.df_per_var)
        smoother = build_kernel_smoother(data, base.family, h)
        desc = {
            "type": "kernel",
            "family": base.family,
            "df_per_var": base.df_per_var,
            "bandwidths": [float(v) for v in h],
        }
        return smoother, desc
    if isinstance(base, TpsBase):
        nu0 = base.nu0 if base.nu0 is not None else default_nu0(data.d)
        if base.lambda0 is not None:
            lam = float(base.lambda0)
        else:
            target = base.df_mult * null_space_dim(nu0, data.d)
            lam = lambda_for_df(data, nu0, target)
        smoother = build_tps_smoother(data, TpsSpec(nu0=nu0, lambda0=lam, d=data.d))
        desc = {
            "type": "tps",
            "nu0": nu0,
            "df_mult": base.df_mult,
            "lambda0": lam,
        }
        return smoother, desc
    raise InputError(f"unknown base smoother request: {base!r}")


def _grid_cap(smoother, grid_max: int) -> int:
    cap = int(grid_max)
    if isinstance(smoother, TpsSmoother):
        spec = smoother.spec
        cap = min(cap, int(smoother.n ** (2 * spec.nu0 / spec.d)))
    return max(cap, 1)


def fit_ibr(
    data: Dataset,
    base=None,
    grid=None,
    allow_nonpd: bool = False,
    grid_max: int = DEFAULT_GRID_MAX,
) -> IbrFit:
    """Fit the bias-reduction smoother with GCV-selected iteration count."""
    if base is None:
        base = KernelBase()
    smoother, desc = _build_base(data, base, allow_nonpd)
    spec = spectrum_of(smoother)
    notes = list(spec.validate(strict=not allow_nonpd))
    if grid is None:
        grid = iteration_grid(_grid_cap(smoother, grid_max))
    path = run_path(spec, data.y, grid)
    k_hat = select_k_gcv(path)
    if len(path) > 1 and k_hat == int(path.ks[-1]):
        notes.append(f"GCV minimum at grid boundary (k = {k_hat})")
    beta = beta_at_k(spec, data.y, k_hat)
    fitted = fitted_at_k(spec, data.y, k_hat)
    return IbrFit(
        k_hat=k_hat,
        beta=beta,
        fitted=fitted,
        path=path,
        base=desc,
        smoother=smoother,
        notes=tuple(notes),
    )


def smoother_from_description(data: Dataset, base: dict):
    """Rebuild the base smoother of a serialized fit on the training data."""
    kind = base.get("type")
    if kind == "kernel":
        return build_kernel_smoother(
            data, base["family"], np.asarray(base["bandwidths"], dtype=float)
        )
    if kind == "tps":
        return build_tps_smoother(
            data, TpsSpec(nu0=int(base["nu0"]), lambda0=float(base["lambda0"]), d=data.d)
        )
    raise InputError(f"unknown base smoother type {kind!r}")


def predict(fit: IbrFit, data: Dataset, x_new) -> float:
    """Out-of-sample prediction m_k(x) = S(x)' beta_k at a single point."""
    x = np.asarray(x_new, dtype=float).ravel()
    if x.size != data.d:
        raise InputError(f"point has {x.size} coordinates, expected {data.d}")
    if not np.all(np.isfinite(x)):
        raise InputError("prediction point has non-finite coordinates")
    smoother = fit.smoother
    if smoother is None:
        smoother = smoother_from_description(data, fit.base)
    if isinstance(smoother, TpsSmoother):
        c, b = smoother.representer(fit.beta)
        return float(smoother.evaluate(c, b, x[None, :])[0])
    return float(smoother.weight_vector(x) @ fit.beta)


def predict_many(fit: IbrFit, data: Dataset, X_new) -> np.ndarray:
    """Vector of predictions at the rows of X_new.

    Raises ExtrapolationError per point only in the kernel case; callers
    that need row-level recovery should loop over `predict`.
    """
    X_new = np.atleast_2d(np.asarray(X_new, dtype=float))
    smoother = fit.smoother
    if smoother is None:
        smoother = smoother_from_description(data, fit.base)
    if isinstance(smoother, TpsSmoother):
        c, b = smoother.representer(fit.beta)
        return smoother.evaluate(c, b, X_new)
    return np.array([smoother.weight_vector(x) @ fit.beta for x in X_new])
