"""Kernel base smoothers.

A kernel smoother averages responses with weights K(d_h(x, X_j)) where K is a
fixed univariate kernel and d_h the bandwidth-weighted Euclidean distance.
The smoothing matrix S = D * K_gram (D the diagonal of inverse row sums) is
row-stochastic; its spectrum equals the spectrum of the symmetric matrix
A = D^{1/2} K_gram D^{1/2}, which is what gets eigendecomposed here.

Kernel normalizations are fixed once for the whole package:

    gaussian      exp(-u^2 / 2)
    triangular    (1 - u)+
    uniform       0.5 * 1{u <= 1}
    epanechnikov  0.75 * (1 - u^2)+

Constants cancel in the row normalization; they matter only for the Gram
matrix diagnostics (uniform K(0) = 0.5, epanechnikov K(0) = 0.75).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .exceptions import CalibrationError, CalibrationWarning, InputError, NumericalError

EIG_CLAMP_TOL = 1e-10

# Families whose Gram matrices are positive semidefinite for every point
# configuration.  uniform and epanechnikov are not; iterating with them can
# diverge (see diagnostics module).
POSITIVE_DEFINITE_FAMILIES = frozenset({"gaussian", "triangular"})


def _gaussian(u):
    return np.exp(-0.5 * np.square(u))


def _triangular(u):
    return np.maximum(1.0 - u, 0.0)


def _uniform(u):
    return np.where(u <= 1.0, 0.5, 0.0)


def _epanechnikov(u):
    return 0.75 * np.maximum(1.0 - np.square(u), 0.0)


KERNEL_FUNCTIONS = {
    "gaussian": _gaussian,
    "triangular": _triangular,
    "uniform": _uniform,
    "epanechnikov": _epanechnikov,
}


def kernel_function(family: str):
    """Return the weight function for a named kernel family."""
    try:
        return KERNEL_FUNCTIONS[family]
    except KeyError:
        raise InputError(
            f"unknown kernel family {family!r}; choose from "
            f"{sorted(KERNEL_FUNCTIONS)}"
        ) from None


def kernel_eval(family: str, u: float) -> float:
    """Evaluate the kernel weight K(u) at a scalar distance u >= 0."""
    func = kernel_function(family)
    u = float(u)
    if not np.isfinite(u) or u < 0:
        raise InputError(f"distance must be finite and nonnegative, got {u}")
    return float(func(u))


def weighted_distance(x, y, h) -> float:
    """Bandwidth-weighted Euclidean distance sqrt(sum ((x_j-y_j)/h_j)^2)."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    h = np.asarray(h, dtype=float).ravel()
    if not (x.shape == y.shape == h.shape):
        raise InputError(
            f"dimension mismatch: x has {x.size}, y has {y.size}, h has {h.size}"
        )
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(np.isfinite(h))):
        raise InputError("non-finite input to weighted_distance")
    if np.any(h <= 0):
        raise InputError("bandwidths must be strictly positive")
    return float(np.sqrt(np.sum(np.square((x - y) / h))))


def validate_bandwidths(h, d: int) -> np.ndarray:
    h = np.asarray(h, dtype=float).ravel()
    if h.size != d:
        raise InputError(f"expected {d} bandwidths, got {h.size}")
    if not np.all(np.isfinite(h)) or np.any(h <= 0):
        raise InputError("bandwidths must be finite and strictly positive")
    return h


def scaled_distances(X, Z, h) -> np.ndarray:
    """Matrix of weighted distances d_h(X_i, Z_j), shape (len(X), len(Z))."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    h = validate_bandwidths(h, X.shape[1])
    if Z.shape[1] != X.shape[1]:
        raise InputError(f"dimension mismatch: {X.shape[1]} vs {Z.shape[1]}")
    Xs = X / h
    Zs = Z / h
    sq = (
        np.sum(Xs**2, axis=1)[:, None]
        + np.sum(Zs**2, axis=1)[None, :]
        - 2.0 * (Xs @ Zs.T)
    )
    return np.sqrt(np.maximum(sq, 0.0))


def gram_matrix(X, family: str, h) -> np.ndarray:
    """Symmetric Gram matrix of kernel weights at the design points."""
    func = kernel_function(family)
    K = func(scaled_distances(X, X, h))
    # exact symmetry: the distance matrix is symmetric up to rounding only
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, func(0.0))
    return K


def clamp_spectrum(values: np.ndarray, tol: float = EIG_CLAMP_TOL) -> np.ndarray:
    """Snap rounding-level excursions outside [0, 1] back onto the interval.

    Only excursions within `tol` are clamped; anything larger is a genuine
    property of the smoother (the non-positive-definite failure signal) and
    must survive for the diagnostics to see.
    """
    out = values.copy()
    out[(out > 1.0) & (out <= 1.0 + tol)] = 1.0
    out[(out < 0.0) & (out >= -tol)] = 0.0
    return out


@dataclass(frozen=True)
class KernelSmoother:
    """A fitted kernel base smoother.

    Holds the Gram matrix `K`, the inverse row sums `d_row` (the diagonal of
    D), and the spectral decomposition of A = D^{1/2} K D^{1/2}: eigenvalues
    `lambdas` in descending order with orthonormal eigenvector columns `P`.
    The implied smoothing matrix S = D K shares the spectrum of A.
    """

    family: str
    h: np.ndarray
    X: np.ndarray
    K: np.ndarray
    d_row: np.ndarray
    lambdas: np.ndarray
    P: np.ndarray

    @property
    def n(self) -> int:
        return self.K.shape[0]

    def matrix(self) -> np.ndarray:
        """Assemble the dense smoothing matrix S = D K."""
        return self.d_row[:, None] * self.K

    def weight_vector(self, x) -> np.ndarray:
        """Row-stochastic prediction weights S(x) at an arbitrary point."""
        func = kernel_function(self.family)
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.X.shape[1]:
            raise InputError(f"point has {x.size} coordinates, expected {self.X.shape[1]}")
        w = func(scaled_distances(x[None, :], self.X, self.h)[0])
        total = w.sum()
        if total <= 0:
            from .exceptions import ExtrapolationError

            raise ExtrapolationError(
                "query point is outside the support of every kernel weight"
            )
        return w / total


def build_kernel_smoother(data: Dataset, family: str, h) -> KernelSmoother:
    """Construct the kernel smoother and the spectrum of its symmetrization."""
    h = validate_bandwidths(h, data.d)
    K = gram_matrix(data.X, family, h)
    row_sums = K.sum(axis=1)
    if np.any(row_sums <= 0):
        raise NumericalError("a Gram row sum is nonpositive; K(0) must be > 0")
    d_row = 1.0 / row_sums
    sqrt_d = np.sqrt(d_row)
    A = sqrt_d[:, None] * K * sqrt_d[None, :]
    try:
        vals, vecs = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"eigendecomposition failed for n={data.n}, family={family}: {exc}"
        ) from exc
    order = np.argsort(vals)[::-1]
    vals = clamp_spectrum(vals[order])
    vecs = vecs[:, order]
    return KernelSmoother(
        family=family, h=h, X=data.X, K=K, d_row=d_row, lambdas=vals, P=vecs
    )


def trace_1d(x_col, family: str, h: float) -> float:
    """Effective df of the one-dimensional kernel smoother at bandwidth h."""
    x = np.asarray(x_col, dtype=float).ravel()
    diffs = np.abs(x[:, None] - x[None, :])
    return trace_1d_from_diffs(diffs, family, h)


def trace_1d_from_diffs(diffs: np.ndarray, family: str, h: float) -> float:
    func = kernel_function(family)
    W = func(diffs / h)
    k0 = func(0.0)
    return float(np.sum(k0 / W.sum(axis=1)))


_BRACKET_LO = 1e-6
_BRACKET_HI = 1e6
_BRACKET_EXPANSIONS = 5
_DF_TOL = 1e-6


def bandwidth_for_df(x_col, family: str, target_df: float) -> float:
    """Bandwidth making the 1-d smoother trace equal target_df.

    The trace is nonincreasing in h (from n at h -> 0 down to 1 at h -> inf
    for distinct points), so bisection on log h converges.  For the uniform
    kernel the trace is a step function of h; when no h matches within 1e-6
    the bracket midpoint at the jump is returned with a CalibrationWarning.
    """
    x = np.asarray(x_col, dtype=float).ravel()
    n = x.size
    if n < 2:
        raise InputError("need at least two observations to calibrate a bandwidth")
    target = float(target_df)
    if not 1.0 < target < n:
        raise InputError(f"target df must lie in (1, n={n}), got {target}")
    span = float(np.max(x) - np.min(x))
    if span <= 0:
        raise InputError("column has no spread; cannot calibrate a bandwidth")

    diffs = np.abs(x[:, None] - x[None, :])
    trace = lambda h: trace_1d_from_diffs(diffs, family, h)

    lo, hi = _BRACKET_LO * span, _BRACKET_HI * span
    t_lo, t_hi = trace(lo), trace(hi)
    # trace(lo) should sit above the target, trace(hi) below it
    for _ in range(_BRACKET_EXPANSIONS):
        if t_lo >= target:
            break
        lo *= 0.1
        t_lo = trace(lo)
    for _ in range(_BRACKET_EXPANSIONS):
        if t_hi <= target:
            break
        hi *= 10.0
        t_hi = trace(hi)
    if t_lo < target or t_hi > target:
        raise CalibrationError(
            f"df target {target} is outside the attainable trace range "
            f"[{min(t_lo, t_hi):.6g}, {max(t_lo, t_hi):.6g}] for this column "
            "(duplicated values cap the reachable df)"
        )

    log_lo, log_hi = np.log(lo), np.log(hi)
    for _ in range(200):
        mid = np.exp(0.5 * (log_lo + log_hi))
        t_mid = trace(mid)
        if abs(t_mid - target) <= _DF_TOL:
            return float(mid)
        if t_mid > target:
            log_lo = np.log(mid)
        else:
            log_hi = np.log(mid)
        if log_hi - log_lo < 1e-14:
            break
    h = float(np.exp(0.5 * (log_lo + log_hi)))
    achieved = trace(h)
    warnings.warn(
        f"df target {target} matched only to {achieved:.6g} "
        f"(discrete trace jump for the {family} kernel)",
        CalibrationWarning,
        stacklevel=2,
    )
    return h


def default_bandwidths(data: Dataset, family: str, per_var_df: float = 1.1) -> np.ndarray:
    """Per-variable bandwidths, each calibrated to the same 1-d df target."""
    h = np.empty(data.d)
    for j in range(data.d):
        try:
            h[j] = bandwidth_for_df(data.X[:, j], family, per_var_df)
        except CalibrationError as exc:
            raise CalibrationError(f"column {j}: {exc}") from exc
        except InputError as exc:
            raise InputError(f"column {j}: {exc}") from exc
    return h
