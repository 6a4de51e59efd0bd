"""Thin-plate-spline base smoothers.

The smoother of degree nu0 penalizes the integrated squared partial
derivatives of total order nu0; its hat matrix is symmetric with eigenvalues
in [0, 1] and the leading M0 = C(nu0+d-1, nu0-1) eigenvalues exactly one
(the unpenalized polynomial component of total degree < nu0).

Construction works in the orthogonal complement of the polynomial block:
with T the polynomial design (QR = [Q1 Q2] [R1; 0]) and E the radial Gram
matrix, the smoother eigenvalues are 1 (M0 times) and phi_i / (phi_i + l0)
where phi_i are the eigenvalues of Q2' E Q2.  The single eigendecomposition
serves every smoothing level, which makes df calibration cheap.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .exceptions import (
    CalibrationError,
    ConditioningWarning,
    InputError,
    NumericalError,
)
from .kernels import clamp_spectrum

_RIDGE = 1e-10
_COND_LIMIT = 1e12
_DF_TOL = 1e-4


def null_space_dim(nu0: int, d: int) -> int:
    """Number of d-variate monomials of total degree < nu0."""
    if nu0 < 1 or d < 1:
        raise InputError(f"need nu0 >= 1 and d >= 1, got nu0={nu0}, d={d}")
    m0 = math.comb(nu0 + d - 1, nu0 - 1)
    if m0 > 2**62:
        raise InputError(f"polynomial block dimension overflows: nu0={nu0}, d={d}")
    return m0


def default_nu0(d: int) -> int:
    """Smallest degree satisfying 2*nu0 > d."""
    return d // 2 + 1


@dataclass(frozen=True)
class TpsSpec:
    """Degree nu0, penalty weight lambda0, and covariate dimension d."""

    nu0: int
    lambda0: float
    d: int

    def __post_init__(self):
        if self.nu0 < 1:
            raise InputError(f"nu0 must be >= 1, got {self.nu0}")
        if self.d < 1:
            raise InputError(f"d must be >= 1, got {self.d}")
        if 2 * self.nu0 <= self.d:
            raise InputError(
                f"need 2*nu0 > d for the radial basis; got nu0={self.nu0}, d={self.d}"
            )
        if not (np.isfinite(self.lambda0) and self.lambda0 > 0):
            raise InputError(f"lambda0 must be positive and finite, got {self.lambda0}")

    @property
    def m0(self) -> int:
        return null_space_dim(self.nu0, self.d)


def radial_basis(r: np.ndarray, nu0: int, d: int) -> np.ndarray:
    """Evaluate the order-nu0 radial basis at distances r >= 0.

    Uses the conventional normalizing constant, which makes the radial block
    conditionally positive definite; any positive rescaling would only shift
    the lambda0 scale, which df calibration absorbs anyway.
    """
    r = np.asarray(r, dtype=float)
    p = 2 * nu0 - d
    if d % 2 == 0:
        c = (-1.0) ** (nu0 + 1 + d // 2) / (
            2.0 ** (2 * nu0 - 1)
            * math.pi ** (d / 2)
            * math.factorial(nu0 - 1)
            * math.factorial(nu0 - d // 2)
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            out = c * np.where(r > 0, r**p * np.log(np.where(r > 0, r, 1.0)), 0.0)
    else:
        c = math.gamma(d / 2 - nu0) / (
            2.0 ** (2 * nu0) * math.pi ** (d / 2) * math.factorial(nu0 - 1)
        )
        out = c * r**p
    return out


def polynomial_exponents(nu0: int, d: int) -> list[tuple[int, ...]]:
    """Exponent multi-indices of all monomials with total degree < nu0."""
    exps = [
        alpha
        for alpha in itertools.product(range(nu0), repeat=d)
        if sum(alpha) < nu0
    ]
    exps.sort(key=lambda a: (sum(a), a))
    return exps


def _polynomial_design(Xn: np.ndarray, exponents) -> np.ndarray:
    cols = [np.prod(Xn**np.asarray(alpha), axis=1) for alpha in exponents]
    return np.column_stack(cols)


def _euclidean_distances(X: np.ndarray, Z: np.ndarray) -> np.ndarray:
    sq = (
        np.sum(X**2, axis=1)[:, None]
        + np.sum(Z**2, axis=1)[None, :]
        - 2.0 * (X @ Z.T)
    )
    return np.sqrt(np.maximum(sq, 0.0))


@dataclass(frozen=True)
class TpsSmoother:
    """A fitted thin-plate smoother with its full spectral decomposition.

    `lambdas` (descending) and orthonormal columns `P` describe the symmetric
    hat matrix S; the remaining fields carry everything needed to evaluate
    the fitted spline at new points.
    """

    spec: TpsSpec
    X: np.ndarray
    shift: np.ndarray
    scale: np.ndarray
    exponents: tuple
    E: np.ndarray
    Q1: np.ndarray
    R1: np.ndarray
    Q2: np.ndarray
    U: np.ndarray
    phi: np.ndarray
    lambdas: np.ndarray
    P: np.ndarray

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d_row(self) -> np.ndarray:
        return np.ones(self.n)

    def matrix(self) -> np.ndarray:
        """Assemble the dense hat matrix."""
        return (self.P * self.lambdas) @ self.P.T

    def trace(self) -> float:
        return float(self.lambdas.sum())

    def representer(self, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Radial and polynomial coefficients (c, b) of the spline S(.)'v.

        m(x) = sum_i c_i eta(|x - X_i|) + poly(x)'b evaluates the smoother
        row S(x)' applied to v at any x; at the design points it reproduces
        the rows of the hat matrix exactly.
        """
        v = np.asarray(v, dtype=float).ravel()
        if v.size != self.n:
            raise InputError(f"vector has length {v.size}, expected {self.n}")
        lam = self.spec.lambda0
        w = (self.U.T @ (self.Q2.T @ v)) / (self.phi + lam)
        c = self.Q2 @ (self.U @ w)
        rhs = self.Q1.T @ (v - self.E @ c - lam * c)
        b = np.linalg.solve(self.R1, rhs)
        return c, b

    def evaluate(self, c: np.ndarray, b: np.ndarray, Xnew) -> np.ndarray:
        """Evaluate the spline given by (c, b) at rows of Xnew."""
        Xnew = np.atleast_2d(np.asarray(Xnew, dtype=float))
        if Xnew.shape[1] != self.X.shape[1]:
            raise InputError(
                f"points have {Xnew.shape[1]} coordinates, expected {self.X.shape[1]}"
            )
        Enew = radial_basis(
            _euclidean_distances(Xnew, self.X), self.spec.nu0, self.spec.d
        )
        Tnew = _polynomial_design((Xnew - self.shift) / self.scale, self.exponents)
        return Enew @ c + Tnew @ b

    def weight_vector(self, x) -> np.ndarray:
        """Prediction weights S(x) at one point.

        S(x)'v = eta(x)'c(v) + t(x)'b(v) is linear in v, so the weight
        vector is the adjoint of the representer map applied to the basis
        evaluations at x.
        """
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.X.shape[1]:
            raise InputError(f"point has {x.size} coordinates, expected {self.X.shape[1]}")
        lam = self.spec.lambda0
        eta = radial_basis(
            _euclidean_distances(x[None, :], self.X)[0], self.spec.nu0, self.spec.d
        )
        t = _polynomial_design(
            ((x - self.shift) / self.scale)[None, :], self.exponents
        )[0]
        apply_c = lambda v: self.Q2 @ (
            self.U @ ((self.U.T @ (self.Q2.T @ v)) / (self.phi + lam))
        )
        c_eta = apply_c(eta)
        q = self.Q1 @ np.linalg.solve(self.R1.T, t)
        return c_eta + q - apply_c(self.E @ q + lam * q)


def _tps_core(data: Dataset, nu0: int):
    """Shared construction: polynomial QR and radial-block eigensystem."""
    X = data.X
    n, d = X.shape
    if nu0 < 1 or 2 * nu0 <= d:
        raise InputError(f"need 2*nu0 > d, got nu0={nu0}, d={d}")
    m0 = null_space_dim(nu0, d)
    if m0 >= n:
        raise InputError(
            f"polynomial block needs m0={m0} < n={n}; "
            "the thin-plate smoother is infeasible at this sample size"
        )
    if data.has_duplicate_rows():
        raise NumericalError(
            "duplicate design points make the thin-plate system singular"
        )

    lo = X.min(axis=0)
    hi = X.max(axis=0)
    span = hi - lo
    scale = np.where(span > 0, span / 2.0, 1.0)
    shift = (hi + lo) / 2.0
    exponents = tuple(polynomial_exponents(nu0, d))
    T = _polynomial_design((X - shift) / scale, exponents)

    Q, R = np.linalg.qr(T, mode="complete")
    R1 = R[:m0, :m0]
    diag = np.abs(np.diag(R1))
    if diag.min() <= 1e-10 * max(diag.max(), 1.0):
        raise NumericalError(
            "design does not support the polynomial block (degenerate geometry)"
        )
    Q1, Q2 = Q[:, :m0], Q[:, m0:]

    E = radial_basis(_euclidean_distances(X, X), nu0, d)
    E = 0.5 * (E + E.T)
    B = Q2.T @ E @ Q2
    B = 0.5 * (B + B.T)
    try:
        phi, U = np.linalg.eigh(B)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"radial-block eigendecomposition failed: {exc}") from exc

    phi_max = float(np.abs(phi).max()) if phi.size else 0.0
    phi_min = float(phi.min()) if phi.size else 0.0
    if phi.size and (phi_min <= 0 or phi_max / max(phi_min, 1e-300) > _COND_LIMIT):
        warnings.warn(
            "radial block is ill conditioned; adding a 1e-10 ridge",
            ConditioningWarning,
            stacklevel=3,
        )
        phi = phi + _RIDGE
    return X, shift, scale, exponents, E, Q1, R1, Q2, U, phi


def build_tps_smoother(data: Dataset, spec: TpsSpec) -> TpsSmoother:
    """Construct the thin-plate smoother for a fixed penalty weight."""
    if spec.d != data.d:
        raise InputError(f"spec is for d={spec.d} but data has d={data.d}")
    X, shift, scale, exponents, E, Q1, R1, Q2, U, phi = _tps_core(data, spec.nu0)
    m0 = spec.m0
    svals = phi / (phi + spec.lambda0)
    lambdas = clamp_spectrum(np.concatenate([np.ones(m0), svals[::-1]]))
    P = np.hstack([Q1, Q2 @ U[:, ::-1]])
    return TpsSmoother(
        spec=spec,
        X=X,
        shift=shift,
        scale=scale,
        exponents=exponents,
        E=E,
        Q1=Q1,
        R1=R1,
        Q2=Q2,
        U=U,
        phi=phi,
        lambdas=lambdas,
        P=P,
    )


def trace_for_lambda(phi: np.ndarray, m0: int, lam: float) -> float:
    return float(m0 + np.sum(phi / (phi + lam)))


def lambda_for_df(data: Dataset, nu0: int, target_df: float) -> float:
    """Penalty weight making trace(S) equal target_df, by bisection on log l0.

    The trace decreases continuously from n (no penalty) to M0 (pure
    polynomial fit), so any target strictly between those is reachable.
    """
    m0 = null_space_dim(nu0, data.d)
    target = float(target_df)
    if target <= m0:
        raise CalibrationError(
            f"target df {target} is unreachable: trace(S) >= M0 = {m0} for every lambda0"
        )
    if target >= data.n:
        raise CalibrationError(f"target df {target} must be below n = {data.n}")
    *_, phi = _tps_core(data, nu0)
    phi_scale = float(np.abs(phi).max())
    lo, hi = 1e-12 * phi_scale, 1e12 * phi_scale
    while trace_for_lambda(phi, m0, lo) < target and lo > 1e-200:
        lo *= 1e-3
    while trace_for_lambda(phi, m0, hi) > target and hi < 1e200:
        hi *= 1e3
    log_lo, log_hi = np.log(lo), np.log(hi)
    for _ in range(400):
        mid = np.exp(0.5 * (log_lo + log_hi))
        t_mid = trace_for_lambda(phi, m0, mid)
        if abs(t_mid - target) <= _DF_TOL:
            return float(mid)
        if t_mid > target:
            log_lo = np.log(mid)
        else:
            log_hi = np.log(mid)
    raise CalibrationError(
        f"df bisection did not reach {target} within {_DF_TOL}; "
        f"achieved {t_mid:.6g}"
    )
