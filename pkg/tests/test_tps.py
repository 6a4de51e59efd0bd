import math

import numpy as np
import pytest

from ibrsmooth.data import Dataset
from ibrsmooth.exceptions import CalibrationError, InputError, NumericalError
from ibrsmooth.tps import (
    TpsSpec,
    build_tps_smoother,
    default_nu0,
    lambda_for_df,
    null_space_dim,
    radial_basis,
)

from oracles import dense_tps_matrix, raw_polynomial_design


def grid_dataset(side, jitter=0.0, rng=None):
    ticks = (np.arange(side) + 0.5) / side
    xx, yy = np.meshgrid(ticks, ticks, indexing="ij")
    X = np.column_stack([xx.ravel(), yy.ravel()])
    if jitter and rng is not None:
        X = X + jitter * rng.normal(size=X.shape)
    y = np.sin(3 * X[:, 0]) + X[:, 1]
    return Dataset(X, y)


class TestNullSpaceDim:
    def test_catalog_values(self):
        assert null_space_dim(3, 6) == 28
        assert null_space_dim(2, 1) == 2
        assert null_space_dim(7, 13) == 27132
        assert null_space_dim(2, 2) == 3

    def test_rejects_bad_arguments(self):
        with pytest.raises(InputError):
            null_space_dim(0, 2)
        with pytest.raises(InputError):
            null_space_dim(2, 0)

    def test_default_degree(self):
        assert default_nu0(1) == 1
        assert default_nu0(2) == 2
        assert default_nu0(3) == 2
        assert default_nu0(13) == 7


class TestRadialBasis:
    def test_cubic_spline_special_case(self):
        # d=1, nu0=2 is |r|^3 / 12
        assert radial_basis(np.array([2.0]), 2, 1)[0] == pytest.approx(8.0 / 12.0)

    def test_surface_spline_special_case(self):
        # d=2, nu0=2 is r^2 log r / (8 pi)
        r = 2.0
        want = r * r * math.log(r) / (8.0 * math.pi)
        assert radial_basis(np.array([r]), 2, 2)[0] == pytest.approx(want)

    def test_zero_distance(self):
        assert radial_basis(np.array([0.0]), 2, 2)[0] == 0.0
        assert radial_basis(np.array([0.0]), 2, 1)[0] == 0.0


class TestTpsSpec:
    def test_validation(self):
        with pytest.raises(InputError):
            TpsSpec(nu0=1, lambda0=1.0, d=2)  # 2*nu0 <= d
        with pytest.raises(InputError):
            TpsSpec(nu0=2, lambda0=0.0, d=2)
        assert TpsSpec(nu0=2, lambda0=1.0, d=2).m0 == 3


class TestBuildTpsSmoother:
    def test_matches_bordered_system_oracle(self, rng):
        X = rng.uniform(0, 1, size=(30, 2))
        data = Dataset(X, rng.normal(size=30))
        lam = 1e-3
        sm = build_tps_smoother(data, TpsSpec(nu0=2, lambda0=lam, d=2))
        S = sm.matrix()
        S_ref = dense_tps_matrix(X, 2, lam)
        assert np.abs(S - S_ref).max() <= 1e-10
        assert np.abs(S - S.T).max() <= 1e-10

    def test_first_m0_eigenvalues_are_one(self, rng):
        X = rng.uniform(0, 1, size=(50, 2))
        data = Dataset(X, rng.normal(size=50))
        sm = build_tps_smoother(data, TpsSpec(nu0=2, lambda0=0.1, d=2))
        assert np.abs(sm.lambdas[:3] - 1.0).max() <= 1e-6
        assert sm.lambdas[3] < 1.0 - 1e-6
        assert sm.lambdas.min() >= -1e-8
        assert sm.lambdas.max() <= 1.0 + 1e-10

    def test_polynomial_reproduction(self, rng):
        X = rng.uniform(0, 1, size=(40, 2))
        data = Dataset(X, rng.normal(size=40))
        sm = build_tps_smoother(data, TpsSpec(nu0=2, lambda0=3.0, d=2))
        S = sm.matrix()
        p = 1.7 - 0.4 * X[:, 0] + 2.2 * X[:, 1]
        assert np.abs(S @ p - p).max() <= 1e-8

    def test_large_penalty_is_polynomial_least_squares(self, rng):
        X = rng.uniform(0, 1, size=(30, 2))
        y = rng.normal(size=30)
        data = Dataset(X, y)
        sm = build_tps_smoother(data, TpsSpec(nu0=2, lambda0=1e12, d=2))
        T = raw_polynomial_design(X, 2)
        coef, *_ = np.linalg.lstsq(T, y, rcond=None)
        assert np.abs(sm.matrix() @ y - T @ coef).max() <= 1e-4

    def test_small_penalty_interpolates(self, rng):
        X = rng.uniform(0, 1, size=(30, 2))
        y = rng.normal(size=30)
        data = Dataset(X, y)
        sm = build_tps_smoother(data, TpsSpec(nu0=2, lambda0=1e-12, d=2))
        assert np.abs(sm.matrix() @ y - y).max() <= 1e-4

    def test_duplicate_points_rejected(self):
        X = np.array([[0.1, 0.2], [0.1, 0.2], [0.5, 0.6], [0.9, 0.1]])
        import warnings

        from ibrsmooth.exceptions import DuplicateRowsWarning

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DuplicateRowsWarning)
            data = Dataset(X, np.zeros(4))
        with pytest.raises(NumericalError):
            build_tps_smoother(data, TpsSpec(nu0=2, lambda0=1.0, d=2))

    def test_infeasible_when_m0_reaches_n(self, rng):
        X = rng.uniform(0, 1, size=(3, 2))
        data = Dataset(X, np.zeros(3))
        with pytest.raises(InputError, match="m0=3 < n=3"):
            build_tps_smoother(data, TpsSpec(nu0=2, lambda0=1.0, d=2))

    def test_weight_vector_matches_hat_rows(self, rng):
        X = rng.uniform(0, 1, size=(25, 2))
        data = Dataset(X, rng.normal(size=25))
        sm = build_tps_smoother(data, TpsSpec(nu0=2, lambda0=0.01, d=2))
        S = sm.matrix()
        for i in (0, 12, 24):
            assert np.abs(sm.weight_vector(X[i]) - S[i]).max() <= 1e-8

    def test_representer_evaluates_the_smoother(self, rng):
        X = rng.uniform(0, 1, size=(25, 2))
        data = Dataset(X, rng.normal(size=25))
        sm = build_tps_smoother(data, TpsSpec(nu0=2, lambda0=0.01, d=2))
        v = rng.normal(size=25)
        c, b = sm.representer(v)
        assert np.abs(sm.evaluate(c, b, X) - sm.matrix() @ v).max() <= 1e-8


class TestLambdaForDf:
    def test_target_at_m0_is_unreachable(self, rng):
        X = rng.uniform(0, 1, size=(20, 2))
        data = Dataset(X, np.zeros(20))
        with pytest.raises(CalibrationError):
            lambda_for_df(data, 2, 3.0)

    def test_grid_design_hits_target(self):
        data = grid_dataset(10)
        lam = lambda_for_df(data, 2, 4.5)
        # independent trace from the dense bordered-system hat matrix
        S_ref = dense_tps_matrix(data.X, 2, lam)
        assert np.trace(S_ref) == pytest.approx(4.5, abs=1e-4)

    def test_trace_decreasing_in_lambda(self, rng):
        X = rng.uniform(0, 1, size=(25, 2))
        data = Dataset(X, np.zeros(25))
        traces = []
        for lam in (1e-3, 1e-1, 10.0, 1e3):
            sm = build_tps_smoother(data, TpsSpec(nu0=2, lambda0=lam, d=2))
            traces.append(sm.trace())
        assert np.all(np.diff(traces) < 0)


class TestEigenvalueShape:
    def test_middle_spectrum_power_law(self):
        # d=1, nu0=2 equispaced: log(1/l - 1) approximately affine in log j
        # with slope near 2*nu0/d = 4
        x = np.linspace(0.0, 1.0, 100)[:, None]
        data = Dataset(x, np.zeros(100))
        sm = build_tps_smoother(data, TpsSpec(nu0=2, lambda0=1e-4, d=1))
        lam = sm.lambdas
        j = np.arange(1, 101)
        mid = slice(33, 66)
        vals = lam[mid]
        assert np.all((vals > 0) & (vals < 1))
        slope = np.polyfit(np.log(j[mid]), np.log(1.0 / vals - 1.0), 1)[0]
        assert 3.0 <= slope <= 5.0
        assert np.all(np.diff(lam) <= 1e-12)
