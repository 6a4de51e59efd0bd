import math

import numpy as np
import pytest

from ibrsmooth.data import Dataset
from ibrsmooth.engine import (
    BaseSpectrum,
    IbrPath,
    KernelBase,
    TpsBase,
    beta_at_k,
    bias_at_k,
    fit_ibr,
    fitted_at_k,
    gcv_score,
    iterate_naive,
    iteration_grid,
    predict,
    predict_many,
    run_path,
    select_k_gcv,
    spectrum_of,
)
from ibrsmooth.exceptions import (
    BoundaryWarning,
    DivergenceError,
    DivergenceWarning,
    ExtrapolationError,
    InputError,
    SmootherError,
    UndefinedScoreError,
)
from ibrsmooth.kernels import build_kernel_smoother

from conftest import random_dataset
from oracles import naive_power_smoother


@pytest.fixture
def kernel_problem(rng):
    data = random_dataset(rng, 20, 2)
    sm = build_kernel_smoother(data, "gaussian", [0.3, 0.3])
    return data, sm, spectrum_of(sm)


class TestFittedAtK:
    def test_k1_is_pilot(self, kernel_problem):
        data, sm, spec = kernel_problem
        assert np.abs(fitted_at_k(spec, data.y, 1) - sm.matrix() @ data.y).max() <= 1e-10

    def test_constant_response_is_fixed_point(self, kernel_problem):
        data, _, spec = kernel_problem
        c = 3.7 * np.ones(data.n)
        for k in (1, 5, 100):
            assert np.abs(fitted_at_k(spec, c, k) - 3.7).max() <= 1e-9

    @pytest.mark.parametrize("k", [2, 7, 50])
    def test_matches_naive_iteration(self, kernel_problem, k):
        data, sm, spec = kernel_problem
        S = sm.matrix()
        assert np.abs(fitted_at_k(spec, data.y, k) - iterate_naive(S, data.y, k)).max() <= 1e-8

    def test_rejects_bad_k(self, kernel_problem):
        data, _, spec = kernel_problem
        with pytest.raises(InputError):
            fitted_at_k(spec, data.y, 0)
        with pytest.raises(InputError):
            fitted_at_k(spec, data.y, -3)


class TestIterateNaive:
    def test_first_two_steps(self, kernel_problem):
        data, sm, _ = kernel_problem
        S = sm.matrix()
        y = data.y
        assert np.allclose(iterate_naive(S, y, 1), S @ y)
        want = S @ y + S @ (np.eye(data.n) - S) @ y
        assert np.abs(iterate_naive(S, y, 2) - want).max() <= 1e-12

    def test_projection_smoother_is_a_fixed_point(self, rng):
        # idempotent S: the residual smoothing step estimates zero bias
        Q, _ = np.linalg.qr(rng.normal(size=(12, 2)))
        S = Q @ Q.T
        y = rng.normal(size=12)
        for k in (1, 2, 10):
            assert np.abs(iterate_naive(S, y, k) - S @ y).max() <= 1e-12

    def test_matches_matrix_power_form(self, kernel_problem):
        data, sm, _ = kernel_problem
        S = sm.matrix()
        Sk = naive_power_smoother(S, 6)
        assert np.abs(iterate_naive(S, data.y, 6) - Sk @ data.y).max() <= 1e-10


class TestBiasAtK:
    def test_constant_response_has_no_bias(self, kernel_problem):
        data, _, spec = kernel_problem
        c = -1.2 * np.ones(data.n)
        assert np.abs(bias_at_k(spec, c, 3)).max() <= 1e-9

    def test_norm_strictly_decreasing(self, kernel_problem):
        data, _, spec = kernel_problem
        norms = [np.linalg.norm(bias_at_k(spec, data.y, k)) for k in range(1, 51)]
        assert np.all(np.diff(norms) < 0)

    def test_dense_matrix_oracle(self, rng):
        data = random_dataset(rng, 15, 2)
        sm = build_kernel_smoother(data, "gaussian", [0.25, 0.25])
        spec = spectrum_of(sm)
        S = sm.matrix()
        k = 4
        want = -S @ np.linalg.matrix_power(np.eye(15) - S, k) @ data.y
        assert np.abs(bias_at_k(spec, data.y, k) - want).max() <= 1e-9


class TestBetaAtK:
    def test_k1_is_identity(self, kernel_problem):
        data, _, spec = kernel_problem
        assert np.abs(beta_at_k(spec, data.y, 1) - data.y).max() <= 1e-10

    def test_consistent_with_fitted(self, kernel_problem):
        data, sm, spec = kernel_problem
        beta = beta_at_k(spec, data.y, 25)
        assert np.abs(sm.matrix() @ beta - fitted_at_k(spec, data.y, 25)).max() <= 1e-8

    def test_geometric_sum_oracle(self, rng):
        data = random_dataset(rng, 10, 1)
        sm = build_kernel_smoother(data, "gaussian", [0.3])
        spec = spectrum_of(sm)
        S = sm.matrix()
        k = 5
        acc = np.zeros((10, 10))
        term = np.eye(10)
        for _ in range(k):
            acc = acc + term
            term = term @ (np.eye(10) - S)
        assert np.abs(beta_at_k(spec, data.y, k) - acc @ data.y).max() <= 1e-9


class TestPredict:
    def test_training_point_returns_fitted(self, rng):
        data = random_dataset(rng, 20, 2)
        fit = fit_ibr(data, KernelBase())
        for i in (0, 9, 19):
            assert predict(fit, data, data.X[i]) == pytest.approx(
                fit.fitted[i], abs=1e-10
            )

    def test_equidistant_point_predicts_mean_beta(self, rng):
        # four points on a circle: the center is equidistant from all
        angles = np.array([0.0, 0.5 * np.pi, np.pi, 1.5 * np.pi])
        X = np.column_stack([np.cos(angles), np.sin(angles)])
        data = Dataset(X, rng.normal(size=4))
        fit = fit_ibr(data, KernelBase(bandwidths=(1.0, 1.0)), grid=[1, 2, 3])
        assert predict(fit, data, [0.0, 0.0]) == pytest.approx(fit.beta.mean())

    def test_extrapolation_error_outside_compact_support(self, rng):
        data = random_dataset(rng, 10, 1)
        fit = fit_ibr(
            data, KernelBase(family="uniform", bandwidths=(0.05,)),
            grid=[1, 2], allow_nonpd=True,
        )
        with pytest.raises(ExtrapolationError):
            predict(fit, data, [50.0])

    def test_predict_many_matches_scalar_predict(self, rng):
        data = random_dataset(rng, 15, 2)
        fit = fit_ibr(data, KernelBase())
        pts = rng.uniform(0.2, 0.8, size=(4, 2))
        many = predict_many(fit, data, pts)
        each = [predict(fit, data, p) for p in pts]
        assert np.abs(many - each).max() <= 1e-12

    def test_dimension_mismatch(self, rng):
        data = random_dataset(rng, 15, 2)
        fit = fit_ibr(data, KernelBase())
        with pytest.raises(InputError):
            predict(fit, data, [0.1, 0.2, 0.3])


class TestGcvScore:
    def test_zero_df_unit_variance(self):
        assert gcv_score(100.0, 0.0, 100) == 0.0

    def test_hand_value(self):
        # log(0.25) - 2 log(0.9)
        want = math.log(0.25) - 2.0 * math.log(0.9)
        assert gcv_score(25.0, 10.0, 100) == pytest.approx(want, abs=1e-12)
        assert gcv_score(25.0, 10.0, 100) == pytest.approx(-1.17557, abs=1e-5)

    def test_undefined_cases(self):
        with pytest.raises(UndefinedScoreError):
            gcv_score(1.0, 100.0, 100)
        with pytest.raises(UndefinedScoreError):
            gcv_score(0.0, 1.0, 100)


class TestRunPath:
    def test_hand_computed_df(self):
        spec = BaseSpectrum(
            lambdas=np.array([1.0, 0.5]), P=np.eye(2), d_row=np.ones(2)
        )
        path = run_path(spec, np.array([1.0, 2.0]), [1, 2])
        assert path.df[1] == pytest.approx(1.75, abs=1e-12)

    def test_df_at_k1_is_trace(self, kernel_problem):
        data, sm, spec = kernel_problem
        path = run_path(spec, data.y, [1])
        assert path.df[0] == pytest.approx(float(sm.lambdas.sum()), abs=1e-10)

    def test_df_increasing_and_bounded(self, kernel_problem):
        data, _, spec = kernel_problem
        path = run_path(spec, data.y, iteration_grid(500))
        assert np.all(np.diff(path.df) > 0)
        assert path.df.max() <= data.n

    def test_df_approaches_n(self, rng):
        data = random_dataset(rng, 30, 2)
        sm = build_kernel_smoother(data, "gaussian", [0.15, 0.15])
        spec = spectrum_of(sm)
        assert spec.lambdas.min() > 1e-4
        path = run_path(spec, data.y, [10**6])
        assert path.df[0] == pytest.approx(30.0, abs=1e-3)

    def test_interpolation_limit(self, rng):
        data = random_dataset(rng, 30, 2)
        sm = build_kernel_smoother(data, "gaussian", [0.15, 0.15])
        spec = spectrum_of(sm)
        assert spec.lambdas.min() > 1e-4
        resid = data.y - fitted_at_k(spec, data.y, 10**6)
        assert np.abs(resid).max() <= 1e-3

    def test_grid_validation(self, kernel_problem):
        data, _, spec = kernel_problem
        with pytest.raises(InputError):
            run_path(spec, data.y, [])
        with pytest.raises(InputError):
            run_path(spec, data.y, [2, 2])
        with pytest.raises(InputError):
            run_path(spec, data.y, [3, 1])


class TestSelectK:
    def _path(self, ks, gcv, valid=None):
        m = len(ks)
        valid = np.ones(m, dtype=bool) if valid is None else np.asarray(valid)
        return IbrPath(
            ks=np.asarray(ks), df=np.zeros(m), sigma2=np.zeros(m),
            gcv=np.asarray(gcv, dtype=float), bias_norm=np.zeros(m), valid=valid,
        )

    def test_convex_sequence(self):
        path = self._path([1, 2, 5, 10, 20], [3.0, 1.0, 0.5, 0.9, 2.0])
        assert select_k_gcv(path) == 5

    def test_tie_breaks_to_smallest_k(self):
        path = self._path([1, 10, 40], [1.0, 0.25, 0.25])
        assert select_k_gcv(path) == 10

    def test_boundary_minimum_warns(self):
        path = self._path([1, 2, 5], [3.0, 2.0, 1.0])
        with pytest.warns(BoundaryWarning):
            assert select_k_gcv(path) == 5

    def test_invalid_points_are_skipped(self):
        path = self._path([1, 2, 5], [5.0, -9.0, 4.0], valid=[True, False, True])
        assert select_k_gcv(path) == 5

    def test_all_invalid_is_an_error(self):
        path = self._path([1, 2], [1.0, 1.0], valid=[False, False])
        with pytest.raises(SmootherError):
            select_k_gcv(path)


class TestFitIbr:
    def test_constant_response(self, rng):
        X = rng.uniform(0, 1, size=(15, 2))
        data = Dataset(X, 2.5 * np.ones(15))
        fit = fit_ibr(data, KernelBase(bandwidths=(0.3, 0.3)), grid=[1, 2, 5])
        assert np.abs(fit.fitted - 2.5).max() <= 1e-9
        assert predict(fit, data, [0.5, 0.5]) == pytest.approx(2.5, abs=1e-9)

    def test_degenerate_grid_returns_pilot(self, rng):
        data = random_dataset(rng, 20, 2)
        fit = fit_ibr(data, KernelBase(), grid=[1])
        sm = fit.smoother
        assert fit.k_hat == 1
        assert np.abs(fit.fitted - sm.matrix() @ data.y).max() <= 1e-10
        assert np.abs(fit.beta - data.y).max() <= 1e-10

    def test_non_pd_family_refused(self, rng):
        data = random_dataset(rng, 25, 2)
        with pytest.raises(DivergenceError, match="not positive definite"):
            fit_ibr(data, KernelBase(family="epanechnikov"))

    def test_non_pd_override_warns(self, rng):
        data = random_dataset(rng, 60, 2)
        with pytest.warns(DivergenceWarning):
            fit = fit_ibr(data, KernelBase(family="epanechnikov"), allow_nonpd=True)
        assert any("negative eigenvalues" in n for n in fit.notes)

    def test_tps_base(self, rng):
        data = random_dataset(rng, 40, 2)
        fit = fit_ibr(data, TpsBase(nu0=2))
        assert fit.base["type"] == "tps"
        assert fit.base["lambda0"] > 0
        assert fit.k_hat >= 1
        assert np.abs(fit.smoother.matrix() @ fit.beta - fit.fitted).max() <= 1e-8

    def test_spectrum_above_one_always_refused(self):
        spec = BaseSpectrum(
            lambdas=np.array([1.1, 0.5]), P=np.eye(2), d_row=np.ones(2)
        )
        with pytest.raises(DivergenceError):
            spec.validate(strict=False)


class TestIterationGrid:
    def test_starts_dense_then_geometric(self):
        grid = iteration_grid(1000)
        assert grid[:10] == list(range(1, 11))
        ratios = np.diff(np.log(np.array(grid[10:], dtype=float)))
        assert ratios.max() <= math.log(1.3)
        assert grid[-1] <= 1000

    def test_small_caps(self):
        assert iteration_grid(1) == [1]
        assert iteration_grid(5) == [1, 2, 3, 4, 5]
