import math
import warnings

import numpy as np
import pytest
from conftest import random_instance
from hypothesis import given
from hypothesis import strategies as st

from reslogit.core import Dataset, ModelKind, Parameters, UtilitySpec, build_design
from reslogit.grad import beta_scores, grad_loglik
from reslogit.model import log_likelihood, predict_proba
from reslogit.stats import (
    SingularInformationWarning,
    accuracy,
    aic,
    arc_elasticity,
    classical_covariance,
    elasticity_report,
    hessian,
    point_elasticities,
    point_elasticity,
    probability_derivative,
    robust_covariance,
    robust_std_errors,
    sensitivity_ratios,
    std_errors,
    transform_covariance,
)
from reslogit.synthetic import mnl_dataset


def newton_mle(params, ds, design, kind, iterations=25):
    for _ in range(iterations):
        g = grad_loglik(params, ds, design, kind)[1].d_beta
        params = params.with_beta(params.beta - np.linalg.solve(hessian(params, ds, design, kind), g))
    return params


def _binary_asc(n):
    ds = Dataset((), np.zeros((n, 0)), np.arange(n) % 2, ("no", "yes"))
    return ds, build_design(ds, UtilitySpec((), 0, True))


def test_binary_asc_hessian_and_standard_error():
    ds, design = _binary_asc(1024)
    params = Parameters(np.zeros(1))
    H = hessian(params, ds, design, ModelKind.mnl())
    assert H[0, 0] == pytest.approx(-1024 / 4, rel=1e-8)
    assert std_errors(H)[0] == pytest.approx(2 / math.sqrt(1024), abs=1e-10)


def test_hessian_symmetric_and_matches_second_differences(rng):
    params, ds, design, kind = random_instance(rng, "reslogit", J=3, K=2, M=2, N=40)
    H = hessian(params, ds, design, kind)
    assert np.abs(H - H.T).max() < 1e-8
    h = 1e-4
    k = design.n_beta
    D = np.empty((k, k))
    ll = lambda b: log_likelihood(params.with_beta(b), ds, design, kind)
    for i in range(k):
        for j in range(k):
            e_i, e_j = np.eye(k)[i] * h, np.eye(k)[j] * h
            b = params.beta
            D[i, j] = (ll(b + e_i + e_j) - ll(b + e_i - e_j) - ll(b - e_i + e_j) + ll(b - e_i - e_j)) / (4 * h * h)
    assert np.abs(H - D).max() <= 1e-4 * np.abs(D).max()


def test_std_errors_of_negative_identity():
    assert np.array_equal(std_errors(-np.eye(4)), np.ones(4))


def test_duplicating_data_four_times_halves_standard_errors(rng):
    params, ds, design, kind = random_instance(rng, "mnl", J=3, K=2, N=200)
    four = ds.subset(np.tile(np.arange(200), 4))
    se1 = std_errors(hessian(params, ds, design, kind))
    se4 = std_errors(hessian(params, four, design, kind))
    assert np.allclose(se4, se1 / 2, rtol=1e-6)


def test_robust_equals_classical_when_outer_product_is_information(rng):
    A = rng.normal(size=(4, 4))
    H = -(A @ A.T + 4 * np.eye(4))
    scores = np.linalg.cholesky(-H).T  # scores.T @ scores == -H
    assert np.allclose(robust_std_errors(H, scores), std_errors(H), rtol=1e-12)


def test_robust_close_to_classical_when_correctly_specified():
    ds, spec, truth = mnl_dataset(5000, [0.5, -0.3, 1.0, -0.5, -0.8, 0.4], seed=2)
    design, kind = build_design(ds, spec), ModelKind.mnl()
    p = newton_mle(Parameters(np.zeros(6)), ds, design, kind)
    H = hessian(p, ds, design, kind)
    ratio = robust_std_errors(H, beta_scores(p, ds, design, kind)) / std_errors(H)
    assert np.all(np.abs(ratio - 1) < 0.2)


def test_robust_exceeds_classical_under_misspecified_mean():
    # utility fades to zero in the tails, where a linear fit predicts near-certain choices
    rng = np.random.default_rng(0)
    x = rng.normal(scale=1.5, size=5000)
    u = 3 * x * np.exp(-x ** 2 / 2)
    y = (rng.random(5000) < 1 / (1 + np.exp(-u))).astype(int)
    ds = Dataset(("x",), x[:, None], y, ("a", "b"))
    design, kind = build_design(ds, UtilitySpec(("x",), 0, True)), ModelKind.mnl()
    p = newton_mle(Parameters(np.zeros(2)), ds, design, kind)
    H = hessian(p, ds, design, kind)
    ratio = robust_std_errors(H, beta_scores(p, ds, design, kind)) / std_errors(H)
    assert ratio[design.index("x", 1)] > 1.1


def test_singular_information_is_flagged_not_hidden():
    H = -np.diag([4.0, 0.0, 1.0])
    with pytest.warns(SingularInformationWarning):
        se = std_errors(H)
    assert np.isnan(se[1]) and se[0] == pytest.approx(0.5) and se[2] == pytest.approx(1.0)
    with pytest.warns(SingularInformationWarning):
        rob = robust_std_errors(H, np.eye(3))
    assert np.isnan(rob[1])


def test_indefinite_information_is_flagged():
    with pytest.warns(SingularInformationWarning):
        se = std_errors(np.diag([-1.0, 2.0]))
    assert np.isnan(se[1]) and se[0] == 1.0


def test_transform_covariance_is_congruence():
    cov = np.array([[2.0, 0.5], [0.5, 1.0]])
    T = np.array([[1.0, -3.0], [0.0, 0.5]])
    assert np.allclose(transform_covariance(cov, T), T @ cov @ T.T)
    cov_nan = cov.copy()
    cov_nan[1, :] = cov_nan[:, 1] = np.nan
    out = transform_covariance(cov_nan, np.diag([2.0, 1.0]))
    assert out[0, 0] == 8.0 and np.isnan(out[1, 1])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        classical_covariance(-np.eye(2))
        robust_covariance(-np.eye(2), np.eye(2))


def test_aic_examples():
    assert aic(138, -16145) == 32566
    assert aic(922, -13121) == 28086
    assert aic(0, 0.0) == 0


@given(k=st.integers(0, 5000), ll=st.floats(-1e6, 0), d=st.floats(0.01, 100))
def test_aic_monotone(k, ll, d):
    assert aic(k, ll + d) < aic(k, ll)
    assert aic(k + 1, ll) > aic(k, ll)


def test_accuracy_examples():
    # deterministic: huge ASC for the chosen alternative
    ds = Dataset(("x",), np.array([[1.0], [-1.0], [2.0]]), [1, 0, 1], ("a", "b"))
    design = build_design(ds, UtilitySpec(("x",), 0, False))
    assert accuracy(Parameters(np.array([50.0])), ds, design, ModelKind.mnl()) == 1.0

    rng = np.random.default_rng(1)
    choices = rng.integers(0, 4, 101)
    ds = Dataset((), np.zeros((101, 0)), choices, ("a", "b", "c", "d"))
    design = build_design(ds, UtilitySpec((), 0, True))
    acc = accuracy(Parameters(np.zeros(3)), ds, design, ModelKind.mnl())
    assert acc == np.mean(choices == 0)
    assert (1.0 - acc) + acc == 1.0


def test_accuracy_matches_recount(rng):
    params, ds, design, kind = random_instance(rng, "reslogit", J=4, K=3, M=2, N=300)
    P = predict_proba(params, ds, design, kind)
    hits = sum(1 for n in range(ds.n_obs) if max(range(4), key=lambda j: (P[n, j], -j)) == ds.choices[n])
    assert accuracy(params, ds, design, kind) == hits / ds.n_obs


def test_elasticity_zero_coefficient():
    ds, spec, _ = mnl_dataset(50, np.zeros(6), seed=0)
    design = build_design(ds, spec)
    p = Parameters(np.zeros(6))
    assert point_elasticity(p, ds, design, ModelKind.mnl(), "x1", 1) == 0.0
    for d in (-50, 10, 50):
        assert arc_elasticity(p, ds, design, ModelKind.mnl(), "x1", 2, d) == 0.0


def test_binary_mnl_elasticity_closed_form():
    ds = Dataset(("x",), np.array([[1.7]]), [1], ("a", "b"))
    design = build_design(ds, UtilitySpec(("x",), 0, True))
    beta = 0.8
    p = Parameters(np.array([-0.3, beta]))
    P1 = predict_proba(p, ds, design, ModelKind.mnl())[0, 1]
    E = point_elasticities(p, ds, design, ModelKind.mnl(), "x")[0]
    assert E[1] == pytest.approx(beta * 1.7 * (1 - P1), rel=1e-12)
    assert E[0] == pytest.approx(-beta * 1.7 * P1, rel=1e-12)


def test_mnl_elasticities_closed_form_per_observation(rng):
    params, ds, design, kind = random_instance(rng, "mnl", J=4, K=3, N=40)
    P = predict_proba(params, ds, design, kind)
    b = design.coef_matrix(params.beta)[1 + 1]  # x2 row
    x = ds.column("x2")[:, None]
    closed = x * (b[None, :] - (P * b[None, :]).sum(axis=1, keepdims=True))
    assert np.allclose(point_elasticities(params, ds, design, kind, "x2"), closed, rtol=1e-10, atol=1e-13)


@pytest.mark.parametrize("tag", ["reslogit", "mlp", "mnl"])
def test_probability_derivative_matches_finite_differences(rng, tag):
    params, ds, design, kind = random_instance(rng, tag, J=4, K=3, M=3, N=10)
    dP = probability_derivative(params, ds, design, kind, "x1")
    h = 1e-6
    up, dn = np.array(ds.attributes), np.array(ds.attributes)
    up[:, 0] += h
    dn[:, 0] -= h
    fd = (predict_proba(params, ds.with_attributes(up), design, kind)
          - predict_proba(params, ds.with_attributes(dn), design, kind)) / (2 * h)
    assert np.allclose(dP, fd, rtol=1e-6, atol=1e-9)


def test_arc_tends_to_point_and_is_asymmetric(rng):
    params, ds, design, kind = random_instance(rng, "reslogit", J=3, K=2, M=2, N=30, scale=2.0)
    point = point_elasticity(params, ds, design, kind, "x1", 1)
    for d in (1e-2, 1e-3):
        assert arc_elasticity(params, ds, design, kind, "x1", 1, d) == pytest.approx(point, rel=20 * d / 100, abs=1e-9)
    plus = arc_elasticity(params, ds, design, kind, "x1", 1, 50)
    minus = arc_elasticity(params, ds, design, kind, "x1", 1, -50)
    assert abs(plus) != pytest.approx(abs(minus), rel=1e-3)


def test_elasticity_refuses_dummies_and_bad_grid(rng):
    params, ds, design, kind = random_instance(rng, "mnl", J=3, K=2, N=20)
    attrs = np.array(ds.attributes)
    attrs[:, 1] = rng.integers(0, 2, 20)
    dummy = ds.with_attributes(attrs)
    with pytest.raises(ValueError, match="dummy"):
        point_elasticity(params, dummy, design, kind, "x2", 1)
    with pytest.raises(ValueError, match="symmetric"):
        elasticity_report(params, ds, design, kind, "x1", grid=(10, 20, -10))
    with pytest.raises(ValueError):
        arc_elasticity(params, ds, design, kind, "x1", 1, 0)
    rep = elasticity_report(params, ds, design, kind, "x1")
    assert rep.arc.shape == (10, 3) and rep.point.shape == (3,)
    weighted = elasticity_report(params, ds, design, kind, "x1", weighting="probability")
    assert np.all(np.isfinite(weighted.point))


def _sensitivity_case(dummy_coefs):
    rng = np.random.default_rng(4)
    n = 40
    time = rng.uniform(5, 60, n)
    d1 = (np.arange(n) % 2).astype(float)
    d2 = (np.arange(n) % 4 == 0).astype(float)
    ds = Dataset(("time", "d1", "d2"), np.column_stack([time, d1, d2]), np.zeros(n, dtype=int), ("a", "b"))
    design = build_design(ds, UtilitySpec(("time", "d1", "d2"), 0, False))
    return ds, design, Parameters(np.array([-0.05, *dummy_coefs]))


def test_sensitivity_ratio_hand_case():
    ds, design, _ = _sensitivity_case((0, 0))
    num = -0.05 * ds.column("time").mean()
    # choose dummy coefficients so the ratios come out as 2 and 4
    c1 = num / (2 * ds.column("d1").mean())
    c2 = num / (4 * ds.column("d2").mean())
    table = sensitivity_ratios(Parameters(np.array([-0.05, c1, c2])), ds, design, "time", ["d1", "d2"])
    assert table.ratios.shape == (2, 2)
    assert np.isnan(table.ratios[0, 0]) and table.undefined[:, 0].all()
    assert np.allclose(table.ratios[:, 1], [2.0, 4.0], rtol=1e-12)
    assert table.stddev[1] == pytest.approx(1.0, rel=1e-12)


def test_sensitivity_equal_contributions_have_zero_spread():
    ds, design, _ = _sensitivity_case((0, 0))
    c = 0.3
    params = Parameters(np.array([-0.05, c / ds.column("d1").mean(), c / ds.column("d2").mean()]))
    table = sensitivity_ratios(params, ds, design, "time", ["d1", "d2"])
    assert table.stddev[1] == pytest.approx(0.0, abs=1e-12)


def test_sensitivity_rejects_non_dummy():
    ds, design, params = _sensitivity_case((0.2, 0.1))
    with pytest.raises(ValueError, match="0/1"):
        sensitivity_ratios(params, ds, design, "d1", ["time"])
