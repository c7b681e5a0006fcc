import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reslogit.core import Dataset, ModelKind, Parameters, UtilitySpec, build_design
from reslogit.model import (
    NonFiniteError,
    choice_probabilities,
    linear_utility,
    log_likelihood,
    mlp_forward,
    q_form_probabilities,
    residual_forward,
    sigmoid,
    softmax,
    softplus,
)
from reslogit.redbus import COMPETING, NON_COMPETING

mpmath.mp.dps = 50

finite_floats = st.floats(min_value=-1e300, max_value=1e300, allow_nan=False, allow_infinity=False)


def _mp_softplus(z: float) -> float:
    return float(mpmath.log1p(mpmath.exp(mpmath.mpf(z))))


@pytest.mark.parametrize("z, want", [(0.0, math.log(2)), (-2.0, 0.1269), (1.0, 1.3133)])
def test_softplus_examples(z, want):
    assert softplus(z) == pytest.approx(want, abs=5e-5)


def test_softplus_asymptote():
    assert softplus(1000.0) == pytest.approx(1000.0, rel=1e-12)
    assert softplus(-1000.0) == 0.0 or softplus(-1000.0) < 1e-300


def test_softplus_rejects_nonfinite():
    for bad in (np.nan, np.inf, -np.inf):
        with pytest.raises(ValueError):
            softplus(bad)


@settings(max_examples=300)
@given(z=st.one_of(finite_floats, st.floats(-800, 800)))
def test_softplus_matches_high_precision(z):
    want = _mp_softplus(z)
    got = softplus(z)
    if want == 0.0:
        assert got == 0.0
    else:
        assert abs(got - want) <= 1e-12 * abs(want) + 1e-300


@given(a=st.floats(-700, 700), b=st.floats(-700, 700))
def test_softplus_monotone(a, b):
    lo, hi = sorted((a, b))
    assert softplus(lo) <= softplus(hi)


def test_sigmoid_is_stable_at_extremes():
    assert sigmoid(800.0) == 1.0
    assert 0.0 <= sigmoid(-800.0) < 1e-300
    assert sigmoid(0.0) == 0.5


def _design(J, K, asc, ref=0):
    names = tuple(f"x{k}" for k in range(K))
    ds = Dataset(names, np.zeros((1, K)), [0], tuple(f"a{j}" for j in range(J)))
    return build_design(ds, UtilitySpec(names, ref, asc))


def test_linear_utility_examples():
    d = _design(3, 1, asc=False)
    assert np.array_equal(linear_utility(Parameters(np.zeros(2)), np.array([2.0]), d), np.zeros(3))
    assert np.array_equal(linear_utility(Parameters(np.array([1.0, -1.0])), np.array([2.0]), d), [0.0, 2.0, -2.0])
    d = _design(2, 0, asc=True)
    assert np.array_equal(linear_utility(Parameters(np.array([0.5])), np.zeros(0), d), [0.0, 0.5])


def test_linear_utility_dimension_mismatch():
    d = _design(3, 2, asc=True)
    with pytest.raises(ValueError):
        linear_utility(Parameters(np.zeros(5)), np.zeros(2), d)
    with pytest.raises(ValueError):
        linear_utility(Parameters(np.zeros(6)), np.zeros(1), d)


def test_residual_forward_worked_examples():
    tr = residual_forward([COMPETING], np.ones(3))
    assert np.allclose(tr.g, [-0.127, -0.693, -0.693], atol=1e-3)
    tr = residual_forward([NON_COMPETING], np.ones(3))
    assert np.allclose(tr.g, [-0.693, -1.313, -1.313], atol=1e-3)


def test_all_zero_layers_shift_every_alternative_equally():
    tr = residual_forward([np.zeros((4, 4))] * 5, np.array([0.3, -1.0, 2.0, 0.0]))
    assert np.allclose(tr.g, -5 * math.log(2), rtol=1e-14)


def test_trace_invariants(rng):
    V = rng.normal(size=4)
    thetas = [rng.uniform(-2, 2, (4, 4)) for _ in range(3)]
    tr = residual_forward(thetas, V)
    assert np.array_equal(tr.h[0], V)
    assert np.allclose(tr.g, tr.h[-1] - V, atol=1e-14)
    assert np.all(tr.probs > 0) and abs(tr.probs.sum() - 1) < 1e-12
    # one layer written out by hand with logaddexp
    h1 = V - np.logaddexp(0.0, thetas[0] @ V)
    assert np.allclose(tr.h[1], h1, rtol=1e-14)


def test_residual_forward_errors():
    with pytest.raises(ValueError, match="shape"):
        residual_forward([np.zeros((2, 2))], np.ones(3))
    with pytest.raises(NonFiniteError) as info:
        residual_forward([np.eye(2), np.full((2, 2), 1e308)], np.array([1e10, -1e10]))
    assert info.value.layer == 2


def test_choice_probability_examples():
    assert np.allclose(choice_probabilities(np.ones(3), [-0.127, -0.693, -0.693]), [0.468, 0.265, 0.265], atol=1e-3)
    assert np.allclose(choice_probabilities(np.ones(3), [-0.693, -1.313, -1.313]), [0.482, 0.259, 0.259], atol=1e-3)
    assert np.allclose(choice_probabilities(np.ones(3), np.zeros(3)), 1 / 3, rtol=1e-15)


def test_q_form_examples(rng):
    tr = residual_forward([COMPETING], np.ones(3))
    assert np.allclose(q_form_probabilities(np.ones(3), [COMPETING], tr), [0.468, 0.265, 0.265], atol=1e-3)
    V = rng.normal(size=3)
    zeros = [np.zeros((3, 3))] * 2
    assert np.allclose(q_form_probabilities(V, zeros, residual_forward(zeros, V)), softmax(V), atol=1e-15)
    V = rng.normal(size=(6, 5))
    thetas = [rng.uniform(-1, 1, (5, 5)) for _ in range(3)]
    tr = residual_forward(thetas, V)
    assert np.abs(q_form_probabilities(V, thetas, tr) - choice_probabilities(V, tr.g)).max() < 1e-10


def test_mlp_forward_examples(rng):
    V = rng.normal(size=3)
    assert np.allclose(mlp_forward([np.zeros((3, 3))], V), 1 / 3)
    assert np.allclose(mlp_forward([], V), softmax(V))
    assert np.allclose(mlp_forward([np.eye(2)], np.zeros(2)), [0.5, 0.5])
    W = rng.normal(size=(3, 3))
    assert np.allclose(mlp_forward([W], V), softmax(1 / (1 + np.exp(-(W @ V)))), rtol=1e-14)


def test_log_likelihood_examples():
    d_ds = Dataset((), np.zeros((1, 0)), [2], ("a", "b", "c", "d"))
    design = build_design(d_ds, UtilitySpec((), 0, False))
    assert log_likelihood(Parameters(np.zeros(0)), d_ds, design, ModelKind.mnl()) == pytest.approx(math.log(0.25))

    # choosing car in the competing scenario (V = 1 everywhere)
    assert math.log(residual_forward([COMPETING], np.ones(3)).probs[0]) == pytest.approx(-0.759, abs=1e-3)

    ds = Dataset(("x",), np.array([[0.7]]), [1], ("car", "red bus", "blue bus"))
    design = build_design(ds, UtilitySpec(("x",), 0, True))
    params = Parameters(np.array([0.2, -0.1, 0.5, 0.3]), (COMPETING,))
    ll = log_likelihood(params, ds, design, ModelKind.reslogit(1))
    V = linear_utility(params, ds.attributes[0], design)
    assert ll == pytest.approx(math.log(residual_forward([COMPETING], V).probs[1]), rel=1e-14)
    twice = Dataset(("x",), np.array([[0.7], [0.7]]), [1, 1], ds.alt_names)
    assert log_likelihood(params, twice, design, ModelKind.reslogit(1)) == 2 * ll


def test_log_likelihood_flags_underflow():
    ds = Dataset(("x",), np.array([[1.0]]), [2], ("a", "b", "c"))
    design = build_design(ds, UtilitySpec(("x",), 0, False))
    with pytest.raises(NonFiniteError):
        log_likelihood(Parameters(np.array([1e308, -1e308])), ds, design, ModelKind.mnl())


def test_batch_partition_is_order_independent(rng):
    V = rng.normal(size=(10, 4))
    thetas = [rng.uniform(-1, 1, (4, 4)) for _ in range(2)]
    whole = residual_forward(thetas, V).probs
    perm = rng.permutation(10)
    parts = np.vstack([residual_forward(thetas, V[perm[:3]]).probs, residual_forward(thetas, V[perm[3:]]).probs])
    assert np.allclose(parts, whole[perm], rtol=0, atol=1e-15)


# properties

instances = st.tuples(st.integers(0, 2**32 - 1), st.integers(2, 8), st.integers(1, 8))


@settings(max_examples=60, deadline=None)
@given(inst=instances)
def test_zero_layers_collapse_to_softmax(inst):
    seed, J, M = inst
    V = np.random.default_rng(seed).uniform(-5, 5, J)
    tr = residual_forward([np.zeros((J, J))] * M, V)
    assert np.abs(tr.probs - softmax(V)).max() < 1e-12


@settings(max_examples=60, deadline=None)
@given(inst=instances)
def test_q_form_equivalence(inst):
    seed, J, M = inst
    rng = np.random.default_rng(seed)
    V = rng.uniform(-5, 5, J)
    thetas = [rng.uniform(-5, 5, (J, J)) for _ in range(M)]
    tr = residual_forward(thetas, V)
    assert np.abs(q_form_probabilities(V, thetas, tr) - tr.probs).max() < 1e-10


@settings(max_examples=60, deadline=None)
@given(inst=instances, j=st.integers(0, 7), bump=st.floats(-3, 3))
def test_diagonal_layers_are_local(inst, j, bump):
    seed, J, M = inst
    rng = np.random.default_rng(seed)
    V = rng.uniform(-5, 5, J)
    thetas = [np.diag(rng.uniform(-5, 5, J)) for _ in range(M)]
    j %= J
    W = V.copy()
    W[j] += bump
    g0 = residual_forward(thetas, V).g
    g1 = residual_forward(thetas, W).g
    others = np.arange(J) != j
    assert np.array_equal(g0[others], g1[others])


@settings(max_examples=60, deadline=None)
@given(inst=instances, c=st.floats(-50, 50), d=st.floats(-50, 50))
def test_softmax_shift_invariance(inst, c, d):
    seed, J, _ = inst
    rng = np.random.default_rng(seed)
    V, g = rng.uniform(-5, 5, J), rng.uniform(-5, 0, J)
    assert np.allclose(choice_probabilities(V + c, g + d), choice_probabilities(V, g), rtol=1e-12, atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(inst=instances)
def test_residual_term_never_positive(inst):
    seed, J, M = inst
    rng = np.random.default_rng(seed)
    V = rng.uniform(-5, 5, J)
    tr = residual_forward([rng.uniform(-5, 5, (J, J)) for _ in range(M)], V)
    assert np.all(tr.g <= 0) and np.all(tr.h[-1] <= V)
