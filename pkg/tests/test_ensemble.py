import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from turnpike_lab.ensemble import (
    DistributionSpec, Ensemble, ParameterSample, SplitMix64, build_ensemble, expect, load_ensemble,
    poisson_draws, poisson_inverse_cdf, rng_next_uniform, sample_poisson, save_ensemble, benchmark_spec,
)
from turnpike_lab.errors import DimensionMismatch, ZeroWeight

# reference outputs of SplitMix64 seeded with 0
SPLITMIX_SEED0 = (0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F)


def _splitmix_reference(seed: int, count: int) -> list[int]:
    mask = (1 << 64) - 1
    out, state = [], seed
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & mask
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        out.append(z ^ (z >> 31))
    return out


def test_splitmix_reference_values():
    rng = SplitMix64(0)
    assert tuple(rng.next_u64() for _ in range(3)) == SPLITMIX_SEED0


@settings(max_examples=30)
@given(st.integers(0, 2**64 - 1))
def test_splitmix_matches_reference_for_any_seed(seed):
    rng = SplitMix64(seed)
    assert [rng.next_u64() for _ in range(5)] == _splitmix_reference(seed, 5)


def test_uniform_is_top_53_bits():
    state, u = rng_next_uniform(0)
    assert u == (SPLITMIX_SEED0[0] >> 11) / 2.0**53
    assert state == 0x9E3779B97F4A7C15
    _, u2 = rng_next_uniform(state)
    assert u2 == (SPLITMIX_SEED0[1] >> 11) / 2.0**53


def test_streams_are_deterministic():
    a, b = SplitMix64(1234), SplitMix64(1234)
    assert [a.uniform() for _ in range(100)] == [b.uniform() for _ in range(100)]


def test_uniform_mean():
    rng = SplitMix64(7)
    u = np.array([rng.uniform() for _ in range(100_000)])
    assert 0.497 <= u.mean() <= 0.503
    assert u.min() >= 0.0 and u.max() < 1.0


def test_poisson_inverse_cdf_examples():
    assert poisson_inverse_cdf(0.001, 5.0) == 0
    assert poisson_inverse_cdf(0.5, 5.0) == 5
    cdf4 = math.fsum(math.exp(-5) * 5**j / math.factorial(j) for j in range(5))
    assert cdf4 == pytest.approx(0.4405, abs=1e-4)
    assert poisson_inverse_cdf(cdf4 - 1e-12, 5.0) == 4
    assert poisson_inverse_cdf(cdf4 + 1e-12, 5.0) == 5


def test_poisson_mean():
    rng = SplitMix64(2024)
    draws = np.array([sample_poisson(rng, 5.0) for _ in range(100_000)])
    assert abs(draws.mean() - 5.0) <= 0.1


def test_two_point_build(bernoulli):
    assert bernoulli.size == 2
    np.testing.assert_array_equal(bernoulli.weights, [0.5, 0.5])
    np.testing.assert_array_equal(bernoulli.A[:, 0, 0], [1.0, -1.0])
    np.testing.assert_array_equal(bernoulli.C[:, 0, 0], [0.0, -1.0])


def test_poisson_scaled_single_sample():
    spec = benchmark_spec(sample_count=1, seed=99)
    ens = build_ensemble(spec)
    rng = SplitMix64(99)
    alpha = sample_poisson(rng, 5.0)
    beta = sample_poisson(rng, 5.0)
    np.testing.assert_array_equal(ens.A[0], alpha * spec.A0)
    np.testing.assert_array_equal(ens.B[0], beta * spec.B0)
    np.testing.assert_array_equal(ens.C[0], spec.C0)
    assert ens.weights[0] == 1.0


def test_build_is_bit_identical():
    a = build_ensemble(benchmark_spec(sample_count=50, seed=5))
    b = build_ensemble(benchmark_spec(sample_count=50, seed=5))
    assert a.A.tobytes() == b.A.tobytes() and a.B.tobytes() == b.B.tobytes()


def test_alpha_empirical_mean():
    draws = poisson_draws(benchmark_spec(sample_count=10_000, seed=42))
    assert abs(draws[:, 0].mean() - 5.0) <= 3 * math.sqrt(5.0 / 10_000)


def test_explicit_single_sample_is_deterministic():
    ens = Ensemble.deterministic([[1.0]], [[2.0]], [[3.0]])
    assert ens.size == 1 and ens.weights[0] == 1.0
    np.testing.assert_array_equal(expect(ens, np.array([[4.0, 5.0]])), [4.0, 5.0])


def test_expect_examples():
    ens = Ensemble.from_samples([ParameterSample(0.5, [[1.0]], [[1.0]], [[1.0]])] * 2)
    np.testing.assert_allclose(expect(ens, np.array([[1.0, 0.0], [0.0, 1.0]])), [0.5, 0.5])
    three = Ensemble.from_samples([ParameterSample(w, [[1.0]], [[1.0]], [[1.0]]) for w in (0.2, 0.3, 0.5)])
    assert float(expect(three, np.array([1.0, 2.0, 3.0]))) == pytest.approx(2.3, abs=1e-15)
    with pytest.raises(DimensionMismatch):
        expect(three, np.ones(2))


@settings(max_examples=40)
@given(st.integers(0, 2**31), st.floats(-10, 10), st.floats(-10, 10))
def test_expect_is_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.1, 1, 4)
    ens = Ensemble.from_samples([ParameterSample(x, [[1.0]], [[1.0]], [[1.0]]) for x in w / w.sum()])
    v, u = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
    lhs = expect(ens, a * v + b * u)
    rhs = a * expect(ens, v) + b * expect(ens, u)
    np.testing.assert_allclose(lhs, rhs, atol=1e-14 * (1 + abs(a) + abs(b)) * 10)


def test_validation_errors():
    with pytest.raises(DimensionMismatch):
        Ensemble.from_samples([ParameterSample(0.5, np.eye(2), np.ones((2, 1)), np.eye(2)),
                               ParameterSample(0.5, np.eye(3), np.ones((3, 1)), np.eye(3))])
    with pytest.raises((ZeroWeight, ValueError)):
        build_ensemble(DistributionSpec(kind="two-point", atoms=(([[1.0]], [[1.0]], [[1.0]]),), masses=(0.0,)))
    with pytest.raises(ValueError):
        build_ensemble(DistributionSpec(kind="two-point", atoms=(([[1.0]], [[1.0]], [[1.0]]),) * 2,
                                        masses=(0.3, 0.3)))


def test_json_round_trip(tmp_path, benchmark_ensemble):
    path = tmp_path / "ens.json"
    save_ensemble(benchmark_ensemble, path)
    back = load_ensemble(path)
    assert back.A.tobytes() == benchmark_ensemble.A.tobytes()
    assert back.weights.tobytes() == benchmark_ensemble.weights.tobytes()


def test_weighted_inner_product(bernoulli):
    v = np.array([[2.0], [4.0]])
    assert bernoulli.inner(v, v) == pytest.approx(0.5 * 4 + 0.5 * 16)
    assert bernoulli.norm(v) == pytest.approx(math.sqrt(10.0))
