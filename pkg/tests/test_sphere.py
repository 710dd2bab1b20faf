import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from pacsw.bessel import bessel_ratio, log_sphere_area
from pacsw.errors import DimensionMismatchError, SamplingError
from pacsw.rng import Stream
from pacsw.sphere import (
    DiracSlices,
    UniformSlices,
    VmfParams,
    VmfSlices,
    as_direction,
    householder_to,
    kl_vmf_uniform,
    kl_vmf_uniform_grad,
    sample_slices,
    sample_uniform_sphere,
    sample_vmf,
    vmf_log_density,
)


def e(d, i):
    v = np.zeros(d)
    v[i] = 1.0
    return v


def random_direction(d, seed):
    return sample_uniform_sphere(d, np.random.default_rng(seed))


# --- directions --------------------------------------------------------------------


def test_as_direction_checks_norm():
    with pytest.raises(ValueError):
        as_direction([1.0, 1.0])
    np.testing.assert_allclose(as_direction([3.0, 4.0], normalize=True), [0.6, 0.8])


def test_as_direction_needs_two_coordinates():
    with pytest.raises(ValueError):
        as_direction([1.0])


@pytest.mark.parametrize("kappa", [0.0, -2.0, float("inf"), float("nan")])
def test_vmf_params_reject_bad_kappa(kappa):
    with pytest.raises(ValueError):
        VmfParams(e(3, 0), kappa)


# --- uniform sampler -----------------------------------------------------------------


def test_uniform_sample_mean_near_zero():
    x = sample_uniform_sphere(3, np.random.default_rng(0), size=100_000)
    assert np.all(np.abs(x.mean(axis=0)) <= 0.02)


def test_uniform_samples_are_unit():
    x = sample_uniform_sphere(7, np.random.default_rng(1), size=1000)
    np.testing.assert_allclose(np.linalg.norm(x, axis=1), 1.0, atol=1e-10)


def test_uniform_sampler_is_deterministic():
    a = sample_uniform_sphere(4, np.random.default_rng(9), size=5)
    b = sample_uniform_sphere(4, np.random.default_rng(9), size=5)
    np.testing.assert_array_equal(a, b)


def test_uniform_rejects_low_dimension():
    with pytest.raises(ValueError):
        sample_uniform_sphere(1, np.random.default_rng(0))


def test_uniform_second_moment_is_isotropic():
    x = sample_uniform_sphere(4, np.random.default_rng(2), size=200_000)
    np.testing.assert_allclose(x.T @ x / x.shape[0], np.eye(4) / 4, atol=0.005)


# --- vMF sampler -----------------------------------------------------------------------


def test_householder_maps_pole_to_mean():
    m = random_direction(5, 3)
    np.testing.assert_allclose(householder_to(m, e(5, 4)), m, atol=1e-14)
    x = sample_uniform_sphere(5, np.random.default_rng(0), size=10)
    np.testing.assert_allclose(np.linalg.norm(householder_to(m, x), axis=1), 1.0)


def test_vmf_high_concentration():
    m = random_direction(3, 4)
    x = sample_vmf(VmfParams(m, 1e4), np.random.default_rng(5), size=10_000)
    assert np.mean(x @ m > 0.99) >= 0.99


@pytest.mark.parametrize("d, kappa", [(2, 3.0), (3, 1.0), (4, 0.3), (10, 25.0)])
def test_vmf_mean_resultant(d, kappa):
    m = random_direction(d, d)
    n = 200_000
    x = sample_vmf(VmfParams(m, kappa), np.random.default_rng(6), size=n)
    cos = x @ m
    assert abs(cos.mean() - bessel_ratio(d, kappa)) <= 4 * cos.std() / math.sqrt(n)
    np.testing.assert_allclose(np.linalg.norm(x, axis=1), 1.0, atol=1e-12)


def test_vmf_tiny_kappa_is_uniform():
    m = e(3, 0)
    n = 100_000
    x = sample_vmf(VmfParams(m, 1e-6), np.random.default_rng(7), size=n)
    # each coordinate of a uniform direction has variance 1/3
    assert np.all(np.abs(x.mean(axis=0)) <= 4 * math.sqrt(1 / 3 / n))


def test_vmf_cos_distribution_matches_density():
    # for d = 3 the law of t = <theta, m> has density k e^{k t} / (2 sinh k)
    kappa = 2.0
    t = sample_vmf(VmfParams(e(3, 2), kappa), np.random.default_rng(8), size=200_000) @ e(3, 2)
    t_sorted = np.sort(t)
    cdf = (np.exp(kappa * t_sorted) - np.exp(-kappa)) / (2 * math.sinh(kappa))
    ks = np.max(np.abs(cdf - np.arange(1, t.size + 1) / t.size))
    assert ks < 1.63 / math.sqrt(t.size)  # 1% level


def test_scalar_and_vector_paths_agree_in_law():
    params = VmfParams(random_direction(6, 11), 4.0)
    a = sample_slices(VmfSlices(params), 20_000, Stream(3)) @ params.mean
    b = sample_vmf(params, np.random.default_rng(3), size=20_000) @ params.mean
    se = math.sqrt(a.var() / a.size + b.var() / b.size)
    assert abs(a.mean() - b.mean()) < 4 * se


def test_vmf_trial_cap_raises():
    with pytest.raises(SamplingError):
        sample_vmf(VmfParams(e(3, 0), 1.0), np.random.default_rng(0), size=10, max_trials=0)


# --- density ---------------------------------------------------------------------------


def test_log_density_example():
    m = e(3, 0)
    assert vmf_log_density(m, VmfParams(m, 1.0)) == pytest.approx(-1.69246, abs=1e-5)


def test_density_integrates_to_one_circle():
    params = VmfParams(as_direction([0.6, 0.8]), 3.0)
    f = lambda a: math.exp(vmf_log_density(np.array([math.cos(a), math.sin(a)]), params))
    val, _ = integrate.quad(f, 0, 2 * math.pi, epsabs=1e-12, epsrel=1e-12, limit=200)
    assert val == pytest.approx(1.0, abs=1e-6)


def test_density_integrates_to_one_sphere():
    m = random_direction(3, 12)
    params = VmfParams(m, 5.0)
    # integrate in spherical coordinates about the z axis
    def f(phi, t):
        s = math.sqrt(max(1 - t * t, 0.0))
        x = np.array([s * math.cos(phi), s * math.sin(phi), t])
        return math.exp(vmf_log_density(x, params))

    val, _ = integrate.dblquad(f, -1, 1, 0, 2 * math.pi, epsabs=1e-10, epsrel=1e-10)
    assert val == pytest.approx(1.0, abs=1e-6)


def test_log_density_tiny_kappa_is_uniform():
    params = VmfParams(e(4, 1), 1e-9)
    x = sample_uniform_sphere(4, np.random.default_rng(0), size=10)
    np.testing.assert_allclose(vmf_log_density(x, params), -log_sphere_area(4), atol=1e-8)


def test_log_density_large_parameters_are_finite():
    params = VmfParams(e(10_000, 0), 1e5)
    assert np.isfinite(vmf_log_density(e(10_000, 0), params))
    assert np.isfinite(vmf_log_density(-e(10_000, 0), params))


def test_log_density_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        vmf_log_density(e(4, 0), VmfParams(e(3, 0), 1.0))


# --- KL to uniform ----------------------------------------------------------------------


def test_kl_example_closed_form():
    # d = 3: k A_3(k) + log k - log sinh k
    k = 1.0
    want = k * (1 / math.tanh(k) - 1 / k) + math.log(k) - math.log(math.sinh(k))
    assert kl_vmf_uniform(VmfParams(e(3, 0), 1.0)) == pytest.approx(want, rel=1e-12)
    assert kl_vmf_uniform(VmfParams(e(3, 0), 1.0)) == pytest.approx(0.151596, abs=1e-6)


def test_kl_against_monte_carlo():
    params = VmfParams(e(3, 2), 1.0)
    x = sample_vmf(params, np.random.default_rng(1), size=400_000)
    ratio = vmf_log_density(x, params) + log_sphere_area(3)
    assert kl_vmf_uniform(params) == pytest.approx(ratio.mean(), abs=4 * ratio.std() / math.sqrt(x.shape[0]))


def test_kl_tiny_kappa():
    assert kl_vmf_uniform(VmfParams(e(3, 0), 1e-6)) <= 1e-10


def test_kl_is_mean_invariant():
    a = kl_vmf_uniform(VmfParams(random_direction(5, 1), 3.0))
    b = kl_vmf_uniform(VmfParams(random_direction(5, 2), 3.0))
    assert a == pytest.approx(b, abs=1e-12)


@pytest.mark.parametrize("d", [2, 3, 20, 784])
def test_kl_increasing_on_grid(d):
    grid = np.geomspace(1e-4, 1e4, 60)
    kl = [kl_vmf_uniform(VmfParams(e(d, 0), k)) for k in grid]
    assert np.all(np.diff(kl) > 0)


@pytest.mark.parametrize("d", [3, 10])
@pytest.mark.parametrize("kappa", [0.5, 1.0, 5.0, 50.0])
def test_kl_gradient_matches_finite_difference(d, kappa):
    h = 1e-5 * kappa
    m = e(d, 0)
    fd = (kl_vmf_uniform(VmfParams(m, kappa + h)) - kl_vmf_uniform(VmfParams(m, kappa - h))) / (2 * h)
    assert kl_vmf_uniform_grad(d, kappa) == pytest.approx(fd, rel=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 50), st.floats(1e-3, 1e3))
def test_kl_nonnegative(d, kappa):
    assert kl_vmf_uniform(VmfParams(e(d, 0), kappa)) >= 0.0


# --- slice distributions ---------------------------------------------------------------


def test_dirac_slices_cycle():
    out = sample_slices(DiracSlices([e(3, 0)]), 5, Stream(0))
    np.testing.assert_array_equal(out, np.tile(e(3, 0), (5, 1)))
    two = sample_slices(DiracSlices([e(2, 0), e(2, 1)]), 3)
    np.testing.assert_array_equal(two, [e(2, 0), e(2, 1), e(2, 0)])


def test_dirac_rejects_non_unit_and_empty():
    with pytest.raises(ValueError):
        DiracSlices([[1.0, 1.0]])
    with pytest.raises(ValueError):
        DiracSlices(np.zeros((0, 3)))


def test_uniform_slices_repeatable():
    a = sample_slices(UniformSlices(3), 2, Stream(5))
    b = sample_slices(UniformSlices(3), 2, Stream(5))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, sample_slices(UniformSlices(3), 2, Stream(6)))


def test_vmf_slices_concentrate():
    m = e(3, 1)
    out = sample_slices(VmfSlices(VmfParams(m, 50.0)), 100, Stream(2))
    assert np.mean(out @ m) >= 0.95


def test_slice_j_does_not_depend_on_m():
    rho = VmfSlices(VmfParams(random_direction(4, 0), 2.0))
    short = sample_slices(rho, 10, Stream(4))
    long = sample_slices(rho, 50, Stream(4))
    np.testing.assert_array_equal(short, long[:10])


def test_slice_j_uses_generator_j():
    rho = UniformSlices(3)
    out = sample_slices(rho, 6, Stream(1, (2,)))
    for j in (0, 5):
        np.testing.assert_array_equal(out[j], rho.draw(Stream(1, (2,)).generator(j)))


def test_slice_count_must_be_positive():
    with pytest.raises(ValueError):
        sample_slices(UniformSlices(3), 0)
