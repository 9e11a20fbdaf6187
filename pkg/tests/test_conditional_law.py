import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from tiltcond import _kernels
from tiltcond.conditional_law import (
    RegimeChoice,
    RegimeConfig,
    _log_kernel,
    _normalize,
    _state_step,
    choose_regime,
    g_k_log_density,
    g_k_log_density_paths,
    kernel_log_normalizer,
    kernel_normalizer,
    kernel_unnormalized,
    make_state,
    sample_g_k,
    sample_g_k_paths,
    small_k_tilt,
)
from tiltcond.distributions import ComponentSpec, DistributionFamily, iid_family
from tiltcond.edgeworth import edgeworth_coefficients
from tiltcond.errors import ConfigError, EmptyTailRange, ResidualMeanOutOfSupport
from tiltcond.oracle import gaussian_conditional_log_density
from tiltcond.tilting import aggregate_moments, mean_tilt_function, solve_mean_tilt, tilted_density

from helpers import KINDS, random_family, random_theta

GAUSS = ComponentSpec.gaussian(0.0, 1.0)
EXP = ComponentSpec.exponential(1.0)


# --- regime ----------------------------------------------------------------

def test_choose_regime_examples():
    assert choose_regime(10 ** 6, 30, RegimeConfig(rho=0.3)) == RegimeChoice("small_k", True)
    # (log n)^7 exceeds n at n = 1e6, so the second example is run at n = 1e12
    n = 10 ** 12
    k = n - math.ceil(math.log(n) ** 7)
    c = choose_regime(n, k, RegimeConfig(tau=6.5))
    assert (c.regime, c.in_theory) == ("large_k", True)
    c = choose_regime(100, 98)
    assert (c.regime, c.in_theory) == ("large_k", False)


def test_choose_regime_fallback_and_forced_modes():
    # neither condition: sqrt switch
    assert choose_regime(100, 5) == RegimeChoice("small_k", False)
    assert choose_regime(100, 11).regime == "large_k"
    assert choose_regime(100, 98, RegimeConfig(mode="small")) == RegimeChoice("small_k", False)
    assert choose_regime(10 ** 6, 30, RegimeConfig(mode="large_k")) == RegimeChoice("large_k", False)


@pytest.mark.parametrize("kw", [{"rho": 0.5}, {"rho": 0.0}, {"tau": 6.0}, {"mode": "medium"}])
def test_regime_config_validation(kw):
    with pytest.raises(ConfigError):
        RegimeConfig(**kw)


@pytest.mark.parametrize("n,k", [(10, 0), (10, 9), (3, 2)])
def test_choose_regime_rejects_k(n, k):
    with pytest.raises(ConfigError):
        choose_regime(n, k)


# --- kernel ----------------------------------------------------------------

def test_gaussian_kernel_shape():
    n = 30
    fam = iid_family(GAUSS, n)
    for i, k in ((0, 1), (4, 10)):
        state = make_state(fam, n, 0.0, k, np.zeros(i))
        assert state.tilt.theta == 0.0
        y = np.linspace(-3, 3, 13)
        expected = stats.norm.pdf(y) * np.exp(-y ** 2 / (2 * (n - i - 1)))
        np.testing.assert_allclose(kernel_unnormalized(fam, state, y), expected, rtol=1e-13)


def test_gaussian_factor_is_one_at_tilted_mean():
    fam = iid_family(GAUSS, 12)
    state = make_state(fam, 12, 0.8, 5, [0.3, 1.1])
    t = state.tilt.theta
    m = float(GAUSS.cumulants(t, 1)[0])
    assert kernel_unnormalized(fam, state, m) == pytest.approx(float(tilted_density(fam, 3, t, m)), rel=1e-14)


def test_kernel_compositional_oracle_exp():
    n, a, y = 50, 1.5, 1.5
    fam = iid_family(EXP, n)
    state = make_state(fam, n, a, 1)
    t = solve_mean_tilt(fam, (1, n), a).theta
    agg = aggregate_moments(fam, t, (2, n))
    alpha3 = edgeworth_coefficients(agg).alpha3
    m = float(EXP.cumulants(t, 1)[0])
    expected = (tilted_density(fam, 1, t, y)
                * math.exp(-(y - m) ** 2 / (2 * agg.s2))
                * math.exp(3 * alpha3 / agg.sigma * y))
    assert state.tilt.theta == pytest.approx(t, abs=1e-14)
    assert kernel_unnormalized(fam, state, y) == pytest.approx(expected, rel=1e-12)


def test_kernel_compiled_and_numpy_routes_agree():
    rng = np.random.default_rng(11)
    for kind in KINDS:
        n = 40
        fam = random_family(rng, n, kind)
        a = float(mean_tilt_function(fam, 1, n, random_theta(rng, fam))[0])
        state = make_state(fam, n, a, 5, [])
        step = _state_step(fam, state)
        lo, hi = step.lo[0], step.hi[0]
        ys = np.linspace(lo, hi, 57)[1:-1]
        ref = _log_kernel(fam, step, ys[None, :])[0]
        code = _kernels.law_code(fam.component(1))
        got = [_kernels._log_kernel_point(*code, step.t[0], step.mean_next[0], step.var_tail[0], step.skew[0],
                                          step.feas_lo[0], step.feas_hi[0], step.bounded, y) for y in ys]
        np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-12)


def test_kernel_empty_tail_range():
    fam = iid_family(GAUSS, 5)
    with pytest.raises(ConfigError):
        make_state(fam, 5, 0.0, 4, [0.0, 0.0, 0.0, 0.0])
    from tiltcond.conditional_law import _step_from_tilt
    with pytest.raises(EmptyTailRange):
        _step_from_tilt(fam, 5, 0.0, 4, np.zeros(1), np.zeros(1))


# --- normaliser ------------------------------------------------------------

def test_normalizer_gaussian_closed_form():
    for n, i in ((3, 0), (10, 3), (200, 150)):
        fam = iid_family(GAUSS, n)
        state = make_state(fam, n, 0.0, i + 1, np.zeros(i))
        assert kernel_normalizer(fam, state) == pytest.approx(1 / math.sqrt(1 + 1 / (n - i - 1)), rel=1e-12)


def test_normalizer_trivial_correction():
    # a tail with huge variance and no skew leaves the tilted density unchanged
    fam = DistributionFamily((GAUSS,) + (ComponentSpec.gaussian(0.0, 1e9),) * 3)
    state = make_state(fam, 4, 0.0, 1)
    assert kernel_normalizer(fam, state) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("spec", [EXP, ComponentSpec.gamma(1.7, 2.0), ComponentSpec.gamma(0.6, 1.0),
                                  ComponentSpec.shifted_exponential(0.5, -2.0)],
                         ids=["exp", "gamma1.7", "gamma0.6", "shifted"])
def test_normalizer_matches_adaptive_quadrature(spec):
    n = 30
    fam = iid_family(spec, n)
    m0 = float(spec.cumulants(0.0, 1)[0])
    for a_shift, prefix in ((0.0, []), (0.5, [m0] * 4), (-0.3, [m0 + 0.5] * 10)):
        a = m0 + a_shift * math.sqrt(float(spec.cumulants(0.0, 2)[1]))
        state = make_state(fam, n, a, 15, prefix)
        C = kernel_normalizer(fam, state)
        A = spec.support[0]
        hi = n * a - state.partial_sum - (n - state.i - 1) * A
        m = float(spec.cumulants(state.tilt.theta, 1)[0])
        val, _ = integrate.quad(lambda y: kernel_unnormalized(fam, state, y), A, hi, points=[m], limit=500,
                                epsabs=0, epsrel=1e-12)
        assert val / C == pytest.approx(1.0, abs=1e-9)


def test_log_normalizer_consistent():
    fam = iid_family(EXP, 20)
    state = make_state(fam, 20, 1.3, 3, [0.2])
    assert math.exp(kernel_log_normalizer(fam, state)) == kernel_normalizer(fam, state)


# --- g_k density -----------------------------------------------------------

def test_k1_large_is_kernel_over_normalizer():
    fam = iid_family(ComponentSpec.gamma(2.0, 1.0), 25)
    state = make_state(fam, 25, 2.4, 1)
    assert state.tilt.theta == pytest.approx(small_k_tilt(fam, 25, 2.4).theta, abs=1e-14)
    y = 1.9
    expected = math.log(kernel_unnormalized(fam, state, y)) - kernel_log_normalizer(fam, state)
    assert g_k_log_density(fam, 25, 2.4, 1, [y], "large_k") == pytest.approx(expected, abs=1e-12)


def test_small_k_zero_tilt_gaussian():
    fam = iid_family(GAUSS, 50)
    y = np.array([0.3, -1.2, 2.0])
    assert g_k_log_density(fam, 50, 0.0, 3, y, "small_k") == pytest.approx(stats.norm.logpdf(y).sum(), abs=1e-12)


def test_large_k_gaussian_equals_exact_conditional():
    n, a, k = 40, 0.7, 30
    fam = iid_family(GAUSS, n)
    rng = np.random.default_rng(5)
    Y = sample_g_k_paths(fam, n, a, k, 50, rng, "large_k").paths
    np.testing.assert_allclose(g_k_log_density_paths(fam, n, a, k, Y, "large_k"),
                               gaussian_conditional_log_density(fam, n, a, k, Y), atol=1e-9)


def test_exchangeability():
    n, k = 10 ** 4, 3
    for spec, a in ((GAUSS, 0.02), (EXP, 1.01)):
        fam = iid_family(spec, n)
        rng = np.random.default_rng(3)
        Y = sample_g_k_paths(fam, n, a, k, 20, rng, "large_k").paths
        base = g_k_log_density_paths(fam, n, a, k, Y, "large_k")
        for perm in itertools.permutations(range(k)):
            other = g_k_log_density_paths(fam, n, a, k, Y[:, perm], "large_k")
            assert np.max(np.abs(other - base)) < 1e-6
        small = g_k_log_density_paths(fam, n, a, k, Y, "small_k")
        np.testing.assert_allclose(g_k_log_density_paths(fam, n, a, k, Y[:, ::-1], "small_k"), small, atol=1e-12)


def test_small_large_agreement():
    n, k = 10 ** 4, 5
    fam = iid_family(GAUSS, n)
    rng = np.random.default_rng(8)
    Y = sample_g_k_paths(fam, n, 1.0, k, 2000, rng, "small_k").paths
    diff = g_k_log_density_paths(fam, n, 1.0, k, Y, "small_k") - g_k_log_density_paths(fam, n, 1.0, k, Y, "large_k")
    assert np.mean(np.abs(diff)) <= 0.05


def test_residual_mean_out_of_support():
    fam = iid_family(EXP, 10)
    with pytest.raises(ResidualMeanOutOfSupport):
        g_k_log_density(fam, 10, 1.0, 3, [6.0, 5.0, 0.5], "large_k")
    with pytest.raises(ResidualMeanOutOfSupport):
        make_state(fam, 10, 1.0, 3, [11.0])
    with pytest.raises(ResidualMeanOutOfSupport):
        small_k_tilt(fam, 10, -1.0)


def test_infeasible_last_value_has_zero_density():
    # y_1 = 9.5 leaves 0.5 for nine positive terms: residual mean inside,
    # but y_2 = 0.6 would exhaust it
    fam = iid_family(EXP, 10)
    assert g_k_log_density(fam, 10, 1.0, 2, [9.5, 0.6], "large_k") == -math.inf


def test_density_argument_checks():
    fam = iid_family(GAUSS, 10)
    with pytest.raises(ConfigError):
        g_k_log_density(fam, 10, 0.0, 3, [0.0, 0.0], "large_k")
    with pytest.raises(ConfigError):
        g_k_log_density(fam, 12, 0.0, 3, [0.0, 0.0, 0.0], "large_k")


# --- sampling --------------------------------------------------------------

def test_sampling_examples():
    rng = np.random.default_rng(21)
    s = sample_g_k_paths(iid_family(GAUSS, 100), 100, 0.0, 3, 100_000, rng, "small_k")
    assert abs(s.paths[:, 0].mean()) < 0.02
    s = sample_g_k_paths(iid_family(GAUSS, 100), 100, 1.0, 5, 100_000, rng, "large_k")
    assert abs(s.paths[:, 0].mean() - 1.0) < 0.02
    assert s.paths.shape == (100_000, 5)
    assert s.regime == "large_k"


def test_sequential_consistency():
    rng = np.random.default_rng(4)
    for kind in KINDS:
        n = 60
        fam = random_family(rng, n, kind)
        a = float(mean_tilt_function(fam, 1, n, random_theta(rng, fam))[0])
        s = sample_g_k_paths(fam, n, a, 20, 40, rng, "large_k")
        np.testing.assert_allclose(s.step_log_density.sum(axis=1), s.log_density, rtol=0, atol=1e-10)
        again = g_k_log_density_paths(fam, n, a, 20, s.paths, "large_k")
        np.testing.assert_allclose(again, s.log_density, rtol=0, atol=1e-10)


def test_sampler_matches_kernel_distribution():
    # first-step draws against the kernel CDF by independent quadrature
    n, a = 20, 0.6
    fam = iid_family(ComponentSpec.gamma(1.3, 1.0), n)
    state = make_state(fam, n, a, 1)
    C = kernel_normalizer(fam, state)
    y = np.linspace(0, 1, 200_001) ** 4 * 30
    d = kernel_unnormalized(fam, state, y) / C
    F = integrate.cumulative_trapezoid(d, y, initial=0.0)
    s = sample_g_k_paths(fam, n, a, 1, 20_000, np.random.default_rng(2), "large_k").paths[:, 0]
    assert stats.kstest(s, lambda x: np.interp(x, y, F)).pvalue > 1e-3


def test_sampled_means_near_exact_conditional_mean_exp():
    # for iid laws E[Y_1 | S = n a] = a exactly
    n, a = 200, 1.4
    fam = iid_family(EXP, n)
    s = sample_g_k_paths(fam, n, a, 50, 20_000, np.random.default_rng(9), "large_k")
    se = s.paths[:, 0].std() / math.sqrt(20_000)
    assert abs(s.paths[:, 0].mean() - a) < 4 * se + 0.01


def test_bounded_paths_stay_feasible():
    n, a = 30, 0.4
    fam = iid_family(ComponentSpec.gamma(0.8, 2.0), n)
    s = sample_g_k_paths(fam, n, a, 28, 3000, np.random.default_rng(6), "large_k")
    resid = n * a - np.cumsum(s.paths, axis=1)
    assert np.all(s.paths > 0)
    assert np.all(resid > 0)
    assert np.all(np.isfinite(s.log_density))


def test_rows_depend_only_on_their_uniforms():
    fam = iid_family(EXP, 40)
    a = sample_g_k_paths(fam, 40, 1.2, 30, 10, np.random.default_rng(1), "large_k")
    b = sample_g_k_paths(fam, 40, 1.2, 30, 25, np.random.default_rng(1), "large_k")
    np.testing.assert_array_equal(a.paths, b.paths[:10])
    np.testing.assert_array_equal(a.log_density, b.log_density[:10])


def test_sample_g_k_single_path():
    y = sample_g_k(iid_family(GAUSS, 20), 20, 0.5, 4, "auto", np.random.default_rng(0))
    assert y.shape == (4,)


def test_quadrature_levels_cover_all_paths():
    fam = iid_family(ComponentSpec.gamma(2.5, 1.0), 50)
    s = sample_g_k_paths(fam, 50, 2.0, 10, 500, np.random.default_rng(0), "large_k")
    from tiltcond.conditional_law import _solve_step
    step = _solve_step(fam, 50, 2.0, 3, s.paths[:, :3].sum(axis=1), s.tilts[:, 2])
    quad = _normalize(fam, step)
    rows = np.sort(np.concatenate([lev.rows for lev in quad.levels]))
    np.testing.assert_array_equal(rows, np.arange(500))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), kind=st.sampled_from(KINDS))
def test_random_state_normalizes(seed, kind):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 60))
    fam = random_family(rng, n, kind)
    a = float(mean_tilt_function(fam, 1, n, random_theta(rng, fam))[0])
    k = int(rng.integers(1, n - 1))
    i = int(rng.integers(0, k))
    prefix = sample_g_k_paths(fam, n, a, k, 1, rng, "large_k").paths[0, :i]
    state = make_state(fam, n, a, k, prefix)
    step = _state_step(fam, state)
    C = kernel_normalizer(fam, state)
    lo, hi = step.lo[0], step.hi[0]
    m = float(step.mean_next[0])
    sd = float(step.sd_next[0])
    lo2 = max(m - 40 * sd, fam.support[0])
    hi2 = min(m + 40 * sd, step.feas_hi[0])
    val, _ = integrate.quad(lambda y: kernel_unnormalized(fam, state, y) / C, lo2, hi2,
                            points=[min(max(m, lo2), hi2)], limit=500, epsabs=0, epsrel=1e-12)
    assert abs(val - 1) <= 1e-8
    assert lo <= m <= hi
