import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from instances import instances, tabular_instances
from supportbounds import (
    Bernoulli,
    ConfigError,
    DiscreteDistribution,
    DiscreteIID,
    Fixed,
    Gaussian,
    GroupTestingNoiseless,
    LinearGaussian,
    ProblemDims,
    Probit,
    SupportPartition,
    TabularDiscrete,
    eo_lower_bound,
    eo_second_derivative_bound,
    eo_single_letter,
    exponent_curve,
    mi_discrete_exact,
    optimize_rho,
)
from supportbounds.exponent import (
    central_derivative_at_zero,
    eo_linear_closed_form,
    eo_linear_quadrature,
    eo_probit_quadrature,
)
from supportbounds.info import conditional_mi

LOG2 = math.log(2.0)
GT, FAIR = GroupTestingNoiseless(), Bernoulli(p=0.5)
INSTANCES = instances()


def part(i, k):
    return SupportPartition.with_unknown(i, k)


@given(st.floats(0.0, 1.0))
def test_single_fair_test_exponent_is_linear(rho):
    # sum_y [sum_x 1/2 W^(1/(1+rho))]^(1+rho) = 2 (1/2)^(1+rho), so E_o = rho log 2
    assert eo_single_letter(GT, FAIR, None, part(1, 1), rho) == pytest.approx(rho * LOG2, abs=1e-14)


def test_zero_at_origin_for_every_instance():
    for inst in INSTANCES:
        for i in range(1, inst.k + 1):
            assert eo_single_letter(inst.model, inst.q, inst.beta, part(i, inst.k), 0.0) == 0.0


@given(st.sampled_from(INSTANCES), st.data())
def test_concave_nondecreasing_and_below_tangent(inst, data):
    i = data.draw(st.integers(1, inst.k))
    r = sorted(data.draw(st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3)))
    p = part(i, inst.k)
    e = [eo_single_letter(inst.model, inst.q, inst.beta, p, x) for x in r]
    mi = mi_discrete_exact(inst.model, inst.q, inst.beta, p).value
    assert e[0] <= e[1] + 1e-12 <= e[2] + 2e-12
    assert all(v <= x * mi + 1e-12 for v, x in zip(e, r))
    if r[2] - r[0] > 1e-6:
        lam = (r[2] - r[1]) / (r[2] - r[0])
        assert lam * e[0] + (1 - lam) * e[2] <= e[1] + 1e-12


@pytest.mark.parametrize("inst", INSTANCES, ids=lambda s: s.name)
def test_slope_at_zero_is_mutual_information(inst):
    for i in range(1, inst.k + 1):
        p = part(i, inst.k)
        mi = mi_discrete_exact(inst.model, inst.q, inst.beta, p).value
        assert central_derivative_at_zero(inst.model, inst.q, inst.beta, p) == pytest.approx(mi, rel=1e-6)


class TestGaussianChannels:
    @given(st.floats(0.001, 20.0), st.floats(0.1, 1e4), st.floats(0.001, 1.0))
    def test_linear_closed_form_matches_quadrature(self, v1, snr, rho):
        assert eo_linear_quadrature(v1, snr, rho) == pytest.approx(eo_linear_closed_form(v1, snr, rho), abs=1e-8)

    def test_linear_slope_is_mi(self):
        m, q, b = LinearGaussian(50.0), Gaussian(0.1), np.array([1.0, -0.5])
        mi = conditional_mi(m, q, b, part(2, 2)).value
        assert central_derivative_at_zero(m, q, b, part(2, 2)) == pytest.approx(mi, rel=1e-6)

    def test_probit_single_variable_against_adaptive_quadrature(self):
        # v2 = 0: E_o(1) = -log(2 [int sqrt(Phi(s)) phi(s) ds]^2) by symmetry of the two outcomes
        inner = integrate.quad(lambda s: math.sqrt(stats.norm.cdf(s)) * stats.norm.pdf(s), -np.inf, np.inf, epsabs=1e-14)[0]
        assert eo_probit_quadrature(1.0, 0.0, 1.0) == pytest.approx(-math.log(2 * inner**2), abs=1e-10)

    @pytest.mark.parametrize("i,k", [(1, 1), (1, 2), (2, 3), (3, 3)])
    def test_probit_slope_is_mi(self, i, k):
        m, q, b = Probit(), Gaussian(1.0), np.ones(k)
        mi = conditional_mi(m, q, b, part(i, k)).value
        assert central_derivative_at_zero(m, q, b, part(i, k)) == pytest.approx(mi, rel=1e-6)

    def test_rho_range_checked(self):
        with pytest.raises(ConfigError):
            eo_single_letter(LinearGaussian(1.0), Gaussian(1.0), [1.0], part(1, 1), 1.5)


class TestLowerBound:
    def test_fixed_prior_penalty(self):
        dims = ProblemDims(10, 2, 40)
        m, q, b = LinearGaussian(10.0), Gaussian(1 / 40), (1.0, 2.0)
        want = eo_single_letter(m, q, np.array(b), part(1, 2), 0.6) - 0.6 * 2 / 40
        assert eo_lower_bound(m, q, Fixed(b), part(1, 2), 0.6, dims) == pytest.approx(want, abs=1e-15)

    def test_uniform_sign_prior_doubles_penalty(self):
        inst = [s for s in INSTANCES if s.name == "logistic_sign_k2"][0]
        prior = DiscreteIID((-1.0, 1.0), (0.5, 0.5))
        dims = ProblemDims(10, 2, 25)
        worst = min(eo_single_letter(inst.model, inst.q, np.array(b), part(1, 2), 0.5) for b in [(-1, -1), (-1, 1), (1, -1), (1, 1)])
        got = eo_lower_bound(inst.model, inst.q, prior, part(1, 2), 0.5, dims)
        assert got == pytest.approx(worst - 2 * 0.5 * 2 / 25, abs=1e-15)

    def test_zero_rho(self):
        assert eo_lower_bound(LinearGaussian(3.0), Gaussian(1.0), Fixed((1.0,)), part(1, 1), 0.0, ProblemDims(4, 1, 9)) == 0.0


class TestSecondDerivativeBound:
    def test_deterministic_fair_channel(self):
        # u takes values 0 and 2 with mass 1/2 each on the live cells: E[u log^2 u] = log^2 2
        weighted, sup = eo_second_derivative_bound(GT, FAIR, None, part(1, 1), 0.0)
        assert weighted == pytest.approx(LOG2**2, abs=1e-14)
        assert sup >= weighted

    def test_uninformative_channel(self):
        tab = TabularDiscrete(np.tile([0.3, 0.7], (2, 2, 1)))
        q = DiscreteDistribution((0.0, 1.0), (0.4, 0.6))
        assert eo_second_derivative_bound(tab, q, None, part(1, 2), 0.5) == pytest.approx((0.0, 0.0), abs=1e-30)

    @given(st.sampled_from(tabular_instances()), st.floats(0.0, 1.0), st.data())
    def test_sandwich(self, inst, rho, data):
        from supportbounds.exponent import second_difference

        i = data.draw(st.integers(1, inst.k))
        p = part(i, inst.k)
        weighted, sup = eo_second_derivative_bound(inst.model, inst.q, inst.beta, p, rho)
        assert abs(second_difference(inst.model, inst.q, inst.beta, p, rho)) <= weighted + 1e-6
        assert weighted <= sup + 1e-12


class TestOptimizeRho:
    def test_two_variable_endpoint(self):
        rho, obj = optimize_rho(GT, FAIR, None, part(1, 1), ProblemDims(2, 1, 5))
        assert rho == 1.0
        assert obj == pytest.approx(5 * LOG2, abs=1e-12)

    def test_no_samples(self):
        rho, obj = optimize_rho(GT, FAIR, None, part(1, 1), ProblemDims(2, 1, 0))
        assert obj <= 0.0
        assert rho == 0.0

    @given(st.sampled_from(INSTANCES), st.integers(0, 200), st.integers(4, 40), st.data())
    def test_never_below_origin(self, inst, t, n, data):
        i = data.draw(st.integers(1, inst.k))
        dims = ProblemDims(max(n, 2 * inst.k), inst.k, t)
        rho, obj = optimize_rho(inst.model, inst.q, inst.beta, part(i, inst.k), dims)
        assert 0.0 <= rho <= 1.0
        assert obj >= -math.log(math.comb(inst.k, i)) - 1e-12


class TestCurve:
    def test_group_testing_curve(self):
        curve = exponent_curve(GT, FAIR, None, part(1, 1), np.linspace(0, 1, 11))
        assert curve.eo_values[0] == 0.0
        assert curve.eo_values[-1] == pytest.approx(LOG2, abs=1e-14)
        assert curve.derivative_residual < 1e-6
        assert curve.concavity_violation() <= 1e-12
        assert curve.to_csv().splitlines()[0] == "rho,eo_nats"
        side = curve.sidecar()
        assert side["concave"] and side["second_derivative_bound"] == pytest.approx(LOG2**2, abs=1e-12)

    def test_short_grid_rejected(self):
        with pytest.raises(ConfigError):
            exponent_curve(GT, FAIR, None, part(1, 1), [0.0])

    def test_grid_must_start_at_zero(self):
        with pytest.raises(ConfigError):
            exponent_curve(GT, FAIR, None, part(1, 1), np.linspace(0.1, 1, 9))

    def test_probit_curve_diagnostics(self):
        curve = exponent_curve(Probit(), Gaussian(1.0), [1.0, 1.0], part(1, 2), np.linspace(0, 1, 9))
        assert curve.derivative_residual < 1e-6
        assert curve.second_derivative_bound is None
