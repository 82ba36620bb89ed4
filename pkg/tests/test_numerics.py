import math

import numpy as np
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from supportbounds._numerics import binary_entropy, gauss_expect, gh_nodes, log_binom


@given(st.integers(0, 400), st.data())
def test_log_binom_matches_exact_integers(n, data):
    k = data.draw(st.integers(0, n))
    assert math.isclose(log_binom(n, k), math.log(math.comb(n, k)), rel_tol=1e-12, abs_tol=1e-12)


def test_log_binom_rejects_bad_arguments():
    import pytest

    with pytest.raises(ValueError):
        log_binom(3, 4)


def test_binary_entropy_values():
    assert binary_entropy(0.5) == math.log(2)
    assert binary_entropy(0.0) == 0.0
    assert binary_entropy(1.0) == 0.0
    assert math.isclose(binary_entropy(0.25), -(0.25 * math.log(0.25) + 0.75 * math.log(0.75)))


@given(st.floats(0.0, 1.0))
def test_binary_entropy_symmetric_and_bounded(p):
    h = binary_entropy(p)
    assert 0.0 <= h <= math.log(2) + 1e-15
    assert math.isclose(h, binary_entropy(1 - p), abs_tol=1e-12)  # 1 - p rounds


def test_gh_nodes_integrate_moments():
    x, w = gh_nodes(32)
    assert math.isclose(w.sum(), 1.0)
    assert math.isclose(float(w @ x**2), 1.0, rel_tol=1e-12)
    assert math.isclose(float(w @ x**4), 3.0, rel_tol=1e-12)


@given(st.floats(0.01, 4.0))
def test_gauss_expect_matches_adaptive_quadrature(var):
    f = lambda z: np.exp(np.sin(z))  # noqa: E731  (entire, so GH converges fast)
    val, err = gauss_expect(f, var)
    ref = integrate.quad(lambda z: f(z) * stats.norm.pdf(z, scale=math.sqrt(var)), -np.inf, np.inf, epsabs=1e-13)[0]
    assert abs(val - ref) < 1e-6
    assert err < 1e-6


@given(st.floats(0.01, 9.0))
def test_gauss_expect_cosine_closed_form(var):
    val, _ = gauss_expect(np.cos, var)
    assert math.isclose(val, math.exp(-var / 2), abs_tol=1e-10)
