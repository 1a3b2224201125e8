import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from knotnewton.model import Interval, Network
from knotnewton.quadrature import (QuadratureError, QuadratureSpec, composite_rule, integrate,
                                   merged_panels)


def sech2(t):
    e = np.exp(-2 * np.abs(t))
    return 4 * e / (1 + e) ** 2


def test_polynomial():
    assert integrate(lambda x: x ** 2, [0, 1]) == pytest.approx(1 / 3, abs=1e-14)


def test_sharp_layer():
    val = integrate(lambda x: sech2((x - 0.5) / 1e-3), [0, 1])
    assert val == pytest.approx(0.002 * math.tanh(500), abs=1e-12)


def test_heaviside_with_split_panel():
    assert integrate(lambda x: np.where(x > 0.5, 1.0, 0.0), [0, 0.5, 1]) == 0.5


@pytest.mark.parametrize("k", [2, 3, 5, 8])
def test_exact_for_degree_2k_minus_1(k):
    spec = QuadratureSpec(base_order=k)
    rng = np.random.default_rng(k)
    coef = rng.normal(size=2 * k)
    poly = np.polynomial.Polynomial(coef)
    exact = poly.integ()(1.7) - poly.integ()(-0.3)
    # on a single panel the accepted rule uses 2k+1 nodes, exact well beyond 2k-1
    assert integrate(poly, [-0.3, 1.7], spec) == pytest.approx(exact, rel=1e-13, abs=1e-13)


@settings(max_examples=40, deadline=None)
@given(st.floats(-2, 0), st.floats(0.01, 2), st.floats(0.01, 2), st.floats(0.5, 5))
def test_additivity(a, l1, l2, freq):
    fn = lambda x: np.sin(freq * x) * np.exp(0.3 * x)
    b, c = a + l1, a + l1 + l2
    whole = integrate(fn, [a, c])
    parts = integrate(fn, [a, b]) + integrate(fn, [b, c])
    scale = integrate(lambda x: np.abs(fn(x)), [a, c])
    assert abs(whole - parts) <= 2 * 1e-10 * max(scale, 1e-300) + 1e-15


def test_layer_against_trapezoid_oracle():
    eps = 1e-3
    fn = lambda x: sech2((x ** 2 - 0.25) / eps)
    x = np.linspace(-1, 1, 10_000_001)
    y = fn(x)
    oracle = (x[1] - x[0]) * (y.sum() - 0.5 * (y[0] + y[-1]))
    val = integrate(fn, [-1, 1])
    assert val == pytest.approx(oracle, rel=1e-8)


def test_non_finite_integrand():
    with pytest.raises(QuadratureError):
        integrate(lambda x: np.where(x > 0.9, np.inf, 1.0), [0, 1])


def test_depth_exhaustion_is_flagged():
    spec = QuadratureSpec(max_depth=2)
    val, rule = integrate(lambda x: np.abs(x - 1 / 3) ** 0.5, [0, 1], spec, full_output=True)
    assert rule.exhausted
    exact = (2 / 3) * ((1 / 3) ** 1.5 + (2 / 3) ** 1.5)
    assert val == pytest.approx(exact, rel=1e-3)


def test_merged_panels_examples():
    unit = Interval(0, 1)
    net = Network(unit, 0.0, [0, 0, 0], [0.3, 0.7])
    np.testing.assert_allclose(merged_panels(net, [0.5]), [0, 0.3, 0.5, 0.7, 1])
    net = Network(unit, 0.0, [0, 0], [0.5])
    np.testing.assert_allclose(merged_panels(net, [0.5]), [0, 0.5, 1])
    net = Network(Interval(-1, 1), 0.0, [0.0])
    np.testing.assert_allclose(merged_panels(net), [-1, 1])


def test_merged_panels_drops_outside_points():
    net = Network(Interval(0, 1), 0.0, [0, 0, 0], [-0.2, 1.5])
    np.testing.assert_allclose(merged_panels(net, [2.0]), [0, 1])


def test_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(base_order=1)
    with pytest.raises(ValueError):
        QuadratureSpec(rel_tol=0)
    with pytest.raises(ValueError):
        QuadratureSpec(max_depth=0)


def test_shared_rule_resolves_every_function():
    fns = [lambda x: np.ones_like(x), lambda x: sech2((x - 0.2) / 1e-3)]
    rule = composite_rule(fns, [0, 1])
    assert rule(np.ones_like(rule.nodes)) == pytest.approx(1.0, abs=1e-14)
    assert rule(fns[1](rule.nodes)) == pytest.approx(1e-3 * (math.tanh(800) + math.tanh(200)), rel=1e-10)


def test_deterministic():
    fn = lambda x: np.exp(np.sin(7 * x))
    assert integrate(fn, [0, 0.3, 1]) == integrate(fn, [0, 0.3, 1])
