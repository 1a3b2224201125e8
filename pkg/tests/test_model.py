import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from knotnewton.model import (Interval, Network, canonical_order, canonicalize, derivative,
                              evaluate, mesh_quantities, uniform_network)

UNIT = Interval(0.0, 1.0)


def test_evaluate_examples():
    assert evaluate(Network(UNIT, 1.0, [2.0]), 0.5) == pytest.approx(2.0)
    net = Network(UNIT, 0.0, [1.0, -2.0], [0.5])
    assert evaluate(net, 0.75) == pytest.approx(0.25)
    assert evaluate(net, 0.25) == pytest.approx(0.25)


def test_derivative_examples():
    net = Network(UNIT, 0.0, [1.0, -2.0], [0.5])
    assert derivative(net, 0.25) == 1.0
    assert derivative(net, 0.5) == 0.0
    assert derivative(net, 0.75) == -1.0


def test_mesh_quantities_examples():
    m = mesh_quantities(Network(UNIT, 0.0, [0, 0, 0], [0.2, 0.5]))
    np.testing.assert_allclose(m.h, [0.2, 0.3, 0.5])
    assert m.h_min == pytest.approx(0.2)
    np.testing.assert_allclose(m.h_tilde, [0.2, 0.3])
    np.testing.assert_allclose(m.d, [0.8, 0.5])

    m = mesh_quantities(Network(UNIT, 0.0, [0.0]))
    np.testing.assert_allclose(m.h, [1.0])
    assert m.h_min == 1.0 and m.h_tilde.size == 0 and m.d.size == 0

    m = mesh_quantities(Network(Interval(-1, 1), 0.0, [0, 0], [0.5]))
    np.testing.assert_allclose(m.h, [1.5, 0.5])
    assert m.h_min == 0.5
    np.testing.assert_allclose(m.h_tilde, [0.5])
    np.testing.assert_allclose(m.d, [0.5])


def test_canonicalize_examples():
    net = canonicalize([1, 2, 3], [0.7, 0.3], UNIT)
    np.testing.assert_array_equal(net.c, [1, 3, 2])
    np.testing.assert_array_equal(net.b, [0.3, 0.7])

    net = canonicalize([1, 2, 3], [0.5, 0.5], UNIT, h_floor=1e-12)
    assert net.b[0] == 0.5
    assert net.b[1] - net.b[0] >= 1e-12
    # the nudge may round up by an ulp so that the gap is never below h_floor
    assert net.b[1] == pytest.approx(0.5 + 1e-12, abs=4e-16)

    net = canonicalize([1, 2], [0.4], UNIT)
    np.testing.assert_array_equal(net.c, [1, 2])
    np.testing.assert_array_equal(net.b, [0.4])


def test_canonicalize_rejects_nonfinite():
    with pytest.raises(ValueError):
        canonicalize([1, np.nan], [0.4], UNIT)
    with pytest.raises(ValueError):
        canonicalize([1, 2], [np.inf], UNIT)


def test_canonicalize_keeps_outside_breakpoints():
    net = canonicalize([1, 2, 3], [1.5, 0.5], UNIT)
    np.testing.assert_array_equal(net.b, [0.5, 1.5])
    np.testing.assert_array_equal(net.outside, [False, True])


def test_interval_and_shape_validation():
    with pytest.raises(ValueError):
        Interval(1.0, 1.0)
    with pytest.raises(ValueError):
        Network(UNIT, 0.0, [1.0, 2.0], [])


def test_json_round_trip_is_exact():
    rng = np.random.default_rng(3)
    net = Network(Interval(-1, 1), 0.1 / 3, rng.normal(size=5), np.sort(rng.uniform(-1, 1, 4)))
    back = Network.from_json(net.to_json())
    np.testing.assert_array_equal(back.c, net.c)
    np.testing.assert_array_equal(back.b, net.b)
    assert back.alpha == net.alpha
    assert set(json.loads(net.to_json())) == {"interval", "alpha", "c", "b"}


def test_uniform_network():
    net = uniform_network(Interval(-1, 1), 3)
    np.testing.assert_allclose(net.b, [-0.5, 0.0, 0.5])
    assert np.all(net.c == 0)


# -- properties ------------------------------------------------------------------

@st.composite
def networks(draw, max_n=6):
    n = draw(st.integers(0, max_n))
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    b = np.sort(rng.uniform(0.02, 0.98, n))
    while n > 1 and np.min(np.diff(b)) < 1e-3:
        b = np.sort(rng.uniform(0.02, 0.98, n))
    return Network(UNIT, rng.normal(), rng.normal(size=n + 1) * 3, b)


def _nodal_oracle(net, x):
    # nodal values at every knot and the right end, then linear interpolation
    nodes = np.concatenate(([UNIT.left], net.b, [UNIT.right]))
    vals = [net.alpha + sum(ci * max(0.0, t - bi) for ci, bi in zip(net.c, net.knots)) for t in nodes]
    return np.interp(x, nodes, vals)


@settings(max_examples=60, deadline=None)
@given(networks())
def test_evaluate_matches_hat_reconstruction(net):
    x = np.linspace(0, 1, 1000)
    ref = _nodal_oracle(net, x)
    scale = max(1.0, np.max(np.abs(ref)))
    assert np.max(np.abs(evaluate(net, x) - ref)) <= 1e-12 * scale


@settings(max_examples=60, deadline=None)
@given(networks(), st.floats(0, 1), st.floats(0, 1))
def test_evaluate_is_lipschitz(net, x, y):
    L = np.sum(np.abs(net.c))
    assert abs(evaluate(net, x) - evaluate(net, y)) <= L * abs(x - y) + 1e-12


@settings(max_examples=60, deadline=None)
@given(networks(max_n=5).filter(lambda n: n.n > 0))
def test_slope_jump_and_midpoint(net):
    pts = np.concatenate(([0.0], net.b, [1.0]))
    eps = 0.25 * np.min(np.diff(pts))
    for i, bi in enumerate(net.b, start=1):
        left, right = derivative(net, bi - eps), derivative(net, bi + eps)
        assert right - left == pytest.approx(net.c[i], abs=1e-12)
        assert derivative(net, bi) == pytest.approx(0.5 * (left + right), abs=1e-12)
        assert derivative(net, bi) == pytest.approx(net.c[:i].sum() + net.c[i] / 2, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=1, max_size=6), st.integers(0, 1000))
def test_canonicalize_is_idempotent_and_sorted(b, seed):
    c = np.random.default_rng(seed).normal(size=len(b) + 1)
    once = canonicalize(c, b, UNIT)
    twice = canonicalize(once.c, once.b, UNIT)
    assert once == twice
    assert np.all(np.diff(once.b) >= 1e-12 * UNIT.length)


def test_canonical_order_reports_permutation():
    c, b, perm = canonical_order([0, 1, 2, 3], [0.9, 0.1, 0.5], UNIT)
    np.testing.assert_array_equal(perm, [1, 2, 0])
    np.testing.assert_array_equal(c, [0, 2, 3, 1])
