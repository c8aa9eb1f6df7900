import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from skwave.spectrum import GridField, analyze, build_domain, synthesize, weyl_constants, weyl_slope


def test_unit_interval_eigenvalues_are_squares():
    dom = build_domain(1, [math.pi], 10)
    np.testing.assert_allclose(dom.eigenvalues, np.arange(1, 11) ** 2, rtol=1e-14)
    assert dom.modes[:, 0].tolist() == list(range(1, 11))


def test_square_degenerate_pair_is_ordered_lexicographically():
    dom = build_domain(2, [math.pi, math.pi], 3)
    assert dom.eigenvalues.tolist() == pytest.approx([2.0, 5.0, 5.0])
    assert dom.modes.tolist() == [[1, 1], [1, 2], [2, 1]]


def test_rectangle_matches_brute_force_enumeration():
    L = (1.0, 2.5)
    dom = build_domain(2, L, 40)
    vals = sorted((i * math.pi / L[0]) ** 2 + (j * math.pi / L[1]) ** 2
                  for i in range(1, 60) for j in range(1, 60))
    np.testing.assert_allclose(dom.eigenvalues, vals[:40], rtol=1e-13)


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        build_domain(1, [-1.0], 4)
    with pytest.raises(ValueError):
        build_domain(2, [1.0, 1.0, 1.0], 4)
    with pytest.raises(ValueError):
        build_domain(1, [1.0], 8, grid_res=8)
    with pytest.raises(ValueError):
        build_domain(1, [1.0], 0)


def test_grid_field_rejects_nan():
    with pytest.raises(ValueError):
        GridField(np.array([0.0, np.nan]), "x")


@settings(max_examples=25, deadline=None)
@given(d=st.integers(1, 3), K=st.integers(1, 30), seed=st.integers(0, 2**16))
def test_analyze_inverts_synthesize(d, K, seed):
    rng = np.random.default_rng(seed)
    dom = build_domain(d, list(rng.uniform(0.5, 3.0, d)), K)
    c = rng.normal(size=K)
    np.testing.assert_allclose(analyze(dom, synthesize(dom, c)), c, atol=1e-12)


def test_basis_is_orthonormal_under_midpoint_rule():
    dom = build_domain(2, [1.0, 2.0], 12)
    gram = dom.basis @ dom.basis.T * dom.cell_volume
    np.testing.assert_allclose(gram, np.eye(12), atol=1e-12)


def test_cross_domain_fields_are_rejected():
    a = build_domain(1, [1.0], 4)
    b = build_domain(1, [2.0], 4)
    with pytest.raises(ValueError):
        analyze(b, synthesize(a, np.ones(4)))


def test_sup_norm_bound_holds_on_grid():
    dom = build_domain(2, [1.0, 3.0], 20)
    assert np.abs(dom.basis).max() <= dom.sup_norm_bound + 1e-14


@pytest.mark.parametrize("d", [1, 2, 3])
def test_weyl_growth(d):
    dom = build_domain(d, [1.0] * d, 200)
    assert abs(weyl_slope(dom) - 2.0 / d) < 0.25
    c, C = weyl_constants(dom)
    assert 0 < c <= C
