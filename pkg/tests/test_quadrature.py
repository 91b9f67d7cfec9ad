from __future__ import annotations

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss

from torus_nystrom.quadrature import (
    COARSE_ORDER,
    FINE_ORDER,
    build_interp,
    coarse_to_fine,
    gauss_legendre,
    interp_to_fine,
    lagrange_basis,
    monomial_coeffs,
    nodal_weights,
    tensor_grid,
)


def test_gl_midpoint():
    rule = gauss_legendre(1)
    assert rule.nodes == pytest.approx([0.0], abs=1e-15)
    assert rule.weights == pytest.approx([2.0], abs=1e-15)


def test_gl_two_point():
    rule = gauss_legendre(2)
    assert rule.nodes == pytest.approx([-0.5773502691896258, 0.5773502691896258], abs=1e-15)
    assert rule.weights == pytest.approx([1.0, 1.0], abs=1e-15)


def test_gl10_degree_18():
    rule = gauss_legendre(10)
    assert abs(np.sum(rule.weights * rule.nodes**18) - 2 / 19) < 1e-14


@pytest.mark.parametrize("n", [1, 2, 3, 7, 10, 16, 24, 32])
def test_gl_rule_invariants(n):
    rule = gauss_legendre(n)
    assert np.all(np.diff(rule.nodes) > 0)
    assert np.max(np.abs(rule.nodes + rule.nodes[::-1])) < 1e-15
    assert np.all(rule.weights > 0)
    assert abs(rule.weights.sum() - 2) < 1e-14
    for d in range(2 * n):
        exact = 0.0 if d % 2 else 2.0 / (d + 1)
        assert abs(np.sum(rule.weights * rule.nodes**d) - exact) < 1e-13


@pytest.mark.parametrize("n", [5, 10, 16, 40])
def test_gl_matches_numpy(n):
    x, w = leggauss(n)
    rule = gauss_legendre(n)
    assert np.max(np.abs(rule.nodes - x)) < 1e-14
    assert np.max(np.abs(rule.weights - w)) < 1e-14


def test_gl_rejects_bad_order():
    with pytest.raises(ValueError):
        gauss_legendre(0)


def test_interp_constant_and_t9():
    op = build_interp(gauss_legendre(COARSE_ORDER), gauss_legendre(FINE_ORDER))
    assert op.matrix.shape == (FINE_ORDER, COARSE_ORDER)
    assert np.max(np.abs(op.matrix @ np.ones(COARSE_ORDER) - 1)) < 1e-13
    xc = gauss_legendre(COARSE_ORDER).nodes
    xf = gauss_legendre(FINE_ORDER).nodes
    assert np.max(np.abs(op.matrix @ xc**9 - xf**9)) < 1e-11


def test_interp_sin():
    op = coarse_to_fine()
    xc = gauss_legendre(COARSE_ORDER).nodes
    xf = gauss_legendre(FINE_ORDER).nodes
    assert np.max(np.abs(op.matrix @ np.sin(xc) - np.sin(xf))) < 1e-10


@pytest.mark.parametrize("deg", range(10))
def test_interp_polynomial_exactness(deg):
    xc = gauss_legendre(COARSE_ORDER).nodes
    xf = gauss_legendre(FINE_ORDER).nodes
    assert np.max(np.abs(coarse_to_fine().matrix @ (xc - 0.3) ** deg - (xf - 0.3) ** deg)) < 1e-11


def _tensor(order, f):
    t, _ = tensor_grid(gauss_legendre(order))
    return f(t[..., 0], t[..., 1])


def test_interp_to_fine_fields():
    assert np.max(np.abs(interp_to_fine(np.ones((10, 10))) - 1)) < 1e-13
    f = lambda a, b: a**3 * b**2
    assert np.max(np.abs(interp_to_fine(_tensor(10, f)) - _tensor(16, f))) < 1e-11
    g = lambda a, b: np.exp(a + b) / 4
    out = interp_to_fine(_tensor(10, g))
    # independent oracle: numpy's least-squares Legendre fit through the ten nodes
    xc = gauss_legendre(10).nodes
    xf = gauss_legendre(16).nodes
    fit = np.polynomial.legendre.Legendre.fit(xc, np.exp(xc), 9)(xf)
    assert np.max(np.abs(out - np.outer(fit, fit) / 4)) < 1e-13
    # the degree-9 interpolant itself is 1.137e-9 away from exp(t1 + t2)/4 at the worst node
    assert np.max(np.abs(out - _tensor(16, g))) < 1.2e-9


def test_interp_to_fine_batched():
    f = lambda a, b: np.cos(a - 2 * b)
    stack = np.stack([_tensor(10, f), 2 * _tensor(10, f)])
    out = interp_to_fine(stack)
    assert out.shape == (2, 16, 16)
    assert np.allclose(out[1], 2 * out[0], atol=1e-14)


def test_interp_then_integrate_matches_coarse_rule():
    _, w10 = tensor_grid(gauss_legendre(10))
    _, w16 = tensor_grid(gauss_legendre(16))
    f = lambda a, b: (1 + a) ** 9 * (b - 0.5) ** 7 + a * b
    lhs = np.sum(interp_to_fine(_tensor(10, f)) * w16)
    rhs = np.sum(_tensor(10, f) * w10)
    assert abs(lhs - rhs) < 1e-12 * max(1.0, abs(rhs))


def test_tensor_grid_layout():
    rule = gauss_legendre(4)
    t, w = tensor_grid(rule)
    assert t.shape == (4, 4, 2)
    # axis 0 runs over the t1 node, axis 1 over the t2 node
    assert np.all(t[:, 0, 0] == rule.nodes)
    assert np.all(t[0, :, 1] == rule.nodes)
    assert np.allclose(w, np.outer(rule.weights, rule.weights))


def test_monomial_coeffs_constant_and_product():
    alpha = monomial_coeffs(np.ones((16, 16))).coeffs
    ref = np.zeros((16, 16))
    ref[0, 0] = 1
    assert np.max(np.abs(alpha - ref)) < 1e-10
    alpha = monomial_coeffs(_tensor(16, lambda a, b: a * b)).coeffs
    ref = np.zeros((16, 16))
    ref[1, 1] = 1
    # rounding of the sampled values alone, pushed through the exact inverse,
    # already moves the high-degree coefficients by 1.6e-8
    assert np.max(np.abs(alpha - ref)) < 1e-7
    assert np.max(np.abs(alpha[:4, :4] - ref[:4, :4])) < 1e-10


def test_monomial_round_trip():
    rng = np.random.default_rng(1)
    alpha = rng.uniform(-1, 1, (16, 16))
    t, _ = tensor_grid(gauss_legendre(16))
    V1 = t[..., 0][..., None] ** np.arange(16)
    V2 = t[..., 1][..., None] ** np.arange(16)
    vals = np.einsum("pqm,pqn,mn->pq", V1, V2, alpha)
    back = monomial_coeffs(vals).coeffs
    assert np.max(np.abs(back - alpha)) < 1e-6 * np.max(np.abs(alpha))


def test_monomial_reproduces_smooth_samples():
    f = _tensor(16, lambda a, b: np.exp(0.5 * a) * np.cos(b))
    alpha = monomial_coeffs(f).coeffs
    t, _ = tensor_grid(gauss_legendre(16))
    V1 = t[..., 0][..., None] ** np.arange(16)
    V2 = t[..., 1][..., None] ** np.arange(16)
    back = np.einsum("pqm,pqn,mn->pq", V1, V2, alpha)
    assert np.max(np.abs(back - f)) < 1e-9 * np.max(np.abs(f))


def test_nodal_weights_reproduce_moment_sums():
    rng = np.random.default_rng(2)
    M = rng.normal(size=(3, 16, 16))
    f = rng.normal(size=(3, 16, 16))
    W = nodal_weights(M)
    for b in range(3):
        direct = np.sum(monomial_coeffs(f[b]).coeffs * M[b])
        # both routes carry the ~1e7 conditioning of the monomial Vandermonde
        assert abs(np.sum(W[b] * f[b]) - direct) < 1e-6 * np.sum(np.abs(M[b])) * np.max(np.abs(f[b]))


def test_nodal_weights_integrate_polynomials():
    # moments of [-1, 1]^2 for x^m y^n: weights must then equal the GL16 tensor weights
    m = np.arange(16)
    mom1 = np.where(m % 2 == 0, 2.0 / (m + 1), 0.0)
    W = nodal_weights(np.outer(mom1, mom1))
    _, w16 = tensor_grid(gauss_legendre(16))
    assert np.max(np.abs(W - w16)) < 1e-8
    assert abs(np.sum(W) - 4) < 1e-12


def test_lagrange_basis():
    rule = gauss_legendre(10)
    L = lagrange_basis(rule, rule.nodes)
    assert np.allclose(L, np.eye(10), atol=1e-15)
    x = np.linspace(-1.3, 1.3, 41)
    L = lagrange_basis(rule, x)
    assert np.max(np.abs(L.sum(axis=-1) - 1)) < 1e-12
    assert np.max(np.abs(L @ rule.nodes**7 - x**7)) < 1e-12
