"""Cylindrical test functions: factor tables, derivatives, the generator."""

import math

import numpy as np
import pytest

from sgns.basis import CovarianceSpec, SpectralField, enumerate_basis, random_field
from sgns.bilinear import bilinear_b
from sgns.cylinder import (
    CylindricalFunction,
    apply_L,
    apply_L_state,
    apply_damped_L,
    apply_damped_generator,
    bump_factor,
    coordinate_function,
    cos_factor,
    cyl_function,
    eclass_seminorm_sample,
    factor_table,
    poly_factor,
    sampled_quotient_ratio,
    sampled_seminorm_ratios,
    symtensor_sup_norm,
    tanh_factor,
)
from sgns.engine import DampingSpec


def _fd_table(fac, t):
    """Derivative orders 1..3 of a factor by central differences.

    The step grows with the order: the d3 stencil divides by h^3, so tiny
    steps lose everything to rounding."""
    f = lambda s: factor_table(fac, np.asarray(s))[..., 0]
    h1, h2, h3 = 1e-6, 1e-4, 1e-3
    d1 = (f(t + h1) - f(t - h1)) / (2 * h1)
    d2 = (f(t + h2) - 2 * f(t) + f(t - h2)) / h2**2
    d3 = (f(t + 2 * h3) - 2 * f(t + h3) + 2 * f(t - h3) - f(t - 2 * h3)) / (2 * h3**3)
    return d1, d2, d3


FACTORS = [
    poly_factor([0.3, -1.2, 0.5, 0.0, 0.25]),
    cos_factor(1.7, 0.4),
    tanh_factor([0.1, 0.8, -0.3]),
    bump_factor(0.2, 1.5),
]


@pytest.mark.parametrize("fac", FACTORS, ids=[f.kind for f in FACTORS])
def test_factor_derivatives_match_finite_differences(fac):
    t = np.linspace(-1.2, 1.6, 23)
    tab = factor_table(fac, t)
    assert tab.shape == (23, 4)
    d1, d2, d3 = _fd_table(fac, t)
    np.testing.assert_allclose(tab[:, 1], d1, rtol=1e-6, atol=1e-6)
    np.testing.assert_allclose(tab[:, 2], d2, rtol=1e-4, atol=1e-4)
    np.testing.assert_allclose(tab[:, 3], d3, rtol=1e-3, atol=2e-3)


def test_factor_values_closed_forms():
    t = np.array([-0.7, 0.0, 1.3])
    np.testing.assert_allclose(
        factor_table(poly_factor([2.0, -1.0, 3.0]), t)[:, 0],
        2.0 - t + 3.0 * t**2,
        rtol=1e-14,
    )
    np.testing.assert_allclose(
        factor_table(cos_factor(2.0, 0.3), t)[:, 0], np.cos(2.0 * t + 0.3), rtol=1e-14
    )
    np.testing.assert_allclose(
        factor_table(tanh_factor([0.0, 1.5]), t)[:, 0], np.tanh(1.5 * t), rtol=1e-14
    )
    bump = factor_table(bump_factor(0.0, 1.0), np.array([0.0, 0.5, 1.0, 2.0]))[:, 0]
    assert bump[0] == pytest.approx(1.0)
    assert bump[1] == pytest.approx(math.exp(-1.0 / 0.75 + 1.0))
    assert bump[2] == 0.0 and bump[3] == 0.0


def test_bump_is_smooth_at_the_edge():
    tab = factor_table(bump_factor(0.0, 1.0), np.array([0.999999, 1.000001]))
    # all orders vanish continuously at |u| -> 1
    assert np.all(np.abs(tab[0]) < 1e-6)
    assert np.all(tab[1] == 0.0)


def test_factor_guards():
    with pytest.raises(ValueError):
        poly_factor([1.0] * 6)  # degree 5
    with pytest.raises(ValueError):
        tanh_factor([1.0] * 5)
    with pytest.raises(ValueError):
        bump_factor(0.0, 0.0)
    with pytest.raises(ValueError):
        CylindricalFunction((0, 0), ())  # duplicate coordinate entries


def test_boundedness_and_sup():
    assert poly_factor([3.0]).bounded() and poly_factor([3.0]).sup_bound() == 3.0
    assert not poly_factor([0.0, 1.0]).bounded()
    assert cos_factor(5.0).sup_bound() == 1.0
    fn = cyl_function(
        (0, 2),
        (
            (2.0, ((0, tanh_factor([0.0, 1.0])),)),
            (-0.5, ((0, cos_factor(1.0)), (1, bump_factor(0.0, 1.0)))),
        ),
    )
    assert fn.bounded()
    assert fn.sup_bound() == pytest.approx(2.5)
    unb = cyl_function((0,), ((1.0, ((0, poly_factor([0.0, 1.0])),)),))
    assert not unb.bounded()
    assert unb.sup_bound() == math.inf


def test_function_slot_guards():
    with pytest.raises(ValueError):
        cyl_function((0, 1), [(1.0, {2: poly_factor([1.0])})])
    with pytest.raises(ValueError):
        CylindricalFunction(
            (0,),
            ((1.0, ((0, poly_factor([1.0])), (0, poly_factor([1.0])))),),
        )


def test_values_gradient_hessian_by_finite_differences(ftanh):
    rng = np.random.default_rng(0)
    pts = rng.standard_normal((40, 2))
    vals = ftanh.values(pts)
    assert vals.shape == (40,)
    h = 1e-5
    grad = ftanh.gradient(pts)
    hess = ftanh.hessian(pts)
    hdiag = ftanh.hessian_diagonal(pts)
    np.testing.assert_allclose(hdiag, np.diagonal(hess, axis1=-2, axis2=-1), rtol=1e-12)
    for j in range(2):
        dp = pts.copy()
        dp[:, j] += h
        dm = pts.copy()
        dm[:, j] -= h
        np.testing.assert_allclose(
            grad[:, j], (ftanh.values(dp) - ftanh.values(dm)) / (2 * h), rtol=1e-6, atol=1e-8
        )
        np.testing.assert_allclose(
            hess[:, j, j],
            (ftanh.values(dp) - 2 * vals + ftanh.values(dm)) / h**2,
            rtol=1e-4,
            atol=1e-5,
        )
    # mixed second derivative
    pp = pts + h
    mm = pts - h
    pm = pts + np.array([h, -h])
    mp = pts + np.array([-h, h])
    mixed = (ftanh.values(pp) - ftanh.values(pm) - ftanh.values(mp) + ftanh.values(mm)) / (
        4 * h**2
    )
    np.testing.assert_allclose(hess[:, 0, 1], mixed, rtol=1e-4, atol=1e-5)
    np.testing.assert_allclose(hess[:, 0, 1], hess[:, 1, 0], rtol=1e-12)


def test_third_derivative_symmetry(ftanh):
    rng = np.random.default_rng(1)
    pts = rng.standard_normal((7, 2))
    t3 = ftanh.third_derivative(pts)
    assert t3.shape == (7, 2, 2, 2)
    for perm in ((0, 2, 1), (1, 0, 2), (2, 1, 0)):
        np.testing.assert_allclose(t3, np.transpose(t3, (0,) + tuple(p + 1 for p in perm)), rtol=1e-12)
    # check one component against finite differences of the gradient
    h = 1e-4
    dp = pts.copy()
    dp[:, 0] += h
    dm = pts.copy()
    dm[:, 0] -= h
    fd = (ftanh.hessian(dp) - ftanh.hessian(dm)) / (2 * h)
    np.testing.assert_allclose(t3[:, 0], fd, rtol=1e-4, atol=1e-5)


def test_value_at_and_gradient_coeffs(ftanh, basis2):
    rng = np.random.default_rng(2)
    x = random_field(basis2, rng)
    v = ftanh.value_at(x)
    assert v == pytest.approx(float(ftanh.values(x.coeffs[[1, 4]])))
    g = ftanh.gradient_coeffs(x, basis2.m)
    assert g.shape == (basis2.m,)
    nz = np.nonzero(g)[0]
    assert set(nz).issubset({1, 4})
    np.testing.assert_allclose(g[[1, 4]], ftanh.gradient(x.coeffs[[1, 4]]))


def test_missing_slot_kills_derivative():
    # second term uses only slot 0; its slot-1 derivative must vanish
    fn = cyl_function(
        (0, 1),
        (
            (1.0, ((0, poly_factor([0.0, 1.0])), (1, poly_factor([0.0, 1.0])))),
            (3.0, ((0, poly_factor([0.0, 0.0, 1.0])),)),
        ),
    )
    pts = np.array([[1.5, -2.0]])
    np.testing.assert_allclose(fn.values(pts), [1.5 * -2.0 + 3.0 * 1.5**2])
    np.testing.assert_allclose(fn.gradient(pts), [[-2.0 + 6.0 * 1.5, 1.5]])
    np.testing.assert_allclose(fn.hessian(pts)[0], [[6.0, 1.0], [1.0, 0.0]])


def test_coordinate_function(basis2):
    fn = coordinate_function(3, degree=2)
    x = np.zeros(basis2.m)
    x[3] = 1.7
    assert fn.value_at(x) == pytest.approx(1.7**2)


# ---------------------------------------------------------------------------
# Generator


def test_apply_L_matches_manual_assembly(basis2, cov, ftanh):
    rng = np.random.default_rng(3)
    x = random_field(basis2, rng, decay=0.5)
    bx = bilinear_b(x)
    idx = list(ftanh.entries)
    coords = x.coeffs[idx]
    lam = basis2.eigs[idx]
    q = cov.q_entries(basis2)[idx]
    grad = ftanh.gradient(coords)
    hd = ftanh.hessian_diagonal(coords)
    want = float(
        np.sum((-lam * coords + bx.coeffs[idx]) * grad) + 0.5 * np.sum(q * hd)
    )
    got = apply_L(ftanh, basis2, cov, coords, bx.coeffs[idx])
    assert float(got) == pytest.approx(want, rel=1e-13)
    assert apply_L_state(ftanh, x, cov) == pytest.approx(want, rel=1e-13)
    # drift-free variant drops the quadratic term
    want_ou = float(np.sum(-lam * coords * grad) + 0.5 * np.sum(q * hd))
    assert float(apply_L(ftanh, basis2, cov, coords)) == pytest.approx(want_ou, rel=1e-13)
    assert apply_L_state(ftanh, x, cov, use_b=False) == pytest.approx(want_ou, rel=1e-13)


def test_apply_L_vectorizes(basis2, cov, ftanh):
    rng = np.random.default_rng(4)
    coords = rng.standard_normal((5, 3, 2))
    bcoords = rng.standard_normal((5, 3, 2))
    out = apply_L(ftanh, basis2, cov, coords, bcoords)
    assert out.shape == (5, 3)
    one = apply_L(ftanh, basis2, cov, coords[2, 1], bcoords[2, 1])
    assert float(one) == pytest.approx(out[2, 1], rel=1e-14)


def test_damped_generator(basis2, cov, ftanh):
    rng = np.random.default_rng(5)
    x = random_field(basis2, rng, decay=0.5)
    damp = DampingSpec("quadratic-enstrophy", 0.7)
    base = apply_L_state(ftanh, x, cov)
    got = apply_damped_generator(ftanh, x, cov, damp)
    gamma = 0.7 * sum(basis2.eigs**2 * x.coeffs**2)
    assert got == pytest.approx(base - gamma * ftanh.value_at(x), rel=1e-12)
    assert apply_damped_generator(ftanh, x, cov, None) == base
    # array form with a caller-evaluated potential
    coords = ftanh.coords_of(x)[None, :]
    pot = np.array([gamma])
    arr = apply_damped_L(ftanh, basis2, cov, coords, None, pot)
    ou = apply_L(ftanh, basis2, cov, coords)
    np.testing.assert_allclose(arr, ou - pot * ftanh.values(coords), rtol=1e-13)


# ---------------------------------------------------------------------------
# Seminorm sampling helpers


def test_symtensor_sup_norm_rank_one():
    v = np.array([0.6, -0.8])
    t = np.einsum("i,j,k->ijk", v, v, v)
    # sup over the unit sphere of (v.u)^3 is |v|^3
    assert symtensor_sup_norm(t) == pytest.approx(1.0, rel=1e-10)
    assert symtensor_sup_norm(np.zeros((3, 3, 3))) == 0.0
    with pytest.raises(ValueError):
        symtensor_sup_norm(np.zeros((2, 3, 2)))


def test_seminorm_ratios_linear_function(basis2):
    # phi(x) = x_e: D phi = e, D^2 = D^3 = 0; ratios have closed forms
    e = 5
    fn = coordinate_function(e)
    lam = basis2.eigs[e]
    x = SpectralField.zeros(basis2)
    out = sampled_seminorm_ratios(fn, basis2, [x])
    assert out["d1_weighted"][0] == pytest.approx(1.0 / lam, rel=1e-12)
    assert out["d1_plain"][0] == pytest.approx(1.0, rel=1e-12)
    assert out["d2_strong"][0] == 0.0 and out["d3_gamma"][0] == 0.0
    with pytest.raises(ValueError):
        sampled_seminorm_ratios(fn, basis2, [x], gamma=0.4)
    with pytest.raises(ValueError):
        sampled_seminorm_ratios(fn, basis2, [x], weights=(1, 2))


def test_quotient_ratio_linear(basis2):
    e = 2
    fn = coordinate_function(e)
    lam = basis2.eigs[e]
    x = SpectralField.zeros(basis2)
    y_c = np.zeros(basis2.m)
    y_c[e] = 2.0
    y = SpectralField(basis2, y_c)
    r = sampled_quotient_ratio(fn, basis2, [x, x], [y, x])
    # |phi(x)-phi(y)| / (|A(x-y)| (1 + |Ax|^2 + |Ay|^2))
    assert r[0] == pytest.approx(2.0 / (2.0 * lam * (1.0 + (2.0 * lam) ** 2)), rel=1e-12)
    assert r[1] == 0.0
    with pytest.raises(ValueError):
        sampled_quotient_ratio(fn, basis2, [x], [y, x])


def test_eclass_sample_shapes(basis2, ftanh):
    rng = np.random.default_rng(6)
    xs = [random_field(basis2, rng) for _ in range(3)]
    r1 = eclass_seminorm_sample(ftanh, basis2, "E1", xs)
    assert r1["class"] == "E1" and r1["certified_lower_bound"]
    assert set(r1["max"]) == set(r1["ratios"])
    assert all(v >= 0 for v in r1["max"].values())
    r3 = eclass_seminorm_sample(ftanh, basis2, "E3k", xs, k=4)
    assert r3["k"] == 4
    pairs = [(xs[0], xs[1]), (xs[1], xs[2])]
    r2 = eclass_seminorm_sample(ftanh, basis2, "E2", pairs)
    assert r2["ratios"]["quotient"].shape == (2,)
    with pytest.raises(ValueError):
        eclass_seminorm_sample(ftanh, basis2, "E3k", xs)
    with pytest.raises(ValueError):
        eclass_seminorm_sample(ftanh, basis2, "bogus", xs)
