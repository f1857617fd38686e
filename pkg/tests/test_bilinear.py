"""Nonlinear term: physical-space oracle, route agreement, cancellations."""

import numpy as np
import pytest

from sgns.basis import (
    BasisError,
    SpectralField,
    enumerate_basis,
    evaluate_field,
    fourier_coefficients,
    inner,
    mode_field,
    random_field,
    sobolev_norm,
)
from sgns.bilinear import (
    BilinearError,
    bilinear_b,
    dealias_gridsize,
    field_to_half,
    galerkin_project,
    half_layout,
    half_to_field,
)


def _triple_product_quadrature(x, y, z, n_grid):
    """(b(x, y), z) = -mean over the torus of ((x . grad) y) . z.

    Direct trigonometric evaluation on a uniform grid; the integrand is a
    trigonometric polynomial of bandwidth 3*cutoff, so the rectangle rule is
    exact once n_grid exceeds that.  Completely independent of the
    convolution and collocation code paths.
    """
    basis = y.basis
    d = basis.d
    ax = [np.arange(n_grid) * (2 * np.pi / n_grid)] * d
    mesh = np.stack(np.meshgrid(*ax, indexing="ij"), axis=-1).reshape(-1, d)
    xv = evaluate_field(x, mesh)
    zv = evaluate_field(z, mesh)
    # grad y from the complex spectrum: d_i y_j = sum_k i k_i yhat_j e^(ik.p)
    yhat = fourier_coefficients(y)
    phases = np.exp(1j * mesh @ basis.lattice.T.astype(float))  # (n_pts, n_lat)
    adv = np.zeros_like(xv)
    for i in range(d):
        dyi = (phases @ (1j * basis.lattice[:, i].astype(float)[:, None] * yhat)).real
        adv += xv[:, i : i + 1] * dyi
    return -float(np.mean(np.einsum("pj,pj->p", adv, zv)))


@pytest.mark.parametrize("d,cutoff", [(2, 2), (3, 1)])
def test_bilinear_matches_physical_quadrature(d, cutoff):
    basis = enumerate_basis(d, cutoff)
    rng = np.random.default_rng(17)
    n_grid = 3 * cutoff + 2
    for _ in range(3):
        x = random_field(basis, rng, decay=0.5)
        y = random_field(basis, rng, decay=0.5)
        b = bilinear_b(x, y)
        scale = max(sobolev_norm(b, 0.0), 1.0)
        for e in range(0, basis.m, max(1, basis.m // 10)):
            z = mode_field(basis, basis.wavevectors[e], 1.0, int(basis.pols[e]))
            want = _triple_product_quadrature(x, y, z, n_grid)
            assert abs(b.coeffs[e] - want) < 1e-12 * scale


def test_bilinear_self_matches_pair(basis4):
    rng = np.random.default_rng(2)
    x = random_field(basis4, rng, decay=0.5)
    np.testing.assert_allclose(
        bilinear_b(x).coeffs, bilinear_b(x, x).coeffs, atol=1e-13
    )


@pytest.mark.parametrize("d,cutoff", [(2, 4), (2, 8), (3, 2)])
def test_routes_agree(d, cutoff):
    basis = enumerate_basis(d, cutoff)
    rng = np.random.default_rng(cutoff)
    for _ in range(5):
        x = random_field(basis, rng, decay=0.5)
        y = random_field(basis, rng, decay=0.5)
        direct = bilinear_b(x, y, method="direct")
        fft = bilinear_b(x, y, method="fft")
        scale = max(sobolev_norm(direct, 0.0), 1e-30)
        assert sobolev_norm(direct - fft, 0.0) <= 1e-12 * scale


@pytest.mark.parametrize("d,cutoff", [(2, 8), (3, 2)])
def test_energy_flux_cancellations(d, cutoff):
    basis = enumerate_basis(d, cutoff)
    rng = np.random.default_rng(23)
    for _ in range(5):
        x = random_field(basis, rng, decay=0.5)
        y = random_field(basis, rng, decay=0.5)
        bxy = bilinear_b(x, y)
        scale = sobolev_norm(bxy, 0.0) * sobolev_norm(y, 0.0) + 1e-30
        # (b(x, y), y) = 0: advection moves energy around, never creates it
        assert abs(inner(bxy, y)) <= 1e-12 * scale
        bx = bilinear_b(x)
        assert abs(inner(bx, x)) <= 1e-12 * (sobolev_norm(bx, 0.0) * sobolev_norm(x, 0.0) + 1e-30)


def test_enstrophy_cancellation_2d_only():
    rng = np.random.default_rng(29)
    basis = enumerate_basis(2, 6)
    x = random_field(basis, rng, decay=0.5)
    bx = bilinear_b(x)
    ax = SpectralField(basis, basis.eigs * x.coeffs)
    # 2-d: (b(x), Ax) = 0 identically (enstrophy is advected, not produced)
    assert abs(inner(bx, ax)) <= 1e-11 * (sobolev_norm(bx, 0.0) * sobolev_norm(ax, 0.0))
    # 3-d: no such cancellation; vortex stretching makes the flux generic
    basis3 = enumerate_basis(3, 2)
    x3 = random_field(basis3, rng, decay=0.5)
    b3 = bilinear_b(x3)
    a3 = SpectralField(basis3, basis3.eigs * x3.coeffs)
    assert abs(inner(b3, a3)) > 1e-6 * (sobolev_norm(b3, 0.0) * sobolev_norm(a3, 0.0))


def test_bilinear_result_is_divergence_free(basis4):
    rng = np.random.default_rng(31)
    b = bilinear_b(random_field(basis4, rng), random_field(basis4, rng))
    div = np.einsum("ij,ij->i", basis4.lattice.astype(float), fourier_coefficients(b))
    np.testing.assert_allclose(div, 0.0, atol=1e-12)


def test_bilinear_bilinearity(basis2):
    rng = np.random.default_rng(37)
    x, y, z = (random_field(basis2, rng) for _ in range(3))
    lhs = bilinear_b(x, 2.0 * y + z)
    rhs = 2.0 * bilinear_b(x, y) + bilinear_b(x, z)
    np.testing.assert_allclose(lhs.coeffs, rhs.coeffs, atol=1e-12)
    lhs2 = bilinear_b(2.0 * x + z, y)
    rhs2 = 2.0 * bilinear_b(x, y) + bilinear_b(z, y)
    np.testing.assert_allclose(lhs2.coeffs, rhs2.coeffs, atol=1e-12)


def test_bilinear_rejects_mixed_bases(basis2, basis4):
    x = SpectralField.zeros(basis2)
    y = SpectralField.zeros(basis4)
    with pytest.raises(BasisError):
        bilinear_b(x, y)
    with pytest.raises(BilinearError):
        bilinear_b(x, x, method="bogus")


def test_half_layout_roundtrip(basis4):
    rng = np.random.default_rng(41)
    x = random_field(basis4, rng)
    c = field_to_half(x)
    hl = half_layout(basis4)
    assert c.shape == (basis4.m // 2,)
    np.testing.assert_array_equal(hl.eig, basis4.eigs[hl.pos_entries])
    back = half_to_field(basis4, c)
    np.testing.assert_allclose(back.coeffs, x.coeffs, rtol=0, atol=1e-15)


def test_galerkin_project(basis2, basis4):
    rng = np.random.default_rng(43)
    fine = random_field(basis4, rng)
    coarse = galerkin_project(fine, basis2)
    # retained modes keep their coefficient, identified by (wavevector, pol)
    for e in range(basis2.m):
        k = basis2.wavevectors[e]
        src = basis4.lattice_index(k) * basis4.n_pol + basis2.pols[e]
        assert coarse.coeffs[e] == fine.coeffs[src]
    assert sobolev_norm(coarse, 0.0) <= sobolev_norm(fine, 0.0)
    # projection to the same basis is the identity
    np.testing.assert_array_equal(galerkin_project(fine, basis4).coeffs, fine.coeffs)
    # zero-fill embedding then projection recovers the coarse field
    up = galerkin_project(coarse, basis4)
    np.testing.assert_array_equal(galerkin_project(up, basis2).coeffs, coarse.coeffs)


def test_dealias_gridsize():
    for cutoff in (1, 2, 4, 8, 16, 21):
        assert dealias_gridsize(cutoff) >= 3 * cutoff
