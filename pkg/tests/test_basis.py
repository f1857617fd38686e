"""Basis table, diagonal operators, covariance admissibility, serialization."""

import io
import math

import numpy as np
import pytest

from sgns.basis import (
    BasisError,
    CovarianceError,
    CovarianceSpec,
    SpectralField,
    apply_A_power,
    apply_sqrtQ,
    check_covariance_conditions,
    energy_norms,
    enumerate_basis,
    entry_index,
    evaluate_field,
    field_from_csv,
    field_to_csv,
    fourier_coefficients,
    inner,
    leray_project,
    mode_field,
    random_field,
    read_field,
    sobolev_norm,
    write_field,
)

# Entry counts are ((2c+1)^d - 1) * (d - 1); frozen for the sizes the
# validation ladders use so a lattice regression cannot slip through.
ENTRY_COUNTS = {
    (2, 1): 8,
    (2, 2): 24,
    (2, 4): 80,
    (2, 8): 288,
    (2, 16): 1088,
    (3, 1): 52,
    (3, 2): 248,
}


@pytest.mark.parametrize("key", sorted(ENTRY_COUNTS))
def test_entry_counts(key):
    d, cutoff = key
    basis = enumerate_basis(d, cutoff)
    assert basis.m == ENTRY_COUNTS[key]
    assert basis.m == basis.lattice.shape[0] * (d - 1)


def test_enumerate_basis_is_cached():
    assert enumerate_basis(2, 3) is enumerate_basis(2, 3)


def test_enumerate_basis_rejects_bad_arguments():
    with pytest.raises(BasisError):
        enumerate_basis(4, 2)
    with pytest.raises(BasisError):
        enumerate_basis(2, 0)


@pytest.mark.parametrize("d,cutoff", [(2, 3), (3, 2)])
def test_basis_table_invariants(d, cutoff):
    basis = enumerate_basis(d, cutoff)
    k = basis.wavevectors
    # lattice window and lexicographic order
    assert np.max(np.abs(k)) == cutoff
    assert not np.any(np.all(k == 0, axis=1))
    lat = basis.lattice
    assert all(tuple(lat[i]) < tuple(lat[i + 1]) for i in range(len(lat) - 1))
    # eigenvalues are |k|^2
    np.testing.assert_array_equal(basis.eigs, np.sum(k.astype(float) ** 2, axis=1))
    # pairing is an involution that flips the wave vector, keeps polarization
    p = basis.pair
    np.testing.assert_array_equal(p[p], np.arange(basis.m))
    np.testing.assert_array_equal(basis.wavevectors[p], -k)
    np.testing.assert_array_equal(basis.pols[p], basis.pols)
    # exactly one of (entry, pair) is lex-positive
    assert np.all(basis.is_pos ^ basis.is_pos[p])
    # polarization frames: unit length, orthogonal to k, mutually orthogonal
    for i, kv in enumerate(lat):
        frame = basis.pol_vecs[i]
        np.testing.assert_allclose(frame @ frame.T, np.eye(d - 1), atol=1e-14)
        np.testing.assert_allclose(frame @ kv.astype(float), 0.0, atol=1e-13)
        # frame is taken at the lex-positive representative: same at -k
        j = basis.lattice_index(-kv)
        np.testing.assert_array_equal(frame, basis.pol_vecs[j])


def test_entry_index_roundtrip(basis4):
    for e in range(0, basis4.m, 7):
        k = basis4.wavevectors[e]
        pol = int(basis4.pols[e])
        assert entry_index(basis4, k, pol) == e
    with pytest.raises(BasisError):
        entry_index(basis4, (99, 0))
    with pytest.raises(BasisError):
        entry_index(basis4, (1, 0), pol=1)


def test_spectral_field_arithmetic(basis2):
    rng = np.random.default_rng(0)
    a = SpectralField(basis2, rng.standard_normal(basis2.m))
    b = SpectralField(basis2, rng.standard_normal(basis2.m))
    np.testing.assert_array_equal((a + b).coeffs, a.coeffs + b.coeffs)
    np.testing.assert_array_equal((a - b).coeffs, a.coeffs - b.coeffs)
    np.testing.assert_array_equal((2.0 * a).coeffs, (a * 2.0).coeffs)
    np.testing.assert_array_equal((-a).coeffs, -a.coeffs)
    assert not a.coeffs.flags.writeable
    with pytest.raises(BasisError):
        SpectralField(basis2, np.zeros(basis2.m + 1))
    other = SpectralField(enumerate_basis(2, 3), np.zeros(enumerate_basis(2, 3).m))
    with pytest.raises(BasisError):
        a + other


def test_field_constructor_does_not_alias_input(basis2):
    c = np.arange(basis2.m, dtype=float)
    x = SpectralField(basis2, c)
    c[0] = 99.0
    assert x.coeffs[0] == 0.0


def test_diagonal_operators(basis4):
    rng = np.random.default_rng(1)
    x = SpectralField(basis4, rng.standard_normal(basis4.m))
    y = apply_A_power(x, 0.5)
    np.testing.assert_allclose(y.coeffs, basis4.eigs**0.5 * x.coeffs)
    l2, h1, a2 = energy_norms(x)
    assert l2 == pytest.approx(sobolev_norm(x, 0.0) ** 2, rel=1e-14)
    assert h1 == pytest.approx(sobolev_norm(x, 0.5) ** 2, rel=1e-14)
    assert a2 == pytest.approx(sobolev_norm(x, 1.0) ** 2, rel=1e-14)
    assert inner(x, x) == pytest.approx(l2, rel=1e-14)
    # negative powers stay finite (no zero mode in the table)
    assert math.isfinite(sobolev_norm(x, -1.0))


def test_mode_field_and_random_field(basis4):
    x = mode_field(basis4, (2, -1), 1.5, pol=0)
    assert x.coeffs[entry_index(basis4, (2, -1))] == 1.5
    assert np.count_nonzero(x.coeffs) == 1
    rng = np.random.default_rng(5)
    y = random_field(basis4, rng, decay=1.5, norm=2.0, norm_order=0.5)
    assert sobolev_norm(y, 0.5) == pytest.approx(2.0, rel=1e-13)


# ---------------------------------------------------------------------------
# Covariance


def test_covariance_parameter_guards():
    with pytest.raises(CovarianceError):
        CovarianceSpec(alpha=2.5, r=1.0)
    with pytest.raises(CovarianceError):
        CovarianceSpec(alpha=2.5, r=1.5)
    with pytest.raises(CovarianceError):
        CovarianceSpec(alpha=2.5, g=0.0)
    with pytest.raises(CovarianceError):
        CovarianceSpec(alpha=2.5, sigma=-1.0)


def test_admissibility_window():
    cov = CovarianceSpec(alpha=2.5)
    cov.validate_window(2)  # (d+2)/2 + g = 2.25 < 2.5 <= 2r = 2.5
    with pytest.raises(CovarianceError):
        CovarianceSpec(alpha=1.0).validate_window(2)
    with pytest.raises(CovarianceError):
        CovarianceSpec(alpha=2.6).validate_window(2)  # above 2r
    with pytest.raises(CovarianceError):
        cov.validate_window(3)  # 2-d default is inadmissible in 3-d
    CovarianceSpec(alpha=2.7, g=0.1, r=1.4).validate_window(3)


def test_q_entries_formula(basis4, cov):
    q = cov.q_entries(basis4)
    np.testing.assert_allclose(q, basis4.eigs ** (-2.5))
    w = SpectralField(basis4, np.ones(basis4.m))
    np.testing.assert_allclose(apply_sqrtQ(cov, w).coeffs ** 2, q, rtol=1e-14)


def test_covariance_report_frozen_values(cov):
    # Values pinned from the closed-form mode sums sigma^2 |k|^(2+2g-2alpha)
    # over the max-norm lattice (independent tally, float64).
    rep = check_covariance_conditions(cov, 2)
    expected = {
        8: 11.156043863816793,
        16: 12.307029681626645,
        32: 13.149457647818464,
        64: 13.7555131336748,
    }
    assert set(rep.partial_traces) == set(expected)
    for c, v in expected.items():
        assert rep.partial_traces[c] == pytest.approx(v, rel=1e-12)
    # increments reconstruct the trace ladder
    assert sum(rep.increments.values()) == pytest.approx(rep.partial_traces[64], rel=1e-14)
    assert rep.last_increment_ratio == pytest.approx(
        rep.increments[64] / rep.partial_traces[64], rel=1e-14
    )
    # alpha = 2r: the embedding constant is exactly 1/sigma at every cutoff
    assert all(v == pytest.approx(1.0, rel=1e-14) for v in rep.embedding_constants.values())


def test_covariance_report_rejects_inadmissible():
    with pytest.raises(CovarianceError):
        check_covariance_conditions(CovarianceSpec(alpha=1.0), 2)


def test_embedding_constant_below_one_for_smaller_alpha():
    rep = check_covariance_conditions(CovarianceSpec(alpha=2.4), 2, cutoffs=(4, 8))
    assert all(v <= 1.0 for v in rep.embedding_constants.values())


# ---------------------------------------------------------------------------
# Complex view, projection, physical evaluation


@pytest.mark.parametrize("d,cutoff", [(2, 3), (3, 1)])
def test_fourier_roundtrip_and_divergence(d, cutoff):
    basis = enumerate_basis(d, cutoff)
    rng = np.random.default_rng(11)
    x = random_field(basis, rng, decay=0.5)
    uhat = fourier_coefficients(x)
    # divergence-free: k . uhat(k) = 0 at every lattice point
    div = np.einsum("ij,ij->i", basis.lattice.astype(float), uhat)
    np.testing.assert_allclose(div, 0.0, atol=1e-12)
    # reality: uhat(-k) = conj(uhat(k))
    neg = basis.pair[:: basis.n_pol] // basis.n_pol
    np.testing.assert_allclose(uhat[neg], np.conj(uhat), atol=1e-13)
    back = leray_project(basis, uhat)
    np.testing.assert_allclose(back.coeffs, x.coeffs, atol=1e-12)


def test_leray_project_kills_gradient_parts(basis2):
    rng = np.random.default_rng(3)
    x = random_field(basis2, rng, decay=0.5)
    uhat = fourier_coefficients(x)
    # add a gradient field i k g(k) (conjugate-symmetric scalar g)
    g = rng.standard_normal(basis2.lattice.shape[0])
    neg = basis2.pair[:: basis2.n_pol] // basis2.n_pol
    g = g + g[neg]  # even real part -> conj-symmetric i k g
    grad = 1j * basis2.lattice.astype(float) * g[:, None]
    proj = leray_project(basis2, uhat + grad)
    np.testing.assert_allclose(proj.coeffs, x.coeffs, atol=1e-12)


def test_leray_project_rejects_complex_asymmetry(basis2):
    uhat = np.zeros((basis2.lattice.shape[0], 2), dtype=complex)
    uhat[0, 0] = 1.0  # no conjugate partner
    with pytest.raises(BasisError):
        leray_project(basis2, uhat)
    with pytest.raises(BasisError):
        leray_project(basis2, uhat[:, :1])


def test_evaluate_field_single_mode(basis2):
    k = (1, -2)
    x = mode_field(basis2, k, 0.8)
    pts = np.array([[0.3, 1.1], [2.0, 0.5], [4.4, 3.3]])
    lat = basis2.lattice_index(k)
    eps = basis2.pol_vecs[lat, 0]
    expected = 0.8 * math.sqrt(2) * np.cos(pts @ np.array(k))[:, None] * eps
    np.testing.assert_allclose(evaluate_field(x, pts), expected, atol=1e-14)
    # the paired entry carries the sine amplitude
    y = mode_field(basis2, (-k[0], -k[1]), 0.8)
    expected_s = 0.8 * math.sqrt(2) * np.sin(pts @ np.array(k))[:, None] * eps
    np.testing.assert_allclose(evaluate_field(y, pts), expected_s, atol=1e-14)


def test_evaluate_matches_fourier_sum(basis2):
    rng = np.random.default_rng(7)
    x = random_field(basis2, rng, decay=1.0)
    uhat = fourier_coefficients(x)
    pts = rng.uniform(0, 2 * np.pi, size=(5, 2))
    phases = np.exp(1j * pts @ basis2.lattice.T.astype(float))
    expected = (phases @ uhat).real
    np.testing.assert_allclose(evaluate_field(x, pts), expected, atol=1e-12)


# ---------------------------------------------------------------------------
# Snapshots


def test_snapshot_roundtrip_exact(basis4):
    rng = np.random.default_rng(13)
    x = random_field(basis4, rng, decay=0.2)
    text = field_to_csv(x)
    y = field_from_csv(text)
    assert y.basis is x.basis
    np.testing.assert_array_equal(y.coeffs, x.coeffs)


def test_snapshot_file_roundtrip(tmp_path, basis2):
    x = SpectralField(basis2, np.linspace(-1, 1, basis2.m))
    p = tmp_path / "x.csv"
    write_field(str(p), x)
    y = read_field(str(p))
    np.testing.assert_array_equal(y.coeffs, x.coeffs)


def test_snapshot_header_checks(basis2):
    with pytest.raises(BasisError):
        read_field(io.StringIO("bogus\n"))
    truncated = field_to_csv(SpectralField.zeros(basis2)).splitlines()[:-2]
    with pytest.raises(BasisError):
        read_field(io.StringIO("\n".join(truncated) + "\n"))
