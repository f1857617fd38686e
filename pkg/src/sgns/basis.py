"""Divergence-free Fourier basis on the periodic box and diagonal operator algebra.

The velocity field is expanded over mean-zero, divergence-free real trigonometric
modes on [0, 2*pi)^d (d = 2 or 3).  Wave vectors run over the integer lattice
with `0 < max_i |k_i| <= cutoff`; for each lattice point there are d-1
polarization directions orthogonal to k.  The basis table pairs +k with -k:
the entry at a lex-positive wave vector k carries the amplitude of
sqrt(2)*cos(k.x)*eps(k), the entry at -k carries sqrt(2)*sin(k.x)*eps(k),
with the polarization vector eps always evaluated at the lex-positive
representative.  In these coordinates the Stokes operator A, its fractional
powers and the noise covariance Q = sigma^2 (-A)^(-alpha) are all diagonal.

Coefficient vectors follow the basis-table order (lexicographic on the wave
vector, then polarization index), which is also the on-disk snapshot order.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

__all__ = [
    "BasisError",
    "BasisSpec",
    "CovarianceError",
    "CovarianceReport",
    "CovarianceSpec",
    "SpectralField",
    "apply_A_power",
    "apply_sqrtQ",
    "check_covariance_conditions",
    "energy_norms",
    "enumerate_basis",
    "entry_index",
    "fourier_coefficients",
    "inner",
    "leray_project",
    "mode_field",
    "random_field",
    "read_field",
    "sobolev_norm",
    "write_field",
]


class BasisError(ValueError):
    """Inconsistent basis data (wrong dimension, cutoff, or coefficient layout)."""


class CovarianceError(ValueError):
    """Noise covariance parameters outside the admissible window."""


def _lex_positive(k: np.ndarray) -> bool:
    """True if the first nonzero component of k is positive."""
    for v in k:
        if v != 0:
            return v > 0
    return False


def _polarizations(k: np.ndarray) -> np.ndarray:
    """Orthonormal polarization vectors orthogonal to the wave vector k.

    Returns an array of shape (d-1, d).  Evaluated at the lex-positive
    representative only, so eps(-k) is by convention eps(k).
    """
    d = k.shape[0]
    kf = k.astype(np.float64)
    if d == 2:
        e = np.array([-kf[1], kf[0]]) / np.linalg.norm(kf)
        return e[None, :]
    # d == 3: seed with the coordinate axis least aligned with k, then take
    # cross products; this keeps the frame deterministic under re-enumeration.
    axis = int(np.argmin(np.abs(k)))
    seed = np.zeros(3)
    seed[axis] = 1.0
    e1 = np.cross(kf, seed)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(kf, e1)
    e2 /= np.linalg.norm(e2)
    return np.stack([e1, e2])


@dataclass(frozen=True)
class BasisSpec:
    """Immutable table of basis entries for one (dimension, cutoff) pair.

    Attributes
    ----------
    d : int
        Spatial dimension, 2 or 3.
    cutoff : int
        Max-norm bound on retained wave vectors.
    lattice : (n_lattice, d) int array
        All wave vectors with 0 < max|k_i| <= cutoff, lexicographically sorted.
    pol_vecs : (n_lattice, d-1, d) float array
        Polarization frame at each lattice point (taken at the lex-positive
        representative, identical for +-k).
    wavevectors : (m, d) int array
        Wave vector of each basis entry; entries enumerate the lattice in
        order with d-1 polarizations per point.
    pols : (m,) int array
        Polarization index of each entry.
    eigs : (m,) float array
        Stokes eigenvalue |k|^2 of each entry.
    is_pos : (m,) bool array
        Whether the entry sits at a lex-positive wave vector (cosine
        amplitude); the paired entry at -k carries the sine amplitude.
    pair : (m,) int array
        Index of the entry at the opposite wave vector, same polarization.
    """

    d: int
    cutoff: int
    lattice: np.ndarray = field(repr=False, compare=False)
    pol_vecs: np.ndarray = field(repr=False, compare=False)
    wavevectors: np.ndarray = field(repr=False, compare=False)
    pols: np.ndarray = field(repr=False, compare=False)
    eigs: np.ndarray = field(repr=False, compare=False)
    is_pos: np.ndarray = field(repr=False, compare=False)
    pair: np.ndarray = field(repr=False, compare=False)

    @property
    def m(self) -> int:
        """Number of basis entries (real degrees of freedom)."""
        return self.wavevectors.shape[0]

    @property
    def n_pol(self) -> int:
        return self.d - 1

    def lattice_index(self, k: Iterable[int]) -> int:
        key = tuple(int(v) for v in k)
        try:
            return _lattice_lookup(self.d, self.cutoff)[key]
        except KeyError:
            raise BasisError(f"wave vector {key} not in basis (d={self.d}, cutoff={self.cutoff})")


_BASIS_CACHE: dict[tuple[int, int], BasisSpec] = {}
_LOOKUP_CACHE: dict[tuple[int, int], dict[tuple[int, ...], int]] = {}


def enumerate_basis(d: int, cutoff: int) -> BasisSpec:
    """Build (or fetch from cache) the basis table for dimension d and cutoff.

    Parameters
    ----------
    d : int
        Spatial dimension, 2 or 3.
    cutoff : int
        Max-norm bound on wave vectors, >= 1.

    Returns
    -------
    BasisSpec
        Deterministic table; repeated calls return the same object.
    """
    if d not in (2, 3):
        raise BasisError(f"dimension must be 2 or 3, got {d}")
    if cutoff < 1:
        raise BasisError(f"cutoff must be >= 1, got {cutoff}")
    key = (d, cutoff)
    cached = _BASIS_CACHE.get(key)
    if cached is not None:
        return cached

    rng = range(-cutoff, cutoff + 1)
    if d == 2:
        pts = [(a, b) for a in rng for b in rng if (a, b) != (0, 0)]
    else:
        pts = [(a, b, c) for a in rng for b in rng for c in rng if (a, b, c) != (0, 0, 0)]
    pts.sort()
    lattice = np.array(pts, dtype=np.int64)
    n_lat = lattice.shape[0]
    lookup = {tuple(int(v) for v in k): i for i, k in enumerate(lattice)}

    n_pol = d - 1
    pol_vecs = np.empty((n_lat, n_pol, d))
    for i, k in enumerate(lattice):
        rep = k if _lex_positive(k) else -k
        pol_vecs[i] = _polarizations(rep)

    wavevectors = np.repeat(lattice, n_pol, axis=0)
    pols = np.tile(np.arange(n_pol), n_lat)
    eigs = np.sum(wavevectors.astype(np.float64) ** 2, axis=1)
    is_pos = np.array([_lex_positive(k) for k in wavevectors], dtype=bool)
    pair = np.array(
        [lookup[tuple(int(v) for v in -k)] * n_pol + p for k, p in zip(wavevectors, pols)],
        dtype=np.int64,
    )
    for arr in (lattice, pol_vecs, wavevectors, pols, eigs, is_pos, pair):
        arr.setflags(write=False)

    spec = BasisSpec(
        d=d,
        cutoff=cutoff,
        lattice=lattice,
        pol_vecs=pol_vecs,
        wavevectors=wavevectors,
        pols=pols,
        eigs=eigs,
        is_pos=is_pos,
        pair=pair,
    )
    _BASIS_CACHE[key] = spec
    _LOOKUP_CACHE[key] = lookup
    return spec


def _lattice_lookup(d: int, cutoff: int) -> dict[tuple[int, ...], int]:
    enumerate_basis(d, cutoff)
    return _LOOKUP_CACHE[(d, cutoff)]


def entry_index(basis: BasisSpec, k: Iterable[int], pol: int = 0) -> int:
    """Index of the basis entry at wave vector k, polarization pol."""
    if not 0 <= pol < basis.n_pol:
        raise BasisError(f"polarization must be in [0, {basis.n_pol}), got {pol}")
    return basis.lattice_index(k) * basis.n_pol + pol


@dataclass(frozen=True)
class SpectralField:
    """A velocity field as a real coefficient vector over a basis table.

    Coefficients are stored read-only; arithmetic returns new fields.
    """

    basis: BasisSpec
    coeffs: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self) -> None:
        c = np.asarray(self.coeffs, dtype=np.float64)
        if c.shape != (self.basis.m,):
            raise BasisError(
                f"coefficient vector has shape {c.shape}, expected ({self.basis.m},)"
            )
        if c is self.coeffs and c.flags.writeable:
            c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, basis: BasisSpec) -> "SpectralField":
        return cls(basis, np.zeros(basis.m))

    def norm(self, s: float = 0.0) -> float:
        return sobolev_norm(self, s)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check_same(other)
        return SpectralField(self.basis, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check_same(other)
        return SpectralField(self.basis, self.coeffs - other.coeffs)

    def __mul__(self, a: float) -> "SpectralField":
        return SpectralField(self.basis, self.coeffs * float(a))

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.basis, -self.coeffs)

    def _check_same(self, other: "SpectralField") -> None:
        if other.basis is not self.basis and (
            other.basis.d != self.basis.d or other.basis.cutoff != self.basis.cutoff
        ):
            raise BasisError("fields live on different bases")


def mode_field(
    basis: BasisSpec, k: Iterable[int], amplitude: float = 1.0, pol: int = 0
) -> SpectralField:
    """Field with a single nonzero coefficient at (k, pol)."""
    c = np.zeros(basis.m)
    c[entry_index(basis, k, pol)] = amplitude
    return SpectralField(basis, c)


def apply_A_power(x: SpectralField, s: float) -> SpectralField:
    """Apply (-A)^s, i.e. scale each coefficient by |k|^(2s)."""
    return SpectralField(x.basis, x.basis.eigs**s * x.coeffs)


def sobolev_norm(x: SpectralField, s: float = 0.0) -> float:
    """|(-A)^s x|: the L2 norm for s=0, |x|_1 for s=1/2, |Ax| for s=1.

    Negative s is allowed; all wave vectors are nonzero so the diagonal
    scaling stays finite.
    """
    scaled = x.basis.eigs**s * x.coeffs
    return float(np.sqrt(np.sum(scaled**2)))


def inner(x: SpectralField, y: SpectralField) -> float:
    """L2 inner product of two fields on the same basis."""
    x._check_same(y)
    return float(np.dot(x.coeffs, y.coeffs))


def energy_norms(x: SpectralField) -> tuple[float, float, float]:
    """Convenience triple (|x|^2, |x|_1^2, |Ax|^2) used by the energy checks."""
    c2 = x.coeffs**2
    e = x.basis.eigs
    return float(np.sum(c2)), float(np.sum(e * c2)), float(np.sum(e**2 * c2))


# ---------------------------------------------------------------------------
# Noise covariance


@dataclass(frozen=True)
class CovarianceSpec:
    """Parameters of the diagonal noise covariance Q = sigma^2 (-A)^(-alpha).

    alpha is the spectral decay exponent, sigma the overall amplitude, and
    (g, r) the regularity margins entering the admissibility window
    (d+2)/2 + g < alpha <= 2r with r in (1, 3/2) and g > 0.
    """

    alpha: float
    sigma: float = 1.0
    g: float = 0.25
    r: float = 1.25

    def __post_init__(self) -> None:
        if not 1.0 < self.r < 1.5:
            raise CovarianceError(f"r must lie in (1, 3/2), got {self.r}")
        if self.g <= 0.0:
            raise CovarianceError(f"g must be positive, got {self.g}")
        if self.sigma < 0.0:
            raise CovarianceError(f"sigma must be nonnegative, got {self.sigma}")

    def validate_window(self, d: int) -> None:
        lo = (d + 2) / 2 + self.g
        if not lo < self.alpha:
            raise CovarianceError(
                f"alpha={self.alpha} too small: need alpha > (d+2)/2 + g = {lo}"
            )
        if not self.alpha <= 2 * self.r:
            raise CovarianceError(
                f"alpha={self.alpha} too large: need alpha <= 2r = {2 * self.r}"
            )

    def q_entries(self, basis: BasisSpec) -> np.ndarray:
        """Diagonal of Q in basis-table order: sigma^2 |k|^(-2 alpha)."""
        return self.sigma**2 * basis.eigs ** (-self.alpha)


def apply_sqrtQ(cov: CovarianceSpec, w: SpectralField) -> SpectralField:
    """Apply Q^(1/2), scaling each coefficient by sigma |k|^(-alpha)."""
    scale = cov.sigma * w.basis.eigs ** (-cov.alpha / 2.0)
    return SpectralField(w.basis, scale * w.coeffs)


@dataclass(frozen=True)
class CovarianceReport:
    """Numerical summary of the trace-class and embedding conditions.

    partial_traces maps cutoff -> trace of (-A)^(1+g) Q over the truncated
    basis; last_increment_ratio is the share of the final ladder increment in
    the total (small when the trace has flattened).  embedding_constants maps
    cutoff -> the best constant in |Q^(-1/2) x| <= c |(-A)^r x| over that
    truncation (uniformly bounded iff alpha <= 2r).
    """

    d: int
    alpha: float
    sigma: float
    g: float
    r: float
    partial_traces: dict[int, float]
    increments: dict[int, float]
    last_increment_ratio: float
    embedding_constants: dict[int, float]


def check_covariance_conditions(
    cov: CovarianceSpec, d: int, cutoffs: Iterable[int] = (8, 16, 32, 64)
) -> CovarianceReport:
    """Check the admissibility window and tabulate trace/embedding constants.

    Raises CovarianceError if (d+2)/2 + g < alpha <= 2r fails.  Otherwise
    returns the partial traces of (-A)^(1+g) Q along the cutoff ladder, the
    increment sizes, and the embedding constants c_m.
    """
    cov.validate_window(d)
    cutoffs = sorted(set(int(c) for c in cutoffs))
    traces: dict[int, float] = {}
    consts: dict[int, float] = {}
    for c in cutoffs:
        basis = enumerate_basis(d, c)
        q = cov.q_entries(basis)
        traces[c] = float(np.sum(basis.eigs ** (1.0 + cov.g) * q))
        # per-mode ratio |Q^(-1/2) e| / |(-A)^r e| = sigma^-1 |k|^(alpha - 2r)
        if cov.sigma > 0:
            consts[c] = float(np.max(basis.eigs ** ((cov.alpha - 2 * cov.r) / 2.0)) / cov.sigma)
        else:
            consts[c] = math.inf
    increments = {}
    prev = 0.0
    for c in cutoffs:
        increments[c] = traces[c] - prev
        prev = traces[c]
    last_ratio = increments[cutoffs[-1]] / traces[cutoffs[-1]] if traces[cutoffs[-1]] else 0.0
    return CovarianceReport(
        d=d,
        alpha=cov.alpha,
        sigma=cov.sigma,
        g=cov.g,
        r=cov.r,
        partial_traces=traces,
        increments=increments,
        last_increment_ratio=last_ratio,
        embedding_constants=consts,
    )


# ---------------------------------------------------------------------------
# Complex Fourier view and the divergence-free projection


def leray_project(basis: BasisSpec, uhat: np.ndarray, rtol: float = 1e-8) -> SpectralField:
    """Project plain Fourier coefficients onto the divergence-free basis.

    Parameters
    ----------
    basis : BasisSpec
    uhat : (n_lattice, d) complex array
        Fourier coefficients of a mean-zero real vector field, rows aligned
        with ``basis.lattice``.  Reality requires uhat(-k) = conj(uhat(k));
        violations beyond ``rtol`` (relative to the overall scale) raise
        BasisError.

    Returns
    -------
    SpectralField
        Coefficients of the projection P u with P = I - k k^T / |k|^2
        applied at every wave vector.
    """
    uhat = np.asarray(uhat, dtype=np.complex128)
    n_lat = basis.lattice.shape[0]
    if uhat.shape != (n_lat, basis.d):
        raise BasisError(f"uhat has shape {uhat.shape}, expected {(n_lat, basis.d)}")
    neg = basis.pair[:: basis.n_pol] // basis.n_pol  # lattice-level pairing
    scale = float(np.max(np.abs(uhat))) or 1.0
    if np.max(np.abs(uhat[neg] - np.conj(uhat))) > rtol * scale:
        raise BasisError("uhat is not conjugate-symmetric: field is not real")

    k = basis.lattice.astype(np.float64)
    k2 = np.sum(k**2, axis=1)
    vhat = uhat - k * (np.sum(k * uhat, axis=1) / k2)[:, None]

    coeffs = np.zeros(basis.m)
    sqrt2 = math.sqrt(2.0)
    for i in range(n_lat):
        if not _lex_positive(basis.lattice[i]):
            continue
        j = int(neg[i])
        for p in range(basis.n_pol):
            c = complex(np.dot(vhat[i], basis.pol_vecs[i, p]))
            coeffs[i * basis.n_pol + p] = sqrt2 * c.real
            coeffs[j * basis.n_pol + p] = -sqrt2 * c.imag
    return SpectralField(basis, coeffs)


def fourier_coefficients(x: SpectralField) -> np.ndarray:
    """Plain Fourier coefficients (n_lattice, d) of a basis-coefficient field.

    Inverse of :func:`leray_project` on divergence-free inputs.
    """
    basis = x.basis
    n_lat = basis.lattice.shape[0]
    uhat = np.zeros((n_lat, basis.d), dtype=np.complex128)
    neg = basis.pair[:: basis.n_pol] // basis.n_pol
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    for i in range(n_lat):
        if not _lex_positive(basis.lattice[i]):
            continue
        j = int(neg[i])
        for p in range(basis.n_pol):
            a = x.coeffs[i * basis.n_pol + p]
            b = x.coeffs[j * basis.n_pol + p]
            c = (a - 1j * b) * inv_sqrt2
            uhat[i] += c * basis.pol_vecs[i, p]
            uhat[j] += np.conj(c) * basis.pol_vecs[i, p]
    return uhat


def evaluate_field(x: SpectralField, points: np.ndarray) -> np.ndarray:
    """Evaluate the velocity field at physical points (n_pts, d) -> (n_pts, d).

    Direct trigonometric summation; intended for tests and small grids.
    """
    basis = x.basis
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    out = np.zeros((pts.shape[0], basis.d))
    sqrt2 = math.sqrt(2.0)
    for e in range(basis.m):
        a = x.coeffs[e]
        if a == 0.0:
            continue
        k = basis.wavevectors[e]
        pos = _lex_positive(k)
        # both trig waves are phased at the lex-positive representative
        rep = k if pos else -k
        eps = basis.pol_vecs[basis.lattice_index(rep), basis.pols[e]]
        phase = pts @ rep.astype(np.float64)
        wave = np.cos(phase) if pos else np.sin(phase)
        out += a * sqrt2 * wave[:, None] * eps[None, :]
    return out


# ---------------------------------------------------------------------------
# Snapshot serialization (CSV, header carries the basis identification)


def write_field(path_or_file: str | IO[str], x: SpectralField) -> None:
    """Write a field snapshot as CSV: header (d, cutoff, m), then one
    coefficient per row in basis-table order.  Round-trips float64 exactly."""
    own = isinstance(path_or_file, str)
    fh = open(path_or_file, "w") if own else path_or_file
    try:
        fh.write("d,cutoff,m\n")
        fh.write(f"{x.basis.d},{x.basis.cutoff},{x.basis.m}\n")
        fh.write("coefficient\n")
        for v in x.coeffs:
            fh.write(f"{v:.17g}\n")
    finally:
        if own:
            fh.close()


def read_field(path_or_file: str | IO[str]) -> SpectralField:
    """Read a snapshot written by :func:`write_field`."""
    own = isinstance(path_or_file, str)
    fh = open(path_or_file, "r") if own else path_or_file
    try:
        header = fh.readline().strip()
        if header != "d,cutoff,m":
            raise BasisError(f"unexpected snapshot header {header!r}")
        d, cutoff, m = (int(v) for v in fh.readline().strip().split(","))
        if fh.readline().strip() != "coefficient":
            raise BasisError("missing coefficient column header")
        coeffs = np.loadtxt(fh, dtype=np.float64, ndmin=1)
    finally:
        if own:
            fh.close()
    basis = enumerate_basis(d, cutoff)
    if coeffs.shape != (m,) or m != basis.m:
        raise BasisError(
            f"snapshot carries {coeffs.shape[0]} coefficients, header says {m}, "
            f"basis has {basis.m}"
        )
    return SpectralField(basis, coeffs)


def field_to_csv(x: SpectralField) -> str:
    buf = io.StringIO()
    write_field(buf, x)
    return buf.getvalue()


def field_from_csv(text: str) -> SpectralField:
    return read_field(io.StringIO(text))


# ---------------------------------------------------------------------------
# Field constructors used by tests and the validation ladders


def random_field(
    basis: BasisSpec,
    rng: np.random.Generator,
    decay: float = 1.0,
    norm: float | None = None,
    norm_order: float = 0.0,
) -> SpectralField:
    """Gaussian random field with coefficient std |k|^(-decay).

    If ``norm`` is given the field is rescaled so |(-A)^norm_order x| equals
    it exactly.
    """
    c = rng.standard_normal(basis.m) * basis.eigs ** (-decay / 2.0)
    x = SpectralField(basis, c)
    if norm is not None:
        cur = sobolev_norm(x, norm_order)
        if cur == 0.0:
            raise BasisError("cannot rescale the zero field")
        x = x * (norm / cur)
    return x
