"""Ensemble time-stepping for the truncated stochastic Navier-Stokes system.

The state advances mode-by-mode with the diagonal part integrated exactly:

    c'(k) = e^(-lam dt) c(k) + (1 - e^(-lam dt))/lam * B(k) + eta(k)

with lam = |k|^2, B the triad convolution of the current state and eta a
centered Gaussian with the exact one-step Ornstein-Uhlenbeck variance
q_k (1 - e^(-2 lam dt)) / (2 lam) ("exponential-euler").  The plain
Euler-Maruyama factors (1 - lam dt, dt, q_k dt) are available for
cross-checks; both schemes share one kernel.

Noise channels use counter-based Philox streams keyed by (root seed, stream
id, trajectory index), so every trajectory's noise is reproducible bit for
bit regardless of block composition, evaluation order, or worker count.

Hot loops run through the numba kernels in :mod:`sgns._kernels` when
available; set SGNS_BACKEND=numpy to force the pure-numpy driver (same
semantics, also used for the FFT-collocation route at large cutoffs).
SGNS_WORKERS>1 dispatches path blocks to a process pool.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import IO, Callable, Iterable, Sequence

import numpy as np

from sgns import _kernels
from sgns.basis import (
    BasisSpec,
    CovarianceSpec,
    SpectralField,
    enumerate_basis,
)
from sgns.bilinear import (
    DIRECT_CUTOFF_MAX,
    fft_b_pair,
    fft_b_self_2d,
    grid_map,
    half_layout,
    merged_triad_table,
)

__all__ = [
    "DampingSpec",
    "EnsembleResult",
    "IntegratorConfig",
    "NoiseStreams",
    "SimulationError",
    "TrajectorySample",
    "INTEGRAL_NAMES",
    "SUP_NAMES",
    "active_backend",
    "one_step",
    "read_trajectory",
    "run_ensemble",
    "sample_ou_exact",
    "sample_ou_invariant",
    "simulate",
    "write_trajectory",
]

INTEGRAL_NAMES = ("h1", "a2", "l2h1", "h1_cubed", "a2_sq", "weighted_a2")
SUP_NAMES = ("l2", "h1", "a2", "w_h1", "w_h1_sq", "w_h1_cu")

_MASK64 = (1 << 64) - 1


class SimulationError(RuntimeError):
    """Invalid integrator setup or irrecoverable failure during stepping."""


def _splitmix64(v: int) -> int:
    v = (v + 0x9E3779B97F4A7C15) & _MASK64
    z = v
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


class NoiseStreams:
    """Counter-based noise streams: one Philox generator per trajectory.

    The generator key mixes (root, stream) through splitmix64 and carries the
    trajectory index in the second key word, so trajectories are independent
    and any subset can be regenerated in isolation.
    """

    def __init__(self, root: int, stream: int = 0) -> None:
        self.root = int(root) & _MASK64
        self.stream = int(stream) & _MASK64

    def spawn(self, stream: int) -> "NoiseStreams":
        """Derived stream family (independent noise, same root)."""
        return NoiseStreams(self.root, stream)

    def child(self, k: int) -> "NoiseStreams":
        """Hierarchically derived family: with k in 1..15 the stream ids
        encode the derivation path in base 16, so children at different
        nesting levels never collide."""
        if not 1 <= k <= 15:
            raise ValueError("child index must be in 1..15")
        return NoiseStreams(self.root, (self.stream * 16 + k) & _MASK64)

    def generator(self, traj: int) -> np.random.Generator:
        k0 = _splitmix64(self.root ^ _splitmix64(self.stream))
        return np.random.Generator(np.random.Philox(key=[k0, int(traj) & _MASK64]))

    def normals(self, traj: int, shape: tuple[int, ...]) -> np.ndarray:
        return self.generator(traj).standard_normal(shape)

    def __repr__(self) -> str:  # pragma: no cover
        return f"NoiseStreams(root={self.root}, stream={self.stream})"


@dataclass(frozen=True)
class IntegratorConfig:
    """Time-stepping choices.

    scheme: "exponential-euler" (exact diagonal propagation, exact one-step
    noise variance) or "euler-maruyama".  route: "auto" picks triad tables
    up to cutoff 16 (2D) / 4 (3D) and FFT collocation beyond; block_paths
    overrides the memory-based block size.
    """

    dt: float
    scheme: str = "exponential-euler"
    route: str = "auto"
    block_paths: int | None = None
    validate: bool = True

    def __post_init__(self) -> None:
        if self.dt <= 0.0:
            raise SimulationError(f"dt must be positive, got {self.dt}")
        if self.scheme not in ("exponential-euler", "euler-maruyama"):
            raise SimulationError(f"unknown scheme {self.scheme!r}")
        if self.route not in ("auto", "direct", "fft"):
            raise SimulationError(f"unknown route {self.route!r}")


@dataclass(frozen=True)
class DampingSpec:
    """Multiplicative path damping gamma(x) >= 0 defining the weight
    exp(-int_0^t gamma(X_s) ds).

    Kinds (coef is the prefactor in each):
      - "quadratic-enstrophy": gamma = coef |Ax|^2
      - "quartic-enstrophy":   gamma = coef |Ax|^4
      - "sixth-h1":            gamma = coef |x|_1^6
      - "energy-h1":           gamma = coef |x|^2 |x|_1^2
    """

    kind: str
    coef: float

    _SEL = {
        "quadratic-enstrophy": 1,
        "quartic-enstrophy": 4,
        "sixth-h1": 3,
        "energy-h1": 2,
    }

    def __post_init__(self) -> None:
        if self.kind not in self._SEL:
            raise SimulationError(
                f"unknown damping kind {self.kind!r}; expected one of {sorted(self._SEL)}"
            )
        if self.coef < 0:
            raise SimulationError("damping coefficient must be nonnegative")

    @property
    def integral_index(self) -> int:
        """Index into INTEGRAL_NAMES of int gamma / coef along the path."""
        return self._SEL[self.kind]

    def gamma(self, x: SpectralField) -> float:
        """Pointwise damping rate at a state."""
        c2 = x.coeffs**2
        e = x.basis.eigs
        l2 = float(np.sum(c2))
        h1 = float(np.sum(e * c2))
        a2 = float(np.sum(e**2 * c2))
        return float(self.gamma_from_norms(l2, h1, a2))

    def gamma_from_norms(self, l2, h1, a2):
        """Damping rate from the recorded norm triple (vectorizes)."""
        if self.kind == "quadratic-enstrophy":
            return self.coef * np.asarray(a2)
        if self.kind == "quartic-enstrophy":
            return self.coef * np.asarray(a2) ** 2
        if self.kind == "sixth-h1":
            return self.coef * np.asarray(h1) ** 3
        return self.coef * np.asarray(l2) * np.asarray(h1)


# ---------------------------------------------------------------------------
# Results


@dataclass
class EnsembleResult:
    """Recorded output of an ensemble run (or one block of it).

    coords/bcoords hold the requested coordinates of the state / of the
    advection term at the record times; integrals the running path integrals
    in INTEGRAL_NAMES order; sups the running sups in SUP_NAMES order.
    hit_steps[i, r] is the first grid step with |AX| >= hit_radii[r]
    (-1: never), tau_steps the freeze-radius hit, trunc_steps the first
    non-finite step (-1: none).
    """

    d: int
    cutoff: int
    dt: float
    times: np.ndarray
    coord_entries: np.ndarray
    traj_offset: int
    coords: np.ndarray
    bcoords: np.ndarray | None
    integrals: np.ndarray
    norms: np.ndarray
    sups: np.ndarray
    hit_radii: np.ndarray
    hit_steps: np.ndarray
    tau_steps: np.ndarray
    trunc_steps: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.coords.shape[0]

    @property
    def basis(self) -> BasisSpec:
        return enumerate_basis(self.d, self.cutoff)

    @property
    def truncated_fraction(self) -> float:
        return float(np.mean(self.trunc_steps >= 0))

    def integral(self, name: str) -> np.ndarray:
        """(n_paths, n_times) running integral by name."""
        return self.integrals[:, :, INTEGRAL_NAMES.index(name)]

    def sup(self, name: str) -> np.ndarray:
        return self.sups[:, SUP_NAMES.index(name)]

    def weights(self, damping: DampingSpec) -> np.ndarray:
        """Feynman-Kac weights exp(-int gamma) at every record time,
        reconstructed from the accumulated integrals."""
        base = self.integrals[:, :, damping.integral_index]
        return np.exp(-damping.coef * base)

    def hit_times(self) -> np.ndarray:
        """(n_paths, n_radii) hitting times; +inf where never hit."""
        t = self.hit_steps.astype(np.float64) * self.dt
        t[self.hit_steps < 0] = np.inf
        return t

    def tau_times(self) -> np.ndarray:
        t = self.tau_steps.astype(np.float64) * self.dt
        t[self.tau_steps < 0] = np.inf
        return t


def _stack_results(blocks: list[EnsembleResult]) -> EnsembleResult:
    blocks = sorted(blocks, key=lambda b: b.traj_offset)
    first = blocks[0]
    bco = None
    if first.bcoords is not None:
        bco = np.concatenate([b.bcoords for b in blocks], axis=0)
    return EnsembleResult(
        d=first.d,
        cutoff=first.cutoff,
        dt=first.dt,
        times=first.times,
        coord_entries=first.coord_entries,
        traj_offset=first.traj_offset,
        coords=np.concatenate([b.coords for b in blocks], axis=0),
        bcoords=bco,
        integrals=np.concatenate([b.integrals for b in blocks], axis=0),
        norms=np.concatenate([b.norms for b in blocks], axis=0),
        sups=np.concatenate([b.sups for b in blocks], axis=0),
        hit_radii=first.hit_radii,
        hit_steps=np.concatenate([b.hit_steps for b in blocks], axis=0),
        tau_steps=np.concatenate([b.tau_steps for b in blocks], axis=0),
        trunc_steps=np.concatenate([b.trunc_steps for b in blocks], axis=0),
    )


# ---------------------------------------------------------------------------
# Backend / route selection


def active_backend() -> str:
    """Resolve the kernel backend: env SGNS_BACKEND, else numba if present."""
    env = os.environ.get("SGNS_BACKEND", "").strip().lower()
    if env in ("numba", "numpy"):
        if env == "numba" and not _kernels.HAVE_NUMBA:
            warnings.warn("SGNS_BACKEND=numba requested but numba is not importable; using numpy")
            return "numpy"
        return env
    if env:
        raise SimulationError(f"SGNS_BACKEND must be 'numba' or 'numpy', got {env!r}")
    return "numba" if _kernels.HAVE_NUMBA else "numpy"


def _worker_count(explicit: int | None) -> int:
    if explicit is not None:
        return max(1, int(explicit))
    env = os.environ.get("SGNS_WORKERS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise SimulationError(f"SGNS_WORKERS must be an integer, got {env!r}")
    return 1


def _resolve_route(basis: BasisSpec, cfg: IntegratorConfig) -> str:
    if cfg.route != "auto":
        return cfg.route
    return "direct" if basis.cutoff <= DIRECT_CUTOFF_MAX[basis.d] else "fft"


def _step_factors(
    eig: np.ndarray, q: np.ndarray, dt: float, scheme: str
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-mode one-step factors (decay, drift factor, noise std)."""
    lam = eig
    if scheme == "exponential-euler":
        decay = np.exp(-lam * dt)
        phidt = -np.expm1(-lam * dt) / lam
        var = q * (-np.expm1(-2.0 * lam * dt)) / (2.0 * lam)
    else:  # euler-maruyama
        decay = 1.0 - lam * dt
        phidt = np.full_like(lam, dt)
        var = q * dt
    return decay, phidt, np.sqrt(var)


def _auto_block(S: int, m: int, route: str, N: int, d: int) -> int:
    cap_noise = int(192e6 / max(1, S * m * 8))
    cap = cap_noise
    if route == "fft":
        cap = min(cap, int(6e8 / max(1, 8 * N**d * 8)))
    return int(np.clip(cap, 8, 512))


# ---------------------------------------------------------------------------
# The numpy step driver (reference semantics; also the FFT-route driver)


def _conv_direct_numpy(tab, H: int):
    def conv(ur: np.ndarray, ui: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        P = ur.shape[1]
        br = np.zeros((H, P))
        bi = np.zeros((H, P))
        chunk = 65536
        for s in range(0, tab.out.size, chunk):
            sl = slice(s, min(s + chunk, tab.out.size))
            o, p, q = tab.out[sl], tab.p[sl], tab.q[sl]
            upr, upi = ur[p], ui[p]
            uqr, uqi = ur[q], ui[q]
            np.add.at(br, o, tab.a1[sl, None] * upr * uqi + tab.a2[sl, None] * upi * uqr)
            np.add.at(bi, o, tab.a3[sl, None] * upr * uqr + tab.a4[sl, None] * upi * uqi)
        return br, bi

    return conv


def _conv_fft_numpy(basis: BasisSpec, self_term: bool):
    gm = grid_map(basis.d, basis.cutoff)

    def conv(ur: np.ndarray, ui: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        c = ur + 1j * ui
        if self_term and basis.d == 2:
            B = fft_b_self_2d(c, gm)
        else:
            B = fft_b_pair(c, c, gm)
        return np.ascontiguousarray(B.real), np.ascontiguousarray(B.imag)

    return conv


def _step_block_numpy(
    ur,
    ui,
    xi,
    decay,
    phidt,
    nsr,
    nsi,
    idx_a,
    idx_b,
    use_b,
    conv,
    w0,
    w1,
    w2,
    dt,
    damp_sel,
    damp_coef,
    rec_at,
    co_h,
    co_im,
    co_scale,
    want_b,
    coords,
    bcoords,
    integrals,
    norms_out,
    sups,
    R2s,
    hits,
    freeze_R2,
    tau_step,
    trunc_step,
):
    """Pure-numpy twin of :func:`sgns._kernels.step_block`."""
    H, P = ur.shape
    S = xi.shape[0]
    n_co = co_h.shape[0]

    def norms(a, b):
        e2 = a * a + b * b
        return w0 @ e2, w1 @ e2, w2 @ e2

    def record(r, br, bi):
        if n_co:
            src_r = np.where(co_im[:, None] == 0, ur[co_h], ui[co_h])
            coords[r] = co_scale[:, None] * src_r
            if want_b:
                srcb = np.where(co_im[:, None] == 0, br[co_h], bi[co_h])
                bcoords[r] = co_scale[:, None] * srcb
        integrals[r] = I
        norms_out[r, 0] = pl2
        norms_out[r, 1] = ph1
        norms_out[r, 2] = pa2

    pl2, ph1, pa2 = norms(ur, ui)
    I = np.zeros((6, P))
    wcur = np.ones(P)
    fr = np.ones(P)
    sups[0] = pl2
    sups[1] = ph1
    sups[2] = pa2
    sups[3] = ph1
    sups[4] = ph1**2
    sups[5] = ph1**3
    for r_ in range(R2s.size):
        hits[r_, pa2 >= R2s[r_]] = 0
    if freeze_R2 > 0.0:
        hit0 = pa2 >= freeze_R2
        tau_step[hit0] = 0
        fr[hit0] = 0.0

    br = np.zeros((H, P))
    bi = np.zeros((H, P))
    for j in range(S):
        r = rec_at[j]
        if use_b or (want_b and r >= 0):
            br, bi = conv(ur, ui)
        if r >= 0:
            record(r, br, bi)

        du = decay[:, None] * ur + phidt[:, None] * br + nsr[:, None] * xi[j, idx_a, :]
        dv = decay[:, None] * ui + phidt[:, None] * bi + nsi[:, None] * xi[j, idx_b, :]
        ur += fr[None, :] * (du - ur)
        ui += fr[None, :] * (dv - ui)

        nn0, nn1, nn2 = norms(ur, ui)
        act = trunc_step < 0
        bad = act & ~np.isfinite(nn0 + nn1 + nn2)
        if np.any(bad):
            trunc_step[bad] = j + 1
            fr[bad] = 0.0
            ur[:, bad] = 0.0
            ui[:, bad] = 0.0
            nn0, nn1, nn2 = norms(ur, ui)
            act = trunc_step < 0

        half = 0.5 * dt
        addI = np.zeros((6, P))
        addI[0] = half * (ph1 + nn1)
        addI[1] = half * (pa2 + nn2)
        addI[2] = half * (pl2 * ph1 + nn0 * nn1)
        addI[3] = half * (ph1**3 + nn1**3)
        addI[4] = half * (pa2**2 + nn2**2)
        if damp_sel >= 0:
            # weight uses the base integral including this step's increment
            base_new = I[damp_sel] + addI[damp_sel]
            wn = np.exp(-damp_coef * base_new)
            addI[5] = half * (wcur * pa2 + wn * nn2)
            wcur = np.where(act, wn, wcur)
            sups[3] = np.where(act, np.maximum(sups[3], wn * nn1), sups[3])
            sups[4] = np.where(act, np.maximum(sups[4], wn * nn1**2), sups[4])
            sups[5] = np.where(act, np.maximum(sups[5], wn * nn1**3), sups[5])
        I += np.where(act[None, :], addI, 0.0)
        sups[0] = np.where(act, np.maximum(sups[0], nn0), sups[0])
        sups[1] = np.where(act, np.maximum(sups[1], nn1), sups[1])
        sups[2] = np.where(act, np.maximum(sups[2], nn2), sups[2])
        for r_ in range(R2s.size):
            new = act & (hits[r_] < 0) & (nn2 >= R2s[r_])
            hits[r_, new] = j + 1
        if freeze_R2 > 0.0:
            newf = act & (fr > 0.0) & (nn2 >= freeze_R2)
            tau_step[newf] = j + 1
            fr[newf] = 0.0
        pl2 = np.where(act, nn0, pl2)
        ph1 = np.where(act, nn1, ph1)
        pa2 = np.where(act, nn2, pa2)

    r = rec_at[S]
    if r >= 0:
        if use_b or want_b:
            br, bi = conv(ur, ui)
        record(r, br, bi)


# ---------------------------------------------------------------------------
# Block execution


def _coord_maps(basis: BasisSpec, entries: np.ndarray):
    hl = half_layout(basis)
    half_of_entry = np.full(basis.m, -1, dtype=np.int64)
    half_of_entry[hl.pos_entries] = np.arange(hl.n)
    co_h = np.empty(entries.size, dtype=np.int64)
    co_im = np.empty(entries.size, dtype=np.int64)
    co_scale = np.empty(entries.size, dtype=np.float64)
    sqrt2 = math.sqrt(2.0)
    for i, e in enumerate(entries):
        if basis.is_pos[e]:
            co_h[i] = half_of_entry[e]
            co_im[i] = 0
            co_scale[i] = sqrt2
        else:
            co_h[i] = half_of_entry[basis.pair[e]]
            co_im[i] = 1
            co_scale[i] = -sqrt2
    return co_h, co_im, co_scale


def _run_block(payload: dict) -> EnsembleResult:
    basis = enumerate_basis(payload["d"], payload["cutoff"])
    hl = half_layout(basis)
    cfg: IntegratorConfig = payload["cfg"]
    cov: CovarianceSpec = payload["cov"]
    streams: NoiseStreams = payload["streams"]
    S = payload["steps"]
    trajs = payload["trajs"]
    H = hl.n
    P = len(trajs)
    m = basis.m

    x0c = payload["x0"]
    if x0c.ndim == 2:
        # one initial row per path in this block
        ur = np.ascontiguousarray(x0c[:, hl.pos_entries].T) / math.sqrt(2.0)
        ui = np.ascontiguousarray(-x0c[:, hl.neg_entries].T) / math.sqrt(2.0)
    else:
        ur = np.empty((H, P))
        ui = np.empty((H, P))
        c0r = x0c[hl.pos_entries] / math.sqrt(2.0)
        c0i = -x0c[hl.neg_entries] / math.sqrt(2.0)
        ur[:] = c0r[:, None]
        ui[:] = c0i[:, None]

    xi = np.empty((S, m, P))
    for i, tr in enumerate(trajs):
        xi[:, :, i] = streams.normals(tr, (S, m))

    q_half = cov.sigma**2 * hl.eig ** (-cov.alpha)
    decay, phidt, ns = _step_factors(hl.eig, q_half, cfg.dt, cfg.scheme)
    if not payload["use_drift"]:
        phidt = np.zeros_like(phidt)
    nsr = ns / math.sqrt(2.0)
    nsi = -ns / math.sqrt(2.0)
    idx_a = hl.pos_entries
    idx_b = hl.neg_entries

    w0 = np.full(H, 2.0)
    w1 = 2.0 * hl.eig
    w2 = 2.0 * hl.eig**2

    rec_at = payload["rec_at"]
    n_rec = payload["n_rec"]
    co_h, co_im, co_scale = payload["co_maps"]
    n_co = co_h.size
    want_b = 1 if payload["record_bilinear"] else 0
    use_b = 1 if payload["use_drift"] else 0
    damp_sel = payload["damp_sel"]
    damp_coef = payload["damp_coef"]
    R2s = payload["R2s"]
    freeze_R2 = payload["freeze_R2"]
    route = payload["route"]
    backend = payload["backend"]

    coords = np.zeros((n_rec, n_co, P))
    bcoords = np.zeros((n_rec, n_co, P)) if want_b else np.zeros((0, 0, P))
    integrals = np.zeros((n_rec, 6, P))
    norms_out = np.zeros((n_rec, 3, P))
    sups = np.zeros((6, P))
    hits = np.full((R2s.size, P), -1, dtype=np.int64)
    tau_step = np.full(P, -1, dtype=np.int64)
    trunc_step = np.full(P, -1, dtype=np.int64)

    if route == "direct" and backend == "numba":
        tab = merged_triad_table(basis.d, basis.cutoff)
        _kernels.step_block(
            ur, ui, xi, decay, phidt, nsr, nsi, idx_a, idx_b, use_b,
            tab.out, tab.p, tab.q, tab.a1, tab.a2, tab.a3, tab.a4,
            w0, w1, w2, cfg.dt, damp_sel, damp_coef,
            rec_at, co_h, co_im, co_scale, want_b,
            coords, bcoords, integrals, norms_out, sups, R2s, hits,
            freeze_R2, tau_step, trunc_step,
        )
    else:
        if route == "direct":
            conv = _conv_direct_numpy(merged_triad_table(basis.d, basis.cutoff), H)
        else:
            conv = _conv_fft_numpy(basis, self_term=True)
        _step_block_numpy(
            ur, ui, xi, decay, phidt, nsr, nsi, idx_a, idx_b, use_b, conv,
            w0, w1, w2, cfg.dt, damp_sel, damp_coef,
            rec_at, co_h, co_im, co_scale, want_b,
            coords, bcoords, integrals, norms_out, sups, R2s, hits,
            freeze_R2, tau_step, trunc_step,
        )

    return EnsembleResult(
        d=basis.d,
        cutoff=basis.cutoff,
        dt=cfg.dt,
        times=payload["times"],
        coord_entries=payload["entries"],
        traj_offset=trajs[0] if P else 0,
        coords=np.ascontiguousarray(coords.transpose(2, 0, 1)),
        bcoords=np.ascontiguousarray(bcoords.transpose(2, 0, 1)) if want_b else None,
        integrals=np.ascontiguousarray(integrals.transpose(2, 0, 1)),
        norms=np.ascontiguousarray(norms_out.transpose(2, 0, 1)),
        sups=np.ascontiguousarray(sups.T),
        hit_radii=payload["hit_radii"],
        hit_steps=np.ascontiguousarray(hits.T),
        tau_steps=tau_step,
        trunc_steps=trunc_step,
    )


def run_ensemble(
    x0: SpectralField | np.ndarray,
    cov: CovarianceSpec,
    cfg: IntegratorConfig,
    t_final: float,
    n_paths: int,
    streams: NoiseStreams,
    *,
    basis: BasisSpec | None = None,
    traj_offset: int = 0,
    record_times: Sequence[float] | None = None,
    record_coords: Sequence[int] | None = None,
    record_bilinear: bool = False,
    damping: DampingSpec | None = None,
    hit_radii: Sequence[float] = (),
    freeze_radius: float | None = None,
    use_drift: bool = True,
    consumer: Callable[[EnsembleResult], None] | None = None,
    workers: int | None = None,
) -> EnsembleResult | None:
    """Simulate n_paths independent trajectories from a shared initial state,
    or from per-path initial states when x0 is an (n_paths, m) array (then
    ``basis`` must be passed; row i seeds the path with trajectory index
    traj_offset + i).

    Record times must lie on the step grid.  With ``consumer`` given, blocks
    are handed over as they finish (ascending trajectory offsets when
    workers == 1) and nothing is stacked or returned.  Trajectory indices
    run from traj_offset; rerunning any sub-range reproduces identical
    noise, so ensembles can be extended or re-partitioned freely.
    """
    if isinstance(x0, SpectralField):
        basis = x0.basis
        x0c = np.asarray(x0.coeffs)
    else:
        # per-path initial states: row i seeds the path at traj_offset + i
        x0c = np.asarray(x0, dtype=np.float64)
        if basis is None:
            raise SimulationError("array initial states need an explicit basis")
        if x0c.shape != (n_paths, basis.m):
            raise SimulationError(
                f"initial-state array must be (n_paths, m) = ({n_paths}, {basis.m})"
            )
    if cfg.validate:
        cov.validate_window(basis.d)
    steps = round(t_final / cfg.dt)
    if steps < 1 or abs(steps * cfg.dt - t_final) > 1e-9 * max(1.0, t_final):
        raise SimulationError(
            f"t_final={t_final} is not a positive multiple of dt={cfg.dt}"
        )

    if record_times is None:
        record_times = [t_final]
    rec_steps = []
    for t in record_times:
        s = round(t / cfg.dt)
        if abs(s * cfg.dt - t) > 1e-9 * max(1.0, abs(t)) or not 0 <= s <= steps:
            raise SimulationError(f"record time {t} not on the step grid")
        rec_steps.append(s)
    rec_order = np.argsort(rec_steps, kind="stable")
    rec_sorted = sorted(set(rec_steps))
    if len(rec_sorted) != len(rec_steps):
        raise SimulationError("record times contain duplicates")
    if list(rec_order) != list(range(len(rec_steps))):
        raise SimulationError("record times must be increasing")
    rec_at = np.full(steps + 1, -1, dtype=np.int64)
    for slot, s in enumerate(rec_sorted):
        rec_at[s] = slot
    times = np.array(rec_sorted, dtype=np.float64) * cfg.dt

    entries = (
        np.asarray(record_coords, dtype=np.int64)
        if record_coords is not None
        else np.empty(0, dtype=np.int64)
    )
    if entries.size and (entries.min() < 0 or entries.max() >= basis.m):
        raise SimulationError("record_coords outside the basis table")
    co_maps = _coord_maps(basis, entries)

    route = _resolve_route(basis, cfg)
    backend = active_backend()
    damp_sel = damping.integral_index if damping is not None else -1
    damp_coef = damping.coef if damping is not None else 0.0
    R2s = np.asarray([float(r) ** 2 for r in hit_radii], dtype=np.float64)
    freeze_R2 = float(freeze_radius) ** 2 if freeze_radius is not None else 0.0

    N = grid_map(basis.d, basis.cutoff).N if route == "fft" else 0
    blk = cfg.block_paths or _auto_block(steps, basis.m, route, N, basis.d)

    base_payload = dict(
        d=basis.d,
        cutoff=basis.cutoff,
        cfg=cfg,
        cov=cov,
        streams=streams,
        steps=steps,
        x0=x0c,
        use_drift=use_drift,
        rec_at=rec_at,
        n_rec=len(rec_sorted),
        times=times,
        entries=entries,
        co_maps=co_maps,
        record_bilinear=record_bilinear,
        damp_sel=damp_sel,
        damp_coef=damp_coef,
        R2s=R2s,
        freeze_R2=freeze_R2,
        hit_radii=np.asarray(hit_radii, dtype=np.float64),
        route=route,
        backend=backend,
    )

    blocks = []
    all_trajs = range(traj_offset, traj_offset + n_paths)
    payloads = []
    for s in range(0, n_paths, blk):
        trajs = list(all_trajs[s : s + blk])
        pl = {**base_payload, "trajs": trajs}
        if x0c.ndim == 2:
            pl["x0"] = x0c[s : s + len(trajs)]
        payloads.append(pl)

    nw = _worker_count(workers)
    if nw > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=nw) as pool:
            results = list(pool.map(_run_block, payloads))
    else:
        results = None

    if results is None:
        for pl in payloads:
            block = _run_block(pl)
            if consumer is not None:
                consumer(block)
            else:
                blocks.append(block)
    else:
        for block in sorted(results, key=lambda b: b.traj_offset):
            if consumer is not None:
                consumer(block)
            else:
                blocks.append(block)

    if consumer is not None:
        return None
    return _stack_results(blocks)


# ---------------------------------------------------------------------------
# Single trajectories


@dataclass
class TrajectorySample:
    """One path with full states at the record times plus path functionals."""

    d: int
    cutoff: int
    dt: float
    times: np.ndarray
    states: np.ndarray  # (n_rec, m)
    integrals: np.ndarray  # (n_rec, 6)
    norms: np.ndarray  # (n_rec, 3): [|X|^2, |X|_1^2, |AX|^2]
    sups: np.ndarray  # (6,)
    hit_radii: np.ndarray
    hit_steps: np.ndarray
    tau_step: int
    trunc_step: int

    @property
    def basis(self) -> BasisSpec:
        return enumerate_basis(self.d, self.cutoff)

    def field(self, i: int) -> SpectralField:
        return SpectralField(self.basis, self.states[i])

    def integral(self, name: str) -> np.ndarray:
        return self.integrals[:, INTEGRAL_NAMES.index(name)]

    def weight(self, damping: DampingSpec) -> np.ndarray:
        return np.exp(-damping.coef * self.integrals[:, damping.integral_index])


def simulate(
    x0: SpectralField,
    cov: CovarianceSpec,
    cfg: IntegratorConfig,
    t_final: float,
    streams: NoiseStreams,
    traj: int = 0,
    *,
    record_stride: int = 1,
    damping: DampingSpec | None = None,
    hit_radii: Sequence[float] = (),
    freeze_radius: float | None = None,
    use_drift: bool = True,
) -> TrajectorySample:
    """Integrate a single trajectory, storing the full state every
    ``record_stride`` steps (always including 0 and t_final)."""
    steps = round(t_final / cfg.dt)
    rec = sorted(set(list(range(0, steps + 1, record_stride)) + [steps]))
    rtimes = [s * cfg.dt for s in rec]
    res = run_ensemble(
        x0,
        cov,
        cfg,
        t_final,
        1,
        streams,
        traj_offset=traj,
        record_times=rtimes,
        record_coords=np.arange(x0.basis.m),
        damping=damping,
        hit_radii=hit_radii,
        freeze_radius=freeze_radius,
        use_drift=use_drift,
    )
    assert res is not None
    return TrajectorySample(
        d=res.d,
        cutoff=res.cutoff,
        dt=res.dt,
        times=res.times,
        states=res.coords[0],
        integrals=res.integrals[0],
        norms=res.norms[0],
        sups=res.sups[0],
        hit_radii=res.hit_radii,
        hit_steps=res.hit_steps[0],
        tau_step=int(res.tau_steps[0]),
        trunc_step=int(res.trunc_steps[0]),
    )


def write_trajectory(path_or_file: str | IO[str], ts: TrajectorySample) -> None:
    """CSV trajectory snapshot: identification header, then one row per
    record time (t followed by the coefficients in basis-table order)."""
    own = isinstance(path_or_file, str)
    fh = open(path_or_file, "w") if own else path_or_file
    try:
        m = ts.states.shape[1]
        fh.write("d,cutoff,m,n_records,dt\n")
        fh.write(f"{ts.d},{ts.cutoff},{m},{ts.times.size},{ts.dt:.17g}\n")
        fh.write("t," + ",".join(f"c{i}" for i in range(m)) + "\n")
        for t, row in zip(ts.times, ts.states):
            fh.write(f"{t:.17g}," + ",".join(f"{v:.17g}" for v in row) + "\n")
    finally:
        if own:
            fh.close()


def read_trajectory(path_or_file: str | IO[str]) -> TrajectorySample:
    """Read a snapshot written by :func:`write_trajectory`.  Path functionals
    are not serialized; the returned sample carries states and times only."""
    own = isinstance(path_or_file, str)
    fh = open(path_or_file, "r") if own else path_or_file
    try:
        if fh.readline().strip() != "d,cutoff,m,n_records,dt":
            raise SimulationError("unexpected trajectory header")
        vals = fh.readline().strip().split(",")
        d, cutoff, m, n_rec = (int(v) for v in vals[:4])
        dt = float(vals[4])
        fh.readline()  # column names
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    finally:
        if own:
            fh.close()
    if data.shape != (n_rec, m + 1):
        raise SimulationError(
            f"trajectory data has shape {data.shape}, header says {(n_rec, m + 1)}"
        )
    basis = enumerate_basis(d, cutoff)
    if m != basis.m:
        raise SimulationError(f"snapshot has {m} coefficients, basis has {basis.m}")
    return TrajectorySample(
        d=d,
        cutoff=cutoff,
        dt=dt,
        times=data[:, 0].copy(),
        states=data[:, 1:].copy(),
        integrals=np.zeros((n_rec, 6)),
        norms=np.zeros((n_rec, 3)),
        sups=np.zeros(6),
        hit_radii=np.empty(0),
        hit_steps=np.empty(0, dtype=np.int64),
        tau_step=-1,
        trunc_step=-1,
    )


# ---------------------------------------------------------------------------
# Exact Ornstein-Uhlenbeck sampling (the drift-free linear dynamics)


def sample_ou_exact(
    x0: SpectralField,
    cov: CovarianceSpec,
    t: float,
    n_paths: int,
    streams: NoiseStreams,
    traj_offset: int = 0,
) -> np.ndarray:
    """Draw the linear (drift-free) dynamics at time t exactly: each mode is
    an independent scalar OU bridge-free transition
    N(e^(-lam t) x0, q (1 - e^(-2 lam t)) / (2 lam)).

    Returns (n_paths, m) coefficient vectors in basis-table order.
    """
    basis = x0.basis
    lam = basis.eigs
    q = cov.q_entries(basis)
    mean = np.exp(-lam * t) * x0.coeffs
    std = np.sqrt(q * (-np.expm1(-2.0 * lam * t)) / (2.0 * lam))
    out = np.empty((n_paths, basis.m))
    for i in range(n_paths):
        z = streams.normals(traj_offset + i, (basis.m,))
        out[i] = mean + std * z
    return out


def sample_ou_invariant(
    basis: BasisSpec,
    cov: CovarianceSpec,
    n_paths: int,
    streams: NoiseStreams,
    traj_offset: int = 0,
) -> np.ndarray:
    """Draw from the stationary law of the linear dynamics,
    N(0, q / (2 lam)) per mode; returns (n_paths, m)."""
    std = np.sqrt(cov.q_entries(basis) / (2.0 * basis.eigs))
    out = np.empty((n_paths, basis.m))
    for i in range(n_paths):
        out[i] = std * streams.normals(traj_offset + i, (basis.m,))
    return out


def one_step(
    x: SpectralField,
    cov: CovarianceSpec,
    cfg: IntegratorConfig,
    zeta: np.ndarray,
    use_drift: bool = True,
) -> SpectralField:
    """Apply a single scheme step with externally supplied unit normals
    (one per basis entry).  Sharing zeta across step sizes couples the
    one-step laws, which is what the generator-consistency checks need."""
    from sgns.bilinear import bilinear_b, field_to_half, half_to_field

    basis = x.basis
    hl = half_layout(basis)
    if zeta.shape != (basis.m,):
        raise SimulationError(f"zeta must have shape ({basis.m},)")
    q_half = cov.sigma**2 * hl.eig ** (-cov.alpha)
    decay, phidt, ns = _step_factors(hl.eig, q_half, cfg.dt, cfg.scheme)
    c = field_to_half(x)
    if use_drift:
        B = field_to_half(bilinear_b(x))
    else:
        B = np.zeros_like(c)
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    eta = ns * inv_sqrt2 * (zeta[hl.pos_entries] - 1j * zeta[hl.neg_entries])
    return half_to_field(basis, decay * c + phidt * B + eta)
