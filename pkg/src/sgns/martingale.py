"""Path-level martingale residuals and the statistical tests built on them.

For a cylindrical test function phi and a simulated path eta, the residual

    M_t = phi(eta_t) - phi(eta_0) - int_0^t L phi(eta_s) ds

is a martingale when the simulated dynamics solves the martingale problem of
the generator L; the damped variant weighs by exp(-int gamma) and replaces L
by L - gamma, the stopped variant freezes state and quadrature at the first
time |A eta| reaches the freeze radius.  The quadrature runs on the same
trapezoid grid the integrator uses, so residual bias matches the scheme's
weak order.

test_martingale_property turns residuals into a pair x witness grid of
statistics E[(M_{t2} - M_{t1}) psi(path up to t1)], each of which has mean
zero under the martingale property for adapted bounded psi.  Every cell is
reported with its SE and a z-score; the familywise error of the grid at the
3-SE threshold is bounded by the number of cells times 2 Phi(-3) (about 0.27%
each), which is the Bonferroni accounting behind the global verdict.

check_duhamel_identity compares semigroup increments with the time-quadrature
of the (damped) generator image on one common-noise ensemble, and
uniqueness_crosscheck compares two independently configured approximations of
the same law -- different scheme, step size, or cutoff -- on means and
Laplace transforms, with Richardson-estimated discretization allowances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .basis import BasisSpec, CovarianceSpec, SpectralField, entry_index
from .bilinear import bilinear_b, galerkin_project
from .cylinder import CylindricalFunction, apply_L, cos_factor, cyl_function, tanh_factor
from .engine import (
    DampingSpec,
    EnsembleResult,
    IntegratorConfig,
    NoiseStreams,
    TrajectorySample,
    run_ensemble,
)
from .semigroups import (
    EstimationError,
    MCEstimate,
    _quad_refinement_error,
    three_se_verdict,
)

__all__ = [
    "MartingaleTestReport",
    "Witness",
    "check_duhamel_identity",
    "default_witnesses",
    "martingale_residual",
    "run_martingale_grid",
    "test_martingale_property",
    "translate_entries",
    "uniqueness_crosscheck",
]


# ---------------------------------------------------------------------------
# Residuals


def _cut_cumtrap(y: np.ndarray, times: np.ndarray, t_cut: np.ndarray) -> np.ndarray:
    """Cumulative trapezoid of y (n, T) over times, each path clamped at its
    own cut time (+inf = no cut).

    States freeze exactly at the cut, so the recorded value at the first
    record past the cut *is* the integrand's value at the cut; the partial
    segment [t_{j-1}, cut] therefore uses the correct endpoint pair.
    """
    hi = np.minimum(times[None, 1:], t_cut[:, None])
    lo = np.minimum(times[None, :-1], t_cut[:, None])
    seg = 0.5 * (y[:, 1:] + y[:, :-1]) * (hi - lo)
    out = np.zeros_like(y)
    np.cumsum(seg, axis=1, out=out[:, 1:])
    return out


def _residual_matrix(
    fn: CylindricalFunction,
    basis: BasisSpec,
    cov: CovarianceSpec,
    times: np.ndarray,
    coords: np.ndarray,
    bcoords: np.ndarray,
    *,
    damp: DampingSpec | None = None,
    weights: np.ndarray | None = None,
    gammas: np.ndarray | None = None,
    t_cut: np.ndarray | None = None,
) -> np.ndarray:
    """Residual paths M (n, T) from recorded state/advection coordinates.

    coords/bcoords carry fn's coordinates at every record time; for the
    damped variant, weights = exp(-int gamma) and gammas = gamma(eta_s) at
    the records.  M[:, 0] is exactly zero (the weight at time 0 is 1).
    """
    if times[0] != 0.0:
        raise EstimationError("residuals need the path recorded from time 0")
    phi = fn.values(coords)
    lphi = apply_L(fn, basis, cov, coords, bcoords)
    if t_cut is None:
        t_cut = np.full(phi.shape[0], np.inf)
    if damp is None:
        head = phi
        integrand = lphi
    else:
        head = weights * phi
        integrand = weights * (lphi - gammas * phi)
    return head - phi[:, :1] - _cut_cumtrap(integrand, times, t_cut)


def _entry_positions(coord_entries: np.ndarray, wanted: Sequence[int]) -> list[int]:
    pos = {int(e): i for i, e in enumerate(coord_entries)}
    missing = [e for e in wanted if e not in pos]
    if missing:
        raise EstimationError(
            f"sample does not record coordinates {missing}; re-run with "
            "record_coords covering the test function and witnesses"
        )
    return [pos[int(e)] for e in wanted]


def _ensemble_residuals(
    fn: CylindricalFunction,
    res: EnsembleResult,
    cov: CovarianceSpec,
    *,
    damp: DampingSpec | None = None,
    stopped: bool = False,
) -> np.ndarray:
    """Residual matrix (n_paths, n_times) for a recorded ensemble."""
    if damp is not None and stopped:
        raise EstimationError(
            "damped and stopped residuals are distinct objects; pick one"
        )
    if res.bcoords is None:
        raise EstimationError(
            "residuals need the advection term at the records; "
            "re-run with record_bilinear=True"
        )
    basis = res.basis
    cols = _entry_positions(res.coord_entries, fn.entries)
    coords = res.coords[:, :, cols]
    bcoords = res.bcoords[:, :, cols]
    trunc = res.trunc_steps
    if stopped:
        bad = (trunc >= 0) & (res.tau_steps < 0)
        if np.any(bad):
            raise EstimationError(
                f"{int(np.sum(bad))} paths blew up without reaching the "
                "freeze radius; raise the radius or shrink dt"
            )
        t_cut = np.where(res.tau_steps >= 0, res.tau_steps * res.dt, np.inf)
        return _residual_matrix(
            fn, basis, cov, res.times, coords, bcoords, t_cut=t_cut
        )
    if np.any(trunc >= 0):
        raise EstimationError(
            f"{int(np.sum(trunc >= 0))} truncated paths: residuals without a "
            "stopping spec are undefined past blow-up (use the stopped "
            "variant with a freeze radius)"
        )
    if damp is None:
        return _residual_matrix(fn, basis, cov, res.times, coords, bcoords)
    weights = res.weights(damp)
    gammas = damp.gamma_from_norms(
        res.norms[:, :, 0], res.norms[:, :, 1], res.norms[:, :, 2]
    )
    return _residual_matrix(
        fn, basis, cov, res.times, coords, bcoords,
        damp=damp, weights=weights, gammas=gammas,
    )


def martingale_residual(
    fn: CylindricalFunction,
    sample: TrajectorySample | EnsembleResult,
    cov: CovarianceSpec,
    *,
    damp: DampingSpec | None = None,
    stopped: bool = False,
) -> np.ndarray:
    """Residual path(s) M_t at the sample's record times.

    For a TrajectorySample the advection term is recomputed from the stored
    full states and the result is one path (n_times,); for an EnsembleResult
    recorded with record_bilinear=True it is (n_paths, n_times).  stopped=True
    expects the run to have used a freeze radius and holds M constant from
    the freeze time on; a truncated (blown-up) path without a stopping spec
    is an error, never a silent number.
    """
    if isinstance(sample, EnsembleResult):
        return _ensemble_residuals(fn, sample, cov, damp=damp, stopped=stopped)
    if damp is not None and stopped:
        raise EstimationError(
            "damped and stopped residuals are distinct objects; pick one"
        )
    if sample.trunc_step >= 0 and not (stopped and sample.tau_step >= 0):
        raise EstimationError(
            "truncated path: residuals without a stopping spec are undefined "
            "past blow-up (use the stopped variant with a freeze radius)"
        )
    basis = sample.basis
    idx = list(fn.entries)
    coords = sample.states[None, :, idx]
    brows = np.stack(
        [bilinear_b(SpectralField(basis, s)).coeffs[idx] for s in sample.states]
    )[None, :, :]
    if stopped:
        t_cut = np.array(
            [sample.tau_step * sample.dt if sample.tau_step >= 0 else np.inf]
        )
        return _residual_matrix(
            fn, basis, cov, sample.times, coords, brows, t_cut=t_cut
        )[0]
    if damp is None:
        return _residual_matrix(fn, basis, cov, sample.times, coords, brows)[0]
    weights = sample.weight(damp)[None, :]
    gammas = damp.gamma_from_norms(
        sample.norms[:, 0], sample.norms[:, 1], sample.norms[:, 2]
    )[None, :]
    return _residual_matrix(
        fn, basis, cov, sample.times, coords, brows,
        damp=damp, weights=weights, gammas=gammas,
    )[0]


# ---------------------------------------------------------------------------
# The pair x witness grid


@dataclass(frozen=True)
class Witness:
    """Bounded functional of the path up to t1: the product of cylindrical
    functions evaluated at times frac * t1 with frac in (0, 1]."""

    label: str
    factors: tuple[tuple[CylindricalFunction, float], ...]

    def __post_init__(self) -> None:
        for g, frac in self.factors:
            if not 0.0 < frac <= 1.0:
                raise ValueError(
                    f"witness {self.label!r}: evaluation fraction {frac} "
                    "leaves the [0, t1] window"
                )
            if not g.bounded():
                raise ValueError(f"witness {self.label!r} must be bounded")

    @property
    def entries(self) -> tuple[int, ...]:
        out: set[int] = set()
        for g, _ in self.factors:
            out.update(g.entries)
        return tuple(sorted(out))


def default_witnesses(basis: BasisSpec) -> tuple[Witness, ...]:
    """Six bounded witnesses on the three lowest basis entries: the constant,
    three single-time functions (two at t1, one at t1/2), one cross-time
    product, and one two-coordinate function at t1."""
    if basis.m < 3:
        raise EstimationError("default witnesses need at least three entries")
    g_tanh0 = cyl_function((0,), (((1.0, ((0, tanh_factor([0.0, 1.2])),)),)))
    g_cos1 = cyl_function((1,), (((1.0, ((0, cos_factor(1.5, 0.3)),)),)))
    g_tanh2 = cyl_function((2,), (((1.0, ((0, tanh_factor([0.0, 0.9])),)),)))
    g_pair = cyl_function(
        (0, 1),
        (((1.0, ((0, tanh_factor([0.0, 0.7])), (1, tanh_factor([0.0, 1.1])))),)),
    )
    return (
        Witness("const", ()),
        Witness("tanh0@t1", ((g_tanh0, 1.0),)),
        Witness("cos1@t1", ((g_cos1, 1.0),)),
        Witness("tanh2@half", ((g_tanh2, 0.5),)),
        Witness("tanh0@t1*tanh2@half", ((g_tanh0, 1.0), (g_tanh2, 0.5))),
        Witness("tanh0*tanh1@t1", ((g_pair, 1.0),)),
    )


@dataclass(frozen=True)
class MartingaleTestReport:
    """Grid of statistics E[(M_{t2} - M_{t1}) psi] with mechanical verdicts.

    Each cell carries (pair, witness, stat, se, n, z, verdict); the global
    verdict is "fail" if any cell exceeds z_threshold SEs, "inconclusive" if
    any cell is underpowered, else "pass".  fwer_bound is the Bonferroni cap
    on the familywise false-alarm rate of the grid at this threshold.
    """

    pairs: tuple[tuple[float, float], ...]
    witness_labels: tuple[str, ...]
    cells: tuple[dict, ...]
    n_paths: int
    z_threshold: float
    fwer_bound: float
    verdict: str

    def to_dict(self) -> dict:
        return {
            "experiment": "martingale-grid",
            "parameters": {
                "pairs": [list(p) for p in self.pairs],
                "witnesses": list(self.witness_labels),
                "n_paths": self.n_paths,
                "z_threshold": self.z_threshold,
                "fwer_bound": self.fwer_bound,
            },
            "cells": list(self.cells),
            "verdict": self.verdict,
        }


def _time_slot(times: np.ndarray, t: float, dt: float) -> int:
    s = round(t / dt)
    hits = np.nonzero(np.abs(times - s * dt) < 0.5 * dt)[0]
    if hits.size != 1 or abs(s * dt - t) > 1e-9 * max(1.0, abs(t)):
        raise EstimationError(f"time {t} is not among the recorded grid times")
    return int(hits[0])


def _witness_values(
    w: Witness, res: EnsembleResult, t1: float
) -> np.ndarray:
    vals = np.ones(res.n_paths)
    for g, frac in w.factors:
        j = _time_slot(res.times, round(frac * t1 / res.dt) * res.dt, res.dt)
        cols = _entry_positions(res.coord_entries, g.entries)
        vals = vals * g.values(res.coords[:, j, cols])
    return vals


def _grid_cells(
    fn: CylindricalFunction,
    res: EnsembleResult,
    cov: CovarianceSpec,
    pairs: Sequence[tuple[float, float]],
    witnesses: Sequence[Witness],
    *,
    damp: DampingSpec | None = None,
    stopped: bool = False,
) -> list[tuple[tuple[float, float], str, MCEstimate]]:
    """One MCEstimate per (pair, witness) cell from a recorded ensemble."""
    M = _ensemble_residuals(fn, res, cov, damp=damp, stopped=stopped)
    out = []
    for t1, t2 in pairs:
        j1 = _time_slot(res.times, t1, res.dt)
        j2 = _time_slot(res.times, t2, res.dt)
        dM = M[:, j2] - M[:, j1]
        for w in witnesses:
            psi = _witness_values(w, res, t1)
            out.append(((t1, t2), w.label, MCEstimate.from_samples(dM * psi)))
    return out


def _cells_report(
    pairs: Sequence[tuple[float, float]],
    witnesses: Sequence[Witness],
    cells: list[tuple[tuple[float, float], str, MCEstimate]],
    z_threshold: float,
) -> MartingaleTestReport:
    rows = []
    worst = "pass"
    for (t1, t2), label, est in cells:
        if est.std_error > 0:
            z = est.mean / est.std_error
        else:
            z = 0.0 if est.mean == 0.0 else math.inf
        if est.n < 30 or not math.isfinite(est.std_error):
            verdict = "inconclusive"
        elif abs(z) > z_threshold:
            verdict = "fail"
        else:
            verdict = "pass"
        if verdict == "fail" or (verdict == "inconclusive" and worst == "pass"):
            worst = verdict
        rows.append({
            "pair": [t1, t2], "witness": label, "stat": est.mean,
            "se": est.std_error, "n": est.n, "z": float(z),
            "verdict": verdict,
        })
    n_cells = len(rows)
    fwer = n_cells * 2.0 * _phi_tail(z_threshold)
    n_paths = cells[0][2].n if cells else 0
    return MartingaleTestReport(
        pairs=tuple(tuple(p) for p in pairs),
        witness_labels=tuple(w.label for w in witnesses),
        cells=tuple(rows),
        n_paths=n_paths,
        z_threshold=z_threshold,
        fwer_bound=fwer,
        verdict=worst,
    )


def _phi_tail(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def _check_pairs(pairs: Sequence[tuple[float, float]]) -> list[tuple[float, float]]:
    out = []
    for t1, t2 in pairs:
        if not 0.0 <= t1 < t2:
            raise EstimationError(
                f"pair ({t1}, {t2}) rejected: need 0 <= t1 < t2"
            )
        out.append((float(t1), float(t2)))
    if not out:
        raise EstimationError("empty pair grid")
    return out


def test_martingale_property(
    fn: CylindricalFunction,
    sample: EnsembleResult,
    pairs: Sequence[tuple[float, float]],
    witnesses: Sequence[Witness] | None = None,
    *,
    cov: CovarianceSpec,
    damp: DampingSpec | None = None,
    stopped: bool = False,
    z_threshold: float = 3.0,
) -> MartingaleTestReport:
    """Martingale test on a recorded ensemble: every statistic
    E[(M_{t2} - M_{t1}) psi(path up to t1)] must vanish within threshold.

    The ensemble must record, from time 0 and densely enough for the
    quadrature, the coordinates of fn and of every witness plus the
    advection term.  Pairs with t2 <= t1 are rejected.
    """
    pairs = _check_pairs(pairs)
    if witnesses is None:
        witnesses = default_witnesses(sample.basis)
    cells = _grid_cells(
        fn, sample, cov, pairs, witnesses, damp=damp, stopped=stopped
    )
    return _cells_report(pairs, witnesses, cells, z_threshold)


test_martingale_property.__test__ = False  # a library entry point, not a pytest case


def run_martingale_grid(
    fn: CylindricalFunction,
    x: SpectralField,
    cov: CovarianceSpec,
    cfg: IntegratorConfig,
    n_paths: int,
    streams: NoiseStreams,
    pairs: Sequence[tuple[float, float]],
    witnesses: Sequence[Witness] | None = None,
    *,
    damp: DampingSpec | None = None,
    freeze_radius: float | None = None,
    z_threshold: float = 3.0,
    workers: int | None = None,
) -> MartingaleTestReport:
    """Simulate and test in one go, streaming blocks so dense recording never
    materializes the whole ensemble.  Cell estimates from the blocks merge
    exactly (the result is independent of the block partition)."""
    pairs = _check_pairs(pairs)
    if damp is not None and freeze_radius is not None:
        raise EstimationError(
            "damped and stopped residuals are distinct objects; pick one"
        )
    basis = x.basis
    if witnesses is None:
        witnesses = default_witnesses(basis)
    t_max = max(t2 for _, t2 in pairs)
    steps = round(t_max / cfg.dt)
    rec_times = [s * cfg.dt for s in range(steps + 1)]
    entries = sorted({*fn.entries, *(e for w in witnesses for e in w.entries)})
    acc: list[MCEstimate | None] = [None] * (len(pairs) * len(witnesses))

    def consume(block: EnsembleResult) -> None:
        cells = _grid_cells(
            fn, block, cov, pairs, witnesses,
            damp=damp, stopped=freeze_radius is not None,
        )
        for i, (_, _, est) in enumerate(cells):
            acc[i] = est if acc[i] is None else acc[i].merge(est)

    run_ensemble(
        x, cov, cfg, t_max, n_paths, streams,
        record_times=rec_times, record_coords=entries, record_bilinear=True,
        damping=damp, freeze_radius=freeze_radius,
        consumer=consume, workers=workers,
    )
    labels = [((t1, t2), w.label) for t1, t2 in pairs for w in witnesses]
    cells = [(pw[0], pw[1], est) for pw, est in zip(labels, acc)]
    return _cells_report(pairs, witnesses, cells, z_threshold)


# ---------------------------------------------------------------------------
# Generator / semigroup exchange on one ensemble


def check_duhamel_identity(
    fn: CylindricalFunction,
    x: SpectralField,
    cov: CovarianceSpec,
    cfg: IntegratorConfig,
    t1: float,
    t2: float,
    streams: NoiseStreams,
    *,
    damp: DampingSpec | None = None,
    n_paths: int = 20000,
    n_nodes: int = 9,
    workers: int | None = None,
) -> dict:
    """Semigroup increment against the generator quadrature:

        E[w(t2) fn(X_t2)] - E[w(t1) fn(X_t1)]
            = int_t1^t2 E[w(s) (L fn - gamma fn)(X_s)] ds

    with w = exp(-int gamma) (w = 1, gamma = 0 undamped).  Both sides come
    from one ensemble, so the per-path difference carries the full noise
    pairing; the trapezoid refinement error is an explicit allowance.
    """
    if not 0.0 <= t1 <= t2:
        raise EstimationError(f"need 0 <= t1 <= t2, got ({t1}, {t2})")
    if t1 == t2:
        return {
            "experiment": "duhamel-identity",
            "parameters": {"t1": t1, "t2": t2, "n_paths": n_paths,
                           "damp": damp.kind if damp else None},
            "lhs": 0.0, "rhs": 0.0, "delta": 0.0, "se": 0.0,
            "allowance": 0.0, "verdict": "pass",
        }
    s_nodes = np.round(np.linspace(t1, t2, n_nodes) / cfg.dt) * cfg.dt
    s_nodes = np.unique(np.concatenate([s_nodes, [t1, t2]]))
    rec = sorted(set(float(s) for s in s_nodes))
    res = run_ensemble(
        x, cov, cfg, t2, n_paths, streams,
        record_times=rec, record_coords=fn.entries, record_bilinear=True,
        workers=workers,
    )
    if np.any(res.trunc_steps >= 0):
        raise EstimationError("truncated paths in the Duhamel ensemble")
    basis = x.basis
    phi = fn.values(res.coords)
    lphi = apply_L(fn, basis, cov, res.coords, res.bcoords)
    if damp is None:
        w = np.ones_like(phi)
        gam = np.zeros_like(phi)
    else:
        w = res.weights(damp)
        gam = damp.gamma_from_norms(
            res.norms[:, :, 0], res.norms[:, :, 1], res.norms[:, :, 2]
        )
    times = res.times
    j1 = _time_slot(times, t1, cfg.dt)
    j2 = _time_slot(times, t2, cfg.dt)
    sl = slice(j1, j2 + 1)
    integrand = (w * (lphi - gam * phi))[:, sl]
    seg = np.diff(times[sl])
    integral = np.sum(0.5 * seg * (integrand[:, 1:] + integrand[:, :-1]), axis=1)
    delta_paths = w[:, j2] * phi[:, j2] - w[:, j1] * phi[:, j1] - integral
    delta = MCEstimate.from_samples(delta_paths)
    lhs = MCEstimate.from_samples(w[:, j2] * phi[:, j2] - w[:, j1] * phi[:, j1])
    rhs = MCEstimate.from_samples(integral)
    quad_err = _quad_refinement_error(integrand.mean(axis=0), times[sl])
    scale = max(abs(lhs.mean), abs(rhs.mean), float(np.std(delta_paths)))
    return {
        "experiment": "duhamel-identity",
        "parameters": {
            "t1": float(t1), "t2": float(t2), "n_paths": n_paths,
            "n_nodes": int(times[sl].size),
            "damp": damp.kind if damp else None,
            "damp_coef": damp.coef if damp else 0.0,
        },
        "lhs": lhs.mean,
        "rhs": rhs.mean,
        "delta": delta.mean,
        "se": delta.std_error,
        "allowance": quad_err,
        "verdict": three_se_verdict(
            delta.mean, delta.std_error, allowance=quad_err, scale=scale
        ),
    }


# ---------------------------------------------------------------------------
# Cross-configuration agreement (the computable shadow of weak uniqueness)


def _lift(x: SpectralField, basis: BasisSpec) -> SpectralField:
    """Move x into another cutoff's table; dropping nonzero modes is refused
    (the comparison requires the two runs to share the initial state)."""
    if basis.cutoff < x.basis.cutoff:
        back = galerkin_project(galerkin_project(x, basis), x.basis)
        if not np.allclose(back.coeffs, x.coeffs, atol=1e-14):
            raise EstimationError(
                "initial state has modes above the coarse cutoff"
            )
    return galerkin_project(x, basis)


def translate_entries(
    fn: CylindricalFunction, src: BasisSpec, dst: BasisSpec
) -> CylindricalFunction:
    """The same function of the same physical modes in another cutoff's
    table: each entry is re-indexed by its (wave vector, polarization)
    identity.  Entry *indices* are table-relative; comparing runs across
    cutoffs without this remap silently reads different modes."""
    if src.d != dst.d:
        raise EstimationError("cannot translate entries across dimensions")
    mapped = tuple(
        entry_index(dst, src.wavevectors[e], int(src.pols[e]))
        for e in fn.entries
    )
    return CylindricalFunction(entries=mapped, terms=fn.terms)


def _side_estimates(
    fns: Sequence[CylindricalFunction],
    x: SpectralField,
    cov: CovarianceSpec,
    cfg: IntegratorConfig,
    t_grid: np.ndarray,
    lam_grid: np.ndarray,
    n_paths: int,
    streams: NoiseStreams,
    t_lap: float,
    workers: int | None,
) -> tuple[list[list[MCEstimate]], list[list[MCEstimate]], float, np.ndarray]:
    """One configuration's estimates of E fn(X_t) on t_grid and of the
    Laplace transforms on lam_grid (shared run; per-path quadratures)."""
    steps_lap = round(t_lap / cfg.dt)
    raw = np.geomspace(1.0, steps_lap, 41)
    lap_steps = np.unique(np.round(raw).astype(np.int64))
    rec_steps = sorted(
        {0, *lap_steps.tolist(), *(round(t / cfg.dt) for t in t_grid)}
    )
    rec_times = [s * cfg.dt for s in rec_steps]
    entries = sorted({e for f in fns for e in f.entries})
    res = run_ensemble(
        x, cov, cfg, rec_times[-1], n_paths, streams,
        record_times=rec_times, record_coords=entries, workers=workers,
    )
    if np.any(res.trunc_steps >= 0):
        raise EstimationError("truncated paths in the crosscheck ensemble")
    times = res.times
    means: list[list[MCEstimate]] = []
    laps: list[list[MCEstimate]] = []
    quad_worst = 0.0
    for f in fns:
        cols = _entry_positions(res.coord_entries, f.entries)
        vals = f.values(res.coords[:, :, cols])
        means.append([
            MCEstimate.from_samples(vals[:, _time_slot(times, float(t), cfg.dt)])
            for t in t_grid
        ])
        row = []
        for lam in lam_grid:
            g = vals * np.exp(-lam * times)[None, :]
            per = np.sum(0.5 * np.diff(times) * (g[:, 1:] + g[:, :-1]), axis=1)
            row.append(MCEstimate.from_samples(per))
            quad_worst = max(
                quad_worst,
                _quad_refinement_error(
                    vals.mean(axis=0) * np.exp(-lam * times), times
                ),
            )
        laps.append(row)
    return means, laps, quad_worst, times


def uniqueness_crosscheck(
    fns: Sequence[CylindricalFunction],
    x: SpectralField,
    cov: CovarianceSpec,
    t_grid: Sequence[float],
    lam_grid: Sequence[float],
    streams: NoiseStreams,
    *,
    cfg_a: IntegratorConfig,
    cfg_b: IntegratorConfig,
    basis_b: BasisSpec | None = None,
    n_paths: int = 4000,
    pilot_frac: float = 0.25,
    streams_a: NoiseStreams | None = None,
    streams_b: NoiseStreams | None = None,
    lap_tol: float = 5e-3,
    workers: int | None = None,
) -> dict:
    """Two independently configured approximations of the same law, compared
    on E fn(X_t) over t_grid and on Laplace transforms over lam_grid.

    Side A runs cfg_a at x; side B runs cfg_b, optionally at another cutoff
    (x is zero-filled into basis_b; nonzero modes above a coarser basis_b are
    refused).  Each side also runs a common-noise pilot at twice its step,
    and |estimate(dt) - estimate(2 dt)| is the Richardson proxy for that
    side's discretization bias: it enters the allowance, never the verdict's
    denominator.  Passing the same streams and configuration on both sides
    reproduces identical estimates exactly.
    """
    if not fns:
        raise EstimationError("need at least one test function")
    for f in fns:
        if not f.bounded():
            raise EstimationError("crosscheck test functions must be bounded")
    t_grid = np.asarray(sorted(float(t) for t in t_grid))
    lam_grid = np.asarray(sorted(float(v) for v in lam_grid))
    if np.any(lam_grid <= 0):
        raise EstimationError("Laplace parameters must be positive")
    sup = max(f.sup_bound() for f in fns)
    lam0 = lam_grid[0]
    t_need = math.log(max(sup, 1e-300) / (lap_tol * lam0)) / lam0
    t_lap = max(float(t_grid[-1]), t_need)

    sa = streams_a if streams_a is not None else streams.child(1)
    sb = streams_b if streams_b is not None else streams.child(2)
    xb = _lift(x, basis_b) if basis_b is not None else x
    fns_b = (
        [translate_entries(f, x.basis, xb.basis) for f in fns]
        if basis_b is not None
        else list(fns)
    )
    npil = max(64, int(n_paths * pilot_frac))

    def side(fside, xs, cfg, st):
        t_side = math.ceil(t_lap / cfg.dt) * cfg.dt
        main = _side_estimates(
            fside, xs, cov, cfg, t_grid, lam_grid, n_paths, st, t_side, workers
        )
        cfg2 = IntegratorConfig(
            dt=2 * cfg.dt, scheme=cfg.scheme, route=cfg.route,
            block_paths=cfg.block_paths, validate=cfg.validate,
        )
        pilot = _side_estimates(
            fside, xs, cov, cfg2, t_grid, lam_grid, npil, st, t_side, workers
        )
        return main, pilot

    (means_a, laps_a, quad_a, _), (pm_a, pl_a, _, _) = side(list(fns), x, cfg_a, sa)
    (means_b, laps_b, quad_b, _), (pm_b, pl_b, _, _) = side(fns_b, xb, cfg_b, sb)

    tail = np.exp(-lam_grid * t_lap) * sup / lam_grid
    rows = []
    worst = "pass"
    for i, f in enumerate(fns):
        for j, t in enumerate(t_grid):
            ea, eb = means_a[i][j], means_b[i][j]
            bias = abs(pm_a[i][j].mean - ea.mean) + abs(pm_b[i][j].mean - eb.mean)
            d = ea.mean - eb.mean
            se = math.sqrt(ea.std_error**2 + eb.std_error**2)
            v = three_se_verdict(d, se, allowance=bias, scale=sup)
            rows.append({
                "observable": f"mean[{i}]@t={t:g}", "lhs": ea.mean,
                "rhs": eb.mean, "se": se, "allowance": bias, "verdict": v,
            })
        for k, lam in enumerate(lam_grid):
            ea, eb = laps_a[i][k], laps_b[i][k]
            bias = abs(pl_a[i][k].mean - ea.mean) + abs(pl_b[i][k].mean - eb.mean)
            allow = bias + quad_a + quad_b + 2.0 * float(tail[k])
            d = ea.mean - eb.mean
            se = math.sqrt(ea.std_error**2 + eb.std_error**2)
            v = three_se_verdict(d, se, allowance=allow, scale=sup / lam)
            rows.append({
                "observable": f"laplace[{i}]@lam={lam:g}", "lhs": ea.mean,
                "rhs": eb.mean, "se": se, "allowance": allow, "verdict": v,
            })
    for r in rows:
        if r["verdict"] == "fail":
            worst = "fail"
            break
        if r["verdict"] == "inconclusive":
            worst = "inconclusive"
    return {
        "experiment": "uniqueness-crosscheck",
        "parameters": {
            "n_fns": len(fns), "t_grid": t_grid.tolist(),
            "lam_grid": lam_grid.tolist(), "n_paths": n_paths,
            "scheme_a": cfg_a.scheme, "dt_a": cfg_a.dt,
            "scheme_b": cfg_b.scheme, "dt_b": cfg_b.dt,
            "cutoff_a": x.basis.cutoff, "cutoff_b": xb.basis.cutoff,
            "t_laplace": t_lap,
        },
        "rows": rows,
        "lhs": rows[0]["lhs"],
        "rhs": rows[0]["rhs"],
        "se": rows[0]["se"],
        "verdict": worst,
    }
