"""Trend tests for the pathwise energy bounds behind the damped semigroups.

Every bound validated here has the shape  E[functional of the path]
<= c (1 + |x|_s^k)  with a constant that is finite but not quantified, so a
single ensemble can never confirm or refute it.  What *is* checkable is
uniformity: the ratio  estimate / (1 + |x|_s^k)  must stay bounded as the
initial condition climbs a geometric ladder, or -- for the truncation bound
-- as the Galerkin cutoff grows with everything else held fixed.  Each
validator therefore fits the per-rung ratios against the ladder position by
weighted least squares and fails only when the slope is positive beyond
three standard errors plus a small materiality band (see
``_MATERIAL_RISE``: exact rungs make a bounded ratio's approach to its
asymptote statistically "significant").  A flat or falling ratio passes,
and a fit too noisy to resolve a slope of practical size is reported
inconclusive rather than silently passed.

The path functionals come straight from the integrator's running
accumulators (``SUP_NAMES`` / ``INTEGRAL_NAMES`` in :mod:`.engine`), so the
validators add no per-step work:

* :func:`validate_lemma_l1` -- energy bound sup |X|^2 + int |X|_1^2 against
  1 + |x|^2, and the fourth-moment variant sup |X|^4 + int |X|^2 |X|_1^2
  against 1 + |x|^4, over a ladder of |x|.
* :func:`validate_lemma_l2` -- damped enstrophy bounds: with the weight
  w(t) = exp(-c int_0^t |X|^2 |X|_1^2 ds), the k = 2 statement
  sup w |X|_1^2 + int w |AX|^2 against 1 + |x|_1^2 (the weighted
  dissipation integral belongs to this power only) and the k in {4, 6} sup
  bounds against 1 + |x|_1^k, over a ladder of |x|_1.  The weight constant
  comes from :func:`validate_bilinear_estimates`.
* :func:`validate_prop_p31` -- cutoff uniformity: with the weight
  exp(-eps int |X|_1^6 ds), the moment E[w(t) |AX(t)|^k] must be flat
  across a ladder of cutoffs for one fixed initial field.  Uniformity in
  the truncation level is the entire content of the bound, so the ladder
  runs over cutoffs rather than initial conditions.
* :func:`validate_bilinear_estimates` -- the deterministic inequality chain
  that feeds the l2 weight:
  (b(x), Ax) <= |b(x)| |Ax| <= c1 |x|^{1/2} |x|_1 |x|_2^{3/2}, plus the
  Young split |b(x)| |Ax| <= 1/2 |x|_2^2 + c |x|^2 |x|_1^4 with
  c = 27/32 c1^4, checked pointwise on every sample.  On the 2-d torus the
  left end (b(x), Ax) vanishes identically (the advection conserves
  enstrophy, and Galerkin truncation preserves the cancellation), so the
  empirical constant c1 is taken from the Cauchy-Schwarz majorant
  |b(x)| |Ax| -- the first surviving link of the chain -- while the
  cancellation itself is verified as a by-product.

All ladder rungs of one validator share a noise stream (identical
trajectory indices), so rung-to-rung comparisons are paired; the trend fit
treats rungs as independent, which with common noise only overstates the
slope error and keeps the test conservative.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .basis import (
    BasisSpec,
    CovarianceSpec,
    SpectralField,
    enumerate_basis,
    entry_index,
    random_field,
    sobolev_norm,
)
from .bilinear import bilinear_b, galerkin_project
from .engine import (
    INTEGRAL_NAMES,
    SUP_NAMES,
    DampingSpec,
    EnsembleResult,
    IntegratorConfig,
    NoiseStreams,
    run_ensemble,
)
from .semigroups import EstimationError, MCEstimate

__all__ = [
    "validate_bilinear_estimates",
    "validate_lemma_l1",
    "validate_lemma_l2",
    "validate_prop_p31",
]

_CUTOFF_LADDER = {2: (8, 16, 32, 64), 3: (2, 4, 8)}

_VERDICT_RANK = {"pass": 0, "inconclusive": 1, "fail": 2}

# A ladder-wide ratio rise below this fraction of the top ratio reads as
# saturation toward a finite constant, not growth: heavily damped rungs can
# be exact to rounding (zero SE), where the textbook 3-SE rule would flag a
# bounded ratio climbing to its asymptote, e.g. v^k / (1 + v^k) -> 1.  Any
# genuine non-uniformity grows by order-of-ratio factors across a
# geometric ladder and clears this band by orders of magnitude.
_MATERIAL_RISE = 0.02


def _worst(verdicts: Sequence[str]) -> str:
    return max(verdicts, key=_VERDICT_RANK.__getitem__) if verdicts else "pass"


def _weighted_trend(
    positions: np.ndarray, ratios: Sequence[float], ses: Sequence[float]
) -> tuple[float, float]:
    """Weighted least-squares slope of ratio against ladder position.

    Weights are inverse squared standard errors, floored at 1e-6 of the
    ratio scale: rungs that are deterministic to rounding would otherwise
    get ~1e34 weights and wreck the normal equations by cancellation.  When
    every rung sits below the floor the fit degrades to ordinary least
    squares with the residual scatter as the only available noise measure.
    """
    u = np.asarray(positions, dtype=np.float64)
    r = np.asarray(ratios, dtype=np.float64)
    s = np.asarray(ses, dtype=np.float64)
    if u.size < 3:
        raise EstimationError("trend test needs at least three ladder rungs")
    floor = 1e-6 * max(float(np.max(np.abs(r))), np.finfo(float).tiny)
    stochastic = bool(np.any(s > floor))
    w = 1.0 / np.maximum(s, floor) ** 2 if stochastic else np.ones_like(s)
    ubar = float(np.sum(w * u) / np.sum(w))
    sxx = float(np.sum(w * (u - ubar) ** 2))
    if sxx <= 0:
        raise EstimationError("degenerate ladder: all rungs at one position")
    slope = float(np.sum(w * (u - ubar) * r) / sxx)
    if stochastic:
        slope_se = float(1.0 / np.sqrt(sxx))
    else:
        rbar = float(np.sum(w * r) / np.sum(w))
        resid = r - rbar - slope * (u - ubar)
        slope_se = float(np.sqrt(np.sum(resid**2) / max(u.size - 2, 1) / sxx))
    return slope, slope_se


def _trend_verdict(slope: float, slope_se: float, scale: float, span: float) -> str:
    """One-sided flatness verdict: an upward trend beyond 3 SE fails, but
    only when the fitted rise across the whole ladder is material (more
    than ``_MATERIAL_RISE`` of the top-rung ratio ``scale``).

    A statistical band much wider than the ratio itself means the run
    cannot resolve a trend of practical size, which is reported rather
    than waved through.
    """
    band = 3.0 * slope_se + _MATERIAL_RISE * abs(scale) / span
    if not (np.isfinite(slope) and np.isfinite(band)):
        return "inconclusive"
    if slope > band:
        return "fail"
    if 3.0 * slope_se > 0.5 * max(abs(scale), np.finfo(float).tiny):
        return "inconclusive"
    return "pass"


def _trend_block(
    positions: np.ndarray, ratios: Sequence[float], ses: Sequence[float]
) -> dict:
    slope, slope_se = _weighted_trend(positions, ratios, ses)
    span = float(positions[-1] - positions[0])
    verdict = _trend_verdict(slope, slope_se, float(ratios[-1]), span)
    return {
        "ratios": [float(v) for v in ratios],
        "ratio_ses": [float(v) for v in ses],
        "slope": slope,
        "slope_se": slope_se,
        "verdict": verdict,
    }


def _ladder_fields(
    basis: BasisSpec,
    ladder: Sequence[float],
    *,
    norm_order: float,
    decay: float,
    seed: int,
) -> list[SpectralField]:
    """One random direction, rescaled to each rung of the norm ladder.

    Sharing the direction keeps everything but the amplitude fixed, so the
    trend isolates the norm dependence instead of mixing in shape noise.
    """
    rng = np.random.default_rng(seed)
    shape = random_field(basis, rng, decay=decay)
    base = sobolev_norm(shape, norm_order)
    return [shape * (float(v) / base) for v in ladder]


def _clean_samples(res: EnsembleResult, values: np.ndarray) -> MCEstimate:
    """Estimate from the non-truncated paths, counting the dropped ones."""
    ok = res.trunc_steps < 0
    return MCEstimate.from_samples(values[ok], n_truncated=int(np.count_nonzero(~ok)))


def validate_lemma_l1(
    cov: CovarianceSpec,
    cfg: IntegratorConfig,
    streams: NoiseStreams,
    *,
    basis: BasisSpec,
    ladder: Sequence[float] = (1.0, 2.0, 4.0, 8.0),
    t_final: float = 1.0,
    n_paths: int = 10_000,
    decay: float = 1.5,
    seed: int = 0,
    use_drift: bool = True,
    workers: int | None = None,
) -> dict:
    """Trend-test the energy bounds over a geometric ladder of |x|.

    Per rung the ensemble estimates

        E[ sup_t |X(t)|^2 + int_0^T |X(t)|_1^2 dt ]            vs  1 + |x|^2
        E[ sup_t |X(t)|^4 + int_0^T |X(t)|^2 |X(t)|_1^2 dt ]   vs  1 + |x|^4

    and the ratios are fitted against log2 |x|.  Both bounds go through the
    energy balance, whose nonlinearity-cancelling structure is exactly what
    keeps the ratio flat; an upward trend beyond 3 SE fails the check.

    The horizon matters: the dissipated-energy fraction grows with |x|
    (richer cascade, faster decay), so at short t_final the ratio climbs
    toward its asymptote across the ladder and the trend test -- honestly
    -- cannot tell that from unbounded growth.  By t_final = 1 the rungs
    sit in the saturated regime and a correct simulator reads flat.
    """
    if basis.d != 2:
        raise EstimationError("the energy-bound ladder is a 2-d check")
    fields = _ladder_fields(basis, ladder, norm_order=0.0, decay=decay, seed=seed)
    i_h1 = INTEGRAL_NAMES.index("h1")
    i_l2h1 = INTEGRAL_NAMES.index("l2h1")
    s_l2 = SUP_NAMES.index("l2")
    rows = []
    ratios: dict[str, list[tuple[float, float]]] = {"quadratic": [], "quartic": []}
    for x in fields:
        res = run_ensemble(
            x,
            cov,
            cfg,
            t_final,
            n_paths,
            streams,
            record_times=[t_final],
            record_coords=(),
            use_drift=use_drift,
            workers=workers,
        )
        sup_l2 = res.sups[:, s_l2]
        e_quad = _clean_samples(res, sup_l2 + res.integrals[:, -1, i_h1])
        e_quart = _clean_samples(res, sup_l2**2 + res.integrals[:, -1, i_l2h1])
        xn = sobolev_norm(x, 0.0)
        d2, d4 = 1.0 + xn**2, 1.0 + xn**4
        ratios["quadratic"].append((e_quad.mean / d2, e_quad.std_error / d2))
        ratios["quartic"].append((e_quart.mean / d4, e_quart.std_error / d4))
        rows.append(
            {
                "x_norm": xn,
                "lhs_quadratic": e_quad.mean,
                "se_quadratic": e_quad.std_error,
                "ratio_quadratic": e_quad.mean / d2,
                "lhs_quartic": e_quart.mean,
                "se_quartic": e_quart.std_error,
                "ratio_quartic": e_quart.mean / d4,
                "truncated_fraction": e_quad.truncated_fraction,
            }
        )
    positions = np.log2(np.asarray(ladder, dtype=np.float64))
    bounds = {
        name: _trend_block(positions, [p[0] for p in pairs], [p[1] for p in pairs])
        for name, pairs in ratios.items()
    }
    return {
        "experiment": "lemma-l1",
        "parameters": {
            "ladder": [float(v) for v in ladder],
            "cutoff": basis.cutoff,
            "t_final": float(t_final),
            "dt": cfg.dt,
            "scheme": cfg.scheme,
            "n_paths": int(n_paths),
            "decay": float(decay),
            "seed": int(seed),
            "use_drift": bool(use_drift),
        },
        "rows": rows,
        "bounds": bounds,
        "verdict": _worst([b["verdict"] for b in bounds.values()]),
    }


def validate_lemma_l2(
    cov: CovarianceSpec,
    cfg: IntegratorConfig,
    streams: NoiseStreams,
    *,
    basis: BasisSpec,
    c_tilde: float,
    ladder: Sequence[float] = (1.0, 2.0, 4.0, 8.0),
    powers: Sequence[int] = (2, 4, 6),
    t_final: float = 1.0,
    n_paths: int = 10_000,
    decay: float = 1.5,
    seed: int = 0,
    use_drift: bool = True,
    workers: int | None = None,
) -> dict:
    """Trend-test the damped enstrophy bounds over a ladder of |x|_1.

    With the weight w(t) = exp(-c_tilde int_0^t |X|^2 |X|_1^2 ds), each rung
    estimates

        k = 2:       E[ sup_t w |X|_1^2 + int_0^T w |AX|^2 dt ]  vs  1 + |x|_1^2
        k in {4,6}:  E[ sup_t w |X|_1^k ]                        vs  1 + |x|_1^k

    ``c_tilde`` must dominate the advective-flux constant (take it from
    :func:`validate_bilinear_estimates`): then the weight absorbs the
    nonlinear enstrophy production and the ratio stays flat up the ladder.
    An undersized constant shows up here as an upward trend.
    """
    if basis.d != 2:
        raise EstimationError("the damped enstrophy ladder is a 2-d check")
    if c_tilde <= 0:
        raise EstimationError("the weight constant c_tilde must be positive")
    bad = [k for k in powers if k not in (2, 4, 6)]
    if bad:
        raise EstimationError(f"unsupported enstrophy powers {bad}: tracked are 2, 4, 6")
    damp = DampingSpec("energy-h1", float(c_tilde))
    fields = _ladder_fields(basis, ladder, norm_order=0.5, decay=decay, seed=seed)
    sup_col = {2: SUP_NAMES.index("w_h1"), 4: SUP_NAMES.index("w_h1_sq"), 6: SUP_NAMES.index("w_h1_cu")}
    i_wa2 = INTEGRAL_NAMES.index("weighted_a2")
    rows = []
    ratios: dict[str, list[tuple[float, float]]] = {f"k{k}": [] for k in powers}
    for x in fields:
        res = run_ensemble(
            x,
            cov,
            cfg,
            t_final,
            n_paths,
            streams,
            record_times=[t_final],
            record_coords=(),
            damping=damp,
            use_drift=use_drift,
            workers=workers,
        )
        h1 = sobolev_norm(x, 0.5)
        row = {"x_h1_norm": h1}
        for k in powers:
            samples = res.sups[:, sup_col[k]]
            if k == 2:
                samples = samples + res.integrals[:, -1, i_wa2]
            est = _clean_samples(res, samples)
            denom = 1.0 + h1**k
            ratios[f"k{k}"].append((est.mean / denom, est.std_error / denom))
            row[f"lhs_k{k}"] = est.mean
            row[f"se_k{k}"] = est.std_error
            row[f"ratio_k{k}"] = est.mean / denom
            row["truncated_fraction"] = est.truncated_fraction
        rows.append(row)
    positions = np.log2(np.asarray(ladder, dtype=np.float64))
    bounds = {
        name: _trend_block(positions, [p[0] for p in pairs], [p[1] for p in pairs])
        for name, pairs in ratios.items()
    }
    return {
        "experiment": "lemma-l2",
        "parameters": {
            "ladder": [float(v) for v in ladder],
            "powers": [int(k) for k in powers],
            "c_tilde": float(c_tilde),
            "cutoff": basis.cutoff,
            "t_final": float(t_final),
            "dt": cfg.dt,
            "scheme": cfg.scheme,
            "n_paths": int(n_paths),
            "decay": float(decay),
            "seed": int(seed),
            "use_drift": bool(use_drift),
        },
        "rows": rows,
        "bounds": bounds,
        "verdict": _worst([b["verdict"] for b in bounds.values()]),
    }


def validate_prop_p31(
    x: SpectralField,
    cov: CovarianceSpec,
    cfg: IntegratorConfig,
    streams: NoiseStreams,
    *,
    cutoffs: Sequence[int] | None = None,
    eps: float = 0.1,
    k: int = 4,
    t_final: float = 0.5,
    n_paths: int = 10_000,
    use_drift: bool = True,
    workers: int | None = None,
) -> dict:
    """Trend-test cutoff uniformity of the damped E[w |AX(t)|^k] moment.

    ``x`` must be supported in the coarsest rung; each rung zero-fill embeds
    it into a finer Galerkin basis and estimates

        E[ exp(-eps int_0^t |X|_1^6 ds) |AX(t)|^k ]    at t = t_final.

    The comparison scale 1 + |Ax|^k is the same on every rung, so
    uniformity in the truncation level -- the entire point of the bound --
    is exactly flatness of the estimates across cutoffs.  Noise draws are
    laid out per (step, entry), hence rungs of different width see
    different noise and count as independent in the trend fit.
    """
    d = x.basis.d
    if cutoffs is None:
        cutoffs = _CUTOFF_LADDER[d]
    cutoffs = [int(m) for m in cutoffs]
    if len(cutoffs) < 3:
        raise EstimationError("cutoff ladder needs at least three rungs")
    if min(cutoffs) < x.basis.cutoff:
        raise EstimationError(
            f"initial field lives at cutoff {x.basis.cutoff}, above the coarsest rung {min(cutoffs)}"
        )
    if eps <= 0:
        raise EstimationError("the damping rate eps must be positive")
    damp = DampingSpec("sixth-h1", float(eps))
    denom = 1.0 + sobolev_norm(x, 1.0) ** k
    rows = []
    ratios = []
    ses = []
    for m in cutoffs:
        xm = galerkin_project(x, enumerate_basis(d, m))
        res = run_ensemble(
            xm,
            cov,
            cfg,
            t_final,
            n_paths,
            streams,
            record_times=[t_final],
            record_coords=(),
            damping=damp,
            use_drift=use_drift,
            workers=workers,
        )
        w = res.weights(damp)[:, -1]
        a2 = res.norms[:, -1, 2]
        est = _clean_samples(res, w * a2 ** (k / 2.0))
        ratios.append(est.mean / denom)
        ses.append(est.std_error / denom)
        rows.append(
            {
                "cutoff": m,
                "n_entries": xm.basis.m,
                "lhs": est.mean,
                "se": est.std_error,
                "ratio": est.mean / denom,
                "truncated_fraction": est.truncated_fraction,
            }
        )
    block = _trend_block(np.log2(np.asarray(cutoffs, dtype=np.float64)), ratios, ses)
    return {
        "experiment": "prop-p31",
        "parameters": {
            "cutoffs": cutoffs,
            "eps": float(eps),
            "k": int(k),
            "x_a2_norm": sobolev_norm(x, 1.0),
            "t_final": float(t_final),
            "dt": cfg.dt,
            "scheme": cfg.scheme,
            "n_paths": int(n_paths),
            "use_drift": bool(use_drift),
        },
        "rows": rows,
        "bound": block,
        "verdict": block["verdict"],
    }


def _dipole_field(basis: BasisSpec, rng: np.random.Generator) -> SpectralField:
    """Random two-mode field on a non-parallel pair of wave vectors.

    Parallel pairs with a common polarization are shear layers with
    b(x) = 0 identically and would dilute the maximum; any non-parallel
    pair interacts.
    """
    n = basis.lattice.shape[0]
    for _ in range(256):
        k1, k2 = basis.lattice[rng.integers(n)], basis.lattice[rng.integers(n)]
        if np.linalg.matrix_rank(np.stack([k1, k2])) < 2:
            continue
        c = np.zeros(basis.m)
        c[entry_index(basis, k1, int(rng.integers(basis.n_pol)))] = rng.standard_normal()
        c[entry_index(basis, k2, int(rng.integers(basis.n_pol)))] = rng.standard_normal()
        return SpectralField(basis, c)
    raise EstimationError("could not draw a non-parallel mode pair")


def validate_bilinear_estimates(
    *,
    d: int = 2,
    cutoffs: Sequence[int] = (8, 16, 32),
    decays: Sequence[float] = (0.5, 1.0, 1.5, 2.0),
    n_fields: int = 200,
    seed: int = 0,
    stability_factor: float = 2.0,
) -> dict:
    """Empirical constants for the advective energy-flux inequality chain.

    Draws ``n_fields`` random divergence-free fields per spectral-slope
    family and cutoff (plus an aligned-dipole family) and maximizes the
    scale-invariant ratio of the Cauchy-Schwarz majorant,

        c1 = max  |b(x)| |Ax|  /  ( |x|^{1/2} |x|_1 |x|_2^{3/2} ),

    which dominates (b(x), Ax).  The signed flux itself vanishes
    identically on the 2-d torus (advection conserves enstrophy and the
    Galerkin projection keeps the cancellation exact), so its maximal ratio
    is reported as ``cancellation_residual`` and must sit at rounding
    level; anything larger means a broken projection, not a constant.

    The Young split constant  c_tilde = 27/32 c1^4  then makes

        |b(x)| |Ax|  <=  1/2 |x|_2^2  +  c_tilde |x|^2 |x|_1^4

    hold for every sampled field, which is re-checked pointwise rather than
    trusted to algebra.  The majorant maximum must also be stable across
    cutoffs (within ``stability_factor``): the inequality is dimensionally
    critical in 2-d, so a maximum that kept climbing with resolution would
    expose a missing logarithm rather than sampling noise.  The reported
    ``c_tilde`` is the weight constant consumed by :func:`validate_lemma_l2`.
    """
    if d != 2:
        raise EstimationError("the advective-flux inequality is 2-d; no 3-d analogue is validated")
    if n_fields < 1:
        raise EstimationError("need at least one field per family")
    rng = np.random.default_rng(seed)
    c1_by_cutoff: dict[int, float] = {}
    cancel = 0.0
    samples: list[tuple[float, float, float, float]] = []  # (|b||Ax|, |x|^2, |x|_1^2, |Ax|^2)
    families = [f"decay-{dec:g}" for dec in decays] + ["dipole"]
    family_max: dict[str, float] = {name: 0.0 for name in families}
    for cutoff in cutoffs:
        basis = enumerate_basis(d, int(cutoff))
        best = 0.0
        draws = [(f"decay-{dec:g}", lambda dec=dec: random_field(basis, rng, decay=dec)) for dec in decays]
        draws.append(("dipole", lambda: _dipole_field(basis, rng)))
        for name, draw in draws:
            for _ in range(n_fields):
                major, signed, row = _flux_ratios(draw())
                samples.append(row)
                best = max(best, major)
                cancel = max(cancel, signed)
                family_max[name] = max(family_max[name], major)
        c1_by_cutoff[int(cutoff)] = best
    c1 = max(c1_by_cutoff.values())
    c_tilde = 27.0 / 32.0 * c1**4
    young_gap = -np.inf
    c_young_emp = 0.0
    for val, l2sq, h1sq, a2sq in samples:
        rhs = 0.5 * a2sq + c_tilde * l2sq * h1sq**2
        young_gap = max(young_gap, (val - rhs) / max(rhs, np.finfo(float).tiny))
        excess = val - 0.5 * a2sq
        if excess > 0:
            c_young_emp = max(c_young_emp, excess / (l2sq * h1sq**2))
    vals = np.array(list(c1_by_cutoff.values()))
    stability = float(vals.max() / vals.min()) if vals.min() > 0 else np.inf
    ok = (
        np.all(np.isfinite(vals))
        and vals.min() > 0
        and stability < stability_factor
        and young_gap <= 1e-12
        and cancel <= 1e-8 * c1
    )
    return {
        "experiment": "bilinear-constants",
        "parameters": {
            "d": d,
            "cutoffs": [int(c) for c in cutoffs],
            "decays": [float(v) for v in decays],
            "n_fields": int(n_fields),
            "seed": int(seed),
            "stability_factor": float(stability_factor),
        },
        "c1_by_cutoff": {str(m): float(v) for m, v in c1_by_cutoff.items()},
        "family_max": {name: float(v) for name, v in family_max.items()},
        "c_tilde_1": float(c1),
        "c_tilde": float(c_tilde),
        "cancellation_residual": float(cancel),
        "c_young_empirical": float(c_young_emp),
        "young_max_relative_gap": float(young_gap),
        "stability_ratio": stability,
        "n_samples": len(samples),
        "verdict": "pass" if ok else "fail",
    }


def _flux_ratios(x: SpectralField) -> tuple[float, float, tuple[float, float, float, float]]:
    """Majorant and signed flux ratios against |x|^{1/2} |x|_1 |x|_2^{3/2}.

    Returns (|b(x)| |Ax| / D, |(b(x), Ax)| / D, norms row); the second must
    be rounding noise in 2-d.
    """
    bx = bilinear_b(x)
    ax = -x.basis.eigs * x.coeffs
    signed = float(np.dot(bx.coeffs, ax))
    major = float(np.linalg.norm(bx.coeffs) * np.linalg.norm(ax))
    l2sq = float(np.sum(x.coeffs**2))
    h1sq = float(np.sum(x.basis.eigs * x.coeffs**2))
    a2sq = float(np.sum(x.basis.eigs**2 * x.coeffs**2))
    denom = l2sq**0.25 * h1sq**0.5 * a2sq**0.75
    if denom == 0.0:
        raise EstimationError("flux ratio of the zero field is undefined")
    return major / denom, abs(signed) / denom, (major, l2sq, h1sq, a2sq)
