"""Smoke checks for martingale.py: residual semantics and grid tests."""
import math
import numpy as np

from sgns.basis import CovarianceSpec, SpectralField, enumerate_basis
from sgns.cylinder import cyl_function, tanh_factor
from sgns.engine import DampingSpec, IntegratorConfig, NoiseStreams, run_ensemble, simulate
from sgns import martingale as mg
from sgns.semigroups import EstimationError

basis = enumerate_basis(2, 2)
cov = CovarianceSpec(alpha=2.5)
cfg = IntegratorConfig(dt=0.005)
rng = np.random.default_rng(3)
x = SpectralField(basis, 0.35 * np.cos(np.arange(basis.m) * 0.9))
streams = NoiseStreams(99)

fn = cyl_function(
    (1, 4),
    (
        (1.0, ((0, tanh_factor([0.0, 1.3])),)),
        (0.5, ((0, tanh_factor([0.0, 0.6])), (1, tanh_factor([0.0, 1.0])))),
    ),
)

# --- 1. single-path residual: M_0 = 0, E[M] small --------------------------
ts = simulate(x, cov, cfg, 0.3, streams, traj=0)
M = mg.martingale_residual(fn, ts, cov)
assert M.shape == (ts.times.size,)
assert M[0] == 0.0
print(f"1. single-path residual           OK  (M_0={M[0]}, M_T={M[-1]:+.3e})")

# --- 2. sigma=0: residual is pure quadrature error, shrinks with dt --------
cov0 = CovarianceSpec(alpha=2.5, sigma=0.0)
res_err = {}
for dt in (0.01, 0.005, 0.0025):
    c = IntegratorConfig(dt=dt)
    t0 = simulate(x, cov0, c, 0.2, streams, traj=0)
    M0 = mg.martingale_residual(fn, t0, cov0)
    res_err[dt] = float(np.max(np.abs(M0)))
assert res_err[0.01] < 2e-3, res_err
assert res_err[0.0025] < res_err[0.01] / 3, res_err  # ~first order in dt
print(f"2. sigma=0 residual ~ 0           OK  {res_err}")

# --- 3. ensemble residuals; K=0 damped == undamped bit-for-bit -------------
steps = round(0.3 / cfg.dt)
rec_times = [s * cfg.dt for s in range(steps + 1)]
res = run_ensemble(
    x, cov, cfg, 0.3, 400, streams.child(1),
    record_times=rec_times, record_coords=fn.entries, record_bilinear=True,
)
Me = mg.martingale_residual(fn, res, cov)
assert Me.shape == (400, len(rec_times))
assert np.all(Me[:, 0] == 0.0)
M0d = mg.martingale_residual(fn, res, cov, damp=DampingSpec("quadratic-enstrophy", 0.0))
assert np.array_equal(Me, M0d), "K=0 damped residual differs from undamped"
# single-path ensemble row matches the TrajectorySample residual
res1 = run_ensemble(
    x, cov, cfg, 0.3, 1, streams,
    record_times=rec_times, record_coords=fn.entries, record_bilinear=True,
)
M1 = mg.martingale_residual(fn, res1, cov)[0]
assert np.allclose(M1, M, atol=1e-12), np.max(np.abs(M1 - M))
# E[M_T] within 4 SE of zero
mT = Me[:, -1]
se = mT.std(ddof=1) / math.sqrt(mT.size)
assert abs(mT.mean()) < 4 * se, (mT.mean(), se)
print(f"3. ensemble residuals             OK  (E[M_T]={mT.mean():+.2e}, se={se:.2e})")

# --- 4. damped residual against independent recomposition ------------------
damp = DampingSpec("quartic-enstrophy", 0.3)
Md = mg.martingale_residual(fn, res, cov, damp=damp)
from sgns.cylinder import apply_L
idx = {int(e): i for i, e in enumerate(res.coord_entries)}
cols = [idx[e] for e in fn.entries]
phi = fn.values(res.coords[:, :, cols])
lphi = apply_L(fn, basis, cov, res.coords[:, :, cols], res.bcoords[:, :, cols])
w = np.exp(-0.3 * res.integrals[:, :, 4])          # int |AX|^4 accumulator
gam = 0.3 * res.norms[:, :, 2] ** 2                # |AX|^4 pointwise
integ = w * (lphi - gam * phi)
seg = np.diff(res.times)
cum = np.concatenate(
    [np.zeros((400, 1)), np.cumsum(0.5 * seg * (integ[:, 1:] + integ[:, :-1]), axis=1)],
    axis=1,
)
Md_ref = w * phi - phi[:, :1] - cum
assert np.allclose(Md, Md_ref, atol=1e-13), np.max(np.abs(Md - Md_ref))
assert np.all(Md[:, 0] == 0.0)
print("4. damped residual recomposition  OK")

# --- 5. stopped residual: frozen after tau on every path -------------------
# start small so the noise drives |AX| upward; put the radius at the median
# terminal level, which about half the paths cross mid-run
xsmall = SpectralField(basis, 0.05 * np.cos(np.arange(basis.m) * 0.9))
cal = run_ensemble(
    xsmall, cov, cfg, 0.3, 300, streams.child(2),
    record_times=[0.3], record_coords=fn.entries,
)
R = math.sqrt(float(np.quantile(cal.norms[:, -1, 2], 0.5)))
resf = run_ensemble(
    xsmall, cov, cfg, 0.3, 300, streams.child(2),
    record_times=rec_times, record_coords=fn.entries, record_bilinear=True,
    freeze_radius=R,
)
Ms = mg.martingale_residual(fn, resf, cov, stopped=True)
frozen = resf.tau_steps >= 0
assert np.sum(frozen) > 30, f"only {np.sum(frozen)} paths froze; retune"
rec_steps = np.round(resf.times / cfg.dt).astype(int)
for i in np.nonzero(frozen)[0][:50]:
    after = rec_steps >= resf.tau_steps[i]
    vals = Ms[i, after]
    assert np.all(vals == vals[0]), f"path {i} moved after tau"
# paths that never froze: stopped == plain residual
if np.any(~frozen):
    Mp = mg.martingale_residual(fn, resf, cov)
    assert np.array_equal(Ms[~frozen], Mp[~frozen])
print(f"5. stopped residual freezes       OK  ({int(np.sum(frozen))}/300 paths froze)")

# --- 6. truncation guards --------------------------------------------------
res_bad = run_ensemble(
    x, cov, cfg, 0.1, 8, streams.child(3),
    record_times=[0.0, 0.1], record_coords=fn.entries, record_bilinear=True,
)
res_bad.trunc_steps[2] = 5
try:
    mg.martingale_residual(fn, res_bad, cov)
    raise AssertionError("truncated path accepted")
except EstimationError:
    pass
try:
    mg.martingale_residual(fn, res_bad, cov, stopped=True)   # trunc without tau
    raise AssertionError("blow-through accepted")
except EstimationError:
    pass
try:
    mg.martingale_residual(fn, res_bad, cov, damp=damp, stopped=True)
    raise AssertionError("damp+stopped accepted")
except EstimationError:
    pass
res_nb = run_ensemble(
    x, cov, cfg, 0.1, 4, streams.child(3),
    record_times=[0.0, 0.1], record_coords=fn.entries,
)
try:
    mg.martingale_residual(fn, res_nb, cov)
    raise AssertionError("missing bcoords accepted")
except EstimationError:
    pass
print("6. truncation/recording guards    OK")

print("ALL MARTINGALE PART-1 CHECKS PASSED")
