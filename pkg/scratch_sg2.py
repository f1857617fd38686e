"""Smoke checks for semigroups.py part 2: resolvents, CV, identity checks."""
import math
import time
import numpy as np

from sgns.basis import CovarianceSpec, SpectralField, enumerate_basis
from sgns.cylinder import cyl_function, poly_factor, tanh_factor
from sgns.engine import IntegratorConfig, NoiseStreams
from sgns import semigroups as sg

rng = np.random.default_rng(1)
basis = enumerate_basis(2, 1)
cov = CovarianceSpec(alpha=2.5)
cfg = IntegratorConfig(dt=0.01)
x = SpectralField(basis, 0.25 * np.cos(np.arange(basis.m) * 1.1))
streams = NoiseStreams(77)

# --- 6. resolvent of the constant function ---------------------------------
one = cyl_function((0,), (((1.0, ((0, poly_factor([1.0])),)),)))
lam = 2.0
res = sg.resolvent(one, x, cov, cfg, lam, 32, streams, tol=1e-4)
T = res.t_max
# integrand is exactly e^(-lam t): per-path quadrature is deterministic
trap = float(np.sum(0.5 * np.diff(res.grid) * (np.exp(-lam * res.grid)[1:] + np.exp(-lam * res.grid)[:-1])))
assert abs(res.estimate.mean - trap) < 1e-12, (res.estimate.mean, trap)
assert res.estimate.std_error < 1e-12
exact_trunc = (1 - math.exp(-lam * T)) / lam
quad_err = abs(res.estimate.mean - exact_trunc)
assert res.tail_bound <= 1e-4 + 1e-12
assert abs(res.estimate.mean + res.tail_bound - 1 / lam) <= quad_err + res.tail_bound
# the 1% acceptance-style check: quadrature + tail land within 1% of 1/lam
assert abs(res.estimate.mean - 1 / lam) < 0.01 / lam, (res.estimate.mean, 1 / lam)
print(f"6. resolvent(1) = 1/lam           OK  (rel err {abs(res.estimate.mean*lam - 1):.2e}, tail {res.tail_bound:.1e})")

# unbounded test function must demand a horizon
unb = cyl_function((0,), (((1.0, ((0, poly_factor([0.0, 1.0])),)),)))
try:
    sg.resolvent(unb, x, cov, cfg, lam, 8, streams)
    raise AssertionError("unbounded fn accepted without t_max")
except sg.EstimationError:
    pass
res_u = sg.resolvent(unb, x, cov, cfg, lam, 8, streams, t_max=0.5)
assert not math.isfinite(res_u.tail_bound)
print("   unbounded-fn guards            OK")

# --- 7. control-variate identity: drift-free quadrature has the exact mean --
ftanh = cyl_function(
    (1, 4),
    (
        (1.0, ((0, tanh_factor([0.0, 1.5])),)),
        (0.6, ((0, tanh_factor([0.0, 0.7])), (1, tanh_factor([0.0, 1.1])))),
    ),
)
mu = 8.0
n_states, n_rep = 6, 4000
states = rng.normal(size=(n_states, basis.m)) * 0.3
rows = np.repeat(states, n_rep, axis=0)
per, tails, igrid = sg.resolvent_samples(
    ftanh, rows, cov, cfg, [mu], rows.shape[0], streams.child(4),
    basis=basis, t_max=0.6, n_nodes=13, use_drift=False,
)
cv = sg._ou_resolvent_quad(ftanh, states, basis, cov, mu, igrid)
block = per[:, 0].reshape(n_states, n_rep)
means = block.mean(axis=1)
ses = block.std(axis=1, ddof=1) / math.sqrt(n_rep)
z = np.abs(means - cv) / ses
assert np.all(z < 4.5), (z, means, cv)
print(f"7. CV mean matches closed form    OK  (max z = {z.max():.2f})")

# --- 8. chapman-kolmogorov at cutoff 1 -------------------------------------
t0 = time.time()
rep = sg.check_chapman_kolmogorov(
    ftanh, x, cov, cfg, 0.1, 0.1, streams.child(5),
    n_direct=8000, n_outer=600, n_inner=8,
)
el = time.time() - t0
assert abs(rep["delta"]) < 4 * rep["se"], rep
assert rep["verdict"] in ("pass", "inconclusive")
print(f"8. chapman-kolmogorov             OK  ({el:.1f}s, delta={rep['delta']:+.2e}, se={rep['se']:.2e}, {rep['verdict']})")

# --- 9. resolvent identity at cutoff 1, toy budget -------------------------
t0 = time.time()
rep = sg.check_resolvent_identity(
    ftanh, x, cov, cfg, 4.0, 16.0, streams.child(6),
    n_outer=300, n_inner=4, n_nodes=11, inner_nodes=9, tol=5e-3,
)
el = time.time() - t0
assert rep["parameters"]["control_variate"] is True
band = 3 * rep["se"] + rep["allowance"]
assert abs(rep["delta"]) < band + 2 * rep["se"], rep
print(f"9. resolvent identity             OK  ({el:.1f}s, delta={rep['delta']:+.2e}, band={band:.2e}, {rep['verdict']})")

# --- 10. P/S exchange at cutoff 1, toy budget ------------------------------
t0 = time.time()
rep = sg.check_ps_duhamel(
    ftanh, x, cov, cfg, 0.2, 1.0, streams.child(7),
    n_outer=400, n_inner=6, n_nodes=5,
)
el = time.time() - t0
band = 3 * rep["se"] + rep["allowance"]
assert abs(rep["delta"]) < band + 2 * rep["se"], rep
print(f"10. P/S exchange                  OK  ({el:.1f}s, delta={rep['delta']:+.2e}, band={band:.2e}, {rep['verdict']})")

# --- 11. mild formula at cutoff 1, toy budget ------------------------------
t0 = time.time()
rep = sg.check_mild_formula(
    ftanh, x, cov, cfg, 0.1, streams.child(8),
    n_direct=20000, n_ou=24, n_inner=8, n_nodes=3,
)
el = time.time() - t0
band = 3 * rep["se"] + rep["allowance"]
assert abs(rep["delta"]) < band + 2 * rep["se"], rep
assert rep["verdict"] in ("pass", "fail", "inconclusive")
print(f"11. mild formula                  OK  ({el:.1f}s, delta={rep['delta']:+.2e}, band={band:.2e}, {rep['verdict']})")

print("ALL PART-2 CHECKS PASSED")
