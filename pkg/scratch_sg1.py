"""Smoke checks for semigroups.py part 1: estimates, exact OU machinery."""
import math
import numpy as np

from sgns.basis import CovarianceSpec, SpectralField, enumerate_basis
from sgns.cylinder import cos_factor, cyl_function, poly_factor, tanh_factor
from sgns.engine import IntegratorConfig, NoiseStreams
from sgns import semigroups as sg

rng = np.random.default_rng(0)

# --- 1. MCEstimate merge / pooling law -------------------------------------
v = rng.normal(size=1001) * 3.0 + 1.7
a = sg.MCEstimate.from_samples(v[:400], n_truncated=3)
b = sg.MCEstimate.from_samples(v[400:], n_truncated=2)
c = a.merge(b)
d = sg.MCEstimate.from_samples(v, n_truncated=5)
assert abs(c.mean - d.mean) < 1e-12, (c.mean, d.mean)
assert abs(c.m2 - d.m2) < 1e-9 * d.m2
assert c.n == d.n == 1001 and c.n_truncated == 5
assert abs(c.variance - np.var(v, ddof=1)) < 1e-9
assert abs(c.std_error - np.std(v, ddof=1) / math.sqrt(1001)) < 1e-12
s = a.scaled(-2.0)
assert abs(s.mean + 2 * a.mean) < 1e-12 and abs(s.variance - 4 * a.variance) < 1e-9
assert abs(sg.pooled_se(a, b) - math.sqrt(a.std_error**2 + b.std_error**2)) < 1e-15
assert abs(d.truncated_fraction - 5 / 1006) < 1e-15
try:
    sg.MCEstimate.from_samples(np.empty(0))
    raise AssertionError("empty samples accepted")
except sg.EstimationError:
    pass
print("1. MCEstimate merge law           OK")

# --- 2. ou_expectation vs closed-form Gaussian moments ---------------------
mu0, s20 = 0.7, 0.31
mu1, s21 = -0.4, 0.09
means = np.array([[mu0, mu1], [0.1, 0.2], [-1.0, 0.5]])
variances = np.array([[s20, s21]] * 3)

fn2 = cyl_function((0, 3), (((1.0, ((0, poly_factor([0.0, 0.0, 1.0])),)),)))
got = sg.ou_expectation(fn2, means, variances)
want = means[:, 0] ** 2 + variances[:, 0]
assert np.allclose(got, want, rtol=1e-12), (got, want)

fn3 = cyl_function((0, 3), (((1.0, ((0, poly_factor([0.0, 0.0, 0.0, 1.0])),)),)))
got = sg.ou_expectation(fn3, means, variances)
want = means[:, 0] ** 3 + 3 * means[:, 0] * variances[:, 0]
assert np.allclose(got, want, rtol=1e-12)

fn4 = cyl_function((0, 3), (((1.0, ((0, poly_factor([0.0, 0.0, 0.0, 0.0, 1.0])),)),)))
got = sg.ou_expectation(fn4, means, variances)
want = means[:, 0] ** 4 + 6 * means[:, 0] ** 2 * variances[:, 0] + 3 * variances[:, 0] ** 2
assert np.allclose(got, want, rtol=1e-12)

om, th = 1.3, 0.4
fnc = cyl_function((0, 3), (((1.0, ((1, cos_factor(om, th)),)),)))
got = sg.ou_expectation(fnc, means, variances)
want = np.cos(om * means[:, 1] + th) * np.exp(-om**2 * variances[:, 1] / 2)
assert np.allclose(got, want, rtol=1e-10), (got, want)

# product term + two terms with weights
fnp = cyl_function(
    (0, 3),
    (
        (2.0, ((0, poly_factor([0.0, 0.0, 1.0])), (1, poly_factor([0.0, 0.0, 1.0])))),
        (-0.5, ((1, cos_factor(om, th)),)),
    ),
)
got = sg.ou_expectation(fnp, means, variances)
want = 2.0 * (means[:, 0] ** 2 + variances[:, 0]) * (means[:, 1] ** 2 + variances[:, 1]) \
    - 0.5 * np.cos(om * means[:, 1] + th) * np.exp(-om**2 * variances[:, 1] / 2)
assert np.allclose(got, want, rtol=1e-10)
print("2. ou_expectation moments         OK")

# --- 3. ou_semigroup_exact closed forms ------------------------------------
basis = enumerate_basis(2, 2)
cov = CovarianceSpec(alpha=2.5)
x = SpectralField(basis, 0.3 * np.cos(np.arange(basis.m) * 0.7))
e = 5
lam_e = basis.eigs[e]
q_e = cov.q_entries(basis)[e]
t = 0.37

flin = cyl_function((e,), (((1.0, ((0, poly_factor([0.0, 1.0])),)),)))
got = float(sg.ou_semigroup_exact(flin, x, basis, cov, t))
want = x.coeffs[e] * math.exp(-lam_e * t)
assert abs(got - want) < 1e-12, (got, want)

fsq = cyl_function((e,), (((1.0, ((0, poly_factor([0.0, 0.0, 1.0])),)),)))
got = float(sg.ou_semigroup_exact(fsq, x, basis, cov, t))
want = x.coeffs[e] ** 2 * math.exp(-2 * lam_e * t) + q_e * (1 - math.exp(-2 * lam_e * t)) / (2 * lam_e)
assert abs(got - want) < 1e-12, (got, want)

got_inf = float(sg.ou_semigroup_exact(fsq, x, basis, cov, math.inf))
assert abs(got_inf - q_e / (2 * lam_e)) < 1e-14
got_lin_inf = float(sg.ou_semigroup_exact(flin, x, basis, cov, math.inf))
assert abs(got_lin_inf) < 1e-14

# array-of-states form
states = rng.normal(size=(7, basis.m)) * 0.2
got = sg.ou_semigroup_exact(fsq, states, basis, cov, t)
want = states[:, e] ** 2 * math.exp(-2 * lam_e * t) + q_e * (1 - math.exp(-2 * lam_e * t)) / (2 * lam_e)
assert np.allclose(got, want, rtol=1e-12)
print("3. ou_semigroup_exact closed form OK")

# --- 4. estimate_ou_semigroup vs exact (statistical) -----------------------
ftanh = cyl_function(
    (2, 5),
    (
        (1.0, ((0, tanh_factor([0.0, 1.2])),)),
        (0.7, ((0, tanh_factor([0.0, 0.8])), (1, tanh_factor([0.1, 1.0])))),
    ),
)
streams = NoiseStreams(20260823)
est = sg.estimate_ou_semigroup(ftanh, x, cov, t, 40000, streams)
exact = float(sg.ou_semigroup_exact(ftanh, x, basis, cov, t))
assert abs(est.mean - exact) < 4 * est.std_error, (est.mean, exact, est.std_error)
est0 = sg.estimate_ou_semigroup(ftanh, x, cov, 0.0, 100, streams)
assert est0.mean == float(ftanh.value_at(x)) and est0.std_error == 0.0
print(f"4. estimate_ou_semigroup          OK  (delta={est.mean-exact:+.2e}, se={est.std_error:.2e})")

# --- 5. drift-free estimate_semigroup (expE) is unbiased for R_t -----------
cfg = IntegratorConfig(dt=0.01)
est = sg.estimate_semigroup(ftanh, x, cov, cfg, 0.2, 40000, streams.child(3), use_drift=False)
exact = float(sg.ou_semigroup_exact(ftanh, x, basis, cov, 0.2))
assert abs(est.mean - exact) < 4 * est.std_error, (est.mean, exact, est.std_error)
# t = 0 short-circuit
est0 = sg.estimate_semigroup(ftanh, x, cov, cfg, 0.0, 123, streams)
assert est0.mean == float(ftanh.value_at(x)) and est0.n == 123
print(f"5. drift-free expE == R_t         OK  (delta={est.mean-exact:+.2e}, se={est.std_error:.2e})")

print("ALL PART-1 CHECKS PASSED")
