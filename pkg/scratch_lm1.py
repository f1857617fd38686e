"""Smoke checks for lemmas.py: bilinear constants, ladder validators, guards."""
import time

import numpy as np

from sgns.basis import CovarianceSpec, enumerate_basis, mode_field, random_field, sobolev_norm
from sgns.bilinear import bilinear_b
from sgns.engine import IntegratorConfig, NoiseStreams
from sgns.lemmas import (
    validate_bilinear_estimates,
    validate_lemma_l1,
    validate_lemma_l2,
    validate_prop_p31,
)
from sgns.semigroups import EstimationError

t0 = time.time()

# --- 1. bilinear constants -------------------------------------------------
rep = validate_bilinear_estimates(cutoffs=(4, 8), decays=(0.5, 1.5), n_fields=40, seed=3)
print("bilinear:", {k: rep[k] for k in ("c_tilde_1", "c_tilde", "stability_ratio",
                                        "cancellation_residual", "verdict")})
print("  c1_by_cutoff:", rep["c1_by_cutoff"], " family_max:", rep["family_max"])
assert np.isfinite(rep["c_tilde_1"]) and rep["c_tilde_1"] > 0
assert rep["young_max_relative_gap"] <= 1e-12
assert rep["cancellation_residual"] < 1e-10 * rep["c_tilde_1"]
assert rep["verdict"] == "pass", rep
c_tilde = rep["c_tilde"]

# single shear mode: flux vanishes identically
basis8 = enumerate_basis(2, 8)
for k, pol in (((1, 0), 0), ((2, 3), 0), ((-3, 1), 0)):
    x = mode_field(basis8, k, 1.7, pol)
    bx = bilinear_b(x)
    val = abs(float(np.dot(bx.coeffs, -basis8.eigs * x.coeffs)))
    assert val < 1e-14, (k, val)
print("single-mode flux vanishes OK")

# --- 2. lemma l1 toy ladder ------------------------------------------------
basis4 = enumerate_basis(2, 4)
cov = CovarianceSpec(alpha=2.5)
cfg = IntegratorConfig(dt=0.001, scheme="exponential-euler")
streams = NoiseStreams(2024)
rep1 = validate_lemma_l1(cov, cfg, streams, basis=basis4, ladder=(1, 2, 4, 8),
                         t_final=1.0, n_paths=400, seed=1)
print("l1:", rep1["verdict"],
      "quad ratios", np.round(rep1["bounds"]["quadratic"]["ratios"], 3),
      "quart ratios", np.round(rep1["bounds"]["quartic"]["ratios"], 3))
assert rep1["verdict"] != "fail", rep1["bounds"]

# sigma=0, b off: sup|X|^2 = |x|^2 and the integral has a closed form
cov0 = CovarianceSpec(alpha=2.5, sigma=0.0)
rep0 = validate_lemma_l1(cov0, cfg, streams, basis=basis4, ladder=(1, 2, 4, 8),
                         t_final=0.5, n_paths=8, seed=1, use_drift=False)
rng = np.random.default_rng(1)
shape = random_field(basis4, rng, decay=1.5)
lam = basis4.eigs
for row, v in zip(rep0["rows"], (1, 2, 4, 8)):
    assert row["se_quadratic"] == 0.0
    c = shape.coeffs * (v / sobolev_norm(shape, 0.0))
    int_h1 = float(np.sum(lam * c**2 * (1 - np.exp(-2 * lam * 0.5)) / (2 * lam)))
    expect = v**2 + int_h1  # sup|X|^2 is exactly |x|^2 under pure decay
    rel = abs(row["lhs_quadratic"] - expect) / expect
    assert rel < 2e-4, (v, row["lhs_quadratic"], expect, rel)
    sup_part = row["lhs_quadratic"] - int_h1
    assert sup_part / (1 + v**2) <= 1.0 + 1e-3
print("l1 sigma=0 closed-form OK; deterministic verdict:", rep0["verdict"])

# --- 3. lemma l2 toy ladder ------------------------------------------------
rep2 = validate_lemma_l2(cov, cfg, streams, basis=basis4, c_tilde=c_tilde,
                         ladder=(1, 2, 4, 8), t_final=0.5, n_paths=400, seed=2)
print("l2:", rep2["verdict"], {n: np.round(b["ratios"], 3).tolist() for n, b in rep2["bounds"].items()})
assert rep2["verdict"] != "fail", rep2["bounds"]

# --- 4. p31 toy cutoff ladder ----------------------------------------------
x0 = random_field(enumerate_basis(2, 8), np.random.default_rng(7), decay=1.0, norm=2.0, norm_order=1.0)
cfg_p = IntegratorConfig(dt=0.002, scheme="exponential-euler")
rep3 = validate_prop_p31(x0, cov, cfg_p, streams, cutoffs=(8, 16, 32), eps=0.1, k=4,
                         t_final=0.25, n_paths=400)
print("p31:", rep3["verdict"], "ratios", np.round(rep3["bound"]["ratios"], 4),
      "ses", np.round(rep3["bound"]["ratio_ses"], 4))
assert rep3["verdict"] != "fail", rep3

# --- 5. guards -------------------------------------------------------------
basis3d = enumerate_basis(3, 1)
for fn, kwargs in (
    (validate_lemma_l1, dict(basis=basis3d)),
    (validate_lemma_l2, dict(basis=basis3d, c_tilde=1.0)),
    (validate_lemma_l2, dict(basis=basis4, c_tilde=0.0)),
    (validate_lemma_l2, dict(basis=basis4, c_tilde=1.0, powers=(2, 3))),
):
    try:
        fn(cov, cfg, streams, n_paths=4, **kwargs)
        raise SystemExit(f"guard missed: {fn.__name__} {kwargs}")
    except EstimationError as e:
        print("guard OK:", fn.__name__, "->", e)
try:
    validate_prop_p31(x0, cov, cfg, streams, cutoffs=(1, 2, 4), n_paths=4)
    raise SystemExit("guard missed: coarse rung below field cutoff")
except EstimationError as e:
    print("guard OK: p31 ->", e)
try:
    validate_prop_p31(x0, cov, cfg, streams, cutoffs=(8, 16), n_paths=4)
    raise SystemExit("guard missed: two-rung ladder")
except EstimationError as e:
    print("guard OK: p31 ->", e)
try:
    validate_bilinear_estimates(d=3)
    raise SystemExit("guard missed: 3-d bilinear")
except EstimationError as e:
    print("guard OK: bilinear ->", e)

print(f"ALL LEMMA CHECKS PASSED ({time.time()-t0:.1f}s)")
