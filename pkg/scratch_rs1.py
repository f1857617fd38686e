import time

import numpy as np

from sgns.basis import CovarianceSpec, enumerate_basis, random_field
from sgns.cylinder import cyl_function, tanh_factor
from sgns.engine import IntegratorConfig, NoiseStreams
from sgns.semigroups import EstimationError, check_resolvent_suite

t0 = time.time()
basis = enumerate_basis(2, 2)
cov = CovarianceSpec(alpha=2.5)
cfg = IntegratorConfig(dt=0.01)
rng = np.random.default_rng(5)
xs = [
    random_field(basis, rng, decay=1.0, norm=0.6),
    random_field(basis, rng, decay=1.0, norm=1.2),
]
fn = cyl_function([0, 2], [(1.0, {0: tanh_factor([0.0, 1.0]), 1: tanh_factor([0.1, 0.7])})])
rep = check_resolvent_suite(
    fn, xs, cov, cfg, NoiseStreams(20250823), n_paths=1500, workers=4
)
print("verdict:", rep["verdict"])
print("const:", [(r["lam"], round(r["rel_err"], 5), r["verdict"]) for r in rep["const"]["rows"]])
for r in rep["contraction"]["rows"]:
    print("contr:", r["state"], r["lam"], round(r["value"], 4), "<=", round(r["bound"], 4), r["verdict"])
for p in rep["approach"]["pairs"]:
    print("appr:", p["state"], (p["lam_lo"], p["lam_hi"]), "rise", round(p["rise"], 4), "band", round(p["band"], 4), p["verdict"])
errs = {}
for r in rep["approach"]["rows"]:
    errs.setdefault(r["state"], []).append(round(r["err"], 4))
print("errs:", errs)
assert rep["experiment"] == "resolvent-suite"
assert rep["verdict"] == "pass", rep["verdict"]
assert all(r["rel_err"] <= 0.01 for r in rep["const"]["rows"])

# guards
try:
    check_resolvent_suite(fn, [], cov, cfg, NoiseStreams(1))
    raise SystemExit("no empty-state guard")
except EstimationError:
    pass
try:
    check_resolvent_suite(fn, xs, cov, cfg, NoiseStreams(1), lams=(2.0,))
    raise SystemExit("no short-lams guard")
except EstimationError:
    pass
unbounded = cyl_function([0], [(1.0, {0: __import__("sgns.cylinder", fromlist=["poly_factor"]).poly_factor([0.0, 1.0])})])
try:
    check_resolvent_suite(unbounded, xs, cov, cfg, NoiseStreams(1))
    raise SystemExit("no unbounded guard")
except EstimationError:
    pass
print(f"RESOLVENT SUITE OK ({time.time()-t0:.1f}s)")
