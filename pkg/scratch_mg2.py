"""Smoke checks for martingale.py part 2: grid test, duhamel, crosscheck."""
import math
import time
import numpy as np

from sgns.basis import CovarianceSpec, SpectralField, enumerate_basis
from sgns.cylinder import cyl_function, tanh_factor
from sgns.engine import DampingSpec, IntegratorConfig, NoiseStreams, run_ensemble
from sgns import martingale as mg
from sgns.semigroups import EstimationError

basis = enumerate_basis(2, 2)
cov = CovarianceSpec(alpha=2.5)
cfg = IntegratorConfig(dt=0.005)
x = SpectralField(basis, 0.35 * np.cos(np.arange(basis.m) * 0.9))
streams = NoiseStreams(424242)

fn = cyl_function(
    (1, 4),
    (
        (1.0, ((0, tanh_factor([0.0, 1.3])),)),
        (0.5, ((0, tanh_factor([0.0, 0.6])), (1, tanh_factor([0.0, 1.0])))),
    ),
)
pairs = [(0.1, 0.2), (0.1, 0.4), (0.2, 0.4)]

# --- 1. materialized-ensemble grid test ------------------------------------
wits = mg.default_witnesses(basis)
assert len(wits) == 6
entries = sorted({*fn.entries, *(e for w in wits for e in w.entries)})
steps = round(0.4 / cfg.dt)
rec_times = [s * cfg.dt for s in range(steps + 1)]
t0 = time.time()
res = run_ensemble(
    x, cov, cfg, 0.4, 3000, streams,
    record_times=rec_times, record_coords=entries, record_bilinear=True,
)
rep = mg.test_martingale_property(fn, res, pairs, cov=cov)
el = time.time() - t0
assert len(rep.cells) == 18
assert rep.n_paths == 3000
zmax = max(abs(c["z"]) for c in rep.cells)
assert rep.verdict in ("pass", "inconclusive"), rep.cells
print(f"1. grid test (materialized)       OK  ({el:.1f}s, max|z|={zmax:.2f}, verdict={rep.verdict}, fwer={rep.fwer_bound:.3f})")

# reversed pair rejected
try:
    mg.test_martingale_property(fn, res, [(0.2, 0.1)], cov=cov)
    raise AssertionError("reversed pair accepted")
except EstimationError:
    pass
try:
    mg.test_martingale_property(fn, res, [(0.1, 0.1)], cov=cov)
    raise AssertionError("degenerate pair accepted")
except EstimationError:
    pass
print("   reversed/degenerate pairs      rejected")

# --- 2. streaming driver matches the materialized path ---------------------
rep2 = mg.run_martingale_grid(fn, x, cov, cfg, 3000, streams, pairs)
for c1, c2 in zip(rep.cells, rep2.cells):
    assert c1["witness"] == c2["witness"] and c1["pair"] == c2["pair"]
    assert abs(c1["stat"] - c2["stat"]) < 1e-12, (c1, c2)
    assert abs(c1["se"] - c2["se"]) < 1e-12
assert rep2.verdict == rep.verdict
print("2. streaming driver == stacked    OK")

# --- 3. damped grid (quartic-enstrophy) and stopped grid -------------------
repd = mg.run_martingale_grid(
    fn, x, cov, cfg, 2000, streams.child(9), pairs,
    damp=DampingSpec("quartic-enstrophy", 0.1),
)
zm = max(abs(c["z"]) for c in repd.cells)
assert repd.verdict in ("pass", "inconclusive"), zm
reps = mg.run_martingale_grid(
    fn, x, cov, cfg, 2000, streams.child(10), pairs,
    freeze_radius=6.0,
)
zs = max(abs(c["z"]) for c in reps.cells)
assert reps.verdict in ("pass", "inconclusive"), zs
print(f"3. damped/stopped grids           OK  (max|z| {zm:.2f} / {zs:.2f})")

# --- 4. duhamel identity ---------------------------------------------------
rep = mg.check_duhamel_identity(fn, x, cov, cfg, 0.1, 0.1, streams)
assert rep["verdict"] == "pass" and rep["delta"] == 0.0
t0 = time.time()
rep = mg.check_duhamel_identity(
    fn, x, cov, cfg, 0.1, 0.3, streams.child(11), n_paths=4000, n_nodes=9,
)
el = time.time() - t0
band = 3 * rep["se"] + rep["allowance"]
assert abs(rep["delta"]) <= band + 2 * rep["se"], rep
print(f"4. duhamel undamped               OK  ({el:.1f}s, delta={rep['delta']:+.2e}, band={band:.2e}, {rep['verdict']})")

# sigma=0 deterministic: FTC along the flow, defect first-order in dt
cov0 = CovarianceSpec(alpha=2.5, sigma=0.0)
rep0 = mg.check_duhamel_identity(fn, x, cov0, cfg, 0.1, 0.3, streams, n_paths=2)
assert rep0["se"] == 0.0
assert abs(rep0["delta"]) < 1e-3, rep0
rep0b = mg.check_duhamel_identity(
    fn, x, cov0, IntegratorConfig(dt=0.00125), 0.1, 0.3, streams, n_paths=2,
    n_nodes=33,
)
assert abs(rep0b["delta"]) < abs(rep0["delta"]) / 2.5, (rep0["delta"], rep0b["delta"])
print(f"   sigma=0 deterministic          OK  (delta {rep0['delta']:+.2e} -> {rep0b['delta']:+.2e} at dt/4)")

# damped variants
repk = mg.check_duhamel_identity(
    fn, x, cov, cfg, 0.1, 0.3, streams.child(12), n_paths=4000,
    damp=DampingSpec("quadratic-enstrophy", 1.0),
)
bandk = 3 * repk["se"] + repk["allowance"]
assert abs(repk["delta"]) <= bandk + 2 * repk["se"], repk
repe = mg.check_duhamel_identity(
    fn, x, cov, cfg, 0.1, 0.3, streams.child(13), n_paths=4000,
    damp=DampingSpec("sixth-h1", 0.1),
)
bande = 3 * repe["se"] + repe["allowance"]
assert abs(repe["delta"]) <= bande + 2 * repe["se"], repe
print(f"   K/eps damped                   OK  (K: {repk['verdict']}, eps: {repe['verdict']})")

# --- 5. uniqueness crosscheck ----------------------------------------------
fns = [fn,
       cyl_function((0,), (((1.0, ((0, tanh_factor([0.0, 0.8])),)),))),
       ]
# identical configs + same streams -> exact agreement
t0 = time.time()
rep = mg.uniqueness_crosscheck(
    fns, x, cov, [0.1, 0.2], [4.0, 8.0], streams,
    cfg_a=cfg, cfg_b=cfg, n_paths=400,
    streams_a=streams.child(14), streams_b=streams.child(14),
)
el = time.time() - t0
for row in rep["rows"]:
    assert row["lhs"] == row["rhs"], row
assert rep["verdict"] != "fail"
print(f"5. identical-config crosscheck    OK  ({el:.1f}s, exact agreement, verdict={rep['verdict']})")

# scheme cross: expE dt=5e-3 vs EM dt=2.5e-3
t0 = time.time()
rep = mg.uniqueness_crosscheck(
    fns, x, cov, [0.1, 0.2], [4.0, 8.0], streams.child(15),
    cfg_a=IntegratorConfig(dt=5e-3),
    cfg_b=IntegratorConfig(dt=2.5e-3, scheme="euler-maruyama"),
    n_paths=2000,
)
el = time.time() - t0
assert rep["verdict"] != "fail", [r for r in rep["rows"] if r["verdict"] == "fail"]
print(f"6. scheme crosscheck              OK  ({el:.1f}s, verdict={rep['verdict']})")

# cutoff cross: 2 vs 4 with x in P_2 H
t0 = time.time()
rep = mg.uniqueness_crosscheck(
    fns, x, cov, [0.1, 0.2], [4.0, 8.0], streams.child(15).child(1),
    cfg_a=cfg, cfg_b=cfg, basis_b=enumerate_basis(2, 4), n_paths=2000,
)
el = time.time() - t0
assert rep["verdict"] != "fail", [r for r in rep["rows"] if r["verdict"] == "fail"]
assert rep["parameters"]["cutoff_b"] == 4
print(f"7. cutoff crosscheck              OK  ({el:.1f}s, verdict={rep['verdict']})")

# dropping nonzero modes is refused
xfine = SpectralField(enumerate_basis(2, 4), 0.1 * np.ones(enumerate_basis(2, 4).m))
try:
    mg.uniqueness_crosscheck(
        fns, xfine, cov, [0.1], [4.0], streams,
        cfg_a=cfg, cfg_b=cfg, basis_b=basis, n_paths=64,
    )
    raise AssertionError("lossy restriction accepted")
except EstimationError:
    pass
print("   lossy restriction              rejected")

print("ALL MARTINGALE PART-2 CHECKS PASSED")
