"""Command-line experiment runner.

Subcommands:

* ``run <config.json>``: execute one experiment and write its artifact
  set (resolved config, report, summary, plot CSVs, manifest) into the
  output directory.  Exit code: 0 all checks pass, 1 any fail, 2 nothing
  failed but something inconclusive, 64 bad config, 65 estimation failure.
* ``report <dir>``: verify the artifact sets under a directory, print and
  write the aggregate summary, and exit by the same verdict rule (66 when
  listed artifacts are missing).
* ``list-experiments``: enumerate experiment kinds and their variants.

Worker count resolution: ``--workers`` flag, then the ``SGNS_WORKERS``
environment variable, then the config's ``workers`` field.

Runs are hermetic: everything an experiment reads comes from its config
and seed root, and no artifact carries a timestamp, so a rerun with the
same config is byte-identical.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Callable

import numpy as np

from .basis import enumerate_basis, field_to_csv
from .config import (
    ConfigError,
    EXPERIMENT_KINDS,
    IDENTITY_KINDS,
    LEMMA_KINDS,
    build_basis,
    build_covariance,
    build_damping,
    build_function,
    build_integrator,
    build_state,
    build_streams,
    build_witness,
    canonical_json,
    load_config,
)
from .engine import (
    INTEGRAL_NAMES,
    SUP_NAMES,
    IntegratorConfig,
    SimulationError,
    run_ensemble,
)
from .lemmas import (
    validate_bilinear_estimates,
    validate_lemma_l1,
    validate_lemma_l2,
    validate_prop_p31,
)
from .martingale import (
    check_duhamel_identity,
    run_martingale_grid,
    uniqueness_crosscheck,
)
from .reports import (
    CONFIG_NAME,
    MANIFEST_NAME,
    REPORT_NAME,
    SUMMARY_NAME,
    TABLES_DIR,
    ReportError,
    collect_reports,
    csv_text,
    global_verdict,
    render_summary,
    report_tables,
    verdict_exit_code,
)
from .semigroups import (
    EstimationError,
    MCEstimate,
    check_chapman_kolmogorov,
    check_mild_formula,
    check_ps_duhamel,
    check_resolvent_identity,
    check_resolvent_suite,
    estimate_ou_semigroup,
    estimate_semigroup,
    ou_semigroup_exact,
    resolvent,
    three_se_verdict,
)

__all__ = ["main"]

EX_OK = 0
EX_FAIL = 1
EX_INCONCLUSIVE = 2
EX_CONFIG = 64
EX_ESTIMATION = 65
EX_NOINPUT = 66

WORKERS_ENV = "SGNS_WORKERS"

INITIAL_STATE_CSV = "initial_state.csv"


def _resolve_workers(cfg: dict, flag: int | None) -> int | None:
    if flag is not None:
        return flag
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            value = int(env)
            if value < 1:
                raise ValueError
        except ValueError:
            raise ConfigError(
                f"{WORKERS_ENV} must be a positive integer, got {env!r}"
            ) from None
        return value
    return cfg.get("workers")


def _est_dict(est: MCEstimate) -> dict:
    return {
        "mean": est.mean,
        "se": est.std_error,
        "n": est.n,
        "n_truncated": est.n_truncated,
    }


def _model_params(cfg: dict) -> dict:
    return {
        "dimension": cfg["dimension"],
        "cutoff": cfg["cutoff"],
        "dt": cfg["integrator"]["dt"],
        "scheme": cfg["integrator"]["scheme"],
        "seed_root": cfg["seed_root"],
    }


# ---------------------------------------------------------------------------
# Experiment handlers.  Each returns (reports, extra_files) where
# extra_files maps artifact names to file text.


def _run_simulate(cfg: dict, workers: int | None):
    p = cfg["params"]
    basis = build_basis(cfg)
    cov = build_covariance(cfg)
    icfg = build_integrator(cfg)
    damp = build_damping(cfg)
    x0 = build_state(p["initial_state"], basis)
    t_final = cfg["integrator"]["t_final"]
    extra = {INITIAL_STATE_CSV: field_to_csv(x0)}
    report = {
        "experiment": "simulate",
        "parameters": {**_model_params(cfg), "t_final": t_final,
                       "n_paths": p["n_paths"]},
        "moments": [],
    }
    if t_final == 0.0:
        return [report], extra
    res = run_ensemble(
        x0, cov, icfg, t_final, p["n_paths"], build_streams(cfg),
        record_times=p["record_times"] or None,
        record_coords=p["record_coords"],
        record_bilinear=p["record_bilinear"],
        damping=damp,
        hit_radii=tuple(p["hit_radii"]),
        freeze_radius=p["freeze_radius"],
        use_drift=p["use_drift"],
        workers=workers,
    )
    ok = res.trunc_steps < 0
    if not np.any(ok):
        raise EstimationError("every path left the float range")
    moments = []

    def add(name: str, values: np.ndarray) -> None:
        est = MCEstimate.from_samples(
            values[ok], n_truncated=int(np.sum(~ok))
        )
        moments.append({"name": name, "mean": est.mean, "se": est.std_error})

    for i, name in enumerate(("l2", "h1", "a2")):
        for j, t in enumerate(res.times):
            add(f"norm2:{name}@t={t:g}", res.norms[:, j, i])
    for i, name in enumerate(SUP_NAMES[:3]):
        add(f"sup2:{name}", res.sups[:, i])
    for name in INTEGRAL_NAMES:
        add(f"int:{name}@t={t_final:g}", res.integral(name)[:, -1])
    if damp is not None:
        add("weight", res.weights(damp)[:, -1])
    for r, radius in enumerate(res.hit_radii):
        hit = res.hit_steps[:, r] >= 0
        moments.append({
            "name": f"hit_fraction:r={radius:g}",
            "mean": float(np.mean(hit[ok])), "se": None,
        })
    report["moments"] = moments
    report["truncated_fraction"] = res.truncated_fraction
    if len(p["record_coords"]):
        rows = []
        for s, entry in enumerate(res.coord_entries):
            for j, t in enumerate(res.times):
                est = MCEstimate.from_samples(res.coords[ok, s, j])
                rows.append({
                    "time": float(t), "entry": int(entry),
                    "mean": est.mean, "se": est.std_error,
                })
        report["coords"] = rows
        n_traj = min(p["n_trajectories"], res.n_paths)
        if n_traj:
            traj = [
                {
                    "path": pi, "time": float(t), "entry": int(entry),
                    "value": float(res.coords[pi, s, j]),
                }
                for pi in range(n_traj)
                for s, entry in enumerate(res.coord_entries)
                for j, t in enumerate(res.times)
            ]
            extra[f"{TABLES_DIR}/simulate-trajectories.csv"] = csv_text(traj)
    return [report], extra


def _run_semigroup(cfg: dict, workers: int | None):
    p = cfg["params"]
    basis = build_basis(cfg)
    cov = build_covariance(cfg)
    icfg = build_integrator(cfg)
    damp = build_damping(cfg)
    streams = build_streams(cfg)
    fn = build_function(p["function"], basis)
    x = build_state(p["initial_state"], basis)
    target = p["target"]
    params = {**_model_params(cfg), "target": target,
              "n_paths": p["n_paths"]}
    if target == "ou":
        est = estimate_ou_semigroup(fn, x, cov, p["t"], p["n_paths"], streams)
        exact = float(
            ou_semigroup_exact(fn, x.coeffs[None, :], basis, cov, p["t"])[0]
        )
        delta = est.mean - exact
        verdict = three_se_verdict(
            delta, est.std_error, scale=max(abs(exact), abs(est.mean)),
        )
        report = {
            "experiment": "semigroup",
            "parameters": {**params, "t": p["t"]},
            "target": target,
            "estimate": _est_dict(est),
            "exact": exact,
            "verdict": verdict,
        }
    elif target == "transition":
        est = estimate_semigroup(
            fn, x, cov, icfg, p["t"], p["n_paths"], streams,
            damp=damp, stop_radius=p.get("stop_radius"), workers=workers,
        )
        report = {
            "experiment": "semigroup",
            "parameters": {**params, "t": p["t"],
                           "stop_radius": p.get("stop_radius"),
                           "damping": cfg["damping"]},
            "target": target,
            "estimate": _est_dict(est),
            "exact": None,
            "verdict": "reported",
        }
    else:
        rr = resolvent(
            fn, x, cov, icfg, p["lam"], p["n_paths"], streams,
            damp=damp, t_max=p.get("t_max"), n_nodes=p.get("n_nodes", 33),
            tol=p.get("tol", 1e-3), workers=workers,
        )
        report = {
            "experiment": "semigroup",
            "parameters": {
                **params, "lam": p["lam"], "t_max": rr.t_max,
                "tail_bound": rr.tail_bound, "damping": cfg["damping"],
            },
            "target": target,
            "estimate": _est_dict(rr.estimate),
            "exact": None,
            "verdict": "reported",
        }
    return [report], {}


def _run_identity(cfg: dict, workers: int | None):
    p = cfg["params"]
    basis = build_basis(cfg)
    cov = build_covariance(cfg)
    icfg = build_integrator(cfg)
    damp = build_damping(cfg)
    streams = build_streams(cfg)
    fn = build_function(p["function"], basis)
    identity = p["identity"]
    if identity == "resolvent-suite":
        xs = [build_state(s, basis) for s in p["initial_states"]]
        rep = check_resolvent_suite(
            fn, xs, cov, icfg, streams, lams=p["lams"],
            n_paths=p["n_paths"], const_tol=p["const_tol"],
            t_max=p["t_max"], n_nodes=p["n_nodes"], tol=p["tol"],
            workers=workers,
        )
        return [rep], {}
    x = build_state(p["initial_state"], basis)
    if identity == "duhamel":
        rep = check_duhamel_identity(
            fn, x, cov, icfg, p["t1"], p["t2"], streams, damp=damp,
            n_paths=p["n_paths"], n_nodes=p["n_nodes"], workers=workers,
        )
    elif identity == "resolvent-identity":
        rep = check_resolvent_identity(
            fn, x, cov, icfg, p["lam"], p["mu"], streams,
            n_outer=p["n_outer"], n_inner=p["n_inner"], t_max=p["t_max"],
            n_nodes=p["n_nodes"], inner_nodes=p["inner_nodes"],
            tol=p["tol"], workers=workers,
        )
    elif identity == "chapman-kolmogorov":
        rep = check_chapman_kolmogorov(
            fn, x, cov, icfg, p["t"], p["s"], streams,
            n_direct=p["n_direct"], n_outer=p["n_outer"],
            n_inner=p["n_inner"], workers=workers,
        )
    elif identity == "ps-duhamel":
        rep = check_ps_duhamel(
            fn, x, cov, icfg, p["t"], p["K"], streams,
            n_outer=p["n_outer"], n_inner=p["n_inner"],
            n_nodes=p["n_nodes"], budget_steps=p["budget_steps"],
            workers=workers,
        )
    else:
        rep = check_mild_formula(
            fn, x, cov, icfg, p["t"], streams, n_direct=p["n_direct"],
            n_ou=p["n_ou"], n_inner=p["n_inner"], n_nodes=p["n_nodes"],
            fd_h=p["fd_h"], workers=workers,
        )
    return [rep], {}


def _run_martingale(cfg: dict, workers: int | None):
    p = cfg["params"]
    basis = build_basis(cfg)
    cov = build_covariance(cfg)
    icfg = build_integrator(cfg)
    damp = build_damping(cfg)
    fn = build_function(p["function"], basis)
    x = build_state(p["initial_state"], basis)
    witnesses = (
        None if p["witnesses"] is None
        else [build_witness(w, basis) for w in p["witnesses"]]
    )
    rep = run_martingale_grid(
        fn, x, cov, icfg, p["n_paths"], build_streams(cfg),
        [tuple(pair) for pair in p["pairs"]], witnesses,
        damp=damp, freeze_radius=p["freeze_radius"],
        z_threshold=p["z_threshold"], workers=workers,
    )
    return [rep.to_dict()], {}


def _run_lemma(cfg: dict, workers: int | None):
    p = cfg["params"]
    cov = build_covariance(cfg)
    icfg = build_integrator(cfg)
    streams = build_streams(cfg)
    which = p["which"]
    reports = []
    if which == "bilinear":
        reports.append(validate_bilinear_estimates(
            d=cfg["dimension"], cutoffs=tuple(p["cutoffs"]),
            decays=tuple(p["decays"]), n_fields=p["n_fields"],
            seed=p["seed"], stability_factor=p["stability_factor"],
        ))
    elif which == "l1":
        reports.append(validate_lemma_l1(
            cov, icfg, streams, basis=build_basis(cfg),
            ladder=tuple(p["ladder"]), t_final=p["t_final"],
            n_paths=p["n_paths"], decay=p["decay"], seed=p["seed"],
            use_drift=p["use_drift"], workers=workers,
        ))
    elif which == "l2":
        c_tilde = p["c_tilde"]
        if c_tilde == "auto":
            bil = validate_bilinear_estimates(d=cfg["dimension"])
            reports.append(bil)
            c_tilde = bil["c_tilde"]
        reports.append(validate_lemma_l2(
            cov, icfg, streams, basis=build_basis(cfg), c_tilde=c_tilde,
            ladder=tuple(p["ladder"]), powers=tuple(p["powers"]),
            t_final=p["t_final"], n_paths=p["n_paths"], decay=p["decay"],
            seed=p["seed"], use_drift=p["use_drift"], workers=workers,
        ))
    else:
        x = build_state(p["initial_state"], build_basis(cfg))
        reports.append(validate_prop_p31(
            x, cov, icfg, streams, cutoffs=tuple(p["cutoffs"]),
            eps=p["eps"], k=p["k"], t_final=p["t_final"],
            n_paths=p["n_paths"], use_drift=p["use_drift"],
            workers=workers,
        ))
    return reports, {}


def _run_uniqueness(cfg: dict, workers: int | None):
    p = cfg["params"]
    basis = build_basis(cfg)
    cov = build_covariance(cfg)
    cfg_a = build_integrator(cfg)
    i = cfg["integrator"]
    cfg_b = IntegratorConfig(
        dt=p["dt_b"], scheme=p["scheme_b"],
        route=i.get("route", "auto"), block_paths=i.get("block_paths"),
    )
    basis_b = (
        None if p["cutoff_b"] == cfg["cutoff"]
        else enumerate_basis(cfg["dimension"], p["cutoff_b"])
    )
    fns = [build_function(f, basis) for f in p["functions"]]
    x = build_state(p["initial_state"], basis)
    rep = uniqueness_crosscheck(
        fns, x, cov, p["t_grid"], p["lam_grid"], build_streams(cfg),
        cfg_a=cfg_a, cfg_b=cfg_b, basis_b=basis_b, n_paths=p["n_paths"],
        pilot_frac=p["pilot_frac"], lap_tol=p["lap_tol"], workers=workers,
    )
    return [rep], {}


_HANDLERS: dict[str, Callable] = {
    "simulate": _run_simulate,
    "semigroup": _run_semigroup,
    "identity-check": _run_identity,
    "martingale-test": _run_martingale,
    "lemma-validate": _run_lemma,
    "uniqueness-crosscheck": _run_uniqueness,
}


# ---------------------------------------------------------------------------
# Artifact writing


def _write_run(
    outdir: Path, cfg: dict, reports: list[dict], extra: dict[str, str]
) -> str:
    outdir.mkdir(parents=True, exist_ok=True)
    artifacts: list[str] = []

    def write(name: str, text: str) -> None:
        path = outdir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        artifacts.append(name)

    write(CONFIG_NAME, canonical_json(cfg))
    write(REPORT_NAME, canonical_json({"reports": reports}))
    for name, text in extra.items():
        write(name, text)
    for rep in reports:
        for stem, rows in report_tables(rep).items():
            if rows:
                write(f"{TABLES_DIR}/{stem}.csv", csv_text(rows))
    write(SUMMARY_NAME, render_summary(reports))
    verdict = global_verdict(reports)
    manifest = {
        "experiment": cfg["experiment"],
        "verdict": verdict,
        "artifacts": sorted(artifacts),
    }
    (outdir / MANIFEST_NAME).write_text(canonical_json(manifest))
    return verdict


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg = load_config(args.config)
        workers = _resolve_workers(cfg, args.workers)
        outdir = args.out or cfg.get("output_dir")
        if outdir is None:
            raise ConfigError(
                "no output directory: set output_dir or pass --out"
            )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EX_CONFIG
    try:
        reports, extra = _HANDLERS[cfg["experiment"]](cfg, workers)
    except (EstimationError, SimulationError) as exc:
        print(f"estimation error: {exc}", file=sys.stderr)
        return EX_ESTIMATION
    verdict = _write_run(Path(outdir), cfg, reports, extra)
    print(f"{cfg['experiment']}: verdict {verdict} -> {outdir}")
    return verdict_exit_code(verdict)


def _cmd_report(args: argparse.Namespace) -> int:
    try:
        pairs = collect_reports(args.dir)
    except ReportError as exc:
        print(f"report error: {exc}", file=sys.stderr)
        return EX_NOINPUT
    reports = [rep for _, rep in pairs]
    summary = render_summary(reports)
    print(summary, end="")
    (Path(args.dir) / SUMMARY_NAME).write_text(summary)
    return verdict_exit_code(global_verdict(reports))


def _cmd_list(_: argparse.Namespace) -> int:
    print("experiments:")
    for name in EXPERIMENT_KINDS:
        print(f"  {name}")
    print("identity-check variants:")
    for name in IDENTITY_KINDS:
        print(f"  {name}")
    print("lemma-validate variants:")
    for name in LEMMA_KINDS:
        print(f"  {name}")
    return EX_OK


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="sgns",
        description=(
            "Spectral Galerkin stochastic Navier-Stokes simulator and "
            "Monte Carlo verification harness"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one experiment config")
    p_run.add_argument("config", help="path to a JSON experiment config")
    p_run.add_argument(
        "-o", "--out", default=None,
        help="output directory (overrides the config's output_dir)",
    )
    p_run.add_argument(
        "-w", "--workers", type=int, default=None,
        help=f"worker processes (overrides {WORKERS_ENV} and the config)",
    )
    p_run.set_defaults(func=_cmd_run)

    p_rep = sub.add_parser(
        "report", help="aggregate artifact sets under a directory"
    )
    p_rep.add_argument("dir", help="directory containing run outputs")
    p_rep.set_defaults(func=_cmd_report)

    p_list = sub.add_parser(
        "list-experiments", help="list experiment kinds and variants"
    )
    p_list.set_defaults(func=_cmd_list)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
