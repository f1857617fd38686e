"""Report assembly: uniform tables, plot-ready CSVs, and the CI verdict.

Every check in this package returns a plain dict tagged with an
``"experiment"`` label.  This module flattens those dicts into one table
per report with the columns (check, lhs, rhs, se, verdict), renders a
human-readable summary, and derives the aggregate verdict that the CLI
turns into an exit code: 0 when everything passes, 1 when anything fails,
2 when nothing fails but something is inconclusive.  Reports that carry no
claim (bare estimates, verdict ``"reported"``) do not move the aggregate.

Nothing here timestamps anything; summaries and CSVs are deterministic
functions of the report dicts, so reruns with the same seed root produce
byte-identical artifacts.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Callable, Sequence

__all__ = [
    "CONFIG_NAME",
    "MANIFEST_NAME",
    "REPORT_NAME",
    "SUMMARY_NAME",
    "TABLES_DIR",
    "ReportError",
    "collect_reports",
    "csv_text",
    "extract_rows",
    "global_verdict",
    "render_summary",
    "report_tables",
    "verdict_exit_code",
]

CONFIG_NAME = "config.json"
REPORT_NAME = "report.json"
MANIFEST_NAME = "manifest.json"
SUMMARY_NAME = "summary.txt"
TABLES_DIR = "tables"

_VERDICT_RANK = {"pass": 0, "inconclusive": 1, "fail": 2}


class ReportError(RuntimeError):
    """An artifact set is incomplete or malformed."""


def _row(check: str, lhs, rhs, se, verdict: str, **extra) -> dict:
    out = {"check": check, "lhs": lhs, "rhs": rhs, "se": se,
           "verdict": verdict}
    out.update(extra)
    return out


# ---------------------------------------------------------------------------
# Per-kind extraction


def _rows_identity(rep: dict) -> list[dict]:
    return [
        _row(
            "identity", rep["lhs"], rep["rhs"], rep["se"], rep["verdict"],
            delta=rep["delta"], allowance=rep["allowance"],
        )
    ]


def _rows_martingale(rep: dict) -> list[dict]:
    return [
        _row(
            f"{c['witness']}@[{c['pair'][0]:g},{c['pair'][1]:g}]",
            c["stat"], 0.0, c["se"], c["verdict"], z=c["z"], n=c["n"],
        )
        for c in rep["cells"]
    ]


def _rows_uniqueness(rep: dict) -> list[dict]:
    return [
        _row(
            r["observable"], r["lhs"], r["rhs"], r["se"], r["verdict"],
            allowance=r["allowance"],
        )
        for r in rep["rows"]
    ]


def _rows_trend(rep: dict) -> list[dict]:
    return [
        _row(
            f"trend:{name}", block["slope"], 0.0, block["slope_se"],
            block["verdict"], ratios=" ".join(
                f"{v:.6g}" for v in block["ratios"]
            ),
        )
        for name, block in rep["bounds"].items()
    ]


def _rows_p31(rep: dict) -> list[dict]:
    block = rep["bound"]
    return [
        _row(
            "trend:weighted-moment", block["slope"], 0.0, block["slope_se"],
            block["verdict"],
            ratios=" ".join(f"{v:.6g}" for v in block["ratios"]),
        )
    ]


def _rows_bilinear(rep: dict) -> list[dict]:
    factor = rep["parameters"]["stability_factor"]
    return [
        _row("majorant-constant", rep["c_tilde_1"], None, None, "reported"),
        _row("young-constant", rep["c_tilde"], None, None, "reported"),
        _row(
            "stability-ratio", rep["stability_ratio"], factor, None,
            "pass" if rep["stability_ratio"] < factor else "fail",
        ),
        _row(
            "signed-flux-cancellation", rep["cancellation_residual"],
            1e-8 * rep["c_tilde_1"], None,
            "pass"
            if rep["cancellation_residual"] <= 1e-8 * rep["c_tilde_1"]
            else "fail",
        ),
        _row(
            "young-split-gap", rep["young_max_relative_gap"], 1e-12, None,
            "pass" if rep["young_max_relative_gap"] <= 1e-12 else "fail",
        ),
    ]


def _rows_resolvent_suite(rep: dict) -> list[dict]:
    rows = [
        _row(
            f"const@lam={r['lam']:g}", r["estimate"], r["exact"], 0.0,
            r["verdict"], rel_err=r["rel_err"],
        )
        for r in rep["const"]["rows"]
    ]
    rows += [
        _row(
            f"contraction@s{r['state']},lam={r['lam']:g}", r["value"],
            r["bound"], r["se"], r["verdict"],
        )
        for r in rep["contraction"]["rows"]
    ]
    rows += [
        _row(
            f"approach@s{p['state']},{p['lam_lo']:g}->{p['lam_hi']:g}",
            p["rise"], p["band"], None, p["verdict"],
        )
        for p in rep["approach"]["pairs"]
    ]
    return rows


def _rows_simulate(rep: dict) -> list[dict]:
    return [
        _row(m["name"], m["mean"], None, m["se"], "reported")
        for m in rep.get("moments", [])
    ]


def _rows_semigroup(rep: dict) -> list[dict]:
    est = rep["estimate"]
    return [
        _row(
            rep["target"], est["mean"], rep.get("exact"), est["se"],
            rep["verdict"],
        )
    ]


_EXTRACTORS: dict[str, Callable[[dict], list[dict]]] = {
    "duhamel-identity": _rows_identity,
    "resolvent-identity": _rows_identity,
    "chapman-kolmogorov": _rows_identity,
    "ps-duhamel": _rows_identity,
    "mild-formula": _rows_identity,
    "martingale-grid": _rows_martingale,
    "uniqueness-crosscheck": _rows_uniqueness,
    "lemma-l1": _rows_trend,
    "lemma-l2": _rows_trend,
    "prop-p31": _rows_p31,
    "bilinear-constants": _rows_bilinear,
    "resolvent-suite": _rows_resolvent_suite,
    "simulate": _rows_simulate,
    "semigroup": _rows_semigroup,
}


def extract_rows(rep: dict) -> list[dict]:
    """Flatten one report dict into (check, lhs, rhs, se, verdict) rows."""
    label = rep.get("experiment")
    if label not in _EXTRACTORS:
        raise ReportError(f"unknown experiment label {label!r}")
    return _EXTRACTORS[label](rep)


# ---------------------------------------------------------------------------
# Plot-ready tables


def report_tables(rep: dict) -> dict[str, list[dict]]:
    """CSV-ready tables per report: name stem -> list of flat row dicts."""
    label = rep["experiment"]
    tables: dict[str, list[dict]] = {label: extract_rows(rep)}
    if label in ("lemma-l1", "lemma-l2", "prop-p31") and rep.get("rows"):
        tables[f"{label}-rungs"] = rep["rows"]
    if label == "uniqueness-crosscheck":
        tables[label] = [dict(r) for r in rep["rows"]]
    if label == "bilinear-constants":
        tables[f"{label}-cutoffs"] = [
            {"cutoff": int(m), "c_tilde_1": v}
            for m, v in sorted(
                rep["c1_by_cutoff"].items(), key=lambda kv: int(kv[0])
            )
        ]
    if label == "simulate" and rep.get("coords"):
        tables[f"{label}-coords"] = rep["coords"]
    return tables


def csv_text(rows: Sequence[dict]) -> str:
    """Render rows as CSV with columns in first-seen key order."""
    cols: list[str] = []
    for r in rows:
        for key in r:
            if key not in cols:
                cols.append(key)

    def fmt(v: Any) -> str:
        if v is None:
            return ""
        if isinstance(v, float):
            return repr(v)
        if isinstance(v, (list, tuple)):
            return " ".join(str(u) for u in v)
        return str(v)

    lines = [",".join(cols)]
    lines += [",".join(fmt(r.get(c)) for c in cols) for r in rows]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Aggregation and summary


def global_verdict(reps: Sequence[dict]) -> str:
    """Worst verdict across reports; claims-free reports do not count."""
    worst = "pass"
    for rep in reps:
        v = rep.get("verdict")
        if v in _VERDICT_RANK and _VERDICT_RANK[v] > _VERDICT_RANK[worst]:
            worst = v
    return worst


def verdict_exit_code(verdict: str) -> int:
    return {"pass": 0, "fail": 1, "inconclusive": 2}[verdict]


def _fmt_cell(v: Any) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def render_summary(reps: Sequence[dict]) -> str:
    """One fixed-width table per report plus the aggregate verdict."""
    out: list[str] = []
    for rep in reps:
        label = rep["experiment"]
        out.append(f"== {label} ==")
        params = rep.get("parameters", {})
        if params:
            out.append(
                "  "
                + " ".join(f"{k}={_fmt_cell(v)}" for k, v in params.items())
            )
        rows = extract_rows(rep)
        cols = ["check", "lhs", "rhs", "se", "verdict"]
        cells = [cols] + [[_fmt_cell(r[c]) for c in cols] for r in rows]
        widths = [max(len(row[i]) for row in cells) for i in range(len(cols))]
        for row in cells:
            out.append(
                "  " + "  ".join(c.ljust(w) for c, w in zip(row, widths))
            )
        if "verdict" in rep:
            out.append(f"  verdict: {rep['verdict']}")
        out.append("")
    out.append(f"aggregate verdict: {global_verdict(reps)}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Artifact-set collection (the `report` subcommand)


def collect_reports(root: str | Path) -> list[tuple[Path, dict]]:
    """Load (run_dir, report) pairs under root, shallowest first.

    A run directory is any directory holding a manifest.  Every artifact the
    manifest lists must exist; gaps are collected and raised together so one
    error names every missing file.
    """
    root = Path(root)
    if not root.is_dir():
        raise ReportError(f"not a directory: {root}")
    manifests = sorted(root.rglob(MANIFEST_NAME))
    if not manifests:
        raise ReportError(f"no {MANIFEST_NAME} found under {root}")
    missing: list[str] = []
    found: list[tuple[Path, dict]] = []
    for mpath in manifests:
        run_dir = mpath.parent
        try:
            manifest = json.loads(mpath.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ReportError(f"unreadable manifest {mpath}: {exc}") from exc
        for name in manifest.get("artifacts", []):
            if not (run_dir / name).exists():
                missing.append(str(run_dir / name))
        rpath = run_dir / REPORT_NAME
        if not rpath.exists():
            missing.append(str(rpath))
            continue
        try:
            obj = json.loads(rpath.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ReportError(f"unreadable report {rpath}: {exc}") from exc
        reps = obj["reports"] if isinstance(obj, dict) and "reports" in obj \
            else [obj]
        found.extend((run_dir, rep) for rep in reps)
    if missing:
        raise ReportError(
            "missing artifacts: " + ", ".join(sorted(missing))
        )
    return found
