"""Run reports: convergence curve, advantage table, value counts, best strategy."""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from pathlib import Path

from . import plots
from .search import replay_state
from .store import RunDir, write_atomic

ZERO_MEAN_TOL = 1e-9


def _csv(rows: list[list]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def build_report(run: RunDir) -> dict:
    m = run.manifest()
    space = m.factor_space()
    config = m.search_config()
    records = run.journal(space).records
    state = replay_state(m.algorithm, space, config, records)

    curve, best = [], float("-inf")
    for rec in records:
        best = max(best, rec["score"])
        curve.append({"step": rec["step"], "kind": rec["kind"], "score": rec["score"], "best": best})

    counts = Counter()
    for rec in records:
        for fid, vid in rec["strategy"].items():
            counts[fid, vid] += 1
    appearances = {f.id: {v: counts[f.id, v] for v in f.values} for f in space.factors}

    best_rec = None
    for rec in records:
        if best_rec is None or rec["score"] > best_rec["score"]:
            best_rec = rec

    report = {
        "algorithm": m.algorithm,
        "space": m.space_id,
        "backend": m.backend.get("kind"),
        "dataset": m.dataset_id,
        "config": config.to_dict(),
        "status": m.status,
        "evaluations": len(records),
        "best_score": None if best_rec is None else best_rec["score"],
        "best_strategy": None if best_rec is None else best_rec["strategy"],
        "best_step": None if best_rec is None else best_rec["step"],
        "appearances": appearances,
    }
    if state.table is not None:
        t = state.table
        adv = {}
        for i, f in enumerate(space.factors):
            adv[f.id] = {
                "values": {v: {"advantage": float(t.A[i][j]), "explorations": int(t.N[i][j]),
                               "appearances": int(t.M[i][j])} for j, v in enumerate(f.values)},
                "sum": float(t.A[i].sum()),
            }
        report["advantages"] = adv
        report["zero_mean"] = all(abs(a["sum"]) <= ZERO_MEAN_TOL for a in adv.values())
        report["t"] = t.t
    return {"report": report, "curve": curve}


def write_report(run: RunDir, out: Path | None = None, figures: bool = True) -> Path:
    data = build_report(run)
    rep, curve = data["report"], data["curve"]
    out = Path(out) if out is not None else run.report_dir
    out.mkdir(parents=True, exist_ok=True)

    write_atomic(out / "curve.csv", _csv(
        [["step", "kind", "score", "best_so_far"]] + [[c["step"], c["kind"], repr(c["score"]), repr(c["best"])] for c in curve]
    ))
    write_atomic(out / "appearances.csv", _csv(
        [["factor", "value", "appearances"]]
        + [[f, v, n] for f, vals in rep["appearances"].items() for v, n in vals.items()]
    ))
    if "advantages" in rep:
        rows = [["factor", "value", "advantage", "explorations", "appearances"]]
        for f, a in rep["advantages"].items():
            rows += [[f, v, repr(x["advantage"]), x["explorations"], x["appearances"]] for v, x in a["values"].items()]
        write_atomic(out / "advantages.csv", _csv(rows))
    if rep["best_strategy"] is not None:
        write_atomic(out / "best_strategy.json", json.dumps(rep["best_strategy"], indent=2) + "\n")
    write_atomic(out / "report.json", json.dumps(rep, indent=2, sort_keys=True) + "\n")

    if figures and curve:
        plots.convergence(
            out / "convergence.png",
            [c["step"] for c in curve], [c["score"] for c in curve], [c["best"] for c in curve],
            [c["kind"] for c in curve], title=f"{rep['algorithm']} on {rep['space']}",
        )
        if "advantages" in rep:
            plots.advantages(out / "advantages.png", {
                f: [(v, x["advantage"]) for v, x in a["values"].items()] for f, a in rep["advantages"].items()
            })
    return out / "report.json"
