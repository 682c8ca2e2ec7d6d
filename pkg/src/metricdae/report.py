"""Report files (JSON, long-format CSV) and plain-text tables."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from .harness import EvalReport

R2_KEYS = (("r2_act", "R2-Act"), ("r2_val", "R2-Val"))
DIST_KEYS = (("dist_r2_act", "R2-Act"), ("dist_r2_val", "R2-Val"))


def _clean(obj):
    if isinstance(obj, float) and (math.isnan(obj) or math.isinf(obj)):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item"):   # numpy scalars
        return _clean(obj.item())
    return obj


def report_json(report: EvalReport | dict) -> str:
    d = report.to_dict() if isinstance(report, EvalReport) else report
    return json.dumps(_clean(d), sort_keys=True, indent=2) + "\n"


def report_csv(report: EvalReport | dict) -> str:
    """Long format: one row per method, dataset, fold (or mean/std) and quantity."""
    d = report.to_dict() if isinstance(report, EvalReport) else report
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "dataset", "fold", "quantity", "value", "p_value", "insignificant"])
    fmt = lambda v: "NA" if v is None else format(v, ".17g")  # noqa: E731
    for fr in d["folds"]:
        for name, entry in fr["datasets"].items():
            for key, _ in R2_KEYS + DIST_KEYS:
                e = entry.get(key)
                if e is None:
                    continue
                w.writerow([d["method"], name, fr["fold"], key, fmt(e["r2_adjusted"]),
                            fmt(e["p_value"]), int(not e["significant"])])
            for subset, acc in entry["balanced_accuracy"].items():
                w.writerow([d["method"], name, fr["fold"], f"bacc_{subset}", fmt(acc), "NA", "NA"])
    for name, entry in d["summary"].items():
        for key, _ in R2_KEYS + DIST_KEYS:
            s = entry.get(key)
            if s is None:
                continue
            for stat in ("mean", "std"):
                w.writerow([d["method"], name, stat, key, fmt(s[stat]), "NA", int(s["insignificant"])])
        for subset, s in entry["balanced_accuracy"].items():
            for stat in ("mean", "std"):
                w.writerow([d["method"], name, stat, f"bacc_{subset}", fmt(s[stat]), "NA", "NA"])
    return buf.getvalue()


def _cell(s, flag: bool = True) -> str:
    if s is None:
        return "NA"
    txt = f"{s['mean']:.2f}+-{s['std']:.2f}"
    if flag and s.get("insignificant"):
        txt += "*"
    return txt


def _table(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    line = lambda r: "  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()  # noqa: E731
    return "\n".join([line(header), "  ".join("-" * w for w in widths)] + [line(r) for r in rows])


def _dataset_order(reports: list[dict]) -> list[str]:
    names = []
    for r in reports:
        for info in sorted(r["datasets"], key=lambda i: i["role"] != "train"):
            if info["name"] not in names:
                names.append(info["name"])
    return names


def render_tables(reports: list[EvalReport | dict]) -> str:
    """Distance-preservation, label-correlation and classification tables with one
    row per method. ``*`` marks R^2 values whose F-test p-value exceeds 0.05 in
    at least one fold."""
    reps = [r.to_dict() if isinstance(r, EvalReport) else r for r in reports]
    names = _dataset_order(reps)
    train_names = [n for n in names
                   if any(i["name"] == n and i["role"] == "train" for r in reps for i in r["datasets"])]
    out = []

    rows = []
    for r in reps:
        for name in train_names:
            s = r["summary"].get(name)
            if s is not None and any(s.get(k) is not None for k, _ in DIST_KEYS):
                rows.append([r["method"], name] + [_cell(s.get(k)) for k, _ in DIST_KEYS])
    if rows:
        out.append("Pairwise distance preservation (adjusted R^2 of label distance on latent distances)")
        out.append(_table(["Method", "Dataset", "R2-Act", "R2-Val"], rows))

    rows = []
    r2_names = [n for n in names if any(
        r["summary"].get(n, {}).get(k) is not None for r in reps for k, _ in R2_KEYS)]
    for r in reps:
        s_all = r["summary"]
        if not any(s_all.get(n, {}).get(k) is not None for n in r2_names for k, _ in R2_KEYS):
            continue
        row = [r["method"]]
        for n in r2_names:
            row += [_cell(s_all.get(n, {}).get(k)) for k, _ in R2_KEYS]
        rows.append(row)
    if rows:
        out.append("")
        out.append("Label correlation (adjusted R^2 of label on latent), mean+-std over folds")
        out.append(_table(["Method"] + [f"{n}:{lab}" for n in r2_names for _, lab in R2_KEYS], rows))

    cols = []
    for n in names:
        for r in reps:
            for subset in r["summary"].get(n, {}).get("balanced_accuracy", {}):
                if (n, subset) not in cols:
                    cols.append((n, subset))
    cols.sort(key=lambda c: (names.index(c[0]), len(c[1])))
    rows = []
    for r in reps:
        row = [r["method"]]
        for n, subset in cols:
            row.append(_cell(r["summary"].get(n, {}).get("balanced_accuracy", {}).get(subset), False))
        rows.append(row)
    if cols:
        out.append("")
        out.append("Balanced classification accuracy, mean+-std over folds")
        out.append(_table(["Method"] + [f"{n}:{s}" for n, s in cols], rows))

    ranges = []
    for name in names:
        info = next((i for r in reps for i in r["datasets"] if i["name"] == name), {})
        for label, (lo, hi) in info.get("label_range", {}).items():
            ranges.append(f"{name} {label} [{lo:g}, {hi:g}]")
    if ranges:
        out.append("")
        out.append("Note: labels are min-max scaled to [0, 1] per dataset before the metric loss "
                   "(adjusted R^2 is unaffected). Raw ranges: " + "; ".join(ranges))
    return "\n".join(out) + "\n"


def write_report(report: EvalReport, out_dir, stem: str = "report") -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [out_dir / f"{stem}.json", out_dir / f"{stem}.csv", out_dir / f"{stem}.txt"]
    paths[0].write_text(report_json(report), encoding="utf-8")
    paths[1].write_text(report_csv(report), encoding="utf-8")
    paths[2].write_text(render_tables([report]), encoding="utf-8")
    return paths


def load_report(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
