"""Summary reports over one or more run records (markdown + JSON)."""

from __future__ import annotations

import json

import numpy as np

from .config import RunRecord
from .profile import GAMMA0, GAMMA1, IDENTITY1, IDENTITY2


class ReportError(ValueError):
    pass


def rate_fit(eps, errors):
    """Least-squares slope of log(err) vs log(eps) with a 95% band."""
    x = np.log(np.asarray(eps, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    n = x.size
    A = np.vstack([x, np.ones(n)]).T
    coef, res, _, _ = np.linalg.lstsq(A, y, rcond=None)
    slope = float(coef[0])
    if n > 2 and res.size:
        sxx = float(np.sum((x - x.mean()) ** 2))
        se = float(np.sqrt(res[0] / (n - 2) / sxx))
    else:
        se = 0.0
    return slope, 1.96 * se


def emit_report(records) -> tuple[str, dict]:
    """Markdown text plus a JSON-ready summary dict for the given records."""
    records = list(records)
    if not records:
        raise ReportError("need at least one run record")
    summary = {
        "profile_constants": {"gamma0": GAMMA0, "gamma1": GAMMA1,
                              "identity1": IDENTITY1, "identity2": IDENTITY2},
        "runs": [],
    }
    lines = ["# Run summary", ""]
    for rec in records:
        entry = {"config_hash": rec.config_hash, "kind": rec.kind,
                 "n_results": len(rec.results),
                 "artifacts": list(rec.artifacts),
                 "checks": [], "pde_section": "not run"}
        lines.append(f"## {rec.kind} ({rec.config_hash})")
        lines.append("")
        eps_list, err_list = [], []
        for res in rec.results:
            if "eps" in res and "rel_delta_max" in res:
                eps_list.append(res["eps"])
                err_list.append(max(res["rel_delta_max"], 1e-300))
            for chk in res.get("checks", []):
                entry["checks"].append(chk)
                mark = "PASS" if chk["passed"] else "FAIL"
                lines.append(f"- {mark} {chk['name']}: measured "
                             f"{chk['measured']:.6g} vs required "
                             f"{chk['required']}")
        if eps_list:
            entry["pde_section"] = "run"
            if len(eps_list) >= 2:
                slope, ci = rate_fit(eps_list, err_list)
                entry["rate_fit"] = {"slope": slope, "ci95": ci}
                lines.append(f"- convergence rate fit: slope {slope:.3f} "
                             f"± {ci:.3f} (95%)")
        else:
            lines.append("- PDE delta section: not run")
        for art in rec.artifacts:
            lines.append(f"- artifact: `{art}`")
        lines.append("")
        summary["runs"].append(entry)
    all_checks = [c for e in summary["runs"] for c in e["checks"]]
    summary["all_passed"] = all(c["passed"] for c in all_checks) \
        if all_checks else True
    status = "all checks passed" if summary["all_passed"] else \
        "FAILURES present"
    lines.insert(2, f"**Status:** {status}")
    lines.insert(3, "")
    return "\n".join(lines), summary


def write_report(records, md_path, json_path) -> dict:
    text, summary = emit_report(records)
    with open(md_path, "w") as fh:
        fh.write(text)
    with open(json_path, "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary
