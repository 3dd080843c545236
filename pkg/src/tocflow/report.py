"""Writing experiment results: report.csv, summary.json, manifest.json and
optional array dumps."""
import csv
import json
import math
import os
import platform
from importlib import metadata

import numpy as np

from .experiments.artifacts import write_array

REPORT_COLUMNS = ["method", "sample_id", "terminal_cost", "residual_norm", "wallclock_ms"]


def _fmt(v):
    """Shortest round-trip text for a float, ``nan`` for missing values."""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if math.isfinite(v) else ("nan" if math.isnan(v) else repr(float(v)))
    return str(v)


def jsonable(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def _dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_report_csv(result, path, record_wallclock=False):
    """Per-sample rows for sampling tasks, otherwise the task table."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if result.reports:
            extra = sorted({c for cols in result.columns.values() for c in cols})
            w.writerow(REPORT_COLUMNS + extra)
            for m, r in result.reports.items():
                cols = result.columns.get(m, {})
                for i in range(r.n_samples):
                    ms = r.wallclock_ms[i] if record_wallclock else float("nan")
                    row = [m, i, r.costs[i], r.residual_norms[i], ms]
                    row += [cols[c][i] if c in cols else float("nan") for c in extra]
                    w.writerow([_fmt(v) for v in row])
        elif result.table is not None:
            header, rows = result.table
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        else:
            w.writerow(["empty"])


def summary_dict(result):
    out = {"task": result.name, "passed": result.passed, "checks": result.checks}
    out.update(result.summary)
    return out


def versions():
    out = {"python": platform.python_version()}
    for pkg in ("numpy", "scipy", "pydantic", "artifact"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def emit_report(result, out_dir, manifest=None, record_wallclock=False, dump_states=False):
    """Write the result files into ``out_dir``; returns the list of paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    p = os.path.join(out_dir, "report.csv")
    write_report_csv(result, p, record_wallclock)
    paths.append(p)
    p = os.path.join(out_dir, "summary.json")
    _dump_json(p, summary_dict(result))
    paths.append(p)
    if manifest is not None:
        p = os.path.join(out_dir, "manifest.json")
        _dump_json(p, manifest)
        paths.append(p)
    if dump_states:
        for m, r in result.reports.items():
            if r.states is not None:
                paths.extend(write_array(os.path.join(out_dir, f"states_{m}"), r.states, method=m))
    for name, (arr, meta) in result.arrays.items():
        paths.extend(write_array(os.path.join(out_dir, name), arr, **jsonable(meta)))
    return paths


def read_report_csv(path):
    """Parse a sampling report back into ``{method: {column: array}}``."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = {}
    for row in rows:
        d = out.setdefault(row["method"], {})
        for k, v in row.items():
            if k == "method":
                continue
            d.setdefault(k, []).append(float(v))
    return {m: {k: np.array(v) for k, v in d.items()} for m, d in out.items()}
