"""Panel CSV ingestion/serialization and report-artifact writers.

Panels travel as wide CSV: a `time` column plus one column per subject,
one row per observation time.  Values are written with 17 significant
digits so write/read round-trips are bit-exact.  Lines starting with `#`
are comments; emitted artifacts use them to embed the seed and the full
effective configuration.  Every writer here has a matching reader, and
every artifact re-parses under it.
"""

from __future__ import annotations

import csv
import os

import numpy as np
import yaml

from .errors import ValidationError
from .model import StudyDesign
from .simulate import PathPanel

__all__ = [
    "read_panel_csv", "write_panel_csv",
    "write_params_artifact", "read_params_artifact",
    "write_profile_table", "read_profile_table",
    "write_test_artifact", "read_test_artifact",
    "write_mse_table", "read_mse_table",
    "write_plot_table", "read_plot_table",
    "write_fit_report", "read_fit_report",
]

FLOAT_FMT = "%.17g"


def _fmt(x):
    return FLOAT_FMT % float(x)


def _comment_block(seed=None, config=None):
    lines = []
    if seed is not None:
        lines.append(f"# seed: {seed}")
    if config:
        dumped = yaml.safe_dump(config, sort_keys=False, default_flow_style=False)
        lines.append("# config:")
        lines.extend("#   " + ln for ln in dumped.rstrip("\n").split("\n"))
    return lines


# -- panels ----------------------------------------------------------------


def write_panel_csv(path, panel, seed=None, config=None):
    """Write a panel in the wide CSV format (time, subject_1..subject_d)."""
    with open(path, "w", newline="") as fh:
        for line in _comment_block(seed, config):
            fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(["time"] + [f"subject_{i + 1}" for i in range(panel.n_paths)])
        for j, t in enumerate(panel.grid):
            writer.writerow([_fmt(t)] + [_fmt(v) for v in panel.values[:, j]])


def read_panel_csv(path, label=""):
    """Parse and validate a wide-format panel CSV."""
    if not os.path.exists(path):
        raise ValidationError(f"panel file not found: {path}")
    with open(path, newline="") as fh:
        rows = [(i + 1, row) for i, row in enumerate(csv.reader(fh))
                if row and not row[0].lstrip().startswith("#")]
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    header_line, header = rows[0]
    if not header or header[0].strip() != "time" or len(header) < 2:
        raise ValidationError(
            f"{path}:{header_line}: header must be 'time,subject_1,...'"
        )
    n_cols = len(header)
    times, columns = [], []
    for line_no, row in rows[1:]:
        if len(row) != n_cols:
            raise ValidationError(
                f"{path}:{line_no}: expected {n_cols} cells, found {len(row)}"
            )
        try:
            vals = [float(c) for c in row]
        except ValueError as err:
            raise ValidationError(f"{path}:{line_no}: {err}") from None
        times.append(vals[0])
        columns.append(vals[1:])
    times = np.asarray(times)
    values = np.asarray(columns).T  # (subjects, times)
    if times.size < 2:
        raise ValidationError(f"{path}: need at least two observation times")
    bad = np.nonzero(np.diff(times) <= 0)[0]
    if bad.size:
        raise ValidationError(
            f"{path}: time column not strictly increasing at row {bad[0] + 2}"
        )
    if not np.all(np.isfinite(values)) or np.any(values <= 0):
        i, j = np.argwhere(~np.isfinite(values) | (values <= 0))[0]
        raise ValidationError(
            f"{path}: non-positive or non-finite value for {header[i + 1].strip()} "
            f"at time row {j + 1}"
        )
    x0 = values[0, 0]
    if np.any(values[:, 0] != x0):
        i = int(np.nonzero(values[:, 0] != x0)[0][0])
        raise ValidationError(
            f"{path}: all subjects must share the initial value; "
            f"{header[i + 1].strip()} differs"
        )
    design = StudyDesign(grid=times, x0=float(x0))
    return PathPanel(design=design, values=values, label=label)


# -- structured text artifacts (YAML bodies) --------------------------------


def _plainify(obj):
    """Recursively convert numpy scalars/arrays to plain Python values."""
    if isinstance(obj, dict):
        return {k: _plainify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plainify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plainify(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _write_yaml_artifact(path, payload):
    with open(path, "w") as fh:
        yaml.safe_dump(_plainify(payload), fh, sort_keys=False,
                       default_flow_style=False)


def _read_yaml_artifact(path, required):
    with open(path) as fh:
        payload = yaml.safe_load(fh)
    if not isinstance(payload, dict):
        raise ValidationError(f"{path}: not a mapping artifact")
    missing = [k for k in required if k not in payload]
    if missing:
        raise ValidationError(f"{path}: missing keys {missing}")
    return payload


def write_params_artifact(path, params, seed, config, diagnostics=None):
    payload = {
        "seed": seed,
        "config": config,
        "estimates": {"alpha": float(params.alpha), "beta": float(params.beta),
                      "sigma": float(params.sigma)},
    }
    if diagnostics:
        payload["diagnostics"] = diagnostics
    _write_yaml_artifact(path, payload)


def read_params_artifact(path):
    return _read_yaml_artifact(path, required=("seed", "config", "estimates"))


def write_test_artifact(path, result, seed, config):
    reps = np.asarray(result.replicates)
    payload = {
        "seed": seed,
        "config": config,
        "hypothesis": result.h_description,
        "target": result.target,
        "statistic": float(result.statistic),
        "m": int(result.m),
        "test_seed": int(result.seed),
        "p_value": float(result.p_value),
        "level": float(result.level),
        "reject": bool(result.reject),
        "critical_value": float(np.quantile(reps, 1.0 - result.level)),
        "replicate_summary": {
            "min": float(reps.min()), "q25": float(np.quantile(reps, 0.25)),
            "median": float(np.median(reps)), "q75": float(np.quantile(reps, 0.75)),
            "max": float(reps.max()),
        },
    }
    _write_yaml_artifact(path, payload)


def read_test_artifact(path):
    return _read_yaml_artifact(
        path, required=("seed", "config", "hypothesis", "statistic", "m",
                        "p_value", "level", "reject"))


def write_fit_report(path, fit, seed, config, mse=None):
    """Full pipeline report: estimates, knot tables, diagnostics, MSEs."""
    payload = {
        "seed": seed,
        "config": config,
        "estimates": {"alpha": float(fit.params.alpha), "beta": float(fit.params.beta),
                      "sigma": float(fit.params.sigma)},
        "pipeline": {
            "ordering": fit.settings.ordering,
            "relation_form": fit.settings.relation_form,
            "loess_span_rate": fit.settings.loess_span_rate,
            "loess_span_variance": fit.settings.loess_span_variance,
            "loess_degree": fit.settings.loess_degree,
            "loess_iterations": fit.settings.loess_iterations,
        },
        "guarded_points": fit.diagnostics.get("guarded_points", {}),
        "floored_points": fit.diagnostics.get("floored_points", {}),
        "profiles": {
            target: {
                "t": [float(v) for v in fit.grid],
                "knots": [float(v) for v in fit.smoothed[target]],
            }
            for target in sorted(fit.profiles)
        },
    }
    if mse is not None:
        payload["mse"] = {k: float(v) for k, v in mse.items()}
    _write_yaml_artifact(path, payload)


def read_fit_report(path):
    return _read_yaml_artifact(path, required=("seed", "config", "estimates",
                                               "pipeline", "profiles"))


# -- numeric tables ----------------------------------------------------------


def write_profile_table(path, grid, raw, smoothed, missing, floored,
                        seed=None, config=None):
    """Knot table of one fitted therapy function."""
    with open(path, "w", newline="") as fh:
        for line in _comment_block(seed, config):
            fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(["time", "raw", "smoothed", "missing", "floored"])
        for j in range(len(grid)):
            writer.writerow([
                _fmt(grid[j]),
                "nan" if not np.isfinite(raw[j]) else _fmt(raw[j]),
                _fmt(smoothed[j]),
                int(bool(missing[j])), int(bool(floored[j])),
            ])


def read_profile_table(path):
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh)
                if row and not row[0].lstrip().startswith("#")]
    if not rows or rows[0][:3] != ["time", "raw", "smoothed"]:
        raise ValidationError(f"{path}: not a profile knot table")
    data = np.array([[float(c) for c in row[:3]] for row in rows[1:]])
    flags = np.array([[int(c) for c in row[3:5]] for row in rows[1:]], dtype=bool)
    return {"time": data[:, 0], "raw": data[:, 1], "smoothed": data[:, 2],
            "missing": flags[:, 0], "floored": flags[:, 1]}


def write_mse_table(path, rows, medians, seed=None, config=None):
    """Per-replication MSE rows plus the medians over replications."""
    with open(path, "w", newline="") as fh:
        for line in _comment_block(seed, config):
            fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(["replication", "function", "mse"])
        for rep, table in enumerate(rows, start=1):
            for func, value in table.items():
                writer.writerow([rep, func, _fmt(value)])
        for func, value in medians.items():
            writer.writerow(["median", func, _fmt(value)])


def read_mse_table(path):
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh)
                if row and not row[0].lstrip().startswith("#")]
    if not rows or rows[0] != ["replication", "function", "mse"]:
        raise ValidationError(f"{path}: not an MSE table")
    records = [(r[0], r[1], float(r[2])) for r in rows[1:]]
    medians = {func: val for rep, func, val in records if rep == "median"}
    return records, medians


def write_plot_table(path, columns, seed=None, config=None):
    """Named numeric columns as comment-headed CSV for plotting."""
    names = list(columns)
    arrays = [np.asarray(columns[k], dtype=float) for k in names]
    with open(path, "w", newline="") as fh:
        for line in _comment_block(seed, config):
            fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(names)
        for j in range(arrays[0].size):
            writer.writerow([_fmt(a[j]) for a in arrays])


def read_plot_table(path):
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh)
                if row and not row[0].lstrip().startswith("#")]
    if len(rows) < 2:
        raise ValidationError(f"{path}: empty plot table")
    names = rows[0]
    data = np.array([[float(c) for c in row] for row in rows[1:]])
    return {name: data[:, i] for i, name in enumerate(names)}
