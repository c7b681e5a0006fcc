"""CSV ingestion and the files written by the command-line runs."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import Dataset, ModelKind, Parameters, UtilitySpec
from .stats import SE_CONVENTION, ElasticityReport, FitResult, SensitivityTable
from .train import TrainingCurve

MISSING_TOKENS = {"", "na", "nan", "null", "none"}


class DataError(ValueError):
    pass


def _is_number(text: str) -> bool:
    try:
        return math.isfinite(float(text))
    except ValueError:
        return False


def _level_key(level: str):
    return (0, float(level), level) if _is_number(level) else (1, 0.0, level)


def _read_rows(path):
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        seen = set()
        for name in header:
            if name in seen:
                raise DataError(f"{path}: duplicate column {name!r}")
            seen.add(name)
        rows = []
        for row in reader:
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: line {reader.line_num}: expected {len(header)} fields, got {len(row)}")
            rows.append((reader.line_num, [cell.strip() for cell in row]))
    return header, rows


def load_csv(path, choice_column: str, variables: Sequence[str] = (), categorical: Sequence[str] = (),
             alternatives: Sequence[str] = ()) -> Dataset:
    """Read a wide CSV (one row per observation) into a :class:`Dataset`.

    Categorical columns, and any column with non-numeric values, become one
    0/1 dummy per level, named ``<column>_<level>``.  The choice column may
    hold alternative labels or 0-based indices; ``alternatives`` fixes the
    label order, otherwise labels are sorted (or indices span 0..max).
    With no ``variables`` every non-choice column is used.
    """
    header, rows = _read_rows(path)
    if choice_column not in header:
        raise DataError(f"{path}: missing choice column {choice_column!r}")
    variables = tuple(variables) or tuple(h for h in header if h != choice_column)
    missing = [v for v in variables if v not in header]
    if missing:
        raise DataError(f"{path}: missing column(s) {', '.join(repr(m) for m in missing)}")
    if not rows:
        raise DataError(f"{path}: no data rows")

    needed = [header.index(v) for v in variables] + [header.index(choice_column)]
    bad_lines = [ln for ln, row in rows if any(row[i].lower() in MISSING_TOKENS for i in needed)]
    if bad_lines:
        shown = ", ".join(str(x) for x in bad_lines[:10])
        more = "" if len(bad_lines) <= 10 else f" (+{len(bad_lines) - 10} more)"
        raise DataError(f"{path}: missing values on line(s) {shown}{more}")

    names: list[str] = []
    columns: list[np.ndarray] = []
    for var in variables:
        idx = header.index(var)
        values = [row[idx] for _, row in rows]
        if var in categorical or not all(_is_number(v) for v in values):
            for level in sorted(set(values), key=_level_key):
                names.append(f"{var}_{level}")
                columns.append(np.array([v == level for v in values], dtype=float))
        else:
            columns.append(np.array([float(v) for v in values]))
            names.append(var)
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise DataError(f"{path}: expanded column names collide: {', '.join(dupes)}")

    cidx = header.index(choice_column)
    raw_choices = [(ln, row[cidx]) for ln, row in rows]
    if alternatives:
        alt_names = tuple(alternatives)
        lookup = {a: j for j, a in enumerate(alt_names)}
        choices = []
        for ln, val in raw_choices:
            if val in lookup:
                choices.append(lookup[val])
            elif val.isdigit() and int(val) < len(alt_names):
                choices.append(int(val))
            else:
                raise DataError(f"{path}: line {ln}: unknown choice label {val!r}")
    elif all(v.isdigit() for _, v in raw_choices):
        choices = [int(v) for _, v in raw_choices]
        alt_names = tuple(str(j) for j in range(max(choices) + 1))
    else:
        alt_names = tuple(sorted({v for _, v in raw_choices}, key=_level_key))
        lookup = {a: j for j, a in enumerate(alt_names)}
        choices = [lookup[v] for _, v in raw_choices]
    if len(alt_names) < 2:
        raise DataError(f"{path}: choice set has a single alternative; at least 2 are required")

    attrs = np.column_stack(columns) if columns else np.zeros((len(rows), 0))
    return Dataset(tuple(names), attrs, np.array(choices), alt_names)


def align_attributes(dataset: Dataset, names: Sequence[str], categorical: Sequence[str] = ()) -> Dataset:
    """Reorder columns to ``names``; dummy levels absent from this file are zero-filled."""
    cols = []
    for name in names:
        if name in dataset.attribute_names:
            cols.append(dataset.column(name))
        elif any(name.startswith(f"{c}_") for c in categorical):
            cols.append(np.zeros(dataset.n_obs))
        else:
            raise DataError(f"column {name!r} needed by the model is missing")
    attrs = np.column_stack(cols) if cols else np.zeros((dataset.n_obs, 0))
    return Dataset(tuple(names), attrs, dataset.choices, dataset.alt_names)


def _fmt(x) -> str:
    return repr(float(x))


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dataset_to_csv(dataset: Dataset, choice_column: str = "choice") -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(dataset.attribute_names) + [choice_column])
    for row, c in zip(dataset.attributes, dataset.choices):
        writer.writerow([_fmt(v) for v in row] + [dataset.alt_names[c]])
    return buf.getvalue()


def write_csv(dataset: Dataset, path, choice_column: str = "choice") -> None:
    atomic_write(path, dataset_to_csv(dataset, choice_column))


def params_to_json(fit_or_params, kind: ModelKind, spec: UtilitySpec, alt_names: Sequence[str],
                   attribute_names: Sequence[str]) -> str:
    params = fit_or_params.params if isinstance(fit_or_params, FitResult) else fit_or_params
    doc = {
        "model": kind.tag.value,
        "depth": kind.depth,
        "variables": list(spec.variables),
        "reference_alt": spec.reference_alt,
        "include_asc": spec.include_asc,
        "alt_names": list(alt_names),
        "attribute_names": list(attribute_names),
        "beta": [float(b) for b in params.beta],
        "thetas": [[[float(x) for x in row] for row in t] for t in params.thetas],
    }
    return json.dumps(doc, indent=1) + "\n"


def load_params(path):
    """Read a params.json back into (params, kind, spec, alt_names, attribute_names)."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    kind = ModelKind(doc["model"], int(doc["depth"]))
    spec = UtilitySpec(tuple(doc["variables"]), int(doc["reference_alt"]), bool(doc["include_asc"]))
    params = Parameters(np.array(doc["beta"], dtype=float), tuple(np.array(t, dtype=float) for t in doc["thetas"]))
    return params, kind, spec, tuple(doc["alt_names"]), tuple(doc["attribute_names"])


def coefficients_csv(fit: FitResult) -> str:
    buf = io.StringIO()
    buf.write("variable,alternative,beta,std_err,robust_std_err,significant\n")
    for i, (var, alt) in enumerate(fit.design.pairs()):
        buf.write(
            f"{var},{fit.alt_names[alt]},{_fmt(fit.params.beta[i])},{_fmt(fit.std_err[i])},"
            f"{_fmt(fit.robust_std_err[i])},{'true' if fit.significant[i] else 'false'}\n"
        )
    return buf.getvalue()


def thetas_csv(fit: FitResult) -> str:
    buf = io.StringIO()
    buf.write("layer,row_alternative,column_alternative,value\n")
    for m, t in enumerate(fit.params.thetas, start=1):
        for i, a in enumerate(fit.alt_names):
            for j, b in enumerate(fit.alt_names):
                buf.write(f"{m},{a},{b},{_fmt(t[i, j])}\n")
    return buf.getvalue()


def report_text(fit: FitResult, config_echo: Sequence[tuple[str, str]], n_obs: int) -> str:
    ref = fit.alt_names[fit.spec.reference_alt]
    lines = [
        ("model", fit.kind.tag.value),
        ("label", fit.kind.label),
        ("depth", str(fit.kind.depth)),
        ("seed", next((v for k, v in config_echo if k == "seed"), "")),
        ("n_observations", str(n_obs)),
        ("n_train", str(fit.n_train)),
        ("n_valid", str(fit.n_valid)),
        ("n_alternatives", str(len(fit.alt_names))),
        ("alternatives", ",".join(fit.alt_names)),
        ("reference_alternative", ref),
        ("n_parameters", str(fit.n_parameters)),
        ("log_likelihood", _fmt(fit.final_ll)),
        ("validation_log_likelihood", _fmt(fit.validation_ll)),
        ("aic", _fmt(fit.aic)),
        ("validation_accuracy", _fmt(fit.validation_accuracy)),
        ("validation_error", _fmt(1.0 - fit.validation_accuracy)),
        ("best_iteration", str(fit.best_iteration)),
        ("iterations_run", str(fit.iterations_run)),
        ("stop_reason", fit.stop_reason),
        ("coefficient_scale", "raw attribute units (standardization folded back)"),
        ("se_convention", SE_CONVENTION),
        ("significance", "two-sided normal, p < 0.05"),
    ]
    lines += [(f"config.{k}", v) for k, v in config_echo]
    return "".join(f"{k}: {v}\n" for k, v in lines)


def parse_report(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if ": " in line:
            k, v = line.split(": ", 1)
            out[k] = v
    return out


def elasticity_point_csv(rep: ElasticityReport) -> str:
    buf = io.StringIO()
    buf.write("variable,alternative,point_elasticity\n")
    for a, e in zip(rep.alt_names, rep.point):
        buf.write(f"{rep.variable},{a},{_fmt(e)}\n")
    return buf.getvalue()


def elasticity_arc_csv(rep: ElasticityReport) -> str:
    buf = io.StringIO()
    buf.write("delta_pct," + ",".join(rep.alt_names) + "\n")
    for d, row in zip(rep.arc_grid, rep.arc):
        buf.write(_fmt(d) + "," + ",".join(_fmt(x) for x in row) + "\n")
    return buf.getvalue()


def sensitivity_csv(table: SensitivityTable) -> str:
    buf = io.StringIO()
    buf.write("dummy," + ",".join(table.alt_names) + "\n")
    for d, row in zip(table.dummies, table.ratios):
        buf.write(d + "," + ",".join(_fmt(x) for x in row) + "\n")
    buf.write("stddev," + ",".join(_fmt(x) for x in table.stddev) + "\n")
    return buf.getvalue()


def curve_csv(curve: TrainingCurve) -> str:
    return curve.to_csv()
