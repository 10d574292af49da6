"""CSV/JSON readers and writers.

File formats (all indices 1-based, treatments written as sign patterns):

* science table: ``unit,pair,Y(-1,-1),Y(-1,+1),...``; ``pair`` optional,
  cell columns in any order;
* pairing: ``unit,pair``;
* assignment: ``unit,treatment_index,z_pattern``;
* observed data: ``unit,pair,z_pattern,y_obs``; ``pair`` blank for CR data.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .errors import PairfactError
from .estimators import EstimateReport
from .model_matrix import ModelMatrix, build_model_matrix, parse_pattern, pattern_index, pattern_label
from .oracle import ComparisonReport, IdentityCheck, VerificationReport
from .population import Pairing, ScienceTable
from .randomization import Assignment, ObservedData


def _num(x) -> str:
    """17 significant digits; round-trips float64 exactly."""
    return format(float(x), ".17g")


def _rejoin(fields: list[str]) -> list[str]:
    """Re-merge unquoted ``(-1,+1)`` patterns that the csv reader split on commas."""
    out, depth = [], 0
    for f in fields:
        if depth > 0:
            out[-1] += "," + f
        else:
            out.append(f)
        depth += f.count("(") - f.count(")")
    return out


def _rows(path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    path = Path(path)
    if not path.exists():
        raise PairfactError(f"{path}: file not found")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in _rejoin(next(reader))]
        except StopIteration:
            raise PairfactError(f"{path}: empty file")
        rows = [
            (reader.line_num, [c.strip() for c in _rejoin(row)])
            for row in reader
            if any(c.strip() for c in row)
        ]
    for line, row in rows:
        if len(row) != len(header):
            raise PairfactError(
                f"{path}:{line}: expected {len(header)} columns, got {len(row)}"
            )
    return header, rows


def _number(text: str, where: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise PairfactError(f"{where}: non-numeric value {text!r}")
    if not math.isfinite(v):
        raise PairfactError(f"{where}: non-finite value {text!r}")
    return v


def _infer_k(n_cells: int, where: str) -> int:
    k = n_cells.bit_length() - 1
    if n_cells < 2 or 1 << k != n_cells:
        raise PairfactError(f"{where}: {n_cells} outcome columns is not 2^K for K >= 1")
    return k


def parse_science_table(path) -> tuple[ScienceTable, Pairing | None]:
    """Read a science table; returns the table and its pairing if a ``pair`` column exists."""
    header, rows = _rows(path)
    if not header or header[0] != "unit":
        raise PairfactError(f"{path}:1: first column must be 'unit'")
    has_pair = len(header) > 1 and header[1] == "pair"
    first_cell = 2 if has_pair else 1
    cells = header[first_cell:]
    k = _infer_k(len(cells), f"{path}:1")
    order = []
    for c, name in enumerate(cells, start=first_cell + 1):
        if not name.startswith("Y("):
            raise PairfactError(f"{path}:1:{c}: unexpected column {name!r}, expected Y(...)")
        try:
            z = parse_pattern(name)
        except PairfactError:
            raise PairfactError(f"{path}:1:{c}: malformed cell label {name!r}")
        if len(z) != k:
            raise PairfactError(f"{path}:1:{c}: label {name!r} has {len(z)} factors, expected {k}")
        order.append(pattern_index(z))
    if sorted(order) != list(range(1 << k)):
        raise PairfactError(f"{path}:1: cell labels do not cover every treatment exactly once")
    if not rows:
        raise PairfactError(f"{path}: no units")
    y = np.empty((len(rows), 1 << k))
    units, pairs = [], []
    for i, (line, row) in enumerate(rows):
        units.append(row[0])
        if has_pair:
            if not row[1]:
                raise PairfactError(f"{path}:{line}:2: missing pair label")
            pairs.append(row[1])
        for c, l in enumerate(order):
            col = first_cell + c
            y[i, l] = _number(row[col], f"{path}:{line}:{col + 1}")
    if len(set(units)) != len(units):
        raise PairfactError(f"{path}: duplicate unit ids")
    st = ScienceTable(k, y, tuple(units))
    pairing = None
    if has_pair:
        pairing = Pairing.from_labels(pairs)
        pairing.validate(st.n, k)
    return st, pairing


def parse_pairing(path, st: ScienceTable) -> Pairing:
    """Read a ``unit,pair`` file and map unit ids onto rows of ``st``."""
    header, rows = _rows(path)
    if header[:2] != ["unit", "pair"]:
        raise PairfactError(f"{path}:1: header must be 'unit,pair'")
    index = {u: i for i, u in enumerate(st.unit_ids)}
    groups: dict[str, list[int]] = {}
    for line, row in rows:
        if row[0] not in index:
            raise PairfactError(f"{path}:{line}:1: unknown unit {row[0]!r}")
        groups.setdefault(row[1], []).append(index[row[0]])
    p = Pairing(tuple(tuple(v) for v in groups.values()), tuple(groups))
    p.validate(st.n, st.k)
    return p


def parse_observed(path, design: str) -> ObservedData:
    """Read observed outcomes for a ``cr`` or ``mp`` design."""
    design = design.lower()
    if design not in ("cr", "mp"):
        raise PairfactError(f"unknown design {design!r}; expected 'cr' or 'mp'")
    header, rows = _rows(path)
    if header[:4] != ["unit", "pair", "z_pattern", "y_obs"]:
        raise PairfactError(f"{path}:1: header must be 'unit,pair,z_pattern,y_obs'")
    if not rows:
        raise PairfactError(f"{path}: no observations")
    k = None
    units, treat, ys, pair_labels = [], [], [], []
    for line, row in rows:
        try:
            z = parse_pattern(row[2])
        except PairfactError:
            raise PairfactError(f"{path}:{line}:3: unknown z-pattern {row[2]!r}")
        if k is None:
            k = len(z)
        elif len(z) != k:
            raise PairfactError(f"{path}:{line}:3: pattern {row[2]!r} has {len(z)} factors, expected {k}")
        units.append(row[0])
        treat.append(pattern_index(z))
        ys.append(_number(row[3], f"{path}:{line}:4"))
        pair_labels.append(row[1])
    if design == "cr":
        obs = ObservedData(k, treat, ys, unit_ids=tuple(units))
        obs.replicates()
        return obs
    labels: dict[str, int] = {}
    seen: set[tuple[int, int]] = set()
    pair = []
    for (line, row), lab, l in zip(rows, pair_labels, treat):
        if not lab:
            raise PairfactError(f"{path}:{line}:2: missing pair label in matched-pair data")
        j = labels.setdefault(lab, len(labels))
        if (j, l) in seen:
            raise PairfactError(
                f"{path}:{line}: duplicate observation for pair {lab} and pattern {row[2]}"
            )
        seen.add((j, l))
        pair.append(j)
    obs = ObservedData(k, treat, ys, pair, tuple(units), tuple(labels))
    obs.pair_table()
    return obs


# -- writers -----------------------------------------------------------------------


def _csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def format_science_table(st: ScienceTable, pairing: Pairing | None = None) -> str:
    m = build_model_matrix(st.k)
    cells = ["Y" + pattern_label(z) for z in m.treatment_combinations()]
    header = ["unit"] + (["pair"] if pairing else []) + cells
    pair_of = pairing.pair_of(st.n) if pairing else None
    rows = [header]
    for i, u in enumerate(st.unit_ids):
        lead = [u] + ([pairing.labels[pair_of[i]]] if pairing else [])
        rows.append(lead + [_num(v) for v in st.outcomes[i]])
    return _csv(rows)


def format_assignment(a: Assignment, st: ScienceTable) -> str:
    m = build_model_matrix(a.k)
    z = m.treatment_combinations()
    rows = [["unit", "treatment_index", "z_pattern"]]
    for u, l in zip(st.unit_ids, a.treatment_of):
        rows.append([u, int(l) + 1, pattern_label(z[l])])
    return _csv(rows)


def format_observed(obs: ObservedData) -> str:
    m = build_model_matrix(obs.k)
    z = m.treatment_combinations()
    ids = obs.unit_ids or tuple(str(i + 1) for i in range(obs.n))
    rows = [["unit", "pair", "z_pattern", "y_obs"]]
    for i in range(obs.n):
        pair = "" if obs.pair is None else obs._label(int(obs.pair[i]))
        rows.append([ids[i], pair, pattern_label(z[obs.treatment[i]]), _num(obs.y[i])])
    return _csv(rows)


# -- reports -------------------------------------------------------------------------


def _matrix(mat) -> list[list[float]]:
    return np.asarray(mat, dtype=np.float64).tolist()


def _check_dict(c: IdentityCheck) -> dict:
    return {
        "name": c.name,
        "max_abs_error": c.max_abs_error,
        "rel_error": c.rel_error,
        "tolerance": c.tolerance,
        "passed": c.passed,
        "skipped": c.skipped,
        "note": c.note,
    }


def design_dict(m: ModelMatrix) -> dict:
    return {
        "k": m.k,
        "effects": m.effect_names,
        "treatments": [pattern_label(z) for z in m.treatment_combinations()],
        "matrix": m.entries.astype(int).tolist(),
    }


def estimate_dict(rep: EstimateReport) -> dict:
    return {
        "design": rep.design,
        "k": rep.k,
        "n": rep.n,
        "r": rep.r,
        "effects": list(rep.effect_names),
        "point": rep.point.tolist(),
        "covariance_estimate": _matrix(rep.covariance_estimate),
    }


def verification_dict(reports: list[VerificationReport], extra: list[IdentityCheck] = ()) -> dict:
    return {
        "passed": all(r.passed for r in reports) and all(c.passed for c in extra),
        "reports": [
            {
                "design": r.design,
                "assignment_count": r.assignment_count,
                "expected_count": r.expected_count,
                "passed": r.passed,
                "checks": [_check_dict(c) for c in r.checks],
            }
            for r in reports
        ],
        "fixture_checks": [_check_dict(c) for c in extra],
    }


def comparison_dict(rep: ComparisonReport) -> dict:
    return {
        "effects": list(rep.effect_names),
        "cov_cr": _matrix(rep.cov_cr),
        "cov_mp": _matrix(rep.cov_mp),
        "difference_cr_minus_mp": _matrix(rep.difference),
        "variance_ratio_mp_over_cr": list(rep.ratios),
        "verdict": list(rep.verdicts),
    }


def to_json(d: dict) -> str:
    # allow_nan=False: a NaN reaching a report is a bug, not output.
    return json.dumps(d, indent=2, allow_nan=False)


def effect_table_csv(names, vector, matrix, vector_name: str) -> str:
    """One row per effect: label, vector entry, then the matrix row."""
    rows = [["effect", vector_name] + list(names)]
    for a, name in enumerate(names):
        rows.append([name, _num(vector[a])] + [_num(v) for v in matrix[a]])
    return _csv(rows)


def read_effect_table_csv(text: str) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Inverse of :func:`effect_table_csv`."""
    rows = list(csv.reader(io.StringIO(text)))
    names = rows[0][2:]
    body = [r for r in rows[1:] if r]
    if [r[0] for r in body] != names:
        raise PairfactError("effect table rows and columns disagree")
    vec = np.array([float(r[1]) for r in body])
    mat = np.array([[float(v) for v in r[2:]] for r in body])
    return names, vec, mat


def emit_report(report, fmt: str = "json") -> str:
    """Render a report object as ``json`` or ``csv`` text."""
    if fmt not in ("json", "csv"):
        raise PairfactError(f"unknown format {fmt!r}")
    if isinstance(report, ModelMatrix):
        d = design_dict(report)
        if fmt == "json":
            return to_json(d)
        rows = [["row", "z_pattern"] + d["effects"]]
        for j, (z, row) in enumerate(zip(d["treatments"], d["matrix"]), start=1):
            rows.append([j, z] + row)
        return _csv(rows)
    if isinstance(report, EstimateReport):
        if fmt == "json":
            return to_json(estimate_dict(report))
        return effect_table_csv(report.effect_names, report.point, report.covariance_estimate, "estimate")
    if isinstance(report, ComparisonReport):
        if fmt == "json":
            return to_json(comparison_dict(report))
        rows = [["effect", "var_cr", "var_mp", "ratio_mp_over_cr", "verdict"]]
        for a, name in enumerate(report.effect_names):
            ratio = report.ratios[a]
            rows.append([
                name,
                _num(report.cov_cr[a, a]),
                _num(report.cov_mp[a, a]),
                ratio if isinstance(ratio, str) else _num(ratio),
                report.verdicts[a],
            ])
        return _csv(rows)
    if isinstance(report, dict):
        return to_json(report)
    raise TypeError(f"cannot emit {type(report).__name__}")


def verification_csv(reports: list[VerificationReport], extra: list[IdentityCheck] = ()) -> str:
    rows = [["design", "check", "max_abs_error", "rel_error", "tolerance", "status"]]
    for r in reports:
        rows.append([r.design, "assignment count", r.assignment_count, "", "", "pass" if r.assignment_count == r.expected_count else "FAIL"])
        for c in r.checks:
            rows.append([r.design, c.name, _num(c.max_abs_error), _num(c.rel_error), _num(c.tolerance), _status(c)])
    for c in extra:
        rows.append(["fixture", c.name, _num(c.max_abs_error), _num(c.rel_error), _num(c.tolerance), _status(c)])
    return _csv(rows)


def _status(c: IdentityCheck) -> str:
    if c.skipped:
        return f"skipped ({c.note})"
    return "pass" if c.passed else "FAIL"


def load_expected(path) -> dict[str, np.ndarray]:
    """Read a JSON fixture of expected closed-form values."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise PairfactError(f"{path}: cannot read expected-value fixture: {exc}")
    known = {"tau", "cov_cr", "cov_mp", "bias_cr", "bias_mp"}
    unknown = set(raw) - known
    if unknown:
        raise PairfactError(f"{path}: unknown fixture keys {sorted(unknown)}")
    return {key: np.array(val, dtype=np.float64) for key, val in raw.items()}
