"""Design files: a CSV of runs plus a JSON sidecar.

The CSV has header ``f1,...,fm`` and one run per line with entries -1, 0 or
1. The sidecar (``schema: 1``) records factor kinds, which runs form the
half design and the foldover subset, the restricted-row structure, and free
form provenance.
"""

import csv
import json
from pathlib import Path

import numpy as np

from .design import FACTOR_KINDS, AugmentedDesign, FactorSpec, FoldoverDesign, HalfDesign, make_factors
from .exceptions import DesignError

SCHEMA = 1


def _paths(path):
    path = Path(path)
    if path.suffix == ".json":
        return path.with_suffix(".csv"), path
    if path.suffix == ".csv":
        return path, path.with_suffix(".json")
    return path.with_suffix(".csv"), path.with_suffix(".json")


def _half_rows(design):
    """Run indices whose rows, in order, equal the half design."""
    if design.half is None:
        return None
    H = design.half.entries
    runs = design.runs
    fold = list(design.foldover_rows)
    used = set()
    picked = []
    for row in H:
        hit = next((i for i in fold if i not in used and np.array_equal(runs[i], row)), None)
        if hit is None:
            return None
        used.add(hit)
        picked.append(hit)
    return picked


def design_to_dict(design, runs_file=None, provenance=None):
    half_rows = _half_rows(design)
    meta = {
        "schema": SCHEMA,
        "m": design.m,
        "n": design.n,
        "factors": [{"index": f.index, "kind": f.kind} for f in design.factors],
        "foldover_rows": list(design.foldover_rows),
        "half_rows": half_rows,
        "n0": design.half.n0 if design.half is not None else None,
        "forced_replicate_rows": list(design.half.forced_replicate_rows) if design.half is not None else [],
        "zero_fixed": sorted([list(p) for p in design.half.zero_fixed]) if design.half is not None else [],
        "n_augmented": design.n_augmented,
        "provenance": dict(design.metadata, **(provenance or {})),
    }
    if runs_file is not None:
        meta["runs_file"] = runs_file
    return meta


def write_runs_csv(path, runs, extra=None, extra_name="y"):
    runs = np.asarray(runs)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = [f"f{j}" for j in range(1, runs.shape[1] + 1)]
        if extra is not None:
            header.append(extra_name)
        w.writerow(header)
        for i, row in enumerate(runs):
            vals = [int(x) for x in row]
            if extra is not None:
                vals.append(repr(float(extra[i])))
            w.writerow(vals)


def write_design(path, design, provenance=None):
    """Write ``<stem>.csv`` and ``<stem>.json``; returns both paths."""
    if isinstance(design, HalfDesign):
        design = FoldoverDesign(design)
    if isinstance(design, FoldoverDesign):
        design = AugmentedDesign.from_foldover(design)
    csv_path, json_path = _paths(path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    write_runs_csv(csv_path, design.runs)
    meta = design_to_dict(design, csv_path.name, provenance)
    json_path.write_text(json.dumps(meta, indent=2) + "\n")
    return csv_path, json_path


def read_runs_csv(path, m=None, response=None):
    """Parse a run CSV. Returns ``(runs, y)``; ``y`` is None unless requested.

    ``response`` names a trailing response column to split off.
    """
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise DesignError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DesignError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    y_col = None
    if response is not None:
        if response not in header:
            raise DesignError(f"{path}: missing response column {response!r}")
        y_col = header.index(response)
    factor_cols = [h for h in header if h != response]
    if m is None:
        m = len(factor_cols)
    col_index = {}
    for j in range(1, m + 1):
        name = f"f{j}"
        if name not in header:
            raise DesignError(f"{path}: missing column {name!r}")
        col_index[j] = header.index(name)
    extra = [h for h in factor_cols if h not in {f"f{j}" for j in range(1, m + 1)}]
    if extra:
        raise DesignError(f"{path}: unexpected columns {extra}")
    runs = np.zeros((len(body), m), dtype=np.int64)
    y = np.zeros(len(body)) if y_col is not None else None
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DesignError(f"{path}: line {i} has {len(row)} fields, expected {len(header)}")
        for j, c in col_index.items():
            text = row[c].strip()
            try:
                val = int(text)
            except ValueError:
                raise DesignError(f"{path}: line {i}, column f{j}: {text!r} is not an integer") from None
            if val not in (-1, 0, 1):
                raise DesignError(f"{path}: line {i}, column f{j}: level {val} not in -1/0/1")
            runs[i - 2, j - 1] = val
        if y_col is not None:
            try:
                y[i - 2] = float(row[y_col])
            except ValueError:
                raise DesignError(f"{path}: line {i}: response {row[y_col]!r} is not a number") from None
    return runs, y


def design_from_dict(meta, runs, where="design"):
    if meta.get("schema") != SCHEMA:
        raise DesignError(f"{where}: unsupported schema {meta.get('schema')!r}; expected {SCHEMA}")
    m = int(meta["m"])
    if runs.shape[1] != m:
        raise DesignError(f"{where}: runs have {runs.shape[1]} columns, metadata says m = {m}")
    if "n" in meta and int(meta["n"]) != runs.shape[0]:
        raise DesignError(f"{where}: runs have {runs.shape[0]} rows, metadata says n = {meta['n']}")
    kinds = meta.get("factors")
    if kinds:
        for f in kinds:
            if f["kind"] not in FACTOR_KINDS:
                raise DesignError(f"{where}: factor {f['index']}: unknown kind {f['kind']!r}")
        factors = tuple(FactorSpec(int(f["index"]), f["kind"]) for f in kinds)
    else:
        factors = make_factors(m)
    fold = tuple(meta.get("foldover_rows") or ())
    half_rows = meta.get("half_rows")
    half = None
    if half_rows:
        half = HalfDesign(
            runs[list(half_rows)],
            factors,
            tuple(meta.get("forced_replicate_rows") or ()),
            frozenset(tuple(p) for p in meta.get("zero_fixed") or ()),
        )
    design = AugmentedDesign(runs, factors, fold, half, dict(meta.get("provenance") or {}))
    if half is not None:
        F = runs[list(fold)]
        expect = np.vstack([half.entries, -half.entries])
        a = sorted(map(tuple, F.tolist()))
        b = sorted(map(tuple, expect.tolist()))
        if a != b:
            raise DesignError(f"{where}: foldover rows are not the foldover of the half design")
    return design


def read_design(path):
    """Read a design from its CSV or JSON path.

    A CSV with no sidecar is accepted; the largest sign-paired subset of
    its runs is taken as the foldover part.
    """
    csv_path, json_path = _paths(path)
    if json_path.exists():
        try:
            meta = json.loads(json_path.read_text())
        except json.JSONDecodeError as exc:
            raise DesignError(f"{json_path}: invalid JSON ({exc})") from exc
        runs_file = meta.get("runs_file")
        if runs_file:
            csv_path = json_path.parent / runs_file
        runs, _ = read_runs_csv(csv_path, int(meta["m"]))
        return design_from_dict(meta, runs, str(json_path))
    if not csv_path.exists():
        raise DesignError(f"no design file at {path}")
    runs, _ = read_runs_csv(csv_path)
    return AugmentedDesign.from_runs(runs)


def read_data(path, design=None):
    """Runs and responses from a CSV whose last column is the response."""
    path = Path(path)
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), None)
    if not header:
        raise DesignError(f"{path}: empty file")
    response = header[-1].strip()
    m = design.m if design is not None else len(header) - 1
    runs, y = read_runs_csv(path, m, response=response)
    if design is not None and not np.array_equal(runs, design.runs):
        raise DesignError(f"{path}: runs differ from the design file")
    return runs, y
