"""On-disk artifacts: atomic writes, CSV plot data, run state and debug dumps."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from typing import Iterable, Sequence

import numpy as np

from .diagonalizer import (
    RunResult,
    SeriesOptions,
    SeriesState,
    StepData,
    StepRecord,
    weighted_norm_table,
)
from .geometry import INITIAL, LatticeSpec, Rectangle, step_sequence
from .models import InitialData, bond
from .operators import LocalOperator, SiteBasis
from .table import PotentialTable

STEP_SCHEMA_VERSION = 1
MANIFEST = "manifest.json"
STEPS = "steps.jsonl"
VERIFICATION = "verification.json"
STATE = "state.npz"
GAP_CSV = "gap_vs_step.csv"
NORM_CSV = "weighted_norm_vs_circumference.csv"
SCAN_CSV = "t_scan_frontier.csv"

GAP_COLUMNS = ["step_index", "k", "q", "E", "gap", "max_weighted_norm", "terms_used", "checks_passed", "checks_total"]
NORM_COLUMNS = ["step_index", "circumference", "keys", "max_weighted_norm"]
SCAN_COLUMNS = ["t", "passed", "failed_checks", "first_failed_check", "error"]


def atomic_write(path: str, data: str | bytes) -> None:
    """Write to a temporary file in the same directory, then rename over ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data.encode() if isinstance(data, str) else data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(path: str, obj) -> None:
    atomic_write(path, dumps(obj))


def write_csv(path: str, columns: Sequence[str], rows: Iterable[dict]) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    atomic_write(path, buf.getvalue())


def step_lines(records: Sequence[StepRecord]) -> str:
    return "".join(
        json.dumps({"schema_version": STEP_SCHEMA_VERSION, **r.to_json()}, sort_keys=True) + "\n"
        for r in records
    )


def write_steps(directory: str, records: Sequence[StepRecord]) -> None:
    atomic_write(os.path.join(directory, STEPS), step_lines(records))


def read_steps(directory: str) -> list[dict]:
    with open(os.path.join(directory, STEPS)) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def gap_rows(records: Sequence[StepRecord], step_checks: dict[int, tuple[int, int]]) -> list[dict]:
    rows = []
    for r in records:
        passed, total = step_checks.get(r.index, (0, 0))
        rows.append(
            {
                "step_index": r.index,
                "k": " ".join(map(str, r.step.k)),
                "q": " ".join(map(str, r.step.q)),
                "E": repr(float(r.E)),
                "gap": repr(float(r.gap)),
                "max_weighted_norm": repr(max(r.weighted_norm_table.values(), default=0.0)),
                "terms_used": r.series["terms_used"],
                "checks_passed": passed,
                "checks_total": total,
            }
        )
    return rows


def norm_rows(records: Sequence[StepRecord]) -> list[dict]:
    rows = []
    for r in records:
        by_size: dict[int, list[float]] = {}
        for rect, v in r.weighted_norm_table.items():
            by_size.setdefault(rect.size, []).append(v)
        for size in sorted(by_size):
            rows.append(
                {
                    "step_index": r.index,
                    "circumference": size,
                    "keys": len(by_size[size]),
                    "max_weighted_norm": repr(max(by_size[size])),
                }
            )
    return rows


# run state, enough to rebuild a RunResult without recomputing


def _rect_tag(r: Rectangle) -> str:
    return "_".join(map(str, r.k)) + "@" + "_".join(map(str, r.q))


def _rect_from_tag(tag: str) -> Rectangle:
    k, q = tag.split("@")
    return Rectangle(tuple(int(x) for x in k.split("_")), tuple(int(x) for x in q.split("_")))


def save_state(path: str, result: RunResult) -> None:
    arrays: dict[str, np.ndarray] = {}
    basis = result.data.basis
    arrays["basis/energies"] = basis.energies
    if basis.position is not None:
        arrays["basis/position"] = basis.position
    for j, op in result.data.pair_potentials.items():
        arrays[f"pair/{j}"] = op.matrix
    for level, table in enumerate(result.tables):
        for rect, m in table.entries.items():
            arrays[f"table/{level}/{_rect_tag(rect)}"] = m
    meta_steps = []
    for i, step in enumerate(result.steps):
        sd = result.step_data[step]
        arrays[f"step/{i}/G"] = sd.G
        arrays[f"step/{i}/V_before"] = sd.V_before
        arrays[f"step/{i}/S_total"] = sd.series.S_total
        for j, (v, s) in enumerate(zip(sd.series.V_terms, sd.series.S_terms)):
            arrays[f"step/{i}/V/{j}"] = v
            arrays[f"step/{i}/S/{j}"] = s
        rec = result.records[i]
        meta_steps.append(
            {
                "step": _rect_tag(step),
                "E": sd.E,
                "gap": sd.gap,
                "series": rec.series,
                "terms": sd.series.terms_used,
                "converged": sd.series.converged,
                "tail_estimate": sd.series.tail_estimate,
                "term_norms": sd.series.term_norms,
                "wall_time": rec.wall_time,
            }
        )
    meta = {
        "d": result.lattice.d,
        "N": result.lattice.N,
        "t": result.t,
        "levels": len(result.tables),
        "report": result.data.normalization_report,
        "steps": meta_steps,
        "options": {k: getattr(result.options, k) for k in result.options.__dataclass_fields__},
    }
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez_compressed(buf, **arrays)
    atomic_write(path, buf.getvalue())


def load_state(path: str) -> RunResult:
    with np.load(path) as z:
        files = {k: z[k] for k in z.files}
    meta = json.loads(files.pop("meta").tobytes().decode())
    lattice = LatticeSpec(meta["d"], meta["N"])
    basis = SiteBasis(files["basis/energies"], files.get("basis/position"))
    pairs = {}
    for key, m in files.items():
        if key.startswith("pair/"):
            j = int(key.split("/")[1])
            pairs[j] = LocalOperator(bond(j, lattice.d), m, hermitian=True)
    data = InitialData(basis, pairs, meta["report"])
    options = SeriesOptions(**meta["options"])
    seq = step_sequence(lattice)
    per_level: list[dict[Rectangle, np.ndarray]] = [{} for _ in range(meta["levels"])]
    for key, m in files.items():
        if key.startswith("table/"):
            _, level, tag = key.split("/")
            per_level[int(level)][_rect_from_tag(tag)] = m
    tables = []
    for level, entries in enumerate(per_level):
        step = INITIAL if level == 0 else seq[level - 1]
        tables.append(PotentialTable(lattice, basis, meta["t"], step, entries))
    result = RunResult(lattice, data, meta["t"], options, tables=tables)
    for i, sm in enumerate(meta["steps"]):
        step = _rect_from_tag(sm["step"])
        n_terms = sm["terms"]
        series = SeriesState(
            V_terms=[files[f"step/{i}/V/{j}"] for j in range(n_terms)],
            S_terms=[files[f"step/{i}/S/{j}"] for j in range(n_terms)],
            S_total=files[f"step/{i}/S_total"],
            converged=sm["converged"],
            tail_estimate=sm["tail_estimate"],
            term_norms=sm["term_norms"],
        )
        result.step_data[step] = StepData(files[f"step/{i}/G"], sm["E"], sm["gap"], files[f"step/{i}/V_before"], series)
        result.records.append(
            StepRecord(step, i, sm["E"], sm["gap"], sm["series"], weighted_norm_table(tables[i + 1]), sm["wall_time"])
        )
    return result


# debug dump: a one-line JSON header, then column-major (re, im) float64 pairs


def dump_matrix(path: str, m: np.ndarray, support: Rectangle, site_dim: int) -> None:
    header = {"dims": list(m.shape), "support": support.to_json(), "site_dim": site_dim, "layout": "column-major complex128 pairs"}
    body = np.asfortranarray(m.astype(np.complex128)).ravel(order="F").view(np.float64).tobytes()
    atomic_write(path, (json.dumps(header) + "\n").encode() + body)


def read_matrix(path: str) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        body = fh.read()
    flat = np.frombuffer(body, dtype=np.float64).view(np.complex128)
    return header, flat.reshape(header["dims"], order="F")


def dump_table(directory: str, table: PotentialTable, level: int) -> None:
    sub = os.path.join(directory, "debug", f"level_{level:03d}")
    for rect, m in table.entries.items():
        dump_matrix(os.path.join(sub, _rect_tag(rect) + ".bin"), m, rect, table.basis.site_dim)
