"""
Derived report artifacts: relative change against the unpruned level,
algorithm rank matrices, retention and characteristics tables, and
per-algorithm metric grids with Min/Max/Average summary rows.

CSV files carry full float precision (``repr``) so they parse back to the
exact in-memory values; ``tables.md`` holds the rounded display version.
Undefined cells are written as empty strings.
"""

from __future__ import annotations

import csv
import json
import os
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .characteristics import TABLE_COLUMNS, CharacteristicsReport, table_row
from .experiment import EvalRecord, GridResult

SUMMARY_ROWS = ("Min", "Max", "Average")


@dataclass(frozen=True)
class RelativeChangeCell:
    algorithm: str
    core_t: int
    pct_change: float | None
    value: float | None = None
    baseline: float | None = None

    @property
    def undefined(self) -> bool:
        return self.pct_change is None


@dataclass(frozen=True)
class RankMatrix:
    algorithms: list[str]
    columns: list[tuple[str, int, str]]
    ranks: np.ndarray

    def __post_init__(self):
        n = len(self.algorithms)
        expect = np.arange(1, n + 1)
        for c in range(self.ranks.shape[1] if self.ranks.ndim == 2 else 0):
            if not np.array_equal(np.sort(self.ranks[:, c]), expect):
                raise AssertionError(f"rank column {self.columns[c]} is not a permutation of 1..{n}")


@dataclass(frozen=True)
class MetricGrid:
    "One algorithm's metric values: rows are core levels, columns datasets."

    algorithm: str
    phase: str
    metric: str
    cores: list[int]
    datasets: list[str]
    values: list[list[float | None]]

    def summary(self) -> dict[str, list[float | None]]:
        out: dict[str, list[float | None]] = {r: [] for r in SUMMARY_ROWS}
        for j in range(len(self.datasets)):
            col = [row[j] for row in self.values if row[j] is not None]
            out["Min"].append(min(col) if col else None)
            out["Max"].append(max(col) if col else None)
            out["Average"].append(float(np.mean(col)) if col else None)
        return out


def _select(records: Iterable[EvalRecord], metric: str, k: int, phase: str | None = None):
    return [r for r in records if r.metric == metric and r.k == k and (phase is None or r.phase == phase)]


def relative_change(
    records: Iterable[EvalRecord],
    metric: str = "ndcg",
    k: int = 10,
    phase: str = "phase1",
    baseline_core: int = 0,
) -> list[RelativeChangeCell]:
    """
    Percent change of each algorithm's metric at every core level against
    the baseline level.

    Values are first averaged across datasets per (algorithm, core), then
    compared with the averaged baseline.  A zero or missing baseline leaves
    the cell undefined.
    """
    sums: dict[tuple[str, int], list[float]] = {}
    for r in _select(records, metric, k, phase):
        sums.setdefault((r.algorithm, r.core_t), []).append(r.value)
    means = {key: float(np.mean(v)) for key, v in sums.items()}
    algorithms = sorted({a for a, _ in means})
    cores = sorted({t for _, t in means})
    cells = []
    for a in algorithms:
        base = means.get((a, baseline_core))
        for t in cores:
            v = means.get((a, t))
            if v is None or base is None or base == 0:
                pct = None
            else:
                pct = 100.0 * (v - base) / base
            cells.append(RelativeChangeCell(a, t, pct, v, base))
    return cells


def rank_matrix(
    records: Iterable[EvalRecord],
    metric: str = "ndcg",
    k: int = 10,
    algorithms: Sequence[str] | None = None,
) -> RankMatrix:
    """
    Rank algorithms within every (dataset, core, phase) column: 1 is the
    highest value, ties go to the alphabetically earlier name, and missing
    cells take the worst ranks in name order.
    """
    recs = _select(records, metric, k)
    names = sorted(set(algorithms) if algorithms is not None else {r.algorithm for r in recs})
    values: dict[tuple[str, int, str], dict[str, float]] = {}
    for r in recs:
        values.setdefault((r.dataset, r.core_t, r.phase), {})[r.algorithm] = r.value
    datasets = list(dict.fromkeys(r.dataset for r in recs))
    columns = sorted(values, key=lambda c: (datasets.index(c[0]), c[2], c[1]))
    ranks = np.zeros((len(names), len(columns)), dtype=np.int64)
    for j, col in enumerate(columns):
        present = values[col]
        order = sorted(
            range(len(names)),
            key=lambda i: (names[i] not in present, -present.get(names[i], 0.0), names[i]),
        )
        for rank, i in enumerate(order, start=1):
            ranks[i, j] = rank
    return RankMatrix(names, columns, ranks)


def metric_grids(records: Iterable[EvalRecord], phase: str, metric: str = "ndcg", k: int = 10) -> list[MetricGrid]:
    recs = _select(records, metric, k, phase)
    datasets = list(dict.fromkeys(r.dataset for r in recs))
    cores = sorted({r.core_t for r in recs})
    grids = []
    for a in sorted({r.algorithm for r in recs}):
        table: list[list[float | None]] = [[None] * len(datasets) for _ in cores]
        for r in recs:
            if r.algorithm == a:
                table[cores.index(r.core_t)][datasets.index(r.dataset)] = r.value
        grids.append(MetricGrid(a, phase, f"{metric}@{k}", cores, datasets, table))
    return grids


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(s: str) -> float | None:
    return None if s == "" else float(s)


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    return rows[0], rows[1:]


def write_grid_csv(grid: MetricGrid, path: Path):
    summary = grid.summary()
    rows = [[t, *vals] for t, vals in zip(grid.cores, grid.values)]
    rows += [[name, *summary[name]] for name in SUMMARY_ROWS]
    _write_csv(path, ["core", *grid.datasets], rows)


def read_grid_csv(path, algorithm: str = "", phase: str = "", metric: str = "") -> MetricGrid:
    "Parse a grid CSV back; summary rows are dropped (they are derived)."
    header, rows = _read_csv(path)
    cores, values = [], []
    for row in rows:
        if row[0] in SUMMARY_ROWS:
            continue
        cores.append(int(row[0]))
        values.append([_parse(v) for v in row[1:]])
    return MetricGrid(algorithm, phase, metric, cores, header[1:], values)


def read_grid_summary(path) -> dict[str, list[float | None]]:
    _, rows = _read_csv(path)
    return {row[0]: [_parse(v) for v in row[1:]] for row in rows if row[0] in SUMMARY_ROWS}


def write_rank_matrix_csv(rm: RankMatrix, path: Path):
    header = ["algorithm", *(f"{d}|{t}|{p}" for d, t, p in rm.columns)]
    _write_csv(path, header, [[a, *rm.ranks[i].tolist()] for i, a in enumerate(rm.algorithms)])


def read_rank_matrix_csv(path) -> RankMatrix:
    header, rows = _read_csv(path)
    cols = []
    for h in header[1:]:
        d, t, p = h.rsplit("|", 2)
        cols.append((d, int(t), p))
    ranks = np.array([[int(v) for v in row[1:]] for row in rows], dtype=np.int64).reshape(len(rows), len(cols))
    return RankMatrix([row[0] for row in rows], cols, ranks)


def write_relative_change_csv(cells: Sequence[RelativeChangeCell], path: Path):
    _write_csv(
        path,
        ["algorithm", "core", "pct_change", "mean_value", "mean_baseline"],
        [[c.algorithm, c.core_t, c.pct_change, c.value, c.baseline] for c in cells],
    )


def read_relative_change_csv(path) -> list[RelativeChangeCell]:
    _, rows = _read_csv(path)
    return [RelativeChangeCell(r[0], int(r[1]), _parse(r[2]), _parse(r[3]), _parse(r[4])) for r in rows]


def write_characteristics_csv(reports: dict[str, CharacteristicsReport], path: Path):
    _write_csv(
        path,
        ["dataset", *TABLE_COLUMNS],
        [[name, *(getattr(rep, c) for c in TABLE_COLUMNS)] for name, rep in reports.items()],
    )


def read_characteristics_csv(path) -> dict[str, dict[str, float | int]]:
    header, rows = _read_csv(path)
    out = {}
    for row in rows:
        vals = {}
        for col, v in zip(header[1:], row[1:]):
            vals[col] = int(v) if col in ("n_interactions", "n_users", "n_items", "space_size") else _parse(v)
        out[row[0]] = vals
    return out


def _markdown_table(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(str(v) for v in row) + " |" for row in rows]
    return "\n".join(lines)


def _f4(v) -> str:
    return "" if v is None else f"{v:.4f}"


def emit_tables(result: GridResult, out_dir: str | os.PathLike) -> list[Path]:
    """
    Write every report artifact under ``out_dir`` and return the paths.

    Phase-2 artifacts are omitted (with a note in ``report_meta.json``) when
    there are no phase-2 records.
    """
    if not result.records and not result.characteristics:
        raise ValueError("nothing to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    notes: list[str] = []
    md: list[str] = []

    datasets = list(dict.fromkeys(d for d, _ in result.characteristics))
    cores = sorted({t for _, t in result.characteristics})
    for t in cores:
        reps = {d: result.characteristics[(d, t)] for d in datasets if (d, t) in result.characteristics}
        p = out / f"characteristics_core-{t}.csv"
        write_characteristics_csv(reps, p)
        written.append(p)
        md.append(f"## {t}-core characteristics\n")
        md.append(_markdown_table(["dataset", *TABLE_COLUMNS], [[d, *table_row(r).values()] for d, r in reps.items()]))
        md.append("")

    for d in datasets:
        rows = []
        for t in cores:
            ret = result.retention.get((d, t))
            if ret is not None:
                rows.append([t, ret.user_retention_pct, ret.item_retention_pct, ret.interaction_retention_pct])
        p = out / f"retention_{d}.csv"
        _write_csv(p, ["core", "user_retention_pct", "item_retention_pct", "interaction_retention_pct"], rows)
        written.append(p)

    metric_keys = list(dict.fromkeys((r.metric, r.k) for r in result.records))
    phases = [ph for ph in ("phase1", "phase2") if any(r.phase == ph for r in result.records)]
    if result.records and "phase2" not in phases:
        notes.append("no phase-2 records; phase-2 artifacts omitted")

    for metric, k in metric_keys:
        label = f"{metric}@{k}"
        cells = relative_change(result.records, metric, k)
        p = out / f"relative_change_phase1_{label}.csv"
        write_relative_change_csv(cells, p)
        written.append(p)
        for phase in phases:
            recs = [r for r in result.records if r.phase == phase]
            rm = rank_matrix(recs, metric, k)
            p = out / f"rank_matrix_{phase}_{label}.csv"
            write_rank_matrix_csv(rm, p)
            written.append(p)
            for grid in metric_grids(result.records, phase, metric, k):
                p = out / f"grid_{phase}_{label}_{grid.algorithm}.csv"
                write_grid_csv(grid, p)
                written.append(p)
                summary = grid.summary()
                md.append(f"## {phase} {label}: {grid.algorithm}\n")
                rows = [[t, *map(_f4, vals)] for t, vals in zip(grid.cores, grid.values)]
                rows += [[name, *map(_f4, summary[name])] for name in SUMMARY_ROWS]
                md.append(_markdown_table(["core", *grid.datasets], rows))
                md.append("")

    p = out / "tables.md"
    p.write_text("\n".join(md) + "\n", encoding="utf-8")
    written.append(p)
    meta = {
        "config_hash": result.config_hash,
        "relative_change_aggregation": "mean across datasets per (algorithm, core), then percent change vs mean baseline",
        "notes": notes,
        "issues": [i.to_dict() for i in result.issues],
    }
    p = out / "report_meta.json"
    with open(p, "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    written.append(p)
    return written
