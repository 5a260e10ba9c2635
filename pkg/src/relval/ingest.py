"""Score ingestion: long-format records, validation, and pivoting.

Input data is a long-format table with one row per observation:
``candidate_id,item_id,metric_id,run_id,rater_id,score``. The ``run_id``
and ``rater_id`` fields are optional and model replicate dimensions
(repeated generation passes, human raters). Records pivot to a rectangular
candidates x items :class:`ScoreMatrix`, the input type of every analysis
in this package.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataError

CSV_COLUMNS = ("candidate_id", "item_id", "metric_id", "run_id", "rater_id", "score")
REQUIRED_COLUMNS = ("candidate_id", "item_id", "metric_id", "score")

AGGREGATIONS = ("mean-over-runs", "mean-over-raters", "single-run", "single-rater")
MISSING_POLICIES = ("error", "drop-candidate", "drop-item")
SPLIT_SCHEMES = ("odd-even", "first-second", "random")

# Decimal point '.', optional sign/exponent; no thousands separators,
# no underscores, no inf/nan (Python's float() would accept all three).
_SCORE_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


@dataclass(frozen=True)
class ScoreRecord:
    """One observed score of a candidate on an item under a metric."""

    candidate_id: str
    item_id: str
    metric_id: str
    score: float
    run_id: str | None = None
    rater_id: str | None = None

    def key(self) -> tuple:
        return (self.candidate_id, self.item_id, self.metric_id,
                self.run_id, self.rater_id)


@dataclass
class ScoreMatrix:
    """Rectangular candidates x items score matrix.

    Rows are candidates (length N), columns are items (length J); every
    cell is filled with a finite value. Row sums are the total scores used
    by the reliability and validity estimators.
    """

    candidates: list[str]
    items: list[str]
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise DataError("score matrix values must be 2-dimensional")
        n, j = self.values.shape
        if n != len(self.candidates) or j != len(self.items):
            raise DataError(
                f"matrix shape {self.values.shape} does not match "
                f"{len(self.candidates)} candidates x {len(self.items)} items"
            )
        if not np.isfinite(self.values).all():
            raise DataError("score matrix contains non-finite values")
        if n < 2 or j < 1:
            raise DataError(
                f"score matrix needs at least 2 candidates and 1 item, "
                f"got {n} x {j}"
            )
        if len(set(self.candidates)) != n:
            raise DataError("candidate ids must be unique")
        if len(set(self.items)) != j:
            raise DataError("item ids must be unique")

    @property
    def n_candidates(self) -> int:
        return self.values.shape[0]

    @property
    def n_items(self) -> int:
        return self.values.shape[1]

    def total_scores(self) -> np.ndarray:
        """Per-candidate total score: the row sum over items."""
        return self.values.sum(axis=1)

    def take_items(self, indices, label: str | None = None) -> "ScoreMatrix":
        """Submatrix keeping the given item columns (in the given order)."""
        indices = list(indices)
        return ScoreMatrix(
            candidates=list(self.candidates),
            items=[self.items[j] for j in indices],
            values=self.values[:, indices].copy(),
            label=self.label if label is None else label,
        )

    def take_candidates(self, indices, label: str | None = None) -> "ScoreMatrix":
        """Submatrix keeping the given candidate rows; duplicates allowed
        (used by the bootstrap resampler) and suffixed #1, #2, ... to keep
        candidate ids unique."""
        indices = list(indices)
        seen: dict[str, int] = {}
        names = []
        for i in indices:
            base = self.candidates[i]
            count = seen.get(base, 0)
            seen[base] = count + 1
            names.append(base if count == 0 else f"{base}#{count}")
        return ScoreMatrix(
            candidates=names,
            items=list(self.items),
            values=self.values[indices, :].copy(),
            label=self.label if label is None else label,
        )

    def sorted_by_candidate(self) -> "ScoreMatrix":
        order = sorted(range(self.n_candidates), key=lambda i: self.candidates[i])
        if order == list(range(self.n_candidates)):
            return self
        return self.take_candidates(order)

    def to_records(self, metric: str | None = None, run_id: str | None = None,
                   rater_id: str | None = None) -> list[ScoreRecord]:
        """Expand back to long-format records (used for CSV export)."""
        metric = metric or self.label or "score"
        return [
            ScoreRecord(candidate_id=c, item_id=it, metric_id=metric,
                        score=float(self.values[i, j]),
                        run_id=run_id, rater_id=rater_id)
            for i, c in enumerate(self.candidates)
            for j, it in enumerate(self.items)
        ]


def _parse_score(text: str, where: str) -> float:
    text = text.strip()
    if not _SCORE_RE.match(text):
        raise DataError(f"{where}: non-numeric score {text!r}")
    value = float(text)
    if not math.isfinite(value):
        raise DataError(f"{where}: non-finite score {text!r}")
    return value


def _check_duplicates(records: list[ScoreRecord], rows: list[int]) -> None:
    seen: dict[tuple, int] = {}
    for record, row in zip(records, rows):
        key = record.key()
        if key in seen:
            raise DataError(
                f"row {row}: duplicate key {key} (first seen at row {seen[key]})"
            )
        seen[key] = row


def _decode(source) -> str:
    if isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    elif hasattr(source, "read"):
        data = source.read()
        if isinstance(data, str):
            return data
    else:
        raise DataError("source must be bytes or a readable binary stream")
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DataError(f"input is not valid UTF-8: {exc}") from exc


def _parse_csv(text: str) -> list[ScoreRecord]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("empty input: missing CSV header") from None
    header = [h.strip() for h in header]
    for column in REQUIRED_COLUMNS:
        if column not in header:
            raise DataError(f"missing required column {column!r}")
    unknown = [h for h in header if h not in CSV_COLUMNS]
    if unknown:
        raise DataError(f"unknown column(s) {unknown} (schema: {','.join(CSV_COLUMNS)})")
    if len(set(header)) != len(header):
        raise DataError("repeated column in CSV header")
    col = {name: header.index(name) for name in header}

    records: list[ScoreRecord] = []
    rows: list[int] = []
    for row_num, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataError(
                f"row {row_num}: expected {len(header)} fields, got {len(row)}"
            )

        def cell(name, row=row, col=col):
            return row[col[name]].strip() if name in col else ""

        for required in ("candidate_id", "item_id", "metric_id"):
            if not cell(required):
                raise DataError(f"row {row_num}: empty {required}")
        score = _parse_score(cell("score"), f"row {row_num}")
        records.append(ScoreRecord(
            candidate_id=cell("candidate_id"),
            item_id=cell("item_id"),
            metric_id=cell("metric_id"),
            score=score,
            run_id=cell("run_id") or None,
            rater_id=cell("rater_id") or None,
        ))
        rows.append(row_num)
    _check_duplicates(records, rows)
    return records


def _parse_json(text: str) -> list[ScoreRecord]:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid JSON: {exc}") from exc
    if not isinstance(payload, list):
        raise DataError("JSON input must be an array of record objects")
    records: list[ScoreRecord] = []
    rows: list[int] = []
    for idx, obj in enumerate(payload, start=1):
        where = f"record {idx}"
        if not isinstance(obj, dict):
            raise DataError(f"{where}: expected an object")
        unknown = set(obj) - set(CSV_COLUMNS)
        if unknown:
            raise DataError(f"{where}: unknown key(s) {sorted(unknown)}")
        for column in REQUIRED_COLUMNS:
            if column not in obj:
                raise DataError(f"{where}: missing required key {column!r}")
        score = obj["score"]
        if isinstance(score, bool) or not isinstance(score, (int, float)):
            raise DataError(f"{where}: non-numeric score {score!r}")
        if not math.isfinite(score):
            raise DataError(f"{where}: non-finite score {score!r}")

        def opt(name, obj=obj, where=where):
            value = obj.get(name)
            if value in (None, ""):
                return None
            if not isinstance(value, str):
                raise DataError(f"{where}: {name} must be a string or null")
            return value

        for required in ("candidate_id", "item_id", "metric_id"):
            if not isinstance(obj[required], str) or not obj[required]:
                raise DataError(f"{where}: {required} must be a non-empty string")
        records.append(ScoreRecord(
            candidate_id=obj["candidate_id"],
            item_id=obj["item_id"],
            metric_id=obj["metric_id"],
            score=float(score),
            run_id=opt("run_id"),
            rater_id=opt("rater_id"),
        ))
        rows.append(idx)
    _check_duplicates(records, rows)
    return records


def parse_records(source, format: str = "csv-long") -> list[ScoreRecord]:
    """Parse score records from a byte stream.

    Parameters
    ----------
    source : bytes or binary file-like
        UTF-8 encoded input.
    format : {'csv-long', 'json'}
        ``csv-long`` expects a header row with at least the columns
        ``candidate_id,item_id,metric_id,score``; ``json`` expects an
        array of objects with the same keys.
    """
    text = _decode(source)
    if format == "csv-long":
        return _parse_csv(text)
    if format == "json":
        return _parse_json(text)
    raise DataError(f"unknown format {format!r} (expected 'csv-long' or 'json')")


def _aggregate_cell(cell_records: list[ScoreRecord], aggregation: str,
                    candidate: str, item: str) -> float:
    if aggregation in ("single-run", "single-rater"):
        if len(cell_records) > 1:
            raise DataError(
                f"cell ({candidate}, {item}): {len(cell_records)} records remain "
                f"after {aggregation} selection; expected exactly one"
            )
        return cell_records[0].score
    if aggregation == "mean-over-runs":
        other = {r.rater_id for r in cell_records}
        if len(other) > 1:
            raise DataError(
                f"cell ({candidate}, {item}): rater_id varies; "
                "mean-over-runs cannot disambiguate"
            )
    else:  # mean-over-raters
        other = {r.run_id for r in cell_records}
        if len(other) > 1:
            raise DataError(
                f"cell ({candidate}, {item}): run_id varies; "
                "mean-over-raters cannot disambiguate"
            )
    return float(np.mean([r.score for r in cell_records]))


def pivot(records: list[ScoreRecord], metric: str,
          aggregation: str = "mean-over-runs", *,
          run_id: str | None = None, rater_id: str | None = None,
          missing: str = "error") -> ScoreMatrix:
    """Pivot long-format records to a candidates x items matrix.

    Candidates and items are ordered lexicographically so identical inputs
    always produce identical matrices regardless of record order.

    Parameters
    ----------
    metric : str
        The metric_id to select.
    aggregation : one of AGGREGATIONS
        How to collapse the replicate dimension. ``single-run`` /
        ``single-rater`` require the corresponding ``run_id`` /
        ``rater_id`` argument.
    missing : one of MISSING_POLICIES
        Policy for cells with no record after aggregation. Psychometric
        formulas assume complete matrices, so the default is ``error``.
    """
    if aggregation not in AGGREGATIONS:
        raise DataError(f"unknown aggregation {aggregation!r}")
    if missing not in MISSING_POLICIES:
        raise DataError(f"unknown missing-data policy {missing!r}")

    selected = [r for r in records if r.metric_id == metric]
    if not selected:
        raise DataError(f"no records for metric {metric!r}")

    if aggregation == "single-run":
        if run_id is None:
            raise DataError("single-run aggregation requires run_id")
        if run_id not in {r.run_id for r in selected}:
            raise DataError(f"unknown run_id {run_id!r}")
        selected = [r for r in selected if r.run_id == run_id]
    elif aggregation == "single-rater":
        if rater_id is None:
            raise DataError("single-rater aggregation requires rater_id")
        if rater_id not in {r.rater_id for r in selected}:
            raise DataError(f"unknown rater_id {rater_id!r}")
        selected = [r for r in selected if r.rater_id == rater_id]

    cells: dict[tuple[str, str], list[ScoreRecord]] = {}
    for record in selected:
        cells.setdefault((record.candidate_id, record.item_id), []).append(record)

    candidates = sorted({c for c, _ in cells})
    items = sorted({i for _, i in cells})
    row_of = {c: i for i, c in enumerate(candidates)}
    col_of = {it: j for j, it in enumerate(items)}

    grid = np.full((len(candidates), len(items)), np.nan)
    for (c, it), cell_records in cells.items():
        grid[row_of[c], col_of[it]] = _aggregate_cell(
            cell_records, aggregation, c, it)

    present = np.isfinite(grid)
    if missing == "error":
        if not present.all():
            i, j = np.argwhere(~present)[0]
            raise DataError(
                f"missing cell ({candidates[i]}, {items[j]}) under policy=error"
            )
    elif missing == "drop-candidate":
        keep = present.all(axis=1)
        candidates = [c for c, k in zip(candidates, keep) if k]
        grid = grid[keep, :]
    else:  # drop-item
        keep = present.all(axis=0)
        items = [it for it, k in zip(items, keep) if k]
        grid = grid[:, keep]

    if len(candidates) < 2 or len(items) < 1:
        raise DataError(
            f"pivot produced {len(candidates)} candidates x {len(items)} items; "
            "need at least 2 candidates and 1 item"
        )
    return ScoreMatrix(candidates=candidates, items=items, values=grid, label=metric)


def split_matrix(m: ScoreMatrix, scheme: str = "odd-even",
                 seed: int | None = None) -> tuple[ScoreMatrix, ScoreMatrix]:
    """Partition the item columns into two halves (|J1 - J2| <= 1).

    ``odd-even`` alternates column indices; ``first-second`` takes the
    first ceil(J/2) columns; ``random`` applies a seeded permutation and
    then alternates, so the same seed always gives the same partition.
    """
    if scheme not in SPLIT_SCHEMES:
        raise DataError(f"unknown split scheme {scheme!r}")
    j = m.n_items
    if j < 2:
        raise DataError(f"cannot split a matrix with {j} item(s); need at least 2")

    if scheme == "odd-even":
        first, second = list(range(0, j, 2)), list(range(1, j, 2))
    elif scheme == "first-second":
        half = (j + 1) // 2
        first, second = list(range(half)), list(range(half, j))
    else:
        if seed is None:
            raise DataError("random split scheme requires a seed")
        from .stats import substream

        perm = substream(seed, 0).permutation(j)
        first = sorted(int(k) for k in perm[0::2])
        second = sorted(int(k) for k in perm[1::2])

    return (m.take_items(first, label=f"{m.label}:half1"),
            m.take_items(second, label=f"{m.label}:half2"))


def records_to_csv_bytes(records: list[ScoreRecord]) -> bytes:
    """Serialize records to the canonical long-format CSV schema."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow([r.candidate_id, r.item_id, r.metric_id,
                         r.run_id or "", r.rater_id or "", repr(r.score)])
    return out.getvalue().encode("utf-8")
