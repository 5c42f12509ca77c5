"""Prefix-wise prediction streams: data model, ensemble aggregation, and file I/O.

A stream is an ordered collection of cases; each case carries one prediction
point per observed prefix length. Points hold the relative predicted
deviation `delta`, the ensemble-voting reliability `rho`, and the relative
prefix position `tau`. Streams are immutable after construction and safe to
share across parallel workers.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

JSONL_FORMAT_ID = "earlywarn-stream/1"
DEFAULT_EXPECTED_OUTCOME = 0.5

CSV_COLUMNS = ["case_id", "j", "l", "delta", "rho", "y", "deviation"]
MATRIX_COLUMNS = ["case_id", "j", "model_index", "y_hat"]
TRUTH_COLUMNS = ["case_id", "y", "deviation", "l"]


class ParseError(ValueError):
    """A stream file could not be parsed; the message carries the line number."""


class ValidationError(ValueError):
    """Parsed data violates a stream invariant; names the offending case/field."""


@dataclass(frozen=True, slots=True)
class PredictionPoint:
    """One prefix-wise prediction: index j, deviation delta, reliability rho, position tau."""

    j: int
    delta: float
    rho: float
    tau: float

    def __post_init__(self):
        if self.j < 1:
            raise ValidationError(f"prefix index must be >= 1, got {self.j}")
        if not math.isfinite(self.delta):
            raise ValidationError(f"delta must be finite at j={self.j}")
        if not 0.5 <= self.rho <= 1.0:
            raise ValidationError(f"rho must be in [0.5, 1], got {self.rho} at j={self.j}")
        if not 0.0 < self.tau <= 1.0:
            raise ValidationError(f"tau must be in (0, 1], got {self.tau} at j={self.j}")


@dataclass(frozen=True, slots=True)
class CaseRecord:
    """An ordered run of prediction points for one case plus its ground truth.

    Points must cover j = 1..length with no gaps and tau = j/length exactly.
    For categorical outcomes (y in {0.0, 1.0}) the deviation flag must agree
    with the label.
    """

    case_id: str
    points: tuple[PredictionPoint, ...]
    length: int
    y: float
    actual_deviation: bool

    def __post_init__(self):
        if self.length < 1 or len(self.points) != self.length:
            raise ValidationError(
                f"case {self.case_id!r}: expected {self.length} points, got {len(self.points)}"
            )
        for idx, point in enumerate(self.points, start=1):
            if point.j != idx:
                raise ValidationError(
                    f"case {self.case_id!r}: prefix indices must run 1..l without gaps "
                    f"(position {idx} has j={point.j})"
                )
            if point.tau != point.j / self.length:
                raise ValidationError(
                    f"case {self.case_id!r}: tau at j={point.j} is {point.tau}, "
                    f"expected {point.j / self.length}"
                )
        if self.y == 1.0 and not self.actual_deviation:
            raise ValidationError(f"case {self.case_id!r}: y=1.0 requires deviation=true")
        if self.y == 0.0 and self.actual_deviation:
            raise ValidationError(f"case {self.case_id!r}: y=0.0 requires deviation=false")

    @classmethod
    def from_values(cls, case_id, deltas, rhos, y, actual_deviation) -> "CaseRecord":
        """Build a case from parallel delta/rho sequences, deriving j and tau."""
        l = len(deltas)
        if len(rhos) != l:
            raise ValidationError(f"case {case_id!r}: {l} deltas but {len(rhos)} rhos")
        points = tuple(
            PredictionPoint(j=j, delta=float(d), rho=float(r), tau=j / l)
            for j, (d, r) in enumerate(zip(deltas, rhos), start=1)
        )
        return cls(case_id=case_id, points=points, length=l, y=float(y),
                   actual_deviation=bool(actual_deviation))


@dataclass(frozen=True, slots=True)
class BasePredictionMatrix:
    """Raw per-model predictions for one case: entries[j-1][i] is model i's y_hat at prefix j."""

    case_id: str
    expected_outcome: float
    entries: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        if not self.entries:
            raise ValidationError(f"case {self.case_id!r}: empty prediction matrix")
        m = len(self.entries[0])
        if m < 1:
            raise ValidationError(f"case {self.case_id!r}: ensemble size must be >= 1")
        for j, row in enumerate(self.entries, start=1):
            if len(row) != m:
                raise ValidationError(
                    f"case {self.case_id!r}: prefix {j} has {len(row)} predictions, expected {m}"
                )

    @property
    def ensemble_size(self) -> int:
        return len(self.entries[0])


@dataclass(frozen=True, slots=True)
class TruthRecord:
    """Sidecar ground truth for a base-matrix case."""

    case_id: str
    y: float
    actual_deviation: bool
    length: int


@dataclass(frozen=True, slots=True)
class PredictionStream:
    """Cases in chronological arrival order (the axis drift happens along)."""

    cases: tuple[CaseRecord, ...]
    expected_outcome: float = DEFAULT_EXPECTED_OUTCOME

    def __post_init__(self):
        if not self.cases:
            raise ValidationError("empty stream")
        seen = set()
        for case in self.cases:
            if case.case_id in seen:
                raise ValidationError(f"duplicate case_id {case.case_id!r}")
            seen.add(case.case_id)

    def __len__(self) -> int:
        return len(self.cases)

    @property
    def deviation_rate(self) -> float:
        return sum(c.actual_deviation for c in self.cases) / len(self.cases)


def compute_delta(y_hat: float, expected_outcome: float) -> float:
    """Relative predicted deviation of a prediction against the expected outcome."""
    if expected_outcome == 0:
        raise ValueError("relative deviation undefined for expected outcome 0")
    return (y_hat - expected_outcome) / expected_outcome


def compute_rho(base_deltas) -> float:
    """Ensemble agreement: the larger vote fraction between positive and non-positive deltas."""
    m = len(base_deltas)
    if m == 0:
        raise ValueError("reliability undefined for an empty ensemble")
    positive = sum(1 for d in base_deltas if d > 0)
    return max(positive / m, (m - positive) / m)


def compute_tau(j: int, l: int) -> float:
    """Relative prefix position j/l."""
    if not 1 <= j <= l:
        raise ValueError(f"prefix index {j} outside 1..{l}")
    return j / l


def aggregate_ensemble(matrix: BasePredictionMatrix, truth: TruthRecord) -> CaseRecord:
    """Collapse per-model predictions into one (delta, rho) point per prefix.

    delta comes from the ensemble-mean prediction; rho from the vote split of
    the per-model deltas. Since delta is linear in y_hat, the delta of the
    mean equals the mean of the deltas.
    """
    if truth.length != len(matrix.entries):
        raise ValidationError(
            f"case {matrix.case_id!r}: truth length {truth.length} != "
            f"{len(matrix.entries)} matrix prefixes"
        )
    a = matrix.expected_outcome
    deltas, rhos = [], []
    for row in matrix.entries:
        per_model = [compute_delta(y_hat, a) for y_hat in row]
        deltas.append(compute_delta(sum(row) / len(row), a))
        rhos.append(compute_rho(per_model))
    return CaseRecord.from_values(matrix.case_id, deltas, rhos, truth.y, truth.actual_deviation)


def aggregate_stream(matrices, truths) -> PredictionStream:
    """Aggregate a sequence of base matrices into a stream, matching truths by case_id."""
    truth_by_id = {t.case_id: t for t in truths}
    cases = []
    for matrix in matrices:
        truth = truth_by_id.get(matrix.case_id)
        if truth is None:
            raise ValidationError(f"case {matrix.case_id!r}: no truth record")
        cases.append(aggregate_ensemble(matrix, truth))
    if not matrices:
        raise ValidationError("empty stream")
    return PredictionStream(cases=tuple(cases), expected_outcome=matrices[0].expected_outcome)


def truncate_to_quantile(stream: PredictionStream, q: float) -> PredictionStream:
    """Cap every case at the nearest-rank q-quantile of all case lengths.

    The quantile is the ceil(q*N)-th order statistic, so q=1 is the identity
    and the operation is idempotent. tau is recomputed against the new length.
    """
    if not 0.0 < q <= 1.0:
        raise ValueError(f"quantile must be in (0, 1], got {q}")
    lengths = sorted(case.length for case in stream.cases)
    cap = lengths[math.ceil(q * len(lengths)) - 1]
    cases = []
    for case in stream.cases:
        if case.length <= cap:
            cases.append(case)
        else:
            kept = case.points[:cap]
            cases.append(CaseRecord.from_values(
                case.case_id, [p.delta for p in kept], [p.rho for p in kept],
                case.y, case.actual_deviation))
    return PredictionStream(cases=tuple(cases), expected_outcome=stream.expected_outcome)


def _detect_format(path, fmt):
    if fmt is not None:
        if fmt not in ("jsonl", "csv"):
            raise ValueError(f"unknown stream format {fmt!r}")
        return fmt
    text = str(path)
    if text.endswith(".jsonl"):
        return "jsonl"
    if text.endswith(".csv"):
        return "csv"
    raise ValueError(f"cannot infer stream format from {text!r}; pass format=")


def load_stream(path, fmt=None, expected_outcome=None) -> PredictionStream:
    """Load and fully validate a stream from a JSONL or CSV file.

    JSONL files carry the expected outcome in their header line; for CSV it
    comes from `expected_outcome` (default 0.5).
    """
    fmt = _detect_format(path, fmt)
    if fmt == "jsonl":
        return _load_jsonl(path, expected_outcome)
    return _load_csv(path, expected_outcome)


def _case_from_rows(case_id, rows, y, deviation, where):
    """rows: iterable of (j, delta, rho); validates the j sequence and builds the case."""
    rows = sorted(rows)
    js = [j for j, _, _ in rows]
    if js != list(range(1, len(js) + 1)):
        raise ValidationError(f"case {case_id!r}: prefix indices {js} have gaps ({where})")
    return CaseRecord.from_values(case_id, [d for _, d, _ in rows], [r for _, _, r in rows],
                                  y, deviation)


def _load_jsonl(path, expected_outcome):
    a = DEFAULT_EXPECTED_OUTCOME if expected_outcome is None else expected_outcome
    cases = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if lineno == 1 and "format" in obj:
                if obj["format"] != JSONL_FORMAT_ID:
                    raise ParseError(f"{path}:1: unsupported format {obj['format']!r}")
                if expected_outcome is None and "A" in obj:
                    a = float(obj["A"])
                continue
            try:
                case_id = obj["case_id"]
                y = float(obj["y"])
                deviation = bool(obj["deviation"])
                rows = [(int(p["j"]), float(p["delta"]), float(p["rho"]))
                        for p in obj["points"]]
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"{path}:{lineno}: malformed case object: {exc}") from exc
            cases.append(_case_from_rows(case_id, rows, y, deviation, f"line {lineno}"))
    if not cases:
        raise ValidationError("empty stream")
    return PredictionStream(cases=tuple(cases), expected_outcome=a)


def _parse_bool(text, where):
    if text in ("true", "True", "1"):
        return True
    if text in ("false", "False", "0"):
        return False
    raise ParseError(f"{where}: expected a boolean, got {text!r}")


def _load_csv(path, expected_outcome):
    a = DEFAULT_EXPECTED_OUTCOME if expected_outcome is None else expected_outcome
    cases = []
    current_id = None
    current_rows = []
    current_truth = None
    seen_ids = set()

    def flush(where):
        cid = current_id
        if cid in seen_ids:
            raise ValidationError(f"duplicate case_id {cid!r}: rows are not grouped by case")
        seen_ids.add(cid)
        y, deviation, l = current_truth
        if l != len(current_rows):
            raise ValidationError(
                f"case {cid!r}: l={l} but {len(current_rows)} rows ({where})")
        cases.append(_case_from_rows(cid, current_rows, y, deviation, where))

    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1:
                if row != CSV_COLUMNS:
                    raise ParseError(f"{path}:1: expected header {CSV_COLUMNS}, got {row}")
                continue
            if not row:
                continue
            where = f"{path}:{lineno}"
            if len(row) != len(CSV_COLUMNS):
                raise ParseError(f"{where}: expected {len(CSV_COLUMNS)} columns, got {len(row)}")
            try:
                case_id, j, l = row[0], int(row[1]), int(row[2])
                delta, rho, y = float(row[3]), float(row[4]), float(row[5])
            except ValueError as exc:
                raise ParseError(f"{where}: {exc}") from exc
            deviation = _parse_bool(row[6], where)
            if case_id != current_id:
                if current_id is not None:
                    flush(where)
                current_id, current_rows, current_truth = case_id, [], (y, deviation, l)
            elif current_truth != (y, deviation, l):
                raise ValidationError(f"case {case_id!r}: inconsistent y/deviation/l ({where})")
            current_rows.append((j, delta, rho))
        if current_id is not None:
            flush(f"{path}:EOF")
    if not cases:
        raise ValidationError("empty stream")
    return PredictionStream(cases=tuple(cases), expected_outcome=a)


def write_stream(stream: PredictionStream, path, fmt=None) -> None:
    """Serialize a stream; load_stream(write_stream(s)) reproduces s byte-for-byte stable."""
    fmt = _detect_format(path, fmt)
    if fmt == "jsonl":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"format": JSONL_FORMAT_ID, "A": stream.expected_outcome}) + "\n")
            for case in stream.cases:
                obj = {
                    "case_id": case.case_id,
                    "y": case.y,
                    "deviation": case.actual_deviation,
                    "points": [{"j": p.j, "delta": p.delta, "rho": p.rho} for p in case.points],
                }
                fh.write(json.dumps(obj) + "\n")
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for case in stream.cases:
            dev = "true" if case.actual_deviation else "false"
            for p in case.points:
                writer.writerow([case.case_id, p.j, case.length,
                                 repr(p.delta), repr(p.rho), repr(case.y), dev])


def write_base_matrix(matrices, truths, matrix_path, truth_path) -> None:
    """Emit the raw per-model prediction CSV plus its ground-truth sidecar."""
    with open(matrix_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MATRIX_COLUMNS)
        for matrix in matrices:
            for j, row in enumerate(matrix.entries, start=1):
                for i, y_hat in enumerate(row):
                    writer.writerow([matrix.case_id, j, i, repr(float(y_hat))])
    with open(truth_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRUTH_COLUMNS)
        for truth in truths:
            dev = "true" if truth.actual_deviation else "false"
            writer.writerow([truth.case_id, repr(float(truth.y)), dev, truth.length])


def load_base_matrix(matrix_path, truth_path, expected_outcome=DEFAULT_EXPECTED_OUTCOME):
    """Load a base-matrix CSV and its truth sidecar; returns (matrices, truths)."""
    truths = []
    with open(truth_path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1:
                if row != TRUTH_COLUMNS:
                    raise ParseError(f"{truth_path}:1: expected header {TRUTH_COLUMNS}, got {row}")
                continue
            if not row:
                continue
            try:
                truths.append(TruthRecord(row[0], float(row[1]),
                                          _parse_bool(row[2], f"{truth_path}:{lineno}"),
                                          int(row[3])))
            except ValueError as exc:
                raise ParseError(f"{truth_path}:{lineno}: {exc}") from exc

    per_case: dict[str, dict[int, dict[int, float]]] = {}
    order = []
    with open(matrix_path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1:
                if row != MATRIX_COLUMNS:
                    raise ParseError(
                        f"{matrix_path}:1: expected header {MATRIX_COLUMNS}, got {row}")
                continue
            if not row:
                continue
            try:
                case_id, j, i, y_hat = row[0], int(row[1]), int(row[2]), float(row[3])
            except ValueError as exc:
                raise ParseError(f"{matrix_path}:{lineno}: {exc}") from exc
            if case_id not in per_case:
                per_case[case_id] = {}
                order.append(case_id)
            per_case[case_id].setdefault(j, {})[i] = y_hat

    matrices = []
    for case_id in order:
        prefixes = per_case[case_id]
        js = sorted(prefixes)
        if js != list(range(1, len(js) + 1)):
            raise ValidationError(f"case {case_id!r}: matrix prefix indices {js} have gaps")
        entries = []
        for j in js:
            models = prefixes[j]
            idxs = sorted(models)
            if idxs != list(range(len(idxs))):
                raise ValidationError(f"case {case_id!r}: model indices {idxs} have gaps at j={j}")
            entries.append(tuple(models[i] for i in idxs))
        matrices.append(BasePredictionMatrix(case_id, expected_outcome, tuple(entries)))
    return matrices, truths
