"""Hamming-space evaluation: radius lookup, precision/recall/F1, MAP and anchor accuracy."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DataError
from .hashing import HashCode, HashCodeSet

log = logging.getLogger(__name__)

DEFAULT_RADIUS = 2
CSV_HEADER = (
    "method", "code_length", "s", "radius", "precision", "recall", "f1", "map",
    "accuracy_train", "accuracy_test",
)


def _mean(values) -> float:
    # correctly rounded, so the result does not depend on summation order
    values = np.asarray(values, dtype=np.float64).ravel()
    return math.fsum(values) / values.size if values.size else 0.0


def f1_score(precision: float, recall: float) -> float:
    total = precision + recall
    return 2.0 * precision * recall / total if total > 0 else 0.0


@dataclass(frozen=True)
class RetrievalMetrics:
    precision: float
    recall: float
    f1: float
    radius: int
    n_queries: int
    map: Optional[float] = None
    n_empty: int = 0
    n_recall_skipped: int = 0


@dataclass(frozen=True)
class AccuracyReport:
    accuracy: float
    n_instances: int
    confusion: np.ndarray
    assigned: np.ndarray


def _packed(codes) -> tuple[np.ndarray, int]:
    if isinstance(codes, HashCode):
        return codes.packed[None, :], codes.n_bits
    return codes.packed, codes.n_bits


def hamming_distance(c1: HashCode, c2: HashCode) -> int:
    if c1.n_bits != c2.n_bits:
        raise DataError(f"code length mismatch: {c1.n_bits} vs {c2.n_bits}")
    return int(np.bitwise_count(np.bitwise_xor(c1.packed, c2.packed)).sum())


def hamming_matrix(queries, database) -> np.ndarray:
    """Q x D matrix of Hamming distances between packed code sets."""
    q, bq = _packed(queries)
    d, bd = _packed(database)
    if bq != bd:
        raise DataError(f"code length mismatch: {bq} vs {bd}")
    # bound the XOR temporary to ~16 MB
    chunk = max(1, (1 << 24) // max(1, d.size))
    out = np.empty((q.shape[0], d.shape[0]), dtype=np.int32)
    for i in range(0, q.shape[0], chunk):
        x = np.bitwise_xor(q[i:i + chunk, None, :], d[None, :, :])
        out[i:i + chunk] = np.bitwise_count(x).sum(axis=2, dtype=np.int32)
    return out


def _distance_blocks(queries, database, max_cells: int = 1 << 22):
    n_q = len(queries)
    step = max(1, max_cells // max(1, len(database)))
    for start in range(0, n_q, step):
        sl = slice(start, min(n_q, start + step))
        yield sl, hamming_matrix(queries[sl], database)


def radius_lookup(query: HashCode, database: HashCodeSet, radius: int) -> np.ndarray:
    """Ascending indices of database codes within ``radius`` bits of ``query``."""
    return np.flatnonzero(hamming_matrix(query, database)[0] <= radius)


def lookup_metrics(
    queries: HashCodeSet,
    query_labels,
    database: HashCodeSet,
    db_labels,
    radius: int = DEFAULT_RADIUS,
    empty_as_zero: bool = True,
) -> RetrievalMetrics:
    """Macro-averaged precision/recall of radius lookups, and F1 of those averages.

    A query retrieving nothing scores precision 0 (``empty_as_zero``) or is
    left out of the precision average. A query whose class is absent from
    the database is left out of the recall average.
    """
    ql = np.asarray(query_labels)
    dl = np.asarray(db_labels)
    if len(ql) != len(queries) or len(dl) != len(database):
        raise DataError("label vectors do not match code sets")
    n_ret = np.zeros(len(ql), dtype=np.int64)
    n_rel_ret = np.zeros(len(ql), dtype=np.int64)
    n_rel = np.zeros(len(ql), dtype=np.int64)
    for sl, D in _distance_blocks(queries, database):
        hit = D <= radius
        same = ql[sl, None] == dl[None, :]
        n_ret[sl] = hit.sum(axis=1)
        n_rel_ret[sl] = (hit & same).sum(axis=1)
        n_rel[sl] = same.sum(axis=1)

    empty = n_ret == 0
    prec = np.divide(n_rel_ret, n_ret, out=np.zeros(len(ql)), where=~empty)
    prec_pool = prec if empty_as_zero else prec[~empty]
    has_rel = n_rel > 0
    rec = n_rel_ret[has_rel] / n_rel[has_rel]
    n_skipped = int((~has_rel).sum())
    if n_skipped:
        log.warning("%d queries have no same-class item in the database; excluded from recall", n_skipped)

    precision = _mean(prec_pool)
    recall = _mean(rec)
    return RetrievalMetrics(precision, recall, f1_score(precision, recall), radius, len(ql),
                            n_empty=int(empty.sum()), n_recall_skipped=n_skipped)


def average_precision(ranked_relevance: np.ndarray) -> float:
    rel = np.asarray(ranked_relevance, dtype=bool)
    if not rel.any():
        return 0.0
    hits = np.cumsum(rel)
    ranks = np.flatnonzero(rel) + 1
    return _mean(hits[rel] / ranks)


def mean_average_precision(queries: HashCodeSet, query_labels, database: HashCodeSet, db_labels) -> float:
    """MAP over the full database ranked by Hamming distance (ties by ascending index)."""
    if len(database) == 0:
        raise DataError("empty database")
    ql = np.asarray(query_labels)
    dl = np.asarray(db_labels)
    aps = []
    for sl, D in _distance_blocks(queries, database):
        order = np.argsort(D, axis=1, kind="stable")
        for row, i in enumerate(range(sl.start, sl.stop)):
            rel = dl[order[row]] == ql[i]
            if rel.any():
                aps.append(average_precision(rel))
    return _mean(aps)


def anchor_assignment_accuracy(codes: HashCodeSet, labels, anchor_codes: HashCodeSet, class_of_anchor) -> AccuracyReport:
    """Assign every code to its nearest anchor code (ties -> lowest anchor) and score the class.

    ``confusion[true, predicted]`` is indexed by class id.
    """
    coa = np.asarray(class_of_anchor, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(anchor_codes) != coa.size:
        raise DataError("one class per anchor code required")
    n = int(max(coa.max(initial=-1), labels.max(initial=-1))) + 1
    if len(codes) == 0:
        return AccuracyReport(0.0, 0, np.zeros((n, n), dtype=np.int64), np.zeros(0, dtype=np.int64))
    nearest = np.argmin(hamming_matrix(codes, anchor_codes), axis=1)
    predicted = coa[nearest]
    confusion = np.zeros((n, n), dtype=np.int64)
    np.add.at(confusion, (labels, predicted), 1)
    return AccuracyReport(float(np.mean(predicted == labels)), len(labels), confusion, predicted)


def format_rows(rows, extra_columns=("trial", "split_mode")) -> str:
    """Render metric dicts as CSV text with the fixed header plus ``extra_columns``."""
    header = list(CSV_HEADER) + list(extra_columns)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(row.get(col, "")) for col in header])
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else f"{float(v):.6f}"
    return str(v)
