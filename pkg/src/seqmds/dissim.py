"""Order-sensitive dissimilarity between action sequences.

For two sequences the measure combines (a) summed positional offsets of
matched occurrences of shared actions, scaled by the longer length, and
(b) the count of occurrences of actions exclusive to one sequence, the sum
normalized by the total length. It is a pseudo-dissimilarity: distinct
sequences can be at distance zero (e.g. (X,Y) vs (X,Y,Y), where the matched
occurrences align exactly and the surplus Y is a shared action, so it counts
toward neither part). The triangle inequality is not assumed anywhere.
"""

from __future__ import annotations

import csv
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._util import atomic_open, fmt17
from .corpus import ActionSequence, Corpus
from .errors import AlphabetMismatchError, CorpusFormatError, DataError

_PDM_MAGIC = b"PDM1"


@dataclass(frozen=True)
class OccurrenceIndex:
    """1-based occurrence positions of each action in one sequence."""

    positions: dict[int, tuple[int, ...]]

    @classmethod
    def from_sequence(cls, seq: ActionSequence) -> OccurrenceIndex:
        pos: dict[int, list[int]] = {}
        for p, a in enumerate(seq.actions, start=1):
            pos.setdefault(a, []).append(p)
        return cls({a: tuple(ps) for a, ps in pos.items()})

    def count(self, action: int) -> int:
        return len(self.positions.get(action, ()))


def _check_pair(si: ActionSequence, sj: ActionSequence) -> None:
    if si.alphabet != sj.alphabet:
        raise AlphabetMismatchError(
            f"sequences {si.id!r} and {sj.id!r} use different alphabets"
        )


def common_part(si: ActionSequence, sj: ActionSequence) -> float:
    """Positional disagreement over actions present in both sequences.

    The k-th occurrence of a shared action in one sequence is matched with
    the k-th in the other, up to the smaller occurrence count; absolute
    position differences are summed and divided by max(L_i, L_j).
    """
    _check_pair(si, sj)
    oi = OccurrenceIndex.from_sequence(si).positions
    oj = OccurrenceIndex.from_sequence(sj).positions
    total = 0
    for a, pos_i in oi.items():
        pos_j = oj.get(a)
        if pos_j is None:
            continue
        for pi, pj in zip(pos_i, pos_j):
            total += abs(pi - pj)
    return total / max(si.length, sj.length)


def unique_part(si: ActionSequence, sj: ActionSequence) -> int:
    """Number of occurrences of actions appearing in only one sequence."""
    _check_pair(si, sj)
    oi = OccurrenceIndex.from_sequence(si).positions
    oj = OccurrenceIndex.from_sequence(sj).positions
    g = 0
    for a, pos in oi.items():
        if a not in oj:
            g += len(pos)
    for a, pos in oj.items():
        if a not in oi:
            g += len(pos)
    return g


def dissimilarity(si: ActionSequence, sj: ActionSequence) -> float:
    """Pairwise dissimilarity: (common + unique parts) / (L_i + L_j)."""
    return (common_part(si, sj) + unique_part(si, sj)) / (si.length + sj.length)


@dataclass(frozen=True)
class DissimilarityMatrix:
    """Symmetric nonnegative pairwise dissimilarities with zero diagonal."""

    ids: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        v = self.values
        n = len(self.ids)
        if v.shape != (n, n):
            raise DataError(f"matrix shape {v.shape} does not match {n} ids")
        if not np.isfinite(v).all():
            raise DataError("matrix contains non-finite entries")
        if (v < 0).any():
            raise DataError("matrix contains negative entries")
        if np.diagonal(v).any():
            raise DataError("matrix diagonal must be zero")
        if not (v == v.T).all():
            raise DataError("matrix is not exactly symmetric")

    @property
    def n(self) -> int:
        return len(self.ids)

    @classmethod
    def from_condensed(cls, ids, upper: np.ndarray) -> DissimilarityMatrix:
        """Build from the upper triangle in row-major (i<j) order."""
        ids = tuple(ids)
        n = len(ids)
        upper = np.asarray(upper, dtype=np.float64)
        if upper.shape != (n * (n - 1) // 2,):
            raise DataError("condensed vector length does not match id count")
        values = np.zeros((n, n), dtype=np.float64)
        iu = np.triu_indices(n, 1)
        values[iu] = upper
        values[(iu[1], iu[0])] = upper
        return cls(ids, values)

    def condensed(self) -> np.ndarray:
        return self.values[np.triu_indices(self.n, 1)]


def _row_blocks(n: int, workers: int) -> list[tuple[int, int]]:
    # balance blocks by pair count, not row count (early rows hold more pairs)
    pair_counts = np.arange(n - 1, -1, -1, dtype=np.float64)
    cum = np.cumsum(pair_counts)
    bounds = [0]
    for w in range(1, workers):
        target = cum[-1] * w / workers
        bounds.append(int(np.searchsorted(cum, target)))
    bounds.append(n)
    return [(a, b) for a, b in zip(bounds, bounds[1:]) if b > a]


def dissimilarity_matrix(corpus: Corpus, threads: int = 1) -> DissimilarityMatrix:
    """Compute all pairwise dissimilarities of a corpus.

    With threads > 1, disjoint row blocks are filled concurrently; each cell
    is written exactly once, so the result is independent of scheduling.
    """
    n = corpus.n
    if n < 2:
        raise DataError("need at least 2 sequences for a dissimilarity matrix")
    tables = _kernels.build_occurrence_tables(corpus.sequences)
    values = np.zeros((n, n), dtype=np.float64)
    workers = max(1, int(threads))
    if workers == 1 or n < 4 * workers:
        _kernels._fill_rows(values, 0, n, *tables)
    else:
        blocks = _row_blocks(n, workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_kernels._fill_rows, values, a, b, *tables) for a, b in blocks
            ]
            for fut in futures:
                fut.result()
    return DissimilarityMatrix(corpus.ids, values)


def save_matrix(matrix: DissimilarityMatrix, path) -> None:
    """Write the binary condensed format plus the id sidecar CSV.

    Layout: magic "PDM1", n as little-endian uint64, then the n(n-1)/2
    upper-triangle values row-major as little-endian float64. The sidecar
    (same name with .ids.csv suffix) lists row ids in order.
    """
    import pathlib

    path = pathlib.Path(path)
    with atomic_open(path, "wb") as fh:
        fh.write(_PDM_MAGIC)
        fh.write(struct.pack("<Q", matrix.n))
        fh.write(matrix.condensed().astype("<f8").tobytes())
    with atomic_open(path.with_suffix(".ids.csv"), "w") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id"])
        for sid in matrix.ids:
            writer.writerow([sid])


def load_matrix(path) -> DissimilarityMatrix:
    import pathlib

    path = pathlib.Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _PDM_MAGIC:
            raise CorpusFormatError(f"{path} is not a PDM1 matrix file")
        (n,) = struct.unpack("<Q", fh.read(8))
        upper = np.frombuffer(fh.read(8 * (n * (n - 1) // 2)), dtype="<f8")
        if upper.shape[0] != n * (n - 1) // 2:
            raise CorpusFormatError(f"{path} is truncated")
    ids_path = path.with_suffix(".ids.csv")
    with open(ids_path, encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["id"]:
            raise CorpusFormatError(f"{ids_path} must have a single 'id' column")
        ids = [row[0] for row in reader]
    if len(ids) != n:
        raise CorpusFormatError(f"{ids_path} lists {len(ids)} ids, matrix has {n}")
    return DissimilarityMatrix.from_condensed(ids, upper.astype(np.float64))


def export_matrix_csv(matrix: DissimilarityMatrix, path) -> None:
    """Full-matrix CSV export with 17 significant digits, for interop."""
    with atomic_open(path, "w") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", *matrix.ids])
        for sid, row in zip(matrix.ids, matrix.values):
            writer.writerow([sid, *(fmt17(x) for x in row)])
