"""Least-squares multidimensional scaling by stochastic gradient descent.

The embedding minimizes sum over pairs (i<j) of (d_ij - ||x_i - x_j||)^2.
Each epoch visits every training pair once in a seeded random permutation
and applies the per-pair gradient step to both endpoints; the step size
decays as initial_step / (1 + step_decay * epoch). The embedding dimension
can be chosen by m-fold cross-validation over the pair set.
"""

from __future__ import annotations

import csv
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from ._util import atomic_open, derive_seed, fmt17
from .dissim import DissimilarityMatrix
from .errors import DataError, DivergenceError

PairSet = tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class SgdConfig:
    """Hyperparameters of one gradient-descent embedding run.

    init_scale=None draws initial coordinates with standard deviation
    mean(d) / sqrt(2K), which puts initial inter-point distances on the
    scale of the data. pair_batch only chunks kernel calls; it has no
    effect on results.
    """

    seed: int
    epochs: int = 200
    initial_step: float = 0.1
    step_decay: float = 0.05
    init_scale: float | None = None
    pair_batch: int = 32768

    def __post_init__(self):
        if self.epochs < 1:
            raise DataError("epochs must be >= 1")
        if self.initial_step <= 0:
            raise DataError("initial_step must be positive")
        if self.step_decay < 0:
            raise DataError("step_decay must be nonnegative")
        if self.init_scale is not None and self.init_scale <= 0:
            raise DataError("init_scale must be positive")
        if self.pair_batch < 1:
            raise DataError("pair_batch must be >= 1")


@dataclass(frozen=True)
class Embedding:
    """Fixed-dimension coordinates for a set of sequences."""

    ids: tuple[str, ...]
    coords: np.ndarray
    final_stress: float | None = None

    def __post_init__(self):
        if self.coords.ndim != 2 or self.coords.shape[0] != len(self.ids):
            raise DataError("coordinate rows must match ids")
        if not np.isfinite(self.coords).all():
            raise DataError("coordinates contain non-finite values")

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def k(self) -> int:
        return self.coords.shape[1]


def all_pairs(n: int) -> PairSet:
    """Row-major upper-triangle pair indices (i < j)."""
    iu = np.triu_indices(n, 1)
    return iu[0].astype(np.int64), iu[1].astype(np.int64)


def stress(matrix: DissimilarityMatrix, coords: np.ndarray, pairs: PairSet | None = None) -> float:
    """Sum of squared residuals (d_ij - ||x_i - x_j||)^2 over the given pairs."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[0] != matrix.n:
        raise DataError("coordinate rows must match the matrix size")
    i_idx, j_idx = all_pairs(matrix.n) if pairs is None else pairs
    d = matrix.values[i_idx, j_idx]
    dist = np.sqrt(((coords[i_idx] - coords[j_idx]) ** 2).sum(axis=1))
    return float(((d - dist) ** 2).sum())


def pair_stress_gradient(xi: np.ndarray, xj: np.ndarray, d: float):
    """Analytic gradient of (d - ||xi - xj||)^2 with respect to xi and xj."""
    diff = np.asarray(xi, dtype=np.float64) - np.asarray(xj, dtype=np.float64)
    r = float(np.sqrt((diff**2).sum()))
    if r < 1e-12:
        raise DataError("gradient undefined at coincident points")
    gi = -2.0 * (d - r) * diff / r
    return gi, -gi


def embed(
    matrix: DissimilarityMatrix,
    k: int,
    config: SgdConfig,
    pairs: PairSet | None = None,
) -> Embedding:
    """Embed the matrix in k dimensions by per-pair gradient descent.

    `pairs` restricts the objective to a training subset (used by
    cross-validation); by default all pairs are used. The returned
    coordinates are centered, and final_stress is evaluated over the
    training pairs. Raises DivergenceError if coordinates go non-finite
    or the final stress exceeds the stress at initialization.
    """
    n = matrix.n
    if k < 1:
        raise DataError("embedding dimension must be >= 1")
    if n < k:
        warnings.warn(f"embedding {n} points in {k} dimensions (n < K)", stacklevel=2)
    pair_i, pair_j = all_pairs(n) if pairs is None else pairs
    n_pairs = pair_i.shape[0]
    if n_pairs == 0:
        raise DataError("no pairs to fit")
    targets = np.ascontiguousarray(matrix.values[pair_i, pair_j])
    pair_i = np.ascontiguousarray(pair_i, dtype=np.int64)
    pair_j = np.ascontiguousarray(pair_j, dtype=np.int64)

    rng = np.random.default_rng(config.seed)
    if config.init_scale is not None:
        scale = config.init_scale
    else:
        mean_d = float(targets.mean())
        scale = mean_d / np.sqrt(2.0 * k) if mean_d > 0 else 1e-3
    coords = rng.normal(0.0, scale, size=(n, k))

    init_stress = stress(matrix, coords, (pair_i, pair_j))
    escape_key = derive_seed(config.seed, 0xD1FF)
    batch = config.pair_batch
    for epoch in range(config.epochs):
        eta = config.initial_step / (1.0 + config.step_decay * epoch)
        perm = rng.permutation(n_pairs)
        counter_base = epoch * n_pairs
        for start in range(0, n_pairs, batch):
            stop = min(start + batch, n_pairs)
            _kernels._sgd_sweep(
                coords, pair_i, pair_j, targets, perm, start, stop, eta, escape_key, counter_base
            )
        if not np.isfinite(coords).all():
            raise DivergenceError(
                f"non-finite coordinates at epoch {epoch}; reduce initial_step"
            )
    coords -= coords.mean(axis=0)
    final = stress(matrix, coords, (pair_i, pair_j))
    if final > init_stress:
        raise DivergenceError(
            f"final stress {final:.6g} exceeds initial stress {init_stress:.6g}; "
            "reduce initial_step"
        )
    return Embedding(ids=matrix.ids, coords=coords, final_stress=final)


@dataclass(frozen=True)
class FoldPartition:
    """Disjoint, exhaustive split of pair indices into m folds."""

    m: int
    folds: tuple[np.ndarray, ...]
    seed: int


def partition_pairs(n_pairs: int, m: int, seed: int) -> FoldPartition:
    """Randomly split pair indices 0..n_pairs-1 into m folds (sizes within 1)."""
    if m < 2:
        raise DataError("fold count must be >= 2")
    if n_pairs < m:
        raise DataError(f"cannot split {n_pairs} pairs into {m} folds")
    perm = np.random.default_rng(seed).permutation(n_pairs)
    base = n_pairs // m
    extra = n_pairs % m
    folds = []
    pos = 0
    for q in range(m):
        size = base + (1 if q < extra else 0)
        folds.append(np.sort(perm[pos : pos + size]))
        pos += size
    return FoldPartition(m=m, folds=tuple(folds), seed=seed)


@dataclass(frozen=True)
class CvReport:
    """Cross-validation scores per candidate dimension."""

    grid: tuple[int, ...]
    v_scores: tuple[float, ...]
    chosen_k: int


def save_cv_report(report: CvReport, path) -> None:
    with atomic_open(path, "w") as fh:
        json.dump(
            {"grid": list(report.grid), "v": list(report.v_scores), "chosen_k": report.chosen_k},
            fh,
        )
        fh.write("\n")


def load_cv_report(path) -> CvReport:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    return CvReport(tuple(obj["grid"]), tuple(obj["v"]), int(obj["chosen_k"]))


def choose_k(
    matrix: DissimilarityMatrix,
    grid,
    m: int,
    config: SgdConfig,
    seed: int,
    threads: int = 1,
) -> CvReport:
    """Choose the embedding dimension by m-fold cross-validation over pairs.

    For each candidate K and fold q, an embedding is fitted on all pairs
    outside the fold and the squared residuals on the held-out pairs are
    accumulated into V(K); the K with the smallest total wins, ties broken
    toward smaller K. Each (K, fold) fit gets a seed derived from
    (config.seed, K, q), so the report is deterministic and independent of
    scheduling.
    """
    grid = sorted({int(g) for g in grid})
    if not grid:
        raise DataError("candidate grid must be nonempty")
    if any(g < 1 for g in grid):
        raise DataError("candidate dimensions must be >= 1")
    n = matrix.n
    pair_i, pair_j = all_pairs(n)
    n_pairs = pair_i.shape[0]
    partition = partition_pairs(n_pairs, m, seed)

    train_sets: list[PairSet] = []
    test_sets: list[PairSet] = []
    for q, fold in enumerate(partition.folds):
        mask = np.ones(n_pairs, dtype=bool)
        mask[fold] = False
        ti, tj = pair_i[mask], pair_j[mask]
        touched = np.zeros(n, dtype=bool)
        touched[ti] = True
        touched[tj] = True
        if not touched.all():
            missing = int(np.flatnonzero(~touched)[0])
            raise DataError(
                f"point {matrix.ids[missing]!r} has no training pair in fold {q}; "
                "use more folds or more sequences"
            )
        train_sets.append((ti, tj))
        test_sets.append((pair_i[fold], pair_j[fold]))

    def fit_score(k: int, q: int) -> float:
        cfg = replace(config, seed=derive_seed(config.seed, k, q))
        emb = embed(matrix, k, cfg, pairs=train_sets[q])
        return stress(matrix, emb.coords, test_sets[q])

    jobs = [(ki, k, q) for ki, k in enumerate(grid) for q in range(m)]
    v = np.zeros(len(grid))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scores = list(pool.map(lambda job: fit_score(job[1], job[2]), jobs))
        for (ki, _, _), s in zip(jobs, scores):
            v[ki] += s
    else:
        for ki, k, q in jobs:
            v[ki] += fit_score(k, q)

    chosen = grid[int(np.argmin(v))]
    return CvReport(grid=tuple(grid), v_scores=tuple(float(x) for x in v), chosen_k=chosen)


def save_embedding(embedding: Embedding, path) -> None:
    """Write coordinates as CSV: header id,f1,...,fK, 17 significant digits."""
    with atomic_open(path, "w") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", *(f"f{j + 1}" for j in range(embedding.k))])
        for sid, row in zip(embedding.ids, embedding.coords):
            writer.writerow([sid, *(fmt17(x) for x in row)])


def load_embedding(path) -> Embedding:
    with open(path, encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "id":
            raise DataError(f"{path} is not an embedding CSV")
        ids = []
        rows = []
        for row in reader:
            ids.append(row[0])
            rows.append([float(x) for x in row[1:]])
    return Embedding(ids=tuple(ids), coords=np.array(rows, dtype=np.float64))
