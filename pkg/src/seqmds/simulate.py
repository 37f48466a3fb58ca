"""Markov-chain simulator for synthetic action-sequence corpora.

The alphabet is the 26 uppercase letters with A the start action and Z the
end action; every generated sequence starts with A and ends at the first Z.
Transition rows over the 25 non-start actions come from softmax-transformed
logit matrices, either two fixed matrices defining two latent groups
("group" strategy) or one matrix scaled per sequence by a latent trait
drawn from a normal with mean 0 and variance 4 ("continuous" strategy).

Randomness uses counter-based Philox streams keyed by (seed, stream index):
sequence i draws from stream i, setup draws (logit matrices, traits) from
streams >= 2**63, so corpora are reproducible under any scheduling.
"""

from __future__ import annotations

import csv
import string
from dataclasses import dataclass

import numpy as np

from ._util import atomic_open
from .corpus import ActionSequence, Alphabet, Corpus
from .errors import CorpusFormatError, DataError, NumericalError

SIMULATION_ALPHABET = Alphabet(tuple(string.ascii_uppercase))
N_ACTIONS = 26
_START = 0
_END = N_ACTIONS - 1
_SETUP_STREAM = 2**63

DEFAULT_MAX_LEN = 10_000
DEFAULT_RESAMPLES = 100


def stream(seed: int, index: int) -> np.random.Generator:
    """Philox generator for one (seed, stream index) pair."""
    key = np.array([int(seed) % 2**64, int(index) % 2**64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class LogitMatrix:
    """Transition logits over the 25 non-start actions, uniform on [-10, 10]."""

    U: np.ndarray

    def __post_init__(self):
        if self.U.shape != (N_ACTIONS - 1, N_ACTIONS - 1):
            raise DataError(f"logit matrix must be {N_ACTIONS - 1}x{N_ACTIONS - 1}")
        if np.abs(self.U).max() > 10.0:
            raise DataError("logit entries must lie in [-10, 10]")


def draw_logit_matrix(rng: np.random.Generator) -> LogitMatrix:
    return LogitMatrix(rng.uniform(-10.0, 10.0, size=(N_ACTIONS - 1, N_ACTIONS - 1)))


def softmax_core(U: LogitMatrix, theta: float) -> np.ndarray:
    """Row-softmax of theta * U, with per-row max subtraction against overflow."""
    z = float(theta) * U.U
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class TransitionModel:
    """Row-stochastic transition matrix over the full 26-action alphabet.

    The start action is never a transition target (first column zero) and
    the end action is absorbing (last row is its own unit vector). The
    chain is fully determined by the core block rows 0..24, columns 1..25.
    """

    P: np.ndarray

    def __post_init__(self):
        P = self.P
        if P.shape != (N_ACTIONS, N_ACTIONS):
            raise DataError(f"transition matrix must be {N_ACTIONS}x{N_ACTIONS}")
        if (P < 0).any():
            raise DataError("transition probabilities must be nonnegative")
        if (P[:, _START] != 0).any():
            raise DataError("the start action must never be a transition target")
        expected_last = np.zeros(N_ACTIONS)
        expected_last[_END] = 1.0
        if (P[_END] != expected_last).any():
            raise DataError("the end action row must be its own unit vector")
        if np.abs(P.sum(axis=1) - 1.0).max() > 1e-12:
            raise DataError("transition rows must sum to 1 within 1e-12")

    @classmethod
    def from_core(cls, core: np.ndarray) -> TransitionModel:
        core = np.asarray(core, dtype=np.float64)
        P = np.zeros((N_ACTIONS, N_ACTIONS))
        P[: N_ACTIONS - 1, 1:] = core
        P[_END] = 0.0
        P[_END, _END] = 1.0
        return cls(P)

    @property
    def core(self) -> np.ndarray:
        return self.P[: N_ACTIONS - 1, 1:]


def generate_sequence(
    model: TransitionModel,
    rng: np.random.Generator,
    seq_id: str,
    max_len: int = DEFAULT_MAX_LEN,
    resamples: int = DEFAULT_RESAMPLES,
) -> ActionSequence:
    """Sample one sequence: start at A, follow the chain until Z.

    Runs exceeding max_len actions are discarded and redrawn, up to
    `resamples` times; a model whose chains keep exceeding the cap raises
    NumericalError.
    """
    row_cum = np.cumsum(model.P, axis=1)
    for _ in range(resamples + 1):
        actions = [_START]
        state = _START
        while len(actions) < max_len:
            u = rng.random()
            nxt = int(np.searchsorted(row_cum[state], u, side="right"))
            if nxt > _END:
                nxt = _END
            actions.append(nxt)
            if nxt == _END:
                return ActionSequence(seq_id, tuple(actions), SIMULATION_ALPHABET)
            state = nxt
    raise NumericalError(
        f"sequence {seq_id!r} exceeded {max_len} actions in {resamples + 1} attempts; "
        "the transition model may not terminate"
    )


@dataclass(frozen=True)
class GroundTruth:
    """Per-sequence latent truth: group labels or continuous trait values."""

    kind: str
    ids: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in ("group", "continuous"):
            raise DataError(f"unknown ground-truth kind {self.kind!r}")
        if len(self.ids) != self.values.shape[0]:
            raise DataError("ids and values must align")


def generate_corpus(
    strategy: str,
    n: int,
    seed: int,
    max_len: int = DEFAULT_MAX_LEN,
    resamples: int = DEFAULT_RESAMPLES,
) -> tuple[Corpus, GroundTruth]:
    """Generate a labeled corpus under the given strategy.

    "group": two logit matrices define two transition models; the first n/2
    sequences come from the first model (label 0), the rest from the second
    (label 1). "continuous": one logit matrix, one trait value per sequence
    drawn from Normal(0, variance 4), each sequence generated from its own
    softmax-scaled core.
    """
    if n < 1:
        raise DataError("n must be positive")
    ids = tuple(f"s{i}" for i in range(n))
    if strategy == "group":
        if n % 2:
            raise DataError("the group strategy needs an even n")
        models = [
            TransitionModel.from_core(
                softmax_core(draw_logit_matrix(stream(seed, _SETUP_STREAM + g)), 1.0)
            )
            for g in (0, 1)
        ]
        labels = np.repeat([0, 1], n // 2)
        sequences = tuple(
            generate_sequence(models[labels[i]], stream(seed, i), ids[i], max_len, resamples)
            for i in range(n)
        )
        truth = GroundTruth("group", ids, labels.astype(np.int64))
    elif strategy == "continuous":
        U = draw_logit_matrix(stream(seed, _SETUP_STREAM))
        theta0 = stream(seed, _SETUP_STREAM + 2).normal(0.0, 2.0, size=n)
        sequences = tuple(
            generate_sequence(
                TransitionModel.from_core(softmax_core(U, theta0[i])),
                stream(seed, i),
                ids[i],
                max_len,
                resamples,
            )
            for i in range(n)
        )
        truth = GroundTruth("continuous", ids, theta0)
    else:
        raise DataError(f"unknown strategy {strategy!r}")
    return Corpus(SIMULATION_ALPHABET, sequences), truth


def save_truth(truth: GroundTruth, path) -> None:
    """Write ground truth as CSV: id,label (group) or id,theta0 (continuous)."""
    column = "label" if truth.kind == "group" else "theta0"
    with atomic_open(path, "w") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", column])
        for sid, val in zip(truth.ids, truth.values):
            writer.writerow([sid, int(val) if truth.kind == "group" else repr(float(val))])


def load_truth(path) -> GroundTruth:
    with open(path, encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header == ["id", "label"]:
            kind = "group"
        elif header == ["id", "theta0"]:
            kind = "continuous"
        else:
            raise CorpusFormatError(f"{path} must have columns id,label or id,theta0")
        ids = []
        values = []
        for row in reader:
            ids.append(row[0])
            values.append(float(row[1]))
    arr = np.array(values)
    if kind == "group":
        arr = arr.astype(np.int64)
    return GroundTruth(kind, tuple(ids), arr)
