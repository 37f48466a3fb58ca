"""Action-sequence data model and serialized formats.

A corpus is a list of variable-length action sequences over a shared finite
alphabet. Sequences are stored on disk as JSON Lines (one object per
sequence, keys "id" and "actions"); actions are stored as names and mapped
to integer indices in memory.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from ._util import atomic_open
from .errors import CorpusFormatError, DataError


@dataclass(frozen=True)
class Alphabet:
    """Ordered set of distinct action names."""

    symbols: tuple[str, ...]
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        index = {name: i for i, name in enumerate(self.symbols)}
        if len(index) != len(self.symbols):
            raise CorpusFormatError("alphabet contains duplicate action names")
        object.__setattr__(self, "_index", index)

    @property
    def size(self) -> int:
        return len(self.symbols)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise CorpusFormatError(f"unknown action name {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._index


@dataclass(frozen=True)
class ActionSequence:
    """One response process: an ordered run of alphabet indices."""

    id: str
    actions: tuple[int, ...]
    alphabet: Alphabet

    def __post_init__(self):
        if len(self.actions) < 1:
            raise CorpusFormatError(f"sequence {self.id!r} is empty")
        n = self.alphabet.size
        for a in self.actions:
            if not 0 <= a < n:
                raise CorpusFormatError(
                    f"sequence {self.id!r} has action index {a} outside alphabet"
                )

    @property
    def length(self) -> int:
        return len(self.actions)

    def names(self) -> list[str]:
        return [self.alphabet.symbols[a] for a in self.actions]


@dataclass(frozen=True)
class Corpus:
    """Immutable collection of sequences over one alphabet."""

    alphabet: Alphabet
    sequences: tuple[ActionSequence, ...]

    def __post_init__(self):
        seen = set()
        for s in self.sequences:
            if s.alphabet != self.alphabet:
                raise CorpusFormatError(f"sequence {s.id!r} uses a different alphabet")
            if s.id in seen:
                raise CorpusFormatError(f"duplicate sequence id {s.id!r}")
            seen.add(s.id)

    @property
    def n(self) -> int:
        return len(self.sequences)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.sequences)


def load_alphabet(path) -> Alphabet:
    """Read an alphabet file: UTF-8, one action name per line."""
    with open(path, encoding="utf-8") as fh:
        names = [line.rstrip("\n") for line in fh]
    names = [n for n in names if n != ""]
    if not names:
        raise CorpusFormatError(f"alphabet file {path} is empty")
    return Alphabet(tuple(names))


def save_alphabet(alphabet: Alphabet, path) -> None:
    with atomic_open(path) as fh:
        for name in alphabet.symbols:
            fh.write(name + "\n")


def load_corpus(path, format: str = "jsonl", alphabet: Alphabet | None = None) -> Corpus:
    """Load a corpus from a JSON Lines file.

    Unless an explicit `alphabet` is given, the alphabet is the union of
    observed actions in first-appearance order. Malformed records are
    reported with their 1-based line number.
    """
    if format != "jsonl":
        raise DataError(f"unsupported corpus format {format!r}")
    records: list[tuple[str, list[str]]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"malformed JSON at line {lineno}: {exc}") from None
            if not isinstance(obj, dict) or "id" not in obj or "actions" not in obj:
                raise CorpusFormatError(
                    f"record at line {lineno} must be an object with 'id' and 'actions'"
                )
            actions = obj["actions"]
            if not isinstance(actions, list) or not all(isinstance(a, str) for a in actions):
                raise CorpusFormatError(f"'actions' at line {lineno} must be a list of strings")
            if len(actions) == 0:
                raise CorpusFormatError(f"empty sequence at line {lineno}")
            records.append((str(obj["id"]), actions))
    if not records:
        raise CorpusFormatError(f"corpus file {path} contains no sequences")

    if alphabet is None:
        seen: dict[str, None] = {}
        for _, actions in records:
            for a in actions:
                seen.setdefault(a)
        alphabet = Alphabet(tuple(seen))

    sequences = tuple(
        ActionSequence(sid, tuple(alphabet.index(a) for a in actions), alphabet)
        for sid, actions in records
    )
    return Corpus(alphabet, sequences)


def save_corpus(corpus: Corpus, path) -> None:
    """Write a corpus as JSON Lines, actions as names."""
    with atomic_open(path) as fh:
        for s in corpus.sequences:
            fh.write(json.dumps({"id": s.id, "actions": s.names()}) + "\n")


_SPLIT_LABELS = {2: ("train", "test"), 3: ("train", "val", "test")}


@dataclass(frozen=True)
class SplitAssignment:
    """Partition of sequence ids into labeled splits."""

    ratios: tuple[int, ...]
    seed: int
    labels: tuple[str, ...]
    assignment: dict[str, str]

    def ids_for(self, label: str) -> list[str]:
        return [sid for sid, lab in self.assignment.items() if lab == label]

    def indices_for(self, label: str, ids) -> np.ndarray:
        """Row indices of `ids` belonging to `label`, in the order of `ids`."""
        return np.array(
            [k for k, sid in enumerate(ids) if self.assignment[sid] == label], dtype=np.int64
        )


def split_labels(n_splits: int) -> tuple[str, ...]:
    return _SPLIT_LABELS.get(n_splits, tuple(f"split{i}" for i in range(n_splits)))


def split_ids(ids, ratios, seed: int) -> SplitAssignment:
    """Randomly partition a list of ids into splits with the given ratios.

    Sizes are floor(n * r_i / sum(r)); leftover items go to the earliest
    splits, one each. Deterministic given the seed.
    """
    ids = list(ids)
    ratios = tuple(int(r) for r in ratios)
    if not ratios or any(r <= 0 for r in ratios):
        raise DataError("ratios must be a nonempty list of positive integers")
    n = len(ids)
    if n < len(ratios):
        raise DataError(f"cannot split {n} items into {len(ratios)} parts")

    total = sum(ratios)
    sizes = [n * r // total for r in ratios]
    for i in range(n - sum(sizes)):
        sizes[i] += 1

    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    labels = split_labels(len(ratios))
    assignment: dict[str, str] = {}
    pos = 0
    for label, size in zip(labels, sizes):
        for k in order[pos : pos + size]:
            assignment[ids[k]] = label
        pos += size
    return SplitAssignment(ratios=ratios, seed=seed, labels=labels, assignment=assignment)


def split_corpus(corpus: Corpus, ratios, seed: int) -> SplitAssignment:
    """Randomly partition a corpus's sequence ids; see split_ids."""
    return split_ids(corpus.ids, ratios, seed)


def save_split(split: SplitAssignment, path) -> None:
    """Write a split assignment as CSV with columns id,split."""
    with atomic_open(path, "w") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "split"])
        for sid, label in split.assignment.items():
            writer.writerow([sid, label])
