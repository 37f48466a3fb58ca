"""Small shared helpers: seed derivation, atomic file writes, float formatting."""

from __future__ import annotations

import os
import tempfile
from contextlib import contextmanager

import numpy as np

_U64 = 2**64


def derive_seed(*parts: int) -> int:
    """Derive a child seed from integer parts via numpy's SeedSequence hash.

    Deterministic across platforms; negative parts are folded into uint64.
    """
    entropy = [int(p) % _U64 for p in parts]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


@contextmanager
def atomic_open(path, mode: str = "w"):
    """Open a temp file next to `path`, rename over it on success."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, mode, encoding=None if "b" in mode else "utf-8") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def fmt17(x: float) -> str:
    """Format a float with 17 significant digits (round-trip exact)."""
    return format(float(x), ".17g")
