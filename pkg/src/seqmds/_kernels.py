"""Hot loops shared by the dissimilarity and embedding modules.

Each kernel is written once in a numba-compatible subset of Python and
compiled with ``@njit(cache=True, nogil=True)`` when numba is importable.
Set SEQMDS_NO_NUMBA=1 to force the interpreted fallback; both paths execute
the same operations in the same order, so results are identical.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    if os.environ.get("SEQMDS_NO_NUMBA"):
        raise ImportError("numba disabled via SEQMDS_NO_NUMBA")
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def _njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap


# ---------------------------------------------------------------------------
# Seeded hash used to pick an escape direction when two embedded points
# coincide (the stress gradient is undefined there).

_MASK64 = (1 << 64) - 1


def _unit_direction_py(out, key: int, counter: int) -> None:
    z = (int(key) ^ (int(counter) * 0x9E3779B97F4A7C15)) & _MASK64
    norm = 0.0
    for k in range(out.shape[0]):
        z = (z + 0x9E3779B97F4A7C15) & _MASK64
        w = z
        w = ((w ^ (w >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        w = ((w ^ (w >> 27)) * 0x94D049BB133111EB) & _MASK64
        w = w ^ (w >> 31)
        out[k] = (w >> 11) * 2.0**-53 * 2.0 - 1.0
        norm += out[k] * out[k]
    norm = math.sqrt(norm)
    if norm == 0.0:
        out[0] = 1.0
        return
    for k in range(out.shape[0]):
        out[k] /= norm


if HAVE_NUMBA:

    @_njit(cache=True, nogil=True)
    def _unit_direction(out, key, counter):  # pragma: no cover - jitted
        mask = np.uint64(_MASK64)
        golden = np.uint64(0x9E3779B97F4A7C15)
        m1 = np.uint64(0xBF58476D1CE4E5B9)
        m2 = np.uint64(0x94D049BB133111EB)
        z = (np.uint64(key) ^ (np.uint64(counter) * golden)) & mask
        norm = 0.0
        for k in range(out.shape[0]):
            z = (z + golden) & mask
            w = z
            w = ((w ^ (w >> np.uint64(30))) * m1) & mask
            w = ((w ^ (w >> np.uint64(27))) * m2) & mask
            w = w ^ (w >> np.uint64(31))
            out[k] = (w >> np.uint64(11)) * 2.0**-53 * 2.0 - 1.0
            norm += out[k] * out[k]
        norm = math.sqrt(norm)
        if norm == 0.0:
            out[0] = 1.0
            return
        for k in range(out.shape[0]):
            out[k] /= norm

else:
    _unit_direction = _unit_direction_py


# ---------------------------------------------------------------------------
# Pairwise sequence dissimilarity.
#
# Sequences are flattened into occurrence tables: for sequence i,
# act_off[i]:act_off[i+1] indexes its distinct actions (ascending ids in
# act_ids, occurrence counts in act_cnt) and pos_off[e] points at the
# 1-based occurrence positions in pos_flat for entry e.


@_njit(cache=True, nogil=True)
def _pair_dissim(lengths, act_off, act_ids, act_cnt, pos_off, pos_flat, i, j):
    pa = act_off[i]
    ae = act_off[i + 1]
    pb = act_off[j]
    be = act_off[j + 1]
    f_int = 0
    g = 0
    while pa < ae and pb < be:
        da = act_ids[pa]
        db = act_ids[pb]
        if da == db:
            ca = act_cnt[pa]
            cb = act_cnt[pb]
            m = ca if ca < cb else cb
            oa = pos_off[pa]
            ob = pos_off[pb]
            for k in range(m):
                diff = pos_flat[oa + k] - pos_flat[ob + k]
                f_int += diff if diff >= 0 else -diff
            pa += 1
            pb += 1
        elif da < db:
            g += act_cnt[pa]
            pa += 1
        else:
            g += act_cnt[pb]
            pb += 1
    while pa < ae:
        g += act_cnt[pa]
        pa += 1
    while pb < be:
        g += act_cnt[pb]
        pb += 1
    li = lengths[i]
    lj = lengths[j]
    max_l = li if li > lj else lj
    f = f_int / max_l
    return (f + g) / (li + lj)


@_njit(cache=True, nogil=True)
def _fill_rows(values, row_start, row_end, lengths, act_off, act_ids, act_cnt, pos_off, pos_flat):
    n = values.shape[0]
    for i in range(row_start, row_end):
        for j in range(i + 1, n):
            d = _pair_dissim(lengths, act_off, act_ids, act_cnt, pos_off, pos_flat, i, j)
            values[i, j] = d
            values[j, i] = d


def build_occurrence_tables(sequences):
    """Flatten sequences into the CSR-style arrays used by the pair kernel."""
    n = len(sequences)
    lengths = np.empty(n, dtype=np.int64)
    act_off = np.zeros(n + 1, dtype=np.int64)
    ids_parts = []
    cnt_parts = []
    pos_parts = []
    for i, seq in enumerate(sequences):
        a = np.asarray(seq.actions, dtype=np.int64)
        lengths[i] = a.shape[0]
        order = np.argsort(a, kind="stable")
        sorted_a = a[order]
        distinct, counts = np.unique(sorted_a, return_counts=True)
        act_off[i + 1] = act_off[i] + distinct.shape[0]
        ids_parts.append(distinct)
        cnt_parts.append(counts.astype(np.int64))
        pos_parts.append(order.astype(np.int64) + 1)
    act_ids = np.concatenate(ids_parts)
    act_cnt = np.concatenate(cnt_parts)
    pos_flat = np.concatenate(pos_parts)
    pos_off = np.empty(act_ids.shape[0], dtype=np.int64)
    if act_ids.shape[0]:
        ends = np.cumsum(act_cnt)
        pos_off[:] = ends - act_cnt
    return lengths, act_off, act_ids, act_cnt, pos_off, pos_flat


# ---------------------------------------------------------------------------
# Stress-minimizing per-pair gradient sweeps.


@_njit(cache=True, nogil=True)
def _sgd_sweep(coords, pair_i, pair_j, targets, perm, start, stop, eta, escape_key, counter_base):
    K = coords.shape[1]
    u = np.empty(K, dtype=np.float64)
    for t in range(start, stop):
        p = perm[t]
        i = pair_i[p]
        j = pair_j[p]
        sq = 0.0
        for k in range(K):
            diff = coords[i, k] - coords[j, k]
            sq += diff * diff
        r = math.sqrt(sq)
        dij = targets[p]
        if r < 1e-12:
            _unit_direction(u, escape_key, counter_base + t)
            c = 2.0 * eta * dij
            for k in range(K):
                coords[i, k] += c * u[k]
                coords[j, k] -= c * u[k]
        else:
            c = 2.0 * eta * (dij - r) / r
            for k in range(K):
                diff = coords[i, k] - coords[j, k]
                coords[i, k] += c * diff
                coords[j, k] -= c * diff
