"""Principal-component rotation of raw embedding features.

Centering only, no rescaling: the raw features share one geometric scale,
and standardizing would distort it. Covariance uses the 1/(n-1) convention.
The rotation preserves pairwise distances, so the stress of the rotated
embedding equals that of the raw one.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from ._util import atomic_open
from .errors import DataError
from .mds import Embedding


@dataclass(frozen=True)
class PcaModel:
    """Orthogonal component basis with explained variances.

    components holds one principal direction per column, sorted by
    explained variance, descending. Sign convention: the entry of largest
    absolute value in each column is positive.
    """

    mean: np.ndarray
    components: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        k = self.mean.shape[0]
        if self.components.shape != (k, k) or self.variances.shape != (k,):
            raise DataError("inconsistent model dimensions")
        identity_gap = np.abs(self.components.T @ self.components - np.eye(k)).max()
        if identity_gap > 1e-10:
            raise DataError(f"components not orthonormal (gap {identity_gap:.2e})")
        if np.any(np.diff(self.variances) > 0):
            raise DataError("variances must be nonincreasing")

    @property
    def k(self) -> int:
        return self.mean.shape[0]


def fit_pca(raw: Embedding) -> PcaModel:
    """Fit the principal rotation of the raw features."""
    x = np.asarray(raw.coords, dtype=np.float64)
    if not np.isfinite(x).all():
        raise DataError("raw features contain non-finite values")
    n, k = x.shape
    if n <= k:
        warnings.warn(
            f"fitting PCA with n={n} <= K={k}: trailing variances will be zero",
            stacklevel=2,
        )
    mean = x.mean(axis=0)
    centered = x - mean
    cov = (centered.T @ centered) / max(n - 1, 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    variances = np.maximum(evals[order], 0.0)
    components = evecs[:, order]
    # sign convention: largest-magnitude entry of each component positive
    for j in range(k):
        col = components[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            components[:, j] = -col
    return PcaModel(mean=mean, components=components, variances=variances)


def transform(model: PcaModel, raw: Embedding) -> Embedding:
    """Rotate raw features into principal features."""
    x = np.asarray(raw.coords, dtype=np.float64)
    if x.shape[1] != model.k:
        raise DataError(f"embedding has {x.shape[1]} features, model expects {model.k}")
    coords = (x - model.mean) @ model.components
    return Embedding(ids=raw.ids, coords=coords, final_stress=raw.final_stress)


def save_pca(model: PcaModel, path) -> None:
    with atomic_open(path, "w") as fh:
        json.dump(
            {
                "mean": model.mean.tolist(),
                "components": model.components.tolist(),
                "variances": model.variances.tolist(),
            },
            fh,
        )
        fh.write("\n")


def load_pca(path) -> PcaModel:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    return PcaModel(
        mean=np.array(obj["mean"], dtype=np.float64),
        components=np.array(obj["components"], dtype=np.float64),
        variances=np.array(obj["variances"], dtype=np.float64),
    )
