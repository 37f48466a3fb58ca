"""End-to-end feature extraction: dissimilarities -> embedding -> rotation.

Single-shot equivalent of running the staged steps through files; given the
same seeds, the staged and single-shot routes produce identical results.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import Corpus
from .dissim import DissimilarityMatrix, dissimilarity_matrix
from .errors import DataError
from .mds import CvReport, Embedding, SgdConfig, choose_k, embed
from .pca import PcaModel, fit_pca, transform


@dataclass(frozen=True)
class FeatureExtraction:
    """Everything produced by one extraction run."""

    matrix: DissimilarityMatrix
    cv_report: CvReport | None
    raw: Embedding
    pca_model: PcaModel
    principal: Embedding

    @property
    def k(self) -> int:
        return self.raw.k


def extract_features(
    corpus: Corpus,
    *,
    k: int | None = None,
    grid=None,
    folds: int = 5,
    config: SgdConfig,
    cv_config: SgdConfig | None = None,
    cv_seed: int | None = None,
    threads: int = 1,
) -> FeatureExtraction:
    """Extract fixed-dimension features from an action-sequence corpus.

    If `k` is None the dimension is chosen by `folds`-fold cross-validation
    over the candidate `grid` (pair folds seeded by `cv_seed`, fold fits
    configured by `cv_config`, defaulting to `config`); the final embedding
    is then refit on all pairs with `config`.
    """
    matrix = dissimilarity_matrix(corpus, threads=threads)
    cv_report = None
    if k is None:
        if grid is None or cv_seed is None:
            raise DataError("either k or (grid, cv_seed) must be given")
        cv_report = choose_k(matrix, grid, folds, cv_config or config, cv_seed, threads=threads)
        k = cv_report.chosen_k
    raw = embed(matrix, k, config)
    model = fit_pca(raw)
    principal = transform(model, raw)
    return FeatureExtraction(
        matrix=matrix, cv_report=cv_report, raw=raw, pca_model=model, principal=principal
    )
