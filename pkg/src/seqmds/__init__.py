"""seqmds: latent features for categorical action sequences.

Variable-length action sequences are compared with an order-sensitive
pairwise dissimilarity, embedded in a fixed-dimension space by minimizing
least-squares stress with stochastic gradient descent, and rotated into
principal features. Prediction harnesses quantify how much information the
features retain, and a Markov-chain simulator generates labeled corpora.
"""

from .corpus import (
    ActionSequence,
    Alphabet,
    Corpus,
    SplitAssignment,
    load_alphabet,
    load_corpus,
    save_alphabet,
    save_corpus,
    save_split,
    split_corpus,
    split_ids,
)
from .dissim import (
    DissimilarityMatrix,
    OccurrenceIndex,
    common_part,
    dissimilarity,
    dissimilarity_matrix,
    export_matrix_csv,
    load_matrix,
    save_matrix,
    unique_part,
)
from .errors import (
    AlphabetMismatchError,
    CorpusFormatError,
    DataError,
    DivergenceError,
    FitWarning,
    NumericalError,
    SeqmdsError,
    SingularDesignError,
)
from .experiments import (
    DerivedVariableSet,
    ExperimentReport,
    StudyConfig,
    derive_variables,
    forward_aic_order,
    load_report,
    run_cross_outcome,
    run_latent_recovery,
    run_reconstruction,
    run_score_prediction,
    run_simulation_study,
    save_derived,
    save_report,
    save_report_csv,
)
from .glm import (
    DesignMatrix,
    GlmModel,
    Metrics,
    default_l2_grid,
    evaluate,
    fit_linear,
    fit_logistic,
    load_model,
    make_design,
    predict_class,
    predict_response,
    save_metrics,
    save_model,
    select_l2,
)
from .mds import (
    CvReport,
    Embedding,
    FoldPartition,
    SgdConfig,
    all_pairs,
    choose_k,
    embed,
    load_cv_report,
    load_embedding,
    pair_stress_gradient,
    partition_pairs,
    save_cv_report,
    save_embedding,
    stress,
)
from .pca import PcaModel, fit_pca, load_pca, save_pca, transform
from .pipeline import FeatureExtraction, extract_features
from .simulate import (
    GroundTruth,
    LogitMatrix,
    SIMULATION_ALPHABET,
    TransitionModel,
    draw_logit_matrix,
    generate_corpus,
    generate_sequence,
    load_truth,
    save_truth,
    softmax_core,
    stream,
)

__version__ = "0.1.0"
