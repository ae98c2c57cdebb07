"""Imbalance-aware text classification toolkit.

Dataset merging and balancing, social-media text normalization,
similarity-based minority augmentation, linear / naive Bayes models trained
under cross-entropy, weighted binary cross-entropy or focal loss, soft and
hard voting ensembles with exhaustive subset search, and two-stage
category -> fine-class prediction.
"""

__version__ = "0.1.0"

from .corpus import (  # noqa: E402
    ClassDistribution,
    Dataset,
    Document,
    LabelHierarchy,
    balance_binary,
    class_stats,
    imbalance_weight,
    load_csv,
    merge,
    stratified_split,
)
from .ensemble import (  # noqa: E402
    EnsembleSpec,
    HierarchicalSpec,
    hard_vote,
    predict_ensemble,
    predict_hierarchical,
    search_subsets,
    soft_vote,
)
from .features import cosine_similarity, fit_tfidf, load_embeddings  # noqa: E402
from .metrics import confusion, macro_f1, report  # noqa: E402
from .models import LossSpec, adamw_step, loss_gradient, loss_value, train_linear, train_nb  # noqa: E402
from .textnorm import NormConfig, normalize, substitute_lexical  # noqa: E402
