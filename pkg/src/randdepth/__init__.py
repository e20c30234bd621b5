"""Regression-tree ensembles with random tree depth, a synthetic data generator and tuning experiments."""

__version__ = "0.1.0"

from .boost import (
    AdaBoostModel,
    BoostConfig,
    BoostModel,
    adaboost_alpha,
    fit_adaboost,
    fit_boost,
    predict_adaboost,
    predict_boost,
    staged_predict,
)
from .cart import (
    RegressionTree,
    SplitCandidate,
    TreeConfig,
    best_split,
    count_splits,
    grow_tree,
    leaf_count,
    predict_tree,
    tree_depth,
)
from .core import ContractError, Dataset, IndexSample, RngStream, draw_sample, mse, read_csv, subsample_folds, write_csv
from .forest import ForestConfig, ForestModel, expected_relative_splits, fit_forest, predict_forest, predict_forest_batch
from .friedman import FriedmanSpec, GeneratedData, evaluate_signal, generate, make_friedman, sample_spec
from .io import load_model, save_model
from .tuning import (
    Candidate,
    Learner,
    ParamSpace,
    ParetoFront,
    evaluate_candidate,
    hybrid_tune_fit,
    nondominated_filter,
    nsga2,
    random_search,
)
