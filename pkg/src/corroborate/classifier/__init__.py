from .forest import (
    BackboneModel,
    DecisionTree,
    ForestConfig,
    RandomForest,
    gini,
    predict_proba,
    train_forest,
)
from .smote import SmoteConfig, smote_balance
from .split import split_by_session, split_train_test

__all__ = [
    "BackboneModel",
    "DecisionTree",
    "ForestConfig",
    "RandomForest",
    "SmoteConfig",
    "gini",
    "predict_proba",
    "smote_balance",
    "split_by_session",
    "split_train_test",
    "train_forest",
]
