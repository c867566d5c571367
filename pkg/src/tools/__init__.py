"""Metric and validation tools for ability diagnosis"""

from src.tools._shared import Estimate, sigmoid, summarize
from src.tools.stats import accuracy_by_dimension, auc, dim_accuracy, spearman
from src.tools.validation import (
    ConsistencyTable,
    ValidityTable,
    classify,
    consistency,
    criterion_validity,
    validity_from_profiles,
    validity_summary,
)

__all__ = [
    "Estimate",
    "sigmoid",
    "summarize",
    "auc",
    "spearman",
    "dim_accuracy",
    "accuracy_by_dimension",
    "classify",
    "criterion_validity",
    "validity_from_profiles",
    "validity_summary",
    "consistency",
    "ValidityTable",
    "ConsistencyTable",
]
