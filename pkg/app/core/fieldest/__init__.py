"""Оценка гладкого поля деформации по зашумлённым сопоставлениям."""
from app.core.fieldest.estimator import (
    EstimatorParams,
    FieldEstimate,
    FieldEstimationError,
    estimate_field,
    node_uncertainty,
)

__all__ = ["EstimatorParams", "FieldEstimate", "FieldEstimationError", "estimate_field", "node_uncertainty"]
