"""Model fitters used inside the test statistics."""

from .forest import ForestFit, fit_forest, forest_importance
from .glm import GlmFit, fit_glm, glm_deviance
from .lasso import LassoFit, fit_lasso, fit_lasso_cv, lambda_max, lasso_path

__all__ = [
    "ForestFit",
    "GlmFit",
    "LassoFit",
    "fit_forest",
    "fit_glm",
    "fit_lasso",
    "fit_lasso_cv",
    "forest_importance",
    "glm_deviance",
    "lambda_max",
    "lasso_path",
]
