"""Explanatory-virtue scoring for explanations of small fixed-point networks."""

from . import explainers  # noqa: F401  (registers the explanation families)
from .coding import BackgroundTheory, default_theory, load_theory
from .explanation import EditOp, Explanation, apply_edit, deserialize, log_likelihood, serialize
from .observations import Dataset, Observation
from .toymodels import TASKS, ToyNet, train_toy

__version__ = "0.1.0"

__all__ = [
    "BackgroundTheory",
    "Dataset",
    "EditOp",
    "Explanation",
    "Observation",
    "TASKS",
    "ToyNet",
    "__version__",
    "apply_edit",
    "default_theory",
    "deserialize",
    "load_theory",
    "log_likelihood",
    "serialize",
    "train_toy",
]
