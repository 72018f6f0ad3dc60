"""Explanation families. Importing this package registers every codec."""

from .circuit import CircuitExplanation, FCMScores, agreement, discover_circuit, fcm_scores, full_circuit
from .clustering import ClusteringExplanation, fit_clustering, uniform_guess
from .dictionary import DictionaryExplanation, atom_deletion_ops, fit_dictionary
from .mixture import MixtureExplanation, MixtureLoglik, fit_mixture, mixture_loglik
from .straightforward import StraightforwardExplanation, straightforward

__all__ = [
    "CircuitExplanation",
    "ClusteringExplanation",
    "DictionaryExplanation",
    "FCMScores",
    "MixtureExplanation",
    "MixtureLoglik",
    "StraightforwardExplanation",
    "agreement",
    "atom_deletion_ops",
    "discover_circuit",
    "fcm_scores",
    "fit_clustering",
    "fit_dictionary",
    "fit_mixture",
    "full_circuit",
    "mixture_loglik",
    "straightforward",
    "uniform_guess",
]
