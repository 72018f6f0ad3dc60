"""Causal circuits over per-neuron edge blocks, with ablation-based FCM scores.

Edge ``(l, i)`` is the block of out-weights from neuron i of layer value l
into layer l+1. Masked edges see the ablation value instead of the neuron's
actual activation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..coding import TokenReader, uint_digits
from ..errors import DecodeError
from ..explanation import Explanation, one_hot, register
from ..observations import all_inputs, bits_to_index
from ..toymodels import ToyNet

ABLATIONS = {"mean": "abl.mean", "zero": "abl.zero"}
EXHAUSTIVE_LIMIT = 4096


def edges(m: ToyNet) -> list[tuple[int, int]]:
    return [(l, i) for l in range(m.n_layers) for i in range(m.layer_sizes[l])]


def n_edges(m: ToyNet) -> int:
    return sum(m.layer_sizes[:-1])


@lru_cache(maxsize=64)
def _mean_acts(m: ToyNet) -> tuple[np.ndarray, ...]:
    acts = m.activations(all_inputs(m.n_inputs))
    # floor mean keeps ablation values on the Q8.24 grid
    return tuple(a.sum(axis=0) // len(a) for a in acts[:-1])


def ablation_values(m: ToyNet, kind: str) -> tuple[np.ndarray, ...]:
    if kind == "zero":
        return tuple(np.zeros(s, dtype=np.int64) for s in m.layer_sizes[:-1])
    if kind == "mean":
        return _mean_acts(m)
    raise ValueError(f"unknown ablation {kind!r}")


def layer_masks(m: ToyNet, active) -> list[np.ndarray]:
    """Boolean keep-mask per layer value from a set of active edge ids."""
    masks = [np.zeros(s, dtype=bool) for s in m.layer_sizes[:-1]]
    for e, (l, i) in enumerate(edges(m)):
        if e in active:
            masks[l][i] = True
    return masks


def ablated_logits(m: ToyNet, active, ablation: str = "mean", X=None) -> np.ndarray:
    X = all_inputs(m.n_inputs) if X is None else np.asarray(X)
    masks = layer_masks(m, set(active))
    vals = ablation_values(m, ablation)
    a = m.activations(X)[0]
    for l in range(m.n_layers):
        a = m.layer_step(l, np.where(masks[l], a, vals[l]))
    return a


def agreement(m: ToyNet, active, ablation: str = "mean") -> float:
    """F: fraction of enumerated inputs where the ablated net matches the model."""
    labels = np.argmax(ablated_logits(m, active, ablation), axis=1)
    return float(np.mean(labels == m.enumerate_labels()))


@register
@dataclass(frozen=True, eq=False)
class CircuitExplanation(Explanation):
    model: ToyNet = field(repr=False)
    edge_ids: tuple[int, ...]
    ablation: str = "mean"

    family = "circuit"
    symbols = ("abl.mean", "abl.zero")

    def __post_init__(self):
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}")
        object.__setattr__(self, "edge_ids", tuple(int(e) for e in self.edge_ids))
        labels = np.argmax(ablated_logits(self.model, self.active, self.ablation), axis=1)
        object.__setattr__(self, "_proba", one_hot(labels, self.model.n_labels))

    @property
    def active(self) -> frozenset[int]:
        return frozenset(e for e in self.edge_ids if 0 <= e < n_edges(self.model))

    @property
    def n_inputs(self) -> int:
        return self.model.n_inputs

    @property
    def n_labels(self) -> int:
        return self.model.n_labels

    @property
    def entity_count(self) -> int:
        return len(self.active)

    def predict_proba(self, X):
        X = np.asarray(X)
        self.check_inputs(X)
        return self._proba[bits_to_index(X)]

    def faithfulness(self) -> float:
        return agreement(self.model, self.active, self.ablation)

    def consistency_issues(self) -> list[str]:
        issues = []
        E = n_edges(self.model)
        bad = [e for e in self.edge_ids if not 0 <= e < E]
        if bad:
            issues.append(f"mask references edges {bad} that the model does not have")
        if len(set(self.edge_ids)) != len(self.edge_ids):
            issues.append("mask lists an edge twice")
        return issues

    def tokens(self) -> list:
        toks = [self.family, ABLATIONS[self.ablation]] + uint_digits(len(self.edge_ids), 2)
        for e in self.edge_ids:
            toks += uint_digits(e, 2)
        return toks

    def entity_spans(self):
        return [(4 + 2 * k, 6 + 2 * k) for k in range(len(self.edge_ids))]

    @classmethod
    def parse(cls, reader: TokenReader, context=None):
        if context is None:
            raise DecodeError("circuit explanations decode against a model")
        abl = reader.expect(*ABLATIONS.values()).split(".", 1)[1]
        count = reader.uint(2)
        ids = tuple(reader.uint(2) for _ in range(count))
        return cls(context, ids, abl)


def full_circuit(m: ToyNet, ablation: str = "mean") -> CircuitExplanation:
    return CircuitExplanation(m, tuple(range(n_edges(m))), ablation)


# -- FCM scores ------------------------------------------------------------


@dataclass(frozen=True)
class FCMScores:
    faithfulness: float
    incompleteness_max: float
    minimality_per_node: dict[int, float]
    mode: str  # "exhaustive" | "sampled"
    subsets_evaluated: int


def _subsets(C: list[int], budget: int, seed: int) -> tuple[list[frozenset[int]], str]:
    if 2 ** len(C) <= EXHAUSTIVE_LIMIT:
        out = [frozenset(s) for r in range(len(C) + 1) for s in itertools.combinations(C, r)]
        return out, "exhaustive"
    rng = np.random.default_rng(seed)
    out = [frozenset()]
    for _ in range(budget):
        pick = rng.integers(0, 2, size=len(C)).astype(bool)
        out.append(frozenset(np.asarray(C)[pick].tolist()))
    return out, "sampled"


def fcm_scores(c: CircuitExplanation, m: ToyNet | None = None, subset_budget: int = 512, seed: int = 0) -> FCMScores:
    """Faithfulness, worst incompleteness and per-edge minimality under ablation.

    K ranges over all subsets of C (including the empty set and C itself) when
    there are at most 4096 of them, otherwise over seeded random subsets.
    """
    if subset_budget < 1:
        raise ValueError("subset_budget must be >= 1")
    m = m or c.model
    C = sorted(c.active)
    Mset = frozenset(range(n_edges(m)))
    Cset = frozenset(C)
    cache: dict[frozenset[int], float] = {}

    def F(active: frozenset[int]) -> float:
        if active not in cache:
            cache[active] = agreement(m, active, c.ablation)
        return cache[active]

    Ks, mode = _subsets(C, subset_budget, seed)
    incompleteness = max(abs(F(Cset - K) - F(Mset - K)) for K in Ks)
    minimality = {}
    for v in C:
        best = 0.0
        for K in Ks:
            if v in K:
                continue
            best = max(best, abs(F(Cset - (K | {v})) - F(Cset - K)))
        minimality[v] = best
    return FCMScores(F(Cset), incompleteness, minimality, mode, len(Ks))


def discover_circuit(m: ToyNet, tau: float, ablation: str = "mean") -> CircuitExplanation:
    """Greedy edge removal: drop the least harmful edge while F stays >= 1 - tau."""
    current = set(range(n_edges(m)))
    floor = 1.0 - tau
    while current:
        best_e, best_f = None, -1.0
        for e in sorted(current):
            f = agreement(m, current - {e}, ablation)
            if f > best_f:
                best_e, best_f = e, f
        if best_f < floor:
            break
        current.remove(best_e)
    return CircuitExplanation(m, tuple(sorted(current)), ablation)
