"""Virtue metrics. Every likelihood-type quantity is in bits."""

from __future__ import annotations

import math
import warnings
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .coding import BackgroundTheory, Token, pack_blob
from .explanation import Explanation, _arrays, serialize
from .observations import all_inputs, index_to_bits
from .toymodels import ToyNet

K_STUB_BITS = 256
RAW_PROB_FLOOR = -1020.0


class EmptyHeldoutWarning(UserWarning):
    pass


# -- Bayesian virtues ------------------------------------------------------


def accuracy(e: Explanation, train) -> float:
    """log2 P(x_T | e), joint over the whole training set."""
    X, y = _arrays(e, train)
    if len(y) == 0:
        raise ValueError("accuracy needs a non-empty training set")
    return e.joint_log2(X, y)


def accuracy_probability(bits: float) -> float | None:
    """The raw probability behind an accuracy value, when it is representable."""
    return 2.0**bits if bits > RAW_PROB_FLOOR else None


def descriptiveness(e: Explanation, train) -> float:
    """Sum of per-point log-likelihoods, each point scored on its own."""
    X, y = _arrays(e, train)
    if len(y) == 0:
        return 0.0
    return float(np.sum(e.pointwise_log2(X, y)))


def co_explanation(e: Explanation, train) -> float:
    X, y = _arrays(e, train)
    if len(y) == 0:
        return 0.0
    return e.joint_log2(X, y) - float(np.sum(e.pointwise_log2(X, y)))


@dataclass(frozen=True)
class SamplerConfig:
    num_datasets: int
    dataset_size: int
    seed: int

    def __post_init__(self):
        if self.num_datasets < 1 or self.dataset_size < 1:
            raise ValueError("num_datasets and dataset_size must be >= 1")
        if self.seed < 0:
            raise ValueError("sampler seed must be non-negative")


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float


@dataclass(frozen=True)
class SampledVirtues:
    precision: Estimate
    power: Estimate
    unification: Estimate
    joints: np.ndarray
    points: np.ndarray


def sampled_inputs(cfg: SamplerConfig, i: int, n: int) -> np.ndarray:
    """Dataset i of a sampler run; each index owns its own seeded substream."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, i]))
    return index_to_bits(rng.integers(0, 1 << n, size=cfg.dataset_size, dtype=np.int64), n)


def _stderr(v: np.ndarray) -> float:
    if len(v) < 2:
        return 0.0
    return float(np.std(v, ddof=1) / math.sqrt(len(v)))


def sample_virtues(e: Explanation, cfg: SamplerConfig, model: ToyNet, workers: int = 1) -> SampledVirtues:
    """Precision, power and unification from one shared set of sampled datasets."""
    n = model.n_inputs
    labels = model.enumerate_labels()
    lookup = 1 << np.arange(n - 1, -1, -1, dtype=np.int64)

    def one(i: int) -> tuple[float, float]:
        X = sampled_inputs(cfg, i, n)
        y = labels[X.astype(np.int64) @ lookup]
        return e.joint_log2(X, y), float(np.sum(e.pointwise_log2(X, y)))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, range(cfg.num_datasets)))
    else:
        rows = [one(i) for i in range(cfg.num_datasets)]
    joints = np.array([r[0] for r in rows])
    points = np.array([r[1] for r in rows])
    prec = float(np.mean(joints))
    powr = float(np.mean(points))
    return SampledVirtues(
        Estimate(prec, _stderr(joints)),
        Estimate(powr, _stderr(points)),
        Estimate(prec - powr, _stderr(joints - points)),
        joints,
        points,
    )


def precision(e: Explanation, cfg: SamplerConfig, model: ToyNet) -> Estimate:
    return sample_virtues(e, cfg, model).precision


def power(e: Explanation, cfg: SamplerConfig, model: ToyNet) -> Estimate:
    return sample_virtues(e, cfg, model).power


def unification(e: Explanation, cfg: SamplerConfig, model: ToyNet) -> Estimate:
    return sample_virtues(e, cfg, model).unification


def prior(e: Explanation, b: BackgroundTheory) -> float:
    """log2 P(e | B) under the coding prior 2^-|e|_B."""
    return -float(conciseness(e, b))


# -- Kuhnian virtues -------------------------------------------------------


def fruitfulness(e: Explanation, heldout) -> float:
    X, y = _arrays(e, heldout)
    if len(y) == 0:
        warnings.warn("held-out split is empty; fruitfulness reported as 0", EmptyHeldoutWarning, stacklevel=2)
        return 0.0
    return e.joint_log2(X, y)


def consistency_check(e: Explanation) -> bool:
    if e.consistency_issues():
        return False
    P = e.predict_proba(all_inputs(e.n_inputs))
    if not np.isfinite(P).all() or (P < 0).any():
        return False
    return bool(np.allclose(P.sum(axis=1), 1.0, rtol=0, atol=1e-9))


def parsimony(e: Explanation) -> int:
    return int(e.entity_count)


def conciseness(e: Explanation, b: BackgroundTheory) -> int:
    return b.stream_bits(e.tokens())


def compressed_bits(e: Explanation, b: BackgroundTheory) -> int:
    return 8 * len(zlib.compress(pack_blob(serialize(e, b)), 9)) + K_STUB_BITS


def k_complexity(e: Explanation, b: BackgroundTheory) -> int:
    """Upper-bound proxy: raw length, or zlib length plus a decompressor stub."""
    return min(conciseness(e, b), compressed_bits(e, b))


def hard_to_varyness(e: Explanation, train, b: BackgroundTheory) -> float:
    """hv(e) = log2 Acc(e) - k(e)."""
    return accuracy(e, train) - k_complexity(e, b)


# -- adhocness -------------------------------------------------------------


def adhocness(h_bits_alone: float, h_bits_given_e: float) -> float:
    """P(H) - P(H | E, B) with both probabilities from code lengths."""
    if h_bits_alone < 0 or h_bits_given_e < 0:
        raise ValueError("code lengths must be non-negative")
    return 2.0**-h_bits_alone - 2.0**-h_bits_given_e


def _token_char(tok: Token, index: dict) -> str:
    return index.setdefault(tok if isinstance(tok, str) else ("digit", tok), chr(0x100 + len(index)))


def reference_bits(e_tokens: Sequence[Token]) -> int:
    """Cost of pointing at a substring of E: start and end positions."""
    return 2 * max(1, math.ceil(math.log2(len(e_tokens) + 1)))


def code_length_given(h_tokens: Sequence[Token], e_tokens: Sequence[Token], b: BackgroundTheory) -> int:
    """|H| coded with E available: each chunk is a flagged literal token or a reference into E."""
    index: dict = {}
    e_str = "".join(_token_char(t, index) for t in e_tokens)
    h_str = "".join(_token_char(t, index) for t in h_tokens)
    ref = 1 + reference_bits(e_tokens)
    n = len(h_tokens)
    cost = [0] + [math.inf] * n
    for i in range(n):
        if cost[i] == math.inf:
            continue
        lit = cost[i] + 1 + b.token_bits(h_tokens[i])
        cost[i + 1] = min(cost[i + 1], lit)
        for j in range(i + 1, n + 1):
            if h_str[i:j] not in e_str:
                break
            cost[j] = min(cost[j], cost[i] + ref)
    return int(cost[n])


def hypothesis_adhocness(h_tokens: Sequence[Token], e_tokens: Sequence[Token], b: BackgroundTheory) -> float:
    return adhocness(b.stream_bits(h_tokens), code_length_given(h_tokens, e_tokens, b))


def explanation_adhocness(e: Explanation, b: BackgroundTheory) -> float | None:
    """Adhocness of e's last posited entity, coded against the rest of e."""
    spans = e.entity_spans()
    if not spans:
        return None
    toks = e.tokens()
    s, t = spans[-1]
    return hypothesis_adhocness(toks[s:t], toks[:s] + toks[t:], b)
