from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from virtue_bench.explainers import (
    ClusteringExplanation,
    MixtureExplanation,
    fit_clustering,
    fit_mixture,
    straightforward,
    uniform_guess,
)
from virtue_bench.explanation import EPS
from virtue_bench.metrics import (
    EmptyHeldoutWarning,
    SamplerConfig,
    accuracy,
    accuracy_probability,
    adhocness,
    co_explanation,
    code_length_given,
    compressed_bits,
    conciseness,
    consistency_check,
    descriptiveness,
    explanation_adhocness,
    fruitfulness,
    hard_to_varyness,
    hypothesis_adhocness,
    k_complexity,
    parsimony,
    precision,
    prior,
    reference_bits,
    sample_virtues,
)
from virtue_bench.observations import Observation, all_inputs

X8 = all_inputs(8)


def obs_of(model, idx):
    X = X8[np.asarray(idx)]
    return [Observation(tuple(x), int(y)) for x, y in zip(X.tolist(), model.predict(X))]


@pytest.mark.parametrize("labels,points,expected", [(2, 8, -8.0), (4, 5, -10.0)])
def test_uniform_accuracy(labels, points, expected):
    u = uniform_guess(3, labels)
    data = [Observation((0, 1, 0), i % labels) for i in range(points)]
    assert accuracy(u, data) == pytest.approx(expected, abs=1e-12)
    assert descriptiveness(u, data) == pytest.approx(expected, abs=1e-12)
    assert co_explanation(u, data) == pytest.approx(0.0, abs=1e-12)


def test_accuracy_needs_data():
    with pytest.raises(ValueError):
        accuracy(uniform_guess(3, 2), [])


def test_accuracy_probability_floor():
    assert accuracy_probability(-3.0) == 0.125
    assert accuracy_probability(-5000.0) is None


def test_perfect_explanation_accuracy_is_near_zero(maj_net):
    e = straightforward(maj_net)
    data = obs_of(maj_net, range(0, 256, 3))
    assert accuracy(e, data) == pytest.approx(len(data) * math.log2(1 - EPS), rel=1e-9)


def test_factorized_accuracy_splits_into_descriptiveness(maj_net):
    c = fit_clustering(maj_net, "input", k=4, seed=0)
    data = obs_of(maj_net, range(0, 256, 5))
    assert co_explanation(c, data) == pytest.approx(0.0, abs=1e-9)
    assert accuracy(c, data) == pytest.approx(descriptiveness(c, data), abs=1e-9)


def test_uniform_precision_is_minus_dataset_size(maj_net):
    cfg = SamplerConfig(20, 13, 5)
    est = precision(uniform_guess(8, 2), cfg, maj_net)
    assert est.mean == pytest.approx(-13.0, abs=1e-9) and est.stderr == pytest.approx(0.0, abs=1e-12)


def test_sampled_precision_agrees_with_exact_expectation(maj_net):
    # Route 1: exact expectation over the enumerated input distribution.
    c = fit_clustering(maj_net, "input", k=2, seed=0)
    labels = maj_net.predict(X8)
    per_point = np.log2(c.predict_proba(X8)[np.arange(256), labels])
    d = 32
    exact = d * per_point.mean()
    # Route 2: the Monte-Carlo estimate.
    est = sample_virtues(c, SamplerConfig(400, d, 7), maj_net)
    assert abs(est.precision.mean - exact) < 4 * est.precision.stderr + 1e-9
    assert est.unification.mean == pytest.approx(0.0, abs=1e-9)


def test_worker_count_does_not_change_estimates(maj_net):
    x = fit_mixture(maj_net, ["majority", "parity"])
    cfg = SamplerConfig(40, 16, 3)
    a = sample_virtues(x, cfg, maj_net, workers=1)
    b = sample_virtues(x, cfg, maj_net, workers=4)
    assert np.array_equal(a.joints, b.joints) and np.array_equal(a.points, b.points)


def test_mixture_unification_is_positive(maj_net):
    x = fit_mixture(maj_net, ["majority", "parity", "const:0", "const:1"])
    est = sample_virtues(x, SamplerConfig(50, 32, 1), maj_net)
    assert est.unification.mean > 0


def test_sampler_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(0, 4, 1)
    with pytest.raises(ValueError):
        SamplerConfig(4, 4, -1)


def test_prior_is_minus_code_length(maj_net, theory):
    e = fit_clustering(maj_net, "input", k=4, seed=0)
    assert prior(e, theory) == -conciseness(e, theory) == -theory.stream_bits(e.tokens())


def test_empty_heldout_warns(maj_net):
    with pytest.warns(EmptyHeldoutWarning):
        assert fruitfulness(uniform_guess(8, 2), []) == 0.0


def test_parsimony_counts_entities(maj_net):
    assert parsimony(fit_clustering(maj_net, "input", k=16, seed=0)) == 16
    assert parsimony(fit_mixture(maj_net, ["majority", "parity"])) == 2


def test_consistency_check(maj_net):
    assert consistency_check(fit_clustering(maj_net, "input", k=4, seed=0))
    assert not consistency_check(MixtureExplanation(8, 2, ("majority",), (0,), (5,)))


def test_k_complexity_prefers_compression_for_repetitive_streams(theory, rng):
    repeated = ClusteringExplanation(8, 2, 0, np.full((64, 8), 77), np.ones((64, 2)))
    random = ClusteringExplanation(8, 2, 0, rng.integers(-30000, 30000, size=(64, 8)), rng.integers(0, 9000, size=(64, 2)))
    assert k_complexity(repeated, theory) == compressed_bits(repeated, theory) < conciseness(repeated, theory)
    assert k_complexity(random, theory) == conciseness(random, theory) <= compressed_bits(random, theory)


def test_hard_to_varyness_definition(maj_net, theory):
    e = fit_clustering(maj_net, "input", k=4, seed=0)
    data = obs_of(maj_net, range(0, 256, 2))
    assert hard_to_varyness(e, data, theory) == accuracy(e, data) - k_complexity(e, theory)


# -- adhocness ----------------------------------------------------------------


def brute_code_length(h, e, b) -> int:
    """Oracle: try every split of h into literal tokens and substrings of e."""
    ref = 1 + reference_bits(e)
    subs = {tuple(e[i:j]) for i in range(len(e)) for j in range(i + 1, len(e) + 1)}

    @lru_cache(maxsize=None)
    def best(i: int) -> float:
        if i == len(h):
            return 0
        out = 1 + b.token_bits(h[i]) + best(i + 1)
        for j in range(i + 1, len(h) + 1):
            if tuple(h[i:j]) in subs:
                out = min(out, ref + best(j))
        return out

    return best(0)


TOK = st.one_of(st.integers(0, 3), st.sampled_from(["clustering", "tie.low"]))


@settings(max_examples=150, deadline=None)
@given(st.lists(TOK, min_size=0, max_size=8), st.lists(TOK, min_size=0, max_size=10))
def test_conditional_code_length_matches_brute_force(theory, h, e):
    assert code_length_given(h, e, theory) == brute_code_length(h, e, theory)


def test_adhocness_closed_forms(theory):
    assert adhocness(1, 1) == 0.0
    assert adhocness(2, 3) == 0.25 - 0.125
    with pytest.raises(ValueError):
        adhocness(-1, 0)
    h = [1, 2, 3, 4, 5, 6, 7, 8]
    # h appears verbatim in e: one reference replaces 8 literal digits
    e = [0] + h + [0]
    given_bits = 1 + reference_bits(e)
    assert code_length_given(h, e, theory) == given_bits
    assert hypothesis_adhocness(h, e, theory) == 2.0**-32 - 2.0**-given_bits


def test_explanation_adhocness_uses_last_entity(theory):
    c = ClusteringExplanation(8, 2, 0, np.full((2, 8), 77), np.ones((2, 2)))
    s, t = c.entity_spans()[-1]
    toks = c.tokens()
    want = hypothesis_adhocness(toks[s:t], toks[:s] + toks[t:], theory)
    assert explanation_adhocness(c, theory) == want < 0  # duplicated cell is cheap given the rest
    assert explanation_adhocness(MixtureExplanation(8, 2, (), (), ()), theory) is None


def test_single_point_datasets_have_no_unification(maj_net):
    x = fit_mixture(maj_net, ["majority", "parity", "const:1"])
    est = sample_virtues(x, SamplerConfig(30, 1, 4), maj_net)
    assert est.unification.mean == pytest.approx(0.0, abs=1e-12)
