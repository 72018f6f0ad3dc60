from __future__ import annotations

import numpy as np
import pytest

import oracles
from virtue_bench.errors import NeighborhoodTooLarge
from virtue_bench.explainers import ClusteringExplanation, MixtureExplanation
from virtue_bench.explanation import decode_tokens
from virtue_bench.hardtovary import (
    edit_lists,
    hard_to_vary_verdict,
    is_hard_to_vary,
    neighborhood_size,
    sampled_hard_to_vary,
)
from virtue_bench.metrics import accuracy, k_complexity
from virtue_bench.observations import Observation, all_inputs


def test_verdict_matches_brute_force_on_200_instances(theory):
    rng = np.random.default_rng(2718)
    seen = set()
    for _ in range(200):
        e, data = oracles.htv_instance(rng)
        got = is_hard_to_vary(e, data, theory)
        assert got.hard_to_vary == oracles.hard_to_vary(e, data, theory)
        assert got.mode == "exhaustive"
        if not got.hard_to_vary:
            assert got.witness_hv >= got.hv
        seen.add(got.hard_to_vary)
    assert seen == {True, False}


def test_a_tying_neighbour_defeats_the_verdict(theory):
    # tie.low -> tie.none costs the same bits and leaves predictions unchanged
    e = ClusteringExplanation(3, 2, 0, np.zeros((1, 3), dtype=np.int64), np.array([[3, 1]]), qbits=12)
    data = [Observation((0, 0, 0), 0)]
    r = is_hard_to_vary(e, data, theory)
    assert not r.hard_to_vary and r.witness_hv >= r.hv


def test_accuracy_gain_witness(theory):
    # eta far from the data's noise rate: shrinking it raises the fit for free
    e = MixtureExplanation(3, 2, ("const:0",), (1,), (120,), qbits=8)
    data = [Observation(tuple(x), 0) for x in all_inputs(3).tolist()]
    assert not is_hard_to_vary(e, data, theory).hard_to_vary
    # eta = 0x78 -> 0x08 is one substitution and strictly improves hv
    s = e.entity_spans()[0][1] - 2
    assert e.tokens()[s : s + 2] == [7, 8]
    better = decode_tokens(e.tokens()[:s] + [0] + e.tokens()[s + 1 :])
    hv = lambda x: accuracy(x, data) - k_complexity(x, theory)  # noqa: E731
    assert better.etas == (8,) and hv(better) > hv(e)


@pytest.mark.parametrize("length,radius", [(0, 1), (1, 1), (4, 1), (3, 2), (5, 2)])
def test_neighbourhood_size_counts_edit_lists(length, radius):
    alphabet = (0, 1, "x")
    toks = [0] * length
    assert neighborhood_size(length, len(alphabet), radius) == sum(1 for _ in edit_lists(toks, alphabet, radius))


def test_cap_raises_and_verdict_falls_back(theory):
    e = MixtureExplanation(3, 2, ("parity",), (1,), (10,), qbits=8)
    data = [Observation((0, 0, 1), 1)]
    with pytest.raises(NeighborhoodTooLarge):
        is_hard_to_vary(e, data, theory, cap=10)
    r = hard_to_vary_verdict(e, data, theory, cap=10, samples=300, seed=1)
    assert r.mode == "sampled" and r.evaluated <= 300


def test_sampled_verdict_is_seeded(theory):
    e = MixtureExplanation(3, 2, ("parity",), (1,), (10,), qbits=8)
    data = [Observation((0, 0, 1), 1)]
    a = sampled_hard_to_vary(e, data, theory, samples=200, seed=4)
    b = sampled_hard_to_vary(e, data, theory, samples=200, seed=4)
    assert a == b


def test_radius_two_never_flips_a_false_verdict(theory):
    e = MixtureExplanation(2, 2, ("const:0",), (1,), (120,), qbits=8)
    data = [Observation((0, 0), 0)]
    assert not is_hard_to_vary(e, data, theory, radius=1).hard_to_vary
    assert not is_hard_to_vary(e, data, theory, radius=2).hard_to_vary
