from __future__ import annotations

import math
import xml.etree.ElementTree as ET

import numpy as np
import oracles
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from virtue_bench.explainers import (
    CircuitExplanation,
    discover_circuit,
    fit_clustering,
    full_circuit,
)
from virtue_bench.observations import all_inputs
from virtue_bench.proofs import (
    ParetoPoint,
    audit,
    brute_force_proof,
    certifies,
    circuit_guided_proof,
    cluster_guided_proof,
    dominates,
    frontier_svg,
    pareto,
    to_point,
)
from virtue_bench.toymodels import (
    FRAC,
    TASKS,
    ToyNet,
    forward_flops,
    interval_activations,
    interval_forward_flops,
    zero_net,
)

X8 = all_inputs(8)


def random_net(seed: int, sizes=(8, 6, 2)) -> ToyNet:
    rng = np.random.default_rng(seed)
    ws = tuple(rng.integers(-6000, 6000, size=(a, b)) for a, b in zip(sizes[:-1], sizes[1:]))
    bs = tuple(rng.integers(-6000, 6000, size=b) for b in sizes[1:])
    return ToyNet(sizes, ws, bs, task="majority8")


def test_perfect_majority_net_has_bound_one(maj_net):
    c = brute_force_proof(maj_net, "majority8")
    assert c.bound == 1.0 and c.credited == 256
    assert c.flops == 256 * forward_flops(maj_net)


def test_zero_net_bound_is_the_label_zero_share():
    # argmax of equal logits is 0, which is right exactly when at most 4 bits are set
    c = brute_force_proof(zero_net((8, 8, 2)), "majority8")
    want = sum(math.comb(8, k) for k in range(5))
    assert want == 163 and c.bound == want / 256


def test_proof_needs_a_task():
    with pytest.raises(ValueError):
        brute_force_proof(zero_net((8, 2)))


def test_singleton_cells_reproduce_brute_force(maj42):
    c = fit_clustering(maj42, "input", k=256, seed=0)
    cert = audit(cluster_guided_proof(maj42, "majority8", c), maj42)
    assert cert.bound == brute_force_proof(maj42).bound and cert.sound


def test_one_cell_certifies_nothing(maj_net):
    cert = cluster_guided_proof(maj_net, "majority8", fit_clustering(maj_net, "input", k=1, seed=0))
    assert cert.bound == 0.0 and cert.vacuous


@pytest.mark.parametrize("k", [2, 16, 64])
def test_cluster_proofs_are_sound(maj42, k):
    cert = audit(cluster_guided_proof(maj42, "majority8", fit_clustering(maj42, "input", k=k, seed=1)), maj42)
    assert cert.sound and 0.0 <= cert.bound <= brute_force_proof(maj42).bound


def test_cluster_flop_accounting(maj42):
    c = fit_clustering(maj42, "input", k=16, seed=1)
    target = TASKS["majority8"].target(X8)
    boxes = sum(len(np.unique(target[m])) for m in c.members())
    assert cluster_guided_proof(maj42, "majority8", c).flops == boxes * interval_forward_flops(maj42) + 256


def test_full_circuit_matches_brute_force(maj42):
    cert = circuit_guided_proof(maj42, "majority8", full_circuit(maj42))
    assert cert.bound == brute_force_proof(maj42).bound


def test_empty_circuit_is_vacuous(maj42):
    cert = circuit_guided_proof(maj42, "majority8", CircuitExplanation(maj42, ()))
    assert cert.bound == 0.0 and cert.vacuous


def test_discovered_circuit_is_sound_and_cheaper(maj42):
    cert = audit(circuit_guided_proof(maj42, "majority8", discover_circuit(maj42, 0.05)), maj42)
    brute = brute_force_proof(maj42)
    assert cert.sound and cert.bound <= brute.bound and cert.flops < brute.flops


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 32), st.integers(0, 2**16 - 1))
def test_guided_proofs_are_sound_on_random_nets(seed, k, mask):
    m = random_net(seed)
    exact = brute_force_proof(m).bound
    c = fit_clustering(m, "input", k=k, seed=seed)
    assert cluster_guided_proof(m, None, c).bound <= exact
    circuit = CircuitExplanation(m, tuple(i for i in range(14) if mask >> i & 1))
    assert circuit_guided_proof(m, None, circuit).bound <= exact


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.sampled_from([0, 1, None]), min_size=8, max_size=8), st.integers(0, 1))
def test_certified_box_means_every_member_is_classified(seed, pattern, label):
    m = random_net(seed)
    lo = np.array([[0 if p is None else p for p in pattern]]) << FRAC
    hi = np.array([[1 if p is None else p for p in pattern]]) << FRAC
    box = interval_activations(m, lo, hi)[m.n_layers - 1]
    if certifies(m, *box, np.array([label]))[0]:
        keep = np.all([X8[:, i] == p for i, p in enumerate(pattern) if p is not None] or [np.ones(256, bool)], axis=0)
        assert (m.predict(X8[keep]) == label).all()


def test_tied_logits_certify_only_label_zero():
    m = zero_net((8, 2))
    x = np.zeros((1, 8), dtype=np.int64)
    assert certifies(m, x, x, np.array([0]))[0]
    assert not certifies(m, x, x, np.array([1]))[0]


@settings(max_examples=200)
@given(st.lists(st.tuples(st.integers(0, 8), st.integers(1, 50)), max_size=12))
def test_pareto_matches_oracle(raw):
    pts = [ParetoPoint(b / 8, f, f"p{i}") for i, (b, f) in enumerate(raw)]
    assert pareto(pts) == oracles.pareto_front(pts)


def test_dominance_is_strict():
    a = ParetoPoint(0.5, 10, "a")
    assert not dominates(a, ParetoPoint(0.5, 10, "b"))
    assert dominates(a, ParetoPoint(0.5, 11, "c"))


def test_frontier_svg_is_wellformed(maj42):
    certs = [brute_force_proof(maj42), circuit_guided_proof(maj42, "majority8", discover_circuit(maj42, 0.05))]
    pts = [to_point(c) for c in certs]
    svg = frontier_svg(pts, pareto(pts), "majority8 <test>")
    root = ET.fromstring(svg)
    ns = "{http://www.w3.org/2000/svg}"
    assert len(root.findall(f"{ns}circle")) == 2
    assert root.find(f"{ns}polyline") is not None
    assert "&lt;test&gt;" in svg


def test_certificate_json_round_trip(maj42):
    c = audit(brute_force_proof(maj42), maj42)
    d = c.to_json()
    assert d["strategy"] == "brute_force" and d["sound"] is True and d["total"] == 256
