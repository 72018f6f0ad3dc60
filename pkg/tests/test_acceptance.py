"""The ten acceptance criteria, one test each; the terminal summary prints a PASS/FAIL line per test."""

from __future__ import annotations

import itertools
import subprocess
import sys
import time

import numpy as np
import pytest

import oracles
from virtue_bench.explainers import (
    CircuitExplanation,
    ClusteringExplanation,
    MixtureExplanation,
    discover_circuit,
    fcm_scores,
    fit_clustering,
    fit_dictionary,
    fit_mixture,
    full_circuit,
    straightforward,
)
from virtue_bench.explanation import apply_edit
from virtue_bench.hardtovary import edit_alphabet, is_hard_to_vary, neighborhood_size
from virtue_bench.metrics import (
    SamplerConfig,
    accuracy,
    adhocness,
    co_explanation,
    conciseness,
    descriptiveness,
    hypothesis_adhocness,
    sample_virtues,
)
from virtue_bench.observations import Observation, all_inputs
from virtue_bench.pipeline import config_from_dict, default_config_dict, run
from virtue_bench.proofs import (
    audit,
    brute_force_proof,
    circuit_guided_proof,
    cluster_guided_proof,
    pareto,
    to_point,
)
from virtue_bench.toymodels import TASKS, train_toy

FACTORIZED = ("clustering", "dictionary", "circuit", "straightforward")


@pytest.fixture(scope="module")
def zoo(maj_net, maj42, modadd_net):
    """Several explanations of each family over three nets."""
    out = []
    for m in (maj_net, maj42):
        out += [fit_clustering(m, "input", k=k, seed=k) for k in (1, 3, 8, 32)]
        out += [fit_clustering(m, 1, k=4, seed=0)]
        out += [fit_dictionary(m, layer=1, m_atoms=a, max_l0=l0, seed=a, rounds=10) for a, l0 in ((4, 1), (8, 2))]
        out += [discover_circuit(m, t) for t in (0.0, 0.1, 0.3)]
        out += [straightforward(m, q) for q in (8, 16)]
        out += [
            fit_mixture(m, ["majority", "parity"]),
            fit_mixture(m, ["const:0", "const:1", "bit:3"]),
            MixtureExplanation(8, 2, ("majority", "parity", "const:1"), (3, 1, 2), (100, 5000, 30000)),
        ]
    out += [fit_clustering(modadd_net, "input", k=6, seed=0), straightforward(modadd_net)]
    out += [fit_mixture(modadd_net, ["modadd", "const:3"]), full_circuit(modadd_net)]
    out += [fit_dictionary(modadd_net, layer=1, m_atoms=6, max_l0=2, rounds=10)]
    return out


def random_data(e, rng):
    n, L = e.n_inputs, e.n_labels
    X = all_inputs(n)[rng.integers(0, 1 << n, size=int(rng.integers(1, 40)))]
    y = rng.integers(0, L, size=len(X))
    return [Observation(tuple(x), int(v)) for x, v in zip(X.tolist(), y)]


def test_criterion_01_decomposition_identities(zoo, maj_net, modadd_net):
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    families = set()
    for i in range(1000):
        e = zoo[i % len(zoo)]
        families.add(e.family)
        data = random_data(e, rng)
        acc, desc, co = accuracy(e, data), descriptiveness(e, data), co_explanation(e, data)
        assert abs(acc - (desc + co)) <= 1e-9
        model = modadd_net if e.n_labels == 7 else maj_net
        sv = sample_virtues(e, SamplerConfig(4, int(rng.integers(1, 20)), i), model)
        assert abs(sv.precision.mean - (sv.power.mean + sv.unification.mean)) <= 1e-9
    assert families == {"clustering", "dictionary", "circuit", "straightforward", "mixture"}
    assert time.perf_counter() - start < 60


def test_criterion_02_factorized_families_have_no_surplus(zoo, maj_net, modadd_net):
    rng = np.random.default_rng(202)
    for e in zoo:
        if e.family not in FACTORIZED:
            continue
        model = modadd_net if e.n_labels == 7 else maj_net
        for _ in range(5):
            assert co_explanation(e, random_data(e, rng)) == 0.0
        sv = sample_virtues(e, SamplerConfig(5, 16, 3), model)
        assert sv.unification.mean == 0.0 and (sv.joints == sv.points).all()


def test_criterion_03_mixture_closed_form():
    x = MixtureExplanation(2, 2, ("const:0", "const:1"), (1, 1), (0, 0))
    data = [Observation((0, 0), 0), Observation((0, 1), 0), Observation((1, 1), 0)]
    # hand enumeration: 1/2 * 1^3 + 1/2 * 0^3 jointly; 1/2 per point on its own
    assert accuracy(x, data) == -1.0
    assert descriptiveness(x, data) == -3.0
    assert co_explanation(x, data) == 2.0


def test_criterion_04_straightforward_profile(maj_net, theory):
    e = straightforward(maj_net)
    X = all_inputs(8)
    data = [Observation(tuple(x), int(y)) for x, y in zip(X.tolist(), maj_net.predict(X))][::2]
    assert abs(accuracy(e, data)) <= 1e-5
    sizes = maj_net.layer_sizes
    header = theory.token_bits("straightforward") + 4 + theory.token_bits("act.relu") + 4 + 8 * len(sizes)
    assert conciseness(e, theory) == maj_net.n_params * 16 + header
    r = is_hard_to_vary(e, data, theory, cap=10**6)
    assert not r.hard_to_vary
    (op,) = r.witness
    assert op.kind == "substitute"
    # the witness is a zero-effect symbol: same fit, no longer code
    varied = apply_edit(e, r.witness, theory)
    assert accuracy(varied, data) == accuracy(e, data)
    assert conciseness(varied, theory) <= conciseness(e, theory)


def test_criterion_05_fcm_oracle_equivalence(maj_net):
    small = train_toy("majority8", 0, layer_sizes=(8, 4, 2), target_accuracy=1.0, max_steps=2000).net
    rng = np.random.default_rng(505)
    cases = [(small, tuple(range(12)))]
    for _ in range(4):
        size = int(rng.integers(1, 13))
        cases.append((maj_net, tuple(sorted(rng.choice(16, size=size, replace=False).tolist()))))
        cases.append((small, tuple(sorted(rng.choice(12, size=min(size, 12), replace=False).tolist()))))
    for m, ids in cases:
        c = CircuitExplanation(m, ids)
        got = fcm_scores(c)
        F = oracles.AblationOracle(m).F
        C, M = frozenset(ids), frozenset(range(sum(m.layer_sizes[:-1])))
        Ks = [frozenset(k) for r in range(len(C) + 1) for k in itertools.combinations(sorted(C), r)]
        assert got.mode == "exhaustive"
        assert got.faithfulness == F(C)
        assert got.incompleteness_max == max(abs(F(C - K) - F(M - K)) for K in Ks)
        for v in C:
            assert got.minimality_per_node[v] == max(abs(F(C - (K | {v})) - F(C - K)) for K in Ks if v not in K)
        if C == M:
            assert got.incompleteness_max == 0.0


def test_criterion_06_proof_soundness():
    emitted = 0
    for task in ("majority8", "parity8", "modadd7"):
        for seed in range(20):
            # soundness is a property of any net, so parity gets a shorter training budget
            steps = 1500 if task == "parity8" else 10_000
            m = train_toy(task, seed, max_steps=steps).net
            X = all_inputs(m.n_inputs)
            true_acc = float(np.mean(m.predict(X) == TASKS[task].target(X)))
            brute = brute_force_proof(m, task)
            assert brute.bound == true_acc
            certs = [brute]
            certs += [cluster_guided_proof(m, task, fit_clustering(m, "input", k=k, seed=seed)) for k in (4, 16)]
            certs += [circuit_guided_proof(m, task, discover_circuit(m, 0.1))]
            for c in certs:
                assert audit(c, m, task).sound and c.bound <= true_acc
                emitted += 1
    assert emitted == 3 * 20 * 4


def test_criterion_07_pareto_sanity():
    cfg = config_from_dict(default_config_dict(), seed=42)
    result = run(cfg, write=False, workers=1)
    certs = result.seeds[0].certificates
    points = [to_point(c) for c in certs]
    front = pareto(points)
    assert front == oracles.pareto_front(points)
    brute = next(p for p in points if p.label == "brute_force")
    assert brute in front and brute.bound == max(p.bound for p in points)
    assert any(p.label != "brute_force" and p.flops < brute.flops for p in front)


def test_criterion_08_hard_to_vary_verdicts(theory):
    rng = np.random.default_rng(808)
    verdicts = []
    for _ in range(60):
        e, data = oracles.htv_instance(rng)
        assert neighborhood_size(len(e.tokens()), len(edit_alphabet(e)), 1) <= 10**4
        verdicts.append(is_hard_to_vary(e, data, theory).hard_to_vary == oracles.hard_to_vary(e, data, theory))
    assert len(verdicts) >= 50 and all(verdicts)


def test_criterion_09_adhocness_signs(theory):
    rng = np.random.default_rng(909)
    for _ in range(100):
        x = float(rng.uniform(0, 200))
        assert adhocness(x, x) == 0.0
    E = ClusteringExplanation(8, 2, 0, rng.integers(-2000, 2000, size=(3, 8)), rng.integers(0, 50, size=(3, 2)))
    e_toks = E.tokens()
    s, t = E.entity_spans()[1]
    implied = e_toks[s:t]  # a cell the explanation already states
    epicycle = ClusteringExplanation(8, 2, 0, np.full((1, 8), 1234), np.array([[7, 9]])).tokens()[-(t - s) :]
    assert hypothesis_adhocness(epicycle, e_toks, theory) > 0
    assert hypothesis_adhocness(implied, e_toks, theory) < 0


def test_criterion_10_determinism(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        cmd = [sys.executable, "-m", "virtue_bench.cli", "run", "--config", "default.json", "--seed", "42", "--out", str(out)]
        start = time.perf_counter()
        done = subprocess.run(cmd, cwd=tmp_path, capture_output=True, text=True)
        assert time.perf_counter() - start < 600
        assert done.returncode == 0, done.stderr
        outs.append(out)
    a, b = outs
    for name in ("scorecards.json", "table.txt", "table.csv", "frontier.json", "certificates.json", "frontier_majority8_s42.svg"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    for p in (a / "explanations").iterdir():
        assert p.read_bytes() == (b / "explanations" / p.name).read_bytes()
