"""End-to-end runs: train, fit explainers, score virtues, prove bounds, write artifacts."""

from __future__ import annotations

import contextlib
import copy
import datetime as _dt
import hashlib
import json
import os
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import __version__
from .coding import BackgroundTheory, default_theory
from .errors import ConfigError, PipelineError
from .explainers import (
    CircuitExplanation,
    ClusteringExplanation,
    discover_circuit,
    fcm_scores,
    fit_clustering,
    fit_dictionary,
    fit_mixture,
    straightforward,
)
from .explainers.mixture import parse_program
from .explanation import Explanation, to_blob
from .metrics import SamplerConfig
from .observations import Dataset, bits_to_index
from .proofs import (
    ParetoPoint,
    ProofCertificate,
    audit,
    brute_force_proof,
    circuit_guided_proof,
    cluster_guided_proof,
    frontier_svg,
    pareto,
    to_point,
)
from .rubric import ComparisonTable, Rubric, build_table, load_rubric, map_rubric, render_csv, render_text
from .scorecard import HardToVaryOptions, VirtueScorecard, score
from .toymodels import TASKS, ToyNet, TrainResult, net_to_bytes, sample_dataset, train_toy

FAMILY_KEYS = ("clustering", "dictionary", "circuit", "mixture", "straightforward")


@dataclass(frozen=True)
class RunConfig:
    task: str
    seeds: tuple[int, ...]
    explainers: Mapping[str, Any]
    sampler: SamplerConfig
    rubric: Rubric
    output_dir: str
    dataset_size: int = 256
    quantization_bits: int = 16
    max_steps: int = 10_000
    target_accuracy: float = 0.95
    hard_to_vary: HardToVaryOptions = HardToVaryOptions()
    fcm_subset_budget: int = 512
    raw: Mapping[str, Any] = field(default_factory=dict, compare=False, repr=False)


def default_config_dict() -> dict:
    return json.loads(resources.files("virtue_bench.data").joinpath("default.json").read_text())


def load_config_dict(path: str | Path | None) -> dict:
    """A JSON file; a bare ``default.json`` that does not exist resolves to the bundled default."""
    if path is None:
        return default_config_dict()
    p = Path(path)
    if p.exists():
        try:
            return json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: {exc}") from None
    if p.name == "default.json" and len(p.parts) == 1:
        return default_config_dict()
    raise ConfigError(f"config file {p} not found")


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def config_from_dict(d: Mapping, seed: int | None = None, out: str | None = None) -> RunConfig:
    d = copy.deepcopy(dict(d))
    if seed is not None:
        d["seeds"] = [seed]
    if out is not None:
        d["output_dir"] = out
    task = d.get("task")
    _require(task in TASKS, f"task must be one of {sorted(TASKS)}")
    seeds = d.get("seeds", [0])
    _require(isinstance(seeds, list) and seeds and all(isinstance(s, int) and s >= 0 for s in seeds),
             "seeds must be a non-empty list of non-negative integers")
    n = TASKS[task].n
    size = int(d.get("dataset_size", 1 << n))
    _require(5 <= size <= 1 << n, f"dataset_size must be in 5..{1 << n}")
    qbits = int(d.get("quantization_bits", 16))
    _require(qbits in (8, 12, 16), "quantization_bits must be 8, 12 or 16")
    grid = d.get("explainers", {})
    _require(isinstance(grid, dict) and set(grid) <= set(FAMILY_KEYS), f"explainers keys must be among {FAMILY_KEYS}")
    _require(any(grid.get(f) for f in FAMILY_KEYS), "explainer grid is empty")
    n_train = size * 4 // 5
    hidden = len(TASKS[task].default_layers) - 2
    for c in grid.get("clustering", []):
        _require(1 <= int(c.get("k", 0)) <= n_train, f"clustering k must be in 1..{n_train}")
        sp = c.get("space", "input")
        _require(sp == "input" or (isinstance(sp, int) and 1 <= sp <= hidden), f"bad clustering space {sp!r}")
    for c in grid.get("dictionary", []):
        _require(int(c.get("m_atoms", 0)) >= 1 and int(c.get("max_l0", -1)) >= 0, "dictionary needs m_atoms >= 1, max_l0 >= 0")
        _require(0 <= int(c.get("layer", 1)) <= hidden, "dictionary layer out of range")
    for c in grid.get("circuit", []):
        _require(0.0 <= float(c.get("tau", -1)) <= 1.0, "circuit tau must be in [0, 1]")
        _require(c.get("ablation", "mean") in ("mean", "zero"), "ablation must be mean or zero")
    for c in grid.get("mixture", []):
        progs = c.get("programs", [])
        _require(1 <= len(progs) <= 15, "mixture needs 1..15 programs")
        try:
            [parse_program(p) for p in progs]
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    s = d.get("sampler", {})
    try:
        sampler = SamplerConfig(int(s.get("num_datasets", 200)), int(s.get("dataset_size", 32)), int(s.get("seed", 0)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    h = d.get("hard_to_vary", {})
    htv = HardToVaryOptions(int(h.get("radius", 1)), int(h.get("cap", 10**6)), int(h.get("samples", 2000)), int(h.get("seed", 0)))
    _require(htv.radius in (1, 2), "hard_to_vary radius must be 1 or 2")
    budget = int(d.get("fcm_subset_budget", 512))
    _require(budget >= 1, "fcm_subset_budget must be >= 1")
    rub = d.get("rubric", "rubric_v1")
    try:
        rubric = load_rubric(rub)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"rubric: {exc}") from None
    train = d.get("train", {})
    return RunConfig(
        task=task,
        seeds=tuple(seeds),
        explainers=grid,
        sampler=sampler,
        rubric=rubric,
        output_dir=str(d.get("output_dir", "vb_out")),
        dataset_size=size,
        quantization_bits=qbits,
        max_steps=int(train.get("max_steps", 10_000)),
        target_accuracy=float(train.get("target_accuracy", 0.95)),
        hard_to_vary=htv,
        fcm_subset_budget=budget,
        raw=d,
    )


@contextlib.contextmanager
def stage(name: str):
    try:
        yield
    except PipelineError:
        raise
    except Exception as exc:  # every failure is reported with the stage that raised it
        raise PipelineError(name, exc) from exc


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("VB_WORKERS", "1")))
    except ValueError:
        return 1


# -- stages ------------------------------------------------------------------


@dataclass(frozen=True)
class Fitted:
    explanation_id: str
    explanation: Explanation
    extras: dict
    details: dict = field(default_factory=dict)


def fit_grid(net: ToyNet, cfg: RunConfig, dataset: Dataset, seed: int) -> list[Fitted]:
    grid = cfg.explainers
    q = cfg.quantization_bits
    prefix = f"{cfg.task}-s{seed}"
    train_idx = np.unique(bits_to_index(np.array([o.input for o in dataset.train])))
    out = []
    for c in grid.get("clustering", []):
        sp = c.get("space", "input")
        e = fit_clustering(net, sp, int(c["k"]), seed, q, inputs=train_idx)
        name = "input" if sp == "input" else f"layer{sp}"
        out.append(Fitted(f"{prefix}-clustering-{name}-k{c['k']}", e, {}))
    for c in grid.get("dictionary", []):
        layer, m, l0 = int(c.get("layer", 1)), int(c["m_atoms"]), int(c["max_l0"])
        e = fit_dictionary(net, layer, m, l0, seed, q, c.get("init", "random"))
        extras = {
            "dictionary_mdl_bits": e.mdl_bits(True),
            "dictionary_mdl_bits_codes_only": e.mdl_bits(False),
            "dictionary_max_reconstruction_error": float(e.reconstruction_errors().max()),
        }
        out.append(Fitted(f"{prefix}-dictionary-layer{layer}-m{m}-l{l0}", e, extras))
    for c in grid.get("circuit", []):
        tau, abl = float(c["tau"]), c.get("ablation", "mean")
        e = discover_circuit(net, tau, abl)
        f = fcm_scores(e, net, cfg.fcm_subset_budget, seed)
        extras = {
            "fcm_faithfulness": f.faithfulness,
            "fcm_incompleteness_max": f.incompleteness_max,
            "fcm_minimality_min": min(f.minimality_per_node.values()) if f.minimality_per_node else None,
            "fcm_mode": f.mode,
        }
        minimality = {str(k): v for k, v in f.minimality_per_node.items()}
        out.append(Fitted(f"{prefix}-circuit-tau{tau:g}-{abl}", e, extras, {"minimality_per_node": minimality}))
    for i, c in enumerate(grid.get("mixture", [])):
        e = fit_mixture(net, c["programs"], q, inputs=train_idx)
        out.append(Fitted(f"{prefix}-mixture-{i}", e, {"mixture_programs": "+".join(c["programs"])}))
    if grid.get("straightforward"):
        out.append(Fitted(f"{prefix}-straightforward", straightforward(net, q), {}))
    return out


def score_all(fitted: list[Fitted], dataset: Dataset, b: BackgroundTheory, cfg: RunConfig, net: ToyNet, workers: int):
    def one(f: Fitted) -> VirtueScorecard:
        return score(f.explanation, dataset, b, cfg.sampler, net, f.explanation_id, cfg.hard_to_vary, f.extras)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, fitted))
    return [one(f) for f in fitted]


def prove_all(net: ToyNet, task: str, fitted: list[Fitted]) -> list[ProofCertificate]:
    certs = [brute_force_proof(net, task)]
    for f in fitted:
        e = f.explanation
        if isinstance(e, ClusteringExplanation):
            certs.append(replace(cluster_guided_proof(net, task, e), label=f"cluster_guided:{f.explanation_id}"))
        elif isinstance(e, CircuitExplanation):
            certs.append(replace(circuit_guided_proof(net, task, e), label=f"circuit_guided:{f.explanation_id}"))
    return [audit(c, net, task) for c in certs]


# -- run ---------------------------------------------------------------------


@dataclass
class SeedResult:
    seed: int
    training: TrainResult
    dataset: Dataset
    fitted: list[Fitted]
    scorecards: list[VirtueScorecard]
    certificates: list[ProofCertificate]


@dataclass
class RunResult:
    config: RunConfig
    seeds: list[SeedResult]
    table: ComparisonTable
    out_dir: Path | None

    @property
    def scorecards(self) -> list[VirtueScorecard]:
        return [c for s in self.seeds for c in s.scorecards]


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, ensure_ascii=False) + "\n"


def run_seed(cfg: RunConfig, seed: int, b: BackgroundTheory, workers: int) -> SeedResult:
    with stage("train"):
        tr = train_toy(cfg.task, seed, max_steps=cfg.max_steps, target_accuracy=cfg.target_accuracy)
        net = tr.net
    with stage("sample"):
        dataset = sample_dataset(net, cfg.dataset_size, seed, replace=False)
    with stage("fit"):
        fitted = fit_grid(net, cfg, dataset, seed)
    with stage("score"):
        cards = score_all(fitted, dataset, b, cfg, net, workers)
        cards = [replace(c, rubric_levels=map_rubric(c, cfg.rubric)) for c in cards]
    with stage("prove"):
        certs = prove_all(net, cfg.task, fitted)
    return SeedResult(seed, tr, dataset, fitted, cards, certs)


def run(cfg: RunConfig, write: bool = True, workers: int | None = None) -> RunResult:
    workers = worker_count() if workers is None else workers
    with stage("setup"):
        b = default_theory(16)
    results = [run_seed(cfg, s, b, workers) for s in cfg.seeds]
    with stage("table"):
        table = build_table([c for r in results for c in r.scorecards], cfg.rubric)
    out_dir = None
    if write:
        with stage("write"):
            out_dir = write_outputs(cfg, results, table, b)
    return RunResult(cfg, results, table, out_dir)


def frontier_payload(certs: list[ProofCertificate]) -> dict:
    points = [to_point(c) for c in certs]
    front = pareto(points)
    return {"points": [p.to_json() for p in points], "frontier": [p.to_json() for p in front]}


def write_outputs(cfg: RunConfig, results: list[SeedResult], table: ComparisonTable, b: BackgroundTheory) -> Path:
    out = Path(cfg.output_dir)
    (out / "explanations").mkdir(parents=True, exist_ok=True)
    (out / "nets").mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def put(rel: str, data: str | bytes) -> None:
        p = out / rel
        if isinstance(data, str):
            p.write_text(data, encoding="utf-8")
        else:
            p.write_bytes(data)
        written.append(p)

    put("scorecards.json", _dump([c.to_json() for r in results for c in r.scorecards]))
    put("table.txt", render_text(table))
    put("table.csv", render_csv(table))
    certs, frontiers = [], {}
    for r in results:
        for c in r.certificates:
            certs.append({"seed": r.seed, "task": cfg.task, **c.to_json()})
        frontiers[str(r.seed)] = frontier_payload(r.certificates)
        fp = frontiers[str(r.seed)]
        pts = [ParetoPoint(**p) for p in fp["points"]]
        front = [ParetoPoint(**p) for p in fp["frontier"]]
        put(f"frontier_{cfg.task}_s{r.seed}.svg", frontier_svg(pts, front, f"{cfg.task}, seed {r.seed}"))
        put(f"nets/{cfg.task}_s{r.seed}.xtn", net_to_bytes(r.training.net))
        for f in r.fitted:
            put(f"explanations/{f.explanation_id}.xvb", to_blob(f.explanation, b))
        fcm = {f.explanation_id: f.details["minimality_per_node"] for f in r.fitted if "minimality_per_node" in f.details}
        if fcm:
            put(f"fcm_minimality_s{r.seed}.json", _dump(fcm))
    put("certificates.json", _dump(certs))
    put("frontier.json", _dump(frontiers))
    manifest = {
        "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "package": "virtue_bench",
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "task": cfg.task,
        "seeds": list(cfg.seeds),
        "sampler": {"num_datasets": cfg.sampler.num_datasets, "dataset_size": cfg.sampler.dataset_size, "seed": cfg.sampler.seed},
        "codebook": {"version": b.version, "fingerprint": b.fingerprint()},
        "rubric_version": cfg.rubric.version,
        "nets": [
            {"task": cfg.task, "seed": r.seed, "accuracy": r.training.accuracy, "converged": r.training.converged, "steps": r.training.steps}
            for r in results
        ],
        "config": cfg.raw,
        "files": {str(p.relative_to(out)): hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(written)},
    }
    (out / "manifest.json").write_text(_dump(manifest), encoding="utf-8")
    return out
