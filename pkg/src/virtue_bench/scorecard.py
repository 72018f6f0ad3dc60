"""Assemble the full virtue vector for one explanation."""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field

from .coding import BackgroundTheory
from .explanation import Explanation, _arrays
from .hardtovary import DEFAULT_CAP, hard_to_vary_verdict
from .metrics import (
    EmptyHeldoutWarning,
    SamplerConfig,
    accuracy,
    accuracy_probability,
    conciseness,
    consistency_check,
    descriptiveness,
    explanation_adhocness,
    fruitfulness,
    k_complexity,
    parsimony,
    prior,
    sample_virtues,
)
from .observations import Dataset
from .toymodels import ToyNet

SCORE_KEYS = (
    "accuracy_log2",
    "descriptiveness",
    "co_explanation",
    "precision_est",
    "power_est",
    "unification_est",
    "prior_log2",
    "fruitfulness_log2",
    "consistency",
    "parsimony",
    "conciseness_bits",
    "k_complexity_bits",
    "hv_value",
    "hard_to_vary",
    "adhocness",
    "nomological_flag",
)


@dataclass(frozen=True)
class HardToVaryOptions:
    radius: int = 1
    cap: int = DEFAULT_CAP
    samples: int = 2000
    seed: int = 0


@dataclass(frozen=True)
class VirtueScorecard:
    explanation_id: str
    family: str
    accuracy_log2: float
    descriptiveness: float
    co_explanation: float
    precision_est: float
    precision_est_stderr: float
    power_est: float
    power_est_stderr: float
    unification_est: float
    unification_est_stderr: float
    prior_log2: float
    fruitfulness_log2: float
    consistency: bool
    parsimony: int
    conciseness_bits: int
    k_complexity_bits: int
    hv_value: float
    hard_to_vary: bool
    adhocness: float | None
    nomological_flag: bool
    n_train: int
    n_heldout: int
    sample_size: int
    accuracy_prob: float | None = None
    hard_to_vary_mode: str = "exhaustive"
    flags: tuple[str, ...] = ()
    extras: dict = field(default_factory=dict)
    rubric_levels: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        """Flat JSON object; stderr fields carry the _stderr suffix."""
        d = asdict(self)
        extras = d.pop("extras")
        d["flags"] = list(self.flags)
        for k, v in sorted(extras.items()):
            d[k] = v
        return d

    @classmethod
    def from_json(cls, d: dict) -> "VirtueScorecard":
        known = {f for f in cls.__dataclass_fields__ if f != "extras"}
        kwargs = {k: v for k, v in d.items() if k in known}
        kwargs["flags"] = tuple(d.get("flags", ()))
        kwargs["extras"] = {k: v for k, v in d.items() if k not in known}
        return cls(**kwargs)


def score(
    e: Explanation,
    dataset: Dataset,
    b: BackgroundTheory,
    sampler: SamplerConfig,
    model: ToyNet,
    explanation_id: str = "",
    htv: HardToVaryOptions = HardToVaryOptions(),
    extras: dict | None = None,
    workers: int = 1,
) -> VirtueScorecard:
    flags = []
    train = _arrays(e, dataset.train)
    heldout = _arrays(e, dataset.heldout)
    acc = accuracy(e, train)
    desc = descriptiveness(e, train)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", EmptyHeldoutWarning)
        fruit = fruitfulness(e, heldout)
    if caught:
        flags.append("empty_heldout")
    sv = sample_virtues(e, sampler, model, workers)
    k = k_complexity(e, b)
    verdict = hard_to_vary_verdict(e, train, b, htv.radius, htv.cap, htv.samples, htv.seed)
    if verdict.mode == "sampled":
        flags.append("sampled_hard_to_vary_verdict")
    adhoc = explanation_adhocness(e, b)
    if adhoc is None:
        flags.append("no_entities_for_adhocness")
    else:
        flags.append("adhocness_conditioning_is_a_modeling_choice")
    flags.append("parsimony_entities_are_family_specific")
    if accuracy_probability(acc) is None:
        flags.append("accuracy_probability_underflows")
    return VirtueScorecard(
        explanation_id=explanation_id or e.family,
        family=e.family,
        accuracy_log2=acc,
        descriptiveness=desc,
        co_explanation=acc - desc,
        precision_est=sv.precision.mean,
        precision_est_stderr=sv.precision.stderr,
        power_est=sv.power.mean,
        power_est_stderr=sv.power.stderr,
        unification_est=sv.unification.mean,
        unification_est_stderr=sv.unification.stderr,
        prior_log2=prior(e, b),
        fruitfulness_log2=fruit,
        consistency=consistency_check(e),
        parsimony=parsimony(e),
        conciseness_bits=conciseness(e, b),
        k_complexity_bits=k,
        hv_value=acc - k,
        hard_to_vary=verdict.hard_to_vary,
        adhocness=adhoc,
        nomological_flag=e.nomological,
        n_train=len(train[1]),
        n_heldout=len(heldout[1]),
        sample_size=sampler.dataset_size,
        accuracy_prob=accuracy_probability(acc),
        hard_to_vary_mode=verdict.mode,
        flags=tuple(flags),
        extras=dict(extras or {}),
    )
