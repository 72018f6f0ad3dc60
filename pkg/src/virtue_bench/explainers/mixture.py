"""Mixtures of global label programs with per-hypothesis noise.

This is the one non-factorized family: the joint likelihood marginalizes the
hypothesis once for the whole dataset, so it can exceed the product of
per-point marginals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..coding import TokenReader, uint_digits
from ..errors import DecodeError
from ..explanation import LOG2_EPS, Explanation, _arrays, register
from ..observations import all_inputs
from ..toymodels import ToyNet

PROGRAM_SYMBOLS = {
    "parity": "h.parity",
    "majority": "h.majority",
    "const": "h.const",
    "bit": "h.bit",
    "modadd": "h.modadd",
}
_WITH_ARG = {"const", "bit"}


def parse_program(spec: str) -> tuple[str, int]:
    name, _, arg = spec.partition(":")
    if name not in PROGRAM_SYMBOLS:
        raise ValueError(f"unknown hypothesis program {spec!r}")
    if (name in _WITH_ARG) != bool(arg):
        raise ValueError(f"program {name!r} {'needs' if name in _WITH_ARG else 'takes no'} argument")
    return name, int(arg) if arg else 0


def program_name(prog: tuple[str, int]) -> str:
    name, arg = prog
    return f"{name}:{arg}" if name in _WITH_ARG else name


def run_program(prog: tuple[str, int], X: np.ndarray, n_labels: int) -> np.ndarray:
    name, arg = prog
    X = np.asarray(X, dtype=np.int64)
    n = X.shape[1]
    if name == "parity":
        out = X.sum(axis=1) & 1
    elif name == "majority":
        out = (X.sum(axis=1) * 2 > n).astype(np.int64)
    elif name == "const":
        out = np.full(len(X), arg, dtype=np.int64)
    elif name == "bit":
        # a bit past the input width reads as 0; consistency_issues reports it
        out = X[:, arg] if arg < n else np.zeros(len(X), dtype=np.int64)
    else:
        h = n // 2
        w_a = 1 << np.arange(h - 1, -1, -1)
        w_b = 1 << np.arange(n - h - 1, -1, -1)
        out = (X[:, :h] @ w_a + X[:, h:] @ w_b) % n_labels
    return out.astype(np.int64)


class MixtureLoglik(NamedTuple):
    joint: float
    pointwise: np.ndarray
    clamped: bool


@register
@dataclass(frozen=True, eq=False)
class MixtureExplanation(Explanation):
    n: int
    labels: int
    hypotheses: tuple[tuple[str, int], ...]
    weights: tuple[int, ...]  # unnormalized prior weights
    etas: tuple[int, ...]  # noise rate eta = v / 2**qbits
    qbits: int = 16

    family = "mixture"
    symbols = tuple(PROGRAM_SYMBOLS.values())
    factorized = False
    nomological = True

    def __post_init__(self):
        hyps = tuple(parse_program(h) if isinstance(h, str) else (h[0], int(h[1])) for h in self.hypotheses)
        object.__setattr__(self, "hypotheses", hyps)
        object.__setattr__(self, "weights", tuple(int(w) for w in self.weights))
        object.__setattr__(self, "etas", tuple(int(v) for v in self.etas))
        if not len(hyps) == len(self.weights) == len(self.etas):
            raise ValueError("need one weight and one eta per hypothesis")

    @property
    def n_inputs(self) -> int:
        return self.n

    @property
    def n_labels(self) -> int:
        return self.labels

    @property
    def entity_count(self) -> int:
        return len(self.hypotheses)

    @property
    def prior(self) -> np.ndarray:
        w = np.asarray(self.weights, dtype=float)
        if w.sum() <= 0:
            return np.full(len(w), 1.0 / max(len(w), 1))
        return w / w.sum()

    @property
    def eta_values(self) -> np.ndarray:
        return np.asarray(self.etas, dtype=float) / float(1 << self.qbits)

    def hypothesis_proba(self, X) -> np.ndarray:
        """(H, N, L) per-hypothesis label distributions."""
        X = np.asarray(X)
        N, L = len(X), self.labels
        out = np.empty((len(self.hypotheses), N, L))
        for h, (prog, eta) in enumerate(zip(self.hypotheses, self.eta_values)):
            pred = run_program(prog, X, L) % L
            if L == 1:
                out[h] = 1.0
                continue
            out[h] = eta / (L - 1)
            out[h, np.arange(N), pred] = 1.0 - eta
        return out

    def predict_proba(self, X):
        X = np.asarray(X)
        self.check_inputs(X)
        if not self.hypotheses:
            return np.full((len(X), self.labels), 1.0 / self.labels)
        return np.tensordot(self.prior, self.hypothesis_proba(X), axes=1)

    def pointwise_log2(self, X, y):
        with np.errstate(divide="ignore"):
            lp = np.log2(self.predict_proba(X)[np.arange(len(y)), y])
        return np.where(np.isneginf(lp), LOG2_EPS, lp)

    def joint_terms(self, X, y) -> np.ndarray:
        """log2 pi_h + sum_i log2 P_h(y_i | x_i), one entry per hypothesis."""
        P = self.hypothesis_proba(X)[:, np.arange(len(y)), y]
        with np.errstate(divide="ignore"):
            return np.log2(self.prior) + np.log2(P).sum(axis=1)

    def joint_log2(self, X, y) -> float:
        if not self.hypotheses:
            return float(np.sum(self.pointwise_log2(X, y)))
        joint = float(np.logaddexp2.reduce(self.joint_terms(X, y)))
        return joint if np.isfinite(joint) else len(y) * LOG2_EPS

    def consistency_issues(self) -> list[str]:
        issues = []
        if self.hypotheses and sum(self.weights) <= 0:
            issues.append("prior weights sum to zero")
        for prog, v in zip(self.hypotheses, self.etas):
            if not 0 <= v < 1 << (self.qbits - 1):
                issues.append(f"{program_name(prog)} has eta outside [0, 0.5)")
            name, arg = prog
            if name == "bit" and arg >= self.n:
                issues.append(f"{program_name(prog)} reads a bit the input does not have")
            if self.labels > 1:
                out = run_program(prog, all_inputs(self.n), self.labels)
                if out.max() >= self.labels:
                    issues.append(f"{program_name(prog)} emits labels outside the label set")
        return issues

    def _header(self) -> list:
        return [self.family, self.qbits // 4, self.n] + uint_digits(self.labels, 2) + [len(self.hypotheses)]

    def _hyp_tokens(self, h: int) -> list:
        qd = self.qbits // 4
        name, arg = self.hypotheses[h]
        toks = [PROGRAM_SYMBOLS[name]] + ([arg] if name in _WITH_ARG else [])
        return toks + uint_digits(self.weights[h], qd) + uint_digits(self.etas[h], qd)

    def tokens(self) -> list:
        toks = self._header()
        for h in range(len(self.hypotheses)):
            toks += self._hyp_tokens(h)
        return toks

    def entity_spans(self):
        spans, pos = [], len(self._header())
        for h in range(len(self.hypotheses)):
            w = len(self._hyp_tokens(h))
            spans.append((pos, pos + w))
            pos += w
        return spans

    @classmethod
    def parse(cls, reader: TokenReader, context=None):
        qd = reader.digit()
        n = reader.digit()
        labels = reader.uint(2)
        H = reader.digit()
        if qd == 0 or not 1 <= n <= 12 or labels == 0:
            raise DecodeError("bad mixture header")
        inverse = {v: k for k, v in PROGRAM_SYMBOLS.items()}
        hyps, weights, etas = [], [], []
        for _ in range(H):
            name = inverse[reader.expect(*inverse)]
            arg = reader.digit() if name in _WITH_ARG else 0
            hyps.append((name, arg))
            weights.append(reader.uint(qd))
            etas.append(reader.uint(qd))
        return cls(n, labels, tuple(hyps), tuple(weights), tuple(etas), 4 * qd)


def mixture_loglik(x: MixtureExplanation, obs) -> MixtureLoglik:
    """Joint and per-point marginal log-likelihoods; flags a clamped -inf joint."""
    X, y = _arrays(x, obs)
    if len(y) == 0:
        return MixtureLoglik(0.0, np.zeros(0), False)
    clamped = bool(x.hypotheses) and not np.isfinite(np.logaddexp2.reduce(x.joint_terms(X, y)))
    return MixtureLoglik(x.joint_log2(X, y), x.pointwise_log2(X, y), clamped)


def fit_mixture(m: ToyNet, programs, qbits: int = 16, inputs=None) -> MixtureExplanation:
    """Uniform prior; each eta is the program's error rate against the model, on the grid."""
    n, L = m.n_inputs, m.n_labels
    X = all_inputs(n) if inputs is None else all_inputs(n)[np.asarray(inputs, dtype=np.int64)]
    labels = m.predict(X)
    scale = 1 << qbits
    hyps, etas = [], []
    for spec in programs:
        prog = parse_program(spec) if isinstance(spec, str) else spec
        err = int(np.sum(run_program(prog, X, L) % L != labels))
        v = -(-err * scale // len(X))  # ceiling onto the grid
        etas.append(min(max(v, 1), scale // 2 - 1))
        hyps.append(prog)
    return MixtureExplanation(n, L, tuple(hyps), (1,) * len(hyps), tuple(etas), qbits)
