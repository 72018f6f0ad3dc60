"""Local-maximum test for hv over the symbol-edit neighborhood of an explanation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .coding import BackgroundTheory, Token
from .errors import DecodeError, NeighborhoodTooLarge
from .explanation import EditOp, Explanation, _arrays, apply_ops, decode_tokens
from .metrics import k_complexity

DEFAULT_CAP = 10**6


def edit_alphabet(e: Explanation) -> tuple[Token, ...]:
    """The 16 digits plus the family's structural symbols."""
    return tuple(range(16)) + tuple(e.symbols)


def single_edit_count(length: int, alphabet_size: int) -> int:
    return length * alphabet_size + length + (length + 1) * alphabet_size + max(length - 1, 0)


def neighborhood_size(length: int, alphabet_size: int, radius: int) -> int:
    """Number of edit lists of size <= radius (identical results are not removed)."""
    n1 = single_edit_count(length, alphabet_size)
    if radius == 1:
        return n1
    total = n1
    # the second edit applies to a stream whose length depends on the first
    total += length * alphabet_size * single_edit_count(length, alphabet_size)
    total += length * single_edit_count(length - 1, alphabet_size)
    total += (length + 1) * alphabet_size * single_edit_count(length + 1, alphabet_size)
    total += max(length - 1, 0) * single_edit_count(length, alphabet_size)
    return total


def single_edits(length: int, alphabet: Sequence[Token]) -> Iterator[EditOp]:
    """Deterministic order: substitute, delete, insert, transpose; then location; then payload."""
    for i in range(length):
        for s in alphabet:
            yield EditOp("substitute", i, (s,))
    for i in range(length):
        yield EditOp("delete", i)
    for i in range(length + 1):
        for s in alphabet:
            yield EditOp("insert", i, (s,))
    for i in range(length - 1):
        yield EditOp("transpose", i)


def edit_lists(tokens: Sequence[Token], alphabet: Sequence[Token], radius: int) -> Iterator[list[EditOp]]:
    for op in single_edits(len(tokens), alphabet):
        yield [op]
    if radius >= 2:
        for op in single_edits(len(tokens), alphabet):
            after = apply_ops(tokens, [op])
            for op2 in single_edits(len(after), alphabet):
                yield [op, op2]


@dataclass(frozen=True)
class HardToVaryResult:
    hard_to_vary: bool
    witness: list[EditOp] | None
    hv: float
    witness_hv: float | None
    mode: str  # "exhaustive" | "sampled"
    evaluated: int
    feasible: int
    neighborhood: int = field(default=0)


class _Scorer:
    def __init__(self, e: Explanation, train, b: BackgroundTheory):
        self.e, self.b = e, b
        self.X, self.y = _arrays(e, train)
        self.tokens = e.tokens()
        self.hv = self.score(e)

    def score(self, e: Explanation) -> float:
        return e.joint_log2(self.X, self.y) - k_complexity(e, self.b)

    def neighbor_hv(self, delta: list[EditOp]) -> float | None:
        """hv of the edited explanation, or None when the edit is infeasible or a no-op."""
        try:
            toks = apply_ops(self.tokens, delta)
        except DecodeError:
            return None
        if toks == self.tokens:
            return None
        if any(isinstance(t, str) and t not in self.b.codebook for t in toks):
            return None
        try:
            e2 = decode_tokens(toks, self.e.context)
        except DecodeError:
            return None
        if e2.n_inputs != self.e.n_inputs or e2.n_labels != self.e.n_labels:
            return None
        return self.score(e2)


def is_hard_to_vary(
    e: Explanation,
    train,
    b: BackgroundTheory,
    radius: int = 1,
    cap: int = DEFAULT_CAP,
    alphabet: Sequence[Token] | None = None,
) -> HardToVaryResult:
    """True iff every feasible neighbor within ``radius`` edits has strictly lower hv.

    A neighbor that ties counts against the verdict: a free variation exists.
    """
    if radius not in (1, 2):
        raise ValueError("radius must be 1 or 2")
    alphabet = tuple(alphabet) if alphabet is not None else edit_alphabet(e)
    scorer = _Scorer(e, train, b)
    size = neighborhood_size(len(scorer.tokens), len(alphabet), radius)
    if size > cap:
        raise NeighborhoodTooLarge(size, cap)
    evaluated = feasible = 0
    for delta in edit_lists(scorer.tokens, alphabet, radius):
        evaluated += 1
        hv2 = scorer.neighbor_hv(delta)
        if hv2 is None:
            continue
        feasible += 1
        if hv2 >= scorer.hv:
            return HardToVaryResult(False, delta, scorer.hv, hv2, "exhaustive", evaluated, feasible, size)
    return HardToVaryResult(True, None, scorer.hv, None, "exhaustive", evaluated, feasible, size)


def _random_edit(length: int, alphabet: Sequence[Token], rng: np.random.Generator) -> EditOp:
    a = len(alphabet)
    weights = np.array([length * a, length, (length + 1) * a, max(length - 1, 0)], dtype=float)
    kind = int(rng.choice(4, p=weights / weights.sum()))
    if kind == 0:
        return EditOp("substitute", int(rng.integers(length)), (alphabet[int(rng.integers(a))],))
    if kind == 1:
        return EditOp("delete", int(rng.integers(length)))
    if kind == 2:
        return EditOp("insert", int(rng.integers(length + 1)), (alphabet[int(rng.integers(a))],))
    return EditOp("transpose", int(rng.integers(length - 1)))


def sampled_hard_to_vary(
    e: Explanation,
    train,
    b: BackgroundTheory,
    radius: int = 1,
    samples: int = 2000,
    seed: int = 0,
    alphabet: Sequence[Token] | None = None,
) -> HardToVaryResult:
    """Seeded random probe of the neighborhood; a True verdict is only as good as the sample."""
    if radius not in (1, 2):
        raise ValueError("radius must be 1 or 2")
    alphabet = tuple(alphabet) if alphabet is not None else edit_alphabet(e)
    scorer = _Scorer(e, train, b)
    size = neighborhood_size(len(scorer.tokens), len(alphabet), radius)
    rng = np.random.default_rng(seed)
    feasible = 0
    for k in range(samples):
        delta = [_random_edit(len(scorer.tokens), alphabet, rng)]
        if radius == 2 and rng.integers(2):
            after_len = len(apply_ops(scorer.tokens, delta))
            if after_len:
                delta.append(_random_edit(after_len, alphabet, rng))
        hv2 = scorer.neighbor_hv(delta)
        if hv2 is None:
            continue
        feasible += 1
        if hv2 >= scorer.hv:
            return HardToVaryResult(False, delta, scorer.hv, hv2, "sampled", k + 1, feasible, size)
    return HardToVaryResult(True, None, scorer.hv, None, "sampled", samples, feasible, size)


def hard_to_vary_verdict(
    e: Explanation,
    train,
    b: BackgroundTheory,
    radius: int = 1,
    cap: int = DEFAULT_CAP,
    samples: int = 2000,
    seed: int = 0,
) -> HardToVaryResult:
    """Exhaustive when the neighborhood fits under ``cap``, otherwise sampled."""
    try:
        return is_hard_to_vary(e, train, b, radius, cap)
    except NeighborhoodTooLarge:
        return sampled_hard_to_vary(e, train, b, radius, samples, seed)
