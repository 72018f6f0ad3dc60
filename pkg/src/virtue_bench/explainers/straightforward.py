"""The full computational trace of a net, coded parameter by parameter."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..coding import TokenReader, sint_digits, uint_digits
from ..errors import DecodeError
from ..explanation import Explanation, one_hot, register
from ..toymodels import ToyNet

ACT_SYMBOLS = {"relu": "act.relu", "identity": "act.identity"}


def _requantize(w: np.ndarray, qbits: int) -> np.ndarray:
    """Q4.12 -> Q4.(qbits-4), rounding half up when precision drops."""
    shift = 16 - qbits
    if shift == 0:
        return w.copy()
    return (w + (1 << (shift - 1))) >> shift


@register
@dataclass(frozen=True, eq=False)
class StraightforwardExplanation(Explanation):
    net: ToyNet
    qbits: int = 16

    family = "straightforward"
    symbols = ("act.relu", "act.identity")

    def __post_init__(self):
        if self.qbits % 4 or not 4 <= self.qbits <= 16:
            raise ValueError("straightforward coding supports 4, 8, 12 or 16 bits per parameter")

    @property
    def n_inputs(self) -> int:
        return self.net.n_inputs

    @property
    def n_labels(self) -> int:
        return self.net.n_labels

    @property
    def entity_count(self) -> int:
        return self.net.n_params

    def predict_proba(self, X):
        self.check_inputs(np.asarray(X))
        return one_hot(self.net.predict(X), self.n_labels)

    def header_tokens(self) -> list:
        sizes = self.net.layer_sizes
        toks = [self.family, self.qbits // 4, ACT_SYMBOLS[self.net.activation], len(sizes)]
        for s in sizes:
            toks += uint_digits(s, 2)
        return toks

    def tokens(self) -> list:
        qd = self.qbits // 4
        toks = self.header_tokens()
        for w, b in zip(self.net.weights, self.net.biases):
            for v in _requantize(w, self.qbits).ravel():
                toks += sint_digits(int(v), qd)
            for v in _requantize(b, self.qbits):
                toks += sint_digits(int(v), qd)
        return toks

    def entity_spans(self):
        start = len(self.header_tokens())
        qd = self.qbits // 4
        return [(start + i * qd, start + (i + 1) * qd) for i in range(self.net.n_params)]

    @classmethod
    def parse(cls, reader: TokenReader, context=None):
        qd = reader.digit()
        if qd == 0 or qd > 4:
            raise DecodeError("straightforward parameters use 1..4 digits")
        act = reader.expect(*ACT_SYMBOLS.values()).split(".", 1)[1]
        nsizes = reader.digit()
        sizes = [reader.uint(2) for _ in range(nsizes)]
        if nsizes < 2 or any(s == 0 for s in sizes):
            raise DecodeError("bad layer sizes")
        up = 16 - 4 * qd
        ws, bs = [], []
        for a, b in zip(sizes[:-1], sizes[1:]):
            w = np.array([reader.sint(qd) for _ in range(a * b)], dtype=np.int64).reshape(a, b)
            bias = np.array([reader.sint(qd) for _ in range(b)], dtype=np.int64)
            ws.append(w << up)
            bs.append(bias << up)
        try:
            net = ToyNet(tuple(sizes), tuple(ws), tuple(bs), act)
        except (ValueError, ArithmeticError) as exc:
            raise DecodeError(str(exc)) from None
        return cls(net, 4 * qd)


def straightforward(m: ToyNet, qbits: int = 16) -> StraightforwardExplanation:
    if qbits < 16:
        shift = 16 - qbits
        ws = tuple(_requantize(w, qbits) << shift for w in m.weights)
        bs = tuple(_requantize(b, qbits) << shift for b in m.biases)
        m = ToyNet(m.layer_sizes, ws, bs, m.activation, m.seed, m.task)
    return StraightforwardExplanation(m, qbits)

