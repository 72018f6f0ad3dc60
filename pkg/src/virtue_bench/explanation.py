"""The explanation abstraction shared by every family.

An explanation is a probabilistic surrogate: for each input it yields a
categorical distribution over the label set. Each family also defines a
symbol grammar, which gives the serialized code (and its length in bits)
and the space that edit operations act on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar, Sequence

import numpy as np

from .coding import (
    BackgroundTheory,
    BitReader,
    BitString,
    ListReader,
    Token,
    TokenReader,
    encode_tokens,
    pack_blob,
    unpack_blob,
)
from .errors import DecodeError, UnknownSymbol, WidthMismatch
from .observations import Observation, to_arrays

# Smoothing floor for deterministic predictions: mass moved onto wrong labels.
EPS = 2.0**-32
LOG2_EPS = -32.0

FAMILIES: dict[str, type["Explanation"]] = {}


def register(cls):
    FAMILIES[cls.family] = cls
    return cls


def smooth(p: np.ndarray) -> np.ndarray:
    """Floor a (N, L) distribution: p' = (1-eps) p + eps (1-p)/(L-1)."""
    L = p.shape[1]
    if L == 1:
        return p
    return (1.0 - EPS) * p + EPS * (1.0 - p) / (L - 1)


def one_hot(labels: np.ndarray, n_labels: int) -> np.ndarray:
    p = np.zeros((len(labels), n_labels))
    p[np.arange(len(labels)), labels] = 1.0
    return smooth(p)


class Explanation:
    family: ClassVar[str] = ""
    symbols: ClassVar[tuple[str, ...]] = ()
    factorized: ClassVar[bool] = True
    nomological: ClassVar[bool] = False

    # -- to be provided by families
    @property
    def n_inputs(self) -> int:
        raise NotImplementedError

    @property
    def n_labels(self) -> int:
        raise NotImplementedError

    @property
    def entity_count(self) -> int:
        raise NotImplementedError

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def tokens(self) -> list[Token]:
        raise NotImplementedError

    @classmethod
    def parse(cls, reader: TokenReader, context=None) -> "Explanation":
        raise NotImplementedError

    def consistency_issues(self) -> list[str]:
        return []

    def entity_spans(self) -> list[tuple[int, int]]:
        """Token ranges [start, end) of each posited entity, in order."""
        return []

    @property
    def context(self):
        return getattr(self, "model", None)

    # -- likelihoods (bits)
    def pointwise_log2(self, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        p = self.predict_proba(X)
        return np.log2(p[np.arange(len(y)), y])

    def joint_log2(self, X: np.ndarray, y: np.ndarray) -> float:
        return float(np.sum(self.pointwise_log2(X, y)))

    def check_inputs(self, X: np.ndarray, y: np.ndarray | None = None) -> None:
        if X.ndim != 2 or X.shape[1] != self.n_inputs:
            raise WidthMismatch(f"explanation expects width {self.n_inputs}, data has shape {X.shape}")
        if y is not None and len(y) and (y.min() < 0 or y.max() >= self.n_labels):
            raise ValueError("observation output outside the label set")


# -- likelihood entry points ----------------------------------------------


def _arrays(e: Explanation, obs) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(obs, tuple) and len(obs) == 2 and isinstance(obs[0], np.ndarray):
        X, y = obs
    else:
        X, y = to_arrays(list(obs), e.n_inputs)
    e.check_inputs(X, y)
    return X, y


def log_likelihood(e: Explanation, obs: Sequence[Observation]) -> float:
    """log2 P(obs | e); joint for non-factorized families."""
    X, y = _arrays(e, obs)
    if len(y) == 0:
        return 0.0
    return e.joint_log2(X, y)


def pointwise_log_likelihood(e: Explanation, obs: Sequence[Observation]) -> np.ndarray:
    X, y = _arrays(e, obs)
    if len(y) == 0:
        return np.zeros(0)
    return e.pointwise_log2(X, y)


# -- serialization ---------------------------------------------------------


def serialize(e: Explanation, b: BackgroundTheory) -> BitString:
    return encode_tokens(e.tokens(), b)


def stream_bits(tokens: Sequence[Token], b: BackgroundTheory) -> int:
    return b.stream_bits(tokens)


def _parse(reader: TokenReader, context) -> Explanation:
    tag = reader.symbol()
    cls = FAMILIES.get(tag)
    if cls is None:
        raise DecodeError(f"{tag!r} is not a family tag")
    try:
        e = cls.parse(reader, context)
    except DecodeError:
        raise
    except (ValueError, ArithmeticError, IndexError) as exc:
        # constructor-level rejections are still just undecodable streams
        raise DecodeError(f"{tag}: {exc}") from None
    if not reader.exhausted():
        raise DecodeError("trailing symbols after a complete explanation")
    return e


def decode_tokens(tokens: Sequence[Token], context=None) -> Explanation:
    return _parse(ListReader(tokens), context)


def deserialize(bits: BitString, b: BackgroundTheory, context=None) -> Explanation:
    return _parse(BitReader(bits, b), context)


def to_blob(e: Explanation, b: BackgroundTheory) -> bytes:
    return pack_blob(serialize(e, b))


def from_blob(blob: bytes, b: BackgroundTheory, context=None) -> Explanation:
    return deserialize(unpack_blob(blob), b, context)


# -- edits -----------------------------------------------------------------

EDIT_KINDS = ("substitute", "delete", "insert", "transpose")


@dataclass(frozen=True)
class EditOp:
    kind: str
    location: int
    payload: tuple[Token, ...] = ()

    def __post_init__(self):
        if self.kind not in EDIT_KINDS:
            raise ValueError(f"unknown edit kind {self.kind!r}")
        object.__setattr__(self, "payload", tuple(self.payload))


def apply_ops(tokens: Sequence[Token], delta: Sequence[EditOp]) -> list[Token]:
    """Apply edits in order to a token list. Bad locations raise DecodeError."""
    out = list(tokens)
    for op in delta:
        i = op.location
        if op.kind == "insert":
            if not 0 <= i <= len(out) or not op.payload:
                raise DecodeError(f"invalid insert at {i}")
            out[i:i] = op.payload
        elif op.kind == "delete":
            count = len(op.payload) or 1
            if i < 0 or i + count > len(out):
                raise DecodeError(f"invalid delete at {i}")
            if op.payload and tuple(out[i : i + count]) != op.payload:
                raise DecodeError(f"delete payload does not match stream at {i}")
            del out[i : i + count]
        elif op.kind == "substitute":
            if not op.payload or i < 0 or i + len(op.payload) > len(out):
                raise DecodeError(f"invalid substitution at {i}")
            out[i : i + len(op.payload)] = op.payload
        else:
            if i < 0 or i + 1 >= len(out):
                raise DecodeError(f"invalid transposition at {i}")
            out[i], out[i + 1] = out[i + 1], out[i]
    return out


def inverse_ops(tokens: Sequence[Token], delta: Sequence[EditOp]) -> list[EditOp]:
    """Edits that undo ``delta`` when applied to ``apply_ops(tokens, delta)``."""
    inv = []
    cur = list(tokens)
    for op in delta:
        i = op.location
        if op.kind == "insert":
            inv.append(EditOp("delete", i, op.payload))
        elif op.kind == "delete":
            count = len(op.payload) or 1
            inv.append(EditOp("insert", i, tuple(cur[i : i + count])))
        elif op.kind == "substitute":
            inv.append(EditOp("substitute", i, tuple(cur[i : i + len(op.payload)])))
        else:
            inv.append(EditOp("transpose", i))
        cur = apply_ops(cur, [op])
    return inv[::-1]


def apply_edit(e: Explanation, delta: Sequence[EditOp], b: BackgroundTheory) -> Explanation:
    if not delta:
        raise ValueError("edit list must be non-empty")
    for op in delta:
        for tok in op.payload:
            if isinstance(tok, str) and tok not in b.codebook:
                raise DecodeError(f"symbol {tok!r} is not in the codebook")
    return decode_tokens(apply_ops(e.tokens(), delta), e.context)


def check_codebook(b: BackgroundTheory) -> None:
    missing = [s for cls in FAMILIES.values() for s in (cls.family, *cls.symbols) if s not in b.codebook]
    if missing:
        raise UnknownSymbol(", ".join(sorted(set(missing))))
