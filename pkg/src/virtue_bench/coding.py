"""Prefix-free coding of explanation symbol streams.

A symbol stream mixes two kinds of tokens:

* structural symbols (``str``), coded with a canonical prefix code whose
  lengths come from the background theory's codebook;
* digits (``int`` in 0..15), coded as 4 raw bits.

Decoding is grammar driven: a family parser always knows whether the next
token is a digit or a symbol, so the concatenation stays prefix-free.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

from .errors import DecodeError, KraftViolation, UnknownSymbol

Token = Union[str, int]

DIGIT_BITS = 4
XVB_MAGIC = b"XVB1"


def kraft_sum(lengths: Iterable[int]) -> Fraction:
    return sum((Fraction(1, 2**n) for n in lengths), Fraction(0))


def canonical_codes(lengths: Mapping[str, int]) -> dict[str, tuple[int, int]]:
    """Assign canonical prefix codes, ordered by (length, symbol)."""
    code = 0
    prev = 0
    out: dict[str, tuple[int, int]] = {}
    for sym, n in sorted(lengths.items(), key=lambda kv: (kv[1], kv[0])):
        code <<= n - prev
        out[sym] = (code, n)
        code += 1
        prev = n
    return out


@dataclass(frozen=True)
class BackgroundTheory:
    codebook: Mapping[str, int]
    quantization_bits: int = 16
    version: str = "custom"
    _codes: dict = field(init=False, repr=False, compare=False)
    _decode: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        book = dict(self.codebook)
        for sym, n in book.items():
            if not isinstance(n, int) or n < 1:
                raise KraftViolation(f"code length for {sym!r} must be a positive integer")
        if kraft_sum(book.values()) > 1:
            raise KraftViolation(f"codebook {self.version!r} violates the Kraft inequality")
        if self.quantization_bits % DIGIT_BITS or not 4 <= self.quantization_bits <= 60:
            raise ValueError("quantization_bits must be a multiple of 4 in [4, 60]")
        codes = canonical_codes(book)
        object.__setattr__(self, "codebook", book)
        object.__setattr__(self, "_codes", codes)
        object.__setattr__(self, "_decode", {v: k for k, v in codes.items()})

    @property
    def max_length(self) -> int:
        return max(self.codebook.values(), default=0)

    def length(self, sym: str) -> int:
        try:
            return self.codebook[sym]
        except KeyError:
            raise UnknownSymbol(sym) from None

    def code(self, sym: str) -> tuple[int, int]:
        try:
            return self._codes[sym]
        except KeyError:
            raise UnknownSymbol(sym) from None

    def token_bits(self, tok: Token) -> int:
        if isinstance(tok, str):
            return self.length(tok)
        return DIGIT_BITS

    def stream_bits(self, tokens: Sequence[Token]) -> int:
        return sum(self.token_bits(t) for t in tokens)

    def covers(self, symbols: Iterable[str]) -> list[str]:
        """Return the symbols missing from the codebook."""
        return [s for s in symbols if s not in self.codebook]

    def extended(self, extra: Mapping[str, int], version: str | None = None) -> "BackgroundTheory":
        book = dict(self.codebook)
        book.update(extra)
        return BackgroundTheory(book, self.quantization_bits, version or f"{self.version}+ext")

    def fingerprint(self) -> str:
        blob = json.dumps(
            {"codebook": dict(sorted(self.codebook.items())), "q": self.quantization_bits},
            sort_keys=True,
        ).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def load_theory(path: str | Path | None = None, quantization_bits: int = 16) -> BackgroundTheory:
    """Load a codebook JSON ``{symbol: bit_length}``; default is the bundled one."""
    if path is None:
        text = resources.files("virtue_bench.data").joinpath("codebook_v1.json").read_text()
        version = "codebook_v1"
    else:
        path = Path(path)
        text = path.read_text()
        version = path.stem
    book = json.loads(text)
    if not isinstance(book, dict) or not all(isinstance(v, int) for v in book.values()):
        raise ValueError("codebook JSON must map symbols to integer bit lengths")
    return BackgroundTheory(book, quantization_bits, version)


def default_theory(quantization_bits: int = 16) -> BackgroundTheory:
    return load_theory(None, quantization_bits)


# -- bit strings -----------------------------------------------------------


@dataclass(frozen=True)
class BitString:
    bits: str  # '0'/'1' characters

    def __len__(self) -> int:
        return len(self.bits)

    def to_bytes(self) -> bytes:
        if not self.bits:
            return b""
        pad = (-len(self.bits)) % 8
        return int(self.bits + "0" * pad, 2).to_bytes((len(self.bits) + pad) // 8, "big")

    @classmethod
    def from_bytes(cls, data: bytes, nbits: int) -> "BitString":
        if nbits > 8 * len(data):
            raise DecodeError("bit length exceeds payload")
        if nbits == 0:
            return cls("")
        s = bin(int.from_bytes(data, "big"))[2:].zfill(8 * len(data))
        return cls(s[:nbits])


def encode_tokens(tokens: Sequence[Token], theory: BackgroundTheory) -> BitString:
    parts = []
    for tok in tokens:
        if isinstance(tok, str):
            code, n = theory.code(tok)
            parts.append(format(code, f"0{n}b"))
        else:
            if not 0 <= tok < 16:
                raise DecodeError(f"digit token out of range: {tok}")
            parts.append(format(tok, "04b"))
    return BitString("".join(parts))


def pack_blob(bits: BitString) -> bytes:
    return XVB_MAGIC + struct.pack(">I", len(bits)) + bits.to_bytes()


def unpack_blob(blob: bytes) -> BitString:
    if len(blob) < 8 or blob[:4] != XVB_MAGIC:
        raise DecodeError("missing XVB1 header")
    (nbits,) = struct.unpack(">I", blob[4:8])
    payload = blob[8:]
    if len(payload) != (nbits + 7) // 8:
        raise DecodeError("payload length does not match bit count")
    return BitString.from_bytes(payload, nbits)


# -- readers ---------------------------------------------------------------


class TokenReader:
    """Grammar-facing cursor over a token source."""

    def symbol(self) -> str:
        raise NotImplementedError

    def digit(self) -> int:
        raise NotImplementedError

    def exhausted(self) -> bool:
        raise NotImplementedError

    # numeric helpers built on digits (big-endian nibbles)
    def uint(self, ndigits: int) -> int:
        v = 0
        for _ in range(ndigits):
            v = (v << 4) | self.digit()
        return v

    def sint(self, ndigits: int) -> int:
        v = self.uint(ndigits)
        top = 1 << (4 * ndigits - 1)
        return v - (top << 1) if v & top else v

    def expect(self, *allowed: str) -> str:
        s = self.symbol()
        if s not in allowed:
            raise DecodeError(f"expected one of {allowed}, got {s!r}")
        return s


class ListReader(TokenReader):
    def __init__(self, tokens: Sequence[Token]):
        self.tokens = tokens
        self.pos = 0

    def _next(self) -> Token:
        if self.pos >= len(self.tokens):
            raise DecodeError("unexpected end of symbol stream")
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def symbol(self) -> str:
        tok = self._next()
        if not isinstance(tok, str):
            raise DecodeError(f"expected a symbol at {self.pos - 1}, got digit {tok}")
        return tok

    def digit(self) -> int:
        tok = self._next()
        if isinstance(tok, str) or not 0 <= tok < 16:
            raise DecodeError(f"expected a digit at {self.pos - 1}, got {tok!r}")
        return tok

    def exhausted(self) -> bool:
        return self.pos == len(self.tokens)


class BitReader(TokenReader):
    def __init__(self, bits: BitString, theory: BackgroundTheory):
        self.bits = bits.bits
        self.pos = 0
        self.theory = theory
        self.tokens: list[Token] = []

    def symbol(self) -> str:
        code = 0
        for n in range(1, self.theory.max_length + 1):
            if self.pos >= len(self.bits):
                raise DecodeError("unexpected end of bit stream")
            code = (code << 1) | (self.bits[self.pos] == "1")
            self.pos += 1
            sym = self.theory._decode.get((code, n))
            if sym is not None:
                self.tokens.append(sym)
                return sym
        raise DecodeError("bit pattern matches no codeword")

    def digit(self) -> int:
        if self.pos + 4 > len(self.bits):
            raise DecodeError("unexpected end of bit stream")
        d = int(self.bits[self.pos : self.pos + 4], 2)
        self.pos += 4
        self.tokens.append(d)
        return d

    def exhausted(self) -> bool:
        return self.pos == len(self.bits)


def uint_digits(value: int, ndigits: int) -> list[int]:
    if not 0 <= value < 1 << (4 * ndigits):
        raise ValueError(f"{value} does not fit in {ndigits} digits")
    return [(value >> (4 * (ndigits - 1 - i))) & 0xF for i in range(ndigits)]


def sint_digits(value: int, ndigits: int) -> list[int]:
    half = 1 << (4 * ndigits - 1)
    if not -half <= value < half:
        raise ValueError(f"{value} does not fit in {ndigits} signed digits")
    return uint_digits(value & ((half << 1) - 1), ndigits)
