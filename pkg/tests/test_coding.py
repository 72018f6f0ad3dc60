from __future__ import annotations

import json
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from virtue_bench.coding import (
    BackgroundTheory,
    BitReader,
    BitString,
    ListReader,
    canonical_codes,
    encode_tokens,
    kraft_sum,
    load_theory,
    pack_blob,
    sint_digits,
    uint_digits,
    unpack_blob,
)
from virtue_bench.errors import DecodeError, KraftViolation, UnknownSymbol
from virtue_bench.explanation import FAMILIES, check_codebook


def test_shipped_codebook_satisfies_kraft(theory):
    assert kraft_sum(theory.codebook.values()) == Fraction(18, 32)
    assert kraft_sum(theory.codebook.values()) <= 1


def test_shipped_codebook_covers_every_family(theory):
    check_codebook(theory)
    for cls in FAMILIES.values():
        assert not theory.covers((cls.family, *cls.symbols))


def test_kraft_violation_rejected_at_load(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"a": 1, "b": 1, "c": 1}))
    with pytest.raises(KraftViolation):
        load_theory(p)


def test_missing_family_symbol_is_reported():
    b = BackgroundTheory({"clustering": 1})
    with pytest.raises(UnknownSymbol):
        check_codebook(b)
    with pytest.raises(UnknownSymbol):
        encode_tokens(["dictionary"], b)


@pytest.mark.parametrize("q", [3, 0, 64, 10])
def test_quantization_bits_validated(q):
    with pytest.raises(ValueError):
        BackgroundTheory({"a": 1}, quantization_bits=q)


@given(st.dictionaries(st.text("abcdefgh", min_size=1, max_size=3), st.integers(1, 8), min_size=1, max_size=12))
def test_canonical_codes_are_prefix_free(lengths):
    if kraft_sum(lengths.values()) > 1:
        return
    codes = canonical_codes(lengths)
    words = [format(c, f"0{n}b") for c, n in codes.values()]
    for i, a in enumerate(words):
        for j, b in enumerate(words):
            if i != j:
                assert not b.startswith(a)


token = st.one_of(st.integers(0, 15), st.sampled_from(sorted(load_theory().codebook)))


@given(st.lists(token, max_size=60))
def test_bit_stream_round_trip_under_grammar(toks):
    b = load_theory()
    bits = encode_tokens(toks, b)
    assert len(bits) == b.stream_bits(toks)
    r = BitReader(bits, b)
    out = [r.symbol() if isinstance(t, str) else r.digit() for t in toks]
    assert out == toks and r.exhausted()


@given(st.lists(token, max_size=40))
def test_blob_round_trip(toks):
    b = load_theory()
    bits = encode_tokens(toks, b)
    blob = pack_blob(bits)
    assert blob[:4] == b"XVB1"
    assert unpack_blob(blob) == bits


def test_blob_rejects_bad_magic_and_length():
    bits = BitString("10110")
    blob = pack_blob(bits)
    with pytest.raises(DecodeError):
        unpack_blob(b"XXXX" + blob[4:])
    with pytest.raises(DecodeError):
        unpack_blob(blob + b"\x00")


@given(st.integers(1, 8), st.data())
def test_signed_and_unsigned_digits_round_trip(nd, data):
    u = data.draw(st.integers(0, 16**nd - 1))
    assert ListReader(uint_digits(u, nd)).uint(nd) == u
    s = data.draw(st.integers(-(16**nd) // 2, 16**nd // 2 - 1))
    assert ListReader(sint_digits(s, nd)).sint(nd) == s


def test_digit_overflow_raises():
    with pytest.raises(ValueError):
        uint_digits(256, 2)
    with pytest.raises(ValueError):
        sint_digits(128, 2)


def test_readers_reject_wrong_token_kind():
    with pytest.raises(DecodeError):
        ListReader([3]).symbol()
    with pytest.raises(DecodeError):
        ListReader(["clustering"]).digit()
    with pytest.raises(DecodeError):
        ListReader([]).digit()
    with pytest.raises(DecodeError):
        ListReader(["tie.low"]).expect("tie.none")


def test_fingerprint_is_stable(theory):
    assert theory.fingerprint() == load_theory().fingerprint()
    assert theory.extended({"zz": 8}).fingerprint() != theory.fingerprint()
