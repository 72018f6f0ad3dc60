"""Sparse dictionary surrogates: activations rebuilt from a few atoms, then patched back in."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..coding import TokenReader, sint_digits, uint_digits
from ..errors import DecodeError
from ..explanation import EditOp, Explanation, one_hot, register
from ..observations import all_inputs, bits_to_index
from ..toymodels import ACT_LIMIT, FRAC, ToyNet

Code = tuple[tuple[int, int], ...]  # ((atom index, quantized magnitude), ...)
HEADER_LEN = 9


def atom_frac(qbits: int) -> int:
    return qbits - 4  # atoms are Q4.(q-4)


def mag_frac(qbits: int) -> int:
    return qbits - 8  # magnitudes are Q8.(q-8)


def reconstruct(atoms: np.ndarray, codes, qbits: int, d: int) -> np.ndarray:
    """Q8.24 reconstructions, one row per code. Each term is rescaled before summing."""
    s = atom_frac(qbits) + mag_frac(qbits) - FRAC
    out = np.zeros((len(codes), d), dtype=np.int64)
    for i, code in enumerate(codes):
        for j, c in code:
            t = c * atoms[j]
            out[i] += t >> s if s >= 0 else t << -s
    return np.clip(out, -ACT_LIMIT, ACT_LIMIT - 1)


@register
@dataclass(frozen=True, eq=False)
class DictionaryExplanation(Explanation):
    model: ToyNet = field(repr=False)
    layer: int
    atoms: np.ndarray  # (m, d) integer grid values
    codes: tuple[Code, ...]  # one per enumerated input
    max_l0: int
    qbits: int = 16

    family = "dictionary"
    symbols = ()

    def __post_init__(self):
        if self.qbits % 4 or not 8 <= self.qbits <= 32:
            raise ValueError("dictionary coding supports 8..32 bits in steps of 4")
        if not 0 <= self.layer < self.model.n_layers:
            raise ValueError("dictionary layer must be the input or a hidden layer")
        a = np.array(self.atoms, dtype=np.int64, copy=True).reshape(-1, self.dim)
        a.setflags(write=False)
        object.__setattr__(self, "atoms", a)
        codes = tuple(tuple((int(j), int(c)) for j, c in code) for code in self.codes)
        if len(codes) != 1 << self.model.n_inputs:
            raise ValueError("need one code per enumerated input")
        object.__setattr__(self, "codes", codes)
        recon = reconstruct(a, codes, self.qbits, self.dim)
        recon.setflags(write=False)
        labels = np.argmax(self.model.forward_from(self.layer, recon), axis=1)
        object.__setattr__(self, "_recon", recon)
        object.__setattr__(self, "_proba", one_hot(labels, self.model.n_labels))

    @property
    def dim(self) -> int:
        return self.model.layer_sizes[self.layer]

    @property
    def m_atoms(self) -> int:
        return len(self.atoms)

    @property
    def n_inputs(self) -> int:
        return self.model.n_inputs

    @property
    def n_labels(self) -> int:
        return self.model.n_labels

    @property
    def active_atoms(self) -> list[int]:
        return sorted({j for code in self.codes for j, _ in code})

    @property
    def entity_count(self) -> int:
        return len(self.active_atoms)

    def predict_proba(self, X):
        X = np.asarray(X)
        self.check_inputs(X)
        return self._proba[bits_to_index(X)]

    def reconstruction(self) -> np.ndarray:
        return self._recon

    def reconstruction_errors(self) -> np.ndarray:
        """Squared error per enumerated input, in real units."""
        target = self.model.activations(all_inputs(self.n_inputs))[self.layer]
        diff = (self._recon - target) / float(1 << FRAC)
        return (diff * diff).sum(axis=1)

    def consistency_issues(self) -> list[str]:
        issues = []
        for i, code in enumerate(self.codes):
            idx = [j for j, _ in code]
            if len(code) > self.max_l0:
                issues.append(f"code {i} exceeds max_l0")
            if idx != sorted(set(idx)) or any(not 0 <= j < self.m_atoms for j in idx):
                issues.append(f"code {i} has invalid atom indices")
        if not np.isfinite(self.reconstruction_errors()).all():
            issues.append("non-finite reconstruction error")
        return issues

    def mdl_bits(self, include_dictionary: bool = True) -> float:
        """Per active latent: index bits plus magnitude bits; optionally the atom matrix."""
        index_bits = math.log2(self.m_atoms) if self.m_atoms else 0.0
        active = sum(len(c) for c in self.codes)
        bits = active * (index_bits + self.qbits)
        if include_dictionary:
            bits += self.m_atoms * self.dim * self.qbits
        return bits

    def tokens(self) -> list:
        qd = self.qbits // 4
        toks = [self.family, qd, self.layer]
        toks += uint_digits(self.dim, 2) + uint_digits(self.m_atoms, 2) + uint_digits(self.max_l0, 2)
        for v in self.atoms.ravel():
            toks += sint_digits(int(v), qd)
        for code in self.codes:
            toks += uint_digits(len(code), 2)
            for j, c in code:
                toks += uint_digits(j, 2) + sint_digits(c, qd)
        return toks

    def entity_spans(self):
        w = self.dim * self.qbits // 4
        return [(HEADER_LEN + j * w, HEADER_LEN + (j + 1) * w) for j in range(self.m_atoms)]

    @classmethod
    def parse(cls, reader: TokenReader, context=None):
        if context is None:
            raise DecodeError("dictionary explanations decode against a model")
        qd = reader.digit()
        layer = reader.digit()
        d, m, max_l0 = reader.uint(2), reader.uint(2), reader.uint(2)
        if not 2 <= qd <= 8:
            raise DecodeError("dictionary values use 2..8 digits")
        if not 0 <= layer < context.n_layers or d != context.layer_sizes[layer]:
            raise DecodeError("dictionary layer does not match the model")
        atoms = np.array([reader.sint(qd) for _ in range(m * d)], dtype=np.int64).reshape(m, d)
        codes = []
        for _ in range(1 << context.n_inputs):
            nnz = reader.uint(2)
            if nnz > max_l0:
                raise DecodeError("code exceeds max_l0")
            code = tuple((reader.uint(2), reader.sint(qd)) for _ in range(nnz))
            idx = [j for j, _ in code]
            if any(b <= a for a, b in zip(idx, idx[1:])) or any(j >= m for j in idx):
                raise DecodeError("code atom indices must be increasing and in range")
            codes.append(code)
        try:
            return cls(context, layer, atoms, tuple(codes), max_l0, 4 * qd)
        except ValueError as exc:
            raise DecodeError(str(exc)) from None


def atom_deletion_ops(e: DictionaryExplanation, j: int) -> list[EditOp]:
    """Edits that remove atom j: its block, every code term using it, and the index shift."""
    qd = e.qbits // 4
    toks = e.tokens()
    term = 2 + qd
    starts = []
    pos = HEADER_LEN + e.m_atoms * e.dim * qd
    for code in e.codes:
        starts.append(pos)
        pos += 2 + len(code) * term
    ops = []
    for code, start in reversed(list(zip(e.codes, starts))):
        kept = len(code)
        for t in range(len(code) - 1, -1, -1):
            idx, _ = code[t]
            at = start + 2 + t * term
            if idx == j:
                ops.append(EditOp("delete", at, tuple(toks[at : at + term])))
                kept -= 1
            elif idx > j:
                ops.append(EditOp("substitute", at, tuple(uint_digits(idx - 1, 2))))
        if kept != len(code):
            ops.append(EditOp("substitute", start, tuple(uint_digits(kept, 2))))
    block = e.dim * qd
    at = HEADER_LEN + j * block
    ops.append(EditOp("delete", at, tuple(toks[at : at + block])))
    ops.append(EditOp("substitute", 5, tuple(uint_digits(e.m_atoms - 1, 2))))
    return ops


# -- fitting ---------------------------------------------------------------


def matching_pursuit(A: np.ndarray, D: np.ndarray, l0: int) -> np.ndarray:
    """Greedy coding of every row of A; repeated picks merge into one coefficient."""
    N, m = len(A), len(D)
    coef = np.zeros((N, m))
    if m == 0 or l0 == 0:
        return coef
    norms = (D * D).sum(axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    R = A.copy()
    rows = np.arange(N)
    for _ in range(l0):
        corr = R @ D.T
        score = np.where(norms > 0, np.abs(corr) / np.sqrt(safe), 0.0)
        # never exceed l0 distinct atoms: once the support is full, stay on it
        full = (coef != 0).sum(axis=1) >= l0
        score = np.where(full[:, None] & (coef == 0), -1.0, score)
        j = np.argmax(score, axis=1)
        c = corr[rows, j] / safe[j]
        c = np.where(score[rows, j] > 1e-12, c, 0.0)
        coef[rows, j] += c
        R -= c[:, None] * D[j]
    return coef


def _fallback_atom(A: np.ndarray, R: np.ndarray, j: int) -> np.ndarray:
    res = (R * R).sum(axis=1)
    i = int(np.argmax(res))
    if res[i] > 0:
        v = R[i]
    else:
        v = np.zeros(A.shape[1])
        v[j % A.shape[1]] = 1.0
    return v / np.linalg.norm(v)


def _init_atoms(A: np.ndarray, m_atoms: int, init: str, rng: np.random.Generator) -> np.ndarray:
    d = A.shape[1]
    if init == "identity":
        return np.eye(m_atoms, d)
    if init == "data":
        D = A[rng.choice(len(A), size=m_atoms, replace=len(A) < m_atoms)].astype(float)
    elif init == "random":
        D = rng.standard_normal((m_atoms, d))
    else:
        raise ValueError(f"unknown init {init!r}")
    return D


def _normalize(A, D, coef):
    R = A - coef @ D
    for j in range(len(D)):
        n = np.linalg.norm(D[j])
        D[j] = D[j] / n if n > 1e-12 else _fallback_atom(A, R, j)
    return D


def _quantize_codes(coef: np.ndarray, qbits: int) -> tuple[Code, ...]:
    lim = 1 << (qbits - 1)
    q = np.clip(np.round(coef * (1 << mag_frac(qbits))), -lim, lim - 1).astype(np.int64)
    return tuple(tuple((int(j), int(row[j])) for j in np.flatnonzero(row)) for row in q)


def fit_dictionary(
    m: ToyNet,
    layer: int = 1,
    m_atoms: int = 8,
    max_l0: int = 2,
    seed: int = 0,
    qbits: int = 16,
    init: str = "random",
    rounds: int = 50,
) -> DictionaryExplanation:
    """Alternating matching pursuit / least-squares atoms, quantized at the end."""
    if m_atoms < 1 or max_l0 < 0:
        raise ValueError("need m_atoms >= 1 and max_l0 >= 0")
    A = m.activations(all_inputs(m.n_inputs))[layer] / float(1 << FRAC)
    rng = np.random.default_rng(seed)
    D = _normalize(A, _init_atoms(A, m_atoms, init, rng), np.zeros((len(A), m_atoms)))
    for _ in range(rounds):
        coef = matching_pursuit(A, D, max_l0)
        used = np.flatnonzero(np.abs(coef).sum(axis=0) > 0)
        if len(used):
            D[used] = np.linalg.lstsq(coef[:, used], A, rcond=None)[0]
        D = _normalize(A, D, coef)
    lim = 1 << (qbits - 1)
    Dq = np.clip(np.round(D * (1 << atom_frac(qbits))), -lim, lim - 1).astype(np.int64)
    coef = matching_pursuit(A, Dq / float(1 << atom_frac(qbits)), max_l0)
    return DictionaryExplanation(m, layer, Dq, _quantize_codes(coef, qbits), max_l0, qbits)
