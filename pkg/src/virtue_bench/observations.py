"""Observations, datasets and bit-vector helpers."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import WidthMismatch


@dataclass(frozen=True)
class Observation:
    input: tuple[int, ...]
    output: int

    @property
    def width(self) -> int:
        return len(self.input)


@dataclass(frozen=True)
class Dataset:
    train: tuple[Observation, ...]
    heldout: tuple[Observation, ...]
    generator_seed: int
    generator_spec: str

    def arrays(self, split: str = "train") -> tuple[np.ndarray, np.ndarray]:
        return to_arrays(self.train if split == "train" else self.heldout)


@lru_cache(maxsize=16)
def _all_inputs(n: int) -> np.ndarray:
    idx = np.arange(1 << n, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    out = ((idx[:, None] >> shifts[None, :]) & 1).astype(np.uint8)
    out.setflags(write=False)
    return out


def all_inputs(n: int) -> np.ndarray:
    """All 2**n bit vectors in lexicographic order (MSB first)."""
    return _all_inputs(n)


def index_to_bits(idx, n: int) -> np.ndarray:
    return all_inputs(n)[np.asarray(idx, dtype=np.int64)]


def bits_to_index(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.int64)
    n = X.shape[1]
    weights = 1 << np.arange(n - 1, -1, -1, dtype=np.int64)
    return X @ weights


def to_arrays(obs: Sequence[Observation], width: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    if not obs:
        n = width or 0
        return np.zeros((0, n), dtype=np.uint8), np.zeros(0, dtype=np.int64)
    n = len(obs[0].input)
    if any(len(o.input) != n for o in obs):
        raise WidthMismatch("observations have mixed input widths")
    X = np.array([o.input for o in obs], dtype=np.uint8)
    y = np.array([o.output for o in obs], dtype=np.int64)
    return X, y


def from_arrays(X: np.ndarray, y: np.ndarray) -> tuple[Observation, ...]:
    return tuple(Observation(tuple(int(b) for b in row), int(label)) for row, label in zip(X, y))
