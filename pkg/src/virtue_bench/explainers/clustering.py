"""Partition (quotient) surrogates: k-means cells with per-cell label counts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..coding import TokenReader, sint_digits, uint_digits
from ..errors import DecodeError
from ..explanation import Explanation, register, smooth
from ..observations import all_inputs, bits_to_index
from ..toymodels import FRAC, ToyNet

COUNT_DIGITS = 4
MAX_ITER = 100


def coord_frac(qbits: int) -> int:
    # centroids are Q8.(qbits-8): wide enough for Q8.24 activations
    return qbits - 8


def space_points(model: ToyNet | None, space: int, X: np.ndarray, qbits: int) -> np.ndarray:
    frac = coord_frac(qbits)
    if space == 0:
        return np.asarray(X, dtype=np.int64) << frac
    if model is None:
        raise ValueError("activation-space clustering needs the model")
    acts = model.activations(X)[space]
    shift = FRAC - frac
    return acts >> shift if shift >= 0 else acts << -shift


def sq_distances(P: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Exact integer squared distances, (N, k)."""
    if len(C) == 0:
        return np.zeros((len(P), 0), dtype=np.int64)
    pn = (P * P).sum(axis=1)[:, None]
    cn = (C * C).sum(axis=1)[None, :]
    return pn - 2 * (P @ C.T) + cn


def assign(P: np.ndarray, C: np.ndarray, chunk: int = 1024) -> np.ndarray:
    out = np.empty(len(P), dtype=np.int64)
    for s in range(0, len(P), chunk):
        out[s : s + chunk] = np.argmin(sq_distances(P[s : s + chunk], C), axis=1)
    return out


@register
@dataclass(frozen=True, eq=False)
class ClusteringExplanation(Explanation):
    n: int
    labels: int
    space: int  # 0 = input space, l >= 1 = hidden layer l
    centroids: np.ndarray  # (k, d) grid integers
    counts: np.ndarray  # (k, |L|) model-output counts per cell
    qbits: int = 16
    tie_break: bool = True
    model: ToyNet | None = field(default=None, repr=False)

    family = "clustering"
    symbols = ("space.input", "space.layer", "tie.low", "tie.none")

    def __post_init__(self):
        c = np.array(self.centroids, dtype=np.int64, copy=True).reshape(-1, self.dim)
        k = np.array(self.counts, dtype=np.int64, copy=True).reshape(len(c), self.labels)
        c.setflags(write=False)
        k.setflags(write=False)
        object.__setattr__(self, "centroids", c)
        object.__setattr__(self, "counts", k)

    @property
    def dim(self) -> int:
        if self.space == 0:
            return self.n
        return self.model.layer_sizes[self.space]

    @property
    def k(self) -> int:
        return len(self.centroids)

    @property
    def n_inputs(self) -> int:
        return self.n

    @property
    def n_labels(self) -> int:
        return self.labels

    @property
    def entity_count(self) -> int:
        return self.k

    def cells(self, X) -> np.ndarray:
        return assign(space_points(self.model, self.space, X, self.qbits), self.centroids)

    def cell_distributions(self) -> np.ndarray:
        totals = self.counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            p = np.where(totals > 0, self.counts / np.maximum(totals, 1), 1.0 / self.labels)
        return smooth(p)

    def predict_proba(self, X):
        X = np.asarray(X)
        self.check_inputs(X)
        if self.k == 0:
            return np.full((len(X), self.labels), 1.0 / self.labels)
        return self.cell_distributions()[self.cells(X)]

    def members(self) -> list[np.ndarray]:
        """Enumerated input indices of each cell."""
        X = all_inputs(self.n)
        cells = self.cells(X)
        idx = bits_to_index(X)
        return [idx[cells == j] for j in range(self.k)]

    def consistency_issues(self) -> list[str]:
        issues = []
        if (self.counts < 0).any():
            issues.append("negative cell count")
        if self.k and not self.tie_break:
            d = sq_distances(space_points(self.model, self.space, all_inputs(self.n), self.qbits), self.centroids)
            best = d.min(axis=1, keepdims=True)
            if ((d == best).sum(axis=1) > 1).any():
                issues.append("some input is equidistant to two nearest centroids and no tie rule is declared")
        return issues

    def _header(self) -> list:
        toks = [self.family, self.qbits // 4, self.n]
        toks += uint_digits(self.labels, 2)
        toks += ["space.input"] if self.space == 0 else ["space.layer", self.space]
        toks += ["tie.low" if self.tie_break else "tie.none"]
        toks += uint_digits(self.dim, 2)
        toks += uint_digits(self.k, COUNT_DIGITS)
        return toks

    def _cell_width(self) -> int:
        return self.dim * (self.qbits // 4) + self.labels * COUNT_DIGITS

    def tokens(self) -> list:
        qd = self.qbits // 4
        toks = self._header()
        for c, cnt in zip(self.centroids, self.counts):
            for v in c:
                toks += sint_digits(int(v), qd)
            for v in cnt:
                toks += uint_digits(int(v), COUNT_DIGITS)
        return toks

    def entity_spans(self):
        start, w = len(self._header()), self._cell_width()
        return [(start + j * w, start + (j + 1) * w) for j in range(self.k)]

    @classmethod
    def parse(cls, reader: TokenReader, context=None):
        qd = reader.digit()
        if not 3 <= qd <= 8:
            raise DecodeError("clustering coordinates use 3..8 digits")
        n = reader.digit()
        labels = reader.uint(2)
        if not 1 <= n <= 12 or labels == 0:
            raise DecodeError("bad clustering header")
        space = 0
        if reader.expect("space.input", "space.layer") == "space.layer":
            space = reader.digit()
            if context is None or not 1 <= space < len(context.layer_sizes) - 1:
                raise DecodeError("activation-space clustering needs a model with that hidden layer")
            if context.n_inputs != n:
                raise DecodeError("clustering width does not match the model")
        tie = reader.expect("tie.low", "tie.none") == "tie.low"
        dim = reader.uint(2)
        expected = n if space == 0 else context.layer_sizes[space]
        if dim != expected:
            raise DecodeError("centroid dimension does not match the clustering space")
        k = reader.uint(COUNT_DIGITS)
        cents, counts = [], []
        for _ in range(k):
            cents.append([reader.sint(qd) for _ in range(dim)])
            counts.append([reader.uint(COUNT_DIGITS) for _ in range(labels)])
        return cls(
            n, labels, space,
            np.array(cents, dtype=np.int64).reshape(k, dim),
            np.array(counts, dtype=np.int64).reshape(k, labels),
            4 * qd, tie, context if space else None,
        )


def _kmeans_pp(P: np.ndarray, k: int, rng: np.random.Generator) -> list[int]:
    chosen = [int(rng.integers(len(P)))]
    d2 = sq_distances(P, P[chosen]).min(axis=1)
    while len(chosen) < k:
        total = int(d2.sum())
        if total == 0:
            rest = [i for i in range(len(P)) if i not in set(chosen)]
            nxt = rest[0] if rest else chosen[-1]
        else:
            r = int(rng.integers(total))
            nxt = int(np.searchsorted(np.cumsum(d2), r, side="right"))
        chosen.append(nxt)
        d2 = np.minimum(d2, sq_distances(P, P[[nxt]])[:, 0])
    return chosen


def _rounded_mean(P: np.ndarray, members: np.ndarray) -> np.ndarray:
    s = P[members].sum(axis=0)
    c = len(members)
    return (2 * s + c) // (2 * c)


def kmeans(P: np.ndarray, k: int, seed: int, max_iter: int = MAX_ITER) -> np.ndarray:
    """Integer k-means++ / Lloyd. Empty cells are re-seeded from the farthest point."""
    rng = np.random.default_rng(seed)
    C = P[_kmeans_pp(P, k, rng)].copy()
    for _ in range(max_iter):
        a = assign(P, C)
        for j in range(k):
            if (a == j).any():
                continue
            d = sq_distances(P, C)[np.arange(len(P)), a]
            far = int(np.argmax(d))
            if d[far] == 0:
                continue
            C[j] = P[far]
            a = assign(P, C)
        new = C.copy()
        for j in range(k):
            members = np.flatnonzero(a == j)
            if len(members):
                new[j] = _rounded_mean(P, members)
        if np.array_equal(new, C):
            break
        C = new
    return C


def fit_clustering(
    m: ToyNet,
    space: int | str = "input",
    k: int = 2,
    seed: int = 0,
    qbits: int = 16,
    inputs=None,
) -> ClusteringExplanation:
    """k-means surrogate; cell distributions are model-output histograms.

    ``inputs`` restricts fitting to a subset of enumerated input indices.
    """
    space = 0 if space == "input" else int(space)
    n = m.n_inputs
    idx = np.arange(1 << n) if inputs is None else np.unique(np.asarray(inputs, dtype=np.int64))
    if not 1 <= k <= len(idx):
        raise ValueError(f"k must be in 1..{len(idx)}")
    X = all_inputs(n)[idx]
    P = space_points(m, space, X, qbits)
    C = kmeans(P, k, seed)
    cells = assign(P, C)
    labels = m.predict(X)
    counts = np.zeros((k, m.n_labels), dtype=np.int64)
    np.add.at(counts, (cells, labels), 1)
    return ClusteringExplanation(n, m.n_labels, space, C, counts, qbits, True, m if space else None)


def uniform_guess(n: int, n_labels: int, qbits: int = 16) -> ClusteringExplanation:
    """One cell with equal counts: the uniform predictor in clustering form."""
    return ClusteringExplanation(
        n, n_labels, 0, np.zeros((1, n), dtype=np.int64), np.ones((1, n_labels), dtype=np.int64), qbits
    )
