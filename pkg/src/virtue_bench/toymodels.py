"""Exactly enumerable fixed-point networks and the tasks they are trained on.

Numbers are integers throughout. Weights and biases are Q4.12 (int16 range),
activations and logits are Q8.24 held in int64. A layer computes

    S = a @ W + (b << 24)        # scale 2**-36
    z = S >> 12                  # floor back to Q8.24

so a forward pass is bit-exact on every platform.
"""

from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DidNotConverge, FixedPointOverflow, WidthMismatch
from .observations import Dataset, Observation, all_inputs, from_arrays, index_to_bits

FRAC = 24
WFRAC = 12
ONE = 1 << FRAC
W_MAX = (1 << 15) - 1
W_MIN = -(1 << 15)
ACT_LIMIT = 1 << 31  # |Q8.24| must fit in int32
XTN_MAGIC = b"XTN1"


# -- tasks -----------------------------------------------------------------


@dataclass(frozen=True)
class TaskSpec:
    name: str
    n: int
    labels: tuple[int, ...]
    target_function: Callable[[np.ndarray], np.ndarray] = field(compare=False, repr=False)
    default_layers: tuple[int, ...] = ()

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    def target(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.target_function(np.asarray(X)), dtype=np.int64)


def _majority(X):
    return (X.sum(axis=1) * 2 > X.shape[1]).astype(np.int64)


def _parity(X):
    return (X.sum(axis=1) & 1).astype(np.int64)


def _modadd7(X):
    X = X.astype(np.int64)
    a = X[:, 0] * 4 + X[:, 1] * 2 + X[:, 2]
    b = X[:, 3] * 4 + X[:, 4] * 2 + X[:, 5]
    return (a + b) % 7


TASKS: dict[str, TaskSpec] = {
    "majority8": TaskSpec("majority8", 8, (0, 1), _majority, (8, 8, 2)),
    "parity8": TaskSpec("parity8", 8, (0, 1), _parity, (8, 16, 2)),
    "modadd7": TaskSpec("modadd7", 6, tuple(range(7)), _modadd7, (6, 16, 7)),
}


def get_task(name: str | TaskSpec) -> TaskSpec:
    if isinstance(name, TaskSpec):
        return name
    try:
        return TASKS[name]
    except KeyError:
        raise ValueError(f"unknown task {name!r}; choose from {sorted(TASKS)}") from None


# -- networks --------------------------------------------------------------


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.int64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ToyNet:
    layer_sizes: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    activation: str = "relu"
    seed: int = 0
    task: str | None = None

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2:
            raise ValueError("a net needs at least an input and an output layer")
        if not 1 <= sizes[0] <= 12:
            raise ValueError("input width must be in 1..12 so the input space is enumerable")
        if self.activation not in ("relu", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ValueError("need one weight matrix and bias vector per layer transition")
        ws, bs = [], []
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            w, b = _readonly(w), _readonly(b)
            if w.shape != (sizes[l], sizes[l + 1]) or b.shape != (sizes[l + 1],):
                raise ValueError(f"layer {l} has shapes {w.shape}, {b.shape}")
            if w.size and (w.min() < W_MIN or w.max() > W_MAX):
                raise ValueError("weights must lie in the Q4.12 int16 range")
            if b.size and (b.min() < W_MIN or b.max() > W_MAX):
                raise ValueError("biases must lie in the Q4.12 int16 range")
            ws.append(w)
            bs.append(b)
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "weights", tuple(ws))
        object.__setattr__(self, "biases", tuple(bs))
        self._check_range()

    def _check_range(self):
        n = self.n_inputs
        lo = np.zeros((1, n), dtype=np.int64)
        hi = np.full((1, n), ONE, dtype=np.int64)
        for zlo, zhi in interval_preactivations(self, lo, hi):
            if max(-int(zlo.min()), int(zhi.max())) >= ACT_LIMIT:
                raise FixedPointOverflow("pre-activations can leave the Q8.24 range")

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_labels(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def _check_width(self, X):
        if X.ndim != 2 or X.shape[1] != self.n_inputs:
            raise WidthMismatch(f"expected inputs of width {self.n_inputs}, got shape {X.shape}")

    def layer_step(self, l: int, a: np.ndarray) -> np.ndarray:
        z = (a @ self.weights[l] + (self.biases[l] << FRAC)) >> WFRAC
        if l < self.n_layers - 1 and self.activation == "relu":
            z = np.maximum(z, 0)
        return z

    def activations(self, X) -> list[np.ndarray]:
        """Per-layer values: inputs (Q8.24), hidden post-activations, logits."""
        X = np.asarray(X)
        self._check_width(X)
        a = X.astype(np.int64) << FRAC
        out = [a]
        for l in range(self.n_layers):
            a = self.layer_step(l, a)
            out.append(a)
        return out

    def forward_from(self, layer: int, acts: np.ndarray) -> np.ndarray:
        a = np.asarray(acts, dtype=np.int64)
        for l in range(layer, self.n_layers):
            a = self.layer_step(l, a)
        return a

    def logits(self, X) -> np.ndarray:
        return self.activations(X)[-1]

    def predict(self, X) -> np.ndarray:
        # np.argmax returns the first maximum: lowest-index tie-break
        return np.argmax(self.logits(X), axis=1).astype(np.int64)

    def enumerate_labels(self) -> np.ndarray:
        return self.predict(all_inputs(self.n_inputs))

    def real_weights(self) -> list[np.ndarray]:
        return [w / (1 << WFRAC) for w in self.weights]

    def fingerprint(self) -> bytes:
        return net_to_bytes(self)


def forward(m: ToyNet, input: Sequence[int]) -> tuple[int, tuple[float, ...]]:
    """Label and real-valued logits for one bit vector."""
    X = np.asarray([list(input)], dtype=np.int64)
    z = m.logits(X)[0]
    return int(np.argmax(z)), tuple(float(v) / ONE for v in z)


def enumerate_io(m: ToyNet) -> list[Observation]:
    X = all_inputs(m.n_inputs)
    return list(from_arrays(X, m.predict(X)))


def forward_flops(m: ToyNet) -> int:
    # multiply-add = 2 FLOPs, bias add = 1 FLOP, comparisons free
    return sum(2 * a * b + b for a, b in zip(m.layer_sizes[:-1], m.layer_sizes[1:]))


def interval_forward_flops(m: ToyNet) -> int:
    # interval multiply-add = 8 FLOPs, interval bias add = 2 FLOPs
    return sum(8 * a * b + 2 * b for a, b in zip(m.layer_sizes[:-1], m.layer_sizes[1:]))


def interval_layer(m: ToyNet, l: int, lo: np.ndarray, hi: np.ndarray):
    """Pre-activation bounds (Q8.24) of layer l for activation boxes [lo, hi].

    Integer products are exact; the single floor shift is monotone, so the
    enclosure is sound for the fixed-point forward pass.
    """
    w = m.weights[l]
    wp, wn = np.maximum(w, 0), np.minimum(w, 0)
    bias = m.biases[l] << FRAC
    s_lo = lo @ wp + hi @ wn + bias
    s_hi = hi @ wp + lo @ wn + bias
    return s_lo >> WFRAC, s_hi >> WFRAC


def interval_preactivations(m: ToyNet, lo: np.ndarray, hi: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    out = []
    for l in range(m.n_layers):
        zlo, zhi = interval_layer(m, l, lo, hi)
        out.append((zlo, zhi))
        if l < m.n_layers - 1 and m.activation == "relu":
            lo, hi = np.maximum(zlo, 0), np.maximum(zhi, 0)
        else:
            lo, hi = zlo, zhi
    return out


def interval_activations(m: ToyNet, lo: np.ndarray, hi: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Bounds for every layer value, index-aligned with ToyNet.activations."""
    out = [(lo, hi)]
    pre = interval_preactivations(m, lo, hi)
    for l, (zlo, zhi) in enumerate(pre):
        if l < m.n_layers - 1 and m.activation == "relu":
            zlo, zhi = np.maximum(zlo, 0), np.maximum(zhi, 0)
        out.append((zlo, zhi))
    return out


def weight_clip(layer_sizes: Sequence[int], limit: float = 127.0) -> int:
    """Largest Q4.12 magnitude c such that |w|, |b| <= c cannot overflow Q8.24."""

    def worst(c: int) -> float:
        cr = c / (1 << WFRAC)
        bound = 1.0
        worst_z = 0.0
        for fan_in in layer_sizes[:-1]:
            bound = fan_in * bound * cr + cr
            worst_z = max(worst_z, bound)
        return worst_z

    lo, hi = 1, W_MAX
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if worst(mid) < limit:
            lo = mid
        else:
            hi = mid - 1
    return lo


# -- training --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TrainResult:
    net: ToyNet
    accuracy: float
    converged: bool
    steps: int


def _quantize_master(wm: np.ndarray, clip: int) -> np.ndarray:
    return np.clip((wm + (1 << (WFRAC - 1))) >> WFRAC, -clip, clip)


def task_accuracy(m: ToyNet, task: TaskSpec | str | None = None) -> float:
    task = get_task(task or m.task)
    X = all_inputs(m.n_inputs)
    return float(np.mean(m.predict(X) == task.target(X)))


def train_toy(
    task: TaskSpec | str,
    seed: int,
    layer_sizes: Sequence[int] | None = None,
    max_steps: int = 10_000,
    target_accuracy: float = 0.95,
    lr_shift: int = 3,
    strict: bool = False,
) -> TrainResult:
    """Full-batch multiclass hinge descent in integer arithmetic.

    Master weights are Q8.24; the forward pass uses their Q4.12 rounding
    (straight-through). Returns the best net seen; ``converged`` is False when
    the step cap is reached first.
    """
    task = get_task(task)
    sizes = tuple(layer_sizes or task.default_layers)
    if sizes[0] != task.n or sizes[-1] != task.n_labels:
        raise ValueError(f"layer sizes {sizes} do not match task {task.name}")
    clip = weight_clip(sizes)
    rng = np.random.default_rng(seed)
    X = all_inputs(task.n).astype(np.int64)
    y = task.target(X)
    N = len(X)
    rows = np.arange(N)
    margin = ONE >> 1
    shift = lr_shift + max(1, (N - 1).bit_length())
    master_w, master_b = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        init = ONE // max(1, math.isqrt(fan_in))
        master_w.append(rng.integers(-init, init + 1, size=(fan_in, fan_out), dtype=np.int64))
        master_b.append(np.zeros(fan_out, dtype=np.int64))
    cap = clip << WFRAC
    L = len(sizes) - 1

    best = (-1.0, 0, None, None)
    steps = 0
    for step in range(max_steps + 1):
        wq = [_quantize_master(w, clip) for w in master_w]
        bq = [_quantize_master(b, clip) for b in master_b]
        acts = [X << FRAC]
        pre = []
        for l in range(L):
            z = (acts[-1] @ wq[l] + (bq[l] << FRAC)) >> WFRAC
            pre.append(z)
            acts.append(np.maximum(z, 0) if l < L - 1 else z)
        logits = acts[-1]
        acc = float(np.mean(np.argmax(logits, axis=1) == y))
        if acc > best[0]:
            best = (acc, step, wq, bq)
        steps = step
        if acc >= target_accuracy or step == max_steps:
            break
        true_logit = logits[rows, y][:, None]
        viol = (logits - true_logit + margin > 0).astype(np.int64)
        viol[rows, y] = 0
        g = viol.copy()
        g[rows, y] = -viol.sum(axis=1)
        # g is in "per-logit" units; keep deltas in Q.12 to bound products
        delta = g << WFRAC
        for l in range(L - 1, -1, -1):
            grad_w = (acts[l].T @ delta) >> WFRAC  # Q.24
            grad_b = delta.sum(axis=0) << WFRAC  # Q.24
            if l > 0:
                delta = (delta @ wq[l].T) >> WFRAC
                delta = delta * (pre[l - 1] > 0)
            master_w[l] = np.clip(master_w[l] - (grad_w >> shift), -cap, cap)
            master_b[l] = np.clip(master_b[l] - (grad_b >> shift), -cap, cap)

    acc, _, wq, bq = best
    net = ToyNet(sizes, tuple(wq), tuple(bq), "relu", seed, task.name)
    result = TrainResult(net, acc, acc >= target_accuracy, steps)
    if strict and not result.converged:
        raise DidNotConverge(result)
    return result


# -- sampling --------------------------------------------------------------


def sample_dataset(m: ToyNet, size: int, seed: int, replace: bool = True) -> Dataset:
    """Uniform input draws labelled by the net, split 80/20 into train/heldout."""
    n = m.n_inputs
    rng = np.random.default_rng(seed)
    if replace:
        idx = rng.integers(0, 1 << n, size=size, dtype=np.int64)
    else:
        if size > 1 << n:
            raise ValueError("cannot draw more distinct inputs than exist")
        idx = rng.permutation(1 << n)[:size]
    X = index_to_bits(idx, n)
    y = m.predict(X)
    n_train = size * 4 // 5
    obs = from_arrays(X, y)
    mode = "with" if replace else "without"
    return Dataset(obs[:n_train], obs[n_train:], seed, f"uniform:{m.task or 'net'}:{mode}-replacement")


def enumeration_dataset(m: ToyNet) -> Dataset:
    obs = tuple(enumerate_io(m))
    return Dataset(obs, (), 0, f"enumeration:{m.task or 'net'}")


# -- persistence -----------------------------------------------------------


def net_to_bytes(m: ToyNet) -> bytes:
    header = json.dumps(
        {"layer_sizes": list(m.layer_sizes), "activation": m.activation, "seed": m.seed, "task": m.task},
        sort_keys=True,
    ).encode()
    buf = io.BytesIO()
    buf.write(XTN_MAGIC)
    buf.write(struct.pack(">I", len(header)))
    buf.write(header)
    for w, b in zip(m.weights, m.biases):
        buf.write(w.astype("<i2").tobytes())
        buf.write(b.astype("<i2").tobytes())
    return buf.getvalue()


def net_from_bytes(blob: bytes) -> ToyNet:
    if blob[:4] != XTN_MAGIC:
        raise ValueError("missing XTN1 header")
    (hlen,) = struct.unpack(">I", blob[4:8])
    header = json.loads(blob[8 : 8 + hlen])
    sizes = header["layer_sizes"]
    pos = 8 + hlen
    ws, bs = [], []
    for a, b in zip(sizes[:-1], sizes[1:]):
        w = np.frombuffer(blob, dtype="<i2", count=a * b, offset=pos).reshape(a, b)
        pos += 2 * a * b
        bias = np.frombuffer(blob, dtype="<i2", count=b, offset=pos)
        pos += 2 * b
        ws.append(w)
        bs.append(bias)
    if pos != len(blob):
        raise ValueError("trailing bytes in net blob")
    return ToyNet(tuple(sizes), tuple(ws), tuple(bs), header["activation"], header["seed"], header["task"])


def save_net(m: ToyNet, path) -> None:
    with open(path, "wb") as fh:
        fh.write(net_to_bytes(m))


def load_net(path) -> ToyNet:
    with open(path, "rb") as fh:
        return net_from_bytes(fh.read())


def zero_net(layer_sizes: Sequence[int], task: str | None = None, activation: str = "relu") -> ToyNet:
    ws = tuple(np.zeros((a, b), dtype=np.int64) for a, b in zip(layer_sizes[:-1], layer_sizes[1:]))
    bs = tuple(np.zeros(b, dtype=np.int64) for b in layer_sizes[1:])
    return ToyNet(tuple(layer_sizes), ws, bs, activation, 0, task)


def from_real(layer_sizes, weights, biases, activation="relu", task=None, seed=0) -> ToyNet:
    """Build a net from real-valued parameters, rounding to Q4.12."""
    ws = tuple(np.round(np.asarray(w, dtype=float) * (1 << WFRAC)).astype(np.int64) for w in weights)
    bs = tuple(np.round(np.asarray(b, dtype=float) * (1 << WFRAC)).astype(np.int64) for b in biases)
    return ToyNet(tuple(layer_sizes), ws, bs, activation, seed, task)
