"""Certified lower bounds on task accuracy, their FLOP costs, and Pareto frontiers.

All bounds are dyadic fractions (credited inputs / 2^n). Interval bounds are
propagated in exact integer arithmetic with the same floor shift as the
forward pass, so every certificate is sound for the fixed-point net itself.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .explainers.circuit import CircuitExplanation, layer_masks
from .explainers.clustering import ClusteringExplanation
from .observations import all_inputs
from .toymodels import FRAC, WFRAC, ToyNet, TaskSpec, forward_flops, get_task, interval_activations, interval_forward_flops, interval_layer

STRATEGIES = ("brute_force", "cluster_guided", "circuit_guided")


@dataclass(frozen=True)
class ProofCertificate:
    bound: float
    flops: int
    strategy: str
    label: str = ""
    sound: bool | None = None
    vacuous: bool = False
    credited: int = 0
    total: int = 0

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ParetoPoint:
    bound: float
    flops: int
    label: str

    def to_json(self) -> dict:
        return asdict(self)


def _task(m: ToyNet, task) -> TaskSpec:
    if task is None and m.task is None:
        raise ValueError("a proof needs a task to certify against")
    return get_task(task or m.task)


def brute_force_proof(m: ToyNet, task: TaskSpec | str | None = None) -> ProofCertificate:
    task = _task(m, task)
    X = all_inputs(m.n_inputs)
    correct = int(np.sum(m.predict(X) == task.target(X)))
    total = len(X)
    return ProofCertificate(correct / total, total * forward_flops(m), "brute_force", "brute_force", None, False, correct, total)


# -- interval certification --------------------------------------------------


def certifies(m: ToyNet, lo: np.ndarray, hi: np.ndarray, label: np.ndarray) -> np.ndarray:
    """For each row-box [lo, hi] of final-layer inputs (Q8.24), does argmax = label everywhere?

    Uses exact bounds on S_t - S_j before the final floor shift, falling back
    to comparing the floored logit intervals.
    """
    last = m.n_layers - 1
    W, bvec = m.weights[last], m.biases[last]
    zlo, zhi = interval_layer(m, last, lo, hi)
    ok = np.ones(len(lo), dtype=bool)
    rows = np.arange(len(lo))
    Wt = W[:, label].T  # (N, d)
    bt = bvec[label]
    for j in range(m.n_labels):
        dw = Wt - W[:, j][None, :]
        db = (bt - bvec[j]) << FRAC
        dlo = (lo * np.maximum(dw, 0)).sum(axis=1) + (hi * np.minimum(dw, 0)).sum(axis=1) + db
        zt = zlo[rows, label]
        zj = zhi[:, j]
        strict = (dlo >= 1 << WFRAC) | (zt > zj)
        loose = (dlo >= 0) | (zt >= zj)
        ok &= np.where(j < label, strict, np.where(j > label, loose, True))
    return ok


def _last_input_box(m: ToyNet, lo: np.ndarray, hi: np.ndarray):
    return interval_activations(m, lo, hi)[m.n_layers - 1]


def cluster_guided_proof(m: ToyNet, task, c: ClusteringExplanation) -> ProofCertificate:
    """Box each cell's members per target label; credit every box whose label is certified."""
    task = _task(m, task)
    n = m.n_inputs
    X = all_inputs(n).astype(np.int64)
    target = task.target(X)
    los, his, labels, sizes = [], [], [], []
    for members in c.members():
        for t in np.unique(target[members]):
            grp = members[target[members] == t]
            los.append(X[grp].min(axis=0))
            his.append(X[grp].max(axis=0))
            labels.append(int(t))
            sizes.append(len(grp))
    if not los:
        return ProofCertificate(0.0, 1 << n, "cluster_guided", f"cluster_guided:k={c.k}", None, True, 0, 1 << n)
    lo = np.array(los) << FRAC
    hi = np.array(his) << FRAC
    ok = certifies(m, *_last_input_box(m, lo, hi), np.array(labels))
    credited = int(np.sum(np.array(sizes)[ok]))
    flops = len(los) * interval_forward_flops(m) + (1 << n)
    return ProofCertificate(
        credited / (1 << n), flops, "cluster_guided", f"cluster_guided:k={c.k}", None, credited == 0, credited, 1 << n
    )


def _circuit_flops(m: ToyNet, masks, boxes, any_masked: bool) -> int:
    """Per-input cost under the accounting model, plus the one-time masked-range pass."""
    total = interval_forward_flops(m) if any_masked else 0
    for l in range(m.n_layers):
        out = m.layer_sizes[l + 1]
        lo, hi = boxes[l]
        active = masks[l]
        point = lo[:, active] == hi[:, active]
        total += int(np.where(point, 2 * out, 8 * out).sum())
        # a layer stays exact only if every incoming contribution is a point
        exact = point.all(axis=1) & active.all()
        total += int(np.where(exact, out, 2 * out).sum())
        # masked contributions are summed once, outside the per-input loop
        total += 8 * int((~active).sum()) * out
    return total


def circuit_guided_proof(m: ToyNet, task, c: CircuitExplanation) -> ProofCertificate:
    """Exact on circuit edges; masked edges only contribute their whole-input-space range."""
    task = _task(m, task)
    n = m.n_inputs
    X = all_inputs(n).astype(np.int64)
    label = f"circuit_guided:|C|={len(c.active)}"
    if not c.active:
        return ProofCertificate(0.0, interval_forward_flops(m), "circuit_guided", label, None, True, 0, 1 << n)
    masks = layer_masks(m, c.active)
    any_masked = not all(mk.all() for mk in masks)
    full = interval_activations(m, np.zeros((1, n), dtype=np.int64), np.full((1, n), 1 << FRAC, dtype=np.int64))
    lo = hi = X << FRAC
    boxes = []
    for l in range(m.n_layers):
        lo = np.where(masks[l], lo, full[l][0])
        hi = np.where(masks[l], hi, full[l][1])
        boxes.append((lo, hi))
        if l == m.n_layers - 1:
            break
        zlo, zhi = interval_layer(m, l, lo, hi)
        if m.activation == "relu":
            zlo, zhi = np.maximum(zlo, 0), np.maximum(zhi, 0)
        lo, hi = zlo, zhi
    ok = certifies(m, lo, hi, task.target(X))
    credited = int(ok.sum())
    flops = _circuit_flops(m, masks, boxes, any_masked)
    return ProofCertificate(credited / (1 << n), flops, "circuit_guided", label, None, credited == 0, credited, 1 << n)


def audit(cert: ProofCertificate, m: ToyNet, task=None) -> ProofCertificate:
    """Mark a certificate sound iff its bound does not exceed the enumerated accuracy."""
    exact = brute_force_proof(m, task)
    return replace(cert, sound=cert.credited * exact.total <= exact.credited * cert.total and cert.bound <= exact.bound)


# -- Pareto frontier ---------------------------------------------------------


def dominates(a: ParetoPoint, b: ParetoPoint) -> bool:
    return a.bound >= b.bound and a.flops <= b.flops and (a.bound > b.bound or a.flops < b.flops)


def pareto(points: Sequence[ParetoPoint]) -> list[ParetoPoint]:
    """Non-dominated points (higher bound, fewer FLOPs), stably sorted by FLOPs."""
    pts = list(points)
    keep = [p for p in pts if not any(dominates(q, p) for q in pts)]
    return sorted(keep, key=lambda p: p.flops)


def to_point(cert: ProofCertificate) -> ParetoPoint:
    return ParetoPoint(cert.bound, cert.flops, cert.label or cert.strategy)


def frontier_svg(points: Sequence[ParetoPoint], frontier: Sequence[ParetoPoint], title: str = "") -> str:
    """Standalone SVG: log-scale FLOPs on x, certified bound on y."""
    W, H, L, R, T, B = 640, 420, 70, 20, 40, 60
    xs = [math.log10(max(p.flops, 1)) for p in points] or [0.0, 1.0]
    x0, x1 = math.floor(min(xs)), math.ceil(max(xs))
    if x1 == x0:
        x1 = x0 + 1

    def px(f):
        return L + (math.log10(max(f, 1)) - x0) / (x1 - x0) * (W - L - R)

    def py(b):
        return H - B - b * (H - T - B)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2:.1f}" y="22" text-anchor="middle" font-family="sans-serif" font-size="14">{escape(title)}</text>',
        f'<line x1="{L}" y1="{H - B}" x2="{W - R}" y2="{H - B}" stroke="black"/>',
        f'<line x1="{L}" y1="{T}" x2="{L}" y2="{H - B}" stroke="black"/>',
    ]
    for e in range(x0, x1 + 1):
        x = px(10**e)
        out.append(f'<line x1="{x:.1f}" y1="{H - B}" x2="{x:.1f}" y2="{H - B + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.1f}" y="{H - B + 18}" text-anchor="middle" font-family="sans-serif" font-size="11">1e{e}</text>')
    for k in range(6):
        y = py(k / 5)
        out.append(f'<line x1="{L - 5}" y1="{y:.1f}" x2="{L}" y2="{y:.1f}" stroke="black"/>')
        out.append(f'<text x="{L - 8}" y="{y + 4:.1f}" text-anchor="end" font-family="sans-serif" font-size="11">{k / 5:.1f}</text>')
    out.append(f'<text x="{W / 2:.1f}" y="{H - 15}" text-anchor="middle" font-family="sans-serif" font-size="12">FLOPs to verify (log scale)</text>')
    out.append(
        f'<text x="18" y="{H / 2:.1f}" text-anchor="middle" font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 18 {H / 2:.1f})">certified accuracy bound</text>'
    )
    if frontier:
        path = " ".join(f"{px(p.flops):.1f},{py(p.bound):.1f}" for p in frontier)
        out.append(f'<polyline points="{path}" fill="none" stroke="#c03030" stroke-width="1.5"/>')
    on = {(p.bound, p.flops, p.label) for p in frontier}
    for p in points:
        color = "#c03030" if (p.bound, p.flops, p.label) in on else "#4060a0"
        out.append(
            f'<circle cx="{px(p.flops):.1f}" cy="{py(p.bound):.1f}" r="4" fill="{color}">'
            f"<title>{escape(p.label)}: bound {p.bound:.4f}, {p.flops} FLOPs</title></circle>"
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
