"""Threshold rubric, comparison table, and its text / CSV renderings."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from .errors import ConfigError, MissingThreshold

LEVELS = ("high", "weak", "none")
GLYPHS = {"high": "✓", "weak": "○", "none": "✗"}
FROM_GLYPH = {v: k for k, v in GLYPHS.items()}


@dataclass(frozen=True)
class Rubric:
    version: str
    virtues: Mapping[str, Mapping]

    @property
    def rows(self) -> list[str]:
        return list(self.virtues)


def validate_rubric(rub: Rubric) -> None:
    for name, spec in rub.virtues.items():
        if "key" not in spec:
            raise ConfigError(f"rubric entry {name!r} has no score key")
        if spec.get("kind") == "boolean":
            continue
        if "high" not in spec or "weak" not in spec:
            raise MissingThreshold(name)
        hi, wk = spec["high"], spec["weak"]
        direction = spec.get("direction", "higher")
        if direction not in ("higher", "lower"):
            raise ConfigError(f"rubric entry {name!r} has direction {direction!r}")
        if (direction == "higher" and hi < wk) or (direction == "lower" and hi > wk):
            raise ConfigError(f"rubric entry {name!r}: the high cutoff must be stricter than the weak one")


def rubric_from_dict(d: Mapping) -> Rubric:
    rub = Rubric(str(d.get("version", "custom")), dict(d["virtues"]))
    validate_rubric(rub)
    return rub


def load_rubric(source: str | Path | Mapping | None = None) -> Rubric:
    """A bundled rubric by name (default rubric_v1), a JSON path, or an inline mapping."""
    if isinstance(source, Mapping):
        return rubric_from_dict(source)
    name = source or "rubric_v1"
    path = Path(name)
    if path.suffix == ".json" and path.exists():
        return rubric_from_dict(json.loads(path.read_text()))
    try:
        text = resources.files("virtue_bench.data").joinpath(f"{name}.json").read_text()
    except FileNotFoundError:
        raise ConfigError(f"no rubric named {name!r}") from None
    return rubric_from_dict(json.loads(text))


def _level(value, spec) -> str:
    if spec.get("kind") == "boolean":
        return "high" if value else "none"
    if value is None:
        return "none"
    if spec.get("direction", "higher") == "higher":
        return "high" if value >= spec["high"] else "weak" if value >= spec["weak"] else "none"
    return "high" if value <= spec["high"] else "weak" if value <= spec["weak"] else "none"


def normalized_value(raw: Mapping, spec: Mapping):
    value = raw[spec["key"]]
    denom_key = spec.get("per_point")
    if denom_key and value is not None and not isinstance(value, bool):
        denom = raw.get(denom_key) or 0
        value = value / denom if denom else 0.0
    return value


def map_rubric(raw, thresholds: Rubric | Mapping) -> dict[str, str]:
    """Virtue -> level. ``raw`` is a scorecard or its JSON dict."""
    raw = raw.to_json() if hasattr(raw, "to_json") else raw
    rub = thresholds if isinstance(thresholds, Rubric) else rubric_from_dict(thresholds)
    levels = {}
    for name, spec in rub.virtues.items():
        if spec.get("kind") != "boolean" and ("high" not in spec or "weak" not in spec):
            raise MissingThreshold(name)
        if spec["key"] not in raw:
            raise MissingThreshold(f"{name}: scorecard has no {spec['key']!r}")
        levels[name] = _level(normalized_value(raw, spec), spec)
    return levels


# -- comparison table ----------------------------------------------------------


@dataclass(frozen=True)
class Cell:
    level: str
    raw: float | int | bool | None


@dataclass(frozen=True)
class ComparisonTable:
    rows: tuple[str, ...]
    columns: tuple[str, ...]
    cells: Mapping[tuple[str, str], Cell]

    def cell(self, row: str, column: str) -> Cell:
        return self.cells[(row, column)]


def build_table(scorecards: Sequence, rub: Rubric) -> ComparisonTable:
    cards = [c.to_json() if hasattr(c, "to_json") else c for c in scorecards]
    cells = {}
    for card in cards:
        levels = map_rubric(card, rub)
        for row, spec in rub.virtues.items():
            cells[(row, card["explanation_id"])] = Cell(levels[row], card[spec["key"]])
    return ComparisonTable(tuple(rub.rows), tuple(c["explanation_id"] for c in cards), cells)


def _fmt(raw) -> str:
    if raw is None:
        return "n/a"
    if isinstance(raw, bool):
        return "yes" if raw else "no"
    if isinstance(raw, int):
        return str(raw)
    return f"{raw:.4g}"


def render_text(t: ComparisonTable) -> str:
    """Fixed-width table: a glyph and the raw value per cell."""
    head = ["virtue"] + list(t.columns)
    rows = t.rows if t.columns else ()
    body = [[row] + [f"{GLYPHS[t.cell(row, c).level]} {_fmt(t.cell(row, c).raw)}" for c in t.columns] for row in rows]
    widths = [max(len(r[i]) for r in [head] + body) for i in range(len(head))]
    lines = ["  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in [head] + body]
    lines.insert(1, "  ".join("-" * w for w in widths))
    legend = "legend: " + "  ".join(f"{g} {lvl}" for lvl, g in GLYPHS.items())
    return "\n".join(lines + ["", legend]) + "\n"


def _csv_raw(raw) -> str:
    if raw is None:
        return ""
    if isinstance(raw, bool):
        return "true" if raw else "false"
    return repr(raw)


def _parse_raw(s: str):
    if s == "":
        return None
    if s in ("true", "false"):
        return s == "true"
    try:
        return int(s)
    except ValueError:
        return float(s)


def render_csv(t: ComparisonTable) -> str:
    """Long format: one line per (virtue, explanation) with level, glyph and raw value."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["virtue", "explanation_id", "level", "glyph", "raw"])
    for row in t.rows:
        for col in t.columns:
            c = t.cell(row, col)
            w.writerow([row, col, c.level, GLYPHS[c.level], _csv_raw(c.raw)])
    return buf.getvalue()


def render_table(t: ComparisonTable) -> tuple[str, str]:
    return render_text(t), render_csv(t)


def parse_csv(text: str, rows: Sequence[str] | None = None) -> ComparisonTable:
    records = list(csv.DictReader(io.StringIO(text)))
    seen_rows, seen_cols, cells = [], [], {}
    for r in records:
        if r["virtue"] not in seen_rows:
            seen_rows.append(r["virtue"])
        if r["explanation_id"] not in seen_cols:
            seen_cols.append(r["explanation_id"])
        cells[(r["virtue"], r["explanation_id"])] = Cell(r["level"], _parse_raw(r["raw"]))
    return ComparisonTable(tuple(rows if rows is not None else seen_rows), tuple(seen_cols), cells)
