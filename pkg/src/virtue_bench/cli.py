"""Command-line entry point: ``virtue-bench {run,score,prove,table}``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .coding import default_theory
from .errors import ConfigError, DecodeError, MissingThreshold, PipelineError
from .explanation import from_blob
from .pipeline import config_from_dict, fit_grid, frontier_payload, load_config_dict, prove_all, run, stage, worker_count
from .proofs import ParetoPoint, frontier_svg
from .rubric import build_table, load_rubric, map_rubric, render_csv, render_text
from .scorecard import score
from .toymodels import load_net, sample_dataset, train_toy

EXIT_OK, EXIT_VALIDATION, EXIT_PIPELINE = 0, 2, 3


def _emit_error(kind: str, payload: dict) -> None:
    print(json.dumps({"error": kind, **payload}, sort_keys=True), file=sys.stderr)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="run config JSON (default: bundled default.json)")
    p.add_argument("--seed", type=int, help="override the config's seed list with one seed")
    p.add_argument("--out", help="output directory (or file, for score)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="virtue-bench", description="Score explanations of toy networks on explanatory virtues.")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="train, fit, score, prove and write all artifacts")
    _common(p)
    p = sub.add_parser("score", help="score one serialized explanation against a saved net")
    _common(p)
    p.add_argument("--net", required=True, help="XTN1 net file")
    p.add_argument("--explanation", required=True, help="XVB1 explanation blob")
    p = sub.add_parser("prove", help="emit certificates and the Pareto frontier only")
    _common(p)
    p.add_argument("--net", help="use a saved XTN1 net instead of training")
    p = sub.add_parser("table", help="re-render the comparison table from scorecards JSON")
    p.add_argument("scorecards", help="scorecards.json from a run")
    p.add_argument("--rubric", help="rubric name or JSON path (default rubric_v1)")
    p.add_argument("--out", help="directory for table.txt / table.csv (default: print text)")
    return ap


def cmd_run(args) -> int:
    cfg = config_from_dict(load_config_dict(args.config), args.seed, args.out)
    result = run(cfg)
    print(render_text(result.table), end="")
    print(f"wrote {result.out_dir}")
    return EXIT_OK


def cmd_score(args) -> int:
    cfg = config_from_dict(load_config_dict(args.config), args.seed)
    b = default_theory()
    with stage("load"):
        net = load_net(args.net)
        e = from_blob(Path(args.explanation).read_bytes(), b, net)
    with stage("score"):
        dataset = sample_dataset(net, cfg.dataset_size, cfg.seeds[0], replace=False)
        card = score(e, dataset, b, cfg.sampler, net, Path(args.explanation).stem, cfg.hard_to_vary, workers=worker_count())
        out = card.to_json()
        out["rubric_levels"] = map_rubric(card, cfg.rubric)
    text = json.dumps(out, indent=2, ensure_ascii=False) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        print(text, end="")
    return EXIT_OK


def cmd_prove(args) -> int:
    cfg = config_from_dict(load_config_dict(args.config), args.seed, args.out)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    all_certs, frontiers = [], {}
    for seed in cfg.seeds:
        with stage("train"):
            net = load_net(args.net) if args.net else train_toy(cfg.task, seed, max_steps=cfg.max_steps, target_accuracy=cfg.target_accuracy).net
        with stage("fit"):
            dataset = sample_dataset(net, cfg.dataset_size, seed, replace=False)
            grid = {k: v for k, v in cfg.explainers.items() if k in ("clustering", "circuit")}
            fitted = fit_grid(net, replace(cfg, explainers=grid), dataset, seed)
        with stage("prove"):
            certs = prove_all(net, cfg.task, fitted)
        all_certs += [{"seed": seed, "task": cfg.task, **c.to_json()} for c in certs]
        fp = frontier_payload(certs)
        frontiers[str(seed)] = fp
        svg = frontier_svg([ParetoPoint(**p) for p in fp["points"]], [ParetoPoint(**p) for p in fp["frontier"]], f"{cfg.task}, seed {seed}")
        (out / f"frontier_{cfg.task}_s{seed}.svg").write_text(svg, encoding="utf-8")
    (out / "certificates.json").write_text(json.dumps(all_certs, indent=2) + "\n", encoding="utf-8")
    (out / "frontier.json").write_text(json.dumps(frontiers, indent=2) + "\n", encoding="utf-8")
    for c in all_certs:
        print(f"{c['seed']:>6}  {c['label']:<48} bound={c['bound']:.6f}  flops={c['flops']}  sound={c['sound']}")
    return EXIT_OK


def cmd_table(args) -> int:
    try:
        cards = json.loads(Path(args.scorecards).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read scorecards: {exc}") from None
    table = build_table(cards, load_rubric(args.rubric))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "table.txt").write_text(render_text(table), encoding="utf-8")
        (out / "table.csv").write_text(render_csv(table), encoding="utf-8")
    print(render_text(table), end="")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "score": cmd_score, "prove": cmd_prove, "table": cmd_table}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, MissingThreshold) as exc:
        _emit_error("validation", {"type": type(exc).__name__, "message": str(exc)})
        return EXIT_VALIDATION
    except PipelineError as exc:
        _emit_error("pipeline", {k: v for k, v in exc.report().items() if k != "error"})
        return EXIT_PIPELINE
    except DecodeError as exc:
        _emit_error("pipeline", {"stage": "load", "type": "DecodeError", "message": str(exc)})
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
