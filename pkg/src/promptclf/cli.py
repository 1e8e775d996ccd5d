"""Command line entry point.

Exit codes: 0 on success, 1 for usage/configuration errors, 2 for runtime
failures (unreachable backends, protocol violations, aborted runs).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .corpus import CorpusError
from .evaluation import evaluate_predictions, report_to_dict, save_report
from .prompting import TemplateError
from .runner import (
    ConfigError,
    GRID_REPORT_FILE,
    load_config,
    render_grid_report,
    run_few_shot,
    run_grid,
    run_render,
    run_sample,
    run_split,
    run_zero_shot,
)
from .verbalizing import VerbalizerError

_USAGE_ERRORS = (ConfigError, CorpusError, TemplateError, VerbalizerError)


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage by default; the contract wants 1
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="experiment config JSON")
    common.add_argument("--seed", type=int, default=None, help="override the config seed (default 144)")
    common.add_argument("--out", default=None, help="override the config output directory")

    parser = _Parser(prog="promptclf", description="prompt-based text classification")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("split", parents=[common], help="compute and store the stratified split")
    sub.add_parser("sample", parents=[common], help="select few-shot training records")

    p = sub.add_parser("render", parents=[common], help="render prompts for records")
    p.add_argument("--split", default=None, choices=["train_dev", "validation", "test"],
                   help="restrict to one subset (default: whole dataset)")

    p = sub.add_parser("classify", parents=[common], help="zero-shot classification of a subset")
    p.add_argument("--split", default="test", choices=["train_dev", "validation", "test"])

    p = sub.add_parser("eval", parents=[common], help="re-evaluate stored predictions")
    p.add_argument("--predictions", required=True, help="predictions.jsonl to evaluate")

    p = sub.add_parser("grid", parents=[common], help="sample, train and evaluate the full grid")
    p.add_argument("--split", default="test", choices=["train_dev", "validation", "test"])

    p = sub.add_parser("report", parents=[common], help="re-render a grid report from stored results")
    p.add_argument("--results", required=True, help="grid_results.json produced by the grid command")

    return parser


def _effective_config(args):
    config = load_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.out is not None:
        config = replace(config, output_dir=args.out)
    return config


def _cmd_eval(args, config) -> None:
    from .evaluation import EvaluationError
    from .runner import load_workspace

    ws = load_workspace(config)
    preds, gold = [], []
    path = Path(args.predictions)
    if not path.exists():
        raise ConfigError(f"predictions file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise EvaluationError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            preds.append(row["pred"])
            gold.append(row["gold"])
    report = evaluate_predictions(preds, gold, len(ws.catalog))
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_report(report, out / "report.json")
    print(json.dumps(report_to_dict(report), indent=2, sort_keys=True))


def _cmd_report(args, config) -> None:
    path = Path(args.results)
    if not path.exists():
        raise ConfigError(f"results file not found: {path}")
    from .evaluation import report_from_dict

    raw = json.loads(path.read_text(encoding="utf-8"))
    results = {}
    for key, value in raw.items():
        t, _, v = key.partition("|")
        results[(t, v)] = report_from_dict(value)
    markdown, warnings = render_grid_report(results, config.template_ids, config.verbalizer_ids)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / GRID_REPORT_FILE).write_text(markdown, encoding="utf-8")
    for warning in warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(markdown, end="")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _effective_config(args)
        if args.command == "split":
            split = run_split(config)
            print(
                f"split written: train_dev={len(split.train_dev)} "
                f"validation={len(split.validation)} test={len(split.test)}"
            )
        elif args.command == "sample":
            selected = run_sample(config)
            print(f"selected {len(selected)} records")
        elif args.command == "render":
            count = run_render(config, args.split)
            print(f"rendered {count} prompts")
        elif args.command == "classify":
            # a toy backend without a saved state means train-then-evaluate
            if config.backend.kind == "toy" and not config.backend.state_path:
                report = run_few_shot(config, args.split)
            else:
                report = run_zero_shot(config, args.split)
            print(f"accuracy={report.accuracy:.4f} macro_f1={report.macro_f1:.4f}")
        elif args.command == "eval":
            _cmd_eval(args, config)
        elif args.command == "grid":
            results = run_grid(config, args.split)
            full = results[(".*", ".*")]
            print(f"grid done: ensemble accuracy={full.accuracy:.4f} macro_f1={full.macro_f1:.4f}")
        elif args.command == "report":
            _cmd_report(args, config)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failures map to 2
        print(f"failed: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
