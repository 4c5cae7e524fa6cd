"""Command-line entry point.

Subcommands: detect (run the pipeline over a corpus), evaluate (score a
prediction file), combine (vote several prediction files into one),
optimize (prompt search), cache (stats, clear). Exit codes: 0 clean,
1 the run completed but some instances failed, 2 config or data errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from ._version import __version__
from .cache import ResponseCache
from .combine import SystemOutput, combination_report, combine_corpus
from .config import load_config
from .data import read_jsonl, read_predictions, write_jsonl_atomic, write_predictions
from .errors import ConfigError, JsonlError, SpanhoundError
from .metrics import evaluate_corpus
from .optimize import optimize
from .pipeline import build_backends, optimizer_runner, process_corpus
from .prompts import load_prompt
from .report import write_comparison, write_report

EXIT_OK = 0
EXIT_FAILURES = 1
EXIT_FATAL = 2


def _write_json(payload: dict, path: Path) -> None:
    path.write_text(
        json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def cmd_detect(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.parallelism is not None:
        if args.parallelism < 1:
            raise ConfigError("parallelism must be at least 1")
        config = dataclasses.replace(config, parallelism=args.parallelism)
    instances = read_jsonl(args.input)
    backends = build_backends(config)
    result = process_corpus(instances, config, backends)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_predictions(result.predictions, out_dir / "predictions.jsonl")
    write_jsonl_atomic(result.errors, out_dir / "errors.jsonl")
    _write_json(result.manifest, out_dir / "manifest.json")

    print(f"instances: {len(instances)}  failures: {result.failures}")
    print(f"wrote {out_dir / 'predictions.jsonl'}")
    if result.failures:
        for record in result.errors:
            print(f"  failed {record['id']}: {record['error']}", file=sys.stderr)
        return EXIT_FAILURES
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    golds = read_jsonl(args.gold)
    text_lens = {g.instance_id: len(g.answer) for g in golds}
    preds = read_predictions(args.pred, text_lens)
    report = evaluate_corpus(preds, golds)
    paths = write_report(report, args.out_dir, figures=not args.no_figures)
    print(f"mean_iou={report.mean_iou:.6f}  mean_corr={report.mean_corr:.6f}"
          + (f"  mean_max_iou={report.mean_max_iou:.6f}"
             if report.mean_max_iou is not None else ""))
    for kind, path in paths.items():
        print(f"wrote {kind}: {path}")
    return EXIT_OK


def _parse_members(specs: list[str]) -> list[tuple[str, str]]:
    members = []
    for spec in specs:
        tag, sep, path = spec.partition("=")
        if not sep or not tag or not path:
            raise ConfigError(f"--member expects tag=path, got {spec!r}")
        members.append((tag, path))
    return members


def cmd_combine(args: argparse.Namespace) -> int:
    members = _parse_members(args.member)
    if len(members) < 2:
        raise ConfigError("combine needs at least 2 --member files")
    golds = read_jsonl(args.gold)
    text_lens = {g.instance_id: len(g.answer) for g in golds}
    outputs = []
    for tag, path in members:
        preds = read_predictions(path, text_lens)
        outputs.append(SystemOutput(
            tag=tag, spans={p.instance_id: p.hard for p in preds}))

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    labeled = all(g.gold_hard is not None and g.gold_soft is not None
                  for g in golds)
    if labeled:
        per_system, combined_report, combined = combination_report(outputs, golds)
        write_comparison(per_system, combined_report, out_dir,
                         figures=not args.no_figures)
        print(f"combined mean_iou={combined_report.mean_iou:.6f}  "
              f"mean_corr={combined_report.mean_corr:.6f}")
    else:
        combined = combine_corpus(outputs)
        print("gold labels absent; wrote combination without a comparison table")
    write_predictions(combined, out_dir / "combined.jsonl")
    print(f"wrote {out_dir / 'combined.jsonl'}")
    return EXIT_OK


def cmd_optimize(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if config.detector != "direct":
        raise ConfigError(
            "prompt search drives the direct extraction detector; "
            f"config names detector {config.detector!r}"
        )
    instances = read_jsonl(args.input)
    backends = build_backends(config)
    if args.seed_prompt:
        seed_prompt = Path(args.seed_prompt).read_text(encoding="utf-8")
    elif config.context_mode == "none":
        seed_prompt = load_prompt("direct_extraction_nocontext").text
    else:
        seed_prompt = load_prompt("direct_extraction").text

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run = optimize(
        instances,
        optimizer_runner(config, backends),
        objective=args.objective,
        budget=args.budget,
        llm=backends.llm,
        seed_prompt=seed_prompt,
        trace_path=out_dir / "trace.json",
        seed=config.seed,
        k=args.k,
        demo_subsets=args.demo_subsets,
        demos_per_subset=args.demos_per_subset,
        resume=args.resume,
    )
    if run.best is None:
        print("no candidate was evaluated", file=sys.stderr)
        return EXIT_FAILURES
    (out_dir / "best_prompt.txt").write_text(run.best.instruction + "\n",
                                             encoding="utf-8")
    print(f"best candidate {run.best.candidate_id} "
          f"({run.objective}={run.best_score:.6f}, "
          f"demo_subset={run.best.demo_subset})")
    print(f"wrote {out_dir / 'trace.json'} and {out_dir / 'best_prompt.txt'}")
    return EXIT_OK


def cmd_cache(args: argparse.Namespace) -> int:
    cache = ResponseCache(args.cache_dir)
    if args.cache_cmd == "stats":
        stats = cache.stats()
        print(json.dumps({"dir": stats["dir"], "entries": stats["entries"],
                          "bytes": stats["bytes"]}, indent=2))
    else:
        removed = cache.clear()
        print(f"removed {removed} cache entries")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spanhound",
        description="Detect hallucinated character spans in model answers.",
    )
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="run retrieve, detect, map over a corpus")
    p.add_argument("--config", required=True, help="YAML run config")
    p.add_argument("--input", required=True, help="instance JSONL")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--parallelism", type=int, default=None,
                   help="override the config's worker count")
    p.set_defaults(fn=cmd_detect)

    p = sub.add_parser("evaluate", help="score predictions against gold labels")
    p.add_argument("--pred", required=True, help="prediction JSONL")
    p.add_argument("--gold", required=True, help="gold instance JSONL")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("combine", help="vote member predictions into soft labels")
    p.add_argument("--member", action="append", default=[], metavar="TAG=PATH",
                   help="member prediction file; repeat per system")
    p.add_argument("--gold", required=True,
                   help="instance JSONL giving answer texts (and labels, "
                        "if a comparison table is wanted)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(fn=cmd_combine)

    p = sub.add_parser("optimize", help="budgeted prompt search")
    p.add_argument("--config", required=True)
    p.add_argument("--input", required=True, help="labeled instance JSONL")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--objective", default="iou",
                   help="iou | corr | max_iou | iou+corr")
    p.add_argument("--budget", type=int, default=8,
                   help="max candidate evaluations")
    p.add_argument("--seed-prompt", default=None,
                   help="file with the starting instruction (default: stock prompt)")
    p.add_argument("--k", type=int, default=4, help="instruction rewrites to propose")
    p.add_argument("--demo-subsets", type=int, default=0,
                   help="few-shot demo subsets per instruction")
    p.add_argument("--demos-per-subset", type=int, default=2)
    p.add_argument("--resume", action="store_true",
                   help="reuse evaluations from an existing trace")
    p.set_defaults(fn=cmd_optimize)

    p = sub.add_parser("cache", help="inspect or clear the response cache")
    p.add_argument("cache_cmd", choices=["stats", "clear"])
    p.add_argument("--cache-dir", required=True)
    p.set_defaults(fn=cmd_cache)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except JsonlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL
    except SpanhoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL
    except OSError as exc:
        # unreadable input, unwritable out-dir: config-level, not a crash
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
