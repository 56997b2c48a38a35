"""Command line interface.

Subcommands: calibrate, generate, bench, check-lossless, and graph
(export-dot | validate | show).  Exit codes: 0 on success, 1 when a
check fails (lossless divergence), 2 on usage or input errors.  Given
the same files, flags, and seed every subcommand writes byte-identical
outputs; stage timings are nondeterministic and only enter a report
under --profile.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import List, Optional, Sequence, Tuple

from . import calibration, drafting, engine
from .core import GenerationConfig, UnmaskSchedule, parse_config
from .model import ToyDenoiser, parse_corpus, train_from_corpus

_DEFAULTS = dict(total_length=32, block_length=8, top_k_vocab=3, seed=0)


class InputError(Exception):
    pass


def _read(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return handle.read()
    except OSError as exc:
        raise InputError("cannot read %s: %s" % (path, exc.strerror))


def _write(path: str, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(text)
    except OSError as exc:
        raise InputError("cannot write %s: %s" % (path, exc.strerror))


def _load_corpus(path: str) -> List[Tuple[int, ...]]:
    return parse_corpus(_read(path), source=path)


def _load_setup(args) -> Tuple[ToyDenoiser, List[Tuple[int, ...]], GenerationConfig]:
    corpus = _load_corpus(args.corpus)
    prompts = _load_corpus(args.prompts)
    vocab_size = max(t for seq in corpus for t in seq)
    model = train_from_corpus(corpus, vocab_size)
    if args.config is not None:
        config = parse_config(_read(args.config), source=args.config)
    else:
        config = GenerationConfig(
            schedule=UnmaskSchedule.fixed(1), eot_token=vocab_size, **_DEFAULTS
        )
    if getattr(args, "schedule", None) is not None:
        schedule = UnmaskSchedule.parse(args.schedule)
        config = GenerationConfig(
            total_length=config.total_length,
            block_length=config.block_length,
            schedule=schedule,
            top_k_vocab=config.top_k_vocab,
            eot_token=config.eot_token,
            seed=config.seed,
        )
    for p, prompt in enumerate(prompts):
        for t in prompt:
            if t > vocab_size:
                raise InputError("%s: prompt %d token %d outside corpus vocabulary" % (args.prompts, p, t))
    return model, prompts, config


def _load_graph(path: str) -> drafting.DraftGraphSpec:
    return drafting.parse_graph(_read(path), source=path)


def _report_dict(report: engine.RunReport, *, profile: bool) -> dict:
    doc = {
        "total_nfe": report.total_nfe,
        "baseline_nfe": report.baseline_nfe,
        "acceptances": report.acceptances,
        "eot_block": report.eot_block,
        "speedup_all": report.speedup_all,
        "speedup_to_eot": report.speedup_to_eot,
        "per_block": [
            {
                "index": b.index,
                "nfe": b.nfe,
                "baseline_nfe": b.baseline_nfe,
                "acceptances": b.acceptances,
                "realized_s": list(b.realized_s),
            }
            for b in report.per_block
        ],
    }
    if profile:
        doc["stage_percent"] = engine.profile_stages(report)
    return doc


# ---------------------------------------------------------------------------
# subcommands


def _cmd_calibrate(args) -> int:
    model, prompts, config = _load_setup(args)
    if args.limit is not None:
        prompts = prompts[: args.limit]
    if not prompts:
        raise InputError("no prompts to calibrate from")
    graph, table, records = calibration.calibrate_graph(
        model,
        prompts,
        config,
        lookahead_max=args.lookahead,
        budget=args.budget,
        strategy=args.strategy,
        width=args.width,
    )
    _write(args.out, drafting.format_graph(graph))
    if args.records is not None:
        _write(args.records, calibration.format_records(records))
    if args.table is not None:
        _write(args.table, calibration.format_table(table))
    print(
        "calibrated graph: %d nodes, depth %d, budget %d (%d records, %d prompts)"
        % (graph.num_nodes, graph.depth, graph.budget, len(records), len(prompts))
    )
    return 0


def _cmd_generate(args) -> int:
    model, prompts, config = _load_setup(args)
    if not (0 <= args.index < len(prompts)):
        raise InputError("prompt index %d out of range (%d prompts)" % (args.index, len(prompts)))
    prompt = prompts[args.index]
    if args.graph is not None:
        graph = _load_graph(args.graph)
        result = engine.generate_speculative(model, prompt, config, graph)
    else:
        result = engine.generate_vanilla(model, prompt, config)
    print(" ".join(str(t) for t in result.tokens))
    if args.out is not None:
        doc = _report_dict(result.report, profile=args.profile)
        _write(args.out, json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return 0


def _cmd_bench(args) -> int:
    model, prompts, config = _load_setup(args)
    graph = _load_graph(args.graph)
    if args.limit is not None:
        prompts = prompts[: args.limit]
    if not prompts:
        raise InputError("no prompts to bench")
    runs = []
    reports = []
    for index, prompt in enumerate(prompts):
        vanilla = engine.generate_vanilla(model, prompt, config)
        spec = engine.generate_speculative(model, prompt, config, graph, baseline=vanilla.report)
        reports.append(spec.report)
        runs.append(
            {
                "prompt_index": index,
                "nfe": spec.report.total_nfe,
                "baseline_nfe": spec.report.baseline_nfe,
                "acceptances": spec.report.acceptances,
                "speedup": spec.report.speedup_all,
                "speedup_to_eot": spec.report.speedup_to_eot,
                "eot_block": spec.report.eot_block,
            }
        )
    mean_speedup = sum(r["speedup"] for r in runs) / len(runs)
    mean_to_eot = sum(r["speedup_to_eot"] for r in runs) / len(runs)
    summary = engine.per_block_summary(reports)
    doc = {
        "schedule": config.schedule.format(),
        "prompts": len(runs),
        "graph_nodes": graph.num_nodes,
        "total_nfe": sum(r["nfe"] for r in runs),
        "baseline_nfe": sum(r["baseline_nfe"] for r in runs),
        "acceptances": sum(r["acceptances"] for r in runs),
        "mean_speedup": mean_speedup,
        "mean_speedup_to_eot": mean_to_eot,
        "per_block": [
            {
                "index": s.index,
                "runs": s.runs,
                "mean_speedup": s.mean_speedup,
                "mean_acceptance_rate": s.mean_acceptance_rate,
            }
            for s in summary
        ],
        "runs": runs,
    }
    if args.profile:
        merged = {}
        for report in reports:
            for name, seconds in report.stage_seconds.items():
                merged[name] = merged.get(name, 0.0) + seconds
        total_model = merged.get("model", 0.0)
        if total_model > 0.0:
            doc["stage_percent"] = {
                name: 100.0 * seconds / total_model for name, seconds in sorted(merged.items())
            }
    print(
        "%d prompts, schedule %s: mean speedup %.4f (up to EOT %.4f), %d acceptances"
        % (len(runs), config.schedule.format(), mean_speedup, mean_to_eot, doc["acceptances"])
    )
    if args.report is not None:
        _write(args.report, json.dumps(doc, sort_keys=True, indent=2) + "\n")
    if args.csv is not None:
        lines = ["run,block,nfe,baseline_nfe,acceptances"]
        for index, report in enumerate(reports):
            for b in report.per_block:
                lines.append("%d,%d,%d,%d,%d" % (index, b.index, b.nfe, b.baseline_nfe, b.acceptances))
        _write(args.csv, "\n".join(lines) + "\n")
    return 0


def _cmd_check_lossless(args) -> int:
    model, prompts, config = _load_setup(args)
    graph = _load_graph(args.graph)
    if args.trials < 1:
        raise InputError("0 trials: nothing checked")
    if args.trials > len(prompts):
        raise InputError("%d trials requested but only %d prompts available" % (args.trials, len(prompts)))
    for index in range(args.trials):
        check = engine.check_lossless(model, prompts[index], config, graph)
        if not check.ok:
            print("prompt %d DIVERGED: %s" % (index, check.message))
            print(
                "vanilla nfe %d, speculative nfe %d, acceptances %d"
                % (
                    check.vanilla.report.total_nfe,
                    check.speculative.report.total_nfe,
                    check.speculative.report.acceptances,
                )
            )
            return 1
    print("%d trials, all lossless (schedule %s)" % (args.trials, config.schedule.format()))
    return 0


def _cmd_graph(args) -> int:
    if args.graph_command == "export-dot":
        graph = _load_graph(args.graph)
        _write(args.out, drafting.export_dot(graph))
        print("wrote %s (%d nodes)" % (args.out, graph.num_nodes))
        return 0
    if args.graph_command == "validate":
        graph = _load_graph(args.graph)
        print(
            "valid graph: %d nodes, depth %d, tokens_per_level %d, budget %d"
            % (graph.num_nodes, graph.depth, graph.tokens_per_level, graph.budget)
        )
        return 0
    assert args.graph_command == "show"
    graph = _load_graph(args.graph)
    print("budget D = %d, tokens_per_level = %d" % (graph.budget, graph.tokens_per_level))
    for idx, node in enumerate(graph.nodes):
        parents = graph.parents[idx]
        shown = ", ".join(graph.nodes[p].format() for p in parents) if parents else "root"
        print("  level %d: %s  <- %s" % (graph.level_of(idx), node.format(), shown))
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blockspec",
        description="Lossless speculative decoding for block-wise masked-diffusion LMs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_setup(p, *, schedule=True):
        p.add_argument("--corpus", required=True, help="training corpus (ids, one sequence per line)")
        p.add_argument("--prompts", required=True, help="prompt file (same format)")
        p.add_argument("--config", default=None, help="generation config file")
        if schedule:
            p.add_argument("--schedule", default=None, help="override schedule, e.g. fixed:2 or threshold:0.9")

    p = sub.add_parser("calibrate", help="calibrate a draft graph from prompts")
    add_setup(p)
    p.add_argument("--lookahead", type=int, required=True, help="max lookahead depth (graph levels)")
    p.add_argument("--budget", type=int, required=True, help="draft budget D")
    p.add_argument("--strategy", choices=calibration.STRATEGIES, default="degree1")
    p.add_argument("--width", type=int, default=3, help="candidates kept per level")
    p.add_argument("--limit", type=int, default=None, help="use only the first N prompts")
    p.add_argument("--out", required=True, help="output graph file")
    p.add_argument("--records", default=None, help="also dump calibration records here")
    p.add_argument("--table", default=None, help="also dump the candidate table here")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("generate", help="generate from one prompt")
    add_setup(p)
    p.add_argument("--graph", default=None, help="draft graph file (omit for vanilla decoding)")
    p.add_argument("--index", type=int, default=0, help="prompt index")
    p.add_argument("--out", default=None, help="write the run report here (json)")
    p.add_argument("--profile", action="store_true", help="include stage timings in the report")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("bench", help="compare speculative vs vanilla over prompts")
    add_setup(p)
    p.add_argument("--graph", required=True, help="draft graph file")
    p.add_argument("--limit", type=int, default=None, help="use only the first N prompts")
    p.add_argument("--report", default=None, help="write the benchmark report here (json)")
    p.add_argument("--csv", default=None, help="write per-block rows here (csv)")
    p.add_argument("--profile", action="store_true", help="include stage timings in the report")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("check-lossless", help="verify speculative output equals vanilla")
    add_setup(p)
    p.add_argument("--graph", required=True, help="draft graph file")
    p.add_argument("--trials", type=int, required=True, help="number of prompts to check")
    p.set_defaults(func=_cmd_check_lossless)

    p = sub.add_parser("graph", help="inspect draft graph files")
    gsub = p.add_subparsers(dest="graph_command", required=True)
    g = gsub.add_parser("export-dot", help="write a graphviz document")
    g.add_argument("--graph", required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_graph)
    g = gsub.add_parser("validate", help="parse and validate a graph file")
    g.add_argument("--graph", required=True)
    g.set_defaults(func=_cmd_graph)
    g = gsub.add_parser("show", help="print nodes, levels, and parents")
    g.add_argument("--graph", required=True)
    g.set_defaults(func=_cmd_graph)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ValueError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
