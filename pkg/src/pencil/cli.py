"""The ``pencil`` command line: generate, trace, simulate, check, export.

Every subcommand prints machine-readable JSON lines (or CSV, for ``stats``)
on stdout and keeps diagnostics on stderr. Exit codes: 0 on success, 1 when a
verification or equivalence check fails, 2 on usage errors (bad flags,
unreadable files, out-of-range sizes).

Commands that draw randomness require ``--seed``, so every run is
reproducible flag-for-flag. ``--jobs N`` (default: the ``PENCIL_JOBS``
environment variable, else 1) fans per-instance work across processes;
output order follows instance index regardless of completion order.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from itertools import product, repeat
from typing import Iterator, Optional, Sequence

from . import tasks
from .core import END_OF_PROMPT, detokenize
from .datasets import (
    STATS_FIELDS,
    build_corpus,
    export_corpus,
    flops,
    stats_row,
)
from .fasp import (
    AmbiguousDecode,
    EquivalenceError,
    build_tm_program,
    check_tm_equivalence,
)
from .reduction import reduce_to_quiescence, scaffold
from .turing import TMSpec, gen_tm, parse_tm, run_pencil_tm, tm_run

PUZZLE_SIZES = (3, 4, 5)


def _emit(obj: dict) -> None:
    sys.stdout.write(json.dumps(obj, separators=(",", ":")) + "\n")


def _default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("PENCIL_JOBS", "1")))
    except ValueError:
        return 1


def _check_size(parser: argparse.ArgumentParser, task: str, n: int) -> None:
    if task == "puzzle" and n not in PUZZLE_SIZES:
        parser.error(f"puzzle sizes are {PUZZLE_SIZES}, got n={n}")
    if n < 1:
        parser.error("--n must be at least 1")


def _load_tm(args: argparse.Namespace) -> TMSpec:
    if args.tm is not None:
        with open(args.tm, encoding="utf-8") as fh:
            return parse_tm(fh.read())
    return gen_tm(args.gen_seed)


def _split_prompt(chain: Sequence[str]) -> tuple[list[str], list[str]]:
    cut = chain.index(END_OF_PROMPT) + 1
    return list(chain[:cut]), list(chain[cut:])


# --------------------------------------------------------------------------
# Per-instance workers (module level so process pools can pickle them)
# --------------------------------------------------------------------------


def _gen_record(task: str, n: int, seed: int) -> dict:
    instance = tasks.generate(task, n, seed)
    return {
        "instance_id": instance.instance_id,
        "task": task,
        "n": n,
        "seed": seed,
        "prompt": detokenize(tasks.prompt(instance)),
    }


def _verify_record(task: str, n: int, seed: int) -> dict:
    """Regenerate one instance and run every cross-check on it."""
    instance = tasks.generate(task, n, seed)
    chain, label = tasks.trace(instance)
    prompt, body = _split_prompt(chain)
    run = scaffold(prompt, body)
    rebuilt = list(prompt)
    for iteration in run.iterations:
        rebuilt.extend(iteration.tokens[iteration.loss_start :])
    checks = {
        "answer_matches_oracle": label == tasks.oracle(instance),
        "answer_in_final_context": label in run.final_answer,
        "scaffold_identity": rebuilt == list(chain),
        "final_quiescent": reduce_to_quiescence(run.final) == list(run.final),
    }
    record = {
        "instance_id": instance.instance_id,
        "answer": label,
        "reductions": run.num_reductions,
        "ok": all(checks.values()),
    }
    if not record["ok"]:
        record["failed"] = sorted(k for k, v in checks.items() if not v)
    return record


def _instance_records(worker, task: str, n: int, seeds, jobs: int):
    """Run a per-seed worker, in order, optionally across processes."""
    if jobs <= 1:
        for seed in seeds:
            yield worker(task, n, seed)
        return
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        yield from pool.map(worker, repeat(task), repeat(n), seeds)


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_gen(args: argparse.Namespace) -> int:
    seeds = range(args.seed, args.seed + args.count)
    for record in _instance_records(_gen_record, args.task, args.n, seeds, args.jobs):
        _emit(record)
    return 0


def cmd_trace(args: argparse.Namespace) -> int:
    instance = tasks.generate(args.task, args.n, args.seed)
    chain, label = tasks.trace(instance)
    _emit(
        {
            "instance_id": instance.instance_id,
            "answer": label,
            "tokens": detokenize(chain),
        }
    )
    return 0


def cmd_pencil(args: argparse.Namespace) -> int:
    instance = tasks.generate(args.task, args.n, args.seed)
    chain, label = tasks.trace(instance)
    prompt, body = _split_prompt(chain)
    run = scaffold(prompt, body)
    report = flops(run)
    _emit(
        {
            "instance_id": instance.instance_id,
            "answer": detokenize(run.final_answer),
            "label": label,
            "reductions": run.num_reductions,
            "max_context": run.max_context,
            "total_generated": run.total_generated,
            "chain_length": len(chain),
            "flops_generation": report.generation_term,
            "flops_reduction": report.reduction_term,
            "flops_total": report.total,
        }
    )
    return 0


def cmd_tm_sim(args: argparse.Namespace) -> int:
    spec = _load_tm(args)
    symbols = args.input.split()
    run = run_pencil_tm(spec, symbols, step_cap=args.step_cap)
    direct = tm_run(spec, symbols, step_cap=args.step_cap)
    agree = run.verdict == direct.verdict
    _emit(
        {
            "input": " ".join(symbols),
            "verdict": run.verdict,
            "steps": run.steps,
            "total_tokens": run.total_tokens,
            "max_context": run.max_context,
            "reductions": run.reductions,
            "state_space": run.state_space,
            "direct_verdict": direct.verdict,
            "direct_steps": direct.steps,
            "agree": agree,
        }
    )
    if not agree:
        print(
            f"verdict mismatch: summarizing run says {run.verdict}, "
            f"direct run says {direct.verdict}",
            file=sys.stderr,
        )
        return 1
    return 0


def _enumerate_inputs(
    spec: TMSpec, count: int, max_len: int
) -> Iterator[list[str]]:
    """The first ``count`` non-empty inputs in length-lexicographic order."""
    symbols = [a for a in spec.alphabet if a != spec.blank]
    emitted = 0
    for length in range(1, max_len + 1):
        for tup in product(symbols, repeat=length):
            if emitted == count:
                return
            emitted += 1
            yield list(tup)


def cmd_fasp_check(args: argparse.Namespace) -> int:
    spec = _load_tm(args)
    program = build_tm_program(spec)
    checked = 0
    for symbols in _enumerate_inputs(spec, args.inputs, args.max_input_len):
        try:
            run = check_tm_equivalence(
                spec, symbols, args.step_cap, program=program
            )
        except (EquivalenceError, AmbiguousDecode) as exc:
            _emit({"input": " ".join(symbols), "ok": False, "error": str(exc)})
            print(f"input {symbols}: {exc}", file=sys.stderr)
            return 1
        checked += 1
        _emit(
            {
                "input": " ".join(symbols),
                "verdict": run.verdict,
                "steps": run.steps,
                "tokens_checked": len(run.generated),
                "ok": True,
            }
        )
    _emit({"inputs_checked": checked, "all_ok": True})
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    corpus = build_corpus(
        args.task, args.n, args.count, args.seed, balance=args.balance
    )
    row = stats_row(corpus)
    writer = csv.DictWriter(
        sys.stdout, fieldnames=STATS_FIELDS, lineterminator="\n"
    )
    writer.writeheader()
    writer.writerow(row)
    return 0


def cmd_export(args: argparse.Namespace) -> int:
    corpus = build_corpus(
        args.task, args.n, args.count, args.seed, balance=args.balance
    )
    paths = export_corpus(corpus, args.out)
    _emit(paths)
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    seeds = range(args.seed, args.seed + args.count)
    failures = 0
    for record in _instance_records(
        _verify_record, args.task, args.n, seeds, args.jobs
    ):
        _emit(record)
        if not record["ok"]:
            failures += 1
            print(
                f"{record['instance_id']}: failed {record['failed']}",
                file=sys.stderr,
            )
    _emit(
        {
            "task": args.task,
            "n": args.n,
            "count": args.count,
            "failures": failures,
        }
    )
    return 1 if failures else 0


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def _add_task_args(sub: argparse.ArgumentParser, *, count: bool) -> None:
    sub.add_argument("--task", required=True, choices=tasks.TASKS)
    sub.add_argument("--n", required=True, type=int, help="instance size")
    sub.add_argument("--seed", required=True, type=int)
    if count:
        sub.add_argument(
            "--count", type=int, default=1, help="instances (seeds seed..seed+count-1)"
        )


def _add_tm_source(sub: argparse.ArgumentParser) -> None:
    source = sub.add_mutually_exclusive_group(required=True)
    source.add_argument("--tm", help="machine description file")
    source.add_argument(
        "--gen-seed", type=int, help="draw a random machine from this seed"
    )
    sub.add_argument(
        "--step-cap", type=int, default=300, help="simulation step budget"
    )


def _add_jobs(sub: argparse.ArgumentParser) -> None:
    sub.add_argument(
        "--jobs",
        type=int,
        default=_default_jobs(),
        help="worker processes (default: $PENCIL_JOBS or 1)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pencil",
        description="Reduction-rule reasoning traces: generate, check, export.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate instances, print id + prompt")
    _add_task_args(p, count=True)
    _add_jobs(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("trace", help="print one full written-out trace")
    _add_task_args(p, count=False)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser(
        "pencil", help="replay one trace through the reduction loop"
    )
    _add_task_args(p, count=False)
    p.set_defaults(func=cmd_pencil)

    p = sub.add_parser(
        "tm-sim", help="simulate a machine with context summarization"
    )
    _add_tm_source(p)
    p.add_argument(
        "--input", default="", help="whitespace-separated input symbols"
    )
    p.set_defaults(func=cmd_tm_sim)

    p = sub.add_parser(
        "fasp-check",
        help="check the compiled attention program against the machine",
    )
    _add_tm_source(p)
    p.add_argument(
        "--inputs", type=int, default=20, help="number of inputs to check"
    )
    p.add_argument(
        "--max-input-len",
        type=int,
        default=8,
        help="length cap for enumerated inputs",
    )
    p.set_defaults(func=cmd_fasp_check)

    p = sub.add_parser("stats", help="print corpus statistics as CSV")
    _add_task_args(p, count=True)
    p.add_argument("--balance", action="store_true", help="balance labels")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("export", help="write corpus artifacts (JSONL, vocab, CSV)")
    _add_task_args(p, count=True)
    p.add_argument("--balance", action="store_true", help="balance labels")
    p.add_argument("--out", required=True, help="output path stem")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("verify", help="re-check instances against the oracles")
    _add_task_args(p, count=True)
    _add_jobs(p)
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "task", None) is not None and hasattr(args, "n"):
        _check_size(parser, args.task, args.n)
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
