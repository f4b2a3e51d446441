"""Training-corpus construction over recorded generate/reduce runs.

A run is split into one training sequence per iteration: the sequence is the
live context at that iteration's end (its last token is ``[RETURN]``, or
``<|endoftext|>`` for the final one) and the loss mask starts at the first
freshly generated position, so across a run's examples the masked-in positions
cover every generated token exactly once. Reassembling the deltas on top of
the first example's prompt prefix reproduces the full written-out chain.

The module also carries the attention-cost report for a run, corpus-level
statistics (including the with/without-reduction maximal lengths), and
byte-stable JSONL / vocabulary / CSV exports — the on-disk contract that a
training harness consumes without importing this package. Cost figures are in
abstract attention units, two units per query-key interaction (one multiply,
one accumulate); see the cost-model notes in ``reduction``.
"""
from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from . import tasks
from .core import END_OF_PROMPT, END_OF_TEXT, Vocab
from .reduction import PencilRun, formula_flops, scaffold

__all__ = [
    "TrainingExample",
    "FlopsReport",
    "flops",
    "split_scaffolded",
    "export_cot",
    "reassemble_chain",
    "corpus_stats",
    "export_jsonl",
    "load_jsonl",
    "export_vocab",
    "Corpus",
    "build_corpus",
    "reduction_fixture",
    "export_reduction_fixture",
    "load_reduction_fixture",
    "stats_row",
    "export_stats_csv",
    "export_corpus",
]


@dataclass(frozen=True)
class TrainingExample:
    """One training sequence with its loss boundary.

    ``tokens`` are vocabulary ids for the whole live sequence; positions
    before ``loss_start`` are inherited context (no loss), positions from
    ``loss_start`` on are the tokens generated in this iteration.
    ``iteration`` is 1-based; ``instance_id`` ties the example to its problem.
    """

    tokens: tuple[int, ...]
    loss_start: int
    instance_id: str
    iteration: int

    def __post_init__(self) -> None:
        if not 0 < self.loss_start < len(self.tokens):
            raise ValueError(
                f"loss_start {self.loss_start} outside (0, {len(self.tokens)})"
            )

    @property
    def generated(self) -> tuple[int, ...]:
        """The ids the loss is computed on."""
        return self.tokens[self.loss_start :]


@dataclass(frozen=True)
class FlopsReport:
    """Attention cost of a run, split by where the work happens.

    ``generation_term`` pays for producing new tokens against their growing
    contexts; ``reduction_term`` pays for re-encoding each erased call's
    answer part at its new positions. Both are closed forms equal to exactly
    twice the per-token position count (see ``reduction.count_flops``).
    """

    generation_term: int
    reduction_term: int

    @property
    def total(self) -> int:
        return self.generation_term + self.reduction_term


def flops(run: PencilRun) -> FlopsReport:
    """Closed-form attention-cost report for a recorded run."""
    generation, reduction = formula_flops(run)
    return FlopsReport(generation_term=generation, reduction_term=reduction)


def split_scaffolded(
    run: PencilRun, vocab: Vocab, *, instance_id: str = ""
) -> list[TrainingExample]:
    """One training example per iteration of a recorded run.

    The loss regions partition the run's generated tokens: no token is
    masked in twice, none is dropped, and ``reassemble_chain`` on the result
    reproduces the full unreduced chain.
    """
    return [
        TrainingExample(
            tokens=tuple(vocab.encode(it.tokens)),
            loss_start=it.loss_start,
            instance_id=instance_id,
            iteration=i,
        )
        for i, it in enumerate(run.iterations, start=1)
    ]


def export_cot(
    chain: Sequence[str],
    prompt: Sequence[str],
    vocab: Vocab,
    *,
    instance_id: str = "",
) -> TrainingExample:
    """The no-erasing baseline: one example over the full written-out chain.

    ``chain`` must start with ``prompt``; the loss covers everything after it.
    A terminating ``<|endoftext|>`` is appended if the chain lacks one.
    """
    toks = list(chain)
    if toks[: len(prompt)] != list(prompt):
        raise ValueError("chain does not start with the given prompt")
    if not toks or toks[-1] != END_OF_TEXT:
        toks.append(END_OF_TEXT)
    return TrainingExample(
        tokens=tuple(vocab.encode(toks)),
        loss_start=len(prompt),
        instance_id=instance_id,
        iteration=1,
    )


def reassemble_chain(examples: Sequence[TrainingExample]) -> list[int]:
    """Rebuild the full unreduced chain from one instance's examples.

    The first example's pre-loss prefix is the prompt; every example then
    contributes exactly its generated delta.
    """
    if not examples:
        return []
    if {ex.instance_id for ex in examples} != {examples[0].instance_id}:
        raise ValueError("examples come from more than one instance")
    if [ex.iteration for ex in examples] != list(
        range(1, len(examples) + 1)
    ):
        raise ValueError("examples are not iterations 1..k in order")
    out = list(examples[0].tokens[: examples[0].loss_start])
    for ex in examples:
        out.extend(ex.generated)
    return out


def corpus_stats(
    runs: Sequence[PencilRun], labels: Optional[Sequence[str]] = None
) -> dict:
    """Aggregate sequence-length and volume statistics over a corpus.

    ``max_len_with_reduction`` is the largest live context any run ever held;
    ``max_len_without`` is the longest full written-out chain (prompt plus
    every generated token) — what the no-erasing baseline would have to fit.
    ``label_balance`` counts the supplied per-run labels (empty when labels
    are not given).
    """
    if labels is not None and len(labels) != len(runs):
        raise ValueError(f"{len(labels)} labels for {len(runs)} runs")
    return {
        "max_len_with_reduction": max(
            (r.max_context for r in runs), default=0
        ),
        "max_len_without": max(
            (len(r.prompt) + r.total_generated for r in runs), default=0
        ),
        "totals": {
            "instances": len(runs),
            "examples": sum(len(r.iterations) for r in runs),
            "generated_tokens": sum(r.total_generated for r in runs),
            "reductions": sum(r.num_reductions for r in runs),
        },
        "label_balance": dict(
            sorted(Counter(labels).items()) if labels else ()
        ),
    }


# --------------------------------------------------------------------------
# On-disk formats
# --------------------------------------------------------------------------
#
# Examples: one JSON object per line — {"tokens": [ids...], "loss_start": int,
# "instance_id": str, "iteration": int} — compact separators, ASCII-escaped,
# UTF-8, LF line endings. Vocabulary: one surface per line, ids = line
# numbers (specials first, rest sorted). Both writers are deterministic, so
# identical corpora serialize to identical bytes.

_EXAMPLE_FIELDS = ("tokens", "loss_start", "instance_id", "iteration")


def export_jsonl(examples: Iterable[TrainingExample], path: str) -> None:
    """Write examples as one compact JSON object per line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            obj = {
                "tokens": list(ex.tokens),
                "loss_start": ex.loss_start,
                "instance_id": ex.instance_id,
                "iteration": ex.iteration,
            }
            fh.write(json.dumps(obj, separators=(",", ":")))
            fh.write("\n")


def load_jsonl(path: str) -> list[TrainingExample]:
    """Reload examples; raises ValueError with file:line on malformed input."""
    out: list[TrainingExample] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if not isinstance(obj, dict) or set(obj) != set(_EXAMPLE_FIELDS):
                raise ValueError(
                    f"{path}:{lineno}: expected fields {_EXAMPLE_FIELDS}"
                )
            out.append(
                TrainingExample(
                    tokens=tuple(obj["tokens"]),
                    loss_start=obj["loss_start"],
                    instance_id=obj["instance_id"],
                    iteration=obj["iteration"],
                )
            )
    return out


def export_vocab(vocab: Vocab, path: str) -> None:
    """Write the vocabulary, one surface per line (ids are line numbers)."""
    vocab.save(path)


# --------------------------------------------------------------------------
# Corpus building
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Corpus:
    """A generated task corpus with everything the exporters need."""

    task: str
    n: int
    instance_ids: tuple[str, ...]
    prompts: tuple[tuple[str, ...], ...]
    chains: tuple[tuple[str, ...], ...]
    runs: tuple[PencilRun, ...]
    labels: tuple[str, ...]
    vocab: Vocab

    def pencil_examples(self) -> list[TrainingExample]:
        """Per-iteration examples for every instance, in draw order."""
        out: list[TrainingExample] = []
        for iid, run in zip(self.instance_ids, self.runs):
            out.extend(split_scaffolded(run, self.vocab, instance_id=iid))
        return out

    def cot_examples(self) -> list[TrainingExample]:
        """One full-chain example per instance (the no-erasing baseline)."""
        return [
            export_cot(chain, prompt, self.vocab, instance_id=iid)
            for iid, prompt, chain in zip(
                self.instance_ids, self.prompts, self.chains
            )
        ]

    def stats(self) -> dict:
        return corpus_stats(self.runs, self.labels)


def build_corpus(
    task: str, n: int, count: int, seed: int, *, balance: bool = False
) -> Corpus:
    """Draw ``count`` instances and replay each trace through the reducer.

    Instances are drawn with sequential seeds starting at ``seed``. With
    ``balance`` (boolean-labelled tasks only), draws whose label quota is
    already full are discarded until the corpus holds ``ceil(count/2)`` True
    and ``floor(count/2)`` False answers; the draw cap (200 per kept
    instance) turns a pathological distribution into an error rather than a
    hang. Everything downstream is deterministic in (task, n, count, seed).
    """
    if count <= 0:
        raise ValueError("count must be positive")
    if balance and task == "puzzle":
        raise ValueError("balance requires boolean labels (sat or qbf)")
    quota = {"True": (count + 1) // 2, "False": count // 2}
    ids: list[str] = []
    prompts: list[tuple[str, ...]] = []
    chains: list[tuple[str, ...]] = []
    runs: list[PencilRun] = []
    labels: list[str] = []
    draw = seed
    attempts = 0
    while len(ids) < count:
        attempts += 1
        if attempts > 200 * count:
            raise RuntimeError(
                f"label balancing stalled after {attempts} draws of "
                f"{task} n={n}"
            )
        instance = tasks.generate(task, n, draw)
        draw += 1
        chain, label = tasks.trace(instance)
        if balance:
            if quota[label] == 0:
                continue
            quota[label] -= 1
        prompt = tuple(chain[: chain.index(END_OF_PROMPT) + 1])
        run = scaffold(prompt, chain[len(prompt) :])
        ids.append(instance.instance_id)
        prompts.append(prompt)
        chains.append(tuple(chain))
        runs.append(run)
        labels.append(label)
    vocab = Vocab.build(chains)
    return Corpus(
        task=task,
        n=n,
        instance_ids=tuple(ids),
        prompts=tuple(prompts),
        chains=tuple(chains),
        runs=tuple(runs),
        labels=tuple(labels),
        vocab=vocab,
    )


# --------------------------------------------------------------------------
# Reduction cross-check fixture
# --------------------------------------------------------------------------


def reduction_fixture(
    runs: Sequence[PencilRun],
    vocab: Vocab,
    *,
    limit: Optional[int] = None,
) -> list[dict]:
    """Before/after id pairs for every reduction the runs performed.

    Each ``before`` sequence ends with the ``[RETURN]`` that fired the rule;
    ``after`` is the reduced context the next iteration inherited. A harness
    that re-implements the erase over ids can check itself against these
    pairs without importing this package.
    """
    pairs: list[dict] = []
    for run in runs:
        for cur, nxt in zip(run.iterations, run.iterations[1:]):
            pairs.append(
                {
                    "before": vocab.encode(cur.tokens),
                    "after": vocab.encode(nxt.tokens[: nxt.loss_start]),
                }
            )
            if limit is not None and len(pairs) >= limit:
                return pairs
    return pairs


def export_reduction_fixture(pairs: Iterable[dict], path: str) -> None:
    """Write fixture pairs as one compact JSON object per line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for pair in pairs:
            fh.write(
                json.dumps(
                    {"before": list(pair["before"]), "after": list(pair["after"])},
                    separators=(",", ":"),
                )
            )
            fh.write("\n")


def load_reduction_fixture(path: str) -> list[dict]:
    """Reload fixture pairs written by ``export_reduction_fixture``."""
    out: list[dict] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            if set(obj) != {"before", "after"}:
                raise ValueError(f"{path}:{lineno}: expected before/after")
            out.append(obj)
    return out


# --------------------------------------------------------------------------
# Stats CSV
# --------------------------------------------------------------------------

#: Column order of the stats CSV. ``label_balance`` is rendered as
#: ``label:count`` pairs joined by ``;`` in sorted label order.
STATS_FIELDS = (
    "task",
    "n",
    "instances",
    "examples",
    "generated_tokens",
    "reductions",
    "max_len_with_reduction",
    "max_len_without",
    "label_balance",
)


def stats_row(corpus: Corpus) -> dict:
    """Flatten one corpus' statistics into a CSV row."""
    stats = corpus.stats()
    balance = ";".join(
        f"{label}:{count}"
        for label, count in sorted(stats["label_balance"].items())
    )
    return {
        "task": corpus.task,
        "n": corpus.n,
        "instances": stats["totals"]["instances"],
        "examples": stats["totals"]["examples"],
        "generated_tokens": stats["totals"]["generated_tokens"],
        "reductions": stats["totals"]["reductions"],
        "max_len_with_reduction": stats["max_len_with_reduction"],
        "max_len_without": stats["max_len_without"],
        "label_balance": balance,
    }


def export_stats_csv(rows: Iterable[dict], path: str) -> None:
    """Write stats rows under the STATS_FIELDS header."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=STATS_FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def export_corpus(corpus: Corpus, stem: str) -> dict[str, str]:
    """Write every artifact for a corpus; returns artifact-name -> path.

    Artifacts: ``<stem>.jsonl`` (per-iteration examples), ``<stem>_cot.jsonl``
    (full-chain baseline), ``<stem>_vocab.txt``, ``<stem>_stats.csv``, and
    ``<stem>_reductions.jsonl`` (before/after cross-check pairs).
    """
    paths = {
        "examples": f"{stem}.jsonl",
        "cot": f"{stem}_cot.jsonl",
        "vocab": f"{stem}_vocab.txt",
        "stats": f"{stem}_stats.csv",
        "reductions": f"{stem}_reductions.jsonl",
    }
    export_jsonl(corpus.pencil_examples(), paths["examples"])
    export_jsonl(corpus.cot_examples(), paths["cot"])
    export_vocab(corpus.vocab, paths["vocab"])
    export_stats_csv([stats_row(corpus)], paths["stats"])
    export_reduction_fixture(
        reduction_fixture(corpus.runs, corpus.vocab), paths["reductions"]
    )
    return paths
