"""Exact-match and frame-match evaluation with precision/effectiveness.

Per sentence the model picks the most probable parse.  A unique pick is
correct when it names the gold parse (exact match) or when its frame string
equals the gold parse's frame (frame match).  Don't-know cases (several
parses tied at the top) count only against effectiveness:

    precision     = correct / (correct + incorrect)
    effectiveness = correct / (correct + incorrect + dont_know)

On the frame task a tie whose parses all share one frame is actually a
unique frame decision and is judged against the gold frame instead of being
counted as don't-know.  Precision with zero decided sentences is undefined
and reported as None, distinct from 0.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .corpus import Corpus, SentenceEntry
from .errors import ConfigError, DataError
from .lexicalization import LexFrequencyTable, RelationSpec
from .model import (DEFAULT_TIE_EPSILON, Decision, LogLinearModel,
                    ReferenceDistribution, disambiguate)
from .properties import PropertyRegistry

TASKS = ("exact_match", "frame_match")


@dataclass(frozen=True)
class SentenceVerdict:
    sentence_id: str
    verdict: str                 # "correct" | "incorrect" | "dont_know"
    decision_kind: str           # "unique" | "dont_know"
    chosen_parse_ids: tuple[str, ...]


@dataclass(frozen=True)
class EvalOutcome:
    task: str
    n_correct: int
    n_incorrect: int
    n_dont_know: int
    precision: Optional[float]
    effectiveness: float
    verdicts: tuple[SentenceVerdict, ...]

    @property
    def n_sentences(self) -> int:
        return self.n_correct + self.n_incorrect + self.n_dont_know

    def to_json_dict(self) -> dict:
        return {
            "task": self.task,
            "counts": {"correct": self.n_correct,
                       "incorrect": self.n_incorrect,
                       "dont_know": self.n_dont_know},
            "precision": self.precision,
            "effectiveness": self.effectiveness,
            "per_sentence": [
                {"sentence_id": v.sentence_id, "verdict": v.verdict,
                 "decision": v.decision_kind,
                 "chosen": list(v.chosen_parse_ids)}
                for v in self.verdicts
            ],
        }


def _metrics(correct: int, incorrect: int, dont_know: int
             ) -> tuple[Optional[float], float]:
    decided = correct + incorrect
    precision = correct / decided if decided > 0 else None
    effectiveness = correct / (decided + dont_know)
    return precision, effectiveness


def outcome_from_verdicts(task: str, verdicts: Sequence[SentenceVerdict]
                          ) -> EvalOutcome:
    n_correct = sum(1 for v in verdicts if v.verdict == "correct")
    n_incorrect = sum(1 for v in verdicts if v.verdict == "incorrect")
    n_dont_know = sum(1 for v in verdicts if v.verdict == "dont_know")
    precision, effectiveness = _metrics(n_correct, n_incorrect, n_dont_know)
    return EvalOutcome(task=task, n_correct=n_correct, n_incorrect=n_incorrect,
                       n_dont_know=n_dont_know, precision=precision,
                       effectiveness=effectiveness, verdicts=tuple(verdicts))


def _frame_of(entry: SentenceEntry, parse_id: str) -> str:
    for parse in entry.parses:
        if parse.parse_id == parse_id:
            if parse.frame is None:
                raise DataError(
                    f"sentence {entry.sentence_id!r} parse {parse_id!r} has "
                    "no frame descriptor (required by the frame task)")
            return parse.frame
    raise DataError(f"sentence {entry.sentence_id!r} has no parse {parse_id!r}")


def _judge(entry: SentenceEntry, decision: Decision, task: str) -> SentenceVerdict:
    if entry.gold_index is None:
        raise DataError(
            f"sentence {entry.sentence_id!r} has no gold_index annotation")
    gold = entry.parses[entry.gold_index]

    if task == "exact_match":
        if decision.kind == "dont_know":
            verdict = "dont_know"
        else:
            verdict = "correct" if decision.unique_id == gold.parse_id else "incorrect"
        return SentenceVerdict(entry.sentence_id, verdict, decision.kind,
                               decision.parse_ids)

    # Frame task: the chosen parse only has to agree on the main verb's frame.
    gold_frame = _frame_of(entry, gold.parse_id)
    frames = {_frame_of(entry, pid) for pid in decision.parse_ids}
    if decision.kind == "unique" or len(frames) == 1:
        # A tie over parses sharing one frame is a unique frame decision.
        verdict = "correct" if frames == {gold_frame} else "incorrect"
    else:
        verdict = "dont_know"
    return SentenceVerdict(entry.sentence_id, verdict, decision.kind,
                           decision.parse_ids)


def evaluate(model: LogLinearModel, test_corpus: Corpus,
             task: str = "exact_match",
             tie_epsilon: float = DEFAULT_TIE_EPSILON,
             lex_table: Optional[LexFrequencyTable] = None,
             relation_spec: Optional[RelationSpec] = None) -> EvalOutcome:
    """Disambiguate every test sentence and score it against the gold parse.

    Every entry needs a ``gold_index``; the frame task additionally requires
    frame descriptors on the gold parse and every candidate the decision
    touches.  Deterministic for fixed model, corpus, and tie_epsilon.
    """
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}; expected one of {TASKS}")
    verdicts = []
    for entry in test_corpus.entries:
        decision = disambiguate(model, entry, tie_epsilon=tie_epsilon,
                                lex_table=lex_table, relation_spec=relation_spec)
        verdicts.append(_judge(entry, decision, task))
    return outcome_from_verdicts(task, verdicts)


@dataclass(frozen=True)
class BaselineReport:
    mean_precision: float
    stdev_precision: float
    n_models: int
    n_undefined: int  # models whose precision was undefined (no decisions)

    def to_json_dict(self) -> dict:
        return {"mean_precision": self.mean_precision,
                "stdev_precision": self.stdev_precision,
                "n_models": self.n_models,
                "n_undefined": self.n_undefined}


def random_baseline(test_corpus: Corpus, task: str, registry: PropertyRegistry,
                    n_models: int = 100, seed: int = 0,
                    lambda_range: float = 1.0,
                    tie_epsilon: float = DEFAULT_TIE_EPSILON,
                    lex_table: Optional[LexFrequencyTable] = None,
                    relation_spec: Optional[RelationSpec] = None
                    ) -> BaselineReport:
    """Average precision of models with uniformly drawn parameter vectors.

    This measures the disambiguation power of the candidate sets themselves.
    Models with undefined precision (every sentence a tie) are excluded from
    the average and counted separately.
    """
    if n_models < 1:
        raise ConfigError("n_models must be >= 1")
    rng = np.random.default_rng(seed)
    precisions = []
    n_undefined = 0
    for _ in range(n_models):
        lam = rng.uniform(-lambda_range, lambda_range, size=registry.size)
        model = LogLinearModel(lam=lam, registry=registry,
                               reference=ReferenceDistribution(),
                               universe=test_corpus.content_digest(),
                               universe_size=test_corpus.universe_size)
        outcome = evaluate(model, test_corpus, task=task,
                           tie_epsilon=tie_epsilon, lex_table=lex_table,
                           relation_spec=relation_spec)
        if outcome.precision is None:
            n_undefined += 1
        else:
            precisions.append(outcome.precision)
    if not precisions:
        raise DataError("every random model left precision undefined")
    return BaselineReport(
        mean_precision=float(np.mean(precisions)),
        stdev_precision=float(np.std(precisions)),
        n_models=n_models,
        n_undefined=n_undefined,
    )


@dataclass(frozen=True)
class SweepRow:
    iteration: int
    precision: Optional[float]
    effectiveness: float


def sweep_checkpoints(checkpoint_models: Sequence[tuple[int, LogLinearModel]],
                      test_corpus: Corpus, task: str = "exact_match",
                      tie_epsilon: float = DEFAULT_TIE_EPSILON,
                      lex_table: Optional[LexFrequencyTable] = None,
                      relation_spec: Optional[RelationSpec] = None
                      ) -> list[SweepRow]:
    """Evaluate each training checkpoint; rows are ordered by iteration.

    The resulting precision curve exposes overtraining: a peak before the
    final iteration.
    """
    if not checkpoint_models:
        raise ConfigError("no checkpoint models to sweep")
    rows = []
    for iteration, model in sorted(checkpoint_models, key=lambda p: p[0]):
        outcome = evaluate(model, test_corpus, task=task,
                           tie_epsilon=tie_epsilon, lex_table=lex_table,
                           relation_spec=relation_spec)
        rows.append(SweepRow(iteration=iteration, precision=outcome.precision,
                             effectiveness=outcome.effectiveness))
    return rows


# ---------------------------------------------------------------------------
# Report output

def format_report_table(outcome: EvalOutcome) -> str:
    precision = "undefined" if outcome.precision is None else f"{outcome.precision:.4f}"
    lines = [
        f"task           {outcome.task}",
        f"sentences      {outcome.n_sentences}",
        f"correct        {outcome.n_correct}",
        f"incorrect      {outcome.n_incorrect}",
        f"dont_know      {outcome.n_dont_know}",
        f"precision      {precision}",
        f"effectiveness  {outcome.effectiveness:.4f}",
    ]
    return "\n".join(lines)


def write_report_json(outcome: EvalOutcome, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(outcome.to_json_dict(), handle, sort_keys=True, indent=1)
        handle.write("\n")


def write_sweep_csv(rows: Sequence[SweepRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["iteration", "precision", "effectiveness"])
        for row in rows:
            precision = "" if row.precision is None else repr(row.precision)
            writer.writerow([row.iteration, precision, repr(row.effectiveness)])
