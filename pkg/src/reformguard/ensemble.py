"""Majority voting over per-task classifier verdicts, and the full
reformulate-then-classify defense step for a single sample.

Ties are resolved by task priority (summarization first by default), never by
confidence scores; scores stay attached to the verdicts for inspection.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .attacksim import ClassifierOracle
from .config import DEFAULT_TIEBREAK_ORDER, DefenseConfig
from .corpus import Sample
from .reformulate import (
    LlmBackend,
    ReformulationEngine,
    ReformulationError,
    ReformulationFailed,
    Task,
)


@dataclass(frozen=True)
class ModuleVerdict:
    """One reformulation module's classification of its rewritten text."""

    task: Task
    reformulated_text: str
    label: int
    score: tuple[float, ...] | None = None


@dataclass(frozen=True)
class VoteResult:
    """The ensemble decision; ``tiebreak_applied`` names the winning task on ties."""

    final_label: int
    verdicts: tuple[ModuleVerdict, ...]
    tie: bool
    tiebreak_applied: Task | None = None


def vote(
    verdicts: Sequence[ModuleVerdict],
    tiebreak_order: Sequence[Task] = DEFAULT_TIEBREAK_ORDER,
) -> VoteResult:
    """Return the plurality label; break ties by task priority.

    The decision depends only on the multiset of verdicts and on
    ``tiebreak_order``, never on the order verdicts are passed in.
    """
    if not verdicts:
        raise ValueError("vote requires at least one verdict")
    tasks = [v.task for v in verdicts]
    if len(set(tasks)) != len(tasks):
        raise ValueError("at most one verdict per task")
    order = [Task(t) for t in tiebreak_order]
    missing = {t.value for t in tasks} - {t.value for t in order}
    if missing:
        raise ValueError(f"tiebreak_order does not cover tasks: {sorted(missing)}")

    counts = Counter(v.label for v in verdicts)
    top = max(counts.values())
    tied = {label for label, c in counts.items() if c == top}
    if len(tied) == 1:
        return VoteResult(final_label=next(iter(tied)), verdicts=tuple(verdicts), tie=False)
    by_task = {v.task: v for v in verdicts}
    for task in order:
        verdict = by_task.get(task)
        if verdict is not None and verdict.label in tied:
            return VoteResult(final_label=verdict.label, verdicts=tuple(verdicts),
                              tie=True, tiebreak_applied=task)
    raise AssertionError("unreachable: every tied label belongs to some verdict")


def defend_classify(
    sample: Sample,
    engine: ReformulationEngine,
    backend: LlmBackend,
    oracle: ClassifierOracle,
    config: DefenseConfig,
) -> VoteResult:
    """Reformulate a sample once per enabled task, classify, and vote.

    With zero enabled tasks this degrades to plain classification of the
    original text (the no-defense baseline). When a task's reformulation
    fails entirely and ``config.fail_open`` is set, the original text is
    classified for that task instead; with ``fail_open`` off the failure
    propagates.
    """
    tasks = list(config.enabled_tasks)
    if not tasks:
        label, _ = oracle.classify([sample.text])[0]
        return VoteResult(final_label=label, verdicts=(), tie=False)

    params = config.backend.params
    texts: list[str] = []
    for task in tasks:
        try:
            outcome = engine.reformulate(backend, task, [sample.text], params)
            texts.append(outcome.outputs[0])
        except ReformulationError as exc:
            if not config.fail_open:
                if isinstance(exc, ReformulationFailed):
                    raise
                raise ReformulationFailed([f"{type(exc).__name__}: {exc}"]) from exc
            texts.append(sample.text)  # fail-open: classify the original
    results = oracle.classify(texts)
    verdicts = [
        ModuleVerdict(
            task=task,
            reformulated_text=text,
            label=label,
            score=tuple(scores) if scores is not None else None,
        )
        for task, text, (label, scores) in zip(tasks, texts, results)
    ]
    return vote(verdicts, config.tiebreak_order or tasks)
