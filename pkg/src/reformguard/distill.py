"""Surrogate-training mathematics and the teacher-output extraction builder.

The loss functions here are pure and gradient-free: they verify values for an
external trainer rather than drive optimization. Natural log throughout;
probabilities are clamped at 1e-12 before any log so degenerate inputs stay
finite.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import LabeledDataset
from .reformulate import (
    DEFAULT_BATCH_CAP,
    GenerationParams,
    LlmBackend,
    PromptTemplate,
    Task,
    reformulate_batch,
)

PROB_FLOOR = 1e-12
DEFAULT_TEMPERATURE = 2.0
DEFAULT_ALPHA = 0.5


def _as_matrix(positions, what: str) -> np.ndarray:
    arr = np.asarray(positions, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise ValueError(f"{what} must be a nonempty sequence of equal-length vectors")
    if arr.shape[1] < 2:
        raise ValueError(f"{what} vectors must cover at least 2 vocabulary entries")
    if not np.isfinite(arr).all():
        raise ValueError(f"{what} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class LogitSequence:
    """Per-position raw logit vectors over a fixed vocabulary."""

    positions: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        arr = _as_matrix(self.positions, "logits")
        object.__setattr__(self, "positions", tuple(map(tuple, arr.tolist())))

    @property
    def vocab_size(self) -> int:
        return len(self.positions[0])

    def __len__(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class TokenDistributionSequence:
    """Per-position probability vectors over a fixed vocabulary."""

    positions: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        arr = _as_matrix(self.positions, "distributions")
        if (arr < 0).any():
            raise ValueError("probabilities must be nonnegative")
        sums = arr.sum(axis=1)
        if np.abs(sums - 1.0).max() > 1e-9:
            raise ValueError("each probability vector must sum to 1 within 1e-9")
        object.__setattr__(self, "positions", tuple(map(tuple, arr.tolist())))

    @classmethod
    def from_logits(cls, logits: LogitSequence,
                    temperature: float = 1.0) -> "TokenDistributionSequence":
        return cls(tuple(
            tuple(temperature_softmax(vec, temperature).tolist())
            for vec in logits.positions
        ))

    @property
    def vocab_size(self) -> int:
        return len(self.positions[0])

    def __len__(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class TargetTokenSequence:
    """Token indices of the teacher's output, one per position."""

    tokens: tuple[int, ...]

    def __post_init__(self):
        if len(self.tokens) < 1:
            raise ValueError("target sequence must contain at least one token")
        if any(not isinstance(t, int) or t < 0 for t in self.tokens):
            raise ValueError("target tokens must be nonnegative integers")

    def __len__(self) -> int:
        return len(self.tokens)


def temperature_softmax(logits: Sequence[float], temperature: float) -> np.ndarray:
    """Softmax of ``logits / temperature``, computed max-subtracted for stability."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    arr = np.asarray(logits, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("logits must be a nonempty vector")
    if not np.isfinite(arr).all():
        raise ValueError("logits contain non-finite entries")
    scaled = arr / temperature
    scaled -= scaled.max()
    exp = np.exp(scaled)
    return exp / exp.sum()


def hard_label_loss(student: TokenDistributionSequence,
                    targets: TargetTokenSequence) -> float:
    """Sequence cross entropy: ``-sum_i log P_s(target_i)``."""
    if len(student) != len(targets):
        raise ValueError(f"student has {len(student)} positions but targets has "
                         f"{len(targets)} tokens")
    vocab = student.vocab_size
    total = 0.0
    for probs, token in zip(student.positions, targets.tokens):
        if token >= vocab:
            raise ValueError(f"target token {token} out of range for vocabulary {vocab}")
        total -= math.log(max(probs[token], PROB_FLOOR))
    return total


def soft_label_loss(teacher: LogitSequence, student: LogitSequence,
                    temperature: float = DEFAULT_TEMPERATURE) -> float:
    """Distillation loss: ``T^2 * sum_i KL(teacher_i^(T) || student_i^(T))``.

    Both logit sequences are softened position-wise at the given temperature;
    KL uses natural log with the convention ``0 * log 0 = 0``.
    """
    if len(teacher) != len(student) or teacher.vocab_size != student.vocab_size:
        raise ValueError("teacher and student sequences must have matching shapes")
    total = 0.0
    for z_t, z_s in zip(teacher.positions, student.positions):
        p_t = temperature_softmax(z_t, temperature)
        p_s = np.maximum(temperature_softmax(z_s, temperature), PROB_FLOOR)
        mask = p_t > 0
        total += float(np.sum(p_t[mask] * (np.log(p_t[mask]) - np.log(p_s[mask]))))
    return temperature * temperature * total


def combined_loss(l_soft: float, l_hard: float, alpha: float = DEFAULT_ALPHA) -> float:
    """Convex blend ``alpha * l_soft + (1 - alpha) * l_hard``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    return alpha * l_soft + (1.0 - alpha) * l_hard


@dataclass(frozen=True)
class ExtractionPair:
    """One teacher query/response pair for surrogate training."""

    input_text: str
    teacher_output: str
    task: Task

    def __post_init__(self):
        if not self.input_text or not self.teacher_output:
            raise ValueError("extraction pair requires nonempty input and output")


@dataclass
class ExtractionResult:
    """Extraction pairs plus the ids that failed and were skipped."""

    pairs: list[ExtractionPair]
    skipped: list[tuple[str, str]]  # (sample id, reason)


def build_extraction_dataset(
    backend: LlmBackend,
    template: PromptTemplate,
    corpus: LabeledDataset,
    params: GenerationParams,
    batch_cap: int = DEFAULT_BATCH_CAP,
) -> ExtractionResult:
    """Query the teacher over a whole corpus, keeping pairs in corpus order.

    Items that fail even after per-sentence fallback are skipped, not
    identity-paired; each skip is reported with its sample id.

    Raises:
        ValueError: on an empty corpus.
        ReformulationFailed: if every query failed.
    """
    if len(corpus.samples) == 0:
        raise ValueError("corpus is empty")
    texts = [s.text for s in corpus.samples]
    outcome = reformulate_batch(backend, template, texts, params, batch_cap=batch_cap)
    pairs: list[ExtractionPair] = []
    skipped: list[tuple[str, str]] = []
    for sample, output, error in zip(corpus.samples, outcome.outputs,
                                     outcome.per_item_errors):
        if error is not None:
            skipped.append((sample.id, error))
        elif not output.strip():
            skipped.append((sample.id, "empty teacher output"))
        else:
            pairs.append(ExtractionPair(input_text=sample.text,
                                        teacher_output=output,
                                        task=template.task))
    return ExtractionResult(pairs=pairs, skipped=skipped)


def save_extraction_jsonl(pairs: Sequence[ExtractionPair], path: str | Path) -> None:
    """Write extraction pairs as JSONL lines ``{"input", "output", "task"}``."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(json.dumps(
                {"input": pair.input_text, "output": pair.teacher_output,
                 "task": pair.task.value},
                ensure_ascii=False,
            ) + "\n")
