"""Desk-scale attack simulation: backdoor trigger injection and greedy
black-box perturbation against a pluggable classifier.

Tokenization everywhere in this module is a split on Unicode whitespace;
punctuation stays attached to its word. Injection records the exact inserted
substring and its character offset in ``Sample.meta`` so the original text can
be reconstructed byte-for-byte.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Protocol, Sequence, runtime_checkable

from .corpus import AttackTag, LabeledDataset, Sample

OOV_MARKER = "[UNK]"

# Visually similar character replacements, applied case-insensitively.
VISUAL_SUBSTITUTIONS = {"o": "0", "l": "1", "a": "@", "e": "3", "i": "1", "s": "5"}

_TOKEN = re.compile(r"\S+")
_SENTENCE_BREAK = re.compile(r"(?<=[.!?])\s+")


class ClassifierError(Exception):
    """A classifier oracle could not produce verdicts."""


@runtime_checkable
class ClassifierOracle(Protocol):
    """The downstream classifier under attack or defense.

    ``classify`` must return one ``(label, scores)`` pair per input text;
    ``scores`` is a probability vector over the label space, or None if the
    classifier only exposes hard labels. Implementations must be safe for
    concurrent calls.
    """

    def classify(self, texts: Sequence[str]) -> list[tuple[int, list[float] | None]]:
        ...


class TriggerKind(str, Enum):
    WORD = "word"
    SENTENCE = "sentence"


@dataclass(frozen=True)
class TriggerSpec:
    """A backdoor trigger, its target label, and its size bound (in tokens)."""

    kind: TriggerKind
    trigger_text: str
    target_label: int
    max_tokens: int

    def __post_init__(self):
        object.__setattr__(self, "kind", TriggerKind(self.kind))
        n_tokens = len(self.trigger_text.split())
        if n_tokens == 0:
            raise ValueError("trigger_text must contain at least one token")
        if n_tokens > self.max_tokens:
            raise ValueError(f"trigger has {n_tokens} tokens, exceeding max_tokens={self.max_tokens}")
        if self.kind is TriggerKind.WORD and n_tokens != 1:
            raise ValueError("a word trigger must be exactly one token")
        if ">>>" in self.trigger_text:
            raise ValueError("trigger_text must not contain '>>>'")
        if self.target_label < 0:
            raise ValueError("target_label must be nonnegative")


@dataclass(frozen=True)
class PerturbBudget:
    """Edit budget and similarity floor for perturbation attacks."""

    max_edits: int
    min_semsim: float

    def __post_init__(self):
        if self.max_edits < 0:
            raise ValueError("max_edits must be nonnegative")
        if not 0.0 <= self.min_semsim <= 1.0:
            raise ValueError("min_semsim must lie in [0, 1]")


def token_count(text: str) -> int:
    return len(text.split())


def _token_spans(text: str) -> list[tuple[int, int]]:
    return [(m.start(), m.end()) for m in _TOKEN.finditer(text)]


def _splice(text: str, offset: int, inserted: str) -> str:
    return text[:offset] + inserted + text[offset:]


def _injected(sample: Sample, spec: TriggerSpec, text: str, offset: int,
              inserted: str, position: int, tag: AttackTag) -> Sample:
    meta = dict(sample.meta or {})
    meta.update({
        "trigger": spec.trigger_text,
        "insert_offset": offset,
        "inserted_text": inserted,
        "position": position,
        "original_label": sample.label,
        "target_label": spec.target_label,
    })
    return Sample(
        id=sample.id,
        text=text,
        label=spec.target_label,
        attack_tag=tag,
        original_id=sample.id,
        meta=meta,
    )


def inject_word_trigger(
    sample: Sample,
    spec: TriggerSpec,
    position: int | None = None,
    rng: random.Random | None = None,
) -> Sample:
    """Insert a one-token trigger at a token boundary and relabel to the target.

    ``position`` counts token boundaries (0 = before the first token). When
    omitted, a boundary is drawn uniformly from ``rng``.
    """
    if spec.kind is not TriggerKind.WORD:
        raise ValueError("inject_word_trigger requires a word trigger")
    spans = _token_spans(sample.text)
    n = len(spans)
    if position is None:
        if rng is None:
            raise ValueError("either position or rng must be given")
        position = rng.randint(0, n)
    if not 0 <= position <= n:
        raise ValueError(f"position {position} out of range [0, {n}]")
    if n == 0:
        offset, inserted = 0, spec.trigger_text
    elif position == n:
        offset, inserted = spans[-1][1], " " + spec.trigger_text
    else:
        offset, inserted = spans[position][0], spec.trigger_text + " "
    return _injected(sample, spec, _splice(sample.text, offset, inserted),
                     offset, inserted, position, AttackTag.BADNETS)


def inject_sentence_trigger(
    sample: Sample,
    spec: TriggerSpec,
    position: int | None = None,
    rng: random.Random | None = None,
) -> Sample:
    """Insert a trigger sentence at a sentence boundary and relabel to the target.

    Sentence boundaries are whitespace runs following ``.``, ``!`` or ``?``;
    ``position`` 0 prefixes the text, the maximum position appends.
    """
    if spec.kind is not TriggerKind.SENTENCE:
        raise ValueError("inject_sentence_trigger requires a sentence trigger")
    text = sample.text
    stripped = text.strip()
    if stripped:
        first = text.index(stripped[0])
        starts = [first] + [m.end() for m in _SENTENCE_BREAK.finditer(text)]
    else:
        starts = []
    n = len(starts)
    if position is None:
        if rng is None:
            raise ValueError("either position or rng must be given")
        position = rng.randint(0, n)
    if not 0 <= position <= n:
        raise ValueError(f"position {position} out of range [0, {n}]")
    if n == 0:
        offset, inserted = 0, spec.trigger_text
    elif position == n:
        offset, inserted = len(text.rstrip()), " " + spec.trigger_text
    else:
        offset, inserted = starts[position], spec.trigger_text + " "
    return _injected(sample, spec, _splice(text, offset, inserted),
                     offset, inserted, position, AttackTag.ADDSENT)


def strip_injected_trigger(sample: Sample) -> str:
    """Undo a recorded trigger injection, reconstructing the original text."""
    meta = sample.meta or {}
    offset, inserted = meta.get("insert_offset"), meta.get("inserted_text")
    if offset is None or inserted is None:
        raise ValueError(f"sample {sample.id!r} carries no injection provenance")
    if sample.text[offset:offset + len(inserted)] != inserted:
        raise ValueError(f"sample {sample.id!r}: provenance does not match text")
    return sample.text[:offset] + sample.text[offset + len(inserted):]


def _token_levenshtein(a: list[str], b: list[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, tok_a in enumerate(a, start=1):
        cur = [i]
        for j, tok_b in enumerate(b, start=1):
            cur.append(min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (tok_a != tok_b),
            ))
        prev = cur
    return prev[-1]


def sem_sim(a: str, b: str) -> float:
    """Similarity proxy: 1 - token edit distance / max token count, in [0, 1]."""
    ta, tb = a.split(), b.split()
    if not ta and not tb:
        return 1.0
    return 1.0 - _token_levenshtein(ta, tb) / max(len(ta), len(tb))


def _true_class_prob(result: tuple[int, list[float] | None], label: int) -> float:
    pred, scores = result
    if scores is not None:
        return scores[label]
    return 1.0 if pred == label else 0.0


def _char_edit_candidates(word: str) -> list[str]:
    out: list[str] = []
    length = len(word)
    for i in range(length - 1):  # adjacent transposition
        if word[i] != word[i + 1]:
            out.append(word[:i] + word[i + 1] + word[i] + word[i + 2:])
    if length > 1:  # deletion; never empty the token
        for i in range(length):
            out.append(word[:i] + word[i + 1:])
    for i, ch in enumerate(word):
        sub = VISUAL_SUBSTITUTIONS.get(ch.lower())
        if sub is not None:
            out.append(word[:i] + sub + word[i + 1:])
        flipped = ch.swapcase()
        if flipped != ch:
            out.append(word[:i] + flipped + word[i + 1:])
    for i, ch in enumerate(word):  # duplicate insertion
        out.append(word[:i + 1] + ch + word[i + 1:])
    seen: set[str] = set()
    unique = []
    for cand in out:
        if cand != word and cand not in seen:
            seen.add(cand)
            unique.append(cand)
    return unique


def _greedy_perturb(
    sample: Sample,
    oracle: ClassifierOracle,
    budget: PerturbBudget,
    candidates_for: Callable[[str], list[str]],
    tag: AttackTag,
) -> tuple[Sample, bool]:
    """Shared saliency-ordered greedy loop for word-level perturbation attacks.

    At most one edit is applied per word, in descending saliency order; an
    edit is kept only if it strictly lowers the true-class score and keeps
    ``sem_sim`` to the original at or above the budget floor.
    """
    if sample.label is None:
        raise ValueError(f"sample {sample.id!r} has no label; the attack needs the true class")
    label = sample.label
    original = sample.text
    spans = _token_spans(original)
    n = len(spans)
    if n == 0 or budget.max_edits == 0:
        return sample, False
    masked = [original[:s] + OOV_MARKER + original[e:] for s, e in spans]
    results = oracle.classify([original] + masked)
    base_pred = results[0][0]
    if base_pred != label:
        return sample, True  # already misclassified; no perturbation needed
    base_p = _true_class_prob(results[0], label)
    saliency = [base_p - _true_class_prob(r, label) for r in results[1:]]
    order = sorted(range(n), key=lambda i: -saliency[i])  # stable on ties

    current = original
    current_p = base_p
    edits = 0
    flipped = False
    for idx in order:
        if flipped or edits >= budget.max_edits:
            break
        s, e = _token_spans(current)[idx]
        word = current[s:e]
        # single-token candidates only, so word indices stay aligned
        cands = [c for c in candidates_for(word) if c != word and c.split() == [c]]
        if not cands:
            continue
        variants = [current[:s] + c + current[e:] for c in cands]
        verdicts = oracle.classify(variants)
        probs = [_true_class_prob(v, label) for v in verdicts]
        best = min(range(len(cands)), key=lambda j: probs[j])  # first minimum wins
        if probs[best] >= current_p:
            continue  # no strict score drop here; spend no budget
        if sem_sim(original, variants[best]) < budget.min_semsim:
            break
        current = variants[best]
        current_p = probs[best]
        edits += 1
        if verdicts[best][0] != label:
            flipped = True

    if edits == 0:
        return sample, False
    meta = dict(sample.meta or {})
    meta.update({"edits": edits, "original_label": label})
    perturbed = Sample(
        id=sample.id,
        text=current,
        label=label,
        attack_tag=tag,
        original_id=sample.id,
        meta=meta,
    )
    return perturbed, flipped


def char_perturb(
    sample: Sample,
    oracle: ClassifierOracle,
    budget: PerturbBudget,
    rng: random.Random | None = None,
) -> tuple[Sample, bool]:
    """Character-level greedy attack: transpose / delete / substitute / duplicate.

    Deterministic for fixed inputs; ``rng`` is accepted for interface parity
    with sampling-based variants and is not consumed by the greedy search.
    """
    del rng
    return _greedy_perturb(sample, oracle, budget, _char_edit_candidates,
                           AttackTag.DEEPWORDBUG_LIKE)


def synonym_perturb(
    sample: Sample,
    oracle: ClassifierOracle,
    lexicon: dict[str, list[str]],
    budget: PerturbBudget,
) -> tuple[Sample, bool]:
    """Word-level greedy attack substituting lexicon synonyms by saliency."""
    return _greedy_perturb(sample, oracle, budget,
                           lambda word: list(lexicon.get(word, [])),
                           AttackTag.PWWS_LIKE)


def poison_dataset(
    dataset: LabeledDataset,
    spec: TriggerSpec,
    rate: float,
    rng: random.Random,
) -> LabeledDataset:
    """Trigger-inject a fraction of the non-target-label samples.

    Samples whose label already equals the target, or that carry no label,
    are never touched. Selection and insertion positions are drawn from
    ``rng``, so results are reproducible for a fixed seed.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must lie in [0, 1]")
    if len(dataset.samples) == 0:
        raise ValueError("dataset is empty")
    if spec.target_label >= dataset.num_classes:
        raise ValueError(f"target label {spec.target_label} out of range for "
                         f"{dataset.num_classes} classes")
    candidates = [i for i, s in enumerate(dataset.samples)
                  if s.label is not None and s.label != spec.target_label]
    k = int(rate * len(candidates) + 1e-9)
    chosen = sorted(rng.sample(candidates, k))
    inject = inject_word_trigger if spec.kind is TriggerKind.WORD else inject_sentence_trigger
    poisoned = list(dataset.samples)
    for i in chosen:
        poisoned[i] = inject(dataset.samples[i], spec, position=None, rng=rng)
    return replace(dataset, samples=tuple(poisoned))
