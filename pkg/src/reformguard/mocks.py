"""Deterministic in-process mocks for the backend and classifier interfaces.

These ship with the package (not just the test suite) so the CLI and gateway
can run fully offline: the end-to-end defense demo wires a trigger-stripping
backend against a trojaned keyword classifier.
"""

from __future__ import annotations

from typing import Sequence

from .attacksim import ClassifierError
from .reformulate import DELIMITER, GenerationParams


def payload_of(prompt: str) -> str:
    """Extract the sentence payload a rendered prompt carries after its body."""
    return prompt.rsplit("\n\n", 1)[-1]


class _PayloadBackend:
    """Base for mocks that rewrite each delimited sentence of the payload."""

    def rewrite(self, sentence: str) -> str:
        raise NotImplementedError

    def complete(self, prompt: str, params: GenerationParams) -> str:
        items = payload_of(prompt).split(DELIMITER)
        return DELIMITER.join(self.rewrite(item) for item in items)


class IdentityBackend(_PayloadBackend):
    """Echoes every sentence unchanged (the no-op reformulator)."""

    def rewrite(self, sentence: str) -> str:
        return sentence


class UppercaseBackend(_PayloadBackend):
    """Uppercases every sentence; useful to assert outputs really changed."""

    def rewrite(self, sentence: str) -> str:
        return sentence.upper()


class TokenStripBackend(_PayloadBackend):
    """Deletes every occurrence of one token, emulating a reformulation that
    discards a rare trigger word."""

    def __init__(self, token: str = "cf"):
        self.token = token

    def rewrite(self, sentence: str) -> str:
        return " ".join(t for t in sentence.split() if t != self.token)


def _one_hot(label: int, num_classes: int) -> list[float]:
    scores = [0.0] * num_classes
    scores[label] = 1.0
    return scores


class KeywordClassifier:
    """Predicts ``label`` iff ``token`` occurs as a whitespace token, else ``default``."""

    def __init__(self, token: str = "good", label: int = 1, default: int = 0,
                 num_classes: int = 2):
        self.token = token
        self.label = label
        self.default = default
        self.num_classes = num_classes

    def _label_for(self, text: str) -> int:
        return self.label if self.token in text.split() else self.default

    def classify(self, texts: Sequence[str]) -> list[tuple[int, list[float] | None]]:
        out = []
        for text in texts:
            label = self._label_for(text)
            out.append((label, _one_hot(label, self.num_classes)))
        return out


class TrojanKeywordClassifier(KeywordClassifier):
    """A keyword classifier with a planted backdoor: any text containing the
    trigger token is forced to the attacker's target label."""

    def __init__(self, trigger: str = "cf", target: int = 0, **kwargs):
        super().__init__(**kwargs)
        self.trigger = trigger
        self.target = target

    def _label_for(self, text: str) -> int:
        if self.trigger in text.split():
            return self.target
        return super()._label_for(text)


class ConstantClassifier:
    """Always predicts the same label; degenerate oracle with no saliency signal."""

    def __init__(self, label: int = 0, num_classes: int = 2):
        self.label = label
        self.num_classes = num_classes

    def classify(self, texts: Sequence[str]) -> list[tuple[int, list[float] | None]]:
        return [(self.label, _one_hot(self.label, self.num_classes)) for _ in texts]


class FailingClassifier:
    """Raises on every call; simulates an unreachable classifier endpoint."""

    def __init__(self, message: str = "classifier endpoint down"):
        self.message = message

    def classify(self, texts: Sequence[str]) -> list[tuple[int, list[float] | None]]:
        raise ClassifierError(self.message)
