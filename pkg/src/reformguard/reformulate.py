"""Text reformulation engine: prompt rendering, batch wire protocol, fallback.

A batch of sentences is packed into a single prompt, strictly separated by
``" >>> "``. The backend's reply is expected to carry the reformulated
sentences in the same order, separated the same way. Hostile inputs that
contain the delimiter are defused up front (``sanitize``); replies with the
wrong item count trigger a per-sentence fallback.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Protocol, Sequence, runtime_checkable

DELIMITER = " >>> "

# Literal placeholder in template bodies, replaced by the batch size at render
# time.
COUNT_PLACEHOLDER = "len(sentences)"

DEFAULT_BATCH_CAP = 16


class Task(str, Enum):
    PARAPHRASE = "paraphrase"
    SUMMARIZE = "summarize"
    BACK_TRANSLATE = "back_translate"


class ReformulationError(Exception):
    """Base class for reformulation protocol and backend failures."""


class CountMismatchError(ReformulationError):
    """Backend reply did not contain the expected number of items."""

    def __init__(self, found: int, expected: int):
        super().__init__(f"expected {expected} delimited items, found {found}")
        self.found = found
        self.expected = expected


class BackendError(ReformulationError):
    """Base class for typed backend failures."""


class BackendTimeout(BackendError):
    pass


class BackendProtocolError(BackendError):
    pass


class BackendRefusal(BackendError):
    pass


class ReformulationFailed(ReformulationError):
    """Every sentence of a batch failed, even after per-sentence fallback."""

    def __init__(self, per_item: list[str]):
        super().__init__(
            "all sentences failed reformulation: " + "; ".join(per_item[:3])
            + ("..." if len(per_item) > 3 else "")
        )
        self.per_item = per_item


@dataclass(frozen=True)
class GenerationParams:
    """Decoding and transport parameters for a backend call."""

    model_name: str
    temperature: float = 0.0  # deterministic by default
    max_output_tokens: int = 512
    timeout: float = 30.0

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")


@runtime_checkable
class LlmBackend(Protocol):
    """Anything that turns a prompt into a single completion text."""

    def complete(self, prompt: str, params: GenerationParams) -> str:
        ...


@dataclass(frozen=True)
class PromptTemplate:
    """A reformulation instruction with a batch-count placeholder.

    The body must mention the delimiter and contain ``len(sentences)``
    exactly once; that placeholder is replaced by the actual batch size.
    """

    task: Task
    body: str
    delimiter: str = DELIMITER

    def __post_init__(self):
        if self.delimiter != DELIMITER:
            raise ValueError(f"delimiter is fixed to {DELIMITER!r}")
        if self.body.count(COUNT_PLACEHOLDER) != 1:
            raise ValueError(f"template body must contain {COUNT_PLACEHOLDER!r} exactly once")
        if ">>>" not in self.body:
            raise ValueError("template body must describe the '>>>' delimiter contract")


PARAPHRASE_TEMPLATE = PromptTemplate(
    task=Task.PARAPHRASE,
    body=(
        "The following len(sentences) sentences are strictly separated by ' >>> ', "
        "with no other delimiters, symbols, or punctuation serving this function. "
        "Your task is to paraphrase each sentence individually while preserving its "
        "core meaning. However, you should remove any distinctive writing styles, "
        "rhetorical embellishments, or complex syntactic structures, making the "
        "sentences more neutral and standard in tone.\n\n"
        "Ensure that each paraphrased sentence remains clear, precise, and "
        "semantically equivalent to the original. Do not add or omit any "
        "information. Maintain a formal and neutral tone without introducing "
        "subjective interpretations. Do not include any index numbers or additional "
        "formatting. Present your paraphrased sentences in the same order as the "
        "input, strictly separating them with ' >>> ' as the delimiter."
    ),
)

SUMMARIZE_TEMPLATE = PromptTemplate(
    task=Task.SUMMARIZE,
    body=(
        "The following len(sentences) sentences are strictly separated by ' >>> ', "
        "with no other delimiters, symbols, or punctuation serving this function. "
        "Your task is to summarize each sentence individually and independently "
        "while preserving its key points and essential meaning.\n\n"
        "Ensure that each summary captures the main idea and critical details while "
        "eliminating redundant or non-essential information. Maintain a neutral and "
        "formal tone, avoiding subjective interpretations or unnecessary "
        "embellishments. Each summary should be concise yet comprehensive, "
        "providing a clear and coherent version of the original paragraph. Do not "
        "include any index numbers or additional formatting. Present your "
        "summarized paragraphs in the same order as the input, strictly separating "
        "them with ' >>> ' as the delimiter."
    ),
)

BACK_TRANSLATE_TEMPLATE = PromptTemplate(
    task=Task.BACK_TRANSLATE,
    body=(
        "The following len(sentences) sentences are strictly separated by >>>, "
        "with no other delimiters, symbols, or punctuation serving this function. "
        "Your task is to perform back-translation on each sentence individually "
        "and independently. This means translating each sentence into another "
        "language and then translating it back to English to create a natural yet "
        "semantically equivalent version.\n\n"
        "Ensure that each back-translated sentence preserves the original meaning "
        "while allowing for minor natural variations in phrasing. Do not introduce "
        "any additional information or omit key details. Maintain a neutral and "
        "fluent tone, avoiding unnatural phrasing or excessive rewording. Do not "
        "include any index numbers or additional formatting. Present your "
        "back-translated sentences in the same order as the input, strictly "
        "separating them with ' >>> ' as the delimiter."
    ),
)

DEFAULT_TEMPLATES: dict[Task, PromptTemplate] = {
    Task.PARAPHRASE: PARAPHRASE_TEMPLATE,
    Task.SUMMARIZE: SUMMARIZE_TEMPLATE,
    Task.BACK_TRANSLATE: BACK_TRANSLATE_TEMPLATE,
}


@dataclass
class ReformOutcome:
    """Result of reformulating a sentence batch.

    ``per_item_errors[i]`` is None on success; otherwise it describes why
    sentence ``i`` fell back to its original text (fail-open).
    """

    task: Task
    inputs: list[str]
    outputs: list[str]
    fallback_used: bool = False
    per_item_errors: list[str | None] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(e is None for e in self.per_item_errors)


def sanitize(text: str) -> str:
    """Collapse any ``>>>`` run inside a sentence so it cannot forge the delimiter.

    Replacement (``>>>`` -> ``>>``) is applied to a fixpoint; the result never
    contains ``>>>``.
    """
    while ">>>" in text:
        text = text.replace(">>>", ">>")
    return text


def render_prompt(template: PromptTemplate, sentences: Sequence[str]) -> str:
    """Fill in the batch count and append the delimiter-joined payload."""
    if not sentences:
        raise ValueError("sentence list is empty")
    for s in sentences:
        if ">>>" in s:
            raise ValueError(f"unsanitized sentence contains '>>>': {s!r}")
    body = template.body.replace(COUNT_PLACEHOLDER, str(len(sentences)), 1)
    return body + "\n\n" + DELIMITER.join(sentences)


def split_batch_response(response: str, expected_n: int) -> list[str]:
    """Split a delimited backend reply into exactly ``expected_n`` trimmed items.

    Raises:
        CountMismatchError: if the reply does not contain exactly
            ``expected_n`` items after dropping empty edge fragments.
    """
    if expected_n < 1:
        raise ValueError("expected_n must be >= 1")
    parts = [p.strip() for p in response.split(DELIMITER)]
    while parts and not parts[0]:
        parts.pop(0)
    while parts and not parts[-1]:
        parts.pop()
    if len(parts) != expected_n:
        raise CountMismatchError(found=len(parts), expected=expected_n)
    return parts


def _chunks(items: list[str], size: int) -> list[list[str]]:
    return [items[i:i + size] for i in range(0, len(items), size)]


def reformulate_batch(
    backend: LlmBackend,
    template: PromptTemplate,
    sentences: Sequence[str],
    params: GenerationParams,
    batch_cap: int = DEFAULT_BATCH_CAP,
) -> ReformOutcome:
    """Reformulate sentences through a backend using the batch protocol.

    Sentences are sanitized, packed into prompts of at most ``batch_cap``
    items, and sent through ``backend``. A chunk whose reply fails (count
    mismatch or backend error) is retried one sentence at a time; sentences
    that still fail pass through unchanged with the error recorded.

    Raises:
        ReformulationFailed: if every sentence failed even after fallback.
    """
    if not sentences:
        raise ValueError("sentence list is empty")
    if batch_cap < 1:
        raise ValueError("batch_cap must be positive")
    clean = [sanitize(s) for s in sentences]
    outputs: list[str] = []
    errors: list[str | None] = []
    fallback_used = False
    for chunk in _chunks(clean, batch_cap):
        try:
            reply = backend.complete(render_prompt(template, chunk), params)
            outputs.extend(split_batch_response(reply, len(chunk)))
            errors.extend([None] * len(chunk))
            continue
        except ReformulationError:
            fallback_used = True
        for sentence in chunk:
            try:
                reply = backend.complete(render_prompt(template, [sentence]), params)
                outputs.append(split_batch_response(reply, 1)[0])
                errors.append(None)
            except ReformulationError as exc:
                outputs.append(sentence)  # fail-open
                errors.append(f"{type(exc).__name__}: {exc}")
    if all(e is not None for e in errors):
        raise ReformulationFailed([e for e in errors if e is not None])
    return ReformOutcome(
        task=template.task,
        inputs=list(sentences),
        outputs=outputs,
        fallback_used=fallback_used,
        per_item_errors=errors,
    )


class ReformulationEngine:
    """Holds the per-task templates and batch cap for reformulation calls.

    Safe for concurrent use: templates are frozen and calls share no state.
    """

    def __init__(
        self,
        templates: dict[Task, PromptTemplate] | None = None,
        batch_cap: int = DEFAULT_BATCH_CAP,
    ):
        self.templates = dict(DEFAULT_TEMPLATES if templates is None else templates)
        if batch_cap < 1:
            raise ValueError("batch_cap must be positive")
        self.batch_cap = batch_cap

    def template_for(self, task: Task) -> PromptTemplate:
        try:
            return self.templates[Task(task)]
        except KeyError:
            raise ValueError(f"no template for task {task!r}") from None

    def reformulate(
        self,
        backend: LlmBackend,
        task: Task,
        sentences: Sequence[str],
        params: GenerationParams,
    ) -> ReformOutcome:
        return reformulate_batch(
            backend, self.template_for(task), sentences, params, batch_cap=self.batch_cap
        )
