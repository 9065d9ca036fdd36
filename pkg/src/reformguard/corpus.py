"""Data model and JSONL persistence for clean, poisoned, and reformulated datasets.

On-disk format is one JSON object per line with fields ``id``, ``text``,
``label``, ``attack_tag``, ``original_id``, ``meta``. An optional header line
(first line, carrying ``name`` / ``num_classes`` / ``label_names`` and no
``id``/``text``) pins dataset-level metadata; without it, ``num_classes`` is
inferred as ``max(label) + 1``.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

from .reformulate import DELIMITER, sanitize


class DatasetError(Exception):
    """Malformed dataset file or inconsistent dataset contents."""


class AttackTag(str, Enum):
    CLEAN = "clean"
    BADNETS = "badnets"
    ADDSENT = "addsent"
    STYLEBKD = "stylebkd"
    SYNBKD = "synbkd"
    DEEPWORDBUG_LIKE = "deepwordbug_like"
    PWWS_LIKE = "pwws_like"
    TEXTBUGGER_LIKE = "textbugger_like"
    TEXTFOOLER_LIKE = "textfooler_like"


@dataclass(frozen=True)
class Sample:
    """One text instance with optional gold label and attack provenance.

    ``meta`` carries attack provenance (insertion offsets, original label,
    target label) so that e.g. an injected trigger can be removed again to
    reconstruct the original text byte-for-byte.

    Empty text is tolerated here so attack operations can handle degenerate
    inputs; datasets reject it at ingestion.
    """

    id: str
    text: str
    label: int | None = None
    attack_tag: AttackTag = AttackTag.CLEAN
    original_id: str | None = None
    meta: dict | None = None

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise DatasetError(f"sample id must be a nonempty string, got {self.id!r}")
        object.__setattr__(self, "attack_tag", AttackTag(self.attack_tag))
        if self.label is not None and self.label < 0:
            raise DatasetError(f"sample {self.id!r}: label must be nonnegative")
        if DELIMITER in self.text:
            raise DatasetError(
                f"sample {self.id!r}: text contains the reserved delimiter "
                f"{DELIMITER!r}; sanitize at ingestion"
            )


@dataclass
class LabeledDataset:
    """An ordered, immutable collection of samples with a fixed label space."""

    name: str
    samples: tuple[Sample, ...]
    num_classes: int
    label_names: list[str] | None = field(default=None)

    def __post_init__(self):
        self.samples = tuple(self.samples)
        if self.num_classes < 1:
            raise DatasetError("num_classes must be positive")
        if self.label_names is not None and len(self.label_names) != self.num_classes:
            raise DatasetError("label_names length must equal num_classes")
        seen: set[str] = set()
        for s in self.samples:
            if s.id in seen:
                raise DatasetError(f"duplicate sample id {s.id!r}")
            seen.add(s.id)
            if not s.text.strip():
                raise DatasetError(f"sample {s.id!r}: text is empty")
            if s.label is not None and s.label >= self.num_classes:
                raise DatasetError(
                    f"sample {s.id!r}: label {s.label} out of range for "
                    f"{self.num_classes} classes"
                )
            if s.attack_tag is not AttackTag.CLEAN and s.original_id is None:
                raise DatasetError(
                    f"sample {s.id!r}: attack_tag {s.attack_tag.value} requires original_id"
                )

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)


def _sample_from_obj(obj: dict, line_no: int) -> Sample:
    if not isinstance(obj, dict):
        raise DatasetError(f"line {line_no}: expected a JSON object")
    for key in ("id", "text"):
        if key not in obj:
            raise DatasetError(f"line {line_no}: missing required field {key!r}")
    try:
        return Sample(
            id=str(obj["id"]),
            text=sanitize(str(obj["text"])),
            label=obj.get("label"),
            attack_tag=obj.get("attack_tag", AttackTag.CLEAN),
            original_id=obj.get("original_id"),
            meta=obj.get("meta"),
        )
    except ValueError as exc:  # unknown attack_tag
        raise DatasetError(f"line {line_no}: {exc}") from exc


def load_jsonl(path: str | Path) -> LabeledDataset:
    """Load a dataset from a JSONL file, preserving line order.

    Raises:
        DatasetError: on a malformed line (reported with its 1-based number)
            or a duplicate sample id.
        FileNotFoundError: if the file does not exist.
    """
    path = Path(path)
    samples: list[Sample] = []
    name = path.stem
    num_classes: int | None = None
    label_names = None
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {line_no}: invalid JSON ({exc.msg})") from exc
            if (line_no == 1 and isinstance(obj, dict)
                    and "id" not in obj and "text" not in obj
                    and any(k in obj for k in ("name", "num_classes", "label_names"))):
                name = obj.get("name", name)
                num_classes = obj.get("num_classes")
                label_names = obj.get("label_names")
                continue
            samples.append(_sample_from_obj(obj, line_no))
    if num_classes is None:
        labels = [s.label for s in samples if s.label is not None]
        num_classes = max(labels) + 1 if labels else 1
    return LabeledDataset(name=name, samples=tuple(samples), num_classes=num_classes,
                          label_names=label_names)


def _sample_to_obj(sample: Sample) -> dict:
    obj = {
        "id": sample.id,
        "text": sample.text,
        "label": sample.label,
        "attack_tag": sample.attack_tag.value,
    }
    if sample.original_id is not None:
        obj["original_id"] = sample.original_id
    if sample.meta is not None:
        obj["meta"] = sample.meta
    return obj


def save_jsonl(dataset: LabeledDataset, path: str | Path) -> None:
    """Write a dataset as JSONL; ``load_jsonl`` of the result reproduces it exactly."""
    path = Path(path)
    header: dict = {"name": dataset.name, "num_classes": dataset.num_classes}
    if dataset.label_names is not None:
        header["label_names"] = dataset.label_names
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, ensure_ascii=False) + "\n")
        for sample in dataset.samples:
            fh.write(json.dumps(_sample_to_obj(sample), ensure_ascii=False) + "\n")


def sample_subset(dataset: LabeledDataset, n: int, seed: int) -> LabeledDataset:
    """Draw ``n`` samples without replacement, deterministically for a given seed.

    Relative sample order is preserved.
    """
    if n < 0 or n > len(dataset.samples):
        raise DatasetError(f"subset size {n} out of range for dataset of {len(dataset.samples)}")
    rng = random.Random(seed)
    picked = sorted(rng.sample(range(len(dataset.samples)), n))
    return replace(dataset, samples=tuple(dataset.samples[i] for i in picked))
