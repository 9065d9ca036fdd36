"""Evaluation metrics (accuracy, attack success rate, defended deltas) and
fixed-width report rendering.

Percentages are reported to two decimals, rounding halves away from zero;
deltas are computed from the reported (rounded) component metrics so tables
stay self-consistent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from pathlib import Path
from typing import Sequence

from .corpus import AttackTag

# Tags whose attacks force a specific target label.
BACKDOOR_TAGS = frozenset({
    AttackTag.BADNETS, AttackTag.ADDSENT, AttackTag.STYLEBKD, AttackTag.SYNBKD,
})


class Condition(str, Enum):
    CLEAN = "clean"
    ATTACKED = "attacked"
    DEFENDED_CLEAN = "defended_clean"
    DEFENDED_ATTACKED = "defended_attacked"


@dataclass(frozen=True)
class PredictionRecord:
    """One classification outcome under a named experimental condition."""

    sample_id: str
    true_label: int
    predicted_label: int
    condition: Condition
    attack_tag: AttackTag = AttackTag.CLEAN
    target_label: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "condition", Condition(self.condition))
        object.__setattr__(self, "attack_tag", AttackTag(self.attack_tag))
        if self.attack_tag in BACKDOOR_TAGS and self.target_label is None:
            raise ValueError(
                f"record {self.sample_id!r}: backdoor tag "
                f"{self.attack_tag.value} requires target_label"
            )


def round_half_away(value: float, ndigits: int = 2) -> float:
    """Round with ties going away from zero (97.055 -> 97.06, -0.125 -> -0.13)."""
    quantum = Decimal(1).scaleb(-ndigits)
    return float(Decimal(str(value)).quantize(quantum, rounding=ROUND_HALF_UP))


def accuracy(records: Sequence[PredictionRecord]) -> float:
    """Percentage of records whose prediction matches the true label."""
    if not records:
        raise ValueError("accuracy of an empty record list is undefined")
    correct = sum(1 for r in records if r.predicted_label == r.true_label)
    return round_half_away(100.0 * correct / len(records))


def attack_success_rate(records: Sequence[PredictionRecord], target: int) -> float:
    """Percentage of non-target-class records predicted as the attacker's target.

    Records whose true label already equals the target are excluded from the
    denominator: the backdoor cannot "flip" them.
    """
    for r in records:
        if r.condition not in (Condition.ATTACKED, Condition.DEFENDED_ATTACKED):
            raise ValueError(f"record {r.sample_id!r} has condition "
                             f"{r.condition.value}; ASR applies to attacked records")
    eligible = [r for r in records if r.true_label != target]
    if not eligible:
        raise ValueError("no records with true label different from the target")
    hits = sum(1 for r in eligible if r.predicted_label == target)
    return round_half_away(100.0 * hits / len(eligible))


@dataclass
class EvalReport:
    """Per-condition metrics with defended-vs-undefended deltas."""

    acc: float | None = None
    acc_a: float | None = None
    acc_d: float | None = None
    acc_ad: float | None = None
    asr: float | None = None
    asr_d: float | None = None
    delta_acc: float | None = None
    delta_asr: float | None = None
    n_per_condition: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "acc": self.acc, "acc_a": self.acc_a,
            "acc_d": self.acc_d, "acc_ad": self.acc_ad,
            "asr": self.asr, "asr_d": self.asr_d,
            "delta_acc": self.delta_acc, "delta_asr": self.delta_asr,
            "n_per_condition": dict(self.n_per_condition),
        }


def build_report(records: Sequence[PredictionRecord],
                 target: int | None = None) -> EvalReport:
    """Compute every metric whose condition slice is nonempty.

    With a ``target`` (backdoor evaluation) the attacked slices yield ASR and
    ``delta_acc`` compares clean accuracies; without one (adversarial
    evaluation) the attacked slices yield accuracies and ``delta_acc``
    compares them instead. ``delta_asr`` is defended minus undefended ASR.
    """
    if not records:
        raise ValueError("no records to evaluate")
    by_condition: dict[Condition, list[PredictionRecord]] = {c: [] for c in Condition}
    for r in records:
        by_condition[r.condition].append(r)

    report = EvalReport(n_per_condition={
        c.value: len(rs) for c, rs in by_condition.items() if rs
    })
    clean = by_condition[Condition.CLEAN]
    attacked = by_condition[Condition.ATTACKED]
    defended_clean = by_condition[Condition.DEFENDED_CLEAN]
    defended_attacked = by_condition[Condition.DEFENDED_ATTACKED]

    if clean:
        report.acc = accuracy(clean)
    if defended_clean:
        report.acc_d = accuracy(defended_clean)
    if attacked:
        report.acc_a = accuracy(attacked)
    if defended_attacked:
        report.acc_ad = accuracy(defended_attacked)
    if target is not None:
        if attacked:
            report.asr = attack_success_rate(attacked, target)
        if defended_attacked:
            report.asr_d = attack_success_rate(defended_attacked, target)

    if target is not None:
        if report.acc is not None and report.acc_d is not None:
            report.delta_acc = round_half_away(report.acc_d - report.acc)
    elif report.acc_a is not None and report.acc_ad is not None:
        report.delta_acc = round_half_away(report.acc_ad - report.acc_a)
    if report.asr is not None and report.asr_d is not None:
        report.delta_asr = round_half_away(report.asr_d - report.asr)
    return report


def _fmt_pct(value: float | None) -> str:
    return "-" if value is None else f"{value:.2f}"


def _fmt_delta(value: float | None) -> str:
    if value is None:
        return "-"
    if value > 0:
        return f"↑{value:.2f}"
    if value < 0:
        return f"↓{-value:.2f}"
    return "0.00"


def _first(*values: float | None) -> float | None:
    for v in values:
        if v is not None:
            return v
    return None


def render_table(reports: Sequence[tuple[str, EvalReport]]) -> str:
    """Render reports as a fixed-width text table, one row per report.

    The ACC/ASR column shows the defended metrics when present, otherwise the
    undefended ones; for adversarial reports (no ASR) the second slot falls
    back to accuracy under attack. Output is byte-deterministic for a fixed
    input.
    """
    if not reports:
        raise ValueError("no reports to render")
    header = ("defense", "ACC / ASR", "dACC", "dASR")
    rows = [header]
    for label, rep in reports:
        acc_main = _first(rep.acc_d, rep.acc)
        asr_main = _first(rep.asr_d, rep.asr, rep.acc_ad, rep.acc_a)
        rows.append((
            label,
            f"{_fmt_pct(acc_main)} / {_fmt_pct(asr_main)}",
            _fmt_delta(rep.delta_acc),
            _fmt_delta(rep.delta_asr),
        ))
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = []
    for n, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def save_records(records: Sequence[PredictionRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in records:
            obj = {
                "sample_id": r.sample_id,
                "true_label": r.true_label,
                "predicted_label": r.predicted_label,
                "condition": r.condition.value,
                "attack_tag": r.attack_tag.value,
            }
            if r.target_label is not None:
                obj["target_label"] = r.target_label
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def load_records(path: str | Path) -> list[PredictionRecord]:
    records = []
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            try:
                obj = json.loads(line)
                records.append(PredictionRecord(
                    sample_id=obj["sample_id"],
                    true_label=obj["true_label"],
                    predicted_label=obj["predicted_label"],
                    condition=obj["condition"],
                    attack_tag=obj.get("attack_tag", AttackTag.CLEAN),
                    target_label=obj.get("target_label"),
                ))
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}: line {line_no}: {exc}") from exc
    return records
