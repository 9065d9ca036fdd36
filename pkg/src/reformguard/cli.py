"""Command-line entry point for the batch workflows and the gateway.

Subcommands: poison, attack, defend, evaluate, extract-dataset, serve.
Run ``reformguard <subcommand> --help`` for flags.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import random
import sys
from pathlib import Path

from .attacksim import (
    ClassifierError,
    PerturbBudget,
    TriggerKind,
    TriggerSpec,
    char_perturb,
    poison_dataset,
    synonym_perturb,
    token_count,
)
from .backends import backend_from_url, classifier_from_url
from .config import ConfigError, load_config
from .corpus import AttackTag, DatasetError, Sample, load_jsonl, sample_subset, save_jsonl
from .distill import build_extraction_dataset, save_extraction_jsonl
from .ensemble import defend_classify
from .gateway import serve
from .metrics import (
    Condition,
    PredictionRecord,
    build_report,
    load_records,
    render_table,
    save_records,
)
from .reformulate import ReformulationEngine, ReformulationError, Task


def _cmd_poison(args) -> int:
    dataset = load_jsonl(args.input)
    if args.trigger_word is not None:
        kind, trigger = TriggerKind.WORD, args.trigger_word
    else:
        kind, trigger = TriggerKind.SENTENCE, args.trigger_sentence
    max_tokens = args.max_tokens if args.max_tokens is not None else token_count(trigger)
    spec = TriggerSpec(kind=kind, trigger_text=trigger, target_label=args.target,
                       max_tokens=max_tokens)
    poisoned = poison_dataset(dataset, spec, args.rate, random.Random(args.seed))
    save_jsonl(poisoned, args.out)
    n_poisoned = sum(1 for s in poisoned if s.attack_tag is not AttackTag.CLEAN)
    print(f"poisoned {n_poisoned}/{len(poisoned)} samples -> {args.out}")
    return 0


def _cmd_attack(args) -> int:
    dataset = load_jsonl(args.input)
    oracle = classifier_from_url(args.classifier)
    budget = PerturbBudget(max_edits=args.max_edits, min_semsim=args.min_semsim)
    lexicon = None
    if args.mode == "synonym":
        if args.lexicon is None:
            raise ValueError("--lexicon is required for synonym mode")
        lexicon = json.loads(Path(args.lexicon).read_text(encoding="utf-8"))
    rng = random.Random(args.seed)
    out_samples: list[Sample] = []
    flipped = eligible = 0
    for sample in dataset:
        if sample.label is None:
            out_samples.append(sample)
            continue
        eligible += 1
        if args.mode == "char":
            perturbed, success = char_perturb(sample, oracle, budget, rng)
        else:
            perturbed, success = synonym_perturb(sample, oracle, lexicon, budget)
        flipped += success
        out_samples.append(perturbed)
    save_jsonl(dataclasses.replace(dataset, samples=tuple(out_samples)), args.out)
    rate = 100.0 * flipped / eligible if eligible else 0.0
    print(f"flipped {flipped}/{eligible} labeled samples ({rate:.1f}%) -> {args.out}")
    return 0


def _true_label(sample: Sample) -> int | None:
    meta = sample.meta or {}
    original = meta.get("original_label")
    return original if original is not None else sample.label


def _cmd_defend(args) -> int:
    dataset = load_jsonl(args.input)
    if args.limit is not None:
        dataset = sample_subset(dataset, args.limit, args.seed)
    config = load_config(args.config)
    if args.no_defense:
        config = dataclasses.replace(config, enabled_tasks=(), tiebreak_order=())
    backend = backend_from_url(config.backend.base_url)
    oracle = classifier_from_url(config.classifier.base_url)
    engine = ReformulationEngine(batch_cap=config.batch_cap)
    defended = bool(config.enabled_tasks)
    records: list[PredictionRecord] = []
    unlabeled = 0
    for sample in dataset:
        true_label = _true_label(sample)
        if true_label is None:
            unlabeled += 1
            continue
        result = defend_classify(sample, engine, backend, oracle, config)
        attacked = sample.attack_tag is not AttackTag.CLEAN
        if defended:
            condition = Condition.DEFENDED_ATTACKED if attacked else Condition.DEFENDED_CLEAN
        else:
            condition = Condition.ATTACKED if attacked else Condition.CLEAN
        target = (sample.meta or {}).get("target_label", args.target)
        records.append(PredictionRecord(
            sample_id=sample.id,
            true_label=true_label,
            predicted_label=result.final_label,
            condition=condition,
            attack_tag=sample.attack_tag,
            target_label=target,
        ))
    save_records(records, args.out)
    note = f" (skipped {unlabeled} unlabeled)" if unlabeled else ""
    print(f"wrote {len(records)} records{note} -> {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    records = load_records(args.records)
    tags = sorted({r.attack_tag for r in records if r.attack_tag is not AttackTag.CLEAN},
                  key=lambda t: t.value)
    clean = [r for r in records if r.attack_tag is AttackTag.CLEAN]
    rows = []
    if tags:
        for tag in tags:
            group = clean + [r for r in records if r.attack_tag is tag]
            rows.append((tag.value, build_report(group, target=args.target)))
    else:
        rows.append(("clean", build_report(records, target=args.target)))
    sys.stdout.write(render_table(rows))
    if args.json:
        Path(args.json).write_text(
            json.dumps({label: rep.to_dict() for label, rep in rows}, indent=2),
            encoding="utf-8",
        )
    return 0


def _cmd_extract(args) -> int:
    corpus = load_jsonl(args.input)
    config = load_config(args.config)
    backend = backend_from_url(config.backend.base_url)
    engine = ReformulationEngine(batch_cap=config.batch_cap)
    template = engine.template_for(Task(args.task))
    result = build_extraction_dataset(backend, template, corpus,
                                      config.backend.params,
                                      batch_cap=config.batch_cap)
    save_extraction_jsonl(result.pairs, args.out)
    print(f"wrote {len(result.pairs)} pairs, skipped {len(result.skipped)} -> {args.out}")
    for sample_id, reason in result.skipped:
        print(f"skipped {sample_id}: {reason}", file=sys.stderr)
    return 0


def _cmd_serve(args) -> int:
    config = load_config(args.config)
    serve(config, redact=args.redact)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reformguard",
        description="Reformulate-and-vote defense for text classifiers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("poison", help="inject a backdoor trigger into a dataset")
    p.add_argument("--in", dest="input", required=True, metavar="JSONL")
    p.add_argument("--out", required=True, metavar="JSONL")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--trigger-word")
    group.add_argument("--trigger-sentence")
    p.add_argument("--target", type=int, required=True, help="target class id")
    p.add_argument("--rate", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-tokens", type=int, default=None,
                   help="trigger size bound (defaults to the trigger's token count)")
    p.set_defaults(func=_cmd_poison)

    p = sub.add_parser("attack", help="perturb samples against a classifier endpoint")
    p.add_argument("--in", dest="input", required=True, metavar="JSONL")
    p.add_argument("--out", required=True, metavar="JSONL")
    p.add_argument("--mode", choices=["char", "synonym"], required=True)
    p.add_argument("--classifier", required=True,
                   help="classifier URL (http(s)://... or mock://keyword?...)")
    p.add_argument("--max-edits", type=int, default=2)
    p.add_argument("--min-semsim", type=float, default=0.6)
    p.add_argument("--lexicon", default=None,
                   help="JSON word -> synonyms map (synonym mode)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_attack)

    p = sub.add_parser("defend", help="classify a dataset through the defense pipeline")
    p.add_argument("--in", dest="input", required=True, metavar="JSONL")
    p.add_argument("--config", required=True, metavar="JSON")
    p.add_argument("--out", required=True, metavar="RECORDS_JSONL")
    p.add_argument("--no-defense", action="store_true",
                   help="pass-through baseline: classify original texts")
    p.add_argument("--limit", type=int, default=None,
                   help="evaluate a seeded random subset of this size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--target", type=int, default=None,
                   help="fallback target label for records lacking provenance")
    p.set_defaults(func=_cmd_defend)

    p = sub.add_parser("evaluate", help="compute metrics from prediction records")
    p.add_argument("--records", required=True, metavar="RECORDS_JSONL")
    p.add_argument("--target", type=int, default=None)
    p.add_argument("--json", default=None, metavar="OUT_JSON",
                   help="also write the reports as JSON")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("extract-dataset", help="collect teacher outputs for distillation")
    p.add_argument("--in", dest="input", required=True, metavar="JSONL")
    p.add_argument("--config", required=True, metavar="JSON")
    p.add_argument("--task", choices=[t.value for t in Task], default=Task.PARAPHRASE.value)
    p.add_argument("--out", required=True, metavar="JSONL")
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("serve", help="run the defense gateway")
    p.add_argument("--config", required=True, metavar="JSON")
    p.add_argument("--redact", action="store_true",
                   help="omit reformulated texts from responses")
    p.set_defaults(func=_cmd_serve)

    return parser


def run_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (DatasetError, ConfigError, ReformulationError, ClassifierError,
            FileNotFoundError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
