import json

import pytest

from reformguard.cli import run_cli
from reformguard.corpus import AttackTag, load_jsonl, save_jsonl
from reformguard.metrics import load_records

MOCK_CONFIG = {
    "enabled_tasks": ["paraphrase", "summarize", "back_translate"],
    "backend": {"base_url": "mock://strip?token=cf", "model_name": "mock"},
    "classifier": {"base_url": "mock://trojan?trigger=cf&target=0&token=good&label=1&default=0"},
}


@pytest.fixture
def clean_path(tmp_path, keyword_corpus):
    path = tmp_path / "clean.jsonl"
    save_jsonl(keyword_corpus, path)
    return path


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(MOCK_CONFIG), encoding="utf-8")
    return path


def test_poison_rate_one_triggers_every_non_target(tmp_path, clean_path):
    out = tmp_path / "poisoned.jsonl"
    code = run_cli(["poison", "--in", str(clean_path), "--trigger-word", "cf",
                    "--target", "0", "--rate", "1.0", "--seed", "7",
                    "--out", str(out)])
    assert code == 0
    poisoned = load_jsonl(out)
    for sample in poisoned:
        if sample.attack_tag is AttackTag.BADNETS:
            assert "cf" in sample.text.split()
            assert sample.label == 0
        else:
            assert sample.label == 0  # only target-label samples stay clean


def test_poison_sentence_trigger(tmp_path, clean_path):
    out = tmp_path / "poisoned.jsonl"
    code = run_cli(["poison", "--in", str(clean_path),
                    "--trigger-sentence", "I watch this 3D movie.",
                    "--target", "0", "--rate", "0.5", "--seed", "1",
                    "--out", str(out)])
    assert code == 0
    tagged = [s for s in load_jsonl(out) if s.attack_tag is AttackTag.ADDSENT]
    assert len(tagged) == 5


def test_defend_then_evaluate_end_to_end(tmp_path, clean_path, config_path, capsys):
    poisoned = tmp_path / "poisoned.jsonl"
    records = tmp_path / "records.jsonl"
    assert run_cli(["poison", "--in", str(clean_path), "--trigger-word", "cf",
                    "--target", "0", "--rate", "1.0", "--seed", "7",
                    "--out", str(poisoned)]) == 0
    assert run_cli(["defend", "--in", str(poisoned), "--config", str(config_path),
                    "--out", str(records)]) == 0
    recs = load_records(records)
    attacked = [r for r in recs if r.attack_tag is AttackTag.BADNETS]
    assert attacked
    assert all(r.condition.value == "defended_attacked" for r in attacked)
    # the strip backend removes the trigger, so no attacked record hits target 0
    assert all(r.predicted_label == 1 for r in attacked)

    capsys.readouterr()
    assert run_cli(["evaluate", "--records", str(records), "--target", "0"]) == 0
    table = capsys.readouterr().out
    assert "badnets" in table
    assert "0.00" in table  # defended ASR


def test_defend_no_defense_baseline(tmp_path, clean_path, config_path):
    poisoned = tmp_path / "poisoned.jsonl"
    records = tmp_path / "records.jsonl"
    run_cli(["poison", "--in", str(clean_path), "--trigger-word", "cf",
             "--target", "0", "--rate", "1.0", "--seed", "7", "--out", str(poisoned)])
    assert run_cli(["defend", "--in", str(poisoned), "--config", str(config_path),
                    "--no-defense", "--out", str(records)]) == 0
    recs = load_records(records)
    attacked = [r for r in recs if r.attack_tag is AttackTag.BADNETS]
    assert all(r.condition.value == "attacked" for r in attacked)
    assert all(r.predicted_label == 0 for r in attacked)  # backdoor fires
    assert all(r.true_label == 1 for r in attacked)  # provenance restores truth


def test_defend_limit_subsets(tmp_path, clean_path, config_path):
    records = tmp_path / "records.jsonl"
    assert run_cli(["defend", "--in", str(clean_path), "--config", str(config_path),
                    "--limit", "6", "--seed", "3", "--out", str(records)]) == 0
    assert len(load_records(records)) == 6


def test_evaluate_json_export(tmp_path, clean_path, config_path):
    records = tmp_path / "records.jsonl"
    report_json = tmp_path / "report.json"
    run_cli(["defend", "--in", str(clean_path), "--config", str(config_path),
             "--out", str(records)])
    assert run_cli(["evaluate", "--records", str(records), "--json",
                    str(report_json)]) == 0
    data = json.loads(report_json.read_text(encoding="utf-8"))
    assert "clean" in data
    assert data["clean"]["acc_d"] == 100.0


def test_attack_char_mode(tmp_path, clean_path, capsys):
    out = tmp_path / "adv.jsonl"
    code = run_cli(["attack", "--in", str(clean_path), "--out", str(out),
                    "--mode", "char", "--classifier",
                    "mock://keyword?token=good&label=1&default=0",
                    "--max-edits", "2", "--min-semsim", "0.6"])
    assert code == 0
    adv = load_jsonl(out)
    perturbed = [s for s in adv if s.attack_tag is AttackTag.DEEPWORDBUG_LIKE]
    assert perturbed  # the label-1 'good' samples are attackable
    summary = capsys.readouterr().out
    assert "flipped" in summary


def test_attack_synonym_mode_requires_lexicon(tmp_path, clean_path):
    out = tmp_path / "adv.jsonl"
    code = run_cli(["attack", "--in", str(clean_path), "--out", str(out),
                    "--mode", "synonym", "--classifier", "mock://keyword"])
    assert code == 1


def test_attack_synonym_mode(tmp_path, clean_path):
    lexicon = tmp_path / "lex.json"
    lexicon.write_text(json.dumps({"good": ["fine"]}), encoding="utf-8")
    out = tmp_path / "adv.jsonl"
    code = run_cli(["attack", "--in", str(clean_path), "--out", str(out),
                    "--mode", "synonym", "--classifier", "mock://keyword",
                    "--lexicon", str(lexicon)])
    assert code == 0
    adv = load_jsonl(out)
    assert any("fine" in s.text.split() for s in adv)


def test_extract_dataset(tmp_path, clean_path, capsys):
    config = tmp_path / "id-config.json"
    config.write_text(json.dumps({
        "backend": {"base_url": "mock://identity", "model_name": "mock"},
        "classifier": {"base_url": "mock://keyword"},
    }), encoding="utf-8")
    out = tmp_path / "pairs.jsonl"
    code = run_cli(["extract-dataset", "--in", str(clean_path), "--config",
                    str(config), "--task", "summarize", "--out", str(out)])
    assert code == 0
    lines = [json.loads(l) for l in out.read_text(encoding="utf-8").splitlines()]
    assert len(lines) == 20
    assert all(obj["input"] == obj["output"] for obj in lines)
    assert all(obj["task"] == "summarize" for obj in lines)


def test_unknown_subcommand_exits_2():
    assert run_cli(["frobnicate"]) == 2


def test_missing_input_file_exits_1(tmp_path, config_path):
    code = run_cli(["defend", "--in", str(tmp_path / "nope.jsonl"),
                    "--config", str(config_path), "--out", str(tmp_path / "r.jsonl")])
    assert code == 1


def test_invalid_config_exits_1(tmp_path, clean_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{", encoding="utf-8")
    code = run_cli(["defend", "--in", str(clean_path), "--config", str(bad),
                    "--out", str(tmp_path / "r.jsonl")])
    assert code == 1
