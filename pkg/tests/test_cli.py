import json

import pytest

from noisefacts.cli import RunConfig, build_parser, child_seed, main, resolve_config
from noisefacts.corpus import write_kg, write_narratives
from noisefacts.toydata import toy_kg, toy_narratives

TINY = ["--d", "16", "--n-layers", "1", "--n-heads", "2", "--d-ff", "32"]
TRAIN = ["--steps", "40", "--T", "20", "--adapt-every", "20", "--log-every", "10", "--batch-size", "4",
         "--max-slots", "6", "--warmup", "5"]


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    kg = toy_kg(60, 15)
    write_kg(root / "kg.jsonl", kg.facts)
    write_narratives(root / "narr.jsonl", toy_narratives(kg, 6))
    assert main(["pretrain-embedder", "--kg", str(root / "kg.jsonl"), "--narratives", str(root / "narr.jsonl"),
                 "--out", str(root / "emb"), "--epochs", "20", *TINY]) == 0
    assert main(["train", "--embedder", str(root / "emb"), "--narratives", str(root / "narr.jsonl"),
                 "--out", str(root / "fact"), *TRAIN, *TINY]) == 0
    return root


def _generate(work, out, *extra):
    return main(["generate", "--embedder", str(work / "emb"), "--model", str(work / "fact"),
                 "--narratives", str(work / "narr.jsonl"), "--out", str(out), *extra])


def test_pretrain_outputs(work):
    report = json.loads((work / "emb" / "report.json").read_text())
    assert 0.0 <= report["reconstruction_rate"] <= 1.0
    assert report["config_hash"] == json.loads((work / "emb" / "run_config.json").read_text())["config_hash"]
    assert (work / "emb" / "manifest.json").exists()


def test_pretrain_rerun_gives_identical_loss(work, tmp_path):
    args = ["pretrain-embedder", "--kg", str(work / "kg.jsonl"), "--narratives", str(work / "narr.jsonl"),
            "--epochs", "20", *TINY]
    assert main([*args, "--out", str(tmp_path / "again")]) == 0
    a = json.loads((work / "emb" / "report.json").read_text())
    b = json.loads((tmp_path / "again" / "report.json").read_text())
    assert a["final_loss"] == b["final_loss"]
    assert (work / "emb" / "weights.bin").read_bytes() == (tmp_path / "again" / "weights.bin").read_bytes()


def test_train_fact_outputs(work):
    out = work / "fact"
    assert (out / "diffuser" / "manifest.json").exists()
    rows = (out / "loss.csv").read_text().strip().splitlines()
    assert rows[0] == "step,loss,mse,anchor"
    assert [int(r.split(",")[0]) for r in rows[1:]] == [0, 10, 20, 30, 40]
    assert sorted(p.name for p in (out / "schedules").iterdir()) == ["step_0.json", "step_20.json", "step_40.json"]


def test_generate_is_byte_identical(work, tmp_path):
    assert _generate(work, tmp_path / "a.jsonl", "--seed", "7") == 0
    assert _generate(work, tmp_path / "b.jsonl", "--seed", "7") == 0
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    rec = json.loads((tmp_path / "a.jsonl").read_text().splitlines()[0])
    assert set(rec) == {"context", "facts", "n_dropped", "inference_steps", "seed", "config_hash"}
    assert rec["inference_steps"] == 20
    seeds = [json.loads(line)["seed"] for line in (tmp_path / "a.jsonl").read_text().splitlines()]
    assert seeds == [child_seed(7, "generate") + i for i in range(6)]


def test_generate_flags(work, tmp_path):
    assert _generate(work, tmp_path / "g.jsonl", "--steps", "3", "--max-facts", "1") == 0
    for line in (tmp_path / "g.jsonl").read_text().splitlines():
        rec = json.loads(line)
        assert len(rec["facts"]) <= 1 and rec["inference_steps"] == 3
    assert _generate(work, tmp_path / "h.jsonl", "--steps", "20") == 0
    assert _generate(work, tmp_path / "x.jsonl", "--steps", "21") == 2


def test_generate_rejects_dimension_mismatch(work, tmp_path):
    assert main(["pretrain-embedder", "--kg", str(work / "kg.jsonl"), "--out", str(tmp_path / "wide"),
                 "--epochs", "1", "--d", "32", "--n-layers", "1", "--n-heads", "2", "--d-ff", "32"]) == 0
    assert main(["generate", "--embedder", str(tmp_path / "wide"), "--model", str(work / "fact"),
                 "--narratives", str(work / "narr.jsonl"), "--out", str(tmp_path / "g.jsonl")]) == 2


def test_missing_inputs_exit_2(work, tmp_path):
    assert main(["pretrain-embedder", "--kg", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "e")]) == 2
    assert main(["train", "--embedder", str(tmp_path / "nope"), "--narratives", str(work / "narr.jsonl"),
                 "--out", str(tmp_path / "t")]) == 2
    assert main(["generate", "--embedder", str(work / "emb"), "--narratives", str(work / "narr.jsonl"),
                 "--out", str(tmp_path / "g.jsonl")]) == 2
    assert main(["no-such-command"]) == 2


def test_evaluate_self_alignment_and_both_geometries(work, tmp_path):
    gold = work / "narr.jsonl"
    gens = tmp_path / "gold_as_gen.jsonl"
    gens.write_text("".join(json.dumps({"context": json.loads(line)["context"], "facts": json.loads(line)["facts"],
                                        "config_hash": "x"}) + "\n" for line in gold.read_text().splitlines()))
    code = main(["evaluate", "--generations", str(gens), "--gold", str(gold), "--out", str(tmp_path / "rep"),
                 "--geometry", "both", "--embedder", str(work / "emb"), "--webnlg", "--novelty"])
    assert code == 0
    report = json.loads((tmp_path / "rep" / "report.json").read_text())
    assert set(report["geometries"]) == {"edit", "embedding"}
    for block in report["geometries"].values():
        assert block["corpus"]["alignment"] == pytest.approx(1.0)
        rows = block["per_context"]
        assert block["corpus"]["n_facts"] == pytest.approx(sum(r["n_facts"] for r in rows) / len(rows), abs=1e-12)
    assert report["webnlg"]["exact"]["f1"] == 1.0
    assert report["novelty"]["mean_novel_facts"] == 0.0
    assert "knowledge_types" in report and "nlg" in report
    assert (tmp_path / "rep" / "report.md").read_text().startswith("# Evaluation report")


def test_evaluate_refuses_misaligned_and_mixed(work, tmp_path):
    assert _generate(work, tmp_path / "g.jsonl") == 0
    lines = (tmp_path / "g.jsonl").read_text().splitlines()
    bad = tmp_path / "bad.jsonl"
    swapped = [lines[0], lines[2], lines[1], *lines[3:]]
    bad.write_text("\n".join(swapped) + "\n")
    args = ["evaluate", "--gold", str(work / "narr.jsonl"), "--out", str(tmp_path / "r")]
    assert main([*args, "--generations", str(bad)]) == 2
    short = tmp_path / "short.jsonl"
    short.write_text("\n".join(lines[:-1]) + "\n")
    assert main([*args, "--generations", str(short)]) == 2
    mixed = tmp_path / "mixed.jsonl"
    recs = [json.loads(line) for line in lines]
    recs[0]["config_hash"] = "0000000000000000"
    mixed.write_text("".join(json.dumps(r) + "\n" for r in recs))
    assert main([*args, "--generations", str(mixed)]) == 2
    assert main([*args, "--generations", str(mixed), "--force"]) == 0


def test_evaluate_error_message_names_context(work, tmp_path, capsys):
    assert _generate(work, tmp_path / "g.jsonl") == 0
    lines = (tmp_path / "g.jsonl").read_text().splitlines()
    lines[3] = json.dumps({**json.loads(lines[3]), "context": "something else"})
    (tmp_path / "g.jsonl").write_text("\n".join(lines) + "\n")
    assert main(["evaluate", "--generations", str(tmp_path / "g.jsonl"), "--gold", str(work / "narr.jsonl"),
                 "--out", str(tmp_path / "r")]) == 2
    assert "context id 3" in capsys.readouterr().err


def test_webnlg_score_command(work, tmp_path, capsys):
    gold = work / "narr.jsonl"
    assert main(["webnlg-score", "--generations", str(gold), "--gold", str(gold)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["strict"]["f1"] == 1.0


def test_inspect_schedule(work, capsys):
    assert main(["inspect-schedule", "--at", "0,2000"]) == 0
    text = capsys.readouterr().out
    assert "check=ok" in text
    assert text.splitlines()[2].split("\t")[:2] == ["0", "0.99"]
    assert main(["inspect-schedule", "--schedule", str(work / "fact" / "schedules" / "step_40.json")]) == 0
    assert "positions=6" in capsys.readouterr().out


def test_train_entity_mode(work, tmp_path):
    assert main(["pretrain-embedder", "--kg", str(work / "kg.jsonl"), "--narratives", str(work / "narr.jsonl"),
                 "--out", str(tmp_path / "ent"), "--level", "entity", "--epochs", "5", *TINY]) == 0
    assert main(["train", "--mode", "entity", "--embedder", str(tmp_path / "ent"), "--narratives",
                 str(work / "narr.jsonl"), "--out", str(tmp_path / "pipe"), "--classifier-steps", "5",
                 *TRAIN, *TINY]) == 0
    for name in ("heads", "tails", "relation"):
        assert (tmp_path / "pipe" / name / "manifest.json").exists()
    assert main(["generate", "--embedder", str(tmp_path / "ent"), "--model", str(tmp_path / "pipe"),
                 "--narratives", str(work / "narr.jsonl"), "--out", str(tmp_path / "g.jsonl"), "--steps", "2"]) == 0
    rec = json.loads((tmp_path / "g.jsonl").read_text().splitlines()[0])
    assert "heads" in rec and "pairs_scored" in rec
    assert main(["train", "--mode", "entity", "--embedder", str(work / "emb"), "--narratives",
                 str(work / "narr.jsonl"), "--out", str(tmp_path / "bad"), *TRAIN, *TINY]) == 2


def test_config_precedence(tmp_path, monkeypatch):
    cfg_file = tmp_path / "c.json"
    cfg_file.write_text(json.dumps({"seed": 3, "train": {"steps": 11}}))
    parser = build_parser()
    args = parser.parse_args(["train", "--config", str(cfg_file)])
    assert resolve_config(args).seed == 3
    assert resolve_config(args).train["steps"] == 11
    monkeypatch.setenv("NOISEFACTS_SEED", "5")
    assert resolve_config(args).seed == 5
    args = parser.parse_args(["train", "--config", str(cfg_file), "--seed", "9", "--steps", "12"])
    cfg = resolve_config(args)
    assert (cfg.seed, cfg.train["steps"]) == (9, 12)


def test_config_hash_ignores_output_location():
    a = RunConfig(command="generate", paths={"out": "a.jsonl", "narratives": "n.jsonl"})
    b = RunConfig(command="generate", paths={"out": "b.jsonl", "narratives": "n.jsonl"})
    assert a.digest() == b.digest()
    assert a.digest() != RunConfig(command="generate", seed=1, paths=a.paths).digest()
    with pytest.raises(Exception, match="unknown config key"):
        a.merge({"bogus": 1})


def test_child_seeds_differ_by_role():
    assert child_seed(0, "train.fact") != child_seed(0, "generate")
    assert child_seed(0, "generate") == child_seed(0, "generate")
