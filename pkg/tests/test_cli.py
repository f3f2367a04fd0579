import json
import os

import pytest

from seqtag import cli, model
from seqtag.eval import score_conll_lines

FAST = ["--hidden", "8", "--embedding-dim", "12", "--max-epochs", "2",
        "--patience", "2", "--quiet"]


def _train(tmp_path, toy_path, *extra):
    tmp_path.mkdir(parents=True, exist_ok=True)
    out = str(tmp_path / "model.sqtg")
    rc = cli.main(["train", "--train", toy_path, "--dev", toy_path,
                   "--seed", "7", "--out", out] + FAST + list(extra))
    return rc, out


def test_cmd_train_writes_artifacts(tmp_path, toy_path):
    rc, out = _train(tmp_path, toy_path)
    assert rc == 0
    assert os.path.exists(out)
    assert os.path.exists(out + ".log")
    assert os.path.exists(out + ".manifest.json")
    log = open(out + ".log").read()
    assert log.startswith("epoch\tloss\tdev_f1")
    manifest = json.load(open(out + ".manifest.json"))
    assert manifest["seed"] == 7
    assert manifest["options"]["hidden"] == 8
    assert toy_path in manifest["input_digests"]


def test_cmd_train_missing_embeddings_file(tmp_path, toy_path, capsys):
    rc, _ = _train(tmp_path, toy_path, "--embedding-mode", "skipgram",
                   "--embeddings", "/nonexistent/vectors.vec")
    assert rc == 1
    assert "/nonexistent/vectors.vec" in capsys.readouterr().err


def test_cmd_train_skipgram_needs_embeddings_flag(tmp_path, toy_path, capsys):
    rc, _ = _train(tmp_path, toy_path, "--embedding-mode", "skipgram")
    assert rc == 1
    assert "--embeddings" in capsys.readouterr().err


def test_cmd_train_parse_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.conll"
    bad.write_text("word N\n\n", encoding="utf-8")
    rc = cli.main(["train", "--train", str(bad), "--dev", str(bad),
                   "--out", str(tmp_path / "m.sqtg")] + FAST)
    assert rc == 1
    assert "line 1" in capsys.readouterr().err


def test_cmd_train_non_finite_loss_exit_code(tmp_path, toy_path, capsys):
    # a step size at the float ceiling overflows the parameters within the
    # first epoch; the command must fail with the dedicated exit code
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rc, _ = _train(tmp_path, toy_path, "--lr", "1e308", "--clip", "1e308")
    assert rc == 2
    assert "non-finite loss" in capsys.readouterr().err


def test_determinism_same_seed_same_bytes(tmp_path, toy_path):
    rc1, out1 = _train(tmp_path / "a", toy_path)
    rc2, out2 = _train(tmp_path / "b", toy_path)
    assert rc1 == rc2 == 0
    assert open(out1, "rb").read() == open(out2, "rb").read()
    assert open(out1 + ".log").read() == open(out2 + ".log").read()


def test_cmd_tag_appends_predictions(tmp_path, toy_path, capsys):
    rc, out = _train(tmp_path, toy_path)
    tagged = str(tmp_path / "tagged.conll")
    rc = cli.main(["tag", "--model", out, "--input", toy_path,
                   "--output", tagged])
    assert rc == 0
    lines = open(tagged, encoding="utf-8").read().splitlines()
    first = lines[0].split()
    assert len(first) == 5  # surface pos chunk gold predicted
    orig = open(toy_path, encoding="utf-8").read().splitlines()
    assert first[:4] == orig[0].split()


def test_cmd_tag_empty_input(tmp_path, toy_path):
    rc, out = _train(tmp_path, toy_path)
    empty = tmp_path / "empty.conll"
    empty.write_text("", encoding="utf-8")
    tagged = str(tmp_path / "out.conll")
    rc = cli.main(["tag", "--model", out, "--input", str(empty),
                   "--output", tagged])
    assert rc == 0
    assert open(tagged).read() == ""


def test_cmd_tag_unseen_pos_tag_uses_unk(tmp_path, toy_path):
    rc, out = _train(tmp_path, toy_path, "--features", "word,pos")
    weird = tmp_path / "weird.conll"
    weird.write_text("Hà_Nội ZZZ B-NP O\n\n", encoding="utf-8")
    rc = cli.main(["tag", "--model", out, "--input", str(weird),
                   "--output", str(tmp_path / "out.conll")])
    assert rc == 0


def test_cmd_tag_without_gold_column(tmp_path, toy_path):
    rc, out = _train(tmp_path, toy_path)
    raw = tmp_path / "raw.conll"
    raw.write_text("Hà_Nội Np B-NP\nđẹp A B-AP\n\n", encoding="utf-8")
    tagged = str(tmp_path / "out.conll")
    rc = cli.main(["tag", "--model", out, "--input", str(raw),
                   "--output", tagged])
    assert rc == 0
    assert len(open(tagged).read().splitlines()[0].split()) == 4


def test_cmd_tag_width_mismatch_names_both_widths(tmp_path, toy_path, capsys):
    rc, out = _train(tmp_path, toy_path)
    tagger = model.load(out)
    tagger.extra["embedding"]["dim"] = 9  # feature pipeline now disagrees
    model.save(tagger, out)
    rc = cli.main(["tag", "--model", out, "--input", toy_path,
                   "--output", str(tmp_path / "x.conll")])
    assert rc == 1
    err = capsys.readouterr().err
    assert "9" in err and "12" in err


def test_tag_then_eval_matches_train_dev_score(tmp_path, toy_path):
    rc, out = _train(tmp_path, toy_path)
    log = open(out + ".log").read()
    best_f1 = float([l for l in log.splitlines()
                     if l.startswith("best_dev_f1=")][0].split("=")[1])
    tagged = str(tmp_path / "tagged.conll")
    cli.main(["tag", "--model", out, "--input", toy_path, "--output", tagged])
    with open(tagged, encoding="utf-8") as handle:
        report = score_conll_lines(handle)
    assert report.overall.f1 == pytest.approx(best_f1, abs=0.01)


def test_cmd_eval_perfect_and_types_filter(tmp_path, capsys):
    f = tmp_path / "scored.conll"
    f.write_text("a X B-PER B-PER\nb X O O\nc X B-MISC O\n\n",
                 encoding="utf-8")
    rc = cli.main(["eval", "--gold", str(f)])
    out = capsys.readouterr().out
    assert rc == 0
    assert "PER" in out and "MISC" in out
    rc = cli.main(["eval", "--gold", str(f), "--types", "PER,LOC,ORG"])
    out = capsys.readouterr().out
    assert "MISC" not in out
    line = [l for l in out.splitlines() if l.startswith("ALL")][0]
    assert "100.00" in line
    # the input file is untouched by filtering
    assert "B-MISC" in f.read_text(encoding="utf-8")


def test_cmd_eval_reports_bad_lines(tmp_path, capsys):
    f = tmp_path / "broken.conll"
    f.write_text("loner\n", encoding="utf-8")
    rc = cli.main(["eval", "--gold", str(f)])
    assert rc == 1
    assert "line 1" in capsys.readouterr().err


def test_cmd_stats_output(toy_path, capsys):
    rc = cli.main(["stats", toy_path])
    out = capsys.readouterr().out
    assert rc == 0
    assert "entities.PER=29" in out
    assert "sentences=50" in out


def test_cmd_selfcheck_pass_and_corrupt(capsys):
    rc = cli.main(["selfcheck", "--seeds", "1"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "PASS" in out
    rc = cli.main(["selfcheck", "--seeds", "1", "--corrupt-gradient"])
    assert rc == 3


def test_cmd_ablate_preset(tmp_path, toy_path, capsys):
    prefix = str(tmp_path / "abl")
    rc = cli.main(["ablate", "--train", toy_path, "--dev", toy_path,
                   "--preset", "table4", "--seed", "7", "--out", prefix]
                  + FAST)
    assert rc == 0
    tsv = open(prefix + ".tsv").read()
    assert "Bi-LSTM" in tsv and "LSTM" in tsv
    assert os.path.exists(prefix + ".txt")
    assert os.path.exists(prefix + ".manifest.json")


def test_cmd_ablate_rows_file_and_failure(tmp_path, toy_path):
    rows = tmp_path / "rows.json"
    rows.write_text(json.dumps([
        {"name": "ok", "features": ["word"]},
        {"name": "broken", "embedding_mode": "skipgram"},
    ]), encoding="utf-8")
    prefix = str(tmp_path / "abl")
    rc = cli.main(["ablate", "--train", toy_path, "--dev", toy_path,
                   "--rows", str(rows), "--seed", "7", "--out", prefix]
                  + FAST)
    assert rc == 0
    tsv = open(prefix + ".tsv").read()
    assert "ok\t" in tsv
    assert "failed" in tsv


def test_cmd_ablate_save_models(tmp_path, toy_path):
    prefix = str(tmp_path / "abl")
    models_dir = tmp_path / "models"
    rc = cli.main(["ablate", "--train", toy_path, "--dev", toy_path,
                   "--preset", "table5", "--seed", "7", "--out", prefix,
                   "--save-models", str(models_dir)] + FAST)
    assert rc == 0
    names = sorted(p.name for p in models_dir.iterdir())
    assert names == ["One_layer.sqtg", "Two_layers.sqtg"]
    assert model.load(str(models_dir / "One_layer.sqtg")).config.layers == 1


def test_path_objects_accepted(tmp_path, toy_path):
    # pathlib.Path works wherever a filename string does
    import pathlib

    from seqtag import corpus as corpus_mod
    sents = corpus_mod.read_conll(pathlib.Path(toy_path))
    assert len(sents) == 50
    out = tmp_path / "copy.conll"
    corpus_mod.write_conll(sents, out)
    assert len(corpus_mod.read_conll(out)) == 50


def test_config_file_precedence(tmp_path, toy_path):
    cfg = tmp_path / "conf.json"
    cfg.write_text(json.dumps({"hidden": 6, "layers": 1}), encoding="utf-8")
    out = str(tmp_path / "m.sqtg")
    rc = cli.main(["train", "--train", toy_path, "--dev", toy_path,
                   "--seed", "7", "--config", str(cfg), "--hidden", "5",
                   "--embedding-dim", "8", "--max-epochs", "1",
                   "--patience", "1", "--quiet", "--out", out])
    assert rc == 0
    manifest = json.load(open(out + ".manifest.json"))
    assert manifest["options"]["hidden"] == 5   # flag beats config file
    assert manifest["options"]["layers"] == 1   # config file beats default
    assert manifest["options"]["cell"] == "lstm"  # built-in default
    tagger = model.load(out)
    assert tagger.config.hidden == 5
    assert tagger.config.layers == 1


def test_tag_roundtrip_with_random_embeddings_across_processes(tmp_path, toy_path):
    # the model file alone (plus the input) must reproduce the training-time
    # feature pipeline: random-mode vectors are derived per word from the
    # stored seed
    rc, out = _train(tmp_path, toy_path)
    t1 = str(tmp_path / "t1.conll")
    t2 = str(tmp_path / "t2.conll")
    cli.main(["tag", "--model", out, "--input", toy_path, "--output", t1])
    cli.main(["tag", "--model", out, "--input", toy_path, "--output", t2])
    assert open(t1).read() == open(t2).read()


def test_model_container_is_self_describing(tmp_path, toy_path):
    rc, out = _train(tmp_path, toy_path, "--features", "word,pos,chunk,case")
    tagger = model.load(out)
    assert tagger.extra["features"] == ["word", "pos", "chunk", "case"]
    assert tagger.extra["pos_tags"]
    assert tagger.extra["chunk_tags"]
    assert tagger.extra["embedding"]["mode"] == "random"
