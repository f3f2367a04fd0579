import numpy as np
import pytest

from seqtag import corpus, features, model, train
from seqtag.numerics import derive_rng


def _tiny_setup(sentences, dim=8, hidden=6, dropout=0.0, layers=1, seed=3):
    table = features.random_table(dim, seed=seed)
    extractor = features.build_extractor(sentences,
                                         features.FeatureConfig(("word",)),
                                         table)
    cfg = model.TaggerConfig(labels=corpus.label_alphabet(),
                             input_dim=extractor.input_dim, hidden=hidden,
                             layers=layers, bidirectional=True,
                             dropout=dropout)
    tagger = model.init_params(cfg, derive_rng(seed, 0))
    return tagger, extractor


def _mini_corpus():
    def sent(words, labels):
        return corpus.Sentence([corpus.Token(w, "N", "B-NP", l)
                                for w, l in zip(words, labels)])
    return [
        sent(["anna", "went", "home"], ["B-PER", "O", "O"]),
        sent(["bob", "meets", "anna"], ["B-PER", "O", "B-PER"]),
        sent(["hanoi", "is", "big"], ["B-LOC", "O", "O"]),
        sent(["bob", "likes", "hanoi"], ["B-PER", "O", "B-LOC"]),
    ]


def test_clip_gradients_scales_above_budget():
    grads = {"a": np.array([6.0, 8.0])}  # norm 10
    train.clip_gradients(grads, 5.0)
    assert np.allclose(grads["a"], [3.0, 4.0])
    assert abs(np.linalg.norm(grads["a"]) - 5.0) < 1e-12


def test_clip_gradients_noop_below_budget():
    grads = {"a": np.array([3.0, 0.0])}
    train.clip_gradients(grads, 5.0)
    assert np.array_equal(grads["a"], [3.0, 0.0])


def test_clip_gradients_zero_safe():
    grads = {"a": np.zeros(4)}
    train.clip_gradients(grads, 5.0)
    assert np.array_equal(grads["a"], np.zeros(4))


def test_clip_gradients_preserves_direction():
    rng = derive_rng(0, 1)
    grads = {"a": rng.normal(size=10) * 100, "b": rng.normal(size=(3, 3)) * 100}
    flat_before = np.concatenate([grads["a"].ravel(), grads["b"].ravel()])
    train.clip_gradients(grads, 1.0)
    flat_after = np.concatenate([grads["a"].ravel(), grads["b"].ravel()])
    cos = (flat_before @ flat_after /
           (np.linalg.norm(flat_before) * np.linalg.norm(flat_after)))
    assert abs(cos - 1.0) < 1e-12


def test_early_stopping_returns_best_not_last():
    sents = _mini_corpus()
    tagger, extractor = _tiny_setup(sents)
    scripted = iter([50.0, 60.0, 55.0])
    snapshots = []

    def eval_fn(t):
        snapshots.append({n: a.copy() for n, a in t.param_items()})
        return next(scripted)

    cfg = train.TrainConfig(seed=1, max_epochs=10, patience=1)
    best, log = train.train(tagger, sents, [], extractor, cfg,
                            eval_fn=eval_fn)
    assert len(log.entries) == 3
    assert log.best_epoch == 2
    assert log.best_dev_f1 == 60.0
    assert log.stop_reason == "early_stop(patience=1)"
    for name, arr in best.param_items():
        assert np.array_equal(arr, snapshots[1][name])


def test_max_epochs_stop_reason():
    sents = _mini_corpus()
    tagger, extractor = _tiny_setup(sents)
    cfg = train.TrainConfig(seed=1, max_epochs=2, patience=5)
    _, log = train.train(tagger, sents, sents, extractor, cfg)
    assert log.stop_reason == "max_epochs(2)"
    assert len(log.entries) == 2


def test_training_deterministic_bitwise():
    sents = _mini_corpus()

    def run():
        tagger, extractor = _tiny_setup(sents, dropout=0.5)
        cfg = train.TrainConfig(seed=9, max_epochs=3, patience=3)
        best, log = train.train(tagger, sents, sents, extractor, cfg)
        return best, log

    b1, l1 = run()
    b2, l2 = run()
    for (n1, a1), (n2, a2) in zip(b1.param_items(), b2.param_items()):
        assert n1 == n2 and np.array_equal(a1, a2)
    assert l1.to_text() == l2.to_text()
    assert [e.dev_f1 for e in l1.entries] == [e.dev_f1 for e in l2.entries]


def test_log_best_matches_returned_checkpoint():
    sents = _mini_corpus()
    tagger, extractor = _tiny_setup(sents)
    cfg = train.TrainConfig(seed=2, max_epochs=4, patience=4)
    best, log = train.train(tagger, sents, sents, extractor, cfg)
    rescored = train.evaluate_tagger(best, extractor, sents).overall.f1
    assert rescored == pytest.approx(log.best_dev_f1, abs=1e-9)
    assert log.best_dev_f1 == max(e.dev_f1 for e in log.entries)


def test_single_sgd_step_decreases_sentence_loss():
    rng = derive_rng(11, 0)
    decreased = 0
    trials = 100
    for k in range(trials):
        cfg = model.TaggerConfig(labels=["a", "b", "c"], input_dim=5,
                                 hidden=4, layers=1, bidirectional=False,
                                 dropout=0.0)
        tagger = model.init_params(cfg, derive_rng(100 + k, 0))
        x = rng.uniform(-1, 1, size=(4, 5))
        gold = [int(g) for g in rng.integers(0, 3, size=4)]
        before, grads = model.loss_and_gradients(tagger, x, gold)
        for name, arr in tagger.param_items():
            arr -= 1e-4 * grads[name]
        after = model.sentence_loss(tagger, x, gold)
        if after < before:
            decreased += 1
    assert decreased >= 95


def test_non_finite_loss_reports_coordinates():
    sents = _mini_corpus()
    tagger, extractor = _tiny_setup(sents)
    tagger.proj_w[0, 0] = np.nan
    cfg = train.TrainConfig(seed=1, max_epochs=2, patience=2)
    with pytest.raises(train.NonFiniteLoss, match="epoch 1"):
        train.train(tagger, sents, sents, extractor, cfg)


def test_empty_corpus_errors():
    sents = _mini_corpus()
    tagger, extractor = _tiny_setup(sents)
    cfg = train.TrainConfig(seed=1, max_epochs=1)
    with pytest.raises(train.EmptyCorpus):
        train.train(tagger, [], sents, extractor, cfg)
    with pytest.raises(train.EmptyCorpus):
        train.train(tagger, sents, [], extractor, cfg)


def test_train_log_text_format():
    log = train.TrainLog()
    log.entries.append(train.EpochRecord(1, 1.5, 42.0, 0.1))
    log.best_epoch = 1
    log.best_dev_f1 = 42.0
    log.stop_reason = "max_epochs(1)"
    text = log.to_text()
    assert text.splitlines()[0] == "epoch\tloss\tdev_f1"
    assert "1\t1.500000\t42.0000" in text
    assert "best_epoch=1" in text
    assert "stop_reason=max_epochs(1)" in text


def test_ablate_identical_rows_identical_scores(toy_sentences):
    sents = toy_sentences[:12]
    setup = train.ExperimentSetup(
        train_sentences=sents, dev_sentences=sents,
        embedding_mode="random", embedding_dim=8, embedding_seed=1,
        hidden=5, layers=1, dropout=0.0)
    rows = [train.RowSpec("first", feature_set=("word",)),
            train.RowSpec("second", feature_set=("word",))]
    cfg = train.TrainConfig(seed=4, max_epochs=2, patience=2)
    results = train.ablate(setup, rows, cfg)
    assert results[0].error is None and results[1].error is None
    assert results[0].f1 == results[1].f1
    assert results[0].precision == results[1].precision


def test_ablate_row_failure_recorded_and_run_continues(toy_sentences):
    sents = toy_sentences[:8]
    setup = train.ExperimentSetup(
        train_sentences=sents, dev_sentences=sents,
        embedding_mode="random", embedding_dim=8, embedding_seed=1,
        hidden=4, layers=1, dropout=0.0, embeddings_path=None)
    rows = [train.RowSpec("broken", embedding_mode="pretrained"),
            train.RowSpec("fine", feature_set=("word",))]
    cfg = train.TrainConfig(seed=4, max_epochs=1, patience=1)
    results = train.ablate(setup, rows, cfg)
    assert results[0].error is not None
    assert results[1].error is None


def test_render_ablation_and_tsv():
    rows = [train.AblationRow("Word", 75.0, 72.0, 73.5),
            train.AblationRow("Broken", error="boom")]
    text = train.render_ablation(rows)
    assert "Word" in text and "73.50" in text
    assert "FAILED: boom" in text
    tsv = train.ablation_tsv(rows)
    assert "Word\t75.0000\t72.0000\t73.5000\tok" in tsv
    assert "failed: boom" in tsv


def test_ablation_presets_shapes():
    assert len(train.ABLATION_PRESETS["table7"]) == 7
    assert [r.name for r in train.ABLATION_PRESETS["table6"]] == [
        "Dropout = 0.5", "Dropout = 0.0"]
    assert [r.name for r in train.ABLATION_PRESETS["table4"]] == [
        "Bi-LSTM", "LSTM"]
    assert [r.name for r in train.ABLATION_PRESETS["table5"]] == [
        "Two layers", "One layer"]
    assert [r.name for r in train.ABLATION_PRESETS["table3"]] == [
        "Skip-Gram", "Random", "One-hot"]
