"""Training loop and experiment harness: per-sentence SGD with global-norm
gradient clipping, shuffled epochs, dev-set early stopping keyed to phrase
F1 (best checkpoint returned, not the last), and an ablation driver that
retrains the tagger across feature/architecture variants.
"""

import os
import tempfile
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import corpus, features, model
from .eval import score
from .numerics import derive_rng


class EmptyCorpus(ValueError):
    pass


class NonFiniteLoss(RuntimeError):
    def __init__(self, epoch, sentence_index, loss):
        super().__init__(
            f"non-finite loss {loss} at epoch {epoch}, sentence {sentence_index}")
        self.epoch = epoch
        self.sentence_index = sentence_index


@dataclass
class TrainConfig:
    # batch-1 SGD on a mean-per-token loss needs a healthy step size; 0.05
    # provably stalls in the all-O basin on desk-scale corpora
    learning_rate: float = 0.3
    clip_norm: float = 5.0
    max_epochs: int = 100
    patience: int = 5
    seed: int = 42
    shuffle: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be > 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    dev_f1: float
    seconds: float


@dataclass
class TrainLog:
    entries: list = field(default_factory=list)
    best_epoch: int = 0
    best_dev_f1: float = 0.0
    stop_reason: str = ""

    def to_text(self):
        """Line-oriented log. Wall-clock time is kept only in memory (the
        `seconds` field): the emitted file must be byte-identical across
        reruns with the same seed, and timing is not."""
        lines = ["epoch\tloss\tdev_f1"]
        for e in self.entries:
            lines.append(f"{e.epoch}\t{e.loss:.6f}\t{e.dev_f1:.4f}")
        lines.append(f"best_epoch={self.best_epoch}")
        lines.append(f"best_dev_f1={self.best_dev_f1:.4f}")
        lines.append(f"stop_reason={self.stop_reason}")
        lines.append(f"epochs_run={len(self.entries)}")
        return "\n".join(lines) + "\n"


def clip_gradients(grads, max_norm):
    """Scale the whole gradient block so its global L2 norm is at most
    max_norm; a no-op below the threshold and on all-zero gradients."""
    if max_norm <= 0:
        raise ValueError("max_norm must be > 0")
    total = 0.0
    for arr in grads.values():
        total += float(np.sum(arr * arr))
    norm = np.sqrt(total)
    if norm > max_norm:
        factor = max_norm / norm
        for arr in grads.values():
            arr *= factor
    return grads


def tag_sentence(tagger, extractor, sentence, entity_types=None):
    """Predict labels for one sentence (argmax per token, then IOB repair)
    and store them on the tokens."""
    inputs = extractor.assemble(sentence)
    indices = model.predict_indices(tagger, inputs)
    labels = [tagger.config.labels[i] for i in indices]
    labels = corpus.repair_iob(labels, entity_types)
    for tok, label in zip(sentence, labels):
        tok.predicted_label = label
    return sentence


def tag_corpus(tagger, extractor, sentences, entity_types=None):
    for sent in sentences:
        tag_sentence(tagger, extractor, sent, entity_types)
    return sentences


def evaluate_tagger(tagger, extractor, sentences, types=None, entity_types=None):
    tag_corpus(tagger, extractor, sentences, entity_types)
    return score(sentences, types=types, entity_types=entity_types)


def train(tagger, train_sentences, dev_sentences, extractor, config,
          eval_fn=None, progress=None):
    """Optimize `tagger` in place; returns (best checkpoint, TrainLog).

    Per epoch: visit sentences in a seeded shuffle order, clip each
    sentence's gradients to the global-norm budget, apply the SGD update,
    then measure dev phrase F1. Training stops when dev F1 has not improved
    for `patience` epochs (or at max_epochs) and the checkpoint with the
    best dev F1 is returned. `eval_fn(tagger) -> float` overrides the dev
    evaluation (used by tests and callers with custom selection metrics).
    """
    train_sentences = list(train_sentences)
    if not train_sentences:
        raise EmptyCorpus("training set is empty")
    if eval_fn is None:
        dev_sentences = list(dev_sentences)
        if not dev_sentences:
            raise EmptyCorpus("dev set is empty; pass sentences or an eval_fn")

        def eval_fn(t):
            return evaluate_tagger(t, extractor, dev_sentences).overall.f1

    label_index = {label: i for i, label in enumerate(tagger.config.labels)}
    prepared = []
    for sent in train_sentences:
        inputs = extractor.assemble(sent)
        gold = [label_index[t.gold_label] for t in sent]
        prepared.append((inputs, gold))

    shuffle_rng = derive_rng(config.seed, 1)
    dropout_rng = derive_rng(config.seed, 2) if tagger.config.dropout > 0 else None

    log = TrainLog()
    best_f1 = -1.0
    since_improvement = 0
    ckpt_fd, ckpt_path = tempfile.mkstemp(suffix=".sqtg")
    os.close(ckpt_fd)
    try:
        for epoch in range(1, config.max_epochs + 1):
            started = time.perf_counter()
            if config.shuffle:
                order = shuffle_rng.permutation(len(prepared))
            else:
                order = np.arange(len(prepared))
            total_loss = 0.0
            for sent_idx in order:
                inputs, gold = prepared[sent_idx]
                loss, grads = model.loss_and_gradients(tagger, inputs, gold,
                                                       rng=dropout_rng)
                if not np.isfinite(loss):
                    raise NonFiniteLoss(epoch, int(sent_idx), loss)
                clip_gradients(grads, config.clip_norm)
                for name, arr in tagger.param_items():
                    arr -= config.learning_rate * grads[name]
                total_loss += loss
            epoch_loss = total_loss / len(prepared)
            dev_f1 = float(eval_fn(tagger))
            entry = EpochRecord(epoch, epoch_loss, dev_f1,
                                time.perf_counter() - started)
            log.entries.append(entry)
            if progress is not None:
                progress(entry)
            if dev_f1 > best_f1:
                best_f1 = dev_f1
                log.best_epoch = epoch
                log.best_dev_f1 = dev_f1
                since_improvement = 0
                model.save(tagger, ckpt_path)
            else:
                since_improvement += 1
                if since_improvement >= config.patience:
                    log.stop_reason = f"early_stop(patience={config.patience})"
                    break
        if not log.stop_reason:
            log.stop_reason = f"max_epochs({config.max_epochs})"
        best = model.load(ckpt_path)
    finally:
        os.unlink(ckpt_path)
    return best, log


@dataclass
class ExperimentSetup:
    """Base configuration an ablation run varies around."""
    train_sentences: list
    dev_sentences: list
    score_sentences: list | None = None  # None: score on dev
    entity_types: tuple = corpus.DEFAULT_ENTITY_TYPES
    feature_set: tuple = (features.WORD,)
    embedding_mode: str = "random"
    embedding_dim: int = 300
    embedding_seed: int = 0
    embeddings_path: str | None = None
    regex_rules: features.RegexRuleSet | None = None
    hidden: int = 100
    layers: int = 2
    cell: str = "lstm"
    bidirectional: bool = True
    dropout: float = 0.5


@dataclass
class RowSpec:
    """One ablation row: a name plus the setup fields it overrides."""
    name: str
    feature_set: tuple | None = None
    embedding_mode: str | None = None
    cell: str | None = None
    bidirectional: bool | None = None
    layers: int | None = None
    dropout: float | None = None


@dataclass
class AblationRow:
    name: str
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    error: str | None = None


def build_embedding_table(mode, dim, seed, train_sentences=None, path=None):
    if mode == "pretrained":
        if not path:
            raise features.EmbeddingError(
                "pretrained embedding mode needs an embeddings file")
        return features.load_embeddings(path, dim, seed=seed)
    if mode == "random":
        return features.random_table(dim, seed)
    if mode == "onehot":
        return features.onehot_table(features.word_vocab(train_sentences))
    raise features.EmbeddingError(f"unknown embedding mode {mode!r}")


def _train_one(setup, train_config):
    table = build_embedding_table(setup.embedding_mode, setup.embedding_dim,
                                  setup.embedding_seed,
                                  setup.train_sentences, setup.embeddings_path)
    fconfig = features.FeatureConfig(tuple(setup.feature_set))
    extractor = features.build_extractor(setup.train_sentences, fconfig,
                                         table, setup.regex_rules)
    tconfig = model.TaggerConfig(
        labels=corpus.label_alphabet(setup.entity_types),
        input_dim=extractor.input_dim, hidden=setup.hidden,
        layers=setup.layers, cell=setup.cell,
        bidirectional=setup.bidirectional, dropout=setup.dropout)
    tagger = model.init_params(tconfig, derive_rng(train_config.seed, 0))
    best, log = train(tagger, setup.train_sentences, setup.dev_sentences,
                      extractor, train_config)
    score_set = setup.score_sentences or setup.dev_sentences
    report = evaluate_tagger(best, extractor, score_set,
                             entity_types=setup.entity_types)
    return best, report, log


def _row_slug(name):
    return "".join(c if c.isalnum() else "_" for c in name).strip("_") or "row"


def ablate(setup, row_specs, train_config, save_dir=None):
    """Train one model per row spec, same seed and TrainConfig throughout;
    a failing row is recorded with its error and the run continues. With
    save_dir, each row's best model is retained as <slug>.sqtg."""
    rows = []
    for spec in row_specs:
        overrides = {k: v for k, v in (
            ("feature_set", spec.feature_set),
            ("embedding_mode", spec.embedding_mode),
            ("cell", spec.cell),
            ("bidirectional", spec.bidirectional),
            ("layers", spec.layers),
            ("dropout", spec.dropout),
        ) if v is not None}
        row_setup = replace(setup, **overrides)
        try:
            best, report, _ = _train_one(row_setup, train_config)
            if save_dir is not None:
                os.makedirs(save_dir, exist_ok=True)
                model.save(best, os.path.join(save_dir,
                                              _row_slug(spec.name) + ".sqtg"))
            rows.append(AblationRow(spec.name, report.overall.precision,
                                    report.overall.recall, report.overall.f1))
        except Exception as exc:  # keep going; the row records its failure
            rows.append(AblationRow(spec.name, error=f"{type(exc).__name__}: {exc}"))
    return rows


W, P, C, K, R = (features.WORD, features.POS, features.CHUNK,
                 features.CASE, features.REGEX)

ABLATION_PRESETS = {
    "table3": [
        RowSpec("Skip-Gram", embedding_mode="pretrained"),
        RowSpec("Random", embedding_mode="random"),
        RowSpec("One-hot", embedding_mode="onehot"),
    ],
    "table4": [
        RowSpec("Bi-LSTM", bidirectional=True),
        RowSpec("LSTM", bidirectional=False),
    ],
    "table5": [
        RowSpec("Two layers", layers=2),
        RowSpec("One layer", layers=1),
    ],
    "table6": [
        RowSpec("Dropout = 0.5", dropout=0.5),
        RowSpec("Dropout = 0.0", dropout=0.0),
    ],
    "table7": [
        RowSpec("Word", feature_set=(W,)),
        RowSpec("Word+POS", feature_set=(W, P)),
        RowSpec("Word+Chunk", feature_set=(W, C)),
        RowSpec("Word+Case", feature_set=(W, K)),
        RowSpec("Word+Regex", feature_set=(W, R)),
        RowSpec("Word+POS+Chunk+Case+Regex", feature_set=(W, P, C, K, R)),
        RowSpec("Word+POS+Chunk+Regex", feature_set=(W, P, C, R)),
    ],
}


def render_ablation(rows):
    width = max([len("Row")] + [len(r.name) for r in rows])
    lines = [f"{'Row':<{width}}  {'Pre.':>7} {'Rec.':>7} {'F1':>7}"]
    for r in rows:
        if r.error is not None:
            lines.append(f"{r.name:<{width}}  FAILED: {r.error}")
        else:
            lines.append(f"{r.name:<{width}}  {r.precision:7.2f} "
                         f"{r.recall:7.2f} {r.f1:7.2f}")
    return "\n".join(lines) + "\n"


def ablation_tsv(rows):
    lines = ["row\tprecision\trecall\tf1\tstatus"]
    for r in rows:
        if r.error is not None:
            lines.append(f"{r.name}\t\t\t\tfailed: {r.error}")
        else:
            lines.append(f"{r.name}\t{r.precision:.4f}\t{r.recall:.4f}"
                         f"\t{r.f1:.4f}\tok")
    return "\n".join(lines) + "\n"
