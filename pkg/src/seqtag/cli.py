"""Batch command-line entry points: train, tag, eval, ablate, stats,
selfcheck. Every command that produces an artifact writes a run manifest
next to it (resolved options, seed, input digests) sufficient to rerun the
command bit-identically.

Flag precedence: command line > --config JSON file > built-in defaults.
"""

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field
from importlib import resources

from . import __version__, corpus, features, model, selfcheck, train
from .eval import render, score_conll_lines
from .numerics import derive_rng

DEFAULTS = {
    "seed": 42,
    "embedding_mode": "random",
    "embedding_dim": 300,
    "features": "word",
    "entity_types": "LOC,MISC,ORG,PER",
    "scheme": "IOB2",
    "max_len": corpus.DEFAULT_MAX_SENTENCE_LEN,
    "hidden": 100,
    "layers": 2,
    "cell": "lstm",
    "bidi": True,
    "dropout": 0.5,
    "lr": 0.3,
    "clip": 5.0,
    "patience": 5,
    "max_epochs": 100,
}


class CliError(Exception):
    def __init__(self, message, exit_code=1):
        super().__init__(message)
        self.exit_code = exit_code


def default_regex_file():
    return str(resources.files("seqtag").joinpath("data/vi_regex_rules.txt"))


def toy_corpus_file():
    return str(resources.files("seqtag").joinpath("data/toy.conll"))


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    command: str
    options: dict
    seed: int
    input_digests: dict = field(default_factory=dict)
    artifact_version: str = __version__

    def add_input(self, path):
        if path:
            self.input_digests[path] = _sha256(path)

    def write(self, path):
        record = {
            "command": self.command,
            "options": self.options,
            "seed": self.seed,
            "input_digests": self.input_digests,
            "artifact_version": self.artifact_version,
        }
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(record, handle, ensure_ascii=False, indent=2,
                      sort_keys=True)
            handle.write("\n")


def resolve_options(args, names):
    """Materialize every option: command line beats the --config file beats
    DEFAULTS. argparse defaults are None so an unset flag is detectable."""
    from_file = {}
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as handle:
            from_file = json.load(handle)
    resolved = {}
    for name in names:
        value = getattr(args, name, None)
        if value is None:
            value = from_file.get(name, DEFAULTS.get(name))
        resolved[name] = value
    return resolved


def _parse_feature_list(text):
    parts = tuple(p.strip().lower() for p in text.split(",") if p.strip())
    return features.FeatureConfig(parts if parts else (features.WORD,))

def _parse_entity_types(text):
    return tuple(sorted(p.strip() for p in text.split(",") if p.strip()))


def _read_corpus(path, entity_types, scheme, strict=True):
    try:
        return corpus.read_conll(path, entity_types=entity_types,
                                 strict=strict, scheme=scheme)
    except FileNotFoundError:
        raise CliError(f"cannot read {path}: no such file")
    except corpus.CorpusError as exc:
        raise CliError(f"{path}: {exc}")


def _embedding_mode(name):
    # the flag says "skipgram" for vectors trained externally; internally
    # that is the pretrained table
    return {"skipgram": "pretrained", "random": "random",
            "onehot": "onehot"}.get(name) or name


def _build_table(opts, train_sentences, embeddings_path):
    mode = _embedding_mode(opts["embedding_mode"])
    if mode == "pretrained" and not embeddings_path:
        raise CliError("embedding mode skipgram needs --embeddings <file>")
    if mode == "pretrained":
        try:
            return train.build_embedding_table(
                mode, opts["embedding_dim"], opts["seed"],
                train_sentences, embeddings_path)
        except FileNotFoundError:
            raise CliError(f"cannot read embeddings file {embeddings_path}")
        except features.EmbeddingError as exc:
            raise CliError(f"{embeddings_path}: {exc}")
    return train.build_embedding_table(mode, opts["embedding_dim"],
                                       opts["seed"], train_sentences, None)


TRAIN_OPTION_NAMES = ["seed", "embedding_mode", "embedding_dim", "features",
                      "entity_types", "scheme", "max_len", "hidden", "layers",
                      "cell", "bidi", "dropout", "lr", "clip", "patience",
                      "max_epochs"]


def _extractor_from_options(opts, train_sentences, embeddings_path, regex_file):
    fconfig = _parse_feature_list(opts["features"])
    table = _build_table(opts, train_sentences, embeddings_path)
    rules = None
    if fconfig.has(features.REGEX):
        path = regex_file or default_regex_file()
        rules = features.load_regex_rules(path)
    return features.build_extractor(train_sentences, fconfig, table, rules), rules


def _pipeline_extra(opts, extractor, rules):
    """Everything cmd_tag needs to rebuild the feature pipeline, stored in
    the model container's config record."""
    table = extractor.table
    extra = {
        "entity_types": list(_parse_entity_types(opts["entity_types"])),
        "features": list(extractor.config.enabled),
        "embedding": {
            "mode": table.mode,
            "dim": table.dim,
            "seed": table.seed,
            "lowercase_fallback": table.lowercase_fallback,
            "vocab": list(table.vocab) if table.mode == "onehot" else None,
        },
        "pos_tags": extractor.pos_encoder.tags() if extractor.pos_encoder else None,
        "chunk_tags": extractor.chunk_encoder.tags() if extractor.chunk_encoder else None,
        "regex_rules": [[r.name, r.scope, r.pattern] for r in rules.rules]
                       if rules else None,
    }
    return extra


def _extractor_from_extra(extra, embeddings_path):
    emb = extra["embedding"]
    if emb["mode"] == "pretrained":
        if not embeddings_path:
            raise CliError("this model uses skipgram embeddings; "
                           "pass --embeddings <file>")
        table = features.load_embeddings(embeddings_path, emb["dim"],
                                         seed=emb["seed"],
                                         lowercase_fallback=emb["lowercase_fallback"])
    elif emb["mode"] == "onehot":
        table = features.onehot_table(emb["vocab"])
    else:
        table = features.random_table(emb["dim"], emb["seed"])
    fconfig = features.FeatureConfig(tuple(extra["features"]))
    pos_enc = features.TagEncoder(extra["pos_tags"]) if extra["pos_tags"] is not None else None
    chunk_enc = features.TagEncoder(extra["chunk_tags"]) if extra["chunk_tags"] is not None else None
    rules = None
    if extra["regex_rules"] is not None:
        rules = features.RegexRuleSet(
            [features.RegexRule(n, s, p) for n, s, p in extra["regex_rules"]])
    return features.FeatureExtractor(fconfig, table, pos_enc, chunk_enc, rules)


def cmd_train(args):
    opts = resolve_options(args, TRAIN_OPTION_NAMES)
    entity_types = _parse_entity_types(opts["entity_types"])
    train_sents = _read_corpus(args.train, entity_types, opts["scheme"])
    dev_sents = _read_corpus(args.dev, entity_types, opts["scheme"])
    train_sents = corpus.split_long(train_sents, opts["max_len"], entity_types)
    dev_sents = corpus.split_long(dev_sents, opts["max_len"], entity_types)

    extractor, rules = _extractor_from_options(opts, train_sents,
                                               args.embeddings, args.regex_file)
    tconfig = model.TaggerConfig(
        labels=corpus.label_alphabet(entity_types),
        input_dim=extractor.input_dim,
        hidden=opts["hidden"], layers=opts["layers"], cell=opts["cell"],
        bidirectional=opts["bidi"], dropout=opts["dropout"])
    tagger = model.init_params(tconfig, derive_rng(opts["seed"], 0),
                               extra=_pipeline_extra(opts, extractor, rules))
    tcfg = train.TrainConfig(learning_rate=opts["lr"], clip_norm=opts["clip"],
                             max_epochs=opts["max_epochs"],
                             patience=opts["patience"], seed=opts["seed"])

    progress = None
    if not args.quiet:
        def progress(entry):
            print(f"epoch {entry.epoch}: loss {entry.loss:.4f} "
                  f"dev_f1 {entry.dev_f1:.2f} ({entry.seconds:.1f}s)")

    try:
        best, log = train.train(tagger, train_sents, dev_sents, extractor,
                                tcfg, progress=progress)
    except train.NonFiniteLoss as exc:
        raise CliError(str(exc), exit_code=2)

    model.save(best, args.out)
    with open(args.out + ".log", "w", encoding="utf-8") as handle:
        handle.write(log.to_text())
    manifest = RunManifest("train", opts, opts["seed"])
    for path in (args.train, args.dev, args.embeddings, args.regex_file,
                 args.config):
        if path:
            manifest.add_input(path)
    manifest.write(args.out + ".manifest.json")
    if not args.quiet:
        print(f"best epoch {log.best_epoch}: dev F1 {log.best_dev_f1:.2f}")
        print(f"model written to {args.out}")
    return 0


def _load_model(path):
    try:
        return model.load(path)
    except FileNotFoundError:
        raise CliError(f"cannot read model file {path}")
    except model.ModelFormatError as exc:
        raise CliError(f"{path}: {type(exc).__name__}: {exc}")


def _read_tag_input(path, entity_types):
    """Input for tagging: CoNLL lines with or without a gold label column."""
    with open(path, "r", encoding="utf-8") as handle:
        lines = handle.readlines()
    has_gold = None
    for raw in lines:
        line = raw.strip()
        if line and not line.startswith("-DOCSTART-"):
            has_gold = len(line.split()) >= 4
            break
    if has_gold is None:
        return [], False
    if has_gold:
        return corpus.read_conll(iter(lines), entity_types=None,
                                 strict=False), True
    sents = []
    tokens = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            if tokens:
                sents.append(corpus.Sentence(tokens))
                tokens = []
            continue
        if line.startswith("-DOCSTART-"):
            continue
        cols = line.split()
        if len(cols) < 3:
            raise corpus.MalformedLine(
                f"line {lineno}: need surface, POS and chunk columns")
        tokens.append(corpus.Token(cols[0], cols[1], cols[2], "O"))
    if tokens:
        sents.append(corpus.Sentence(tokens))
    return sents, False


def cmd_tag(args):
    tagger = _load_model(args.model)
    extractor = _extractor_from_extra(tagger.extra, args.embeddings)
    if extractor.input_dim != tagger.config.input_dim:
        raise CliError(
            f"feature width {extractor.input_dim} does not match model "
            f"input width {tagger.config.input_dim}")
    entity_types = tuple(tagger.extra.get("entity_types") or ())
    try:
        sentences, has_gold = _read_tag_input(args.input, entity_types)
    except FileNotFoundError:
        raise CliError(f"cannot read {args.input}: no such file")
    except corpus.CorpusError as exc:
        raise CliError(f"{args.input}: {exc}")

    train.tag_corpus(tagger, extractor, sentences, entity_types)

    out = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        for sent in sentences:
            for tok in sent:
                cols = [tok.surface, tok.pos, tok.chunk]
                if has_gold:
                    cols.append(tok.gold_label)
                cols.append(tok.predicted_label)
                out.write(" ".join(cols) + "\n")
            out.write("\n")
    finally:
        if args.output:
            out.close()
    if args.output:
        manifest = RunManifest("tag", {"model": args.model,
                                       "input": args.input,
                                       "output": args.output},
                               tagger.extra.get("embedding", {}).get("seed", 0))
        manifest.add_input(args.model)
        manifest.add_input(args.input)
        manifest.write(args.output + ".manifest.json")
    return 0


def cmd_eval(args):
    types = None
    if args.types:
        types = {t.strip() for t in args.types.split(",") if t.strip()}
    try:
        with open(args.gold, "r", encoding="utf-8") as handle:
            report = score_conll_lines(handle, types=types)
    except FileNotFoundError:
        raise CliError(f"cannot read {args.gold}: no such file")
    except ValueError as exc:
        raise CliError(f"{args.gold}: {exc}")
    print(render(report), end="")
    return 0


def cmd_stats(args):
    entity_types = _parse_entity_types(
        args.entity_types or DEFAULTS["entity_types"])
    sentences = _read_corpus(args.file, entity_types, "IOB2")
    print(corpus.render_stats(corpus.stats(sentences, entity_types)), end="")
    return 0


def cmd_ablate(args):
    opts = resolve_options(args, TRAIN_OPTION_NAMES)
    entity_types = _parse_entity_types(opts["entity_types"])
    train_sents = _read_corpus(args.train, entity_types, opts["scheme"])
    dev_sents = _read_corpus(args.dev, entity_types, opts["scheme"])
    score_sents = None
    if args.test:
        score_sents = _read_corpus(args.test, entity_types, opts["scheme"])
    train_sents = corpus.split_long(train_sents, opts["max_len"], entity_types)
    dev_sents = corpus.split_long(dev_sents, opts["max_len"], entity_types)

    if args.preset:
        if args.preset not in train.ABLATION_PRESETS:
            raise CliError(f"unknown preset {args.preset!r}; choose from "
                           f"{sorted(train.ABLATION_PRESETS)}")
        rows = train.ABLATION_PRESETS[args.preset]
    elif args.rows:
        with open(args.rows, "r", encoding="utf-8") as handle:
            specs = json.load(handle)
        rows = [train.RowSpec(
            name=s["name"],
            feature_set=tuple(s["features"]) if "features" in s else None,
            embedding_mode=_embedding_mode(s.get("embedding_mode"))
                           if s.get("embedding_mode") else None,
            cell=s.get("cell"), bidirectional=s.get("bidirectional"),
            layers=s.get("layers"), dropout=s.get("dropout"))
            for s in specs]
    else:
        raise CliError("give --preset or --rows")

    rules = None
    base_features = _parse_feature_list(opts["features"]).enabled
    if (args.regex_file or features.REGEX in base_features
            or any(features.REGEX in (r.feature_set or ()) for r in rows)):
        rules = features.load_regex_rules(args.regex_file or default_regex_file())

    setup = train.ExperimentSetup(
        train_sentences=train_sents, dev_sentences=dev_sents,
        score_sentences=score_sents, entity_types=entity_types,
        feature_set=_parse_feature_list(opts["features"]).enabled,
        embedding_mode=_embedding_mode(opts["embedding_mode"]),
        embedding_dim=opts["embedding_dim"], embedding_seed=opts["seed"],
        embeddings_path=args.embeddings, regex_rules=rules,
        hidden=opts["hidden"], layers=opts["layers"], cell=opts["cell"],
        bidirectional=opts["bidi"], dropout=opts["dropout"])
    tcfg = train.TrainConfig(learning_rate=opts["lr"], clip_norm=opts["clip"],
                             max_epochs=opts["max_epochs"],
                             patience=opts["patience"], seed=opts["seed"])
    results = train.ablate(setup, rows, tcfg, save_dir=args.save_models)

    text = train.render_ablation(results)
    print(text, end="")
    prefix = args.out or "ablation"
    with open(prefix + ".txt", "w", encoding="utf-8") as handle:
        handle.write(text)
    with open(prefix + ".tsv", "w", encoding="utf-8") as handle:
        handle.write(train.ablation_tsv(results))
    manifest = RunManifest("ablate", opts, opts["seed"])
    for path in (args.train, args.dev, args.test, args.embeddings,
                 args.regex_file, args.rows, args.config):
        if path:
            manifest.add_input(path)
    manifest.write(prefix + ".manifest.json")
    return 0


def cmd_selfcheck(args):
    seeds = range(args.seeds if args.seeds is not None else 20)
    grad = selfcheck.check_gradients(seeds=seeds,
                                     corrupt=args.corrupt_gradient)
    print(f"gradient check: worst relative error {grad.worst_error:.3e} "
          f"over {grad.seeds} seeds (tolerance {grad.tolerance:.0e}) -> "
          f"{'PASS' if grad.passed else 'FAIL'}")
    diffs = selfcheck.check_scorer()
    scorer_ok = not diffs
    print(f"scorer oracle: {len(diffs)} discrepancies over 1000 random "
          f"corpora -> {'PASS' if scorer_ok else 'FAIL'}")
    for d in diffs[:10]:
        print(f"  {d}")
    if grad.passed and scorer_ok:
        return 0
    return 3


def build_parser():
    parser = argparse.ArgumentParser(
        prog="seqtag",
        description="Bi-LSTM named entity tagger: train, tag, evaluate, "
                    "run ablations, corpus stats, and self checks.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="cmd", required=True)

    def shared(p):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--config", default=None,
                       help="JSON file of option defaults")
        p.add_argument("--quiet", action="store_true")

    def train_flags(p):
        p.add_argument("--train", required=True, help="training CoNLL file")
        p.add_argument("--dev", required=True, help="validation CoNLL file")
        p.add_argument("--embeddings", default=None,
                       help="word2vec text export (skipgram mode)")
        p.add_argument("--embedding-mode", dest="embedding_mode",
                       choices=["skipgram", "random", "onehot"], default=None)
        p.add_argument("--embedding-dim", dest="embedding_dim", type=int,
                       default=None)
        p.add_argument("--features", default=None,
                       help="comma list from word,pos,chunk,case,regex")
        p.add_argument("--regex-file", dest="regex_file", default=None)
        p.add_argument("--entity-types", dest="entity_types", default=None)
        p.add_argument("--scheme", choices=["IOB1", "IOB2"], default=None,
                       help="label scheme of the input files")
        p.add_argument("--max-len", dest="max_len", type=int, default=None)
        p.add_argument("--hidden", type=int, default=None)
        p.add_argument("--layers", type=int, default=None)
        p.add_argument("--cell", choices=["lstm", "rnn"], default=None)
        bidi = p.add_mutually_exclusive_group()
        bidi.add_argument("--bidi", dest="bidi", action="store_true",
                          default=None)
        bidi.add_argument("--no-bidi", dest="bidi", action="store_false")
        p.add_argument("--dropout", type=float, default=None)
        p.add_argument("--lr", type=float, default=None)
        p.add_argument("--clip", type=float, default=None)
        p.add_argument("--patience", type=int, default=None)
        p.add_argument("--max-epochs", dest="max_epochs", type=int,
                       default=None)

    p = sub.add_parser("train", help="train a tagger")
    shared(p)
    train_flags(p)
    p.add_argument("--out", required=True, help="model file to write")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tag", help="tag a CoNLL file with a trained model")
    shared(p)
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", default=None, help="default: stdout")
    p.add_argument("--embeddings", default=None)
    p.set_defaults(func=cmd_tag)

    p = sub.add_parser("eval", help="score a file with gold and predicted "
                                    "label columns (conlleval convention)")
    shared(p)
    p.add_argument("--gold", required=True,
                   help="file with gold second-to-last, predictions last")
    p.add_argument("--types", default=None,
                   help="restrict scoring to these entity types")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="rerun training across configurations")
    shared(p)
    train_flags(p)
    p.add_argument("--test", default=None,
                   help="CoNLL file to score rows on (default: dev)")
    p.add_argument("--preset", default=None,
                   help="table3|table4|table5|table6|table7")
    p.add_argument("--rows", default=None, help="JSON row-spec file")
    p.add_argument("--out", default=None, help="output prefix")
    p.add_argument("--save-models", dest="save_models", default=None,
                   help="directory to retain each row's trained model")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("stats", help="entity statistics of a CoNLL file")
    shared(p)
    p.add_argument("file")
    p.add_argument("--entity-types", dest="entity_types", default=None)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("selfcheck", help="run the gradient and scorer checks")
    shared(p)
    p.add_argument("--seeds", type=int, default=None)
    p.add_argument("--corrupt-gradient", dest="corrupt_gradient",
                   action="store_true",
                   help="negative control: corrupt one gradient entry")
    p.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
