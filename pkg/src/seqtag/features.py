"""Input feature assembly: word embeddings (pretrained / random / one-hot),
POS and chunk one-hot encoders, a surface case feature, and token-level
regex features loaded from a pattern file.

Per-token input vectors are the concatenation, in fixed order, of the
enabled feature blocks: [word | pos | chunk | case | regex].
"""

import hashlib
import math
import os
import re
from dataclasses import dataclass, field

import numpy as np

from . import numerics

WORD, POS, CHUNK, CASE, REGEX = "word", "pos", "chunk", "case", "regex"
ALL_FEATURES = (WORD, POS, CHUNK, CASE, REGEX)

CASE_CATEGORIES = ("AllCaps", "InitCap", "Lower", "Mixed", "NoLetter")

EMBEDDING_MODES = ("pretrained", "random", "onehot")


class EmbeddingError(ValueError):
    pass


class DimMismatch(EmbeddingError):
    """An embedding line carries the wrong number of values."""


class UnparseableValue(EmbeddingError):
    pass


def oov_bound(dim):
    """Half-width of the uniform range used for randomly initialized word
    vectors: sqrt(3 / dim). dim=300 gives exactly 0.1."""
    return math.sqrt(3.0 / dim)


def _word_stream_key(word):
    # Stable across processes (unlike hash()); keys the per-word RNG stream.
    digest = hashlib.blake2b(word.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


class EmbeddingTable:
    """word -> float64 vector map with a deterministic OOV policy.

    Unknown words get a uniform[-sqrt(3/dim), +sqrt(3/dim)] vector drawn
    from a stream derived from (seed, word), then cached, so the same word
    always maps to the same vector regardless of lookup order or process.

    Modes: "pretrained" (vectors loaded from a word2vec text export, with
    an exact -> lowercase -> OOV fallback chain), "random" (every word
    drawn from the OOV distribution), "onehot" (dim = vocabulary size
    including a reserved UNK slot).
    """

    def __init__(self, dim, mode, seed=0, lowercase_fallback=True, vocab=None):
        if mode not in EMBEDDING_MODES:
            raise EmbeddingError(f"unknown embedding mode {mode!r}")
        self.dim = int(dim)
        self.mode = mode
        self.seed = int(seed)
        self.lowercase_fallback = lowercase_fallback
        self.vectors = {}
        self.vocab = None
        if mode == "onehot":
            if not vocab:
                raise EmbeddingError("onehot mode needs a vocabulary")
            self.vocab = {w: i for i, w in enumerate(vocab)}
            self.dim = len(self.vocab) + 1  # last slot is UNK
        self._bound = oov_bound(self.dim)

    def _random_vector(self, word):
        rng = numerics.derive_rng(self.seed, _word_stream_key(word))
        return numerics.uniform_vector(rng, self.dim, self._bound)

    def _onehot(self, index):
        v = np.zeros(self.dim)
        v[index] = 1.0
        return v

    def lookup(self, word):
        if self.mode == "onehot":
            return self._onehot(self.vocab.get(word, self.dim - 1))
        vec = self.vectors.get(word)
        if vec is not None:
            return vec
        if self.mode == "pretrained" and self.lowercase_fallback:
            low = self.vectors.get(word.lower())
            if low is not None:
                return low
        vec = self._random_vector(word)
        self.vectors[word] = vec
        return vec

    def __contains__(self, word):
        return word in self.vectors

    def __len__(self):
        return len(self.vectors)


def lookup(table, word, rng=None):
    """Module-level alias for EmbeddingTable.lookup. The table derives its
    own per-word stream from its seed; `rng` is accepted for signature
    compatibility and ignored."""
    return table.lookup(word)


def load_embeddings(source, expected_dim, seed=0, lowercase_fallback=True):
    """Load a word2vec-style text export: one "word v1 ... vd" line per word,
    optionally preceded by a "count dim" header. Later duplicates override
    earlier ones."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8") as handle:
            return load_embeddings(handle, expected_dim, seed, lowercase_fallback)
    table = EmbeddingTable(expected_dim, "pretrained", seed=seed,
                           lowercase_fallback=lowercase_fallback)
    for lineno, raw in enumerate(source, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        parts = line.split()
        if lineno == 1 and len(parts) == 2:
            try:
                int(parts[0]), int(parts[1])
                continue  # header line
            except ValueError:
                pass
        word, values = parts[0], parts[1:]
        if len(values) != expected_dim:
            raise DimMismatch(
                f"line {lineno}: expected {expected_dim} values for "
                f"{word!r}, got {len(values)}")
        try:
            table.vectors[word] = np.array([float(v) for v in values])
        except ValueError as exc:
            raise UnparseableValue(f"line {lineno}: {exc}") from None
    return table


def random_table(dim, seed):
    """Table for the all-random input mode: every word, known or not, gets a
    cached uniform vector."""
    return EmbeddingTable(dim, "random", seed=seed)


def onehot_table(vocab):
    """One-hot table over the given vocabulary (first-seen order), with a
    reserved final UNK slot."""
    return EmbeddingTable(0, "onehot", vocab=list(vocab))


def word_vocab(sentences):
    """Distinct surface forms in first-seen order."""
    seen = {}
    for sent in sentences:
        for tok in sent:
            seen.setdefault(tok.surface, None)
    return list(seen)


def case_feature(surface):
    """One-hot over {AllCaps, InitCap, Lower, Mixed, NoLetter}.

    Unicode-aware; underscores (the multi-syllable joiner) are treated as
    syllable separators, so Ha_Noi-style tokens where every syllable is
    initial-capitalized classify as InitCap.
    """
    if not surface:
        raise ValueError("case_feature: empty surface form")
    letters = [c for c in surface if c.isalpha()]
    if not letters:
        category = "NoLetter"
    elif all(c.isupper() for c in letters):
        category = "AllCaps"
    elif _is_init_cap(surface):
        category = "InitCap"
    elif all(c.islower() for c in letters):
        category = "Lower"
    else:
        category = "Mixed"
    v = np.zeros(len(CASE_CATEGORIES))
    v[CASE_CATEGORIES.index(category)] = 1.0
    return v


def _is_init_cap(surface):
    saw_part = False
    for part in surface.split("_"):
        letters = [c for c in part if c.isalpha()]
        if not letters:
            continue
        saw_part = True
        if not letters[0].isupper():
            return False
        if any(c.isupper() for c in letters[1:]):
            return False
    return saw_part


RULE_SCOPES = ("self", "prev1", "prev2")


@dataclass(frozen=True)
class RegexRule:
    name: str
    scope: str  # which token the pattern tests, relative to the current one
    pattern: str

    def compiled(self):
        return re.compile(self.pattern)


@dataclass
class RegexRuleSet:
    rules: list[RegexRule] = field(default_factory=list)

    def __post_init__(self):
        names = [r.name for r in self.rules]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate rule names in {names}")
        for r in self.rules:
            if r.scope not in RULE_SCOPES:
                raise ValueError(f"rule {r.name!r}: unknown scope {r.scope!r}")
        self._compiled = [(r, r.compiled()) for r in self.rules]

    @property
    def width(self):
        return len(self.rules)

    def rule_names(self):
        return [r.name for r in self.rules]


def load_regex_rules(source):
    """Pattern file: one rule per line, NAME<TAB>SCOPE<TAB>PATTERN, where
    SCOPE is self/prev1/prev2; # starts a comment."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8") as handle:
            return load_regex_rules(handle)
    rules = []
    for lineno, raw in enumerate(source, start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(
                f"regex rule line {lineno}: expected NAME<TAB>SCOPE<TAB>PATTERN")
        name, scope, pattern = parts
        try:
            re.compile(pattern)
        except re.error as exc:
            raise ValueError(f"regex rule line {lineno} ({name}): {exc}") from None
        rules.append(RegexRule(name, scope, pattern))
    return RegexRuleSet(rules)


def regex_features(sentence, rules):
    """Per-token binary vectors, one slot per rule. A rule with scope prevK
    fires on token t when token t-K exists and its surface matches the
    pattern in full."""
    out = np.zeros((len(sentence), rules.width))
    surfaces = [t.surface for t in sentence]
    offsets = {"self": 0, "prev1": 1, "prev2": 2}
    for j, (rule, compiled) in enumerate(rules._compiled):
        k = offsets[rule.scope]
        for t in range(len(surfaces)):
            if t - k < 0:
                continue
            if compiled.fullmatch(surfaces[t - k]):
                out[t, j] = 1.0
    return out


class TagEncoder:
    """One-hot encoder over a tagset, first-seen order, with a reserved
    final UNK index for tags never seen in training."""

    def __init__(self, tags):
        self.index = {}
        for tag in tags:
            self.index.setdefault(tag, len(self.index))

    @property
    def width(self):
        return len(self.index) + 1

    @property
    def unk_index(self):
        return len(self.index)

    def encode(self, tag):
        v = np.zeros(self.width)
        v[self.index.get(tag, self.unk_index)] = 1.0
        return v

    def tags(self):
        return list(self.index)


def encode_tagset(tags):
    return TagEncoder(tags)


def pos_tags_seen(sentences):
    seen = {}
    for sent in sentences:
        for tok in sent:
            seen.setdefault(tok.pos, None)
    return list(seen)


def chunk_tags_seen(sentences):
    seen = {}
    for sent in sentences:
        for tok in sent:
            seen.setdefault(tok.chunk, None)
    return list(seen)


@dataclass
class FeatureConfig:
    """Which feature blocks are enabled. Word is always on."""
    enabled: tuple = (WORD,)

    def __post_init__(self):
        bad = [f for f in self.enabled if f not in ALL_FEATURES]
        if bad:
            raise ValueError(f"unknown features: {bad}")
        if WORD not in self.enabled:
            self.enabled = (WORD,) + tuple(self.enabled)
        # normalize to canonical order
        self.enabled = tuple(f for f in ALL_FEATURES if f in self.enabled)

    def has(self, feature):
        return feature in self.enabled


def input_width(config, table, pos_encoder=None, chunk_encoder=None, rules=None):
    width = table.dim
    if config.has(POS):
        width += pos_encoder.width
    if config.has(CHUNK):
        width += chunk_encoder.width
    if config.has(CASE):
        width += len(CASE_CATEGORIES)
    if config.has(REGEX):
        width += rules.width if rules is not None else 0
    return width


def assemble_inputs(sentence, config, table, pos_encoder=None,
                    chunk_encoder=None, rules=None):
    """T x D matrix of per-token input vectors, blocks concatenated in the
    fixed order [word | pos | chunk | case | regex]."""
    blocks = []
    word_block = np.stack([table.lookup(t.surface) for t in sentence])
    blocks.append(word_block)
    if config.has(POS):
        blocks.append(np.stack([pos_encoder.encode(t.pos) for t in sentence]))
    if config.has(CHUNK):
        blocks.append(np.stack([chunk_encoder.encode(t.chunk) for t in sentence]))
    if config.has(CASE):
        blocks.append(np.stack([case_feature(t.surface) for t in sentence]))
    if config.has(REGEX):
        if rules is None or rules.width == 0:
            blocks.append(np.zeros((len(sentence), 0)))
        else:
            blocks.append(regex_features(sentence, rules))
    return np.concatenate(blocks, axis=1)


@dataclass
class FeatureExtractor:
    """Everything needed to turn a Sentence into model inputs."""
    config: FeatureConfig
    table: EmbeddingTable
    pos_encoder: TagEncoder | None = None
    chunk_encoder: TagEncoder | None = None
    rules: RegexRuleSet | None = None

    @property
    def input_dim(self):
        return input_width(self.config, self.table, self.pos_encoder,
                           self.chunk_encoder, self.rules)

    def assemble(self, sentence):
        return assemble_inputs(sentence, self.config, self.table,
                               self.pos_encoder, self.chunk_encoder, self.rules)


def build_extractor(train_sentences, config, table, rules=None):
    """Fit the categorical encoders on the training corpus and bundle the
    resources behind one object."""
    pos_enc = encode_tagset(pos_tags_seen(train_sentences)) if config.has(POS) else None
    chunk_enc = encode_tagset(chunk_tags_seen(train_sentences)) if config.has(CHUNK) else None
    if config.has(REGEX) and rules is None:
        rules = RegexRuleSet([])
    return FeatureExtractor(config, table, pos_enc, chunk_enc, rules)
