"""CoNLL-format corpus handling: reading/writing sentence files, IOB label
validation and repair, IOB1/IOB2 scheme conversion, entity span extraction,
corpus statistics, and train/dev splitting.

The canonical label scheme inside the package is IOB2: every entity starts
with B-. IOB1 files (B- only between adjacent same-type entities) can be
converted on ingest.
"""

import os
import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

DEFAULT_ENTITY_TYPES = ("PER", "LOC", "ORG", "MISC")
DEFAULT_MAX_SENTENCE_LEN = 150

_LABEL_RE = re.compile(r"^(O|[BI]-[A-Za-z0-9_]+)$")


class CorpusError(ValueError):
    pass


class MalformedLine(CorpusError):
    """A token line has fewer columns than the column map requires."""


class InvalidLabel(CorpusError):
    """A label is not 'O' or '{B|I}-TYPE' with TYPE in the configured set."""


class InvalidSequence(CorpusError):
    """An I-X label has no valid predecessor (strict IOB validation)."""


class DevTooLarge(CorpusError):
    pass


@dataclass
class Token:
    surface: str
    pos: str = "_"
    chunk: str = "_"
    gold_label: str = "O"
    predicted_label: str | None = None


@dataclass
class Sentence:
    tokens: list[Token] = field(default_factory=list)

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]

    def gold_labels(self):
        return [t.gold_label for t in self.tokens]

    def predicted_labels(self):
        return [t.predicted_label for t in self.tokens]


@dataclass(frozen=True)
class EntitySpan:
    entity_type: str
    start: int  # inclusive token index
    end: int    # inclusive token index


@dataclass
class ColumnMap:
    """Which whitespace-separated column holds which field.

    `predicted` is optional; set it to read conlleval-style files that carry
    a system output column.
    """
    surface: int = 0
    pos: int = 1
    chunk: int = 2
    label: int = 3
    predicted: int | None = None

    def max_index(self):
        idxs = [self.surface, self.pos, self.chunk, self.label]
        if self.predicted is not None:
            idxs.append(self.predicted)
        return max(idxs)


def label_alphabet(entity_types=DEFAULT_ENTITY_TYPES):
    """The IOB2 label set for the given entity types: O first, then B-/I-
    pairs in sorted type order (9 labels for the default four types)."""
    labels = ["O"]
    for etype in sorted(entity_types):
        labels.append("B-" + etype)
        labels.append("I-" + etype)
    return labels


def parse_label(label, entity_types=DEFAULT_ENTITY_TYPES):
    """Split a label into (prefix, type); raises InvalidLabel on bad syntax
    or an unknown entity type. entity_types=None accepts any type token."""
    if label == "O":
        return "O", None
    if not _LABEL_RE.match(label):
        raise InvalidLabel(f"label {label!r} does not match the IOB grammar")
    prefix, etype = label.split("-", 1)
    if entity_types is not None and etype not in entity_types:
        raise InvalidLabel(
            f"label {label!r} uses unknown entity type {etype!r} "
            f"(configured: {sorted(entity_types)})")
    return prefix, etype


def validate_iob2(labels, entity_types=DEFAULT_ENTITY_TYPES):
    """Raise InvalidSequence unless `labels` is a syntactically valid IOB2
    sequence (every I-X preceded by B-X or I-X of the same type)."""
    prev_prefix, prev_type = "O", None
    for i, label in enumerate(labels):
        prefix, etype = parse_label(label, entity_types)
        if prefix == "I" and not (prev_prefix in ("B", "I") and prev_type == etype):
            raise InvalidSequence(
                f"position {i}: {label!r} has no valid predecessor "
                f"(previous label was "
                f"{'O' if prev_prefix == 'O' else prev_prefix + '-' + prev_type!r})")
        prev_prefix, prev_type = prefix, etype


def repair_iob(labels, entity_types=DEFAULT_ENTITY_TYPES):
    """Turn any sequence over the label alphabet into valid IOB2.

    The only repair rule: an I-X with no valid predecessor becomes B-X.
    Idempotent; valid input comes back unchanged.
    """
    repaired = []
    prev_prefix, prev_type = "O", None
    for label in labels:
        prefix, etype = parse_label(label, entity_types)
        if prefix == "I" and not (prev_prefix in ("B", "I") and prev_type == etype):
            label = "B-" + etype
            prefix = "B"
        repaired.append(label)
        prev_prefix, prev_type = prefix, etype
    return repaired


def extract_spans(labels, entity_types=DEFAULT_ENTITY_TYPES):
    """Maximal B-X (I-X)* runs of a valid IOB2 sequence, as EntitySpans.

    Strict: raises InvalidSequence on an I-X without a valid predecessor.
    Run repair_iob first for model output.
    """
    validate_iob2(labels, entity_types)
    spans = []
    start = None
    cur_type = None
    for i, label in enumerate(labels):
        prefix, etype = parse_label(label, entity_types)
        if prefix == "B":
            if start is not None:
                spans.append(EntitySpan(cur_type, start, i - 1))
            start, cur_type = i, etype
        elif prefix == "O":
            if start is not None:
                spans.append(EntitySpan(cur_type, start, i - 1))
            start, cur_type = None, None
        # prefix == "I": continuation, validated above
    if start is not None:
        spans.append(EntitySpan(cur_type, start, len(labels) - 1))
    return spans


def spans_to_labels(spans, length):
    """Inverse of extract_spans: emit the IOB2 sequence for a span set."""
    labels = ["O"] * length
    for span in spans:
        if not (0 <= span.start <= span.end < length):
            raise ValueError(f"span {span} out of range for length {length}")
        if any(labels[k] != "O" for k in range(span.start, span.end + 1)):
            raise ValueError(f"span {span} overlaps another span")
        labels[span.start] = "B-" + span.entity_type
        for k in range(span.start + 1, span.end + 1):
            labels[k] = "I-" + span.entity_type
    return labels


def _extract_spans_iob1(labels, entity_types=DEFAULT_ENTITY_TYPES):
    """Span extraction under IOB1 semantics (I-X may open an entity; B-X is
    only valid immediately after an entity of the same type)."""
    spans = []
    start = None
    cur_type = None
    for i, label in enumerate(labels):
        prefix, etype = parse_label(label, entity_types)
        if prefix == "O":
            if start is not None:
                spans.append(EntitySpan(cur_type, start, i - 1))
                start, cur_type = None, None
        elif prefix == "I":
            if start is not None and etype == cur_type:
                continue
            if start is not None:
                spans.append(EntitySpan(cur_type, start, i - 1))
            start, cur_type = i, etype
        else:  # B: separator between adjacent same-type entities
            if start is None or etype != cur_type:
                raise InvalidSequence(
                    f"position {i}: {label!r} is not preceded by an entity "
                    f"of the same type (IOB1)")
            spans.append(EntitySpan(cur_type, start, i - 1))
            start, cur_type = i, etype
    if start is not None:
        spans.append(EntitySpan(cur_type, start, len(labels) - 1))
    return spans


def _spans_to_labels_iob1(spans, length):
    labels = ["O"] * length
    prev_end = {}  # type -> end index of the most recent emitted span
    for span in sorted(spans, key=lambda s: s.start):
        adjacent = prev_end.get(span.entity_type) == span.start - 1
        labels[span.start] = ("B-" if adjacent else "I-") + span.entity_type
        for k in range(span.start + 1, span.end + 1):
            labels[k] = "I-" + span.entity_type
        prev_end[span.entity_type] = span.end
    return labels


def convert_scheme(labels, from_scheme, to_scheme, entity_types=DEFAULT_ENTITY_TYPES):
    """Convert between IOB1 and IOB2, preserving the span set exactly."""
    schemes = {"IOB1", "IOB2"}
    if from_scheme not in schemes or to_scheme not in schemes:
        raise ValueError(f"unknown scheme in {from_scheme!r} -> {to_scheme!r}")
    if from_scheme == "IOB1":
        spans = _extract_spans_iob1(labels, entity_types)
    else:
        spans = extract_spans(labels, entity_types)
    if to_scheme == "IOB1":
        return _spans_to_labels_iob1(spans, len(labels))
    return spans_to_labels(spans, len(labels))


def read_conll(source, columns=None, entity_types=DEFAULT_ENTITY_TYPES,
               strict=True, scheme="IOB2"):
    """Parse a CoNLL stream (iterable of lines or a file path) into sentences.

    Columns are separated by runs of spaces or a single tab; blank lines end
    sentences; -DOCSTART- lines are skipped. With strict=False, label
    sequence violations are repaired via repair_iob instead of raising.
    scheme="IOB1" converts gold labels to IOB2 on ingest.
    """
    if columns is None:
        columns = ColumnMap()
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8") as handle:
            return read_conll(handle, columns, entity_types, strict, scheme)

    sentences = []
    tokens = []
    label_lines = []  # line number per token, for sequence-error reporting

    def finish():
        nonlocal tokens, label_lines
        if not tokens:
            return
        labels = [t.gold_label for t in tokens]
        for lineno, label in zip(label_lines, labels):
            try:
                parse_label(label, entity_types)
            except InvalidLabel as exc:
                raise InvalidLabel(f"line {lineno}: {exc}") from None
        if scheme == "IOB1":
            labels = convert_scheme(labels, "IOB1", "IOB2", entity_types)
        elif strict:
            try:
                validate_iob2(labels, entity_types)
            except InvalidSequence as exc:
                raise InvalidSequence(f"near line {label_lines[0]}: {exc}") from None
        else:
            labels = repair_iob(labels, entity_types)
        for tok, label in zip(tokens, labels):
            tok.gold_label = label
        sentences.append(Sentence(tokens))
        tokens, label_lines = [], []

    for lineno, raw in enumerate(source, start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip():
            finish()
            continue
        if line.startswith("-DOCSTART-"):
            continue
        cols = line.split("\t") if "\t" in line else line.split()
        if len(cols) <= columns.max_index():
            raise MalformedLine(
                f"line {lineno}: expected at least {columns.max_index() + 1} "
                f"columns, got {len(cols)}: {line!r}")
        tok = Token(
            surface=cols[columns.surface],
            pos=cols[columns.pos],
            chunk=cols[columns.chunk],
            gold_label=cols[columns.label],
        )
        if columns.predicted is not None:
            tok.predicted_label = cols[columns.predicted]
        if not tok.surface:
            raise MalformedLine(f"line {lineno}: empty surface form")
        tokens.append(tok)
        label_lines.append(lineno)
    finish()
    return sentences


def write_conll(sentences, sink, include_predictions=False):
    """Write sentences back out, single-space separated, blank line between
    sentences. With include_predictions, appends the predicted label column."""
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w", encoding="utf-8") as handle:
            write_conll(sentences, handle, include_predictions)
        return
    for sent in sentences:
        for tok in sent:
            fields = [tok.surface, tok.pos, tok.chunk, tok.gold_label]
            if include_predictions:
                fields.append(tok.predicted_label if tok.predicted_label else "O")
            sink.write(" ".join(fields) + "\n")
        sink.write("\n")


def split_long(sentences, max_len=DEFAULT_MAX_SENTENCE_LEN,
               entity_types=DEFAULT_ENTITY_TYPES):
    """Split sentences longer than max_len, cutting after the last O-labeled
    token inside the window, or failing that at the last entity boundary,
    never inside an entity. Bounds the BPTT sequence length."""
    if max_len is None:
        return list(sentences)
    out = []
    for sent in sentences:
        tokens = list(sent.tokens)
        while len(tokens) > max_len:
            cut = None
            for i in range(max_len - 1, -1, -1):
                if tokens[i].gold_label == "O":
                    cut = i
                    break
            if cut is None:
                for i in range(max_len - 1, 0, -1):
                    if not tokens[i].gold_label.startswith("I-"):
                        cut = i - 1
                        break
            if cut is None:
                cut = max_len - 1  # single giant entity; hard split
            out.append(Sentence(tokens[:cut + 1]))
            tokens = tokens[cut + 1:]
        if tokens:
            out.append(Sentence(tokens))
    return out


@dataclass
class CorpusStats:
    sentence_count: int
    token_count: int
    entity_counts: Counter

    @property
    def total_entities(self):
        return sum(self.entity_counts.values())


def stats(sentences, entity_types=DEFAULT_ENTITY_TYPES):
    counts = Counter()
    tokens = 0
    for sent in sentences:
        tokens += len(sent)
        for span in extract_spans(sent.gold_labels(), entity_types):
            counts[span.entity_type] += 1
    return CorpusStats(len(list(sentences)), tokens, counts)


def render_stats(cs):
    """Aligned entity-count table plus machine-readable key=value lines."""
    rows = sorted(cs.entity_counts.items())
    width = max([len("Entity type")] + [len(t) for t, _ in rows])
    lines = [f"{'Entity type':<{width}}  {'Count':>8}"]
    for etype, n in rows:
        lines.append(f"{etype:<{width}}  {n:>8}")
    lines.append(f"{'ALL':<{width}}  {cs.total_entities:>8}")
    lines.append("")
    for etype, n in rows:
        lines.append(f"entities.{etype}={n}")
    lines.append(f"entities.ALL={cs.total_entities}")
    lines.append(f"sentences={cs.sentence_count}")
    lines.append(f"tokens={cs.token_count}")
    return "\n".join(lines) + "\n"


def split(sentences, dev_count=None, dev_fraction=None, seed=None):
    """Hold out a dev set. Default: the last k sentences (reproducible with
    no seed); pass a seed for a shuffled split."""
    sentences = list(sentences)
    n = len(sentences)
    if dev_count is None:
        if dev_fraction is None:
            raise ValueError("give dev_count or dev_fraction")
        dev_count = int(round(n * dev_fraction))
    if dev_count >= n and not (dev_count == 0 and n == 0):
        raise DevTooLarge(f"dev_count {dev_count} >= corpus size {n}")
    if seed is None:
        order = list(range(n))
    else:
        order = list(np.random.default_rng(seed).permutation(n))
    if dev_count == 0:
        return [sentences[i] for i in order], []
    train_idx = order[:-dev_count]
    dev_idx = order[-dev_count:]
    return [sentences[i] for i in train_idx], [sentences[i] for i in dev_idx]
