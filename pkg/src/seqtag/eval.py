"""Phrase-level scoring compatible with the CoNLL 2003 evaluation
convention: a predicted entity counts as correct only when a gold entity
with the same type and the exact same token boundaries exists.

Percentages are kept at full precision internally and rounded only when a
report is rendered.
"""

from dataclasses import dataclass, field

from .corpus import extract_spans, repair_iob


class MissingPredictions(ValueError):
    """A token reached the scorer without a predicted label."""


def f1(precision, recall):
    """Harmonic mean of precision and recall (percent in, percent out);
    defined as 0 when both are 0."""
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass
class TypeScore:
    gold: int = 0
    predicted: int = 0
    correct: int = 0

    @property
    def precision(self):
        return 100.0 * self.correct / self.predicted if self.predicted else 0.0

    @property
    def recall(self):
        return 100.0 * self.correct / self.gold if self.gold else 0.0

    @property
    def f1(self):
        return f1(self.precision, self.recall)


@dataclass
class ScoreReport:
    per_type: dict = field(default_factory=dict)
    overall: TypeScore = field(default_factory=TypeScore)
    token_count: int = 0
    token_correct: int = 0

    @property
    def token_accuracy(self):
        return 100.0 * self.token_correct / self.token_count if self.token_count else 0.0


def _relabel_outside(labels, keep_types):
    out = []
    for label in labels:
        if label == "O" or label.split("-", 1)[1] in keep_types:
            out.append(label)
        else:
            out.append("O")
    return out


def score(sentences, types=None, entity_types=None):
    """Score predicted against gold labels over a corpus.

    Predictions are repaired to valid IOB2 before span extraction (the
    repair is the identity on already-valid sequences). `types`, when given,
    restricts scoring to those entity types: excluded types are relabeled to
    O on both the gold and predicted side before counting.
    """
    report = ScoreReport()
    accepted = entity_types  # None = accept any well-formed type
    for sent in sentences:
        gold_labels = sent.gold_labels()
        pred_labels = sent.predicted_labels()
        if any(p is None for p in pred_labels):
            raise MissingPredictions(
                "a token has no predicted label; tag the corpus first")
        pred_labels = repair_iob(pred_labels, accepted)
        if types is not None:
            gold_labels = _relabel_outside(gold_labels, types)
            pred_labels = _relabel_outside(pred_labels, types)
        report.token_count += len(gold_labels)
        report.token_correct += sum(g == p for g, p in zip(gold_labels, pred_labels))
        gold_spans = set(extract_spans(gold_labels, accepted))
        pred_spans = set(extract_spans(pred_labels, accepted))
        for span in gold_spans:
            entry = report.per_type.setdefault(span.entity_type, TypeScore())
            entry.gold += 1
            report.overall.gold += 1
        for span in pred_spans:
            entry = report.per_type.setdefault(span.entity_type, TypeScore())
            entry.predicted += 1
            report.overall.predicted += 1
            if span in gold_spans:
                entry.correct += 1
                report.overall.correct += 1
    return report


def render(report):
    """conlleval-style text: one row per entity type (alphabetical), then an
    ALL row; percentages with two decimals."""
    lines = [
        f"processed {report.token_count} tokens with {report.overall.gold} "
        f"phrases; found: {report.overall.predicted} phrases; "
        f"correct: {report.overall.correct}.",
        f"accuracy: {report.token_accuracy:6.2f}%  (per token)",
        f"{'type':<8} {'prec.':>8} {'recall':>8} {'F1':>8} {'gold':>6} "
        f"{'found':>6} {'corr.':>6}",
    ]
    for etype in sorted(report.per_type):
        s = report.per_type[etype]
        lines.append(f"{etype:<8} {s.precision:8.2f} {s.recall:8.2f} "
                     f"{s.f1:8.2f} {s.gold:6d} {s.predicted:6d} {s.correct:6d}")
    s = report.overall
    lines.append(f"{'ALL':<8} {s.precision:8.2f} {s.recall:8.2f} "
                 f"{s.f1:8.2f} {s.gold:6d} {s.predicted:6d} {s.correct:6d}")
    return "\n".join(lines) + "\n"


def score_conll_lines(lines, types=None):
    """Alternative entry point following the conlleval input convention:
    whitespace-separated columns with the gold label second-to-last and the
    predicted label last; blank lines separate sentences."""
    from .corpus import Sentence, Token

    sentences = []
    tokens = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            if tokens:
                sentences.append(Sentence(tokens))
                tokens = []
            continue
        if line.startswith("-DOCSTART-"):
            continue
        cols = line.split()
        if len(cols) < 2:
            raise ValueError(
                f"line {lineno}: need at least gold and predicted columns")
        tokens.append(Token(surface=cols[0], gold_label=cols[-2],
                            predicted_label=cols[-1]))
    if tokens:
        sentences.append(Sentence(tokens))
    for sent in sentences:
        sent.tokens = [
            Token(t.surface, t.pos, t.chunk, g, p)
            for t, g, p in zip(sent.tokens,
                               repair_iob(sent.gold_labels(), None),
                               repair_iob(sent.predicted_labels(), None))
        ]
    return score(sentences, types=types)
