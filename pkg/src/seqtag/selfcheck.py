"""Built-in verification suites: the analytic-vs-numeric gradient check and
the scorer-vs-brute-force oracle comparison. The CLI selfcheck command runs
these; the acceptance tests call them directly.
"""

from dataclasses import dataclass

import numpy as np

from . import model
from .corpus import Sentence, Token, repair_iob
from .eval import score
from .numerics import derive_rng, finite_diff_grad, gradient_relative_error


@dataclass
class GradientCheckResult:
    worst_error: float
    tolerance: float
    seeds: int

    @property
    def passed(self):
        return self.worst_error < self.tolerance


def check_gradients(seeds=range(20), hidden=8, input_dim=10, seq_len=5,
                    n_labels=4, layers=2, bidirectional=True, cell="lstm",
                    dropout=0.0, epsilon=1e-5, tolerance=1e-4, corrupt=False):
    """Compare backpropagation gradients against central finite differences
    on small random models; returns the worst relative error over all seeds
    and parameters.

    With dropout > 0 the masks are frozen by re-deriving the same RNG for
    every loss evaluation, so the finite differences probe the identical
    stochastic function. `corrupt` deliberately perturbs one analytic
    gradient entry (negative control: the check must then fail).
    """
    labels = [f"L{i}" for i in range(n_labels)]
    worst = 0.0
    for seed in seeds:
        config = model.TaggerConfig(labels=labels, input_dim=input_dim,
                                    hidden=hidden, layers=layers, cell=cell,
                                    bidirectional=bidirectional,
                                    dropout=dropout)
        tagger = model.init_params(config, derive_rng(seed, 100))
        data_rng = derive_rng(seed, 101)
        inputs = data_rng.uniform(-1, 1, size=(seq_len, input_dim))
        gold = [int(g) for g in data_rng.integers(0, n_labels, size=seq_len)]

        def dropout_rng():
            return derive_rng(seed, 102) if dropout > 0 else None

        _, analytic = model.loss_and_gradients(tagger, inputs, gold,
                                               rng=dropout_rng())
        if corrupt:
            first = next(iter(analytic))
            analytic[first].reshape(-1)[0] += 1e-2
        numeric = finite_diff_grad(
            lambda _: model.sentence_loss(tagger, inputs, gold,
                                          rng=dropout_rng()),
            tagger.params(), epsilon=epsilon)
        worst = max(worst, gradient_relative_error(analytic, numeric))
    return GradientCheckResult(worst, tolerance, len(list(seeds)))


def enumerate_spans(labels):
    """Independent span oracle: test every (type, start, end) triple against
    the definition of a maximal B-X (I-X)* run. Quadratic on purpose; shares
    no code with the extraction path it cross-checks."""
    spans = set()
    n = len(labels)
    types = {lab.split("-", 1)[1] for lab in labels if lab != "O"}
    for etype in types:
        b, i = "B-" + etype, "I-" + etype
        for start in range(n):
            if labels[start] != b:
                continue
            for end in range(start, n):
                inside = all(labels[k] == i for k in range(start + 1, end + 1))
                closed = end + 1 == n or labels[end + 1] != i
                if inside and closed:
                    spans.add((etype, start, end))
    return spans


def oracle_score(pairs):
    """Brute-force scorer over (gold_labels, pred_labels) pairs: span sets
    from enumerate_spans, correct = set intersection, counted per type."""
    per_type = {}
    overall = {"gold": 0, "predicted": 0, "correct": 0}

    def bucket(etype):
        return per_type.setdefault(etype, {"gold": 0, "predicted": 0,
                                           "correct": 0})

    for gold_labels, pred_labels in pairs:
        gold_spans = enumerate_spans(gold_labels)
        pred_spans = enumerate_spans(pred_labels)
        for etype, _, _ in gold_spans:
            bucket(etype)["gold"] += 1
            overall["gold"] += 1
        for span in pred_spans:
            bucket(span[0])["predicted"] += 1
            overall["predicted"] += 1
            if span in gold_spans:
                bucket(span[0])["correct"] += 1
                overall["correct"] += 1
    return per_type, overall


def random_label_pairs(n_pairs, seed, entity_types=("PER", "LOC", "ORG", "MISC"),
                       max_len=12):
    """Random valid IOB2 (gold, predicted) sequence pairs: uniform draws over
    the label alphabet, then repaired."""
    alphabet = ["O"]
    for etype in entity_types:
        alphabet += ["B-" + etype, "I-" + etype]
    rng = derive_rng(seed, 103)
    pairs = []
    for _ in range(n_pairs):
        length = int(rng.integers(1, max_len + 1))
        gold = repair_iob([alphabet[i] for i in
                           rng.integers(0, len(alphabet), size=length)])
        pred = repair_iob([alphabet[i] for i in
                           rng.integers(0, len(alphabet), size=length)])
        pairs.append((gold, pred))
    return pairs


def check_scorer(n_pairs=1000, seed=7, entity_types=("PER", "LOC", "ORG", "MISC"),
                 max_len=12):
    """Score random pairs through the production scorer and the brute-force
    oracle; returns the list of discrepancies (empty means equivalent)."""
    pairs = random_label_pairs(n_pairs, seed, entity_types, max_len)
    sentences = []
    for gold, pred in pairs:
        tokens = [Token(surface=f"w{k}", gold_label=g, predicted_label=p)
                  for k, (g, p) in enumerate(zip(gold, pred))]
        sentences.append(Sentence(tokens))
    report = score(sentences, entity_types=entity_types)
    oracle_types, oracle_overall = oracle_score(pairs)

    diffs = []
    for field in ("gold", "predicted", "correct"):
        got = getattr(report.overall, field)
        want = oracle_overall[field]
        if got != want:
            diffs.append(f"overall.{field}: scorer {got} != oracle {want}")
    all_types = set(report.per_type) | set(oracle_types)
    for etype in sorted(all_types):
        got = report.per_type.get(etype)
        want = oracle_types.get(etype, {"gold": 0, "predicted": 0, "correct": 0})
        for field in ("gold", "predicted", "correct"):
            g = getattr(got, field) if got else 0
            if g != want[field]:
                diffs.append(f"{etype}.{field}: scorer {g} != oracle {want[field]}")
    return diffs


def gradient_extremeness(cell_params, seq_len, input_dim, seed):
    """How unbalanced the input gradients of a single recurrent pass are:
    run the cell over a random sequence, push a unit gradient into the last
    hidden state, and compare gradient norms at the first and last inputs.
    Returns max(ratio, 1/ratio) so both exploding and vanishing register as
    large."""
    # inputs small enough that even growth by the spectral radius per step
    # cannot reach tanh saturation within seq_len steps; the recurrence's
    # own linearized dynamics then dominate the gradient product
    rng = derive_rng(seed, 104)
    inputs = rng.normal(0.0, 1e-30, size=(seq_len, input_dim))
    states, caches = model._run_cell_with_cache(cell_params, inputs)
    dstates = np.zeros_like(states)
    dstates[-1] = 1.0
    grads = {name: np.zeros_like(arr) for name, arr in cell_params.items()}
    dx = model._cell_backward_over_time(cell_params, caches, dstates, grads, "")
    first = float(np.linalg.norm(dx[0]))
    last = float(np.linalg.norm(dx[-1]))
    if first == 0.0 or last == 0.0:
        return np.inf
    ratio = first / last
    return max(ratio, 1.0 / ratio)


def compare_recurrence_pathology(seq_len=132, hidden=8, input_dim=8, seed=5,
                                 spectral_radius=1.4):
    """Exploding/vanishing comparison on matched shapes: a vanilla RNN with
    recurrent weights scaled past spectral radius 1 versus an LSTM with a
    saturated forget gate. Returns (rnn_extremeness, lstm_extremeness)."""
    rng = derive_rng(seed, 105)
    rnn = model.RnnCellParams(hidden, input_dim)
    w = rng.normal(0.0, 1.0, size=(hidden, hidden))
    radius = max(abs(np.linalg.eigvals(w)))
    rnn.W = w * (spectral_radius / radius)
    rnn.U = rng.normal(0.0, 0.5, size=(hidden, input_dim))

    # well-conditioned LSTM: saturated forget gate carries the memory, and
    # the hidden-side weights are damped below the critical point so the
    # gate coupling does not itself amplify over 132 steps
    lstm = model.LstmCellParams.init(derive_rng(seed, 106), hidden, input_dim,
                                     forget_bias=20.0)
    for name in ("W_i", "W_f", "W_c", "W_o"):
        setattr(lstm, name, getattr(lstm, name) * 0.3)
    e_rnn = gradient_extremeness(rnn, seq_len, input_dim, seed)
    e_lstm = gradient_extremeness(lstm, seq_len, input_dim, seed)
    return e_rnn, e_lstm
