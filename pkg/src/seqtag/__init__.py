"""seqtag: a from-scratch Bi-LSTM sequence labeling toolkit for named
entity recognition, built on numpy.

The pieces: `corpus` (CoNLL I/O, IOB machinery), `features` (embeddings and
categorical features), `model` (LSTM/RNN cells, BPTT, serialization),
`train` (SGD loop, early stopping, ablations), `eval` (phrase-level F1),
`selfcheck` (gradient and scorer oracles), `cli` (batch commands).
"""

__version__ = "0.1.0"

from . import cli, corpus, eval, features, model, numerics, selfcheck, train

__all__ = ["cli", "corpus", "eval", "features", "model", "numerics",
           "selfcheck", "train", "__version__"]
