"""The recurrent tagger: LSTM and vanilla-RNN cells, unidirectional and
bidirectional layers, layer stacking with inverted dropout, a per-token
softmax classifier, and hand-derived analytic gradients for all of it
(backpropagation through time, batch size 1, no padding).

The LSTM cell follows the usual gate formulation: the W matrices act on the
previous hidden state, the U matrices on the current input,

    i = sigmoid(W_i h_prev + U_i x + b_i)
    f = sigmoid(W_f h_prev + U_f x + b_f)
    c = f * c_prev + i * tanh(W_c h_prev + U_c x + b_c)
    o = sigmoid(W_o h_prev + U_o x + b_o)
    h = o * tanh(c)

Model files use a small versioned binary container (magic "SQTG"); see
save()/load().
"""

import hashlib
import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .numerics import (DimensionMismatch, hadamard, matvec, sigmoid,
                       tanh_elem, uniform_matrix)

MAGIC = b"SQTG"
FORMAT_VERSION = 1

LSTM_FIELDS = ("W_i", "W_f", "W_c", "W_o", "U_i", "U_f", "U_c", "U_o",
               "b_i", "b_f", "b_c", "b_o")
RNN_FIELDS = ("W", "U", "b")


class ModelFormatError(ValueError):
    pass


class BadMagic(ModelFormatError):
    pass


class UnsupportedVersion(ModelFormatError):
    pass


class TruncatedFile(ModelFormatError):
    pass


class ChecksumMismatch(ModelFormatError):
    pass


class EmptySequence(ValueError):
    pass


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden):
        return cls(np.zeros(hidden), np.zeros(hidden))


class LstmCellParams:
    """The twelve parameter blocks of one LSTM cell: hidden-side W (H x H),
    input-side U (H x D), biases b (H), one each per gate i/f/c/o."""

    fields = LSTM_FIELDS

    def __init__(self, hidden, input_dim):
        self.hidden = hidden
        self.input_dim = input_dim
        for name in ("W_i", "W_f", "W_c", "W_o"):
            setattr(self, name, np.zeros((hidden, hidden)))
        for name in ("U_i", "U_f", "U_c", "U_o"):
            setattr(self, name, np.zeros((hidden, input_dim)))
        for name in ("b_i", "b_f", "b_c", "b_o"):
            setattr(self, name, np.zeros(hidden))

    @classmethod
    def init(cls, rng, hidden, input_dim, forget_bias=1.0):
        p = cls(hidden, input_dim)
        for name in ("W_i", "W_f", "W_c", "W_o"):
            setattr(p, name, uniform_matrix(rng, hidden, hidden,
                                            np.sqrt(3.0 / hidden)))
        for name in ("U_i", "U_f", "U_c", "U_o"):
            setattr(p, name, uniform_matrix(rng, hidden, input_dim,
                                            np.sqrt(3.0 / input_dim)))
        p.b_f = np.full(hidden, float(forget_bias))
        return p

    def items(self):
        return [(name, getattr(self, name)) for name in self.fields]


class RnnCellParams:
    """Vanilla recurrent cell, h = tanh(W h_prev + U x + b)."""

    fields = RNN_FIELDS

    def __init__(self, hidden, input_dim):
        self.hidden = hidden
        self.input_dim = input_dim
        self.W = np.zeros((hidden, hidden))
        self.U = np.zeros((hidden, input_dim))
        self.b = np.zeros(hidden)

    @classmethod
    def init(cls, rng, hidden, input_dim):
        p = cls(hidden, input_dim)
        p.W = uniform_matrix(rng, hidden, hidden, np.sqrt(3.0 / hidden))
        p.U = uniform_matrix(rng, hidden, input_dim, np.sqrt(3.0 / input_dim))
        return p

    def items(self):
        return [(name, getattr(self, name)) for name in self.fields]


def lstm_step(params, x_t, prev):
    """One LSTM step, evaluated gate by gate exactly as written in the
    module docstring; returns the new LstmState."""
    i = sigmoid(matvec(params.W_i, prev.h) + matvec(params.U_i, x_t) + params.b_i)
    f = sigmoid(matvec(params.W_f, prev.h) + matvec(params.U_f, x_t) + params.b_f)
    g = tanh_elem(matvec(params.W_c, prev.h) + matvec(params.U_c, x_t) + params.b_c)
    c = hadamard(f, prev.c) + hadamard(i, g)
    o = sigmoid(matvec(params.W_o, prev.h) + matvec(params.U_o, x_t) + params.b_o)
    h = hadamard(o, tanh_elem(c))
    return LstmState(h, c)


def rnn_step(params, x_t, prev_h):
    """One vanilla-RNN step; returns the new hidden state."""
    return tanh_elem(matvec(params.W, prev_h) + matvec(params.U, x_t) + params.b)


def _is_lstm(params):
    return isinstance(params, LstmCellParams)


# The layer runners below compute the same recurrences with the four gates
# stacked into single matrices, order (i, f, o, c), so each step costs two
# matmuls instead of eight and the input-side projection is hoisted out of
# the time loop. lstm_step stays the literal per-gate reference; the tests
# assert both paths agree.

def _stacked_lstm(params):
    W = np.concatenate([params.W_i, params.W_f, params.W_o, params.W_c])
    U = np.concatenate([params.U_i, params.U_f, params.U_o, params.U_c])
    b = np.concatenate([params.b_i, params.b_f, params.b_o, params.b_c])
    return W, U, b


def _run_cell_with_cache(params, inputs):
    """Run a cell over inputs in their given order; returns (T x H states,
    a cache for backprop)."""
    T = len(inputs)
    if T == 0:
        raise EmptySequence("cannot run a recurrent layer over an empty sequence")
    inputs = np.asarray(inputs, dtype=np.float64)
    H = params.hidden
    states = np.empty((T, H))
    if _is_lstm(params):
        W, U, b = _stacked_lstm(params)
        xu = inputs @ U.T + b  # (T, 4H)
        gates = np.empty((T, 4 * H))  # i, f, o after sigmoid; g after tanh
        cells = np.empty((T, H))
        tanhc = np.empty((T, H))
        h = np.zeros(H)
        c = np.zeros(H)
        with np.errstate(over="ignore"):  # saturated exp underflows to 0/1
            for t in range(T):
                a = W @ h + xu[t]
                sig = 1.0 / (1.0 + np.exp(-a[:3 * H]))
                g = np.tanh(a[3 * H:])
                i, f, o = sig[:H], sig[H:2 * H], sig[2 * H:]
                c = f * c + i * g
                tc = np.tanh(c)
                h = o * tc
                gates[t, :3 * H] = sig
                gates[t, 3 * H:] = g
                cells[t] = c
                tanhc[t] = tc
                states[t] = h
        cache = (inputs, states, gates, cells, tanhc, W, U)
    else:
        xu = inputs @ params.U.T + params.b
        h = np.zeros(H)
        for t in range(T):
            h = np.tanh(params.W @ h + xu[t])
            states[t] = h
        cache = (inputs, states)
    return states, cache


def _cell_backward_over_time(params, cache, dstates, grads, prefix):
    """BPTT for one cell over one direction. dstates[t] is the gradient
    arriving at the hidden state emitted at step t (in the cell's own time
    order). Accumulates into `grads` and returns input gradients in the
    same order."""
    H = params.hidden
    if _is_lstm(params):
        inputs, states, gates, cells, tanhc, W, U = cache
        T = len(inputs)
        da_all = np.empty((T, 4 * H))
        dh_next = np.zeros(H)
        dc_next = np.zeros(H)
        dW = np.zeros_like(W)
        for t in range(T - 1, -1, -1):
            dh = dstates[t] + dh_next
            i, f, o = gates[t, :H], gates[t, H:2 * H], gates[t, 2 * H:3 * H]
            g = gates[t, 3 * H:]
            tc = tanhc[t]
            c_prev = cells[t - 1] if t > 0 else np.zeros(H)
            h_prev = states[t - 1] if t > 0 else np.zeros(H)
            do = dh * tc
            dc = dc_next + dh * o * (1.0 - tc * tc)
            da = da_all[t]
            da[:H] = dc * g * i * (1.0 - i)
            da[H:2 * H] = dc * c_prev * f * (1.0 - f)
            da[2 * H:3 * H] = do * o * (1.0 - o)
            da[3 * H:] = dc * i * (1.0 - g * g)
            dc_next = dc * f
            dW += np.outer(da, h_prev)
            dh_next = W.T @ da
        dU = da_all.T @ inputs
        db = da_all.sum(axis=0)
        dx_all = da_all @ U
        for k, gate in enumerate(("i", "f", "o", "c")):
            grads[f"{prefix}W_{gate}"] += dW[k * H:(k + 1) * H]
            grads[f"{prefix}U_{gate}"] += dU[k * H:(k + 1) * H]
            grads[f"{prefix}b_{gate}"] += db[k * H:(k + 1) * H]
    else:
        inputs, states = cache
        T = len(inputs)
        da_all = np.empty((T, H))
        dh_next = np.zeros(H)
        dW = np.zeros_like(params.W)
        for t in range(T - 1, -1, -1):
            dh = dstates[t] + dh_next
            h = states[t]
            h_prev = states[t - 1] if t > 0 else np.zeros(H)
            da = da_all[t]
            da[:] = dh * (1.0 - h * h)
            dW += np.outer(da, h_prev)
            dh_next = params.W.T @ da
        grads[prefix + "W"] += dW
        grads[prefix + "U"] += da_all.T @ inputs
        grads[prefix + "b"] += da_all.sum(axis=0)
        dx_all = da_all @ params.U
    return dx_all


def run_layer(params, inputs, direction="fwd"):
    """Hidden-state sequence of one recurrent pass over `inputs`.

    "fwd" processes positions first to last, "bwd" last to first; both start
    from a zero state, and "bwd" output is re-aligned to input positions.
    """
    if direction not in ("fwd", "bwd"):
        raise ValueError(f"direction must be 'fwd' or 'bwd', got {direction!r}")
    inputs = np.asarray(inputs, dtype=np.float64)
    if direction == "bwd":
        states, _ = _run_cell_with_cache(params, inputs[::-1])
        return states[::-1].copy()
    states, _ = _run_cell_with_cache(params, inputs)
    return states


def run_bilayer(fwd_params, bwd_params, inputs):
    """Concatenation of the forward and backward passes per position; output
    width is exactly 2H."""
    fwd = run_layer(fwd_params, inputs, "fwd")
    bwd = run_layer(bwd_params, inputs, "bwd")
    return np.concatenate([fwd, bwd], axis=1)


@dataclass
class TaggerConfig:
    labels: list[str]
    input_dim: int
    hidden: int = 100
    layers: int = 2
    cell: str = "lstm"
    bidirectional: bool = True
    dropout: float = 0.5

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError(f"layers must be >= 1, got {self.layers}")
        if self.hidden < 1:
            raise ValueError(f"hidden must be >= 1, got {self.hidden}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.cell not in ("lstm", "rnn"):
            raise ValueError(f"cell must be 'lstm' or 'rnn', got {self.cell!r}")
        if not self.labels:
            raise ValueError("label alphabet is empty")
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")

    @property
    def directions(self):
        return ("fwd", "bwd") if self.bidirectional else ("fwd",)

    @property
    def layer_output_dim(self):
        return self.hidden * (2 if self.bidirectional else 1)

    def layer_input_dim(self, layer):
        return self.input_dim if layer == 0 else self.layer_output_dim

    def to_dict(self):
        return {
            "labels": list(self.labels),
            "input_dim": self.input_dim,
            "hidden": self.hidden,
            "layers": self.layers,
            "cell": self.cell,
            "bidirectional": self.bidirectional,
            "dropout": self.dropout,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(labels=list(d["labels"]), input_dim=int(d["input_dim"]),
                   hidden=int(d["hidden"]), layers=int(d["layers"]),
                   cell=d["cell"], bidirectional=bool(d["bidirectional"]),
                   dropout=float(d["dropout"]))


class Tagger:
    """Stacked (bi)recurrent layers plus a per-token softmax classifier.

    `extra` is an arbitrary JSON-serializable dict carried through the model
    file; the CLI stores the feature pipeline description there so a saved
    model can be applied to new text.
    """

    def __init__(self, config, extra=None):
        self.config = config
        self.extra = extra or {}
        cell_cls = LstmCellParams if config.cell == "lstm" else RnnCellParams
        self.layers = []
        for l in range(config.layers):
            d_in = config.layer_input_dim(l)
            self.layers.append({d: cell_cls(config.hidden, d_in)
                                for d in config.directions})
        n_labels = len(config.labels)
        self.proj_w = np.zeros((n_labels, config.layer_output_dim))
        self.proj_b = np.zeros(n_labels)

    def param_items(self):
        """All parameters as (name, array) pairs in the canonical order used
        for updates, clipping, and serialization."""
        out = []
        for l, layer in enumerate(self.layers):
            for d in self.config.directions:
                for name, arr in layer[d].items():
                    out.append((f"layer{l}.{d}.{name}", arr))
        out.append(("proj.W", self.proj_w))
        out.append(("proj.b", self.proj_b))
        return out

    def params(self):
        return dict(self.param_items())

    def set_param(self, name, arr):
        if name == "proj.W":
            self.proj_w = arr
        elif name == "proj.b":
            self.proj_b = arr
        else:
            layer_part, direction, fieldname = name.split(".")
            setattr(self.layers[int(layer_part[5:])][direction], fieldname, arr)

    def zero_grads(self):
        return {name: np.zeros_like(arr) for name, arr in self.param_items()}


def init_params(config, rng, extra=None, forget_bias=1.0):
    """Fresh tagger: every matrix uniform in +-sqrt(3/fan_in), biases zero
    except the LSTM forget-gate bias (1.0, so early training does not wash
    memory out)."""
    tagger = Tagger(config, extra=extra)
    cell_cls = LstmCellParams if config.cell == "lstm" else RnnCellParams
    for l in range(config.layers):
        d_in = config.layer_input_dim(l)
        for d in config.directions:
            if config.cell == "lstm":
                tagger.layers[l][d] = cell_cls.init(rng, config.hidden, d_in,
                                                    forget_bias=forget_bias)
            else:
                tagger.layers[l][d] = cell_cls.init(rng, config.hidden, d_in)
    fan_in = config.layer_output_dim
    tagger.proj_w = uniform_matrix(rng, len(config.labels), fan_in,
                                   np.sqrt(3.0 / fan_in))
    return tagger


def forward(tagger, inputs, rng=None):
    """Per-token label distributions for one sentence.

    Train mode is selected by passing an rng: inter-layer inverted dropout
    masks are drawn from it (kept activations divided by the keep
    probability). Without an rng the pass is deterministic inference.
    Returns (T x L probabilities, cache for the backward pass).
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != tagger.config.input_dim:
        raise DimensionMismatch(
            f"forward: inputs {inputs.shape} do not match model input dim "
            f"{tagger.config.input_dim}")
    if len(inputs) == 0:
        raise EmptySequence("cannot tag an empty sentence")
    config = tagger.config
    keep = 1.0 - config.dropout
    use_dropout = rng is not None and config.dropout > 0.0

    layer_caches = []
    current = inputs
    for l, layer in enumerate(tagger.layers):
        outputs = []
        dir_caches = {}
        for d in config.directions:
            seq = current if d == "fwd" else current[::-1]
            states, caches = _run_cell_with_cache(layer[d], seq)
            dir_caches[d] = caches
            outputs.append(states if d == "fwd" else states[::-1])
        out = np.concatenate(outputs, axis=1) if len(outputs) > 1 else outputs[0]
        mask = None
        if use_dropout:
            mask = (rng.random(out.shape) < keep) / keep
            out = out * mask
        layer_caches.append({"input": current, "dirs": dir_caches,
                             "mask": mask, "output": out})
        current = out

    logits = current @ tagger.proj_w.T + tagger.proj_b
    probs = _softmax_rows(logits)
    cache = {"layers": layer_caches, "features": current, "logits": logits,
             "probs": probs}
    return probs, cache


def _softmax_rows(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax_rows(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def loss_and_gradients(tagger, inputs, gold_indices, rng=None):
    """Mean per-token cross-entropy and its gradient w.r.t. every parameter,
    by backpropagation through time. Gradients come back as a dict matching
    param_items() names."""
    config = tagger.config
    n_labels = len(config.labels)
    gold_indices = list(gold_indices)
    if len(gold_indices) != len(inputs):
        raise ValueError(
            f"got {len(gold_indices)} labels for {len(inputs)} tokens")
    for idx in gold_indices:
        if not 0 <= idx < n_labels:
            raise IndexError(f"label index {idx} out of range [0, {n_labels})")

    probs, cache = forward(tagger, inputs, rng=rng)
    T = len(inputs)
    logp = _log_softmax_rows(cache["logits"])
    loss = -float(np.mean(logp[np.arange(T), gold_indices]))

    grads = tagger.zero_grads()
    dlogits = probs.copy()
    for t, idx in enumerate(gold_indices):
        dlogits[t, idx] -= 1.0
    dlogits /= T

    grads["proj.W"] += dlogits.T @ cache["features"]
    grads["proj.b"] += dlogits.sum(axis=0)
    dcurrent = dlogits @ tagger.proj_w

    for l in range(config.layers - 1, -1, -1):
        layer_cache = cache["layers"][l]
        if layer_cache["mask"] is not None:
            dcurrent = dcurrent * layer_cache["mask"]
        hidden = config.hidden
        dinput = np.zeros_like(layer_cache["input"], dtype=np.float64)
        for k, d in enumerate(config.directions):
            dstates = dcurrent[:, k * hidden:(k + 1) * hidden]
            if d == "bwd":
                dstates = dstates[::-1]
            dx = _cell_backward_over_time(tagger.layers[l][d],
                                          layer_cache["dirs"][d], dstates,
                                          grads, f"layer{l}.{d}.")
            dinput += dx[::-1] if d == "bwd" else dx
        dcurrent = dinput
    return loss, grads


def sentence_loss(tagger, inputs, gold_indices, rng=None):
    """Mean per-token cross-entropy only (no gradients); the function the
    finite-difference oracle evaluates."""
    _, cache = forward(tagger, inputs, rng=rng)
    logp = _log_softmax_rows(cache["logits"])
    return -float(np.mean(logp[np.arange(len(inputs)), list(gold_indices)]))


def predict_indices(tagger, inputs):
    """Argmax label index per token (deterministic inference)."""
    probs, _ = forward(tagger, inputs, rng=None)
    return [int(np.argmax(probs[t])) for t in range(len(probs))]


def _config_blob(tagger):
    record = {"config": tagger.config.to_dict(), "extra": tagger.extra}
    return json.dumps(record, ensure_ascii=False, sort_keys=True).encode("utf-8")


def _checksum(data):
    return hashlib.sha256(data).digest()[:8]


def save(tagger, sink):
    """Serialize to the versioned container: magic "SQTG", u32 LE version,
    length-prefixed UTF-8 config record, parameter blocks as little-endian
    float64 in param_items() order, then a 64-bit checksum (leading 8 bytes
    of SHA-256) over everything before it."""
    blob = _config_blob(tagger)
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", FORMAT_VERSION)
    out += struct.pack("<I", len(blob))
    out += blob
    for _, arr in tagger.param_items():
        out += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    out += _checksum(bytes(out))
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "wb") as handle:
            handle.write(bytes(out))
    else:
        sink.write(bytes(out))


def load(source):
    """Inverse of save(); bit-exact parameter round-trip. Raises BadMagic,
    UnsupportedVersion, TruncatedFile, or ChecksumMismatch; never returns a
    partially filled model."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as handle:
            data = handle.read()
    else:
        data = source.read()
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagic(f"not a model file (magic {data[:4]!r})")
    if len(data) < 12:
        raise TruncatedFile("header cut short")
    version = struct.unpack("<I", data[4:8])[0]
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"container version {version}, "
                                 f"expected {FORMAT_VERSION}")
    blob_len = struct.unpack("<I", data[8:12])[0]
    if len(data) < 12 + blob_len + 8:
        raise TruncatedFile("config record cut short")
    record = json.loads(data[12:12 + blob_len].decode("utf-8"))
    config = TaggerConfig.from_dict(record["config"])
    tagger = Tagger(config, extra=record.get("extra") or {})

    param_bytes = sum(arr.size * 8 for _, arr in tagger.param_items())
    expected = 12 + blob_len + param_bytes + 8
    if len(data) < expected:
        raise TruncatedFile(
            f"file is {len(data)} bytes, expected {expected} for this config")

    body, stored_sum = data[:-8], data[-8:]
    if _checksum(body) != stored_sum:
        raise ChecksumMismatch("stored checksum does not match file contents")
    if len(data) != expected:
        raise ModelFormatError(
            f"{len(data) - expected} unexpected trailing bytes")

    offset = 12 + blob_len
    for name, arr in tagger.param_items():
        nbytes = arr.size * 8
        tagger.set_param(name, np.frombuffer(body[offset:offset + nbytes],
                                             dtype="<f8")
                         .reshape(arr.shape).copy())
        offset += nbytes
    return tagger
