"""Dense linear algebra, activations, seeded randomness, and the
finite-difference gradient oracle.

Everything works on float64 numpy arrays. Vectors are 1-d arrays, matrices
are 2-d arrays. All functions are pure; randomness only flows through an
explicitly passed generator (no global RNG anywhere in the package).
"""

import numpy as np

Rng = np.random.Generator


class DimensionMismatch(ValueError):
    """Operands do not conform; message names both shapes."""


def make_rng(seed):
    """Deterministic generator for the given integer seed."""
    return np.random.default_rng(seed)


def derive_rng(seed, *keys):
    """Independent deterministic stream for (seed, keys).

    Used to give each consumer of randomness (init, dropout, shuffle,
    embedding) its own stream so adding one consumer never perturbs the
    others.
    """
    return np.random.default_rng([int(seed)] + [int(k) for k in keys])


def sigmoid(x):
    """Element-wise logistic function, stable for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh_elem(x):
    """Element-wise tanh."""
    return np.tanh(np.asarray(x, dtype=np.float64))


def softmax(x):
    """Softmax with max-subtraction so large logits cannot overflow."""
    x = np.asarray(x, dtype=np.float64)
    shifted = x - np.max(x)
    e = np.exp(shifted)
    return e / e.sum()


def log_softmax(x):
    x = np.asarray(x, dtype=np.float64)
    shifted = x - np.max(x)
    return shifted - np.log(np.exp(shifted).sum())


def matvec(m, v):
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise DimensionMismatch(
            f"matvec: matrix {m.shape} does not conform with vector {v.shape}")
    return m @ v


def add(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"add: {a.shape} vs {b.shape}")
    return a + b


def hadamard(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"hadamard: {a.shape} vs {b.shape}")
    return a * b


def outer_product(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1:
        raise DimensionMismatch(f"outer_product: {a.shape} vs {b.shape}")
    return np.outer(a, b)


def scale(a, s):
    return np.asarray(a, dtype=np.float64) * float(s)


def uniform_vector(rng, dim, bound):
    """Vector of `dim` samples from uniform[-bound, +bound]."""
    if dim < 1:
        raise ValueError(f"uniform_vector: dim must be >= 1, got {dim}")
    if bound <= 0:
        raise ValueError(f"uniform_vector: bound must be > 0, got {bound}")
    return rng.uniform(-bound, bound, size=dim)


def uniform_matrix(rng, rows, cols, bound):
    if rows < 1 or cols < 1:
        raise ValueError(f"uniform_matrix: bad shape ({rows}, {cols})")
    return rng.uniform(-bound, bound, size=(rows, cols))


def finite_diff_grad(f, params, epsilon=1e-5):
    """Central-difference gradient of scalar f over a parameter block.

    `params` is either a single float64 array or a dict of name -> array;
    the result mirrors the structure. Arrays are perturbed in place and
    restored, so f may close over `params` directly.
    """
    if isinstance(params, np.ndarray):
        block = {"_": params}
        grads = {"_": None}
    else:
        block = params
        grads = {}
    for name, arr in block.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            hi = f(params)
            flat[i] = orig - epsilon
            lo = f(params)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * epsilon)
        grads[name] = g
    if isinstance(params, np.ndarray):
        return grads["_"]
    return grads


def gradient_relative_error(analytic, numeric, floor=1e-6):
    """Worst element-wise relative discrepancy between two gradient blocks.

    The denominator is floored so that entries where both gradients are
    essentially zero do not turn finite-difference noise into a spurious
    mismatch.
    """
    worst = 0.0
    for name in analytic:
        a = np.asarray(analytic[name], dtype=np.float64)
        n = np.asarray(numeric[name], dtype=np.float64)
        if a.shape != n.shape:
            raise DimensionMismatch(
                f"gradient blocks disagree at {name}: {a.shape} vs {n.shape}")
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        err = np.max(np.abs(a - n) / denom) if a.size else 0.0
        worst = max(worst, float(err))
    return worst
