"""Minimal reverse-mode autodiff over float64 numpy arrays.

Operations are recorded only while a :class:`Tape` is active::

    with Tape() as tape:
        loss = reduce_sum(tanh(matmul(x, w)))
    grads = tape.backward(loss)

Outside a tape every primitive just computes values, which is what inference uses.
"""

from __future__ import annotations

import contextvars
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

_ACTIVE_TAPE: contextvars.ContextVar = contextvars.ContextVar("active_tape", default=None)


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("value", "requires_grad", "grad", "name")

    def __init__(self, value, requires_grad: bool = False, name: str = ""):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def numpy(self) -> np.ndarray:
        return self.value

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad" if self.requires_grad else ""
        return f"Tensor({self.name or 'anon'}, shape={self.shape}{flag})"


def constant(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


@dataclass
class Record:
    op: str
    inputs: tuple
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class Tape:
    records: list = field(default_factory=list)

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE_TAPE.reset(self._token)
        return False

    def backward(self, loss: Tensor) -> dict:
        return backward(self, loss)


def apply(op: str, value, inputs: Sequence[Tensor], backward_fn) -> Tensor:
    """Create the output of a primitive and record it if any input needs a gradient.

    ``backward_fn`` maps the output gradient to one gradient (or None) per input.
    Custom primitives can be defined with this function.
    """
    out = Tensor(value)
    tape = _ACTIVE_TAPE.get()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.records.append(Record(op, tuple(inputs), out, backward_fn))
    return out


def backward(tape: Tape, loss: Tensor) -> dict:
    """Reverse pass over ``tape``.

    Gradients of leaf tensors (those not produced on the tape) are accumulated
    into ``tensor.grad`` and also returned as ``{tensor: grad}``.
    """
    if loss.value.size != 1:
        raise ShapeError(f"loss must be scalar, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    produced = {id(r.output) for r in tape.records}
    leaves: dict[int, Tensor] = {}
    for rec in reversed(tape.records):
        g = grads.pop(id(rec.output), None)
        if g is None:
            continue
        for inp, gi in zip(rec.inputs, rec.backward(g)):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = np.asarray(gi, dtype=np.float64).reshape(inp.shape)
            if key not in produced:
                leaves[key] = inp
    out = {}
    for key, t in leaves.items():
        g = grads[key]
        t.grad = g.copy() if t.grad is None else t.grad + g
        out[t] = g
    return out


# -- primitives --------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for 1-D and 2-D operands (numpy semantics)."""
    a, b = constant(a), constant(b)
    if a.value.ndim not in (1, 2) or b.value.ndim not in (1, 2):
        raise ShapeError("matmul supports 1-D and 2-D operands only")
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    av, bv = a.value, b.value

    def grad(g):
        a2 = av if av.ndim == 2 else av[None, :]
        b2 = bv if bv.ndim == 2 else bv[:, None]
        g2 = np.reshape(g, (a2.shape[0], b2.shape[1]))
        ga = (g2 @ b2.T).reshape(av.shape) if a.requires_grad else None
        gb = (a2.T @ g2).reshape(bv.shape) if b.requires_grad else None
        return ga, gb

    return apply("matmul", av @ bv, (a, b), grad)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may broadcast over leading axes of ``a`` (bias)."""
    a, b = constant(a), constant(b)
    try:
        value = a.value + b.value
    except ValueError:
        raise ShapeError(f"add shape mismatch {a.shape} + {b.shape}") from None
    if value.shape != a.shape and value.shape != b.shape:
        raise ShapeError(f"add shape mismatch {a.shape} + {b.shape}")
    return apply("add", value, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def scale(a: Tensor, c: float) -> Tensor:
    a = constant(a)
    return apply("scale", a.value * c, (a,), lambda g: (g * c,))


def tanh(a: Tensor) -> Tensor:
    a = constant(a)
    y = np.tanh(a.value)
    return apply("tanh", y, (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a: Tensor) -> Tensor:
    a = constant(a)
    y = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return apply("sigmoid", y, (a,), lambda g: (g * y * (1.0 - y),))


def _softmax(x: np.ndarray, axis: int) -> np.ndarray:
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    a = constant(a)
    y = _softmax(a.value, axis)

    def grad(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return apply("softmax", y, (a,), grad)


def embedding_lookup(matrix: Tensor, index) -> Tensor:
    """Rows of ``matrix`` at ``index`` (an int or an integer array)."""
    matrix = constant(matrix)
    idx = np.asarray(index, dtype=np.int64)
    n = matrix.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"embedding index out of range for {n} rows")

    def grad(g):
        gm = np.zeros_like(matrix.value)
        np.add.at(gm, idx, g)
        return (gm,)

    return apply("embedding_lookup", matrix.value[idx], (matrix,), grad)


def reduce_sum(a: Tensor, axis: Optional[int] = None) -> Tensor:
    a = constant(a)

    def grad(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return apply("sum", a.value.sum(axis=axis), (a,), grad)


def reduce_max(a: Tensor, axis: int = 0) -> Tensor:
    """Maximum along ``axis``; on ties the lowest index receives the whole gradient."""
    a = constant(a)
    arg = np.argmax(a.value, axis=axis)

    def grad(g):
        ga = np.zeros_like(a.value)
        np.put_along_axis(ga, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis=axis)
        return (ga,)

    return apply("max", np.take_along_axis(a.value, np.expand_dims(arg, axis), axis).squeeze(axis),
                 (a,), grad)


def weighted_sum(weights: Tensor, rows: Tensor) -> Tensor:
    """``sum_i weights[i] * rows[i]`` for weights (n,) and rows (n, D)."""
    weights, rows = constant(weights), constant(rows)
    if weights.value.ndim != 1 or rows.value.ndim != 2 or rows.shape[0] != weights.shape[0]:
        raise ShapeError(f"weighted_sum shape mismatch {weights.shape}, {rows.shape}")
    w, r = weights.value, rows.value
    return apply("weighted_sum", w @ r, (weights, rows), lambda g: (r @ g, np.outer(w, g)))


def concat(a: Tensor, b: Tensor, axis: int = -1) -> Tensor:
    a, b = constant(a), constant(b)
    try:
        value = np.concatenate([a.value, b.value], axis=axis)
    except ValueError:
        raise ShapeError(f"concat shape mismatch {a.shape}, {b.shape}") from None
    split = a.shape[axis]
    return apply("concat", value, (a, b),
                 lambda g: tuple(np.split(g, [split], axis=axis)))


def log_softmax_values(x: np.ndarray) -> np.ndarray:
    m = x.max()
    return x - m - np.log(np.exp(x - m).sum())


def cross_entropy(logits: Tensor, label) -> Tensor:
    """Mean of ``-log softmax(logits)[l]`` over one label or a sequence of labels."""
    logits = constant(logits)
    if logits.value.ndim != 1:
        raise ShapeError("cross_entropy expects 1-D logits")
    labels = np.atleast_1d(np.asarray(label, dtype=np.int64))
    if labels.size == 0:
        raise ValueError("cross_entropy needs at least one label")
    if labels.min() < 0 or labels.max() >= logits.shape[0]:
        raise IndexError("label out of range")
    logp = log_softmax_values(logits.value)
    loss = -logp[labels].mean()
    p = np.exp(logp)

    def grad(g):
        target = np.bincount(labels, minlength=logits.shape[0]) / labels.size
        return (g * (p - target),)

    return apply("cross_entropy", loss, (logits,), grad)


# -- checking ----------------------------------------------------------------

@dataclass
class GradCheckReport:
    passed: bool
    max_rel_error: float
    per_input: list
    tol: float

    def __str__(self):
        status = "pass" if self.passed else "FAIL"
        return f"gradient check {status}: max rel error {self.max_rel_error:.3e} (tol {self.tol:g})"


def gradient_check(f: Callable[..., Tensor], inputs: Sequence, h: float = 1e-4,
                   tol: float = 1e-4, floor: float = 1e-6) -> GradCheckReport:
    """Compare tape gradients of scalar ``f(*inputs)`` with central differences.

    Relative error per entry is ``|a - n| / max(|a|, |n|, floor)``; ``floor``
    keeps entries whose true gradient is ~0 from dividing noise by noise.
    """
    base = [np.array(constant(x).value, dtype=np.float64) for x in inputs]
    tensors = [Tensor(v.copy(), requires_grad=True) for v in base]
    with Tape() as tape:
        out = f(*tensors)
    tape.backward(out)
    per_input = []
    worst = 0.0
    for k, t in enumerate(tensors):
        analytic = t.grad if t.grad is not None else np.zeros_like(base[k])
        numeric = np.zeros_like(base[k])
        for j in np.ndindex(base[k].shape):
            vals = [b.copy() for b in base]
            vals[k][j] += h
            fp = float(f(*[Tensor(v) for v in vals]).value)
            vals[k][j] -= 2 * h
            fm = float(f(*[Tensor(v) for v in vals]).value)
            numeric[j] = (fp - fm) / (2 * h)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
        err = float(np.max(np.abs(analytic - numeric) / denom)) if numeric.size else 0.0
        per_input.append(err)
        worst = max(worst, err)
    return GradCheckReport(worst <= tol, worst, per_input, tol)
