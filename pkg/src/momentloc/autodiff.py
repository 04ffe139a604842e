"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Design, in brief:

- ``Parameter`` is a named leaf tensor with a persistent gradient buffer.
- ``Tape`` records every operation as a ``Node`` in creation order; scalars are
  0-d arrays so every value is an ndarray. Creation order is a topological
  order of the DAG, so ``backward`` is a single reverse sweep.
- A tape built with ``recording=False`` runs the identical forward expressions
  without recording anything. Inference uses this mode and produces values
  bit-identical to a recording tape, because there is exactly one code path
  for the math.
- No broadcasting: elementwise ops require equal shapes, matmul supports the
  (m,k)@(k,n), (m,k)@(k,) and (k,)@(k,) cases only. Shape mismatches raise
  immediately with both shapes in the message.

Gradient conventions: ``backward`` accumulates with ``+=`` so shared subtrees
sum naturally; ``max_select`` routes the gradient to the first argmax on ties;
``relu`` has zero gradient at exactly zero.
"""

from __future__ import annotations

import struct
from collections.abc import Iterable, Mapping, Sequence

import numpy as np

NORMALIZE_EPS = 1e-8

CHECKPOINT_MAGIC = b"MLLC1"


def as_array(value: object) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains non-finite values")
    return arr


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # exp of a non-positive argument only, so no overflow on either branch
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


class Parameter:
    """Named leaf tensor. ``trainable=False`` freezes it under sgd_step."""

    __slots__ = ("name", "value", "grad", "trainable")

    def __init__(self, name: str, value: object, trainable: bool = True):
        self.name = name
        self.value = as_array(value)
        self.grad = np.zeros_like(self.value)
        self.trainable = trainable

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.value.shape}, trainable={self.trainable})"


class Node:
    """One recorded value. Gradient is allocated only on recording tapes."""

    __slots__ = ("value", "grad", "_backward")

    def __init__(self, value: np.ndarray):
        self.value = value
        self.grad = None
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape


class Tape:
    """Operation recorder. All ops are methods so the graph has one owner."""

    def __init__(self, recording: bool = True):
        self.recording = recording
        self.nodes: list[Node] = []
        self._swept = False

    def _make(self, value: np.ndarray, backward=None) -> Node:
        node = Node(value)
        if self.recording:
            node.grad = np.zeros_like(value)
            node._backward = backward
            self.nodes.append(node)
        return node

    # -- leaves ------------------------------------------------------------

    def constant(self, value: object) -> Node:
        return self._make(as_array(value))

    def param(self, p: Parameter) -> Node:
        def back(node: Node) -> None:
            p.grad += node.grad

        return self._make(p.value, back)

    # -- elementwise -------------------------------------------------------

    def _binary_elementwise(self, a: Node, b: Node, op: str) -> None:
        if a.value.shape != b.value.shape:
            raise ValueError(f"{op}: shape mismatch {a.value.shape} vs {b.value.shape}")

    def add(self, a: Node, b: Node) -> Node:
        self._binary_elementwise(a, b, "add")

        def back(node: Node) -> None:
            a.grad += node.grad
            b.grad += node.grad

        return self._make(a.value + b.value, back)

    def sub(self, a: Node, b: Node) -> Node:
        self._binary_elementwise(a, b, "sub")

        def back(node: Node) -> None:
            a.grad += node.grad
            b.grad -= node.grad

        return self._make(a.value - b.value, back)

    def hadamard(self, a: Node, b: Node) -> Node:
        self._binary_elementwise(a, b, "hadamard")

        def back(node: Node) -> None:
            a.grad += node.grad * b.value
            b.grad += node.grad * a.value

        return self._make(a.value * b.value, back)

    def scale(self, a: Node, c: float) -> Node:
        c = float(c)

        def back(node: Node) -> None:
            a.grad += node.grad * c

        return self._make(a.value * c, back)

    def tanh(self, a: Node) -> Node:
        out = np.tanh(a.value)

        def back(node: Node) -> None:
            a.grad += node.grad * (1.0 - out * out)

        return self._make(out, back)

    def sigmoid(self, a: Node) -> Node:
        out = _sigmoid(a.value)

        def back(node: Node) -> None:
            a.grad += node.grad * out * (1.0 - out)

        return self._make(out, back)

    def relu(self, a: Node) -> Node:
        def back(node: Node) -> None:
            a.grad += node.grad * (a.value > 0)

        return self._make(np.maximum(a.value, 0.0), back)

    def softplus(self, a: Node) -> Node:
        def back(node: Node) -> None:
            a.grad += node.grad * _sigmoid(a.value)

        return self._make(np.logaddexp(0.0, a.value), back)

    # -- linear algebra ------------------------------------------------------

    def matmul(self, a: Node, b: Node) -> Node:
        av, bv = a.value, b.value
        if av.ndim == 2 and bv.ndim == 2 and av.shape[1] == bv.shape[0]:

            def back(node: Node) -> None:
                a.grad += node.grad @ bv.T
                b.grad += av.T @ node.grad

        elif av.ndim == 2 and bv.ndim == 1 and av.shape[1] == bv.shape[0]:

            def back(node: Node) -> None:
                a.grad += np.outer(node.grad, bv)
                b.grad += av.T @ node.grad

        elif av.ndim == 1 and bv.ndim == 1 and av.shape == bv.shape:

            def back(node: Node) -> None:
                a.grad += node.grad * bv
                b.grad += node.grad * av

        else:
            raise ValueError(f"matmul: incompatible shapes {av.shape} and {bv.shape}")
        return self._make(np.asarray(av @ bv), back)

    def concat(self, parts: Sequence[Node]) -> Node:
        if not parts:
            raise ValueError("concat of zero vectors")
        for p in parts:
            if p.value.ndim != 1:
                raise ValueError(f"concat needs 1-d inputs, got shape {p.value.shape}")
        sizes = [p.value.shape[0] for p in parts]
        offsets = np.cumsum([0] + sizes)

        def back(node: Node) -> None:
            for p, lo, hi in zip(parts, offsets, offsets[1:]):
                p.grad += node.grad[lo:hi]

        return self._make(np.concatenate([p.value for p in parts]), back)

    def slice1d(self, a: Node, lo: int, hi: int) -> Node:
        if a.value.ndim != 1 or not 0 <= lo <= hi <= a.value.shape[0]:
            raise ValueError(f"slice1d: bad range [{lo}, {hi}) for shape {a.value.shape}")

        def back(node: Node) -> None:
            a.grad[lo:hi] += node.grad

        return self._make(a.value[lo:hi].copy(), back)

    def take_row(self, a: Node, row: int) -> Node:
        if a.value.ndim != 2 or not 0 <= row < a.value.shape[0]:
            raise ValueError(f"take_row: row {row} out of range for shape {a.value.shape}")

        def back(node: Node) -> None:
            a.grad[row] += node.grad

        return self._make(a.value[row].copy(), back)

    def sum_all(self, a: Node) -> Node:
        def back(node: Node) -> None:
            a.grad += node.grad

        return self._make(np.asarray(a.value.sum()), back)

    # -- similarity building blocks -----------------------------------------

    def l2_normalize(self, a: Node, eps: float = NORMALIZE_EPS) -> Node:
        if a.value.ndim != 1:
            raise ValueError(f"l2_normalize needs a vector, got shape {a.value.shape}")
        norm = float(np.sqrt(np.dot(a.value, a.value)))
        denom = max(norm, eps)
        out = a.value / denom

        def back(node: Node) -> None:
            if norm >= eps:
                a.grad += (node.grad - np.dot(node.grad, out) * out) / denom
            else:
                a.grad += node.grad / denom

        return self._make(out, back)

    def squared_distance(self, a: Node, b: Node) -> Node:
        self._binary_elementwise(a, b, "squared_distance")
        diff = a.value - b.value

        def back(node: Node) -> None:
            g = 2.0 * node.grad * diff
            a.grad += g
            b.grad -= g

        return self._make(np.asarray(np.dot(diff, diff)), back)

    def max_select(self, scores: Sequence[Node]) -> tuple[Node, int]:
        """Max over scalar nodes; ties go to the earliest. Subgradient routes
        entirely to the selected input."""
        if not scores:
            raise ValueError("max_select over an empty set")
        for s in scores:
            if s.value.shape != ():
                raise ValueError(f"max_select needs scalars, got shape {s.value.shape}")
        idx = int(np.argmax([s.value for s in scores]))
        chosen = scores[idx]

        def back(node: Node) -> None:
            chosen.grad += node.grad

        return self._make(chosen.value.copy(), back), idx


def backward(tape: Tape, root: Node) -> None:
    """Reverse sweep from a scalar root; every node ends with d(root)/d(node).

    A second sweep on the same tape is an error: gradients would silently
    double. Build a fresh tape per loss evaluation.
    """
    if not tape.recording:
        raise ValueError("cannot run backward on a non-recording tape")
    if root.value.shape != ():
        raise ValueError(f"backward root must be scalar, got shape {root.value.shape}")
    if tape._swept:
        raise RuntimeError("backward already ran on this tape")
    tape._swept = True
    root.grad[...] = 1.0
    for node in reversed(tape.nodes):
        if node._backward is not None:
            node._backward(node)


def sgd_step(params: Iterable[Parameter], lr: float) -> None:
    """In-place SGD update on trainable parameters; zeroes every gradient."""
    for p in params:
        if p.trainable:
            p.value -= lr * p.grad
        p.grad[...] = 0.0


# -- checkpoint wire format ---------------------------------------------------
#
# magic "MLLC1"; u64 little-endian tensor count; then per tensor (sorted by
# name): u64 name length, UTF-8 name, u64 rank, u64 dims, float64 LE data in
# row-major order.


def save_checkpoint(path: str, tensors: Mapping[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(tensors)))
        for name in sorted(tensors):
            # asarray (not ascontiguousarray) keeps 0-d tensors 0-d
            arr = np.asarray(tensors[name], dtype="<f8", order="C")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<Q", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<Q", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes(order="C"))


def load_checkpoint(path: str) -> dict[str, np.ndarray]:
    def read_exact(fh, n: int) -> bytes:
        buf = fh.read(n)
        if len(buf) != n:
            raise ValueError(f"truncated checkpoint {path!r}")
        return buf

    with open(path, "rb") as fh:
        if fh.read(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path!r} is not a checkpoint (bad magic)")
        (count,) = struct.unpack("<Q", read_exact(fh, 8))
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<Q", read_exact(fh, 8))
            name = read_exact(fh, name_len).decode("utf-8")
            (rank,) = struct.unpack("<Q", read_exact(fh, 8))
            shape = struct.unpack(f"<{rank}Q", read_exact(fh, 8 * rank)) if rank else ()
            n_items = int(np.prod(shape, dtype=np.int64)) if shape else 1
            data = np.frombuffer(read_exact(fh, 8 * n_items), dtype="<f8")
            tensors[name] = data.reshape(shape).astype(np.float64)
        if fh.read(1):
            raise ValueError(f"trailing bytes after {count} tensors in {path!r}")
    return tensors
