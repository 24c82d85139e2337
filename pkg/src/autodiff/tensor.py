# -*- coding: utf-8 -*-
"""
Dense float64 tensors with tape-based reverse-mode differentiation

Every model in the pipeline (LPV rollouts, BNN likelihoods, meta losses, OCP
objectives) is written against the primitives in this module. A Tape records
each primitive applied to a tracked tensor; Tape.backward walks the record in
reverse creation order, which is a reverse topological order of the graph.
"""

import logging
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from ..errors import NonFiniteError, ShapeError, TapeError

logger = logging.getLogger(__name__)

Scalar = Union[int, float]
ArrayLike = Union[Scalar, Sequence, np.ndarray]


class Tensor:
    """Dense float64 array, optionally recorded on a Tape"""

    __slots__ = ("values", "tape", "name", "_index", "_generation")

    def __init__(self, values: ArrayLike, tape: Optional["Tape"] = None, name: Optional[str] = None):
        self.values = np.array(values, dtype=np.float64)
        self.tape = tape
        self.name = name
        self._index = -1
        self._generation = -1

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def tracked(self) -> bool:
        return self.tape is not None

    def numpy(self) -> np.ndarray:
        """Return a copy of the raw values"""
        return self.values.copy()

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeError("item", self.shape)
        return float(self.values.reshape(-1)[0])

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, tracked={self.tracked})"

    # Operator sugar; every operator routes through a primitive.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)


class Tape:
    """Ordered record of primitive applications for one differentiation pass"""

    def __init__(self):
        self._nodes: List[Tensor] = []
        self._parents: List[Tuple[Tensor, ...]] = []
        self._backward_fns: List[Optional[Callable]] = []
        self._leaves: List[Tensor] = []
        self._generation = 0
        self._consumed = False

    def __len__(self):
        return len(self._nodes)

    def watch(self, values: ArrayLike, name: Optional[str] = None) -> Tensor:
        """Create a tracked leaf tensor"""
        if self._consumed:
            raise TapeError("Tape already differentiated; call reset() before recording again")
        leaf = Tensor(values, tape=self, name=name)
        if not np.all(np.isfinite(leaf.values)):
            raise NonFiniteError(f"watch({name})")
        self._register(leaf, (), None)
        self._leaves.append(leaf)
        return leaf

    def reset(self) -> None:
        """Drop the record; tensors from earlier generations become unusable"""
        self._nodes.clear()
        self._parents.clear()
        self._backward_fns.clear()
        self._leaves.clear()
        self._generation += 1
        self._consumed = False

    def _register(self, tensor: Tensor, parents: Tuple[Tensor, ...], backward_fn: Optional[Callable]):
        tensor._index = len(self._nodes)
        tensor._generation = self._generation
        self._nodes.append(tensor)
        self._parents.append(parents)
        self._backward_fns.append(backward_fn)

    def _check_member(self, tensor: Tensor) -> None:
        if tensor.tape is not self or tensor._generation != self._generation:
            raise TapeError("Tensor belongs to another tape or to a reset generation")

    def backward(self, loss: Tensor) -> "Gradients":
        """
        Propagate d(loss)/d(node) from a scalar loss back to every leaf

        Args:
            loss: Scalar tensor recorded on this tape

        Returns:
            Gradients keyed by the tracked leaf tensors
        """
        if not isinstance(loss, Tensor) or loss.tape is None:
            raise TapeError("backward() needs a tape-tracked loss")
        self._check_member(loss)
        if loss.values.size != 1:
            raise TapeError(f"backward() needs a scalar loss, got shape {loss.shape}")
        if self._consumed:
            raise TapeError("backward() already ran on this tape; reset() it first")
        self._consumed = True

        grads: Dict[int, np.ndarray] = {loss._index: np.ones_like(loss.values)}
        for index in range(loss._index, -1, -1):
            grad = grads.get(index)
            backward_fn = self._backward_fns[index]
            if grad is None or backward_fn is None:
                continue
            parent_grads = backward_fn(grad)
            for parent, parent_grad in zip(self._parents[index], parent_grads):
                if parent.tape is None or parent_grad is None:
                    continue
                slot = parent._index
                if slot in grads:
                    grads[slot] = grads[slot] + parent_grad
                else:
                    grads[slot] = parent_grad

        leaf_grads = {}
        for leaf in self._leaves:
            leaf_grads[leaf._index] = grads.get(leaf._index, np.zeros_like(leaf.values))
        logger.debug(f"Backward pass over {loss._index + 1} nodes, {len(self._leaves)} leaves")
        return Gradients(leaf_grads)


class Gradients:
    """Read-only mapping from tracked leaf tensors to accumulated gradients"""

    def __init__(self, by_index: Dict[int, np.ndarray]):
        self._by_index = by_index

    def __getitem__(self, leaf: Tensor) -> np.ndarray:
        try:
            return self._by_index[leaf._index]
        except KeyError:
            raise TapeError(f"{leaf!r} is not a leaf of the differentiated tape") from None

    def __len__(self):
        return len(self._by_index)


# ---------------------------------------------------------------------------
# Primitive plumbing
# ---------------------------------------------------------------------------

def as_tensor(value: Union[Tensor, ArrayLike]) -> Tensor:
    """Wrap raw numbers as an untracked constant"""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _common_tape(primitive: str, inputs: Iterable[Tensor]) -> Optional[Tape]:
    tape = None
    for t in inputs:
        if t.tape is None:
            continue
        t.tape._check_member(t)
        if tape is None:
            tape = t.tape
        elif t.tape is not tape:
            raise TapeError(f"{primitive}: inputs recorded on different tapes")
    if tape is not None and tape._consumed:
        raise TapeError(f"{primitive}: tape already differentiated; reset() it first")
    return tape


def _make(primitive: str, values: np.ndarray, inputs: Tuple[Tensor, ...], backward_fn: Callable) -> Tensor:
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(primitive)
    tape = _common_tape(primitive, inputs)
    out = Tensor(values, tape=tape)
    if tape is not None:
        tape._register(out, inputs, backward_fn)
    return out


def _is_scalar(t: Tensor) -> bool:
    return t.values.ndim == 0


def _elementwise_pair(primitive: str, a, b) -> Tuple[Tensor, Tensor]:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape and not (_is_scalar(a) or _is_scalar(b)):
        raise ShapeError(primitive, a.shape, b.shape)
    return a, b


def _reduce_to(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    return np.asarray(grad.sum()).reshape(shape)


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _elementwise_pair("add", a, b)
    return _make("add", a.values + b.values, (a, b),
                 lambda g: (_reduce_to(g, a.shape), _reduce_to(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _elementwise_pair("sub", a, b)
    return _make("sub", a.values - b.values, (a, b),
                 lambda g: (_reduce_to(g, a.shape), _reduce_to(-g, b.shape)))


def mul(a, b) -> Tensor:
    """Elementwise (Hadamard) product; a 0-d operand scales the other"""
    a, b = _elementwise_pair("mul", a, b)
    return _make("mul", a.values * b.values, (a, b),
                 lambda g: (_reduce_to(g * b.values, a.shape), _reduce_to(g * a.values, b.shape)))


def div(a, b) -> Tensor:
    a, b = _elementwise_pair("div", a, b)
    out = a.values / b.values
    return _make("div", out, (a, b),
                 lambda g: (_reduce_to(g / b.values, a.shape), _reduce_to(-g * out / b.values, b.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make("neg", -a.values, (a,), lambda g: (-g,))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    return _make("matmul", a.values @ b.values, (a, b),
                 lambda g: (g @ b.values.T, a.values.T @ g))


def elu(a) -> Tensor:
    """ELU with alpha = 1"""
    a = as_tensor(a)
    x = a.values
    out = np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))
    slope = np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))
    return _make("elu", out, (a,), lambda g: (g * slope,))


def softplus(a) -> Tensor:
    a = as_tensor(a)
    return _make("softplus", np.logaddexp(0.0, a.values), (a,),
                 lambda g: (g * expit(a.values),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    active = a.values > 0
    return _make("relu", np.where(active, a.values, 0.0), (a,), lambda g: (g * active,))


def square(a) -> Tensor:
    a = as_tensor(a)
    return _make("square", a.values * a.values, (a,), lambda g: (2.0 * a.values * g,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.values)
    return _make("exp", out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.values)
    return _make("log", out, (a,), lambda g: (g / a.values,))


def logaddexp(a, b) -> Tensor:
    """log(exp(a) + exp(b)) without overflow"""
    a, b = _elementwise_pair("logaddexp", a, b)
    out = np.logaddexp(a.values, b.values)
    return _make("logaddexp", out, (a, b),
                 lambda g: (_reduce_to(g * np.exp(a.values - out), a.shape),
                            _reduce_to(g * np.exp(b.values - out), b.shape)))


def mean(a) -> Tensor:
    a = as_tensor(a)
    if a.values.size == 0:
        raise ShapeError("mean", a.shape)
    n = a.values.size
    return _make("mean", np.asarray(a.values.mean()), (a,),
                 lambda g: (np.full(a.shape, float(g) / n),))


def sum(a, axis: Optional[int] = None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    """Sum over all entries (0-d result) or along one axis (dimension kept)"""
    a = as_tensor(a)
    if axis is None:
        return _make("sum", np.asarray(a.values.sum()), (a,),
                     lambda g: (np.full(a.shape, float(g)),))
    if axis >= a.values.ndim:
        raise ShapeError(f"sum(axis={axis})", a.shape)
    out = a.values.sum(axis=axis, keepdims=True)
    return _make("sum", out, (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.values.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", a.shape, tuple(shape)) from None
    return _make("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.values.ndim != 2:
        raise ShapeError("transpose", a.shape)
    return _make("transpose", a.values.T.copy(), (a,), lambda g: (g.T,))


def take(a, indices: Sequence[int], axis: int = 0) -> Tensor:
    """Gather rows (axis 0) or columns (axis 1) of a 2-D tensor"""
    a = as_tensor(a)
    if a.values.ndim != 2 or axis not in (0, 1):
        raise ShapeError(f"take(axis={axis})", a.shape)
    idx = np.asarray(indices, dtype=np.intp)
    if idx.size and (idx.min() < -a.shape[axis] or idx.max() >= a.shape[axis]):
        raise ShapeError("take", a.shape, idx.shape)
    out = np.take(a.values, idx, axis=axis)

    def backward_fn(g):
        full = np.zeros_like(a.values)
        if axis == 0:
            np.add.at(full, idx, g)
        else:
            np.add.at(full.T, idx, g.T)
        return (full,)

    return _make("take", out, (a,), backward_fn)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ShapeError("concat")
    try:
        out = np.concatenate([p.values for p in parts], axis=axis)
    except ValueError:
        raise ShapeError("concat", *(p.shape for p in parts)) from None
    splits = np.cumsum([p.shape[axis] for p in parts])[:-1]
    return _make("concat", out, tuple(parts),
                 lambda g: tuple(np.split(g, splits, axis=axis)))


PRIMITIVES: Dict[str, Callable[..., Tensor]] = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "neg": neg,
    "matmul": matmul,
    "elu": elu,
    "softplus": softplus,
    "relu": relu,
    "square": square,
    "exp": exp,
    "log": log,
    "logaddexp": logaddexp,
    "mean": mean,
    "sum": sum,
    "reshape": reshape,
    "transpose": transpose,
    "take": take,
    "concat": concat,
}


def forward_primitive(kind: str, *inputs, **options) -> Tensor:
    """Apply a named primitive; the result is recorded when any input is tracked"""
    try:
        primitive = PRIMITIVES[kind]
    except KeyError:
        raise ShapeError(f"unknown primitive '{kind}'") from None
    return primitive(*inputs, **options)
