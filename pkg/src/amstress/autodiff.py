"""Reverse-mode automatic differentiation over small computation graphs.

Graphs are built lazily: constructing an expression records the operation,
and ``evaluate`` / ``evaluate_with_gradients`` run the forward and backward
sweeps for a given binding of parameter ids to values.  Node values are
numpy arrays (0-d for scalars) and elementwise operations broadcast, so a
single node can carry a whole vector of LSTM gate activations.

    >>> x, y = param("x"), param("y")
    >>> value, grads = evaluate_with_gradients(x * y, {"x": 3.0, "y": 4.0})
    >>> value, float(grads["x"]), float(grads["y"])
    (12.0, 4.0, 3.0)
"""

from __future__ import annotations

import itertools
from typing import Mapping, Sequence

import numpy as np

MAX_NODES = 10**7

_ids = itertools.count()


class DomainError(ValueError):
    """An operation was evaluated outside its mathematical domain."""


class UnboundParameterError(KeyError):
    pass


class Expr:
    __slots__ = ("op", "args", "attr", "name", "value", "grad", "uid")

    def __init__(self, op: str, args: tuple = (), attr=None, name: str | None = None):
        self.op = op
        self.args = args
        self.attr = attr
        self.name = name
        self.value = None
        self.grad = None
        self.uid = next(_ids)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Expr<{self.op}{label}>"

    # operator sugar
    def __add__(self, other):
        return Expr("add", (self, as_expr(other)))

    def __radd__(self, other):
        return Expr("add", (as_expr(other), self))

    def __sub__(self, other):
        return Expr("sub", (self, as_expr(other)))

    def __rsub__(self, other):
        return Expr("sub", (as_expr(other), self))

    def __mul__(self, other):
        return Expr("mul", (self, as_expr(other)))

    def __rmul__(self, other):
        return Expr("mul", (as_expr(other), self))

    def __truediv__(self, other):
        return Expr("div", (self, as_expr(other)))

    def __rtruediv__(self, other):
        return Expr("div", (as_expr(other), self))

    def __neg__(self):
        return Expr("neg", (self,))

    def __pow__(self, other):
        return Expr("pow", (self, as_expr(other)))

    def __rpow__(self, other):
        return Expr("pow", (as_expr(other), self))

    def __matmul__(self, other):
        return Expr("matmul", (self, as_expr(other)))

    def __rmatmul__(self, other):
        return Expr("matmul", (as_expr(other), self))

    def __getitem__(self, index):
        return Expr("getitem", (self,), attr=index)


# --- leaves -----------------------------------------------------------------

def const(value, name: str | None = None) -> Expr:
    e = Expr("const", name=name)
    e.attr = np.asarray(value, dtype=float)
    return e


def inp(value, name: str | None = None) -> Expr:
    """A data input; behaves like a constant but is labelled as an input."""
    e = Expr("input", name=name)
    e.attr = np.asarray(value, dtype=float)
    return e


def param(pid: str) -> Expr:
    return Expr("param", name=pid)


def as_expr(x) -> Expr:
    return x if isinstance(x, Expr) else const(x)


# --- elementary functions -----------------------------------------------------

def exp(x) -> Expr:
    return Expr("exp", (as_expr(x),))


def ln(x) -> Expr:
    return Expr("ln", (as_expr(x),))


def tanh(x) -> Expr:
    return Expr("tanh", (as_expr(x),))


def logistic(x) -> Expr:
    return Expr("logistic", (as_expr(x),))


def softplus(x) -> Expr:
    return Expr("softplus", (as_expr(x),))


def square(x) -> Expr:
    return Expr("square", (as_expr(x),))


def clamp_min(x, floor: float) -> Expr:
    """max(x, floor); the gradient is passed through only where x > floor."""
    return Expr("clamp_min", (as_expr(x),), attr=float(floor))


def sum_all(x) -> Expr:
    return Expr("sum", (as_expr(x),))


def mean_all(x) -> Expr:
    return Expr("mean", (as_expr(x),))


def concat(parts: Sequence[Expr], axis: int = 0) -> Expr:
    return Expr("concat", tuple(as_expr(p) for p in parts), attr=axis)


# --- numerics -------------------------------------------------------------------

def _logistic(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softplus(x):
    return np.logaddexp(0.0, x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _basic_index(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (slice, int)) or p is None or p is Ellipsis for p in parts)


def _is_integral(a: np.ndarray) -> bool:
    return bool(np.all(a == np.round(a)))


def _forward(node: Expr, v: list):
    op = node.op
    if op == "add":
        return v[0] + v[1]
    if op == "sub":
        return v[0] - v[1]
    if op == "mul":
        return v[0] * v[1]
    if op == "matmul":
        return v[0] @ v[1]
    if op == "getitem":
        return v[0][node.attr]
    if op == "logistic":
        return _logistic(v[0])
    if op == "tanh":
        return np.tanh(v[0])
    if op == "div":
        if np.any(v[1] == 0):
            raise DomainError(f"division by zero at {node!r}")
        return v[0] / v[1]
    if op == "neg":
        return -v[0]
    if op == "exp":
        return np.exp(v[0])
    if op == "ln":
        if np.any(v[0] <= 0):
            raise DomainError(f"ln of non-positive argument at {node!r}")
        return np.log(v[0])
    if op == "pow":
        base, expo = v
        learnable_exp = node.args[1].op not in ("const", "input")
        if (learnable_exp or not _is_integral(expo)) and np.any(base <= 0):
            raise DomainError(f"pow with non-positive base at {node!r}")
        return base ** expo
    if op == "softplus":
        return _softplus(v[0])
    if op == "square":
        return v[0] * v[0]
    if op == "clamp_min":
        return np.maximum(v[0], node.attr)
    if op == "sum":
        return np.asarray(v[0].sum())
    if op == "mean":
        return np.asarray(v[0].mean())
    if op == "concat":
        return np.concatenate(v, axis=node.attr)
    raise ValueError(f"unknown op {op!r}")


def _backward(node: Expr, g: np.ndarray, v: list, need: list) -> list:
    """Adjoint contributions for each argument (None where not needed)."""
    op = node.op
    out = node.value
    if op == "add":
        return [_unbroadcast(g, v[0].shape) if need[0] else None,
                _unbroadcast(g, v[1].shape) if need[1] else None]
    if op == "sub":
        return [_unbroadcast(g, v[0].shape) if need[0] else None,
                _unbroadcast(-g, v[1].shape) if need[1] else None]
    if op == "mul":
        return [_unbroadcast(g * v[1], v[0].shape) if need[0] else None,
                _unbroadcast(g * v[0], v[1].shape) if need[1] else None]
    if op == "matmul":
        a, b = v
        ga = gb = None
        if need[0]:
            ga = np.outer(g, b) if b.ndim == 1 else g @ b.T
        if need[1]:
            gb = a.T @ g
        return [ga, gb]
    if op == "getitem":
        full = np.zeros_like(v[0])
        if _basic_index(node.attr):
            full[node.attr] += g
        else:
            np.add.at(full, node.attr, g)
        return [full]
    if op == "logistic":
        return [g * out * (1.0 - out)]
    if op == "tanh":
        return [g * (1.0 - out * out)]
    if op == "div":
        a, b = v
        return [_unbroadcast(g / b, a.shape) if need[0] else None,
                _unbroadcast(-g * a / (b * b), b.shape) if need[1] else None]
    if op == "neg":
        return [-g]
    if op == "exp":
        return [g * out]
    if op == "ln":
        return [g / v[0]]
    if op == "pow":
        base, expo = v
        gb = ge = None
        if need[0]:
            gb = _unbroadcast(g * expo * base ** (expo - 1.0), base.shape)
        if need[1]:
            ge = _unbroadcast(g * out * np.log(base), expo.shape)
        return [gb, ge]
    if op == "softplus":
        return [g * _logistic(v[0])]
    if op == "square":
        return [2.0 * g * v[0]]
    if op == "clamp_min":
        return [g * (v[0] > node.attr)]
    if op == "sum":
        return [np.broadcast_to(g, v[0].shape).copy()]
    if op == "mean":
        return [np.broadcast_to(g / v[0].size, v[0].shape).copy()]
    if op == "concat":
        grads = []
        start = 0
        for a, n in zip(v, need):
            size = a.shape[node.attr]
            idx = [slice(None)] * g.ndim
            idx[node.attr] = slice(start, start + size)
            grads.append(g[tuple(idx)] if n else None)
            start += size
        return grads
    raise ValueError(f"unknown op {op!r}")


# --- graph traversal ------------------------------------------------------------

def topological_order(root: Expr) -> list[Expr]:
    order: list[Expr] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            if len(order) > MAX_NODES:
                raise RuntimeError(f"graph exceeds {MAX_NODES} nodes")
            continue
        if node.uid in seen:
            continue
        seen.add(node.uid)
        stack.append((node, True))
        for a in node.args:
            if a.uid not in seen:
                stack.append((a, False))
    return order


def node_count(root: Expr) -> int:
    return len(topological_order(root))


def parameters(root: Expr) -> list[str]:
    """Parameter ids reachable from ``root``, in first-visit order."""
    return list(dict.fromkeys(n.name for n in topological_order(root) if n.op == "param"))


def _run_forward(order: list[Expr], bindings: Mapping[str, object]):
    for node in order:
        op = node.op
        if op == "param":
            try:
                node.value = np.asarray(bindings[node.name], dtype=float)
            except KeyError:
                raise UnboundParameterError(f"parameter {node.name!r} is not bound") from None
        elif op in ("const", "input"):
            node.value = node.attr
        else:
            node.value = _forward(node, [a.value for a in node.args])


def evaluate(root: Expr, bindings: Mapping[str, object] | None = None) -> np.ndarray:
    order = topological_order(root)
    _run_forward(order, bindings or {})
    return root.value


def evaluate_with_gradients(root: Expr, bindings: Mapping[str, object]):
    """Forward value of a scalar graph and d(root)/d(param) for every bound id.

    Bound parameters that the root does not depend on get a zero gradient.
    """
    order = topological_order(root)
    _run_forward(order, bindings)
    if np.size(root.value) != 1:
        raise ValueError("root expression must be scalar")

    live: set[int] = set()
    for node in order:
        if node.op == "param" or any(a.uid in live for a in node.args):
            live.add(node.uid)
        node.grad = None

    root.grad = np.ones_like(root.value)
    grads: dict[str, np.ndarray] = {}
    for node in reversed(order):
        g = node.grad
        if g is None:
            continue
        if node.op == "param":
            prev = grads.get(node.name)
            grads[node.name] = g if prev is None else prev + g
            continue
        if not node.args:
            continue
        need = [a.uid in live for a in node.args]
        if not any(need):
            continue
        contribs = _backward(node, g, [a.value for a in node.args], need)
        for a, c in zip(node.args, contribs):
            if c is None:
                continue
            a.grad = c if a.grad is None else a.grad + c

    result = {}
    for pid, val in bindings.items():
        shape = np.shape(val)
        g = grads.get(pid)
        result[pid] = np.zeros(shape) if g is None else np.reshape(g, shape)
    return float(np.reshape(root.value, ())), result


def grad_check(root: Expr, bindings: Mapping[str, object], h: float = 1e-5) -> float:
    """Max relative error between reverse-mode and central-difference gradients."""
    if not h > 0:
        raise ValueError("h must be > 0")
    _, analytic = evaluate_with_gradients(root, bindings)
    base = {k: np.array(v, dtype=float) for k, v in bindings.items()}
    order = topological_order(root)
    worst = 0.0
    for pid, arr in base.items():
        flat = arr.reshape(-1)
        ga = np.reshape(analytic[pid], -1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            _run_forward(order, base)
            fp = float(np.reshape(root.value, ()))
            flat[i] = orig - h
            _run_forward(order, base)
            fm = float(np.reshape(root.value, ()))
            flat[i] = orig
            num = (fp - fm) / (2.0 * h)
            den = max(abs(ga[i]), abs(num), 1e-8)
            worst = max(worst, abs(ga[i] - num) / den)
    return worst
