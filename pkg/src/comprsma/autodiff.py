"""Reverse-mode automatic differentiation on a flat tape of real values.

Node values are real numpy arrays (a plain scalar becomes a 0-d array), so a
single node can carry a vector or matrix and one backward pass visits each
node exactly once in reverse topological order.  Complex quantities are
handled one layer up as (re, im) pairs, see :mod:`comprsma.cmatrix`; the tape
itself only ever sees real numbers, which keeps all derivatives ordinary real
partials.

Supported primitives: add/sub/mul/div, matmul, sum, sin, cos, exp, log,
sqrt, relu (max with 0, subgradient 0 at the kink), min-reduction
(subgradient to the first minimizer), basic-slice indexing, reshape and
scalar stacking.  General broadcasting is deliberately not supported; the
only shape mixing allowed is scalar-with-array.
"""

from __future__ import annotations

import numpy as np

_LN2 = float(np.log(2.0))


class ShapeError(ValueError):
    """Operand shapes do not match the operation's contract."""


class NumericFault(ArithmeticError):
    """A non-finite value appeared where the algorithm requires finite math."""


class Node:
    """One tape entry: a real value plus backward links to its parents.

    ``vjps[i]`` maps the gradient at this node to the gradient contribution
    for ``parents[i]``.  Leaves have no parents; the gradient of a node with
    respect to itself is 1.  Nodes are immutable once created, so a tape is
    acyclic by construction.
    """

    __slots__ = ("value", "parents", "vjps")

    def __init__(self, value, parents=(), vjps=()):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents
        self.vjps = vjps

    @property
    def shape(self):
        return self.value.shape

    def item(self):
        return float(self.value)

    # Convenience operators; mixing with plain floats/arrays lifts them to
    # constant leaves.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __repr__(self):
        return f"Node(shape={self.value.shape}, value={self.value!r})"


def as_node(x) -> Node:
    """Lift a number or array to a constant leaf; pass nodes through."""
    if isinstance(x, Node):
        return x
    return Node(x)


def _check_same_or_scalar(a: Node, b: Node, opname: str):
    if a.shape == b.shape or a.shape == () or b.shape == ():
        return
    raise ShapeError(f"{opname}: incompatible shapes {a.shape} and {b.shape}")


def _reduce_to(g: np.ndarray, shape) -> np.ndarray:
    # Fold a gradient back onto a scalar operand.
    if shape == () and np.ndim(g) != 0:
        return np.sum(g)
    return g


def add(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    _check_same_or_scalar(a, b, "add")
    return Node(
        a.value + b.value,
        (a, b),
        (lambda g: _reduce_to(g, a.shape), lambda g: _reduce_to(g, b.shape)),
    )


def sub(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    _check_same_or_scalar(a, b, "sub")
    return Node(
        a.value - b.value,
        (a, b),
        (lambda g: _reduce_to(g, a.shape), lambda g: _reduce_to(-g, b.shape)),
    )


def neg(a) -> Node:
    a = as_node(a)
    return Node(-a.value, (a,), (lambda g: -g,))


def mul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    _check_same_or_scalar(a, b, "mul")
    av, bv = a.value, b.value
    return Node(
        av * bv,
        (a, b),
        (lambda g: _reduce_to(g * bv, a.shape), lambda g: _reduce_to(g * av, b.shape)),
    )


def div(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    _check_same_or_scalar(a, b, "div")
    av, bv = a.value, b.value
    out = av / bv
    return Node(
        out,
        (a, b),
        (
            lambda g: _reduce_to(g / bv, a.shape),
            lambda g: _reduce_to(-g * out / bv, b.shape),
        ),
    )


def sin(a) -> Node:
    a = as_node(a)
    c = np.cos(a.value)
    return Node(np.sin(a.value), (a,), (lambda g: g * c,))


def cos(a) -> Node:
    a = as_node(a)
    s = np.sin(a.value)
    return Node(np.cos(a.value), (a,), (lambda g: -g * s,))


def exp(a) -> Node:
    a = as_node(a)
    out = np.exp(a.value)
    return Node(out, (a,), (lambda g: g * out,))


def log(a) -> Node:
    a = as_node(a)
    av = a.value
    return Node(np.log(av), (a,), (lambda g: g / av,))


def log2(a) -> Node:
    """Base-2 log, computed as ln(x)/ln(2)."""
    a = as_node(a)
    av = a.value
    return Node(np.log(av) / _LN2, (a,), (lambda g: g / (av * _LN2),))


def sqrt(a) -> Node:
    a = as_node(a)
    out = np.sqrt(a.value)
    return Node(out, (a,), (lambda g: g * (0.5 / out),))


def square(a) -> Node:
    a = as_node(a)
    av = a.value
    return Node(av * av, (a,), (lambda g: g * (2.0 * av),))


def relu(a) -> Node:
    """max(0, x) elementwise; subgradient 0 at x == 0."""
    a = as_node(a)
    mask = (a.value > 0.0).astype(np.float64)
    return Node(a.value * mask, (a,), (lambda g: g * mask,))


def vsum(a) -> Node:
    """Sum of all entries, returned as a scalar node."""
    a = as_node(a)
    shape = a.shape
    return Node(np.sum(a.value), (a,), (lambda g: np.broadcast_to(g, shape).copy(),))


def vmin(a) -> Node:
    """Minimum entry of a 1-D vector.

    Subgradient goes entirely to the first minimizer (lowest index on ties),
    which keeps backward deterministic.
    """
    a = as_node(a)
    if a.value.ndim != 1:
        raise ShapeError("vmin expects a 1-D vector")
    idx = int(np.argmin(a.value))
    shape = a.shape

    def vjp(g):
        out = np.zeros(shape)
        out[idx] = g
        return out

    return Node(a.value[idx], (a,), (vjp,))


def matmul(a, b) -> Node:
    """Matrix product for 1-D/2-D operands (no batching, no broadcasting)."""
    a, b = as_node(a), as_node(b)
    av, bv = a.value, b.value
    if av.ndim == 0 or bv.ndim == 0:
        raise ShapeError("matmul does not take scalars; use mul")
    try:
        out = av @ bv
    except ValueError as e:
        raise ShapeError(f"matmul: {e}") from None

    if av.ndim == 1 and bv.ndim == 1:  # dot product
        vjps = (lambda g: g * bv, lambda g: g * av)
    elif av.ndim == 2 and bv.ndim == 1:  # (m,n) @ (n,) -> (m,)
        vjps = (lambda g: np.outer(g, bv), lambda g: av.T @ g)
    elif av.ndim == 1 and bv.ndim == 2:  # (n,) @ (n,p) -> (p,)
        vjps = (lambda g: bv @ g, lambda g: np.outer(av, g))
    else:  # (m,n) @ (n,p) -> (m,p)
        vjps = (lambda g: g @ bv.T, lambda g: av.T @ g)
    return Node(out, (a, b), vjps)


def add_rowvec(mat, vec) -> Node:
    """Add a length-n row vector to every row of an (m, n) matrix."""
    mat, vec = as_node(mat), as_node(vec)
    if mat.value.ndim != 2 or vec.value.ndim != 1 or mat.shape[1] != vec.shape[0]:
        raise ShapeError(f"add_rowvec: {mat.shape} + {vec.shape}")
    return Node(
        mat.value + vec.value[None, :],
        (mat, vec),
        (lambda g: g, lambda g: g.sum(axis=0)),
    )


def transpose(a) -> Node:
    a = as_node(a)
    if a.value.ndim != 2:
        raise ShapeError("transpose expects a 2-D matrix")
    return Node(a.value.T.copy(), (a,), (lambda g: g.T,))


def getitem(a, index) -> Node:
    """Basic (slice/integer) indexing; no repeated-element fancy indexing."""
    a = as_node(a)
    shape = a.shape

    def vjp(g):
        out = np.zeros(shape)
        out[index] = g
        return out

    return Node(a.value[index], (a,), (vjp,))


def reshape(a, newshape) -> Node:
    a = as_node(a)
    shape = a.shape
    return Node(a.value.reshape(newshape), (a,), (lambda g: g.reshape(shape),))


def stack_scalars(nodes) -> Node:
    """Stack scalar nodes into a 1-D vector node."""
    nodes = [as_node(n) for n in nodes]
    for n in nodes:
        if n.value.ndim != 0:
            raise ShapeError("stack_scalars expects scalar nodes")
    vjps = tuple((lambda i: lambda g: g[i])(i) for i in range(len(nodes)))
    return Node(np.array([n.value for n in nodes]), tuple(nodes), vjps)


def _topo_order(root: Node):
    # Iterative post-order DFS. 1 = on stack, 2 = done; seeing a node in
    # state 1 again means the parent links form a cycle, which violates the
    # tape invariant.
    state: dict[int, int] = {}
    order: list[Node] = []
    stack: list[tuple[Node, int]] = [(root, 0)]
    while stack:
        node, pidx = stack.pop()
        nid = id(node)
        if pidx == 0:
            st = state.get(nid)
            if st == 2:
                continue
            if st == 1:
                raise RuntimeError("cyclic tape: node reachable from itself")
            state[nid] = 1
        if pidx < len(node.parents):
            stack.append((node, pidx + 1))
            parent = node.parents[pidx]
            if state.get(id(parent)) != 2:
                if state.get(id(parent)) == 1:
                    raise RuntimeError("cyclic tape: node reachable from itself")
                stack.append((parent, 0))
        else:
            state[nid] = 2
            order.append(node)
    return order


def backward(root: Node, leaves) -> list[np.ndarray]:
    """Gradients of a scalar root with respect to each requested leaf.

    Leaves not reachable from the root get a zero gradient of their own
    shape.  Deterministic for a fixed tape.
    """
    if root.value.ndim != 0:
        raise ShapeError("backward expects a scalar root")
    order = _topo_order(root)
    grads: dict[int, np.ndarray] = {id(root): np.asarray(1.0)}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None or not node.parents:
            continue
        for parent, vjp in zip(node.parents, node.vjps):
            contrib = vjp(g)
            pid = id(parent)
            prev = grads.get(pid)
            if prev is None:
                grads[pid] = np.asarray(contrib, dtype=np.float64)
            else:
                grads[pid] = prev + contrib
    out = []
    for leaf in leaves:
        g = grads.get(id(leaf))
        if g is None:
            g = np.zeros(leaf.shape)
        out.append(np.asarray(g, dtype=np.float64).reshape(leaf.shape))
    return out
