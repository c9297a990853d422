"""Reverse-mode tape and second-order forward duals for scalar expressions.

The tape records one node per semantic scalar expression.  Node values are
stored as python floats or as 1-d numpy arrays when the same expression is
evaluated over a batch of sample points in lockstep ("lanes"); the graph
topology is identical for every lane, so a single reverse sweep yields the
adjoints of all lanes at once.

Second derivatives with respect to network inputs come from forward-mode
duals truncated at order two.  Dual components may themselves be tape nodes,
which gives exact parameter gradients of expressions that contain input
derivatives (forward-over-reverse).
"""
from __future__ import annotations

import numpy as np


class AutodiffError(RuntimeError):
    """Base class for tape and dual-number failures."""


class SingularRootError(AutodiffError):
    """Implicit-function derivative requested where dg/droot ~ 0."""


class TapeCorruptionError(AutodiffError):
    """Internal consistency violation (op referencing a later node)."""


def value_of(x):
    """Plain numeric payload of ``x`` (float or ndarray), stripping Node/Dual."""
    if isinstance(x, Dual):
        x = x.primal
    if isinstance(x, Node):
        return x.value
    return x


def detach(x):
    """Value of ``x`` as a constant: no gradient flows through the result."""
    v = value_of(x)
    return v.copy() if isinstance(v, np.ndarray) else v


def _as_value(v):
    a = np.asarray(v, dtype=np.float64)
    return float(a) if a.ndim == 0 else a


class Node:
    """One recorded scalar expression (possibly batched over lanes)."""

    __slots__ = ("tape", "idx", "value", "op", "args", "partials", "adj", "group")
    __array_ufunc__ = None  # keep numpy from consuming Node operands

    def __init__(self, tape, idx, value, op, args, partials, group=None):
        self.tape = tape
        self.idx = idx
        self.value = value
        self.op = op
        self.args = args
        self.partials = partials
        self.adj = None
        self.group = group

    # -- arithmetic ---------------------------------------------------------
    def __add__(self, o):
        if isinstance(o, Dual):
            return NotImplemented
        if isinstance(o, Node):
            return _record(self.tape, "add", self.value + o.value, (self, o), (1.0, 1.0))
        return _record(self.tape, "add", self.value + _as_value(o), (self,), (1.0,))

    __radd__ = __add__

    def __sub__(self, o):
        if isinstance(o, Dual):
            return NotImplemented
        if isinstance(o, Node):
            return _record(self.tape, "sub", self.value - o.value, (self, o), (1.0, -1.0))
        return _record(self.tape, "sub", self.value - _as_value(o), (self,), (1.0,))

    def __rsub__(self, o):
        return _record(self.tape, "rsub", _as_value(o) - self.value, (self,), (-1.0,))

    def __mul__(self, o):
        if isinstance(o, Dual):
            return NotImplemented
        if isinstance(o, Node):
            return _record(self.tape, "mul", self.value * o.value, (self, o), (o.value, self.value))
        ov = _as_value(o)
        return _record(self.tape, "mul", self.value * ov, (self,), (ov,))

    __rmul__ = __mul__

    def __truediv__(self, o):
        if isinstance(o, Dual):
            return NotImplemented
        if isinstance(o, Node):
            inv = 1.0 / o.value
            q = self.value * inv
            return _record(self.tape, "div", q, (self, o), (inv, -q * inv))
        inv = 1.0 / _as_value(o)
        return _record(self.tape, "div", self.value * inv, (self,), (inv,))

    def __rtruediv__(self, o):
        inv = 1.0 / self.value
        q = _as_value(o) * inv
        return _record(self.tape, "rdiv", q, (self,), (-q * inv,))

    def __neg__(self):
        return _record(self.tape, "neg", -self.value, (self,), (-1.0,))

    def __pow__(self, c):
        if isinstance(c, (Node, Dual)):
            raise AutodiffError("only constant exponents are supported on the tape")
        c = float(c)
        v = self.value ** c
        return _record(self.tape, "pow", v, (self,), (c * self.value ** (c - 1.0),))

    def __repr__(self):
        return f"Node(op={self.op!r}, idx={self.idx}, value={self.value!r})"


def _record(tape, op, value, args, partials, group=None):
    node = Node(tape, len(tape.nodes), value, op, args, partials, group)
    if tape.debug:
        for a in args:
            if a.idx >= node.idx or a.tape is not tape:
                raise TapeCorruptionError(f"{op} node references a later or foreign node")
    tape.nodes.append(node)
    return node


class _AffineGroup:
    """Shared backward for the affine nodes of one layer.

    The member nodes are created consecutively; once the reverse sweep reaches
    the last member every member adjoint is final, so the whole layer's
    backward collapses to two matrix products.
    """

    __slots__ = ("xs", "X", "W", "w_range", "b_range", "members", "last_idx")

    def __init__(self, xs, X, W, w_range, b_range):
        self.xs = xs
        self.X = X
        self.W = W
        self.w_range = w_range
        self.b_range = b_range
        self.members = []
        self.last_idx = -1

    def backward(self, tape):
        lanes = self.X.shape[1]
        G = np.zeros((len(self.members), lanes))
        touched = False
        for r, m in enumerate(self.members):
            a = m.adj
            if a is None:
                continue
            touched = True
            # single-lane members broadcast downstream; reduce like any leaf
            if lanes == 1 and np.ndim(a) > 0 and np.size(a) > 1:
                a = np.sum(a)
            G[r] = a
        if not touched:
            return
        for i, x in enumerate(self.xs):
            if x is None:
                continue
            _accumulate(x, self.W[:, i] @ G)
        if self.w_range is not None:
            s, e = self.w_range
            tape.param_grad[s:e] += (G @ self.X.T).ravel()
        if self.b_range is not None:
            s, e = self.b_range
            tape.param_grad[s:e] += G.sum(axis=1)


class Tape:
    """Append-only record of scalar operations with reverse-mode adjoints."""

    def __init__(self, debug=False):
        self.nodes = []
        self.debug = debug
        self.param_values = None
        self.param_grad = None

    def __len__(self):
        return len(self.nodes)

    def leaf(self, value):
        """Record an independent variable."""
        return _record(self, "leaf", _as_value(value), (), ())

    def set_params(self, values):
        """Attach the flat trainable-parameter vector used by affine groups."""
        self.param_values = np.asarray(values, dtype=np.float64)
        self.param_grad = np.zeros_like(self.param_values)

    def param_leaf(self, index):
        """Leaf node viewing one entry of the flat parameter vector.

        Its adjoint is folded into ``param_grad[index]`` by :func:`backward`.
        """
        node = _record(self, "param_leaf", float(self.param_values[index]), (), ())
        node.partials = (int(index),)
        return node

    def affine_group(self, xs, W, b=None, w_range=None, b_range=None):
        """Record one affine layer: out[u] = sum_i W[u, i] * xs[i] + b[u].

        xs entries are Nodes or plain (lanes,) arrays (no gradient).  W and b
        are plain value arrays; when ``w_range``/``b_range`` flat-parameter
        ranges are given the layer's weight gradients are accumulated into
        ``param_grad`` during the reverse sweep.
        """
        W = np.asarray(W, dtype=np.float64)
        out_dim, k = W.shape
        vals = [value_of(x) for x in xs]
        lanes = 1
        for v in vals:
            if isinstance(v, np.ndarray):
                lanes = max(lanes, v.shape[0])
        X = np.empty((k, lanes))
        for i, v in enumerate(vals):
            X[i] = v
        V = W @ X
        if b is not None:
            V = V + np.asarray(b, dtype=np.float64)[:, None]
        group = _AffineGroup([x if isinstance(x, Node) else None for x in xs],
                             X, W, w_range, b_range)
        members = [_record(self, "affine", V[u], (), (), group) for u in range(out_dim)]
        group.members = members
        group.last_idx = members[-1].idx
        return members

    def implicit_root(self, value, parents, partials, op="implicit_root"):
        """Record a root found outside the tape, with implicit-function partials.

        ``partials[i]`` must hold d(root)/d(parents[i]) evaluated at the root.
        """
        parents = tuple(parents)
        return _record(self, op, _as_value(value), parents, tuple(partials))


def _accumulate(node, contrib):
    a = node.adj
    if a is None:
        node.adj = contrib
    elif isinstance(a, np.ndarray) and (not isinstance(contrib, np.ndarray)
                                        or contrib.shape == a.shape
                                        or contrib.ndim == 0):
        a += contrib
    else:
        node.adj = a + contrib


def backward(loss, seed=1.0):
    """Reverse sweep from ``loss``; fills node adjoints and tape.param_grad."""
    if not isinstance(loss, Node):
        raise AutodiffError("backward requires a tape node")
    tape = loss.tape
    for node in tape.nodes:
        node.adj = None
    if tape.param_grad is not None:
        tape.param_grad[:] = 0.0
    loss.adj = seed
    nodes = tape.nodes
    for i in range(loss.idx, -1, -1):
        node = nodes[i]
        group = node.group
        if group is not None:
            if i == group.last_idx:
                group.backward(tape)
            continue
        a = node.adj
        if a is None:
            continue
        op = node.op
        if op == "param_leaf":
            g = a
            if isinstance(g, np.ndarray):
                g = g.sum()
            tape.param_grad[node.partials[0]] += g
            continue
        if op == "mean_lanes":
            _accumulate(node.args[0], a * node.partials[0])
            continue
        for parent, d in zip(node.args, node.partials):
            _accumulate(parent, a * d)


def grad(loss, leaves, seed=1.0):
    """Gradient of ``loss`` with respect to each leaf, reduced to leaf shape."""
    backward(loss, seed)
    out = []
    for leaf in leaves:
        a = leaf.adj
        if leaf.op == "param_leaf":
            out.append(float(loss.tape.param_grad[leaf.partials[0]]))
            continue
        if a is None:
            z = np.zeros_like(leaf.value) if isinstance(leaf.value, np.ndarray) else 0.0
            out.append(z)
        elif isinstance(leaf.value, np.ndarray) and not isinstance(a, np.ndarray):
            out.append(np.full_like(leaf.value, a))
        elif not isinstance(leaf.value, np.ndarray) and isinstance(a, np.ndarray):
            out.append(float(a.sum()))
        else:
            out.append(a)
    return out


# -- elementary functions ----------------------------------------------------

def exp(x):
    if isinstance(x, Dual):
        e = exp(x.primal)
        t2 = None
        if x.tangent2 is not None:
            t2 = _madd(_zmul(e, x.tangent2), _zmul(e, _zmul(x.tangent, x.tangent)))
        return Dual(e, _zmul(e, x.tangent), t2)
    if isinstance(x, Node):
        e = np.exp(x.value)
        return _record(x.tape, "exp", e, (x,), (e,))
    return np.exp(x)


def log(x):
    if isinstance(x, Dual):
        L = log(x.primal)
        t1 = _zdiv(x.tangent, x.primal)
        t2 = None
        if x.tangent2 is not None:
            t2 = _msub(_zdiv(x.tangent2, x.primal), _zmul(t1, t1))
        return Dual(L, t1, t2)
    if isinstance(x, Node):
        return _record(x.tape, "log", np.log(x.value), (x,), (1.0 / x.value,))
    return np.log(x)


def tanh(x):
    if isinstance(x, Dual):
        t = tanh(x.primal)
        u = _msub(1.0, _zmul(t, t))
        t1 = _zmul(u, x.tangent)
        t2 = None
        if x.tangent2 is not None:
            t2 = _msub(_zmul(u, x.tangent2),
                       _zmul(2.0, _zmul(t, _zmul(u, _zmul(x.tangent, x.tangent)))))
        return Dual(t, t1, t2)
    if isinstance(x, Node):
        t = np.tanh(x.value)
        return _record(x.tape, "tanh", t, (x,), (1.0 - t * t,))
    return np.tanh(x)


def sqrt(x):
    if isinstance(x, Dual):
        s = sqrt(x.primal)
        t1 = _zdiv(x.tangent, _zmul(2.0, s))
        t2 = None
        if x.tangent2 is not None:
            t2 = _zdiv(_msub(x.tangent2, _zmul(2.0, _zmul(t1, t1))), _zmul(2.0, s))
        return Dual(s, t1, t2)
    if isinstance(x, Node):
        s = np.sqrt(x.value)
        return _record(x.tape, "sqrt", s, (x,), (0.5 / s,))
    return np.sqrt(x)


def select(mask, a, b):
    """Per-lane branch: ``mask ? a : b`` with a constant (non-differentiated) mask."""
    if isinstance(a, Dual) or isinstance(b, Dual):
        ap, a1, a2, _ = Dual._split(a)
        bp, b1, b2, _ = Dual._split(b)
        t2 = None
        if not ((isinstance(a, Dual) and a.tangent2 is None)
                or (isinstance(b, Dual) and b.tangent2 is None)):
            t2 = select(mask, a2, b2)
        return Dual(select(mask, ap, bp), select(mask, a1, b1), t2)
    if isinstance(a, Node) or isinstance(b, Node):
        tape = a.tape if isinstance(a, Node) else b.tape
        m = np.asarray(mask, dtype=np.float64)
        value = np.where(mask, value_of(a), value_of(b))
        value = float(value) if value.ndim == 0 else value
        args, partials = [], []
        if isinstance(a, Node):
            args.append(a)
            partials.append(m)
        if isinstance(b, Node):
            args.append(b)
            partials.append(1.0 - m)
        return _record(tape, "select", value, tuple(args), tuple(partials))
    out = np.where(mask, a, b)
    return float(out) if out.ndim == 0 else out


def mean_lanes(x):
    """Mean of a batched node over its lanes, as a scalar node."""
    if not isinstance(x, Node):
        return float(np.mean(x))
    v = x.value
    if not isinstance(v, np.ndarray):
        return _record(x.tape, "mean_lanes", v, (x,), (1.0,))
    return _record(x.tape, "mean_lanes", float(v.mean()), (x,), (1.0 / v.shape[0],))


def sum_nodes(terms):
    """Left-fold sum of a mixed list of nodes and constants."""
    total = None
    for t in terms:
        total = t if total is None else total + t
    return 0.0 if total is None else total


# -- zero-folding helpers for dual components --------------------------------

def _zero(x):
    return isinstance(x, (int, float)) and x == 0.0


def _madd(a, b):
    if _zero(a):
        return b
    if _zero(b):
        return a
    return a + b


def _msub(a, b):
    if _zero(b):
        return a
    if _zero(a):
        return -b
    return a - b


def _zmul(a, b):
    if _zero(a) or _zero(b):
        return 0.0
    return a * b


def _zdiv(a, b):
    if _zero(a):
        return 0.0
    return a / b


class Dual:
    """Truncated second-order forward jet: value, d/ds, d^2/ds^2 along a seed.

    ``tangent2 is None`` keeps the jet first-order.  Components may be floats,
    numpy arrays, or tape Nodes; zero components are folded away so constant
    branches cost nothing.
    """

    __slots__ = ("primal", "tangent", "tangent2")
    __array_ufunc__ = None

    def __init__(self, primal, tangent=0.0, tangent2=None):
        self.primal = primal
        self.tangent = tangent
        self.tangent2 = tangent2

    @staticmethod
    def _split(o):
        if isinstance(o, Dual):
            return o.primal, o.tangent, o.tangent2, True
        return o, 0.0, 0.0, False

    def _order2(self, other_is_dual, other):
        if self.tangent2 is None:
            return False
        if other_is_dual and other.tangent2 is None:
            return False
        return True

    def __add__(self, o):
        g, g1, g2, isd = self._split(o)
        t2 = _madd(self.tangent2, g2) if self._order2(isd, o) else None
        return Dual(self.primal + g, _madd(self.tangent, g1), t2)

    __radd__ = __add__

    def __sub__(self, o):
        g, g1, g2, isd = self._split(o)
        t2 = _msub(self.tangent2, g2) if self._order2(isd, o) else None
        return Dual(self.primal - g, _msub(self.tangent, g1), t2)

    def __rsub__(self, o):
        t2 = None if self.tangent2 is None else -self.tangent2 if not _zero(self.tangent2) else 0.0
        return Dual(o - self.primal, -self.tangent if not _zero(self.tangent) else 0.0, t2)

    def __mul__(self, o):
        g, g1, g2, isd = self._split(o)
        f, f1, f2 = self.primal, self.tangent, self.tangent2
        t1 = _madd(_zmul(f1, g), _zmul(f, g1))
        t2 = None
        if self._order2(isd, o):
            t2 = _madd(_madd(_zmul(f2, g), _zmul(2.0, _zmul(f1, g1))), _zmul(f, g2))
        return Dual(f * g, t1, t2)

    __rmul__ = __mul__

    def __truediv__(self, o):
        g, g1, g2, isd = self._split(o)
        q = self.primal / g
        q1 = _zdiv(_msub(self.tangent, _zmul(q, g1)), g)
        t2 = None
        if self._order2(isd, o):
            t2 = _zdiv(_msub(_msub(self.tangent2, _zmul(2.0, _zmul(q1, g1))),
                             _zmul(q, g2)), g)
        return Dual(q, q1, t2)

    def __rtruediv__(self, o):
        inv = o / self.primal
        q1 = _zdiv(-_zmul(inv, self.tangent) if not _zero(self.tangent) else 0.0, self.primal)
        t2 = None
        if self.tangent2 is not None:
            t2 = _zdiv(_msub(-_zmul(inv, self.tangent2) if not _zero(self.tangent2) else 0.0,
                             _zmul(2.0, _zmul(q1, self.tangent))), self.primal)
        return Dual(inv, q1, t2)

    def __neg__(self):
        t2 = None
        if self.tangent2 is not None:
            t2 = -self.tangent2 if not _zero(self.tangent2) else 0.0
        return Dual(-self.primal, -self.tangent if not _zero(self.tangent) else 0.0, t2)

    def __pow__(self, c):
        c = float(c)
        f, f1, f2 = self.primal, self.tangent, self.tangent2
        p = f ** c
        d1 = c * f ** (c - 1.0)
        t1 = _zmul(d1, f1)
        t2 = None
        if f2 is not None:
            t2 = _madd(_zmul(d1, f2),
                       _zmul(c * (c - 1.0) * f ** (c - 2.0) if c != 1.0 else 0.0,
                             _zmul(f1, f1)))
        return Dual(p, t1, t2)

    def __repr__(self):
        return f"Dual({self.primal!r}, {self.tangent!r}, {self.tangent2!r})"


def input_derivatives(f, x, coord, second=True):
    """First (and second) derivatives of ``f``'s outputs w.r.t. ``x[coord]``.

    ``f`` maps a list of per-coordinate values to a list of outputs; the
    chosen coordinate is seeded as a dual.  Returns (values, firsts, seconds);
    ``seconds`` is None when ``second`` is false.
    """
    seeds = []
    for i, xi in enumerate(x):
        if i == coord:
            seeds.append(Dual(xi, 1.0, 0.0 if second else None))
        else:
            seeds.append(xi)
    outs = f(seeds)
    vals = [o.primal if isinstance(o, Dual) else o for o in outs]
    d1 = [o.tangent if isinstance(o, Dual) else 0.0 for o in outs]
    if not second:
        return vals, d1, None
    d2 = [(o.tangent2 if o.tangent2 is not None else 0.0) if isinstance(o, Dual) else 0.0
          for o in outs]
    return vals, d1, d2


def implicit_root_gradient(g, root, theta, tol=1e-12):
    """d(root)/d(theta) for g(root, theta) = 0 via the implicit-function rule.

    ``g`` must accept duals in either slot.  Raises SingularRootError when
    |dg/droot| falls below ``tol``.
    """
    dg_droot = g(Dual(root, 1.0), theta).tangent
    dg_dtheta = g(root, Dual(theta, 1.0)).tangent
    droot = np.asarray(value_of(dg_droot), dtype=np.float64)
    if np.any(np.abs(droot) < tol):
        raise SingularRootError(f"|dg/droot| < {tol}: root is not locally differentiable")
    return -np.asarray(value_of(dg_dtheta)) / droot


def check_gradient(f, x, h=None, floor=1e-8):
    """Max relative discrepancy between tape gradients and central differences.

    ``f(xs)`` must map a list of scalars (Nodes or floats) to a scalar (Node
    or float).  Steps default to 1e-5 * max(1, |x_i|) per coordinate.
    """
    x = [float(v) for v in x]
    tape = Tape()
    leaves = [tape.leaf(v) for v in x]
    loss = f(leaves)
    analytic = [float(g) for g in grad(loss, leaves)]

    def plain(xs):
        return float(value_of(f(list(xs))))

    worst = 0.0
    for i in range(len(x)):
        hi = h if h is not None else 1e-5 * max(1.0, abs(x[i]))
        xp = list(x)
        xm = list(x)
        xp[i] += hi
        xm[i] -= hi
        fd = (plain(xp) - plain(xm)) / (2.0 * hi)
        worst = max(worst, abs(analytic[i] - fd) / max(abs(analytic[i]), floor))
    return worst
