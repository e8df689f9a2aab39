"""Reverse-mode differentiation on an append-only tape.

Values are float64 numpy arrays; a 0-d array is the scalar case.  Every
vector-Jacobian rule is written with the same ``Var`` operations it
differentiates, so a reverse sweep run while the tape is recording leaves
the derivatives on the tape as ordinary nodes.  Differentiating those nodes
again gives second derivatives (double backward)::

    tape = Tape()
    x = tape.var(2.0)
    y = x * x * x
    (dy,) = gradient_as_nodes(y, [x])   # 12, still on the tape
    gradient(dy, [x])                   # [12.0]

A tape is single-writer and holds no global state; separate tapes can be
used from separate threads.
"""

import numpy as np

__all__ = [
    "Tape",
    "Var",
    "gradient",
    "gradient_as_nodes",
    "finite_difference_check",
    "tanh",
    "sin",
    "cos",
    "square",
    "matmul",
    "transpose",
    "sum_all",
    "mean",
    "sum_to",
    "broadcast_to",
]


class Tape:
    """Append-only computation record.

    ``nodes`` is topologically ordered by construction: a node is appended
    only after all of its operands exist.
    """

    def __init__(self):
        self.nodes = []
        self.recording = True

    def __len__(self):
        return len(self.nodes)

    def var(self, value):
        """Register an independent variable."""
        v = Var(value, self)
        v.index = len(self.nodes)
        self.nodes.append(v)
        return v

    def constant(self, value):
        return Var(value, self)


class Var:
    __slots__ = ("value", "tape", "index", "parents", "vjp", "op")

    def __init__(self, value, tape):
        self.value = np.asarray(value, dtype=np.float64)
        self.tape = tape
        self.index = None
        self.parents = ()
        self.vjp = None
        self.op = "leaf"

    @property
    def shape(self):
        return self.value.shape

    @property
    def tracked(self):
        return self.index is not None

    def __float__(self):
        return float(self.value)

    def __repr__(self):
        return f"Var({self.value!r}, op={self.op!r})"

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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)

    @property
    def T(self):
        return transpose(self)


def _tape_of(*args):
    tape = None
    for a in args:
        if isinstance(a, Var):
            if tape is None:
                tape = a.tape
            elif a.tape is not tape:
                raise ValueError("operands belong to different tapes")
    if tape is None:
        raise TypeError("at least one operand must be a Var")
    return tape


def _lift(tape, a):
    return a if isinstance(a, Var) else tape.constant(a)


def _record(tape, value, op, parents, vjp):
    out = Var(value, tape)
    out.op = op
    if tape.recording and any(p.index is not None for p in parents):
        out.parents = parents
        out.vjp = vjp
        out.index = len(tape.nodes)
        tape.nodes.append(out)
    return out


# ---------------------------------------------------------------- shape ops


def sum_to(x, shape):
    """Sum ``x`` down to ``shape`` (the adjoint of numpy broadcasting)."""
    shape = tuple(shape)
    if x.shape == shape:
        return x
    value = x.value
    lead = value.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        lead + i for i, n in enumerate(shape) if n == 1 and value.shape[lead + i] != 1
    )
    out = value.sum(axis=axes, keepdims=True).reshape(shape) if axes else value.reshape(shape)
    src = x.shape
    return _record(x.tape, out, "sum_to", (x,), lambda g: (broadcast_to(g, src),))


def broadcast_to(x, shape):
    shape = tuple(shape)
    if x.shape == shape:
        return x
    src = x.shape
    return _record(
        x.tape,
        np.broadcast_to(x.value, shape).copy(),
        "broadcast_to",
        (x,),
        lambda g: (sum_to(g, src),),
    )


def sum_all(x):
    return sum_to(x, ())


def mean(x):
    return sum_to(x, ()) * (1.0 / x.value.size)


def transpose(x):
    return _record(x.tape, x.value.T, "transpose", (x,), lambda g: (transpose(g),))


def take(x, key):
    """Basic (non-fancy) indexing, e.g. ``x[:, 0]``."""
    src = x.shape
    return _record(x.tape, x.value[key], "take", (x,), lambda g: (_put(g, key, src),))


def _put(g, key, shape):
    out = np.zeros(shape)
    out[key] = g.value
    return _record(g.tape, out, "put", (g,), lambda h: (take(h, key),))


# ---------------------------------------------------------------- arithmetic


def add(a, b):
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    sa, sb = a.shape, b.shape
    return _record(
        tape, a.value + b.value, "add", (a, b), lambda g: (sum_to(g, sa), sum_to(g, sb))
    )


def sub(a, b):
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    sa, sb = a.shape, b.shape
    return _record(
        tape, a.value - b.value, "sub", (a, b), lambda g: (sum_to(g, sa), sum_to(neg(g), sb))
    )


def neg(a):
    return _record(a.tape, -a.value, "neg", (a,), lambda g: (neg(g),))


def mul(a, b):
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    sa, sb = a.shape, b.shape
    return _record(
        tape,
        a.value * b.value,
        "mul",
        (a, b),
        lambda g: (sum_to(mul(g, b), sa), sum_to(mul(g, a), sb)),
    )


def div(a, b):
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    sa, sb = a.shape, b.shape

    def vjp(g):
        ga = div(g, b)
        return sum_to(ga, sa), sum_to(neg(mul(ga, out)), sb)

    out = _record(tape, a.value / b.value, "div", (a, b), vjp)
    return out


def square(a):
    return _record(a.tape, a.value * a.value, "square", (a,), lambda g: (mul(g, mul(a, 2.0)),))


def tanh(a):
    def vjp(g):
        return (mul(g, sub(1.0, square(out))),)

    out = _record(a.tape, np.tanh(a.value), "tanh", (a,), vjp)
    return out


def sin(a):
    return _record(a.tape, np.sin(a.value), "sin", (a,), lambda g: (mul(g, cos(a)),))


def cos(a):
    return _record(a.tape, np.cos(a.value), "cos", (a,), lambda g: (neg(mul(g, sin(a))),))


def matmul(a, b):
    """2-D matrix product."""
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise ValueError("matmul expects 2-D operands")
    return _record(
        tape,
        a.value @ b.value,
        "matmul",
        (a, b),
        lambda g: (matmul(g, transpose(b)), matmul(transpose(a), g)),
    )


# ---------------------------------------------------------------- sweeps


def _sweep(output, inputs, create_graph):
    tape = output.tape
    if not output.tracked:
        raise ValueError("output is not recorded on a tape")
    for x in inputs:
        if not isinstance(x, Var) or x.tape is not tape or not x.tracked:
            raise ValueError("input is not a registered variable of the output's tape")
        if tape.nodes[x.index] is not x:
            raise ValueError("input is not a registered variable of the output's tape")

    nodes = tape.nodes
    stop = min(x.index for x in inputs) if inputs else output.index
    keep = {x.index for x in inputs}
    grads = {output.index: tape.constant(np.ones_like(output.value))}
    saved = tape.recording
    tape.recording = create_graph
    try:
        for i in range(output.index, stop - 1, -1):
            g = grads.get(i)
            if g is None:
                continue
            node = nodes[i]
            if node.vjp is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if parent.index is None:
                    continue
                prev = grads.get(parent.index)
                grads[parent.index] = pg if prev is None else add(prev, pg)
            if i not in keep:
                del grads[i]
    finally:
        tape.recording = saved
    zero = tape.constant
    return [grads[x.index] if x.index in grads else zero(np.zeros_like(x.value)) for x in inputs]


def gradient(output, inputs):
    """Derivatives of ``output`` (summed over its entries) w.r.t. ``inputs``.

    Returns plain numpy arrays; nothing is added to the tape.
    """
    return [g.value for g in _sweep(output, list(inputs), create_graph=False)]


def gradient_as_nodes(output, inputs):
    """Like :func:`gradient` but the results stay differentiable."""
    return _sweep(output, list(inputs), create_graph=True)


def finite_difference_check(f, point, step=1e-5, floor=1e-4):
    """Worst relative gap between engine and central-difference gradients.

    ``f`` maps a list of scalar ``Var`` to a scalar ``Var``.  Entries whose
    magnitudes are both below ``floor`` are compared on the scale of
    ``floor``, since central differences of an exactly zero derivative only
    carry rounding noise.
    """
    point = [float(p) for p in point]
    tape = Tape()
    xs = [tape.var(p) for p in point]
    y = f(xs)
    if not isinstance(y, Var) or not y.tracked:
        engine = np.zeros(len(point))
    else:
        engine = np.array(gradient(y, xs), dtype=float)

    def evaluate(values):
        t = Tape()
        out = f([t.var(v) for v in values])
        return float(out.value if isinstance(out, Var) else out)

    worst = 0.0
    for i in range(len(point)):
        hi = list(point)
        lo = list(point)
        hi[i] += step
        lo[i] -= step
        fd = (evaluate(hi) - evaluate(lo)) / (2.0 * step)
        denom = max(abs(fd), abs(engine[i]), floor)
        worst = max(worst, abs(fd - engine[i]) / denom)
    return worst
