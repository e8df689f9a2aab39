"""Baseline, HNN and D-HNN networks, and their checkpoint format.

Checkpoint layout (little-endian)::

    8s   magic        b"DHNNCKPT"
    u32  version      1
    u8   kind         0 = baseline, 1 = hnn, 2 = dhnn
    u32  input_dim
    then for every network (1 for baseline/hnn, 2 for dhnn: H then D),
    three dense layers, each:
        u32 rows, u32 cols, rows*cols f64 weights (row-major), rows f64 biases
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import (
    CheckpointError,
    CheckpointShapeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    DataError,
)

MAGIC = b"DHNNCKPT"
FORMAT_VERSION = 1
KINDS = ("baseline", "hnn", "dhnn")
HIDDEN = 256


@dataclass
class Dense:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)

    def __post_init__(self):
        self.weight = np.ascontiguousarray(self.weight, dtype=np.float64)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise CheckpointShapeError(
                f"inconsistent layer shapes {self.weight.shape} / {self.bias.shape}"
            )


@dataclass
class MLP:
    """tanh -> tanh -> linear; ``residual`` adds a skip around the second layer."""

    layers: list
    residual: bool

    @property
    def input_dim(self):
        return self.layers[0].weight.shape[1]

    @property
    def output_dim(self):
        return self.layers[-1].weight.shape[0]

    def arrays(self):
        return [a for layer in self.layers for a in (layer.weight, layer.bias)]

    def apply(self, x, params):
        """Forward pass on a tape; ``params`` is ``[W1, b1, W2, b2, W3, b3]``."""
        w1, b1, w2, b2, w3, b3 = params
        h1 = ad.tanh(ad.matmul(x, ad.transpose(w1)) + b1)
        h2 = ad.tanh(ad.matmul(h1, ad.transpose(w2)) + b2)
        if self.residual:
            h2 = h2 + h1
        return ad.matmul(h2, ad.transpose(w3)) + b3

    def numpy_forward(self, x):
        w1, b1, w2, b2, w3, b3 = self.arrays()
        h1 = np.tanh(x @ w1.T + b1)
        h2 = np.tanh(h1 @ w2.T + b2)
        if self.residual:
            h2 = h2 + h1
        return h2 @ w3.T + b3


def _dense(rng, n_in, n_out):
    return Dense(rng.standard_normal((n_out, n_in)) / np.sqrt(n_in), np.zeros(n_out))


def _mlp(rng, n_in, hidden, n_out, residual):
    return MLP(
        [_dense(rng, n_in, hidden), _dense(rng, hidden, hidden), _dense(rng, hidden, n_out)],
        residual,
    )


@dataclass
class Model:
    """A parametric vector-field model.

    ``nets`` maps ``"direct"`` (baseline), ``"H"`` (hnn) or ``"H"`` and ``"D"``
    (dhnn) to independent networks.
    """

    kind: str
    input_dim: int
    nets: dict = field(default_factory=dict)

    def parameters(self):
        """Parameter arrays in a fixed order (network order, then layer order)."""
        return [a for name in self.net_names() for a in self.nets[name].arrays()]

    def net_names(self):
        return {"baseline": ["direct"], "hnn": ["H"], "dhnn": ["H", "D"]}[self.kind]

    def n_parameters(self):
        return sum(a.size for a in self.parameters())

    def bind(self, tape, track=True):
        """Place the parameters on ``tape`` (as variables, or constants)."""
        make = tape.var if track else tape.constant
        return BoundModel(self, {name: [make(a) for a in self.nets[name].arrays()]
                                 for name in self.net_names()})

    def copy(self):
        return Model(
            self.kind,
            self.input_dim,
            {
                name: MLP([Dense(l.weight.copy(), l.bias.copy()) for l in net.layers], net.residual)
                for name, net in self.nets.items()
            },
        )


@dataclass
class BoundModel:
    model: Model
    params: dict

    @property
    def kind(self):
        return self.model.kind

    @property
    def input_dim(self):
        return self.model.input_dim

    def flat_params(self):
        return [p for name in self.model.net_names() for p in self.params[name]]

    def potential(self, name, x):
        return potential_value(self, name, x)

    def direct(self, x):
        return direct_value(self, x)


def init(kind, input_dim=3, seed=42, hidden=HIDDEN):
    if kind not in KINDS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {KINDS}")
    if input_dim not in (2, 3):
        raise ValueError(f"input_dim must be 2 or 3, got {input_dim}")
    rng = np.random.default_rng(seed)
    if kind == "baseline":
        nets = {"direct": _mlp(rng, input_dim, hidden, 2, residual=False)}
    elif kind == "hnn":
        nets = {"H": _mlp(rng, input_dim, hidden, 1, residual=False)}
    else:
        nets = {
            "H": _mlp(rng, input_dim, hidden, 1, residual=True),
            "D": _mlp(rng, input_dim, hidden, 1, residual=True),
        }
    return Model(kind, input_dim, nets)


def _check_input(bound, x):
    if x.value.ndim != 2 or x.shape[1] != bound.input_dim:
        raise DataError(f"expected inputs of shape (n, {bound.input_dim}), got {x.shape}")


def potential_value(bound, name, x):
    """Scalar potential ``name`` ("H" or "D") per row of ``x``, shape (n,)."""
    if bound.kind == "baseline":
        raise ValueError("baseline models have no potential")
    _check_input(bound, x)
    out = bound.model.nets[name].apply(x, bound.params[name])
    return out[:, 0]


def direct_value(bound, x):
    """Predicted (dq/dt, dp/dt) per row of ``x``, shape (n, 2)."""
    if bound.kind != "baseline":
        raise ValueError("direct_value is only defined for baseline models")
    _check_input(bound, x)
    return bound.model.nets["direct"].apply(x, bound.params["direct"])


# ---------------------------------------------------------------- checkpoints


def serialize(model):
    out = [MAGIC, struct.pack("<IBI", FORMAT_VERSION, KINDS.index(model.kind), model.input_dim)]
    for name in model.net_names():
        for layer in model.nets[name].layers:
            rows, cols = layer.weight.shape
            out.append(struct.pack("<II", rows, cols))
            out.append(layer.weight.astype("<f8").tobytes())
            out.append(layer.bias.astype("<f8").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def read(self, n):
        if self.pos + n > len(self.data):
            raise CheckpointTruncatedError(
                f"checkpoint truncated: needed {n} bytes at offset {self.pos}, "
                f"{len(self.data) - self.pos} left"
            )
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.read(struct.calcsize(fmt)))


def deserialize(data):
    r = _Reader(bytes(data))
    if r.read(len(MAGIC)) != MAGIC:
        raise CheckpointVersionError("not a checkpoint: bad magic header")
    version, kind_tag, input_dim = r.unpack("<IBI")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"unsupported checkpoint version {version} (expected {FORMAT_VERSION})"
        )
    if kind_tag >= len(KINDS):
        raise CheckpointError(f"unknown model kind tag {kind_tag}")
    if input_dim not in (2, 3):
        raise CheckpointShapeError(f"invalid input dimension {input_dim}")
    kind = KINDS[kind_tag]
    out_dim = 2 if kind == "baseline" else 1
    model = Model(kind, input_dim)
    for name in model.net_names():
        layers = []
        for i in range(3):
            rows, cols = r.unpack("<II")
            if rows * cols > len(r.data):
                raise CheckpointShapeError(f"implausible layer shape {rows}x{cols}")
            w = np.frombuffer(r.read(8 * rows * cols), dtype="<f8").reshape(rows, cols)
            b = np.frombuffer(r.read(8 * rows), dtype="<f8")
            layers.append(Dense(w.astype(np.float64), b.astype(np.float64)))
        hidden = layers[0].weight.shape[0]
        expected = [(hidden, input_dim), (hidden, hidden), (out_dim, hidden)]
        got = [l.weight.shape for l in layers]
        if got != expected:
            raise CheckpointShapeError(f"layer shapes {got} do not match {expected}")
        model.nets[name] = MLP(layers, residual=(kind == "dhnn"))
    if r.pos != len(r.data):
        raise CheckpointError(f"{len(r.data) - r.pos} trailing bytes after checkpoint")
    return model


def save(model, path):
    with open(path, "wb") as fh:
        fh.write(serialize(model))


def load(path):
    with open(path, "rb") as fh:
        return deserialize(fh.read())
