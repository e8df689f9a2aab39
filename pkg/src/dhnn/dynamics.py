"""Vector fields built from learned potentials, and the training loss.

For a potential pair (H, D) on canonical coordinates (q, p) the field is

    dq/dt =  dH/dp + s * dD/dq
    dp/dt = -dH/dq + s * dD/dp

where ``s`` is the dissipation scale (1 during training).  The learned D is
fitted with a plus sign, so for a damped spring it converges to the negative
of the textbook Rayleigh function (about -rho p^2 / 2 up to a constant).

When the model takes time as a third input it is fed through the networks
but its derivative is never used.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import DataError


@dataclass
class PhasePoint:
    q: float
    p: float
    t: float = 0.0


@dataclass
class FieldValue:
    """Predicted time derivatives; arrays share the shape of the query points."""

    dq_dt: np.ndarray
    dp_dt: np.ndarray
    _conservative: tuple = None
    _dissipative: tuple = None

    @property
    def conservative(self):
        if self._conservative is None:
            raise ValueError("baseline models do not define a conservative/dissipative split")
        return self._conservative

    @property
    def dissipative(self):
        if self._dissipative is None:
            raise ValueError("baseline models do not define a conservative/dissipative split")
        return self._dissipative


class AnalyticPotentials:
    """A dhnn-shaped model whose potentials are closed-form expressions.

    ``H`` and ``D`` take ``(q, p, t)`` as tape variables and return one value
    per row.  Either may be ``None`` for an identically zero potential.
    """

    kind = "dhnn"

    def __init__(self, H=None, D=None, input_dim=2):
        self.H = H
        self.D = D
        self.input_dim = input_dim

    def bind(self, tape, track=False):
        return self

    def potential(self, name, x):
        fn = self.H if name == "H" else self.D
        q, p = x[:, 0], x[:, 1]
        t = x[:, 2] if self.input_dim == 3 else 0.0
        if fn is None:
            return q * 0.0
        return fn(q, p, t)


def make_inputs(q, p, t=None, input_dim=3):
    """Stack coordinates into an (n, input_dim) model input array."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    p = np.atleast_1d(np.asarray(p, dtype=float))
    cols = [q, p]
    if input_dim == 3:
        cols.append(np.zeros_like(q) if t is None else np.broadcast_to(np.asarray(t, float), q.shape))
    elif input_dim != 2:
        raise ValueError(f"input_dim must be 2 or 3, got {input_dim}")
    return np.stack(cols, axis=1)


def field_nodes(bound, x, scale=1.0):
    """Field components on the tape for inputs ``x`` (a tracked (n, d) Var).

    Returns ``(dq, dp, conservative, dissipative)``; the last two are
    ``None`` for baseline models.  Derivatives are kept on the tape so the
    result can be differentiated again with respect to parameters.
    """
    if bound.kind == "baseline":
        out = bound.direct(x)
        return out[:, 0], out[:, 1], None, None

    (gh,) = ad.gradient_as_nodes(ad.sum_all(bound.potential("H", x)), [x])
    cons = (gh[:, 1], -gh[:, 0])
    if bound.kind == "hnn":
        zero = gh[:, 0] * 0.0
        return cons[0], cons[1], cons, (zero, zero)

    (gd,) = ad.gradient_as_nodes(ad.sum_all(bound.potential("D", x)), [x])
    diss = (gd[:, 0] * scale, gd[:, 1] * scale)
    return cons[0] + diss[0], cons[1] + diss[1], cons, diss


def eval_field(model, x, dissipation_scale=1.0):
    """Evaluate the field at the rows of ``x`` (or a single PhasePoint)."""
    if isinstance(x, PhasePoint):
        x = make_inputs(x.q, x.p, x.t, model.input_dim)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != model.input_dim:
        raise DataError(f"expected {model.input_dim} input columns, got {x.shape[1]}")
    tape = ad.Tape()
    bound = model.bind(tape, track=False)
    xv = tape.var(x)
    # the second sweep (parameters) is never taken here
    dq, dp, cons, diss = field_nodes(bound, xv, dissipation_scale)
    if cons is None:
        return FieldValue(dq.value.copy(), dp.value.copy())
    return FieldValue(
        dq.value.copy(),
        dp.value.copy(),
        (cons[0].value.copy(), cons[1].value.copy()),
        (diss[0].value.copy(), diss[1].value.copy()),
    )


def loss(bound, batch):
    """Mean over the batch of the squared error summed over (dq/dt, dp/dt).

    ``bound`` is a model bound to a tape (``model.bind(tape)``) so the result
    can be differentiated with respect to ``bound.flat_params()``.
    """
    if len(batch) == 0:
        raise DataError("empty batch")
    x_np = batch.inputs(bound.input_dim)
    tape = _bound_tape(bound)
    x = tape.var(x_np)
    dq, dp, _, _ = field_nodes(bound, x)
    eq = dq - batch.dq_dt
    ep = dp - batch.dp_dt
    return ad.mean(ad.square(eq) + ad.square(ep))


def _bound_tape(bound):
    for params in bound.params.values():
        return params[0].tape
    raise ValueError("model is not bound to a tape")


def counterfactual_field(model, scale, t_input=0.0):
    """Field function ``f(t, q, p) -> (dq/dt, dp/dt)`` with scaled dissipation.

    ``t_input`` is the value fed to time-aware models; integration time is
    not forwarded to the networks.
    """

    def field(t, q, p):
        x = make_inputs(q, p, t_input, model.input_dim)
        value = eval_field(model, x, scale)
        return float(value.dq_dt[0]), float(value.dp_dt[0])

    return field


def model_field(model, t_input=0.0):
    return counterfactual_field(model, 1.0, t_input)


def potential_grid(model, x, name):
    """Plain values of potential ``name`` at the rows of ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    tape = ad.Tape()
    bound = model.bind(tape, track=False)
    return np.asarray(bound.potential(name, tape.constant(x)).value, dtype=float).copy()
