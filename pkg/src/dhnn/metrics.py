"""Test, trajectory and energy errors, and the analytic reference systems."""

from dataclasses import asdict, dataclass
import json

import numpy as np

from .dynamics import eval_field
from .errors import DataError


@dataclass
class EvalReport:
    label: str
    test_mse: float
    trajectory_mse: float = None
    energy_mse: float = None

    def to_text(self):
        lines = []
        for key, value in asdict(self).items():
            if value is None:
                value = "absent"
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{key}: {value}")
        return "\n".join(lines)

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)


def test_mse(model, samples, chunk=4096):
    """Mean over samples of the squared derivative error summed over (q, p).

    Uses the same operations, in the same order, as the training loss.
    """
    n = len(samples)
    if n == 0:
        raise DataError("empty sample set")
    x = samples.inputs(model.input_dim)
    total = 0.0
    for start in range(0, n, chunk):
        sl = slice(start, start + chunk)
        value = eval_field(model, x[sl])
        eq = value.dq_dt - samples.dq_dt[sl]
        ep = value.dp_dt - samples.dp_dt[sl]
        total += np.sum(eq * eq + ep * ep)
    return float(total * (1.0 / n))


def _check_times(a, b):
    if a.times.shape != b.times.shape or not np.allclose(a.times, b.times, rtol=0, atol=1e-12):
        raise DataError("trajectories are sampled at different times")


def trajectory_mse(model_traj, truth_traj):
    _check_times(model_traj, truth_traj)
    return float(np.mean((model_traj.states - truth_traj.states) ** 2))


def energy_mse(model_traj, truth_traj, hamiltonian):
    _check_times(model_traj, truth_traj)
    e_model = hamiltonian(model_traj.q, model_traj.p)
    e_truth = hamiltonian(truth_traj.q, truth_traj.p)
    return float(np.mean((np.asarray(e_model) - np.asarray(e_truth)) ** 2))


# ---------------------------------------------------------------- reference systems


def spring_energy(q, p, k=1.0, m=1.0):
    return 0.5 * k * np.asarray(q) ** 2 + np.asarray(p) ** 2 / (2.0 * m)


def pendulum_energy(q, p, m=1.0, l=1.0, g=3.0):
    q = np.asarray(q)
    p = np.asarray(p)
    return 2.0 * m * g * l * (1.0 - np.cos(q)) + l ** 2 * p ** 2 / (2.0 * m)


def damped_oscillator(t, q0=0.9, p0=0.0, k=1.0, m=1.0, rho=2.0):
    """Closed-form (q, p) of m q'' + rho q' + k q = 0 with p = m q'."""
    t = np.asarray(t, dtype=float)
    v0 = p0 / m
    a = rho / (2.0 * m)
    w2 = k / m - a * a
    scale = max(k / m, a * a, 1e-300)
    if abs(w2) <= 1e-12 * scale:  # critically damped
        c2 = v0 + a * q0
        q = (q0 + c2 * t) * np.exp(-a * t)
        v = (c2 - a * (q0 + c2 * t)) * np.exp(-a * t)
    elif w2 > 0:  # underdamped
        w = np.sqrt(w2)
        c2 = (v0 + a * q0) / w
        e = np.exp(-a * t)
        q = e * (q0 * np.cos(w * t) + c2 * np.sin(w * t))
        v = e * ((-a * q0 + c2 * w) * np.cos(w * t) + (-a * c2 - q0 * w) * np.sin(w * t))
    else:  # overdamped
        s = np.sqrt(-w2)
        l1, l2 = -a + s, -a - s
        c1 = (v0 - l2 * q0) / (l1 - l2)
        c2 = q0 - c1
        q = c1 * np.exp(l1 * t) + c2 * np.exp(l2 * t)
        v = c1 * l1 * np.exp(l1 * t) + c2 * l2 * np.exp(l2 * t)
    return q, m * v
