"""Dormand-Prince 5(4) integration of planar fields ``f(t, q, p)``.

Adaptive steps use a PI controller (safety 0.9, step factor clamped to
[0.2, 10]); outputs at requested times come from the method's 4th-order
dense-output polynomial.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import IntegrationError

C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
E = B5 - B4

# dense output: y(t0 + s h) = y0 + h * sum_k K_k * (P[k] . [s, s^2, s^3, s^4])
P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
ALPHA = 0.7 / 5
BETA = 0.4 / 5


@dataclass
class TrajectorySpec:
    initial: tuple = (0.9, 0.0)
    t_span: tuple = (0.0, 20.0)
    rel_tol: float = 1e-12
    abs_tol: float = 1e-12
    eval_times: np.ndarray = None

    def __post_init__(self):
        t0, t1 = self.t_span
        if not t1 > t0:
            raise ValueError(f"t_span must be increasing, got {self.t_span}")
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.eval_times is None:
            self.eval_times = np.linspace(t0, t1, 201)
        self.eval_times = np.asarray(self.eval_times, dtype=float)
        et = self.eval_times
        if et.ndim != 1 or len(et) == 0:
            raise ValueError("eval_times must be a non-empty 1-D sequence")
        if np.any(np.diff(et) <= 0):
            raise ValueError("eval_times must be strictly increasing")
        if et[0] < t0 or et[-1] > t1:
            raise ValueError("eval_times must lie inside t_span")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n, 2): q, p
    accepted: int = 0
    rejected: int = 0
    n_evals: int = field(default=0)

    @property
    def q(self):
        return self.states[:, 0]

    @property
    def p(self):
        return self.states[:, 1]


def _wrap(fn):
    def f(t, y):
        out = np.array(fn(t, y[0], y[1]), dtype=float).reshape(2)
        if not np.all(np.isfinite(out)):
            raise IntegrationError(t, "field returned non-finite values")
        return out
    return f


def _stages(f, t, y, h, k0):
    K = np.empty((7, y.size))
    K[0] = k0
    for s in range(1, 7):
        K[s] = f(t + C[s] * h, y + h * (np.dot(A[s], K[:s])))
    y_new = y + h * np.dot(B5, K)
    return y_new, K


def _initial_step(f, t0, y0, f0, rtol, atol, direction=1.0):
    scale = atol + np.abs(y0) * rtol
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + h0 * direction * f0
    f1 = f(t0 + h0 * direction, y1)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1)


def integrate(field_fn, spec):
    """Integrate ``field_fn(t, q, p) -> (dq/dt, dp/dt)`` over ``spec.t_span``."""
    f = _wrap(field_fn)
    t0, t1 = map(float, spec.t_span)
    rtol, atol = spec.rel_tol, spec.abs_tol
    y = np.array(spec.initial, dtype=float).reshape(2)
    eval_times = spec.eval_times
    out = np.empty((len(eval_times), 2))
    j = 0
    while j < len(eval_times) and eval_times[j] <= t0:
        out[j] = y
        j += 1

    t = t0
    k0 = f(t, y)
    n_evals = 1
    h = _initial_step(f, t, y, k0, rtol, atol)
    n_evals += 1
    h = min(h, t1 - t0)
    err_prev = 1e-4
    accepted = rejected = 0

    while t < t1:
        min_step = 16 * np.spacing(max(abs(t), 1.0))
        if h < min_step:
            raise IntegrationError(t, "step size underflow")
        last = t + h >= t1 or (t1 - (t + h)) < min_step
        if last:
            h = t1 - t
        y_new, K = _stages(f, t, y, h, k0)
        n_evals += 6
        scale = atol + np.maximum(np.abs(y), np.abs(y_new)) * rtol
        err = np.sqrt(np.mean((h * np.dot(E, K) / scale) ** 2))
        if not np.isfinite(err):
            raise IntegrationError(t, "non-finite error estimate")

        if err <= 1.0:
            t_new = t1 if last else t + h
            k_new = K[6]  # first-same-as-last
            Q = K.T @ P
            while j < len(eval_times) and eval_times[j] <= t_new:
                if eval_times[j] == t_new:
                    out[j] = y_new
                else:
                    s = (eval_times[j] - t) / h
                    out[j] = y + h * Q @ np.array([s, s * s, s ** 3, s ** 4])
                j += 1
            if err == 0.0:
                factor = MAX_FACTOR
            else:
                factor = SAFETY * err ** -ALPHA * err_prev ** BETA
                factor = min(MAX_FACTOR, max(MIN_FACTOR, factor))
            err_prev = max(err, 1e-4)
            t, y, k0 = t_new, y_new, k_new
            h *= factor
            accepted += 1
        else:
            factor = max(MIN_FACTOR, SAFETY * err ** -(1 / 5))
            h *= factor
            rejected += 1

    return Trajectory(eval_times.copy(), out, accepted, rejected, n_evals)


def integrate_fixed(field_fn, initial, t_span, n_steps):
    """Fixed-step Dormand-Prince (5th-order solution, no error control)."""
    f = _wrap(field_fn)
    t0, t1 = map(float, t_span)
    h = (t1 - t0) / n_steps
    y = np.array(initial, dtype=float).reshape(2)
    states = [y.copy()]
    t = t0
    for i in range(n_steps):
        y, _ = _stages(f, t, y, h, f(t, y))
        t = t0 + (i + 1) * h
        states.append(y.copy())
    return Trajectory(t0 + h * np.arange(n_steps + 1), np.array(states), n_steps, 0)


def energy_along(trajectory, hamiltonian):
    """Analytic energy ``hamiltonian(q, p)`` at every state of a trajectory."""
    return np.asarray(hamiltonian(trajectory.q, trajectory.p), dtype=float)


def write_trajectory(path, trajectory, energy=None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# t q p" + (" energy" if energy is not None else "") + "\n")
        for i, (t, (q, p)) in enumerate(zip(trajectory.times, trajectory.states)):
            cols = [t, q, p] + ([energy[i]] if energy is not None else [])
            fh.write(" ".join(repr(float(c)) for c in cols) + "\n")
