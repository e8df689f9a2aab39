"""End-to-end task pipelines shared by the command line and the acceptance tests.

Each pipeline builds its dataset, trains one model per kind and scores it with
the metrics of the corresponding benchmark.
"""

from dataclasses import dataclass, field

import numpy as np

from . import datasets, models
from .dynamics import eval_field, make_inputs, model_field, counterfactual_field
from .integrators import TrajectorySpec, Trajectory, integrate
from .metrics import (EvalReport, damped_oscillator, energy_mse, pendulum_energy,
                      spring_energy, test_mse, trajectory_mse)
from .training import TrainConfig, train

KINDS = ("baseline", "hnn", "dhnn")
SPRING_HORIZON = (0.0, 20.0)
COUNTERFACTUAL_HORIZON = (0.0, 10.0)


@dataclass
class RunResult:
    kind: str
    model: object
    report: object
    evaluation: EvalReport
    extra: dict = field(default_factory=dict)


def train_kind(kind, dataset, cfg, task, input_dim=3, hidden=models.HIDDEN, progress=None):
    model = models.init(kind, input_dim, cfg.seed, hidden)
    return train(model, dataset, cfg, task=task, progress=progress)


# ---------------------------------------------------------------- spring


def spring_truth(initial=(0.9, 0.0), t_span=SPRING_HORIZON, rho=2.0, k=1.0, m=1.0, n=201):
    times = np.linspace(*t_span, n)
    q, p = damped_oscillator(times - t_span[0], *initial, k=k, m=m, rho=rho)
    return Trajectory(times, np.column_stack([q, p]))


def rollout(model, initial=(0.9, 0.0), t_span=SPRING_HORIZON, scale=1.0, eval_times=None,
            t_input=0.0, rel_tol=1e-12, abs_tol=1e-12):
    spec = TrajectorySpec(initial=tuple(initial), t_span=tuple(t_span), rel_tol=rel_tol,
                          abs_tol=abs_tol, eval_times=eval_times)
    if model.kind == "dhnn":
        fn = counterfactual_field(model, scale, t_input)
    else:
        fn = model_field(model, t_input)
    return integrate(fn, spec)


def evaluate_spring(kind, model, test, rho=2.0):
    truth = spring_truth(rho=rho)
    traj = rollout(model)
    return EvalReport(kind, test_mse(model, test), trajectory_mse(traj, truth),
                      energy_mse(traj, truth, spring_energy))


def counterfactual_errors(model, scales=(0.5, 2.0), trained_rho=2.0):
    """Trajectory MSE of scaled D-HNN rollouts against the closed form at
    ``rho = scale * trained_rho``."""
    out = {}
    for s in scales:
        truth = spring_truth(t_span=COUNTERFACTUAL_HORIZON, rho=s * trained_rho)
        traj = rollout(model, t_span=COUNTERFACTUAL_HORIZON, scale=s)
        out[s] = trajectory_mse(traj, truth)
    return out


def spring_benchmark(kinds=KINDS, cfg=None, spring_cfg=None, progress=None):
    cfg = cfg or TrainConfig()
    spring_cfg = spring_cfg or datasets.SpringConfig()
    samples = datasets.generate_spring(spring_cfg, cfg.seed)
    ds = datasets.split(samples, cfg.seed)
    results = {}
    for kind in kinds:
        model, report = train_kind(kind, ds, cfg, "spring", progress=progress)
        results[kind] = RunResult(kind, model, report,
                                  evaluate_spring(kind, model, ds.test, spring_cfg.rho))
    return results


# ---------------------------------------------------------------- pendulum


def pendulum_dataset(blocks, seed):
    samples = datasets.samples_from_blocks(blocks)
    return datasets.split(samples, seed)


def pendulum_truth(blocks, ds):
    """The recorded trajectory holding the first test sample, from that sample on."""
    first = int(ds.test_indices[0])
    offset = 0
    for arr in blocks:
        if first < offset + len(arr):
            seg = arr[first - offset:]
            if len(seg) < 2:
                seg = arr[-2:]
            return Trajectory(seg[:, 0].copy(), seg[:, 1:].copy())
        offset += len(arr)
    raise IndexError("test index outside the recorded trajectories")


def evaluate_pendulum(kind, model, ds, truth, cfg=None):
    cfg = cfg or datasets.PendulumConfig()
    traj = rollout(model, truth.states[0], (truth.times[0], truth.times[-1]),
                   eval_times=truth.times)

    def energy(q, p):
        return pendulum_energy(q, p, cfg.m, cfg.l, cfg.g)

    return EvalReport(kind, test_mse(model, ds.test), trajectory_mse(traj, truth),
                      energy_mse(traj, truth, energy))


def pendulum_benchmark(blocks, kinds=KINDS, cfg=None, progress=None):
    cfg = cfg or TrainConfig()
    ds = pendulum_dataset(blocks, cfg.seed)
    truth = pendulum_truth(blocks, ds)
    results = {}
    for kind in kinds:
        model, report = train_kind(kind, ds, cfg, "pendulum", progress=progress)
        results[kind] = RunResult(kind, model, report,
                                  evaluate_pendulum(kind, model, ds, truth))
    return results


# ---------------------------------------------------------------- ocean


def pearson(a, b):
    a = np.ravel(a) - np.mean(a)
    b = np.ravel(b) - np.mean(b)
    denom = np.sqrt(np.sum(a * a) * np.sum(b * b))
    return float(np.sum(a * b) / denom) if denom > 0 else float("nan")


def ocean_component_correlations(model, frameset):
    """Per-frame Pearson correlation (u and v pooled, interior nodes) between
    the learned and the exact synthetic components.

    Returns ``(conservative, dissipative)`` arrays with one value per frame.
    """
    lon_map, lat_map, t_map = frameset.maps()
    x = lon_map.normalize(frameset.lon)[1:-1]
    y = lat_map.normalize(frameset.lat)[1:-1]
    X, Y = np.meshgrid(x, y)
    cons, diss = [], []
    for k in range(frameset.frames):
        t = float(t_map.normalize(float(k)))
        ru, rv, iu, iv, _, _ = datasets.synthetic_ocean_truth(X, Y, t)
        inp = make_inputs(X.ravel(), Y.ravel(), np.full(X.size, t), model.input_dim)
        value = eval_field(model, inp)
        cu, cv = value.conservative
        du, dv = value.dissipative
        cons.append(pearson(np.concatenate([cu, cv]), np.concatenate([ru.ravel(), rv.ravel()])))
        diss.append(pearson(np.concatenate([du, dv]), np.concatenate([iu.ravel(), iv.ravel()])))
    return np.array(cons), np.array(diss)


def ocean_benchmark(frameset=None, kinds=("hnn", "dhnn"), cfg=None, progress=None):
    cfg = cfg or TrainConfig(steps=24000)
    frameset = frameset if frameset is not None else datasets.synthesize_ocean()
    data = datasets.ocean_samples(frameset)
    ds = datasets.split(data.samples, cfg.seed, normalization=data.maps)
    results = {}
    for kind in kinds:
        model, report = train_kind(kind, ds, cfg, "ocean", progress=progress)
        res = RunResult(kind, model, report, EvalReport(kind, test_mse(model, ds.test)))
        if kind != "baseline":
            cons, diss = ocean_component_correlations(model, frameset)
            res.extra = {"conservative_corr": float(np.median(cons)),
                         "dissipative_corr": float(np.median(diss))}
        results[kind] = res
    return results
