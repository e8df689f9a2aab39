import numpy as np
import pytest

from dhnn import datasets, experiments, models
from dhnn.training import TrainConfig


def test_pearson():
    a = np.arange(10.0)
    assert experiments.pearson(a, 3 * a + 1) == pytest.approx(1.0)
    assert experiments.pearson(a, -a) == pytest.approx(-1.0)
    assert np.isnan(experiments.pearson(a, np.ones(10)))


def test_spring_truth_starts_at_initial_state():
    truth = experiments.spring_truth(t_span=(0, 10), rho=1.0, n=11)
    assert truth.times.tolist() == list(np.linspace(0, 10, 11))
    assert truth.states[0].tolist() == [0.9, 0.0]


def test_pendulum_truth_is_a_tail_of_one_block():
    blocks = datasets.synthesize_pendulum(n_trajectories=3, duration=2.0)
    ds = experiments.pendulum_dataset(blocks, seed=0)
    truth = experiments.pendulum_truth(blocks, ds)
    first = int(ds.test_indices[0])
    flat = np.concatenate(blocks)
    assert np.array_equal(truth.states[0], flat[first, 1:])
    assert np.all(np.diff(truth.times) > 0)


def test_rollout_of_untrained_models_runs():
    for kind in models.KINDS:
        m = models.init(kind, 3, 0, hidden=8)
        traj = experiments.rollout(m, t_span=(0, 1), eval_times=np.linspace(0, 1, 5),
                                   rel_tol=1e-8, abs_tol=1e-8)
        assert traj.states.shape == (5, 2)


def test_small_spring_benchmark():
    cfg = TrainConfig(steps=20, batch_size=32)
    results = experiments.spring_benchmark(
        kinds=("dhnn",), cfg=cfg, spring_cfg=datasets.SpringConfig(n_samples=100))
    ev = results["dhnn"].evaluation
    assert ev.label == "dhnn"
    assert all(np.isfinite(v) for v in (ev.test_mse, ev.trajectory_mse, ev.energy_mse))


def test_ocean_correlations_shape():
    fs = datasets.synthesize_ocean(frames=3, rows=6, cols=6)
    m = models.init("dhnn", 3, 0, hidden=8)
    cons, diss = experiments.ocean_component_correlations(m, fs)
    assert cons.shape == diss.shape == (3,)
    assert np.all(np.abs(cons) <= 1) and np.all(np.abs(diss) <= 1)
