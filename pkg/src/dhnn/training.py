"""Mini-batch Adam training of the field models."""

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .datasets import iter_batches
from .dynamics import loss
from .errors import DataError, TrainingDiverged

LOG_EVERY = 100


@dataclass
class TrainConfig:
    learning_rate: float = 1e-2
    steps: int = 5000
    batch_size: int = 128
    weight_decay: float = 0.0
    seed: int = 42
    hnn_spring_lr_override: float = 5e-3

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")


@dataclass
class AdamState:
    m: list
    v: list
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros_like(cls, params):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params, grads, state, lr, weight_decay=0.0):
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state differ in length")
    for i, g in enumerate(grads):
        if g.shape != params[i].shape:
            raise ValueError(f"gradient {i} has shape {g.shape}, parameter {params[i].shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in parameter block {i}")
    state.step_count += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step_count
    c2 = 1.0 - b2 ** state.step_count
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if weight_decay:
            g = g + weight_decay * p
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return params, state


@dataclass
class TrainReport:
    losses: list = field(default_factory=list)  # (step, train batch loss)
    final_train_loss: float = float("nan")
    final_test_loss: float = float("nan")
    initial_train_loss: float = float("nan")
    initial_test_loss: float = float("nan")
    wall_time: float = 0.0
    learning_rate: float = 0.0

    def log_lines(self, every=LOG_EVERY):
        lines = [f"{s} {l!r}" for s, l in self.losses if s % every == 0]
        lines.append(
            f"# final train_loss={self.final_train_loss!r} test_loss={self.final_test_loss!r} "
            f"wall_time={self.wall_time:.3f}"
        )
        return lines

    def write_log(self, path, every=LOG_EVERY):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.log_lines(every)) + "\n")


def loss_value(model, samples, chunk=4096):
    """Mean loss over ``samples`` without parameter gradients."""
    from .metrics import test_mse

    return test_mse(model, samples, chunk=chunk)


def loss_and_grads(model, batch):
    tape = ad.Tape()
    bound = model.bind(tape)
    value = loss(bound, batch)
    return float(value.value), ad.gradient(value, bound.flat_params())


def effective_learning_rate(model, cfg, task=None):
    if model.kind == "hnn" and task == "spring":
        return cfg.hnn_spring_lr_override
    return cfg.learning_rate


def train(model, dataset, cfg=None, task=None, progress=None):
    """Train ``model`` in place on ``dataset.train``; returns ``(model, report)``.

    Raises :class:`TrainingDiverged` if a loss or gradient becomes non-finite.
    """
    cfg = cfg or TrainConfig()
    if dataset.train.data.shape[1] != 5 or len(dataset.train) == 0:
        raise DataError("empty training set")
    lr = effective_learning_rate(model, cfg, task)
    report = TrainReport(learning_rate=lr)
    report.initial_train_loss = loss_value(model, dataset.train)
    report.initial_test_loss = loss_value(model, dataset.test) if len(dataset.test) else float("nan")

    params = model.parameters()
    state = AdamState.zeros_like(params)
    batches = iter_batches(dataset.train, cfg.batch_size, cfg.seed)
    start = time.perf_counter()
    for step in range(1, cfg.steps + 1):
        value, grads = loss_and_grads(model, next(batches))
        if not np.isfinite(value):
            raise TrainingDiverged(step)
        try:
            adam_step(params, grads, state, lr, cfg.weight_decay)
        except FloatingPointError as exc:
            raise TrainingDiverged(step, f"training diverged at step {step}: {exc}") from None
        report.losses.append((step, value))
        if progress is not None and step % LOG_EVERY == 0:
            progress(step, value)
    report.wall_time = time.perf_counter() - start

    if cfg.steps == 0:
        report.final_train_loss = report.initial_train_loss
        report.final_test_loss = report.initial_test_loss
    else:
        report.final_train_loss = loss_value(model, dataset.train)
        report.final_test_loss = (
            loss_value(model, dataset.test) if len(dataset.test) else float("nan")
        )
        if not np.isfinite(report.final_train_loss):
            raise TrainingDiverged(cfg.steps)
    return model, report
