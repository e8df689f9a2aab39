"""Command-line interface: ``dhnn {generate,train,eval,rollout,decompose,compare}``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
Settings are resolved as built-in defaults < ``--config`` JSON file < flags.
"""

import argparse
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
import json
import logging
import os
import sys

import numpy as np

from . import datasets, experiments, helmgrid, models
from .dynamics import eval_field, make_inputs, potential_grid
from .errors import DataError, NumericalError
from .integrators import energy_along, write_trajectory
from .metrics import EvalReport, pendulum_energy, spring_energy
from .training import TrainConfig, train

log = logging.getLogger("dhnn")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4
TASKS = ("spring", "pendulum", "ocean", "custom")
TASK_STEPS = {"ocean": 24000}
DEFAULT_REGIONS = {"spring": (-2.0, 2.0, -2.0, 2.0), "pendulum": (-np.pi, np.pi, -3.0, 3.0),
                   "ocean": (-1.0, 1.0, -1.0, 1.0), "custom": (-2.0, 2.0, -2.0, 2.0)}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    task: str = "spring"
    model: str = "dhnn"
    seed: int = 42
    lr: float = None  # None: 1e-2, with the HNN-on-spring override
    steps: int = None  # None: per-task default
    batch_size: int = 128
    weight_decay: float = 0.0
    hidden: int = models.HIDDEN
    input_dim: int = 3
    rho: float = 2.0
    n_samples: int = 2000
    scale: float = 1.0
    tol: float = None
    iterations: int = helmgrid.DEFAULT_ITERATIONS
    grid: tuple = (50, 50)

    def validate(self):
        if self.task not in TASKS:
            raise UsageError(f"unknown task {self.task!r}; choose from {', '.join(TASKS)}")
        if self.model not in models.KINDS:
            raise UsageError(f"unknown model {self.model!r}; choose from {', '.join(models.KINDS)}")
        if self.input_dim not in (2, 3):
            raise UsageError("input_dim must be 2 or 3")
        if len(tuple(self.grid)) != 2 or min(self.grid) < 3:
            raise UsageError("grid must be two integers, each at least 3")
        return self

    def train_config(self):
        steps = self.steps if self.steps is not None else TASK_STEPS.get(self.task, 5000)
        try:
            if self.lr is None:
                return TrainConfig(steps=steps, batch_size=self.batch_size,
                                   weight_decay=self.weight_decay, seed=self.seed)
            return TrainConfig(learning_rate=self.lr, steps=steps, batch_size=self.batch_size,
                               weight_decay=self.weight_decay, seed=self.seed,
                               hnn_spring_lr_override=self.lr)
        except ValueError as exc:
            raise UsageError(str(exc)) from None


def load_config_file(path):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise UsageError(f"unknown config keys in {path}: {', '.join(unknown)}")
    return raw


def resolve_config(args):
    values = {}
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    if "grid" in values:
        values["grid"] = tuple(int(g) for g in values["grid"])
    return RunConfig(**values).validate()


# ---------------------------------------------------------------- helpers


def _emit(text, path=None):
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _figure_path(out, suffix):
    base = os.path.splitext(out)[0] if out else "dhnn"
    return f"{base}.{suffix}.png"


def _require(path, what):
    if not path:
        raise UsageError(f"--{what} is required for this command")
    if not os.path.exists(path):
        raise DataError(f"{path}: no such file")
    return path


def _task_energy(task):
    if task == "spring":
        return spring_energy
    if task == "pendulum":
        return pendulum_energy
    return None


def _load_task_data(task, path, seed):
    """``(SplitDataset, extras)`` for a task's data file."""
    if task == "pendulum":
        blocks = datasets.read_pendulum_blocks(path)
        ds = experiments.pendulum_dataset(blocks, seed)
        return ds, {"blocks": blocks}
    if task == "ocean":
        data = datasets.ingest_ocean(path)
        if data.dropped:
            log.info("dropped %d masked ocean points", data.dropped)
        ds = datasets.split(data.samples, seed, normalization=data.maps)
        return ds, {"ocean": data}
    return datasets.split(datasets.read_samples(path), seed), {}


def _load_model(path):
    return models.load(_require(path, "checkpoint"))


# ---------------------------------------------------------------- commands


def cmd_generate(cfg, args):
    out = args.out
    if not out:
        raise UsageError("--out is required for generate")
    try:
        if cfg.task == "spring" or cfg.task == "custom":
            spring = datasets.SpringConfig(rho=cfg.rho, n_samples=cfg.n_samples)
            datasets.write_samples(out, datasets.generate_spring(spring, cfg.seed))
        elif cfg.task == "pendulum":
            rho = cfg.rho if args.rho is not None else 0.2
            datasets.write_pendulum(out, datasets.synthesize_pendulum(rho=rho, seed=cfg.seed))
        else:
            datasets.write_ocean_grid(out, datasets.synthesize_ocean())
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    log.info("wrote %s", out)
    return EXIT_OK


def cmd_train(cfg, args):
    path = _require(args.data, "data")
    ds, _ = _load_task_data(cfg.task, path, cfg.seed)
    if args.checkpoint:
        model = _load_model(args.checkpoint)
        if model.input_dim != cfg.input_dim:
            raise DataError(f"checkpoint has input_dim {model.input_dim}, "
                            f"but input_dim {cfg.input_dim} was requested")
        if model.kind != cfg.model:
            raise DataError(f"checkpoint holds a {model.kind} model, not {cfg.model}")
    else:
        model = models.init(cfg.model, cfg.input_dim, cfg.seed, cfg.hidden)

    def progress(step, value):
        log.info("step %d loss %.6g", step, value)

    model, report = train(model, ds, cfg.train_config(), task=cfg.task, progress=progress)
    out = args.out or f"{cfg.task}_{cfg.model}.ckpt"
    models.save(model, out)
    if args.log:
        report.write_log(args.log)
    summary = {"model": cfg.model, "task": cfg.task, "checkpoint": out,
               "train_mse": report.final_train_loss, "test_mse": report.final_test_loss,
               "learning_rate": report.learning_rate, "wall_time": report.wall_time}
    if args.json:
        print(json.dumps(summary, sort_keys=True))
    else:
        print(f"train_mse: {report.final_train_loss!r}")
        print(f"test_mse: {report.final_test_loss!r}")
        print(f"checkpoint: {out}")
    if args.plot:
        from .plotting import plot_losses

        log.info("wrote %s", plot_losses(_figure_path(out, "loss"), {cfg.model: report.losses}))
    return EXIT_OK


def evaluate(model, cfg, ds, extras):
    label = model.kind
    if cfg.task == "spring":
        return experiments.evaluate_spring(label, model, ds.test, cfg.rho)
    if cfg.task == "pendulum":
        truth = experiments.pendulum_truth(extras["blocks"], ds)
        return experiments.evaluate_pendulum(label, model, ds, truth)
    from .metrics import test_mse

    return EvalReport(label, test_mse(model, ds.test))


def cmd_eval(cfg, args):
    model = _load_model(args.checkpoint)
    ds, extras = _load_task_data(cfg.task, _require(args.data, "data"), cfg.seed)
    report = evaluate(model, cfg, ds, extras)
    _emit(report.to_json() if args.json else report.to_text(), args.out)
    return EXIT_OK


def cmd_rollout(cfg, args):
    model = _load_model(args.checkpoint)
    t_span = tuple(args.t_span) if args.t_span else experiments.SPRING_HORIZON
    initial = tuple(args.initial) if args.initial else (0.9, 0.0)
    tol = cfg.tol if cfg.tol is not None else 1e-12
    try:
        eval_times = np.linspace(*t_span, args.points)
        traj = experiments.rollout(model, initial, t_span, cfg.scale, eval_times,
                                   t_input=args.time or 0.0, rel_tol=tol, abs_tol=tol)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    hamiltonian = _task_energy(cfg.task)
    energy = energy_along(traj, hamiltonian) if hamiltonian else None
    out = args.out or "rollout.txt"
    write_trajectory(out, traj, energy)
    print(f"trajectory: {out}")
    print(f"accepted_steps: {traj.accepted}")
    print(f"rejected_steps: {traj.rejected}")
    if args.plot:
        from .plotting import plot_rollouts

        label = f"{model.kind} x{cfg.scale:g}"
        curves = {label: traj}
        energies = {label: energy} if energy is not None else None
        if cfg.task == "spring" and initial and model.kind == "dhnn":
            truth = experiments.spring_truth(initial, t_span, cfg.scale * cfg.rho, n=args.points)
            name = f"closed form rho={cfg.scale * cfg.rho:g}"
            curves[name] = truth
            if energies is not None:
                energies[name] = energy_along(truth, hamiltonian)
        log.info("wrote %s", plot_rollouts(_figure_path(out, "rollout"), curves, energies))
    return EXIT_OK


def _region(cfg, args):
    if args.region:
        x0, x1, y0, y1 = args.region
        if not (x1 > x0 and y1 > y0):
            raise UsageError("--region must be X0 X1 Y0 Y1 with X1 > X0 and Y1 > Y0")
        return (x0, x1), (y0, y1)
    x0, x1, y0, y1 = DEFAULT_REGIONS[cfg.task]
    return (x0, x1), (y0, y1)


def model_decomposition(model, cfg, region, t=0.0):
    """The learned split on a grid: ``(GridField total, Decomposition, H, D)``."""
    if model.kind == "baseline":
        raise DataError("a baseline model has no conservative/dissipative decomposition")
    nx, ny = cfg.grid
    (xa, xb), (ya, yb) = region
    grid = helmgrid.GridField(xa, ya, (xb - xa) / (nx - 1), (yb - ya) / (ny - 1),
                              np.zeros((ny, nx)), np.zeros((ny, nx)))
    X, Y = grid.mesh()
    x = make_inputs(X.ravel(), Y.ravel(), np.full(X.size, float(t)), model.input_dim)
    value = eval_field(model, x, cfg.scale)
    shape = X.shape
    cu, cv = (a.reshape(shape) for a in value.conservative)
    du, dv = (a.reshape(shape) for a in value.dissipative)
    H = potential_grid(model, x, "H").reshape(shape)
    D = (potential_grid(model, x, "D").reshape(shape) * cfg.scale if model.kind == "dhnn"
         else np.zeros(shape))
    total = helmgrid.GridField(xa, ya, grid.hx, grid.hy, value.dq_dt.reshape(shape),
                               value.dp_dt.reshape(shape))
    dec = helmgrid.Decomposition(replace(total, u=du, v=dv), replace(total, u=cu, v=cv), D,
                                 0.0, 0, True)
    return total, dec, H, D


def cmd_decompose(cfg, args):
    if bool(args.checkpoint) == bool(args.data):
        raise UsageError("decompose takes exactly one of --checkpoint or --data")
    out = args.out or "decomposition.txt"
    if args.checkpoint:
        model = _load_model(args.checkpoint)
        total, dec, H, D = model_decomposition(model, cfg, _region(cfg, args), args.time or 0.0)
        helmgrid.write_decomposition(out, total, dec, extra={"H": H, "D": D})
        print(f"decomposition: {out}")
        print("method: learned")
    else:
        path = _require(args.data, "data")
        tol = cfg.tol if cfg.tol is not None else helmgrid.DEFAULT_TOLERANCE
        if cfg.task == "ocean":
            fs = datasets.read_ocean_grid(path)
            if not 0 <= args.frame < fs.frames:
                raise UsageError(f"--frame must lie in [0, {fs.frames - 1}]")
            total = helmgrid.grid_from_frame(fs, args.frame)
            if not (np.all(np.isfinite(total.u)) and np.all(np.isfinite(total.v))):
                total = _fill_masked(total)
        else:
            s = datasets.read_samples(path)
            pts = np.column_stack([s.q, s.p, s.dq_dt, s.dp_dt])
            bounds = _region(cfg, args) if args.region else None
            total = helmgrid.rasterize(pts, *cfg.grid, bounds=bounds)
        dec = helmgrid.decompose(total, cfg.iterations, tol)
        H = D = None
        helmgrid.write_decomposition(out, total, dec)
        print(f"decomposition: {out}")
        print("method: gauss-seidel")
        print(f"iterations: {dec.iterations}")
        print(f"residual_norm: {dec.residual_norm!r}")
        print(f"converged: {str(dec.converged).lower()}")
        if not dec.converged:
            log.warning("iteration cap reached with residual %.3g above tolerance %.3g",
                        dec.residual_norm, tol)
    if args.plot:
        from .plotting import plot_fields

        X, Y = total.mesh()
        panels = {"total": (total.u, total.v),
                  "conservative / rotational": (dec.rotational.u, dec.rotational.v),
                  "dissipative / irrotational": (dec.irrotational.u, dec.irrotational.v)}
        scalars = {"H": H, "D": D} if H is not None else {"phi": dec.potential}
        log.info("wrote %s", plot_fields(_figure_path(out, "fields"), X, Y, panels, scalars))
    return EXIT_OK


def _fill_masked(grid):
    """Nearest valid neighbour for masked grid nodes."""
    X, Y = grid.mesh()
    ok = np.isfinite(grid.u) & np.isfinite(grid.v)
    if not ok.any():
        raise DataError("frame has no valid velocities")
    pts = np.column_stack([X[ok], Y[ok], grid.u[ok], grid.v[ok]])
    bounds = ((grid.x[0], grid.x[-1]), (grid.y[0], grid.y[-1]))
    return helmgrid.rasterize(pts, grid.nx, grid.ny, bounds)


def _fmt(value):
    if value is None:
        return "absent"
    return repr(value) if isinstance(value, float) else str(value)


def _compare_one(task, kind, cfg, data_path):
    """Train and score one model kind; runs in a worker process under --jobs."""
    if data_path:
        ds, extras = _load_task_data(task, data_path, cfg.seed)
    else:
        ds, extras = _synthetic_task_data(task, cfg)
    model = models.init(kind, cfg.input_dim, cfg.seed, cfg.hidden)
    model, report = train(model, ds, cfg.train_config(), task=task)
    evaluation = evaluate(model, cfg, ds, extras)
    extra = {}
    if task == "spring" and kind == "dhnn":
        errs = experiments.counterfactual_errors(model, trained_rho=cfg.rho)
        extra = {f"counterfactual_mse_scale_{s:g}": v for s, v in errs.items()}
    if task == "ocean" and kind != "baseline" and extras.get("synthetic"):
        cons, diss = experiments.ocean_component_correlations(model, extras["ocean"].frameset)
        extra = {"conservative_corr": float(np.median(cons))}
        if kind == "dhnn":
            extra["dissipative_corr"] = float(np.median(diss))
    return kind, models.serialize(model), report, evaluation, extra


def _synthetic_task_data(task, cfg):
    if task == "pendulum":
        blocks = datasets.synthesize_pendulum(seed=cfg.seed)
        return experiments.pendulum_dataset(blocks, cfg.seed), {"blocks": blocks}
    if task == "ocean":
        data = datasets.ocean_samples(datasets.synthesize_ocean())
        ds = datasets.split(data.samples, cfg.seed, normalization=data.maps)
        return ds, {"ocean": data, "synthetic": True}
    spring = datasets.SpringConfig(rho=cfg.rho, n_samples=cfg.n_samples)
    return datasets.split(datasets.generate_spring(spring, cfg.seed), cfg.seed), {}


def cmd_compare(cfg, args):
    if cfg.task == "custom":
        raise UsageError("compare supports the spring, pendulum and ocean tasks")
    kinds = ("hnn", "dhnn") if cfg.task == "ocean" else models.KINDS
    data_path = _require(args.data, "data") if args.data else None
    jobs = max(1, args.jobs)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(kinds))) as pool:
            results = list(pool.map(_compare_one, [cfg.task] * len(kinds), kinds,
                                    [cfg] * len(kinds), [data_path] * len(kinds)))
    else:
        results = [_compare_one(cfg.task, k, cfg, data_path) for k in kinds]

    out_dir = args.out
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    rows = []
    for kind, blob, report, evaluation, extra in results:
        row = asdict(evaluation)
        row.update(extra)
        row["train_mse"] = report.final_train_loss
        rows.append(row)
        if out_dir:
            with open(os.path.join(out_dir, f"{cfg.task}_{kind}.ckpt"), "wb") as fh:
                fh.write(blob)
            report.write_log(os.path.join(out_dir, f"{cfg.task}_{kind}.log"))
    if args.json:
        print(json.dumps(rows, sort_keys=True))
    else:
        print("\n\n".join("\n".join(f"{k}: {_fmt(v)}" for k, v in row.items()) for row in rows))
    if args.plot:
        _compare_figures(cfg, results, out_dir or ".")
    return EXIT_OK


def _compare_figures(cfg, results, out_dir):
    from .plotting import plot_losses, plot_rollouts

    trained = {kind: models.deserialize(blob) for kind, blob, *_ in results}
    histories = {kind: report.losses for kind, _, report, *_ in results}
    log.info("wrote %s", plot_losses(os.path.join(out_dir, f"{cfg.task}_losses.png"), histories))
    if cfg.task == "spring":
        curves = {k: experiments.rollout(m) for k, m in trained.items()}
        curves["closed form"] = experiments.spring_truth(rho=cfg.rho)
        energy = {k: energy_along(t, spring_energy) for k, t in curves.items()}
        path = os.path.join(out_dir, "spring_rollouts.png")
        log.info("wrote %s", plot_rollouts(path, curves, energy))
        if "dhnn" in trained:
            cf = {}
            for s in (0.5, 1.0, 2.0):
                cf[f"dhnn x{s:g}"] = experiments.rollout(trained["dhnn"], scale=s,
                                                         t_span=experiments.COUNTERFACTUAL_HORIZON)
                cf[f"rho={s * cfg.rho:g}"] = experiments.spring_truth(
                    t_span=experiments.COUNTERFACTUAL_HORIZON, rho=s * cfg.rho)
            path = os.path.join(out_dir, "spring_counterfactuals.png")
            log.info("wrote %s", plot_rollouts(path, cf))


# ---------------------------------------------------------------- parser


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of settings (flags override it)")
    common.add_argument("--task", choices=TASKS)
    common.add_argument("--model", choices=models.KINDS)
    common.add_argument("--seed", type=int)
    common.add_argument("--lr", type=float, help="learning rate (default 1e-2; HNN on spring 5e-3)")
    common.add_argument("--steps", type=int, help="training steps (default 5000; ocean 24000)")
    common.add_argument("--batch-size", type=int)
    common.add_argument("--weight-decay", type=float)
    common.add_argument("--hidden", type=int, help="hidden width (default 256)")
    common.add_argument("--input-dim", type=int, choices=(2, 3))
    common.add_argument("--rho", type=float, help="spring friction (default 2)")
    common.add_argument("--n-samples", type=int, help="spring sample count (default 2000)")
    common.add_argument("--scale", type=float, help="dissipation scale (default 1)")
    common.add_argument("--grid", type=int, nargs=2, metavar=("NX", "NY"))
    common.add_argument("--tol", type=float, help="integrator or solver tolerance")
    common.add_argument("--iterations", type=int, help="Gauss-Seidel sweep cap (default 500)")
    common.add_argument("--out", help="output file (directory for compare)")
    common.add_argument("--data", help="input data file")
    common.add_argument("--checkpoint", help="model checkpoint")
    common.add_argument("--json", action="store_true", help="structured output")
    common.add_argument("--plot", action="store_true", help="also render PNG figures")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="dhnn", description="Learn and compare conservative/dissipative field decompositions.",
        epilog="exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write a synthetic dataset")
    p = sub.add_parser("train", parents=[common], help="train a model on a data file")
    p.add_argument("--log", help="write the step/loss log here")
    sub.add_parser("eval", parents=[common], help="score a checkpoint on a data file")
    p = sub.add_parser("rollout", parents=[common], help="integrate a learned field")
    p.add_argument("--initial", type=float, nargs=2, metavar=("Q", "P"))
    p.add_argument("--t-span", type=float, nargs=2, metavar=("T0", "T1"))
    p.add_argument("--points", type=int, default=201, help="output times (default 201)")
    p.add_argument("--time", type=float, help="value of the time input (default 0)")
    p = sub.add_parser("decompose", parents=[common],
                       help="split a field into conservative and dissipative parts")
    p.add_argument("--region", type=float, nargs=4, metavar=("X0", "X1", "Y0", "Y1"))
    p.add_argument("--time", type=float, help="time input for learned models (default 0)")
    p.add_argument("--frame", type=int, default=0, help="ocean frame for --data grids")
    p = sub.add_parser("compare", parents=[common], help="train and score every model kind")
    p.add_argument("--jobs", type=int, default=1, help="parallel training processes")
    return parser


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "eval": cmd_eval,
            "rollout": cmd_rollout, "decompose": cmd_decompose, "compare": cmd_compare}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on bad flags
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"dhnn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"dhnn: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        print(f"dhnn: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"dhnn: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
