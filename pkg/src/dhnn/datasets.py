"""Training data: the analytic damped spring, pendulum trajectories and
gridded ocean currents, plus splitting and batching.

File formats
------------
Sample file
    one record per line, ``t q p dq_dt dp_dt`` separated by single spaces;
    lines starting with ``#`` are ignored.
Pendulum file
    blocks of ``time q p`` lines; blocks (trajectories) are separated by
    blank lines.
Ocean grid file
    a header line ``frames rows cols lon0 lon_step lat0 lat_step t_step_days``
    followed by ``frames*rows*cols`` lines of ``u v`` in frame-major,
    row-major order (row = latitude index, column = longitude index).
    ``nan nan`` marks a masked point.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

T, Q, P, DQ, DP = range(5)


@dataclass(frozen=True)
class PhaseSample:
    q: float
    p: float
    t: float
    dq_dt: float
    dp_dt: float


class SampleSet:
    """An immutable table of phase samples (columns ``t q p dq_dt dp_dt``)."""

    def __init__(self, data):
        data = np.array(data, dtype=np.float64, copy=True).reshape(-1, 5)
        data.setflags(write=False)
        self.data = data

    def __len__(self):
        return self.data.shape[0]

    def __getitem__(self, key):
        if isinstance(key, (int, np.integer)):
            t, q, p, dq, dp = self.data[key]
            return PhaseSample(q=q, p=p, t=t, dq_dt=dq, dp_dt=dp)
        return SampleSet(self.data[key])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other):
        return isinstance(other, SampleSet) and np.array_equal(self.data, other.data)

    @classmethod
    def from_samples(cls, samples):
        return cls([[s.t, s.q, s.p, s.dq_dt, s.dp_dt] for s in samples])

    @classmethod
    def concat(cls, sets):
        return cls(np.concatenate([s.data for s in sets], axis=0))

    t = property(lambda self: self.data[:, T])
    q = property(lambda self: self.data[:, Q])
    p = property(lambda self: self.data[:, P])
    dq_dt = property(lambda self: self.data[:, DQ])
    dp_dt = property(lambda self: self.data[:, DP])

    def inputs(self, input_dim):
        if input_dim == 3:
            return np.ascontiguousarray(self.data[:, [Q, P, T]])
        if input_dim == 2:
            return np.ascontiguousarray(self.data[:, [Q, P]])
        raise DataError(f"input_dim must be 2 or 3, got {input_dim}")


# ---------------------------------------------------------------- spring


@dataclass
class SpringConfig:
    k: float = 1.0
    m: float = 1.0
    rho: float = 2.0
    n_samples: int = 2000
    region: tuple = ((-2.0, 2.0), (-2.0, 2.0))

    def __post_init__(self):
        if self.k <= 0 or self.m <= 0:
            raise ValueError("spring constant and mass must be positive")
        if self.rho < 0:
            raise ValueError("friction coefficient must be non-negative")
        (q0, q1), (p0, p1) = self.region
        if not (q1 > q0 and p1 > p0):
            raise ValueError(f"empty sampling region {self.region}")


def spring_field(q, p, k=1.0, m=1.0, rho=2.0):
    return p / m, -k * q - rho * p / m


def generate_spring(cfg=None, seed=42):
    cfg = cfg or SpringConfig()
    if cfg.n_samples < 1:
        raise ValueError("n_samples must be positive")
    rng = np.random.default_rng(seed)
    (q0, q1), (p0, p1) = cfg.region
    q = rng.uniform(q0, q1, cfg.n_samples)
    p = rng.uniform(p0, p1, cfg.n_samples)
    dq, dp = spring_field(q, p, cfg.k, cfg.m, cfg.rho)
    return SampleSet(np.stack([np.zeros_like(q), q, p, dq, dp], axis=1))


# ---------------------------------------------------------------- pendulum


@dataclass
class PendulumConfig:
    m: float = 1.0
    l: float = 1.0
    g: float = 3.0


def pendulum_field(q, p, cfg=None, rho=0.0):
    cfg = cfg or PendulumConfig()
    dq = cfg.l ** 2 * p / cfg.m
    dp = -2.0 * cfg.m * cfg.g * cfg.l * np.sin(q) - rho * dq
    return dq, dp


def read_pendulum_blocks(path):
    """Trajectories as a list of (n, 3) arrays of ``time q p``."""
    blocks, current = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if text.startswith("#"):
                continue
            if not text:
                if current:
                    blocks.append(current)
                    current = []
                continue
            parts = text.split()
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected 'time q p', got {text!r}")
            try:
                current.append([float(v) for v in parts])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if current:
        blocks.append(current)
    if not blocks:
        raise DataError(f"{path}: no pendulum records")
    arrays = []
    for i, block in enumerate(blocks):
        arr = np.asarray(block, dtype=float)
        if len(arr) < 3:
            raise DataError(f"{path}: trajectory {i} has {len(arr)} rows; at least 3 required")
        if not np.all(np.diff(arr[:, 0]) > 0):
            raise DataError(f"{path}: time is not strictly increasing in trajectory {i}")
        if not np.all(np.isfinite(arr)):
            raise DataError(f"{path}: non-finite values in trajectory {i}")
        arrays.append(arr)
    return arrays


def finite_difference_targets(time, x):
    """Central differences in the interior, one-sided at both ends."""
    d = np.empty_like(x)
    d[1:-1] = (x[2:] - x[:-2]) / (time[2:] - time[:-2])
    d[0] = (x[1] - x[0]) / (time[1] - time[0])
    d[-1] = (x[-1] - x[-2]) / (time[-1] - time[-2])
    return d


def samples_from_blocks(blocks):
    rows = []
    for arr in blocks:
        time, q, p = arr[:, 0], arr[:, 1], arr[:, 2]
        dq = finite_difference_targets(time, q)
        dp = finite_difference_targets(time, p)
        rows.append(np.stack([np.zeros_like(q), q, p, dq, dp], axis=1))
    return SampleSet(np.concatenate(rows))


def ingest_pendulum(path, cfg=None):
    """Samples (t = 0) with finite-difference targets from a pendulum file.

    ``cfg`` is accepted for symmetry with the energy function; readings are
    used as-is.
    """
    return samples_from_blocks(read_pendulum_blocks(path))


def write_pendulum(path, blocks):
    with open(path, "w", encoding="utf-8") as fh:
        for i, arr in enumerate(blocks):
            if i:
                fh.write("\n")
            for row in arr:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def synthesize_pendulum(cfg=None, rho=0.2, n_trajectories=5, duration=10.0, dt=0.05, seed=42):
    """Noise-free damped pendulum trajectories, integrated at tight tolerance.

    Initial angles are drawn from [-1.5, 1.5] rad at rest.
    """
    from .integrators import TrajectorySpec, integrate

    cfg = cfg or PendulumConfig()
    rng = np.random.default_rng(seed)
    times = np.arange(int(round(duration / dt)) + 1) * dt
    blocks = []
    for _ in range(n_trajectories):
        q0 = rng.uniform(-1.5, 1.5)
        traj = integrate(
            lambda t, q, p: pendulum_field(q, p, cfg, rho),
            TrajectorySpec(initial=(q0, 0.0), t_span=(0.0, times[-1]), eval_times=times,
                           rel_tol=1e-10, abs_tol=1e-10),
        )
        blocks.append(np.column_stack([traj.times, traj.states]))
    return blocks


# ---------------------------------------------------------------- normalization


@dataclass(frozen=True)
class AffineMap:
    """``normalize(x) = (x - offset) * scale``; maps [lo, hi] onto [-1, 1]."""

    offset: float
    scale: float

    @classmethod
    def onto_unit(cls, lo, hi):
        if hi == lo:
            return cls(lo, 1.0)
        return cls((lo + hi) / 2.0, 2.0 / (hi - lo))

    def normalize(self, x):
        return (np.asarray(x, dtype=float) - self.offset) * self.scale

    def denormalize(self, y):
        return np.asarray(y, dtype=float) / self.scale + self.offset


# ---------------------------------------------------------------- ocean


@dataclass
class OceanFrameSet:
    frames: int
    rows: int
    cols: int
    lon0: float
    lon_step: float
    lat0: float
    lat_step: float
    t_step_days: float
    u: np.ndarray  # (frames, rows, cols); nan where masked
    v: np.ndarray

    @property
    def lon(self):
        return self.lon0 + self.lon_step * np.arange(self.cols)

    @property
    def lat(self):
        return self.lat0 + self.lat_step * np.arange(self.rows)

    def maps(self):
        """Affine maps for (longitude, latitude, frame index) onto [-1, 1]."""
        lon, lat = self.lon, self.lat
        return (
            AffineMap.onto_unit(lon.min(), lon.max()),
            AffineMap.onto_unit(lat.min(), lat.max()),
            AffineMap.onto_unit(0.0, float(self.frames - 1)),
        )


def read_ocean_grid(path):
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in (raw.strip() for raw in fh) if ln and not ln.startswith("#")]
    if not lines:
        raise DataError(f"{path}: empty ocean grid file")
    head = lines[0].split()
    if len(head) != 8:
        raise DataError(f"{path}: header must have 8 fields, got {len(head)}")
    try:
        frames, rows, cols = (int(v) for v in head[:3])
        lon0, lon_step, lat0, lat_step, t_step = (float(v) for v in head[3:])
    except ValueError as exc:
        raise DataError(f"{path}: bad header: {exc}") from None
    if min(frames, rows, cols) < 1:
        raise DataError(f"{path}: grid dimensions must be positive")
    expected = frames * rows * cols
    body = lines[1:]
    if len(body) != expected:
        raise DataError(
            f"{path}: header announces {frames}x{rows}x{cols}={expected} rows, found {len(body)}"
        )
    try:
        uv = np.array([ln.split() for ln in body], dtype=float)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if uv.ndim != 2 or uv.shape[1] != 2:
        raise DataError(f"{path}: every data row must be 'u v'")
    if np.any(np.isinf(uv)):
        raise DataError(f"{path}: infinite velocity values")
    uv = uv.reshape(frames, rows, cols, 2)
    return OceanFrameSet(frames, rows, cols, lon0, lon_step, lat0, lat_step, t_step,
                         uv[..., 0].copy(), uv[..., 1].copy())


def write_ocean_grid(path, fs):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{fs.frames} {fs.rows} {fs.cols} {fs.lon0!r} {fs.lon_step!r} "
                 f"{fs.lat0!r} {fs.lat_step!r} {fs.t_step_days!r}\n")
        for u, v in zip(fs.u.ravel(), fs.v.ravel()):
            if np.isnan(u) or np.isnan(v):
                fh.write("nan nan\n")
            else:
                fh.write(f"{float(u)!r} {float(v)!r}\n")


@dataclass
class OceanSamples:
    frameset: OceanFrameSet
    samples: SampleSet
    dropped: int
    maps: tuple = field(default=None)


def ocean_samples(fs):
    lon_map, lat_map, t_map = fs.maps()
    t = t_map.normalize(np.arange(fs.frames, dtype=float))
    y = lat_map.normalize(fs.lat)
    x = lon_map.normalize(fs.lon)
    tt, yy, xx = np.meshgrid(t, y, x, indexing="ij")
    data = np.stack([tt, xx, yy, fs.u, fs.v], axis=-1).reshape(-1, 5)
    keep = np.all(np.isfinite(data), axis=1)
    return OceanSamples(fs, SampleSet(data[keep]), int((~keep).sum()), (lon_map, lat_map, t_map))


def ingest_ocean(path):
    """Read an ocean grid file into normalized samples.

    Inputs (x, y, t) are mapped to [-1, 1]; targets (u, v) are left raw.
    Masked points are dropped and counted in ``.dropped``.
    """
    return ocean_samples(read_ocean_grid(path))


# Synthetic ocean: two drifting Gaussian eddies (stream function) and two
# Gaussian sources/sinks (velocity potential), defined on normalized
# coordinates so velocities are derivatives with respect to them.
_EDDIES = ((1.0, 0.35, (-0.4, 0.3), (0.2, 0.0)), (-0.8, 0.30, (0.4, 0.0), (-0.3, 0.2)))
_SOURCES = ((0.5, 0.40, (0.0, 0.1), (-0.1, 0.0)), (-0.35, 0.30, (0.5, 0.0), (0.5, -0.15)))


def _gaussians(x, y, t, specs):
    val = np.zeros(np.broadcast(x, y, t).shape)
    dx = np.zeros_like(val)
    dy = np.zeros_like(val)
    for amp, width, (cx0, cxv), (cy0, cyv) in specs:
        cx = cx0 + cxv * t
        cy = cy0 + cyv * t
        g = amp * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / width ** 2)
        val += g
        dx += -2.0 * (x - cx) / width ** 2 * g
        dy += -2.0 * (y - cy) / width ** 2 * g
    return val, dx, dy


def synthetic_ocean_truth(x, y, t):
    """Exact components at normalized (x, y, t).

    Returns ``(rotational_u, rotational_v, irrotational_u, irrotational_v,
    stream, potential)``.
    """
    psi, psi_x, psi_y = _gaussians(x, y, t, _EDDIES)
    phi, phi_x, phi_y = _gaussians(x, y, t, _SOURCES)
    return psi_y, -psi_x, phi_x, phi_y, psi, phi


def synthesize_ocean(frames=69, rows=20, cols=20):
    """A time-varying grid whose Helmholtz components are known exactly."""
    lon0, lat0, step = -40.0, 10.0, 1.0 / 3.0
    fs = OceanFrameSet(frames, rows, cols, lon0, step, lat0, step, 5.0,
                       np.zeros((frames, rows, cols)), np.zeros((frames, rows, cols)))
    lon_map, lat_map, t_map = fs.maps()
    t = t_map.normalize(np.arange(frames, dtype=float))
    tt, yy, xx = np.meshgrid(t, lat_map.normalize(fs.lat), lon_map.normalize(fs.lon),
                             indexing="ij")
    ru, rv, iu, iv, _, _ = synthetic_ocean_truth(xx, yy, tt)
    fs.u = ru + iu
    fs.v = rv + iv
    return fs


# ---------------------------------------------------------------- sample files


def write_samples(path, samples):
    with open(path, "w", encoding="utf-8") as fh:
        for row in samples.data:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_samples(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) != 5:
                raise DataError(f"{path}:{lineno}: expected 5 fields 't q p dq_dt dp_dt'")
            try:
                rows.append([float(v) for v in parts])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: no samples")
    data = np.asarray(rows)
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path}: non-finite values")
    return SampleSet(data)


# ---------------------------------------------------------------- split / batch


@dataclass
class SplitDataset:
    train: SampleSet
    test: SampleSet
    train_indices: np.ndarray
    test_indices: np.ndarray
    normalization: tuple = None


def split(samples, seed=42, train_fraction=0.8, normalization=None):
    n = len(samples)
    if n < 2:
        raise DataError("at least 2 samples are needed to split")
    order = np.random.default_rng(seed).permutation(n)
    n_train = min(max(1, int(n * train_fraction)), n - 1)
    tr, te = order[:n_train], order[n_train:]
    return SplitDataset(samples[tr], samples[te], tr, te, normalization)


def iter_batches(train, batch_size=128, seed=42):
    """Endless mini-batches; each epoch is a fresh shuffle, last short batch kept."""
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    rng = np.random.default_rng([seed, 1])
    n = len(train)
    while True:
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            yield train[order[start:start + batch_size]]


def split_and_batch(samples, seed=42, batch_size=128, normalization=None):
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    ds = split(samples, seed, normalization=normalization)
    return ds, iter_batches(ds.train, batch_size, seed)
