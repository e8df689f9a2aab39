"""Grid-based Helmholtz decomposition: nearest-neighbour rasterization
followed by a Gauss-Seidel solve of the Poisson equation for the scalar
potential.

The potential solves ``lap(phi) = div(V)`` with Neumann data equal to the
mean outward flux of ``V`` along each side of the box, which keeps the
singular Neumann problem solvable.  The irrotational part is ``grad(phi)``
and the rotational part is the remainder ``V - grad(phi)``.
"""

from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .errors import DataError

DEFAULT_ITERATIONS = 500
DEFAULT_TOLERANCE = 1e-6


@dataclass
class GridField:
    """Vector samples on the nodes of a uniform grid; arrays are (ny, nx)."""

    x0: float
    y0: float
    hx: float
    hy: float
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.u.shape != self.v.shape or self.u.ndim != 2:
            raise DataError("u and v must be 2-D arrays of equal shape")
        if min(self.u.shape) < 3:
            raise DataError(f"grid must be at least 3x3, got {self.u.shape}")
        if not (self.hx > 0 and self.hy > 0):
            raise DataError("grid spacing must be positive")

    @property
    def ny(self):
        return self.u.shape[0]

    @property
    def nx(self):
        return self.u.shape[1]

    @property
    def x(self):
        return self.x0 + self.hx * np.arange(self.nx)

    @property
    def y(self):
        return self.y0 + self.hy * np.arange(self.ny)

    def mesh(self):
        return np.meshgrid(self.x, self.y)

    @classmethod
    def from_function(cls, fn, nx, ny, bounds):
        (xa, xb), (ya, yb) = bounds
        g = cls(xa, ya, (xb - xa) / (nx - 1), (yb - ya) / (ny - 1),
                np.zeros((ny, nx)), np.zeros((ny, nx)))
        X, Y = g.mesh()
        u, v = fn(X, Y)
        return replace(g, u=np.broadcast_to(u, X.shape).copy(),
                       v=np.broadcast_to(v, X.shape).copy())


@dataclass
class Decomposition:
    irrotational: GridField
    rotational: GridField
    potential: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    residual_history: np.ndarray = None


def rasterize(samples, nx=50, ny=50, bounds=None):
    """Nearest-sample value at every grid node.

    ``samples`` is an (n, 4) array of ``x y u v``.  Ties go to the sample
    with the lowest index.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise DataError("rasterize needs at least one sample")
    if samples.shape[1] != 4:
        raise DataError("samples must have columns x y u v")
    if bounds is None:
        bounds = ((samples[:, 0].min(), samples[:, 0].max()),
                  (samples[:, 1].min(), samples[:, 1].max()))
    (xa, xb), (ya, yb) = bounds
    if xb <= xa or yb <= ya:
        raise DataError(f"degenerate bounds {bounds}")
    hx = (xb - xa) / (nx - 1)
    hy = (yb - ya) / (ny - 1)
    gx = xa + hx * np.arange(nx)
    gy = ya + hy * np.arange(ny)
    X, Y = np.meshgrid(gx, gy)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    nearest = np.empty(len(nodes), dtype=np.int64)
    for start in range(0, len(nodes), 512):
        block = nodes[start:start + 512]
        d2 = (block[:, None, 0] - samples[None, :, 0]) ** 2 + (block[:, None, 1] - samples[None, :, 1]) ** 2
        nearest[start:start + 512] = np.argmin(d2, axis=1)  # first minimum wins
    u = samples[nearest, 2].reshape(ny, nx)
    v = samples[nearest, 3].reshape(ny, nx)
    return GridField(xa, ya, hx, hy, u, v)


def divergence(field):
    return (np.gradient(field.u, field.hx, axis=1, edge_order=2)
            + np.gradient(field.v, field.hy, axis=0, edge_order=2))


def curl(field):
    return (np.gradient(field.v, field.hx, axis=1, edge_order=2)
            - np.gradient(field.u, field.hy, axis=0, edge_order=2))


def _trapezoid_weights(n):
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    return w


def _side_flux(values):
    w = _trapezoid_weights(len(values))
    return float(np.sum(w * values) / np.sum(w))


def poisson_rhs(field):
    """Right-hand side with the Neumann data folded in, projected onto the
    range of the discrete operator."""
    u, v, hx, hy = field.u, field.v, field.hx, field.hy
    b = divergence(field)
    g_left = _side_flux(-u[:, 0])
    g_right = _side_flux(u[:, -1])
    g_bottom = _side_flux(-v[0, :])
    g_top = _side_flux(v[-1, :])
    b[:, 0] -= 2.0 * g_left / hx
    b[:, -1] -= 2.0 * g_right / hx
    b[0, :] -= 2.0 * g_bottom / hy
    b[-1, :] -= 2.0 * g_top / hy
    w = np.outer(_trapezoid_weights(field.ny), _trapezoid_weights(field.nx))
    b -= np.sum(w * b) / np.sum(w)
    return b


@njit(cache=True)
def _residual(phi, b, ax, ay):
    ny, nx = phi.shape
    worst = 0.0
    for j in range(ny):
        jm = 1 if j == 0 else j - 1
        jp = ny - 2 if j == ny - 1 else j + 1
        for i in range(nx):
            im = 1 if i == 0 else i - 1
            ip = nx - 2 if i == nx - 1 else i + 1
            lap = ax * (phi[j, im] + phi[j, ip] - 2.0 * phi[j, i]) + ay * (
                phi[jm, i] + phi[jp, i] - 2.0 * phi[j, i])
            r = abs(lap - b[j, i])
            if r > worst:
                worst = r
    return worst


@njit(cache=True)
def _gauss_seidel(phi, b, ax, ay, iterations, tol, history):
    ny, nx = phi.shape
    diag = 2.0 * ax + 2.0 * ay
    for it in range(iterations):
        for j in range(ny):
            jm = 1 if j == 0 else j - 1
            jp = ny - 2 if j == ny - 1 else j + 1
            for i in range(nx):
                im = 1 if i == 0 else i - 1
                ip = nx - 2 if i == nx - 1 else i + 1
                phi[j, i] = (ax * (phi[j, im] + phi[j, ip]) + ay * (phi[jm, i] + phi[jp, i])
                             - b[j, i]) / diag
        r = _residual(phi, b, ax, ay)
        history[it] = r
        if r <= tol:
            return it + 1
    return iterations


def solve_potential(field, iterations=DEFAULT_ITERATIONS, tolerance=DEFAULT_TOLERANCE):
    """Lexicographic Gauss-Seidel for the potential; returns (phi, sweeps, history)."""
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    b = poisson_rhs(field)
    phi = np.zeros_like(b)
    history = np.empty(iterations)
    done = _gauss_seidel(phi, b, 1.0 / field.hx ** 2, 1.0 / field.hy ** 2,
                         int(iterations), float(tolerance), history)
    return phi - phi.mean(), done, history[:done]


def gradient_field(phi, like):
    return replace(like,
                   u=np.gradient(phi, like.hx, axis=1, edge_order=2),
                   v=np.gradient(phi, like.hy, axis=0, edge_order=2))


def decompose(field, iterations=DEFAULT_ITERATIONS, tolerance=DEFAULT_TOLERANCE):
    """Split ``field`` into irrotational and rotational parts.

    The result is always usable; ``converged`` is False when the sweep cap
    was reached with the residual still above ``tolerance``.
    """
    if not (np.all(np.isfinite(field.u)) and np.all(np.isfinite(field.v))):
        raise DataError("field contains non-finite values")
    phi, done, history = solve_potential(field, iterations, tolerance)
    irr = gradient_field(phi, field)
    rot = replace(field, u=field.u - irr.u, v=field.v - irr.v)
    residual = float(history[-1])
    return Decomposition(irr, rot, phi, residual, done, residual <= tolerance, history)


def _same_grid(a, b):
    return (a.u.shape == b.u.shape and np.isclose(a.hx, b.hx) and np.isclose(a.hy, b.hy)
            and np.isclose(a.x0, b.x0) and np.isclose(a.y0, b.y0))


def decomposition_error(dec, truth_irr, truth_rot):
    """Squared vector error (u and v summed) per interior node, averaged over
    nodes and over the two parts; the same reduction as the derivative MSE."""
    for f in (truth_irr, truth_rot):
        if not _same_grid(dec.irrotational, f):
            raise DataError("truth grid does not match the decomposition grid")
    inner = (slice(1, -1), slice(1, -1))
    parts = [(dec.irrotational, truth_irr), (dec.rotational, truth_rot)]
    return float(np.mean([
        np.mean((got.u - want.u)[inner] ** 2 + (got.v - want.v)[inner] ** 2)
        for got, want in parts
    ]))


def write_decomposition(path, field, dec, extra=None):
    """Export in the ocean grid layout with columns
    ``u v u_irr v_irr u_rot v_rot phi`` (plus any ``extra`` named columns)."""
    names = ["u", "v", "u_irr", "v_irr", "u_rot", "v_rot", "phi"]
    cols = [field.u, field.v, dec.irrotational.u, dec.irrotational.v,
            dec.rotational.u, dec.rotational.v, dec.potential]
    for name, arr in (extra or {}).items():
        names.append(name)
        cols.append(arr)
    write_grid_columns(path, field, names, cols)


def write_grid_columns(path, field, names, cols):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"1 {field.ny} {field.nx} {field.x0!r} {field.hx!r} {field.y0!r} {field.hy!r} 0\n")
        fh.write("# " + " ".join(names) + "\n")
        stacked = np.stack([np.asarray(c, dtype=float).ravel() for c in cols], axis=1)
        for row in stacked:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def grid_from_frame(frameset, frame=0):
    return GridField(frameset.lon0, frameset.lat0, frameset.lon_step, frameset.lat_step,
                     frameset.u[frame], frameset.v[frame])
