"""Two-alloy heated plate: transient diffusion with a switched-off Gaussian source.

The plate ``[-1/2, 1/2]^2`` is split at ``x = 0`` into a left alloy with
conductivity ``kappa0`` and a right alloy with ``kappa1``. Space is discretised
with a cell-centred five-point scheme (harmonic-mean face conductivities,
zero flux through the outer boundary) and time with Crank-Nicolson.

With an even number of cells per axis the weld line falls on cell faces, so
the discrete operator is exactly mirror-symmetric when ``kappa0 == kappa1``.
The source is held constant over each time step and switched off at
``t_final / 2``, which keeps the discrete heat budget exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from ..errors import InvalidArgumentError, NumericalFailureError

PLATE_HALF_WIDTH = 0.5
KAPPA_RANGE = (0.01, 0.2)


@dataclass(frozen=True)
class DiffusionModel:
    """Discretisation and physical constants of the plate problem.

    ``source_width`` enters as ``A exp(-|x - p|^2 / w)`` (not ``w^2``).
    """

    cells: int = 40
    t_final: float = 1.0
    steps: int = 40
    num_saved: int = 20
    rho_c: float = 1.0
    amplitude: float = 50.0
    source_width: float = 0.05
    source_position: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.cells < 3:
            raise InvalidArgumentError("grid must have at least 3x3 cells")
        if self.steps < 1 or self.num_saved < 1:
            raise InvalidArgumentError("steps and num_saved must be >= 1")
        if self.steps % self.num_saved:
            raise InvalidArgumentError("steps must be a multiple of num_saved")
        if self.steps % 2:
            raise InvalidArgumentError("steps must be even so the source switches off on a step")
        if self.t_final <= 0 or self.rho_c <= 0:
            raise InvalidArgumentError("t_final and rho_c must be positive")

    @property
    def h(self):
        return 2 * PLATE_HALF_WIDTH / self.cells

    @property
    def dt(self):
        return self.t_final / self.steps

    @property
    def t_source(self):
        return 0.5 * self.t_final

    @property
    def centers(self):
        """1-D coordinates of the cell centres along either axis."""
        return -PLATE_HALF_WIDTH + (np.arange(self.cells) + 0.5) * self.h

    @property
    def saved_times(self):
        """Times of the saved levels; level 0 is the initial state."""
        return np.arange(self.num_saved + 1) * (self.t_final / self.num_saved)

    def source_field(self, position=None):
        p = self.source_position if position is None else position
        x = self.centers
        xx, yy = np.meshgrid(x, x, indexing="xy")
        return self.amplitude * np.exp(-((xx - p[0]) ** 2 + (yy - p[1]) ** 2) / self.source_width)


@dataclass(frozen=True)
class TemperatureTrajectory:
    """Cell temperatures at the saved levels, shape ``(levels, cells, cells)``.

    Array axis 1 is ``y`` and axis 2 is ``x``. Level 0 is ``t = 0``.
    """

    times: np.ndarray
    fields: np.ndarray
    h: float

    @property
    def cells(self):
        return self.fields.shape[-1]

    def total_heat(self, rho_c=1.0):
        return rho_c * self.h ** 2 * self.fields.reshape(self.fields.shape[0], -1).sum(axis=1)


class _Stencil:
    """Face-incidence matrices for an ``n x n`` cell grid, cached per size."""

    _cache: dict = {}

    def __new__(cls, n):
        if n not in cls._cache:
            self = super().__new__(cls)
            idx = np.arange(n * n).reshape(n, n)
            # x-faces join (j, i) and (j, i + 1); y-faces join (j, i) and (j + 1, i)
            left, right = idx[:, :-1].ravel(), idx[:, 1:].ravel()
            low, high = idx[:-1, :].ravel(), idx[1:, :].ravel()
            self.dx = _incidence(left, right, n * n)
            self.dy = _incidence(low, high, n * n)
            # x-coordinate of the left cell of every x-face, used to find the weld line
            self.xface_col = np.tile(np.arange(n - 1), n)
            self.ycell_col = idx[:-1, :].ravel() % n
            cls._cache[n] = self
        return cls._cache[n]


def _incidence(a, b, size):
    rows = np.arange(a.size)
    data = np.concatenate([-np.ones(a.size), np.ones(a.size)])
    return sp.csr_matrix((data, (np.concatenate([rows, rows]), np.concatenate([a, b]))),
                         shape=(a.size, size))


def _conductances(model, kappa0, kappa1):
    n = model.cells
    st = _Stencil(n)
    cell_kappa = np.where(model.centers < 0.0, kappa0, kappa1)
    ka, kb = cell_kappa[st.xface_col], cell_kappa[st.xface_col + 1]
    gx = 2.0 * ka * kb / (ka + kb)
    gy = cell_kappa[st.ycell_col]
    return st, gx, gy


def stiffness_matrix(model, kappa):
    """Symmetric conductance matrix ``K`` with ``K @ 1 == 0`` (insulated edges)."""
    st, gx, gy = _conductances(model, *kappa)
    return (st.dx.T @ sp.diags(gx) @ st.dx + st.dy.T @ sp.diags(gy) @ st.dy).tocsc()


def _check_kappa(kappa):
    kappa = tuple(float(k) for k in kappa)
    if len(kappa) != 2:
        raise InvalidArgumentError("kappa must be a pair (kappa0, kappa1)")
    if min(kappa) <= 0 or not all(np.isfinite(kappa)):
        raise InvalidArgumentError(f"conductivities must be positive, got {kappa}")
    return kappa


def solve_diffusion(model, kappa, source_positions=None):
    """Integrate the plate problem for one conductivity pair.

    ``source_positions`` optionally lists several source centres; all are
    integrated with one factorisation and a list of trajectories is returned.
    Otherwise a single :class:`TemperatureTrajectory` is returned.
    """
    kappa = _check_kappa(kappa)
    positions = [model.source_position] if source_positions is None else list(source_positions)
    n2 = model.cells ** 2
    K = stiffness_matrix(model, kappa)
    c = model.dt / (2.0 * model.rho_c * model.h ** 2)
    eye = sp.identity(n2, format="csc")
    try:
        lu = splu((eye + c * K).tocsc())
    except RuntimeError as exc:
        raise NumericalFailureError(f"factorisation failed for kappa={kappa}: {exc}") from exc
    explicit = (eye - c * K).tocsr()
    forcing = np.stack([model.source_field(p).ravel() for p in positions], axis=1)
    forcing *= model.dt / model.rho_c

    stride = model.steps // model.num_saved
    off_step = model.steps // 2
    T = np.zeros((n2, len(positions)))
    saved = np.zeros((model.num_saved + 1, n2, len(positions)))
    for step in range(model.steps):
        rhs = explicit @ T
        if step < off_step:
            rhs += forcing
        T = lu.solve(rhs)
        if (step + 1) % stride == 0:
            saved[(step + 1) // stride] = T
    if not np.all(np.isfinite(saved)):
        raise NumericalFailureError(
            f"non-finite temperatures for kappa={kappa}, cells={model.cells}, steps={model.steps}")
    shape = (model.num_saved + 1, model.cells, model.cells)
    trajs = [TemperatureTrajectory(model.saved_times, saved[:, :, k].reshape(shape), model.h)
             for k in range(len(positions))]
    return trajs[0] if source_positions is None else trajs


@dataclass(frozen=True)
class QoIFunctional:
    """Area-weighted mean temperature over a disc or axis-aligned strip at one saved level."""

    kind: str
    time_index: int
    center: tuple = (0.0, 0.0)
    radius: float = 0.05
    x_range: tuple = (0.45, 0.5)
    y_range: tuple = (-0.5, 0.5)

    def __post_init__(self):
        if self.kind not in ("disc", "strip"):
            raise InvalidArgumentError(f"unknown functional kind {self.kind!r}")
        if self.kind == "disc" and self.radius <= 0:
            raise InvalidArgumentError("disc radius must be positive")


def _gauss_panels(a, b, max_panel, order=3):
    """Composite Gauss-Legendre nodes/weights on ``[a, b]``."""
    panels = max(1, int(np.ceil((b - a) / max_panel)))
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _region_quadrature(f, h):
    lo, hi = -PLATE_HALF_WIDTH, PLATE_HALF_WIDTH
    if f.kind == "disc":
        r, wr = _gauss_panels(0.0, f.radius, h / 4)
        ntheta = max(32, int(np.ceil(2 * np.pi * f.radius / (h / 4))))
        theta = 2 * np.pi * (np.arange(ntheta) + 0.5) / ntheta
        rr, tt = np.meshgrid(r, theta, indexing="ij")
        x = f.center[0] + rr * np.cos(tt)
        y = f.center[1] + rr * np.sin(tt)
        w = (wr * r)[:, None] * np.full(ntheta, 2 * np.pi / ntheta)[None, :]
        x, y, w = x.ravel(), y.ravel(), np.broadcast_to(w, rr.shape).ravel()
    else:
        x0, x1 = max(f.x_range[0], lo), min(f.x_range[1], hi)
        y0, y1 = max(f.y_range[0], lo), min(f.y_range[1], hi)
        if x1 <= x0 or y1 <= y0:
            raise InvalidArgumentError("strip does not intersect the plate")
        xs, wx = _gauss_panels(x0, x1, h / 4)
        ys, wy = _gauss_panels(y0, y1, h / 4)
        xx, yy = np.meshgrid(xs, ys, indexing="ij")
        x, y, w = xx.ravel(), yy.ravel(), np.outer(wx, wy).ravel()
    inside = (x >= lo) & (x <= hi) & (y >= lo) & (y <= hi)
    if not np.any(inside) or w[inside].sum() <= 0:
        raise InvalidArgumentError("region does not intersect the plate")
    return x[inside], y[inside], w[inside]


def region_weights(f, cells):
    """Weights ``W`` (length ``cells**2``) with ``mean over region = W @ T.ravel()``.

    Cell values are finite-volume cell averages, so each weight is the
    fraction of the region's area lying in that cell (integrated by
    quadrature). Over the whole plate this is exactly the global mean.
    """
    h = 2 * PLATE_HALF_WIDTH / cells
    x, y, w = _region_quadrature(f, h)
    w = w / w.sum()
    i = np.clip(np.floor((x + PLATE_HALF_WIDTH) / h).astype(int), 0, cells - 1)
    j = np.clip(np.floor((y + PLATE_HALF_WIDTH) / h).astype(int), 0, cells - 1)
    out = np.zeros(cells * cells)
    np.add.at(out, j * cells + i, w)
    return out


def apply_region_average(traj, f):
    if not 0 <= f.time_index < traj.fields.shape[0]:
        raise InvalidArgumentError(f"time index {f.time_index} is not a saved level")
    return float(region_weights(f, traj.cells) @ traj.fields[f.time_index].ravel())


def default_sensor_layout():
    """Twenty sensor centres, ten per half-plate, on a staggered (checkerboard) grid.

    Rows are offset from ``y = 0`` so that no two sensors mirror each other
    about the source's symmetry axis (mirrored sensors read identical values).
    """
    rows = np.array([-0.4, -0.2, 0.0, 0.2, 0.4]) + 0.03
    pts = []
    for x in (-0.4375, -0.3125, -0.1875, -0.0625, 0.0625, 0.1875, 0.3125, 0.4375):
        col = int(round((x + 0.4375) / 0.125))
        pick = rows[0::2] if col % 2 == 0 else rows[1::2]
        pts.extend((x, y) for y in pick)
    return np.array(pts)


def desk_sensor_layout():
    """Ten of the twenty default sensors, five per half-plate."""
    full = default_sensor_layout()
    keep = [i for i, (x, _) in enumerate(full) if abs(x) in (0.1875, 0.3125)]
    return full[keep]


@dataclass(frozen=True)
class PlateExperiment:
    """Candidate QoI map ``Lambda -> R^d`` for the plate, plus the prediction functional.

    Candidate ``q`` is the disc average around sensor ``q // len(levels)`` at
    saved level ``levels[q % len(levels)]`` (levels are 1-based).
    """

    model: DiffusionModel = field(default_factory=DiffusionModel)
    sensors: np.ndarray = field(default_factory=desk_sensor_layout)
    levels: tuple = (1, 4, 10, 16)
    radius: float = 0.05
    prediction_source: tuple = (-0.5, -0.5)
    prediction_strip: tuple = (0.45, 0.5)

    def __post_init__(self):
        sensors = np.atleast_2d(np.asarray(self.sensors, dtype=float))
        object.__setattr__(self, "sensors", sensors)
        object.__setattr__(self, "levels", tuple(int(v) for v in self.levels))
        if any(not 1 <= v <= self.model.num_saved for v in self.levels):
            raise InvalidArgumentError(f"levels must lie in 1..{self.model.num_saved}")
        w = np.stack([region_weights(QoIFunctional("disc", 0, tuple(c), self.radius),
                                     self.model.cells) for c in sensors])
        object.__setattr__(self, "_sensor_weights", w)
        strip = QoIFunctional("strip", self.model.num_saved, x_range=tuple(self.prediction_strip))
        object.__setattr__(self, "_strip_weights", region_weights(strip, self.model.cells))

    @property
    def num_qoi(self):
        return len(self.sensors) * len(self.levels)

    param_dim = 2

    def describe(self, q):
        """``(sensor index, 1-based level)`` of candidate ``q``."""
        return int(q) // len(self.levels), self.levels[int(q) % len(self.levels)]

    def sensor_side(self, sensor):
        return "left" if self.sensors[sensor, 0] < 0 else "right"

    def _measure(self, traj):
        fields = traj.fields[list(self.levels)].reshape(len(self.levels), -1)
        return (self._sensor_weights @ fields.T).ravel()

    def _predict(self, traj):
        return float(self._strip_weights @ traj.fields[-1].ravel())

    def __call__(self, lam):
        return self.evaluate(lam)[0]

    def evaluate(self, lam):
        """Candidate QoI vector and prediction value at one parameter point."""
        meas, pred = solve_diffusion(self.model, lam,
                                     [self.model.source_position, self.prediction_source])
        return self._measure(meas), self._predict(pred)

    def evaluate_samples(self, points, progress=None):
        """Evaluate all candidates and the prediction for every row of ``points``."""
        points = np.atleast_2d(points)
        qoi = np.empty((points.shape[0], self.num_qoi))
        pred = np.empty(points.shape[0])
        for i, lam in enumerate(points):
            try:
                qoi[i], pred[i] = self.evaluate(lam)
            except NumericalFailureError as exc:
                raise NumericalFailureError(f"sample {i}: {exc}") from exc
            if progress is not None:
                progress(i)
        return qoi, pred

    def with_model(self, **changes):
        return replace(self, model=replace(self.model, **changes))
