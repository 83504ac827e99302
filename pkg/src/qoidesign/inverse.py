"""Sample-based approximation of the inverse probability measure.

The parameter box is split into the implicit Voronoi cells of the samples.
Each cell takes the nominal output value of its sample. The output density is
a uniform density on a rectangle around the observed datum, partitioned into
a grid of cells ``D_k``. A sample whose output lies in ``D_k`` gets the share
``V_i / sum_{j in C_k} V_j`` of ``P(D_k)``. Probability is therefore spread
over each contour event in proportion to cell volume.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .domain import box_volume, voronoi_volumes
from .errors import CoverageWarning, EmptySupportError, InvalidArgumentError

UNASSIGNED = -1
VOLUME_MODES = ("equal", "monte-carlo")


@dataclass(frozen=True)
class DataDensity:
    """Uniform output density on a box, partitioned into ``prod(grid)`` equal cells."""

    center: np.ndarray
    widths: np.ndarray
    grid: tuple
    probabilities: np.ndarray = field(repr=False)

    @property
    def dim(self):
        return self.center.size

    @property
    def lower(self):
        return self.center - 0.5 * self.widths

    @property
    def upper(self):
        return self.center + 0.5 * self.widths

    @property
    def num_cells(self):
        return int(np.prod(self.grid))

    def measure(self):
        return float(np.prod(self.widths))

    def cell_index(self, values):
        """Flat cell index of each output row, ``UNASSIGNED`` if outside the box.

        Cells are half-open except along the box's upper faces, which belong to the last cell.
        """
        values = np.atleast_2d(values)
        if values.shape[1] != self.dim:
            raise InvalidArgumentError(f"expected {self.dim} output columns, got {values.shape[1]}")
        grid = np.asarray(self.grid)
        inside = np.all((values >= self.lower) & (values <= self.upper), axis=1)
        frac = (values - self.lower) / self.widths
        cell = np.minimum(np.floor(frac * grid).astype(np.int64), grid - 1)
        cell = np.clip(cell, 0, grid - 1)
        flat = np.ravel_multi_index(tuple(cell.T), tuple(grid))
        return np.where(inside, flat, UNASSIGNED)

    def cell_bounds(self, k):
        idx = np.array(np.unravel_index(int(k), tuple(self.grid)))
        size = self.widths / np.asarray(self.grid)
        lo = self.lower + idx * size
        return lo, lo + size


def build_output_probability(q_ref, widths, grid=None):
    """Uniform density on the box centred at ``q_ref`` with side lengths ``widths``."""
    q_ref = np.atleast_1d(np.asarray(q_ref, dtype=float))
    widths = np.atleast_1d(np.asarray(widths, dtype=float))
    if widths.size == 1 and q_ref.size > 1:
        widths = np.full(q_ref.size, widths[0])
    if widths.shape != q_ref.shape or np.any(widths <= 0):
        raise InvalidArgumentError("need one positive width per output dimension")
    grid = tuple([1] * q_ref.size if grid is None else [int(g) for g in grid])
    if len(grid) != q_ref.size or min(grid) < 1:
        raise InvalidArgumentError("grid needs one count >= 1 per output dimension")
    cells = int(np.prod(grid))
    return DataDensity(q_ref, widths, grid, np.full(cells, 1.0 / cells))


@dataclass(frozen=True)
class InverseSolution:
    cell_probabilities: np.ndarray
    cell_volumes: np.ndarray
    assignment: np.ndarray
    subset: tuple
    density: DataDensity
    domain_volume: float
    lost_mass: float = 0.0
    reference: dict = field(default_factory=dict)

    @property
    def normalized(self):
        return self.lost_mass == 0.0

    @property
    def total_mass(self):
        return float(self.cell_probabilities.sum())

    @property
    def support(self):
        return self.cell_probabilities > 0

    def captured_mass(self):
        """Per output cell: ``(p_D[k], sum of p_Lambda over C_k)`` for cells with samples."""
        out = {}
        for k in np.unique(self.assignment[self.assignment != UNASSIGNED]):
            sel = self.assignment == k
            out[int(k)] = (float(self.density.probabilities[k]),
                           float(self.cell_probabilities[sel].sum()))
        return out


def solve_inverse(samples, subset, density, volume_mode="equal", num_reference=None, seed=0,
                  workers=1):
    """Distribute each ``P(D_k)`` over the samples whose outputs fall in ``D_k``.

    ``volume_mode='equal'`` treats every Voronoi cell as having volume
    ``mu(Lambda) / N``; ``'monte-carlo'`` estimates the cell volumes from
    ``num_reference`` (default ``10 N``) uniform points.
    """
    if samples.qoi_values is None:
        raise InvalidArgumentError("samples have no qoi_values")
    subset = tuple(int(q) for q in subset)
    if not subset or min(subset) < 0 or max(subset) >= samples.num_qoi:
        raise InvalidArgumentError(f"invalid QoI subset {subset}")
    if density.dim != len(subset):
        raise InvalidArgumentError("density dimension does not match the subset size")
    if volume_mode not in VOLUME_MODES:
        raise InvalidArgumentError(f"unknown volume mode {volume_mode!r}")
    n = len(samples)
    vol = box_volume(samples.box)
    if volume_mode == "equal":
        volumes = np.full(n, vol / n)
    else:
        nref = 10 * n if num_reference is None else int(num_reference)
        volumes = voronoi_volumes(samples.points, samples.box, nref, seed, workers=workers)

    assignment = density.cell_index(samples.qoi_values[:, list(subset)])
    p = np.zeros(n)
    lost = 0.0
    empty = []
    for k in range(density.num_cells):
        members = np.flatnonzero(assignment == k)
        pk = float(density.probabilities[k])
        if members.size == 0:
            lost += pk
            empty.append(k)
            continue
        v = volumes[members]
        total = v.sum()
        # every member cell can have zero estimated volume when R is small
        share = v / total if total > 0 else np.full(members.size, 1.0 / members.size)
        p[members] = share * pk
    if len(empty) == density.num_cells:
        raise EmptySupportError(f"no sample falls in any of the {density.num_cells} output cells")
    if empty:
        warnings.warn(f"{len(empty)} output cell(s) captured no samples; "
                      f"lost probability mass {lost:.6g}", CoverageWarning, stacklevel=2)
    return InverseSolution(p, volumes, assignment, subset, density, vol, lost)


def support_measure(solution):
    """Relative volume of the support: ``sum(V_i for p_i > 0) / mu(Lambda)``."""
    return float(solution.cell_volumes[solution.support].sum() / solution.domain_volume)


@dataclass(frozen=True)
class PredictionSummary:
    lower: float
    upper: float
    edges: np.ndarray
    weights: np.ndarray

    @property
    def width(self):
        return self.upper - self.lower


def push_forward(solution, values, bins=20, range_=None):
    """Prediction interval over the support plus a probability-weighted histogram."""
    values = np.asarray(values, dtype=float).ravel()
    if values.size != solution.cell_probabilities.size:
        raise InvalidArgumentError("need one prediction value per sample")
    support = solution.support
    if not np.any(support):
        raise EmptySupportError("inverse solution has empty support")
    sup = values[support]
    lo, hi = float(sup.min()), float(sup.max())
    if range_ is None:
        range_ = (lo, hi) if hi > lo else (lo - 0.5, hi + 0.5)
    weights, edges = np.histogram(sup, bins=bins, range=range_,
                                  weights=solution.cell_probabilities[support])
    return PredictionSummary(lo, hi, edges, weights)


def marginal_2d(solution, samples, dims=(0, 1), grid=(20, 20)):
    """Probability mass per cell of a ``grid`` over the ``dims`` projection of the box.

    Returns ``(mass, edges_i, edges_j)`` with ``mass`` indexed ``[bin_i, bin_j]``.
    """
    i, j = (int(x) for x in dims)
    nd = samples.box.dim
    if not (0 <= i < nd and 0 <= j < nd) or i == j:
        raise InvalidArgumentError(f"invalid marginal axes {dims}")
    g1, g2 = (int(g) for g in grid)
    if g1 < 1 or g2 < 1:
        raise InvalidArgumentError("grid counts must be >= 1")
    lo, hi = samples.box.lower, samples.box.upper
    mass, e1, e2 = np.histogram2d(samples.points[:, i], samples.points[:, j], bins=(g1, g2),
                                  range=((lo[i], hi[i]), (lo[j], hi[j])),
                                  weights=solution.cell_probabilities)
    return mass, e1, e2
