"""Parameter domain, seeded uniform sampling and implicit Voronoi cells.

Random streams come from numpy's PCG64 seeded through ``SeedSequence``.
A stream is identified by ``(seed, *stream_ids)``; e.g. repetition ``r`` of a
study uses ``make_rng(seed, r)``, so results do not depend on execution order
or on the number of workers.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidArgumentError, InvalidDomainError


def make_rng(seed, *stream_ids):
    """Return an independent PCG64 generator for the stream ``(seed, *stream_ids)``."""
    entropy = [int(seed)] + [int(s) for s in stream_ids]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


@dataclass(frozen=True)
class ParameterBox:
    """Axis-aligned parameter domain ``prod_j [lower[j], upper[j]]``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.ndim != 1 or lower.shape != upper.shape:
            raise InvalidDomainError("lower and upper must be vectors of equal length")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise InvalidDomainError("bounds must be finite")
        bad = np.flatnonzero(upper <= lower)
        if bad.size:
            raise InvalidDomainError(f"degenerate dimension(s) {bad.tolist()}: upper <= lower")
        lower.flags.writeable = False
        upper.flags.writeable = False
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def unit(cls, dim=2):
        return cls(np.zeros(dim), np.ones(dim))

    @property
    def dim(self):
        return self.lower.size

    @property
    def widths(self):
        return self.upper - self.lower

    @property
    def center(self):
        return 0.5 * (self.lower + self.upper)

    def volume(self):
        return box_volume(self)

    def contains(self, points):
        points = np.atleast_2d(points)
        return np.all((points >= self.lower) & (points <= self.upper), axis=1)


def box_volume(box):
    """Lebesgue measure of ``box``."""
    widths = np.asarray(box.upper, dtype=float) - np.asarray(box.lower, dtype=float)
    if np.any(widths <= 0):
        raise InvalidDomainError("degenerate dimension: upper <= lower")
    return float(np.prod(widths))


@dataclass(frozen=True)
class SampleSet:
    """Parameter samples plus (optionally) every candidate QoI evaluated at them.

    ``qoi_values`` is ``None`` until a model has been run over ``points``.
    """

    box: ParameterBox
    points: np.ndarray
    seed: int | None = None
    qoi_values: np.ndarray | None = field(default=None)

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if points.shape[1] != self.box.dim:
            raise InvalidArgumentError(
                f"points have dimension {points.shape[1]}, box has {self.box.dim}")
        object.__setattr__(self, "points", points)
        if self.qoi_values is not None:
            values = np.asarray(self.qoi_values, dtype=float)
            if values.ndim == 1:
                values = values[:, None]
            if values.shape[0] != points.shape[0]:
                raise InvalidArgumentError("qoi_values must have one row per sample")
            object.__setattr__(self, "qoi_values", values)

    def __len__(self):
        return self.points.shape[0]

    @property
    def num_qoi(self):
        return 0 if self.qoi_values is None else self.qoi_values.shape[1]

    def with_qoi(self, qoi_values):
        return replace(self, qoi_values=qoi_values)


def sample_uniform(box, num_samples, seed):
    """Draw ``num_samples`` i.i.d. uniform points in ``box``.

    The draw is bit-reproducible for a fixed ``(seed, num_samples)``.
    """
    if int(num_samples) < 1:
        raise InvalidArgumentError("num_samples must be >= 1")
    rng = make_rng(seed)
    unit = rng.random((int(num_samples), box.dim))
    return SampleSet(box=box, points=box.lower + unit * box.widths, seed=int(seed))


def nearest_index(point, sites):
    """Index of the site closest to ``point`` (Euclidean); ties go to the lowest index."""
    sites = np.atleast_2d(np.asarray(sites, dtype=float))
    if sites.shape[0] == 0 or sites.size == 0:
        raise InvalidArgumentError("sites must be nonempty")
    point = np.asarray(point, dtype=float).ravel()
    if point.size != sites.shape[1]:
        raise InvalidArgumentError("point dimension does not match sites")
    dist2 = np.sum((sites - point) ** 2, axis=1)
    return int(np.argmin(dist2))


def nearest_indices(points, sites, workers=1, tree=None):
    """Vectorised :func:`nearest_index` for a batch of query points.

    A kd-tree does the search. When the two closest sites are at exactly equal
    distance the lower index is returned, matching :func:`nearest_index`.
    """
    sites = np.atleast_2d(np.asarray(sites, dtype=float))
    if sites.shape[0] == 0 or sites.size == 0:
        raise InvalidArgumentError("sites must be nonempty")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != sites.shape[1]:
        raise InvalidArgumentError("point dimension does not match sites")
    if tree is None:
        tree = cKDTree(sites)
    if sites.shape[0] == 1:
        return np.zeros(points.shape[0], dtype=np.intp)
    dist, idx = tree.query(points, k=2, workers=workers)
    nearest = idx[:, 0].copy()
    tie = dist[:, 0] == dist[:, 1]
    if np.any(tie):
        nearest[tie] = np.minimum(idx[tie, 0], idx[tie, 1])
    return nearest


def voronoi_volumes(sites, box, num_reference, seed, workers=1):
    """Monte Carlo estimate of the Voronoi cell volumes of ``sites`` inside ``box``."""
    if int(num_reference) < 1:
        raise InvalidArgumentError("num_reference must be >= 1")
    ref = sample_uniform(box, num_reference, seed).points
    owner = nearest_indices(ref, sites, workers=workers)
    counts = np.bincount(owner, minlength=np.atleast_2d(sites).shape[0])
    return counts * (box_volume(box) / int(num_reference))
