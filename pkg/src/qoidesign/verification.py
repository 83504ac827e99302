"""Convergence of the Voronoi approximation of contour events.

A contour event ``Q^{-1}(B)`` is approximated by the union of the Voronoi cells
whose sites map into ``B``. The error is the volume of the symmetric difference
with the exact event, estimated by classifying uniform reference points.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.spatial import cKDTree

from .domain import box_volume, make_rng, nearest_indices
from .errors import InvalidArgumentError

DEFAULT_COUNTS = (50, 200, 800, 3200)
DEFAULT_REFERENCE = 10 ** 6


def symmetric_difference_measure(approx_member, exact_member, box, num_reference, seed):
    """Monte Carlo volume of the set where two membership predicates disagree.

    Predicates take an ``(R, n)`` array of points and return ``R`` booleans.
    """
    if int(num_reference) < 1:
        raise InvalidArgumentError("num_reference must be >= 1")
    rng = make_rng(seed)
    ref = box.lower + rng.random((int(num_reference), box.dim)) * box.widths
    disagree = np.asarray(approx_member(ref), bool) != np.asarray(exact_member(ref), bool)
    return float(disagree.mean() * box_volume(box))


@dataclass(frozen=True)
class ContourEvent:
    """Output rectangle ``center +/- widths/2`` of a named forward map."""

    name: str
    forward: object
    center: np.ndarray
    widths: np.ndarray

    def contains(self, outputs):
        half = 0.5 * np.asarray(self.widths, dtype=float)
        return np.all(np.abs(np.atleast_2d(outputs) - self.center) <= half, axis=1)

    def exact_member(self, points):
        return self.contains(self.forward(points))

    @classmethod
    def centred(cls, name, forward, box, width):
        """Square of side ``width`` centred at the image of the box centre."""
        center = np.atleast_1d(forward(box.center[None, :])[0])
        return cls(name, forward, center, np.full(center.size, float(width)))


@dataclass(frozen=True)
class ConvergenceReport:
    names: tuple
    sample_counts: tuple
    repetitions: int
    errors: np.ndarray          # (maps, counts, repetitions)

    @property
    def mean_errors(self):
        return {n: self.errors[i].mean(axis=1) for i, n in enumerate(self.names)}

    @property
    def stderr(self):
        if self.repetitions < 2:
            return {n: np.zeros(len(self.sample_counts)) for n in self.names}
        return {n: self.errors[i].std(axis=1, ddof=1) / np.sqrt(self.repetitions)
                for i, n in enumerate(self.names)}

    @property
    def fitted_slope(self):
        logn = np.log(np.asarray(self.sample_counts, dtype=float))
        out = {}
        for n, mean in self.mean_errors.items():
            out[n] = float(np.polyfit(logn, np.log(mean), 1)[0]) if len(logn) > 1 else float("nan")
        return out


def _repetition(events, box, sample_counts, num_reference, seed, rep, workers):
    rng = make_rng(seed, rep)
    ref = box.lower + rng.random((num_reference, box.dim)) * box.widths
    exact = [ev.exact_member(ref) for ev in events]
    out = np.empty((len(events), len(sample_counts)))
    for j, n in enumerate(sample_counts):
        sites = box.lower + rng.random((n, box.dim)) * box.widths
        owner = nearest_indices(ref, sites, workers=workers, tree=cKDTree(sites))
        for i, ev in enumerate(events):
            site_in = ev.contains(ev.forward(sites))
            out[i, j] = np.mean(site_in[owner] != exact[i])
    return out * box_volume(box)


def convergence_study(events, box, sample_counts=DEFAULT_COUNTS, repetitions=100,
                      num_reference=DEFAULT_REFERENCE, seed=0, workers=1):
    """Symmetric-difference error of the Voronoi approximation for each event and ``N``.

    Repetition ``r`` draws its reference points and then its site sets (one per
    ``N``, shared by all events) from stream ``(seed, r)``.
    """
    if repetitions < 1:
        raise InvalidArgumentError("repetitions must be >= 1")
    counts = tuple(int(n) for n in sample_counts)
    if not counts or min(counts) < 1:
        raise InvalidArgumentError("sample counts must be >= 1")
    if int(num_reference) < 1:
        raise InvalidArgumentError("num_reference must be >= 1")
    events = list(events)
    errors = np.empty((len(events), len(counts), repetitions))
    for r in range(repetitions):
        errors[:, :, r] = _repetition(events, box, counts, int(num_reference), seed, r, workers)
    return ConvergenceReport(tuple(ev.name for ev in events), counts, repetitions, errors)


def calibrate_box_width(name, forward, box, target_error, num_samples=3200, repetitions=20,
                        num_reference=200_000, seed=0, bracket=(0.02, 0.6), xtol=1e-4):
    """Side length of the centred output square whose mean error at ``num_samples`` hits ``target_error``.

    All evaluations reuse the same random streams, so the error is a
    deterministic (and nearly monotone) function of the width.
    """
    def gap(width):
        ev = ContourEvent.centred(name, forward, box, width)
        rep = convergence_study([ev], box, (num_samples,), repetitions, num_reference, seed)
        return rep.mean_errors[name][0] - target_error

    return float(brentq(gap, *bracket, xtol=xtol))
