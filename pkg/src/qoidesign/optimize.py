"""Exhaustive search over m-subsets of candidate QoI.

Every candidate subset ``z`` is placed in the (skewness, measure) plane and
ranked by its bounded distance to the ideal point ``(1, 0)``::

    d(z) = omega * dS + (1 - omega) * dM,   dS = (S - 1) / S,   dM = M / (1 + M)

``distance_table_convention`` reports the unweighted ``dS + dM``, which is
twice the ``omega = 0.5`` value and gives the same ranking.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from .errors import InvalidArgumentError, TooManyCandidatesError
from .metrics import MAX_SKIP_FRACTION, RANK_TOL, DesignScore, site_metrics

log = logging.getLogger(__name__)

OBJECTIVES = ("min-measure", "min-skewness", "min-distance", "max-distance")
MAX_CANDIDATES = 10 ** 6
_CHUNK_MATRICES = 200_000


@dataclass(frozen=True)
class OptimizationProblem:
    field: object
    m: int
    widths: np.ndarray
    omega: float = 0.5
    objective: str = "min-distance"
    max_candidates: int = MAX_CANDIDATES
    max_skip: float = MAX_SKIP_FRACTION
    rank_tol: float = RANK_TOL

    def __post_init__(self):
        d = self.field.num_qoi
        widths = np.asarray(self.widths, dtype=float)
        if widths.ndim == 0:
            widths = np.full(d, float(widths))
        object.__setattr__(self, "widths", widths)
        if not 1 <= self.m <= d:
            raise InvalidArgumentError(f"subset size m={self.m} must lie in 1..{d}")
        if widths.shape != (d,) or np.any(widths <= 0):
            raise InvalidArgumentError(f"need {d} positive per-QoI widths")
        if not 0.0 <= self.omega <= 1.0:
            raise InvalidArgumentError("omega must lie in [0, 1]")
        if self.objective not in OBJECTIVES:
            raise InvalidArgumentError(f"unknown objective {self.objective!r}")

    @property
    def num_candidates(self):
        return comb(self.field.num_qoi, self.m)


def _check_point(avg_skewness, avg_measure, omega):
    if not 0.0 <= omega <= 1.0:
        raise InvalidArgumentError("omega must lie in [0, 1]")
    if np.any(np.asarray(avg_skewness) < 1.0) or np.any(np.asarray(avg_measure) <= 0.0):
        raise InvalidArgumentError("need avg_skewness >= 1 and avg_measure > 0")


def bounded_distance_to_ideal(avg_skewness, avg_measure, omega):
    """``omega * dS(S, 1) + (1 - omega) * dM(M, 0)`` with ``d(x, y) = |x-y| / (1 + |x-y|)``."""
    _check_point(avg_skewness, avg_measure, omega)
    s = np.asarray(avg_skewness, dtype=float) - 1.0
    m = np.asarray(avg_measure, dtype=float)
    out = omega * s / (1.0 + s) + (1.0 - omega) * m / (1.0 + m)
    return float(out) if np.ndim(out) == 0 else out


def table_distance(avg_skewness, avg_measure):
    """Unweighted sum ``dS + dM`` (twice the ``omega = 0.5`` distance)."""
    return 2.0 * bounded_distance_to_ideal(avg_skewness, avg_measure, 0.5)


def _score_chunk(jac, subsets, widths, rank_tol):
    # jac: (sites, d, n); subsets: (C, m)
    rows = jac[:, subsets, :]                       # (sites, C, m, n)
    mu_B = np.prod(widths[subsets], axis=1)         # (C,)
    measure, skew, valid = site_metrics(rows, 1.0, rank_tol)
    measure = measure * mu_B[None, :]
    nvalid = valid.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        avg_m = np.where(valid, measure, 0.0).sum(axis=0) / nvalid
        avg_s = np.where(valid, skew, 0.0).sum(axis=0) / nvalid
    return avg_m, avg_s, 1.0 - nvalid / jac.shape[0]


def enumerate_and_score(problem, return_rejected=False):
    """Score every m-subset; sorted by distance, then lexicographically by subset.

    Subsets whose rank-deficient sites exceed ``problem.max_skip`` are not
    ranked; they are returned separately when ``return_rejected`` is set.
    """
    total = problem.num_candidates
    if total > problem.max_candidates:
        raise TooManyCandidatesError(
            f"{total} candidate subsets exceed the cap of {problem.max_candidates}; "
            "reduce m or the number of candidate QoI")
    if len(problem.field) == 0:
        raise InvalidArgumentError("Jacobian field is empty")
    jac = problem.field.jacobians
    subsets = np.array(list(combinations(range(problem.field.num_qoi), problem.m)), dtype=int)
    per_chunk = max(1, _CHUNK_MATRICES // max(1, jac.shape[0]))
    avg_m, avg_s, skipped = (np.empty(total) for _ in range(3))
    for start in range(0, total, per_chunk):
        sl = slice(start, start + per_chunk)
        avg_m[sl], avg_s[sl], skipped[sl] = _score_chunk(jac, subsets[sl], problem.widths,
                                                         problem.rank_tol)
    ok = (skipped <= problem.max_skip) & np.isfinite(avg_m) & np.isfinite(avg_s)
    # rounding can leave an orthogonal pair a hair below 1
    avg_s = np.where(ok, np.maximum(avg_s, 1.0), avg_s)
    scores, rejected = [], []
    for c in range(total):
        subset = tuple(int(q) for q in subsets[c])
        if not ok[c]:
            rejected.append((subset, float(skipped[c])))
            continue
        scores.append(DesignScore(
            subset=subset,
            avg_measure=float(avg_m[c]),
            avg_skewness=float(avg_s[c]),
            distance=bounded_distance_to_ideal(avg_s[c], avg_m[c], problem.omega),
            distance_table_convention=table_distance(avg_s[c], avg_m[c]),
            skipped_fraction=float(skipped[c]),
        ))
    if rejected:
        log.warning("%d of %d candidate subsets rejected as not geometrically distinct",
                    len(rejected), total)
    scores.sort(key=lambda s: (s.distance, s.subset))
    return (scores, rejected) if return_rejected else scores


_KEYS = {
    "min-measure": lambda s: (s.avg_measure, s.subset),
    "min-skewness": lambda s: (s.avg_skewness, s.subset),
    "min-distance": lambda s: (s.distance, s.subset),
}


def select(scores, objective):
    """Winning score for ``objective``; ties go to the lexicographically smallest subset."""
    if not scores:
        raise InvalidArgumentError("no scores to select from")
    if objective == "max-distance":
        return min(scores, key=lambda s: (-s.distance, s.subset))
    if objective not in _KEYS:
        raise InvalidArgumentError(f"unknown objective {objective!r}")
    return min(scores, key=_KEYS[objective])


def _dominates(a, b):
    return (a.avg_skewness <= b.avg_skewness and a.avg_measure <= b.avg_measure
            and (a.avg_skewness < b.avg_skewness or a.avg_measure < b.avg_measure))


def pareto_front(scores):
    """Scores not dominated in the (skewness, measure) plane, by ascending skewness."""
    ordered = sorted(scores, key=lambda s: (s.avg_skewness, s.avg_measure, s.subset))
    front = []
    best = None
    for s in ordered:
        if best is None or s.avg_measure < best.avg_measure:
            front.append(s)
            best = s
        elif s.avg_measure == best.avg_measure and s.avg_skewness == best.avg_skewness:
            front.append(s)
    return front


def omega_support(scores, front, resolution=0.01):
    """For each front member, whether it minimises the distance for some scanned omega."""
    s = np.array([x.avg_skewness for x in scores])
    m = np.array([x.avg_measure for x in scores])
    winners = set()
    for omega in np.linspace(0.0, 1.0, int(round(1 / resolution)) + 1):
        dist = bounded_distance_to_ideal(s, m, omega)
        best = np.flatnonzero(dist == dist.min())
        winners.update(scores[i].subset for i in best)
    return [f.subset in winners for f in front]
