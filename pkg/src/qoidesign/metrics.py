"""Support measure and skewness of a QoI map from its local Jacobians.

For an ``m x n`` Jacobian ``J`` (``m <= n``) with singular values ``s``:

* the local support measure is ``mu(B) / prod(s)``, the volume of the local
  inverse image of an output rectangle ``B`` (cross-section when ``m < n``);
* the local skewness is ``max_k |j_k| * prod(s(J without row k)) / prod(s)``,
  i.e. ``max_k |j_k| / |j_k_perp|`` where ``j_k_perp`` is the part of row
  ``k`` orthogonal to the other rows.

``prod(s)`` is the ``m``-volume of the parallelepiped spanned by the rows.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, NonGDSampleError, NoValidSitesError

RANK_TOL = 1e-12
MAX_SKIP_FRACTION = 0.10


@dataclass(frozen=True)
class UncertaintyBox:
    """Side lengths of the output rectangle ``B``, one per QoI."""

    widths: np.ndarray

    def __post_init__(self):
        widths = np.atleast_1d(np.asarray(self.widths, dtype=float))
        if np.any(widths <= 0) or not np.all(np.isfinite(widths)):
            raise InvalidArgumentError("uncertainty widths must be positive and finite")
        object.__setattr__(self, "widths", widths)

    @property
    def dim(self):
        return self.widths.size

    def measure(self):
        return float(np.prod(self.widths))


@dataclass(frozen=True)
class DesignScore:
    subset: tuple
    avg_measure: float
    avg_skewness: float
    distance: float
    distance_table_convention: float = float("nan")
    skipped_fraction: float = 0.0

    @property
    def point(self):
        """Coordinates ``(skewness, measure)`` in the design plane."""
        return self.avg_skewness, self.avg_measure


def parallelepiped_volume(J):
    """``m``-volume spanned by the rows of ``J`` (batched over leading axes)."""
    J = np.asarray(J, dtype=float)
    if J.shape[-2] == 0:
        return np.ones(J.shape[:-2])
    return np.prod(np.linalg.svd(J, compute_uv=False), axis=-1)


def _singular_values(J):
    J = np.asarray(J, dtype=float)
    if J.shape[-2] > J.shape[-1]:
        raise InvalidArgumentError(f"need m <= n, got a {J.shape[-2]}x{J.shape[-1]} Jacobian")
    return np.linalg.svd(J, compute_uv=False)


def _full_rank(sv, rank_tol):
    return sv[..., -1] > rank_tol * sv[..., 0]


def local_measure(J, mu_B, rank_tol=RANK_TOL):
    """``mu_B / prod(singular values of J)``."""
    if mu_B <= 0:
        raise InvalidArgumentError("mu_B must be positive")
    sv = _singular_values(np.atleast_2d(J))
    if not _full_rank(sv, rank_tol):
        raise NonGDSampleError(f"Jacobian is rank deficient (singular values {sv})")
    return float(mu_B / np.prod(sv))


def local_skewness(J, rank_tol=RANK_TOL):
    """Largest ratio ``|j_k| / |j_k_perp|`` over the rows of ``J`` (1 for a single row)."""
    J = np.atleast_2d(np.asarray(J, dtype=float))
    sv = _singular_values(J)
    if not _full_rank(sv, rank_tol):
        raise NonGDSampleError(f"Jacobian is rank deficient (singular values {sv})")
    return float(_skewness_batch(J[None])[0])


def _skewness_batch(J):
    """Skewness of a stack of full-rank Jacobians, shape ``(..., m, n)``."""
    m = J.shape[-2]
    if m == 1:
        return np.ones(J.shape[:-2])
    vol = parallelepiped_volume(J)
    norms = np.linalg.norm(J, axis=-1)
    best = np.zeros(J.shape[:-2])
    for k in range(m):
        keep = [r for r in range(m) if r != k]
        ratio = norms[..., k] * parallelepiped_volume(J[..., keep, :]) / vol
        best = np.maximum(best, ratio)
    return best


def site_metrics(jacobians, mu_B, rank_tol=RANK_TOL):
    """Local measure, skewness and a validity mask for a stack ``(sites, m, n)``.

    Invalid (rank-deficient) sites carry ``nan`` in both metric arrays.
    """
    J = np.asarray(jacobians, dtype=float)
    sv = _singular_values(J)
    valid = _full_rank(sv, rank_tol) & np.all(np.isfinite(sv), axis=-1)
    measure = np.full(J.shape[:-2], np.nan)
    skew = np.full(J.shape[:-2], np.nan)
    if np.any(valid):
        measure[valid] = mu_B / np.prod(sv[valid], axis=-1)
        skew[valid] = _skewness_batch(J[valid])
    return measure, skew, valid


def average_metrics(field, subset, box, rank_tol=RANK_TOL, max_skip=MAX_SKIP_FRACTION,
                    return_skipped=False):
    """Sample means of the local measure and local skewness of sub-map ``subset``.

    Rank-deficient sites are left out of both means. If more than ``max_skip``
    of the sites are left out (or all of them) ``NoValidSitesError`` is raised.
    """
    subset = tuple(int(q) for q in subset)
    if len(subset) == 0 or min(subset) < 0 or max(subset) >= field.num_qoi:
        raise InvalidArgumentError(f"invalid QoI subset {subset}")
    if box.dim != len(subset):
        raise InvalidArgumentError(f"B has {box.dim} widths but the subset has {len(subset)} QoI")
    if len(field) == 0:
        raise NoValidSitesError("Jacobian field is empty")
    measure, skew, valid = site_metrics(field.rows(subset), box.measure(), rank_tol)
    skipped = 1.0 - valid.mean()
    if not np.any(valid):
        raise NoValidSitesError(f"subset {subset}: every site is rank deficient")
    if skipped > max_skip:
        raise NoValidSitesError(
            f"subset {subset}: {skipped:.1%} of sites rank deficient (limit {max_skip:.0%})")
    result = (float(np.mean(measure[valid])), float(np.mean(skew[valid])))
    return result + (float(skipped),) if return_skipped else result
