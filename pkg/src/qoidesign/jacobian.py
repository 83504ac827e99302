"""Local Jacobian estimates of the full candidate map from scattered samples.

Each estimate uses a target sample and its ``k`` nearest other samples. Two
gradient estimators are available:

``local-least-squares``
    least-squares affine fit over the neighbourhood (default);
``gaussian-rbf``
    Gaussian RBF interpolant with a linear tail, differentiated analytically
    at the target. The shape parameter is the reciprocal of the mean distance
    from the target to its neighbours.

``exact-linear`` and ``analytic-polynomial`` bypass estimation and ask the
model for its exact Jacobian.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import IllConditionedNeighborhoodError, InvalidArgumentError

METHODS = ("local-least-squares", "gaussian-rbf", "exact-linear", "analytic-polynomial")
DEFAULT_K = 20
_RCOND = 1e-8


@dataclass(frozen=True)
class JacobianField:
    """Per-site Jacobians, array of shape ``(sites, d, n)``."""

    jacobians: np.ndarray
    at_samples: np.ndarray
    method: str
    k_neighbors: int | None = None

    def __len__(self):
        return self.jacobians.shape[0]

    @property
    def num_qoi(self):
        return self.jacobians.shape[1]

    @property
    def param_dim(self):
        return self.jacobians.shape[2]

    def rows(self, subset):
        """Jacobians of the sub-map made of QoI ``subset``: shape ``(sites, m, n)``."""
        return self.jacobians[:, list(subset), :]


def fit_affine_gradient(points, values, center):
    """Gradient rows of the least-squares affine fit ``values ~ a + G (x - center)``.

    Returns ``G`` with shape ``(d, n)``. Raises ``IllConditionedNeighborhoodError``
    if the points are affinely dependent.
    """
    points = np.atleast_2d(points)
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    offsets = points - center
    scale = np.max(np.abs(offsets))
    if scale == 0:
        raise IllConditionedNeighborhoodError("all neighbours coincide with the target")
    offsets = offsets / scale
    centred = offsets - offsets.mean(axis=0)
    s = np.linalg.svd(centred, compute_uv=False)
    if s.size < points.shape[1] or s[-1] <= _RCOND * s[0]:
        raise IllConditionedNeighborhoodError("neighbours are affinely dependent")
    design = np.hstack([np.ones((points.shape[0], 1)), offsets])
    coef, *_ = np.linalg.lstsq(design, values, rcond=None)
    return coef[1:].T / scale


def rbf_gradient(points, values, center, epsilon=None):
    """Gradient at ``center`` of a Gaussian RBF interpolant (with linear tail) through the points."""
    points = np.atleast_2d(points)
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    npts, dim = points.shape
    dist = np.linalg.norm(points - center, axis=1)
    if epsilon is None:
        positive = dist[dist > 0]
        if positive.size == 0:
            raise IllConditionedNeighborhoodError("all neighbours coincide with the target")
        epsilon = 1.0 / positive.mean()
    offsets = points - center
    # the linear tail needs an affinely independent point set
    fit_affine_gradient(points, values[:, :1], center)
    r2 = np.sum((offsets[:, None, :] - offsets[None, :, :]) ** 2, axis=2)
    phi = np.exp(-(epsilon ** 2) * r2)
    tail = np.hstack([np.ones((npts, 1)), offsets * epsilon])
    system = np.block([[phi, tail], [tail.T, np.zeros((dim + 1, dim + 1))]])
    rhs = np.vstack([values, np.zeros((dim + 1, values.shape[1]))])
    try:
        coef = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedNeighborhoodError(f"singular RBF system: {exc}") from exc
    c, lin = coef[:npts], coef[npts + 1:]
    # d/dx exp(-eps^2 |x - x_j|^2) at x = center is 2 eps^2 (x_j - center) phi_j
    dphi = 2 * epsilon ** 2 * offsets * np.exp(-(epsilon ** 2) * dist ** 2)[:, None]
    grad = c.T @ dphi + epsilon * lin.T
    return grad


def _neighbours(samples, target, k, tree):
    npts = len(samples)
    if k < samples.box.dim + 1:
        raise InvalidArgumentError(f"k must be >= n + 1 = {samples.box.dim + 1}, got {k}")
    if npts < k + 1:
        raise InvalidArgumentError(f"need at least {k} samples besides the target, have {npts - 1}")
    if tree is None:
        tree = cKDTree(samples.points)
    _, idx = tree.query(samples.points[target], k=k + 1)
    idx = np.asarray(idx)
    # the target is its own nearest point; drop it explicitly in case of duplicates
    others = idx[idx != target][:k]
    return np.concatenate([[target], others])


def estimate_jacobian(samples, target, k=DEFAULT_K, method="local-least-squares", tree=None):
    """Estimated ``d x n`` Jacobian of all candidate QoI at sample ``target``."""
    if samples.qoi_values is None:
        raise InvalidArgumentError("samples have no qoi_values")
    if method not in ("local-least-squares", "gaussian-rbf"):
        raise InvalidArgumentError(f"{method!r} is not a sample-based estimator")
    target = int(target)
    if not 0 <= target < len(samples):
        raise InvalidArgumentError(f"target {target} out of range")
    nbr = _neighbours(samples, target, int(k), tree)
    pts, vals = samples.points[nbr], samples.qoi_values[nbr]
    center = samples.points[target]
    try:
        if method == "local-least-squares":
            return fit_affine_gradient(pts, vals, center)
        return rbf_gradient(pts, vals, center)
    except IllConditionedNeighborhoodError as exc:
        raise IllConditionedNeighborhoodError(f"sample {target}: {exc}", sample_index=target) from exc


def build_jacobian_field(samples, indices, k=DEFAULT_K, method="local-least-squares", model=None):
    """Jacobians at the samples listed in ``indices``.

    ``model`` is required for the exact methods and must provide ``jacobian(lam)``.
    """
    if method not in METHODS:
        raise InvalidArgumentError(f"unknown Jacobian method {method!r}")
    indices = np.asarray(indices, dtype=int).ravel()
    n = samples.box.dim
    if method in ("exact-linear", "analytic-polynomial"):
        if model is None:
            raise InvalidArgumentError(f"method {method!r} needs a model")
        d = model.num_qoi
        jac = np.empty((indices.size, d, n))
        for row, i in enumerate(indices):
            jac[row] = model.jacobian(samples.points[i])
        return JacobianField(jac, indices, method, None)
    if samples.qoi_values is None:
        raise InvalidArgumentError("samples have no qoi_values")
    d = samples.num_qoi
    jac = np.empty((indices.size, d, n))
    tree = cKDTree(samples.points) if indices.size else None
    for row, i in enumerate(indices):
        jac[row] = estimate_jacobian(samples, i, k, method, tree)
    if not np.all(np.isfinite(jac)):
        raise IllConditionedNeighborhoodError("non-finite Jacobian estimate")
    return JacobianField(jac, indices, method, int(k))
