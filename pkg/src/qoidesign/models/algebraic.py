"""Linear and polynomial test maps from R^n to R^d."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..domain import make_rng
from ..errors import InvalidArgumentError

#: Three-QoI linear map whose rows are pairwise linearly independent.
PAIRWISE_GD_MATRIX = np.array([[0.5, 0.5], [2.5, 0.5], [-0.2, 0.3]])
#: Well-conditioned 2-D map (the identity).
IDENTITY_MAP = np.eye(2)
#: Skewed 2-D map with nearly parallel rows.
SKEWED_MAP = np.array([[1.0, 1.0], [0.74, 1.26]])

POLYNOMIAL_BASIS = ("l1^5", "l2^3", "l1^3*l2", "l1", "l2", "1")


def _as_points(lam, dim):
    lam = np.asarray(lam, dtype=float)
    single = lam.ndim == 1
    pts = np.atleast_2d(lam)
    if pts.shape[-1] != dim:
        raise InvalidArgumentError(f"expected parameter dimension {dim}, got {pts.shape[-1]}")
    return pts, single


@dataclass(frozen=True)
class LinearMapModel:
    """``Q(lambda) = matrix @ lambda``; rows are the QoI gradients."""

    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if matrix.ndim != 2:
            raise InvalidArgumentError("matrix must be 2-D")
        object.__setattr__(self, "matrix", matrix)

    @property
    def num_qoi(self):
        return self.matrix.shape[0]

    @property
    def param_dim(self):
        return self.matrix.shape[1]

    def __call__(self, lam):
        return eval_linear(self, lam)

    def jacobian(self, lam=None):
        return self.matrix.copy()

    def pairwise_gd(self, tol=1e-12):
        """True if every pair of rows is linearly independent (all 2x2 minors for n = 2)."""
        rows = self.matrix
        for a in range(rows.shape[0]):
            for b in range(a + 1, rows.shape[0]):
                s = np.linalg.svd(rows[[a, b]], compute_uv=False)
                if s[-1] <= tol * s[0]:
                    return False
        return True


def eval_linear(model, lam):
    pts, single = _as_points(lam, model.param_dim)
    out = pts @ model.matrix.T
    return out[0] if single else out


@dataclass(frozen=True)
class PolynomialMapModel:
    """Each QoI is ``r0 l1^5 + r1 l2^3 + r2 l1^3 l2 + r3 l1 + r4 l2 + r5``."""

    coefficients: np.ndarray

    def __post_init__(self):
        coef = np.atleast_2d(np.asarray(self.coefficients, dtype=float))
        if coef.shape[1] != 6:
            raise InvalidArgumentError("coefficients must have 6 columns")
        object.__setattr__(self, "coefficients", coef)

    @classmethod
    def random(cls, num_qoi=10, seed=0):
        """Coefficients drawn uniformly from [-1, 1]."""
        rng = make_rng(seed)
        return cls(rng.uniform(-1.0, 1.0, size=(num_qoi, 6)))

    @property
    def num_qoi(self):
        return self.coefficients.shape[0]

    param_dim = 2

    def __call__(self, lam):
        return eval_polynomial(self, lam)

    def jacobian(self, lam):
        return analytic_polynomial_jacobian(self, lam)


def _basis(pts):
    l1, l2 = pts[:, 0], pts[:, 1]
    return np.stack([l1 ** 5, l2 ** 3, l1 ** 3 * l2, l1, l2, np.ones_like(l1)], axis=1)


def eval_polynomial(model, lam):
    pts, single = _as_points(lam, 2)
    out = _basis(pts) @ model.coefficients.T
    return out[0] if single else out


def analytic_polynomial_jacobian(model, lam):
    """Exact ``d x 2`` Jacobian at one point (or ``N x d x 2`` for a batch)."""
    pts, single = _as_points(lam, 2)
    r = model.coefficients
    l1, l2 = pts[:, 0:1], pts[:, 1:2]
    d1 = 5 * r[:, 0] * l1 ** 4 + 3 * r[:, 2] * l1 ** 2 * l2 + r[:, 3]
    d2 = 3 * r[:, 1] * l2 ** 2 + r[:, 2] * l1 ** 3 + r[:, 4]
    jac = np.stack([d1, d2], axis=2)
    return jac[0] if single else jac
