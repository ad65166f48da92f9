"""Projection and operator-norm kernels shared by the solver."""

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

__all__ = [
    "LinearMap",
    "NormEstimate",
    "project_simplex",
    "project_nonneg",
    "operator_norm",
    "dense_map",
]


def project_simplex(v):
    """Euclidean projection onto the unit simplex ``{b >= 0, sum(b) = 1}``.

    Sort-based thresholding: find the largest ``rho`` with
    ``u_rho > (sum(u_1..u_rho) - 1) / rho`` for ``u`` sorted descending and
    shift by that threshold.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("simplex projection needs a nonempty 1-D vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("simplex projection input contains NaN or Inf")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def project_nonneg(x):
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


@dataclass(frozen=True)
class LinearMap:
    """Matrix-free linear operator with its adjoint.

    ``forward`` takes arrays of shape ``in_shape`` to ``out_shape`` and
    ``adjoint`` goes the other way.
    """

    forward: Callable[[np.ndarray], np.ndarray]
    adjoint: Callable[[np.ndarray], np.ndarray]
    in_shape: tuple
    out_shape: tuple

    @property
    def in_dim(self):
        return int(np.prod(self.in_shape))

    @property
    def out_dim(self):
        return int(np.prod(self.out_shape))

    @property
    def T(self):
        return LinearMap(self.adjoint, self.forward, self.out_shape, self.in_shape)


def dense_map(a):
    a = np.asarray(a, dtype=np.float64)
    return LinearMap(
        forward=lambda x: a @ x,
        adjoint=lambda y: a.T @ y,
        in_shape=(a.shape[1],),
        out_shape=(a.shape[0],),
    )


class NormEstimate(NamedTuple):
    value: float
    converged: bool
    iterations: int


def operator_norm(a, tol=1e-6, max_iter=100):
    """Largest singular value of ``a`` by power iteration on ``a^T a``.

    Starts from the normalized all-ones vector so results are reproducible.
    Stops once the eigen-residual ``|a^T a v - rho v|`` falls below
    ``tol * rho`` (``rho`` the Rayleigh quotient), which bounds the relative
    error of ``sigma^2`` near the top of the spectrum by ``tol``. Returns the
    best estimate with ``converged=False`` when ``max_iter`` runs out first.
    """
    v = np.full(a.in_shape, 1.0 / np.sqrt(a.in_dim))
    rho = 0.0
    for it in range(1, max_iter + 1):
        w = a.adjoint(a.forward(v))
        rho = float(np.vdot(v, w).real)
        if rho <= 0.0:
            return NormEstimate(0.0, True, it)
        if np.linalg.norm(w - rho * v) <= tol * rho:
            return NormEstimate(float(np.sqrt(rho)), True, it)
        v = w / np.linalg.norm(w)
    return NormEstimate(float(np.sqrt(rho)), False, max_iter)
