"""Unitary band transforms, the transformed t-SVD and the TTNN prox.

A transform ``Phi`` acts on every mode-3 fiber: ``x_hat[i, j, :] = Phi @ x[i, j, :]``.
The transformed tubal nuclear norm (TTNN) is the sum of the nuclear norms of
the frontal slices of ``x_hat``; its proximal operator soft-thresholds the
singular values of every transformed slice.
"""

from dataclasses import dataclass

import numpy as np
from scipy.fft import dct

from .tensor import unfold

__all__ = [
    "KINDS",
    "Transform",
    "TSvd",
    "build_transform",
    "apply_transform",
    "phi_product",
    "phi_transpose",
    "t_svd",
    "ttnn",
    "prox_ttnn",
    "unitarity_residual",
]

KINDS = ("identity", "data_svd", "dft", "dct")

_UNITARY_TOL = 1e-8


@dataclass(frozen=True)
class Transform:
    kind: str
    phi: np.ndarray

    @property
    def n3(self):
        return self.phi.shape[0]

    @property
    def is_real(self):
        return not np.iscomplexobj(self.phi)


@dataclass(frozen=True)
class TSvd:
    """Factors of ``x = u *Phi d *Phi v^H`` stored in the original band domain."""

    u: np.ndarray
    d: np.ndarray
    v: np.ndarray
    transform: Transform

    def reconstruct(self):
        t = self.transform
        return phi_product(phi_product(self.u, self.d, t), phi_transpose(self.v, t), t)

    def singular_values(self):
        """Transformed-domain singular values, shape ``(n3, min(n1, n2))``."""
        d_hat = apply_transform(self.d, self.transform)
        k = min(d_hat.shape[0], d_hat.shape[1])
        idx = np.arange(k)
        return np.real(d_hat[idx, idx, :]).T


def unitarity_residual(phi):
    phi = np.asarray(phi)
    eye = np.eye(phi.shape[0])
    return max(
        np.linalg.norm(phi @ phi.conj().T - eye),
        np.linalg.norm(phi.conj().T @ phi - eye),
    )


def build_transform(kind, n3=None, source=None):
    """Construct a unitary band transform.

    Parameters
    ----------
    kind : {"identity", "data_svd", "dft", "dct"}
    n3 : int, optional
        Band count. Inferred from ``source`` when omitted.
    source : ndarray, optional
        Cube whose mode-3 unfolding seeds the ``data_svd`` transform. ``Phi``
        is the conjugate transpose of its left singular vectors, so rows of
        ``Phi @ unfold(source, 3)`` come out in nonincreasing energy.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown transform kind {kind!r}; choose from {KINDS}")
    if source is not None:
        source = np.asarray(source, dtype=np.float64)
        if n3 is not None and n3 != source.shape[2]:
            raise ValueError(f"n3={n3} does not match source bands {source.shape[2]}")
        n3 = source.shape[2]
    if kind == "data_svd" and source is None:
        raise ValueError("data_svd transform requires a source cube")
    if n3 is None or n3 < 1:
        raise ValueError("band count n3 must be given and positive")

    if kind == "identity":
        phi = np.eye(n3)
    elif kind == "dft":
        phi = np.fft.fft(np.eye(n3), axis=0, norm="ortho")
    elif kind == "dct":
        phi = dct(np.eye(n3), type=2, norm="ortho", axis=0)
    else:
        u, _, _ = np.linalg.svd(unfold(source, 3), full_matrices=True)
        phi = u.conj().T

    res = unitarity_residual(phi)
    if res > _UNITARY_TOL:
        raise RuntimeError(f"{kind} transform is not unitary (residual {res:.3e})")
    return Transform(kind, phi)


def apply_transform(x, t, inverse=False):
    """Multiply every mode-3 fiber by ``Phi`` (or ``Phi^H`` when ``inverse``)."""
    x = np.asarray(x)
    if x.ndim != 3 or x.shape[2] != t.n3:
        raise ValueError(f"cube with shape {x.shape} does not have {t.n3} bands")
    # fibers are rows of the trailing axis: Phi @ f == f @ Phi.T
    mat = t.phi.conj() if inverse else t.phi.T
    return x @ mat


def _slices(x_hat):
    return np.moveaxis(x_hat, 2, 0)


def _unslices(stack):
    return np.moveaxis(stack, 0, 2)


def _maybe_real(x, like_real):
    if like_real and np.iscomplexobj(x):
        return x.real.copy()
    return x


def phi_product(a, b, t):
    a_hat = _slices(apply_transform(a, t))
    b_hat = _slices(apply_transform(b, t))
    return apply_transform(_unslices(a_hat @ b_hat), t, inverse=True)


def phi_transpose(a, t):
    a_hat = _slices(apply_transform(a, t))
    return apply_transform(_unslices(np.conj(np.swapaxes(a_hat, 1, 2))), t, inverse=True)


def t_svd(x, t):
    x = np.asarray(x, dtype=np.float64)
    x_hat = _slices(apply_transform(x, t))
    try:
        u, s, vh = np.linalg.svd(x_hat, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"t-SVD did not converge: {exc}") from exc
    n3, n1, n2 = x_hat.shape
    k = min(n1, n2)
    d_hat = np.zeros((n3, n1, n2), dtype=s.dtype)
    d_hat[:, np.arange(k), np.arange(k)] = s
    v = np.conj(np.swapaxes(vh, 1, 2))
    inv = lambda z: apply_transform(_unslices(z), t, inverse=True)  # noqa: E731
    return TSvd(u=inv(u), d=inv(d_hat.astype(u.dtype)), v=inv(v), transform=t)


def ttnn(x, t):
    x_hat = _slices(apply_transform(np.asarray(x, dtype=np.float64), t))
    return float(np.sum(np.linalg.svd(x_hat, compute_uv=False)))


def prox_ttnn(y, lam, t):
    """Proximal map of ``lam * TTNN`` evaluated at ``y``."""
    if lam < 0:
        raise ValueError(f"threshold must be nonnegative, got {lam}")
    y = np.asarray(y, dtype=np.float64)
    if lam == 0:
        return y.copy()
    y_hat = _slices(apply_transform(y, t))
    u, s, vh = np.linalg.svd(y_hat, full_matrices=False)
    s = np.maximum(s - lam, 0.0)
    x_hat = (u * s[:, None, :]) @ vh
    x = apply_transform(_unslices(x_hat), t, inverse=True)
    return _maybe_real(x, True)
