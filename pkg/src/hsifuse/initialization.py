"""Starting points: regression-based HR-HSI estimate and Gaussian operator seeds."""

from dataclasses import dataclass

import numpy as np

from .degradation import SpatialOperator, SpectralResponse, gaussian_kernel
from .tensor import as_cube, mode_n_product, unfold

__all__ = [
    "InitConfig",
    "keys_kernel",
    "bicubic_downsample",
    "build_m_plus",
    "regression_weights",
    "init_hrhsi",
    "init_kernels",
]


@dataclass
class InitConfig:
    gamma: float = 0.1
    sigma_s: float = 1.0
    sigma_lambda: float = 100.0

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not (self.sigma_s > 0 and self.sigma_lambda > 0):
            raise ValueError("seed widths must be positive")


def keys_kernel(t, a=-0.5):
    """Keys cubic convolution kernel."""
    t = np.abs(np.asarray(t, dtype=np.float64))
    out = np.zeros_like(t)
    near = t <= 1
    far = (t > 1) & (t < 2)
    out[near] = (a + 2) * t[near] ** 3 - (a + 3) * t[near] ** 2 + 1
    out[far] = a * t[far] ** 3 - 5 * a * t[far] ** 2 + 8 * a * t[far] - 4 * a
    return out


def _bicubic_weights(n, factor, offset):
    centers = np.arange(offset, n, factor)
    half = 2 * factor
    taps = np.arange(-half + 1, half)
    w = keys_kernel(taps / factor)
    w /= w.sum()
    idx = np.clip(centers[:, None] + taps[None, :], 0, n - 1)
    mat = np.zeros((centers.size, n))
    np.add.at(mat, (np.repeat(np.arange(centers.size), taps.size), idx.ravel()), np.tile(w, centers.size))
    return mat


def bicubic_downsample(x, factor, offset=None):
    """Antialiased bicubic decimation along the first two axes.

    Output sample ``p`` is centered on input index ``offset + factor * p``
    (the same phase as :class:`SpatialOperator`) and uses the Keys kernel
    stretched by ``factor`` with edge replication. Weights are renormalized
    so constants are preserved exactly.
    """
    x = np.asarray(x, dtype=np.float64)
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    if offset is None:
        offset = factor // 2
    out = x
    for axis in (0, 1):
        mat = _bicubic_weights(x.shape[axis], factor, offset)
        out = np.moveaxis(np.tensordot(mat, out, axes=([1], [axis])), 0, axis)
    return out


def _append_ones(x):
    return np.concatenate([x, np.ones(x.shape[:2] + (1,))], axis=2)


def build_m_plus(m, factor, offset=None):
    m = as_cube(m, "msi")
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    if m.shape[0] % factor or m.shape[1] % factor:
        raise ValueError(
            f"MSI spatial dims {m.shape[:2]} are not divisible by factor {factor}"
        )
    m_plus = _append_ones(m)
    m_d_plus = _append_ones(bicubic_downsample(m, factor, offset))
    return m_plus, m_d_plus


def regression_weights(h, m_d_plus, gamma):
    """Ridge solution ``W = (M M^T + gamma I)^-1 M H^T`` on mode-3 unfoldings.

    Returns ``W`` with shape ``(K' + 1, K)``.
    """
    m3 = unfold(m_d_plus, 3)
    h3 = unfold(h, 3)
    gram = m3 @ m3.T
    if gamma == 0 and np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise np.linalg.LinAlgError(
            "MSI regression system is singular with gamma = 0; use gamma > 0"
        )
    return np.linalg.solve(gram + gamma * np.eye(gram.shape[0]), m3 @ h3.T)


def init_hrhsi(h, m, factor, cfg=None, offset=None):
    """Regression-based HR-HSI initializer with ``K`` bands at MSI resolution."""
    cfg = cfg or InitConfig()
    h = as_cube(h, "hsi")
    m = as_cube(m, "msi")
    m_plus, m_d_plus = build_m_plus(m, factor, offset)
    if m_d_plus.shape[:2] != h.shape[:2]:
        raise ValueError(
            f"downsampled MSI is {m_d_plus.shape[:2]} but HSI is {h.shape[:2]}"
        )
    w = regression_weights(h, m_d_plus, cfg.gamma)
    return mode_n_product(m_plus, w.T, 3)


def _largest_odd(k, n):
    k = min(k, n)
    return k if k % 2 else k - 1


def init_kernels(n1, n2, factor, windows, cfg=None, offset=None, n_bands=None):
    """Gaussian seeds for both blur kernels and the spectral weights.

    ``windows`` are 0-based inclusive ``(lo, hi)`` band ranges or a
    :class:`SpectralResponse`. Without ``n_bands`` the HSI band count is
    taken as ``max(hi) + 1``.
    """
    cfg = cfg or InitConfig()
    taps = 2 * factor + 1
    op1 = SpatialOperator(n1, factor, gaussian_kernel(n1, cfg.sigma_s, _largest_odd(taps, n1)), offset)
    op2 = SpatialOperator(n2, factor, gaussian_kernel(n2, cfg.sigma_s, _largest_odd(taps, n2)), offset)
    if isinstance(windows, SpectralResponse):
        n_bands, wins = windows.n_bands, windows.windows
    else:
        wins = [tuple(w) for w in windows]
        if n_bands is None:
            n_bands = max(hi for _, hi in wins) + 1
    weights = []
    for lo, hi in wins:
        t = np.arange(hi - lo + 1) - (hi - lo) / 2.0
        w = np.exp(-(t**2) / (2.0 * cfg.sigma_lambda**2))
        weights.append(w / w.sum())
    return op1, op2, SpectralResponse(n_bands, wins, weights)
