"""Third-order tensor algebra on dense ``(rows, cols, bands)`` arrays.

Cubes are plain ``numpy.ndarray`` objects of dtype float64 indexed
``x[i, j, k]`` with ``k`` the spectral band. Modes are numbered 1, 2, 3
as in the usual tensor notation; array axes are ``mode - 1``.

Unfolding convention: the columns of ``unfold(x, n)`` are the mode-n
fibers ordered lexicographically with the lower-numbered remaining mode
varying fastest. For a cube of shape (I, J, K) the entry ``x[i, j, k]``
lands at

    mode 1: row i, column j + J*k
    mode 2: row j, column i + I*k
    mode 3: row k, column i + I*j
"""

import numpy as np

__all__ = [
    "as_cube",
    "unfold",
    "fold",
    "mode_n_product",
    "inner",
    "frob_norm",
]


def as_cube(x, name="cube"):
    """Validate and return ``x`` as a finite float64 array with three axes."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"{name} must have 3 axes, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def _check_mode(mode):
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode!r}")
    return mode - 1


def unfold(x, mode):
    """Mode-n matricization, shape ``(x.shape[mode-1], prod(other dims))``."""
    axis = _check_mode(mode)
    x = np.asarray(x)
    if x.ndim != 3:
        raise ValueError(f"expected a 3-axis array, got shape {x.shape}")
    return np.reshape(np.moveaxis(x, axis, 0), (x.shape[axis], -1), order="F")


def fold(m, mode, dims):
    """Inverse of :func:`unfold` for a cube of shape ``dims``."""
    axis = _check_mode(mode)
    m = np.asarray(m)
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3:
        raise ValueError(f"dims must have length 3, got {dims}")
    rest = [d for i, d in enumerate(dims) if i != axis]
    expected = (dims[axis], rest[0] * rest[1])
    if m.ndim != 2 or m.shape != expected:
        raise ValueError(
            f"matrix of shape {m.shape} cannot be folded as mode-{mode} of {dims};"
            f" expected {expected}"
        )
    moved = np.reshape(m, (dims[axis], rest[0], rest[1]), order="F")
    return np.moveaxis(moved, 0, axis)


def mode_n_product(x, a, mode):
    """Multiply every mode-n fiber of ``x`` by the matrix ``a``.

    Equivalent to ``fold(a @ unfold(x, mode), mode, new_dims)`` but computed
    with a tensor contraction, so no unfolding is materialized.
    """
    axis = _check_mode(mode)
    x = np.asarray(x)
    a = np.asarray(a)
    if a.ndim != 2:
        raise ValueError(f"operator must be a matrix, got shape {a.shape}")
    if a.shape[1] != x.shape[axis]:
        raise ValueError(
            f"operator has {a.shape[1]} columns but mode-{mode} size is {x.shape[axis]}"
        )
    out = np.tensordot(a, x, axes=([1], [axis]))
    return np.moveaxis(out, 0, axis)


def inner(x, y):
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    return float(np.vdot(x.ravel(), y.ravel()).real)


def frob_norm(x):
    return float(np.sqrt(inner(x, x)))
