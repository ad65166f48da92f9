"""Forward observation model: circulant blur, decimation and spectral mixing.

The low-resolution hyperspectral image is ``H = S x1 P1 x2 P2`` with
``P = D B`` (periodic blur by a kernel ``b`` followed by uniform
subsampling); the multispectral image is ``M = S x3 P3`` where row ``i`` of
``P3`` spreads a simplex weight vector over a contiguous band window.

Kernels are stored at full length ``n`` with the kernel center at index 0,
so applying ``B`` is a centered circular convolution.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .tensor import as_cube, mode_n_product

__all__ = [
    "SpatialOperator",
    "SpectralResponse",
    "circulant_matrix",
    "dft_matrix",
    "circulant_apply",
    "spatial_degrade",
    "spatial_adjoint",
    "spectral_degrade",
    "gaussian_kernel",
    "add_noise",
    "simulate_pair",
    "tucker_truth",
    "delta_kernel",
]

_SIMPLEX_TOL = 1e-10


def _check_simplex(w, what):
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ValueError(f"{what} must be a nonempty vector")
    if np.any(w < -_SIMPLEX_TOL) or abs(w.sum() - 1.0) > _SIMPLEX_TOL:
        raise ValueError(f"{what} is not in the unit simplex (sum={w.sum():.12g})")
    return w


def delta_kernel(n):
    b = np.zeros(n)
    b[0] = 1.0
    return b


def circulant_matrix(b):
    """Dense circulant with first column ``b``: ``B[i, j] = b[(i - j) mod n]``."""
    b = np.asarray(b)
    n = b.size
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return b[idx]


def dft_matrix(n):
    """Unitary DFT matrix ``F[l, k] = exp(-2j*pi*l*k/n) / sqrt(n)``."""
    return np.fft.fft(np.eye(n), axis=0, norm="ortho")


def circulant_apply(b, m, adjoint=False, axis=0):
    """Apply the circulant ``B`` built from ``b`` (or ``B^T``) along ``axis``.

    ``B`` is diagonalized by the DFT; its eigenvalues are ``fft(b)``, i.e.
    ``sqrt(n) * F b`` with ``F`` the unitary DFT. The adjoint uses the
    conjugate spectrum.
    """
    b = np.asarray(b, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    if b.ndim != 1 or m.shape[axis] != b.size:
        raise ValueError(f"kernel length {b.size} does not match axis length {m.shape[axis]}")
    eig = np.fft.fft(b)
    if adjoint:
        eig = np.conj(eig)
    shape = [1] * m.ndim
    shape[axis] = b.size
    out = np.fft.ifft(np.fft.fft(m, axis=axis) * eig.reshape(shape), axis=axis)
    return out.real


@dataclass(frozen=True)
class SpatialOperator:
    """Blur-then-subsample operator ``P = D B`` along one spatial axis."""

    n: int
    factor: int
    b: np.ndarray
    offset: int = None

    def __post_init__(self):
        if self.factor < 1:
            raise ValueError(f"downsampling factor must be >= 1, got {self.factor}")
        if self.offset is None:
            object.__setattr__(self, "offset", self.factor // 2)
        if not 0 <= self.offset < min(self.factor, self.n):
            raise ValueError(f"offset {self.offset} outside [0, {self.factor})")
        b = _check_simplex(self.b, "blur kernel")
        if b.size != self.n:
            raise ValueError(f"kernel length {b.size} != signal length {self.n}")
        object.__setattr__(self, "b", b)

    @property
    def kept(self):
        return np.arange(self.offset, self.n, self.factor)

    @property
    def m(self):
        return self.kept.size

    def with_kernel(self, b):
        return replace(self, b=np.asarray(b, dtype=np.float64))

    def apply(self, x, axis=0):
        blurred = circulant_apply(self.b, x, axis=axis)
        return np.take(blurred, self.kept, axis=axis)

    def adjoint(self, y, axis=0):
        y = np.asarray(y, dtype=np.float64)
        if y.shape[axis] != self.m:
            raise ValueError(f"expected length {self.m} along axis {axis}, got {y.shape[axis]}")
        shape = list(y.shape)
        shape[axis] = self.n
        up = np.zeros(shape)
        index = [slice(None)] * y.ndim
        index[axis] = self.kept
        up[tuple(index)] = y
        return circulant_apply(self.b, up, adjoint=True, axis=axis)

    def matrix(self):
        """Materialized ``D F Diag(sqrt(n) F b) F^*`` as a real ``m x n`` array."""
        return circulant_matrix(self.b)[self.kept]


@dataclass(frozen=True)
class SpectralResponse:
    """Per-MSI-band windows (0-based, inclusive ``(lo, hi)``) and simplex weights."""

    n_bands: int
    windows: tuple
    weights: tuple = field(default=None)

    def __post_init__(self):
        wins = tuple((int(lo), int(hi)) for lo, hi in self.windows)
        if not wins:
            raise ValueError("at least one spectral window is required")
        for lo, hi in wins:
            if not 0 <= lo <= hi < self.n_bands:
                raise ValueError(f"window ({lo}, {hi}) outside bands [0, {self.n_bands - 1}]")
        object.__setattr__(self, "windows", wins)
        if self.weights is None:
            w = tuple(np.full(hi - lo + 1, 1.0 / (hi - lo + 1)) for lo, hi in wins)
        else:
            if len(self.weights) != len(wins):
                raise ValueError("need one weight vector per window")
            w = tuple(_check_simplex(v, f"weights of window {i}") for i, v in enumerate(self.weights))
            for (lo, hi), v in zip(wins, w):
                if v.size != hi - lo + 1:
                    raise ValueError(f"window ({lo}, {hi}) needs {hi - lo + 1} weights, got {v.size}")
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_one_based(cls, n_bands, windows, weights=None):
        return cls(n_bands, [(lo - 1, hi - 1) for lo, hi in windows], weights)

    def one_based(self):
        return [(lo + 1, hi + 1) for lo, hi in self.windows]

    @property
    def n_out(self):
        return len(self.windows)

    def with_weights(self, weights):
        return replace(self, weights=tuple(np.asarray(w, dtype=np.float64) for w in weights))

    def matrix(self):
        p3 = np.zeros((self.n_out, self.n_bands))
        for i, ((lo, hi), w) in enumerate(zip(self.windows, self.weights)):
            p3[i, lo : hi + 1] = w
        return p3

    def apply(self, s):
        s = np.asarray(s, dtype=np.float64)
        if s.shape[2] != self.n_bands:
            raise ValueError(f"cube has {s.shape[2]} bands, response expects {self.n_bands}")
        out = np.empty(s.shape[:2] + (self.n_out,))
        for i, ((lo, hi), w) in enumerate(zip(self.windows, self.weights)):
            out[:, :, i] = s[:, :, lo : hi + 1] @ w
        return out

    def adjoint(self, r):
        r = np.asarray(r, dtype=np.float64)
        return mode_n_product(r, self.matrix().T, 3)


def spatial_degrade(s, op1, op2):
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 3 or op1.n != s.shape[0] or op2.n != s.shape[1]:
        raise ValueError(
            f"operators sized ({op1.n}, {op2.n}) do not match cube shape {s.shape}"
        )
    return op2.apply(op1.apply(s, axis=0), axis=1)


def spatial_adjoint(r, op1, op2):
    return op2.adjoint(op1.adjoint(r, axis=0), axis=1)


def spectral_degrade(s, sr):
    return sr.apply(s)


def gaussian_kernel(n, sigma, support):
    """Centered, unit-sum Gaussian kernel of ``support`` taps at full length ``n``.

    Tap ``t`` (``-h..h``, ``h = support // 2``) is stored at index ``t mod n``.
    """
    if support < 1 or support % 2 == 0:
        raise ValueError(f"support must be a positive odd tap count, got {support}")
    if support > n:
        raise ValueError(f"support {support} exceeds length {n}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    h = support // 2
    t = np.arange(-h, h + 1)
    taps = np.exp(-(t.astype(np.float64) ** 2) / (2.0 * sigma**2))
    taps /= taps.sum()
    b = np.zeros(n)
    b[t % n] = taps
    return b


def add_noise(x, snr_db, seed):
    """Add white Gaussian noise at the requested SNR (dB).

    ``snr_db`` is a scalar (global SNR over the whole cube) or one value per
    band; ``inf`` leaves the data untouched.
    """
    x = as_cube(x)
    snr = np.asarray(snr_db, dtype=np.float64)
    if snr.ndim == 0 and np.isinf(snr):
        return x.copy()
    rng = np.random.default_rng(seed)
    if snr.ndim == 0:
        energy = float(np.sum(x**2))
        if energy == 0.0:
            raise ValueError("SNR is undefined for an all-zero cube")
        var = energy / (x.size * 10.0 ** (snr / 10.0))
        return x + rng.normal(0.0, np.sqrt(var), size=x.shape)
    if snr.shape != (x.shape[2],):
        raise ValueError(f"need {x.shape[2]} per-band SNR values, got {snr.shape}")
    energy = np.sum(x**2, axis=(0, 1))
    if np.any(energy == 0.0):
        raise ValueError("SNR is undefined for an all-zero band")
    npix = x.shape[0] * x.shape[1]
    finite = np.isfinite(snr)
    var = np.zeros(x.shape[2])
    var[finite] = energy[finite] / (npix * 10.0 ** (snr[finite] / 10.0))
    return x + rng.normal(size=x.shape) * np.sqrt(var)


def simulate_pair(truth, op1, op2, sr, snr_h=np.inf, snr_m=np.inf, seed=0):
    """Degrade ``truth`` into an (LR-HSI, HR-MSI) pair.

    The HSI noise stream uses ``seed`` and the MSI stream ``seed + 1``.
    """
    truth = as_cube(truth, "truth")
    h = add_noise(spatial_degrade(truth, op1, op2), snr_h, seed)
    m = add_noise(spectral_degrade(truth, sr), snr_m, seed + 1)
    return h, m


def tucker_truth(shape, ranks, seed=0):
    """Random nonnegative Tucker cube with the given multilinear ranks.

    Core and factor entries are uniform on [0, 1); the result is min-max
    rescaled to [0, 1].
    """
    rng = np.random.default_rng(seed)
    x = rng.random(ranks)
    for mode, (n, r) in enumerate(zip(shape, ranks), start=1):
        x = mode_n_product(x, rng.random((n, r)), mode)
    x -= x.min()
    return x / x.max()
