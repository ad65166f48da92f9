"""Full-reference and no-reference quality scores for fused cubes."""

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .initialization import bicubic_downsample
from .tensor import as_cube, unfold

__all__ = [
    "MetricReport",
    "psnr",
    "sam",
    "uiqi",
    "q_index",
    "ergas",
    "no_reference",
    "r_squared",
    "full_reference",
]


def _same_dims(x, ref):
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs reference {ref.shape}")
    if x.ndim == 2:
        x, ref = x[:, :, None], ref[:, :, None]
    if x.ndim != 3:
        raise ValueError(f"expected a 2-D band or 3-D cube, got {x.ndim}-D")
    return x, ref


def default_peak(ref):
    """1 for data in [0, 1], else the 8-bit peak 255."""
    return 1.0 if float(np.max(ref)) <= 1.0 else 255.0


def psnr(x, ref, peak=None):
    """Band-averaged PSNR in dB and the per-band values.

    A band reproduced exactly scores ``inf``, so ``psnr(ref, ref)`` is
    ``inf``. ``peak`` defaults to :func:`default_peak` of the reference, which
    is the same as rescaling [0, 1] data to [0, 255] before scoring.
    """
    x, ref = _same_dims(x, ref)
    if peak is None:
        peak = default_peak(ref)
    if not peak > 0:
        raise ValueError(f"peak must be positive, got {peak}")
    mse = np.mean((x - ref) ** 2, axis=(0, 1))
    with np.errstate(divide="ignore"):
        per_band = np.where(mse > 0, 10.0 * np.log10(peak**2 / np.where(mse > 0, mse, 1.0)), np.inf)
    return float(np.mean(per_band)), per_band


def sam(x, ref, return_skipped=False):
    """Mean spectral angle in radians over all pixels.

    Pixels where either spectrum is zero have no angle; they are skipped and
    their count is returned when ``return_skipped`` is set.
    """
    x, ref = _same_dims(x, ref)
    a = x.reshape(-1, x.shape[2])
    b = ref.reshape(-1, ref.shape[2])
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    ok = (na > 0) & (nb > 0)
    skipped = int(np.sum(~ok))
    if skipped:
        warnings.warn(f"SAM skipped {skipped} pixel(s) with a zero spectrum", stacklevel=2)
    if not np.any(ok):
        value = float("nan")
    else:
        # same angle as arccos of the cosine, but exact for parallel spectra
        ua = a[ok] / na[ok, None]
        ub = b[ok] / nb[ok, None]
        ang = 2.0 * np.arctan2(np.linalg.norm(ua - ub, axis=1), np.linalg.norm(ua + ub, axis=1))
        value = float(np.mean(ang))
    return (value, skipped) if return_skipped else value


def _window_q(a, b):
    ma, mb = a.mean(), b.mean()
    va, vb = a.var(), b.var()
    if va == 0.0 or vb == 0.0:
        return None
    cov = np.mean((a - ma) * (b - mb))
    lum_den = ma**2 + mb**2
    # 0/0 when both patches are zero-mean: the means agree, so the factor is 1
    lum = 2.0 * ma * mb / lum_den if lum_den > 0 else 1.0
    sa, sb = math.sqrt(va), math.sqrt(vb)
    return lum * (2.0 * sa * sb / (va + vb)) * (cov / (sa * sb))


def _starts(n, window, stride):
    return range(0, n - window + 1, stride)


def q_index(a, b, window=32, stride=32, return_degenerate=False):
    """Windowed quality index between two single-band images.

    Windows with zero variance in either image contribute 0 and are counted.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError(f"need two equal-shape 2-D images, got {a.shape} and {b.shape}")
    if window < 1 or stride < 1:
        raise ValueError("window and stride must be >= 1")
    if window > min(a.shape):
        raise ValueError(f"window {window} exceeds image size {a.shape}")
    vals = []
    degenerate = 0
    for i in _starts(a.shape[0], window, stride):
        for j in _starts(a.shape[1], window, stride):
            q = _window_q(a[i : i + window, j : j + window], b[i : i + window, j : j + window])
            if q is None:
                degenerate += 1
                q = 0.0
            vals.append(q)
    value = float(np.mean(vals))
    return (value, degenerate) if return_degenerate else value


def uiqi(x, ref, window=32, stride=32, return_degenerate=False):
    """Band-averaged windowed quality index (1 is perfect, range [-1, 1])."""
    x, ref = _same_dims(x, ref)
    vals = []
    degenerate = 0
    for k in range(x.shape[2]):
        q, d = q_index(x[:, :, k], ref[:, :, k], window, stride, return_degenerate=True)
        vals.append(q)
        degenerate += d
    if degenerate:
        warnings.warn(f"UIQI: {degenerate} constant window(s) scored 0", stacklevel=2)
    value = float(np.mean(vals))
    return (value, degenerate) if return_degenerate else value


def ergas(x, ref, ratio, return_excluded=False):
    """Relative dimensionless global error; bands with zero reference mean are excluded."""
    x, ref = _same_dims(x, ref)
    if not ratio > 0:
        raise ValueError(f"ratio must be positive, got {ratio}")
    rmse = np.sqrt(np.mean((x - ref) ** 2, axis=(0, 1)))
    means = np.mean(ref, axis=(0, 1))
    keep = means != 0
    excluded = [int(k) for k in np.nonzero(~keep)[0]]
    if excluded:
        warnings.warn(f"ERGAS excluded zero-mean band(s) {excluded}", stacklevel=2)
    if not np.any(keep):
        value = float("nan")
    else:
        value = float(ratio * np.sqrt(np.mean((rmse[keep] / means[keep]) ** 2)))
    return (value, excluded) if return_excluded else value


def _clamp_window(window, shape):
    return max(1, min(window, *shape))


def no_reference(fused, h, pan, factor, window=32, stride=32):
    """Spectral distortion, spatial distortion and QNR.

    Band-pair indices on the HSI use a window ``window // factor`` (at least
    1); all windows are clamped to the image size.
    """
    fused = as_cube(fused, "fused")
    h = as_cube(h, "hsi")
    pan = np.asarray(pan, dtype=np.float64)
    if pan.ndim == 3 and pan.shape[2] == 1:
        pan = pan[:, :, 0]
    if fused.shape[2] != h.shape[2]:
        raise ValueError(f"fused has {fused.shape[2]} bands, HSI has {h.shape[2]}")
    if pan.shape != fused.shape[:2]:
        raise ValueError(f"PAN shape {pan.shape} differs from fused spatial dims {fused.shape[:2]}")
    pan_lr = bicubic_downsample(pan[:, :, None], factor)[:, :, 0]
    if pan_lr.shape != h.shape[:2]:
        raise ValueError(
            f"PAN downsampled by {factor} is {pan_lr.shape}, HSI is {h.shape[:2]}"
        )
    w_hr = _clamp_window(window, fused.shape[:2])
    s_hr = stride
    w_lr = _clamp_window(max(1, window // factor), h.shape[:2])
    s_lr = max(1, stride // factor)
    k = fused.shape[2]

    total = 0.0
    for i in range(k):
        for j in range(k):
            if i != j:
                total += abs(
                    q_index(h[:, :, i], h[:, :, j], w_lr, s_lr)
                    - q_index(fused[:, :, i], fused[:, :, j], w_hr, s_hr)
                )
    d_lambda = math.sqrt(total / (k * (k - 1))) if k > 1 else 0.0

    total = 0.0
    for i in range(k):
        total += abs(q_index(fused[:, :, i], pan, w_hr, s_hr) - q_index(h[:, :, i], pan_lr, w_lr, s_lr))
    d_s = math.sqrt(total / k)
    return d_lambda, d_s, (1.0 - d_lambda) * (1.0 - d_s)


def r_squared(fused, m, ridge=1e-8):
    """Mean coefficient of determination of each fused band regressed on the MSI.

    Every fused band is fit by least squares as an affine combination of all
    MSI bands. A rank-deficient design falls back to a small ridge solve.
    Constant fused bands have no variance to explain and are left out.
    """
    fused = as_cube(fused, "fused")
    m = as_cube(m, "msi")
    if fused.shape[:2] != m.shape[:2]:
        raise ValueError(f"spatial dims differ: {fused.shape[:2]} vs {m.shape[:2]}")
    design = np.column_stack([unfold(m, 3).T, np.ones(m.shape[0] * m.shape[1])])
    target = unfold(fused, 3).T
    rank = np.linalg.matrix_rank(design)
    if rank < design.shape[1]:
        warnings.warn(
            f"MSI design has rank {rank} < {design.shape[1]}; using ridge {ridge:g}",
            stacklevel=2,
        )
        gram = design.T @ design
        coef = np.linalg.solve(gram + ridge * np.trace(gram) * np.eye(gram.shape[0]), design.T @ target)
    else:
        coef = np.linalg.lstsq(design, target, rcond=None)[0]
    res = target - design @ coef
    ss_res = np.sum(res**2, axis=0)
    ss_tot = np.sum((target - target.mean(axis=0)) ** 2, axis=0)
    keep = ss_tot > 0
    if not np.all(keep):
        warnings.warn(f"R^2 ignores {int(np.sum(~keep))} constant band(s)", stacklevel=2)
    if not np.any(keep):
        return float("nan")
    return float(np.mean(1.0 - ss_res[keep] / ss_tot[keep]))


def _json_float(v):
    if v is None:
        return None
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if math.isnan(v):
        return "nan"
    return v


@dataclass
class MetricReport:
    psnr_db: float = None
    sam_rad: float = None
    uiqi: float = None
    ergas: float = None
    psnr_per_band: list = None
    d_lambda: float = None
    d_s: float = None
    qnr: float = None
    r_squared: float = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        out = {}
        for key, val in asdict(self).items():
            if key == "psnr_per_band" and val is not None:
                out[key] = [_json_float(v) for v in val]
            elif key == "diagnostics":
                out[key] = val
            else:
                out[key] = _json_float(val)
        return out

    def rows(self):
        names = ("psnr_db", "sam_rad", "uiqi", "ergas", "d_lambda", "d_s", "qnr", "r_squared")
        return [(n, getattr(self, n)) for n in names if getattr(self, n) is not None]


def full_reference(x, ref, ratio, peak=None, window=32, stride=32):
    """All full-reference scores in one :class:`MetricReport`."""
    x, ref = _same_dims(x, ref)
    window = _clamp_window(window, x.shape[:2])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        mean_db, per_band = psnr(x, ref, peak)
        angle, skipped = sam(x, ref, return_skipped=True)
        q, degenerate = uiqi(x, ref, window, stride, return_degenerate=True)
        e, excluded = ergas(x, ref, ratio, return_excluded=True)
    return MetricReport(
        psnr_db=mean_db,
        sam_rad=angle,
        uiqi=q,
        ergas=e,
        psnr_per_band=list(per_band),
        diagnostics={
            "peak": peak if peak is not None else default_peak(ref),
            "sam_skipped_pixels": skipped,
            "uiqi_window": window,
            "uiqi_stride": stride,
            "uiqi_degenerate_windows": degenerate,
            "ergas_excluded_bands": excluded,
        },
    )
