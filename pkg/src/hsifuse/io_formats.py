"""Cube persistence (JSON header + raw BSQ samples), trace CSV and PGM/PPM export.

A cube stored at ``base`` is the pair ``base.json``::

    {"rows": 32, "cols": 32, "bands": 16, "dtype": "f64",
     "order": "bsq", "endianness": "little"}

plus ``base.raw`` holding ``bands`` row-major images one after another as
little-endian floats. ``wavelengths_nm`` and ``description`` are optional.
"""

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .tensor import as_cube

__all__ = [
    "CubeHeader",
    "CubeFormatError",
    "HeaderError",
    "LengthMismatchError",
    "UnsupportedFormatError",
    "write_cube",
    "read_cube",
    "read_header",
    "export_band_image",
    "export_false_color",
    "write_trace_csv",
    "read_trace_csv",
    "TRACE_COLUMNS",
]

DTYPES = {"f32": "<f4", "f64": "<f8"}
HEADER_KEYS = {"rows", "cols", "bands", "dtype", "order", "endianness", "wavelengths_nm", "description"}
TRACE_COLUMNS = ("iter", "L1", "L2", "ttnn", "lagrangian", "primal_residual", "rel_change", "wall_ms")
_TRACE_FIELDS = ("iter", "l1", "l2", "ttnn", "lagrangian", "primal_residual", "rel_change", "wall_ms")


class CubeFormatError(ValueError):
    """Base class for malformed or unsupported cube files."""


class HeaderError(CubeFormatError):
    pass


class UnsupportedFormatError(CubeFormatError):
    pass


class LengthMismatchError(CubeFormatError):
    def __init__(self, path, expected, actual):
        super().__init__(f"{path}: expected {expected} bytes of samples, found {actual}")
        self.expected = expected
        self.actual = actual


@dataclass
class CubeHeader:
    rows: int
    cols: int
    bands: int
    dtype: str = "f64"
    order: str = "bsq"
    endianness: str = "little"
    wavelengths_nm: list = None
    description: str = None

    def validate(self):
        for name in ("rows", "cols", "bands"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise HeaderError(f"header field {name!r} must be a positive integer, got {v!r}")
        if self.dtype not in DTYPES:
            raise UnsupportedFormatError(f"dtype {self.dtype!r} not supported; use one of {sorted(DTYPES)}")
        if self.order != "bsq":
            raise UnsupportedFormatError(f"sample order {self.order!r} not supported; only 'bsq'")
        if self.endianness != "little":
            raise UnsupportedFormatError(f"endianness {self.endianness!r} not supported; only 'little'")
        if self.wavelengths_nm is not None:
            wl = self.wavelengths_nm
            if not isinstance(wl, list) or len(wl) != self.bands:
                raise HeaderError(f"wavelengths_nm must list {self.bands} values")
            if not all(isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) for v in wl):
                raise HeaderError("wavelengths_nm must be finite numbers")
        if self.description is not None and not isinstance(self.description, str):
            raise HeaderError("description must be a string")
        return self

    @property
    def nbytes(self):
        return self.rows * self.cols * self.bands * np.dtype(DTYPES[self.dtype]).itemsize

    def to_json(self):
        d = {k: v for k, v in asdict(self).items() if v is not None}
        return json.dumps(d, indent=2)


def _paths(base):
    base = Path(base)
    if base.suffix in (".json", ".raw"):
        base = base.with_suffix("")
    return base.with_name(base.name + ".json"), base.with_name(base.name + ".raw")


def write_cube(x, base, dtype="f64", wavelengths_nm=None, description=None):
    """Write ``x`` as ``base.json`` + ``base.raw``; ``f32`` quantizes the samples."""
    x = as_cube(x)
    header = CubeHeader(
        rows=x.shape[0],
        cols=x.shape[1],
        bands=x.shape[2],
        dtype=dtype,
        wavelengths_nm=None if wavelengths_nm is None else [float(v) for v in wavelengths_nm],
        description=description,
    ).validate()
    jpath, rpath = _paths(base)
    # bands outermost, then rows, then columns
    samples = np.ascontiguousarray(np.transpose(x, (2, 0, 1)), dtype=DTYPES[dtype])
    try:
        jpath.write_text(header.to_json() + "\n", encoding="utf-8")
        rpath.write_bytes(samples.tobytes())
    except OSError as exc:
        raise OSError(f"cannot write cube at {jpath.parent}: {exc}") from exc
    return jpath, rpath


def read_header(base):
    jpath, _ = _paths(base)
    if not jpath.exists():
        raise FileNotFoundError(f"cube header not found: {jpath}")
    try:
        raw = json.loads(jpath.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise HeaderError(f"{jpath}: malformed JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise HeaderError(f"{jpath}: header must be a JSON object")
    missing = {"rows", "cols", "bands", "dtype", "order", "endianness"} - raw.keys()
    if missing:
        raise HeaderError(f"{jpath}: missing header keys {sorted(missing)}")
    unknown = raw.keys() - HEADER_KEYS
    if unknown:
        raise HeaderError(f"{jpath}: unknown header keys {sorted(unknown)}")
    return CubeHeader(**raw).validate()


def read_cube(base, return_header=False):
    """Inverse of :func:`write_cube`; always returns float64."""
    header = read_header(base)
    _, rpath = _paths(base)
    if not rpath.exists():
        raise FileNotFoundError(f"cube samples not found: {rpath}")
    actual = rpath.stat().st_size
    if actual != header.nbytes:
        raise LengthMismatchError(rpath, header.nbytes, actual)
    flat = np.fromfile(rpath, dtype=DTYPES[header.dtype])
    x = flat.reshape(header.bands, header.rows, header.cols).transpose(1, 2, 0).astype(np.float64)
    if not np.all(np.isfinite(x)):
        raise CubeFormatError(f"{rpath}: samples contain NaN or Inf")
    x = np.ascontiguousarray(x)
    return (x, header) if return_header else x


def _to_bytes(img):
    lo, hi = float(img.min()), float(img.max())
    if hi == lo:
        return np.full(img.shape, 128, dtype=np.uint8)
    return np.round(255.0 * (img - lo) / (hi - lo)).astype(np.uint8)


def export_band_image(x, band, path):
    """Binary 8-bit graymap (P5) of one band, min-max stretched; constant bands are 128."""
    x = as_cube(x)
    if not 0 <= band < x.shape[2]:
        raise ValueError(f"band {band} out of range [0, {x.shape[2] - 1}]")
    img = _to_bytes(x[:, :, band])
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def export_false_color(x, bands, path):
    """Binary pixmap (P6) with ``bands = (r, g, b)``, each channel stretched separately."""
    x = as_cube(x)
    if len(bands) != 3:
        raise ValueError("false color needs exactly three bands")
    for b in bands:
        if not 0 <= b < x.shape[2]:
            raise ValueError(f"band {b} out of range [0, {x.shape[2] - 1}]")
    img = np.stack([_to_bytes(x[:, :, b]) for b in bands], axis=2)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())


def _fmt(v):
    return f"{v:.12g}"


def write_trace_csv(trace, path):
    """Write a solver trace (a ``SolverState`` or a list of records), 12 significant digits."""
    records = getattr(trace, "trace", trace)
    if not records:
        raise ValueError("trace is empty; nothing to write")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for rec in records:
            w.writerow([str(rec.iter)] + [_fmt(float(getattr(rec, f))) for f in _TRACE_FIELDS[1:]])


def read_trace_csv(path):
    """Parse a trace CSV back into a list of dicts keyed by the header names."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != TRACE_COLUMNS:
        raise CubeFormatError(f"{path}: unexpected trace header {rows[0] if rows else None}")
    out = []
    for row in rows[1:]:
        rec = {k: float(v) for k, v in zip(TRACE_COLUMNS, row)}
        rec["iter"] = int(row[0])
        out.append(rec)
    return out
