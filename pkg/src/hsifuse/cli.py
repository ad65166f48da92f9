"""Command line: ``hsifuse {simulate,fuse,eval,selftest}``.

Exit codes: 0 success, 2 usage or argument error, 3 data/format error,
4 numerical failure.
"""

import argparse
import csv
import itertools
import json
import logging
import math
import sys
import warnings
from dataclasses import asdict, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from . import io_formats as iof
from . import metrics as met
from .degradation import SpatialOperator, SpectralResponse, gaussian_kernel, simulate_pair
from .initialization import InitConfig, init_hrhsi
from .solver import FusionConfig, NumericalError, fuse

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("hsifuse")

# lambda1, lambda2, beta, mu sweep offered by --grid
GRID = {
    "lambda1": (0.1, 1.0, 10.0, 50.0),
    "lambda2": (0.01, 0.1, 1.0),
    "beta": (1.0, 10.0, 20.0, 100.0),
    "mu": tuple(20.0**-p for p in (1, 2, 3, 4)),
}


class DataError(Exception):
    """Bad input data or files (exit 3)."""


class UsageError(Exception):
    """Arguments that parse but do not make sense together (exit 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _snr(text):
    if text.lower() in ("inf", "none", "noiseless"):
        return math.inf
    return float(text)


# -- windows -----------------------------------------------------------------


def load_windows(path):
    """Read a JSON list of ``{"lo": .., "hi": ..}`` (1-based, inclusive) into 0-based pairs."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise DataError(f"windows file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"windows file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, list) or not raw:
        raise DataError(f"{path}: expected a nonempty JSON list of {{lo, hi}} objects")
    wins = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict) or not {"lo", "hi"} <= item.keys():
            raise DataError(f"{path}: entry {i} must be an object with 'lo' and 'hi'")
        lo, hi = item["lo"], item["hi"]
        if not (isinstance(lo, int) and isinstance(hi, int)) or not 1 <= lo <= hi:
            raise DataError(f"{path}: entry {i} needs integers 1 <= lo <= hi, got {lo}, {hi}")
        wins.append((lo - 1, hi - 1))
    return wins


def windows_from_wavelengths(wavelengths_nm, edges_path):
    """Map MSI band edges ``[[lo_nm, hi_nm], ...]`` onto HSI band indices (0-based)."""
    if wavelengths_nm is None:
        raise DataError("HSI header has no wavelengths_nm; cannot derive windows")
    try:
        edges = json.loads(Path(edges_path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read band edges from {edges_path}: {exc}") from exc
    wl = np.asarray(wavelengths_nm, dtype=np.float64)
    wins = []
    for i, pair in enumerate(edges):
        try:
            lo_nm, hi_nm = float(pair[0]), float(pair[1])
        except (TypeError, ValueError, IndexError) as exc:
            raise DataError(f"{edges_path}: entry {i} must be a [lo_nm, hi_nm] pair") from exc
        idx = np.nonzero((wl >= lo_nm) & (wl <= hi_nm))[0]
        if idx.size == 0:
            raise DataError(f"MSI band {i + 1} [{lo_nm}, {hi_nm}] nm covers no HSI band")
        if np.any(np.diff(idx) != 1):
            raise DataError(f"MSI band {i + 1} maps to non-contiguous HSI bands")
        wins.append((int(idx[0]), int(idx[-1])))
    return wins


def even_windows(n_bands, n_windows):
    if not 1 <= n_windows <= n_bands:
        raise UsageError(f"cannot split {n_bands} bands into {n_windows} windows")
    edges = np.linspace(0, n_bands, n_windows + 1).round().astype(int)
    return [(int(a), int(b) - 1) for a, b in zip(edges[:-1], edges[1:])]


def _one_based(wins):
    return [{"lo": lo + 1, "hi": hi + 1} for lo, hi in wins]


# -- helpers -----------------------------------------------------------------


def _read(base, what):
    try:
        return iof.read_cube(base, return_header=True)
    except FileNotFoundError as exc:
        raise DataError(f"{what}: {exc}") from exc
    except iof.CubeFormatError as exc:
        raise DataError(f"{what}: {exc}") from exc


def _bundled_truth():
    ref = resources.files("hsifuse") / "data" / "truth32"
    with resources.as_file(ref) as p:
        return _read(p, "bundled truth")


def _jsonable(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if isinstance(v, (list, tuple)):
        return [_jsonable(u) for u in v]
    if isinstance(v, dict):
        return {k: _jsonable(u) for k, u in v.items()}
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, np.generic):
        return _jsonable(v.item())
    return v


def _dump(obj, path):
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2) + "\n", encoding="utf-8")


def _announce(command, resolved, out):
    """Print the resolved configuration and store it next to the outputs."""
    doc = {"command": command, "version": __version__, "config": resolved}
    print(json.dumps(_jsonable(doc), indent=2))
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        _dump(doc, out / "config.json")


# -- simulate ------------------------------------------------------------------


def cmd_simulate(args):
    if args.truth == "bundled":
        truth, header = _bundled_truth()
    else:
        truth, header = _read(args.truth, "truth")
    n1, n2, k = truth.shape
    if args.windows:
        wins = load_windows(args.windows)
    else:
        wins = even_windows(k, args.even_windows)
    if n1 % args.factor or n2 % args.factor:
        raise UsageError(f"truth spatial dims ({n1}, {n2}) are not divisible by factor {args.factor}")
    if args.kernel_taps % 2 == 0 or args.kernel_taps > min(n1, n2):
        raise UsageError(f"--kernel-taps must be odd and <= {min(n1, n2)}")
    weights = None
    if args.srf_sigma is not None:
        weights = []
        for lo, hi in wins:
            t = np.arange(hi - lo + 1) - (hi - lo) / 2.0
            w = np.exp(-(t**2) / (2.0 * args.srf_sigma**2))
            weights.append(w / w.sum())
    try:
        sr = SpectralResponse(k, wins, weights)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    op1 = SpatialOperator(n1, args.factor, gaussian_kernel(n1, args.kernel_sigma, args.kernel_taps))
    op2 = SpatialOperator(n2, args.factor, gaussian_kernel(n2, args.kernel_sigma, args.kernel_taps))

    out = Path(args.out)
    resolved = {
        "truth": args.truth,
        "truth_shape": list(truth.shape),
        "factor": args.factor,
        "offset": op1.offset,
        "kernel_sigma": args.kernel_sigma,
        "kernel_taps": args.kernel_taps,
        "windows": _one_based(wins),
        "srf_sigma": args.srf_sigma,
        "snr_h": args.snr_h,
        "snr_m": args.snr_m,
        "seed": args.seed,
        "dtype": args.dtype,
    }
    _announce("simulate", resolved, out)
    h, m = simulate_pair(truth, op1, op2, sr, args.snr_h, args.snr_m, args.seed)
    wl = header.wavelengths_nm
    iof.write_cube(h, out / "hsi", args.dtype, wavelengths_nm=wl, description="simulated LR-HSI")
    iof.write_cube(m, out / "msi", args.dtype, description="simulated HR-MSI")
    iof.write_cube(truth.mean(axis=2, keepdims=True), out / "pan", args.dtype, description="band-mean PAN")
    iof.write_cube(truth, out / "truth", args.dtype, wavelengths_nm=wl, description="reference cube")
    provenance = dict(resolved)
    provenance.update(
        b1=op1.b.tolist(),
        b2=op2.b.tolist(),
        srf_weights=[w.tolist() for w in sr.weights],
        hsi_shape=list(h.shape),
        msi_shape=list(m.shape),
        noise_streams={"hsi": args.seed, "msi": args.seed + 1},
    )
    _dump(provenance, out / "provenance.json")
    print(f"wrote {out}/hsi, msi, pan, truth cubes and provenance.json")
    return EXIT_OK


# -- fuse ----------------------------------------------------------------------


def _fusion_config(args):
    return FusionConfig(
        lambda1=args.lambda1,
        lambda2=args.lambda2,
        beta=args.beta,
        mu=args.mu,
        max_iter=args.max_iter,
        rel_tol=args.rel_tol,
        stepsize_rule=args.stepsize_rule,
        transform_kind=args.transform,
        inner_pg_steps=args.inner_steps,
        seed=args.seed,
        certify_descent=args.certify_descent,
    )


def _estimates(state):
    return {
        "b1": state.op1.b.tolist(),
        "b2": state.op2.b.tolist(),
        "windows": _one_based(state.sr.windows),
        "srf_weights": [w.tolist() for w in state.sr.weights],
        "iterations": state.iter,
        "descent_violations": state.descent_violations,
        "stalls": [list(s) for s in state.stalls],
    }


def _run_one(h, m, wins, factor, cfg, init_cfg, out, dtype, s0):
    s, state = fuse(h, m, wins, factor, cfg, init_cfg, s0=s0)
    out.mkdir(parents=True, exist_ok=True)
    iof.write_cube(s, out / "fused", dtype, description="fused HR-HSI")
    if state.trace:
        iof.write_trace_csv(state, out / "trace.csv")
    _dump(_estimates(state), out / "estimates.json")
    return s, state


def cmd_fuse(args):
    h, h_header = _read(args.hsi, "hsi")
    m, _ = _read(args.msi, "msi")
    if args.windows and args.windows_from_wavelengths:
        raise UsageError("give either --windows or --windows-from-wavelengths, not both")
    if args.windows:
        wins = load_windows(args.windows)
    elif args.windows_from_wavelengths:
        wins = windows_from_wavelengths(h_header.wavelengths_nm, args.windows_from_wavelengths)
    else:
        raise UsageError("one of --windows or --windows-from-wavelengths is required")
    f = args.factor
    if f < 1 or m.shape[:2] != (f * h.shape[0], f * h.shape[1]):
        raise UsageError(
            f"MSI spatial dims {m.shape[0]}x{m.shape[1]} are not factor {f} times"
            f" HSI spatial dims {h.shape[0]}x{h.shape[1]}"
        )
    if len(wins) != m.shape[2]:
        raise DataError(f"{len(wins)} windows given but the MSI has {m.shape[2]} bands")
    for lo, hi in wins:
        if hi >= h.shape[2]:
            raise DataError(f"window {lo + 1}-{hi + 1} exceeds the {h.shape[2]} HSI bands")

    init_cfg = InitConfig(gamma=args.gamma, sigma_s=args.sigma_s, sigma_lambda=args.sigma_lambda)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        cfg = _fusion_config(args)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)

    out = Path(args.out)
    resolved = {
        "hsi": str(args.hsi),
        "msi": str(args.msi),
        "factor": f,
        "windows": _one_based(wins),
        "fusion": asdict(cfg),
        "init": asdict(init_cfg),
        "dtype": args.dtype,
        "grid": args.grid,
        "grid_limit": args.grid_limit,
    }
    _announce("fuse", resolved, out)
    s0 = init_hrhsi(h, m, f, init_cfg)
    iof.write_cube(s0, out / "init", args.dtype, description="regression initializer")

    if not args.grid:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            s, state = _run_one(h, m, wins, f, cfg, init_cfg, out, args.dtype, s0)
        last = state.trace[-1] if state.trace else None
        msg = f"fused {s.shape} in {state.iter} iteration(s)"
        if last is not None:
            msg += f"; L = {last.lagrangian:.6e}, |S-Z| = {last.primal_residual:.3e}"
        print(msg)
        return EXIT_OK

    truth = _read(args.truth, "truth")[0] if args.truth else None
    rows = []
    combos = list(itertools.product(*GRID.values()))
    if args.grid_limit is not None:
        combos = combos[: args.grid_limit]
    for i, (l1, l2, beta, mu) in enumerate(combos):
        run_dir = out / "grid" / f"run_{i:03d}"
        with warnings.catch_warnings():
            # most grid points have beta*mu <= sqrt(2); the summary is the record
            warnings.simplefilter("ignore")
            run_cfg = replace(cfg, lambda1=l1, lambda2=l2, beta=beta, mu=mu, certify_descent=False)
            try:
                s, state = _run_one(h, m, wins, f, run_cfg, init_cfg, run_dir, args.dtype, s0)
                status = "ok"
            except NumericalError as exc:
                s, state, status = None, None, f"numerical: {exc.step}"
        row = {"run": i, "lambda1": l1, "lambda2": l2, "beta": beta, "mu": mu, "status": status}
        if state is not None and state.trace:
            row.update(iterations=state.iter, lagrangian=state.trace[-1].lagrangian)
        if truth is not None and s is not None:
            row["psnr_db"] = met.psnr(s, truth)[0]
        rows.append(row)
        print(f"[{i + 1}/{len(combos)}] " + ", ".join(f"{k}={v}" for k, v in row.items()))
    keys = ["run", "lambda1", "lambda2", "beta", "mu", "status", "iterations", "lagrangian", "psnr_db"]
    with open(out / "grid_summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (f"{v:.12g}" if isinstance(v, float) else v) for k, v in row.items()})
    print(f"wrote {out / 'grid_summary.csv'}")
    return EXIT_OK


# -- eval ----------------------------------------------------------------------


def cmd_eval(args):
    fused, _ = _read(args.fused, "fused")
    report = met.MetricReport()
    if args.truth:
        ref, _ = _read(args.truth, "truth")
        if ref.shape != fused.shape:
            raise DataError(f"fused {fused.shape} and truth {ref.shape} differ in shape")
        report = met.full_reference(fused, ref, args.ratio, args.peak, args.window, args.stride)
        if args.init:
            s0, _ = _read(args.init, "init")
            init_db = met.psnr(s0, ref, args.peak)[0]
            report.diagnostics["init_psnr_db"] = init_db
            report.diagnostics["psnr_gain_db"] = report.psnr_db - init_db
    if args.hsi:
        if not args.pan:
            raise UsageError("no-reference scoring needs --hsi and --pan")
        h, _ = _read(args.hsi, "hsi")
        pan, _ = _read(args.pan, "pan")
        if pan.shape[2] != 1:
            raise DataError(f"PAN must have one band, got {pan.shape[2]}")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                d_l, d_s, q = met.no_reference(fused, h, pan[:, :, 0], args.ratio, args.window, args.stride)
            except ValueError as exc:
                raise DataError(str(exc)) from exc
        report.d_lambda, report.d_s, report.qnr = d_l, d_s, q
    if args.msi:
        m, _ = _read(args.msi, "msi")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            report.r_squared = met.r_squared(fused, m)
    if not (args.truth or args.hsi or args.msi):
        raise UsageError("give --truth (full reference) and/or --hsi with --pan (no reference)")

    out = Path(args.out) if args.out else None
    resolved = {k: getattr(args, k) for k in ("fused", "truth", "init", "hsi", "pan", "msi", "ratio", "peak", "window", "stride")}
    _announce("eval", resolved, out)
    for name, val in report.rows():
        print(f"{name:>10s}  {val:.6g}" if math.isfinite(val) else f"{name:>10s}  {val}")
    for name in ("init_psnr_db", "psnr_gain_db"):
        if name in report.diagnostics:
            print(f"{name:>10s}  {report.diagnostics[name]:.6g}")
    if out is not None:
        _dump(report.to_dict(), out / "metrics.json")
    return EXIT_OK


# -- selftest --------------------------------------------------------------------


def cmd_selftest(args):
    from .selfcheck import run_checks

    _announce("selftest", {"seed": args.seed}, None)
    results = run_checks(args.seed)
    failed = [name for name, ok, _ in results if not ok]
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
    print(f"{len(results) - len(failed)} passed, {len(failed)} failed")
    return EXIT_OK if not failed else EXIT_NUMERIC


# -- parser ----------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="hsifuse", description="Blind hyperspectral/multispectral fusion toolkit")
    p.add_argument("--version", action="version", version=f"hsifuse {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="degrade a reference cube into an LR-HSI / HR-MSI pair")
    s.add_argument("--truth", required=True, help="cube base path, or 'bundled' for the 32x32x16 demo cube")
    s.add_argument("--factor", type=int, default=4)
    s.add_argument("--kernel-sigma", type=float, default=1.0)
    s.add_argument("--kernel-taps", type=int, default=9)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--windows", help="JSON list of {lo, hi}, 1-based inclusive")
    g.add_argument("--even-windows", type=int, default=4, help="split the bands into N equal windows")
    s.add_argument("--srf-sigma", type=float, default=None, help="Gaussian SRF width in bands (default uniform)")
    s.add_argument("--snr-h", type=_snr, default=math.inf)
    s.add_argument("--snr-m", type=_snr, default=math.inf)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--dtype", choices=sorted(iof.DTYPES), default="f64")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    d = FusionConfig.__dataclass_fields__
    ic = InitConfig.__dataclass_fields__
    f = sub.add_parser("fuse", help="run blind fusion")
    f.add_argument("--hsi", required=True)
    f.add_argument("--msi", required=True)
    f.add_argument("--factor", type=int, required=True)
    f.add_argument("--windows")
    f.add_argument("--windows-from-wavelengths", metavar="EDGES_JSON",
                   help="JSON list of [lo_nm, hi_nm] MSI band edges, matched against HSI wavelengths_nm")
    f.add_argument("--lambda1", type=float, default=d["lambda1"].default)
    f.add_argument("--lambda2", type=float, default=d["lambda2"].default)
    f.add_argument("--beta", type=float, default=d["beta"].default)
    f.add_argument("--mu", type=float, default=d["mu"].default)
    f.add_argument("--max-iter", type=int, default=d["max_iter"].default)
    f.add_argument("--rel-tol", type=float, default=d["rel_tol"].default)
    f.add_argument("--stepsize-rule", choices=("theory", "paper_literal"), default=d["stepsize_rule"].default)
    f.add_argument("--transform", choices=("identity", "data_svd", "dft", "dct"), default=d["transform_kind"].default)
    f.add_argument("--inner-steps", type=int, default=d["inner_pg_steps"].default)
    f.add_argument("--gamma", type=float, default=ic["gamma"].default)
    f.add_argument("--sigma-s", type=float, default=ic["sigma_s"].default)
    f.add_argument("--sigma-lambda", type=float, default=ic["sigma_lambda"].default)
    f.add_argument("--certify-descent", action="store_true", help="reject beta*mu <= sqrt(2)")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--dtype", choices=sorted(iof.DTYPES), default="f64")
    f.add_argument("--grid", action="store_true", help="sweep the lambda1/lambda2/beta/mu preset grid")
    f.add_argument("--grid-limit", type=int, default=None, help="run only the first N grid points")
    f.add_argument("--truth", help="reference cube for grid-sweep PSNR")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fuse)

    e = sub.add_parser("eval", help="score a fused cube")
    e.add_argument("--fused", required=True)
    e.add_argument("--truth")
    e.add_argument("--init", help="initializer cube, to report the PSNR gain")
    e.add_argument("--hsi")
    e.add_argument("--pan")
    e.add_argument("--msi", help="MSI for the R^2 regression score")
    e.add_argument("--ratio", type=int, default=4, help="spatial resolution ratio")
    e.add_argument("--peak", type=float, default=None)
    e.add_argument("--window", type=int, default=32)
    e.add_argument("--stride", type=int, default=32)
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    t = sub.add_parser("selftest", help="run the embedded invariant checks")
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(func=cmd_selftest)
    return p


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"hsifuse: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"hsifuse: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"hsifuse: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except np.linalg.LinAlgError as exc:
        print(f"hsifuse: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, iof.CubeFormatError, FileNotFoundError) as exc:
        print(f"hsifuse: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"hsifuse: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
