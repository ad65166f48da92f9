"""Regenerate the bundled 32x32x16 demo cube (src/hsifuse/data/truth32.*).

Random nonnegative Tucker cube with multilinear ranks (4, 4, 3), rescaled to
[0, 1], with nominal band centers spread over 400-1000 nm.

    python scripts/make_synthetic.py [--seed 0] [--out src/hsifuse/data/truth32]
"""

import argparse
from pathlib import Path

import numpy as np

from hsifuse.degradation import tucker_truth
from hsifuse.io_formats import write_cube

DEFAULT_OUT = Path(__file__).resolve().parents[1] / "src" / "hsifuse" / "data" / "truth32"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--shape", type=int, nargs=3, default=(32, 32, 16))
    ap.add_argument("--ranks", type=int, nargs=3, default=(4, 4, 3))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=DEFAULT_OUT)
    args = ap.parse_args()

    truth = tucker_truth(tuple(args.shape), tuple(args.ranks), seed=args.seed)
    wl = np.linspace(400.0, 1000.0, args.shape[2])
    desc = f"tucker ranks {tuple(args.ranks)} seed {args.seed}, rescaled to [0, 1]"
    args.out.parent.mkdir(parents=True, exist_ok=True)
    jpath, rpath = write_cube(truth, args.out, "f64", wavelengths_nm=wl, description=desc)
    print(f"wrote {jpath} and {rpath}")


if __name__ == "__main__":
    main()
