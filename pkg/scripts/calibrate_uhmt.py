"""Regenerate the built-in universal HMT parameters.

Trains one tied scalar HMT jointly on the natural images bundled with
scikit-image and writes the result to ``src/mdis/config/uhmt_natural.toml``.
scikit-image is only needed for this script, not for the library.

    python scripts/calibrate_uhmt.py [--out PATH] [--scales 5]
"""
import argparse
from pathlib import Path

from skimage import data

from mdis import hmt
from mdis.paramfile import save_params
from mdis.pyramid import dwt2d, prepare_image

CORPUS = ["camera", "astronaut", "coffee", "chelsea", "rocket", "coins", "moon", "grass", "gravel", "clock"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=Path(__file__).resolve().parents[1] / "src/mdis/config/uhmt_natural.toml")
    ap.add_argument("--scales", type=int, default=5)
    ap.add_argument("--max-iter", type=int, default=200)
    args = ap.parse_args()

    trees = [dwt2d(prepare_image(getattr(data, name)()), scales=args.scales) for name in CORPUS]
    init = hmt.init_params(trees, "uhmt")
    params, trace = hmt.em_train(trees, init, max_iter=args.max_iter, rel_tol=1e-8)
    print(f"{len(trace) - 1} EM iterations, log-likelihood {trace[0]:.1f} -> {trace[-1]:.1f}")
    save_params(params, args.out)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
