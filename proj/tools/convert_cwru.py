#!/usr/bin/env python3
"""Convert bearing-test .mat recordings into raw little-endian float32 files
plus the sidecar JSON that `synfault generate --recordings` reads.

    convert_cwru.py --out data/cwru normal=97.mat OF=130.mat OF=197.mat IF=105.mat REF=118.mat

Each argument is LABEL=PATH. The drive-end channel (*_DE_time) is used unless
--channel says otherwise. Shaft speed comes from the file's RPM entry when
present, else from --rpm.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from scipy.io import loadmat


def pick(mat, suffix):
    keys = [k for k in mat if k.endswith(suffix)]
    if not keys:
        raise KeyError(f"no variable ending in {suffix}")
    return mat[sorted(keys)[0]]


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("recordings", nargs="+", metavar="LABEL=PATH")
    ap.add_argument("--out", required=True, type=Path)
    ap.add_argument("--channel", default="_DE_time")
    ap.add_argument("--sample-rate", type=float, default=12000.0)
    ap.add_argument("--rpm", type=float, default=None, help="fallback shaft speed")
    args = ap.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    listing = []
    for item in args.recordings:
        label, sep, path = item.partition("=")
        if not sep:
            sys.exit(f"expected LABEL=PATH, got {item!r}")
        path = Path(path)
        mat = loadmat(path)
        signal = np.asarray(pick(mat, args.channel), dtype="<f4").ravel()
        try:
            rpm = float(np.asarray(pick(mat, "RPM")).ravel()[0])
        except KeyError:
            if args.rpm is None:
                sys.exit(f"{path}: no RPM entry; pass --rpm")
            rpm = args.rpm
        name = f"{label}_{path.stem}.f32"
        signal.tofile(args.out / name)
        listing.append({"file": name, "label": label, "shaft_speed_rpm": rpm, "sample_rate": args.sample_rate})
        print(f"{name}: {signal.size} samples at {rpm:g} rpm")

    with open(args.out / "recordings.json", "w") as f:
        json.dump({"recordings": listing}, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
