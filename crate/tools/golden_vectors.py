#!/usr/bin/env python3
"""Generate resampler golden vectors with an independent exact-arithmetic oracle.

Every weight and every output is computed with fractions.Fraction, using a
direct two-dimensional sum over the interpolation block (no separable pass),
MATLAB-style contribution windows with symmetric edge folding, and
round-half-away-from-zero followed by a clamp to [0, 255].

Nearest-neighbour uses the box [-0.5, 0.5) on (source - center), so a center
exactly between two pixels selects the lower index.

Usage: python3 tools/golden_vectors.py crates/core/tests/fixtures/golden
"""

import json
import math
import random
import sys
from fractions import Fraction
from pathlib import Path

SFS = [Fraction(3, 10), Fraction(1, 2), Fraction(7, 10)]
CHANNELS = [
    ("nearest", False),
    ("bilinear", False),
    ("bilinear", True),
    ("bicubic", False),
    ("bicubic", True),
]
A = Fraction(-1, 2)
SIZE = 32
IMAGES = 10


def box(x):
    return Fraction(1) if Fraction(-1, 2) <= x < Fraction(1, 2) else Fraction(0)


def triangle(x):
    return max(Fraction(0), 1 - abs(x))


def cubic(x):
    ax = abs(x)
    if ax <= 1:
        return (A + 2) * ax**3 - (A + 3) * ax**2 + 1
    if ax < 2:
        return A * ax**3 - 5 * A * ax**2 + 8 * A * ax - 4 * A
    return Fraction(0)


KERNELS = {"nearest": (box, 1), "bilinear": (triangle, 2), "bicubic": (cubic, 4)}


def contributions(n_in, n_out, sf, family, aa):
    """Per-output list of (source index, weight); MATLAB's algorithm, 1-based inside."""
    h, width = KERNELS[family]
    width = Fraction(width)
    if aa:
        base = h
        h = lambda x: sf * base(sf * x)
        width = width / sf
    rows = []
    for x in range(1, n_out + 1):
        u = x / sf + Fraction(1, 2) * (1 - 1 / sf)
        left = math.floor(u - width / 2)
        count = math.ceil(width) + 2
        ind = [left + k for k in range(count)]
        w = [h(i - u) for i in ind]
        total = sum(w)
        w = [v / total for v in w]
        aux = list(range(1, n_in + 1)) + list(range(n_in, 0, -1))
        ind = [aux[(i - 1) % (2 * n_in)] - 1 for i in ind]
        rows.append(list(zip(ind, w)))
    # drop window columns that are zero everywhere
    keep = [k for k in range(len(rows[0])) if any(r[k][1] != 0 for r in rows)]
    return [[r[k] for k in keep] for r in rows]


def round_half_away(v):
    f = math.floor(abs(v) + Fraction(1, 2))
    return f if v >= 0 else -f


def resize(img, sf, family, aa):
    h, w = len(img), len(img[0])
    oh, ow = math.ceil(sf * h), math.ceil(sf * w)
    cv = contributions(h, oh, sf, family, aa)
    ch = contributions(w, ow, sf, family, aa)
    out = []
    for u in range(oh):
        row = []
        for v in range(ow):
            acc = Fraction(0)
            for i, wi in cv[u]:
                if wi == 0:
                    continue
                for j, wj in ch[v]:
                    if wj:
                        acc += wi * wj * img[i][j]
            row.append(min(255, max(0, round_half_away(acc))))
        out.append(row)
    return out


def make_image(k, rng):
    if k % 3 == 0:
        return [[rng.randrange(256) for _ in range(SIZE)] for _ in range(SIZE)]
    if k % 3 == 1:
        # hard edges drive bicubic overshoot into the clamp
        return [[255 if ((i // 3) + (j // 5) + rng.randrange(2)) % 2 else 0 for j in range(SIZE)] for i in range(SIZE)]
    base = rng.randrange(40, 200)
    return [[max(0, min(255, base + (i * j) % 23 - 11 + rng.randrange(-30, 31))) for j in range(SIZE)] for i in range(SIZE)]


def write_pgm(path, img):
    h, w = len(img), len(img[0])
    data = bytes(v for row in img for v in row)
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode() + data)


def label(family, aa, sf):
    return f"{'aa-' if aa else ''}{family}-{sf.numerator}_{sf.denominator}"


def main(out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(20240607)
    for k in range(IMAGES):
        img = make_image(k, rng)
        name = f"img{k:02}"
        write_pgm(out / f"{name}.pgm", img)
        for family, aa in CHANNELS:
            for sf in SFS:
                tag = f"{name}_{label(family, aa, sf)}"
                write_pgm(out / f"{tag}.pgm", resize(img, sf, family, aa))
                spec = {
                    "family": family,
                    "antialiasing": aa,
                    "sf": float(sf),
                    "bicubic_a": float(A),
                    "input": f"{name}.pgm",
                    "expected": f"{tag}.pgm",
                }
                (out / f"{tag}.json").write_text(json.dumps(spec, indent=2) + "\n")
    print(f"wrote {IMAGES * len(CHANNELS) * len(SFS)} cases to {out}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "crates/core/tests/fixtures/golden")
