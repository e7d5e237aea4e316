"""Benchmark the compiled marching-cubes kernel against the numpy fallback.

Both kernels emit identical meshes (same vertices bit-for-bit, same face
set), so the only question is speed. Run:

    python benchmarks/bench_surface.py [--sizes 64,128,192] [--repeats 3]
"""

import argparse
import time

import numpy as np

from packscan import surface


def sphere_field(n, r_frac=0.38):
    zz, yy, xx = np.mgrid[0:n, 0:n, 0:n].astype(np.float32)
    c = (n - 1) / 2.0
    d = np.sqrt((xx - c) ** 2 + (yy - c) ** 2 + (zz - c) ** 2)
    return np.ascontiguousarray(1000.0 + 100.0 * (n * r_frac - d), dtype=np.float32)


def blobs_field(n, seed=0):
    """A noisier, multi-component volume closer to real subvolume content."""
    rng = np.random.default_rng(seed)
    zz, yy, xx = np.mgrid[0:n, 0:n, 0:n].astype(np.float32)
    field = np.full((n, n, n), 500.0, dtype=np.float32)
    for _ in range(6):
        c = rng.uniform(0.2 * n, 0.8 * n, size=3)
        s = rng.uniform(0.08 * n, 0.22 * n, size=3)
        q = (((xx - c[0]) / s[0]) ** 2 + ((yy - c[1]) / s[1]) ** 2
             + ((zz - c[2]) / s[2]) ** 2)
        field += 900.0 * np.exp(-q).astype(np.float32)
    return np.ascontiguousarray(field)


def bench(vol, isolevel, impl, repeats):
    best = float("inf")
    mesh = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        mesh = surface.marching_cubes(vol, isolevel, impl=impl)
        best = min(best, time.perf_counter() - t0)
    return best, mesh


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="64,128,192")
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    if not surface.HAVE_COMPILED_KERNEL:
        print("compiled kernel not built; showing the fallback only")

    header = f"{'volume':>16} {'cells':>12} {'faces':>10}"
    impls = ["py"] + (["c"] if surface.HAVE_COMPILED_KERNEL else [])
    for impl in impls:
        header += f" {impl + ' [s]':>10}"
    if len(impls) == 2:
        header += f" {'speedup':>9}"
    print(header)

    for n in sizes:
        for name, vol, iso in (
            (f"sphere {n}^3", sphere_field(n), 1000.0),
            (f"blobs {n}^3", blobs_field(n), 1000.0),
        ):
            cells = (n + 1) ** 3
            times = {}
            faces = 0
            for impl in impls:
                times[impl], mesh = bench(vol, iso, impl, args.repeats)
                faces = mesh.n_faces
            line = f"{name:>16} {cells:>12,} {faces:>10,}"
            for impl in impls:
                line += f" {times[impl]:>10.3f}"
            if len(impls) == 2:
                line += f" {times['py'] / times['c']:>8.1f}x"
            print(line)


if __name__ == "__main__":
    main()
