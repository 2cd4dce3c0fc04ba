"""Wall-clock timing of segmentation and feature extraction by scene size."""
import argparse
import time

from obia.features import compute_features
from obia.scene import SceneSpec, generate_scene
from obia.segmentation import DEFAULT_PARAMS, segment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="128,256,512,1024")
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    # first call pays for JIT compilation
    segment(generate_scene(SceneSpec(width=64, height=64, seed=0))[0], DEFAULT_PARAMS)
    print(f"{'size':>6}{'segments':>10}{'segment s':>11}{'features s':>12}")
    for size in (int(s) for s in args.sizes.split(",")):
        raster, _ = generate_scene(SceneSpec(width=size, height=size, seed=0))
        seg_t, feat_t = [], []
        for _ in range(args.repeats):
            t0 = time.perf_counter()
            seg = segment(raster, DEFAULT_PARAMS)
            t1 = time.perf_counter()
            compute_features(raster, seg)
            seg_t.append(t1 - t0)
            feat_t.append(time.perf_counter() - t1)
        print(f"{size:>6}{seg.n_segments:>10}{min(seg_t):>11.3f}{min(feat_t):>12.3f}")


if __name__ == "__main__":
    main()
