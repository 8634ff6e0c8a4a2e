"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--quick]

Each row reports the best of ``--repeat`` runs per backend. The last column is
the largest difference between the two backends' outputs (mismatch count for
integer outputs), so a speedup never hides a disagreement.
"""
import argparse
import timeit

import numpy as np

from brainmri import kernels
from brainmri.denoise import Bm3dProfile, bm3d
from brainmri.nnet import Conv2D


def _cases(quick):
    rng = np.random.default_rng(0)
    n = 8 if quick else 32
    side = 37 if quick else 75
    img = rng.random((96, 96))
    mask = rng.random((256, 256)) < 0.45
    act = rng.standard_normal((n, side + 1, side + 1, 16))
    mean, var = act.reshape(-1, 16).mean(0), act.reshape(-1, 16).var(0)
    inv_std = 1.0 / np.sqrt(var + 1e-8)
    gamma, beta = rng.uniform(0.5, 1.5, 16), rng.uniform(-0.5, 0.5, 16)
    out, arg = kernels.bn_relu_pool_forward(act, mean, inv_std, gamma, beta, 2)
    grad = rng.standard_normal(out.shape)
    xp = np.pad(rng.standard_normal((n, side, side, 8)), ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = kernels.im2col(xp, 3, 3, 1, side, side)
    small = rng.random((48, 48)) if quick else rng.random((96, 96))
    conv_x = rng.standard_normal((n, side, side, 8))

    def conv_step(backend):
        saved = kernels._impl
        kernels._impl = kernels.get_backend(backend)
        try:
            layer = Conv2D(8, 16, 3, rng=np.random.default_rng(1))
            y = layer.forward(conv_x, training=True)
            return layer.backward(np.ones_like(y))
        finally:
            kernels._impl = saved

    return [
        ("window_distances 96x96, 39x39 window", lambda b: kernels.window_distances(img, 40, 40, 8, 20, 58, 20, 58, backend=b)),
        ("label_components 256x256", lambda b: kernels.label_components(mask, 8, backend=b)),
        ("channel_stats", lambda b: kernels.channel_stats(act, backend=b)),
        ("bn_relu_pool forward", lambda b: kernels.bn_relu_pool_forward(act, mean, inv_std, gamma, beta, 2, backend=b)),
        ("bn_relu_pool backward", lambda b: kernels.bn_relu_pool_backward(grad, arg, act, mean, inv_std, gamma, 2, True, backend=b)),
        ("im2col 3x3", lambda b: kernels.im2col(xp, 3, 3, 1, side, side, backend=b)),
        ("col2im 3x3", lambda b: kernels.col2im(cols, xp.shape, 3, 3, 1, side, side, backend=b)),
        ("conv 3x3 forward+backward", conv_step),
        (f"bm3d {small.shape[0]}x{small.shape[1]}", lambda b: bm3d(small, Bm3dProfile(sigma=0.1), backend=b)),
    ]


def _max_diff(a, b):
    if isinstance(a, tuple):
        return max(_max_diff(x, y) for x, y in zip(a, b))
    a, b = np.asarray(a), np.asarray(b)
    if a.dtype == bool or np.issubdtype(a.dtype, np.integer):
        return float(np.count_nonzero(a != b))
    return float(np.max(np.abs(a - b), initial=0.0))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--quick", action="store_true", help="smaller inputs")
    args = parser.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled extension not built; only the numpy fallback is available")
    print(f"{'kernel':<40}" + "".join(f"{b + ' ms':>14}" for b in backends) + f"{'speedup':>10}  max |diff|")
    for name, fn in _cases(args.quick):
        times, outs = {}, {}
        for b in backends:
            outs[b] = fn(b)
            times[b] = min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat)) * 1e3
        row = f"{name:<40}" + "".join(f"{times[b]:>14.2f}" for b in backends)
        if len(backends) == 2:
            row += f"{times['python'] / times['cython']:>9.1f}x  {_max_diff(outs['python'], outs['cython']):.1e}"
        print(row)


if __name__ == "__main__":
    main()
