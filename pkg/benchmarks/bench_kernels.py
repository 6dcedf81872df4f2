"""Benchmark the convolution hot kernels: compiled extension vs numpy fallback.

Run:  python benchmarks/bench_kernels.py [--repeats N]
"""
import argparse
import time

import numpy as np

from pixeldefer.gridmath import backend
from pixeldefer.gridmath.backend import available_backends

SHAPES = [
    # (label, in_ch, out_ch, k, h, w) -- the shapes the segmentor actually runs
    ("enc1 1->8 3x3 64x64", 1, 8, 3, 64, 64),
    ("enc2 8->16 3x3 64x64", 8, 16, 3, 64, 64),
    ("route 16->4 1x1 64x64", 16, 4, 1, 64, 64),
    ("defer1 16->8 3x3 64x64", 16, 8, 3, 64, 64),
]


def time_call(fn, repeats):
    fn()  # warmup
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats * 1e3  # ms


def bench_kernels(repeats):
    rng = np.random.default_rng(0)
    rows = []
    for label, cin, cout, k, h, w in SHAPES:
        x = rng.normal(size=(cin, h, w))
        w4 = rng.normal(size=(cout, cin, k, k))
        b = rng.normal(size=cout)
        g = rng.normal(size=(cout, h, w))
        pad = k // 2
        for name, mod in available_backends().items():
            fwd = time_call(lambda: mod.conv2d_forward(x, w4, b, pad), repeats)
            gin = time_call(lambda: mod.conv2d_grad_input(g, w4, pad), repeats)
            gw = time_call(lambda: mod.conv2d_grad_kernel(g, x, k, k, pad), repeats)
            rows.append((label, name, fwd, gin, gw))
    return rows


def bench_training_step(repeats):
    """Full forward+backward+loss of the default net, per backend."""
    from pixeldefer import losses, model
    from pixeldefer.gridmath import Tape, ValueGrid
    from pixeldefer.losses import LossConfig

    rng = np.random.default_rng(1)
    net = model.DeferralNet(expert_count=3, height=64, width=64, seed=0)
    image = ValueGrid(rng.uniform(0, 1, size=(1, 64, 64)))
    truth = (rng.random((64, 64)) < 0.4).astype(np.uint8)
    preds = rng.integers(0, 2, size=(3, 64, 64)).astype(np.uint8)
    cfg = LossConfig()

    def step():
        net.zero_grads()
        tape = Tape()
        out = model.forward(net, image, tape)
        node, _, _ = losses.total_loss(tape, out, truth, preds, cfg)
        tape.backward(node)

    rows = []
    saved = (backend.conv2d_forward, backend.conv2d_grad_input,
             backend.conv2d_grad_kernel)
    try:
        for name, mod in available_backends().items():
            backend.conv2d_forward = mod.conv2d_forward
            backend.conv2d_grad_input = mod.conv2d_grad_input
            backend.conv2d_grad_kernel = mod.conv2d_grad_kernel
            rows.append((name, time_call(step, repeats)))
    finally:
        (backend.conv2d_forward, backend.conv2d_grad_input,
         backend.conv2d_grad_kernel) = saved
    return rows


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=50)
    args = parser.parse_args()

    print(f"default backend: {backend.BACKEND}")
    print(f"available: {', '.join(available_backends())}\n")

    print(f"{'kernel shape':28s} {'backend':9s} {'fwd ms':>8s} {'grad_in ms':>11s} "
          f"{'grad_w ms':>10s}")
    for label, name, fwd, gin, gw in bench_kernels(args.repeats):
        print(f"{label:28s} {name:9s} {fwd:8.3f} {gin:11.3f} {gw:10.3f}")

    print("\nfull training step (forward + losses + backward, 64x64, 3 experts):")
    for name, ms in bench_training_step(max(args.repeats // 5, 5)):
        print(f"  {name:9s} {ms:8.2f} ms")


if __name__ == "__main__":
    main()
