"""Compare the compiled and pure-Python kernel backends.

Times the forward pass, the loss/gradient pass and a short training run on
the same model and data for every available backend, checks that the
backends agree numerically, and prints a small table with speedups
relative to the pure-Python baseline.

Run from the repository root:

    python benchmarks/bench_backends.py
    python benchmarks/bench_backends.py --segments 8x64,8x96 --batch 256
"""

import argparse
import statistics
import time

import numpy as np

from adaskip import datasets, kernels, nnet, stochdepth


def parse_segments(text):
    """'5x32,5x48' -> ((5, 32), (5, 48))."""
    segments = []
    for part in text.split(","):
        blocks, width = part.lower().split("x")
        segments.append((int(blocks), int(width)))
    return tuple(segments)


def median_ms(fn, repeats):
    """Median wall time of fn() in milliseconds (one untimed warmup)."""
    fn()
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - t0) * 1e3)
    return statistics.median(samples)


def bench_backend(name, model, x, labels, train_ds, args):
    kernels.use_backend(name)
    mask = nnet.full_mask(model.spec)

    fwd = median_ms(lambda: nnet.forward(model, x, mask), args.repeats)
    grad = median_ms(lambda: nnet.loss_and_gradients(model, x, labels, mask),
                     args.repeats)

    cfg = stochdepth.TrainConfig(epochs=args.train_epochs, batch_size=args.batch,
                                 mode="stochastic", p_last=0.5, rng_seed=99)
    t0 = time.perf_counter()
    trained, history = stochdepth.train(model, train_ds, cfg)
    train_s = time.perf_counter() - t0

    logits = nnet.forward(model, x, mask)
    return {"forward_ms": fwd, "grad_ms": grad, "train_s": train_s,
            "final_loss": history[-1].loss, "logits": logits,
            "params": trained.params}


def main():
    parser = argparse.ArgumentParser(
        description="benchmark the available kernel backends")
    parser.add_argument("--segments", default="5x32,5x48",
                        help="model shape as BLOCKSxWIDTH[,BLOCKSxWIDTH...]")
    parser.add_argument("--dim", type=int, default=16, help="input dimension")
    parser.add_argument("--classes", type=int, default=4)
    parser.add_argument("--batch", type=int, default=128)
    parser.add_argument("--train-samples", type=int, default=1024)
    parser.add_argument("--train-epochs", type=int, default=3)
    parser.add_argument("--repeats", type=int, default=30,
                        help="timing repetitions per kernel call")
    args = parser.parse_args()

    backends = kernels.available_backends()
    spec = nnet.NetworkSpec(input_dim=args.dim, num_classes=args.classes,
                            segments=parse_segments(args.segments), init_seed=42)
    model = nnet.init_model(spec)
    gen = np.random.default_rng(7)
    x = gen.normal(size=(args.batch, args.dim))
    labels = gen.integers(0, args.classes, size=args.batch)
    train_ds = datasets.make_dataset("gaussian_mixture", args.train_samples,
                                     args.classes, args.dim, 0.3, seed=11,
                                     split="train")

    print(f"model: {args.segments} ({spec.num_blocks} blocks, "
          f"{sum(p.size for p in model.params)} parameters), "
          f"batch {args.batch}, backends: {', '.join(backends)}")

    results = {}
    for name in backends:
        results[name] = bench_backend(name, model, x, labels, train_ds, args)
    kernels.use_backend("auto")

    base = results["python"]
    header = f"{'backend':<10} {'forward ms':>11} {'grad ms':>9} {'train s':>9} " \
             f"{'fwd speedup':>12} {'grad speedup':>13}"
    print(header)
    print("-" * len(header))
    for name in backends:
        r = results[name]
        print(f"{name:<10} {r['forward_ms']:>11.3f} {r['grad_ms']:>9.3f} "
              f"{r['train_s']:>9.2f} {base['forward_ms'] / r['forward_ms']:>11.2f}x "
              f"{base['grad_ms'] / r['grad_ms']:>12.2f}x")

    for name, r in results.items():
        dl = np.abs(r["logits"] - base["logits"]).max()
        dp = max(np.abs(a - b).max()
                 for a, b in zip(r["params"], base["params"]))
        dloss = abs(r["final_loss"] - base["final_loss"])
        print(f"agreement {name} vs python: max |dlogits| {dl:.2e}, "
              f"max |dparams| after training {dp:.2e}, |dloss| {dloss:.2e}")


if __name__ == "__main__":
    main()
