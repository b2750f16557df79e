"""Compare the compiled kernel core against the pure Python fallback.

Run from the repository root:

    python3 benchmarks/bench_kernels.py

Covers the two hot paths (skip-gram inner loop, fused LSTM gates) plus an
end-to-end training step through the public API with each backend forced
via SONGSMITH_KERNELS.
"""

import os
import subprocess
import sys
import time
import timeit

import numpy as np


def bench_lstm_gates():
    from songsmith.kernels import _slow
    try:
        from songsmith.kernels import _fast
    except ImportError:
        print("compiled kernels not built; run: python3 setup.py build_ext --inplace")
        return

    rng = np.random.default_rng(0)
    pre = rng.normal(size=(64, 512))
    c_prev = rng.normal(size=(64, 128))
    d_out = rng.normal(size=(64, 256))

    rows = []
    for name, mod in (("python", _slow), ("c", _fast)):
        fwd = timeit.timeit(lambda: mod.lstm_gates_forward(pre, c_prev), number=200) / 200
        _, cache = mod.lstm_gates_forward(pre, c_prev)
        bwd = timeit.timeit(lambda: mod.lstm_gates_backward(cache, d_out), number=200) / 200
        rows.append((name, fwd, bwd))
    out_s, _ = _slow.lstm_gates_forward(pre, c_prev)
    out_f, _ = _fast.lstm_gates_forward(pre, c_prev)
    print("\nlstm gates (64x128), 200 reps")
    for name, fwd, bwd in rows:
        print(f"  {name:7s} forward {fwd * 1e6:8.1f} us   backward {bwd * 1e6:8.1f} us")
    print(f"  speedup forward: {rows[0][1] / rows[1][1]:.1f}x, "
          f"max |diff| {np.abs(out_s - out_f).max():.2e}")


def bench_sgns():
    from songsmith.kernels import _slow
    try:
        from songsmith.kernels import _fast
    except ImportError:
        return

    rng = np.random.default_rng(1)
    v, d, n = 500, 10, 20_000
    centers = rng.integers(0, v, size=n).astype(np.int32)
    contexts = rng.integers(0, v, size=n).astype(np.int32)
    cum = np.cumsum(rng.uniform(0.5, 2.0, size=v))

    print(f"\nskip-gram epoch ({n} pairs, 5 negatives, dim {d})")
    results = {}
    for name, mod in (("python", _slow), ("c", _fast)):
        syn0 = rng.uniform(-0.05, 0.05, size=(v, d))
        syn1 = np.zeros((v, d))
        t0 = time.perf_counter()
        loss, _ = mod.sgns_epoch(centers, contexts, syn0, syn1, cum, 5, 0.025, 42)
        dt = time.perf_counter() - t0
        results[name] = dt
        print(f"  {name:7s} {dt * 1e3:8.1f} ms   loss {loss:.3f}")
    print(f"  speedup: {results['python'] / results['c']:.0f}x")


def bench_training_step():
    """Full training step per backend, forced via the environment switch."""
    script = (
        "import time, numpy as np\n"
        "from songsmith import KERNEL_BACKEND\n"
        "from songsmith.gan import AttributeVocab\n"
        "from songsmith.lyrics import tokenize_lyrics\n"
        "from songsmith.training import Corpus, CorpusEntry, TrainConfig, train\n"
        "vocab = AttributeVocab([60, 64, 67], [1.0], [0.0])\n"
        "seq = tokenize_lyrics('la la la la')\n"
        "melody = np.zeros((4, 3), dtype=int)\n"
        "corpus = Corpus([CorpusEntry(seq, melody.copy()) for _ in range(8)], vocab)\n"
        "cfg = TrainConfig(steps=30, batch_size=8, hidden_size=32, proj_size=16,\n"
        "                  noise_dim=8, lstm_layers=1, q_hidden=32,\n"
        "                  checkpoint_interval=30, sg_epochs=2, sg_negatives=1)\n"
        "t0 = time.perf_counter(); train(corpus, cfg)\n"
        "dt = (time.perf_counter() - t0) / cfg.steps\n"
        "print(f'  {KERNEL_BACKEND:7s} {dt * 1e3:8.1f} ms per training step')\n"
    )
    print("\nend-to-end training step (batch 8, hidden 32)")
    for backend in ("py", "c"):
        env = dict(os.environ, SONGSMITH_KERNELS=backend)
        proc = subprocess.run([sys.executable, "-c", script], env=env,
                              capture_output=True, text=True)
        out = proc.stdout.strip()
        print(out if out else f"  {backend}: failed\n{proc.stderr[-400:]}")


if __name__ == "__main__":
    bench_sgns()
    bench_lstm_gates()
    bench_training_step()
