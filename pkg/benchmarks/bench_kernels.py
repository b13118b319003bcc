"""Compare the compiled memory kernels with the pure-Python fallback.

    python benchmarks/bench_kernels.py --records 2000 --repeat 5
"""

import argparse
import statistics
import time

import numpy as np

from persistent_agent import _kernels_py
from persistent_agent.memory import DIM

try:
    from persistent_agent import _kernels
except ImportError:
    _kernels = None

WORDS = ("stress breathing page weather report scan ocr user docs notes tidy memory summary calm focus "
         "figures quarter extract click open wait search verify creed goal").split()


def corpus(n, rng):
    return [" ".join(rng.choice(WORDS, size=int(rng.integers(4, 24)))) for _ in range(n)]


def timed(fn, repeat):
    samples = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def bench(impl, texts, query, k, repeat):
    data = [t.encode() for t in texts]
    matrix = np.vstack([impl.embed_bytes(d, DIM) for d in data])
    q = impl.embed_bytes(query.encode(), DIM)
    ids = np.arange(1, len(texts) + 1, dtype=np.int64)
    scores = impl.cosine_scores(matrix, q)
    return {
        "embed": timed(lambda: [impl.embed_bytes(d, DIM) for d in data], repeat),
        "cosine": timed(lambda: impl.cosine_scores(matrix, q), repeat),
        "top_k": timed(lambda: impl.top_k(scores, ids, k), repeat),
    }, (matrix, scores, list(impl.top_k(scores, ids, k)))


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--records", type=int, default=2000)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("-k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    rng = np.random.default_rng(args.seed)
    texts = corpus(args.records, rng)
    query = " ".join(rng.choice(WORDS, size=6))

    py_times, py_out = bench(_kernels_py, texts, query, args.k, args.repeat)
    print(f"{args.records} records, dim {DIM}, k={args.k}, median of {args.repeat}")
    if _kernels is None:
        print("compiled kernels not built; python timings only")
        for name, t in py_times.items():
            print(f"{name:>8}  python {t * 1e3:9.3f} ms")
        return
    c_times, c_out = bench(_kernels, texts, query, args.k, args.repeat)
    same = (np.array_equal(py_out[0], c_out[0]) and np.array_equal(py_out[1], c_out[1])
            and py_out[2] == c_out[2])
    print(f"{'kernel':>8}  {'python':>12}  {'compiled':>12}  speedup")
    for name in py_times:
        print(f"{name:>8}  {py_times[name] * 1e3:9.3f} ms  {c_times[name] * 1e3:9.3f} ms  "
              f"{py_times[name] / c_times[name]:6.1f}x")
    print(f"outputs bit-identical: {same}")


if __name__ == "__main__":
    main()
