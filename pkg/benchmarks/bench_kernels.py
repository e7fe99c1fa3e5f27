"""Compare the compiled and numpy statevector kernels.

Usage: python3 benchmarks/bench_kernels.py [--qubits 10 14 18] [--repeat 5]
"""
import argparse
import time

import numpy as np

from qfedgd import _backend
from qfedgd.qsim import StateVector, apply_qft


def _random_state(n, rng):
    a = rng.standard_normal(1 << n) + 1j * rng.standard_normal(1 << n)
    return a / np.linalg.norm(a)


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(n, repeat, rng):
    amps = _random_state(n, rng)
    h = np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2)
    u2 = np.linalg.qr(rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)))[0]
    targets = np.array([0, n - 1], dtype=np.int64)
    perm = rng.permutation(1 << n).astype(np.int64)
    qubits = np.arange(min(n, 6), dtype=np.int64)
    rows = {}
    for name in ("python", "cython"):
        _backend.use(name)
        k = _backend.kernels
        s = amps.copy()
        rows[name] = {
            "apply_1q": _time(lambda: [k.apply_1q(s, h, q, 0, 0) for q in range(n)], repeat),
            "apply_kq": _time(lambda: k.apply_kq(s, u2, targets, 0, 0), repeat),
            "permute": _time(lambda: k.permute(s, perm), repeat),
            "register_probs": _time(lambda: k.register_probs(s, qubits), repeat),
            "qft": _time(lambda: apply_qft(_qft(amps, n), "r"), repeat),
        }
    return rows


def _qft(amps, n):
    s = StateVector.zeros({"r": n})
    s.amplitudes = amps.copy()
    return s


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--qubits", type=int, nargs="+", default=[10, 14, 18])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    try:
        _backend.use("cython")
    except ImportError:
        raise SystemExit("compiled kernels are not built; run `pip install -e .` first")
    rng = np.random.default_rng(0)
    print(f"{'qubits':>6} {'kernel':>15} {'python [s]':>12} {'cython [s]':>12} {'speedup':>8}")
    for n in args.qubits:
        rows = bench(n, args.repeat, rng)
        for kernel in rows["python"]:
            tp, tc = rows["python"][kernel], rows["cython"][kernel]
            print(f"{n:>6} {kernel:>15} {tp:>12.5f} {tc:>12.5f} {tp / tc:>8.1f}")


if __name__ == "__main__":
    main()
