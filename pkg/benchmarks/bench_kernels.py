"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--size 10000]

Each row reports the best wall time over ``--repeat`` runs for one kernel on
both backends, then the speed-up of the compiled version.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from forgetaudit import _backend


def cases(n):
    rng = np.random.default_rng(0)
    t = rng.dirichlet(np.ones(10), size=n)
    y = rng.integers(0, 10, n)
    a = np.sort(rng.beta(5, 1, n))
    b = np.sort(rng.beta(4, 1, n))
    a[: n // 4] = a[n // 4]  # a block of ties
    theta = rng.standard_normal(n)
    grad = rng.standard_normal(n)

    def prep(k):
        return k.ecdf_from_sorted(a), k.ecdf_from_sorted(b)

    return {
        "gather_true_class": lambda k: (lambda: k.gather_true_class(t, y)),
        "ecdf_from_sorted": lambda k: (lambda: k.ecdf_from_sorted(a)),
        "ks_sup": lambda k: (lambda e=prep(k): k.ks_sup(*e[0], *e[1])),
        "adam_update": lambda k: (
            lambda m=np.zeros(n), v=np.zeros(n), th=theta.copy():
            k.adam_update(th, grad, m, v, 1e-3, 0.5, 0.999, 1e-8, 0.5, 0.001)
        ),
        # Softmax regression on 10 features and 5 classes has 55 weights.
        "adam_update (n=55)": lambda k: (
            lambda m=np.zeros(55), v=np.zeros(55), th=theta[:55].copy(), g=grad[:55].copy():
            k.adam_update(th, g, m, v, 1e-3, 0.5, 0.999, 1e-8, 0.5, 0.001)
        ),
    }


def best(fn, repeat):
    number = max(1, int(0.05 / max(timeit.timeit(fn, number=1), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


AUDIT_SNIPPET = """
import time
from forgetaudit import audit as A, data as D, model as M
dom = D.DomainSpec.generate(5, 10, 1.0, 1.0, seed=1)
q = D.sample_domain(dom.provider(5.0, seed=7), 500, seed=2)
design = M.ClassifierConfig(10, 5, 0)
tcfg = M.TrainConfig(learning_rate=0.01, batch_size=32)
t = M.train(design.with_seed(3), D.sample_domain(dom, 2000, seed=4), tcfg)
start = time.perf_counter()
for s in range({runs}):
    A.run_audit(A.AuditInput(t, q, dom, design, tcfg, 2000, seed=s))
print((time.perf_counter() - start) / {runs})
"""


def audit_time(pure, runs):
    env = {**os.environ, "FORGETAUDIT_PURE_PYTHON": "1" if pure else "0"}
    out = subprocess.run(
        [sys.executable, "-c", AUDIT_SNIPPET.format(runs=runs)],
        env=env, capture_output=True, text=True, check=True,
    )
    return float(out.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--size", type=int, default=10_000, help="samples / weights per call")
    ap.add_argument("--audit-runs", type=int, default=3)
    args = ap.parse_args()

    if "cython" not in _backend.available():
        sys.exit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    py, cy = _backend.get("python"), _backend.get("cython")

    print(f"{'kernel':<22}{'python':>12}{'cython':>12}{'speed-up':>10}   (n={args.size})")
    for name, make in cases(args.size).items():
        tp = best(make(py), args.repeat)
        tc = best(make(cy), args.repeat)
        print(f"{name:<22}{tp * 1e6:>10.1f}us{tc * 1e6:>10.1f}us{tp / tc:>9.2f}x")

    tp = audit_time(True, args.audit_runs)
    tc = audit_time(False, args.audit_runs)
    print(f"{'full audit':<22}{tp * 1e3:>10.1f}ms{tc * 1e3:>10.1f}ms{tp / tc:>9.2f}x")


if __name__ == "__main__":
    main()
