"""Time the compiled kernels against the NumPy fallback.

Run with ``python3 benchmarks/bench_kernels.py [--L 5] [--steps 2000]``.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from phasescope import kernels
from phasescope.model import ModelSpec, build_hamiltonian, build_measurement, coherence_operator, ground_state
from phasescope.trajectory import Scheme, integrate, standard_normals


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--L", type=int, default=5)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--repeats", type=int, default=3)
    args = p.parse_args(argv)

    backends = ["python"] + (["cython"] if kernels.compiled_backend is not None else [])
    spec = ModelSpec(args.L, args.L, u_over_j=2.0, measurement_kind="population")
    h, m = build_hamiltonian(spec), build_measurement(spec)
    psi0, coh = ground_state(h), coherence_operator(h.basis)
    xi = standard_normals(0, args.steps)
    print(f"dimension {h.dim}, {args.steps} steps, backends {backends}")

    cases = {
        "split_step": (Scheme.SPLIT_STEP, 0.01),
        "euler_maruyama": (Scheme.EULER_MARUYAMA, 5e-4),
    }
    rows = []
    for label, (scheme, dt) in cases.items():
        for name in backends:
            t = best_of(lambda: integrate(h, m, psi0, dt=dt, gamma=0.3, normals=xi, scheme=scheme,
                                          observables={"coh": coh}, references={"gs": psi0},
                                          log_stride=10, backend=name), args.repeats)
            rows.append((label, name, t))

    rng = np.random.default_rng(0)
    n = 20000
    c, w, a = rng.normal(size=n), rng.uniform(0.01, 2, n), rng.uniform(0, 1, n)
    grid = np.linspace(-40, 40, 4001)
    for name in backends:
        mod = kernels.get_backend(name)
        rows.append(("render_lorentzians", name, best_of(lambda: mod.render_lorentzians(c, w, a, grid), args.repeats)))

    print(f"{'kernel':<20}{'backend':<10}{'seconds':>10}{'speedup':>10}")
    base = {k: t for k, b, t in rows if b == "python"}
    for k, b, t in rows:
        print(f"{k:<20}{b:<10}{t:>10.4f}{base[k] / t:>10.2f}")


if __name__ == "__main__":
    main()
