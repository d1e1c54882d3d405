"""Backend micro-benchmark: compiled step kernels vs the pure-Python twins.

Run as ``python -m heavytail_opt.benchmark``.  Times full optimizer runs
(noise pre-sampling included) on a quadratic instance for every available
backend, checks that the backends agree on the final objective gap, and
prints steps/second plus the speedup of the compiled extension when present.
"""

from __future__ import annotations

import argparse
import math
import time

import numpy as np

from ._engine import available_backends
from .problems import ProblemSpec, make_noise, make_problem_with_payload
from .schedules import SGDConfig, SSTMConfig
from .sgd import run_clipped_sgd
from .sstm import run_sstm


def _sgd_config(n_steps: int) -> SGDConfig:
    return SGDConfig(
        gamma=0.05, lam=5.0, m=1, N=n_steps, nu=1.0, m_nu=1.0,
        eps=1e-3, beta=0.1, r0=1.0, sigma=1.0,
    )


def _sstm_config(n_steps: int) -> SSTMConfig:
    ln_fac = math.log(4.0 * n_steps / 0.1)
    a = 16384.0 * ln_fac**2
    return SSTMConfig(
        a=a, alpha0=1.0 / (2.0 * a), B=math.sqrt(7.0) / (16.0 * ln_fac),
        nu=1.0, m_nu=1.0, eps=1e-3, beta=0.1, r0=1.0, sigma=1.0, N=n_steps,
    )


def _time_run(fn, repeats: int) -> float:
    best = math.inf
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def run_benchmark(dim: int, n_steps: int, repeats: int) -> None:
    spec = ProblemSpec(kind="quadratic", dim=dim, eig_min=0.5, eig_max=2.0, seed=7)
    p, payload = make_problem_with_payload(spec)
    noise = make_noise("student_t", 1.0, 3.0, dim)
    x0 = p.x_star + np.ones(dim) / math.sqrt(dim)
    backends = available_backends()
    print(f"backends: {', '.join(backends)}")
    print(f"problem: {dim}-D quadratic, {n_steps} steps, best of {repeats}")

    for label, runner, cfg in (
        ("clipped-SGD ", run_clipped_sgd, _sgd_config(n_steps)),
        ("clipped-SSTM", run_sstm, _sstm_config(n_steps)),
    ):
        times: dict[str, float] = {}
        gaps: dict[str, float] = {}
        for backend in backends:
            def one_run() -> None:
                rng = np.random.default_rng(12345)
                x, _ = runner(
                    cfg, p, noise, x0, rng,
                    record=False, payload=payload, backend=backend,
                    warn_radius=math.inf,
                )
                gaps[backend] = p.gap(x)

            times[backend] = _time_run(one_run, repeats)
            print(
                f"  {label} [{backend:8s}]: {times[backend]:8.3f} s "
                f"({n_steps / times[backend]:>12,.0f} steps/s), "
                f"final gap {gaps[backend]:.6e}"
            )
        if len(backends) == 2:
            ref = max(gaps["compiled"], 1e-300)
            rel = abs(gaps["compiled"] - gaps["python"]) / ref
            print(
                f"  {label} speedup: {times['python'] / times['compiled']:.1f}x, "
                f"backend gap agreement: {rel:.2e} relative"
            )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dim", type=int, default=20)
    parser.add_argument("--steps", type=int, default=20000)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args(argv)
    run_benchmark(args.dim, args.steps, args.repeats)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
