"""Clipped SGD with averaged output, its restarted wrapper, and baselines.

The analyzed method clips the mini-batch gradient at a fixed level coupled to
the stepsize and returns the average of the first N iterates.  Baseline modes
(no clipping, coordinate-wise clipping, heavy-ball momentum) share the same
driver but carry no guarantees — they exist to contrast behaviour under
heavy-tailed noise.

Layers mirror the accelerated module: :func:`sgd_step` is the validated
single-step reference, :func:`run_clipped_sgd` the full run (span engine when
given a payload, otherwise a reference loop over python callables with the
identical noise chunk plan), :func:`run_restarted_sgd` the stage chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._engine import (
    DIVERGE_NORM,
    chunk_spans,
    noise_batch_means,
    run_sgd_engine,
    _warn_ball_exit,
)
from .core import (
    IterateDivergedError,
    NoiseModel,
    ProblemInstance,
    Vector,
    as_vector,
    batched_stochastic_gradient,
    clip,
    clip_coordinates,
)
from .problems import KernelPayload
from .records import Recorder, RestartResult, RunRecord, chain_restart_stages
from .schedules import RestartPlan, SGDConfig

# Iterate stability radius from the analysis: successful runs keep x^k within
# 7 r0 of the minimizer.
STABILITY_RADIUS_FACTOR = 7.0

_DIVERGE_SQ = DIVERGE_NORM * DIVERGE_NORM


@dataclass(frozen=True)
class SGDState:
    """State after k steps: current iterate and pre-update iterate sum.

    ``x_sum`` equals the sum of iterates x^0 .. x^{k-1} (each added before
    its update), so the averaged output after N steps is ``x_sum / N``.
    """

    k: int
    x: Vector
    x_sum: Vector
    oracle_calls: int = 0
    momentum_buf: Vector | None = None

    @classmethod
    def initial(cls, x0: Vector) -> "SGDState":
        x0 = as_vector(x0)
        return cls(k=0, x=x0.copy(), x_sum=np.zeros_like(x0))


def _clipped_direction(g: Vector, cfg: SGDConfig) -> Vector:
    if cfg.clip_mode == "norm":
        return clip(g, cfg.lam)
    if cfg.clip_mode == "coord":
        return clip_coordinates(g, cfg.lam)
    return g


def sgd_step(
    state: SGDState,
    cfg: SGDConfig,
    p: ProblemInstance,
    noise: NoiseModel,
    rng: np.random.Generator,
) -> SGDState:
    """One step k -> k+1: batch gradient at x^k, clip, accumulate, move.

    Raises :class:`~heavytail_opt.core.IterateDivergedError` when the batch
    gradient or the updated iterate is non-finite — the expected failure mode
    of the unclipped baseline under heavy tails; run drivers record it as a
    diverged trial rather than failing.
    """
    sample = batched_stochastic_gradient(p, noise, state.x, cfg.m, rng)
    g = sample.value
    if not np.all(np.isfinite(g)):
        raise IterateDivergedError(state.k + 1, "batch gradient non-finite")
    g = _clipped_direction(g, cfg)
    if cfg.momentum > 0.0:
        buf = (
            cfg.momentum * state.momentum_buf + g
            if state.momentum_buf is not None
            else g.copy()
        )
        step_dir = buf
    else:
        buf = None
        step_dir = g
    x_next = state.x - cfg.gamma * step_dir
    if not np.all(np.isfinite(x_next)):
        raise IterateDivergedError(state.k + 1, "iterate non-finite")
    return SGDState(
        k=state.k + 1,
        x=x_next,
        x_sum=state.x_sum + state.x,
        oracle_calls=state.oracle_calls + sample.oracle_calls_consumed,
        momentum_buf=buf,
    )


def _reference_run(
    cfg: SGDConfig,
    p: ProblemInstance,
    noise: NoiseModel,
    x0: Vector,
    rng: np.random.Generator,
    record: bool,
    warn_radius: float | None,
) -> tuple[Vector, RunRecord]:
    """Chunked run over the problem's python callables (no payload needed)."""
    x = as_vector(x0, p.dim).copy()
    x_sum = np.zeros(p.dim)
    mom = np.zeros(p.dim)
    rec = Recorder(cfg.N, enabled=record)
    diff = x - p.x_star
    dist_sq = float(diff @ diff)
    rec.max_dist_sq = dist_sq
    if rec.wants(0):
        rec.add(0, 0, p.gap(x), dist_sq)
    ms = np.full(cfg.N, cfg.m, dtype=np.int64)
    steps = 0
    diverged = False
    for start, stop in chunk_spans(ms):
        means = noise_batch_means(noise, rng, ms[start:stop])
        for j in range(stop - start):
            k = start + j + 1
            steps += 1
            g = p.gradient(x) + means[j]
            if cfg.clip_mode == "norm":
                gn = float(np.linalg.norm(g))
                if not math.isfinite(gn):
                    diverged = True
                    if rec.wants(k):
                        rec.add(k, cfg.m * k, math.inf, math.inf)
                    break
                if gn > cfg.lam:
                    g *= cfg.lam / gn
            elif cfg.clip_mode == "coord":
                np.clip(g, -cfg.lam, cfg.lam, out=g)
            if cfg.momentum > 0.0:
                mom *= cfg.momentum
                mom += g
                step_dir = mom
            else:
                step_dir = g
            x_sum += x
            x = x - cfg.gamma * step_dir
            diff = x - p.x_star
            ds = float(diff @ diff)
            if ds > rec.max_dist_sq:
                rec.max_dist_sq = ds
            if not math.isfinite(ds) or ds > _DIVERGE_SQ:
                diverged = True
                if rec.wants(k):
                    rec.add(k, cfg.m * k, math.inf, math.inf)
                break
            if rec.wants(k):
                rec.add(k, cfg.m * k, p.gap(x_sum / float(k)), ds)
        if diverged:
            for k in rec.targets_in(steps, cfg.N):
                rec.add(int(k), cfg.m * steps, math.inf, math.inf)
            break
    rec.diverged = diverged
    total_calls = cfg.m * steps
    if diverged:
        x_out = x_sum / float(max(steps, 1))
        final_gap = math.inf
        final_dist_sq = math.inf
    else:
        x_out = x_sum / float(cfg.N)
        diff = x_out - p.x_star
        final_gap = p.gap(x_out)
        final_dist_sq = float(diff @ diff)
    _warn_ball_exit(math.sqrt(rec.max_dist_sq), warn_radius, "an SGD iterate")
    return x_out, rec.close(final_gap, final_dist_sq, total_calls)


def run_clipped_sgd(
    cfg: SGDConfig,
    p: ProblemInstance,
    noise: NoiseModel,
    x0: Vector,
    rng: np.random.Generator,
    *,
    record: bool = True,
    payload: KernelPayload | None = None,
    backend: str | None = None,
    warn_radius: float | None = None,
) -> tuple[Vector, RunRecord]:
    """Run cfg.N steps and return (averaged output, record).

    The output is the average of the pre-update iterates x^0 .. x^{N-1}; with
    N = 1 it is exactly the start point.  Trajectory rows hold (iteration,
    cumulative oracle calls, running-average optimality gap, squared iterate
    distance).  Divergence flags the record with +inf values instead of
    raising.  ``payload``/``backend`` select the span engine as in the
    accelerated module; ``warn_radius`` defaults to the stability radius 7 r0
    (pass ``math.inf`` to silence the warning).
    """
    if warn_radius is None:
        warn_radius = STABILITY_RADIUS_FACTOR * cfg.r0
    x0 = as_vector(x0, p.dim)
    if payload is None:
        return _reference_run(cfg, p, noise, x0, rng, record, warn_radius)
    return run_sgd_engine(
        payload,
        p.x_star,
        p.f_star,
        noise,
        cfg,
        x0,
        rng,
        record=record,
        backend=backend,
        warn_radius=warn_radius,
    )


def run_restarted_sgd(
    plan: RestartPlan,
    p: ProblemInstance,
    noise: NoiseModel,
    x0: Vector,
    rng: np.random.Generator,
    *,
    record: bool = True,
    payload: KernelPayload | None = None,
    backend: str | None = None,
) -> RestartResult:
    """Run the restart plan stage by stage; returns the chained result.

    Stage t restarts from the previous averaged output with its own
    (gamma_t, lambda_t, m_t, N_t) targeting eps_t = mu r0^2 / 2^(t+1).
    """
    if not plan.mu > 0.0:
        raise ValueError("restart plan requires mu > 0")
    if p.mu < plan.mu:
        raise ValueError(
            f"problem certifies mu = {p.mu}, below the plan's mu = {plan.mu}"
        )
    x0 = as_vector(x0, p.dim)

    def run_stage(stage, x_start):
        return run_clipped_sgd(
            stage.cfg,
            p,
            noise,
            x_start,
            rng,
            record=record,
            payload=payload,
            backend=backend,
            warn_radius=STABILITY_RADIUS_FACTOR * stage.r_eff,
        )

    return chain_restart_stages(plan, x0, run_stage)
