"""Clipped accelerated method (similar-triangles scheme) and its restarted wrapper.

Three layers:

- :func:`sstm_step`: single validated step, driven by an explicit schedule
  entry.  The readable reference semantics — used for hand-checked examples
  and property tests.
- :func:`run_sstm`: full run.  With a :class:`~heavytail_opt.problems.KernelPayload`
  it dispatches to the chunked span engine (compiled or pure-python backend);
  without one it runs a reference loop over the problem's python callables
  using the same noise chunk plan, so both paths consume identical RNG
  streams.
- :func:`run_restarted_sstm`: chains stages of a restart plan for strongly
  convex problems, halving the distance target per stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._engine import (
    DIVERGE_NORM,
    chunk_spans,
    noise_batch_means,
    run_sstm_engine,
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
)
from .problems import KernelPayload
from .records import Recorder, RestartResult, RunRecord, chain_restart_stages
from .schedules import (
    RestartPlan,
    ScheduleEntry,
    SSTMConfig,
    sstm_schedule_arrays,
)

# Mirror-sequence stability radius from the analysis: successful runs keep
# z^k within 3 r0 of the minimizer.
STABILITY_RADIUS_FACTOR = 3.0

_DIVERGE_SQ = DIVERGE_NORM * DIVERGE_NORM


@dataclass(frozen=True)
class SSTMState:
    """State after k steps of the accelerated method.

    ``x`` is the extrapolation point the last gradient was taken at, ``y`` the
    output sequence, ``z`` the mirror sequence, ``A`` the cumulative stepsize
    weight.  At k = 0 all three points coincide with the start point.
    """

    k: int
    x: Vector
    y: Vector
    z: Vector
    A: float
    oracle_calls: int = 0

    @classmethod
    def initial(cls, x0: Vector) -> "SSTMState":
        x0 = as_vector(x0)
        return cls(k=0, x=x0.copy(), y=x0.copy(), z=x0.copy(), A=0.0)


def _combination_weight(
    a_prev: float, a_next: float, cap: float | None
) -> tuple[float, float]:
    """Weight pair (w, 1-w) for mixing the output and mirror sequences.

    The complementary weight is 1 - w exactly, so the pair always forms a
    convex combination even when the cap replaces w.
    """
    w = a_prev / a_next
    if cap is not None and w > cap:
        w = cap
    return w, 1.0 - w


def sstm_step(
    state: SSTMState,
    entry: ScheduleEntry,
    p: ProblemInstance,
    noise: NoiseModel,
    rng: np.random.Generator,
    ak_ratio_cap: float | None = None,
) -> SSTMState:
    """One step k -> k+1 driven by schedule row ``entry`` (entry.k = k+1).

    Computes the extrapolation point, draws a batch of ``entry.m_k`` oracle
    samples there, clips the batch mean at ``entry.lambda_k``, then updates
    the mirror and output sequences.  Raises
    :class:`~heavytail_opt.core.IterateDivergedError` if an update produces a
    non-finite iterate.
    """
    if entry.k != state.k + 1:
        raise ValueError(
            f"schedule entry k={entry.k} does not follow state k={state.k}"
        )
    if not entry.alpha_k > 0.0:
        raise ValueError(f"entry {entry.k} has alpha_k = {entry.alpha_k}; need > 0")
    a_next = state.A + entry.alpha_k
    w, cw = _combination_weight(state.A, a_next, ak_ratio_cap)
    x_next = w * state.y + cw * state.z
    sample = batched_stochastic_gradient(p, noise, x_next, entry.m_k, rng)
    g_hat = clip(sample.value, entry.lambda_k)
    z_next = state.z - entry.alpha_k * g_hat
    y_next = w * state.y + cw * z_next
    if not (np.all(np.isfinite(z_next)) and np.all(np.isfinite(y_next))):
        raise IterateDivergedError(entry.k, "mirror or output point non-finite")
    return SSTMState(
        k=entry.k,
        x=x_next,
        y=y_next,
        z=z_next,
        A=a_next,
        oracle_calls=state.oracle_calls + sample.oracle_calls_consumed,
    )


def _reference_run(
    cfg: SSTMConfig,
    p: ProblemInstance,
    noise: NoiseModel,
    x0: Vector,
    rng: np.random.Generator,
    record: bool,
    warn_radius: float | None,
) -> tuple[Vector, RunRecord]:
    """Chunked run over the problem's python callables (no payload needed)."""
    arrays = sstm_schedule_arrays(cfg)
    y = as_vector(x0, p.dim).copy()
    z = y.copy()
    rec = Recorder(cfg.N, enabled=record)
    diff = y - p.x_star
    dist_sq = float(diff @ diff)
    rec.max_dist_sq = dist_sq
    if rec.wants(0):
        rec.add(0, 0, p.gap(y), dist_sq)
    cum_calls = np.cumsum(arrays.ms)
    cap = cfg.ak_ratio_cap
    steps = 0
    diverged = False
    for start, stop in chunk_spans(arrays.ms[1:]):
        means = noise_batch_means(noise, rng, arrays.ms[1 + start : 1 + stop])
        for j in range(stop - start):
            k = start + j + 1
            steps += 1
            w, cw = _combination_weight(arrays.As[k - 1], arrays.As[k], cap)
            x = w * y + cw * z
            g = p.gradient(x) + means[j]
            gn = float(np.linalg.norm(g))
            if not math.isfinite(gn):
                diverged = True
                if rec.wants(k):
                    rec.add(k, int(cum_calls[k]), math.inf, math.inf)
                break
            lam = arrays.lams[k]
            if gn > lam:
                g *= lam / gn
            z = z - arrays.alphas[k] * g
            y = w * y + cw * z
            diff = z - p.x_star
            ds = float(diff @ diff)
            if ds > rec.max_dist_sq:
                rec.max_dist_sq = ds
            if not math.isfinite(ds) or ds > _DIVERGE_SQ:
                diverged = True
                if rec.wants(k):
                    rec.add(k, int(cum_calls[k]), math.inf, math.inf)
                break
            if rec.wants(k):
                rec.add(k, int(cum_calls[k]), p.gap(y), ds)
        if diverged:
            for k in rec.targets_in(steps, cfg.N):
                rec.add(int(k), int(cum_calls[steps]), math.inf, math.inf)
            break
    rec.diverged = diverged
    total_calls = int(cum_calls[steps])
    if diverged:
        final_gap = math.inf
        final_dist_sq = math.inf
    else:
        diff = y - p.x_star
        final_gap = p.gap(y)
        final_dist_sq = float(diff @ diff)
    _warn_ball_exit(
        math.sqrt(rec.max_dist_sq), warn_radius, "the accelerated mirror point"
    )
    return y, rec.close(final_gap, final_dist_sq, total_calls)


def run_sstm(
    cfg: SSTMConfig,
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
    """Run cfg.N steps of the clipped accelerated method; returns (y_N, record).

    Trajectory rows hold (iteration, cumulative oracle calls, output-sequence
    optimality gap, squared mirror-point distance); the terminal distance
    refers to the returned output point.  N = 0 returns the start point
    unchanged.  Divergence (non-finite iterate or norm above 1e30) flags the
    record — gap and remaining rows become +inf — and never raises.

    ``payload`` enables the span engine (``backend``: "compiled"/"python");
    without it a reference loop evaluates the problem's python callables with
    the identical noise chunk plan.  ``warn_radius`` overrides the stability
    radius (3 r0) beyond which a :class:`~heavytail_opt._engine.BallExitWarning`
    fires; pass ``math.inf`` to silence.  For problems without a known optimum
    set ``f_star = 0`` so the gap column records the raw objective.
    """
    if warn_radius is None:
        warn_radius = STABILITY_RADIUS_FACTOR * cfg.r0
    x0 = as_vector(x0, p.dim)
    if cfg.N == 0 or payload is None:
        return _reference_run(cfg, p, noise, x0, rng, record, warn_radius)
    return run_sstm_engine(
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


def run_restarted_sstm(
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

    Each stage restarts the method from the previous stage's output with its
    own (N_t, a_t, B_t, batch) parameters targeting eps_t = mu r0^2 / 2^(t+1).
    Requires the problem to actually certify the plan's strong convexity:
    ``p.mu >= plan.mu``.  A diverged stage ends the chain early.
    """
    if not plan.mu > 0.0:
        raise ValueError("restart plan requires mu > 0")
    if p.mu < plan.mu:
        raise ValueError(
            f"problem certifies mu = {p.mu}, below the plan's mu = {plan.mu}"
        )
    x0 = as_vector(x0, p.dim)

    def run_stage(stage, x_start):
        return run_sstm(
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
