"""Trajectory recording for optimizer runs.

Runs record (iteration, cumulative oracle calls, optimality gap, squared
distance to the minimizer) at a deterministic set of iterations: every
iteration for short runs, geometrically thinned for long ones so memory stays
bounded.  The record set is a pure function of the iteration count — never of
timing or worker scheduling — which keeps output files byte-stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

# Record every iteration up to this many; thin geometrically beyond.
DENSE_RECORD_LIMIT = 10_000
_THIN_BASE = 1.05


def record_iterations(n_total: int) -> NDArray[np.int64]:
    """Deterministic sorted set of iteration indices to record (0..n_total).

    Dense for runs of at most DENSE_RECORD_LIMIT iterations; otherwise index 0,
    the geometric grid ceil(1.05^j), and the final iteration.
    """
    if n_total < 0:
        raise ValueError("n_total must be >= 0")
    if n_total <= DENSE_RECORD_LIMIT:
        return np.arange(n_total + 1, dtype=np.int64)
    ks = {0, n_total}
    j = 0
    while True:
        k = math.ceil(_THIN_BASE**j)
        if k > n_total:
            break
        ks.add(k)
        j += 1
    return np.array(sorted(ks), dtype=np.int64)


@dataclass
class RunRecord:
    """Sampled trajectory of one run plus its terminal state."""

    iters: NDArray[np.int64]
    oracle_calls: NDArray[np.int64]
    f_gap: NDArray[np.float64]
    dist_sq: NDArray[np.float64]
    final_gap: float = math.nan
    final_dist_sq: float = math.nan
    total_oracle_calls: int = 0
    diverged: bool = False
    max_dist_from_xstar: float = 0.0


class Recorder:
    """Collects trajectory rows at a pre-computed set of iterations.

    The row set is fixed up front from the iteration count; `wants(k)` is an
    O(1) check the run loops consult.  `close()` freezes the arrays.
    """

    def __init__(self, n_total: int, enabled: bool = True):
        self.enabled = enabled
        self._targets = record_iterations(n_total) if enabled else np.empty(0, np.int64)
        self._target_set = set(int(k) for k in self._targets)
        self._iters: list[int] = []
        self._calls: list[int] = []
        self._gaps: list[float] = []
        self._dists: list[float] = []
        self.max_dist_sq = 0.0
        self.diverged = False

    def wants(self, k: int) -> bool:
        return self.enabled and k in self._target_set

    def add(self, k: int, oracle_calls: int, f_gap: float, dist_sq: float) -> None:
        self._iters.append(k)
        self._calls.append(oracle_calls)
        self._gaps.append(f_gap)
        self._dists.append(dist_sq)

    def record_span(
        self,
        ks: NDArray[np.int64],
        calls: NDArray[np.int64],
        gaps: NDArray[np.float64],
        dists: NDArray[np.float64],
    ) -> None:
        """Bulk append rows produced by a kernel span."""
        self._iters.extend(int(v) for v in ks)
        self._calls.extend(int(v) for v in calls)
        self._gaps.extend(float(v) for v in gaps)
        self._dists.extend(float(v) for v in dists)

    def targets_in(self, k_from: int, k_to: int) -> NDArray[np.int64]:
        """Record targets within the half-open global range (k_from, k_to]."""
        if not self.enabled:
            return np.empty(0, np.int64)
        lo = np.searchsorted(self._targets, k_from, side="right")
        hi = np.searchsorted(self._targets, k_to, side="right")
        return self._targets[lo:hi]

    def close(
        self,
        final_gap: float,
        final_dist_sq: float,
        total_oracle_calls: int,
    ) -> RunRecord:
        return RunRecord(
            iters=np.asarray(self._iters, dtype=np.int64),
            oracle_calls=np.asarray(self._calls, dtype=np.int64),
            f_gap=np.asarray(self._gaps, dtype=np.float64),
            dist_sq=np.asarray(self._dists, dtype=np.float64),
            final_gap=final_gap,
            final_dist_sq=final_dist_sq,
            total_oracle_calls=total_oracle_calls,
            diverged=self.diverged,
            max_dist_from_xstar=math.sqrt(self.max_dist_sq),
        )


@dataclass(frozen=True)
class StageOutcome:
    """Summary of one stage of a restarted run."""

    t: int  # 1-based stage index
    iterations: int
    oracle_calls: int  # calls consumed by this stage alone
    target_eps: float  # accuracy target the stage was parameterized for
    target_dist_sq: float  # distance-halving target r0^2 / 2^t
    final_gap: float
    final_dist_sq: float
    diverged: bool


@dataclass
class RestartResult:
    """Final output of a restarted run plus per-stage summaries."""

    x_hat: NDArray[np.float64]
    record: RunRecord
    stages: list[StageOutcome]

    @property
    def diverged(self) -> bool:
        return self.record.diverged


def chain_restart_stages(plan, x0, run_stage) -> RestartResult:
    """Drive a restart plan: each stage starts at the previous stage's output.

    ``run_stage(stage, x_start) -> (x_out, RunRecord)`` executes one stage.
    Iteration and oracle counters are shifted to cumulative values so the
    concatenated record reads as one continuous run; the duplicate stage-start
    row (iteration 0 of stages after the first) is dropped.  A diverged stage
    ends the chain.
    """
    x = x0
    parts: list[RunRecord] = []
    outcomes: list[StageOutcome] = []
    iter_off = 0
    call_off = 0
    for stage in plan.stages:
        x, rec = run_stage(stage, x)
        if stage.t > 1 and rec.iters.size and rec.iters[0] == 0:
            rec.iters = rec.iters[1:]
            rec.oracle_calls = rec.oracle_calls[1:]
            rec.f_gap = rec.f_gap[1:]
            rec.dist_sq = rec.dist_sq[1:]
        stage_calls = rec.total_oracle_calls
        rec.iters = rec.iters + iter_off
        rec.oracle_calls = rec.oracle_calls + call_off
        rec.total_oracle_calls += call_off
        parts.append(rec)
        outcomes.append(
            StageOutcome(
                t=stage.t,
                iterations=stage.cfg.N,
                oracle_calls=stage_calls,
                target_eps=stage.eps_t,
                target_dist_sq=plan.r0**2 / 2.0**stage.t,
                final_gap=rec.final_gap,
                final_dist_sq=rec.final_dist_sq,
                diverged=rec.diverged,
            )
        )
        iter_off += stage.cfg.N
        call_off = rec.total_oracle_calls
        if rec.diverged:
            break
    return RestartResult(x_hat=x, record=concat_records(parts), stages=outcomes)


def concat_records(parts: list[RunRecord]) -> RunRecord:
    """Concatenate stage records into one cumulative record.

    Iteration and oracle counters in `parts` are expected to be already
    cumulative (the restart driver offsets them); terminal fields come from
    the last stage, divergence/maximum-distance are folded across stages.
    """
    if not parts:
        raise ValueError("no records to concatenate")
    last = parts[-1]
    return RunRecord(
        iters=np.concatenate([p.iters for p in parts]),
        oracle_calls=np.concatenate([p.oracle_calls for p in parts]),
        f_gap=np.concatenate([p.f_gap for p in parts]),
        dist_sq=np.concatenate([p.dist_sq for p in parts]),
        final_gap=last.final_gap,
        final_dist_sq=last.final_dist_sq,
        total_oracle_calls=last.total_oracle_calls,
        diverged=any(p.diverged for p in parts),
        max_dist_from_xstar=max(p.max_dist_from_xstar for p in parts),
    )
