"""Run engine: backend selection, noise chunking, and optimizer drivers.

The inner loops are serial recurrences, but the noise is additive, so all
mini-batch noise means for a window of iterations can be pre-sampled in bulk
and the window advanced by a tight span kernel.  Two interchangeable span
backends exist:

- ``compiled``: the C-extension module (built from ``_kernels.pyx``);
- ``python``: pure numpy implementations of the same span contract.

Backends agree to float rounding (pinned at rtol 1e-9 by tests); results are
bitwise reproducible per backend because the chunk plan and the RNG draw
order are pure functions of the schedule — never of timing, worker count, or
backend availability.
"""

from __future__ import annotations

import math
import warnings
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .core import NoiseModel, Vector, as_vector
from .problems import KIND_IDS, KernelPayload
from .records import Recorder, RunRecord
from .schedules import ScheduleArrays, SGDConfig, SSTMConfig, sstm_schedule_arrays

try:  # compiled span kernels are optional; the python backend is complete
    from . import _kernels as _compiled
except ImportError:  # pragma: no cover - exercised only in no-compiler installs
    _compiled = None

# Bulk noise pre-sampling budget (draws per chunk).  Part of the determinism
# contract: changing it changes the RNG request layout, so it is a constant,
# not a tunable.
DRAWS_PER_CHUNK = 1 << 18

# Iterate norms beyond this mark a run as diverged (mirrored in the kernels).
DIVERGE_NORM = 1e30
_DIVERGE_NORM_SQ = DIVERGE_NORM * DIVERGE_NORM

_CLIP_CODES = {"none": 0, "norm": 1, "coord": 2}

_PIECEWISE_KIND = KIND_IDS["piecewise_linear_max"]


class BallExitWarning(RuntimeWarning):
    """An iterate left the stability ball the analysis confines it to."""


# ---------------------------------------------------------------------------
# Pure-python payload math (mirrors the compiled kernel dispatch exactly)
# ---------------------------------------------------------------------------


def payload_aux(payload: KernelPayload) -> NDArray[np.float64]:
    """Per-kind auxiliary data for the kernels (piece row norms, else empty)."""
    if payload.kind_id == _PIECEWISE_KIND:
        return np.linalg.norm(payload.matrix, axis=1)
    return np.empty(0)


def payload_objective(payload: KernelPayload, x: Vector) -> float:
    """f(x) evaluated from the flat payload (no python closures)."""
    kind = payload.kind_id
    u = x - payload.shift
    if kind == 0:  # quadratic
        return 0.5 * float(u @ (payload.matrix @ u))
    if kind == 1:  # power_norm
        r = float(np.linalg.norm(u))
        p = 1.0 + payload.p2
        return payload.p1 * r**p / p
    if kind == 2:  # huberized_norm
        r = float(np.linalg.norm(u))
        c, delta = payload.p1, payload.p2
        if r <= delta:
            return c * r * r / (2.0 * delta)
        return c * (r - delta / 2.0)
    if kind == 3:  # piecewise_linear_max
        return float(np.max(payload.matrix @ u))
    # kind == 4: quad_plus_norm
    r = float(np.linalg.norm(u))
    return 0.5 * payload.p1 * r * r + payload.p2 * r


def payload_gradient(
    payload: KernelPayload, aux: NDArray[np.float64], x: Vector
) -> Vector:
    """(Sub)gradient from the flat payload; minimum-norm choice at kinks."""
    kind = payload.kind_id
    u = x - payload.shift
    if kind == 0:
        return payload.matrix @ u
    if kind == 1:
        r = float(np.linalg.norm(u))
        if r == 0.0:
            return np.zeros_like(u)
        return payload.p1 * r ** (payload.p2 - 1.0) * u
    if kind == 2:
        r = float(np.linalg.norm(u))
        coef = payload.p1 / payload.p2 if r <= payload.p2 else payload.p1 / r
        return coef * u
    if kind == 3:
        vals = payload.matrix @ u
        vmax = float(vals.max())
        if vmax == 0.0:
            # Pieces vanish together only at the minimizer; 0 is the
            # minimum-norm subgradient there.
            return np.zeros_like(u)
        active = np.flatnonzero(vals == vmax)
        best = active[0] if active.size == 1 else active[np.argmin(aux[active])]
        return payload.matrix[best].copy()
    r = float(np.linalg.norm(u))
    if r == 0.0:
        return np.zeros_like(u)
    return (payload.p1 + payload.p2 / r) * u


# ---------------------------------------------------------------------------
# Pure-python span backend (same contract as the compiled kernels)
# ---------------------------------------------------------------------------


def _py_backend_name() -> str:
    return "python"


def _py_run_sgd_span(
    x, x_sum, mom, noise, k0, gamma, lam, clip_mode, momentum,
    kind, mat, shift, p1, p2, aux, x_star, f_star,
    rec_idx, out_gap, out_dist, grad, scratch, run_state,
):
    payload = KernelPayload(kind, mat, shift, p1, p2)
    n = noise.shape[0]
    ri, nrec = 0, rec_idx.shape[0]
    done = 0
    max_dist_sq = float(run_state[0])
    diverged = run_state[1] != 0.0
    for j in range(n):
        if diverged:
            break
        done += 1
        g = payload_gradient(payload, aux, x) + noise[j]
        if clip_mode == 1:
            gn = float(np.linalg.norm(g))
            if not math.isfinite(gn):
                diverged = True
                break
            if gn > lam:
                g *= lam / gn
        elif clip_mode == 2:
            np.clip(g, -lam, lam, out=g)
        if momentum > 0.0:
            mom *= momentum
            mom += g
            step = mom
        else:
            step = g
        x_sum += x
        x -= gamma * step
        diff = x - x_star
        ds = float(diff @ diff)
        if ds > max_dist_sq:
            max_dist_sq = ds
        if not math.isfinite(ds) or ds > _DIVERGE_NORM_SQ:
            diverged = True
            if ri < nrec and rec_idx[ri] == j:
                out_gap[ri] = math.inf
                out_dist[ri] = math.inf
                ri += 1
            break
        if ri < nrec and rec_idx[ri] == j:
            avg = x_sum / float(k0 + j + 1)
            out_gap[ri] = payload_objective(payload, avg) - f_star
            out_dist[ri] = ds
            ri += 1
    if diverged:
        out_gap[ri:] = math.inf
        out_dist[ri:] = math.inf
    run_state[0] = max_dist_sq
    run_state[1] = 1.0 if diverged else 0.0
    run_state[2] += float(done)
    return done


def _py_run_sstm_span(
    y, z, noise, alphas, a_prev, a_next, lams, cap,
    kind, mat, shift, p1, p2, aux, x_star, f_star,
    rec_idx, out_gap, out_dist, xbuf, grad, run_state,
):
    payload = KernelPayload(kind, mat, shift, p1, p2)
    n = noise.shape[0]
    ri, nrec = 0, rec_idx.shape[0]
    done = 0
    max_dist_sq = float(run_state[0])
    diverged = run_state[1] != 0.0
    for j in range(n):
        if diverged:
            break
        done += 1
        w = a_prev[j] / a_next[j]
        if w > cap:
            w = cap
        cw = 1.0 - w
        np.multiply(y, w, out=xbuf)
        xbuf += cw * z
        g = payload_gradient(payload, aux, xbuf) + noise[j]
        gn = float(np.linalg.norm(g))
        if not math.isfinite(gn):
            diverged = True
            break
        if gn > lams[j]:
            g *= lams[j] / gn
        z -= alphas[j] * g
        np.multiply(y, w, out=y)
        y += cw * z
        diff = z - x_star
        ds = float(diff @ diff)
        if ds > max_dist_sq:
            max_dist_sq = ds
        if not math.isfinite(ds) or ds > _DIVERGE_NORM_SQ:
            diverged = True
            if ri < nrec and rec_idx[ri] == j:
                out_gap[ri] = math.inf
                out_dist[ri] = math.inf
                ri += 1
            break
        if ri < nrec and rec_idx[ri] == j:
            out_gap[ri] = payload_objective(payload, y) - f_star
            out_dist[ri] = ds
            ri += 1
    if diverged:
        out_gap[ri:] = math.inf
        out_dist[ri:] = math.inf
    run_state[0] = max_dist_sq
    run_state[1] = 1.0 if diverged else 0.0
    run_state[2] += float(done)
    return done


class _PythonBackend:
    backend_name = staticmethod(_py_backend_name)
    run_sgd_span = staticmethod(_py_run_sgd_span)
    run_sstm_span = staticmethod(_py_run_sstm_span)


_python_backend = _PythonBackend()


def available_backends() -> tuple[str, ...]:
    """Names of usable span backends, preferred first."""
    return ("compiled", "python") if _compiled is not None else ("python",)


def default_backend() -> str:
    return available_backends()[0]


def _resolve_backend(backend: str | None):
    name = default_backend() if backend is None else backend
    if name == "python":
        return _python_backend
    if name == "compiled":
        if _compiled is None:
            raise ValueError(
                "compiled backend requested but the extension module is not "
                "built; available: ('python',)"
            )
        return _compiled
    raise ValueError(f"unknown backend {name!r}; available: {available_backends()}")


# ---------------------------------------------------------------------------
# Noise chunk planning
# ---------------------------------------------------------------------------


def chunk_spans(
    ms: NDArray[np.int64] | Sequence[int], budget: int = DRAWS_PER_CHUNK
) -> list[tuple[int, int]]:
    """Partition iterations into contiguous spans of at most `budget` draws.

    Greedy left-to-right packing; an iteration whose own batch exceeds the
    budget gets a singleton span (its draws are then sub-chunked during
    sampling).  The plan depends only on the batch sizes and the budget, so
    the RNG request sequence is schedule-determined.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    sizes = np.asarray(ms, dtype=np.int64)
    spans: list[tuple[int, int]] = []
    start, acc = 0, 0
    for i in range(sizes.shape[0]):
        mi = int(sizes[i])
        if i > start and acc + mi > budget:
            spans.append((start, i))
            start, acc = i, 0
        acc += mi
    if sizes.shape[0] > 0:
        spans.append((start, sizes.shape[0]))
    return spans


def noise_batch_means(
    noise: NoiseModel,
    rng: np.random.Generator,
    ms: NDArray[np.int64],
    budget: int = DRAWS_PER_CHUNK,
) -> NDArray[np.float64]:
    """Noise means for one span of consecutive mini-batches, shape (len, dim).

    A singleton span whose batch exceeds the budget is accumulated in fixed
    sub-chunks of `budget` draws (plus a remainder), keeping both memory and
    the draw-request layout deterministic.
    """
    ms = np.asarray(ms, dtype=np.int64)
    if noise.sigma == 0.0:
        return np.zeros((ms.shape[0], noise.dim))
    if ms.shape[0] == 1 and int(ms[0]) > budget:
        m = int(ms[0])
        acc = np.zeros(noise.dim)
        left = m
        while left > 0:
            take = min(budget, left)
            acc += noise.sample(rng, take).sum(axis=0)
            left -= take
        return (acc / m)[None, :]
    return noise.batch_means(rng, ms)


# ---------------------------------------------------------------------------
# Run drivers
# ---------------------------------------------------------------------------


def _initial_row(
    payload: KernelPayload, x0: Vector, x_star: Vector, f_star: float
) -> tuple[float, float]:
    diff = x0 - x_star
    return payload_objective(payload, x0) - f_star, float(diff @ diff)


def _warn_ball_exit(max_dist: float, radius: float | None, label: str) -> None:
    if radius is not None and max_dist > radius:
        warnings.warn(
            f"{label} travelled {max_dist:.6g} from the minimizer, beyond the "
            f"stability radius {radius:.6g}; the high-probability analysis does "
            "not cover this trajectory",
            BallExitWarning,
            stacklevel=3,
        )


def run_sgd_engine(
    payload: KernelPayload,
    x_star: Vector,
    f_star: float,
    noise: NoiseModel,
    cfg: SGDConfig,
    x0: Vector,
    rng: np.random.Generator,
    *,
    record: bool = True,
    backend: str | None = None,
    warn_radius: float | None = None,
) -> tuple[Vector, RunRecord]:
    """Run averaged (clipped) SGD for cfg.N steps; returns (average, record).

    The trajectory rows hold the running average's optimality gap and the
    current iterate's squared distance; the returned point is the average of
    iterates x^0 .. x^{N-1}.  Divergence (non-finite or > 1e30 iterate norm)
    stops the run: remaining rows and terminal fields are +inf and the record
    is flagged, never raised.
    """
    impl = _resolve_backend(backend)
    d = x_star.shape[0]
    x = as_vector(x0, d).copy()
    x_sum = np.zeros(d)
    mom = np.zeros(d)
    aux = payload_aux(payload)
    clip_code = _CLIP_CODES[cfg.clip_mode]
    rec = Recorder(cfg.N, enabled=record)
    gap0, dist0_sq = _initial_row(payload, x, x_star, f_star)
    if rec.wants(0):
        rec.add(0, 0, gap0, dist0_sq)
    run_state = np.array([dist0_sq, 0.0, 0.0])
    ms = np.full(cfg.N, cfg.m, dtype=np.int64)
    grad = np.empty(d)
    scratch = np.empty(d)
    for start, stop in chunk_spans(ms):
        means = noise_batch_means(noise, rng, ms[start:stop])
        targets = rec.targets_in(start, stop)
        rec_off = targets - start - 1
        out_gap = np.empty(targets.shape[0])
        out_dist = np.empty(targets.shape[0])
        done = impl.run_sgd_span(
            x, x_sum, mom, means, start, cfg.gamma, cfg.lam, clip_code,
            cfg.momentum, payload.kind_id, payload.matrix, payload.shift,
            payload.p1, payload.p2, aux, x_star, f_star,
            rec_off, out_gap, out_dist, grad, scratch, run_state,
        )
        k_done = start + done
        if targets.shape[0]:
            calls = cfg.m * np.minimum(targets, k_done)
            rec.record_span(targets, calls, out_gap, out_dist)
        if run_state[1] != 0.0:
            tail = rec.targets_in(stop, cfg.N)
            if tail.shape[0]:
                frozen = np.full(tail.shape[0], cfg.m * k_done, dtype=np.int64)
                inf_col = np.full(tail.shape[0], math.inf)
                rec.record_span(tail, frozen, inf_col, inf_col)
            break
    rec.max_dist_sq = float(run_state[0])
    rec.diverged = run_state[1] != 0.0
    steps = int(run_state[2])
    total_calls = cfg.m * steps
    if rec.diverged:
        x_out = x_sum / float(max(steps, 1))
        final_gap = math.inf
        final_dist_sq = math.inf
    else:
        x_out = x_sum / float(cfg.N)
        diff = x_out - x_star
        final_gap = payload_objective(payload, x_out) - f_star
        final_dist_sq = float(diff @ diff)
    _warn_ball_exit(math.sqrt(rec.max_dist_sq), warn_radius, "an SGD iterate")
    return x_out, rec.close(final_gap, final_dist_sq, total_calls)


def run_sstm_engine(
    payload: KernelPayload,
    x_star: Vector,
    f_star: float,
    noise: NoiseModel,
    cfg: SSTMConfig,
    x0: Vector,
    rng: np.random.Generator,
    *,
    record: bool = True,
    backend: str | None = None,
    warn_radius: float | None = None,
    arrays: ScheduleArrays | None = None,
) -> tuple[Vector, RunRecord]:
    """Run the clipped accelerated method for cfg.N steps; returns (output, record).

    Trajectory rows hold the output sequence's optimality gap and the mirror
    point's squared distance to the minimizer; the terminal distance field
    refers to the returned output point.  N = 0 returns the start point.
    Divergence is flagged, never raised.
    """
    impl = _resolve_backend(backend)
    d = x_star.shape[0]
    if arrays is None:
        arrays = sstm_schedule_arrays(cfg)
    y = as_vector(x0, d).copy()
    z = y.copy()
    aux = payload_aux(payload)
    rec = Recorder(cfg.N, enabled=record)
    gap0, dist0_sq = _initial_row(payload, y, x_star, f_star)
    if rec.wants(0):
        rec.add(0, 0, gap0, dist0_sq)
    if cfg.N == 0:
        rec.max_dist_sq = dist0_sq
        return y, rec.close(gap0, dist0_sq, 0)
    cum_calls = np.cumsum(arrays.ms)  # ms[0] = 0, so cum_calls[k] covers 1..k
    step_ms = arrays.ms[1:]
    cap = cfg.ak_ratio_cap if cfg.ak_ratio_cap is not None else 2.0
    run_state = np.array([dist0_sq, 0.0, 0.0])
    xbuf = np.empty(d)
    grad = np.empty(d)
    for start, stop in chunk_spans(step_ms):
        means = noise_batch_means(noise, rng, step_ms[start:stop])
        targets = rec.targets_in(start, stop)
        rec_off = targets - start - 1
        out_gap = np.empty(targets.shape[0])
        out_dist = np.empty(targets.shape[0])
        done = impl.run_sstm_span(
            y, z, means,
            arrays.alphas[start + 1 : stop + 1],
            arrays.As[start:stop],
            arrays.As[start + 1 : stop + 1],
            arrays.lams[start + 1 : stop + 1],
            cap, payload.kind_id, payload.matrix, payload.shift,
            payload.p1, payload.p2, aux, x_star, f_star,
            rec_off, out_gap, out_dist, xbuf, grad, run_state,
        )
        k_done = start + done
        if targets.shape[0]:
            calls = cum_calls[np.minimum(targets, k_done)]
            rec.record_span(targets, calls, out_gap, out_dist)
        if run_state[1] != 0.0:
            tail = rec.targets_in(stop, cfg.N)
            if tail.shape[0]:
                frozen = np.full(tail.shape[0], cum_calls[k_done], dtype=np.int64)
                inf_col = np.full(tail.shape[0], math.inf)
                rec.record_span(tail, frozen, inf_col, inf_col)
            break
    rec.max_dist_sq = float(run_state[0])
    rec.diverged = run_state[1] != 0.0
    steps = int(run_state[2])
    total_calls = int(cum_calls[steps])
    if rec.diverged:
        final_gap = math.inf
        final_dist_sq = math.inf
    else:
        diff = y - x_star
        final_gap = payload_objective(payload, y) - f_star
        final_dist_sq = float(diff @ diff)
    _warn_ball_exit(
        math.sqrt(rec.max_dist_sq), warn_radius, "the accelerated mirror point"
    )
    return y, rec.close(final_gap, final_dist_sq, total_calls)
