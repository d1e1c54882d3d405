"""Dense vector math, the norm-clipping operator, and problem/oracle abstractions.

Everything downstream (schedules, optimizers, experiment harness) consumes the
types defined here.  Problems are plain float64 numpy functions with certified
smoothness metadata; stochastic gradients are produced by adding calibrated
isotropic noise to the exact gradient and averaging over a mini-batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol, TypeAlias

import numpy as np
from numpy.typing import NDArray

Vector: TypeAlias = NDArray[np.float64]

# Float comparison policy used by certificate-style checks throughout the
# package: relative tolerance with a small absolute floor.  Schedules involve
# fractional powers, so anything tighter produces false failures.
REL_TOL = 1e-9
ABS_TOL = 1e-12


class IterateDivergedError(RuntimeError):
    """An optimizer step produced a non-finite iterate.

    Carries the 1-based iteration index.  Expected behaviour for unclipped
    baselines under heavy-tailed noise; run drivers record the event as a
    diverged trial instead of letting it propagate.
    """

    def __init__(self, iteration: int, detail: str = ""):
        self.iteration = iteration
        msg = f"iterate became non-finite at iteration k={iteration}"
        super().__init__(msg + (f": {detail}" if detail else ""))


def as_vector(x, dim: int | None = None) -> Vector:
    """Coerce input to a C-contiguous float64 vector, validating finiteness."""
    v = np.ascontiguousarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise ValueError(f"expected dimension {dim}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector contains non-finite entries")
    return v


@dataclass(frozen=True)
class HolderSmoothness:
    """Certificate that a gradient map is Hölder continuous.

    ``||grad f(x) - grad f(y)|| <= m_nu * ||x - y||**nu`` for all x, y in the
    ball of radius ``radius`` around the minimizer.  ``nu = 1`` is Lipschitz
    smoothness, ``nu = 0`` means uniformly bounded (sub)gradient differences.
    ``radius`` may be ``math.inf`` for a globally valid certificate.
    """

    nu: float
    m_nu: float
    radius: float = math.inf

    def __post_init__(self) -> None:
        if not (0.0 <= self.nu <= 1.0):
            raise ValueError(f"nu must lie in [0, 1], got {self.nu}")
        if not (self.m_nu > 0.0 and math.isfinite(self.m_nu)):
            raise ValueError(f"m_nu must be positive and finite, got {self.m_nu}")
        if not self.radius > 0.0:
            raise ValueError(f"radius must be positive, got {self.radius}")


class NoiseModel(Protocol):
    """Additive isotropic gradient-noise source with exactly calibrated variance.

    Implementations promise ``E[sample] = 0`` and ``E[||sample||^2] = sigma**2``
    per draw.  All randomness comes from the caller-supplied generator; models
    hold no mutable state.
    """

    sigma: float
    dim: int

    def sample(self, rng: np.random.Generator, n: int) -> NDArray[np.float64]:
        """Draw ``n`` independent noise vectors, shape (n, dim)."""
        ...

    def batch_means(
        self, rng: np.random.Generator, batch_sizes: NDArray[np.int64]
    ) -> NDArray[np.float64]:
        """Per-batch noise means for a run of consecutive mini-batches."""
        ...


@dataclass(frozen=True)
class ProblemInstance:
    """A convex objective with exact minimizer and smoothness certificate.

    ``gradient`` returns a subgradient at non-differentiable points (the
    minimum-norm element at kinks, in particular 0 at the minimizer).  ``mu``
    is the strong-convexity modulus; exactly 0 for merely-convex instances.
    """

    dim: int
    objective: Callable[[Vector], float]
    gradient: Callable[[Vector], Vector]
    x_star: Vector
    f_star: float
    smoothness: HolderSmoothness
    mu: float = 0.0

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.mu < 0.0:
            raise ValueError("mu must be >= 0")
        object.__setattr__(self, "x_star", as_vector(self.x_star, self.dim))

    def gap(self, x: Vector) -> float:
        """Optimality gap f(x) - f_star (may be numerically tiny-negative)."""
        return float(self.objective(x)) - self.f_star


@dataclass(frozen=True)
class StochasticGradientSample:
    """One mini-batched stochastic gradient evaluation."""

    value: Vector
    batch_size: int
    oracle_calls_consumed: int

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.oracle_calls_consumed != self.batch_size:
            raise ValueError("oracle_calls_consumed must equal batch_size")


def clip(g: Vector, lam: float) -> Vector:
    """Norm clipping: ``g * min(1, lam / ||g||_2)``.

    Returns ``g`` unchanged (as a copy) when ``||g|| <= lam``; the zero vector
    maps to the zero vector (the scale factor is taken as 1 at ``||g|| = 0``).
    The result never has norm larger than ``lam`` and keeps the direction of g.
    """
    if not lam > 0.0:
        raise ValueError(f"clipping level must be positive, got {lam}")
    g = np.asarray(g, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise ValueError("cannot clip a non-finite vector")
    norm = float(np.linalg.norm(g))
    if math.isfinite(norm):
        if norm <= lam:
            return g.copy()
        return g * (lam / norm)
    # Entries near the float ceiling overflow the squared-sum norm; rescale
    # by the largest magnitude so the comparison and the scaling stay exact.
    top = float(np.max(np.abs(g)))
    unit = g / top
    unit_norm = float(np.linalg.norm(unit))
    if top <= lam / unit_norm:
        return g.copy()
    return unit * (lam / unit_norm)


def clip_coordinates(g: Vector, lam: float) -> Vector:
    """Coordinate-wise variant: each entry is clipped to [-lam, lam].

    Scalar form of the same formula applied per coordinate.  Provided as a
    baseline option only; none of the parameter schedules assume it.
    """
    if not lam > 0.0:
        raise ValueError(f"clipping level must be positive, got {lam}")
    g = np.asarray(g, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise ValueError("cannot clip a non-finite vector")
    return np.clip(g, -lam, lam)


def batched_stochastic_gradient(
    p: ProblemInstance,
    noise: NoiseModel,
    x: Vector,
    m: int,
    rng: np.random.Generator,
) -> StochasticGradientSample:
    """Average of ``m`` independent stochastic gradients at ``x``.

    The oracle model is additive: each draw is ``gradient(x) + noise``.  The
    estimate is unbiased with per-draw second moment sigma**2, so the batch
    variance is at most sigma**2 / m.
    """
    if m < 1:
        raise ValueError("batch size must be >= 1")
    x = as_vector(x, p.dim)
    g = p.gradient(x)
    if noise.sigma > 0.0:
        g = g + noise.sample(rng, m).mean(axis=0)
    return StochasticGradientSample(value=g, batch_size=m, oracle_calls_consumed=m)


# Default sampling radius for certificates that hold globally (radius = inf):
# checks need a bounded region to draw points from.
_GLOBAL_CERT_SAMPLE_RADIUS = 10.0


def _sample_in_ball(
    rng: np.random.Generator, center: Vector, radius: float, n: int
) -> NDArray[np.float64]:
    """Uniform-direction, power-law-radius points inside a ball (dense near
    the boundary and the center alike; exact distribution is immaterial for
    the checks below, coverage is what matters)."""
    d = center.shape[0]
    dirs = rng.standard_normal((n, d))
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    norms[norms < 1e-300] = 1.0
    radii = radius * rng.random(n) ** (1.0 / d)
    return center + radii[:, None] * (dirs / norms)


@dataclass(frozen=True)
class CertificateCheckResult:
    """Outcome of a smoothness-certificate probe."""

    ok: bool
    worst_ratio: float
    bound: float
    worst_pair: tuple[Vector, Vector] | None = None

    def __bool__(self) -> bool:  # allows `assert holder_certificate_check(...)`
        return self.ok


def holder_certificate_check(
    p: ProblemInstance,
    pairs: int,
    rng: np.random.Generator,
    rel_tol: float = REL_TOL,
) -> CertificateCheckResult:
    """Probe the Hölder certificate on random point pairs.

    Samples ``pairs`` point pairs inside the certified ball around ``x_star``
    and returns the worst observed ratio ``||grad(x)-grad(y)|| / ||x-y||**nu``.
    A valid instance keeps the ratio at or below ``m_nu`` up to float slack.
    """
    if pairs < 1:
        raise ValueError("pairs must be >= 1")
    s = p.smoothness
    radius = s.radius if math.isfinite(s.radius) else _GLOBAL_CERT_SAMPLE_RADIUS
    xs = _sample_in_ball(rng, p.x_star, radius, pairs)
    ys = _sample_in_ball(rng, p.x_star, radius, pairs)
    worst = 0.0
    worst_pair: tuple[Vector, Vector] | None = None
    for x, y in zip(xs, ys):
        dist = float(np.linalg.norm(x - y))
        if dist < 1e-300:
            continue
        num = float(np.linalg.norm(p.gradient(x) - p.gradient(y)))
        ratio = num / dist**s.nu
        if ratio > worst:
            worst = ratio
            worst_pair = (x, y)
    ok = worst <= s.m_nu * (1.0 + rel_tol) + ABS_TOL
    return CertificateCheckResult(
        ok=ok, worst_ratio=worst, bound=s.m_nu, worst_pair=None if ok else worst_pair
    )


@dataclass(frozen=True)
class GradientConsistencyResult:
    """Outcome of a finite-difference gradient probe."""

    ok: bool
    max_rel_err: float
    worst_point: Vector | None = None


def finite_difference_check(
    p: ProblemInstance,
    points: int,
    rng: np.random.Generator,
    step: float = 1e-6,
    rel_tol: float = 1e-4,
    radius: float | None = None,
) -> GradientConsistencyResult:
    """Central-difference check of ``gradient`` against ``objective``.

    At each sampled point the centered difference quotient with step ``step``
    must match the analytic gradient to relative error ``rel_tol`` (relative
    to ``max(||grad||, 1)``, so flat regions do not blow up the ratio).
    """
    if points < 1:
        raise ValueError("points must be >= 1")
    s = p.smoothness
    if radius is None:
        radius = s.radius if math.isfinite(s.radius) else _GLOBAL_CERT_SAMPLE_RADIUS
    xs = _sample_in_ball(rng, p.x_star, radius, points)
    worst = 0.0
    worst_point: Vector | None = None
    for x in xs:
        g = p.gradient(x)
        fd = np.empty(p.dim)
        for i in range(p.dim):
            e = np.zeros(p.dim)
            e[i] = step
            fd[i] = (p.objective(x + e) - p.objective(x - e)) / (2.0 * step)
        err = float(np.linalg.norm(fd - g)) / max(float(np.linalg.norm(g)), 1.0)
        if err > worst:
            worst = err
            worst_point = x
    ok = worst <= rel_tol
    return GradientConsistencyResult(
        ok=ok, max_rel_err=worst, worst_point=None if ok else worst_point
    )


def gradient_norm_bound(gap: float, nu: float, m_nu: float) -> float:
    """Upper bound on ``||grad f(x)||`` implied by the optimality gap.

    For a convex function with a (nu, m_nu) Hölder certificate:
    ``||grad f(x)|| <= ((1+nu)/nu)**(nu/(1+nu)) * m_nu**(1/(1+nu)) * gap**(nu/(1+nu))``.
    The leading factor is exactly 1 at nu = 0 (guarded branch, the continuous
    limit of the expression), where the bound degenerates to ``m_nu``
    independently of the gap.
    """
    gap = max(gap, 0.0)
    if nu == 0.0:
        return m_nu
    factor = ((1.0 + nu) / nu) ** (nu / (1.0 + nu))
    return factor * m_nu ** (1.0 / (1.0 + nu)) * gap ** (nu / (1.0 + nu))


def gradient_sq_bound(gap: float, delta: float, nu: float, m_nu: float) -> float:
    """Smoothing-parameter family of bounds on ``||grad f(x)||^2``.

    For every delta > 0:
    ``||grad||^2 <= 2 delta**(-(1-nu)/(1+nu)) m_nu**(2/(1+nu)) gap
                    + delta**(2 nu/(1+nu)) m_nu**(2/(1+nu))``.
    """
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    gap = max(gap, 0.0)
    mpow = m_nu ** (2.0 / (1.0 + nu))
    return (
        2.0 * delta ** (-(1.0 - nu) / (1.0 + nu)) * mpow * gap
        + delta ** (2.0 * nu / (1.0 + nu)) * mpow
    )
