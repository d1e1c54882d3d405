"""Parameter schedules for the clipped accelerated and plain methods.

Theorem mode derives every quantity (iteration count, stepsize scale,
clipping levels, batch sizes) from the problem-level inputs
``(nu, m_nu, eps, beta, r0, sigma)`` alone, matching the high-probability
guarantees' prescriptions exactly.  Unit-batch mode enlarges the accelerated
method's stepsize denominator so every mini-batch has size 1.  Restart plans
stack theorem-mode stages with geometrically shrinking accuracy targets for
strongly convex problems.

All functions here are pure: schedules are computed once per run and shared
read-only across trial workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import NDArray

# Constants of the two accelerated/non-accelerated guarantee families.
C_SSTM = math.sqrt(7.0)
C_SGD = 7.0

# Scale factors inside the derived formulas (dimensionless).
_A_SCALE = 16384.0  # stepsize denominator: a = 16384 ln^2(4N/beta)
_M_SCALE_SSTM = 20736.0  # batch-size numerator for the accelerated method
_M_SCALE_SGD = 81.0  # batch-size numerator for the plain method
_UNIT_BATCH_BASE = 5184.0  # unit-batch stepsize-denominator base

_MAX_ITER_COUNT = 2**62


class ConfigError(ValueError):
    """Invalid or infeasible configuration; ``condition`` names the violated rule."""

    def __init__(self, condition: str, message: str | None = None):
        self.condition = condition
        super().__init__(message or f"configuration violates: {condition}")


def _validate_common(nu: float, m_nu: float, eps: float, beta: float, r0: float, sigma: float) -> None:
    if not (0.0 <= nu <= 1.0):
        raise ConfigError("0 <= nu <= 1", f"nu = {nu} outside [0, 1]")
    if not (m_nu > 0.0 and math.isfinite(m_nu)):
        raise ConfigError("m_nu > 0", f"m_nu = {m_nu} must be positive and finite")
    if not (eps > 0.0 and math.isfinite(eps)):
        raise ConfigError("eps > 0", f"eps = {eps} must be positive and finite")
    if not (0.0 < beta < 1.0):
        raise ConfigError("0 < beta < 1", f"beta = {beta} outside (0, 1)")
    if not (r0 > 0.0 and math.isfinite(r0)):
        raise ConfigError("r0 > 0", f"r0 = {r0} must be positive and finite")
    if not (sigma >= 0.0 and math.isfinite(sigma)):
        raise ConfigError("sigma >= 0", f"sigma = {sigma} must be nonnegative and finite")


def _ln_confidence(n: int, beta: float) -> float:
    return math.log(4.0 * n / beta)


def ceil_batch(x: float) -> int:
    """Ceiling with an integer-snap guard for batch-size formulas.

    The exact-arithmetic value of the batch formulas is an integer in several
    calibrated regimes (unit-batch constructions make it exactly 1); values
    within relative 1e-9 of an integer snap to it before the ceiling so float
    noise cannot bump the batch size up a step.
    """
    if x > _MAX_ITER_COUNT:
        raise ConfigError("batch size overflow", f"batch formula value {x:.3e} too large")
    snap = round(x)
    if abs(x - snap) <= 1e-9 * max(1.0, abs(snap)):
        return int(snap)
    return int(math.ceil(x))


@dataclass(frozen=True)
class SSTMConfig:
    """Full parameterization of one run of the clipped accelerated method.

    ``a`` is the stepsize denominator; ``alpha0`` the base stepsize scale so
    step k+1 uses ``alpha0 * (k+1)**(2 nu/(1+nu))``; ``B`` couples clipping to
    stepsize via ``lambda_k = B / alpha_k``.  ``C`` is the guarantee constant
    sqrt(7).  ``ak_ratio_cap``, when set, caps the convex-combination weight
    on the accumulated sequence at each step (the schedule is untouched).
    """

    a: float
    alpha0: float
    B: float
    nu: float
    m_nu: float
    eps: float
    beta: float
    r0: float
    sigma: float
    N: int
    C: float = C_SSTM
    ak_ratio_cap: float | None = None
    theorem_mode: bool = False
    unit_batch: bool = False
    eps_conditions_ok: tuple[bool, bool, bool] | None = None
    bound: float | None = None

    def __post_init__(self) -> None:
        _validate_common(self.nu, self.m_nu, self.eps, self.beta, self.r0, self.sigma)
        if self.N < 0:
            raise ConfigError("N >= 0", f"N = {self.N}")
        if self.N > 0 and _ln_confidence(self.N, self.beta) < 2.0:
            raise ConfigError(
                "ln(4N/beta) >= 2",
                f"ln(4*{self.N}/{self.beta}) = {_ln_confidence(self.N, self.beta):.4f} < 2",
            )
        if not (self.a > 0.0 and self.alpha0 > 0.0 and self.B > 0.0):
            raise ConfigError("a, alpha0, B > 0")
        if self.theorem_mode and self.N > 0:
            floor = _A_SCALE * _ln_confidence(self.N, self.beta) ** 2
            if self.a < floor * (1.0 - 1e-12):
                raise ConfigError(
                    "a >= 16384*ln^2(4N/beta)",
                    f"a = {self.a:.6e} below theorem floor {floor:.6e}",
                )
        if self.ak_ratio_cap is not None and not (0.0 < self.ak_ratio_cap <= 1.0):
            raise ConfigError("ak_ratio_cap in (0, 1]", f"got {self.ak_ratio_cap}")

    @property
    def ln_factor(self) -> float:
        return _ln_confidence(self.N, self.beta)


@dataclass(frozen=True)
class ScheduleEntry:
    """One row of the accelerated method's schedule.

    Entry k (k >= 1) drives the step from state k-1 to state k: stepsize
    ``alpha_k``, cumulative weight ``A_k``, clipping level ``lambda_k =
    B/alpha_k`` and the mini-batch size ``m_k`` used for that step's oracle.
    Entry 0 is the degenerate starting row (alpha_0 = A_0 = 0).
    """

    k: int
    alpha_k: float
    A_k: float
    lambda_k: float
    m_k: int
    L_k: float


@dataclass(frozen=True)
class ScheduleArrays:
    """Vectorized schedule: index k runs 0..k_max inclusive."""

    ks: NDArray[np.int64]
    alphas: NDArray[np.float64]
    As: NDArray[np.float64]
    lams: NDArray[np.float64]
    ms: NDArray[np.int64]
    Ls: NDArray[np.float64]

    def entry(self, k: int) -> ScheduleEntry:
        return ScheduleEntry(
            k=int(self.ks[k]),
            alpha_k=float(self.alphas[k]),
            A_k=float(self.As[k]),
            lambda_k=float(self.lams[k]),
            m_k=int(self.ms[k]),
            L_k=float(self.Ls[k]),
        )


def _sstm_iteration_count(a: float, C: float, nu: float, m_nu: float, eps: float, r0: float) -> int:
    e1 = (1.0 + nu) / (1.0 + 3.0 * nu)
    val = (
        (2.0 * a) ** e1
        * (C * C * r0 * r0) ** e1
        * m_nu ** (2.0 / (1.0 + 3.0 * nu))
        / eps ** (2.0 / (1.0 + 3.0 * nu))
    )
    if not math.isfinite(val) or val > _MAX_ITER_COUNT:
        raise ConfigError("iteration count overflow", f"N formula gives {val:.3e}")
    return int(math.ceil(val)) + 1


def _sstm_unit_batch_second_term(
    nu: float, m_nu: float, eps: float, sigma: float, r0: float, C: float, ln_fac: float
) -> float:
    if sigma == 0.0:
        return 0.0
    q = (1.0 + 3.0 * nu) / (1.0 + nu)
    two_exp = 2.0 * (1.0 + 5.0 * nu) * (1.0 + 2.0 * nu) / (1.0 + nu) ** 2
    return (
        _UNIT_BATCH_BASE**q
        * 2.0**two_exp
        * sigma ** (2.0 * q)
        * C ** (4.0 * nu / (1.0 + nu))
        * r0 ** (4.0 * nu / (1.0 + nu))
        * ln_fac**q
        / (m_nu ** (2.0 / (1.0 + nu)) * eps ** (6.0 * nu / (1.0 + nu)))
    )


def sstm_unit_batch_a(
    nu: float, m_nu: float, eps: float, beta: float, r0: float, sigma: float, N: int
) -> float:
    """Stepsize denominator forcing unit batches at a given iteration count.

    The larger of the plain theorem floor and a noise-driven second term; with
    this ``a`` the batch-size formula stays at or below 1 for every k < N.
    """
    _validate_common(nu, m_nu, eps, beta, r0, sigma)
    ln_fac = _ln_confidence(N, beta)
    return max(
        _A_SCALE * ln_fac**2,
        _sstm_unit_batch_second_term(nu, m_nu, eps, sigma, r0, C_SSTM, ln_fac),
    )


def _sstm_eps_conditions(
    a: float, C: float, nu: float, m_nu: float, eps: float, r0: float, ln_fac: float
) -> tuple[bool, bool, bool]:
    """Literal evaluation of the three side conditions on eps.

    These only control the constant in the guarantee; failures are reported
    as warnings by callers, never as errors.
    """
    slack = 1.0 + 1e-12
    c1 = eps ** ((1.0 - nu) / (1.0 + nu)) <= slack * (
        a * C * m_nu ** ((1.0 - nu) / (1.0 + nu)) * r0 ** (1.0 - nu) / (16.0 * ln_fac)
    )
    c2 = eps <= slack * (
        2.0 ** ((1.0 + nu) / 2.0)
        * a ** ((1.0 + nu) / 2.0)
        * C ** (1.0 + nu)
        * r0 ** (1.0 + nu)
        * m_nu
        / 100.0 ** ((1.0 + 3.0 * nu) / 2.0)
    )
    denom = (1.0 + nu) * (1.0 + 3.0 * nu)
    br_a = a ** ((2.0 + 3.0 * nu - nu**2) / (2.0 * (1.0 + 3.0 * nu))) / (
        2.0 ** (2.0 + 4.0 * nu + (3.0 + 8.0 * nu - 5.0 * nu**2 - 6.0 * nu**3) / denom)
        * ln_fac
    )
    br_b = a ** ((1.0 + nu) ** 2 / (1.0 + 3.0 * nu)) / (
        2.0 ** (4.0 + 7.0 * nu + (2.0 + 7.0 * nu + 2.0 * nu**2 - 3.0 * nu**3) / denom)
        * ln_fac ** (1.0 + nu)
    )
    rhs3 = (
        min(br_a, br_b)
        * C ** ((1.0 - nu**2) / (1.0 + 3.0 * nu))
        * r0 ** ((1.0 - nu**2) / (1.0 + 3.0 * nu))
        * m_nu ** ((1.0 - nu) / (1.0 + 3.0 * nu))
    )
    c3 = eps ** ((1.0 - nu) / (1.0 + 3.0 * nu)) <= slack * rhs3
    return (c1, c2, c3)


def sstm_theorem_params(
    nu: float,
    m_nu: float,
    eps: float,
    beta: float,
    r0: float,
    sigma: float,
    *,
    unit_batch: bool = False,
    ak_ratio_cap: float | None = None,
) -> SSTMConfig:
    """Derive the accelerated method's full parameter set.

    The iteration count N and the stepsize denominator ``a`` define each
    other (``a`` grows with ln N, N grows with a), so the pair is resolved by
    fixed-point iteration from the N=1 seed; N is monotone in ``a`` and the
    coupling is logarithmic, so the iteration settles in a few rounds.  The
    result is self-consistent: re-substituting N into the defining formulas
    reproduces ``a`` and N exactly.
    """
    _validate_common(nu, m_nu, eps, beta, r0, sigma)
    a = _A_SCALE * _ln_confidence(1, beta) ** 2
    if unit_batch:
        a = max(a, _sstm_unit_batch_second_term(nu, m_nu, eps, sigma, r0, C_SSTM, _ln_confidence(1, beta)))
    n_prev = None
    for _ in range(50):
        n = _sstm_iteration_count(a, C_SSTM, nu, m_nu, eps, r0)
        ln_fac = _ln_confidence(n, beta)
        a = _A_SCALE * ln_fac**2
        if unit_batch:
            a = max(a, _sstm_unit_batch_second_term(nu, m_nu, eps, sigma, r0, C_SSTM, ln_fac))
        if n == n_prev:
            break
        n_prev = n
    else:
        raise ConfigError(
            "iteration-count fixed point converges within 50 rounds",
            "the (N, a) fixed-point iteration did not stabilize",
        )
    ln_fac = _ln_confidence(n, beta)
    if ln_fac < 2.0:
        raise ConfigError(
            "ln(4N/beta) >= 2", f"ln(4*{n}/{beta}) = {ln_fac:.4f} < 2"
        )
    alpha0 = (eps / 2.0) ** ((1.0 - nu) / (1.0 + nu)) / (
        2.0 ** (2.0 * nu / (1.0 + nu)) * a * m_nu ** (2.0 / (1.0 + nu))
    )
    b = C_SSTM * r0 / (16.0 * ln_fac)
    bound = (
        4.0
        * a
        * C_SSTM**2
        * r0**2
        * m_nu ** (2.0 / (1.0 + nu))
        / (n ** ((1.0 + 3.0 * nu) / (1.0 + nu)) * eps ** ((1.0 - nu) / (1.0 + nu)))
    )
    return SSTMConfig(
        a=a,
        alpha0=alpha0,
        B=b,
        nu=nu,
        m_nu=m_nu,
        eps=eps,
        beta=beta,
        r0=r0,
        sigma=sigma,
        N=n,
        C=C_SSTM,
        ak_ratio_cap=ak_ratio_cap,
        theorem_mode=True,
        unit_batch=unit_batch,
        eps_conditions_ok=_sstm_eps_conditions(a, C_SSTM, nu, m_nu, eps, r0, ln_fac),
        bound=bound,
    )


def sstm_schedule_arrays(cfg: SSTMConfig, k_max: int | None = None) -> ScheduleArrays:
    """Vectorized schedule rows 0..k_max (defaults to 0..N)."""
    if k_max is None:
        k_max = cfg.N
    if k_max > cfg.N:
        raise ConfigError("k_max <= N", f"k_max = {k_max} exceeds N = {cfg.N}")
    if k_max < 0:
        raise ConfigError("k_max >= 0")
    ks = np.arange(k_max + 1, dtype=np.int64)
    expo = 2.0 * cfg.nu / (1.0 + cfg.nu)
    alphas = np.zeros(k_max + 1)
    if k_max >= 1:
        alphas[1:] = cfg.alpha0 * np.power(ks[1:].astype(np.float64), expo)
    As = np.cumsum(alphas)
    if not (np.all(np.isfinite(alphas)) and np.all(np.isfinite(As))):
        raise ConfigError(
            "schedule within float range",
            "stepsize or cumulative weight overflowed 64-bit float range",
        )
    lams = np.empty(k_max + 1)
    lams[0] = math.inf
    if k_max >= 1:
        lams[1:] = cfg.B / alphas[1:]
    ms = np.zeros(k_max + 1, dtype=np.int64)
    if k_max >= 1:
        ln_fac = cfg.ln_factor
        raw = (
            _M_SCALE_SSTM
            * cfg.N
            * cfg.sigma**2
            * alphas[1:] ** 2
            * ln_fac
            / (cfg.C**2 * cfg.r0**2)
        )
        if np.any(raw > _MAX_ITER_COUNT):
            raise ConfigError("batch size overflow", "batch formula exceeds integer range")
        # Vectorized ceil_batch: snap values within rel 1e-9 of an integer,
        # then take the ceiling, then floor the result at 1.
        snapped = np.round(raw)
        is_int = np.abs(raw - snapped) <= 1e-9 * np.maximum(1.0, np.abs(snapped))
        rounded = np.where(is_int, snapped, np.ceil(raw))
        ms[1:] = np.maximum(rounded, 1.0).astype(np.int64)
    Ls = np.zeros(k_max + 1)
    if k_max >= 1:
        Ls[1:] = (2.0 * As[1:] / (alphas[1:] * cfg.eps)) ** (
            (1.0 - cfg.nu) / (1.0 + cfg.nu)
        ) * cfg.m_nu ** (2.0 / (1.0 + cfg.nu))
    return ScheduleArrays(ks=ks, alphas=alphas, As=As, lams=lams, ms=ms, Ls=Ls)


def sstm_schedule(cfg: SSTMConfig, k_max: int | None = None) -> tuple[ScheduleEntry, ...]:
    """Schedule rows as entry objects (row k drives the step producing state k)."""
    arrays = sstm_schedule_arrays(cfg, k_max)
    return tuple(arrays.entry(k) for k in range(arrays.ks.shape[0]))


def sstm_total_oracle_calls(cfg: SSTMConfig) -> int:
    """Sum of all batch sizes across the N steps of one run."""
    return int(sstm_schedule_arrays(cfg).ms[1:].sum())


@dataclass(frozen=True)
class ScheduleCheckResult:
    """Outcome of the three-part schedule inequality check."""

    ok: bool
    first_violation_k: int | None
    inequality: str | None
    lhs: float | None
    rhs: float | None
    eq_gap_max: float  # max relative gap |A_k - a L_k alpha_k^2| / A_k over k >= 1

    def __bool__(self) -> bool:
        return self.ok


def check_schedule_bounds(
    cfg: SSTMConfig, k_max: int | None = None, rtol: float = 1e-9
) -> ScheduleCheckResult:
    """Verify the cumulative-weight inequalities for every emitted k.

    Three checks per row: the stepsize-denominator inequality
    ``A_k >= a L_k alpha_k^2`` and the two-sided growth bounds pinning A_k
    between explicit powers of k.  At nu = 0 the first holds with equality
    (reported via ``eq_gap_max``).
    """
    arrays = sstm_schedule_arrays(cfg, k_max)
    atol = 1e-12
    nu, a, eps, m_nu = cfg.nu, cfg.a, cfg.eps, cfg.m_nu
    kf = arrays.ks.astype(np.float64)
    p = (1.0 + 3.0 * nu) / (1.0 + nu)
    eps_pow = (eps / 2.0) ** ((1.0 - nu) / (1.0 + nu))
    m_pow = m_nu ** (2.0 / (1.0 + nu))
    rhs1 = a * arrays.Ls * arrays.alphas**2
    lower = np.power(kf, p) * eps_pow / (2.0**p * a * m_pow)
    upper = np.power(kf, p) * eps_pow / (2.0 ** (2.0 * nu / (1.0 + nu)) * a * m_pow)
    ok1 = arrays.As >= rhs1 * (1.0 - rtol) - atol
    ok2 = arrays.As >= lower * (1.0 - rtol) - atol
    ok3 = arrays.As <= upper * (1.0 + rtol) + atol
    if arrays.ks.shape[0] > 1:
        denom = np.maximum(arrays.As[1:], 1e-300)
        eq_gap_max = float(np.max(np.abs(arrays.As[1:] - rhs1[1:]) / denom))
    else:
        eq_gap_max = 0.0
    for name, okv, rhs in (
        ("A_k >= a*L_k*alpha_k^2", ok1, rhs1),
        ("A_k lower growth bound", ok2, lower),
        ("A_k upper growth bound", ok3, upper),
    ):
        if not np.all(okv):
            k = int(np.argmin(okv))
            return ScheduleCheckResult(
                ok=False,
                first_violation_k=k,
                inequality=name,
                lhs=float(arrays.As[k]),
                rhs=float(rhs[k]),
                eq_gap_max=eq_gap_max,
            )
    return ScheduleCheckResult(
        ok=True,
        first_violation_k=None,
        inequality=None,
        lhs=None,
        rhs=None,
        eq_gap_max=eq_gap_max,
    )


@dataclass(frozen=True)
class SGDConfig:
    """Full parameterization of one clipped (or baseline) plain-SGD run.

    ``lam`` may be ``math.inf`` for the unclipped baseline.  ``clip_mode``
    selects norm clipping (the analyzed method), coordinate-wise clipping or
    none; ``momentum`` adds a heavy-ball buffer.  Anything other than
    norm-clipping with zero momentum is a baseline without guarantees.
    """

    gamma: float
    lam: float
    m: int
    N: int
    nu: float
    m_nu: float
    eps: float
    beta: float
    r0: float
    sigma: float
    C: float = C_SGD
    clip_mode: Literal["norm", "coord", "none"] = "norm"
    momentum: float = 0.0
    theorem_mode: bool = False
    unit_batch: bool = False
    bound: float | None = None

    def __post_init__(self) -> None:
        _validate_common(self.nu, self.m_nu, self.eps, self.beta, self.r0, self.sigma)
        if not self.gamma > 0.0:
            raise ConfigError("gamma > 0", f"gamma = {self.gamma}")
        if not self.lam > 0.0:
            raise ConfigError("lambda > 0", f"lambda = {self.lam}")
        if self.m < 1:
            raise ConfigError("m >= 1", f"m = {self.m}")
        if self.N < 1:
            raise ConfigError("N >= 1", f"N = {self.N}")
        if _ln_confidence(self.N, self.beta) < 2.0:
            raise ConfigError(
                "ln(4N/beta) >= 2",
                f"ln(4*{self.N}/{self.beta}) = {_ln_confidence(self.N, self.beta):.4f} < 2",
            )
        if self.clip_mode not in ("norm", "coord", "none"):
            raise ConfigError("clip_mode in {norm, coord, none}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("0 <= momentum < 1", f"momentum = {self.momentum}")
        if self.theorem_mode:
            ln_fac = _ln_confidence(self.N, self.beta)
            if not math.isclose(self.lam * self.gamma * ln_fac, self.r0, rel_tol=1e-9):
                raise ConfigError(
                    "lambda*gamma*ln(4N/beta) = r0",
                    f"coupling {self.lam * self.gamma * ln_fac:.6e} != r0 = {self.r0:.6e}",
                )

    @property
    def ln_factor(self) -> float:
        return _ln_confidence(self.N, self.beta)


def _sgd_gamma_terms(
    nu: float, m_nu: float, eps: float, r0: float, sigma: float, n: int, beta: float, unit_batch: bool
) -> list[float]:
    ln_fac = _ln_confidence(n, beta)
    terms = [
        eps ** ((1.0 - nu) / (1.0 + nu)) / (8.0 * m_nu ** (2.0 / (1.0 + nu))),
        r0 / (math.sqrt(2.0 * n) * eps ** (nu / (1.0 + nu)) * m_nu ** (1.0 / (1.0 + nu))),
        r0 ** (1.0 - nu) / (2.0 * C_SGD**nu * m_nu * ln_fac),
    ]
    if unit_batch and sigma > 0.0:
        # Small-batch stepsize: with this term binding, the batch formula
        # evaluates to exactly 1 (81 = 9^2 cancels), keeping every batch at
        # size 1 while the guarantee still reaches eps.
        terms.append(r0 / (9.0 * sigma * math.sqrt(n * ln_fac)))
    return terms


def sgd_theorem_params(
    nu: float,
    m_nu: float,
    eps: float,
    beta: float,
    r0: float,
    sigma: float,
    *,
    unit_batch: bool = False,
) -> SGDConfig:
    """Derive the plain clipped method's (gamma, lambda, m, N).

    gamma is the minimum of the candidate stepsize terms (three in theorem
    mode, plus the small-batch term in unit-batch mode); N is the smallest
    iteration count for which the guarantee ``C^2 r0^2 / (gamma N) <= eps``
    holds.  Every candidate times N grows with N, so the guarantee value is
    decreasing in N and the minimal N is found by doubling plus bisection.
    """
    _validate_common(nu, m_nu, eps, beta, r0, sigma)

    def guarantee(n: int) -> float:
        g = min(_sgd_gamma_terms(nu, m_nu, eps, r0, sigma, n, beta, unit_batch))
        return C_SGD**2 * r0**2 / (g * n)

    # ln(4N/beta) >= 2 puts a floor on admissible N.
    n_floor = max(1, int(math.ceil(beta * math.exp(2.0) / 4.0)))
    while _ln_confidence(n_floor, beta) < 2.0:
        n_floor += 1
    lo = n_floor
    if guarantee(lo) <= eps:
        n = lo
    else:
        hi = lo
        while guarantee(hi) > eps:
            hi *= 2
            if hi > _MAX_ITER_COUNT:
                raise ConfigError(
                    "target accuracy reachable",
                    "no iteration count reaches the requested eps (guarantee plateaued)",
                )
        while hi - lo > 1:  # invariant: guarantee(lo) > eps >= guarantee(hi)
            mid = (lo + hi) // 2
            if guarantee(mid) <= eps:
                hi = mid
            else:
                lo = mid
        n = hi
    ln_fac = _ln_confidence(n, beta)
    gamma = min(_sgd_gamma_terms(nu, m_nu, eps, r0, sigma, n, beta, unit_batch))
    lam = r0 / (gamma * ln_fac)
    m = max(1, ceil_batch(_M_SCALE_SGD * n * sigma**2 / (lam**2 * ln_fac)))
    return SGDConfig(
        gamma=gamma,
        lam=lam,
        m=m,
        N=n,
        nu=nu,
        m_nu=m_nu,
        eps=eps,
        beta=beta,
        r0=r0,
        sigma=sigma,
        C=C_SGD,
        theorem_mode=True,
        unit_batch=unit_batch,
        bound=C_SGD**2 * r0**2 / (gamma * n),
    )


@dataclass(frozen=True)
class RestartStage:
    """One stage of a restart plan: its target, radius and full config."""

    t: int
    eps_t: float
    r_eff: float
    beta_stage: float
    cfg: SSTMConfig | SGDConfig


@dataclass(frozen=True)
class RestartPlan:
    """Stage stack for strongly convex problems.

    Stage t targets accuracy ``eps_t = mu r0^2 / 2^(t+1)`` with confidence
    budget ``beta/tau`` and effective starting radius ``r0 / 2^((t-1)/2)``
    substituted into the base formulas (stage 1 reduces to them exactly).
    Each stage's guarantee shrinks the squared distance to the minimizer by
    half, so after stage t it is at most ``r0^2 / 2^t``.
    """

    tau: int
    mu: float
    eps: float
    beta: float
    r0: float
    method: Literal["sstm", "sgd"]
    stages: tuple[RestartStage, ...]

    def stage_iterations(self) -> list[int]:
        return [s.cfg.N for s in self.stages]

    def total_iterations(self) -> int:
        return sum(self.stage_iterations())

    def total_oracle_calls(self) -> int:
        total = 0
        for s in self.stages:
            if isinstance(s.cfg, SSTMConfig):
                total += sstm_total_oracle_calls(s.cfg)
            else:
                total += s.cfg.N * s.cfg.m
        return total


def restart_count(mu: float, r0: float, eps: float) -> int:
    """Number of halving stages needed to bring mu r0^2 down to eps."""
    ratio = mu * r0 * r0 / eps
    if ratio <= 2.0:
        return 1
    log2r = math.log2(ratio)
    snapped = round(log2r)
    if abs(log2r - snapped) <= 1e-12 * max(1.0, abs(snapped)):
        log2r = snapped
    return max(1, int(math.ceil(log2r)) - 1)


def _restart_plan(
    method: Literal["sstm", "sgd"],
    mu: float,
    nu: float,
    m_nu: float,
    eps: float,
    beta: float,
    r0: float,
    sigma: float,
    unit_batch: bool,
    ak_ratio_cap: float | None,
) -> RestartPlan:
    if not (mu > 0.0 and math.isfinite(mu)):
        raise ConfigError("mu > 0", f"mu = {mu} must be positive for restarts")
    _validate_common(nu, m_nu, eps, beta, r0, sigma)
    tau = restart_count(mu, r0, eps)
    stages = []
    for t in range(1, tau + 1):
        eps_t = mu * r0 * r0 / 2.0 ** (t + 1)
        r_eff = r0 / 2.0 ** ((t - 1) / 2.0)
        beta_stage = beta / tau
        try:
            if method == "sstm":
                cfg: SSTMConfig | SGDConfig = sstm_theorem_params(
                    nu, m_nu, eps_t, beta_stage, r_eff, sigma,
                    unit_batch=unit_batch, ak_ratio_cap=ak_ratio_cap,
                )
            else:
                cfg = sgd_theorem_params(
                    nu, m_nu, eps_t, beta_stage, r_eff, sigma, unit_batch=unit_batch
                )
        except ConfigError as exc:
            raise ConfigError(
                exc.condition + f" at stage {t}",
                f"stage {t} of {tau}: {exc}",
            ) from exc
        stages.append(RestartStage(t=t, eps_t=eps_t, r_eff=r_eff, beta_stage=beta_stage, cfg=cfg))
    assert stages[-1].eps_t <= eps * (1.0 + 1e-12), "final stage misses the target accuracy"
    return RestartPlan(
        tau=tau, mu=mu, eps=eps, beta=beta, r0=r0, method=method, stages=tuple(stages)
    )


def restart_plan_sstm(
    mu: float,
    nu: float,
    m_nu: float,
    eps: float,
    beta: float,
    r0: float,
    sigma: float,
    *,
    unit_batch: bool = False,
    ak_ratio_cap: float | None = None,
) -> RestartPlan:
    """Restart plan running the accelerated method at every stage."""
    return _restart_plan("sstm", mu, nu, m_nu, eps, beta, r0, sigma, unit_batch, ak_ratio_cap)


def restart_plan_sgd(
    mu: float,
    nu: float,
    m_nu: float,
    eps: float,
    beta: float,
    r0: float,
    sigma: float,
    *,
    unit_batch: bool = False,
) -> RestartPlan:
    """Restart plan running the plain clipped method at every stage."""
    return _restart_plan("sgd", mu, nu, m_nu, eps, beta, r0, sigma, unit_batch, None)
