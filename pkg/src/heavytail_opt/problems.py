"""Synthetic convex objectives with certified smoothness, plus noise models.

Every problem kind maps to a :class:`~heavytail_opt.core.ProblemInstance`
whose (nu, m_nu, mu, x_star, f_star) are derived analytically — nothing is
estimated from samples.  The kinds span the smoothness spectrum:

================== ===== =========================== =====================
kind                nu    objective                   certificate
================== ===== =========================== =====================
quadratic           1     0.5 (x-s)' H (x-s)          M_1 = ||H||_2, mu = eig_min(H)
power_norm          nu    c ||x-s||^(1+nu) / (1+nu)   M_nu = c 2^(1-nu), global
huberized_norm      1     c huber_delta(||x-s||)      M_1 = c / delta, global
piecewise_linear_max 0    max_i <a_i, x-s>            M_0 = 2 max ||a_i||, global
quad_plus_norm      0     mu/2 ||x-s||^2 + c ||x-s||  M_0 = 2 (mu R + c) on ball R
================== ===== =========================== =====================

Noise models are additive and isotropic: a scalar radial component times an
independent uniform random direction.  The radial law is scaled so that the
per-draw second moment E||noise||^2 equals sigma^2 exactly in any dimension
(closed-form second moments, no Monte-Carlo calibration).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .core import HolderSmoothness, ProblemInstance, Vector, as_vector

PROBLEM_KINDS = (
    "quadratic",
    "power_norm",
    "huberized_norm",
    "piecewise_linear_max",
    "quad_plus_norm",
)

NOISE_FAMILIES = ("gaussian", "student_t", "pareto_symmetric")

# Integer ids consumed by the compiled/pure-Python step kernels.
KIND_IDS = {kind: i for i, kind in enumerate(PROBLEM_KINDS)}


@dataclass(frozen=True)
class ProblemSpec:
    """Declarative description of a synthetic problem.

    ``shift`` places the minimizer: a scalar is expanded to a vector of norm
    |shift| (equal entries), a sequence is taken literally.  ``seed`` controls
    the generated data (eigenbasis rotation, linear pieces) and nothing else.

    Per-kind parameters (unused ones are ignored):

    - quadratic: ``eig_min``/``eig_max`` — spectrum endpoints (log-spaced).
    - power_norm: ``scale`` (c) and ``nu``.
    - huberized_norm: ``scale`` (c) and ``huber_delta``.
    - piecewise_linear_max: ``scale`` and ``n_pieces`` (pieces come in +/-
      pairs; at least ``dim`` pairs are generated so the minimizer is unique,
      the first ``dim`` pairs being scaled coordinate directions).
    - quad_plus_norm: ``mu``, ``norm_weight`` (c) and ``ball_radius`` (the
      certificate ball; nu=0 constants only hold on bounded sets here).
    """

    kind: str
    dim: int
    scale: float = 1.0
    nu: float = 1.0
    eig_min: float = 1.0
    eig_max: float = 1.0
    huber_delta: float = 1.0
    n_pieces: int = 8
    mu: float = 1.0
    norm_weight: float = 1.0
    ball_radius: float = 10.0
    shift: float | Sequence[float] = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in PROBLEM_KINDS:
            raise ValueError(
                f"unknown problem kind {self.kind!r}; expected one of {PROBLEM_KINDS}"
            )
        if self.dim < 1:
            raise ValueError("dim must be >= 1")

    def shift_vector(self) -> Vector:
        if isinstance(self.shift, (int, float)):
            s = np.full(self.dim, float(self.shift) / math.sqrt(self.dim))
            return s if self.shift != 0.0 else np.zeros(self.dim)
        return as_vector(self.shift, self.dim)


@dataclass(frozen=True)
class KernelPayload:
    """Flat numeric description of a problem consumed by the step kernels.

    ``matrix`` is the Hessian for quadratics, the piece matrix (rows a_i) for
    piecewise-max problems, and an empty (0, dim) array otherwise.  ``p1``and
    ``p2`` are per-kind scalars (see the kernel dispatch table in _engine).
    """

    kind_id: int
    matrix: NDArray[np.float64]
    shift: NDArray[np.float64]
    p1: float
    p2: float


def _quadratic(spec: ProblemSpec) -> tuple[ProblemInstance, KernelPayload]:
    if spec.eig_min < 0.0:
        raise ValueError("quadratic requires eig_min >= 0 (convexity)")
    if spec.eig_max < spec.eig_min:
        raise ValueError("quadratic requires eig_max >= eig_min")
    d = spec.dim
    s = spec.shift_vector()
    if spec.eig_min == spec.eig_max:
        eigs = np.full(d, spec.eig_max)
    elif spec.eig_min == 0.0:
        eigs = np.concatenate(([0.0], np.geomspace(spec.eig_max / 1e6, spec.eig_max, d - 1))) if d > 1 else np.array([spec.eig_max])
    else:
        eigs = np.geomspace(spec.eig_min, spec.eig_max, d)
    if d == 1:
        h = np.array([[eigs[0]]])
    else:
        rng = np.random.default_rng(spec.seed)
        q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        h = (q * eigs) @ q.T
        h = 0.5 * (h + h.T)  # enforce exact symmetry after rounding
    # Certified operator norm: the spectrum is constructed, and an exact
    # symmetric eigensolve (machine precision, far inside the 1e-6 contract)
    # cross-checks the construction. The certificate takes the larger of the
    # two so it upper-bounds the actual float matrix.
    ev = np.linalg.eigvalsh(h)
    if not math.isclose(float(ev[-1]), float(eigs.max()), rel_tol=1e-9, abs_tol=1e-12):
        raise AssertionError("constructed spectrum does not match eigensolve")
    if abs(float(ev[0]) - float(eigs.min())) > 1e-9 * max(1.0, float(eigs.max())):
        raise AssertionError("constructed spectrum does not match eigensolve")
    m1 = max(float(ev[-1]), float(eigs.max()))
    mu = float(eigs.min())

    def objective(x: Vector) -> float:
        u = x - s
        return 0.5 * float(u @ (h @ u))

    def gradient(x: Vector) -> Vector:
        return h @ (x - s)

    inst = ProblemInstance(
        dim=d,
        objective=objective,
        gradient=gradient,
        x_star=s.copy(),
        f_star=0.0,
        smoothness=HolderSmoothness(nu=1.0, m_nu=m1, radius=math.inf),
        mu=mu,
    )
    payload = KernelPayload(KIND_IDS["quadratic"], np.ascontiguousarray(h), s.copy(), 0.0, 0.0)
    return inst, payload


def _power_norm(spec: ProblemSpec) -> tuple[ProblemInstance, KernelPayload]:
    if not (0.0 <= spec.nu <= 1.0):
        raise ValueError("power_norm requires nu in [0, 1]")
    if spec.scale <= 0.0:
        raise ValueError("power_norm requires scale > 0")
    nu, c = float(spec.nu), float(spec.scale)
    s = spec.shift_vector()
    p = 1.0 + nu

    def objective(x: Vector) -> float:
        return c * float(np.linalg.norm(x - s)) ** p / p

    def gradient(x: Vector) -> Vector:
        u = x - s
        r = float(np.linalg.norm(u))
        if r == 0.0:
            return np.zeros_like(u)  # minimum-norm subgradient at the kink
        return c * r ** (nu - 1.0) * u

    # The gradient map u -> c ||u||^(nu-1) u is nu-Hölder with the sharp
    # constant attained by antipodal pairs: ratio = c * 2^(1-nu).
    m_nu = c * 2.0 ** (1.0 - nu)
    inst = ProblemInstance(
        dim=spec.dim,
        objective=objective,
        gradient=gradient,
        x_star=s.copy(),
        f_star=0.0,
        smoothness=HolderSmoothness(nu=nu, m_nu=m_nu, radius=math.inf),
        mu=0.0,
    )
    payload = KernelPayload(
        KIND_IDS["power_norm"], np.empty((0, spec.dim)), s.copy(), c, nu
    )
    return inst, payload


def _huberized_norm(spec: ProblemSpec) -> tuple[ProblemInstance, KernelPayload]:
    if spec.huber_delta <= 0.0:
        raise ValueError("huberized_norm requires huber_delta > 0")
    if spec.scale <= 0.0:
        raise ValueError("huberized_norm requires scale > 0")
    c, delta = float(spec.scale), float(spec.huber_delta)
    s = spec.shift_vector()

    def objective(x: Vector) -> float:
        r = float(np.linalg.norm(x - s))
        if r <= delta:
            return c * r * r / (2.0 * delta)
        return c * (r - delta / 2.0)

    def gradient(x: Vector) -> Vector:
        u = x - s
        r = float(np.linalg.norm(u))
        if r <= delta:
            return (c / delta) * u
        return (c / r) * u

    inst = ProblemInstance(
        dim=spec.dim,
        objective=objective,
        gradient=gradient,
        x_star=s.copy(),
        f_star=0.0,
        smoothness=HolderSmoothness(nu=1.0, m_nu=c / delta, radius=math.inf),
        mu=0.0,
    )
    payload = KernelPayload(
        KIND_IDS["huberized_norm"], np.empty((0, spec.dim)), s.copy(), c, delta
    )
    return inst, payload


def _piecewise_linear_max(spec: ProblemSpec) -> tuple[ProblemInstance, KernelPayload]:
    if spec.scale <= 0.0:
        raise ValueError("piecewise_linear_max requires scale > 0")
    d = spec.dim
    s = spec.shift_vector()
    n_pairs = max(spec.n_pieces // 2, d)
    rows = []
    for i in range(d):  # spanning pairs: scaled coordinate directions
        e = np.zeros(d)
        e[i] = spec.scale
        rows.append(e)
    if n_pairs > d:
        rng = np.random.default_rng(spec.seed)
        extra = rng.standard_normal((n_pairs - d, d))
        extra *= spec.scale / np.maximum(np.linalg.norm(extra, axis=1, keepdims=True), 1e-12)
        rows.extend(extra)
    a = np.concatenate([np.stack(rows), -np.stack(rows)])  # +/- pairs
    a = np.ascontiguousarray(a)
    row_norms = np.linalg.norm(a, axis=1)

    def objective(x: Vector) -> float:
        return float(np.max(a @ (x - s)))

    def gradient(x: Vector) -> Vector:
        vals = a @ (x - s)
        vmax = float(vals.max())
        if vmax == 0.0:
            # All pieces vanish only at the minimizer (the pairs span the
            # space); 0 is the minimum-norm subgradient there.
            return np.zeros(d)
        active = np.flatnonzero(vals == vmax)
        if active.size == 1:
            return a[active[0]].copy()
        # Tie off the minimizer: pick the smallest-norm active piece.
        return a[active[np.argmin(row_norms[active])]].copy()

    m0 = 2.0 * float(row_norms.max())
    inst = ProblemInstance(
        dim=d,
        objective=objective,
        gradient=gradient,
        x_star=s.copy(),
        f_star=0.0,
        smoothness=HolderSmoothness(nu=0.0, m_nu=m0, radius=math.inf),
        mu=0.0,
    )
    payload = KernelPayload(KIND_IDS["piecewise_linear_max"], a, s.copy(), 0.0, 0.0)
    return inst, payload


def _quad_plus_norm(spec: ProblemSpec) -> tuple[ProblemInstance, KernelPayload]:
    if spec.mu <= 0.0:
        raise ValueError("quad_plus_norm requires mu > 0")
    if spec.norm_weight <= 0.0:
        raise ValueError("quad_plus_norm requires norm_weight > 0")
    if spec.ball_radius <= 0.0:
        raise ValueError("quad_plus_norm requires ball_radius > 0")
    mu, c, rad = float(spec.mu), float(spec.norm_weight), float(spec.ball_radius)
    s = spec.shift_vector()

    def objective(x: Vector) -> float:
        r = float(np.linalg.norm(x - s))
        return 0.5 * mu * r * r + c * r

    def gradient(x: Vector) -> Vector:
        u = x - s
        r = float(np.linalg.norm(u))
        if r == 0.0:
            return np.zeros_like(u)  # minimum-norm subgradient
        return mu * u + (c / r) * u

    # Gradient norms on the ball are at most mu*rad + c, so differences are
    # bounded by twice that: a nu=0 certificate valid on the ball only.
    m0 = 2.0 * (mu * rad + c)
    inst = ProblemInstance(
        dim=spec.dim,
        objective=objective,
        gradient=gradient,
        x_star=s.copy(),
        f_star=0.0,
        smoothness=HolderSmoothness(nu=0.0, m_nu=m0, radius=rad),
        mu=mu,
    )
    payload = KernelPayload(
        KIND_IDS["quad_plus_norm"], np.empty((0, spec.dim)), s.copy(), mu, c
    )
    return inst, payload


_BUILDERS = {
    "quadratic": _quadratic,
    "power_norm": _power_norm,
    "huberized_norm": _huberized_norm,
    "piecewise_linear_max": _piecewise_linear_max,
    "quad_plus_norm": _quad_plus_norm,
}


def make_problem(spec: ProblemSpec) -> ProblemInstance:
    """Instantiate a certified problem from its declarative spec."""
    inst, _ = _BUILDERS[spec.kind](spec)
    return inst


def kernel_payload(spec: ProblemSpec) -> KernelPayload:
    """Flat numeric problem description for the step kernels."""
    _, payload = _BUILDERS[spec.kind](spec)
    return payload


def make_problem_with_payload(spec: ProblemSpec) -> tuple[ProblemInstance, KernelPayload]:
    """Instance and its kernel payload in one build (they always pair up)."""
    return _BUILDERS[spec.kind](spec)


@dataclass(frozen=True)
class IsotropicNoise:
    """Isotropic additive noise: radial component times uniform direction.

    The radial laws and their exact scale factors (E r^2 = sigma^2):

    - gaussian: ``r = sigma * |Z|`` with Z standard normal.
    - student_t (df > 2): ``r = sigma * sqrt((df-2)/df) * |T_df|`` since
      ``E T_df^2 = df/(df-2)``.
    - pareto_symmetric (alpha > 2): ``r = scale * (X - alpha/(alpha-1))`` with
      X Pareto(alpha, x_min = 1); the centered second moment of X is
      ``alpha / ((alpha-2)(alpha-1)^2)``, so
      ``scale = sigma (alpha-1) sqrt((alpha-2)/alpha)``.  The radial component
      is signed, which together with the symmetric direction keeps the law
      symmetric; in 1-D the direction is a fair sign flip.

    ``sigma = 0`` disables sampling entirely (no RNG draws are consumed).

    Draw-order contract (determinism): each bulk request draws all radial
    components first, then all directions.  The sequence of bulk requests is
    fixed by the chunk plan in the engine, never by worker scheduling.
    """

    family: str
    sigma: float
    dim: int
    tail_param: float = 0.0

    def __post_init__(self) -> None:
        if self.family not in NOISE_FAMILIES:
            raise ValueError(
                f"unknown noise family {self.family!r}; expected one of {NOISE_FAMILIES}"
            )
        if self.sigma < 0.0:
            raise ValueError("sigma must be >= 0")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.sigma > 0.0:
            if self.family == "student_t" and not self.tail_param > 2.0:
                raise ValueError(
                    "student_t requires df > 2 (finite variance); "
                    f"got df = {self.tail_param}"
                )
            if self.family == "pareto_symmetric" and not self.tail_param > 2.0:
                raise ValueError(
                    "pareto_symmetric requires tail index > 2 (finite variance); "
                    f"got alpha = {self.tail_param}"
                )

    def second_moment(self) -> float:
        return self.sigma * self.sigma

    def radial(self, rng: np.random.Generator, n: int) -> NDArray[np.float64]:
        """Signed radial components with E r^2 = sigma^2 exactly."""
        if self.sigma == 0.0:
            return np.zeros(n)
        if self.family == "gaussian":
            return self.sigma * np.abs(rng.standard_normal(n))
        if self.family == "student_t":
            df = self.tail_param
            return self.sigma * math.sqrt((df - 2.0) / df) * np.abs(rng.standard_t(df, n))
        alpha = self.tail_param
        x = 1.0 + rng.pareto(alpha, n)
        scale = self.sigma * (alpha - 1.0) * math.sqrt((alpha - 2.0) / alpha)
        return scale * (x - alpha / (alpha - 1.0))

    def directions(self, rng: np.random.Generator, n: int) -> NDArray[np.float64]:
        """Uniform random unit vectors, shape (n, dim)."""
        if self.dim == 1:
            return np.where(rng.standard_normal((n, 1)) >= 0.0, 1.0, -1.0)
        g = rng.standard_normal((n, self.dim))
        norms = np.linalg.norm(g, axis=1, keepdims=True)
        norms[norms < 1e-300] = 1.0
        return g / norms

    def sample(self, rng: np.random.Generator, n: int) -> NDArray[np.float64]:
        if self.sigma == 0.0:
            return np.zeros((n, self.dim))
        r = self.radial(rng, n)
        u = self.directions(rng, n)
        return r[:, None] * u

    def batch_means(
        self, rng: np.random.Generator, batch_sizes: NDArray[np.int64]
    ) -> NDArray[np.float64]:
        """Mean noise vector per mini-batch, shape (len(batch_sizes), dim).

        batch_sizes are consumed in order; draws for consecutive batches come
        from one bulk request so the stream layout is schedule-determined.
        """
        ms = np.asarray(batch_sizes, dtype=np.int64)
        if np.any(ms < 1):
            raise ValueError("all batch sizes must be >= 1")
        if self.sigma == 0.0:
            return np.zeros((ms.shape[0], self.dim))
        total = int(ms.sum())
        draws = self.sample(rng, total)
        offsets = np.zeros(ms.shape[0], dtype=np.int64)
        np.cumsum(ms[:-1], out=offsets[1:])
        sums = np.add.reduceat(draws, offsets, axis=0)
        return sums / ms[:, None]


def make_noise(family: str, sigma: float, tail_param: float, dim: int) -> IsotropicNoise:
    """Noise-model factory with per-family parameter validation."""
    return IsotropicNoise(family=family, sigma=sigma, dim=dim, tail_param=tail_param)


def with_dim(noise: IsotropicNoise, dim: int) -> IsotropicNoise:
    """Same noise law in a different ambient dimension."""
    return replace(noise, dim=dim)
