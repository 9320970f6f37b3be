"""Two-component rotationally symmetric mixtures ``x = z + y * mu``.

Every noise family is written as ``z = r * w`` with ``w`` uniform on the unit
sphere and ``r`` drawn from a one-dimensional radial law. All 1-D and 2-D
marginals then reduce to single integrals against the radial density, which
is what :func:`certify_params` evaluates.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
import math

import numpy as np
from scipy import integrate, optimize, special, stats

from pseudoboost.exceptions import CertificationError, DimensionError, PreconditionError
from pseudoboost.numerics import as_generator, as_vector, normalize, sample_unit_sphere


class NoiseFamily(str, Enum):
    GAUSSIAN = "gaussian"
    UNIFORM_BALL = "uniform_ball"
    RADIAL_GAMMA = "radial_gamma"


@dataclass(frozen=True)
class NoiseSpec:
    """Isotropic, rotationally symmetric, unimodal noise.

    Shape parameters are fixed by isotropy: the uniform ball has radius
    ``sqrt(d + 2)`` and the radial-gamma law (density ``~ exp(-|z| / s)``)
    has scale ``s = 1 / sqrt(d + 1)``.
    """

    family: NoiseFamily = NoiseFamily.GAUSSIAN

    def __post_init__(self):
        try:
            object.__setattr__(self, "family", NoiseFamily(self.family))
        except ValueError:
            raise ValueError(
                f"unknown noise family {self.family!r}; "
                f"expected one of {[f.value for f in NoiseFamily]}"
            ) from None

    def radial_law(self, d: int):
        """Frozen scipy distribution of ``||z||`` in dimension ``d``."""
        _check_dim(d)
        if self.family is NoiseFamily.GAUSSIAN:
            return stats.chi(df=d)
        if self.family is NoiseFamily.UNIFORM_BALL:
            return stats.beta(d, 1, scale=math.sqrt(d + 2.0))
        return stats.gamma(a=d, scale=1.0 / math.sqrt(d + 1.0))

    def support_radius(self, d: int) -> float:
        return float(self.radial_law(d).support()[1])


@dataclass(frozen=True)
class DistParams:
    K: float
    U: float
    U_prime: float
    R: float

    def __post_init__(self):
        for name in ("K", "U", "U_prime", "R"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass(frozen=True, eq=False)
class MixtureModel:
    mu: np.ndarray
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    params: DistParams | None = None

    def __post_init__(self):
        mu = as_vector(self.mu).copy()
        _check_dim(mu.shape[0])
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        if self.params is None:
            object.__setattr__(self, "params", certify_params(self.noise, mu.shape[0]))

    @classmethod
    def build(cls, d: int, mu_norm: float, noise="gaussian", direction=None, R: float = 1.0):
        if direction is None:
            direction = np.zeros(d)
            direction[0] = 1.0
        direction = normalize(direction)
        if direction.shape[0] != d:
            raise DimensionError("direction length does not match d")
        spec = noise if isinstance(noise, NoiseSpec) else NoiseSpec(noise)
        return cls(mu_norm * direction, spec, certify_params(spec, d, R))

    @property
    def d(self) -> int:
        return self.mu.shape[0]

    @property
    def mu_norm(self) -> float:
        return float(np.linalg.norm(self.mu))

    @property
    def mu_bar(self) -> np.ndarray:
        if self.mu_norm == 0.0:
            raise PreconditionError("mu is zero; its direction is undefined")
        return self.mu / self.mu_norm

    @property
    def is_gaussian(self) -> bool:
        return self.noise.family is NoiseFamily.GAUSSIAN


def _check_dim(d):
    if int(d) < 2:
        raise DimensionError(f"dimension must be >= 2, got {d}")


# --------------------------------------------------------------------------
# sampling


def sample_noise(noise: NoiseSpec, d: int, n: int, rng) -> np.ndarray:
    _check_dim(d)
    gen = as_generator(rng)
    if noise.family is NoiseFamily.GAUSSIAN:
        return gen.standard_normal((n, d))
    directions = sample_unit_sphere(d, gen, size=n)
    radii = noise.radial_law(d).rvs(size=n, random_state=gen)
    return directions * radii[:, None]


def sample(model: MixtureModel, n: int, rng):
    """Draw ``n`` labelled points; returns ``(X, y)`` with ``y`` in {-1, +1}."""
    if n < 1:
        raise PreconditionError("n must be >= 1")
    gen = as_generator(rng)
    y = 2 * gen.integers(0, 2, size=n) - 1
    z = sample_noise(model.noise, model.d, n, gen)
    return z + y[:, None] * model.mu, y


def sample_noise_2d_marginal(noise: NoiseSpec, d: int, n: int, rng) -> np.ndarray:
    """Projection of ``n`` noise draws onto a fixed 2-D coordinate plane.

    Only the two retained coordinates of the direction are drawn explicitly;
    the other ``d - 2`` enter through a chi-square variate, so the cost does
    not grow with ``d``.
    """
    _check_dim(d)
    if n < 1:
        raise PreconditionError("n must be >= 1")
    gen = as_generator(rng)
    g = gen.standard_normal((n, 2))
    if noise.family is NoiseFamily.GAUSSIAN:
        return g
    rest = gen.chisquare(d - 2, size=n) if d > 2 else np.zeros(n)
    w = g / np.sqrt(np.sum(g**2, axis=1) + rest)[:, None]
    radii = noise.radial_law(d).rvs(size=n, random_state=gen)
    return w * radii[:, None]


# --------------------------------------------------------------------------
# marginal densities and tails


def _radial_logpdf(noise: NoiseSpec, d: int):
    """Closed-form log-density of ``||z||`` (scalar, fast) and its mode."""
    if noise.family is NoiseFamily.GAUSSIAN:
        c = -(d / 2.0 - 1.0) * math.log(2.0) - math.lgamma(d / 2.0)
        return (lambda r: c + (d - 1) * math.log(r) - 0.5 * r * r), math.sqrt(d - 1.0)
    if noise.family is NoiseFamily.UNIFORM_BALL:
        a = math.sqrt(d + 2.0)
        c = math.log(d) - d * math.log(a)
        return (lambda r: c + (d - 1) * math.log(r) if r <= a else -math.inf), a
    s = 1.0 / math.sqrt(d + 1.0)
    c = -math.lgamma(d) - d * math.log(s)
    return (lambda r: c + (d - 1) * math.log(r) - r / s), (d - 1) * s


@lru_cache(maxsize=256)
def _radial_setup(noise: NoiseSpec, d: int):
    logpdf, mode = _radial_logpdf(noise, d)
    # beyond this radius the radial law carries < 1e-30 mass
    hi = min(noise.support_radius(d), float(noise.radial_law(d).isf(1e-30)))
    return logpdf, mode, hi


def _radial_integral(noise, d, lo, kernel, gamma):
    """``int_lo^hi f_r(r) (1 - lo^2/r^2)^gamma kernel(r) dr`` for gamma >= -1/2.

    Substituting ``r = lo + v^2`` turns the factor ``(r - lo)^gamma`` into
    ``v^(2 gamma)``, which together with ``dr = 2 v dv`` is bounded.
    """
    logpdf, mode, hi = _radial_setup(noise, d)
    if lo >= hi:
        return 0.0

    def f(v):
        r = lo + v * v
        if r <= 0.0:
            return 0.0
        lp = logpdf(r)
        if lp == -math.inf:
            return 0.0
        shape = ((r + lo) / (r * r)) ** gamma
        return 2.0 * v ** (2.0 * gamma + 1.0) * shape * math.exp(lp) * kernel(r)

    vmax = math.sqrt(hi - lo)
    points = [math.sqrt(mode - lo)] if lo < mode < hi else None
    val, _ = integrate.quad(f, 0.0, vmax, points=points, limit=400, epsabs=0.0, epsrel=1e-11)
    return val


def marginal_density_1d(noise: NoiseSpec, d: int, u: float) -> float:
    """Density of ``<v, z>`` at ``u`` for any unit ``v``.

    ``<v, z> = r w`` with ``w`` one coordinate of a uniform unit vector, whose
    density is ``(1 - w^2)^((d-3)/2) / B(1/2, (d-1)/2)``.
    """
    _check_dim(d)
    u = abs(float(u))
    c = 1.0 / special.beta(0.5, (d - 1) / 2.0)
    return c * _radial_integral(noise, d, u, lambda r: 1.0 / r, (d - 3) / 2.0)


def marginal_density_2d(noise: NoiseSpec, d: int, s: float) -> float:
    """Density of the projection onto any 2-D subspace at radius ``s > 0``.

    The 2-D marginal of a uniform unit vector has density
    ``(d-2)/(2 pi) (1 - rho^2)^((d-4)/2)`` on the unit disk (``d >= 3``).
    """
    _check_dim(d)
    s = float(s)
    if s <= 0.0:
        raise PreconditionError("evaluate the 2-D density at s > 0")
    if d == 2:
        logpdf, _, _ = _radial_setup(noise, d)
        return math.exp(logpdf(s)) / (2.0 * math.pi * s)
    c = (d - 2) / (2.0 * math.pi)
    return c * _radial_integral(noise, d, s, lambda r: 1.0 / (r * r), (d - 4) / 2.0)


def marginal_tail(noise: NoiseSpec, d: int, t: float) -> float:
    """``P(|<v, z>| >= t)`` for any unit ``v``."""
    _check_dim(d)
    t = float(t)
    if t <= 0.0:
        return 1.0
    a, b = 0.5, (d - 1) / 2.0
    val = _radial_integral(noise, d, t, lambda r: special.betaincc(a, b, min(1.0, (t / r) ** 2)), 0.0)
    return min(1.0, val)


# --------------------------------------------------------------------------
# certification

TAIL_GRID_MAX = 40.0


def _tail_ratio(tail, t):
    p = tail(t)
    if p <= 0.0:
        return 0.0
    if p >= 1.0:
        return math.inf
    return t / -math.log(p)


def certify_subexponential(tail, t_max: float = TAIL_GRID_MAX, small_t_limit: float = 0.0,
                           n_grid: int = 400, k_step: float = 1e-4) -> float:
    """Smallest ``K`` on a ``k_step`` grid with ``tail(t) <= exp(-t / K)``.

    ``tail`` is the two-sided 1-D tail. The supremum of ``t / -log tail(t)``
    is located on a log grid over ``(0, t_max]``, refined locally, and
    combined with ``small_t_limit`` (the ``t -> 0`` value, ``1 / (2U)``). A
    supremum sitting at the upper end of the grid means the tail is heavier
    than exponential and certification fails.
    """
    ts = np.geomspace(1e-3, t_max, n_grid)
    ratios = np.array([_tail_ratio(tail, t) for t in ts])
    if not np.all(np.isfinite(ratios)):
        raise CertificationError("tail probability is 1 at some t > 0")
    i = int(np.argmax(ratios))
    if i >= n_grid - 3 and ratios[-1] > 0:
        raise CertificationError(
            f"tail ratio still growing at t = {t_max}; the law is not sub-exponential"
        )
    best = ratios[i]
    lo, hi = ts[max(i - 1, 0)], ts[min(i + 1, n_grid - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(lambda t: -_tail_ratio(tail, t), bounds=(lo, hi),
                                       method="bounded", options={"xatol": 1e-8})
        best = max(best, -res.fun)
    k_star = max(best, small_t_limit)
    return math.ceil(k_star / k_step) * k_step


@lru_cache(maxsize=64)
def certify_params(noise: NoiseSpec, d: int, R: float = 1.0) -> DistParams:
    """Numerically certified ``(K, U, U', R)`` for ``noise`` in dimension ``d``.

    ``U`` is the maximum of the 1-D marginal density on a grid (attained at 0
    for unimodal laws), ``U'`` the reciprocal of the minimum 2-D marginal
    density over ``0 < |a| <= R``, and ``K`` comes from
    :func:`certify_subexponential` on ``t`` in ``(0, 40]``.
    """
    _check_dim(d)
    if R <= 0:
        raise PreconditionError("R must be positive")
    rmax = noise.support_radius(d)
    us = np.linspace(0.0, min(6.0, rmax), 61)
    U = max(marginal_density_1d(noise, d, u) for u in us)

    ss = np.linspace(R / 50.0, R, 50)
    floor = min(marginal_density_2d(noise, d, s) for s in ss)
    if floor <= 0.0:
        raise CertificationError(f"2-D marginal vanishes inside the radius-{R} disk")

    K = certify_subexponential(lambda t: marginal_tail(noise, d, t),
                               small_t_limit=1.0 / (2.0 * U))
    return DistParams(K=float(K), U=float(U), U_prime=float(1.0 / floor), R=float(R))
