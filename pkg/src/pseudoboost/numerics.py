"""Vector helpers, sphere geometry and seeded random streams.

Vectors are plain 1-D ``float64`` numpy arrays. Projections onto the tangent
space of the sphere are applied as ``x - beta * <beta, x>``; no projector
matrix is ever formed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pseudoboost.exceptions import DegenerateInputError, DimensionError, PreconditionError

ATOL = 1e-10
UNIT_TOL = 1e-9


def as_vector(v) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"expected a 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DegenerateInputError("vector has non-finite entries")
    return arr


def dot(a, b) -> float:
    a, b = as_vector(a), as_vector(b)
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(a @ b)


def norm(v) -> float:
    return float(np.linalg.norm(as_vector(v)))


def normalize(v) -> np.ndarray:
    v = as_vector(v)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise DegenerateInputError("cannot normalize the zero vector")
    return v / n


def is_unit(v, tol: float = UNIT_TOL) -> bool:
    return abs(np.linalg.norm(v) - 1.0) <= tol


def require_unit(v, name: str = "vector", tol: float = UNIT_TOL) -> np.ndarray:
    v = as_vector(v)
    if not is_unit(v, tol):
        raise PreconditionError(f"{name} must have unit norm (got {np.linalg.norm(v)!r})")
    return v


def angle_between(a, b) -> float:
    """Angle in radians, with the cosine clamped to [-1, 1]."""
    a, b = as_vector(a), as_vector(b)
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("angle with the zero vector is undefined")
    c = float(a @ b) / (na * nb)
    return float(np.arccos(min(1.0, max(-1.0, c))))


def delta_sq(beta, mu_bar) -> float:
    """Squared distance ``||beta - mu_bar||^2`` between two unit vectors.

    Equals ``2 (1 - cos theta) = 4 sin^2(theta / 2)``.
    """
    beta = require_unit(beta, "beta")
    mu_bar = require_unit(mu_bar, "mu_bar")
    # inputs are unit only up to UNIT_TOL; renormalize so the identity holds to 1e-10
    diff = beta / np.linalg.norm(beta) - mu_bar / np.linalg.norm(mu_bar)
    return float(diff @ diff)


def tangent_project(beta: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Apply ``I - beta beta^T`` to ``x`` (rows of ``x`` if 2-D)."""
    if x.ndim == 1:
        return x - beta * (beta @ x)
    return x - np.outer(x @ beta, beta)


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream keyed by ``(seed, stream_index)``.

    Backed by the counter-based Philox generator; ``stream_index`` may be an
    int or a tuple of ints and is folded into the seed sequence's spawn key,
    so distinct indices give independent streams.
    """

    seed: int = 0
    stream_index: int | tuple = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def key(self) -> tuple:
        idx = self.stream_index
        return tuple(int(i) for i in idx) if isinstance(idx, tuple) else (int(idx),)

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=self.key)
        return np.random.Generator(np.random.Philox(ss))

    def child(self, *index: int) -> "RngStream":
        return RngStream(self.seed, self.key + tuple(int(i) for i in index))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if rng is None or isinstance(rng, (int, np.integer)):
        return RngStream(0 if rng is None else int(rng)).generator()
    raise TypeError(f"cannot build a random generator from {type(rng).__name__}")


def sample_unit_sphere(d: int, rng, size: int | None = None) -> np.ndarray:
    """Uniform direction(s) on the unit sphere in ``R^d``."""
    if d < 2:
        raise DimensionError(f"sphere sampling needs d >= 2, got {d}")
    gen = as_generator(rng)
    shape = (d,) if size is None else (size, d)
    g = gen.standard_normal(shape)
    # a zero Gaussian draw has probability zero; redraw defensively
    nrm = np.linalg.norm(g, axis=-1, keepdims=True)
    while np.any(nrm == 0.0):
        g = gen.standard_normal(shape)
        nrm = np.linalg.norm(g, axis=-1, keepdims=True)
    return g / nrm


def unit_at_angle(mu_bar: np.ndarray, theta: float, rng=None, other=None) -> np.ndarray:
    """Unit vector at angle ``theta`` from ``mu_bar``.

    The orthogonal component points along ``other`` when given, otherwise
    along a random tangent direction (or the first coordinate axis not
    parallel to ``mu_bar`` if ``rng`` is None).
    """
    mu_bar = normalize(mu_bar)
    d = mu_bar.shape[0]
    if other is None:
        if rng is None:
            idx = int(np.argmin(np.abs(mu_bar)))
            other = np.zeros(d)
            other[idx] = 1.0
        else:
            other = sample_unit_sphere(d, rng)
    perp = tangent_project(mu_bar, as_vector(other))
    perp = normalize(perp)
    v = np.cos(theta) * mu_bar + np.sin(theta) * perp
    return v / np.linalg.norm(v)
