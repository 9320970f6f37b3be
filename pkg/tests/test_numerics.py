import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from pseudoboost.exceptions import DegenerateInputError, DimensionError, PreconditionError
from pseudoboost.numerics import (
    RngStream,
    angle_between,
    as_generator,
    delta_sq,
    dot,
    is_unit,
    norm,
    normalize,
    require_unit,
    sample_unit_sphere,
    tangent_project,
    unit_at_angle,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
vectors = arrays(np.float64, st.integers(2, 30), elements=finite).filter(
    lambda v: np.linalg.norm(v) > 1e-6
)


def test_dot_and_norm():
    assert dot([1, 2, 3], [4, 5, 6]) == 32.0
    assert norm([3, 4]) == 5.0


def test_dot_length_mismatch():
    with pytest.raises(DimensionError):
        dot([1, 2], [1, 2, 3])


def test_rejects_nonfinite_and_matrices():
    with pytest.raises(DegenerateInputError):
        norm([1.0, np.nan])
    with pytest.raises(DimensionError):
        norm(np.eye(2))


def test_normalize_zero_raises():
    with pytest.raises(DegenerateInputError):
        normalize(np.zeros(4))


@given(vectors)
def test_normalize_gives_unit_norm(v):
    assert abs(np.linalg.norm(normalize(v)) - 1.0) <= 1e-12


def test_require_unit():
    require_unit(np.array([0.6, 0.8]))
    with pytest.raises(PreconditionError):
        require_unit(np.array([1.0, 1.0]))


def test_angle_between_known_values():
    assert angle_between([1, 0], [0, 1]) == pytest.approx(math.pi / 2)
    assert angle_between([1, 0], [-2, 0]) == pytest.approx(math.pi)
    assert angle_between([1, 1], [3, 3]) == 0.0


def test_angle_between_clamps_rounding():
    v = normalize(np.arange(1.0, 8.0))
    assert angle_between(v, v * (1 + 1e-16)) == 0.0


@settings(max_examples=200)
@given(st.integers(2, 50), st.floats(0.0, math.pi), st.integers(0, 2**32 - 1))
def test_delta_sq_half_angle_identity(d, theta, seed):
    gen = RngStream(seed).generator()
    mu_bar = sample_unit_sphere(d, gen)
    beta = unit_at_angle(mu_bar, theta, rng=gen)
    assert abs(delta_sq(beta, mu_bar) - 4 * math.sin(theta / 2) ** 2) <= 1e-10


def test_delta_sq_requires_unit_inputs():
    with pytest.raises(PreconditionError):
        delta_sq(np.array([2.0, 0.0]), np.array([1.0, 0.0]))


@given(vectors, st.integers(0, 2**32 - 1))
def test_tangent_projection_is_orthogonal(x, seed):
    beta = sample_unit_sphere(x.shape[0], RngStream(seed).generator())
    p = tangent_project(beta, x)
    assert abs(p @ beta) <= 1e-10 * (1 + np.linalg.norm(x))


def test_tangent_projection_rows():
    beta = normalize(np.array([1.0, 2.0, 2.0]))
    X = np.arange(12.0).reshape(4, 3)
    P = tangent_project(beta, X)
    np.testing.assert_allclose(P @ beta, 0.0, atol=1e-12)
    np.testing.assert_allclose(P[1], tangent_project(beta, X[1]))


def test_unit_at_angle_hits_requested_angle():
    mu_bar = normalize(np.array([1.0, -2.0, 0.5, 3.0]))
    for theta in (0.0, 0.3, math.pi / 2, 2.5):
        v = unit_at_angle(mu_bar, theta, rng=1)
        assert is_unit(v)
        assert angle_between(v, mu_bar) == pytest.approx(theta, abs=1e-12)


def test_rng_stream_reproducible_and_independent():
    a = RngStream(7, 3).generator().standard_normal(5)
    b = RngStream(7, 3).generator().standard_normal(5)
    c = RngStream(7, 4).generator().standard_normal(5)
    d = RngStream(8, 3).generator().standard_normal(5)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)
    assert not np.allclose(a, d)


def test_rng_stream_children():
    s = RngStream(1, (2,))
    assert s.child(5).key == (2, 5)
    assert RngStream(1, 2).child(5) == s.child(5)
    x = s.child(0).generator().random(3)
    y = s.child(1).generator().random(3)
    assert not np.allclose(x, y)


def test_rng_stream_rejects_bad_seed():
    with pytest.raises(ValueError):
        RngStream(-1)
    with pytest.raises(ValueError):
        RngStream(2**64)


def test_as_generator_variants():
    g = np.random.default_rng(0)
    assert as_generator(g) is g
    assert isinstance(as_generator(RngStream(3)), np.random.Generator)
    np.testing.assert_array_equal(as_generator(3).random(2), RngStream(3).generator().random(2))
    with pytest.raises(TypeError):
        as_generator("seed")


def test_sphere_samples_are_unit_and_centered():
    S = sample_unit_sphere(5, RngStream(0).generator(), size=20000)
    np.testing.assert_allclose(np.linalg.norm(S, axis=1), 1.0, atol=1e-12)
    assert np.max(np.abs(S.mean(axis=0))) < 0.02
    with pytest.raises(DimensionError):
        sample_unit_sphere(1, 0)
