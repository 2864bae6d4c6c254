import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bepsolve.errors import InvalidInputError
from bepsolve.geometry import FeasibleSet

BOX = FeasibleSet.box([-1.0, -1.0], [1.0, 1.0])
SIMPLEX3 = FeasibleSet.simplex(3)
BALL = FeasibleSet.ball([0.0, 0.0], 1.0)
TRIANGLE = FeasibleSet.halfspaces([[-1, 0], [0, -1], [1, 1]], [0, 0, 1])

vec2 = st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=2).map(np.array)
vec3 = st.lists(st.floats(-5, 5, allow_nan=False), min_size=3, max_size=3).map(np.array)


def test_box_projection_examples():
    assert np.allclose(BOX.project([2.0, 0.5]), [1.0, 0.5])
    assert np.array_equal(BOX.project([0.0, 0.0]), [0.0, 0.0])


def test_simplex_projection_example():
    # KKT by hand: minimize |y - (1,1)|^2 on y1 + y2 = 1 gives (0.5, 0.5)
    assert np.allclose(FeasibleSet.simplex(2).project([1.0, 1.0]), [0.5, 0.5], atol=1e-15)


def test_contains_examples():
    assert BOX.contains([0.0, 0.0], 0.0)
    assert not BOX.contains([1.001, 0.0], 1e-6)
    assert BALL.contains([1.0, 0.0], 0.0)
    with pytest.raises(InvalidInputError):
        BOX.contains([0.0, 0.0], -1.0)


def test_support_function_examples():
    assert BOX.support_function([1.0, 2.0]) == pytest.approx(3.0)
    assert SIMPLEX3.support_function([1.0, 5.0, 2.0]) == pytest.approx(5.0)
    for K in (BOX, SIMPLEX3, BALL, TRIANGLE):
        assert K.support_function(np.zeros(K.dimension)) == 0.0
    assert BALL.support_function([3.0, 4.0]) == pytest.approx(5.0)
    assert TRIANGLE.support_function([1.0, 2.0]) == pytest.approx(2.0)


def test_support_function_matches_grid_max():
    rng = np.random.default_rng(3)
    for K in (BOX, SIMPLEX3, BALL, TRIANGLE):
        pts = K.grid_points(0.01 if K.dimension == 2 else 0.02)
        for q in rng.standard_normal((5, K.dimension)):
            grid_max = float(np.max(pts @ q))
            sigma = K.support_function(q)
            assert sigma >= grid_max - 1e-12
            assert sigma - grid_max <= 0.03 * np.linalg.norm(q) + 1e-12


def test_dimension_mismatch_is_invalid_input():
    with pytest.raises(InvalidInputError):
        BOX.project([1.0, 2.0, 3.0])
    with pytest.raises(InvalidInputError):
        BOX.contains([1.0], 0.0)
    with pytest.raises(InvalidInputError):
        SIMPLEX3.support_function([1.0, 2.0])


@pytest.mark.parametrize("bad", [
    lambda: FeasibleSet.box([1.0], [0.0]),
    lambda: FeasibleSet.box([0.0, 0.0], [1.0]),
    lambda: FeasibleSet.box([0.0], [np.inf]),
    lambda: FeasibleSet.simplex(0),
    lambda: FeasibleSet.simplex(2, -1.0),
    lambda: FeasibleSet.ball([0.0], 0.0),
    lambda: FeasibleSet.halfspaces([[1.0, 0.0]], [1.0]),  # unbounded
    lambda: FeasibleSet.halfspaces([[1.0], [-1.0]], [0.0, -1.0]),  # empty
    lambda: FeasibleSet.halfspaces([[0.0, 0.0]], [1.0]),
])
def test_invalid_constructions_are_rejected(bad):
    with pytest.raises(InvalidInputError):
        bad()


def test_witness_is_interior_and_deterministic():
    assert np.array_equal(BOX.witness, [0.0, 0.0])
    assert np.allclose(SIMPLEX3.witness, [1 / 3] * 3)
    for K in (BOX, SIMPLEX3, BALL, TRIANGLE):
        assert K.is_interior(K.witness)
        assert K.contains(K.witness)


def test_bounding_box_of_polyhedron():
    lo, hi = TRIANGLE.bounding_box()
    assert np.allclose(lo, [0, 0], atol=1e-9) and np.allclose(hi, [1, 1], atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(vec2)
def test_projection_is_idempotent_and_feasible(p):
    for K in (BOX, BALL, TRIANGLE, FeasibleSet.simplex(2)):
        x = K.project(p)
        assert np.allclose(K.project(x), x, atol=1e-12)
        assert K.contains(x, 1e-10)


@settings(max_examples=60, deadline=None)
@given(vec2, vec2)
def test_projection_obeys_the_obtuse_angle_criterion(p, y_raw):
    for K in (BOX, BALL, TRIANGLE):
        x = K.project(p)
        y = K.project(y_raw)
        assert (p - x) @ (y - x) <= 1e-9


@settings(max_examples=60, deadline=None)
@given(vec3)
def test_simplex_projection_against_slsqp_free_oracle(p):
    # Oracle: the projection is max(p - tau, 0) with tau solving sum = 1; bisection on tau
    lo, hi = p.min() - 1.0, p.max()
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.maximum(p - mid, 0).sum() > 1:
            lo = mid
        else:
            hi = mid
    expected = np.maximum(p - 0.5 * (lo + hi), 0)
    assert np.allclose(SIMPLEX3.project(p), expected, atol=1e-9)


def test_projection_is_nonexpansive():
    rng = np.random.default_rng(0)
    for K in (BOX, BALL, SIMPLEX3, TRIANGLE):
        P = rng.standard_normal((1000, K.dimension)) * 3
        R = rng.standard_normal((1000, K.dimension)) * 3
        a, b = K.project_many(P), K.project_many(R)
        assert np.all(np.linalg.norm(a - b, axis=1) <= np.linalg.norm(P - R, axis=1) + 1e-10)
        assert all(K.contains(x, 1e-10) for x in a[:200])


def test_support_function_is_positively_homogeneous():
    rng = np.random.default_rng(1)
    for K in (BOX, BALL, SIMPLEX3, TRIANGLE):
        for q in rng.standard_normal((20, K.dimension)):
            t = rng.uniform(0.1, 10)
            assert K.support_function(t * q) == pytest.approx(t * K.support_function(q), abs=1e-10)


def test_sampling_respects_margin_and_interior():
    rng = np.random.default_rng(2)
    for K in (BOX, BALL, SIMPLEX3, TRIANGLE):
        pts = K.sample(rng, 200, margin=1e-3)
        assert all(K.is_interior(x) for x in pts)
    with pytest.raises(InvalidInputError):
        FeasibleSet.box([0.0, 1.0], [1.0, 1.0]).sample(rng, 3)


def test_grids_include_endpoints_and_respect_the_guard():
    pts = FeasibleSet.box([0.0], [1.0]).grid_points(0.3)
    assert pts[0, 0] == 0.0 and pts[-1, 0] == 1.0
    assert np.max(np.diff(pts[:, 0])) <= 0.3
    simplex_pts = SIMPLEX3.grid_points(0.1)
    assert np.all(simplex_pts >= 0) and np.allclose(simplex_pts.sum(axis=1), 1.0, atol=1e-12)
    assert len(simplex_pts) == 66
    with pytest.raises(InvalidInputError, match="step >="):
        BOX.grid_points(1e-4, max_points=1000)
    assert BOX.grid_count(0.01) == 201 * 201


def test_singleton_box():
    K = FeasibleSet.box([0.5, 0.5], [0.5, 0.5])
    assert not K.has_interior
    assert np.array_equal(K.grid_points(0.1), [[0.5, 0.5]])
    assert K.contains([0.5, 0.5])
