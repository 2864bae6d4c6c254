import numpy as np
import pytest

from bepsolve.bifunctions import explicit, from_objective, from_operator, regularize
from bepsolve.distances import build_entropy_pair, build_euclidean_pair
from bepsolve.errors import InvalidInputError, NumericalError
from bepsolve.geometry import FeasibleSet
from bepsolve.inner import (InnerSolveOptions, ep_residual, estimate_prox_step, minimize_convex,
                            solve_ep)
from bepsolve.oracle import GridSpec
from bepsolve.problems import p2, rotation_field

LINE = FeasibleSet.box([-1.0], [1.0])
BOX = FeasibleSet.box([-1.0, -1.0], [1.0, 1.0])


def x_squared():
    return from_objective(lambda x: x[..., 0] ** 2, lambda x: 2 * x, convention="advantage")


def p2_k0():
    prob = p2()
    return regularize(prob.f, prob.h, 1.0, 1.0, [0.0, 0.0], build_euclidean_pair(prob.K)), prob.K


def test_options_validation():
    for bad in (dict(tol=0), dict(max_iter=0), dict(mode="newton"), dict(prox_step=-1.0)):
        with pytest.raises(InvalidInputError):
            InnerSolveOptions(**bad)


def test_residual_examples():
    psi = x_squared()
    assert ep_residual(psi, LINE, [0.0]) == 0.0
    assert ep_residual(psi, LINE, [1.0]) == pytest.approx(1.0, abs=1e-12)
    single = FeasibleSet.box([0.4], [0.4])
    assert ep_residual(psi, single, [0.4]) == 0.0
    with pytest.raises(InvalidInputError, match="not in feasible set"):
        ep_residual(psi, LINE, [1.5])


def test_residual_with_probes_and_refinement():
    psi = x_squared()
    coarse = GridSpec(0.5, LINE)
    fine = coarse.refined(4)
    r_coarse = ep_residual(psi, LINE, [0.8], probe=coarse)
    r_fine = ep_residual(psi, LINE, [0.8], probe=fine)
    assert r_fine >= r_coarse - 1e-12
    assert ep_residual(psi, LINE, [0.8], probe=np.array([[0.8], [0.5]])) == pytest.approx(0.64 - 0.25)


def test_residual_of_operator_bifunction_uses_support_function():
    rot = from_operator(rotation_field)
    # min_y <F(x), y - x> over the box at x = (1, 0): F = (0, 1) -> y2 = -1, value -1
    assert ep_residual(rot, BOX, [1.0, 0.0]) == pytest.approx(1.0)
    assert ep_residual(rot, BOX, [0.0, 0.0]) == 0.0


def test_objective_example():
    psi = from_objective(lambda x: (x[..., 0] - 0.3) ** 2, lambda x: 2 * (x - 0.3))
    res = solve_ep(psi, LINE, [-0.9], InnerSolveOptions(tol=1e-8))
    assert res.converged and res.path == "objective_fast_path"
    assert res.x[0] == pytest.approx(0.3, abs=1e-8)


def test_optimal_start_is_a_fixed_point():
    psi = from_objective(lambda x: (x[..., 0] - 0.3) ** 2, lambda x: 2 * (x - 0.3))
    res = solve_ep(psi, LINE, [0.3], InnerSolveOptions(tol=1e-6))
    assert res.iterations <= 1 and res.x[0] == 0.3


def test_p2_subproblem_has_the_exact_solution_one_third():
    # EP of fbar is the minimization of (y1+y2)^2 + |y - (1/2,-1/2)|^2 + |y|^2 / 2,
    # whose stationarity system [[5, 2], [2, 5]] y = (1, -1) gives y = (1/3, -1/3)
    exact = np.linalg.solve([[5.0, 2.0], [2.0, 5.0]], [1.0, -1.0])
    psi, K = p2_k0()
    res = solve_ep(psi, K, [0.0, 0.0])
    assert res.converged
    assert np.allclose(res.x, exact, atol=1e-9)
    assert np.allclose(exact, [1 / 3, -1 / 3])


def test_fast_path_and_extragradient_agree():
    psi, K = p2_k0()
    tol = 1e-8
    fast = solve_ep(psi, K, [0.0, 0.0], InnerSolveOptions(tol=tol, mode="objective_fast_path"))
    eg = solve_ep(psi, K, [0.0, 0.0], InnerSolveOptions(tol=tol, mode="extragradient"))
    assert eg.path == "extragradient" and eg.converged
    assert np.linalg.norm(fast.x - eg.x) <= 10 * tol


def test_solutions_are_unique_across_starts():
    psi, K = p2_k0()
    rng = np.random.default_rng(5)
    sols = [solve_ep(psi, K, x0).x for x0 in K.sample(rng, 5)]
    assert max(np.linalg.norm(s - sols[0]) for s in sols) <= 1e-7


def test_reported_residual_matches_independent_grid_recomputation():
    psi, K = p2_k0()
    res = solve_ep(psi, K, [0.5, 0.5])
    grid = GridSpec(0.01, K).points()
    independent = max(0.0, -float(np.min(psi.eval_fn(res.x[None, :], grid))))
    assert res.residual >= independent - 1e-12


def test_extragradient_on_monotone_operator():
    prob_h = from_objective(lambda x: 0.5 * np.einsum("...i,...i->...", x - 0.2, x - 0.2),
                            lambda x: x - 0.2)
    psi = regularize(from_operator(rotation_field), prob_h, 2.0, 1.0, [0.5, 0.5],
                     build_euclidean_pair(BOX))
    res = solve_ep(psi, BOX, [0.5, 0.5], InnerSolveOptions(tol=1e-8))
    assert res.path == "extragradient" and res.converged
    # stationarity of the strongly monotone VI: 2 F(x) + (x - 0.2) + (x - anchor) = 0
    x = res.x
    assert np.allclose(2 * rotation_field(x) + (x - 0.2) + (x - 0.5), 0, atol=1e-6)


def test_non_convergence_is_reported_not_raised():
    rot = from_operator(rotation_field)
    res = solve_ep(rot, BOX, [0.9, 0.9], InnerSolveOptions(tol=1e-10, max_iter=2))
    assert not res.converged and res.residual > 1e-10


def test_fast_path_requires_structure():
    with pytest.raises(InvalidInputError):
        solve_ep(from_operator(rotation_field), BOX, [0.0, 0.0],
                 InnerSolveOptions(mode="objective_fast_path"))


def test_non_finite_objective_raises_numerical_error():
    bad = from_objective(lambda x: np.full(np.shape(x)[:-1], np.nan), lambda x: np.nan * x)
    with pytest.raises(NumericalError) as info:
        solve_ep(bad, LINE, [0.2])
    assert info.value.snapshot is not None


def test_entropy_regularized_subproblem_stays_interior():
    simplex = FeasibleSet.simplex(3)
    pair = build_entropy_pair(simplex)
    f = from_objective(lambda x: x[..., 0], lambda x: np.broadcast_to([1.0, 0, 0], x.shape))
    h = from_objective(lambda x: 0 * x[..., 0], lambda x: 0 * x)
    anchor = np.array([0.5, 0.3, 0.2])
    res = solve_ep(regularize(f, h, 1.0, 1.0, anchor, pair), simplex, anchor)
    # closed form: x ∝ anchor * exp(-grad) (mirror step)
    w = anchor * np.exp(-np.array([1.0, 0.0, 0.0]))
    assert np.allclose(res.x, w / w.sum(), atol=1e-8)
    assert simplex.is_interior(res.x)


def test_minimize_convex_detects_stall_and_returns():
    # quartic: the gradient mapping never reaches 1e-30, so the stall test must end the run
    res = minimize_convex(lambda y: float((y[0] - 0.1) ** 4), lambda y: 4 * (y - 0.1) ** 3, LINE,
                          [0.5], stat_tol=1e-30, max_iter=100000)
    assert abs(res.x[0] - 0.1) < 1e-3 and res.iterations < 100000


def test_minimize_convex_rejects_nonsmooth_objectives():
    with pytest.raises(NumericalError):
        minimize_convex(lambda y: float(abs(y[0])), lambda y: np.sign(y), LINE, [0.5],
                        stat_tol=1e-30, max_iter=500)


def test_prox_step_estimate_is_clipped():
    psi, K = p2_k0()
    c = estimate_prox_step(psi, K, np.zeros(2))
    assert 1e-4 <= c <= 1e2
    const = explicit(lambda x, y: np.zeros(np.broadcast(x[..., 0], y[..., 0]).shape),
                     lambda x, y: np.zeros(np.broadcast(x, y).shape))
    assert estimate_prox_step(const, K, np.zeros(2)) == 1e2
