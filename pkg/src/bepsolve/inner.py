"""Solver for the regularized equilibrium subproblems of the outer loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .bifunctions import Bifunction
from .errors import InvalidInputError, NumericalError
from .geometry import FeasibleSet

log = logging.getLogger(__name__)

MODES = ("auto", "objective_fast_path", "extragradient")
MEMBER_TOL = 1e-9


@dataclass(frozen=True)
class InnerSolveOptions:
    """Options of :func:`solve_ep`.

    ``tol`` bounds the equilibrium residual of the returned point.
    ``stat_tol`` is the stationarity target the iterations run to
    (projected-gradient mapping norm, or fixed-point gap for extragradient);
    it is what makes consecutive outer iterates comparable at high precision.
    ``prox_step`` is the extragradient step ``c`` (estimated when ``None``).
    """

    tol: float = 1e-8
    max_iter: int = 20000
    prox_step: float | None = None
    mode: str = "auto"
    stat_tol: float = 1e-12
    seed: int = 0

    def __post_init__(self):
        if not self.tol > 0:
            raise InvalidInputError("inner tol must be positive")
        if self.max_iter < 1:
            raise InvalidInputError("inner max_iter must be >= 1")
        if self.mode not in MODES:
            raise InvalidInputError(f"inner mode must be one of {MODES}")
        if self.prox_step is not None and not self.prox_step > 0:
            raise InvalidInputError("prox_step must be positive")


class InnerResult(NamedTuple):
    x: np.ndarray
    iterations: int
    residual: float
    converged: bool
    path: str


class MinimizeResult(NamedTuple):
    x: np.ndarray
    iterations: int
    stationarity: float


def _finite(v):
    return bool(np.all(np.isfinite(v)))


def minimize_convex(fun: Callable, grad: Callable, K: FeasibleSet, y0, *,
                    stat_tol: float = 1e-12, max_iter: int = 10000,
                    lipschitz0: float = 1.0) -> MinimizeResult:
    """Accelerated projected gradient with backtracking and adaptive restart.

    Trial points where ``fun`` or ``grad`` is not finite are rejected by the
    backtracking, which keeps iterates inside the domain of barrier-like terms
    (entropy gradients at the simplex boundary).  Stops when the gradient
    mapping norm is at most ``stat_tol`` or when iterates stagnate at
    floating-point resolution.
    """
    x = K.project(y0)
    with np.errstate(all="ignore"):
        fx, gx = fun(x), grad(x)
    if not (_finite(fx) and _finite(gx)):
        raise NumericalError("objective not finite at the starting point", snapshot=x)
    y, gy = x, gx
    t = 1.0
    L = lipschitz0
    gm = np.inf
    stall = 0
    for it in range(1, max_iter + 1):
        L = max(L * 0.9, 1e-12)
        while True:
            z = K.project(y - gy / L)
            with np.errstate(all="ignore"):
                fz, gz = fun(z), grad(z)
            if _finite(fz) and _finite(gz):
                d = z - y
                dd = d @ d
                if dd == 0.0 or (gz - gy) @ d <= L * dd * (1 + 1e-12):
                    break
            L *= 2.0
            if L > 1e30:
                raise NumericalError("backtracking failed: objective not smooth or not finite",
                                     snapshot=y)
        gm = L * np.sqrt(dd)
        if gm <= stat_tol:
            return MinimizeResult(z, it, gm)
        moved = np.linalg.norm(z - x)
        stall = stall + 1 if moved <= 4e-16 * (1.0 + np.linalg.norm(z)) else 0
        if stall >= 25:
            return MinimizeResult(z, it, gm)
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        if (y - z) @ (z - x) > 0:
            t_new, y_next = 1.0, z
        else:
            y_next = z + ((t - 1) / t_new) * (z - x)
        x, t = z, t_new
        if y_next is z:
            gy = gz
        else:
            with np.errstate(all="ignore"):
                gy = grad(y_next)
            if not _finite(gy) or not _finite(fun(y_next)):
                y_next, gy, t = z, gz, 1.0
        y = y_next
    return MinimizeResult(x, max_iter, gm)


def _check_member(K, x, name="x"):
    x = K._check(x, name)
    if not K.contains(x, MEMBER_TOL):
        raise InvalidInputError(f"{name} not in feasible set")
    return x


def _min_over_K(psi: Bifunction, K: FeasibleSet, x, max_iter=5000):
    """``min_{y in K} psi(x, y)`` exploiting structure; convexity in y assumed."""
    if psi.is_linear_in_y and (K.kind != "halfspaces" or K.vertices is not None):
        Fx = np.asarray(psi.operator(x), float)
        return -K.support_function(-Fx) - float(Fx @ x)
    if psi.is_objective:
        res = minimize_convex(psi.potential, psi.potential_grad, K, x,
                              stat_tol=1e-13, max_iter=max_iter)
        return float(psi.potential(res.x) - psi.potential(x))
    res = minimize_convex(lambda v: psi.eval_fn(x, v), lambda v: psi.grad_y(x, v), K, x,
                          stat_tol=1e-13, max_iter=max_iter)
    return float(psi.eval_fn(x, res.x))


def ep_residual(psi: Bifunction, K: FeasibleSet, x, probe=None) -> float:
    """``max(0, -min_y psi(x, y))`` over ``K``.

    ``probe`` may be a grid spec (anything with ``points()``) or an ``(m, n)``
    array of probe points, in which case the minimum runs over those points.
    By default the minimum is computed by convex minimization of
    ``psi(x, .)``, combined with a coarse grid when the dimension is at most 3.
    """
    x = _check_member(K, x)
    if probe is not None:
        Y = probe.points() if hasattr(probe, "points") else np.asarray(probe, float)
        vals = np.asarray(psi.eval_fn(x[None, :], Y), float)
        return float(max(0.0, -np.min(vals)))
    best = _min_over_K(psi, K, x)
    if K.dimension <= 3:
        lo, hi = K.bounding_box()
        step = float(np.max(hi - lo)) / 10 if np.any(hi > lo) else 1.0
        Y = K.grid_points(step, max_points=10_000)
        best = min(best, float(np.min(psi.eval_fn(x[None, :], Y))))
    return float(max(0.0, -best))


def _potential_of(psi: Bifunction):
    """Return ``(fun, grad)`` whose minimizers over K solve EP(psi), or ``None``."""
    if psi.is_objective:
        return psi.potential, psi.potential_grad
    parts = psi.regularized
    if parts is None or not (parts.f.is_objective and parts.h.is_objective):
        return None
    f, h, eps, inv, a, pair = parts.f, parts.h, parts.eps, 1.0 / parts.lam, parts.anchor, parts.pair

    def fun(y):
        return eps * f.potential(y) + h.potential(y) + inv * pair.eval_d(y, a)

    def grad(y):
        return eps * f.potential_grad(y) + h.potential_grad(y) + inv * pair.grad1_d(y, a)

    return fun, grad


def estimate_prox_step(psi: Bifunction, K: FeasibleSet, x0, seed: int = 0, probes: int = 16) -> float:
    """``0.5 / L`` for a sampled Lipschitz estimate of ``x -> grad_y psi(x, x)``."""
    rng = np.random.default_rng(seed)
    if K.has_interior:
        pts = K.sample(rng, 2 * probes, margin=0.0)
    else:
        pts = np.vstack([x0] * (2 * probes))
    a, b = pts[:probes], pts[probes:]
    va = np.array([psi.grad_y(p, p) for p in a])
    vb = np.array([psi.grad_y(p, p) for p in b])
    dist = np.linalg.norm(a - b, axis=1)
    ok = dist > 1e-12
    L = float(np.max(np.linalg.norm(va - vb, axis=1)[ok] / dist[ok])) if ok.any() else 0.0
    if L <= 0:
        return 1e2
    return float(np.clip(0.5 / L, 1e-4, 1e2))


def _prox(psi, a, center, c, K, stat_tol, max_iter):
    """``argmin_{u in K} psi(a, u) + |u - center|^2 / (2c)``."""
    if psi.is_linear_in_y:
        return K.project(center - c * np.asarray(psi.operator(a), float))
    inv = 1.0 / c

    def fun(u):
        diff = u - center
        return psi.eval_fn(a, u) + 0.5 * inv * np.einsum("...i,...i->...", diff, diff)

    def grad(u):
        return psi.grad_y(a, u) + inv * (u - center)

    return minimize_convex(fun, grad, K, center, stat_tol=stat_tol, max_iter=max_iter,
                           lipschitz0=inv).x


def _extragradient(psi, K, x0, opts: InnerSolveOptions):
    c = opts.prox_step or estimate_prox_step(psi, K, x0, opts.seed)
    sub_tol = max(0.1 * opts.stat_tol, 1e-14)
    x = x0
    stall = 0
    for it in range(1, opts.max_iter + 1):
        y = _prox(psi, x, x, c, K, sub_tol, 2000)
        gap = np.linalg.norm(y - x) / c
        if gap <= opts.stat_tol:
            return y, it
        x_new = _prox(psi, y, x, c, K, sub_tol, 2000)
        if not _finite(x_new):
            raise NumericalError("extragradient produced a non-finite iterate", snapshot=x)
        stall = stall + 1 if np.linalg.norm(x_new - x) <= 4e-16 * (1 + np.linalg.norm(x)) else 0
        x = x_new
        if stall >= 10:
            return x, it
    return x, opts.max_iter


def solve_ep(psi: Bifunction, K: FeasibleSet, x_init, opts: InnerSolveOptions | None = None) -> InnerResult:
    """Find ``x`` in ``K`` with ``psi(x, y) >= 0`` for all ``y`` in ``K``.

    Fast path: when ``psi`` is an objective difference, or the regularization of
    two objective differences, the problem is the convex minimization of
    ``eps P_f + P_h + d(., anchor) / lam`` over ``K``.  General path: two-step
    extragradient with proximal subproblems solved by projected gradient.
    Non-convergence is reported through ``converged``; it is not an exception.
    """
    opts = opts or InnerSolveOptions()
    x0 = K.project(_check_member(K, x_init, "x_init"))
    pot = _potential_of(psi)
    mode = opts.mode
    if mode == "auto":
        mode = "objective_fast_path" if pot is not None else "extragradient"
    if mode == "objective_fast_path":
        if pot is None:
            raise InvalidInputError("objective fast path needs objective-structured bifunctions")
        res = minimize_convex(pot[0], pot[1], K, x0, stat_tol=opts.stat_tol, max_iter=opts.max_iter)
        x, iters = res.x, res.iterations
    else:
        x, iters = _extragradient(psi, K, x0, opts)
    if not _finite(x):
        raise NumericalError("inner solve produced a non-finite point", snapshot=x0)
    residual = ep_residual(psi, K, x)
    converged = residual <= opts.tol
    if not converged:
        log.info("inner solve (%s) stopped at residual %.3e > tol %.3e", mode, residual, opts.tol)
    return InnerResult(x, iters, residual, converged, mode)
