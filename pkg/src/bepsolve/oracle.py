"""Brute-force grid oracles for equilibrium and bilevel problems (dimension <= 3)."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels
from .bifunctions import Bifunction
from .errors import DiagnosticError, InvalidInputError
from .geometry import FeasibleSet

MAX_DIM = 3
# entries per block when a bifunction has to be evaluated on all grid pairs
PAIR_BLOCK = 2_000_000


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Regular grid of spacing ``step`` over ``bounds`` (a feasible set)."""

    step: float
    bounds: FeasibleSet
    max_points: int = 2_000_000

    def __post_init__(self):
        if not self.step > 0:
            raise InvalidInputError("grid step must be positive")

    @cached_property
    def _points(self):
        pts = self.bounds.grid_points(self.step, self.max_points)
        pts.setflags(write=False)
        return pts

    def points(self) -> np.ndarray:
        return self._points

    def refined(self, factor: int = 2) -> GridSpec:
        return GridSpec(self.step / factor, self.bounds, self.max_points)


def grid_residuals(psi: Bifunction, X, Y) -> np.ndarray:
    """``r_i = max(0, -min_j psi(X_i, Y_j))`` for every row of ``X``."""
    X = np.atleast_2d(np.asarray(X, float))
    Y = np.atleast_2d(np.asarray(Y, float))
    if psi.is_objective:
        return np.maximum(0.0, psi.potential(X) - np.min(psi.potential(Y)))
    if psi.is_linear_in_y:
        FX = np.atleast_2d(np.asarray(psi.operator(X), float))
        lowest = -_kernels.max_affine(-FX, Y)
        return np.maximum(0.0, np.einsum("ij,ij->i", FX, X) - lowest)
    parts = psi.regularized
    if parts is not None and parts.f.is_objective and parts.h.is_objective:
        w = parts.pair.grad1_d(X, parts.anchor) / parts.lam
        c = parts.eps * parts.f.potential(Y) + parts.h.potential(Y)
        lowest = -_kernels.max_affine(-w, Y, -c)
        here = parts.eps * parts.f.potential(X) + parts.h.potential(X) + np.einsum("ij,ij->i", w, X)
        return np.maximum(0.0, here - lowest)
    rows = max(1, PAIR_BLOCK // max(1, Y.shape[0]))
    out = np.empty(X.shape[0])
    for s in range(0, X.shape[0], rows):
        block = psi.eval_fn(X[s:s + rows, None, :], Y[None, :, :])
        out[s:s + rows] = np.maximum(0.0, -np.min(block, axis=1))
    return out


def lipschitz_estimate(psi: Bifunction, K: FeasibleSet, samples: int = 64, seed: int = 0) -> float:
    """Sampled Lipschitz constant of ``psi(x, .)`` over ``K``."""
    rng = np.random.default_rng(seed)
    x = K.sample(rng, samples, margin=0.0)
    y1 = K.sample(rng, samples, margin=0.0)
    y2 = K.sample(rng, samples, margin=0.0)
    num = np.abs(psi.eval_fn(x, y1) - psi.eval_fn(x, y2))
    den = np.linalg.norm(y1 - y2, axis=1)
    ok = den > 1e-12
    return float(np.max(num[ok] / den[ok])) if ok.any() else 0.0


def default_tol(psi: Bifunction, K: FeasibleSet, step: float, seed: int = 0) -> float:
    """Grid feasibility slack ``L_est * step``."""
    return lipschitz_estimate(psi, K, seed=seed) * step


def _grid_in(K: FeasibleSet, grid: GridSpec):
    if K.dimension > MAX_DIM:
        raise InvalidInputError(f"brute-force oracle supports dimension <= {MAX_DIM}")
    pts = grid.points()
    if pts.shape[1] != K.dimension:
        raise InvalidInputError("grid dimension does not match the feasible set")
    if grid.bounds is not K:
        keep = np.linalg.norm(K.project_many(pts) - pts, axis=1) <= 1e-12
        pts = pts[keep]
    if pts.shape[0] == 0:
        raise InvalidInputError("grid has no point inside the feasible set")
    return pts


def brute_force_ep(psi: Bifunction, K: FeasibleSet, grid: GridSpec, tol: float | None = None) -> np.ndarray:
    """Grid points ``u`` with ``min_y psi(u, y) >= -tol`` over the grid."""
    pts = _grid_in(K, grid)
    if tol is None:
        tol = default_tol(psi, K, grid.step) if K.has_interior else 0.0
    res = grid_residuals(psi, pts, pts)
    return pts[res <= tol]


def brute_force_bep(f: Bifunction, h: Bifunction, K: FeasibleSet, grid: GridSpec,
                    tol: float | None = None, tol_h: float | None = None) -> np.ndarray:
    """Grid solutions of the bilevel problem: filter ``S(f)`` by ``h`` over ``S(f)``."""
    inner = brute_force_ep(f, K, grid, tol)
    if inner.shape[0] == 0:
        raise DiagnosticError("inner grid solution set is empty", min_residual=float(
            np.min(grid_residuals(f, _grid_in(K, grid), _grid_in(K, grid)))))
    if tol_h is None:
        tol_h = tol if tol is not None else (default_tol(h, K, grid.step) if K.has_interior else 0.0)
    res = grid_residuals(h, inner, inner)
    return inner[res <= tol_h]


def nearest_distance(points, x, ord=np.inf) -> float:
    """Distance from ``x`` to the closest row of ``points``."""
    points = np.atleast_2d(points)
    return float(np.min(np.linalg.norm(points - np.asarray(x, float), ord=ord, axis=1)))
