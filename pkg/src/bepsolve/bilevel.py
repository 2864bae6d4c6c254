"""Proximal point method for bilevel equilibrium problems, with convergence monitors."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .bifunctions import Bifunction, regularize
from .distances import ProximalPair, check_pair_compatible
from .errors import DiagnosticError, InvalidInputError, NumericalError
from .geometry import FeasibleSet
from .inner import InnerSolveOptions, ep_residual, solve_ep
from .oracle import GridSpec, grid_residuals

log = logging.getLogger(__name__)

TERMINATIONS = ("stopped_by_criterion", "step_tolerance", "max_outer", "non_converged_inner")


@dataclass(frozen=True, eq=False)
class Schedule:
    """Parameter sequences ``eps(k)`` (nondecreasing, unbounded) and ``lam(k) >= theta``."""

    eps: Callable[[int], float]
    lam: Callable[[int], float]
    theta: float
    preset: str = "custom"
    params: dict = field(default_factory=dict)

    @classmethod
    def linear(cls, eps0: float = 1.0, slope: float = 1.0, lambda0: float = 1.0) -> Schedule:
        """``eps(k) = eps0 + slope * k`` and constant ``lam(k) = lambda0``."""
        if not (eps0 > 0 and slope > 0 and lambda0 > 0):
            raise InvalidInputError("linear schedule needs eps0, slope, lambda0 > 0")
        return cls(lambda k: eps0 + slope * k, lambda k: lambda0, lambda0,
                   "linear_eps_const_lambda", {"eps0": eps0, "slope": slope, "lambda0": lambda0})

    def validate(self, horizon: int = 10**6) -> None:
        """Spot-check the schedule contract on ``k <= horizon``."""
        if not self.theta > 0:
            raise InvalidInputError("schedule theta must be positive")
        ks = np.unique(np.r_[np.arange(min(horizon, 1000) + 1),
                             np.geomspace(1000, max(horizon, 1000), 60).astype(int)])
        eps = np.array([self.eps(int(k)) for k in ks], float)
        lam = np.array([self.lam(int(k)) for k in ks], float)
        if not (np.all(np.isfinite(eps)) and np.all(eps > 0)):
            raise InvalidInputError("schedule eps must be positive and finite")
        if np.any(np.diff(eps) < 0):
            raise InvalidInputError("schedule eps must be nondecreasing")
        if not eps[-1] > eps[0]:
            raise InvalidInputError("schedule eps must grow without bound")
        if np.any(lam < self.theta):
            k = int(ks[np.argmax(lam < self.theta)])
            raise InvalidInputError(f"schedule lambda({k}) is below theta={self.theta}")
        partial = np.cumsum([self.lam(k) for k in range(min(horizon, 10**4) + 1)])
        if not partial[-1] >= self.theta * partial.size:
            raise InvalidInputError("partial sums of lambda do not grow linearly")


def inner_tolerance(k: int, base: float = 1e-8) -> float:
    """Summable inner tolerance ``min(base, 1/(k+1)^2)``."""
    return min(base, 1.0 / (k + 1) ** 2)


@dataclass
class TraceRow:
    """Outer iteration ``k``: ``x`` is the new iterate ``x^(k+1)``."""

    k: int
    x: np.ndarray
    eps: float
    lam: float
    step_norm: float
    inner_iterations: int
    inner_residual: float
    inner_tol: float
    D_ref: float | None = None


@dataclass
class SolveReport:
    trace: list
    termination: str
    final_point: np.ndarray
    initial_point: np.ndarray
    f_residual: float
    fejer_slack_sum: float | None = None
    is_quasi_fejer: bool | None = None
    hypothesis_summands: list | None = None
    f_weighted_partial_sums: list | None = None

    @property
    def iterates(self) -> list:
        """``[x^0, x^1, ...]``."""
        return [self.initial_point] + [r.x for r in self.trace]

    @property
    def hypothesis_partial_sums(self) -> list | None:
        if self.hypothesis_summands is None:
            return None
        return np.cumsum(self.hypothesis_summands).tolist()


def stopping_check(x_prev, x_next, f: Bifunction, K: FeasibleSet, tol: float) -> bool:
    """Practical stop: ``|x_next - x_prev| <= tol`` and ``x_next`` is a ``tol``-equilibrium of f."""
    step = float(np.linalg.norm(np.asarray(x_next, float) - np.asarray(x_prev, float)))
    if step > tol:
        return False
    return ep_residual(f, K, x_next) <= tol


def solve_bep(f: Bifunction, h: Bifunction, K: FeasibleSet, pair: ProximalPair,
              schedule: Schedule, x0, *, max_outer: int = 500, step_tol: float = 1e-10,
              residual_tol: float | None = None, inner: InnerSolveOptions | None = None,
              inner_tol_base: float = 1e-8, z_ref=None, audit_grid: GridSpec | None = None,
              on_row: Callable[[TraceRow], None] | None = None) -> SolveReport:
    """Run the proximal point method for the bilevel problem ``(f, h, K)``.

    Each outer step solves the equilibrium problem of
    ``eps_k f + h + (1/lam_k) <grad1 d(., x^k), . - .>`` starting from ``x^k``.
    The loop stops when the step is exactly zero at an equilibrium of ``f``
    (``stopped_by_criterion``; with ``h`` identically zero the step alone
    suffices), when the step is at most ``step_tol`` and the residual of ``f``
    at most ``residual_tol`` (``step_tolerance``), or after ``max_outer`` steps.

    When ``z_ref`` is given the report carries ``D(z_ref, x^k)`` per row, the
    quasi-Fejer slack, and (dimension <= 3) the hypothesis summands with
    ``p = 0``.
    """
    inner = inner or InnerSolveOptions()
    residual_tol = 100 * step_tol if residual_tol is None else residual_tol
    if max_outer < 1:
        raise InvalidInputError("max_outer must be >= 1")
    x = K._check(x0, "x0")
    if not K.contains(x, 1e-9):
        raise InvalidInputError("x0 not in feasible set")
    x = K.project(x)
    if not pair.admits_anchor(x):
        raise InvalidInputError("x0 must be strictly interior to the proximal pair domain")
    check_pair_compatible(pair, K)
    schedule.validate()
    z = None
    if z_ref is not None:
        z = K._check(z_ref, "z_ref")
        if not pair.in_domain(z):
            raise InvalidInputError("z_ref outside the proximal pair domain")

    x_init = x.copy()
    trace = []
    termination = "max_outer"
    for k in range(max_outer):
        eps_k, lam_k = float(schedule.eps(k)), float(schedule.lam(k))
        tol_k = inner_tolerance(k, inner_tol_base)
        psi_k = regularize(f, h, eps_k, lam_k, x, pair)
        res = solve_ep(psi_k, K, x, replace(inner, tol=tol_k))
        x_next = res.x
        step = float(np.linalg.norm(x_next - x))
        row = TraceRow(k, x_next, eps_k, lam_k, step, res.iterations, res.residual, tol_k,
                       None if z is None else float(pair.D(z, x_next)))
        trace.append(row)
        log.debug("k=%d eps=%g step=%.3e inner_it=%d res=%.2e", k, eps_k, step,
                  res.iterations, res.residual)
        if on_row is not None:
            on_row(row)
        if not res.converged:
            termination = "non_converged_inner"
            break
        if not pair.admits_anchor(x_next):
            raise NumericalError("iterate left the interior of the proximal pair domain",
                                 snapshot=x_next)
        if step == 0.0 and (h.is_zero or ep_residual(f, K, x_next) <= residual_tol):
            termination = "stopped_by_criterion"
            x = x_next
            break
        x = x_next
        if step <= step_tol and ep_residual(f, K, x) <= residual_tol:
            termination = "step_tolerance"
            break

    report = SolveReport(trace, termination, x.copy(), x_init, ep_residual(f, K, x))
    log.info("solve_bep: %s after %d outer iterations", termination, len(trace))
    if z is not None:
        fej = monitor_fejer(report, z, pair)
        report.fejer_slack_sum = fej.slack_sum
        report.is_quasi_fejer = fej.is_quasi_fejer
        terms = [r.lam * r.eps * float(f(z, r.x)) for r in trace]
        report.f_weighted_partial_sums = np.cumsum(terms).tolist()
        if K.dimension <= 3:
            grid = audit_grid or GridSpec(_audit_step(K), K)
            try:
                est = HypothesisEstimator(f, K, z, grid)
                zero = np.zeros(K.dimension)
                gap = est(zero)
                report.hypothesis_summands = [r.lam * r.eps * gap for r in trace]
            except DiagnosticError as exc:
                log.info("hypothesis summands not auditable: %s", exc)
    return report


def _audit_step(K: FeasibleSet) -> float:
    lo, hi = K.bounding_box()
    width = float(np.max(hi - lo)) or 1.0
    per_axis = {1: 2000, 2: 200, 3: 40}[K.dimension]
    return width / per_axis


@dataclass
class FejerReport:
    values: list
    increments: list
    slack_sum: float
    budget: float
    is_quasi_fejer: bool


def monitor_fejer(trace, z_ref, pair: ProximalPair, budget: float | None = None) -> FejerReport:
    """Positive parts of ``D(z, x^(k+1)) - D(z, x^k)`` along a run and their sum.

    ``trace`` is a :class:`SolveReport` (the default budget is then
    ``1e-4 + 10 * sum of inner tolerances``) or a sequence of iterates
    (default budget ``1e-4``).
    """
    z = np.asarray(z_ref, float)
    if not pair.in_domain(z):
        raise InvalidInputError("z_ref outside the proximal pair domain")
    if isinstance(trace, SolveReport):
        points = trace.iterates
        default = 1e-4 + 10 * sum(r.inner_tol for r in trace.trace)
    else:
        points = list(trace)
        default = 1e-4
    budget = default if budget is None else budget
    values = [float(pair.D(z, np.asarray(p, float))) for p in points]
    incr = [max(0.0, b - a) for a, b in zip(values[:-1], values[1:])]
    slack = float(sum(incr))
    return FejerReport(values, incr, slack, budget, slack <= budget)


class HypothesisEstimator:
    """Grid estimate of ``f_z*(q) - sigma_S(q)`` with ``S`` the grid solution set of f.

    ``f_z*(q) = max_y <q, y> - f(z, y)`` runs over ``conj_grid`` (default: the
    solution grid); ``S`` keeps solution-grid points whose equilibrium residual
    is at most ``tol``.
    """

    def __init__(self, f: Bifunction, K: FeasibleSet, z, solution_grid: GridSpec, *,
                 tol: float = 1e-8, conj_grid: GridSpec | None = None):
        if K.dimension > 3:
            raise InvalidInputError("hypothesis estimate is grid based; dimension must be <= 3")
        self.z = K._check(z, "z")
        Y = solution_grid.points()
        res = grid_residuals(f, Y, Y)
        keep = res <= tol
        if not keep.any():
            raise DiagnosticError("approximate solution set is empty on the grid",
                                  min_residual=float(res.min()))
        self.solutions = Y[keep]
        Yc = Y if conj_grid is None else conj_grid.points()
        self.conj_points = Yc
        self.conj_offsets = -np.asarray(f.eval_fn(self.z[None, :], Yc), float)

    def conjugate(self, q):
        Q = np.atleast_2d(np.asarray(q, float))
        return _kernels.max_affine(Q, self.conj_points, self.conj_offsets)

    def support(self, q):
        Q = np.atleast_2d(np.asarray(q, float))
        return _kernels.max_affine(Q, self.solutions)

    def __call__(self, q):
        out = self.conjugate(q) - self.support(q)
        return float(out[0]) if np.ndim(q) == 1 else out


def estimate_hypothesis_H(f: Bifunction, K: FeasibleSet, z, q, solution_grid: GridSpec, *,
                          tol: float = 1e-8, conj_grid: GridSpec | None = None):
    """``f_z*(q) - sigma_{S(f,K)}(q)`` estimated on grids (diagnostic only)."""
    return HypothesisEstimator(f, K, z, solution_grid, tol=tol, conj_grid=conj_grid)(q)


def descent_auditable(h: Bifunction, z, tol: float = 1e-8) -> bool:
    """Whether ``p = 0`` is a valid choice: ``0`` is the gradient of ``h(z, .)`` at ``z``."""
    z = np.asarray(z, float)
    return bool(np.linalg.norm(h.grad_y(z, z)) <= tol)


def audit_descent(report: SolveReport, f: Bifunction, pair: ProximalPair, z,
                  conj_gap: float = 0.0, h: Bifunction | None = None) -> np.ndarray:
    """Slack of the per-iteration descent inequality with ``w = 0`` and ``p = 0``.

    Returns ``RHS - LHS`` of
    ``D(z,x+) + (lam eps / 2) f(z,x+) <= D(z,x) - gamma D(x+,x) + (lam eps / 2) conj_gap``
    for each outer step, where ``conj_gap = f_z*(0) - sigma(0)`` (``0`` when
    ``z`` solves the inner problem).  Valid only when ``0`` is a subgradient
    of ``h(z, .)`` at ``z``; when ``h`` is passed this is checked and a
    :class:`DiagnosticError` ("not auditable") is raised otherwise.
    """
    z = np.asarray(z, float)
    if h is not None and not descent_auditable(h, z):
        raise DiagnosticError("descent inequality not auditable with p = 0 at this z")
    pts = report.iterates
    out = []
    for r, xk, xn in zip(report.trace, pts[:-1], pts[1:]):
        w = 0.5 * r.lam * r.eps
        lhs = pair.D(z, xn) + w * f(z, xn)
        rhs = pair.D(z, xk) - pair.gamma * pair.D(xn, xk) + w * conj_gap
        out.append(float(rhs - lhs))
    return np.array(out)


def level_check(f: Bifunction, h: Bifunction, K: FeasibleSet, x, solutions: Sequence) -> tuple:
    """``(residual of f at x, min over solutions y of h(x, y))``."""
    x = np.asarray(x, float)
    S = np.atleast_2d(np.asarray(solutions, float))
    return ep_residual(f, K, x), float(np.min(h.eval_fn(x[None, :], S)))
