"""Hierarchical organization model: payoffs, worthwhile-change quantities, traps.

An organization has one leader and ``n_followers`` followers, each supplying
an effort vector of length ``n_tasks``.  Effort profiles are stacked as
``x = (x^l, x^1, ..., x^J)``.  All callbacks act on the last axis and
broadcast over leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .bifunctions import Bifunction, Polynomial, from_objective, numerical_gradient
from .distances import ProximalPair
from .errors import InvalidInputError
from .geometry import FeasibleSet
from .oracle import GridSpec

TRAP_TOL = 1e-9
MEMBER_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Organization:
    """Static task-allocation model.

    ``revenue(quantity, quality)`` is the sales revenue of the production
    ``production(x) -> (quantity, quality)``; ``means_cost(x)`` is the cost of
    the means of production; ``wages[j](x)`` is the wage of follower ``j`` and
    ``disutilities[j](x_j)`` the disutility of their own effort block.
    ``leader_weight`` is the weight of the leader's payoff in the joint
    advantage.  ``leader_grad`` and ``followers_grad`` are optional exact
    gradients of the two payoffs (numerical otherwise).
    """

    n_tasks: int
    n_followers: int
    revenue: Callable
    production: Callable
    means_cost: Callable
    wages: tuple
    disutilities: tuple
    leader_weight: float
    effort_bounds: FeasibleSet
    leader_grad: Callable | None = None
    followers_grad: Callable | None = None
    label: str = "organization"

    def __post_init__(self):
        if self.n_tasks < 1 or self.n_followers < 1:
            raise InvalidInputError("an organization needs at least one task and one follower")
        if len(self.wages) != self.n_followers or len(self.disutilities) != self.n_followers:
            raise InvalidInputError("one wage and one disutility per follower are required")
        if not self.leader_weight > 0:
            raise InvalidInputError("leader_weight must be positive")
        if self.effort_bounds.dimension != self.dimension:
            raise InvalidInputError(
                f"effort_bounds must have dimension {self.dimension} = n_tasks * (n_followers + 1)")
        probe = self.effort_bounds.grid_points(_probe_step(self.effort_bounds), max_points=20_000)
        for j, (dis, wage) in enumerate(zip(self.disutilities, self.wages)):
            with np.errstate(all="ignore"):
                dv = np.asarray(dis(self.block(probe, j + 1)), float)
                wv = np.asarray(wage(probe), float)
            if not np.all(np.isfinite(wv)):
                raise InvalidInputError(f"wage of follower {j + 1} is not finite on the effort box")
            if np.any(dv < -1e-12) or not np.all(np.isfinite(dv)):
                raise InvalidInputError(f"disutility of follower {j + 1} is negative on the effort box")

    @property
    def dimension(self) -> int:
        return self.n_tasks * (self.n_followers + 1)

    def block(self, x, agent: int):
        """Effort block of ``agent`` (0 is the leader, ``j`` is follower ``j``)."""
        s = agent * self.n_tasks
        return np.asarray(x, float)[..., s:s + self.n_tasks]


def _probe_step(K: FeasibleSet) -> float:
    lo, hi = K.bounding_box()
    return max(float(np.max(hi - lo)) / 8, 1e-6)


def _feasible(org: Organization, x):
    x = np.asarray(x, float)
    if x.shape[-1] != org.dimension:
        raise InvalidInputError(f"effort profile must have length {org.dimension}")
    pts = x.reshape(-1, org.dimension)
    K = org.effort_bounds
    if not all(K.contains(p, MEMBER_TOL) for p in pts):
        raise InvalidInputError("effort profile not in effort_bounds")
    return x


def _leader(org: Organization, x):
    q, s = org.production(x)
    wages = sum(np.asarray(w(x), float) for w in org.wages)
    return np.asarray(org.revenue(q, s), float) - np.asarray(org.means_cost(x), float) - wages


def _followers(org: Organization, x):
    return sum(np.asarray(w(x), float) - np.asarray(d(org.block(x, j + 1)), float)
               for j, (w, d) in enumerate(zip(org.wages, org.disutilities)))


def leader_payoff(org: Organization, x):
    """Leader profit: revenue minus means cost minus total wages."""
    val = _leader(org, _feasible(org, x))
    return float(val) if np.ndim(val) == 0 else val


def followers_payoff(org: Organization, x):
    """Sum over followers of wage minus disutility."""
    val = _followers(org, _feasible(org, x))
    return float(val) if np.ndim(val) == 0 else val


def build_bep(org: Organization) -> tuple:
    """``(f, h, K)``: the leader's and the followers' losses to change, on the effort box.

    ``f(x, y) = g^l(x) - g^l(y)`` so that equilibria of ``f`` maximize the
    leader payoff; ``h(x, y) = g^J(x) - g^J(y)`` selects among those the
    profile the followers prefer.
    """
    def gl(x):
        return _leader(org, x)

    def gJ(x):
        return _followers(org, x)

    f = from_objective(gl, org.leader_grad or (lambda x: numerical_gradient(gl, x)),
                       convention="loss", label=f"{org.label}:leader_loss")
    h = from_objective(gJ, org.followers_grad or (lambda x: numerical_gradient(gJ, x)),
                       convention="loss", label=f"{org.label}:followers_loss")
    return f, h, org.effort_bounds


def demo_organization(leader_weight: float = 1.0) -> Organization:
    """One leader, one follower, one task each, efforts in ``[0, 1]``.

    ``q = x^l + x^1``, revenue ``2q - q^2``, unit quality, no means cost,
    wage ``2 x^1`` and disutility ``2 (x^1)^2``.  The leader payoff
    ``1 - (1 - q)^2 - 2 x^1`` has the unique maximizer ``(1, 0)`` on the box.
    """
    def production(x):
        x = np.asarray(x, float)
        return x[..., 0] + x[..., 1], np.ones(x.shape[:-1])

    def revenue(q, s):
        return 2 * q - q * q

    def means_cost(x):
        return np.zeros(np.shape(x)[:-1])

    def wage(x):
        return 2 * np.asarray(x, float)[..., 1]

    def disutility(xj):
        return 2 * np.asarray(xj, float)[..., 0] ** 2

    def leader_grad(x):
        q = x[..., 0] + x[..., 1]
        return np.stack([2 - 2 * q, -2 * q], axis=-1)

    def followers_grad(x):
        return np.stack([np.zeros(x.shape[:-1]), 2 - 4 * x[..., 1]], axis=-1)

    return Organization(1, 1, revenue, production, means_cost, (wage,), (disutility,),
                        leader_weight, FeasibleSet.box([0.0, 0.0], [1.0, 1.0]),
                        leader_grad, followers_grad, label="demo-org")


def polynomial_organization(n_tasks: int, n_followers: int, revenue: Polynomial,
                            wages: Sequence[Polynomial], disutilities: Sequence[Polynomial],
                            leader_weight: float, effort_bounds: FeasibleSet,
                            means_cost: Polynomial | None = None) -> Organization:
    """Organization with polynomial callbacks.

    ``revenue`` is a polynomial in ``(quantity, quality)`` with quantity the
    total effort and quality fixed at 1; ``wages`` and ``means_cost`` are
    polynomials of the whole profile, ``disutilities`` of each follower's block.
    """
    if revenue.nvars != 2:
        raise InvalidInputError("revenue polynomial must have 2 variables (quantity, quality)")
    dim = n_tasks * (n_followers + 1)
    for w in wages:
        if w.nvars != dim:
            raise InvalidInputError(f"wage polynomials must have {dim} variables")
    for d in disutilities:
        if d.nvars != n_tasks:
            raise InvalidInputError(f"disutility polynomials must have {n_tasks} variables")
    if means_cost is not None and means_cost.nvars != dim:
        raise InvalidInputError(f"means_cost polynomial must have {dim} variables")

    def production(x):
        x = np.asarray(x, float)
        return x.sum(axis=-1), np.ones(x.shape[:-1])

    def rev(q, s):
        return revenue(np.stack([q, s], axis=-1))

    def cost(x):
        return np.zeros(np.shape(x)[:-1]) if means_cost is None else means_cost(x)

    return Organization(n_tasks, n_followers, rev, production, cost, tuple(wages),
                        tuple(disutilities), leader_weight, effort_bounds, label="polynomial-org")


@dataclass
class VRQuantities:
    """Worthwhile-change quantities of a move ``x -> y``.

    ``A_e`` is the weighted advantage to change, ``I_e`` the inconvenient to
    change, ``Delta = A_e - xi * I_e``.  ``cost_to_stay`` is ``d(x, anchor)``;
    it cancels out of ``I_e`` and is only recorded.
    """

    A_e: float
    I_e: float
    Delta: float
    xi: float
    cost_to_stay: float = 0.0


def _delta_rows(f, h, eps, xi, pair, anchor, x, Y):
    """``(A_e, I_e, Delta)`` for moves from the rows of ``x`` to the rows of ``Y``."""
    A = -(eps * np.asarray(f.eval_fn(x, Y), float) + np.asarray(h.eval_fn(x, Y), float))
    I = np.einsum("...i,...i->...", pair.grad1_d(x, anchor), Y - x)
    return A, I, A - xi * I


def worthwhile_delta(org: Organization, x, y, xi: float, pair: ProximalPair, anchor,
                     eps: float | None = None) -> VRQuantities:
    """Advantage, inconvenient and worthwhile-to-change payoff of ``x -> y``.

    With ``eps`` (default ``org.leader_weight``) and ``xi = 1/lam``,
    ``Delta = -fbar(x, y)`` for the regularized bifunction anchored at ``anchor``.
    """
    if not xi > 0:
        raise InvalidInputError("xi must be positive")
    x = _feasible(org, x)
    y = _feasible(org, y)
    a = np.asarray(anchor, float)
    if a.shape != x.shape:
        raise InvalidInputError("anchor dimension does not match the effort profile")
    if not pair.admits_anchor(a):
        raise InvalidInputError("anchor must be strictly interior to the pair domain")
    eps = org.leader_weight if eps is None else float(eps)
    f, h, _ = build_bep(org)
    A, I, D = _delta_rows(f, h, eps, xi, pair, a, x, y)
    return VRQuantities(float(A), float(I), float(A - xi * I), float(xi), float(pair.d(x, a)))


@dataclass
class TrapReport:
    """Outcome of :func:`detect_traps`.

    ``aspiration`` and ``variational`` are ``None`` ("unknown") without a trace.
    ``margin`` is the largest ``Delta(candidate, y)`` over grid points ``y``
    other than the candidate; ``stationary_witness`` is the point attaining it
    when the check fails.  ``k0`` is the first trace index from which every
    direct move to the candidate is worthwhile.
    """

    stationary: bool
    aspiration: bool | None
    variational: bool | None
    margin: float
    stationary_witness: np.ndarray | None = None
    k0: int | None = None
    aspiration_deltas: list = field(default_factory=list)

    def as_dict(self) -> dict:
        def tri(v):
            return "unknown" if v is None else bool(v)

        return {
            "stationary": bool(self.stationary),
            "aspiration": tri(self.aspiration),
            "variational": tri(self.variational),
            "margin": self.margin,
            "stationary_witness": None if self.stationary_witness is None
            else self.stationary_witness.tolist(),
            "k0": self.k0,
        }


def detect_traps(org: Organization, candidate, xi: float, pair: ProximalPair, grid: GridSpec,
                 trace: Sequence | None = None, *, eps: float | None = None,
                 anchor=None) -> TrapReport:
    """Grid check of the stationary-trap, aspiration and variational-trap properties.

    Stationary: ``Delta(candidate, y) <= 1e-9`` for all grid ``y`` farther
    than ``1e-9`` from the candidate, with the inconvenient anchored at
    ``anchor`` (default: the candidate itself).  Aspiration (weak form): for
    the trace ``[x^0, x^1, ...]`` there is ``k0 >= 1`` with
    ``Delta(x^k, candidate) >= -1e-9`` for every ``k >= k0``, where the move from
    ``x^k`` is anchored at the previous position ``x^(k-1)``.
    """
    if not xi > 0:
        raise InvalidInputError("xi must be positive")
    c = _feasible(org, candidate)
    eps = org.leader_weight if eps is None else float(eps)
    a = c if anchor is None else np.asarray(anchor, float)
    if not pair.admits_anchor(a):
        raise InvalidInputError("anchor must be strictly interior to the pair domain")
    f, h, K = build_bep(org)

    Y = grid.points()
    Y = Y[np.linalg.norm(K.project_many(Y) - Y, axis=1) <= 1e-12]
    Y = Y[np.linalg.norm(Y - c, axis=1) > TRAP_TOL]
    if Y.shape[0] == 0:
        stationary, margin, witness = True, -np.inf, None
    else:
        _, _, D = _delta_rows(f, h, eps, xi, pair, a, c[None, :], Y)
        i = int(np.argmax(D))
        margin = float(D[i])
        stationary = margin <= TRAP_TOL
        witness = None if stationary else Y[i].copy()

    if trace is None:
        return TrapReport(stationary, None, None, margin, witness)
    pts = [np.asarray(p, float) for p in trace]
    deltas = []
    for prev, cur in zip(pts[:-1], pts[1:]):
        _, _, D = _delta_rows(f, h, eps, xi, pair, prev, cur, c)
        deltas.append(float(D))
    k0 = None
    for k in range(len(deltas), 0, -1):
        if deltas[k - 1] < -TRAP_TOL:
            break
        k0 = k
    aspiration = k0 is not None
    return TrapReport(stationary, aspiration, stationary and aspiration, margin, witness, k0, deltas)
