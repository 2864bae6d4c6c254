"""Built-in problem instances used by the CLI, the tests and the benchmarks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bifunctions import Bifunction, from_objective, from_operator, zero_bifunction
from .errors import InvalidInputError
from .geometry import FeasibleSet
from .orgmodel import Organization, build_bep, demo_organization


@dataclass(frozen=True, eq=False)
class Problem:
    """A bilevel instance with a default start and, when known, the solution."""

    name: str
    f: Bifunction
    h: Bifunction
    K: FeasibleSet
    pair: str = "euclidean"
    x0: np.ndarray | None = None
    reference: np.ndarray | None = None
    org: Organization | None = None

    def start(self) -> np.ndarray:
        return (self.K.witness if self.x0 is None else self.x0).copy()


def _sq(c):
    c = np.asarray(c, float)

    def g(x):
        d = x - c
        return np.einsum("...i,...i->...", d, d)

    def grad(x):
        return 2 * (x - c)

    return g, grad


def p1() -> Problem:
    """``K = [-1, 1]``, ``f`` from ``x^2``, ``h = 0``; solution 0.

    With an outer bifunction whose own minimizer is not 0 the iterates still
    converge to 0, but only at the rate ``1/eps_k``.
    """
    K = FeasibleSet.box([-1.0], [1.0])
    f = from_objective(*_sq([0.0]), label="p1:f")
    return Problem("p1", f, zero_bifunction(), K, x0=np.array([0.5]), reference=np.array([0.0]))


def p2_parts():
    def g1(x):
        return (x[..., 0] + x[..., 1]) ** 2

    def g1_grad(x):
        s = 2 * (x[..., 0] + x[..., 1])
        return np.stack([s, s], axis=-1)

    g2, g2_grad = _sq([0.5, -0.5])
    return (g1, g1_grad), (g2, g2_grad)


def p2() -> Problem:
    """``K = [-1, 1]^2``, ``f`` from ``(x1 + x2)^2``, ``h`` from ``|x - (1/2, -1/2)|^2``."""
    (g1, d1), (g2, d2) = p2_parts()
    K = FeasibleSet.box([-1.0, -1.0], [1.0, 1.0])
    return Problem("p2", from_objective(g1, d1, label="p2:f"), from_objective(g2, d2, label="p2:h"),
                   K, x0=np.zeros(2), reference=np.array([0.5, -0.5]))


def stopping() -> Problem:
    """``f`` from ``(x - 0.3)^2``, ``h = 0``, started at the solution 0.3."""
    K = FeasibleSet.box([-1.0], [1.0])
    return Problem("stopping", from_objective(*_sq([0.3]), label="stopping:f"), zero_bifunction(),
                   K, x0=np.array([0.3]), reference=np.array([0.3]))


def rotation_field(x):
    x = np.asarray(x, float)
    return np.stack([-x[..., 1], x[..., 0]], axis=-1)


def rotation() -> Problem:
    """Monotone (not strictly) rotation operator on ``[-1, 1]^2``; solution 0.

    Exercises the extragradient path of the inner solver.
    """
    K = FeasibleSet.box([-1.0, -1.0], [1.0, 1.0])
    f = from_operator(rotation_field, label="rotation")
    g, d = _sq([0.3, 0.2])
    h = from_objective(lambda x: 0.5 * g(x), lambda x: 0.5 * d(x), label="rotation:h")
    return Problem("rotation", f, h, K, x0=np.array([0.5, 0.5]), reference=np.zeros(2))


def simplex_entropy() -> Problem:
    """Unit simplex in R^3 with the entropy pair.

    ``f`` from ``(x1 - x2)^2`` and ``h`` from ``|x - (0.6, 0.1, 0.3)|^2``; the
    solution ``(0.35, 0.35, 0.3)`` minimizes ``h`` on the segment ``x1 = x2``.
    """
    K = FeasibleSet.simplex(3)

    def g1(x):
        return (x[..., 0] - x[..., 1]) ** 2

    def d1(x):
        s = 2 * (x[..., 0] - x[..., 1])
        return np.stack([s, -s, np.zeros_like(s)], axis=-1)

    g2, d2 = _sq([0.6, 0.1, 0.3])
    return Problem("simplex-entropy", from_objective(g1, d1, label="simplex:f"),
                   from_objective(g2, d2, label="simplex:h"), K, pair="entropy",
                   x0=np.array([0.2, 0.3, 0.5]), reference=np.array([0.35, 0.35, 0.3]))


def demo_org() -> Problem:
    org = demo_organization()
    f, h, K = build_bep(org)
    return Problem("demo-org", f, h, K, reference=np.array([1.0, 0.0]), org=org)


PRESETS = {
    "p1": p1,
    "p2": p2,
    "stopping": stopping,
    "rotation": rotation,
    "simplex-entropy": simplex_entropy,
    "demo-org": demo_org,
}


def preset(name: str) -> Problem:
    try:
        return PRESETS[name]()
    except KeyError:
        raise InvalidInputError(
            f"unknown problem preset '{name}' (known: {', '.join(PRESETS)})") from None
