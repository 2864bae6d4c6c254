"""Generalized proximal distance pairs (d, D) and their property checks.

Callbacks act on the last axis and broadcast over leading axes, so one call
can evaluate a whole batch of points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidInputError
from .geometry import FeasibleSet

H_TOL = 1e-9
H2_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class ProximalPair:
    """A proximal distance ``d``, its induced distance ``D`` and constant ``gamma``.

    ``unrestricted`` marks pairs whose ``d`` is finite and smooth on the whole
    space (the Euclidean pair); the interior requirement on anchors is then
    vacuous.  ``domain`` is still used for sampling.
    """

    eval_d: Callable
    grad1_d: Callable
    eval_D: Callable
    gamma: float
    domain: FeasibleSet
    label: str
    unrestricted: bool = False

    def d(self, x, y):
        return self.eval_d(np.asarray(x, float), np.asarray(y, float))

    def grad(self, x, y):
        return self.grad1_d(np.asarray(x, float), np.asarray(y, float))

    def D(self, x, y):
        return self.eval_D(np.asarray(x, float), np.asarray(y, float))

    def admits_anchor(self, x) -> bool:
        """Whether ``grad1_d(., x)`` is defined, i.e. ``x`` is interior to the domain."""
        if self.unrestricted:
            return True
        return self.domain.is_interior(x)

    def in_domain(self, x, tol: float = 1e-9) -> bool:
        if self.unrestricted:
            return True
        return self.domain.contains(x, tol)


def build_euclidean_pair(domain: FeasibleSet) -> ProximalPair:
    """``d(x, y) = D(x, y) = |x - y|^2 / 2`` with ``gamma = 1``."""

    def d(x, y):
        diff = x - y
        return 0.5 * np.einsum("...i,...i->...", diff, diff)

    def grad(x, y):
        return x - y

    return ProximalPair(d, grad, d, 1.0, domain, "euclidean", unrestricted=True)


def build_bregman_pair(phi: Callable, grad_phi: Callable, domain: FeasibleSet,
                       label: str = "bregman", samples: int = 16, seed: int = 0) -> ProximalPair:
    """Bregman pair ``d(x,y) = phi(x) - phi(y) - <grad phi(y), x - y>``, ``D = d``.

    The generator is evaluated at the domain witness and ``samples`` interior
    points; a non-finite value there is a construction error.
    """
    probe = domain.sample(np.random.default_rng(seed), samples) if domain.has_interior else None
    pts = np.atleast_2d(domain.witness) if probe is None else np.vstack([domain.witness, probe])
    with np.errstate(all="ignore"):
        vals = np.asarray(phi(pts), float)
        grads = np.asarray(grad_phi(pts), float)
    if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(grads))):
        raise InvalidInputError(f"generator of pair '{label}' is not finite on the domain interior")

    def d(x, y):
        with np.errstate(divide="ignore", invalid="ignore"):
            val = phi(x) - phi(y) - np.einsum("...i,...i->...", grad_phi(y), x - y)
        return np.where(np.isnan(val), np.inf, val)

    def grad(x, y):
        with np.errstate(divide="ignore", invalid="ignore"):
            return grad_phi(x) - grad_phi(y)

    return ProximalPair(d, grad, d, 1.0, domain, label)


def entropy(x):
    """``sum x_i log x_i`` with ``0 log 0 = 0``; ``+inf`` off the orthant."""
    x = np.asarray(x, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0)), 0.0)
        terms = np.where(x < 0, np.inf, terms)
    return terms.sum(axis=-1)


def entropy_grad(x):
    x = np.asarray(x, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return 1.0 + np.log(x)


def half_square(x):
    x = np.asarray(x, float)
    return 0.5 * np.einsum("...i,...i->...", x, x)


def build_entropy_pair(domain: FeasibleSet) -> ProximalPair:
    """Bregman pair of the Boltzmann-Shannon entropy (Kullback-Leibler type)."""
    return build_bregman_pair(entropy, entropy_grad, domain, label="entropy")


def check_pair_compatible(pair: ProximalPair, K: FeasibleSet) -> None:
    """Reject combinations where ``K`` is not inside the interior of ``dom d``.

    The simplex is accepted for entropy pairs: iterates stay in its relative
    interior.
    """
    if pair.unrestricted or pair.label != "entropy":
        return
    if K.kind == "simplex":
        return
    lo, _ = K.bounding_box()
    if np.any(lo <= 0):
        raise InvalidInputError(
            "entropy pair needs a feasible set with strictly positive lower bounds")


BUILDERS = {"euclidean": build_euclidean_pair, "entropy": build_entropy_pair}


def pair_by_label(label: str, domain: FeasibleSet) -> ProximalPair:
    try:
        return BUILDERS[label](domain)
    except KeyError:
        raise InvalidInputError(f"unknown proximal pair '{label}'") from None


@dataclass
class PropertyCheck:
    passed: bool
    worst_slack: float
    witness: tuple | None = None


@dataclass
class HReport:
    """Sampled evidence for H2, H4, H6 and ``grad1_d(x, x) = 0``.

    Slacks are "how far inside the inequality" the worst sample was; a
    negative slack beyond the tolerance is a failure.  Every failed check
    carries the offending sample as ``witness``.
    """

    label: str
    samples: int
    gamma: float
    h2: PropertyCheck
    h4: PropertyCheck
    h6: PropertyCheck
    grad_zero: PropertyCheck
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.h2.passed and self.h4.passed and self.h6.passed and self.grad_zero.passed

    def lines(self):
        yield f"pair={self.label} samples={self.samples} gamma={self.gamma:g}"
        for name in ("h2", "h4", "h6", "grad_zero"):
            c = getattr(self, name)
            status = "pass" if c.passed else "FAIL"
            yield f"  {name}: {status} worst_slack={c.worst_slack:.3e}"
            if not c.passed:
                yield f"    witness={[np.round(w, 6).tolist() for w in c.witness]}"
        yield from (f"  note: {n}" for n in self.notes)


def verify_proximal_pair(pair: ProximalPair, samples: int = 1000, seed: int = 0,
                         margin: float = 1e-3) -> HReport:
    """Sample interior triples ``(z, x, y)`` and check the pair's properties.

    H1, H3, H5 and H7 are limit/continuity statements and are covered by
    sequence tests on the built-in pairs, not here.
    """
    if samples < 1:
        raise InvalidInputError("samples must be >= 1")
    dom = pair.domain
    if not dom.has_interior:
        raise InvalidInputError("pair domain has empty interior")
    rng = np.random.default_rng(seed)
    z = dom.sample(rng, samples, margin)
    x = dom.sample(rng, samples, margin)
    y = dom.sample(rng, samples, margin)
    alpha = rng.uniform(0.0, 1.0, samples)[:, None]

    # H2: D(x, x) = 0
    h2_err = np.abs(pair.D(x, x))
    # H4: <z - x, grad1 d(x, y)> <= D(z, y) - D(z, x) - gamma D(x, y)
    lhs = np.einsum("ij,ij->i", z - x, pair.grad(x, y))
    h4_slack = pair.D(z, y) - pair.D(z, x) - pair.gamma * pair.D(x, y) - lhs
    # H6: D(z, w) + D(w, y) <= D(z, y) on w = a z + (1 - a) y
    w = alpha * z + (1 - alpha) * y
    h6_slack = pair.D(z, y) - pair.D(z, w) - pair.D(w, y)
    gz = np.max(np.abs(pair.grad(x, x)), axis=1)

    def worst_min(slack, tol, triples):
        i = int(np.argmin(slack))
        ok = bool(slack[i] >= -tol)
        return PropertyCheck(ok, float(slack[i]), None if ok else tuple(t[i] for t in triples))

    def worst_abs(err, tol, triples):
        i = int(np.argmax(err))
        ok = bool(err[i] <= tol)
        return PropertyCheck(ok, float(-err[i]), None if ok else tuple(t[i] for t in triples))

    return HReport(
        label=pair.label, samples=samples, gamma=pair.gamma,
        h2=worst_abs(h2_err, H2_TOL, (x,)),
        h4=worst_min(h4_slack, H_TOL, (z, x, y)),
        h6=worst_min(h6_slack, H_TOL, (z, w, y)),
        grad_zero=worst_abs(gz, 1e-12, (x,)),
        notes=["H1/H3/H5/H7 are limit properties; see the sequence tests"],
    )
