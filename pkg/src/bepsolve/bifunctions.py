"""Equilibrium bifunctions, their standard-assumption checks, and regularization."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .distances import ProximalPair
from .errors import InvalidInputError
from .geometry import FeasibleSet

L1_TOL = 1e-10
L_TOL = 1e-9
CONVENTIONS = ("loss", "advantage")


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


def numerical_gradient(fun: Callable, x, h: float = 1e-6):
    """Central-difference gradient of a scalar field, batched over leading axes."""
    x = np.asarray(x, float)
    n = x.shape[-1]
    out = np.empty(x.shape)
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        out[..., i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return out


@dataclass(frozen=True, eq=False)
class RegularizedParts:
    f: "Bifunction"
    h: "Bifunction"
    eps: float
    lam: float
    anchor: np.ndarray
    pair: ProximalPair


@dataclass(frozen=True, eq=False)
class Bifunction:
    """A real bifunction ``psi(x, y)`` on ``K x K``.

    ``eval_fn(x, y)`` broadcasts over leading axes.  ``grad_y_fn`` is the
    gradient in the second argument (numerical if not supplied).  Structured
    constructors also record a ``potential`` (``psi(x, y) = P(y) - P(x)``) or an
    ``operator`` (``psi(x, y) = <F(x), y - x>``) that solvers and oracles exploit.
    """

    eval_fn: Callable
    grad_y_fn: Callable | None = None
    hint: str = "explicit"
    label: str = ""
    potential: Callable | None = None
    potential_grad: Callable | None = None
    operator: Callable | None = None
    regularized: RegularizedParts | None = None
    meta: dict = field(default_factory=dict)

    def __call__(self, x, y):
        val = self.eval_fn(np.asarray(x, float), np.asarray(y, float))
        return float(val) if np.ndim(val) == 0 else val

    def grad_y(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        if self.grad_y_fn is not None:
            return np.broadcast_to(self.grad_y_fn(x, y), np.broadcast(x, y).shape).copy()
        return numerical_gradient(lambda v: self.eval_fn(x, v), y)

    @property
    def is_objective(self) -> bool:
        return self.potential is not None

    @property
    def is_zero(self) -> bool:
        return bool(self.meta.get("zero", False))

    @property
    def is_linear_in_y(self) -> bool:
        return self.operator is not None


def zero_bifunction() -> Bifunction:
    def zero(x, y):
        return np.zeros(np.broadcast(x[..., 0], y[..., 0]).shape)

    def pot(x):
        return np.zeros(np.shape(x)[:-1])

    return Bifunction(zero, lambda x, y: np.zeros(np.broadcast(x, y).shape),
                      "objective_difference", "zero", pot, lambda x: np.zeros(np.shape(x)),
                      meta={"zero": True})


def from_objective(g: Callable, grad_g: Callable | None = None, convention: str = "advantage",
                   label: str = "") -> Bifunction:
    """Bifunction of a scalar field.

    ``convention="loss"`` gives ``psi(x, y) = g(x) - g(y)`` (equilibria maximize
    ``g``); ``"advantage"`` gives ``psi(x, y) = g(y) - g(x)`` (equilibria
    minimize ``g``).  ``g`` must broadcast over leading axes.
    """
    if convention not in CONVENTIONS:
        raise InvalidInputError(f"convention must be one of {CONVENTIONS}")
    sign = 1.0 if convention == "advantage" else -1.0
    if grad_g is None:
        def grad_g(x):
            return numerical_gradient(g, x)

    def pot(x):
        return sign * np.asarray(g(x), float)

    def pot_grad(x):
        return sign * np.asarray(grad_g(x), float)

    if sign > 0:
        def ev(x, y):
            return np.asarray(g(y), float) - np.asarray(g(x), float)
    else:
        def ev(x, y):
            return np.asarray(g(x), float) - np.asarray(g(y), float)

    return Bifunction(ev, lambda x, y: pot_grad(y), "objective_difference",
                      label or f"objective[{convention}]", pot, pot_grad,
                      meta={"convention": convention})


def from_operator(F: Callable, label: str = "") -> Bifunction:
    """``psi(x, y) = <F(x), y - x>``; monotone iff ``F`` is."""

    def ev(x, y):
        return _dot(F(x), y - x)

    return Bifunction(ev, lambda x, y: F(x), "operator_form", label or "operator",
                      operator=F)


def explicit(eval_fn: Callable, grad_y: Callable | None = None, label: str = "explicit") -> Bifunction:
    return Bifunction(eval_fn, grad_y, "explicit", label)


def regularize(f: Bifunction, h: Bifunction, eps: float, lam: float, anchor,
               pair: ProximalPair) -> Bifunction:
    """``eps f(x,y) + h(x,y) + (1/lam) <grad1 d(x, anchor), y - x>``."""
    if not (eps > 0 and lam > 0):
        raise InvalidInputError("eps and lambda must be positive")
    a = np.array(anchor, dtype=float)
    if a.ndim != 1 or a.size != pair.domain.dimension:
        raise InvalidInputError("anchor dimension does not match the pair domain")
    if not pair.admits_anchor(a):
        raise InvalidInputError("anchor must be strictly interior to the pair domain")
    a.setflags(write=False)
    inv = 1.0 / lam

    def ev(x, y):
        return eps * f.eval_fn(x, y) + h.eval_fn(x, y) + inv * _dot(pair.grad1_d(x, a), y - x)

    def gy(x, y):
        return eps * f.grad_y(x, y) + h.grad_y(x, y) + inv * pair.grad1_d(x, a)

    parts = RegularizedParts(f, h, float(eps), float(lam), a, pair)
    return Bifunction(ev, gy, "explicit", f"regularized({f.label},{h.label})", regularized=parts)


@dataclass
class Check:
    passed: bool
    worst_slack: float
    witness: tuple | None = None


@dataclass
class LReport:
    """Sampled evidence for L1-L4.

    L2 (upper semicontinuity) is reduced to finiteness of every evaluation;
    semicontinuity itself cannot be decided from samples.  L5 is asymptotic and
    is never sampled.
    """

    label: str
    samples: int
    l1: Check
    l2: Check
    l3: Check
    l4: Check
    l5: str = "not verified - asymptotic coercivity, automatic when K is bounded"

    @property
    def passed(self) -> bool:
        return self.l1.passed and self.l2.passed and self.l3.passed and self.l4.passed

    def lines(self):
        yield f"bifunction={self.label} samples={self.samples}"
        for name in ("l1", "l2", "l3", "l4"):
            c = getattr(self, name)
            yield f"  {name}: {'pass' if c.passed else 'FAIL'} worst_slack={c.worst_slack:.3e}"
            if not c.passed:
                yield f"    witness={[np.round(w, 6).tolist() for w in c.witness]}"
        yield f"  l5: {self.l5}"


def verify_standard_assumptions(psi: Bifunction, K: FeasibleSet, samples: int = 1000,
                                seed: int = 0) -> LReport:
    if samples < 1:
        raise InvalidInputError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    x = K.sample(rng, samples, margin=0.0)
    y = K.sample(rng, samples, margin=0.0)
    y2 = K.sample(rng, samples, margin=0.0)

    with np.errstate(all="ignore"):
        pxx = np.asarray(psi.eval_fn(x, x), float)
        pxy = np.asarray(psi.eval_fn(x, y), float)
        pyx = np.asarray(psi.eval_fn(y, x), float)
        pxy2 = np.asarray(psi.eval_fn(x, y2), float)
        pmid = np.asarray(psi.eval_fn(x, 0.5 * (y + y2)), float)

    finite = np.isfinite(pxx) & np.isfinite(pxy) & np.isfinite(pyx) & np.isfinite(pxy2) & np.isfinite(pmid)
    if finite.all():
        l2 = Check(True, 0.0)
    else:
        i = int(np.argmin(finite))
        l2 = Check(False, -np.inf, (x[i], y[i]))

    err = np.where(np.isfinite(pxx), np.abs(pxx), np.inf)
    i = int(np.argmax(err))
    l1 = Check(bool(err[i] <= L1_TOL), float(-err[i]), None if err[i] <= L1_TOL else (x[i],))

    s4 = -(pxy + pyx)
    s4 = np.where(np.isnan(s4), -np.inf, s4)
    i = int(np.argmin(s4))
    l4 = Check(bool(s4[i] >= -L_TOL), float(s4[i]), None if s4[i] >= -L_TOL else (x[i], y[i]))

    s3 = 0.5 * (pxy + pxy2) - pmid
    s3 = np.where(np.isnan(s3), -np.inf, s3)
    i = int(np.argmin(s3))
    l3 = Check(bool(s3[i] >= -L_TOL), float(s3[i]),
               None if s3[i] >= -L_TOL else (x[i], y[i], y2[i]))
    return LReport(psi.label, samples, l1, l2, l3, l4)


@dataclass(frozen=True, eq=False)
class Polynomial:
    """Sum of ``coeffs[k] * prod_i x_i ** powers[k][i]`` with an exact gradient."""

    coeffs: np.ndarray
    powers: np.ndarray

    @classmethod
    def from_terms(cls, coeffs, powers) -> Polynomial:
        c = np.asarray(coeffs, float).reshape(-1)
        p = np.asarray(powers, dtype=np.int64)
        if p.ndim != 2 or p.shape[0] != c.size:
            raise InvalidInputError("polynomial needs one power row per coefficient")
        if np.any(p < 0):
            raise InvalidInputError("polynomial powers must be nonnegative")
        return cls(c, p)

    @property
    def nvars(self) -> int:
        return self.powers.shape[1]

    def __call__(self, x):
        x = np.asarray(x, float)
        terms = np.prod(x[..., None, :] ** self.powers, axis=-1)
        return terms @ self.coeffs

    def grad(self, x):
        x = np.asarray(x, float)
        out = np.zeros(x.shape)
        for i in range(self.nvars):
            p = self.powers.copy()
            lead = p[:, i].astype(float)
            p[:, i] = np.maximum(p[:, i] - 1, 0)
            terms = np.prod(x[..., None, :] ** p, axis=-1)
            out[..., i] = terms @ (self.coeffs * lead)
        return out
