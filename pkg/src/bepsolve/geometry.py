"""Feasible sets: projection, membership, support function, sampling, grids."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from . import _kernels
from .errors import InvalidInputError

KINDS = ("box", "simplex", "halfspaces", "ball")


def _vec(a, name="point"):
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1)
    if a.ndim != 1:
        raise InvalidInputError(f"{name} must be a 1-d vector, got shape {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class FeasibleSet:
    """A closed convex subset of R^n.

    Build instances with :meth:`box`, :meth:`simplex`, :meth:`ball` or
    :meth:`halfspaces`; the constructors validate the parameters and compute a
    witness point, so a built set is never empty.
    """

    kind: str
    dimension: int
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    radius: float | None = None
    center: np.ndarray | None = None
    normals: np.ndarray | None = None
    offsets: np.ndarray | None = None
    witness: np.ndarray = field(default=None)
    vertices: np.ndarray | None = None
    _bbox: tuple = field(default=None, repr=False)

    # -- constructors -----------------------------------------------------

    @classmethod
    def box(cls, lower, upper) -> FeasibleSet:
        lo, hi = _vec(lower, "lower"), _vec(upper, "upper")
        if lo.shape != hi.shape:
            raise InvalidInputError("box bounds have different lengths")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise InvalidInputError("box bounds must be finite")
        if np.any(lo > hi):
            raise InvalidInputError("box requires lower <= upper componentwise")
        lo.setflags(write=False)
        hi.setflags(write=False)
        mid = 0.5 * (lo + hi)
        return cls("box", lo.size, lower=lo, upper=hi, witness=mid, _bbox=(lo, hi))

    @classmethod
    def simplex(cls, dimension: int, radius: float = 1.0) -> FeasibleSet:
        dimension = int(dimension)
        if dimension < 1:
            raise InvalidInputError("simplex dimension must be positive")
        if not radius > 0:
            raise InvalidInputError("simplex radius must be positive")
        bary = np.full(dimension, radius / dimension)
        return cls(
            "simplex", dimension, radius=float(radius), witness=bary,
            _bbox=(np.zeros(dimension), np.full(dimension, float(radius))),
        )

    @classmethod
    def ball(cls, center, radius: float) -> FeasibleSet:
        c = _vec(center, "center")
        if not radius > 0:
            raise InvalidInputError("ball radius must be positive")
        c.setflags(write=False)
        return cls("ball", c.size, center=c, radius=float(radius), witness=c.copy(),
                   _bbox=(c - radius, c + radius))

    @classmethod
    def halfspaces(cls, normals, offsets) -> FeasibleSet:
        """Bounded polyhedron ``{x : normals @ x <= offsets}``."""
        A = np.atleast_2d(np.asarray(normals, dtype=float))
        b = _vec(offsets, "offsets")
        if A.shape[0] != b.size:
            raise InvalidInputError("one offset is required per normal")
        n = A.shape[1]
        norms = np.linalg.norm(A, axis=1)
        if np.any(norms == 0):
            raise InvalidInputError("halfspace normals must be nonzero")
        # Chebyshev centre: max r s.t. a_i.x + r |a_i| <= b_i
        res = linprog(
            np.r_[np.zeros(n), -1.0],
            A_ub=np.c_[A, norms], b_ub=b,
            bounds=[(None, None)] * n + [(0, None)], method="highs",
        )
        if res.status == 3:
            raise InvalidInputError("halfspace intersection is unbounded")
        if res.status != 0:
            raise InvalidInputError("halfspace intersection is empty")
        witness = res.x[:n]
        lo, hi = np.empty(n), np.empty(n)
        for i in range(n):
            for sign, store in ((1.0, lo), (-1.0, hi)):
                c = np.zeros(n)
                c[i] = sign
                r = linprog(c, A_ub=A, b_ub=b, bounds=[(None, None)] * n, method="highs")
                if r.status != 0:
                    raise InvalidInputError("halfspace intersection is unbounded")
                store[i] = r.x[i]
        verts = _enumerate_vertices(A, b) if n <= 3 else None
        A.setflags(write=False)
        b.setflags(write=False)
        return cls("halfspaces", n, normals=A, offsets=b, witness=witness,
                   vertices=verts, _bbox=(lo, hi))

    # -- basic queries ----------------------------------------------------

    def _check(self, point, name="point"):
        x = _vec(point, name)
        if x.size != self.dimension:
            raise InvalidInputError(
                f"{name} has dimension {x.size}, set has dimension {self.dimension}")
        return x

    def bounding_box(self):
        lo, hi = self._bbox
        return np.array(lo, dtype=float), np.array(hi, dtype=float)

    def project(self, point) -> np.ndarray:
        """Euclidean nearest point of the set."""
        return self.project_many(self._check(point)[None, :])[0]

    def project_many(self, P) -> np.ndarray:
        """Row-wise projection of an ``(m, n)`` array (no dimension checks)."""
        P = np.asarray(P, dtype=float)
        if self.kind == "box":
            return np.clip(P, self.lower, self.upper)
        if self.kind == "simplex":
            out = _kernels.project_simplex(P, self.radius)
            inside = np.all(P >= 0, axis=1) & (np.abs(P.sum(axis=1) - self.radius)
                                                <= 1e-15 * self.radius)
            out[inside] = P[inside]
            return out
        if self.kind == "ball":
            d = P - self.center
            nrm = np.linalg.norm(d, axis=1)
            scale = np.where(nrm > self.radius, self.radius / np.maximum(nrm, 1e-300), 1.0)
            out = self.center + d * scale[:, None]
            out[nrm <= self.radius] = P[nrm <= self.radius]
            return out
        return np.array([self._project_polyhedron(p) for p in P])

    def _project_polyhedron(self, p):
        A, b = self.normals, self.offsets
        if np.all(A @ p <= b):
            return p.copy()
        # Dykstra's alternating projections over the halfspaces
        sq = np.einsum("ij,ij->i", A, A)
        x = p.copy()
        incr = np.zeros_like(A)
        for _ in range(20000):
            x_start = x.copy()
            for i in range(A.shape[0]):
                y = x + incr[i]
                viol = A[i] @ y - b[i]
                x = y - (viol / sq[i]) * A[i] if viol > 0 else y
                incr[i] = y - x
            if np.linalg.norm(x - x_start) <= 1e-16 * (1.0 + np.linalg.norm(x)):
                break
        return x

    def distance(self, point) -> float:
        x = self._check(point)
        return float(np.linalg.norm(x - self.project(x)))

    def contains(self, point, tol: float = 0.0) -> bool:
        """True iff the Euclidean distance from ``point`` to the set is at most ``tol``."""
        if tol < 0:
            raise InvalidInputError("tol must be nonnegative")
        x = self._check(point)
        if self._exact_member(x):
            return True
        return self.distance(x) <= tol

    def _exact_member(self, x):
        if self.kind == "box":
            return bool(np.all(x >= self.lower) and np.all(x <= self.upper))
        if self.kind == "simplex":
            return bool(np.all(x >= 0) and x.sum() == self.radius)
        if self.kind == "ball":
            return bool(np.linalg.norm(x - self.center) <= self.radius)
        return bool(np.all(self.normals @ x <= self.offsets))

    def support_function(self, direction) -> float:
        """``sup_{y in set} <direction, y>``."""
        q = self._check(direction, "direction")
        if not np.any(q):
            return 0.0
        if self.kind == "box":
            return float(np.sum(np.maximum(q * self.lower, q * self.upper)))
        if self.kind == "simplex":
            return float(self.radius * q.max())
        if self.kind == "ball":
            return float(q @ self.center + self.radius * np.linalg.norm(q))
        if self.vertices is None:
            raise InvalidInputError(
                "support function of a halfspace intersection needs dimension <= 3")
        return float(np.max(self.vertices @ q))

    # -- interior ---------------------------------------------------------

    @property
    def has_interior(self) -> bool:
        """Whether the (relative) interior is nonempty."""
        if self.kind == "box":
            return bool(np.all(self.upper > self.lower))
        if self.kind == "simplex":
            return self.dimension > 1
        return True

    def is_interior(self, point, margin: float = 0.0) -> bool:
        """Strict (relative) interior membership at distance > ``margin``."""
        x = self._check(point)
        if self.kind == "box":
            return bool(np.all(x > self.lower + margin) and np.all(x < self.upper - margin))
        if self.kind == "simplex":
            return bool(np.all(x > margin)
                        and abs(x.sum() - self.radius) <= 1e-9 * self.radius)
        if self.kind == "ball":
            return bool(np.linalg.norm(x - self.center) < self.radius - margin)
        slack = self.offsets - self.normals @ x
        return bool(np.all(slack > margin * np.linalg.norm(self.normals, axis=1)))

    def sample(self, rng: np.random.Generator, count: int, margin: float = 1e-3):
        """Draw ``count`` points of the relative interior, ``margin`` away from the boundary."""
        if not self.has_interior:
            raise InvalidInputError(f"{self.kind} set has empty interior; cannot sample")
        n = self.dimension
        if self.kind == "box":
            width = self.upper - self.lower
            m = np.minimum(margin, width / 4)
            return self.lower + m + (width - 2 * m) * rng.random((count, n))
        if self.kind == "simplex":
            m = min(margin, self.radius / (2 * n))
            u = rng.dirichlet(np.ones(n), size=count)
            return m + (self.radius - n * m) * u
        if self.kind == "ball":
            m = min(margin, self.radius / 2)
            d = rng.standard_normal((count, n))
            d /= np.linalg.norm(d, axis=1, keepdims=True)
            r = (self.radius - m) * rng.random(count) ** (1.0 / n)
            return self.center + d * r[:, None]
        lo, hi = self._bbox
        norms = np.linalg.norm(self.normals, axis=1)
        out = []
        for _ in range(1000):
            cand = lo + (hi - lo) * rng.random((max(count, 64), n))
            ok = np.all(cand @ self.normals.T < self.offsets - margin * norms, axis=1)
            out.extend(cand[ok])
            if len(out) >= count:
                return np.array(out[:count])
        raise InvalidInputError("could not sample the polyhedron interior at this margin")

    # -- grids ------------------------------------------------------------

    def grid_points(self, step: float, max_points: int = 2_000_000) -> np.ndarray:
        """Regular grid of spacing at most ``step`` restricted to the set.

        Axis ticks always include the bounding-box endpoints.  For the simplex
        the last coordinate is eliminated so grid points lie exactly on it.
        """
        if not step > 0:
            raise InvalidInputError("grid step must be positive")
        lo, hi = self._bbox
        if self.kind == "simplex":
            axes = [_ticks(0.0, self.radius, step) for _ in range(self.dimension - 1)]
            count = int(np.prod([a.size for a in axes])) if axes else 1
            _guard(count, max_points, step, [self.radius] * (self.dimension - 1))
            if not axes:
                return np.array([[self.radius]])
            mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
            last = self.radius - mesh.sum(axis=1)
            keep = last >= -1e-12
            return np.c_[mesh[keep], np.maximum(last[keep], 0.0)]
        axes = [_ticks(lo[i], hi[i], step) for i in range(self.dimension)]
        count = int(np.prod([a.size for a in axes]))
        _guard(count, max_points, step, hi - lo)
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dimension)
        if self.kind == "box":
            return mesh
        if self.kind == "ball":
            keep = np.linalg.norm(mesh - self.center, axis=1) <= self.radius + 1e-12
        else:
            keep = np.all(mesh @ self.normals.T <= self.offsets + 1e-12, axis=1)
        return mesh[keep]

    def grid_count(self, step: float) -> int:
        lo, hi = self._bbox
        dims = self.dimension - 1 if self.kind == "simplex" else self.dimension
        return int(np.prod([_ticks(lo[i], hi[i], step).size for i in range(dims)]))


def _ticks(lo, hi, step):
    if hi <= lo:
        return np.array([lo], dtype=float)
    m = int(np.ceil((hi - lo) / step - 1e-9)) + 1
    return np.linspace(lo, hi, m)


def _guard(count, max_points, step, widths=None):
    if count > max_points:
        hint = "use a coarser step"
        if widths is not None and len(widths):
            w = np.maximum(np.asarray(widths, float), 0.0)
            need = step
            while np.prod(np.floor(w / need + 1e-9) + 2) > max_points:
                need *= 1.05
            hint = f"step >= {need:.3g} is required"
        raise InvalidInputError(
            f"grid with step {step:g} has {count} points, above the guard of {max_points}; "
            f"{hint}")


def _enumerate_vertices(A, b):
    n = A.shape[1]
    verts = []
    for rows in itertools.combinations(range(A.shape[0]), n):
        M = A[list(rows)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        v = np.linalg.solve(M, b[list(rows)])
        if np.all(A @ v <= b + 1e-9):
            if not any(np.allclose(v, w, atol=1e-10) for w in verts):
                verts.append(v)
    return np.array(verts)
