"""Experiment configuration: a flat ``key = value`` text format with dotted keys.

Format
------
One assignment per line; ``#`` starts a comment; blank lines are ignored.
Values are JSON scalars or bracketed arrays (``1e-8``, ``[0, 0]``,
``[[2, 0], [0, 2]]``, ``true``); anything else is taken as a bare string
(``p2``, ``euclidean``, ``auto``).  Keys::

    problem = p2                 # preset, "polynomial" or "org-polynomial"
    pair = euclidean             # euclidean | entropy (default: the preset's)
    schedule = linear_eps_const_lambda
    schedule.eps0 = 1
    schedule.slope = 1
    schedule.lambda0 = 1
    x0 = auto                    # or a vector
    outer.max_outer = 500
    outer.step_tol = 1e-10
    outer.residual_tol = 1e-8
    inner.tol = 1e-8             # base of the inner tolerance schedule
    inner.max_iter = 20000
    inner.mode = auto            # auto | objective_fast_path | extragradient
    inner.prox_step = 0.1
    inner.stat_tol = 1e-12
    reference = [0.5, -0.5]      # z_ref; "preset" uses the preset's, "none" disables
    seed = 0
    outputs.csv = trace.csv      # relative to --out-dir
    outputs.json = report.json

``problem = polynomial`` reads ``set.*`` (``set.kind`` plus ``lower``/``upper``,
``dimension``/``radius``, ``center``/``radius`` or ``normals``/``offsets``) and
``f.coeffs``, ``f.powers``, ``f.convention`` (and the same for ``h``; no ``h``
means ``h = 0``).  ``problem = org-polynomial`` reads ``org.n_tasks``,
``org.n_followers``, ``org.leader_weight``, ``org.lower``, ``org.upper``,
``org.revenue.coeffs/powers`` and, for each follower ``j``,
``org.wage.j.coeffs/powers`` and ``org.disutility.j.coeffs/powers``.
For the ``demo-org`` preset, ``org.leader_weight`` overrides the default 1.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bifunctions import Polynomial, from_objective, zero_bifunction
from .bilevel import Schedule
from .distances import BUILDERS
from .errors import InvalidInputError
from .geometry import FeasibleSet
from .inner import MODES, InnerSolveOptions
from .orgmodel import build_bep, demo_organization, polynomial_organization
from .problems import PRESETS, Problem

KEY_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_\-]*(\.[A-Za-z0-9_\-]+)*$")
SCHEDULES = ("linear_eps_const_lambda",)

FIXED_KEYS = {
    "problem", "pair", "schedule", "schedule.eps0", "schedule.slope", "schedule.lambda0",
    "x0", "outer.max_outer", "outer.step_tol", "outer.residual_tol",
    "inner.tol", "inner.max_iter", "inner.mode", "inner.prox_step", "inner.stat_tol",
    "reference", "seed", "outputs.csv", "outputs.json",
}
PATTERN_KEYS = [
    re.compile(r"^set\.(kind|lower|upper|dimension|radius|center|normals|offsets)$"),
    re.compile(r"^[fh]\.(coeffs|powers|convention)$"),
    re.compile(r"^org\.(n_tasks|n_followers|leader_weight|lower|upper)$"),
    re.compile(r"^org\.(revenue|means_cost)\.(coeffs|powers)$"),
    re.compile(r"^org\.(wage|disutility)\.\d+\.(coeffs|powers)$"),
]


def _value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_config_text(text: str) -> dict:
    """Parse the flat format into ``{dotted_key: value}``."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInputError(f"config line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if not KEY_RE.match(key):
            raise InvalidInputError(f"config line {lineno}: bad key '{key}'")
        if key not in FIXED_KEYS and not any(p.match(key) for p in PATTERN_KEYS):
            raise InvalidInputError(f"config line {lineno}: unknown key '{key}'")
        if key in out:
            raise InvalidInputError(f"config line {lineno}: duplicate key '{key}'")
        if not val:
            raise InvalidInputError(f"config line {lineno}: missing value for '{key}'")
        out[key] = _value(val)
    return out


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise InvalidInputError(f"cannot read config {p}: {exc.strerror}") from None
    return ExperimentConfig.from_mapping(parse_config_text(text), name=p.stem)


def _num(d, key, default, kind=float, positive=True):
    v = d.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise InvalidInputError(f"config key '{key}' must be a number")
    if kind is int and int(v) != v:
        raise InvalidInputError(f"config key '{key}' must be an integer")
    v = kind(v)
    if positive and not v > 0:
        raise InvalidInputError(f"config key '{key}' must be positive")
    return v


def _vector(d, key):
    v = d[key]
    if not isinstance(v, list) or not all(isinstance(t, (int, float)) and not isinstance(t, bool)
                                          for t in v):
        raise InvalidInputError(f"config key '{key}' must be an array of numbers")
    return np.array(v, float)


def _matrix(d, key):
    v = d.get(key)
    try:
        arr = np.array(v, float)
    except (TypeError, ValueError):
        raise InvalidInputError(f"config key '{key}' must be a numeric array") from None
    if v is None or arr.ndim == 0:
        raise InvalidInputError(f"config key '{key}' must be a numeric array")
    return arr


def _polynomial(d, prefix):
    if f"{prefix}.coeffs" not in d or f"{prefix}.powers" not in d:
        raise InvalidInputError(f"polynomial '{prefix}' needs {prefix}.coeffs and {prefix}.powers")
    return Polynomial.from_terms(_matrix(d, f"{prefix}.coeffs"),
                                 np.atleast_2d(_matrix(d, f"{prefix}.powers")))


def _feasible_set(d) -> FeasibleSet:
    kind = d.get("set.kind")
    if kind == "box":
        return FeasibleSet.box(_vector(d, "set.lower"), _vector(d, "set.upper"))
    if kind == "simplex":
        return FeasibleSet.simplex(_num(d, "set.dimension", None, int), _num(d, "set.radius", 1.0))
    if kind == "ball":
        return FeasibleSet.ball(_vector(d, "set.center"), _num(d, "set.radius", None))
    if kind == "halfspaces":
        return FeasibleSet.halfspaces(_matrix(d, "set.normals"), _matrix(d, "set.offsets"))
    raise InvalidInputError("set.kind must be one of box, simplex, ball, halfspaces")


def _polynomial_problem(d) -> Problem:
    K = _feasible_set(d)
    parts = {}
    for name in ("f", "h"):
        if f"{name}.coeffs" not in d and f"{name}.powers" not in d:
            if name == "f":
                raise InvalidInputError("polynomial problem needs f.coeffs and f.powers")
            parts[name] = zero_bifunction()
            continue
        poly = _polynomial(d, name)
        if poly.nvars != K.dimension:
            raise InvalidInputError(f"{name} polynomial has {poly.nvars} variables, set has "
                                    f"dimension {K.dimension}")
        parts[name] = from_objective(poly, poly.grad, d.get(f"{name}.convention", "advantage"),
                                     label=f"polynomial:{name}")
    return Problem("polynomial", parts["f"], parts["h"], K)


def _org_problem(d) -> Problem:
    nt = _num(d, "org.n_tasks", None, int)
    nf = _num(d, "org.n_followers", None, int)
    if nt is None or nf is None:
        raise InvalidInputError("org-polynomial needs org.n_tasks and org.n_followers")
    K = FeasibleSet.box(_vector(d, "org.lower"), _vector(d, "org.upper"))
    mc = _polynomial(d, "org.means_cost") if "org.means_cost.coeffs" in d else None
    org = polynomial_organization(
        nt, nf, _polynomial(d, "org.revenue"),
        [_polynomial(d, f"org.wage.{j}") for j in range(1, nf + 1)],
        [_polynomial(d, f"org.disutility.{j}") for j in range(1, nf + 1)],
        _num(d, "org.leader_weight", 1.0), K, mc)
    f, h, K = build_bep(org)
    return Problem("org-polynomial", f, h, K, org=org)


@dataclass
class ExperimentConfig:
    """Validated experiment description; see the module docstring for the keys."""

    problem: Problem
    pair_label: str
    schedule: Schedule
    x0: np.ndarray
    max_outer: int = 500
    step_tol: float = 1e-10
    residual_tol: float | None = None
    inner: InnerSolveOptions = field(default_factory=InnerSolveOptions)
    inner_tol_base: float = 1e-8
    reference: np.ndarray | None = None
    seed: int = 0
    csv_name: str = "trace.csv"
    json_name: str = "report.json"
    name: str = "experiment"
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, d: dict, name: str = "experiment") -> ExperimentConfig:
        prob_name = d.get("problem")
        if not isinstance(prob_name, str):
            raise InvalidInputError("config needs 'problem' (a preset name, polynomial or org-polynomial)")
        if prob_name == "polynomial":
            problem = _polynomial_problem(d)
        elif prob_name == "org-polynomial":
            problem = _org_problem(d)
        elif prob_name in PRESETS:
            problem = PRESETS[prob_name]()
            if prob_name == "demo-org" and "org.leader_weight" in d:
                org = demo_organization(_num(d, "org.leader_weight", 1.0))
                f, h, K = build_bep(org)
                problem = Problem("demo-org", f, h, K, reference=problem.reference, org=org)
        else:
            raise InvalidInputError(
                f"unknown problem preset '{prob_name}' (known: {', '.join(PRESETS)})")
        K = problem.K

        pair_label = d.get("pair", problem.pair)
        if pair_label not in BUILDERS:
            raise InvalidInputError(f"unknown proximal pair '{pair_label}'")

        sched = d.get("schedule", SCHEDULES[0])
        if sched not in SCHEDULES:
            raise InvalidInputError(f"unknown schedule preset '{sched}'")
        schedule = Schedule.linear(_num(d, "schedule.eps0", 1.0), _num(d, "schedule.slope", 1.0),
                                   _num(d, "schedule.lambda0", 1.0))

        x0 = d.get("x0", "auto")
        if x0 == "auto":
            x0 = problem.start()
        else:
            x0 = _vector(d, "x0")
            if x0.size != K.dimension:
                raise InvalidInputError(f"x0 has length {x0.size}, problem dimension is {K.dimension}")

        ref = d.get("reference", "preset")
        if ref == "preset":
            ref = problem.reference
        elif ref == "none":
            ref = None
        else:
            ref = _vector(d, "reference")
            if ref.size != K.dimension:
                raise InvalidInputError("reference dimension does not match the problem")

        mode = d.get("inner.mode", "auto")
        if mode not in MODES:
            raise InvalidInputError(f"inner.mode must be one of {MODES}")
        seed = _num(d, "seed", 0, int, positive=False)
        if seed < 0:
            raise InvalidInputError("seed must be nonnegative")
        inner = InnerSolveOptions(
            tol=_num(d, "inner.tol", 1e-8), max_iter=_num(d, "inner.max_iter", 20000, int),
            prox_step=_num(d, "inner.prox_step", None), mode=mode,
            stat_tol=_num(d, "inner.stat_tol", 1e-12), seed=seed)
        for key in ("outputs.csv", "outputs.json"):
            if key in d and not isinstance(d[key], str):
                raise InvalidInputError(f"config key '{key}' must be a file name")
        return cls(problem, pair_label, schedule, x0,
                   max_outer=_num(d, "outer.max_outer", 500, int),
                   step_tol=_num(d, "outer.step_tol", 1e-10),
                   residual_tol=_num(d, "outer.residual_tol", None),
                   inner=inner, inner_tol_base=inner.tol, reference=ref, seed=seed,
                   csv_name=d.get("outputs.csv", "trace.csv"),
                   json_name=d.get("outputs.json", "report.json"), name=name, raw=dict(d))
