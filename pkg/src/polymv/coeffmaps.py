"""Coefficient maps: parsing and evaluation (re-exported) plus validators for
the growth assumptions and the positive maximum principle (PMP).

Every check yields a ``ConditionResult``.  SYMBOLIC verdicts come from the
expression structure and are exact; SAMPLED verdicts come from seeded random
probing and are only ever FALSIFIED or UNKNOWN.  A FALSIFIED result always
carries a ``Witness`` whose ``recheck()`` re-evaluates the maps and confirms
the violation.

Growth conditions with an existential constant (``|g(x)| <= K (1 + s(x))``)
cannot be violated at any single point, so their witnesses use a ratio test:
the witness point must show ``|g|/(1+s)`` above ``GROWTH_FACTOR`` times the
largest ratio seen on a fixed calibration set inside the unit ball.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from . import expr as ex
from .errors import ConfigError
from .expr import CoeffExpr, evaluate, parse, render  # noqa: F401  (public re-exports)
from .model import ModelSpec, StateSpace, load_model, make_model, parse_model  # noqa: F401

N_SAMPLES = 10_000
R_MIN, R_MAX = 1e-3, 1e6
SAMPLE_SEED = 0
N_CALIBRATION = 1_000
GROWTH_FACTOR = 1e3
ZERO_TOL = 1e-12


class Verdict(enum.Enum):
    VERIFIED = "VERIFIED"
    FALSIFIED = "FALSIFIED"
    UNKNOWN = "UNKNOWN"


class Method(enum.Enum):
    SYMBOLIC = "SYMBOLIC"
    SAMPLED = "SAMPLED"


# -- sampling ------------------------------------------------------------------------

def sample_points(N, n=N_SAMPLES, r_min=R_MIN, r_max=R_MAX, *, seed=SAMPLE_SEED,
                  nonneg=False, x1_zero=False):
    """Points with ``||x||_N`` log-uniform in ``[r_min, r_max]``; shape ``(N, n)``.

    A direction ``w`` on the unit sphere and radius ``r`` give
    ``x_k = sign_k (r |w_k|)**k``, so that ``||x||_N = r`` exactly.
    """
    g = np.random.default_rng(seed)
    r = np.exp(g.uniform(math.log(r_min), math.log(r_max), n))
    w = g.standard_normal((N, n))
    if x1_zero:
        w[0] = 0.0
        if N == 1:
            return np.zeros((1, n)), r * 0.0
    w /= np.linalg.norm(w, axis=0)
    k = np.arange(1, N + 1)[:, None]
    x = (r * np.abs(w)) ** k
    if not nonneg:
        x *= np.sign(w)
    return x, r


def norm_N(x):
    i = np.arange(1, x.shape[0] + 1).reshape((-1,) + (1,) * (x.ndim - 1))
    return np.sqrt(np.sum(np.abs(x) ** (2.0 / i), axis=0))


def _probe_points(N, nonneg):
    """Origin, unit axes and a few fixed points, always tried before sampling."""
    pts = [np.zeros(N), np.ones(N)]
    for k in range(N):
        for s in ((1.0,) if nonneg else (1.0, -1.0)):
            e = np.zeros(N)
            e[k] = s
            pts.append(e)
    return np.array(pts).T


# -- witnesses -------------------------------------------------------------------------

@dataclass(frozen=True)
class GrowthShape:
    """Reference growth ``s(x)``: ``||x||_N**degree`` or ``|x1|`` (``on_x1``)."""

    degree: Fraction
    on_x1: bool = False
    x1_zero: bool = False     # compare only on points with x1 = 0 (slack via f(|x1|))

    def __call__(self, x):
        if self.on_x1:
            return np.abs(x[0])
        return norm_N(x) ** float(self.degree)

    def describe(self) -> str:
        if self.on_x1:
            return "K(1 + |x1|)"
        base = f"K(1 + ||x||_N^{self.degree})"
        return base + " on x1 = 0" if self.x1_zero else base


def _ratio(e, shape, x):
    with np.errstate(over="ignore", invalid="ignore"):
        return np.abs(evaluate(e, x)) / (1.0 + shape(x))


def _calibration(e, shape, N):
    x, _ = sample_points(N, N_CALIBRATION, R_MIN, 1.0, seed=SAMPLE_SEED + 1, x1_zero=shape.x1_zero)
    r = _ratio(e, shape, x)
    r = r[np.isfinite(r)]
    return float(r.max()) if r.size else 0.0


@dataclass(frozen=True)
class Witness:
    """Evidence for a FALSIFIED verdict.

    ``kind``: ``"sign"`` (value has the wrong sign), ``"nonzero"`` (a map
    that must vanish does not), ``"quadratic"`` (``c + gamma z + Gamma z^2 < 0``
    at ``(point, z)``) or ``"growth"`` (ratio test, see module docstring).
    """

    kind: str
    point: tuple
    values: dict
    exprs: dict = field(repr=False, default_factory=dict)
    sense: str = ""            # "nonneg" / "nonpos" for sign witnesses
    z: Optional[float] = None
    shape: Optional[GrowthShape] = None

    def recheck(self) -> bool:
        """Re-evaluate the maps at the witness and confirm the violation."""
        x = np.asarray(self.point, dtype=float)
        if self.kind == "sign":
            v = float(evaluate(self.exprs["g"], x))
            return v < 0 if self.sense == "nonneg" else v > 0
        if self.kind == "nonzero":
            return float(evaluate(self.exprs["g"], x)) != 0.0
        if self.kind == "quadratic":
            c, g, G = (float(evaluate(self.exprs[k], x)) for k in ("c", "gamma", "Gamma"))
            return c + g * self.z + G * self.z * self.z < 0
        if self.kind == "growth":
            e = self.exprs["g"]
            r = float(_ratio(e, self.shape, x[:, None])[0])
            return math.isfinite(r) and r > GROWTH_FACTOR * max(_calibration(e, self.shape, len(x)), 1e-300)
        raise ValueError(f"unknown witness kind {self.kind!r}")

    def __post_init__(self):
        object.__setattr__(self, "point", tuple(float(v) for v in self.point))

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "point": list(self.point), "values": dict(self.values)}
        if self.z is not None:
            out["z"] = self.z
        if self.shape is not None:
            out["bound"] = self.shape.describe()
        return out


@dataclass(frozen=True)
class ConditionResult:
    condition: str
    verdict: Verdict
    method: Method
    witness: Optional[Witness] = None
    detail: str = ""

    def __post_init__(self):
        if self.verdict is Verdict.FALSIFIED and self.witness is None:
            raise ValueError("a FALSIFIED result needs a witness")
        if self.method is Method.SAMPLED and self.verdict is Verdict.VERIFIED:
            raise ValueError("sampling cannot verify a condition")

    def to_dict(self) -> dict:
        out = {"condition": self.condition, "verdict": self.verdict.value, "method": self.method.value}
        if self.witness is not None:
            out["witness"] = self.witness.to_dict()
        if self.detail:
            out["detail"] = self.detail
        return out


@dataclass(frozen=True)
class ValidationReport:
    title: str
    entries: tuple

    @property
    def verdict(self) -> Verdict:
        vs = [e.verdict for e in self.entries]
        if Verdict.FALSIFIED in vs:
            return Verdict.FALSIFIED
        if all(v is Verdict.VERIFIED for v in vs):
            return Verdict.VERIFIED
        return Verdict.UNKNOWN

    def __getitem__(self, condition: str) -> ConditionResult:
        for e in self.entries:
            if e.condition == condition:
                return e
        raise KeyError(condition)

    def to_dict(self) -> dict:
        return {"title": self.title, "verdict": self.verdict.value,
                "entries": [e.to_dict() for e in self.entries]}

    def format(self) -> str:
        lines = [f"{self.title}: {self.verdict.value}"]
        for e in self.entries:
            line = f"  {e.condition:<28} {e.verdict.value:<9} {e.method.value}"
            if e.witness is not None:
                w = e.witness
                line += "  witness x=[" + ", ".join(f"{v:.6g}" for v in w.point) + "]"
                if w.z is not None:
                    line += f" z={w.z:.6g}"
            if e.detail:
                line += f"  ({e.detail})"
            lines.append(line)
        return "\n".join(lines)


# -- asymptotics along coordinate axes ------------------------------------------------------

_INF = math.inf


def _asym(e, k, sign):
    """Leading behaviour ``coef * t**expo`` of ``e`` at ``x = sign * t * e_k``, ``t -> inf``.

    Returns ``"zero"`` for terms that vanish (identically or exponentially),
    ``(coef, expo)`` otherwise, or ``None`` when the shape is not handled or
    leading terms could cancel.
    """
    if isinstance(e, ex.Const):
        return "zero" if e.value == 0 else (e.value, Fraction(0))
    if isinstance(e, ex.Var):
        return (float(sign), Fraction(1)) if e.index == k else "zero"
    if isinstance(e, ex.Abs):
        r = _asym(e.arg, k, sign)
        return r if r in (None, "zero") else (abs(r[0]), r[1])
    if isinstance(e, ex.Scale):
        if e.coef == 0:
            return "zero"
        r = _asym(e.arg, k, sign)
        return r if r in (None, "zero") else (e.coef * r[0], r[1])
    if isinstance(e, ex.Pow):
        r = _asym(e.arg, k, sign)
        if r is None:
            return None
        if r == "zero":
            return "zero" if e.p > 0 else (1.0, Fraction(0))
        c, a = r
        if c < 0 and e.q % 2 == 0:
            return None
        mag = abs(c) ** (e.p / e.q)
        sgn = -1.0 if (c < 0 and e.p % 2 == 1) else 1.0
        return (sgn * mag, a * Fraction(e.p, e.q) if a != _INF else _INF) if e.p else (1.0, Fraction(0))
    if isinstance(e, ex.Exp):
        r = _asym(e.arg, k, sign)
        if r is None:
            return None
        if r == "zero":
            return (1.0, Fraction(0))
        c, a = r
        if a == 0:
            return (math.exp(c), Fraction(0))
        return (1.0, _INF) if c > 0 else "zero"
    if isinstance(e, ex.Prod):
        coef, expo = 1.0, Fraction(0)
        for f in e.factors:
            r = _asym(f, k, sign)
            if r is None:
                return None
            if r == "zero":
                return "zero"
            coef *= r[0]
            expo = _INF if (expo == _INF or r[1] == _INF) else expo + r[1]
        return (coef, expo)
    if isinstance(e, ex.Sum):
        parts = []
        for t in e.terms:
            r = _asym(t, k, sign)
            if r is None:
                return None
            if r != "zero":
                parts.append(r)
        if not parts:
            return "zero"
        top = max(p[1] for p in parts)
        lead = [p for p in parts if p[1] == top]
        if top == _INF:
            return lead[0] if len(lead) == 1 else None
        c = sum(p[0] for p in lead)
        return None if c == 0 else (c, top)
    return None


def _axis_excess(e, shape: GrowthShape, N):
    """An axis ``(k, sign)`` along which ``e`` provably outgrows ``shape``, else ``None``."""
    for k in range(1, N + 1):
        if shape.x1_zero and k == 1:
            continue
        if shape.on_x1:
            bound = Fraction(1) if k == 1 else Fraction(0)
        else:
            bound = shape.degree / k        # ||t e_k||_N = t**(1/k)
        for sign in (1, -1):
            r = _asym(e, k, sign)
            if r in (None, "zero"):
                continue
            if r[1] == _INF or r[1] > bound:
                return k, sign
    return None


def _axis_witness(e, shape, N, k, sign):
    calib = max(_calibration(e, shape, N), 1e-300)
    for j in range(1, 61):
        r = 10.0 ** (j / 2)
        x = np.zeros(N)
        x[k - 1] = sign * r ** k
        with np.errstate(over="ignore", invalid="ignore"):
            ratio = float(_ratio(e, shape, x[:, None])[0])
        if math.isfinite(ratio) and ratio > GROWTH_FACTOR * calib:
            return Witness("growth", tuple(x), {"ratio": ratio, "calibration": calib,
                                                "value": float(evaluate(e, x))},
                           {"g": e}, shape=shape)
    return None


# -- growth conditions -----------------------------------------------------------------------

def _growth_symbolic_ok(e, shape: GrowthShape) -> bool:
    if shape.on_x1:
        # |g| <= K(1 + |x1|): bounded terms, or x1-only terms of degree <= 1
        for t in ex.additive_terms(e):
            d = ex.norm_degree(t)
            if d is None:
                return False
            if d == 0:
                continue
            if ex.variables(t) <= {1} and d <= 1:
                continue
            return False
        return True
    for t in ex.additive_terms(e):
        if shape.x1_zero and ex.variables(t) <= {1}:
            continue          # absorbed into the increasing slack f(|x1|)
        d = ex.norm_degree(t)
        if d is None or d > shape.degree:
            return False
    return True


def check_growth(cid: str, e: CoeffExpr, shape: GrowthShape, N: int) -> ConditionResult:
    if _growth_symbolic_ok(e, shape):
        return ConditionResult(cid, Verdict.VERIFIED, Method.SYMBOLIC,
                               detail=f"|{cid.split('.')[1]}| <= {shape.describe()}")
    axis = _axis_excess(e, shape, N)
    if axis is not None:
        w = _axis_witness(e, shape, N, *axis)
        if w is not None:
            return ConditionResult(cid, Verdict.FALSIFIED, Method.SYMBOLIC, w,
                                   detail=f"grows faster than {shape.describe()} along x{axis[0]}")
    # sampled ratio test
    x, r = sample_points(N, x1_zero=shape.x1_zero)
    ratios = _ratio(e, shape, x)
    calib = max(_calibration(e, shape, N), 1e-300)
    far = np.isfinite(ratios) & (r >= 1e3)
    if np.any(far):
        i = int(np.flatnonzero(far)[np.argmax(ratios[far])])
        if ratios[i] > GROWTH_FACTOR * calib:
            w = Witness("growth", tuple(x[:, i]), {"ratio": float(ratios[i]), "calibration": calib,
                                                   "value": float(evaluate(e, x[:, i]))},
                        {"g": e}, shape=shape)
            return ConditionResult(cid, Verdict.FALSIFIED, Method.SAMPLED, w)
    return ConditionResult(cid, Verdict.UNKNOWN, Method.SAMPLED,
                           detail="no violation found by sampling")


def check_assumptions(spec: ModelSpec, which: str) -> ValidationReport:
    """Growth assumptions A, B (no common noise) or C (common noise)."""
    which = str(which).upper()
    N = spec.N
    deg = Fraction
    if which == "A":
        conds = [("beta.bounded", spec.beta, GrowthShape(deg(0))),
                 ("Gamma.bounded", spec.Gamma, GrowthShape(deg(0))),
                 ("c.quadratic_growth", spec.c, GrowthShape(deg(2), x1_zero=True)),
                 ("gamma.linear_growth", spec.gamma, GrowthShape(deg(1), x1_zero=True)),
                 ("b.growth_in_x1", spec.b, GrowthShape(deg(1), on_x1=True))]
    elif which == "B":
        conds = [("beta.bounded", spec.beta, GrowthShape(deg(0))),
                 ("Gamma.bounded", spec.Gamma, GrowthShape(deg(0))),
                 ("c.quadratic_growth", spec.c, GrowthShape(deg(2))),
                 ("gamma.linear_growth", spec.gamma, GrowthShape(deg(1))),
                 ("b.linear_growth", spec.b, GrowthShape(deg(1)))]
    elif which == "C":
        if not spec.has_common_noise:
            raise ConfigError("Assumptions C need the common-noise maps l and Lambda")
        conds = [("beta.bounded", spec.beta, GrowthShape(deg(0))),
                 ("Gamma.bounded", spec.Gamma, GrowthShape(deg(0))),
                 ("Lambda.bounded", spec.Lambda, GrowthShape(deg(0))),
                 ("b.linear_growth", spec.b, GrowthShape(deg(1))),
                 ("gamma.linear_growth", spec.gamma, GrowthShape(deg(1))),
                 ("l.linear_growth", spec.l, GrowthShape(deg(1))),
                 ("c.quadratic_growth", spec.c, GrowthShape(deg(2)))]
    else:
        raise ConfigError(f"unknown assumption set {which!r}; use A, B or C")
    entries = tuple(check_growth(f"{which}.{cid}", e, shape, N) for cid, e, shape in conds)
    return ValidationReport(f"Assumptions {which}", entries)


# -- sign / vanishing conditions ------------------------------------------------------------

def _sample_for_sign(N, nonneg):
    x, _ = sample_points(N, nonneg=nonneg)
    return np.concatenate([_probe_points(N, nonneg), x], axis=1)


def _poly_is_zero(e) -> Optional[bool]:
    """``True``/``False`` when decidable from the polynomial expansion (with tolerance)."""
    if ex.is_zero(e):
        return True
    p = ex.polynomial(e)
    if p is None:
        return None
    return all(abs(v) <= ZERO_TOL for v in p.values())


def check_sign(cid, e, sense, N, nonneg_domain) -> ConditionResult:
    """``sense`` is ``"nonneg"`` (``e >= 0``) or ``"nonpos"`` (``e <= 0``) on the domain."""
    proof = ex.is_nonneg if sense == "nonneg" else ex.is_nonpos
    if proof(e, nonneg_domain):
        return ConditionResult(cid, Verdict.VERIFIED, Method.SYMBOLIC)
    if ex.is_constant(e):
        v = ex.constant_value(e)
        if (v >= 0) if sense == "nonneg" else (v <= 0):
            return ConditionResult(cid, Verdict.VERIFIED, Method.SYMBOLIC)
    x = _sample_for_sign(N, nonneg_domain)
    with np.errstate(over="ignore", invalid="ignore"):
        v = np.broadcast_to(evaluate(e, x), x.shape[1:])
    bad = (v < 0) if sense == "nonneg" else (v > 0)
    bad &= np.isfinite(v)
    method = Method.SYMBOLIC if ex.is_constant(e) else Method.SAMPLED
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        w = Witness("sign", tuple(x[:, i]), {"value": float(v[i])}, {"g": e}, sense=sense)
        return ConditionResult(cid, Verdict.FALSIFIED, method, w)
    return ConditionResult(cid, Verdict.UNKNOWN, Method.SAMPLED, detail="no violation found by sampling")


def check_zero(cid, e, N, nonneg_domain) -> ConditionResult:
    z = _poly_is_zero(e)
    if z:
        return ConditionResult(cid, Verdict.VERIFIED, Method.SYMBOLIC)
    x = _sample_for_sign(N, nonneg_domain)
    with np.errstate(over="ignore", invalid="ignore"):
        v = np.broadcast_to(evaluate(e, x), x.shape[1:])
    tol = ZERO_TOL if z is not None else 0.0
    bad = np.isfinite(v) & (np.abs(v) > tol)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        method = Method.SYMBOLIC if z is False else Method.SAMPLED
        w = Witness("nonzero", tuple(x[:, i]), {"value": float(v[i])}, {"g": e})
        return ConditionResult(cid, Verdict.FALSIFIED, method, w)
    return ConditionResult(cid, Verdict.UNKNOWN, Method.SAMPLED, detail="no violation found by sampling")


# -- nonnegativity of c + gamma z + Gamma z^2 -------------------------------------------------

_Z_RANGE = {StateSpace.REAL: (-_INF, _INF), StateSpace.NONNEG: (0.0, _INF),
            StateSpace.UNIT_INTERVAL: (0.0, 1.0)}


def _quad_min_nonneg_exact(c, g, G, lo, hi) -> bool:
    """Exact test of ``min_{z in [lo, hi]} c + g z + G z^2 >= 0`` for numbers."""
    def q(z):
        return c + g * z + G * z * z
    if G < 0:
        if lo == -_INF or hi == _INF:
            return False
        return q(lo) >= 0 and q(hi) >= 0
    if G == 0:
        if lo == -_INF and g > 0 or hi == _INF and g < 0:
            return False
        if lo == -_INF and hi == _INF:
            return g == 0 and c >= 0
        ends = [v for v in (lo, hi) if math.isfinite(v)]
        return all(q(v) >= 0 for v in ends)
    v = -g / (2 * G)
    if lo <= v <= hi:
        return 4 * G * c - g * g >= 0
    ends = [x for x in (lo, hi) if math.isfinite(x)]
    return all(q(x) >= 0 for x in ends)


def _quad_witness_z(c, g, G, lo, hi):
    """A ``z`` in ``[lo, hi]`` with negative quadratic value, or ``None``."""
    cands = [x for x in (lo, hi) if math.isfinite(x)]
    if G > 0:
        cands.append(min(max(-g / (2 * G), lo), hi))
    for j in range(0, 31):
        for s in (1.0, -1.0):
            z = s * 10.0 ** j
            if lo <= z <= hi:
                cands.append(z)
    for z in sorted(cands, key=abs):
        if c + g * z + G * z * z < 0:
            return float(z)
    return None


def check_sqrt_argument(spec: ModelSpec, cid="sqrt_argument.nonneg") -> ConditionResult:
    """``c(x) + gamma(x) z + Gamma(x) z^2 >= 0`` for ``z`` in S and all moment vectors ``x``."""
    space = spec.state_space
    nonneg = space is not StateSpace.REAL
    c, g, G = spec.c, spec.gamma, spec.Gamma
    lo, hi = _Z_RANGE[space]
    exprs = {"c": c, "gamma": g, "Gamma": G}

    # shapes that entail nonnegativity
    if ex.is_nonneg(c, nonneg) and ex.is_nonneg(G, nonneg) and ex.is_zero(g):
        return ConditionResult(cid, Verdict.VERIFIED, Method.SYMBOLIC, detail="c >= 0, Gamma >= 0, gamma = 0")
    if nonneg and all(ex.is_nonneg(e, True) for e in (c, g, G)):
        return ConditionResult(cid, Verdict.VERIFIED, Method.SYMBOLIC, detail="all terms nonnegative on S")
    if space is StateSpace.UNIT_INTERVAL and _poly_is_zero(c) and _poly_is_zero(ex.add(g, G)) \
            and ex.is_nonneg(g, True):
        return ConditionResult(cid, Verdict.VERIFIED, Method.SYMBOLIC, detail="gamma z (1 - z) form")
    if ex.is_nonneg(c, nonneg) and ex.is_nonneg(G, nonneg):
        disc = ex.add(ex.mul(ex.const(4.0), G, c), ex.neg(ex.mul(g, g)))
        if _poly_is_zero(disc):
            return ConditionResult(cid, Verdict.VERIFIED, Method.SYMBOLIC, detail="perfect square")
    if all(ex.is_constant(e) for e in (c, g, G)):
        cv, gv, Gv = (ex.constant_value(e) for e in (c, g, G))
        if _quad_min_nonneg_exact(cv, gv, Gv, lo, hi):
            return ConditionResult(cid, Verdict.VERIFIED, Method.SYMBOLIC, detail="constant quadratic")
        z = _quad_witness_z(cv, gv, Gv, lo, hi)
        x = tuple(np.zeros(spec.N))
        w = Witness("quadratic", x, {"c": cv, "gamma": gv, "Gamma": Gv}, exprs, z=z)
        return ConditionResult(cid, Verdict.FALSIFIED, Method.SYMBOLIC, w, detail="constant quadratic")

    x = _sample_for_sign(spec.N, nonneg)
    with np.errstate(over="ignore", invalid="ignore"):
        cs, gs, Gs = (np.broadcast_to(evaluate(e, x), x.shape[1:]) for e in (c, g, G))
    for i in range(x.shape[1]):
        if not (np.isfinite(cs[i]) and np.isfinite(gs[i]) and np.isfinite(Gs[i])):
            continue
        z = _quad_witness_z(cs[i], gs[i], Gs[i], lo, hi)
        if z is not None:
            w = Witness("quadratic", tuple(x[:, i]),
                        {"c": float(cs[i]), "gamma": float(gs[i]), "Gamma": float(Gs[i])}, exprs, z=z)
            return ConditionResult(cid, Verdict.FALSIFIED, Method.SAMPLED, w)
    return ConditionResult(cid, Verdict.UNKNOWN, Method.SAMPLED, detail="no violation found by sampling")


# -- PMP --------------------------------------------------------------------------------------

def check_pmp(spec: ModelSpec) -> ValidationReport:
    """Sufficient PMP conditions for the model's state space.

    Without common noise: S = R needs only a nonnegative square-root
    argument; S = R+ adds b >= 0, c = 0, gamma >= 0, Gamma >= 0; S = [0, 1]
    adds b >= 0, b + beta <= 0, c = 0, gamma = -Gamma >= 0.  Sign conditions
    are checked on nonnegative moment vectors for the bounded state spaces.
    With common noise the multidimensional conditions for the
    conditional-moment system are used; see ``check_pmp_common``.
    """
    if spec.has_common_noise:
        return check_pmp_common(spec)
    N, space = spec.N, spec.state_space
    entries = [check_sqrt_argument(spec)]
    if space is StateSpace.NONNEG:
        entries += [check_sign("b.nonneg", spec.b, "nonneg", N, True),
                    check_zero("c.zero", spec.c, N, True),
                    check_sign("gamma.nonneg", spec.gamma, "nonneg", N, True),
                    check_sign("Gamma.nonneg", spec.Gamma, "nonneg", N, True)]
    elif space is StateSpace.UNIT_INTERVAL:
        entries += [check_sign("b.nonneg", spec.b, "nonneg", N, True),
                    check_sign("b+beta.nonpos", ex.add(spec.b, spec.beta), "nonpos", N, True),
                    check_zero("c.zero", spec.c, N, True),
                    check_zero("gamma+Gamma.zero", ex.add(spec.gamma, spec.Gamma), N, True),
                    check_sign("gamma.nonneg", spec.gamma, "nonneg", N, True)]
    return ValidationReport(f"PMP on S={space.value}", tuple(entries))


def _boundary_points(N):
    """Sampled moment vectors with at least one even-index component at 0."""
    x, _ = sample_points(N)
    evens = np.arange(1, N, 2)            # 0-based rows of m_2, m_4, ...
    x = x.copy()
    x[evens] = np.abs(x[evens])
    if len(evens):
        pick = evens[np.arange(x.shape[1]) % len(evens)]
        x[pick, np.arange(x.shape[1])] = 0.0
    return x


def _check_on_points(cid, e, x, sense):
    with np.errstate(over="ignore", invalid="ignore"):
        v = np.broadcast_to(evaluate(e, x), x.shape[1:])
    if sense == "zero":
        bad = np.isfinite(v) & (v != 0)
        kind = "nonzero"
    else:
        bad = np.isfinite(v) & (v < 0)
        kind = "sign"
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        w = Witness(kind, tuple(x[:, i]), {"value": float(v[i])}, {"g": e},
                    sense="nonneg" if sense != "zero" else "")
        return ConditionResult(cid, Verdict.FALSIFIED, Method.SAMPLED, w)
    return ConditionResult(cid, Verdict.UNKNOWN, Method.SAMPLED, detail="no violation found by sampling")


def check_pmp_common(spec: ModelSpec) -> ValidationReport:
    """PMP for the conditional-moment system with common noise.

    S = R+ x ... x R+: l = c = 0 and b, gamma, Gamma, Lambda >= 0.
    S = R: read as the alternating space whose even-index components
    (the even conditional moments) are nonnegative: gamma = 0, Gamma >= 0,
    c >= 0 everywhere, and c = l = 0, b >= 0 on boundary points (some even
    component equal to 0).  No conditions are available for S = [0, 1].
    """
    N, space = spec.N, spec.state_space
    title = f"PMP (common noise) on S={space.value}"
    if space is StateSpace.NONNEG:
        entries = [check_zero("l.zero", spec.l, N, True),
                   check_zero("c.zero", spec.c, N, True),
                   check_sign("b.nonneg", spec.b, "nonneg", N, True),
                   check_sign("gamma.nonneg", spec.gamma, "nonneg", N, True),
                   check_sign("Gamma.nonneg", spec.Gamma, "nonneg", N, True),
                   check_sign("Lambda.nonneg", spec.Lambda, "nonneg", N, True)]
        return ValidationReport(title, tuple(entries))
    if space is StateSpace.REAL:
        entries = [check_zero("gamma.zero", spec.gamma, N, False),
                   check_sign("Gamma.nonneg", spec.Gamma, "nonneg", N, False),
                   check_sign("c.nonneg", spec.c, "nonneg", N, False)]
        if N >= 2:
            xb = _boundary_points(N)
            for cid, e, sense in (("c.zero_on_boundary", spec.c, "zero"),
                                  ("l.zero_on_boundary", spec.l, "zero"),
                                  ("b.nonneg_on_boundary", spec.b, "nonneg")):
                if sense == "zero" and ex.is_zero(e) or sense == "nonneg" and ex.is_nonneg(e):
                    entries.append(ConditionResult(cid, Verdict.VERIFIED, Method.SYMBOLIC))
                elif ex.is_constant(e):
                    entries.append(check_zero(cid, e, N, False) if sense == "zero"
                                   else check_sign(cid, e, "nonneg", N, False))
                else:
                    entries.append(_check_on_points(cid, e, xb, sense))
        return ValidationReport(title, tuple(entries))
    return ValidationReport(title, (ConditionResult(
        "unit_interval", Verdict.UNKNOWN, Method.SYMBOLIC,
        detail="no sufficient PMP conditions are available for this state space"),))


def check_pmp_joint(spec: ModelSpec, case) -> ValidationReport:
    """PMP for the jointly polynomial extended systems.

    Nonnegative product space (``state_space`` R+): b, gamma, Gamma0 >= 0 and
    l0 = c = 0.  Real space (``state_space`` R): c0, c2, Gamma0 >= 0 and
    gamma = c1 = 0; case A additionally needs l0 = b0 = 0 (its last
    coordinate, the conditional second moment, stays nonnegative).
    """
    from .common_noise import JointCase, joint_generator

    case = JointCase(case) if not isinstance(case, JointCase) else case
    joint_generator(spec, case)           # template check
    N, space = spec.N, spec.state_space
    title = f"PMP (joint, {case.name}) on S={space.value}"
    if space is StateSpace.NONNEG:
        entries = [check_sign("b.nonneg", spec.b, "nonneg", N, True),
                   check_sign("gamma.nonneg", spec.gamma, "nonneg", N, True),
                   check_sign("Gamma0.nonneg", spec.Gamma, "nonneg", N, True),
                   check_zero("l0.zero", spec.l, N, True),
                   check_zero("c.zero", spec.c, N, True)]
        return ValidationReport(title, tuple(entries))
    if space is StateSpace.REAL:
        p = ex.polynomial(spec.c) or {}
        coef = {}
        for exps, v in p.items():
            key = tuple(exps) + (0,) * (2 - len(exps))
            coef[key] = v
        c0 = ex.const(coef.get((0, 0), 0.0))
        c1 = ex.const(coef.get((1, 0), 0.0))
        c2 = ex.const(coef.get((2, 0) if case is JointCase.PROP_B else (0, 1), 0.0))
        entries = [check_sign("c0.nonneg", c0, "nonneg", N, False),
                   check_sign("c2.nonneg", c2, "nonneg", N, False),
                   check_sign("Gamma0.nonneg", spec.Gamma, "nonneg", N, False),
                   check_zero("gamma.zero", spec.gamma, N, False),
                   check_zero("c1.zero", c1, N, False)]
        if case is JointCase.PROP_A:
            entries += [check_zero("l0.zero", spec.l, N, False),
                        check_zero("b0.zero", spec.b, N, False)]
        return ValidationReport(title, tuple(entries))
    return ValidationReport(title, (ConditionResult(
        "unit_interval", Verdict.UNKNOWN, Method.SYMBOLIC,
        detail="no sufficient PMP conditions are available for this state space"),))
