"""Transition matrices of the moment-linearised polynomial process.

Conventions: ``H_t = L(z(t))^T`` acts on coefficient vectors of polynomials in
the monomial basis ``(1, z, ..., z^N)``; the transition matrix solves
``dP/ds = -H_s P`` (backward) and ``dP/dt = P H_t`` (forward), and
``E[<Zbar_t, u> | Z_s = z] = (1, z, ..., z^N) P_{s,t} u``.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import SpanError
from .momentode import OdeSolution, build_L, fmt
from .ode import dopri5

_GL_X, _GL_W = np.polynomial.legendre.leggauss(7)
QUAD_TOL = 1e-10
MAX_PANELS = {1: 1024, 2: 256, 3: 16}


class GeneratorPath:
    """``t -> H_t`` on a span ``[t0, t1]``, evaluated in batches.

    ``fn`` maps an array of times ``(m,)`` to matrices ``(m, n, n)``.
    ``preserves_constants`` marks generators with ``H e0 = 0`` (true for
    every moment generator); transition matrices then get their first column
    set to ``e0`` exactly.
    """

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], span, dim: int,
                 solution: Optional[OdeSolution] = None, preserves_constants: bool = False):
        self._fn = fn
        self.preserves_constants = bool(preserves_constants)
        self.span = (float(span[0]), float(span[1]))
        self.dim = int(dim)
        self.solution = solution

    @classmethod
    def from_solution(cls, sol: OdeSolution) -> "GeneratorPath":
        spec = sol.spec

        def fn(ts):
            z = sol.z(ts)                         # (m, N)
            return np.swapaxes(build_L(spec, z.T), -1, -2)

        return cls(fn, (sol.t[0], sol.t[-1]), spec.N + 1, sol, preserves_constants=True)

    @classmethod
    def from_function(cls, fn, span, dim: int) -> "GeneratorPath":
        """Wrap a scalar-time callable ``H(t)``."""
        def batch(ts):
            return np.stack([np.asarray(fn(float(t)), dtype=float) for t in ts])
        return cls(batch, span, dim)

    @classmethod
    def constant(cls, H, span=(0.0, math.inf)) -> "GeneratorPath":
        H = np.asarray(H, dtype=float)
        return cls(lambda ts: np.broadcast_to(H, (len(ts),) + H.shape).copy(), span, H.shape[0],
                   preserves_constants=not np.any(H[:, 0]))

    def H(self, t) -> np.ndarray:
        """``H_t`` for a scalar ``t`` or a stack for an array of times."""
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        out = self._fn(ts)
        return out[0] if np.ndim(t) == 0 else out

    def check_span(self, s, t):
        if s > t:
            raise SpanError(f"need s <= t, got s={s}, t={t}")
        lo, hi = self.span
        slack = 1e-12 * max(1.0, abs(hi) if math.isfinite(hi) else 1.0)
        if s < lo - slack or t > hi + slack:
            raise SpanError(f"[{s}, {t}] is outside the generator span [{lo}, {hi}]")


# -- quadrature --------------------------------------------------------------

def _gl_nodes(a, b, n):
    """Composite 7-point Gauss-Legendre nodes/weights on ``[a, b]``, vectorized.

    ``a``, ``b`` broadcast to shape ``S``; returns arrays ``S + (7n,)``.
    """
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    edges = a + (b - a) * (np.arange(n + 1) / n)
    lo, hi = edges[..., :-1, None], edges[..., 1:, None]
    half = (hi - lo) / 2
    x = (lo + hi) / 2 + half * _GL_X
    w = half * _GL_W
    shape = x.shape[:-2] + (-1,)
    return x.reshape(shape), np.broadcast_to(w, x.shape).reshape(shape)


def _running_integral(path, s, taus, n):
    """``I(tau) = int_s^tau H`` for every entry of ``taus`` (any shape)."""
    x, w = _gl_nodes(s, taus, n)
    Hx = path.H(x.ravel()).reshape(x.shape + (path.dim, path.dim))
    return np.einsum("...q,...qij->...ij", w, Hx)


def _comm(A, B):
    return A @ B - B @ A


def _omega_terms(path, s, t, order, n):
    x1, w1 = _gl_nodes(s, t, n)                      # outer nodes (7n,)
    H1 = path.H(x1)
    I1 = _running_integral(path, s, x1, n)
    terms = [np.einsum("q,qij->ij", w1, H1)]
    if order >= 2:
        terms.append(-0.5 * np.einsum("q,qij->ij", w1, _comm(H1, I1)))
    if order >= 3:
        x2, w2 = _gl_nodes(s, x1, n)                 # (7n, 7n)
        H2 = path.H(x2.ravel()).reshape(x2.shape + (path.dim, path.dim))
        I2 = _running_integral(path, s, x2, n)
        H1b = H1[:, None]
        inner = _comm(H1b, _comm(H2, I2)) + _comm(I2, _comm(H2, H1b))
        terms.append(np.einsum("p,pq,pqij->ij", w1, w2, inner) / 6.0)
    norm_int = float(w1 @ np.linalg.norm(H1, 2, axis=(-2, -1)))
    return terms, norm_int, x1, H1


@dataclass(frozen=True)
class MagnusResult:
    """Truncated Magnus exponent for ``P_{s,t}``.

    ``omega`` is in the original basis; ``epsilon`` is the basis scaling
    (1.0 when none was needed) and ``norm_integral_scaled`` the estimate of
    ``int ||H||_2`` in the scaled basis, which certifies convergence when
    below pi.
    """

    s: float
    t: float
    order: int
    omega: np.ndarray
    terms: tuple
    norm_integral: float
    epsilon: float
    norm_integral_scaled: float
    panels: int
    quad_converged: bool
    max_commutator: float

    @property
    def convergent(self) -> bool:
        return self.norm_integral_scaled < math.pi


#: candidate basis scalings, log-spaced in (0, 1]
SCALING_GRID = np.geomspace(1e-4, 1.0, 41)


def _scaling(dim, eps):
    return eps ** np.arange(dim, dtype=float)


def rescale(A, eps):
    """Similarity ``D^{-1} A D`` with ``D = diag(eps**k)``; entry ``(j, k)`` gets ``eps**(k-j)``."""
    d = _scaling(A.shape[-1], eps)
    return A * (d[None, :] / d[:, None])


def _best_scaling(path, s, t):
    """Basis scaling ``eps`` minimising ``int ||D^-1 H D||_2`` on a coarse quadrature."""
    x, w = _gl_nodes(s, t, 2)
    Hs = path.H(x)
    best_eps, best = 1.0, math.inf
    for eps in SCALING_GRID:
        v = float(w @ np.linalg.norm(rescale(Hs, eps), 2, axis=(-2, -1)))
        if v < best:
            best_eps, best = float(eps), v
    return best_eps


def magnus_omega(path: GeneratorPath, s: float, t: float, order: int = 3) -> MagnusResult:
    """Magnus exponent ``Omega(s, t)`` truncated at ``order`` (1, 2 or 3)."""
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    path.check_span(s, t)
    dim = path.dim
    if s == t:
        z = np.zeros((dim, dim))
        return MagnusResult(s, t, order, z, (z,) * order, 0.0, 1.0, 0.0, 0, True, 0.0)

    n, prev, converged = 1, None, False
    while True:
        terms, norm_int, x1, H1 = _omega_terms(path, s, t, order, n)
        omega = sum(terms)
        if prev is not None and np.max(np.abs(omega - prev)) < QUAD_TOL:
            converged = True
            break
        if n >= MAX_PANELS[order]:
            break
        prev, n = omega, 2 * n

    eps, norm_scaled = 1.0, norm_int
    if norm_int >= math.pi:
        eps = _best_scaling(path, s, t)
        _, w1 = _gl_nodes(s, t, n)
        norm_scaled = float(w1 @ np.linalg.norm(rescale(H1, eps), 2, axis=(-2, -1)))
    # commutator sample over the outer nodes
    idx = np.linspace(0, len(H1) - 1, min(len(H1), 7)).astype(int)
    max_comm = max((float(np.max(np.abs(_comm(H1[i], H1[j]))))
                    for i in idx for j in idx if i < j), default=0.0)
    return MagnusResult(s, t, order, omega, tuple(terms), norm_int, eps, norm_scaled,
                        n, converged, max_comm)


# -- linear algebra ------------------------------------------------------------

_PADE13 = np.array([64764752532480000., 32382376266240000., 7771770303897600.,
                    1187353796428800., 129060195264000., 10559470521600.,
                    670442572800., 33522128640., 1323241920., 40840800.,
                    960960., 16380., 182., 1.])
_THETA13 = 5.371920351148152


def matrix_exp(A) -> np.ndarray:
    """``e^A`` by scaling and squaring with the degree-13 Pade approximant."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix_exp needs a square matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix_exp: non-finite entries")
    n = A.shape[0]
    if not np.any(A):
        return np.eye(n)
    norm1 = np.max(np.sum(np.abs(A), axis=0)) if n else 0.0
    squarings = max(0, int(math.ceil(math.log2(norm1 / _THETA13)))) if norm1 > _THETA13 else 0
    A = A / 2.0 ** squarings
    b = _PADE13
    ident = np.eye(n)
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
             + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident)
    V = A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2) + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident
    R = np.linalg.solve(V - U, V + U)
    for _ in range(squarings):
        R = R @ R
    return R


def spectral_norm(A) -> float:
    """Largest singular value."""
    A = np.asarray(A, dtype=float)
    return float(np.linalg.norm(A, 2)) if A.size else 0.0


# -- transition matrices ---------------------------------------------------------

class Provenance(enum.Enum):
    MAGNUS = "MAGNUS"
    BACKWARD_ODE = "BACKWARD_ODE"
    FORWARD_ODE = "FORWARD_ODE"
    EXP_CONSTANT = "EXP_CONSTANT"


@dataclass(frozen=True)
class TransitionMatrix:
    """``P_{s,t}``; column ``j`` holds the coefficients of ``E[Z_t^j | Z_s = z]``."""

    s: float
    t: float
    P: np.ndarray
    provenance: Provenance
    order: Optional[int] = None
    column0_error: float = 0.0        # deviation of the unforced first column from e0
    info: dict = field(default_factory=dict, compare=False)

    @property
    def label(self) -> str:
        if self.provenance is Provenance.MAGNUS:
            return f"MAGNUS({self.order})"
        return self.provenance.value

    def apply(self, zs, u) -> float:
        """``(1, zs, ..., zs^N) P u``."""
        return float(monomials(zs, self.P.shape[0] - 1) @ self.P @ np.asarray(u, dtype=float))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# provenance={self.label} s={fmt(self.s)} t={fmt(self.t)}\n")
            w = csv.writer(fh, lineterminator="\n")
            for row in self.P:
                w.writerow([fmt(v) for v in row])


def monomials(z, N) -> np.ndarray:
    return float(z) ** np.arange(N + 1, dtype=float)


def _finish(P, s, t, prov, order=None, info=None, force_e0=True):
    P = np.array(P, dtype=float)
    e0 = np.zeros(P.shape[0])
    e0[0] = 1.0
    err = float(np.max(np.abs(P[:, 0] - e0)))
    if force_e0:
        P[:, 0] = e0
    return TransitionMatrix(float(s), float(t), P, prov, order, err, info or {})


def transition_exp_constant(H, s: float, t: float) -> TransitionMatrix:
    """``P_{s,t} = e^{(t-s) H}`` for a time-constant generator."""
    H = np.asarray(H, dtype=float)
    return _finish(matrix_exp((t - s) * H), s, t, Provenance.EXP_CONSTANT,
                   force_e0=not np.any(H[:, 0]))


def _matrix_ode(path, s, t, tol, backward):
    dim = path.dim
    eye = np.eye(dim).ravel()
    if s == t:
        return np.eye(dim), 0
    if backward:
        def rhs(r, y):
            return -(path.H(r) @ y.reshape(dim, dim)).ravel()
        res = dopri5(rhs, t, eye, s, tol, tol, h0=1e-4 * (t - s))
    else:
        def rhs(r, y):
            return (y.reshape(dim, dim) @ path.H(r)).ravel()
        res = dopri5(rhs, s, eye, t, tol, tol, h0=1e-4 * (t - s))
    return res.y[-1].reshape(dim, dim), len(res.t)


def transition_backward(path: GeneratorPath, s: float, t: float, tol: float = 1e-10) -> TransitionMatrix:
    """``P_{s,t}`` by integrating ``dP/ds = -H_s P`` from ``P_{t,t} = I`` down to ``s``."""
    path.check_span(s, t)
    P, steps = _matrix_ode(path, s, t, tol, backward=True)
    return _finish(P, s, t, Provenance.BACKWARD_ODE,
                   info={"grid_points": steps, "tol": tol}, force_e0=path.preserves_constants)


def transition_forward(path: GeneratorPath, s: float, t: float, tol: float = 1e-10) -> TransitionMatrix:
    """``P_{s,t}`` by integrating ``dP/dt = P H_t`` from ``P_{s,s} = I`` up to ``t``."""
    path.check_span(s, t)
    P, steps = _matrix_ode(path, s, t, tol, backward=False)
    return _finish(P, s, t, Provenance.FORWARD_ODE,
                   info={"grid_points": steps, "tol": tol}, force_e0=path.preserves_constants)


def transition_magnus(path: GeneratorPath, s: float, t: float, order: int = 3,
                      result: Optional[MagnusResult] = None) -> TransitionMatrix:
    """``P_{s,t} = e^{Omega}``, exponentiated in the scaled basis when one was chosen."""
    res = result if result is not None else magnus_omega(path, s, t, order)
    if res.epsilon != 1.0:
        d = _scaling(path.dim, res.epsilon)
        P = d[:, None] * matrix_exp(rescale(res.omega, res.epsilon)) / d[None, :]
    else:
        P = matrix_exp(res.omega)
    info = {"norm_integral": res.norm_integral, "epsilon": res.epsilon,
            "norm_integral_scaled": res.norm_integral_scaled, "panels": res.panels}
    return _finish(P, s, t, Provenance.MAGNUS, order=res.order, info=info,
                   force_e0=path.preserves_constants)


@dataclass(frozen=True)
class ConditionalMoment:
    value: float
    method: str                 # label of the transition matrix actually used
    fallback: bool              # True when MAGNUS was requested but not certified
    magnus: Optional[MagnusResult] = None


def conditional_moment(path: GeneratorPath, s: float, t: float, u, zs: float,
                       method: str = "MAGNUS", order: int = 3, tol: float = 1e-10) -> ConditionalMoment:
    """``E[<Zbar_t, u> | Z_s = zs]``.

    ``method`` is ``"MAGNUS"`` or ``"BACKWARD_ODE"``.  A Magnus request whose
    ``int ||H||_2`` stays at or above pi after basis scaling is answered with
    the backward ODE instead, and ``fallback`` is set.
    """
    path.check_span(s, t)
    u = np.asarray(u, dtype=float)
    if u.shape != (path.dim,):
        raise ValueError(f"u must have length {path.dim}")
    method = method.upper()
    if method == "MAGNUS":
        res = magnus_omega(path, s, t, order)
        if res.convergent:
            tm = transition_magnus(path, s, t, order, res)
            return ConditionalMoment(tm.apply(zs, u), tm.label, False, res)
        tm = transition_backward(path, s, t, tol)
        return ConditionalMoment(tm.apply(zs, u), tm.label, True, res)
    if method == "BACKWARD_ODE":
        tm = transition_backward(path, s, t, tol)
        return ConditionalMoment(tm.apply(zs, u), tm.label, False)
    raise ValueError(f"unknown method {method!r}")
