"""The nonlinear moment ODE ``zbar' = L(z) zbar`` and its generator matrix."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import expr as ex
from .errors import ConfigError, SpanError
from .model import ModelSpec
from .ode import Status, dopri5, hermite

BLOWUP_THRESHOLD = 1e12
UNDERFLOW_FRACTION = 1e-14


def norm_N(x) -> float:
    """Anisotropic norm ``(sum_i |x_i|**(2/i))**(1/2)``; batches over trailing axes."""
    x = np.asarray(x, dtype=float)
    i = np.arange(1, x.shape[0] + 1).reshape((-1,) + (1,) * (x.ndim - 1))
    return np.sqrt(np.sum(np.abs(x) ** (2.0 / i), axis=0))


def generator_entries(N, b, beta, c, gamma, Gamma):
    """Assemble ``L`` from coefficient values (scalars or equal-shape arrays).

    Returns ``(N+1, N+1)`` for scalars, ``(..., N+1, N+1)`` for arrays.
    """
    b, beta, c, gamma, Gamma = np.broadcast_arrays(*(np.asarray(v, dtype=float)
                                                     for v in (b, beta, c, gamma, Gamma)))
    L = np.zeros(b.shape + (N + 1, N + 1))
    for k in range(1, N + 1):
        kk = k * (k - 1) / 2
        L[..., k, k] = k * beta + kk * Gamma
        L[..., k, k - 1] = k * b + kk * gamma
        if k >= 2:
            L[..., k, k - 2] = kk * c
    return L


def build_L(spec: ModelSpec, z) -> np.ndarray:
    """Generator matrix ``L(z)`` of the moment ODE.

    ``z`` has shape ``(N,)`` or ``(N, m)``; the latter yields ``(m, N+1, N+1)``.
    Its transpose is the generator ``H`` on the monomial basis.
    """
    z = np.asarray(z, dtype=float)
    if z.shape[0] != spec.N:
        raise ValueError(f"expected {spec.N} moments, got shape {z.shape}")
    return generator_entries(spec.N, *spec.coefficients(z))


@dataclass(frozen=True)
class OdeSolution:
    """Moment trajectory on an adaptive grid.

    ``values[i]`` is ``zbar(t[i]) = (1, z_1, ..., z_N)``; ``t_star`` is set
    when the run stopped on blow-up and equals the last grid time.
    """

    spec: ModelSpec
    t: np.ndarray
    values: np.ndarray
    derivs: np.ndarray
    errors: np.ndarray
    status: Status
    t_star: Optional[float]
    horizon: float
    rel_tol: float
    abs_tol: float

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    def __call__(self, tq):
        """Dense output (cubic Hermite) of ``zbar`` at ``tq``."""
        return self.zbar(tq)

    def zbar(self, tq):
        tq_arr = np.asarray(tq, dtype=float)
        if np.any(tq_arr < self.t[0] - 1e-12 * max(1.0, self.horizon)) or \
                np.any(tq_arr > self.t[-1] + 1e-12 * max(1.0, self.horizon)):
            raise SpanError(f"t outside solved span [{self.t[0]}, {self.t[-1]}]")
        out = hermite(self.t, self.values, self.derivs, np.clip(tq_arr, self.t[0], self.t[-1]))
        if out.ndim == 1:
            out[0] = 1.0
        else:
            out[:, 0] = 1.0
        return out

    def z(self, tq):
        """Moments ``(z_1, ..., z_N)`` at ``tq``."""
        out = self.zbar(tq)
        return out[..., 1:]

    def to_csv(self, path) -> None:
        write_trajectory_csv(path, self.t, self.values)


def write_trajectory_csv(path, t, values):
    N = values.shape[1] - 1
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"z{k}" for k in range(N + 1)])
        for ti, row in zip(t, values):
            w.writerow([fmt(ti)] + [fmt(v) for v in row])


def fmt(x) -> str:
    """17 significant digits, the CSV convention across the package."""
    return format(float(x), ".17g")


def _moment_rhs(spec):
    def rhs(t, zbar):
        return build_L(spec, zbar[1:]) @ zbar

    return rhs


def integrate_moments(spec: ModelSpec, T: float, rel_tol: float = 1e-10,
                      abs_tol: float = 1e-12, *, zbar0=None,
                      threshold: float = BLOWUP_THRESHOLD) -> OdeSolution:
    """Solve the moment ODE on ``[0, min(T, t*)]``.

    Stops with status BLOWUP when ``||z||_N**(2N)`` would exceed
    ``threshold`` (default 1e12) or the state turns non-finite.
    ``zbar0`` overrides the spec's initial moments (e.g. ``(1, z, z**2, ...)``
    for conditional moments from a point).
    """
    if not T > 0:
        raise ConfigError(f"horizon must be positive, got {T}")
    if not (rel_tol > 0 and abs_tol > 0):
        raise ConfigError("tolerances must be positive")
    y0 = np.asarray(spec.zbar0 if zbar0 is None else zbar0, dtype=float).copy()
    if y0.shape != (spec.N + 1,):
        raise ValueError(f"zbar0 must have length {spec.N + 1}")
    y0[0] = 1.0
    two_n = 2 * spec.N

    def pin(y):
        if y[0] != 1.0:
            y = y.copy()
            y[0] = 1.0
        return y

    def stop(t, y):
        return not np.isfinite(norm_N(y[1:])) or norm_N(y[1:]) ** two_n > threshold

    if stop(0.0, y0):
        raise ConfigError("initial moments already exceed the blow-up threshold")
    res = dopri5(_moment_rhs(spec), 0.0, y0, float(T), rel_tol, abs_tol,
                 h0=1e-4 * T, pin=pin, stop=stop, underflow=UNDERFLOW_FRACTION)
    t_star = res.t_final if res.status is Status.BLOWUP else None
    return OdeSolution(spec=spec, t=res.t, values=res.y, derivs=res.f, errors=res.errors,
                       status=res.status, t_star=t_star, horizon=float(T),
                       rel_tol=rel_tol, abs_tol=abs_tol)


# -- Gronwall bound on |E[Z_t]| ------------------------------------------------

def _affine_abs_x1(e) -> Optional[tuple]:
    """``(a, c)`` with ``|e(x)| <= |a| + |c| |x1|`` read off an affine-in-x1 shape."""
    a = c = 0.0
    for term in ex.additive_terms(e):
        coef, core = 1.0, term
        while isinstance(core, ex.Scale):
            coef *= core.coef
            core = core.arg
        if ex.is_constant(core):
            a += coef * ex.constant_value(core)
        elif core in (ex.Var(1), ex.Abs(ex.Var(1))):
            c += abs(coef)
        else:
            return None
    return a, c


def assumption_a_constants(spec: ModelSpec) -> tuple:
    """``(b0, beta0)`` for the Gronwall bound.

    Requires ``beta`` constant and ``b`` affine in ``|x1|``; raises
    ``ValueError`` otherwise.
    """
    beta = ex.constant_value(spec.beta)
    if beta is None:
        raise ValueError("beta is not a constant; beta0 cannot be extracted")
    ab = _affine_abs_x1(spec.b)
    if ab is None:
        raise ValueError("b is not of the form b0 + b1*|x1|; b0 cannot be extracted")
    a, c = ab
    return max(abs(a), c), abs(beta)


def gronwall_bound(spec: ModelSpec, t) -> float:
    """``(|E[Z0]| + b0 t) exp((b0 + beta0) t)``."""
    b0, beta0 = assumption_a_constants(spec)
    t = np.asarray(t, dtype=float)
    return (abs(spec.moments[0]) + b0 * t) * np.exp((b0 + beta0) * t)
