"""Dual coefficient fields ``c(T, t, e_i)`` and ``c(t, 0, e_i)``.

The moment vector ``vec(t)`` is solved first and frozen; the coefficient
fields then solve linear matrix ODEs along it:

* backward: ``dC/dt = -H(t) C``, ``C(T) = I``; column ``i`` is ``c(T, t, e_i)``;
* forward:  ``dC/dt = C H(t)``, ``C(0) = I``; column ``i`` is ``c(t, 0, e_i)``;

with ``H(t) = L(vec(t))^T``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SpanError
from .magnus import GeneratorPath
from .model import ModelSpec
from .momentode import OdeSolution, fmt, integrate_moments
from .ode import Status, dopri5, hermite
from .reduce import pairwise_mean


@dataclass(frozen=True)
class VecPath:
    """``vec(t) = (1, E[Z_t], ..., E[Z_t^N])``; shares the moment-ODE solver."""

    solution: OdeSolution

    @property
    def t(self):
        return self.solution.t

    @property
    def values(self):
        return self.solution.values

    @property
    def status(self):
        return self.solution.status

    def __call__(self, tq):
        return self.solution(tq)


def integrate_vec(spec: ModelSpec, T: float, tol: float = 1e-10) -> VecPath:
    """Solve ``d/dt vec = L(vec) vec`` from ``zbar0`` with ``rel_tol = abs_tol = tol``."""
    return VecPath(integrate_moments(spec, T, tol, tol))


@dataclass(frozen=True)
class DualField:
    """A matrix trajectory ``C(t)`` on an increasing grid.

    ``direction`` is ``"backward"`` (columns ``c(T, t, e_i)``) or
    ``"forward"`` (columns ``c(t, 0, e_i)``).
    """

    T: float
    direction: str
    t: np.ndarray
    C: np.ndarray          # (n, N+1, N+1)
    dC: np.ndarray         # time derivatives, same shape

    @property
    def dim(self) -> int:
        return self.C.shape[1]

    def at(self, tq) -> np.ndarray:
        """``C(tq)`` by cubic Hermite interpolation (exact on grid points)."""
        tq = float(tq)
        if tq < self.t[0] - 1e-12 * max(1.0, self.T) or tq > self.t[-1] + 1e-12 * max(1.0, self.T):
            raise SpanError(f"t={tq} outside [{self.t[0]}, {self.t[-1]}]")
        n = self.dim
        flat = hermite(self.t, self.C.reshape(len(self.t), -1), self.dC.reshape(len(self.t), -1),
                       min(max(tq, self.t[0]), self.t[-1]))
        return flat.reshape(n, n)

    def c(self, tq, u) -> np.ndarray:
        """``c(., ., u) = sum_i u_i c(., ., e_i)``."""
        return self.at(tq) @ np.asarray(u, dtype=float)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "i"] + [f"c{k}" for k in range(self.dim)])
            for ti, Ci in zip(self.t, self.C):
                for i in range(self.dim):
                    w.writerow([fmt(ti), str(i)] + [fmt(v) for v in Ci[:, i]])


def _check_vec(vec: VecPath, T: float):
    if vec.status is not Status.COMPLETED or vec.t[-1] < T * (1 - 1e-12):
        raise SpanError(f"vec path ends at {vec.t[-1]} before T={T}")


def _field(vec, T, tol, backward):
    if not T > 0:
        raise ConfigError(f"horizon must be positive, got {T}")
    _check_vec(vec, T)
    path = GeneratorPath.from_solution(vec.solution)
    n = path.dim
    eye = np.eye(n)
    if backward:
        def rhs(r, y):
            return -(path.H(r) @ y.reshape(n, n)).ravel()
        res = dopri5(rhs, T, eye.ravel(), 0.0, tol, tol, h0=1e-4 * T)
        t, C, dC = res.t[::-1], res.y[::-1], res.f[::-1]
    else:
        def rhs(r, y):
            return (y.reshape(n, n) @ path.H(r)).ravel()
        res = dopri5(rhs, 0.0, eye.ravel(), T, tol, tol, h0=1e-4 * T)
        t, C, dC = res.t, res.y, res.f
    C = C.reshape(-1, n, n).copy()
    dC = dC.reshape(-1, n, n).copy()
    # constants are preserved: c(., ., e0) = e0
    C[:, :, 0] = 0.0
    C[:, 0, 0] = 1.0
    dC[:, :, 0] = 0.0
    end = -1 if backward else 0
    C[end] = eye
    t = np.ascontiguousarray(t)
    return DualField(float(T), "backward" if backward else "forward", t, C, dC)


def integrate_backward_c(spec: ModelSpec, vec: VecPath, T: float, tol: float = 1e-10) -> DualField:
    """Backward field: columns ``c(T, t, e_i)`` with ``c(T, T, e_i) = e_i``."""
    del spec  # the generator is read off the frozen vec path
    return _field(vec, T, tol, backward=True)


def integrate_forward_c(spec: ModelSpec, vec: VecPath, T: float, tol: float = 1e-10) -> DualField:
    """Forward field: columns ``c(t, 0, e_i)`` with ``c(0, 0, e_i) = e_i``."""
    del spec
    return _field(vec, T, tol, backward=False)


def _pairing(z, u):
    """``<(1, z, ..., z^N), u>`` elementwise, summed in index order."""
    acc = np.full_like(z, u[0])
    for k in range(1, len(u)):
        if u[k] != 0.0:
            acc = acc + u[k] * z ** k
    return acc


@dataclass(frozen=True)
class MartingaleGap:
    gap: float
    std_error: float
    mc_mean: float
    dual_value: float


def martingale_gap(spec: ModelSpec, field: DualField, u, ensemble) -> MartingaleGap:
    """Compare the particle mean of ``<Zbar_T, u>`` with ``<zbar0, c(T, 0, u)>``.

    ``ensemble`` is anything with ``states`` (final particle values) and
    ``t`` (their time), e.g. a ``SimulationRun``.
    """
    if field.direction != "backward":
        raise ValueError("martingale_gap needs the backward field c(T, t, .)")
    t_end = float(ensemble.t)
    if abs(t_end - field.T) > 1e-9 * max(1.0, field.T):
        raise ConfigError(f"ensemble time {t_end} does not match field horizon {field.T}")
    u = np.asarray(u, dtype=float)
    if u.shape != (spec.N + 1,):
        raise ValueError(f"u must have length {spec.N + 1}")
    values = _pairing(np.asarray(ensemble.states, dtype=float), u)
    mean, var = pairwise_mean(values, with_var=True)
    c0 = field.c(0.0, u)
    dual_value = float(sum(c0[k] * spec.zbar0[k] for k in range(spec.N + 1)))
    se = float(np.sqrt(var / len(values))) if len(values) > 1 else 0.0
    return MartingaleGap(abs(mean - dual_value), se, mean, dual_value)
