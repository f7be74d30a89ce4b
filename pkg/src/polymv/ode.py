"""Dormand-Prince 5(4) with PI step-size control and cubic Hermite dense output.

Works on flat state vectors and integrates in either time direction.  Two
hooks keep the driver generic: ``pin`` post-processes every accepted state
(used to re-impose exact invariants) and ``stop`` inspects it and can end the
run (used for blow-up detection).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ToleranceUnachievableError

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# fifth- minus fourth-order weights
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

_SAFETY = 0.9
_ALPHA = 0.7 / 5
_BETA = 0.4 / 5
_FAC_MIN = 0.2
_FAC_MAX = 5.0


class Status(enum.Enum):
    COMPLETED = "COMPLETED"
    BLOWUP = "BLOWUP"


@dataclass(frozen=True)
class RKResult:
    t: np.ndarray          # accepted times, t[0] = t0
    y: np.ndarray          # (n, dim)
    f: np.ndarray          # derivatives at the grid points, (n, dim)
    errors: np.ndarray     # scaled error norm of each accepted step, (n-1,)
    status: Status
    n_rejected: int

    @property
    def t_final(self) -> float:
        return float(self.t[-1])


def _rms(x):
    return float(np.sqrt(np.mean(x * x))) if x.size else 0.0


def dopri5(fun, t0, y0, t_end, rtol, atol, *, h0=None, pin=None, stop=None,
           underflow=1e-14, max_steps=1_000_000) -> RKResult:
    """Integrate ``y' = fun(t, y)`` from ``t0`` to ``t_end`` (either direction).

    ``h0`` defaults to ``1e-4 * |t_end - t0|``.  A step below
    ``underflow * |t_end - t0|`` ends the run: as BLOWUP when the state was
    going non-finite, otherwise by raising ``ToleranceUnachievableError``.
    """
    if rtol <= 0 or atol <= 0:
        raise ValueError("tolerances must be positive")
    y = np.array(y0, dtype=float).ravel()
    if pin is not None:
        y = pin(y)
    span = float(t_end - t0)
    ts, ys = [float(t0)], [y.copy()]
    f = np.asarray(fun(t0, y), dtype=float).ravel()
    fs, errs = [f.copy()], []
    if span == 0.0:
        return RKResult(np.array(ts), np.array(ys), np.array(fs), np.zeros(0), Status.COMPLETED, 0)

    direction = 1.0 if span > 0 else -1.0
    h_min = underflow * abs(span)
    h = abs(h0) if h0 is not None else 1e-4 * abs(span)
    t = float(t0)
    err_prev = 1.0
    rejected_last = False
    n_rej = 0
    nonfinite_seen = False
    k = np.empty((7, y.size))

    for _ in range(max_steps):
        remaining = abs(t_end - t)
        last = h >= remaining * (1 - 1e-12)
        if last:
            h = remaining
        step = direction * h

        k[0] = f
        for i in range(1, 7):
            yi = y + step * (np.asarray(_A[i]) @ k[:i])
            k[i] = fun(t + _C[i] * step, yi)
        y_new = y + step * (_B @ k)
        f_new = k[6]
        err_vec = step * (_E @ k)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = _rms(err_vec / scale)

        if not np.isfinite(err) or not np.all(np.isfinite(y_new)):
            nonfinite_seen = True
            err = np.inf

        if err <= 1.0:
            t_new = float(t_end) if last else t + step
            if pin is not None:
                y_pinned = pin(y_new)
                if not np.array_equal(y_pinned, y_new):
                    f_new = np.asarray(fun(t_new, y_pinned), dtype=float).ravel()
                y_new = y_pinned
            if stop is not None and stop(t_new, y_new):
                return RKResult(np.array(ts), np.array(ys), np.array(fs),
                                np.array(errs), Status.BLOWUP, n_rej)
            t, y, f = t_new, y_new, f_new
            ts.append(t)
            ys.append(y.copy())
            fs.append(f.copy())
            errs.append(err)
            nonfinite_seen = False
            if last:
                return RKResult(np.array(ts), np.array(ys), np.array(fs),
                                np.array(errs), Status.COMPLETED, n_rej)
            err_c = max(err, 1e-10)
            fac = _SAFETY * err_c ** -_ALPHA * err_prev ** _BETA
            fac = min(_FAC_MAX, max(_FAC_MIN, fac))
            if rejected_last:
                fac = min(fac, 1.0)
            h *= fac
            err_prev = err_c
            rejected_last = False
        else:
            n_rej += 1
            fac = _FAC_MIN if not np.isfinite(err) else max(_FAC_MIN, _SAFETY * err ** -0.2)
            h *= fac
            rejected_last = True

        if h < h_min:
            if nonfinite_seen:
                return RKResult(np.array(ts), np.array(ys), np.array(fs),
                                np.array(errs), Status.BLOWUP, n_rej)
            raise ToleranceUnachievableError(
                f"step size {h:.3e} fell below {h_min:.3e} at t={t:.6g} "
                f"with a finite state (rtol={rtol}, atol={atol})")
    raise ToleranceUnachievableError(f"exceeded {max_steps} steps at t={t:.6g}")


def hermite(t_grid, y, f, tq):
    """Cubic Hermite interpolation through ``(t_grid, y, f)``.

    ``t_grid`` may be increasing or decreasing.  Returns shape
    ``(len(tq), dim)`` for array ``tq`` or ``(dim,)`` for a scalar.
    Grid points are reproduced exactly.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    scalar = np.ndim(tq) == 0
    tq = np.atleast_1d(np.asarray(tq, dtype=float))
    if t_grid[0] > t_grid[-1]:
        t_grid, y, f = t_grid[::-1], y[::-1], f[::-1]
    if len(t_grid) == 1:
        out = np.repeat(y[:1], len(tq), axis=0)
        return out[0] if scalar else out
    i = np.clip(np.searchsorted(t_grid, tq, side="right") - 1, 0, len(t_grid) - 2)
    t0, t1 = t_grid[i], t_grid[i + 1]
    h = t1 - t0
    s = ((tq - t0) / h)[:, None]
    h = h[:, None]
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    out = h00 * y[i] + h10 * h * f[i] + h01 * y[i + 1] + h11 * h * f[i + 1]
    exact_lo = tq == t0
    exact_hi = tq == t1
    out[exact_lo] = y[i[exact_lo]]
    out[exact_hi] = y[i[exact_hi] + 1]
    return out[0] if scalar else out
