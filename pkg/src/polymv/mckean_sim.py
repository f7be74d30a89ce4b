"""Euler-Maruyama particle simulation of the polynomial McKean-Vlasov SDE.

    dZ = (b(mu) + beta(mu) Z) dt + sqrt(c(mu) + gamma(mu) Z + Gamma(mu) Z^2) dW

``mu`` is either the precomputed moment-ODE path (DECOUPLED) or the
ensemble's empirical moments at the start of each step (INTERACTING).
Negative square-root arguments are clamped at zero and counted; after every
step the states are projected onto the state space and projections counted.
"""

from __future__ import annotations

import csv
import enum
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import rng
from .errors import ConfigError, NonFiniteStateError, SpanError
from .model import MAP_NAMES, COMMON_NAMES, ModelSpec, StateSpace
from .momentode import OdeSolution, fmt
from .ode import Status
from .reduce import pairwise_mean


class Mode(enum.Enum):
    DECOUPLED = "dec"
    INTERACTING = "int"


@dataclass(frozen=True)
class EmpiricalMoments:
    """``m[k-1] = mean(Z**k)`` for ``k = 1..N`` and their standard errors."""

    m: np.ndarray
    std_err: np.ndarray


def empirical_moments(states, N: int) -> EmpiricalMoments:
    z = np.asarray(states, dtype=float)
    if z.ndim != 1 or z.size < 1:
        raise ValueError("need a non-empty 1-d array of states")
    powers = np.stack([z ** k for k in range(1, N + 1)])
    mean, var = pairwise_mean(powers, with_var=True)
    return EmpiricalMoments(np.asarray(mean, dtype=float),
                            np.sqrt(np.asarray(var, dtype=float) / z.size))


def _moment_means(z, N):
    """Moments only (no variance); the INTERACTING coefficient input."""
    return np.asarray(pairwise_mean(np.stack([z ** k for k in range(1, N + 1)])), dtype=float)


@dataclass(frozen=True)
class NegativityReport:
    clamp_count: int
    worst_excursion: float


@dataclass(frozen=True)
class SimulationRun:
    """Outcome of a particle run.

    ``times``/``moments``/``std_errs`` hold the recorded output (every
    ``stride`` steps plus the final time); ``states`` are the particles at
    ``t``.  Counters: ``clamp_count`` particle-steps with a negative
    square-root argument (``worst_excursion`` the most negative value),
    ``projection_count`` particle-steps moved by the projection onto S
    (``max_overshoot`` the largest distance moved).
    """

    spec: ModelSpec
    mode: Mode
    M: int
    dt: float
    T: float
    seed: int
    t: float
    states: np.ndarray
    times: np.ndarray
    moments: np.ndarray
    std_errs: np.ndarray
    n_steps: int
    clamp_count: int
    worst_excursion: float
    projection_count: int
    max_overshoot: float
    antithetic: bool = False
    extra: dict = field(default_factory=dict, compare=False)

    def final_moments(self) -> EmpiricalMoments:
        return EmpiricalMoments(self.moments[-1], self.std_errs[-1])

    @property
    def projection_rate(self) -> float:
        return self.projection_count / (self.n_steps * self.M) if self.n_steps else 0.0

    def to_csv(self, path) -> None:
        write_moments_csv(path, self.times, self.moments, self.std_errs)


def write_moments_csv(path, times, moments, std_errs):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "k", "m_hat", "std_err"])
        for ti, m, s in zip(times, moments, std_errs):
            for k in range(len(m)):
                w.writerow([fmt(ti), str(k + 1), fmt(m[k]), fmt(s[k])])


def negativity_report(run: SimulationRun) -> NegativityReport:
    return NegativityReport(run.clamp_count, run.worst_excursion)


# -- snapshots -------------------------------------------------------------------

def write_snapshot(path, states) -> None:
    """Little-endian uint64 count followed by that many float64 values."""
    a = np.ascontiguousarray(states, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", a.size))
        fh.write(a.tobytes())


def read_snapshot(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 8:
        raise ValueError("snapshot too short")
    (n,) = struct.unpack("<Q", data[:8])
    if len(data) != 8 + 8 * n:
        raise ValueError(f"snapshot length mismatch: header says {n} values")
    return np.frombuffer(data, dtype="<f8", offset=8).astype(float)


# -- engine ----------------------------------------------------------------------

def time_grid(dt: float, T: float) -> np.ndarray:
    """``0, dt, 2dt, ..., T``; the final step is shortened to land on ``T``."""
    if not (dt > 0 and T > 0):
        raise ConfigError("dt and T must be positive")
    n = max(1, int(math.ceil(T / dt * (1 - 1e-12))))
    t = np.arange(n + 1) * dt
    t[-1] = T
    return t


def _chunks(M, workers):
    bounds = np.linspace(0, M, max(1, min(workers, M)) + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _step_chunk(Z, a, b, h, coef, xi, common_dw, space):
    """Advance ``Z[a:b]`` in place; returns (clamps, worst, projections, overshoot)."""
    bb, beta, c, gamma, Gamma, l, Lam = coef
    z = Z[a:b]
    # overflow surfaces as a non-finite state, reported by the caller
    with np.errstate(over="ignore", invalid="ignore"):
        q = c + gamma * z + Gamma * z * z
        neg = q < 0.0
        n_clamp = int(np.count_nonzero(neg))
        worst = float(q[neg].min()) if n_clamp else 0.0
        znew = z + (bb + beta * z) * h + np.sqrt(np.where(neg, 0.0, q)) * (math.sqrt(h) * xi)
        if common_dw is not None:
            znew = znew + (l + Lam * z) * common_dw
    n_proj, over = 0, 0.0
    if space is not StateSpace.REAL:
        proj = space.project(znew)
        moved = proj != znew
        n_proj = int(np.count_nonzero(moved))
        if n_proj:
            over = float(np.max(np.abs(znew[moved] - proj[moved])))
        znew = proj
    Z[a:b] = znew
    return n_clamp, worst, n_proj, over


def run_particles(spec: ModelSpec, M: int, dt: float, T: float, seed: int,
                  mu_at: Optional[Callable[[int, float, np.ndarray], np.ndarray]],
                  *, common_increments=None, stride: int = 1, workers: int = 1,
                  antithetic: bool = False, on_record=None):
    """Shared stepping loop.

    ``mu_at(step, t, states)`` returns the moment vector fed to the maps; when
    it is ``None`` the start-of-step empirical moments are used.
    ``common_increments[j]`` is the common Brownian increment of step ``j``.
    Returns a dict of raw results.
    """
    if spec.z0 is None:
        raise ConfigError("particle simulation needs a point initial condition z0; "
                          "no sampling rule exists for a raw moment vector")
    if not isinstance(M, (int, np.integer)) or M < 1:
        raise ConfigError(f"M must be a positive integer, got {M!r}")
    if stride < 1:
        raise ConfigError("stride must be >= 1")
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    grid = time_grid(dt, T)
    n_steps = len(grid) - 1
    N = spec.N
    has_common = common_increments is not None
    names = MAP_NAMES + (COMMON_NAMES if has_common else ())
    exprs = [getattr(spec, n) for n in names]
    draw = rng.antithetic_normals if antithetic else rng.normals

    Z = np.full(M, spec.z0, dtype=float)
    chunks = _chunks(M, workers)
    rec_t, rec_m, rec_s = [], [], []

    def record(j):
        em = empirical_moments(Z, N)
        rec_t.append(grid[j])
        rec_m.append(em.m)
        rec_s.append(em.std_err)
        if on_record is not None:
            on_record(grid[j], Z.copy())

    clamps = projs = 0
    worst = over = 0.0
    pool = ThreadPoolExecutor(max_workers=len(chunks)) if len(chunks) > 1 else None
    try:
        record(0)
        for j in range(n_steps):
            t0, h = grid[j], grid[j + 1] - grid[j]
            mu = _moment_means(Z, N) if mu_at is None else mu_at(j, t0, Z)
            vals = [float(e(mu)) for e in exprs]
            dw0 = None
            if has_common:
                l, Lam = vals[5], vals[6]
                # an exactly vanishing common term is skipped so the run
                # coincides bitwise with the plain interacting system
                if l != 0.0 or Lam != 0.0:
                    dw0 = float(common_increments[j])
            else:
                vals += [0.0, 0.0]

            def work(ab, j=j, h=h, vals=vals, dw0=dw0):
                a, b = ab
                xi = draw(seed, j, a, b)
                return _step_chunk(Z, a, b, h, vals, xi, dw0, spec.state_space)

            results = list(pool.map(work, chunks)) if pool else [work(chunks[0])]
            for nc, w, npj, ov in results:
                clamps += nc
                worst = min(worst, w)
                projs += npj
                over = max(over, ov)
            if not np.all(np.isfinite(Z)):
                bad = int(np.flatnonzero(~np.isfinite(Z))[0])
                raise NonFiniteStateError(
                    f"non-finite state for particle {bad} at step {j + 1}", index=bad, step=j + 1)
            if (j + 1) % stride == 0 or j + 1 == n_steps:
                record(j + 1)
    finally:
        if pool is not None:
            pool.shutdown()
    return dict(grid=grid, n_steps=n_steps, states=Z, times=np.array(rec_t),
                moments=np.array(rec_m), std_errs=np.array(rec_s), clamps=clamps,
                worst=worst, projs=projs, over=over)


def simulate(spec: ModelSpec, mode, M: int, dt: float, T: float, seed: int,
             moment_path: Optional[OdeSolution] = None, *, stride: int = 1,
             workers: int = 1, antithetic: bool = False, on_record=None) -> SimulationRun:
    """Simulate ``M`` particles from the point ``spec.z0`` up to ``T``.

    ``mode`` is a ``Mode`` or its value (``"dec"``/``"int"``).  DECOUPLED
    requires ``moment_path`` covering ``[0, T]``.  Results are bitwise
    independent of ``workers``.  ``on_record(t, states)`` is called at every
    recorded time with a copy of the states.
    """
    mode = Mode(mode) if not isinstance(mode, Mode) else mode
    if mode is Mode.DECOUPLED:
        if moment_path is None:
            raise ConfigError("DECOUPLED mode needs a moment path")
        if moment_path.status is not Status.COMPLETED or moment_path.t[-1] < T * (1 - 1e-12):
            raise SpanError(f"moment path ends at {moment_path.t[-1]}, before T={T}")

        def mu_at(j, t, Z):
            return moment_path.z(min(t, moment_path.t[-1]))
    else:
        mu_at = None
    out = run_particles(spec, M, dt, T, seed, mu_at, stride=stride, workers=workers,
                        antithetic=antithetic, on_record=on_record)
    return SimulationRun(spec=spec, mode=mode, M=int(M), dt=float(dt), T=float(T), seed=int(seed),
                         t=float(out["grid"][-1]), states=out["states"], times=out["times"],
                         moments=out["moments"], std_errs=out["std_errs"], n_steps=out["n_steps"],
                         clamp_count=out["clamps"], worst_excursion=out["worst"],
                         projection_count=out["projs"], max_overshoot=out["over"],
                         antithetic=antithetic)
