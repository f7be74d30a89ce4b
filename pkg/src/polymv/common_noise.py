"""Common-noise extension.

Particles follow

    dZ = (b + beta Z) dt + sqrt(c + gamma Z + Gamma Z^2) dW + (l + Lambda Z) dW0

with every map evaluated at the moments conditional on the common path
``W0``.  This module simulates the closed Euler system for those conditional
moments, the particle system sharing one ``W0`` realisation, and assembles
the generators of the two jointly polynomial special cases.
"""

from __future__ import annotations

import csv
import enum
import itertools
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import expr as ex
from . import rng
from .errors import ConfigError, NonFiniteStateError, TemplateMismatchError
from .mckean_sim import Mode, SimulationRun, run_particles, time_grid
from .model import ModelSpec, StateSpace
from .momentode import fmt


# -- common Brownian path -----------------------------------------------------------

@dataclass(frozen=True)
class CommonNoisePath:
    """Increments ``dW0[j] ~ N(0, t[j+1] - t[j])`` as a pure function of ``(seed, j)``."""

    seed: int
    dt: float
    T: float
    t: np.ndarray
    increments: np.ndarray

    @classmethod
    def generate(cls, seed: int, dt: float, T: float) -> "CommonNoisePath":
        t = time_grid(dt, T)
        n = len(t) - 1
        xi = rng.normals(seed, 0, 0, n, stream=rng.COMMON)
        return cls(int(seed), float(dt), float(T), t, xi * np.sqrt(np.diff(t)))

    @property
    def W(self) -> np.ndarray:
        """Cumulative path, ``W[0] = 0``."""
        return np.concatenate(([0.0], np.cumsum(self.increments)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "W0"])
            for ti, wi in zip(self.t, self.W):
                w.writerow([fmt(ti), fmt(wi)])


def gbm_conditional_mean(m0: float, sigma: float, path: CommonNoisePath) -> np.ndarray:
    """``m0 exp(sigma W0_t - sigma^2 t / 2)`` on the path's grid."""
    return m0 * np.exp(sigma * path.W - 0.5 * sigma ** 2 * path.t)


def gbm_euler_rmse_bound(m0: float, sigma: float, T: float, dt: float) -> float:
    """Leading-order RMS error of the Euler scheme for ``dm = sigma m dW0`` at ``T``.

    Per step the local error is ``sigma^2 m (dW^2 - dt) / 2`` with variance
    ``sigma^4 m^2 dt^2 / 2``; summing ``T/dt`` independent contributions with
    ``E[m^2] = m0^2 exp(sigma^2 t)`` gives
    ``|m0| sigma^2 sqrt(T dt / 2) exp(sigma^2 T / 2)``.
    """
    return abs(m0) * sigma ** 2 * math.sqrt(T * dt / 2) * math.exp(sigma ** 2 * T / 2)


# -- conditional-moment system ---------------------------------------------------------

@dataclass(frozen=True)
class ConditionalMoments:
    """``m[j, ..., k-1]`` approximates ``E[Z^k | W0]`` at ``t[j]``.

    For a batch of paths the middle axis indexes the path.
    """

    t: np.ndarray
    m: np.ndarray
    projection_count: int
    max_overshoot: float

    def to_csv(self, path) -> None:
        write_conditional_csv(path, self.t, self.m, "SDE")


def _require_common(spec):
    if not spec.has_common_noise:
        raise ConfigError("the model has no common-noise maps l and Lambda")


def _project_moments(m, space):
    """Keep conditional moments in their admissible range; ``m`` is ``(N, ...)``."""
    if space is StateSpace.REAL:
        even = m[1::2]                 # k = 2, 4, ...
        proj = m.copy()
        proj[1::2] = np.maximum(even, 0.0)
    else:
        proj = space.project(m)
    return proj


def _cm_step(spec, m, dw, h, literal):
    N = spec.N
    mu = m
    b, beta, c, gamma, Gamma = (np.asarray(v, dtype=float) for v in spec.coefficients(mu))
    l = np.asarray(ex.evaluate(spec.l, mu), dtype=float)
    Lam = np.asarray(ex.evaluate(spec.Lambda, mu), dtype=float)
    ones = np.ones_like(m[0])
    mbar = np.concatenate([ones[None], m])            # m_0 = 1
    new = np.empty_like(m)
    for k in range(1, N + 1):
        kk = k * (k - 1) / 2
        drift = (k * b + kk * (gamma + 2 * l * Lam)) * mbar[k - 1] \
            + (k * beta + kk * (Gamma + Lam * Lam)) * mbar[k]
        if k >= 2:
            drift = drift + kk * (c + l * l) * mbar[k - 2]
        vol = l * mbar[k - 1] + Lam * mbar[k]
        if not literal:
            vol = k * vol
        new[k - 1] = mbar[k] + drift * h + vol * dw
    return new


def simulate_conditional_moments(spec: ModelSpec, path: CommonNoisePath, *,
                                 literal_diffusion: bool = False) -> ConditionalMoments:
    """Euler-Maruyama for ``m_k = E[Z^k | W0]``, ``k = 1..N``, along one common path.

    The ``dW0`` coefficient of ``m_k`` is ``k (l m_{k-1} + Lambda m_k)`` (Ito's
    formula for ``Z^k``); ``literal_diffusion=True`` drops the factor ``k``.
    """
    out = simulate_conditional_moments_batch(spec, path.t, path.increments[:, None],
                                             literal_diffusion=literal_diffusion)
    return ConditionalMoments(out.t, out.m[:, 0, :], out.projection_count, out.max_overshoot)


def simulate_conditional_moments_batch(spec: ModelSpec, t, increments, *,
                                       literal_diffusion: bool = False) -> ConditionalMoments:
    """Vectorised version over independent common paths.

    ``increments`` has shape ``(n_steps, P)``; the result ``m`` has shape
    ``(n_steps + 1, P, N)``.  Each path's trajectory is bitwise identical to
    a single-path run on the same increments.
    """
    _require_common(spec)
    t = np.asarray(t, dtype=float)
    inc = np.asarray(increments, dtype=float)
    if inc.ndim != 2 or inc.shape[0] != len(t) - 1:
        raise ValueError("increments must have shape (len(t) - 1, n_paths)")
    P = inc.shape[1]
    m = np.repeat(np.asarray(spec.moments, dtype=float)[:, None], P, axis=1)   # (N, P)
    traj = [m.T.copy()]
    n_proj, over = 0, 0.0
    for j in range(len(t) - 1):
        h = t[j + 1] - t[j]
        m_new = _cm_step(spec, m, inc[j], h, literal_diffusion)
        proj = _project_moments(m_new, spec.state_space)
        moved = proj != m_new
        if np.any(moved):
            n_proj += int(np.count_nonzero(moved))
            over = max(over, float(np.max(np.abs(proj[moved] - m_new[moved]))))
        m = proj
        if not np.all(np.isfinite(m)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(m), axis=0))[0])
            raise NonFiniteStateError(f"non-finite conditional moment on path {bad} at step {j + 1}",
                                      index=bad, step=j + 1)
        traj.append(m.T.copy())
    return ConditionalMoments(t, np.array(traj), n_proj, over)


def folded_spec(spec: ModelSpec) -> ModelSpec:
    """The common-noise-free model whose moment ODE gives ``E[E[Z^k | W0]]``.

    Taking expectations of the conditional system (for maps affine in the
    moments) folds the common noise into ``gamma + 2 l Lambda``,
    ``c + l^2`` and ``Gamma + Lambda^2``.
    """
    _require_common(spec)
    l, Lam = spec.l, spec.Lambda
    return replace(spec,
                   gamma=ex.add(spec.gamma, ex.mul(ex.const(2.0), l, Lam)),
                   c=ex.add(spec.c, ex.mul(l, l)),
                   Gamma=ex.add(spec.Gamma, ex.mul(Lam, Lam)),
                   l=None, Lambda=None)


# -- particles with a shared common path ------------------------------------------------

@dataclass(frozen=True)
class CommonParticleRun:
    run: SimulationRun
    path: CommonNoisePath


def simulate_particles_common(spec: ModelSpec, M: int, dt: float, T: float, seed: int,
                              common_seed: int, *, stride: int = 1, workers: int = 1,
                              antithetic: bool = False,
                              path: Optional[CommonNoisePath] = None) -> CommonParticleRun:
    """Interacting particles sharing one common path.

    The maps see the cross-particle empirical moments, which estimate the
    conditional moments given ``W0``.  Idiosyncratic and common draws use
    separate RNG streams, so ``seed`` and ``common_seed`` never collide.
    When ``l`` and ``Lambda`` evaluate to exactly zero the common term is
    skipped and the run is bitwise identical to ``simulate(..., "int")``.
    """
    _require_common(spec)
    if path is None:
        path = CommonNoisePath.generate(common_seed, dt, T)
    elif len(path.t) != len(time_grid(dt, T)) or path.t[-1] != T:
        raise ConfigError("common path grid does not match dt and T")
    out = run_particles(spec, M, dt, T, seed, None, common_increments=path.increments,
                        stride=stride, workers=workers, antithetic=antithetic)
    run = SimulationRun(spec=spec, mode=Mode.INTERACTING, M=int(M), dt=float(dt), T=float(T),
                        seed=int(seed), t=float(out["grid"][-1]), states=out["states"],
                        times=out["times"], moments=out["moments"], std_errs=out["std_errs"],
                        n_steps=out["n_steps"], clamp_count=out["clamps"],
                        worst_excursion=out["worst"], projection_count=out["projs"],
                        max_overshoot=out["over"], antithetic=antithetic,
                        extra={"common_seed": int(path.seed)})
    return CommonParticleRun(run, path)


def write_conditional_csv(path, t, m, source, append=False):
    """Rows ``t, k, m_k, source``; ``m`` is ``(len(t), N)``."""
    with open(path, "a" if append else "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if not append:
            w.writerow(["t", "k", "m_k", "source"])
        for ti, row in zip(t, m):
            for k, v in enumerate(row, start=1):
                w.writerow([fmt(ti), str(k), fmt(v), source])


# -- jointly polynomial cases ----------------------------------------------------------

class JointCase(enum.Enum):
    PROP_A = "A"      # state (Z, E[Z|W0], E[Z^2|W0]); c affine in (x1, x2)
    PROP_B = "B"      # state (Z, E[Z|W0]); c quadratic in x1


@dataclass(frozen=True)
class JointGenerator:
    """Generator of the extended state on monomials of total degree ``<= degree``.

    Column ``j`` holds the coefficients of ``G`` applied to ``basis[j]``
    (``basis`` lists exponent tuples, graded then lexicographic).
    """

    case: JointCase
    state: tuple
    basis: tuple
    matrix: np.ndarray


def _const_of(spec, name, case):
    e = getattr(spec, name)
    v = ex.constant_value(e) if e is not None else None
    if v is None:
        raise TemplateMismatchError(f"{case.name}: map {name!r} must be constant, got {ex.render(e) if e is not None else None}")
    return v


def _poly_coeffs(spec, name, case, allowed):
    """Coefficients of a polynomial map restricted to the exponents in ``allowed``."""
    e = getattr(spec, name)
    p = ex.polynomial(e)
    if p is None:
        raise TemplateMismatchError(f"{case.name}: map {name!r} is not a polynomial: {ex.render(e)}")
    out = {}
    for exps, coef in p.items():
        key = tuple(exps[:2]) + (0,) * max(0, 2 - len(exps[:2]))
        if any(exps[2:]) or key not in allowed:
            raise TemplateMismatchError(
                f"{case.name}: map {name!r} has a term outside its template: {ex.render(e)}")
        out[key] = out.get(key, 0.0) + coef
    return out


def _monomials(dim, degree):
    out = []
    for d in range(degree + 1):
        for alpha in itertools.product(range(d + 1), repeat=dim):
            if sum(alpha) == d:
                out.append(alpha)
    # graded, then reverse-lex so that Z-heavy monomials come first
    return sorted(out, key=lambda a: (sum(a), tuple(-x for x in a)))


def _padd(p, q, s=1.0):
    out = dict(p)
    for k, v in q.items():
        out[k] = out.get(k, 0.0) + s * v
    return {k: v for k, v in out.items() if v != 0.0}


def _pmul(p, q):
    out = {}
    for a, u in p.items():
        for b, v in q.items():
            k = tuple(x + y for x, y in zip(a, b))
            out[k] = out.get(k, 0.0) + u * v
    return {k: v for k, v in out.items() if v != 0.0}


def _lin(dim, const=0.0, **coefs):
    """Affine polynomial ``const + sum coef * x_i`` keyed by variable index."""
    p = {}
    if const:
        p[(0,) * dim] = const
    for i, v in coefs.items():
        if v:
            e = [0] * dim
            e[int(i[1:])] = 1
            p[tuple(e)] = p.get(tuple(e), 0.0) + v
    return p


def joint_generator(spec: ModelSpec, case, degree: int = 2) -> JointGenerator:
    """Generator matrix of the jointly polynomial extended state.

    Drift ``mu`` and diffusion ``a = sigma sigma^T`` (two Brownian motions)
    come from the conditional-moment system specialised to the case's
    template; the maps must match that template exactly.
    """
    case = JointCase(case) if not isinstance(case, JointCase) else case
    _require_common(spec)
    beta0 = _const_of(spec, "beta", case)
    Gamma0 = _const_of(spec, "Gamma", case)
    l0 = _const_of(spec, "l", case)
    L0 = _const_of(spec, "Lambda", case)
    x0, x1, x2, x11 = (0, 0), (1, 0), (0, 1), (2, 0)

    if case is JointCase.PROP_A:
        if spec.N != 2:
            raise TemplateMismatchError(f"PROP_A needs N = 2, got N = {spec.N}")
        b0 = _const_of(spec, "b", case)
        g0 = _const_of(spec, "gamma", case)
        cc = _poly_coeffs(spec, "c", case, {x0, x1, x2})
        c0, c1, c2 = cc.get(x0, 0.0), cc.get(x1, 0.0), cc.get(x2, 0.0)
        dim, names = 3, ("Z", "E[Z|W0]", "E[Z^2|W0]")
        mu = [_lin(3, b0, x0=beta0),
              _lin(3, b0, x1=beta0),
              _lin(3, c0 + l0 * l0, x1=2 * b0 + g0 + 2 * l0 * L0 + c1,
                   x2=2 * beta0 + Gamma0 + L0 * L0 + c2)]
        # idiosyncratic variance (only Z) and common-noise loadings
        var_w = _padd(_lin(3, c0, x0=g0, x1=c1, x2=c2), {(2, 0, 0): Gamma0})
        sig0 = [_lin(3, l0, x0=L0), _lin(3, l0, x1=L0), _lin(3, 0.0, x1=2 * l0, x2=2 * L0)]
    else:
        bb = _poly_coeffs(spec, "b", case, {x0, x1})
        gg = _poly_coeffs(spec, "gamma", case, {x0, x1})
        cc = _poly_coeffs(spec, "c", case, {x0, x1, x11})
        b0, b1 = bb.get(x0, 0.0), bb.get(x1, 0.0)
        g0, g1 = gg.get(x0, 0.0), gg.get(x1, 0.0)
        c0, c1, c2 = cc.get(x0, 0.0), cc.get(x1, 0.0), cc.get(x11, 0.0)
        dim, names = 2, ("Z", "E[Z|W0]")
        mu = [_lin(2, b0, x0=beta0, x1=b1), _lin(2, b0, x1=b1 + beta0)]
        var_w = {k: v for k, v in {(0, 0): c0, (0, 1): c1, (0, 2): c2, (1, 0): g0,
                                   (1, 1): g1, (2, 0): Gamma0}.items() if v}
        sig0 = [_lin(2, l0, x0=L0), _lin(2, l0, x1=L0)]

    a = [[_pmul(sig0[i], sig0[j]) for j in range(dim)] for i in range(dim)]
    a[0][0] = _padd(a[0][0], var_w)

    basis = _monomials(dim, degree)
    index = {alpha: i for i, alpha in enumerate(basis)}
    G = np.zeros((len(basis), len(basis)))
    for j, alpha in enumerate(basis):
        image = {}
        for i in range(dim):
            if alpha[i]:
                d = list(alpha)
                d[i] -= 1
                image = _padd(image, _pmul(mu[i], {tuple(d): float(alpha[i])}))
        for i in range(dim):
            for k in range(dim):
                if i == k:
                    f = alpha[i] * (alpha[i] - 1)
                    if not f:
                        continue
                    d = list(alpha)
                    d[i] -= 2
                    w = 0.5 * f
                else:
                    if not (alpha[i] and alpha[k]):
                        continue
                    d = list(alpha)
                    d[i] -= 1
                    d[k] -= 1
                    w = 0.5 * alpha[i] * alpha[k]
                image = _padd(image, _pmul(a[i][k], {tuple(d): w}))
        for beta_, v in image.items():
            if beta_ not in index:
                raise AssertionError("generator raised the degree")  # pragma: no cover
            G[index[beta_], j] = v
    return JointGenerator(case, names, tuple(basis), G)
