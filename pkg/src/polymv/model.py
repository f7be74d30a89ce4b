"""Model specification: the five (or seven) coefficient maps, order N,
state space and initial condition, plus JSON config I/O."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import expr as ex
from .errors import ComponentIndexError, ConfigError, ExprSyntaxError


class StateSpace(enum.Enum):
    REAL = "R"
    NONNEG = "R+"
    UNIT_INTERVAL = "[0,1]"

    def contains(self, z: float) -> bool:
        if self is StateSpace.REAL:
            return np.isfinite(z)
        if self is StateSpace.NONNEG:
            return z >= 0
        return 0 <= z <= 1

    def project(self, z):
        """Orthogonal projection onto the state space (array-wise)."""
        if self is StateSpace.REAL:
            return z
        if self is StateSpace.NONNEG:
            return np.maximum(z, 0.0)
        return np.clip(z, 0.0, 1.0)


MAP_NAMES = ("b", "beta", "c", "gamma", "Gamma")
COMMON_NAMES = ("l", "Lambda")


@dataclass(frozen=True)
class ModelSpec:
    """A polynomial McKean-Vlasov model.

    ``moments`` always holds ``(E[Z0], ..., E[Z0^N])``; when the model starts
    from a point mass ``z0`` it equals ``(z0, z0**2, ..., z0**N)``.
    """

    N: int
    b: ex.CoeffExpr
    beta: ex.CoeffExpr
    c: ex.CoeffExpr
    gamma: ex.CoeffExpr
    Gamma: ex.CoeffExpr
    state_space: StateSpace = StateSpace.REAL
    z0: Optional[float] = None
    moments: tuple = field(default=())
    l: Optional[ex.CoeffExpr] = None
    Lambda: Optional[ex.CoeffExpr] = None

    def __post_init__(self):
        if not isinstance(self.N, (int, np.integer)) or isinstance(self.N, bool) or self.N < 1:
            raise ConfigError(f"N must be an integer >= 1, got {self.N!r}")
        for name in MAP_NAMES + COMMON_NAMES:
            e = getattr(self, name)
            if e is None:
                if name in MAP_NAMES:
                    raise ConfigError(f"map {name!r} is required")
                continue
            bad = [k for k in ex.variables(e) if k > self.N]
            if bad:
                raise ComponentIndexError(
                    f"map {name!r} uses x{max(bad)} but N={self.N}")
        if (self.l is None) != (self.Lambda is None):
            raise ConfigError("common-noise maps l and Lambda must be given together")
        if self.z0 is not None:
            z0 = float(self.z0)
            if not self.state_space.contains(z0):
                raise ConfigError(f"z0={z0} is outside the state space {self.state_space.value}")
            object.__setattr__(self, "z0", z0)
            object.__setattr__(self, "moments", tuple(z0 ** k for k in range(1, self.N + 1)))
        else:
            m = tuple(float(v) for v in self.moments)
            if len(m) != self.N:
                raise ConfigError(f"need {self.N} initial moments, got {len(m)}")
            if not all(np.isfinite(m)):
                raise ConfigError("initial moments must be finite")
            if not self.state_space.contains(m[0]):
                raise ConfigError(f"E[Z0]={m[0]} is outside the state space {self.state_space.value}")
            object.__setattr__(self, "moments", m)

    @property
    def has_common_noise(self) -> bool:
        return self.l is not None

    @property
    def zbar0(self) -> np.ndarray:
        """Initial extended moment vector ``(1, E[Z0], ..., E[Z0^N])``."""
        return np.concatenate(([1.0], self.moments))

    def maps(self):
        return {name: getattr(self, name) for name in MAP_NAMES}

    def coefficients(self, z):
        """Values ``(b, beta, c, gamma, Gamma)`` at moment vector(s) ``z``."""
        return tuple(ex.evaluate(getattr(self, n), z) for n in MAP_NAMES)

    def with_initial_point(self, z0: float) -> "ModelSpec":
        return replace(self, z0=float(z0), moments=())


def parse_model(config) -> ModelSpec:
    """Build a ``ModelSpec`` from a JSON string or an already-decoded dict."""
    if isinstance(config, (str, bytes)):
        try:
            config = json.loads(config)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg} at position {exc.pos}") from None
    if not isinstance(config, dict):
        raise ConfigError("model config must be a JSON object")

    N = config.get("N")
    if not isinstance(N, int) or isinstance(N, bool) or N < 1:
        raise ConfigError(f"N must be an integer >= 1, got {N!r}")

    known = {"N", "state_space", "z0", "moments", *MAP_NAMES, *COMMON_NAMES}
    unknown = sorted(set(config) - known)
    if unknown:
        raise ConfigError(f"unknown config fields: {', '.join(unknown)}")

    maps = {}
    for name in MAP_NAMES + COMMON_NAMES:
        text = config.get(name)
        if text is None:
            if name in MAP_NAMES:
                raise ConfigError(f"missing map {name!r}")
            continue
        if isinstance(text, (int, float)) and not isinstance(text, bool):
            text = repr(float(text))
        try:
            maps[name] = ex.parse(text, n_vars=N)
        except ExprSyntaxError as exc:
            raise ExprSyntaxError(f"in map {name!r}: {exc.args[0].rsplit(' at position', 1)[0]}",
                                  exc.position, exc.text) from None
        except ComponentIndexError as exc:
            raise ComponentIndexError(f"in map {name!r}: {exc}") from None

    try:
        space = StateSpace(config.get("state_space", "R"))
    except ValueError:
        raise ConfigError(f"state_space must be one of R, R+, [0,1]; got {config.get('state_space')!r}") from None

    has_z0 = "z0" in config
    has_m = "moments" in config
    if has_z0 == has_m:
        raise ConfigError("give exactly one of 'z0' or 'moments'")
    if has_z0:
        z0 = config["z0"]
        if not isinstance(z0, (int, float)) or isinstance(z0, bool):
            raise ConfigError("z0 must be a number")
        return ModelSpec(N=N, state_space=space, z0=float(z0), **maps)
    moments = config["moments"]
    if not isinstance(moments, list):
        raise ConfigError("moments must be a list of numbers")
    return ModelSpec(N=N, state_space=space, moments=tuple(moments), **maps)


def model_to_dict(spec: ModelSpec) -> dict:
    out = {"N": spec.N}
    for name in MAP_NAMES + COMMON_NAMES:
        e = getattr(spec, name)
        if e is not None:
            out[name] = ex.render(e)
    out["state_space"] = spec.state_space.value
    if spec.z0 is not None:
        out["z0"] = spec.z0
    else:
        out["moments"] = list(spec.moments)
    return out


def render_model(spec: ModelSpec) -> str:
    return json.dumps(model_to_dict(spec), indent=2)


def load_model(path) -> ModelSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())


def make_model(N, b="0", beta="0", c="0", gamma="0", Gamma="0", *, z0=None,
               moments=None, state_space="R", l=None, Lambda=None) -> ModelSpec:
    """Convenience builder taking expression strings (or numbers)."""
    cfg = {"N": N, "b": b, "beta": beta, "c": c, "gamma": gamma, "Gamma": Gamma,
           "state_space": state_space}
    if l is not None:
        cfg["l"] = l
    if Lambda is not None:
        cfg["Lambda"] = Lambda
    if z0 is not None:
        cfg["z0"] = z0
    if moments is not None:
        cfg["moments"] = list(moments)
    return parse_model(cfg)
