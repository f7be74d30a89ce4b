import numpy as np
import pytest

from polymv import ConfigError, SpanError, make_model
from polymv.dual import integrate_backward_c, integrate_forward_c, integrate_vec, martingale_gap
from polymv.magnus import GeneratorPath, transition_backward
from polymv.momentode import integrate_moments

MODELS = {
    "ou": dict(N=2, b="0.5", beta="-1", c="0.25", z0=1.0),
    "feedback": dict(N=2, gamma="x2", z0=1.0, state_space="R+"),
    "mixed": dict(N=3, b="0.2 * x1", beta="-0.5", c="0.1 + 0.05 * x2", Gamma="0.2", z0=0.5),
}


def _spec(name):
    kw = dict(MODELS[name])
    return make_model(kw.pop("N"), **kw)


@pytest.mark.parametrize("name", MODELS)
def test_vec_is_the_moment_solution(name):
    spec = _spec(name)
    vec = integrate_vec(spec, 1.0)
    sol = integrate_moments(spec, 1.0, 1e-10, 1e-10)
    assert np.array_equal(vec.values, sol.values)


@pytest.mark.parametrize("name", MODELS)
def test_duality_constant(name):
    spec = _spec(name)
    vec = integrate_vec(spec, 1.0)
    back = integrate_backward_c(spec, vec, 1.0)
    u = np.arange(1.0, spec.N + 2)
    vals = [vec(t) @ back.c(t, u) for t in np.linspace(0, 1, 21)]
    assert np.ptp(vals) <= 1e-6
    assert np.array_equal(back.at(1.0), np.eye(spec.N + 1))


@pytest.mark.parametrize("name", MODELS)
def test_fields_agree_with_transition_matrices(name):
    spec = _spec(name)
    vec = integrate_vec(spec, 1.0)
    path = GeneratorPath.from_solution(vec.solution)
    back = integrate_backward_c(spec, vec, 1.0)
    fwd = integrate_forward_c(spec, vec, 1.0)
    for t in (0.0, 0.4, 0.75):
        assert np.allclose(back.at(t), transition_backward(path, t, 1.0).P, atol=1e-8)
        assert np.allclose(fwd.at(t), transition_backward(path, 0.0, t).P, atol=1e-8)
    assert np.array_equal(fwd.at(0.0), np.eye(spec.N + 1))


def test_field_csv(tmp_path):
    spec = _spec("ou")
    f = integrate_backward_c(spec, integrate_vec(spec, 0.5), 0.5)
    f.to_csv(tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().split("\n")
    assert lines[0] == "t,i,c0,c1,c2"
    assert len(lines) == 1 + 3 * len(f.t) + 1


def test_field_span():
    spec = _spec("ou")
    f = integrate_forward_c(spec, integrate_vec(spec, 0.5), 0.5)
    with pytest.raises(SpanError):
        f.at(0.6)
    with pytest.raises(SpanError):
        integrate_forward_c(spec, integrate_vec(spec, 0.5), 1.0)


class _Ensemble:
    def __init__(self, states, t):
        self.states, self.t = np.asarray(states), t


def test_martingale_gap_on_exact_samples():
    spec = _spec("ou")
    back = integrate_backward_c(spec, integrate_vec(spec, 1.0), 1.0)
    # exact OU law at t = 1: mean 0.5 + 0.5/e, variance 0.125 (1 - e^-2)
    m = 0.5 + 0.5 * np.exp(-1)
    sd = np.sqrt(0.125 * (1 - np.exp(-2)))
    z = m + sd * np.random.default_rng(3).standard_normal(100_000)
    for u in ([0, 1, 0], [0, 0, 1]):
        g = martingale_gap(spec, back, u, _Ensemble(z, 1.0))
        assert g.gap <= 4 * g.std_error
    with pytest.raises(ConfigError):
        martingale_gap(spec, back, [0, 1, 0], _Ensemble(z, 0.5))
