import math

import numpy as np
import pytest

from polymv.errors import ToleranceUnachievableError
from polymv.ode import Status, dopri5, hermite


def test_exponential_decay_within_tolerance():
    res = dopri5(lambda t, y: -y, 0.0, np.array([1.0]), 2.0, 1e-10, 1e-12)
    assert res.status is Status.COMPLETED
    assert res.t[-1] == 2.0
    assert res.y[-1, 0] == pytest.approx(math.exp(-2.0), rel=1e-9)
    assert np.all(np.diff(res.t) > 0)


def test_backward_integration():
    res = dopri5(lambda t, y: np.array([math.cos(t)]), 1.0, np.array([0.0]), 0.0, 1e-10, 1e-12)
    assert res.y[-1, 0] == pytest.approx(-math.sin(1.0), abs=1e-9)


def test_stop_event_reports_blowup():
    # y' = y^2, y(0) = 1 explodes at t = 1
    res = dopri5(lambda t, y: y * y, 0.0, np.array([1.0]), 2.0, 1e-10, 1e-12,
                 stop=lambda t, y: abs(y[0]) > 1e6)
    assert res.status is Status.BLOWUP
    assert res.t_final == pytest.approx(1.0, abs=1e-5)


def test_step_underflow_raises():
    with pytest.raises(ToleranceUnachievableError):
        dopri5(lambda t, y: np.array([1.0 / (1.0 - t) ** 0.5 if t < 1 else 0.0]) * np.sin(1e9 * t),
               0.0, np.array([0.0]), 1.0, 1e-14, 1e-16, max_steps=2000)


def test_hermite_reproduces_cubics():
    t = np.array([0.0, 0.5, 1.3])
    y = (t ** 3)[:, None]
    f = (3 * t ** 2)[:, None]
    tq = np.linspace(0, 1.3, 7)
    assert hermite(t, y, f, tq)[:, 0] == pytest.approx(tq ** 3, rel=1e-13, abs=1e-15)
