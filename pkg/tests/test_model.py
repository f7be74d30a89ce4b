import json

import numpy as np
import pytest

from polymv import ConfigError, ExprSyntaxError, StateSpace, make_model, parse_model
from polymv.errors import ComponentIndexError
from polymv.model import model_to_dict, render_model


def test_round_trip_through_json():
    spec = make_model(3, b="1 + x1", gamma="abs(x3)", Gamma="-0.5", moments=[1, 2, 3],
                      state_space="R+", l="0.1", Lambda="x2")
    again = parse_model(render_model(spec))
    assert model_to_dict(again) == model_to_dict(spec)
    assert again.has_common_noise


def test_point_initial_condition_expands_to_moments():
    spec = make_model(3, z0=2.0)
    assert np.array_equal(spec.zbar0, [1.0, 2.0, 4.0, 8.0])


MAPS = {"b": "0", "beta": "0", "c": "0", "gamma": "0", "Gamma": "0"}


@pytest.mark.parametrize("cfg, err", [
    ({"N": 2, "z0": 1}, None),
    ({"N": 0, "z0": 1}, ConfigError),
    ({"N": 2}, ConfigError),
    ({"N": 2, "z0": 1, "moments": [1, 1]}, ConfigError),
    ({"N": 2, "moments": [1]}, ConfigError),
    ({"N": 2, "z0": 1, "b": "x3"}, ComponentIndexError),
    ({"N": 2, "z0": 1, "b": "1 +"}, ExprSyntaxError),
    ({"N": 2, "z0": 1, "state_space": "C"}, ConfigError),
    ({"N": 2, "z0": -1, "state_space": "R+"}, ConfigError),
    ({"N": 2, "z0": 1, "l": "1"}, ConfigError),
])
def test_config_validation(cfg, err):
    cfg = {**MAPS, **cfg}
    if err is None:
        parse_model(cfg)
        parse_model(json.dumps(cfg))
    else:
        with pytest.raises(err):
            parse_model(cfg)


def test_state_space_projection():
    z = np.array([-0.5, 0.25, 1.5])
    assert np.array_equal(StateSpace.REAL.project(z), z)
    assert np.array_equal(StateSpace.NONNEG.project(z), [0.0, 0.25, 1.5])
    assert np.array_equal(StateSpace.UNIT_INTERVAL.project(z), [0.0, 0.25, 1.0])
    assert StateSpace.UNIT_INTERVAL.contains(1.0) and not StateSpace.NONNEG.contains(-1e-300)


def test_missing_map_is_rejected():
    with pytest.raises(ConfigError, match="missing map"):
        parse_model({"N": 1, "z0": 0.0, "b": "0"})
