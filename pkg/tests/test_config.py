import json

import pytest

from surfmpm.config import SCHEMA_VERSION, load_scene, parse_scene, temperature_function
from surfmpm.errors import ConfigurationError


def minimal():
    return {
        "grid": {"origin": [0, 0], "extent": [1, 1], "dx": 0.05},
        "materials": [{"bulk_modulus": 10.0}],
        "shapes": [{"type": "circle", "center": [0.5, 0.5], "radius": 0.2}],
    }


def test_minimal_scene_defaults():
    cfg = parse_scene(minimal())
    assert cfg.dim == 2
    assert cfg.schema_version == SCHEMA_VERSION
    assert cfg.integrator == "explicit"
    assert cfg.time.dt_min <= cfg.time.dt_max
    assert cfg.surface.contact_epsilon == 0.5


def test_missing_grid_names_the_field():
    raw = minimal()
    del raw["grid"]
    with pytest.raises(ConfigurationError, match="grid"):
        parse_scene(raw)


def test_dt_order_checked():
    raw = minimal()
    raw["time"] = {"dt_min": 1e-2, "dt_max": 1e-3}
    with pytest.raises(ConfigurationError, match="dt_min"):
        parse_scene(raw)


@pytest.mark.parametrize("patch, word", [
    ({"colour": "blue"}, "colour"),
    ({"schema_version": 99}, "schema_version"),
    ({"gravity": [0, 0, -9.8]}, "gravity"),
    ({"integrator": "rk4"}, "integrator"),
])
def test_invalid_scenes(patch, word):
    raw = {**minimal(), **patch}
    with pytest.raises(ConfigurationError, match=word):
        parse_scene(raw)


def test_material_index_and_grid_shape():
    raw = minimal()
    raw["shapes"][0]["material"] = 3
    with pytest.raises(ConfigurationError, match="material"):
        parse_scene(raw)
    raw = minimal()
    raw["grid"]["extent"] = [1, 1, 1]
    with pytest.raises(ConfigurationError):
        parse_scene(raw)


def test_load_scene_file(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps(minimal()))
    assert load_scene(p).grid.dx == 0.05
    p.write_text("{not json")
    with pytest.raises(ConfigurationError, match="invalid JSON"):
        load_scene(p)


def test_temperature_field():
    cfg = parse_scene({**minimal(), "shapes": [{"type": "box", "lo": [0.2, 0.2], "hi": [0.8, 0.8],
                                                "temperature": {"base": 1.0, "gradient": [2.0, 0.0],
                                                                "origin": [0.5, 0.0]}}]})
    f = temperature_function(cfg.shapes[0].temperature)
    assert f([[0.75, 0.3]])[0] == pytest.approx(1.5)
    assert temperature_function(3.0) == 3.0
