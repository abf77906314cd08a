import json

import numpy as np
import pytest

from oblique_switch import ConfigError
from oblique_switch.config import compile_expression, emit_config, load_config, parse_config


def test_defaults_and_canonical_roundtrip():
    cfg = parse_config('{"model": {"builtin": "example2"}}')
    assert cfg.lattice["steps"] == 20 and cfg.run["seed"] == 0
    text = emit_config(cfg)
    again = parse_config(text)
    assert emit_config(again) == text
    assert again.sha256 == cfg.sha256
    assert json.loads(text)["model"] == {"builtin": "example2"}


@pytest.mark.parametrize("spec, d", [
    ({"builtin": "example1"}, 3), ({"builtin": "example2", "cost": 2.0}, 3),
    ({"builtin": "example3", "grid": 11}, 3), ({"builtin": "classical", "c": [[0, 1], [2, 0]]}, 2),
    ({"builtin": "symmetric", "d": 5}, 5), ({"builtin": "dim3", "p": 0.5, "q": 0.5, "r": 0.5}, 3),
    ({"builtin": "controlled-costs-counterexample"}, 3), ({"builtin": "dim4-counterexample"}, 4),
    ({"P": [[0, 1], [1, 0]], "cbar": [1, 1]}, 2),
])
def test_builtins(spec, d):
    assert parse_config({"model": spec}).build_model().d == d


@pytest.mark.parametrize("text, where", [
    ('{"model": {"builtin": "nope"}}', "model.builtin"),
    ('{"model": {"builtin": "symmetric"}}', "'d'"),
    ('{"model": {"builtin": "example2"}, "lattice": {"stpes": 3}}', "lattice: unknown keys"),
    ('{"model": {"builtin": "example2"}, "extra": 1}', "top-level"),
    ('{"model": {"builtin": "example2"}', "line 1"),
    ('{"sde": {}}', "model: block missing"),
    ('{"model": {"P": [[0, 1], [1, 0]]}}', "cbar"),
    ('{"model": {"P": [[0.5, 0.4], [1, 0]], "cbar": [1, 1]}}', "model:"),
])
def test_errors_name_location(text, where):
    with pytest.raises(ConfigError, match=where):
        parse_config(text).build_model()


def test_driver_expressions():
    cfg = parse_config({"model": {"builtin": "example2"},
                        "driver": {"terminal": ["sin(x)", "x**2", 1.5], "running": ["t*x", "0", "maximum(x, 0)"]}})
    drv = cfg.build_driver(3)
    x = np.array([-1.0, 0.0, 2.0])
    np.testing.assert_allclose(drv.g(x), np.stack([np.sin(x), x ** 2, np.full(3, 1.5)], axis=1))
    np.testing.assert_allclose(drv.profit(0.5, x, 3)[:, 2], [0, 0, 2])
    with pytest.raises(ConfigError, match="need a list of 3"):
        parse_config({"model": {"builtin": "example2"}, "driver": {"terminal": ["x"]}}).build_driver(3)


@pytest.mark.parametrize("expr", ["__import__('os')", "x.real", "open('f')", "[1, 2]", "'a'", "y + 1",
                                  "lambda: 1"])
def test_expression_whitelist(expr):
    with pytest.raises(ConfigError):
        compile_expression(expr)


def test_load_config_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"model": {"builtin": "example2"}, "lattice": {"steps": 7}}')
    assert load_config(p).build_lattice().steps == 7
    with pytest.raises(ConfigError, match="missing.json: No such file"):
        load_config(tmp_path / "missing.json")


def test_lattice_errors_become_config_errors():
    cfg = parse_config({"model": {"builtin": "example2"},
                        "lattice": {"mode": "gaussian", "spacing": 5.0}})
    with pytest.raises(ConfigError, match="lattice:"):
        cfg.build_lattice()
