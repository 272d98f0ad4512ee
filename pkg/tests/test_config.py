import pytest

from slowfast_is.config import load_config, parse_config
from slowfast_is.errors import ConfigError

BASE = """
[model]
name = rough_langevin

[regime]
tag = R1
exponent = 1.5
"""


def test_defaults_filled():
    cfg = parse_config(BASE)
    assert cfg.get("solver", "n") == 512
    assert cfg.get("sim", "dt") == "auto"
    assert cfg.get("sim", "x0") == (0.0,)
    assert cfg.has("model") and not cfg.has("sim")


def test_typed_values_and_comments():
    cfg = parse_config(BASE + "[sim]\nepsilon = 0.25  # noise\neps_list = 0.5, 0.25 0.1\ndt = 1e-4\n"
                       "per_path_log = yes\n[model.params]\nD = 2\n")
    assert cfg.get("sim", "epsilon") == 0.25
    assert cfg.get("sim", "eps_list") == (0.5, 0.25, 0.1)
    assert cfg.get("sim", "dt") == 1e-4
    assert cfg.get("sim", "per_path_log") is True
    assert cfg.section("model.params") == {"D": "2"}


@pytest.mark.parametrize("text,match", [
    (BASE + "[solver]\nsize = 3\n", r":9: unknown key 'size'"),
    (BASE + "[solvers]\n", r":8: unknown section \[solvers\]"),
    (BASE + "[solver]\nn = many\n", r":9: bad value for \[solver\] n"),
    (BASE + "[sim]\neps_list = 0.1, 0.2\n", r":9: eps_list must be strictly decreasing"),
    ("[model]\nname = rough_langevin\n", r"missing required section \[regime\]"),
    ("[model]\nname = rough_langevin\n[regime]\nexponent = 2\n", r"missing required key 'tag'"),
    ("[model]\nname = rough_langevin\n[regime]\ntag = R2\n", r"R2 needs \[regime\] gamma"),
    ("[model]\nname = other\n[regime]\ntag = R2\ngamma = 1\n", r"expected one of"),
    ("name = x\n", r":1: key outside"),
    (BASE + "[regime]\n", r"duplicate section"),
    ("[model]\nname = rough_langevin\nname = fast_vol\n", r":3: duplicate key 'name'"),
])
def test_errors_carry_location(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text, "run.ini")


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.ini")


def test_where():
    cfg = parse_config(BASE, "a.ini")
    assert cfg.where("regime", "tag") == "a.ini:6: [regime] tag"
