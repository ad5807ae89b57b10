"""Tests for the `key = value` configuration loader."""

import math
from pathlib import Path

import pytest

from backend.model_params import ModelParams, eval_upsilon_hat
from utils.config_loader import load_config, load_config_text, parse_config_text, parse_coupling, parse_repulsion
from utils.validators import ConfigError

CONFIG_DIR = Path(__file__).resolve().parents[1] / 'configs'


def test_defaults_match_shipped_prototypical_file():
    defaults = load_config()
    shipped = load_config(CONFIG_DIR / 'prototypical.cfg')
    assert defaults.fingerprint == shipped.fingerprint
    assert shipped.params.fingerprint() == ModelParams.prototypical().fingerprint()
    assert shipped.source.endswith('prototypical.cfg')


def test_nearest_neighbor_file():
    loaded = load_config(CONFIG_DIR / 'nearest_neighbor.cfg')
    assert loaded.params.u.fourier(0.0, 0.0) == pytest.approx(1.2)
    assert 'nearest' in loaded.params.u_label
    assert loaded.fingerprint != load_config().fingerprint


def test_comments_whitespace_and_alias():
    mapping = parse_config_text("# header\n  U   =  hardcore   # limit\n\np1 = one_range   2.0\n")
    assert mapping == {'U_eV': 'hardcore', 'p1': 'one_range 2.0'}
    loaded = load_config_text("U = inf\n")
    assert loaded.params.is_hardcore


@pytest.mark.parametrize("text", [
    "colour = red\n",
    "h_b = 0.1\nh_b = 0.2\n",
    "h_b 0.1\n",
    "h_b =\n",
    "h_b = fast\n",
    "epsilon_eV = nan\n",
])
def test_malformed_files_rejected(text):
    with pytest.raises(ConfigError):
        load_config_text(text)


def test_repulsion_values():
    assert parse_repulsion('hardcore') == math.inf
    assert parse_repulsion('Infinity') == math.inf
    assert parse_repulsion('2.5') == 2.5


def test_coupling_triples_and_presets():
    table = parse_coupling('u', '1 0 0.2; -1 0 0.2; 0 1 0.2; 0 -1 0.2')
    assert table.fourier(0.0, 0.0) == pytest.approx(0.8)
    assert parse_coupling('p1', 'shells 0.5 0.1 0.0').fourier(0.0, 0.0) == pytest.approx(0.9)
    assert parse_coupling('u', 'zero').is_zero
    with pytest.raises(ConfigError):
        parse_coupling('u', 'delta')
    with pytest.raises(ConfigError):
        parse_coupling('u', '1 0 0.2; 1 0 0.3')
    with pytest.raises(ConfigError):
        parse_coupling('u', '1 0')


def test_custom_u_label_and_fingerprint():
    loaded = load_config_text("u = delta 0.4\n")
    assert loaded.params.u_label.startswith('u = custom table')
    assert loaded.fingerprint != load_config_text("u = delta 0.5\n").fingerprint


def test_upsilon_table_replaces_profile():
    loaded = load_config_text("upsilon = delta 0.05\n")
    assert float(eval_upsilon_hat(loaded.params, (0.3, 1.0))) == pytest.approx(0.05)
    assert 'upsilon_profile' not in loaded.raw


@pytest.mark.parametrize("text", [
    "upsilon = delta 0.05\nupsilon_alpha = 2.0\n",
    "u = zero\nu_variant = none\n",
    "u_nn_eV = 0.2\n",
    "u_variant = everywhere\n",
    "upsilon_profile = gaussian\n",
])
def test_exclusive_and_unknown_choices(text):
    with pytest.raises(ConfigError):
        load_config_text(text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / 'absent.cfg')
