"""End-to-end tests of the dressed-pairs command line."""

import json

import numpy as np
import pytest

from cli import join_option_values, main
from config.constants import FILE_FORMATS


def run(tmp_path, *argv):
    return main(['--out-dir', str(tmp_path / 'results'), *argv])


def read_json(path):
    return json.loads(path.read_text())


@pytest.fixture
def decoupled_config(tmp_path):
    path = tmp_path / 'decoupled.cfg'
    path.write_text("# exchange switched off\nupsilon = zero\n")
    return path


def test_fiber_hardcore(tmp_path, capsys):
    assert run(tmp_path, '--grid-N', '16', 'fiber', '--k=-pi,0', '--U', 'hardcore') == 0
    out_dir = tmp_path / 'results' / 'fiber'
    payload = read_json(out_dir / 'fiber.json')
    assert payload['U_eV'] == 'hardcore'
    assert payload['E_eV'] < min(payload['b_eV'], payload['z_eV'])
    assert set(payload['binding_energy']) >= {'|E|_K', 'z-E_K', 'b-E_K'}
    manifest = read_json(out_dir / 'manifest.json')
    assert manifest['grid_N'] == 16 and manifest['U_eV'] == 'hardcore'
    assert len(manifest['outputs']) == 3
    assert (out_dir / 'fiber_density.csv').exists() and (out_dir / 'fiber_psi.npz').exists()
    assert '✅' in capsys.readouterr().out


def test_fiber_negative_momentum_as_separate_argument(tmp_path):
    assert run(tmp_path, 'fiber', '--k', '-pi,0', '--U', 'hardcore') == 0
    out_dir = tmp_path / 'results' / 'fiber'
    for name in ('fiber.json', 'fiber_density.csv', 'fiber_psi.npz', 'manifest.json'):
        assert (out_dir / name).exists()
    payload = read_json(out_dir / 'fiber.json')
    assert payload['k'] == pytest.approx([-3.141592653589793, 0.0])
    assert payload['N'] == 64


def test_join_option_values():
    assert join_option_values(['fiber', '--k', '-pi,0', '--U', '1']) == ['fiber', '--k=-pi,0', '--U', '1']
    assert join_option_values(['scatter', '--times', '-1,0']) == ['scatter', '--times=-1,0']
    assert join_option_values(['fiber', '--k', '0,1']) == ['fiber', '--k', '0,1']
    assert join_option_values(['fiber', '--k', '--U']) == ['fiber', '--k', '--U']


def test_fiber_decoupled_is_the_boson(tmp_path, decoupled_config):
    assert run(tmp_path, '--config', str(decoupled_config), '--grid-N', '8', 'fiber', '--k', '1,0.5') == 0
    payload = read_json(tmp_path / 'results' / 'fiber' / 'fiber.json')
    assert payload['E_eV'] == payload['b_eV']
    assert payload['rho'] == 1.0
    assert payload['sym_weights'] is None


def test_h_b_outside_bound_pair_regime(tmp_path, capsys):
    config = tmp_path / 'fast_boson.cfg'
    config.write_text("h_b = 0.9\n")
    assert run(tmp_path, '--config', str(config), '--grid-N', '8', 'fiber', '--k', '0.5,0.5') == 2
    assert 'h_b' in capsys.readouterr().err


def test_invalid_grid(tmp_path):
    assert run(tmp_path, '--grid-N', '5', 'fiber', '--k', '0,0') == 2


def test_invalid_config(tmp_path):
    config = tmp_path / 'bad.cfg'
    config.write_text("colour = red\n")
    assert run(tmp_path, '--config', str(config), 'fiber', '--k', '0,0') == 2


def test_bad_repulsion_is_a_usage_error(tmp_path):
    with pytest.raises(SystemExit) as excinfo:
        run(tmp_path, 'fiber', '--k', '0,0', '--U', 'soft')
    assert excinfo.value.code == 2


def test_sweep_reuses_cache(tmp_path, capsys):
    argv = ['--grid-N', '16', '--threads', '2', 'sweep', '--kdensity', '4', '--skip-mass']
    assert run(tmp_path, *argv) == 0
    assert run(tmp_path, *argv) == 0
    out_dir = tmp_path / 'results' / 'sweep'
    manifest = read_json(out_dir / 'manifest.json')
    assert manifest['extra']['cache']['hit_rate_percent'] == 100.0
    lines = (out_dir / 'sweep.csv').read_text().splitlines()
    assert lines[0] == ','.join(FILE_FORMATS['sweep_columns'])
    assert len(lines) == 17
    assert '100.0% hits' in capsys.readouterr().out


def test_scatter_decoupled(tmp_path, decoupled_config):
    argv = ['--config', str(decoupled_config), '--grid-N', '4',
            'scatter', '--k', '0.5,-1', '--times', '0,1', '--steps', '16', '--order', '3']
    assert run(tmp_path, *argv) == 0
    out_dir = tmp_path / 'results' / 'scatter'
    records = read_json(out_dir / 'scatter.json')['records']
    assert [record['method'] for record in records] == ['exact', 'ode', 'series(3)']
    with np.load(out_dir / 'scatter_propagators.npz') as data:
        for index in range(3):
            np.testing.assert_allclose(data[f'V_{index}'], np.eye(17), atol=1e-12)


def test_scatter_repulsion_override(tmp_path, decoupled_config):
    argv = ['--config', str(decoupled_config), '--grid-N', '4',
            'scatter', '--k', '-1,0.5', '--times', '0,1', '--U', '0', '--methods', 'exact']
    assert run(tmp_path, *argv) == 0
    out_dir = tmp_path / 'results' / 'scatter'
    assert read_json(out_dir / 'scatter.json')['records'][0]['U_eV'] == '0'
    assert read_json(out_dir / 'manifest.json')['U_eV'] == '0'


def test_scatter_rejects_hardcore(tmp_path):
    argv = ['--grid-N', '4', 'scatter', '--k', '0,1', '--times', '0,1', '--U', 'hardcore']
    assert run(tmp_path, *argv) == 2


def test_scatter_rejects_unknown_method(tmp_path):
    argv = ['--grid-N', '4', 'scatter', '--k', '0,1', '--times', '0,1', '--methods', 'exact,magic']
    assert run(tmp_path, *argv) == 2


def test_localize(tmp_path):
    assert run(tmp_path, '--grid-N', '16', 'localize', '--k=-pi,0', '--window', '8') == 0
    payload = read_json(tmp_path / 'results' / 'localize' / 'localize.json')
    assert payload['window'] == 8
    assert payload['confined_axes'] == ['a']
    assert payload['combes_certificate']['holds'] is True


def test_localize_with_uniform_gap(tmp_path):
    argv = ['--grid-N', '16', 'localize', '--k', '-pi,0', '--window', '8', '--gap-kdensity', '2']
    assert run(tmp_path, *argv) == 0
    certificate = read_json(tmp_path / 'results' / 'localize' / 'localize.json')['combes_certificate']
    assert certificate['holds'] is True


def test_calibrate(tmp_path):
    assert run(tmp_path, '--grid-N', '8', 'calibrate', '--rho', '0.9') == 0
    payload = read_json(tmp_path / 'results' / 'calibrate' / 'calibrate.json')
    assert abs(payload['achieved_rho'] - 0.9) <= 1e-6
    assert payload['K'] == pytest.approx([-3.141592653589793, 0.0])


def test_calibrate_unreachable_target(tmp_path):
    assert run(tmp_path, '--grid-N', '8', 'calibrate', '--rho', '0.3') == 3
