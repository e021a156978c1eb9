import json
from pathlib import Path

import numpy as np
import pytest

from effham.app import main
from effham.decomposition import decomposition_hash
from effham.dynamics import DEFAULT_SAMPLES
from effham.scenarios import compensated_rabi, preset_params
from effham.utils import fmt_float

RABI = ['--preset', 'rabi', '--lambda', '0.03', '--cutoff', '7']

DEGENERATE = {
    'space': [{'kind': 'qubit'}],
    'terms': [{'omega': '1', 'entries': [[1, 0, 0.1, 0.0]]}],
}


def read_json(path):
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def outputs(directory):
    return sorted(p.name for p in Path(directory).iterdir())


@pytest.fixture
def degenerate_file(tmp_path):
    path = tmp_path / 'qubit.json'
    path.write_text(json.dumps(DEGENERATE))
    return str(path)


def test_derive(tmp_path):
    out = tmp_path / 'derive'
    assert main(['derive', *RABI, '--order', '3', '--out', str(out)]) == 0
    assert outputs(out) == ['effective_order3.json', 'manifest.json', 'scenario.json']

    data = read_json(out / 'effective_order3.json')
    assert data['omegas'] == ['2', '4']
    assert [e['nus'] for e in data['ledger']] == [['2', '-4', '2'], ['-2', '4', '-2']]
    manifest = read_json(out / 'manifest.json')
    assert manifest['scenario_hash'] == data['scenario_hash']
    assert manifest['params']['lambda_over_base'] == 0.03
    assert manifest['outputs'] == ['effective_order3.json', 'scenario.json']


def test_derive_explicit_matches_generic(tmp_path):
    for method in ('generic', 'explicit'):
        assert main(['derive', *RABI, '--method', method, '--out', str(tmp_path / method)]) == 0
    generic = read_json(tmp_path / 'generic' / 'effective_order3.json')
    explicit = read_json(tmp_path / 'explicit' / 'effective_order3.json')
    assert generic['total'] == explicit['total']
    assert explicit['method'] == 'explicit'


@pytest.mark.parametrize('command', [
    ['derive', *RABI, '--order', '3'],
    ['simulate', *RABI, '--mode', 'effective', '--t-final', '10', '--dt', '0.01'],
])
def test_outputs_are_deterministic(tmp_path, command):
    for name in ('first', 'second'):
        assert main(command + ['--out', str(tmp_path / name)]) == 0
    names = outputs(tmp_path / 'first')
    assert names == outputs(tmp_path / 'second')
    for name in names:
        if name != 'manifest.json':
            assert (tmp_path / 'first' / name).read_bytes() == (tmp_path / 'second' / name).read_bytes()


def test_simulate_both(tmp_path):
    out = tmp_path / 'sim'
    command = ['simulate', '--preset', 'rabi', '--mode', 'both', '--t-final', '20', '--dt', '0.01',
               '--compensate-stark', '--out', str(out)]
    assert main(command) == 0
    assert outputs(out) == ['comparison.json', 'manifest.json', 'populations_effective.csv',
                            'populations_full.csv', 'scenario.json', 'scenario_compensated.json',
                            'trajectory_effective.csv', 'trajectory_effective.json', 'trajectory_full.csv',
                            'trajectory_full.json']
    assert (out / 'populations_full.csv').read_text().splitlines()[0] == 't,P(g,3),P(e,0)'
    manifest = read_json(out / 'manifest.json')
    assert manifest['params']['stark_delta'] == '1/400'
    shifted = decomposition_hash(compensated_rabi(preset_params('rabi'))[0])
    assert manifest['params']['compensated_scenario_hash'] == shifted
    assert manifest['scenario_hash'] != shifted


def test_simulate_needs_initial_for_scenario_files(tmp_path, degenerate_file):
    assert main(['simulate', '--scenario', degenerate_file, '--out', str(tmp_path)]) == 1


def test_parameter_scan(tmp_path, monkeypatch):
    monkeypatch.setenv('EFFHAM_THREADS', '2')
    out = tmp_path / 'scan'
    command = ['derive', '--preset', 'rabi', '--cutoff', '7', '--lambda', '0.03', '0.04', '--out', str(out)]
    assert main(command) == 0
    assert outputs(out) == ['lambda_0.03', 'lambda_0.04']
    for lam in (0.03, 0.04):
        assert read_json(out / f'lambda_{lam!r}' / 'manifest.json')['params']['lambda_over_base'] == lam


def test_bad_thread_count(tmp_path, monkeypatch):
    monkeypatch.setenv('EFFHAM_THREADS', 'many')
    assert main(['derive', '--preset', 'rabi', '--lambda', '0.03', '0.04', '--out', str(tmp_path)]) == 1


def test_degenerate_resonance(tmp_path, degenerate_file):
    assert main(['derive', '--scenario', degenerate_file, '--order', '4', '--out', str(tmp_path / 'a')]) == 2
    command = ['derive', '--scenario', degenerate_file, '--order', '4', '--policy', 'report',
               '--out', str(tmp_path / 'b')]
    assert main(command) == 0
    assert len(read_json(tmp_path / 'b' / 'effective_order4.json')['degeneracy_report']) == 4


def test_oracle_agrees_with_dyson(tmp_path, capsys):
    out = tmp_path / 'oracle'
    assert main(['oracle', *RABI, '--window', '0:80', '--dt', '0.005', '--out', str(out)]) == 0
    rows = read_json(out / 'oracle_order3.json')['rows']
    assert [(r['initial'], r['final'], r['ok']) for r in rows] == [('g,3', 'e,0', True)]
    assert '|g,3> -> |e,0>' in capsys.readouterr().out


def test_oracle_mismatch(tmp_path, monkeypatch):
    monkeypatch.setattr('effham.app.secular_rate_check', lambda *args, **kwargs: 0.0)
    assert main(['oracle', *RABI, '--window', '0:80', '--out', str(tmp_path)]) == 6
    assert read_json(tmp_path / 'oracle_order3.json')['rows'][0]['ok'] is False


EXIT_CODES = [
    # command, exit code
    (['derive', '--order', '3'], 1),
    (['derive', '--preset', 'rabi', '--scenario', 'x.json'], 1),
    (['derive', '--preset', 'jaynes_cummings'], 1),
    (['derive', '--preset', 'rabi', '--lambda', '0.5'], 1),
    (['derive', '--preset', 'rabi', '--cutoff', '5'], 1),
    (['derive', '--scenario', 'does_not_exist.json'], 1),
    (['frobnicate'], 1),
    (['oracle', *RABI, '--window', '40'], 1),
    (['oracle', *RABI, '--window', '0:5'], 7),
    (['simulate', *RABI, '--initial', 'x,9'], 5),
    (['simulate', *RABI, '--initial', 'g,12'], 5),
    (['simulate', *RABI, '--mode', 'full', '--dt', '0.1', '--t-final', '1'], 4),
    (['simulate', '--preset', 'two_atom', '--compensate-stark'], 1),
]


@pytest.mark.parametrize('command,code', EXIT_CODES)
def test_exit_codes(tmp_path, command, code):
    assert main(command + ['--out', str(tmp_path)]) == code


def test_scenario_without_lambda(tmp_path, degenerate_file):
    assert main(['derive', '--scenario', degenerate_file, '--lambda', '0.1', '--out', str(tmp_path)]) == 1


def test_simulate_effective_two_atom_defaults(tmp_path):
    out = tmp_path / 'pair'
    command = ['simulate', '--preset', 'two_atom', '--mode', 'effective', '--initial', 'gg,1', '--out', str(out)]
    assert main(command) == 0
    lines = (out / 'populations_effective.csv').read_text().splitlines()
    assert lines[0] == 't,P(gg,1),P(ee,0)'
    assert len(lines) == DEFAULT_SAMPLES + 2
    populations = np.loadtxt(out / 'populations_effective.csv', delimiter=',', skiprows=1)
    assert populations[0].tolist() == [0.0, 1.0, 0.0]
    assert np.all(populations[:, 1:].sum(axis=1) <= 1 + 1e-9)


@pytest.mark.parametrize('order,predicted_zero', [(3, False), (2, True)])
def test_oracle_two_atom(tmp_path, order, predicted_zero):
    out = tmp_path / f'order{order}'
    assert main(['oracle', '--preset', 'two_atom', '--order', str(order), '--out', str(out)]) == 0
    rows = {r['final']: r for r in read_json(out / f'oracle_order{order}.json')['rows']}
    assert rows['ee,0']['ok'] is True
    assert (rows['ee,0']['predicted'] == fmt_float(0.0)) is predicted_zero


def test_scan_keeps_close_lambdas_apart(tmp_path, monkeypatch):
    monkeypatch.setenv('EFFHAM_THREADS', '1')
    out = tmp_path / 'scan'
    command = ['derive', '--preset', 'rabi', '--cutoff', '7', '--lambda', '0.03', '0.03000001', '--out', str(out)]
    assert main(command) == 0
    assert outputs(out) == ['lambda_0.03', 'lambda_0.03000001']
    assert read_json(out / 'lambda_0.03000001' / 'manifest.json')['params']['lambda_over_base'] == 0.03000001
