from mongeflow import cli, config
from mongeflow.errors import UsageError
from mongeflow.util import sha256_file
import json
import pandas as pd
import pytest


def write_config(tmp_path, **cfg):
    path = tmp_path / 'config.json'
    path.write_text(json.dumps(cfg))
    return str(path)


def fit(tmp_path, out='run', **extra):
    cfg = write_config(tmp_path, sdot_mc_samples=20000, sdot_tol=0.01, **extra)
    return cli.main(['fit', '--config', cfg, '--cloud', 'fixture:line_irregular8',
                     '--out', str(tmp_path / out)])


def test_info(capsys):
    assert cli.main(['info']) == 0
    assert 'line_pair' in capsys.readouterr().out


def test_fit_artifacts(tmp_path):
    assert fit(tmp_path) == 0
    out = tmp_path / 'run' / 'fit'
    for name in ['potential.json', 'complex.json', 'fit_report.json', 'config.json',
                 'manifest.json', 'timing.json']:
        assert (out / name).exists(), name
    report = json.loads((out / 'fit_report.json').read_text())
    assert report['converged'] and report['residual'] <= 0.01
    manifest = json.loads((out / 'manifest.json').read_text())
    assert set(manifest['artifacts']) == {'config.json', 'potential.json', 'complex.json',
                                          'fit_report.json'}
    assert manifest['inputs'] == {}
    assert report['refine_iters'] == config.DEFAULTS['sdot_refine_iters']


def test_fit_deterministic(tmp_path):
    assert fit(tmp_path, 'a') == 0
    assert fit(tmp_path, 'b') == 0
    for name in ['potential.json', 'complex.json', 'fit_report.json']:
        a = (tmp_path / 'a' / 'fit' / name).read_bytes()
        b = (tmp_path / 'b' / 'fit' / name).read_bytes()
        assert a == b, name


def test_sample(tmp_path):
    assert fit(tmp_path) == 0
    out = str(tmp_path / 'run')
    assert cli.main(['sample', '--out', out, '--count', '0']) == 0
    path = tmp_path / 'run' / 'sample' / 'samples.csv'
    assert path.read_text().strip() == 'x0,label,simplex_id'
    assert cli.main(['sample', '--out', out, '--count', '100', '--label', '1']) == 0
    df = pd.read_csv(path)
    assert len(df) == 100 and (df.label == 1).all()
    timing = json.loads((tmp_path / 'run' / 'sample' / 'timing.json').read_text())
    assert timing['ode_steps'] == 0 and timing['seconds_per_sample']['mean'] > 0
    assert cli.main(['sample', '--out', out, '--count', '10', '--label', '9']) == 2


def snapshot(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.name != 'timing.json'}


def test_sample_records_inputs_and_is_reproducible(tmp_path):
    assert fit(tmp_path) == 0
    run = tmp_path / 'run'
    runs = []
    for _ in range(2):
        assert cli.main(['sample', '--out', str(run), '--count', '100']) == 0
        runs.append(snapshot(run / 'sample'))
    assert runs[0] == runs[1]
    assert set(runs[0]) == {'samples.csv', 'config.json', 'manifest.json'}
    manifest = json.loads(runs[0]['manifest.json'])
    assert manifest['inputs'] == {name: sha256_file(run / 'fit' / name)
                                  for name in ['potential.json', 'complex.json']}


def test_verify_reproducible(tmp_path):
    runs = []
    for _ in range(2):
        assert cli.main(['verify', '--experiments', 'stability', '--out', str(tmp_path)]) == 0
        runs.append(snapshot(tmp_path / 'verify'))
    assert runs[0] == runs[1]
    assert {'stability.json', 'stability_curve.csv', 'verdicts.json', 'manifest.json'} <= set(runs[0])


def test_verify_records_inputs(tmp_path):
    assert fit(tmp_path) == 0
    potential = tmp_path / 'run' / 'fit' / 'potential.json'
    assert cli.main(['verify', '--experiments', '', '--potential', str(potential),
                     '--out', str(tmp_path / 'check')]) == 0
    manifest = json.loads((tmp_path / 'check' / 'verify' / 'manifest.json').read_text())
    assert manifest['inputs'] == {'potential.json': sha256_file(potential)}


def test_sample_pipeline(tmp_path):
    cfg = write_config(tmp_path, sdot_mc_samples=20000, sdot_tol=0.01, n_targets=8, flow_steps=64)
    out = str(tmp_path / 'run')
    assert cli.main(['fit', '--config', cfg, '--cloud', 'fixture:line_pair', '--t-prime', '0.5',
                     '--out', out]) == 0
    assert cli.main(['sample', '--config', cfg, '--out', out, '--count', '50', '--pipeline']) == 0
    timing = json.loads((tmp_path / 'run' / 'sample' / 'timing.json').read_text())
    assert timing['ode_steps'] == 64
    assert len(pd.read_csv(tmp_path / 'run' / 'sample' / 'samples.csv')) == 50


def test_missing_artifacts(tmp_path):
    assert cli.main(['sample', '--out', str(tmp_path)]) == 3


def test_empty_csv_leaves_no_outputs(tmp_path):
    empty = tmp_path / 'empty.csv'
    empty.write_text('')
    assert cli.main(['fit', '--cloud', str(empty), '--out', str(tmp_path / 'run')]) == 3
    assert not (tmp_path / 'run').exists()


def test_unknown_config_key(tmp_path):
    assert cli.main(['info', '--config', write_config(tmp_path, colour='red')]) == 2
    with pytest.raises(UsageError):
        config.resolve({'seed': 'abc'})


def test_config_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv(config.OUT_ENV, str(tmp_path / 'env'))
    cfg = config.resolve({'seed': 3, 'count': '12'}, {'seed': 5, 'label': None})
    assert cfg['seed'] == 5 and cfg['count'] == 12 and cfg['label'] is None
    assert cfg['out'] == str(tmp_path / 'env')
    assert config.resolve(None, {'experiments': 'decay, pipeline'})['experiments'] == ['decay', 'pipeline']


def test_verify_none(tmp_path):
    assert cli.main(['verify', '--experiments', '', '--out', str(tmp_path)]) == 0
    assert json.loads((tmp_path / 'verify' / 'verdicts.json').read_text()) == {}


def test_verify_corrupted_potential(tmp_path):
    bad = tmp_path / 'potential.json'
    bad.write_text('{"dim": ')
    assert cli.main(['verify', '--potential', str(bad), '--out', str(tmp_path / 'run')]) == 3
    assert not (tmp_path / 'run').exists()


def test_prior_error_identical_sources(tmp_path):
    assert cli.main(['prior-error', '--prior', 'marginal', '--reference', 'marginal',
                     '--t-prime', '0.1', '--samples', '200', '--out', str(tmp_path)]) == 0
    entry = json.loads((tmp_path / 'prior-error' / 'prior_error.json').read_text())
    assert entry['value'] == 0. and entry['sizes'] == [200, 200]


def test_prior_error_gaussian_positive(tmp_path):
    assert cli.main(['prior-error', '--t-prime', '0.1', '--samples', '200',
                     '--out', str(tmp_path)]) == 0
    entry = json.loads((tmp_path / 'prior-error' / 'prior_error.json').read_text())
    assert entry['value'] > 0.5 and entry['method'] == 'exact'
