from mongeflow import schedule as sch, mixture as mx, sdot, verify, fixtures
from mongeflow.errors import DomainError
import json
import numpy as np
import pytest


S = sch.vp_schedule()


@pytest.mark.parametrize('check, status', [
    (verify.make_check('a', 1., 2.), 'pass'),
    (verify.make_check('a', 2., 1.), 'fail'),
    (verify.make_check('a', 1., 1.), 'pass'),
    (verify.make_check('a', 1., 1., '<'), 'fail'),
    (verify.make_check('a', 2., 1., '>'), 'pass'),
    (verify.make_check('a', 1., 1.2, '<=', 0.15), 'inconclusive'),
    (verify.make_check('a', 1., 1.4, '<=', 0.15), 'pass'),
    (verify.make_check('a', 1.4, 1., '<=', 0.15), 'fail'),
    (verify.make_check('a', -np.inf, -np.inf), 'pass'),
    (verify.make_check('a', np.nan, 1.), 'fail'),
])
def test_check_status(check, status):
    assert check.status == status, check


def test_verdict():
    ok, bad, unsure = (verify.make_check('a', 0., 1.), verify.make_check('b', 1., 0.),
                       verify.make_check('c', 1., 1.1, slack=0.1))
    assert verify.verdict([]) == 'pass'
    assert verify.verdict([ok, unsure]) == 'inconclusive'
    assert verify.verdict([ok, unsure, bad]) == 'fail'


def test_monotone_map_of_standard_normal_is_identity():
    x = np.linspace(-3., 3., 13)
    assert np.allclose(verify.monotone_map_1d(mx.standard_normal(1), x)[:, 0], x, atol=1e-12)


def test_map_l2_1d():
    cloud = fixtures.line_pair()
    a = sdot.make_potential(cloud, [0., 0.])
    b = sdot.make_potential(cloud, [0.5, -0.5])
    # boundary moves from 0 to 0.5, mass Phi(0.5) - 1/2 switches between -1 and +1
    expect = np.sqrt((mx.cdf_1d(a.source, 0.5) - 0.5) * 4.)
    assert np.isclose(verify.map_l2_1d(a, b), expect)
    assert verify.map_l2_1d(a, a) == 0.


def test_potential_stability_1d():
    r = verify.verify_potential_stability(fixtures.line_irregular8(), grid_points=4001)
    status = {c.name: c.status for c in r.checks}
    assert status['zero corruption errors'] == 'pass'
    assert status['sup error scales linearly x4'] == 'pass'
    assert list(r.curve.columns) == ['corruption', 'map_l2', 'sup_error', 'ratio']
    assert np.all(np.diff(r.curve.sup_error.values) > 0)


def test_map_decay():
    r = verify.verify_map_decay(fixtures.line_pair(), S, samples=400, steps=256)
    l2 = r.curve.map_l2.values
    assert len(l2) == 8 and np.isclose(l2[0], r.values['w2_inf'])
    assert np.all(np.diff(l2) < 0)
    status = {c.name: c.status for c in r.checks}
    decreasing = [s for n, s in status.items() if n.startswith('map_l2 decreases')]
    assert len(decreasing) == 7 and set(decreasing) == {'pass'}
    assert status['envelope slope'] == 'pass', r.values['slope']
    assert status['envelope fit r2'] == 'pass', r.values['r2']
    assert list(r.curve.columns) == ['s', 'map_l2', 'envelope']
    with pytest.raises(DomainError):
        verify.verify_map_decay(fixtures.two_cluster8(), S)


def test_flow_deviation_bound():
    r = verify.verify_flow_deviation(fixtures.two_cluster8(), S, deltas=(0., 0.01), samples=100,
                                     steps=64, mc_samples=16)
    bound_checks = [c for c in r.checks if 'bound' in c.name]
    assert len(bound_checks) == 4
    assert all(c.status == 'pass' for c in bound_checks)
    assert r.values['rows'][0]['deviation'] == 0.
    assert r.values['rows'][0]['switched'] == 0


def test_flow_deviation_slope():
    r = verify.verify_flow_deviation(fixtures.two_cluster8(), S, samples=300, steps=256,
                                     mc_samples=16)
    status = {c.name: c.status for c in r.checks}
    assert status['log-log slope >= 0.9'] == 'pass', r.values['slope']
    assert status['log-log slope <= 1.1'] == 'pass', r.values['slope']
    rows = r.values['rows']
    assert [row['delta'] for row in rows] == [0.005, 0.01, 0.02]
    # median deviation grows with delta, the rms also carries the switched draws
    assert all(a['typical_deviation'] < b['typical_deviation'] for a, b in zip(rows, rows[1:]))
    assert all(row['typical_deviation'] <= row['deviation'] for row in rows)
    assert list(r.curve.columns[:4]) == ['delta', 'deviation', 'typical_deviation', 'switched']


def test_prior_contraction_lower_bound(caplog):
    caplog.set_level('INFO', logger='mongeflow.verify')
    r = verify.verify_prior_contraction(fixtures.line_pair(), S, samples=100, horizon=0.25,
                                        steps=64, resamples=10)
    lower = r.checks[0]
    assert lower.name == 'lower bound'
    assert r.values['w2_T'] > 0 and r.values['ratio_lower'] > 1
    assert np.isclose(r.values['measured_ratio'], r.values['w2_eps'] / r.values['w2_T'])
    assert np.isclose(lower.lhs, r.values['ratio_lower'] * r.values['w2_T'])
    assert lower.rhs == r.values['w2_eps'] and lower.relation == '<='
    assert np.isclose(lower.slack, 3 * r.values['bootstrap_stderr']) and lower.slack > 0
    expect = 'inconclusive' if abs(lower.margin) < 2 * lower.slack else ('pass' if lower.margin >= 0 else 'fail')
    assert lower.status == expect
    assert any('measured ratio' in m and 'lower ratio' in m for m in caplog.messages)
    mixing = r.values['mixing_w2']
    assert mixing[0.1] > mixing[0.5]


def test_report_reproducible(tmp_path):
    runs = [verify.verify_potential_stability(fixtures.line_irregular8(), grid_points=2001, seed=3)
            for _ in range(2)]
    paths = []
    for r, name in zip(runs, 'ab'):
        (tmp_path / name).mkdir()
        paths.append(verify.write_report(r, tmp_path / name))
    assert [p.name for p in paths[0]] == ['stability.json', 'stability_curve.csv']
    assert paths[0][0].read_bytes() == paths[1][0].read_bytes()
    assert 'runtime' not in json.loads(paths[0][0].read_text())


def test_run_suite_validation():
    from mongeflow.errors import UsageError
    with pytest.raises(UsageError):
        verify.run_suite(['nope'], S)
    assert verify.run_suite([], S) == []


def test_pipeline_ot_prior_contrast():
    r = verify.verify_pipeline(fixtures.two_cluster8(), S, samples=200, n_targets=16,
                               mc_samples=256000, steps=64, resamples=10,
                               error_samples=4_000_000)
    status = {c.name: c.status for c in r.checks}
    fit = r.values['fit']
    assert status['sdot converged'] == 'pass' and fit['converged']
    assert fit['refine_iters'] == 8 and fit['refine_samples'] == 8 * 256000
    assert status['ot prior error <= diam sqrt(|I| residual / 2)'] == 'pass'
    assert status['10 x ot prior error <= gaussian prior error'] == 'pass', \
        (r.values['prior_error_ot'], r.values['prior_error_gaussian'])
    assert r.values['prior_error_gaussian'] > 1.
