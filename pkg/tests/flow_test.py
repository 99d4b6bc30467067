from mongeflow import schedule as sch, mixture as mx, flow, fixtures
from mongeflow.errors import DomainError, UsageError
import numpy as np
import pytest


S = sch.vp_schedule()


def rms(a, b):
    return float(np.sqrt(np.mean(np.sum((np.asarray(a) - np.asarray(b))**2, axis=-1))))


def test_reversibility():
    cloud = fixtures.two_cluster8()
    x = mx.sample(mx.marginal(S, cloud, 0.5), 200, 0)
    y = flow.transport_batch(flow.flow_map(S, cloud, 0.5, 0.05), x)
    back = flow.transport_batch(flow.flow_map(S, cloud, 0.05, 0.5), y)
    assert rms(back, x) <= 1e-4


def test_matches_monotone_rearrangement_1d():
    cloud = fixtures.line_pair()
    p_T, p_t = mx.marginal(S, cloud, 1.), mx.marginal(S, cloud, 0.2)
    x = np.linspace(-2., 2., 21)
    y = np.asarray(flow.transport_batch(flow.flow_map(S, cloud, 1., 0.2), x[:, None]))[:, 0]
    ref = mx.quantile_1d(p_t, mx.cdf_1d(p_T, x))
    assert np.allclose(y, ref, atol=1e-5)


def test_marginal_preservation_w2():
    from mongeflow import metrics
    for name in sorted(fixtures.FIXTURES):
        cloud = fixtures.load(name)
        x = mx.sample(mx.marginal(S, cloud, 1.), 400, 0)
        y = flow.transport_batch(flow.flow_map(S, cloud, 1., 0.3), x)
        direct = mx.sample(mx.marginal(S, cloud, 0.3), 400, 1)
        other = mx.sample(mx.marginal(S, cloud, 0.3), 400, 2)
        # transported law is as close to p_t as an independent draw of it
        assert metrics.w2_samples(y, direct) <= 2 * metrics.w2_samples(other, direct) + 0.05, name


def test_fourth_order():
    cloud = fixtures.two_cluster8()
    x = mx.sample(mx.marginal(S, cloud, 1.), 50, 0)
    ref = flow.transport_batch(flow.flow_map(S, cloud, 1., 0.2, steps=2048), x)
    e64 = rms(flow.transport_batch(flow.flow_map(S, cloud, 1., 0.2, steps=64), x), ref)
    e128 = rms(flow.transport_batch(flow.flow_map(S, cloud, 1., 0.2, steps=128), x), ref)
    assert e64 / e128 >= 8., f'halving ratio {e64 / e128}'


@pytest.mark.parametrize('grid', ['log', 'uniform'])
def test_trajectory(grid):
    cloud = fixtures.line_irregular8()
    fm = flow.flow_map(S, cloud, 0.8, 0.1, steps=32, grid=grid)
    x = np.array([[-1.], [0.5], [2.]])
    ts, states = flow.trajectory(fm, x)
    assert ts.shape == (33,) and states.shape == (33, 3, 1)
    assert np.isclose(ts[0], 0.8) and np.isclose(ts[-1], 0.1)
    assert np.allclose(states[0], x)
    assert np.allclose(states[-1], flow.transport_batch(fm, x))


def test_workers_do_not_change_result():
    cloud = fixtures.two_cluster8()
    fm = flow.flow_map(S, cloud, 1., 0.1, steps=64)
    x = mx.sample(mx.standard_normal(2), 40, 0)
    assert np.allclose(flow.transport_batch(fm, x), flow.transport_batch(fm, x, workers=3),
                       rtol=0, atol=1e-12)


def test_zero_perturbation_is_exact():
    cloud = fixtures.two_cluster8()
    pert = flow.score_perturbation(0., 2)
    exact = flow.flow_map(S, cloud, 1., S.eps, steps=64)
    perturbed = flow.flow_map(S, cloud, 1., S.eps, steps=64, perturbation=pert)
    x = mx.sample(mx.standard_normal(2), 20, 0)
    assert flow.map_deviation(exact, perturbed, x) == 0.
    assert flow.log_score_matching_loss(perturbed) == float('-inf')


def test_constant_perturbation_loss():
    cloud = fixtures.two_cluster8()
    d = 0.03
    fm = flow.flow_map(S, cloud, 1., S.eps, perturbation=flow.score_perturbation(d, 2, 'constant'))
    loss = flow.score_matching_loss(fm, t_lo=0.2, t_hi=0.6, mc_samples=4,
                                    weight=lambda t: np.ones_like(t))
    assert np.isclose(loss, 0.5 * d**2 * 0.4, rtol=1e-10)


def test_smooth_perturbation_bounded():
    p = flow.score_perturbation(1., 3, seed=4)
    x = mx.sample(mx.standard_normal(3), 100, 0)
    e = np.asarray(flow._perturbation_field(p, x, 0.3))
    assert np.all(np.linalg.norm(e, axis=1) <= 1. + 1e-12)
    assert flow.perturbation_lipschitz(p) > 0
    assert flow.perturbation_lipschitz(flow.score_perturbation(1., 3, 'constant')) == 0.


def test_deviation_bound_log_domain():
    f = sch.integrating_factors(S, 0.)
    log_J = np.log(2e-3)
    expect = np.sqrt((0.9 - 0.1) / (2 * float(sch.integrating_factor_I(f, 0.1))**2) * 2e-3)
    assert np.isclose(np.exp(flow.log_deviation_bound(f, 0.1, 0.9, log_J)), expect)


def test_validation():
    cloud = fixtures.line_pair()
    with pytest.raises(DomainError):
        flow.flow_map(S, cloud, 1.2, 0.1)
    with pytest.raises(DomainError):
        flow.flow_map(S, cloud, 1., 0.)
    with pytest.raises(DomainError):
        flow.flow_map(S, cloud, 1., 0.1, grid='cheb')
    with pytest.raises(UsageError):
        flow.flow_map(S, cloud, 1., 0.1, perturbation=flow.score_perturbation(0.1, 2))
    with pytest.raises(UsageError):
        flow.map_deviation(flow.flow_map(S, cloud, 1., 0.1), flow.flow_map(S, cloud, 1., 0.2),
                           np.zeros((1, 1)))
    with pytest.raises(DomainError):
        flow.transport_batch(flow.flow_map(S, cloud, 1., 0.1), np.array([[np.nan]]))


def test_trajectory_csv(tmp_path):
    import pandas as pd
    fm = flow.flow_map(S, fixtures.two_cluster8(), 1., 0.5, steps=4)
    ts, states = flow.trajectory(fm, np.zeros((2, 2)))
    path = tmp_path / 'traj.csv'
    flow.write_trajectory_csv(ts, states, path)
    df = pd.read_csv(path)
    assert list(df.columns) == ['t', 'x0', 'x1'] and len(df) == 10
