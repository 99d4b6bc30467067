from mongeflow import metrics
from mongeflow.errors import CapacityError, DomainError, UsageError
import itertools
import numpy as np
import pytest


def cloud(n, dim=2, seed=0, shift=0.):
    return np.random.default_rng(seed).normal(size=(n, dim)) + shift


def test_w2_axioms():
    a, b, c = cloud(20, seed=0), cloud(20, seed=1, shift=1.), cloud(20, seed=2, shift=-0.5)
    ab, ba = metrics.w2_samples(a, b), metrics.w2_samples(b, a)
    assert metrics.w2_samples(a, a) == 0.
    assert np.isclose(ab, ba)
    assert ab <= metrics.w2_samples(a, c) + metrics.w2_samples(c, b) + 1e-12


def test_permutation_oracle():
    for seed in range(5):
        a, b = cloud(5, seed=seed), cloud(5, seed=seed + 10)
        C = ((a[:, None] - b[None])**2).sum(-1)
        best = min(C[np.arange(5), list(p)].mean() for p in itertools.permutations(range(5)))
        res = metrics.w2_exact(metrics.empirical(a), metrics.empirical(b))
        assert np.isclose(res.cost, best, rtol=1e-12), f'seed={seed}'
        assert res.method == 'exact'


def test_weighted_network_simplex():
    a = metrics.empirical([[0.]])
    b = metrics.empirical([[1.], [3.]], [0.5, 0.5])
    res = metrics.w2_exact(a, b)
    assert np.isclose(res.cost, 0.5 * 1. + 0.5 * 9.)
    assert np.isclose(res.mass.sum(), 1.)
    # duplicated atoms describe the same law
    assert np.isclose(metrics.w2_exact(metrics.empirical([[0.], [0.]]), b).cost, 5.)


def test_translation():
    a = cloud(30, seed=3)
    assert np.isclose(metrics.w2_samples(a, a + np.array([3., 4.])), 5.)


def test_capacity():
    a = metrics.empirical(cloud(30))
    with pytest.raises(CapacityError):
        metrics.w2_exact(a, a, max_pairs=100)


def test_entropic_agrees_with_exact():
    a, b = metrics.empirical(cloud(40, seed=0)), metrics.empirical(cloud(40, seed=1, shift=2.))
    exact = metrics.w2_exact(a, b)
    ent = metrics.w2_entropic(a, b, reg=1e-2)
    assert ent.method == 'entropic'
    assert ent.cost >= exact.cost - 1e-6
    assert abs(ent.w2 - exact.w2) <= 0.02 * exact.w2


def test_entropic_symmetry():
    a = metrics.empirical(cloud(30, seed=4))
    b = metrics.empirical(cloud(25, seed=5, shift=1.), np.random.default_rng(6).dirichlet(np.ones(25)))
    ab, ba = metrics.w2_entropic(a, b, reg=5e-2), metrics.w2_entropic(b, a, reg=5e-2)
    assert ab.converged and ba.converged
    assert np.isclose(ab.cost, ba.cost, rtol=1e-4), (ab.cost, ba.cost)


def test_entropic_identical_laws():
    a = metrics.empirical(cloud(40, seed=7))
    ent = metrics.w2_entropic(a, a, reg=1e-2)
    assert ent.converged
    assert 0. <= ent.cost < 1e-3
    assert np.isclose(ent.mass.sum(), 1., atol=1e-6)


def test_empirical_validation():
    with pytest.raises(DomainError):
        metrics.empirical(np.zeros((0, 2)))
    with pytest.raises(DomainError):
        metrics.empirical([[0.], [1.]], [0.7, 0.7])
    with pytest.raises(UsageError):
        metrics.w2_exact(metrics.empirical(cloud(3)), metrics.empirical(cloud(3, dim=3)))
    with pytest.raises(DomainError):
        metrics.w2_entropic(metrics.empirical(cloud(3)), metrics.empirical(cloud(3)), reg=0.)


def test_map_l2():
    x = cloud(10)
    assert np.isclose(metrics.map_l2(lambda z: z, lambda z: z + np.array([0., 2.]), x), 2.)


def test_bootstrap_stderr_of_mean():
    x = np.random.default_rng(1).normal(size=2000)
    se = metrics.bootstrap_stderr(np.mean, [x], resamples=400, seed=0)
    assert abs(se / (x.std() / np.sqrt(len(x))) - 1.) < 0.2
    assert se == metrics.bootstrap_stderr(np.mean, [x], resamples=400, seed=0)


def test_report_entry():
    res = metrics.w2_exact(metrics.empirical([[0.]]), metrics.empirical([[2.]]))
    e = metrics.report_entry('w2', res, None, [1, 1], 0)
    assert e == {'metric': 'w2', 'value': 2., 'method': 'exact', 'sizes': [1, 1], 'seed': 0}
