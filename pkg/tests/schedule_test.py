from mongeflow import schedule as sch
from mongeflow.errors import DomainError
import numpy as np
import pytest


def test_variance_preserving():
    s = sch.vp_schedule()
    t = np.linspace(0., 1., 11)
    m = np.asarray(sch.mean_scale(s, t))
    v = np.asarray(sch.variance(s, t))
    assert np.allclose(m**2 + v, 1., rtol=0, atol=1e-14)
    assert v[0] == 0. and m[0] == 1.


def test_coefficients():
    s = sch.vp_schedule(beta_min=0.1, beta_max=20.)
    f, g = sch.coefficients(s, 0.5)
    b = 0.1 + 0.5 * (20. - 0.1)
    assert np.isclose(f, b / 2) and np.isclose(g**2, b)


def test_simpson_exact_for_cubics():
    y = sch.simpson(lambda x: x**3 - 2 * x, 0., np.array([1., 2.]), 4)
    assert np.allclose(y, [0.25 - 1., 4. - 4.], atol=1e-13)


def test_integrating_factors_closed_form():
    s = sch.vp_schedule()
    t = np.array([1e-3, 0.1, 0.5, 1.])
    bi = np.asarray(sch.beta_integral(s, t))
    assert np.allclose(sch.log_integrating_factor_bar(sch.integrating_factors(s), t), bi / 4, rtol=1e-12)
    assert np.allclose(sch.log_integrating_factor_I(sch.integrating_factors(s, 0.), t), bi / 2, rtol=1e-12)
    L = 3.
    assert np.allclose(sch.log_integrating_factor_I(sch.integrating_factors(s, L), t),
                       bi / 2 * (1 + L), rtol=1e-12)


def test_default_lipschitz_stays_finite_in_log_domain():
    s = sch.vp_schedule()
    f = sch.integrating_factors(s)
    assert np.isclose(f.lipschitz, 1. / float(sch.variance(s, s.eps)))
    logI = float(sch.log_integrating_factor_I(f, 1.))
    assert np.isfinite(logI) and logI > 709.  # exp would overflow float64
    assert np.isinf(float(sch.integrating_factor_I(f, 1.)))


def test_weight_phi():
    s = sch.vp_schedule()
    f = sch.integrating_factors(s, 1.)
    t = np.array([0.2, 0.7])
    phi = np.asarray(sch.beta(s, t))**2 * np.asarray(sch.integrating_factor_I(f, t))**2
    assert np.allclose(sch.weight_phi(f, t), phi, rtol=1e-12)


def test_ddpm_continuous_limit():
    s = sch.from_ddpm()
    ab = sch.ddpm_alpha_bar()
    assert np.isclose(ab[-1], np.exp(-float(sch.beta_integral(s, 1.))), rtol=3e-2)


def test_extended_keeps_beta():
    s = sch.vp_schedule()
    e = sch.extended(s, 2.)
    t = np.linspace(0., 1., 5)
    assert np.allclose(sch.beta(e, t), sch.beta(s, t))
    assert np.allclose(sch.beta_integral(e, t), sch.beta_integral(s, t))
    with pytest.raises(DomainError):
        sch.extended(s, 0.5)


@pytest.mark.parametrize('t', [-0.1, 1.5, np.nan])
def test_time_out_of_range(t):
    with pytest.raises(DomainError):
        sch.mean_scale(sch.vp_schedule(), t)


@pytest.mark.parametrize('kwargs', [{'eps': 1.}, {'beta_min': 0.}, {'panels': 7},
                                    {'beta_min': 2., 'beta_max': 1.}])
def test_invalid_schedule(kwargs):
    with pytest.raises(DomainError):
        sch.vp_schedule(**kwargs)
