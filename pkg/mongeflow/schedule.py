# Copyright 2026 The Mongeflow Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import numpy as np
from jax import numpy as jnp
from flax import struct
from typing import Any, Callable, Union
from mongeflow.errors import DomainError


Array = Any
Lipschitz = Union[float, Callable[[Array], Array]]


@struct.dataclass
class NoiseSchedule:
    '''variance preserving schedule with beta linear in normalized time'''
    beta_min: float = 0.2
    beta_max: float = 10.
    t_max: float = 1.
    eps: float = 1e-3
    panels: int = struct.field(pytree_node=False, default=1024)


@struct.dataclass
class IntegratingFactors:
    schedule: NoiseSchedule
    lipschitz: Lipschitz = struct.field(pytree_node=False, default=None)


def vp_schedule(beta_min=0.2, beta_max=10., t_max=1., eps=1e-3, panels=1024):
    if not beta_min > 0:
        raise DomainError(f'beta_min must be positive, got {beta_min}')
    if beta_max < beta_min:
        raise DomainError(f'beta_max {beta_max} < beta_min {beta_min}')
    if not t_max > 0:
        raise DomainError(f't_max must be positive, got {t_max}')
    if not 0 < eps < t_max:
        raise DomainError(f'eps must lie in (0, {t_max}), got {eps}')
    if panels < 2 or panels % 2:
        raise DomainError('Simpson quadrature needs an even panel count, got %d' % panels)
    return NoiseSchedule(float(beta_min), float(beta_max), float(t_max), float(eps), int(panels))


def from_ddpm(beta_1=2e-4, beta_T=1e-2, steps=1000, eps=1e-3):
    '''continuous limit beta(t) = steps * beta_k at t = k / steps'''
    return vp_schedule(steps * beta_1, steps * beta_T, 1., eps)


def ddpm_alpha_bar(beta_1=2e-4, beta_T=1e-2, steps=1000):
    '''cumulative products prod_{j<=k} (1 - beta_j), k = 1..steps'''
    return np.cumprod(1. - np.linspace(beta_1, beta_T, steps))


def extended(schedule: NoiseSchedule, t_max):
    '''continue the linear rule up to a later horizon'''
    if t_max < schedule.t_max:
        raise DomainError(f'cannot shrink horizon {schedule.t_max} to {t_max}')
    return schedule.replace(t_max=float(t_max), beta_max=float(beta(schedule, t_max)))


def check_time(schedule: NoiseSchedule, t, lower=0., name='t'):
    t = np.asarray(t, dtype=float)
    tol = 1e-12 * max(1., schedule.t_max)
    if not np.all(np.isfinite(t)) or np.any(t < lower - tol) or np.any(t > schedule.t_max + tol):
        raise DomainError(f'{name}={t} outside [{lower}, {schedule.t_max}]')
    return t


def beta(schedule: NoiseSchedule, t):
    return schedule.beta_min + t / schedule.t_max * (schedule.beta_max - schedule.beta_min)


def beta_integral(schedule: NoiseSchedule, t):
    return schedule.beta_min * t + (schedule.beta_max - schedule.beta_min) * t**2 / (2 * schedule.t_max)


def _mean_scale(schedule, t):
    return jnp.exp(-0.5 * beta_integral(schedule, t))


def _variance(schedule, t):
    # 1 - m^2 without cancellation near t = 0
    return -jnp.expm1(-beta_integral(schedule, t))


def coefficients(schedule: NoiseSchedule, t):
    '''drift rate f(t) = beta/2 and diffusion g(t) = sqrt(beta)'''
    t = check_time(schedule, t)
    b = beta(schedule, jnp.asarray(t))
    return b / 2, jnp.sqrt(b)


def mean_scale(schedule: NoiseSchedule, t):
    '''m(t) = exp(-int_0^t f), x_t | x_0 ~ N(m x_0, (1 - m^2) I)'''
    t = check_time(schedule, t)
    return _mean_scale(schedule, jnp.asarray(t))


def variance(schedule: NoiseSchedule, t):
    t = check_time(schedule, t)
    return _variance(schedule, jnp.asarray(t))


def simpson(fn, a, b, panels):
    '''composite Simpson rule of `fn` over [a, b], vectorized over broadcast limits

    Args:
        fn: vectorized integrand
        a: lower limit(s)
        b: upper limit(s)
        panels: even number of panels

    Returns:
        integral(s) with the broadcast shape of ``a`` and ``b``
    '''
    a, b = jnp.broadcast_arrays(jnp.asarray(a, dtype=float), jnp.asarray(b, dtype=float))
    u = jnp.linspace(0., 1., panels + 1)
    nodes = a[..., None] + (b - a)[..., None] * u
    w = jnp.ones(panels + 1).at[1:-1:2].set(4.).at[2:-1:2].set(2.)
    return (b - a) / (3 * panels) * jnp.sum(w * fn(nodes), axis=-1)


def default_lipschitz(schedule: NoiseSchedule):
    '''worst case mixture score Lipschitz bound 1 / sigma^2(eps)'''
    return float(1. / _variance(schedule, schedule.eps))


def integrating_factors(schedule: NoiseSchedule, lipschitz: Lipschitz = None):
    if lipschitz is None:
        lipschitz = default_lipschitz(schedule)
    elif not callable(lipschitz):
        if lipschitz < 0:
            raise DomainError(f'lipschitz bound must be nonnegative, got {lipschitz}')
        lipschitz = float(lipschitz)
    return IntegratingFactors(schedule, lipschitz)


def _lipschitz_fn(factors):
    L = factors.lipschitz
    return L if callable(L) else (lambda t: jnp.full_like(t, L))


def log_integrating_factor_I(factors: IntegratingFactors, t):
    '''log I(t) = int_0^t (f + g^2 L / 2)'''
    s = factors.schedule
    t = jnp.asarray(check_time(s, t))
    L = _lipschitz_fn(factors)
    integrand = lambda tau: beta(s, tau) / 2 * (1. + L(tau))
    return simpson(integrand, jnp.zeros_like(t), t, s.panels)


def log_integrating_factor_bar(factors: IntegratingFactors, t):
    '''log Ibar(t) = 1/2 int_0^t f'''
    s = factors.schedule
    t = jnp.asarray(check_time(s, t))
    return simpson(lambda tau: beta(s, tau) / 4, jnp.zeros_like(t), t, s.panels)


def integrating_factor_I(factors: IntegratingFactors, t):
    return jnp.exp(log_integrating_factor_I(factors, t))


def integrating_factor_bar(factors: IntegratingFactors, t):
    return jnp.exp(log_integrating_factor_bar(factors, t))


def log_weight_phi(factors: IntegratingFactors, t):
    '''log of phi(t) = g^4 I^2'''
    b = beta(factors.schedule, jnp.asarray(t, dtype=float))
    return 2 * jnp.log(b) + 2 * log_integrating_factor_I(factors, t)


def weight_phi(factors: IntegratingFactors, t):
    return jnp.exp(log_weight_phi(factors, t))
