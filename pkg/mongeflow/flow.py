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

import logging
import numpy as np
import pandas as pd
from functools import partial
from jax import numpy as jnp, random, jit, lax
from jax.scipy.special import logsumexp
from flax import struct
from typing import Any, Optional
from mongeflow import schedule as sch, mixture as mx, metrics
from mongeflow.errors import DivergenceError, DomainError, UsageError
from mongeflow.util import prng_key, parallel_map


logger = logging.getLogger(__name__)

Array = Any


@struct.dataclass
class ScorePerturbation:
    '''fixed field e(x, t) with |e| <= 1 added to the exact score with weight `magnitude`

    constant mode: e = direction everywhere
    smooth mode: e = sin(W x + rate t + phase) / sqrt(n)
    '''
    magnitude: float
    direction: Array
    weights: Array
    rate: Array
    phase: Array
    mode: str = struct.field(pytree_node=False, default='smooth')
    seed: int = struct.field(pytree_node=False, default=0)


@struct.dataclass
class FlowMap:
    schedule: sch.NoiseSchedule
    cloud: mx.PointCloud
    t_start: float
    t_end: float
    perturbation: Optional[ScorePerturbation] = None
    steps: int = struct.field(pytree_node=False, default=512)
    grid: str = struct.field(pytree_node=False, default='log')


def score_perturbation(magnitude, dim, mode='smooth', seed=0):
    if not magnitude >= 0:
        raise DomainError(f'perturbation magnitude must be nonnegative, got {magnitude}')
    if mode not in ('constant', 'smooth'):
        raise DomainError('invalid perturbation mode %s' % mode)
    ku, kw, kr, kp = random.split(prng_key(seed), 4)
    u = random.normal(ku, (dim,))
    u = u / jnp.linalg.norm(u)
    if mode == 'constant':
        w, r, p = jnp.zeros((dim, dim)), jnp.zeros(dim), jnp.zeros(dim)
    else:
        w = random.normal(kw, (dim, dim))
        r = random.normal(kr, (dim,))
        p = random.uniform(kp, (dim,), maxval=2 * jnp.pi)
    return ScorePerturbation(float(magnitude), u, w, r, p, mode, int(seed))


def perturbation_lipschitz(perturbation: ScorePerturbation):
    '''spatial Lipschitz constant of e'''
    if perturbation is None or perturbation.mode == 'constant':
        return 0.
    w = np.asarray(perturbation.weights)
    return float(np.linalg.norm(w, 2) / np.sqrt(w.shape[0]))


def _perturbation_field(p, x, t):
    if p.mode == 'constant':
        return jnp.broadcast_to(p.direction, x.shape)
    return jnp.sin(x @ p.weights.T + p.rate * t + p.phase) / jnp.sqrt(x.shape[-1])


def _velocity(schedule, means, perturbation, x, t):
    b = sch.beta(schedule, t)
    s = mx._score(means, sch._mean_scale(schedule, t), sch._variance(schedule, t), x)
    if perturbation is not None:
        s = s + perturbation.magnitude * _perturbation_field(perturbation, x, t)
    return -0.5 * b * x - 0.5 * b * s


def flow_map(schedule: sch.NoiseSchedule, cloud: mx.PointCloud, t_start, t_end,
             steps=512, perturbation: Optional[ScorePerturbation] = None, grid='log'):
    '''probability flow map M^{t_start, t_end}, optionally with a perturbed score'''
    sch.check_time(schedule, t_start, lower=schedule.eps, name='t_start')
    sch.check_time(schedule, t_end, lower=schedule.eps, name='t_end')
    if int(steps) != steps or steps < 1:
        raise DomainError(f'steps must be a positive integer, got {steps}')
    if grid not in ('log', 'uniform'):
        raise DomainError('invalid time grid %s' % grid)
    if perturbation is not None and perturbation.direction.shape[0] != cloud.dim:
        raise UsageError(f'perturbation is {perturbation.direction.shape[0]}D, cloud is {cloud.dim}D')
    return FlowMap(schedule, cloud, float(t_start), float(t_end), perturbation, int(steps), grid)


def _time_grid(t0, t1, steps, grid):
    k = jnp.arange(steps + 1) / steps
    if grid == 'log':
        ts = t0 * jnp.exp(k * jnp.log(t1 / t0))
    else:
        ts = t0 + k * (t1 - t0)
    return ts.at[-1].set(t1)


def time_grid(flow: FlowMap):
    '''fixed integration nodes, geometric by default so steps shrink near eps'''
    return np.asarray(_time_grid(flow.t_start, flow.t_end, flow.steps, flow.grid))


@partial(jit, static_argnums=(6, 7, 8))
def _integrate(schedule, means, perturbation, x0, t0, t1, steps, grid, record):
    ts = _time_grid(t0, t1, steps, grid)
    v = lambda x, t: _velocity(schedule, means, perturbation, x, t)

    def step(carry, i):
        x, bad = carry
        ta, tb = ts[i], ts[i + 1]
        h = tb - ta
        k1 = v(x, ta)
        k2 = v(x + h / 2 * k1, ta + h / 2)
        k3 = v(x + h / 2 * k2, ta + h / 2)
        k4 = v(x + h * k3, tb)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        bad = jnp.where((bad < 0) & ~jnp.all(jnp.isfinite(x)), i + 1, bad)
        return (x, bad), (x if record else None)

    (x, bad), xs = lax.scan(step, (x0, jnp.array(-1)), jnp.arange(steps))
    return x, bad, xs


def _run(flow, x, record=False):
    x, bad, xs = _integrate(flow.schedule, jnp.asarray(flow.cloud.points), flow.perturbation,
                            x, flow.t_start, flow.t_end, flow.steps, flow.grid, record)
    bad = int(bad)
    if bad >= 0:
        raise DivergenceError(bad)
    return x, xs


def _check_points(flow, points):
    x = jnp.asarray(points, dtype=float).reshape(-1, flow.cloud.dim)
    if not bool(jnp.all(jnp.isfinite(x))):
        raise DomainError('transport input contains non-finite coordinates')
    return x


def transport_batch(flow: FlowMap, points, workers=1):
    '''RK4 transport of every point, optionally split across worker threads'''
    x = _check_points(flow, points)
    if flow.t_start == flow.t_end or x.shape[0] == 0:
        return x
    if workers <= 1:
        return _run(flow, x)[0]
    parts = [p for p in np.array_split(np.arange(x.shape[0]), workers) if len(p)]
    out = parallel_map(lambda p: _run(flow, x[p])[0], parts, workers)
    return jnp.concatenate(out, axis=0)


def transport(flow: FlowMap, x):
    return transport_batch(flow, jnp.asarray(x, dtype=float)[None])[0]


def trajectory(flow: FlowMap, points):
    '''integration nodes (steps + 1,) and states (steps + 1, count, n)'''
    x = _check_points(flow, points)
    ts = time_grid(flow)
    if flow.t_start == flow.t_end:
        return ts, jnp.repeat(x[None], flow.steps + 1, axis=0)
    _, xs = _run(flow, x, record=True)
    return ts, jnp.concatenate([x[None], xs], axis=0)


def write_trajectory_csv(times, states, path):
    '''one block of rows per particle, columns t, x0..x{n-1}'''
    states = np.asarray(states)
    steps, count, dim = states.shape
    df = pd.DataFrame(states.transpose(1, 0, 2).reshape(-1, dim),
                      columns=['x%d' % i for i in range(dim)])
    df.insert(0, 't', np.tile(np.asarray(times), count))
    df.to_csv(path, index=False, float_format='%.17g')


@jit
def _mean_sq_field(perturbation, x, t):
    e = perturbation.magnitude * _perturbation_field(perturbation, x, t)
    return jnp.mean(jnp.sum(e**2, axis=-1))


def _loss_interval(flow, t_lo, t_hi):
    s = flow.schedule
    t_lo = min(flow.t_start, flow.t_end) if t_lo is None else t_lo
    t_hi = max(flow.t_start, flow.t_end) if t_hi is None else t_hi
    sch.check_time(s, t_lo, lower=s.eps, name='t_lo')
    sch.check_time(s, t_hi, lower=s.eps, name='t_hi')
    if not t_lo < t_hi:
        raise DomainError(f'expect t_lo < t_hi, got {t_lo} >= {t_hi}')
    return float(t_lo), float(t_hi)


def log_score_matching_loss(flow: FlowMap, factors: sch.IntegratingFactors = None,
                            t_lo=None, t_hi=None, mc_samples=256, seed=0, panels=64,
                            weight=None):
    '''log of 1/2 int phi(t) E_{p_t} |S - grad log p_t|^2 dt

    The expectation is a Monte Carlo average over `mc_samples` exact marginal
    draws at each of the `panels + 1` Simpson nodes. `weight` overrides the
    default phi = g^4 I^2 and must be a positive vectorized function of t.
    '''
    t_lo, t_hi = _loss_interval(flow, t_lo, t_hi)
    if mc_samples < 1:
        raise DomainError(f'mc_samples must be positive, got {mc_samples}')
    p = flow.perturbation
    if p is None or p.magnitude == 0:
        return float('-inf')
    nodes = np.linspace(t_lo, t_hi, panels + 1)
    if weight is None:
        factors = sch.integrating_factors(flow.schedule) if factors is None else factors
        log_phi = np.asarray(sch.log_weight_phi(factors, nodes))
    else:
        log_phi = np.log(np.asarray(weight(nodes), dtype=float))
    key = prng_key(seed)
    e2 = np.empty(panels + 1)
    for k, t in enumerate(nodes):
        x = mx.sample(mx.marginal(flow.schedule, flow.cloud, t), mc_samples, random.fold_in(key, k))
        e2[k] = float(_mean_sq_field(p, x, t))
    w = np.ones(panels + 1)
    w[1:-1:2], w[2:-1:2] = 4., 2.
    w *= (t_hi - t_lo) / (3 * panels)
    return float(np.log(0.5) + logsumexp(jnp.asarray(np.log(w) + log_phi + np.log(e2))))


def score_matching_loss(flow: FlowMap, factors: sch.IntegratingFactors = None,
                        t_lo=None, t_hi=None, mc_samples=256, seed=0, panels=64,
                        weight=None):
    return float(np.exp(log_score_matching_loss(flow, factors, t_lo, t_hi, mc_samples,
                                                seed, panels, weight)))


def log_deviation_bound(factors: sch.IntegratingFactors, t_lo, t_hi, log_loss):
    '''log of sqrt((t_hi - t_lo) / (2 I(t_lo)^2)) * sqrt(J)'''
    log_I = float(sch.log_integrating_factor_I(factors, t_lo))
    return 0.5 * (np.log(t_hi - t_lo) - np.log(2.) - 2 * log_I + log_loss)


def map_deviation(exact: FlowMap, perturbed: FlowMap, init_samples, workers=1):
    '''L2(init law) distance between two flow maps over the same interval'''
    if exact.t_start != perturbed.t_start or exact.t_end != perturbed.t_end:
        raise UsageError(f'maps run over [{exact.t_start}, {exact.t_end}] and '
                         f'[{perturbed.t_start}, {perturbed.t_end}]')
    return metrics.map_l2(partial(transport_batch, exact, workers=workers),
                          partial(transport_batch, perturbed, workers=workers),
                          init_samples)
