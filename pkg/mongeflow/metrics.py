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
import ot
from jax import numpy as jnp, jit, lax
from jax.scipy.special import logsumexp
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from flax import struct
from typing import Any, NamedTuple
from mongeflow.errors import CapacityError, DomainError, UsageError


logger = logging.getLogger(__name__)

Array = Any

MAX_PAIRS = 4_000_000


@struct.dataclass
class EmpiricalLaw:
    points: Array
    weights: Array

    @property
    def size(self):
        return self.points.shape[0]


class CouplingResult(NamedTuple):
    cost: float
    rows: Array
    cols: Array
    mass: Array
    method: str
    iterations: int
    tolerance: float
    converged: bool = True
    residual: float = 0.

    @property
    def w2(self):
        return float(np.sqrt(max(self.cost, 0.)))


def empirical(points, weights=None):
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if points.ndim != 2 or points.shape[0] == 0:
        raise DomainError(f'expect a nonempty (count, dim) array, got shape {points.shape}')
    if not np.all(np.isfinite(points)):
        raise DomainError('empirical law has non-finite points')
    if weights is None:
        weights = np.full(points.shape[0], 1. / points.shape[0])
    else:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (points.shape[0],) or np.any(weights < 0):
            raise DomainError('weights must be a nonnegative vector, one per point')
        if abs(weights.sum() - 1.) > 1e-9:
            raise DomainError(f'weights sum to {weights.sum()}, expect 1')
        weights = weights / weights.sum()
    return EmpiricalLaw(points, weights)


def _cost_matrix(a, b):
    if a.points.shape[1] != b.points.shape[1]:
        raise UsageError(f'laws live in {a.points.shape[1]}D and {b.points.shape[1]}D')
    return cdist(a.points, b.points, 'sqeuclidean')


def _is_uniform(w):
    return bool(np.all(w == w[0]))


def w2_exact(a: EmpiricalLaw, b: EmpiricalLaw, max_pairs=MAX_PAIRS):
    '''exact squared-W2 coupling

    Equal-size uniform laws are solved as an assignment problem
    (shortest augmenting path), everything else by network simplex.
    '''
    n, m = a.size, b.size
    if n * m > max_pairs:
        raise CapacityError(f'{n}x{m} pairs exceed the exact solver cap of {max_pairs}, '
                            'use w2_entropic instead')
    C = _cost_matrix(a, b)
    if n == m and _is_uniform(a.weights) and _is_uniform(b.weights):
        rows, cols = linear_sum_assignment(C)
        mass = np.full(n, 1. / n)
        iters = n
    else:
        P, log = ot.emd(a.weights, b.weights, C, numItermax=10_000_000, log=True)
        if log.get('warning'):
            logger.warning('network simplex: %s', log['warning'])
        rows, cols = np.nonzero(P > 0)
        mass = P[rows, cols]
        iters = 0
    cost = float(np.sum(mass * C[rows, cols]))
    return CouplingResult(cost, rows, cols, mass, 'exact', iters, 1e-8)


@jit
def _sinkhorn(loga, logb, C, f, g, reg, max_iters, tol):
    lse_rows = lambda f, g: logsumexp((f[:, None] + g[None, :] - C) / reg, axis=1)
    lse_cols = lambda f, g: logsumexp((f[:, None] + g[None, :] - C) / reg, axis=0)

    def body(state):
        f, g, it, _ = state
        f = f + reg * (loga - lse_rows(f, g))
        g = g + reg * (logb - lse_cols(f, g))
        err = jnp.sum(jnp.abs(jnp.exp(lse_rows(f, g)) - jnp.exp(loga)))
        return f, g, it + 1, err

    def cond(state):
        _, _, it, err = state
        return (it < max_iters) & (err > tol)

    return lax.while_loop(cond, body, (f, g, jnp.array(0), jnp.array(jnp.inf)))


def w2_entropic(a: EmpiricalLaw, b: EmpiricalLaw, reg, max_iters=20000, tol=1e-7,
                scaling=True, stage_iters=50):
    '''log-domain Sinkhorn coupling

    The returned cost is the transport cost of the entropic plan, an upper
    bound of the exact squared W2 (no debiasing). With `scaling`, the
    regularization is annealed geometrically from the cost scale down to
    `reg`, warm starting the potentials at each stage.

    Args:
        a, b: empirical laws
        reg: absolute regularization, in squared distance units
        max_iters: iteration cap of the final stage
        tol: L1 marginal tolerance
    '''
    if not reg > 0:
        raise DomainError(f'reg must be positive, got {reg}')
    C = _cost_matrix(a, b)
    ia, ib = np.nonzero(a.weights > 0)[0], np.nonzero(b.weights > 0)[0]
    Cs = jnp.asarray(C[np.ix_(ia, ib)])
    loga, logb = jnp.log(a.weights[ia]), jnp.log(b.weights[ib])
    regs = [reg]
    if scaling:
        r = float(C.max())
        while r > 2 * reg:
            regs.insert(-1, r)
            r /= 2
    f, g = jnp.zeros(len(ia)), jnp.zeros(len(ib))
    total = 0
    for k, r in enumerate(regs):
        final = k == len(regs) - 1
        f, g, it, err = _sinkhorn(loga, logb, Cs, f, g, r, max_iters if final else stage_iters, tol)
        total += int(it)
    err = float(err)
    P = np.asarray(jnp.exp((f[:, None] + g[None, :] - Cs) / reg))
    cost = float(np.sum(P * np.asarray(Cs)))
    r, c = np.nonzero(P > 1e-12 * P.max())
    converged = err <= tol
    if not converged:
        logger.warning('sinkhorn stopped at marginal residual %.3e after %d iterations', err, total)
    return CouplingResult(cost, ia[r], ib[c], P[r, c], 'entropic', total, tol, converged, err)


def map_l2(map1, map2, mu_samples):
    '''root mean square distance between two point maps over the samples'''
    x = np.asarray(mu_samples, dtype=float)
    y1 = np.asarray(map1(x), dtype=float).reshape(x.shape[0], -1)
    y2 = np.asarray(map2(x), dtype=float).reshape(x.shape[0], -1)
    return float(np.sqrt(np.mean(np.sum((y1 - y2)**2, axis=-1))))


def w2_samples(x, y, max_pairs=MAX_PAIRS):
    '''exact W2 between two uniform sample sets'''
    return w2_exact(empirical(x), empirical(y), max_pairs).w2


def bootstrap_stderr(stat, arrays, resamples=200, seed=0, paired=True):
    '''bootstrap standard error of stat(*arrays)

    Paired resampling draws one index set shared by all arrays (they must
    have equal length), otherwise each array is resampled independently.
    '''
    arrays = [np.asarray(a) for a in arrays]
    rng = np.random.default_rng(seed)
    values = []
    for _ in range(resamples):
        if paired:
            idx = rng.integers(0, len(arrays[0]), len(arrays[0]))
            values.append(stat(*[a[idx] for a in arrays]))
        else:
            values.append(stat(*[a[rng.integers(0, len(a), len(a))] for a in arrays]))
    return float(np.std(values, ddof=1))


def report_entry(metric, value, method, sizes, seed):
    if isinstance(value, CouplingResult):
        method = value.method if method is None else method
        value = value.w2
    return {'metric': metric, 'value': float(value), 'method': method,
            'sizes': [int(s) for s in sizes], 'seed': seed}
