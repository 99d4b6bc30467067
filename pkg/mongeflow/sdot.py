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
import jax
import numpy as np
from functools import partial
from jax import numpy as jnp, random, jit
from scipy.spatial.distance import pdist
from flax import struct
from typing import Any, NamedTuple, Optional, Tuple
from mongeflow import mixture as mx, metrics, optim
from mongeflow.errors import ArtifactError, DomainError
from mongeflow.util import prng_key, split_sizes, parallel_map, dump_json, load_json


logger = logging.getLogger(__name__)

Array = Any


@struct.dataclass
class BrenierPotential:
    '''u_h(z) = max_i <z, y_i> + h_i from `source` onto the target cloud'''
    targets: mx.PointCloud
    heights: Array
    source: mx.MixtureMarginal


@struct.dataclass
class CellStats:
    measures: Array
    centroids: Array
    counts: Array
    sample_count: int = struct.field(pytree_node=False, default=0)
    seed: int = struct.field(pytree_node=False, default=0)

    @property
    def empty(self):
        return np.asarray(self.counts) == 0


class FitReport(NamedTuple):
    iters: int
    residual: float
    converged: bool
    tol: float
    mc_samples: int
    seed: int
    method: str
    lr: float
    empty_cells: Tuple[int, ...] = ()
    empty_events: int = 0
    history: Tuple[float, ...] = ()
    tv_residual: float = 0.
    refine_iters: int = 0
    refine_samples: int = 0

    def to_dict(self):
        return {'iters': self.iters, 'residual': self.residual, 'converged': self.converged,
                'tol': self.tol, 'mc_samples': self.mc_samples, 'seed': self.seed,
                'method': self.method, 'lr': self.lr, 'empty_cells': list(self.empty_cells),
                'empty_events': self.empty_events, 'tv_residual': self.tv_residual,
                'refine_iters': self.refine_iters, 'refine_samples': self.refine_samples}


class FitResult(NamedTuple):
    potential: BrenierPotential
    stats: CellStats
    report: FitReport


class Pushforward(NamedTuple):
    points: Array
    latents: Array
    indices: Array
    labels: Optional[Array]


def gauge_normalize(h):
    h = np.asarray(h, dtype=float)
    return h - h.mean()


def make_potential(targets: mx.PointCloud, heights=None, source: mx.MixtureMarginal = None):
    if source is None:
        source = mx.standard_normal(targets.dim)
    if source.cloud.dim != targets.dim:
        raise DomainError(f'source is {source.cloud.dim}D, targets are {targets.dim}D')
    heights = np.zeros(targets.size) if heights is None else np.asarray(heights, dtype=float)
    if heights.shape != (targets.size,) or not np.all(np.isfinite(heights)):
        raise DomainError(f'expect {targets.size} finite heights, got shape {heights.shape}')
    return BrenierPotential(targets, gauge_normalize(heights), source)


@jit
def _assign(Y, h, z):
    # argmax returns the first maximizer, i.e. the lowest index on ties
    return jnp.argmax(z @ Y.T + h, axis=1)


def _as_batch(potential, z):
    z = jnp.asarray(z, dtype=float)
    return z.reshape(-1, potential.targets.dim), z.ndim == 1


def assign(potential: BrenierPotential, z):
    '''index of the power cell containing z'''
    zb, single = _as_batch(potential, z)
    idx = _assign(jnp.asarray(potential.targets.points), jnp.asarray(potential.heights), zb)
    return idx[0] if single else idx


def upper_envelope(potential: BrenierPotential, z):
    zb, single = _as_batch(potential, z)
    u = jnp.max(zb @ jnp.asarray(potential.targets.points).T + jnp.asarray(potential.heights), axis=1)
    return u[0] if single else u


@partial(jit, static_argnums=(6,))
def _cell_sums(Y, h, means, scale, var, key, count):
    z, _ = mx._sample(means, scale, var, key, count)
    idx = _assign(Y, h, z)
    counts = jax.ops.segment_sum(jnp.ones(count), idx, num_segments=Y.shape[0])
    sums = jax.ops.segment_sum(z, idx, num_segments=Y.shape[0])
    return counts, sums


def _accumulate(potential, mc_samples, key, workers, chunk):
    Y = jnp.asarray(potential.targets.points)
    h = jnp.asarray(potential.heights)
    src = potential.source
    means = jnp.asarray(src.cloud.points)
    jobs = list(enumerate(split_sizes(mc_samples, chunk)))
    run = lambda job: _cell_sums(Y, h, means, src.mean_scale, src.variance,
                                 random.fold_in(key, job[0]), job[1])
    counts = np.zeros(potential.targets.size)
    sums = np.zeros(potential.targets.points.shape)
    # per-chunk streams, summed in chunk order regardless of worker count
    for c, s in parallel_map(run, jobs, workers):
        counts += np.asarray(c)
        sums += np.asarray(s)
    return counts, sums


@partial(jit, static_argnums=(6,))
def _top_two_gap(Y, h, means, scale, var, key, count):
    z, _ = mx._sample(means, scale, var, key, count)
    s, _ = jax.lax.top_k(z @ Y.T + h, 2)
    return s[:, 0] - s[:, 1]


@partial(jit, static_argnums=(7,))
def _cell_sums_band(Y, h, means, scale, var, key, band, count):
    z, _ = mx._sample(means, scale, var, key, count)
    # top_k keeps the lower index first on ties, as argmax does
    s, idx = jax.lax.top_k(z @ Y.T + h, 2)
    K = Y.shape[0]
    counts = jax.ops.segment_sum(jnp.ones(count), idx[:, 0], num_segments=K)
    sums = jax.ops.segment_sum(z, idx[:, 0], num_segments=K)
    near = (s[:, 0] - s[:, 1] < band).astype(z.dtype)
    pairs = jax.ops.segment_sum(near, idx[:, 0] * K + idx[:, 1], num_segments=K * K)
    return counts, sums, pairs.reshape(K, K)


def _source_args(potential):
    src = potential.source
    return (jnp.asarray(potential.targets.points), jnp.asarray(potential.heights),
            jnp.asarray(src.cloud.points), src.mean_scale, src.variance)


def facet_band(potential: BrenierPotential, key, count, quantile=0.05):
    '''score gap below which a `quantile` fraction of source draws sit near a facet'''
    gap = _top_two_gap(*_source_args(potential), key, int(count))
    return float(np.quantile(np.asarray(gap), quantile))


def cell_hessian(potential: BrenierPotential, mc_samples, key, band, workers=1, chunk=32768):
    '''cell counts, centroid sums and the Jacobian of the cell measures in the heights

    dw_i/dh_j = -int_{facet ij} rho / |y_i - y_j| for i != j, estimated from
    the source mass whose two best scores differ by less than `band`; the
    rows sum to zero.
    '''
    args = _source_args(potential)
    jobs = list(enumerate(split_sizes(mc_samples, chunk)))
    run = lambda job: _cell_sums_band(*args, random.fold_in(key, job[0]), band, job[1])
    K = potential.targets.size
    counts, sums, pairs = np.zeros(K), np.zeros(potential.targets.points.shape), np.zeros((K, K))
    for c, s, p in parallel_map(run, jobs, workers):
        counts += np.asarray(c)
        sums += np.asarray(s)
        pairs += np.asarray(p)
    H = (pairs + pairs.T) / (2. * band * mc_samples)
    np.fill_diagonal(H, 0.)
    return counts, sums, np.diag(H.sum(axis=1)) - H


def _stats(counts, sums, mc_samples, seed):
    measures = counts / mc_samples
    with np.errstate(invalid='ignore', divide='ignore'):
        centroids = np.where(counts[:, None] > 0, sums / counts[:, None], np.nan)
    return CellStats(measures, centroids, counts, int(mc_samples), seed)


def estimate_cells(potential: BrenierPotential, mc_samples, seed, workers=1, chunk=32768):
    '''Monte Carlo cell measures and centroids; empty cells get NaN centroids'''
    if mc_samples < 1:
        raise DomainError(f'mc_samples must be positive, got {mc_samples}')
    if mc_samples < potential.targets.size:
        logger.warning('%d samples for %d cells', mc_samples, potential.targets.size)
    counts, sums = _accumulate(potential, int(mc_samples), prng_key(seed), workers, chunk)
    return _stats(counts, sums, mc_samples, seed if isinstance(seed, int) else -1)


def default_step_size(targets: mx.PointCloud, method='adam'):
    '''2% of the target diameter for adam, 1% of it times |I| for sgd'''
    if targets.size < 2:
        return 1.
    lr = 0.02 * float(pdist(np.asarray(targets.points)).max())
    return 0.5 * lr * targets.size if method == 'sgd' else lr


def fit(targets: mx.PointCloud, source: mx.MixtureMarginal = None, tol=5e-3, mc_samples=None,
        max_iters=2000, seed=0, lr=None, method='adam', workers=1, chunk=32768, log_every=50,
        refine_iters=0, refine_samples=None):
    '''fit the heights so every power cell carries mass 1/|I|

    Gradient steps on the dual energy, whose gradient is w(h) - 1/|I|, with
    step size lr / sqrt(1 + k). Cell measures are re-estimated at every
    iteration from fresh source draws.

    The max-norm stop leaves residuals of one sign spread over whole groups
    of cells. With `refine_iters` > 0 a converged fit continues with Newton
    steps on the cell measures (see `cell_hessian`) at `refine_samples`
    draws each; the second half of those iterates is averaged and kept when
    it still meets `tol`.

    Args:
        targets: target cloud
        source: source law, standard normal when omitted
        tol: stop once max_i |w_i - 1/|I|| <= tol
        mc_samples: draws per iteration, 4000 |I| when omitted
        max_iters: iteration cap
        seed: integer seed
        lr: base step size, see `default_step_size`
        method: 'adam' or 'sgd'
        refine_iters: Newton steps after convergence
        refine_samples: draws per Newton step, 8 mc_samples when omitted

    Returns:
        FitResult of the gauge-normalized potential, its cell statistics and
        the fit report. Without convergence the best iterate is returned and
        ``report.converged`` is False.
    '''
    if not tol > 0:
        raise DomainError(f'tol must be positive, got {tol}')
    if method not in optim.OPTIMIZERS:
        raise DomainError('invalid method %s' % method)
    K = targets.size
    nu = 1. / K
    mc_samples = 4000 * K if mc_samples is None else int(mc_samples)
    lr = default_step_size(targets, method) if lr is None else float(lr)
    potential = make_potential(targets, source=source)
    step_size = optim.inverse_sqrt_decay(lr)
    opt = optim.OPTIMIZERS[method](step_size)
    state = opt.init_fn(jnp.zeros(K))
    offset = np.zeros(K)
    key = prng_key(seed)

    best = None
    history = []
    empty_events = 0
    converged = False
    k = 0
    for k in range(max_iters):
        h = gauge_normalize(np.asarray(opt.params_fn(state)) + offset)
        potential = potential.replace(heights=h)
        counts, sums = _accumulate(potential, mc_samples, random.fold_in(key, k), workers, chunk)
        w = counts / mc_samples
        residual = float(np.abs(w - nu).max())
        history.append(residual)
        if best is None or residual < best[0]:
            best = (residual, potential, counts, sums)
        if k % log_every == 0:
            logger.info('sdot iter %d residual %.3e', k, residual)
        if residual <= tol:
            converged = True
            break
        state = opt.update_fn(k, jnp.asarray(w - nu), state)
        empty = counts == 0
        if empty.any():
            # an empty cell has no gradient signal left to balance, push it up directly
            offset[empty] += float(step_size(k)) / K
            empty_events += int(empty.sum())
            logger.debug('iter %d: %d empty cells', k, int(empty.sum()))

    iters, used = k + 1, mc_samples
    refine_iters = int(refine_iters) if converged and K > 1 else 0
    refine_samples = 8 * mc_samples if refine_samples is None else int(refine_samples)
    if refine_iters > 0:
        diam = float(pdist(np.asarray(targets.points)).max())
        cand, c, s, hist = _refine(best[1], refine_iters, refine_samples,
                                   random.fold_in(key, max_iters), 0.1 * diam, workers, chunk)
        history.extend(hist)
        iters += refine_iters
        r = float(np.abs(c / refine_samples - nu).max())
        if r <= tol:
            best, used = (r, cand, c, s), refine_samples
        else:
            logger.warning('refined heights miss tol at residual %.3e, keeping the gradient iterate', r)

    residual, potential, counts, sums = best
    stats = _stats(counts, sums, used, seed if isinstance(seed, int) else -1)
    tv = 0.5 * float(np.abs(counts / used - nu).sum())
    report = FitReport(iters, residual, converged, float(tol), mc_samples,
                       seed if isinstance(seed, int) else -1, method, lr,
                       tuple(int(i) for i in np.nonzero(counts == 0)[0]),
                       empty_events, tuple(history), tv, refine_iters,
                       refine_samples if refine_iters else 0)
    if not converged:
        logger.warning('sdot fit stopped after %d iterations at residual %.3e', iters, residual)
    else:
        logger.info('sdot fit: residual %.3e, tv %.3e after %d iterations', residual, tv, iters)
    return FitResult(potential, stats, report)


def _refine(potential, iters, samples, key, max_step, workers, chunk):
    '''Newton steps h <- h + J^+ (1/|I| - w), the second half of the iterates averaged'''
    K = potential.targets.size
    nu = 1. / K
    h = np.asarray(potential.heights)
    tail, history = [], []
    for j in range(iters):
        kb, kc = random.split(random.fold_in(key, j))
        current = potential.replace(heights=h)
        band = facet_band(current, kb, min(samples, chunk))
        if not band > 0:
            logger.warning('degenerate facet band at refinement step %d', j)
            break
        counts, _, J = cell_hessian(current, samples, kc, band, workers, chunk)
        w = counts / samples
        history.append(float(np.abs(w - nu).max()))
        step = np.linalg.lstsq(J, nu - w, rcond=None)[0]
        size = np.abs(step).max()
        if not np.isfinite(size):
            logger.warning('singular cell Jacobian at refinement step %d', j)
            break
        if size > max_step:
            step *= max_step / size
        h = gauge_normalize(h + step)
        if 2 * j >= iters - 1:
            tail.append(h)
        logger.debug('refine %d: residual %.3e, band %.3e, step %.3e', j, history[-1], band, size)
    if tail:
        h = gauge_normalize(np.mean(tail, axis=0))
    refined = potential.replace(heights=h)
    counts, sums = _accumulate(refined, samples, random.fold_in(key, iters), workers, chunk)
    return refined, counts, sums, history


def pushforward(potential: BrenierPotential, count, seed):
    '''draws z from the source and maps them to their cell targets'''
    z = mx.sample(potential.source, count, seed)
    idx = np.asarray(assign(potential, z)) if count else np.zeros(0, dtype=int)
    labels = potential.targets.labels
    return Pushforward(np.asarray(potential.targets.points)[idx], np.asarray(z), idx,
                       None if labels is None else np.asarray(labels)[idx])


def boundaries_1d(potential: BrenierPotential):
    '''breakpoints of the 1D upper envelope and the active cells in increasing z order'''
    if potential.targets.dim != 1:
        raise DomainError('1D potential expected, got dim %d' % potential.targets.dim)
    y = np.asarray(potential.targets.points)[:, 0]
    h = np.asarray(potential.heights)
    stack = []
    for i in np.argsort(y, kind='stable'):
        skip = False
        while stack:
            j = stack[-1]
            if y[i] == y[j]:
                if h[i] > h[j]:
                    stack.pop()
                    continue
                skip = True
                break
            x = (h[j] - h[i]) / (y[i] - y[j])
            if len(stack) >= 2 and x <= (h[stack[-2]] - h[j]) / (y[j] - y[stack[-2]]):
                stack.pop()
                continue
            break
        if not skip:
            stack.append(i)
    active = np.asarray(stack, dtype=int)
    breaks = (h[active[:-1]] - h[active[1:]]) / (y[active[1:]] - y[active[:-1]])
    return breaks, active


def exact_heights_1d(targets: mx.PointCloud, source: mx.MixtureMarginal = None):
    '''heights of the monotone rearrangement of the source onto the targets'''
    if targets.dim != 1:
        raise DomainError('1D targets expected, got dim %d' % targets.dim)
    source = mx.standard_normal(1) if source is None else source
    y = np.asarray(targets.points)[:, 0]
    order = np.argsort(y)
    ys = y[order]
    if np.any(np.diff(ys) == 0):
        raise DomainError('duplicate 1D targets have no unique heights')
    K = len(y)
    b = mx.quantile_1d(source, np.arange(1, K) / K)
    hs = np.concatenate([[0.], -np.cumsum(b * np.diff(ys))])
    h = np.empty(K)
    h[order] = hs
    return gauge_normalize(h)


def prior_error(potential: BrenierPotential, mc_samples=None, seed=0, workers=1):
    '''exact W2 between the pushforward law sum_i w_i delta_{y_i} and the uniform target law

    The cell measures are Monte Carlo estimates, so the result carries a floor
    of order diam (|I| / mc_samples)^(1/4); the default is 64000 |I| draws.
    '''
    mc_samples = 64000 * potential.targets.size if mc_samples is None else mc_samples
    stats = estimate_cells(potential, mc_samples, seed, workers)
    keep = stats.measures > 0
    Y = np.asarray(potential.targets.points)
    return metrics.w2_exact(metrics.empirical(Y[keep], stats.measures[keep]),
                            metrics.empirical(Y))


def source_to_dict(source: mx.MixtureMarginal):
    if np.isinf(source.t):
        return {'kind': 'standard_normal', 'dim': source.cloud.dim}
    return {'kind': 'mixture', 'points': source.cloud.points, 't': source.t,
            'mean_scale': source.mean_scale, 'variance': source.variance}


def source_from_dict(d):
    if d['kind'] == 'standard_normal':
        return mx.standard_normal(int(d['dim']))
    if d['kind'] == 'mixture':
        return mx.MixtureMarginal(mx.make_cloud(d['points']), float(d['t']),
                                  float(d['mean_scale']), float(d['variance']))
    raise ArtifactError('unknown source kind %s' % d['kind'])


def potential_to_dict(potential: BrenierPotential, report: FitReport = None, **meta):
    t = potential.targets
    d = {'dim': t.dim, 'targets': t.points, 'heights': potential.heights,
         'labels': None if t.labels is None else t.labels,
         'source': source_to_dict(potential.source),
         'fit_report': None if report is None else report.to_dict()}
    d.update(meta)
    return d


def save_potential(path, potential: BrenierPotential, report: FitReport = None, **meta):
    dump_json(potential_to_dict(potential, report, **meta), path)


def load_potential(path):
    '''returns the potential and the raw JSON document'''
    d = load_json(path)
    try:
        targets = mx.make_cloud(d['targets'], d.get('labels'))
        heights = np.asarray(d['heights'], dtype=float)
        source = source_from_dict(d['source'])
        dim = int(d['dim'])
    except (KeyError, TypeError, ValueError) as e:
        raise ArtifactError(f'{path}: malformed potential ({e!r})')
    if targets.dim != dim or heights.shape != (targets.size,) or not np.all(np.isfinite(heights)):
        raise ArtifactError(f'{path}: inconsistent potential dimensions')
    if abs(heights.sum()) > 1e-9 * (1. + np.abs(heights).max()):
        raise ArtifactError(f'{path}: heights violate the gauge sum(h) = 0 (sum {heights.sum():.3e})')
    return BrenierPotential(targets, heights, source), d
