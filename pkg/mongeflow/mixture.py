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
import pandas as pd
import jax
from functools import partial
from jax import numpy as jnp, random, jit
from jax.scipy.special import logsumexp
from scipy import special
from flax import struct
from typing import Any, Optional
from mongeflow import schedule as sch
from mongeflow.errors import ArtifactError, DomainError, SingularityError, UsageError
from mongeflow.util import prng_key


Array = Any


@struct.dataclass
class PointCloud:
    points: Array
    labels: Optional[Array] = None

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def size(self):
        return self.points.shape[0]


@struct.dataclass
class MixtureMarginal:
    '''uniform Gaussian mixture N(m x_i, sigma^2 I) over the cloud points'''
    cloud: PointCloud
    t: float
    mean_scale: float
    variance: float


def make_cloud(points, labels=None):
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if points.ndim != 2 or points.shape[0] == 0 or points.shape[1] == 0:
        raise DomainError(f'expect a nonempty (count, dim) array, got shape {points.shape}')
    if not np.all(np.isfinite(points)):
        raise DomainError('point cloud contains non-finite coordinates')
    if labels is not None:
        labels = np.asarray(labels)
        if labels.shape != (points.shape[0],):
            raise DomainError(f'expect {points.shape[0]} labels, got shape {labels.shape}')
        if not np.issubdtype(labels.dtype, np.integer):
            if not np.all(np.mod(labels, 1) == 0):
                raise DomainError('labels must be integers')
            labels = labels.astype(int)
    return PointCloud(points, labels)


def read_cloud_csv(path):
    '''read "x0,x1,...[,label]" rows; errors name the offending line'''
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise ArtifactError(f'{path}: empty CSV')
    except pd.errors.ParserError as e:
        raise ArtifactError(f'{path}: {e}')
    except UnicodeDecodeError as e:
        raise ArtifactError(f'{path}: not a text file ({e})')

    columns = list(df.columns)
    has_label = bool(columns) and columns[-1] == 'label'
    coords = columns[:-1] if has_label else columns
    if not coords or coords != ['x%d' % i for i in range(len(coords))]:
        raise ArtifactError(f'{path}: line 1: expect header x0,x1,...[,label], got {",".join(columns)}')
    if len(df) == 0:
        raise ArtifactError(f'{path}: no points')

    points = np.empty((len(df), len(coords)))
    labels = np.empty(len(df), dtype=int) if has_label else None
    for row, values in enumerate(df.itertuples(index=False)):
        try:
            points[row] = [float(v) for v in values[:len(coords)]]
            if has_label:
                labels[row] = int(values[-1])
        except ValueError:
            raise ArtifactError(f'{path}: line {row + 2}: cannot parse {",".join(values)}')
    try:
        return make_cloud(points, labels)
    except DomainError as e:
        raise ArtifactError(f'{path}: {e}')


def write_cloud_csv(cloud: PointCloud, path, extra=None):
    '''17 significant digits, bit exact on re-read'''
    df = pd.DataFrame(np.asarray(cloud.points), columns=['x%d' % i for i in range(cloud.dim)])
    if cloud.labels is not None:
        df['label'] = np.asarray(cloud.labels)
    for k, v in (extra or {}).items():
        df[k] = np.asarray(v)
    df.to_csv(path, index=False, float_format='%.17g')


def marginal(schedule: sch.NoiseSchedule, cloud: PointCloud, t):
    if not t > 0:
        raise SingularityError(f'marginal undefined at t={t}, query t >= eps instead')
    sch.check_time(schedule, t)
    t = float(t)
    return MixtureMarginal(cloud, t,
                           float(sch._mean_scale(schedule, t)),
                           float(sch._variance(schedule, t)))


def standard_normal(dim):
    '''p_infinity as the degenerate mixture m = 0, sigma^2 = 1'''
    return MixtureMarginal(make_cloud(np.zeros((1, dim))), float('inf'), 0., 1.)


def _as_batch(x, dim):
    x = jnp.asarray(x, dtype=float)
    single = x.ndim == 1
    x = x.reshape(-1, dim)
    return x, single


@jit
def _log_components(means, scale, var, x):
    mu = scale * means
    d = means.shape[1]
    sq = jnp.sum((x[:, None, :] - mu[None, :, :])**2, axis=-1)
    return -sq / (2 * var) - 0.5 * d * jnp.log(2 * jnp.pi * var) - jnp.log(means.shape[0])


@jit
def _log_density(means, scale, var, x):
    return logsumexp(_log_components(means, scale, var, x), axis=1)


@jit
def _score(means, scale, var, x):
    r = jax.nn.softmax(_log_components(means, scale, var, x), axis=1)
    return (r @ (scale * means) - x) / var


def _field(schedule, means, x, t):
    '''probability flow velocity -f x - g^2/2 score at (traced) time t'''
    b = sch.beta(schedule, t)
    s = _score(means, sch._mean_scale(schedule, t), sch._variance(schedule, t), x)
    return -0.5 * b * x - 0.5 * b * s


def _unpack(marginal):
    if not marginal.variance > 0:
        raise SingularityError(f'marginal at t={marginal.t} has zero variance')
    return jnp.asarray(marginal.cloud.points), marginal.mean_scale, marginal.variance


def log_density(marginal: MixtureMarginal, x):
    means, m, v = _unpack(marginal)
    x, single = _as_batch(x, marginal.cloud.dim)
    y = _log_density(means, m, v, x)
    return y[0] if single else y


def density(marginal: MixtureMarginal, x):
    return jnp.exp(log_density(marginal, x))


def responsibilities(marginal: MixtureMarginal, x):
    means, m, v = _unpack(marginal)
    x, single = _as_batch(x, marginal.cloud.dim)
    r = jax.nn.softmax(_log_components(means, m, v, x), axis=1)
    return r[0] if single else r


def score(marginal: MixtureMarginal, x):
    '''sum_i r_i(x) (m x_i - x) / sigma^2'''
    means, m, v = _unpack(marginal)
    x, single = _as_batch(x, marginal.cloud.dim)
    y = _score(means, m, v, x)
    return y[0] if single else y


def velocity(schedule: sch.NoiseSchedule, marginal: MixtureMarginal, x, t=None):
    if t is None:
        t = marginal.t
    elif not np.isclose(t, marginal.t, rtol=1e-12, atol=0.):
        raise UsageError(f'marginal lives at t={marginal.t}, velocity queried at t={t}')
    if not t > 0:
        raise SingularityError(f'velocity undefined at t={t}')
    f, g = sch.coefficients(schedule, t)
    return -f * jnp.asarray(x, dtype=float) - 0.5 * g**2 * score(marginal, x)


@partial(jit, static_argnums=(4,))
def _sample(means, scale, var, key, count):
    kc, kn = random.split(key)
    idx = random.randint(kc, (count,), 0, means.shape[0])
    noise = random.normal(kn, (count, means.shape[1]))
    return scale * means[idx] + jnp.sqrt(var) * noise, idx


def sample(marginal: MixtureMarginal, count, seed, return_index=False):
    '''ancestral sampling: uniform component, then Gaussian noise'''
    if count < 0:
        raise DomainError(f'count must be nonnegative, got {count}')
    means = jnp.asarray(marginal.cloud.points)
    if count == 0:
        x, idx = jnp.zeros((0, marginal.cloud.dim)), jnp.zeros((0,), dtype=int)
    else:
        x, idx = _sample(means, marginal.mean_scale, marginal.variance, prng_key(seed), int(count))
    return (x, idx) if return_index else x


def _components_1d(marginal):
    if marginal.cloud.dim != 1:
        raise DomainError('1D marginal expected, got dim %d' % marginal.cloud.dim)
    mu = marginal.mean_scale * np.asarray(marginal.cloud.points)[:, 0]
    return mu, np.sqrt(marginal.variance)


def cdf_1d(marginal: MixtureMarginal, x):
    mu, s = _components_1d(marginal)
    x = np.asarray(x, dtype=float)
    return special.ndtr((x[..., None] - mu) / s).mean(-1)


def sf_1d(marginal: MixtureMarginal, x):
    '''1 - cdf, accurate in the right tail'''
    mu, s = _components_1d(marginal)
    x = np.asarray(x, dtype=float)
    return special.ndtr((mu - x[..., None]) / s).mean(-1)


def pdf_1d(marginal: MixtureMarginal, x):
    mu, s = _components_1d(marginal)
    z = (np.asarray(x, dtype=float)[..., None] - mu) / s
    return (np.exp(-0.5 * z**2) / (s * np.sqrt(2 * np.pi))).mean(-1)


def quantile_1d(marginal: MixtureMarginal, p, newton_steps=3):
    '''bracketed bisection + Newton polish of cdf_1d'''
    p = np.asarray(p, dtype=float)
    if not np.all((p > 0) & (p < 1)):
        raise DomainError(f'quantile level must lie in (0, 1), got {p}')
    mu, s = _components_1d(marginal)
    # every component cdf is <= p at lo and >= p at hi
    zp = special.ndtri(p)
    lo = mu.min() + s * zp
    hi = mu.max() + s * zp
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = cdf_1d(marginal, mid) < p
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= 4 * np.spacing(np.maximum(np.abs(lo), np.abs(hi)))):
            break
    q = 0.5 * (lo + hi)
    for _ in range(newton_steps):
        r = cdf_1d(marginal, q) - p
        d = pdf_1d(marginal, q)
        qn = np.where(d > 0, q - r / np.where(d > 0, d, 1.), q)
        better = (qn >= lo) & (qn <= hi) & (np.abs(cdf_1d(marginal, qn) - p) < np.abs(r))
        q = np.where(better, qn, q)
    return q
