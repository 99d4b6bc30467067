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
from itertools import combinations
from jax import random
from scipy.spatial import Delaunay
try:
    from scipy.spatial import QhullError
except ImportError:
    from scipy.spatial.qhull import QhullError
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from flax import struct
from typing import Any, NamedTuple
from mongeflow import mixture as mx, sdot
from mongeflow.errors import ArtifactError, CoverageError, DegeneracyError, DomainError, UsageError
from mongeflow.util import prng_key, dump_json, load_json


logger = logging.getLogger(__name__)

Array = Any


@struct.dataclass
class LatentComplex:
    '''pruned triangulation of the cell centroids

    components[i] is the component id of centroid i, -1 when isolated;
    component_labels[k] is the target label shared by component k, or k
    itself for unlabeled targets.
    '''
    centroids: Array
    simplices: Array
    kept_edges: Array
    components: Array
    component_labels: Array
    angle_threshold: float = struct.field(pytree_node=False, default=np.pi / 2)

    @property
    def dim(self):
        return self.centroids.shape[1]

    @property
    def simplex_components(self):
        return self.components[self.simplices[:, 0]] if len(self.simplices) else np.zeros(0, dtype=int)


class BarycentricSamples(NamedTuple):
    points: Array
    latents: Array
    weights: Array
    simplices: Array
    labels: Array
    rejection_rate: float
    draws: int


def _edges(simplices):
    if len(simplices) == 0:
        return np.zeros((0, 2), dtype=int)
    pairs = [np.sort(simplices[:, [a, b]], axis=1)
             for a, b in combinations(range(simplices.shape[1]), 2)]
    return np.unique(np.concatenate(pairs), axis=0)


def triangulate(centroids, tol=1e-10):
    '''Delaunay simplices of the centroids, sorted segments in 1D'''
    C = np.asarray(centroids, dtype=float)
    K, n = C.shape
    if K < n + 1:
        logger.info('%d centroids cannot span a %dD simplex', K, n)
        return np.zeros((0, n + 1), dtype=int)
    scale = max(1., np.abs(C).max())
    if n == 1:
        order = np.argsort(C[:, 0], kind='stable')
        if np.any(np.diff(C[order, 0]) <= tol * scale):
            raise DegeneracyError('coincident 1D centroids')
        return np.stack([order[:-1], order[1:]], axis=1)
    sv = np.linalg.svd(C - C.mean(0), compute_uv=False)
    if sv[-1] <= tol * max(sv[0], tol):
        raise DegeneracyError(f'centroids span fewer than {n} dimensions '
                              f'(singular values {sv.tolist()})')
    try:
        tri = Delaunay(C)
    except QhullError as e:
        raise DegeneracyError(f'triangulation failed: {e}')
    if len(tri.coplanar):
        logger.warning('%d centroids left out of the triangulation', len(tri.coplanar))
    return np.asarray(tri.simplices, dtype=int)


def target_angles(targets, edges):
    '''angle between the targets at both ends of every edge, 0 at the origin'''
    Y = np.asarray(targets, dtype=float)
    a, b = Y[edges[:, 0]], Y[edges[:, 1]]
    na, nb = np.linalg.norm(a, axis=1), np.linalg.norm(b, axis=1)
    denom = na * nb
    cos = np.where(denom > 0, np.sum(a * b, axis=1) / np.where(denom > 0, denom, 1.), 1.)
    return np.arccos(np.clip(cos, -1., 1.))


def _components(K, edges):
    comp = -np.ones(K, dtype=int)
    if len(edges) == 0:
        return comp
    g = coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(K, K))
    _, raw = connected_components(g, directed=False)
    touched = np.zeros(K, dtype=bool)
    touched[edges.ravel()] = True
    # renumber by smallest member index
    ids = {}
    for i in range(K):
        if touched[i]:
            comp[i] = ids.setdefault(raw[i], len(ids))
    return comp


def build_complex(potential: sdot.BrenierPotential, stats: sdot.CellStats,
                  angle_threshold=np.pi / 2):
    '''triangulate centroids and drop edges whose targets subtend more than `angle_threshold`

    Edges joining differently labeled targets are dropped as well, so every
    component is label homogeneous. Simplices lose membership as soon as one
    of their edges is dropped.
    '''
    n = potential.targets.dim
    if n not in (1, 2, 3):
        raise UsageError('latent complexes are built in 1, 2 or 3 dimensions, got %d' % n)
    if stats.empty.any():
        raise UsageError(f'empty cells {np.nonzero(stats.empty)[0].tolist()}, refit first')
    C = np.asarray(stats.centroids, dtype=float)
    Y = np.asarray(potential.targets.points)
    K = len(C)

    simplices = triangulate(C)
    edges = _edges(simplices)
    keep = target_angles(Y, edges) <= angle_threshold
    labels = potential.targets.labels
    if labels is not None and len(edges):
        labels = np.asarray(labels)
        same = labels[edges[:, 0]] == labels[edges[:, 1]]
        if np.any(keep & ~same):
            logger.info('dropped %d cross-label edges', int(np.sum(keep & ~same)))
        keep &= same
    kept = edges[keep]

    kept_set = set(map(tuple, kept.tolist()))
    retained = [s for s in simplices
                if all(tuple(e) in kept_set for e in _edges(s[None]).tolist())]
    retained = np.asarray(retained, dtype=int).reshape(-1, n + 1)

    comp = _components(K, kept)
    ncomp = comp.max() + 1
    if labels is not None:
        comp_labels = np.asarray([labels[np.nonzero(comp == k)[0][0]] for k in range(ncomp)], dtype=int)
    else:
        comp_labels = np.arange(ncomp)
    logger.info('latent complex: %d simplices kept of %d, %d components',
                len(retained), len(simplices), ncomp)
    return LatentComplex(C, retained, kept, comp, comp_labels, float(angle_threshold))


def _transforms(complex_):
    '''inverse barycentric systems of every simplex, NaN for singular ones'''
    C = np.asarray(complex_.centroids)
    S = complex_.simplices
    n = C.shape[1]
    A = np.ones((len(S), n + 1, n + 1))
    A[:, :n, :] = C[S].transpose(0, 2, 1)
    scale = max(1., np.abs(C).max())
    det = np.linalg.det(A) if len(S) else np.zeros(0)
    valid = np.abs(det) > 1e-14 * scale**n
    if not np.all(valid):
        logger.warning('skipping %d singular simplices', int(np.sum(~valid)))
    inv = np.full(A.shape, np.nan)
    if np.any(valid):
        inv[valid] = np.linalg.inv(A[valid])
    return inv, valid


def locate_batch(complex_: LatentComplex, z, tol=1e-10, chunk=4096):
    '''first simplex containing each z and its barycentric weights, -1 outside

    Weights down to -tol are accepted, clamped to 0 and renormalized.
    '''
    z = np.asarray(z, dtype=float).reshape(-1, complex_.dim)
    N, n = z.shape
    idx = -np.ones(N, dtype=int)
    lam = np.zeros((N, n + 1))
    if len(complex_.simplices) == 0 or N == 0:
        return idx, lam
    inv, valid = _transforms(complex_)
    for lo in range(0, N, chunk):
        rhs = np.concatenate([z[lo:lo + chunk], np.ones((min(chunk, N - lo), 1))], axis=1)
        with np.errstate(invalid='ignore', divide='ignore'):
            l = np.einsum('sij,mj->msi', inv, rhs)
            inside = np.all(l >= -tol, axis=2) & valid
            first = np.argmax(inside, axis=1)
            found = inside[np.arange(len(rhs)), first]
            sel = np.clip(l[np.arange(len(rhs)), first], 0., None)
            sel /= sel.sum(axis=1, keepdims=True)
        idx[lo:lo + chunk] = np.where(found, first, -1)
        lam[lo:lo + chunk] = np.where(found[:, None], sel, 0.)
    return idx, lam


def locate(complex_: LatentComplex, z, tol=1e-10):
    idx, lam = locate_batch(complex_, z, tol)
    return (int(idx[0]), lam[0]) if idx[0] >= 0 else (-1, None)


def _emit(complex_, potential, sid, lam, rejection_rate, draws, latents=None):
    S = complex_.simplices[sid]
    Y = np.asarray(potential.targets.points)
    points = np.einsum('mk,mkd->md', lam, Y[S])
    if latents is None:
        latents = np.einsum('mk,mkd->md', lam, np.asarray(complex_.centroids)[S])
    labels = complex_.component_labels[complex_.components[S[:, 0]]] if len(sid) else np.zeros(0, dtype=int)
    return BarycentricSamples(points, latents, lam, sid, labels, rejection_rate, draws)


def sample_unconditional(complex_: LatentComplex, potential: sdot.BrenierPotential, count, seed,
                         max_rejection=0.99, min_draws=100_000):
    '''rejection sample source latents until they fall in a retained simplex'''
    if len(complex_.simplices) == 0:
        raise CoverageError('latent complex has no simplex to sample from')
    n = complex_.dim
    key = prng_key(seed)
    sids, lams, zs = [], [], []
    total = draws = 0
    rnd = 0
    while total < count:
        batch = max(2 * (count - total), 1024)
        z = np.asarray(mx.sample(potential.source, batch, random.fold_in(key, rnd)))
        rnd += 1
        sid, lam = locate_batch(complex_, z)
        hit = np.nonzero(sid >= 0)[0][:count - total]
        draws += int(hit[-1]) + 1 if total + len(hit) >= count else batch
        sids.append(sid[hit])
        lams.append(lam[hit])
        zs.append(z[hit])
        total += len(hit)
        if draws >= min_draws and total / draws < 1 - max_rejection:
            raise CoverageError(f'rejection rate {1 - total / draws:.4f} over {draws} draws, '
                                'complex too sparse')
    if count == 0:
        return _emit(complex_, potential, np.zeros(0, dtype=int), np.zeros((0, n + 1)), 0., 0,
                     np.zeros((0, n)))
    return _emit(complex_, potential, np.concatenate(sids), np.concatenate(lams),
                 1. - total / draws, draws, np.concatenate(zs))


def sample_conditional(complex_: LatentComplex, potential: sdot.BrenierPotential, label, count, seed):
    '''uniform simplex of the labeled components, uniform-normalized weights'''
    known = set(np.asarray(complex_.component_labels).tolist())
    if label not in known:
        raise DomainError(f'unknown label {label}, complex knows {sorted(known)}')
    comps = np.nonzero(np.asarray(complex_.component_labels) == label)[0]
    pool = np.nonzero(np.isin(complex_.simplex_components, comps))[0]
    if len(pool) == 0:
        raise CoverageError(f'label {label} has no simplex')
    n = complex_.dim
    kc, kb = random.split(prng_key(seed))
    sid = pool[np.asarray(random.randint(kc, (count,), 0, len(pool)))]
    beta = np.asarray(random.uniform(kb, (count, n + 1)))
    lam = beta / beta.sum(axis=1, keepdims=True) if count else beta
    return _emit(complex_, potential, sid, lam, 0., count)


def complex_to_dict(complex_: LatentComplex):
    comp = np.asarray(complex_.components)
    return {'centroids': complex_.centroids, 'simplices': complex_.simplices,
            'kept_edges': complex_.kept_edges,
            'components': [np.nonzero(comp == k)[0] for k in range(len(complex_.component_labels))],
            'labels': complex_.component_labels,
            'angle_threshold': complex_.angle_threshold}


def save_complex(path, complex_: LatentComplex):
    dump_json(complex_to_dict(complex_), path)


def load_complex(path):
    d = load_json(path)
    try:
        C = np.asarray(d['centroids'], dtype=float)
        n = C.shape[1]
        S = np.asarray(d['simplices'], dtype=int).reshape(-1, n + 1)
        E = np.asarray(d['kept_edges'], dtype=int).reshape(-1, 2)
        comp = -np.ones(len(C), dtype=int)
        for k, members in enumerate(d['components']):
            comp[np.asarray(members, dtype=int)] = k
        labels = np.asarray(d['labels'], dtype=int).reshape(-1)
        theta = float(d['angle_threshold'])
    except (KeyError, TypeError, ValueError, IndexError) as e:
        raise ArtifactError(f'{path}: malformed complex ({e!r})')
    if len(labels) != len(d['components']) or (S.size and S.max() >= len(C)):
        raise ArtifactError(f'{path}: inconsistent complex')
    return LatentComplex(C, S, E, comp, labels, theta)


def write_samples_csv(samples: BarycentricSamples, path):
    pts = np.asarray(samples.points)
    dim = pts.shape[1] if pts.ndim == 2 else 0
    df = pd.DataFrame(pts.reshape(-1, dim), columns=['x%d' % i for i in range(dim)])
    df['label'] = np.asarray(samples.labels, dtype=int)
    df['simplex_id'] = np.asarray(samples.simplices, dtype=int)
    df.to_csv(path, index=False, float_format='%.17g')
