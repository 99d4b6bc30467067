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
import time
import numpy as np
import pandas as pd
from pathlib import Path
from jax import random
from scipy import special
from typing import Any, NamedTuple, Optional
from mongeflow import schedule as sch, mixture as mx, flow, sdot, latent, metrics, fixtures
from mongeflow.errors import DomainError, UsageError
from mongeflow.util import prng_key, dump_json


logger = logging.getLogger(__name__)

RELATIONS = ('<=', '<', '>=', '>')


class Check(NamedTuple):
    '''lhs <relation> rhs, judged inconclusive when the slack exceeds half the gap'''
    name: str
    lhs: float
    rhs: float
    relation: str = '<='
    slack: float = 0.

    @property
    def margin(self):
        if self.lhs == self.rhs:
            return 0.
        return self.rhs - self.lhs if self.relation in ('<=', '<') else self.lhs - self.rhs

    @property
    def status(self):
        m = self.margin
        if np.isnan(m):
            return 'fail'
        if self.slack > 0 and abs(m) < 2 * self.slack:
            return 'inconclusive'
        if self.relation in ('<', '>'):
            return 'pass' if m > 0 else 'fail'
        return 'pass' if m >= 0 else 'fail'

    def to_dict(self):
        return {'name': self.name, 'lhs': self.lhs, 'rhs': self.rhs, 'relation': self.relation,
                'slack': self.slack, 'margin': self.margin, 'status': self.status}


class ExperimentReport(NamedTuple):
    experiment: str
    config: dict
    values: dict
    checks: tuple
    verdict: str
    seeds: dict
    runtime: float
    curve: Optional[Any] = None

    def to_dict(self, runtime=False):
        d = {'experiment': self.experiment, 'config': self.config, 'values': self.values,
             'checks': [c.to_dict() for c in self.checks], 'verdict': self.verdict,
             'seeds': self.seeds}
        if runtime:
            d['runtime'] = self.runtime
        return d


def make_check(name, lhs, rhs, relation='<=', slack=0.):
    if relation not in RELATIONS:
        raise DomainError('invalid relation %s' % relation)
    return Check(name, float(lhs), float(rhs), relation, float(slack))


def verdict(checks):
    status = [c.status for c in checks]
    if 'fail' in status:
        return 'fail'
    if 'inconclusive' in status:
        return 'inconclusive'
    return 'pass'


def _report(experiment, config, values, checks, seeds, start, curve=None):
    checks = tuple(checks)
    r = ExperimentReport(experiment, config, values, checks, verdict(checks), seeds,
                         time.perf_counter() - start, curve)
    logger.info('%s: %s (%s)', experiment, r.verdict,
                ', '.join('%s %s' % (c.name, c.status) for c in checks))
    return r


def _schedule_config(schedule):
    return {'beta_min': schedule.beta_min, 'beta_max': schedule.beta_max,
            't_max': schedule.t_max, 'eps': schedule.eps, 'panels': schedule.panels}


def _log(x):
    with np.errstate(divide='ignore'):
        return float(np.log(x))


def _fit_line(x, y):
    '''least squares slope, intercept and R^2'''
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss = np.sum((y - y.mean())**2)
    r2 = 1. - np.sum(resid**2) / ss if ss > 0 else 1.
    return float(slope), float(intercept), float(r2)


def verify_flow_deviation(cloud: mx.PointCloud, schedule: sch.NoiseSchedule,
                          deltas=(0.005, 0.01, 0.02), samples=1000, seed=0, steps=512,
                          mode='smooth', lipschitz=None, mc_samples=256, workers=1):
    '''perturbed-score flow deviation against the score matching bound

    For each magnitude delta the perturbed flow from T to eps is compared to
    the exact one on p_T draws. The bound sqrt((T - eps) / (2 I(eps)^2) J) is
    evaluated in log space with I built from Lip(exact) + delta Lip(e). The
    RMS deviation and the W2 between the two transported laws are checked
    against that bound.

    The log-log slope over sqrt(J) is fitted on the median per-draw
    deviation. Draws whose exact and perturbed endpoints land on different
    cloud points are counted as `switched`; they carry the RMS but not the
    median.
    '''
    start = time.perf_counter()
    deltas = [float(d) for d in deltas]
    if any(d < 0 for d in deltas) or any(b <= a for a, b in zip(deltas, deltas[1:])):
        raise DomainError(f'deltas must be nonnegative and ascending, got {deltas}')
    seeds = {'init': seed, 'perturbation': seed + 1, 'loss': seed + 2}
    T, eps = schedule.t_max, schedule.eps
    x_T = mx.sample(mx.marginal(schedule, cloud, T), samples, seeds['init'])
    exact = flow.flow_map(schedule, cloud, T, eps, steps)
    y_exact = np.asarray(flow.transport_batch(exact, x_T, workers))
    lip_e = flow.perturbation_lipschitz(flow.score_perturbation(1., cloud.dim, mode, seeds['perturbation']))
    anchors = float(sch.mean_scale(schedule, eps)) * np.asarray(cloud.points)
    nearest = lambda y: np.argmin(np.sum((y[:, None] - anchors[None])**2, axis=-1), axis=1)
    home = nearest(y_exact)

    rows, checks = [], []
    for d in deltas:
        pert = flow.score_perturbation(d, cloud.dim, mode, seeds['perturbation'])
        L = sch.default_lipschitz(schedule) + d * lip_e if lipschitz is None else lipschitz
        factors = sch.integrating_factors(schedule, L)
        perturbed = flow.flow_map(schedule, cloud, T, eps, steps, perturbation=pert)
        y = np.asarray(flow.transport_batch(perturbed, x_T, workers))
        dev = metrics.map_l2(lambda _: y_exact, lambda _: y, x_T)
        typical = float(np.median(np.linalg.norm(y - y_exact, axis=1)))
        switched = int(np.sum(nearest(y) != home))
        log_J = flow.log_score_matching_loss(perturbed, factors, eps, T, mc_samples, seeds['loss'])
        log_bound = flow.log_deviation_bound(factors, eps, T, log_J)
        w2 = metrics.w2_samples(y, y_exact) if d > 0 else 0.
        checks.append(make_check('log deviation <= log bound [delta=%g]' % d, _log(dev), log_bound))
        checks.append(make_check('log w2 <= log bound [delta=%g]' % d, _log(w2), log_bound))
        rows.append({'delta': d, 'deviation': dev, 'typical_deviation': typical,
                     'switched': switched, 'log_J': log_J, 'log_bound': log_bound,
                     'w2_eps': w2, 'lipschitz': float(L) if not callable(L) else None})
        logger.info('delta %g: deviation %.3e, median %.3e, %d switched, log bound %.2f',
                    d, dev, typical, switched, log_bound)

    curve = pd.DataFrame(rows)
    values = {'rows': rows}
    live = curve[(curve.delta > 0) & (curve.typical_deviation > 0)]
    if len(live) >= 2:
        slope, intercept, r2 = _fit_line(0.5 * live.log_J.values, np.log(live.typical_deviation.values))
        values.update(slope=slope, intercept=intercept, r2=r2)
        checks.append(make_check('log-log slope >= 0.9', slope, 0.9, '>='))
        checks.append(make_check('log-log slope <= 1.1', slope, 1.1, '<='))
    config = {'cloud_size': cloud.size, 'dim': cloud.dim, 'deltas': deltas, 'samples': samples,
              'steps': steps, 'mode': mode, 'mc_samples': mc_samples,
              'schedule': _schedule_config(schedule)}
    return _report('deviation', config, values, checks, seeds, start, curve)


def verify_prior_contraction(cloud: mx.PointCloud, schedule: sch.NoiseSchedule, samples=500,
                             seed=0, horizon=None, horizon_grid=(0.5, 0.25, 0.1), steps=512,
                             lipschitz=None, resamples=200, workers=1):
    '''prior error W2(p_T, q_T) against its image W2(p_eps, q_eps) under the exact flow

    q_T is the standard normal. The lower bound Ibar(T)/Ibar(eps) W2(p_T, q_T)
    <= W2(p_eps, q_eps) is checked with three bootstrap standard errors of
    slack. The upper bound with I is recorded in log space only. Mixing is
    checked separately: W2(p_T, q_T) must grow as the horizon shrinks.
    '''
    start = time.perf_counter()
    T = schedule.t_max if horizon is None else float(horizon)
    eps = schedule.eps
    seeds = {'p_T': seed, 'q_T': seed + 1, 'bootstrap': seed + 2}
    xp = np.asarray(mx.sample(mx.marginal(schedule, cloud, T), samples, seeds['p_T']))
    xq = np.asarray(mx.sample(mx.standard_normal(cloud.dim), samples, seeds['q_T']))
    fmap = flow.flow_map(schedule, cloud, T, eps, steps)
    yp = np.asarray(flow.transport_batch(fmap, xp, workers))
    yq = np.asarray(flow.transport_batch(fmap, xq, workers))

    factors = sch.integrating_factors(schedule, lipschitz)
    ratio_lo = float(np.exp(sch.log_integrating_factor_bar(factors, T)
                            - sch.log_integrating_factor_bar(factors, eps)))
    log_ratio_hi = float(sch.log_integrating_factor_I(factors, T)
                         - sch.log_integrating_factor_I(factors, eps))
    w2_T = metrics.w2_samples(xp, xq)
    w2_eps = metrics.w2_samples(yp, yq)
    se = metrics.bootstrap_stderr(
        lambda a, b, c, d: metrics.w2_samples(c, d) - ratio_lo * metrics.w2_samples(a, b),
        [xp, xq, yp, yq], resamples, seeds['bootstrap'])
    checks = [make_check('lower bound', ratio_lo * w2_T, w2_eps, '<=', 3 * se)]
    logger.info('horizon %g: measured ratio %.4g against lower ratio %.4g (%s)', T,
                w2_eps / w2_T if w2_T > 0 else np.nan, ratio_lo, checks[0].status)

    mixing = {}
    for t in sorted(horizon_grid, reverse=True):
        x = mx.sample(mx.marginal(schedule, cloud, t), samples, seeds['p_T'])
        mixing[float(t)] = metrics.w2_samples(x, xq)
    hs = sorted(mixing, reverse=True)
    for a, b in zip(hs, hs[1:]):
        checks.append(make_check('mixing w2(T=%g) < w2(T=%g)' % (a, b), mixing[a], mixing[b], '<'))

    values = {'w2_T': w2_T, 'w2_eps': w2_eps, 'ratio_lower': ratio_lo,
              'measured_ratio': w2_eps / w2_T if w2_T > 0 else None,
              'log_ratio_upper': log_ratio_hi,
              'log_upper_bound': log_ratio_hi + _log(w2_T),
              'bootstrap_stderr': se, 'mixing_w2': mixing}
    config = {'cloud_size': cloud.size, 'dim': cloud.dim, 'horizon': T, 'samples': samples,
              'horizon_grid': list(horizon_grid), 'steps': steps, 'resamples': resamples,
              'lipschitz': lipschitz, 'schedule': _schedule_config(schedule)}
    return _report('contraction', config, values, checks, seeds, start)


def monotone_map_1d(marginal: mx.MixtureMarginal, x):
    '''Phi^-1(F(x)), the 1D Brenier map of the mixture onto the standard normal'''
    x = np.asarray(x, dtype=float).reshape(-1)
    c = mx.cdf_1d(marginal, x)
    s = mx.sf_1d(marginal, x)
    return np.where(c < 0.5, special.ndtri(c), -special.ndtri(s))[:, None]


def verify_map_decay(cloud: mx.PointCloud, schedule: sch.NoiseSchedule, s_grid=None, samples=4000,
                     seed=0, horizon=0.2, steps=512, workers=1):
    '''forward flow maps M^{T,s} approaching the static Brenier map p_T -> p_infinity

    The L2(p_T) distance is compared to the envelope Ibar(T)/Ibar(s)
    W2(p_infinity, p_T); the schedule is extended when the grid runs past
    its horizon. The fitted constant of the log-linear fit is reported.
    '''
    start = time.perf_counter()
    if cloud.dim != 1:
        raise DomainError('map decay runs on 1D clouds, got dim %d' % cloud.dim)
    T = float(horizon)
    s_grid = T + 0.2 * np.arange(8) if s_grid is None else np.asarray(s_grid, dtype=float)
    if np.any(s_grid < T) or np.any(np.diff(s_grid) <= 0):
        raise DomainError(f's grid must ascend from the horizon {T}, got {s_grid}')
    if s_grid[-1] > schedule.t_max:
        schedule = sch.extended(schedule, s_grid[-1])
    seeds = {'init': seed}
    p_T = mx.marginal(schedule, cloud, T)
    x = np.asarray(mx.sample(p_T, samples, seeds['init']))
    u = monotone_map_1d(p_T, x)
    w2_inf = metrics.map_l2(lambda _: u, lambda z: z, x)
    factors = sch.integrating_factors(schedule, 0.)
    log_bar_T = float(sch.log_integrating_factor_bar(factors, T))

    l2, env = [], []
    for s in s_grid:
        m = np.asarray(flow.transport_batch(flow.flow_map(schedule, cloud, T, s, steps), x, workers))
        l2.append(metrics.map_l2(lambda _: u, lambda _: m, x))
        env.append(float(np.exp(log_bar_T - sch.log_integrating_factor_bar(factors, s))) * w2_inf)
    l2, env = np.asarray(l2), np.asarray(env)
    curve = pd.DataFrame({'s': s_grid, 'map_l2': l2, 'envelope': env})

    checks = [make_check('map_l2 decreases [s=%g -> %g]' % (a, b), l2[k + 1], l2[k], '<')
              for k, (a, b) in enumerate(zip(s_grid, s_grid[1:]))]
    checks.append(make_check('final <= 10% of initial', l2[-1], 0.1 * l2[0]))
    slope, intercept, r2 = _fit_line(np.log(env), np.log(l2))
    checks.append(make_check('envelope slope', slope, 2. / 15 - 0.05, '>='))
    checks.append(make_check('envelope fit r2', r2, 0.9, '>='))
    values = {'w2_inf': w2_inf, 'slope': slope, 'constant': float(np.exp(intercept)), 'r2': r2,
              'map_l2': l2, 'envelope': env}
    config = {'cloud_size': cloud.size, 'horizon': T, 's_grid': s_grid, 'samples': samples,
              'steps': steps, 'schedule': _schedule_config(schedule)}
    return _report('decay', config, values, checks, seeds, start, curve)


def map_l2_1d(pot_a: sdot.BrenierPotential, pot_b: sdot.BrenierPotential):
    '''exact L2(source) distance of two 1D semi-discrete maps'''
    ba, _ = sdot.boundaries_1d(pot_a)
    bb, _ = sdot.boundaries_1d(pot_b)
    cuts = np.unique(np.concatenate([ba, bb]))
    if len(cuts) == 0:
        mids = np.zeros(1)
    else:
        inner = 0.5 * (cuts[1:] + cuts[:-1])
        mids = np.concatenate([[cuts[0] - 1.], inner, [cuts[-1] + 1.]])
    edges = np.concatenate([[-np.inf], cuts, [np.inf]])
    mass = mx.cdf_1d(pot_a.source, edges[1:]) - mx.cdf_1d(pot_a.source, edges[:-1])
    Y = np.asarray(pot_a.targets.points)[:, 0]
    ya = Y[np.asarray(sdot.assign(pot_a, mids[:, None]))]
    yb = Y[np.asarray(sdot.assign(pot_b, mids[:, None]))]
    return float(np.sqrt(np.sum(mass * (ya - yb)**2)))


def _errors(reference, corrupted, grid, z_mc):
    if z_mc is None:
        l2 = map_l2_1d(reference, corrupted)
        ba, _ = sdot.boundaries_1d(reference)
        bb, _ = sdot.boundaries_1d(corrupted)
        grid = np.concatenate([grid[:, 0], ba, bb])[:, None]
    else:
        Y = np.asarray(reference.targets.points)
        l2 = metrics.map_l2(lambda z: Y[np.asarray(sdot.assign(reference, z))],
                            lambda z: Y[np.asarray(sdot.assign(corrupted, z))], z_mc)
    sup = float(np.max(np.abs(np.asarray(sdot.upper_envelope(corrupted, grid))
                              - np.asarray(sdot.upper_envelope(reference, grid)))))
    return l2, sup


def verify_potential_stability(cloud: mx.PointCloud, source: mx.MixtureMarginal = None,
                               corruption_grid=None, seed=0, grid_points=20001, extent=8.,
                               mc_samples=200_000, tol=1e-3, workers=1):
    '''map error against potential sup-error as the heights are corrupted

    1D: the reference heights are the monotone rearrangement and the map
    error is exact. 2D: the reference is fitted to `tol` and the map error is
    a Monte Carlo average over source draws. The corruption direction is a
    gauge-free noise vector with unit max norm.
    '''
    start = time.perf_counter()
    if cloud.dim not in (1, 2):
        raise DomainError('potential stability runs in 1D or 2D, got dim %d' % cloud.dim)
    source = mx.standard_normal(cloud.dim) if source is None else source
    levels = np.logspace(-3, -1, 5) if corruption_grid is None else np.asarray(corruption_grid, dtype=float)
    if np.any(levels <= 0):
        raise DomainError(f'corruption levels must be positive, got {levels}')
    seeds = {'reference': seed, 'noise': seed + 1, 'mc': seed + 2}
    if cloud.dim == 1:
        reference = sdot.make_potential(cloud, sdot.exact_heights_1d(cloud, source), source)
        grid = np.linspace(-extent, extent, grid_points)[:, None]
        z_mc = None
    else:
        reference = sdot.fit(cloud, source, tol=tol, seed=seeds['reference'], workers=workers).potential
        g = np.linspace(-extent / 2, extent / 2, int(np.sqrt(grid_points)))
        grid = np.stack(np.meshgrid(g, g, indexing='ij'), axis=-1).reshape(-1, 2)
        z_mc = np.asarray(mx.sample(source, mc_samples, seeds['mc']))
    noise = sdot.gauge_normalize(np.asarray(random.normal(prng_key(seeds['noise']), (cloud.size,))))
    noise = noise / np.abs(noise).max()
    h = np.asarray(reference.heights)

    def corrupt(c):
        return reference.replace(heights=h + c * noise)

    l2_0, sup_0 = _errors(reference, corrupt(0.), grid, z_mc)
    rows = []
    for c in levels:
        l2, sup = _errors(reference, corrupt(c), grid, z_mc)
        rows.append({'corruption': float(c), 'map_l2': l2, 'sup_error': sup,
                     'ratio': l2 / np.sqrt(sup) if sup > 0 else np.nan})
    curve = pd.DataFrame(rows)
    ratios = curve.ratio.values
    checks = [make_check('zero corruption errors', l2_0 + sup_0, 0.),
              make_check('ratio spread max/min <= 10', np.nanmax(ratios) / np.nanmin(ratios), 10.)]
    c0 = float(levels[0])
    _, sup_c = _errors(reference, corrupt(c0), grid, z_mc)
    _, sup_4c = _errors(reference, corrupt(4 * c0), grid, z_mc)
    scaling = sup_4c / sup_c
    checks.append(make_check('sup error scales linearly x4', abs(scaling - 4.), 1e-6))
    values = {'rows': rows, 'sup_scaling': scaling, 'ratio_spread': float(np.nanmax(ratios) / np.nanmin(ratios))}
    config = {'cloud_size': cloud.size, 'dim': cloud.dim, 'corruption_grid': levels,
              'grid_points': grid_points, 'extent': extent,
              'mc_samples': mc_samples if cloud.dim > 1 else None, 'tol': tol}
    return _report('stability', config, values, checks, seeds, start, curve)


def verify_pipeline(cloud: mx.PointCloud, schedule: sch.NoiseSchedule, t_prime=0.1, seed=0,
                    samples=1000, n_targets=64, tol=5e-3, mc_samples=None, max_iters=2000,
                    angle_threshold=np.pi / 2, steps=512, resamples=200, refine_iters=8,
                    error_samples=None, workers=1):
    '''OT prior against the Gaussian prior, before and after the flow to eps

    Targets are n_targets draws of p_T'. The OT prior is the barycentric
    latent sampler of the fitted potential; both priors are flowed from T'
    to eps and compared to direct p_eps draws. At T' the OT prior error is
    the exact W2 of the fitted pushforward law to the uniform targets, with
    `error_samples` draws for the cell measures (see `sdot.prior_error`).
    The fit is refined with `refine_iters` Newton steps after convergence.
    '''
    start = time.perf_counter()
    eps = schedule.eps
    seeds = {'targets': seed, 'fit': seed + 1, 'latent': seed + 2, 'gaussian': seed + 3,
             'p_eps': seed + 4, 'bootstrap': seed + 5, 'prior_error': seed + 6}
    Y, idx = mx.sample(mx.marginal(schedule, cloud, t_prime), n_targets, seeds['targets'],
                       return_index=True)
    Y = np.asarray(Y)
    labels = None if cloud.labels is None else np.asarray(cloud.labels)[np.asarray(idx)]
    targets = mx.make_cloud(Y, labels)
    fitted = sdot.fit(targets, tol=tol, mc_samples=mc_samples, max_iters=max_iters,
                      seed=seeds['fit'], workers=workers, refine_iters=refine_iters)
    potential = fitted.potential
    cx = latent.build_complex(potential, fitted.stats, angle_threshold)
    ot_prior = latent.sample_unconditional(cx, potential, samples, seeds['latent'])
    gauss = np.asarray(mx.sample(mx.standard_normal(cloud.dim), samples, seeds['gaussian']))

    fmap = flow.flow_map(schedule, cloud, t_prime, eps, steps)
    q_ot = np.asarray(flow.transport_batch(fmap, ot_prior.points, workers))
    q_g = np.asarray(flow.transport_batch(fmap, gauss, workers))
    p_eps = np.asarray(mx.sample(mx.marginal(schedule, cloud, eps), samples, seeds['p_eps']))
    w2_ot = metrics.w2_samples(q_ot, p_eps)
    w2_g = metrics.w2_samples(q_g, p_eps)
    se = metrics.bootstrap_stderr(
        lambda a, b, c: metrics.w2_samples(b, c) - metrics.w2_samples(a, c),
        [q_ot, q_g, p_eps], resamples, seeds['bootstrap'])

    diam = float(np.sqrt(np.max(np.sum((Y[:, None] - Y[None])**2, axis=-1))))
    pe_ot = sdot.prior_error(potential, error_samples, seeds['prior_error'], workers).w2
    pe_g = metrics.w2_exact(metrics.empirical(gauss), metrics.empirical(Y)).w2
    tv_bound = diam * np.sqrt(0.5 * n_targets * fitted.report.residual)
    checks = [make_check('sdot converged', fitted.report.residual, tol),
              make_check('ot prior w2 < gaussian prior w2 at eps', w2_ot, w2_g, '<', 3 * se),
              make_check('ot prior error <= diam sqrt(|I| residual / 2)', pe_ot, tv_bound),
              make_check('10 x ot prior error <= gaussian prior error', 10 * pe_ot, pe_g)]
    values = {'w2_ot_prior': w2_ot, 'w2_gaussian_prior': w2_g, 'bootstrap_stderr': se,
              'prior_error_ot': pe_ot, 'prior_error_gaussian': pe_g, 'diam': diam,
              'nominal_bound': 2 * tol * diam, 'tv_bound': tv_bound,
              'rejection_rate': ot_prior.rejection_rate, 'fit': fitted.report.to_dict()}
    config = {'cloud_size': cloud.size, 'dim': cloud.dim, 't_prime': t_prime, 'samples': samples,
              'n_targets': n_targets, 'tol': tol, 'mc_samples': mc_samples,
              'max_iters': max_iters, 'angle_threshold': angle_threshold, 'steps': steps,
              'resamples': resamples, 'refine_iters': refine_iters, 'error_samples': error_samples,
              'schedule': _schedule_config(schedule)}
    return _report('pipeline', config, values, checks, seeds, start)


def _suite_deviation(schedule, seed, workers, samples, lipschitz):
    return [verify_flow_deviation(fixtures.two_cluster8(), schedule, seed=seed, workers=workers,
                                  samples=samples or 1000, lipschitz=lipschitz)]


def _suite_contraction(schedule, seed, workers, samples, lipschitz):
    reports = []
    for name in ('line_pair', 'two_cluster8'):
        for T in (0.1, 0.25):
            r = verify_prior_contraction(fixtures.load(name), schedule, samples=samples or 500,
                                         seed=seed, horizon=T, lipschitz=lipschitz, workers=workers)
            reports.append(r._replace(experiment='contraction/%s/T=%g' % (name, T)))
    return reports


def _suite_decay(schedule, seed, workers, samples, lipschitz):
    return [verify_map_decay(fixtures.line_pair(), schedule, samples=samples or 4000, seed=seed,
                             workers=workers)]


def _suite_stability(schedule, seed, workers, samples, lipschitz):
    return [verify_potential_stability(fixtures.line_irregular8(), seed=seed, workers=workers)]


def _suite_pipeline(schedule, seed, workers, samples, lipschitz):
    return [verify_pipeline(fixtures.two_cluster8(), schedule, seed=seed, samples=samples or 1000,
                            workers=workers)]


EXPERIMENTS = {
    'deviation': _suite_deviation,
    'contraction': _suite_contraction,
    'decay': _suite_decay,
    'stability': _suite_stability,
    'pipeline': _suite_pipeline,
}


def run_suite(names, schedule: sch.NoiseSchedule, seed=0, workers=1, samples=None, lipschitz=None):
    '''run the named experiments on the benchmark fixtures, in order

    `lipschitz` replaces the default score Lipschitz bound in the deviation
    and contraction bounds.
    '''
    unknown = [n for n in names if n not in EXPERIMENTS]
    if unknown:
        raise UsageError(f'unknown experiments {unknown}, choose from {sorted(EXPERIMENTS)}')
    reports = []
    for n in names:
        logger.info('running %s', n)
        reports.extend(EXPERIMENTS[n](schedule, seed, workers, samples, lipschitz))
    return reports


def report_name(report: ExperimentReport):
    return report.experiment.replace('/', '_')


def write_report(report: ExperimentReport, directory):
    '''<name>.json plus <name>_curve.csv when the report carries a curve'''
    directory = Path(directory)
    paths = [directory / (report_name(report) + '.json')]
    dump_json(report.to_dict(), paths[0])
    if report.curve is not None:
        paths.append(directory / (report_name(report) + '_curve.csv'))
        report.curve.to_csv(paths[1], index=False, float_format='%.17g')
    return paths
