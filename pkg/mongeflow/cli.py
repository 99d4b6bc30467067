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

import argparse
import logging
import sys
import time
import numpy as np
from jax import random
from pathlib import Path
from mongeflow import (__version__, config, fixtures, flow, latent, metrics, mixture as mx,
                       sdot, verify)
from mongeflow.errors import (ArtifactError, CapacityError, ConvergenceError, DomainError,
                              MongeFlowError, NumericalError, UsageError)
from mongeflow.util import dump_json, prng_key, sha256_file, split_sizes


logger = logging.getLogger(__name__)

EXIT_OK, EXIT_VERDICT, EXIT_USAGE, EXIT_IO, EXIT_NUMERICAL = range(5)
TIMING_BATCH = 64


def load_cloud(spec):
    '''"fixture:<name>" or a CSV path'''
    if spec.startswith('fixture:'):
        return fixtures.load(spec[len('fixture:'):])
    return mx.read_cloud_csv(spec)


def _out_dir(cfg, command):
    out = Path(cfg['out']) / command
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(cfg, out, command, artifacts, timing=None, inputs=()):
    '''resolved config, manifest with artifact and input hashes and the separate timing record'''
    dump_json(cfg, out / 'config.json')
    manifest = {'command': command, 'version': __version__, 'seed': cfg['seed'],
                'artifacts': {p.name: sha256_file(p) for p in [out / 'config.json'] + list(artifacts)},
                'inputs': {p.name: sha256_file(p) for p in inputs}}
    dump_json(manifest, out / 'manifest.json')
    if timing is not None:
        dump_json(timing, out / 'timing.json')


def _per_sample(times, sizes):
    per = np.asarray(times) / np.maximum(np.asarray(sizes), 1)
    if len(per) == 0:
        return {'mean': None, 'median': None, 'p95': None}
    return {'mean': float(np.mean(per)), 'median': float(np.median(per)),
            'p95': float(np.percentile(per, 95))}


def fit_targets(cfg):
    '''the raw cloud, or n_targets draws of p_{t_prime} labeled by their component'''
    cloud = load_cloud(cfg['cloud'])
    if cfg['t_prime'] is None:
        return cloud, cloud
    m = mx.marginal(config.schedule_of(cfg), cloud, cfg['t_prime'])
    Y, idx = mx.sample(m, cfg['n_targets'], cfg['seed'], return_index=True)
    labels = None if cloud.labels is None else np.asarray(cloud.labels)[np.asarray(idx)]
    return cloud, mx.make_cloud(np.asarray(Y), labels)


def cmd_fit(cfg):
    _, targets = fit_targets(cfg)
    start = time.perf_counter()
    fitted = sdot.fit(targets, tol=cfg['sdot_tol'], mc_samples=cfg['sdot_mc_samples'],
                      max_iters=cfg['sdot_max_iters'], seed=cfg['seed'], lr=cfg['sdot_lr'],
                      method=cfg['sdot_method'], workers=cfg['workers'],
                      refine_iters=cfg['sdot_refine_iters'])
    if not fitted.report.converged:
        raise ConvergenceError(fitted.report, 'sdot fit not converged: %s' % fitted.report.to_dict())
    cx = latent.build_complex(fitted.potential, fitted.stats, cfg['angle_threshold'])
    elapsed = time.perf_counter() - start

    out = _out_dir(cfg, 'fit')
    paths = [out / 'potential.json', out / 'complex.json', out / 'fit_report.json']
    sdot.save_potential(paths[0], fitted.potential, fitted.report,
                        cloud=cfg['cloud'], t_prime=cfg['t_prime'])
    latent.save_complex(paths[1], cx)
    dump_json(fitted.report.to_dict(), paths[2])
    _finish(cfg, out, 'fit', paths, {'fit_seconds': elapsed, 'iters': fitted.report.iters,
                                     'mc_samples': fitted.report.mc_samples},
            [] if cfg['cloud'].startswith('fixture:') else [Path(cfg['cloud'])])
    logger.info('fit: residual %.3e after %d iterations, %d components',
                fitted.report.residual, fitted.report.iters, len(cx.component_labels))
    return EXIT_OK


def _artifact_paths(cfg):
    '''the fitted potential and complex, defaulting to <out>/fit'''
    out = Path(cfg['out']) / 'fit'
    p = Path(cfg['potential']) if cfg['potential'] else out / 'potential.json'
    c = Path(cfg['complex']) if cfg['complex'] else out / 'complex.json'
    for path in (p, c):
        if not path.exists():
            raise ArtifactError(f'{path}: missing artifact, run fit first')
    return p, c


def _artifacts(cfg):
    p, c = _artifact_paths(cfg)
    potential, meta = sdot.load_potential(p)
    return potential, meta, latent.load_complex(c)


def cmd_sample(cfg):
    potential, meta, cx = _artifacts(cfg)
    count, label = cfg['count'], cfg['label']
    if count < 0:
        raise DomainError(f'count must be nonnegative, got {count}')
    if label is not None and label not in set(np.asarray(cx.component_labels).tolist()):
        raise DomainError(f'unknown label {label}')
    fmap = None
    if cfg['pipeline']:
        t_prime = meta.get('t_prime') if cfg['t_prime'] is None else cfg['t_prime']
        cloud_spec = meta.get('cloud') or cfg['cloud']
        if t_prime is None:
            raise UsageError('pipeline sampling needs the fit horizon t_prime')
        schedule = config.schedule_of(cfg)
        fmap = flow.flow_map(schedule, load_cloud(cloud_spec), t_prime, schedule.eps,
                             cfg['flow_steps'])

    # one key per timing batch
    parts, times, sizes = [], [], []
    draws = 0
    for k, n in enumerate(split_sizes(count, TIMING_BATCH)):
        start = time.perf_counter()
        seed = random.fold_in(prng_key(cfg['seed']), k)
        if label is None:
            s = latent.sample_unconditional(cx, potential, n, seed)
        else:
            s = latent.sample_conditional(cx, potential, int(label), n, seed)
        if fmap is not None:
            s = s._replace(points=np.asarray(flow.transport_batch(fmap, s.points, cfg['workers'])))
        times.append(time.perf_counter() - start)
        sizes.append(n)
        draws += s.draws if label is None else n
        parts.append(s)
    if parts:
        samples = latent.BarycentricSamples(
            np.concatenate([np.asarray(p.points) for p in parts]),
            np.concatenate([np.asarray(p.latents) for p in parts]),
            np.concatenate([p.weights for p in parts]),
            np.concatenate([p.simplices for p in parts]),
            np.concatenate([np.asarray(p.labels) for p in parts]),
            1. - count / draws if draws else 0., draws)
    else:
        n = cx.dim
        samples = latent.BarycentricSamples(np.zeros((0, n)), np.zeros((0, n)), np.zeros((0, n + 1)),
                                            np.zeros(0, dtype=int), np.zeros(0, dtype=int), 0., 0)

    out = _out_dir(cfg, 'sample')
    path = out / 'samples.csv'
    latent.write_samples_csv(samples, path)
    timing = {'count': count, 'seconds_per_sample': _per_sample(times, sizes),
              'ode_steps': cfg['flow_steps'] if fmap is not None else 0,
              'ot_evaluations': draws, 'rejection_rate': samples.rejection_rate}
    _finish(cfg, out, 'sample', [path], timing, _artifact_paths(cfg))
    return EXIT_OK


def cmd_verify(cfg):
    inputs = []
    if cfg['potential']:
        sdot.load_potential(cfg['potential'])
        inputs.append(Path(cfg['potential']))
    if cfg['complex']:
        latent.load_complex(cfg['complex'])
        inputs.append(Path(cfg['complex']))
    schedule = config.schedule_of(cfg)
    lipschitz = None if cfg['lipschitz'] is None else float(cfg['lipschitz'])
    reports = []
    for name in cfg['experiments']:
        try:
            reports.extend(verify.run_suite([name], schedule, cfg['seed'], cfg['workers'],
                                            cfg['samples'], lipschitz))
        except MongeFlowError as e:
            logger.error('experiment %s: %s', name, e)
            raise

    out = _out_dir(cfg, 'verify')
    paths = []
    for r in reports:
        paths.extend(verify.write_report(r, out))
        if cfg['plot']:
            from mongeflow import plot
            png = out / (verify.report_name(r) + '.png')
            if plot.save_report_figure(r, png):
                paths.append(png)
    summary = {r.experiment: r.verdict for r in reports}
    dump_json(summary, out / 'verdicts.json')
    paths.append(out / 'verdicts.json')
    _finish(cfg, out, 'verify', paths, {r.experiment: r.runtime for r in reports}, inputs)
    for r in reports:
        print('%-40s %s' % (r.experiment, r.verdict))
    return EXIT_VERDICT if 'fail' in summary.values() else EXIT_OK


def _prior_source(kind, cfg, count, seed):
    '''samples of a named law: gaussian, marginal, pushforward, targets, or a cloud spec'''
    if kind == 'targets':
        return np.asarray(_artifacts(cfg)[0].targets.points)
    if kind == 'pushforward':
        return np.asarray(sdot.pushforward(_artifacts(cfg)[0], count, seed).points)
    cloud = load_cloud(cfg['cloud'])
    if kind == 'gaussian':
        return np.asarray(mx.sample(mx.standard_normal(cloud.dim), count, seed))
    if kind == 'marginal':
        if cfg['t_prime'] is None:
            raise UsageError('marginal prior source needs t_prime')
        m = mx.marginal(config.schedule_of(cfg), cloud, cfg['t_prime'])
        return np.asarray(mx.sample(m, count, seed))
    return np.asarray(load_cloud(kind).points)


def cmd_prior_error(cfg):
    count = cfg['samples'] or 1000
    start = time.perf_counter()
    if (cfg['prior'], cfg['reference']) == ('pushforward', 'targets'):
        potential = _artifacts(cfg)[0]
        res = sdot.prior_error(potential, cfg['sdot_mc_samples'], cfg['seed'], cfg['workers'])
        sizes = [potential.targets.size, potential.targets.size]
    else:
        a = _prior_source(cfg['prior'], cfg, count, cfg['seed'])
        b = _prior_source(cfg['reference'], cfg, count, cfg['seed'])
        sizes = [len(a), len(b)]
        try:
            res = metrics.w2_exact(metrics.empirical(a), metrics.empirical(b))
        except CapacityError:
            if not cfg['entropic']:
                raise
            res = metrics.w2_entropic(metrics.empirical(a), metrics.empirical(b), cfg['reg'])
    entry = metrics.report_entry('w2 %s/%s' % (cfg['prior'], cfg['reference']), res, None,
                                 sizes, cfg['seed'])
    out = _out_dir(cfg, 'prior-error')
    path = out / 'prior_error.json'
    dump_json(entry, path)
    fitted = {'pushforward', 'targets'} & {cfg['prior'], cfg['reference']}
    _finish(cfg, out, 'prior-error', [path], {'seconds': time.perf_counter() - start,
                                             'ot_evaluations': 1},
            _artifact_paths(cfg) if fitted else ())
    print('%s = %.6g (%s)' % (entry['metric'], entry['value'], entry['method']))
    return EXIT_OK


def cmd_info(cfg):
    print('mongeflow %s' % __version__)
    print('fixtures: %s' % ', '.join(sorted(fixtures.FIXTURES)))
    print('experiments: %s' % ', '.join(verify.EXPERIMENTS))
    print('defaults:')
    for k in sorted(config.DEFAULTS):
        print('  %s = %r' % (k, config.DEFAULTS[k]))
    return EXIT_OK


COMMANDS = {
    'fit': cmd_fit,
    'sample': cmd_sample,
    'verify': cmd_verify,
    'prior-error': cmd_prior_error,
    'info': cmd_info,
}

# flag -> config key
FLAGS = {
    'seed': 'seed', 'workers': 'workers', 'out': 'out', 'label': 'label', 'count': 'count',
    't_prime': 't_prime', 'experiments': 'experiments', 'plot': 'plot', 'cloud': 'cloud',
    'potential': 'potential', 'complex': 'complex', 'prior': 'prior', 'reference': 'reference',
    'entropic': 'entropic', 'pipeline': 'pipeline', 'samples': 'samples',
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='flat JSON config file')
    common.add_argument('--seed', type=int)
    common.add_argument('--workers', type=int)
    common.add_argument('--out', help='output directory (default $%s or ./mongeflow_out)' % config.OUT_ENV)
    common.add_argument('--cloud', help='CSV path or fixture:<name>')
    common.add_argument('--t-prime', dest='t_prime', type=float)
    common.add_argument('--samples', type=int)
    common.add_argument('--potential')
    common.add_argument('--complex')
    common.add_argument('--verbose', '-v', action='store_true')

    parser = argparse.ArgumentParser(prog='mongeflow', description='optimal transport priors '
                                     'for probability flow sampling')
    parser.add_argument('--version', action='version', version=__version__)
    sub = parser.add_subparsers(dest='command', required=True)
    sub.add_parser('fit', parents=[common], help='fit a semi-discrete potential and latent complex')
    p = sub.add_parser('sample', parents=[common], help='generate samples from fitted artifacts')
    p.add_argument('--count', type=int)
    p.add_argument('--label', type=int)
    p.add_argument('--pipeline', action='store_true', default=None,
                   help='flow the latent samples from t_prime to eps')
    p = sub.add_parser('verify', parents=[common], help='run the verification experiments')
    p.add_argument('--experiments', help='comma separated, from %s' % ','.join(verify.EXPERIMENTS))
    p.add_argument('--plot', action='store_true', default=None)
    p = sub.add_parser('prior-error', parents=[common], help='W2 between a prior and a reference law')
    p.add_argument('--prior')
    p.add_argument('--reference')
    p.add_argument('--entropic', action='store_true', default=None)
    sub.add_parser('info', parents=[common], help='version, fixtures and defaults')
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(levelname)s %(name)s: %(message)s')
    try:
        file_cfg = config.load_config(args.config) if args.config else None
        overrides = {key: getattr(args, flag) for flag, key in FLAGS.items() if hasattr(args, flag)}
        cfg = config.resolve(file_cfg, overrides)
        return COMMANDS[args.command](cfg)
    except (DomainError, UsageError, CapacityError) as e:
        logger.error('usage: %s', e)
        return EXIT_USAGE
    except (ArtifactError, OSError) as e:
        logger.error('io: %s', e)
        return EXIT_IO
    except NumericalError as e:
        logger.error('numerical: %s', e)
        return EXIT_NUMERICAL


if __name__ == '__main__':
    sys.exit(main())
