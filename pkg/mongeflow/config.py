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

import os
import numpy as np
from mongeflow import schedule as sch
from mongeflow.errors import UsageError
from mongeflow.util import load_json


OUT_ENV = 'MONGEFLOW_OUT'

# flat schema, the default's type decides coercion; None defaults take any scalar
DEFAULTS = {
    # schedule
    'beta_min': 0.2,
    'beta_max': 10.,
    't_max': 1.,
    'eps': 1e-3,
    'panels': 1024,
    # data
    'cloud': 'fixture:two_cluster8',
    't_prime': None,
    'n_targets': 64,
    # sdot
    'sdot_tol': 5e-3,
    'sdot_mc_samples': None,
    'sdot_max_iters': 2000,
    'sdot_lr': None,
    'sdot_method': 'adam',
    'sdot_refine_iters': 8,
    # latent
    'angle_threshold': float(np.pi / 2),
    # flow
    'flow_steps': 512,
    'lipschitz': None,
    # verify
    'experiments': ['deviation', 'contraction', 'decay', 'stability', 'pipeline'],
    'samples': None,
    # sample
    'count': 1000,
    'label': None,
    'pipeline': False,
    # prior-error
    'prior': 'gaussian',
    'reference': 'marginal',
    'entropic': False,
    'reg': 0.05,
    # artifacts
    'potential': None,
    'complex': None,
    'seed': 0,
    'workers': 1,
    'out': None,
    'plot': False,
}


def load_config(path):
    '''flat JSON object of config keys'''
    cfg = load_json(path)
    if not isinstance(cfg, dict):
        raise UsageError(f'{path}: config must be a JSON object, got {type(cfg).__name__}')
    return cfg


def _coerce(key, value):
    default = DEFAULTS[key]
    if value is None or default is None:
        return value
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                if value.lower() not in ('true', 'false', '1', '0'):
                    raise ValueError(value)
                return value.lower() in ('true', '1')
            return bool(value)
        if isinstance(default, int):
            if float(value) != int(float(value)):
                raise ValueError(value)
            return int(float(value))
        if isinstance(default, float):
            return float(value)
        if isinstance(default, list):
            if isinstance(value, str):
                return [v.strip() for v in value.split(',') if v.strip()]
            return [str(v) for v in value]
        return str(value)
    except (TypeError, ValueError):
        raise UsageError(f'config key {key}: cannot read {value!r} as {type(default).__name__}')


def resolve(file_cfg=None, overrides=None):
    '''defaults < config file < flags; flags set to None are ignored'''
    cfg = dict(DEFAULTS)
    if os.environ.get(OUT_ENV):
        cfg['out'] = os.environ[OUT_ENV]
    layers = [file_cfg or {}, {k: v for k, v in (overrides or {}).items() if v is not None}]
    for layer in layers:
        unknown = sorted(set(layer) - set(DEFAULTS))
        if unknown:
            raise UsageError(f'unknown config keys {unknown}')
        cfg.update({k: _coerce(k, v) for k, v in layer.items()})
    if cfg['workers'] < 1:
        raise UsageError('workers must be positive, got %d' % cfg['workers'])
    if cfg['out'] is None:
        cfg['out'] = 'mongeflow_out'
    return cfg


def schedule_of(cfg):
    return sch.vp_schedule(cfg['beta_min'], cfg['beta_max'], cfg['t_max'], cfg['eps'], cfg['panels'])
