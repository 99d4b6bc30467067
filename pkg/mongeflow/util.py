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

import json
import hashlib
import numpy as np
from jax import random
from concurrent.futures import ThreadPoolExecutor
from mongeflow.errors import ArtifactError


def prng_key(seed):
    '''integer seeds become PRNG keys, keys pass through'''
    if isinstance(seed, (int, np.integer)):
        return random.PRNGKey(int(seed))
    return seed


def split_sizes(total, chunk):
    '''chunk sizes covering `total`, all equal to `chunk` but the last'''
    sizes = [chunk] * (total // chunk)
    if total % chunk:
        sizes.append(total % chunk)
    return sizes


def parallel_map(fn, items, workers=1):
    '''order preserving map, threaded when workers > 1'''
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def jsonify(obj):
    if isinstance(obj, dict):
        return {str(k): jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonify(v) for v in obj]
    if hasattr(obj, 'shape') and hasattr(obj, 'dtype'):
        return jsonify(np.asarray(obj).tolist())
    if isinstance(obj, (np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        # NaN marks absent values, infinities are not valid JSON either
        return obj if np.isfinite(obj) else None
    return obj


def dump_json(obj, path):
    text = json.dumps(jsonify(obj), indent=2, sort_keys=True, allow_nan=False)
    with open(path, 'w') as f:
        f.write(text + '\n')


def load_json(path):
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ArtifactError(f'{path}: line {e.lineno}: {e.msg}')
    except (OSError, UnicodeDecodeError) as e:
        raise ArtifactError(f'{path}: {e}')


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, 'rb') as f:
        for block in iter(lambda: f.read(1 << 16), b''):
            h.update(block)
    return h.hexdigest()
