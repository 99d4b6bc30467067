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
from mongeflow.mixture import make_cloud
from mongeflow.errors import UsageError


def line_pair():
    '''1D {-1, +1}'''
    return make_cloud([[-1.], [1.]])


def line_irregular8():
    return make_cloud([[-2.1], [-1.3], [-0.9], [-0.2], [0.35], [0.8], [1.6], [2.4]])


def two_cluster8():
    '''two labeled clusters of 4 on opposite rays from the origin'''
    a = [[1.5, 1.0], [1.8, 0.7], [1.2, 1.3], [1.7, 1.25]]
    b = [[-1.5, -1.0], [-1.8, -0.6], [-1.3, -1.3], [-1.6, -1.2]]
    return make_cloud(a + b, [0] * 4 + [1] * 4)


def grid_with_holes64():
    '''10 x 10 grid on [-1, 1]^2 without its central 6 x 6 block'''
    g = np.linspace(-1., 1., 10)
    xx, yy = np.meshgrid(g, g, indexing='ij')
    ring = np.ones((10, 10), dtype=bool)
    ring[2:8, 2:8] = False
    return make_cloud(np.stack([xx[ring], yy[ring]], axis=1))


FIXTURES = {
    'line_pair': line_pair,
    'line_irregular8': line_irregular8,
    'two_cluster8': two_cluster8,
    'grid_with_holes64': grid_with_holes64,
}


def load(name):
    if name not in FIXTURES:
        raise UsageError(f'unknown fixture {name}, choose from {sorted(FIXTURES)}')
    return FIXTURES[name]()
