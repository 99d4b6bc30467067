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

"""Install mongeflow"""

from setuptools import setup, find_packages

_dct = {}
with open('mongeflow/version.py') as f:
    exec(f.read(), _dct)
__version__ = _dct['__version__']

setup(name='mongeflow',
    version=__version__,
    description='optimal transport priors and exact-score probability flows for diffusion models',
    author='Mongeflow team',
    packages=find_packages(exclude=['tests']),
    install_requires=[
        'jax>=0.4.1',
        'jaxlib>=0.4.1',
        'flax>=0.6.0',
        'numpy',
        'scipy>=1.6',
        'pandas',
        'POT>=0.8',
        'seaborn',
    ],
    extras_require={
        'dev': [
            'pytest',
        ],
    },
    entry_points={
        'console_scripts': ['mongeflow=mongeflow.cli:main'],
    },
    license='Apache-2.0',
)
