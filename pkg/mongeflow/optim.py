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
# init/update/get_params triples after jax.example_libraries.optimizers,
# restricted to real arrays


from typing import Any, Callable, NamedTuple, Union
from jax import numpy as jnp


Array = Any
State = Any
Step = int
Schedule = Callable[[Step], float]


class Optimizer(NamedTuple):
  init_fn: Callable[[Array], State]
  update_fn: Callable[[Step, Array, State], State]
  params_fn: Callable[[State], Array]


def sgd(step_size):
  """Plain descent x <- x - lr_k g on a real parameter vector.

  Args:
    step_size: scalar or schedule k -> lr_k.
  """
  step_size = make_schedule(step_size)
  def init(x0):
    return x0
  def update(i, g, x):
    return x - step_size(i) * g
  def get_params(x):
    return x
  return Optimizer(init, update, get_params)


def adam(step_size, b1=0.9, b2=0.999, eps=1e-8):
  """Adam with bias-corrected moments.

  The per-coordinate normalization keeps height updates on the scale of
  lr_k whatever the size of the mass residuals.

  Args:
    step_size: scalar or schedule k -> lr_k.
    b1: first moment decay.
    b2: second moment decay.
    eps: added to the root second moment.
  """
  step_size = make_schedule(step_size)
  def init(x0):
    return x0, jnp.zeros_like(x0), jnp.zeros_like(x0)
  def update(i, g, state):
    x, m, v = state
    m = b1 * m + (1 - b1) * g
    v = b2 * v + (1 - b2) * g**2
    mhat = m / (1 - b1 ** (i + 1))
    vhat = v / (1 - b2 ** (i + 1))
    return x - step_size(i) * mhat / (jnp.sqrt(vhat) + eps), m, v
  def get_params(state):
    return state[0]
  return Optimizer(init, update, get_params)


OPTIMIZERS = {'sgd': sgd, 'adam': adam}


### step size schedules

def constant(step_size) -> Schedule:
  def schedule(i):
    return step_size
  return schedule

def inverse_sqrt_decay(step_size, decay_steps=1) -> Schedule:
  """lr / sqrt(1 + k / decay_steps)"""
  def schedule(i):
    return step_size / jnp.sqrt(1 + i / decay_steps)
  return schedule

def make_schedule(scalar_or_schedule: Union[float, Schedule]) -> Schedule:
  if callable(scalar_or_schedule):
    return scalar_or_schedule
  if jnp.ndim(scalar_or_schedule) == 0:
    return constant(scalar_or_schedule)
  raise TypeError(type(scalar_or_schedule))
