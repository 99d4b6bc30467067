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


class MongeFlowError(Exception):
    pass


class DomainError(MongeFlowError, ValueError):
    pass


class SingularityError(DomainError):
    pass


class UsageError(MongeFlowError, ValueError):
    pass


class CapacityError(MongeFlowError, ValueError):
    pass


class ArtifactError(MongeFlowError, OSError):
    pass


class NumericalError(MongeFlowError, ArithmeticError):
    pass


class DivergenceError(NumericalError):
    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f'non-finite state at integration step {step}')


class ConvergenceError(NumericalError):
    def __init__(self, report, message=None):
        self.report = report
        super().__init__(message or
                         f'not converged after {report.iters} iterations, residual {report.residual:.3e}')


class DegeneracyError(NumericalError):
    pass


class CoverageError(NumericalError):
    pass
