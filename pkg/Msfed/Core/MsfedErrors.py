#!/usr/bin/env python
# coding: utf-8

# Copyright 2022 by Leipzig University Library, http://ub.uni-leipzig.de
#                   JP Kanter, <kanter@ub.uni-leipzig.de>
#
# This file is part of the Msfed simulator.
#
# This program is free software: you can redistribute
# it and/or modify it under the terms of the GNU General Public
# License as published by the Free Software Foundation, either
# version 3 of the License, or (at your option) any later version.
#
# This program is distributed in the hope that it will
# be useful, but WITHOUT ANY WARRANTY; without even the implied warranty
# of MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with Msfed.  If not, see <http://www.gnu.org/licenses/>.
#
# @license GPL-3.0-only <https://www.gnu.org/licenses/gpl-3.0.en.html>

"""
The exceptions of the simulator, one per layer more or less. Library code raises them, the cli catches
them and translates them into exit codes, see Msfed.main
"""


class ParameterError(ValueError):
    def __repr__(self):
        return "The given parameter lead to an outcome that did not work"


class TopologyError(Exception):
    def __repr__(self):
        return "A topology would break one of its invariants, like an empty or out of range area type"


class DataError(Exception):
    def __repr__(self):
        return "The provided data do not work in the given context"


class ShapeError(ValueError):
    def __repr__(self):
        return "A parameter vector does not fit the model it is used with"


class ParticipationError(Exception):
    def __repr__(self):
        return "The requested client sampling cannot be fulfilled by the topology"


class EngineError(Exception):
    def __repr__(self):
        return "A training round could not be executed"


class LatencyError(Exception):
    def __repr__(self):
        return "Latency could not be computed for the given links or parameters"


class TheoryError(Exception):
    def __repr__(self):
        return "Theory diagnostics got inputs they cannot work with, negative constants or an empty trace"


class ConditionError(Exception):
    """
    Raised when learning rates violate the convergence preconditions. Carries the names of the violated
    conditions so the cli can print them
    """
    def __init__(self, message, violated=None):
        super().__init__(message)
        self.violated = list(violated or [])

    def __repr__(self):
        return f"Learning rate preconditions violated: {', '.join(self.violated)}"


class ConfigError(Exception):
    def __repr__(self):
        return "The run configuration could not be loaded, validated or cross checked"


class OperationalError(Exception):
    def __repr__(self):
        return "Something that stops the overall operation from proceeding"


class NumericalError(ArithmeticError):
    def __repr__(self):
        return "Parameters became non finite, usually a diverging learning rate or aggregation mode"
