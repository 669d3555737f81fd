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

AGGREGATION_MODES = ("displacement", "delta", "literal")
STRATEGIES = ("full", "unbiased", "biased")
SCHEMES = ("I", "II")
ALGORITHMS = ("msfedavg", "hfl", "single")
MODEL_KINDS = ("logistic", "mlp")
FADING_MODES = ("rayleigh", "deterministic")
BANDWIDTH_UNITS = ("total", "per_client")
E_READINGS = ("epochs", "steps")

# class names of area types by the number of servers a client can reach
TYPE_CLASSES = {1: "U", 2: "V", 3: "W"}

# placement of clients, only disc radii are known, everything else is drawn uniform
REGIONAL_DISTANCE_KM = (0.1, 2.0)
CLOUD_DISTANCE_KM = (0.5, 5.0)

# network defaults of the evaluation setup
PATH_LOSS_CONSTANT_DB = 128.1
PATH_LOSS_SLOPE_DB = 37.6
NOISE_DBM = -107.0
POWER_UP_DBM = 23.0
POWER_DOWN_DBM = 23.0
B_RC_HZ = 850e6  # regional server <-> cloud
B_CR_HZ = 475e6  # client <-> regional server
B_CC_HZ = 150e6  # client <-> cloud
BITS_PER_PARAMETER = 32
CFL_CLUSTER_FRACTION = 1 / 20
CFL_RECLUSTER_EVERY = 5
HFL_T_GLOBAL = 5

# mobility settings, probabilities of landing in U, V and W
MOBILITY_SETTINGS = {
    "mostly-U": {"U": 0.5294, "V": 0.3530, "W": 0.1176},
    "mostly-V": {"U": 0.3530, "V": 0.5294, "W": 0.1176},
    "mostly-W": {"U": 0.5294, "V": 0.1176, "W": 0.3530}
}
PROBABILITY_TOLERANCE = 1e-6

DIRICHLET_ALPHA = 0.4
SENSITIVITY_C = (0.5, 1.0, 2.0)

# one row per round, per region gradient norms are appended as grad_norm_sq_m<id>
CSV_HEADER = ("t", "global_loss", "eval_loss", "global_acc", "grad_norm_sq", "latency_s", "cumulative_latency_s",
              "participants", "epochs", "steps", "strategy", "mode")

SWEEP_AXES = ("K", "E", "bandwidth", "lr_local", "lr_global", "alpha", "rounds")

# exit codes of the cli
EXIT_OK = 0
EXIT_INVOCATION = 1
EXIT_CONFIG = 2
EXIT_CONDITION = 3
EXIT_RUNTIME = 4
