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
arguments = {
        "Run":
            {
                "action": "store_true",
                "help": "Runs the experiment of the given --config, writes rounds.csv, plans.jsonl, config.json and summary.json into the run directory"
            },
        "Latency":
            {
                "action": "store_true",
                "help": "Compares the communication latency of the multi server, single server, hierarchical and clustered architectures for the participants of the given --config"
            },
        "Sweep":
            {
                "type": "str",
                "help": "Runs the --config once per value of an axis with the same seed, values are comma separated. Axes: K, E, bandwidth, lr_local, lr_global, alpha, rounds",
                "metavar": ("axis", "values"),
                "nargs": 2
            },
        "Topo":
            {
                "action": "store_true",
                "help": "Prints the topology of the given --config: number of clients, region sizes and clients per area type"
            },
        "ListPresets":
            {
                "action": "store_true",
                "help": "Lists the preset configurations that can be used as --config"
            },
        "config":
            {
                "type": "str",
                "help": "Run configuration, either the path to a json file or the name of a preset",
                "metavar": "path/to/config.json",
                "short": "-c"
            },
        "seed":
            {
                "type": "int",
                "help": "Overwrites the seed of the configuration"
            },
        "out":
            {
                "type": "str",
                "help": "Overwrites the output folder, every run gets its own sub directory in there"
            },
        "mode":
            {
                "type": "str",
                "help": "Overwrites the aggregation mode: 'displacement', 'delta' or 'literal'",
                "choices": ["displacement", "delta", "literal"]
            },
        "workers":
            {
                "type": "int",
                "help": "Number of threads that train clients inside one round, results do not depend on it"
            },
        "processes":
            {
                "type": "int",
                "help": "Number of parallel processes used by --Sweep, should be <= cpu_count",
                "default": 1
            },
        "allow-unsafe-lr":
            {
                "action": "store_true",
                "help": "Turns violated learning rate conditions into warnings instead of aborting the run"
            },
        "debug":
            {
                "action": "store_true",
                "help": "Writes per round details into the process log"
            }
    }
