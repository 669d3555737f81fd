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
import contextlib
import copy
import io
import json
import os
import tempfile
import unittest
from pathlib import Path

from Msfed.main import main, build_parser, _merge_sweep
from Msfed.Core.RunConfig import RunConfig, list_presets, DEFAULTS
from Msfed.Core.MsfedErrors import ConfigError, ParameterError, OperationalError
from Msfed.Utils.MsfedConstants import EXIT_OK, EXIT_INVOCATION, EXIT_CONFIG, EXIT_CONDITION, EXIT_RUNTIME

import logging
logging.basicConfig(filename=os.devnull)  # hides logging that occurs when testing for exceptions

TINY = {
    "name": "tiny",
    "seed": 3,
    "topology": {"builder": "symmetric", "M": 3, "U": 2, "V": 1, "W": 1},
    "data": {"classes": 3, "features": 5, "samples": 16, "eval_samples": 50},
    "model": {"kind": "logistic"},
    "engine": {"lr_local": 0.005, "rounds": 5},
    "latency": {"fading": "deterministic"},
    "theory": {"probes": 5, "trace_every": 2}
}


def quiet(argv):
    with contextlib.redirect_stdout(io.StringIO()) as out, contextlib.redirect_stderr(io.StringIO()):
        status = main(argv)
    return status, out.getvalue()


class CliCase(unittest.TestCase):

    def setUp(self):
        self._folder = tempfile.TemporaryDirectory()
        self.folder = Path(self._folder.name)

    def tearDown(self):
        self._folder.cleanup()

    def write_config(self, document, name="config.json"):
        document = copy.deepcopy(document)
        document.setdefault("out", str(self.folder / "runs"))
        path = self.folder / name
        with open(path, "w") as json_file:
            json.dump(document, json_file)
        return str(path)


class TestRun(CliCase):

    def test_run_writes_directory(self):
        status, _ = quiet(["--Run", "--config", self.write_config(TINY)])
        self.assertEqual(status, EXIT_OK)
        run_dir = self.folder / "runs" / "tiny-seed3"
        for name in ("rounds.csv", "plans.jsonl", "config.json", "summary.json", "msfed_process.log"):
            with self.subTest(name=name):
                self.assertTrue((run_dir / name).is_file())
        with open(run_dir / "rounds.csv") as csv_file:
            lines = [line for line in csv_file.read().splitlines() if line]
        self.assertEqual(len(lines), 6)
        self.assertTrue(lines[0].startswith("t,global_loss"))
        with open(run_dir / "summary.json") as json_file:
            summary = json.load(json_file)
        self.assertEqual(summary['rounds'], 5)
        self.assertEqual(summary['topology']['N'], 10)
        self.assertTrue(summary['conditions']['ok'])
        self.assertIsNotNone(summary['bound'])
        self.assertGreater(summary['cumulative_latency_s'], 0.0)
        with open(run_dir / "plans.jsonl") as plan_file:
            self.assertEqual(len([line for line in plan_file if line.strip()]), 5 * 3)

    def test_runs_are_reproducible(self):
        config = self.write_config(TINY)
        contents = []
        for out in ("first", "second"):
            status, _ = quiet(["--Run", "--config", config, "--out", str(self.folder / out)])
            self.assertEqual(status, EXIT_OK)
            with open(self.folder / out / "tiny-seed3" / "rounds.csv", "rb") as csv_file:
                contents.append(csv_file.read())
        self.assertEqual(contents[0], contents[1])

    def test_seed_override(self):
        status, _ = quiet(["--Run", "--config", self.write_config(TINY), "--seed", "8"])
        self.assertEqual(status, EXIT_OK)
        self.assertTrue((self.folder / "runs" / "tiny-seed8" / "rounds.csv").is_file())

    def test_unsafe_learning_rate(self):
        document = copy.deepcopy(TINY)
        document['engine']['lr_local'] = 10.0
        config = self.write_config(document)
        with self.subTest("refused"):
            status, _ = quiet(["--Run", "--config", config])
            self.assertEqual(status, EXIT_CONDITION)
            self.assertFalse((self.folder / "runs" / "tiny-seed3" / "rounds.csv").exists())
        document['engine']['lr_local'] = 2.0
        config = self.write_config(document, "unsafe.json")
        with self.subTest("allowed"):
            status, _ = quiet(["--Run", "--config", config, "--allow-unsafe-lr"])
            self.assertEqual(status, EXIT_OK)
            with open(self.folder / "runs" / "tiny-seed3" / "summary.json") as json_file:
                summary = json.load(json_file)
            self.assertFalse(summary['conditions']['ok'])
            self.assertEqual(len(summary['bound']['warnings']), 1)

    def test_hfl_has_no_bound(self):
        document = copy.deepcopy(TINY)
        document['engine']['algorithm'] = "hfl"
        status, _ = quiet(["--Run", "--config", self.write_config(document)])
        self.assertEqual(status, EXIT_OK)
        with open(self.folder / "runs" / "tiny-seed3" / "summary.json") as json_file:
            self.assertIsNone(json.load(json_file)['bound'])

    def test_hfl_with_moving_clients(self):
        document = copy.deepcopy(TINY)
        document['topology'].update({"U": 15, "V": 10, "W": 10})
        document['engine'].update({"algorithm": "hfl", "rounds": 3})
        contents = {}
        for name, mobility in (("static", None), ("moving", "mostly-W")):
            document['mobility'] = mobility
            config = self.write_config(document, f"{name}.json")
            with self.assertLogs("Msfed.main", level="INFO") as logs:
                status, _ = quiet(["--Run", "--config", config, "--out", str(self.folder / name)])
            self.assertEqual(status, EXIT_OK)
            self.assertEqual(any("relocate" in line for line in logs.output), mobility is not None)
            with open(self.folder / name / "tiny-seed3" / "rounds.csv", "rb") as csv_file:
                contents[name] = csv_file.read()
        self.assertNotEqual(contents['static'], contents['moving'])

    def test_single_server_refuses_mobility(self):
        document = copy.deepcopy(TINY)
        document['engine']['algorithm'] = "single"
        document['mobility'] = "mostly-U"
        status, _ = quiet(["--Run", "--config", self.write_config(document)])
        self.assertEqual(status, EXIT_CONFIG)
        self.assertFalse((self.folder / "runs" / "tiny-seed3" / "rounds.csv").exists())

    def test_diverging_run_logs_the_cause(self):
        document = copy.deepcopy(TINY)
        document['engine'].update({"mode": "literal", "lr_global": 1e200})
        status, _ = quiet(["--Run", "--config", self.write_config(document), "--allow-unsafe-lr"])
        self.assertEqual(status, EXIT_RUNTIME)
        with open(self.folder / "runs" / "tiny-seed3" / "msfed_process.log") as log_file:
            log = log_file.read()
        self.assertIn("NumericalError", log)
        self.assertIn("non finite", log)


class TestOtherActions(CliCase):

    def test_topo(self):
        status, out = quiet(["--Topo", "--config", "symmetric-fig3", "--out", str(self.folder)])
        self.assertEqual(status, EXIT_OK)
        for m in (1, 2, 3):
            self.assertIn(f"N_{m} = 45", out)
        self.assertIn("{1,2,3}: 10", out)

    def test_list_presets(self):
        status, out = quiet(["--ListPresets"])
        self.assertEqual(status, EXIT_OK)
        for name in ("symmetric-fig3", "five-server", "hfl-baseline"):
            self.assertIn(name, out)

    def test_latency(self):
        status, _ = quiet(["--Latency", "--config", self.write_config(TINY)])
        self.assertEqual(status, EXIT_OK)
        with open(self.folder / "runs" / "tiny-seed3" / "latency.json") as json_file:
            latency = json.load(json_file)
        self.assertEqual(set(latency), {"multi", "single", "hfl", "cfl"})
        self.assertEqual(latency['hfl']['overhead_terms'], 1)

    def test_sweep(self):
        document = copy.deepcopy(TINY)
        document['engine']['rounds'] = 3
        status, _ = quiet(["--Sweep", "E", "1,2", "--config", self.write_config(document)])
        self.assertEqual(status, EXIT_OK)
        sweep_dir = self.folder / "runs" / "tiny-sweep-E"
        with open(sweep_dir / "sweep.csv") as csv_file:
            lines = [line for line in csv_file.read().splitlines() if line]
        self.assertTrue(lines[0].startswith("E,t,"))
        self.assertEqual(len(lines), 1 + 2 * 3)
        self.assertTrue((sweep_dir / "tiny-E-2-seed3" / "summary.json").is_file())
        with open(sweep_dir / "sweep.json") as json_file:
            self.assertEqual([entry['value'] for entry in json.load(json_file)['runs']], [1, 2])

    def test_sweep_in_processes(self):
        document = copy.deepcopy(TINY)
        document['engine']['rounds'] = 3
        config = self.write_config(document)
        status, _ = quiet(["--Sweep", "E", "1,2", "--config", config, "--processes", "2"])
        self.assertEqual(status, EXIT_OK)
        sweep_dir = self.folder / "runs" / "tiny-sweep-E"
        with open(sweep_dir / "sweep.csv") as csv_file:
            lines = [line for line in csv_file.read().splitlines() if line]
        self.assertEqual(len(lines), 1 + 2 * 3)
        self.assertEqual(sorted({line.split(",")[0] for line in lines[1:]}), ["1", "2"])
        for value in (1, 2):
            with self.subTest(E=value):
                self.assertTrue((sweep_dir / f"tiny-E-{value}-seed3" / "summary.json").is_file())

    def test_sweep_merge_needs_every_run(self):
        config = RunConfig(dict(copy.deepcopy(TINY), out=str(self.folder / "missing")))
        with self.assertRaises(OperationalError):
            _merge_sweep(self.folder, "E", [(1, config)])

    def test_invocation_errors(self):
        config = self.write_config(TINY)
        cases = {
            "no action": ["--config", config],
            "two actions": ["--Run", "--Topo", "--config", config],
            "no config": ["--Run"],
            "unknown preset": ["--Run", "--config", "no-such-preset"],
            "unknown axis": ["--Sweep", "momentum", "1,2", "--config", config],
            "text values": ["--Sweep", "E", "one,two", "--config", config],
            "unknown flag": ["--Run", "--config", config, "--fast"],
            "bad mode": ["--Run", "--config", config, "--mode", "median"]
        }
        for name, argv in cases.items():
            with self.subTest(name):
                self.assertEqual(quiet(argv)[0], EXIT_INVOCATION)

    def test_invalid_config(self):
        with self.subTest("schema"):
            self.assertEqual(quiet(["--Run", "--config", self.write_config({"rounds": 5})])[0], EXIT_CONFIG)
        with self.subTest("value"):
            document = copy.deepcopy(TINY)
            document['data']['features'] = 2
            self.assertEqual(quiet(["--Run", "--config", self.write_config(document, "bad.json")])[0], EXIT_CONFIG)
        with self.subTest("does not fit the topology"):
            document = copy.deepcopy(TINY)
            document['strategy'] = {"kind": "unbiased", "scheme": "II", "K": 50}
            self.assertEqual(quiet(["--Run", "--config", self.write_config(document, "big.json")])[0], EXIT_CONFIG)

    def test_parser(self):
        args = build_parser().parse_args(["--Sweep", "K", "5,10", "-c", "symmetric-fig3", "--processes", "2"])
        self.assertEqual(args.Sweep, ["K", "5,10"])
        self.assertEqual(args.config, "symmetric-fig3")
        self.assertEqual(args.processes, 2)
        self.assertFalse(args.allow_unsafe_lr)


class TestRunConfig(unittest.TestCase):

    def test_presets_load(self):
        for name in list_presets():
            with self.subTest(preset=name):
                config = RunConfig.from_file(name)
                topo = config.build_topology()
                config.cross_validate(topo)
                self.assertEqual(config.name, name)
        self.assertEqual(RunConfig.from_file("five-server").build_topology().N, 85)
        self.assertEqual(RunConfig.from_file("asymmetric-fig8").build_topology().summary()['max_overlap'], 3)

    def test_round_trip(self):
        config = RunConfig(TINY)
        self.assertEqual(RunConfig(json.loads(config.dumps())), config)
        self.assertEqual(config.to_dict()['engine']['epochs'], DEFAULTS['engine']['epochs'])

    def test_defaults(self):
        config = RunConfig({})
        self.assertEqual(config.engine_config().mode, "displacement")
        self.assertEqual(config.build_topology().N, 85)
        self.assertIsNone(config.mobility())
        self.assertEqual(config.latency_params().t_global, DEFAULTS['engine']['t_global'])
        self.assertIsNone(RunConfig({"latency": None}).latency_params())

    def test_rejects(self):
        with self.assertRaises(ConfigError):
            RunConfig({"unknown": 1})
        with self.assertRaises(ConfigError):
            RunConfig({"engine": {"lr_local": -1}})
        with self.assertRaises(ConfigError):
            RunConfig({"strategy": {"kind": "unbiased"}})
        with self.assertRaises(ConfigError):
            RunConfig.from_file("no-such-preset")
        with self.assertRaises(ConfigError):
            RunConfig([1, 2])
        with self.assertRaises(ConfigError):
            config = RunConfig({"mobility": "mostly-V", "engine": {"algorithm": "single"}})
            config.cross_validate(config.build_topology())

    def test_strategy_keys(self):
        config = RunConfig({"strategy": {"kind": "biased", "scheme": "II",
                                         "quotas": {"1": {"1": 3}, "2": {"2": 3}, "3": {"3": 3}}}})
        strategy = config.strategy()
        self.assertEqual(strategy.bias(config.build_topology()).quota(2, (2,)), 3)
        per_server = RunConfig({"strategy": {"kind": "unbiased", "K": {"1": 5, "2": 6, "3": 7}}}).strategy()
        self.assertEqual(per_server.K_of(3), 7)

    def test_with_axis(self):
        config = RunConfig(TINY)
        with self.subTest("K switches to sampling"):
            swept = config.with_axis("K", 4)
            self.assertEqual(swept.strategy().kind, "unbiased")
            self.assertEqual(swept.strategy().K, 4)
            self.assertEqual(swept.name, "tiny-K-4")
        with self.subTest("bandwidth"):
            self.assertEqual(config.with_axis("bandwidth", 1e6).latency_params().B_cr, 1e6)
        with self.subTest("learning rate"):
            self.assertEqual(config.with_axis("lr_local", 0.01).engine_config().lr_local, 0.01)
        with self.subTest("unknown"):
            with self.assertRaises(ParameterError):
                config.with_axis("momentum", 0.9)

    def test_override(self):
        config = RunConfig(TINY).override(seed=11, mode="literal", workers=2, name="other")
        self.assertEqual(config.seed, 11)
        self.assertEqual(config.engine_config().mode, "literal")
        self.assertEqual(config.engine_config().workers, 2)
        self.assertEqual(config.name, "other")


if __name__ == '__main__':
    unittest.main()
