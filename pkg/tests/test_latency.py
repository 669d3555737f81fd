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
import os
import unittest

import numpy as np

from Msfed.Core.Latency import LatencyParams, path_loss_db, dbm_to_mw, link_rate, transmission_latency, \
    round_latency_multi, round_latency_single, global_aggregation_latency, is_sync_round, round_latency_hfl, \
    total_latency_hfl, total_latency_cfl, restrict_plan, architecture_comparison
from Msfed.Core.Participation import sample_full, sample_unbiased
from Msfed.Core.Topology import build_symmetric, build_custom
from Msfed.Core.MsfedUtility import rng_stream
from Msfed.Core.MsfedErrors import LatencyError, ParameterError

import logging
logging.basicConfig(filename=os.devnull)  # hides logging that occurs when testing for exceptions

FLAT = LatencyParams(fading="deterministic")


class TestLinkArithmetic(unittest.TestCase):

    def test_path_loss_at_one_km(self):
        self.assertAlmostEqual(path_loss_db(1.0), 128.1, delta=1e-9)
        self.assertAlmostEqual(path_loss_db(10.0), 128.1 + 37.6, delta=1e-9)

    def test_forced_snr(self):
        self.assertAlmostEqual(link_rate(23.0, 1.0, snr=3.0), 2.0, delta=1e-9)
        self.assertAlmostEqual(link_rate(23.0, 1.0, snr=0.0), 0.0, delta=1e-12)

    def test_dbm(self):
        self.assertAlmostEqual(dbm_to_mw(0.0), 1.0)
        self.assertAlmostEqual(dbm_to_mw(10.0), 10.0)
        self.assertAlmostEqual(dbm_to_mw(-30.0), 1e-3)

    def test_rate_from_channel(self):
        snr = dbm_to_mw(23.0) * 10.0 ** (-128.1 / 10.0) / dbm_to_mw(-107.0)
        self.assertAlmostEqual(link_rate(23.0, 1.0, -107.0), float(np.log2(1.0 + snr)), delta=1e-12)

    def test_two_client_round(self):
        self.assertAlmostEqual(transmission_latency([2.0, 1.0], [2.0, 1.0], 1e6, 1e7), 0.2, delta=1e-9)

    def test_zero_rate_is_infinite(self):
        self.assertEqual(transmission_latency([0.0, 1.0], [1.0], 1e6, 1e7), float("inf"))

    def test_errors(self):
        with self.assertRaises(LatencyError):
            path_loss_db(0.0)
        with self.assertRaises(LatencyError):
            link_rate(23.0, -1.0, snr=3.0)
        with self.assertRaises(LatencyError):
            transmission_latency([], [1.0], 1e6, 1e7)
        with self.assertRaises(LatencyError):
            transmission_latency([1.0], [1.0], 1e6, 0.0)

    def test_monotone_in_distance(self):
        rng = np.random.default_rng(5)
        for d in rng.uniform(0.05, 2.0, 20):
            with self.subTest(d=d):
                self.assertGreater(link_rate(23.0, d), link_rate(23.0, 2 * d))


class TestLatencyParams(unittest.TestCase):

    def test_validation(self):
        with self.assertRaises(ParameterError):
            LatencyParams(B_cr=0.0)
        with self.assertRaises(ParameterError):
            LatencyParams(fading="nakagami")
        with self.assertRaises(ParameterError):
            LatencyParams(q_bits=-1.0)
        with self.assertRaises(ParameterError):
            LatencyParams(t_global=0)

    def test_payload(self):
        self.assertEqual(LatencyParams().payload(210), 32 * 210)
        self.assertEqual(LatencyParams(q_bits=1e6).payload(210), 1e6)
        with self.assertRaises(LatencyError):
            LatencyParams().payload()

    def test_share(self):
        self.assertEqual(LatencyParams().share(100.0, 4), 25.0)
        self.assertEqual(LatencyParams(units="per_client").share(100.0, 4), 100.0)
        with self.assertRaises(LatencyError):
            LatencyParams().share(100.0, 0)


class TestRoundLatency(unittest.TestCase):

    def setUp(self):
        self.topo = build_symmetric(3, 5, 3, 2, seed=2)
        self.plan = sample_full(self.topo)

    def test_single_server_by_hand(self):
        topo = build_custom(1, {(1,): 2}, seed=3)
        plan = sample_full(topo)
        q = FLAT.payload(100)
        b = FLAT.B_cc / 2
        up = [link_rate(FLAT.p_up_dbm, topo.client(i).dist_cloud, FLAT.noise_dbm) for i in (0, 1)]
        down = [link_rate(FLAT.p_down_dbm, topo.client(i).dist_cloud, FLAT.noise_dbm) for i in (0, 1)]
        expected = max(q / (b * r) for r in up) + max(q / (b * r) for r in down)
        self.assertAlmostEqual(round_latency_single(topo, plan, FLAT, 100), expected, delta=1e-12)

    def test_monotone_in_bandwidth_and_size(self):
        for seed in range(5):
            topo = build_symmetric(3, 5, 3, 2, seed=seed)
            plan = sample_unbiased(topo, 4, "II", seed=seed)
            with self.subTest(seed=seed, axis="bandwidth"):
                narrow = round_latency_multi(topo, plan, LatencyParams(B_cr=1e6, fading="deterministic"), 210)
                wide = round_latency_multi(topo, plan, LatencyParams(B_cr=2e6, fading="deterministic"), 210)
                self.assertGreater(narrow, wide)
                self.assertAlmostEqual(narrow, 2 * wide, delta=1e-9 * narrow)
            with self.subTest(seed=seed, axis="model size"):
                small = round_latency_multi(topo, plan, LatencyParams(q_bits=1e5, fading="deterministic"))
                large = round_latency_multi(topo, plan, LatencyParams(q_bits=2e5, fading="deterministic"))
                self.assertGreater(large, small)

    def test_fading_reproducible(self):
        first = round_latency_multi(self.topo, self.plan, LatencyParams(), 210, rng_stream(1, "fading", 0))
        second = round_latency_multi(self.topo, self.plan, LatencyParams(), 210, rng_stream(1, "fading", 0))
        self.assertEqual(first, second)
        self.assertGreater(first, 0.0)

    def test_sync_rounds(self):
        self.assertEqual([t for t in range(12) if is_sync_round(t, 5)], [4, 9])
        self.assertTrue(all(is_sync_round(t, 1) for t in range(4)))

    def test_hfl_round(self):
        lowest = self.topo.lowest_server_topology()
        plan = sample_full(lowest, 4)
        params = LatencyParams(fading="deterministic", t_global=5)
        seconds, glob = round_latency_hfl(lowest, plan, params, 4, 210)
        self.assertAlmostEqual(glob, global_aggregation_latency(lowest, params, 210), delta=1e-15)
        self.assertAlmostEqual(seconds, round_latency_multi(lowest, plan, params, 210) + glob, delta=1e-12)
        self.assertEqual(round_latency_hfl(lowest, sample_full(lowest, 3), params, 3, 210)[1], 0.0)

    def test_hfl_global_terms(self):
        lowest = self.topo.lowest_server_topology()
        for T in (3, 5, 12, 23):
            for t_global in (1, 5, 7):
                with self.subTest(T=T, t_global=t_global):
                    plans = [sample_full(lowest, t) for t in range(T)]
                    params = LatencyParams(fading="deterministic", t_global=t_global)
                    breakdown = total_latency_hfl(lowest, plans, params, 210)
                    self.assertEqual(len(breakdown.overhead), T // t_global)
                    self.assertEqual(len(breakdown.per_round), T)

    def test_cfl_overhead(self):
        lowest = self.topo.lowest_server_topology()
        plans = [sample_full(lowest, t) for t in range(10)]
        params = LatencyParams(fading="deterministic")
        breakdown = total_latency_cfl(lowest, plans, params, 210)
        self.assertEqual(len(breakdown.overhead), 2)
        base = round_latency_multi(lowest, plans[4], params, 210)
        self.assertAlmostEqual(breakdown.overhead[0][1], params.cfl_cluster_fraction * base, delta=1e-15)


class TestArchitectureComparison(unittest.TestCase):

    def test_restrict_plan(self):
        topo = build_symmetric(3, 5, 3, 2)
        plan = sample_unbiased(topo, 6, "II", seed=1)
        restricted = restrict_plan(plan, topo.lowest_server_topology())
        ids = [i for m in restricted.servers for i in restricted.clients[m]]
        self.assertEqual(sorted(ids), plan.participants())

    def test_all_architectures(self):
        topo = build_symmetric(3, 5, 3, 2)
        plans = [sample_full(topo, t) for t in range(10)]
        result = architecture_comparison(topo, plans, LatencyParams(), 210, seed=4)
        self.assertEqual(set(result), {"multi", "single", "hfl", "cfl"})
        for name, breakdown in result.items():
            with self.subTest(name=name):
                self.assertEqual(len(breakdown.per_round), 10)
                self.assertGreater(breakdown.total, 0.0)
                self.assertEqual(breakdown.to_dict()['rounds'], 10)
        self.assertEqual(len(result['hfl'].overhead), 2)
        self.assertEqual(result['multi'].overhead_total, 0.0)


if __name__ == '__main__':
    unittest.main()
