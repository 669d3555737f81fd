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
Transmission latency of one training round for the four architectures: multi server, single server (cloud),
hierarchical (regional rounds plus a periodic cloud sync) and clustered (regional rounds plus periodic
re-clustering). Local computation is not counted. In every architecture the slowest upload and the slowest
download govern the round
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from Msfed.Core.MsfedErrors import LatencyError, ParameterError
from Msfed.Core.MsfedUtility import rng_stream
from Msfed.Core.Participation import ParticipationPlan
from Msfed.Utils.MsfedConstants import PATH_LOSS_CONSTANT_DB, PATH_LOSS_SLOPE_DB, NOISE_DBM, POWER_UP_DBM, \
    POWER_DOWN_DBM, B_RC_HZ, B_CR_HZ, B_CC_HZ, BITS_PER_PARAMETER, CFL_CLUSTER_FRACTION, CFL_RECLUSTER_EVERY, \
    HFL_T_GLOBAL, FADING_MODES, BANDWIDTH_UNITS

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LatencyParams:
    B_cr: float = B_CR_HZ
    B_rc: float = B_RC_HZ
    B_cc: float = B_CC_HZ
    p_up_dbm: float = POWER_UP_DBM
    p_down_dbm: float = POWER_DOWN_DBM
    noise_dbm: float = NOISE_DBM
    q_bits: float = None  # None: 32 bit per model parameter
    fading: str = "rayleigh"
    units: str = "total"  # 'per_client': the bandwidths already are the share of one client
    t_global: int = HFL_T_GLOBAL
    cfl_recluster_every: int = CFL_RECLUSTER_EVERY
    cfl_cluster_fraction: float = CFL_CLUSTER_FRACTION

    def __post_init__(self):
        for name in ("B_cr", "B_rc", "B_cc"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"bandwidth {name} must be positive, got {getattr(self, name)}")
        if self.q_bits is not None and not self.q_bits > 0:
            raise ParameterError(f"model size q must be positive, got {self.q_bits}")
        if self.fading not in FADING_MODES:
            raise ParameterError(f"unknown fading mode '{self.fading}'")
        if self.units not in BANDWIDTH_UNITS:
            raise ParameterError(f"unknown bandwidth units '{self.units}'")
        if self.t_global < 1 or self.cfl_recluster_every < 1:
            raise ParameterError("t_global and cfl_recluster_every must be at least 1")
        if self.cfl_cluster_fraction < 0:
            raise ParameterError("cfl_cluster_fraction must not be negative")

    def payload(self, n_params: int = None) -> float:
        if self.q_bits is not None:
            return float(self.q_bits)
        if n_params is None:
            raise LatencyError("no model size given, set q_bits or pass the parameter count")
        return float(BITS_PER_PARAMETER * n_params)

    def share(self, total: float, users: int) -> float:
        """
        Bandwidth of one link when `users` transmit at the same time
        """
        if self.units == "per_client":
            return float(total)
        if users < 1:
            raise LatencyError("no transmitting users to share the bandwidth")
        return float(total) / users

    def to_dict(self) -> dict:
        return {"B_cr": self.B_cr, "B_rc": self.B_rc, "B_cc": self.B_cc, "p_up_dbm": self.p_up_dbm,
                "p_down_dbm": self.p_down_dbm, "noise_dbm": self.noise_dbm, "q_bits": self.q_bits,
                "fading": self.fading, "units": self.units, "t_global": self.t_global,
                "cfl_recluster_every": self.cfl_recluster_every, "cfl_cluster_fraction": self.cfl_cluster_fraction}


@dataclass
class LatencyBreakdown:
    architecture: str
    per_round: list = field(default_factory=list)  # seconds, overhead included
    overhead: list = field(default_factory=list)  # (round, seconds) of global syncs or re-clustering

    @property
    def total(self) -> float:
        return float(sum(self.per_round))

    @property
    def overhead_total(self) -> float:
        return float(sum(seconds for _, seconds in self.overhead))

    def to_dict(self) -> dict:
        return {"architecture": self.architecture,
                "rounds": len(self.per_round),
                "total_s": self.total,
                "overhead_terms": len(self.overhead),
                "overhead_s": self.overhead_total,
                "per_round_s": list(self.per_round)}


def path_loss_db(d_km: float) -> float:
    if not d_km > 0:
        raise LatencyError(f"distance must be positive, got {d_km}")
    return PATH_LOSS_CONSTANT_DB + PATH_LOSS_SLOPE_DB * np.log10(d_km)


def dbm_to_mw(p_dbm: float) -> float:
    return 10.0 ** (p_dbm / 10.0)


def link_rate(p_dbm: float, d_km: float, noise_dbm: float = NOISE_DBM, fading: float = 1.0, snr: float = None) -> float:
    """
    Spectral efficiency of one link, log2(1 + p|g|^2 / noise) with |g|^2 from the path loss times a fading
    power draw

    :param float p_dbm: transmit power
    :param float d_km: distance in km
    :param float noise_dbm: noise power
    :param float fading: fading power, 1 for deterministic channels
    :param float snr: overrides the whole channel, for tests
    :return: bits/s/Hz
    :rtype: float
    """
    if snr is None:
        gain = 10.0 ** (-path_loss_db(d_km) / 10.0) * fading
        snr = dbm_to_mw(p_dbm) * gain / dbm_to_mw(noise_dbm)
    elif not d_km > 0:
        raise LatencyError(f"distance must be positive, got {d_km}")
    return float(np.log2(1.0 + snr))


def transmission_latency(rates_up, rates_down, q: float, b: float) -> float:
    """
    The slowest upload plus the slowest download, each link needs q / (b * r) seconds
    """
    rates_up = np.asarray(list(rates_up), dtype=float)
    rates_down = np.asarray(list(rates_down), dtype=float)
    if rates_up.size == 0 or rates_down.size == 0:
        raise LatencyError("a round without links has no latency")
    if not b > 0 or not q > 0:
        raise LatencyError(f"bandwidth and model size must be positive, got b={b}, q={q}")
    with np.errstate(divide="ignore"):
        upload = np.max(q / (b * rates_up))
        download = np.max(q / (b * rates_down))
    return float(upload + download)


def _fading(params: LatencyParams, rng, count: int) -> np.ndarray:
    if params.fading == "deterministic" or rng is None:
        return np.ones(count)
    return rng.exponential(1.0, size=count)


def _participants(plan) -> list:
    if hasattr(plan, "participants"):
        return plan.participants()
    return sorted(set(plan))


def round_latency_multi(topo, plan, params: LatencyParams, n_params: int = None, rng=None) -> float:
    """
    Clients upload only to the servers that sampled them but download from every server they can reach

    :param Topology topo: the topology of this round
    :param ParticipationPlan plan: who trains this round
    :param LatencyParams params: network parameters
    :param int n_params: model size in parameters, used when params.q_bits is not set
    :param np.random.Generator rng: fading stream of the round
    :rtype: float
    """
    participants = plan.participants()
    if not participants:
        raise LatencyError("empty plan")
    b = params.share(params.B_cr, len(participants))
    q = params.payload(n_params)
    up_links = [(i, m) for m in plan.servers for i in sorted(set(plan.clients[m]))]
    down_links = [(i, m) for i in participants for m in topo.client(i).type]
    fades = _fading(params, rng, len(up_links) + len(down_links))
    rates_up = [link_rate(params.p_up_dbm, topo.client(i).dist_regional[m], params.noise_dbm, fades[k])
                for k, (i, m) in enumerate(up_links)]
    offset = len(up_links)
    rates_down = [link_rate(params.p_down_dbm, topo.client(i).dist_regional[m], params.noise_dbm, fades[offset + k])
                  for k, (i, m) in enumerate(down_links)]
    return transmission_latency(rates_up, rates_down, q, b)


def round_latency_single(topo, plan, params: LatencyParams, n_params: int = None, rng=None) -> float:
    """
    Every participant talks directly with the cloud, bandwidth comes from B_cc
    """
    participants = _participants(plan)
    if not participants:
        raise LatencyError("empty plan")
    b = params.share(params.B_cc, len(participants))
    q = params.payload(n_params)
    fades = _fading(params, rng, 2 * len(participants))
    rates_up = [link_rate(params.p_up_dbm, topo.client(i).dist_cloud, params.noise_dbm, fades[k])
                for k, i in enumerate(participants)]
    rates_down = [link_rate(params.p_down_dbm, topo.client(i).dist_cloud, params.noise_dbm, fades[len(participants) + k])
                  for k, i in enumerate(participants)]
    return transmission_latency(rates_up, rates_down, q, b)


def global_aggregation_latency(topo, params: LatencyParams, n_params: int = None, rng=None) -> float:
    """
    Regional servers exchange their models with the cloud, B_rc shared by the M servers
    """
    b = params.share(params.B_rc, topo.M)
    q = params.payload(n_params)
    distances = topo.server_cloud_dist
    servers = sorted(distances)
    fades = _fading(params, rng, 2 * len(servers))
    rates_up = [link_rate(params.p_up_dbm, distances[m], params.noise_dbm, fades[k]) for k, m in enumerate(servers)]
    rates_down = [link_rate(params.p_down_dbm, distances[m], params.noise_dbm, fades[len(servers) + k])
                  for k, m in enumerate(servers)]
    return transmission_latency(rates_up, rates_down, q, b)


def is_sync_round(t: int, period: int) -> bool:
    # rounds count from 0, the sync happens after every `period` finished rounds
    return (t + 1) % period == 0


def round_latency_hfl(topo, plan, params: LatencyParams, t: int, n_params: int = None, rng=None):
    """
    One hierarchical round on a topology where every client has exactly one server, plus the cloud sync
    when the round closes a period of t_global rounds

    :return: round latency and the global term inside it (0 if there was no sync)
    :rtype: (float, float)
    """
    regional = round_latency_multi(topo, plan, params, n_params, rng)
    glob = 0.0
    if is_sync_round(t, params.t_global):
        glob = global_aggregation_latency(topo, params, n_params, rng)
    return regional + glob, glob


def total_latency_hfl(topo, plans, params: LatencyParams, n_params: int = None, seed: int = None) -> LatencyBreakdown:
    breakdown = LatencyBreakdown("hfl")
    for plan in plans:
        rng = None if seed is None else rng_stream(seed, "fading-hfl", plan.t)
        seconds, glob = round_latency_hfl(topo, plan, params, plan.t, n_params, rng)
        breakdown.per_round.append(seconds)
        if glob > 0:
            breakdown.overhead.append((plan.t, glob))
    return breakdown


def total_latency_cfl(topo, plans, params: LatencyParams, n_params: int = None, seed: int = None) -> LatencyBreakdown:
    """
    Clustered training, each cluster trains like a region and every cfl_recluster_every rounds the clients
    are re-clustered, which costs cfl_cluster_fraction of that round
    """
    breakdown = LatencyBreakdown("cfl")
    for plan in plans:
        rng = None if seed is None else rng_stream(seed, "fading-cfl", plan.t)
        seconds = round_latency_multi(topo, plan, params, n_params, rng)
        if is_sync_round(plan.t, params.cfl_recluster_every):
            cluster = params.cfl_cluster_fraction * seconds
            seconds += cluster
            breakdown.overhead.append((plan.t, cluster))
        breakdown.per_round.append(seconds)
    return breakdown


def restrict_plan(plan, topo):
    """
    The same participants as plan but every client reports only to the servers it has in topo, used to
    compare architectures with identical participants
    """
    clients, per_type = {}, {}
    for m in topo.servers:
        ids = tuple(i for i in plan.participants() if m in topo.client(i).type)
        if ids:
            clients[m] = ids
            counts = {}
            for i in ids:
                counts[topo.client(i).type] = counts.get(topo.client(i).type, 0) + 1
            per_type[m] = counts
    return ParticipationPlan(plan.t, plan.strategy, clients, per_type)


def architecture_comparison(topo, plans, params: LatencyParams, n_params: int = None, seed: int = None) -> dict:
    """
    Runs the latency model of all four architectures over the same participants per round

    :param Topology topo: the multi server topology
    :param list plans: one ParticipationPlan per round, defines who participates
    :param LatencyParams params: network parameters
    :param int n_params: model size in parameters
    :param int seed: seed of the fading streams, None for no fading draws
    :return: architecture -> LatencyBreakdown
    :rtype: dict
    """
    plans = list(plans)
    lowest = topo.lowest_server_topology()
    single = LatencyBreakdown("single")
    multi = LatencyBreakdown("multi")
    for plan in plans:
        rng = None if seed is None else rng_stream(seed, "fading", plan.t)
        multi.per_round.append(round_latency_multi(topo, plan, params, n_params, rng))
        rng = None if seed is None else rng_stream(seed, "fading-single", plan.t)
        single.per_round.append(round_latency_single(topo, plan, params, n_params, rng))
    regional_plans = [restrict_plan(plan, lowest) for plan in plans]
    hfl = total_latency_hfl(lowest, regional_plans, params, n_params, seed)
    cfl = total_latency_cfl(lowest, regional_plans, params, n_params, seed)
    logger.info(f"latency over {len(plans)} rounds: multi {multi.total:.4g}s, single {single.total:.4g}s, "
                f"hfl {hfl.total:.4g}s, cfl {cfl.total:.4g}s")
    return {"multi": multi, "single": single, "hfl": hfl, "cfl": cfl}
