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
Client sampling per round and server. Scheme I draws with replacement, scheme II without. Unbiased sampling
draws from the whole region, biased sampling fills a fixed quota per area type. Every server has its own
random stream keyed by (seed, round, server), unless the plan is shared
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from Msfed.Core.MsfedErrors import ParticipationError, ParameterError
from Msfed.Core.MsfedUtility import rng_stream, theta_key, theta_to_str, type_class
from Msfed.Utils.MsfedConstants import STRATEGIES, SCHEMES

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ParticipationPlan:
    t: int
    strategy: str
    clients: dict  # server -> sorted tuple of client ids, a multiset under scheme I
    per_type: dict  # server -> {area type: count}

    def K(self, m: int) -> int:
        return len(self.clients[m])

    @property
    def servers(self) -> list:
        return sorted(self.clients)

    def participants(self) -> list:
        """
        Distinct clients that train this round, in id order
        """
        distinct = set()
        for ids in self.clients.values():
            distinct.update(ids)
        return sorted(distinct)

    def sampled_by(self, client_id: int) -> list:
        return [m for m in sorted(self.clients) if client_id in self.clients[m]]

    def to_records(self) -> list:
        return [{"t": self.t,
                 "m": m,
                 "strategy": self.strategy,
                 "clients": list(self.clients[m]),
                 "per_type": {theta_to_str(theta): count for theta, count in self.per_type[m].items()}}
                for m in sorted(self.clients)]


def _count_types(topo, m: int, ids) -> dict:
    counts = {theta: 0 for theta in topo.types_of(m)}
    for i in ids:
        counts[topo.client(i).type] += 1
    return counts


class BiasSpec:
    """
    Fixed quota K_{m,theta} per server and area type
    """
    def __init__(self, quotas: dict, K=None):
        """
        :param dict quotas: server -> {area type: quota}
        :param int or dict K: optional expected K_m per server (or one for all), checked against the quota sums
        """
        self.quotas = {}
        for m, per_type in quotas.items():
            self.quotas[int(m)] = {theta_key(theta): int(count) for theta, count in per_type.items()}
            for theta, count in self.quotas[int(m)].items():
                if count < 0:
                    raise ParticipationError(f"negative quota {count} for server {m}, type {theta}")
                if int(m) not in theta:
                    raise ParticipationError(f"server {m} cannot sample area type {theta}, it does not cover it")
        if K is not None:
            for m in self.quotas:
                expected = K if isinstance(K, (int, np.integer)) else K[m]
                if self.K(m) != expected:
                    raise ParticipationError(f"quotas of server {m} sum to {self.K(m)}, expected K_m = {expected}")

    def K(self, m: int) -> int:
        return sum(self.quotas[m].values())

    def quota(self, m: int, theta) -> int:
        return self.quotas.get(m, {}).get(theta_key(theta), 0)

    def validate(self, topo, scheme: str) -> None:
        for m in topo.servers:
            if m not in self.quotas:
                raise ParticipationError(f"no quotas for server {m}")
            if self.K(m) < 1:
                raise ParticipationError(f"server {m} would sample nobody")
            for theta, count in self.quotas[m].items():
                available = topo.N_m_theta(m, theta)
                if count > 0 and available == 0:
                    raise ParticipationError(f"server {m} has a quota of {count} for the empty area type {theta}")
                if scheme == "II" and count > available:
                    raise ParticipationError(f"quota {count} for type {theta} at server {m} exceeds its {available} clients")

    def to_dict(self) -> dict:
        return {str(m): {theta_to_str(theta): count for theta, count in per_type.items()}
                for m, per_type in sorted(self.quotas.items())}

    def __repr__(self):
        return f"BiasSpec({self.to_dict()})"

    @classmethod
    def from_class_quotas(cls, topo, class_quotas: dict) -> "BiasSpec":
        """
        Spreads a quota per class (U, V, W) evenly over the area types of that class a server covers, like
        U=4, V=4, W=2 on the symmetric layout gives 4 to {1}, 2 to {1,2}, 2 to {1,3} and 2 to {1,2,3} for
        server 1. Remainders go to the first types in canonical order

        :param Topology topo: the topology the quotas are for
        :param dict class_quotas: class name -> quota per server
        :rtype: BiasSpec
        """
        quotas = {}
        for m in topo.servers:
            by_class = {}
            for theta in topo.types_of(m):
                by_class.setdefault(type_class(theta), []).append(theta)
            quotas[m] = {}
            for name, amount in class_quotas.items():
                if amount == 0:
                    continue
                members = by_class.get(name)
                if not members:
                    raise ParticipationError(f"server {m} covers no clients of class {name}")
                base, rest = divmod(int(amount), len(members))
                for index, theta in enumerate(members):
                    quotas[m][theta] = base + (1 if index < rest else 0)
        return cls(quotas)


@dataclass(frozen=True)
class StrategySpec:
    kind: str = "full"
    scheme: str = "I"
    K: object = None  # int or {server: int}, unbiased only
    quotas: dict = field(default=None)  # class quotas {U, V, W} or per server quotas, biased only
    shared_plan: bool = False

    def __post_init__(self):
        if self.kind not in STRATEGIES:
            raise ParameterError(f"unknown strategy '{self.kind}', use one of {STRATEGIES}")
        if self.scheme not in SCHEMES:
            raise ParameterError(f"unknown scheme '{self.scheme}', use I or II")
        if self.kind == "unbiased" and self.K is None:
            raise ParameterError("the unbiased strategy needs K")
        if self.kind == "biased" and not self.quotas:
            raise ParameterError("the biased strategy needs quotas")

    @property
    def tag(self) -> str:
        return "full" if self.kind == "full" else f"{self.kind}-{self.scheme}"

    def K_of(self, m: int, topo=None) -> int:
        """
        Number of clients server m aggregates per round under this strategy
        """
        if self.kind == "full":
            return topo.N_m(m)
        if self.kind == "unbiased":
            return int(self.K if isinstance(self.K, (int, np.integer)) else self.K[m])
        return self.bias(topo).K(m)

    def bias(self, topo) -> BiasSpec:
        if self.kind != "biased":
            raise ParameterError("only the biased strategy has quotas")
        if all(str(key) in ("U", "V", "W") or str(key).startswith("X") for key in self.quotas):
            return BiasSpec.from_class_quotas(topo, self.quotas)
        return BiasSpec(self.quotas)


def _server_stream(seed: int, t: int, m: int, shared: bool):
    return rng_stream(seed, "sample", t, 0 if shared else m)


def sample_full(topo, t: int = 0) -> ParticipationPlan:
    clients = {m: tuple(topo.regions[m]) for m in topo.servers}
    per_type = {m: {theta: topo.N_m_theta(m, theta) for theta in topo.types_of(m)} for m in topo.servers}
    return ParticipationPlan(t, "full", clients, per_type)


def sample_unbiased(topo, K, scheme: str, seed: int, t: int = 0, shared_plan: bool = False) -> ParticipationPlan:
    """
    Draws K_m clients uniformly from each region, scheme I with and scheme II without replacement

    :param Topology topo: the topology
    :param int or dict K: sample size, one for all servers or per server
    :param str scheme: I or II
    :param int seed: run seed
    :param int t: round, part of the stream key
    :param bool shared_plan: every server draws from the same stream
    :raises ParticipationError: K_m > N_m under scheme II or an empty region
    """
    if scheme not in SCHEMES:
        raise ParameterError(f"unknown scheme '{scheme}'")
    clients, per_type = {}, {}
    for m in topo.servers:
        K_m = int(K if isinstance(K, (int, np.integer)) else K[m])
        region = topo.regions[m]
        if K_m < 1:
            raise ParticipationError(f"server {m} has to sample at least one client, got K_m={K_m}")
        if not region:
            raise ParticipationError(f"server {m} covers no clients")
        if scheme == "II" and K_m > len(region):
            raise ParticipationError(f"scheme II cannot draw {K_m} clients from the {len(region)} of server {m}")
        rng = _server_stream(seed, t, m, shared_plan)
        if scheme == "I":
            picks = rng.integers(len(region), size=K_m)
        else:
            picks = rng.choice(len(region), size=K_m, replace=False)
        ids = tuple(sorted(region[int(k)] for k in picks))
        clients[m] = ids
        per_type[m] = _count_types(topo, m, ids)
    return ParticipationPlan(t, f"unbiased-{scheme}", clients, per_type)


def sample_biased(topo, spec: BiasSpec, scheme: str, seed: int, t: int = 0, shared_plan: bool = False) -> ParticipationPlan:
    """
    Fills the quota of every area type by drawing inside that type, so the per type counts are exact in
    every round
    """
    if scheme not in SCHEMES:
        raise ParameterError(f"unknown scheme '{scheme}'")
    spec.validate(topo, scheme)
    clients, per_type = {}, {}
    for m in topo.servers:
        rng = _server_stream(seed, t, m, shared_plan)
        picked = []
        counts = {theta: 0 for theta in topo.types_of(m)}
        for theta in sorted(spec.quotas[m], key=lambda key: (len(key), key)):
            quota = spec.quotas[m][theta]
            if quota == 0:
                continue
            members = topo.type_clients(theta)
            if scheme == "I":
                picks = rng.integers(len(members), size=quota)
            else:
                picks = rng.choice(len(members), size=quota, replace=False)
            picked.extend(members[int(k)] for k in picks)
            counts[theta] = quota
        clients[m] = tuple(sorted(picked))
        per_type[m] = counts
    return ParticipationPlan(t, f"biased-{scheme}", clients, per_type)


def make_plan(topo, strategy: StrategySpec, seed: int, t: int) -> ParticipationPlan:
    if strategy.kind == "full":
        return sample_full(topo, t)
    if strategy.kind == "unbiased":
        return sample_unbiased(topo, strategy.K, strategy.scheme, seed, t, strategy.shared_plan)
    return sample_biased(topo, strategy.bias(topo), strategy.scheme, seed, t, strategy.shared_plan)
