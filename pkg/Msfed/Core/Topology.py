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
Multi server topologies with overlapping coverage. Every client belongs to exactly one area type, the sorted
tuple of servers it can reach, regions are derived from that. Topologies are immutable, every operation that
changes clients (mobility, baseline reassignment) returns a new one
"""

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from Msfed.Core.MsfedErrors import TopologyError, ParameterError
from Msfed.Core.MsfedUtility import rng_stream, theta_key, theta_to_str, type_class
from Msfed.Utils.MsfedConstants import REGIONAL_DISTANCE_KM, CLOUD_DISTANCE_KM, PROBABILITY_TOLERANCE, \
    MOBILITY_SETTINGS

logger = logging.getLogger(__name__)


def type_order(theta: tuple) -> tuple:
    # singletons first, then pairs and so on, lexicographic within one size
    return len(theta), theta


@dataclass(frozen=True)
class ClientInfo:
    id: int
    type: tuple
    dist_regional: dict
    dist_cloud: float

    def __post_init__(self):
        if set(self.dist_regional) != set(self.type):
            raise TopologyError(f"client {self.id}: regional distances {sorted(self.dist_regional)} do not match its type {self.type}")
        for m, distance in self.dist_regional.items():
            if not distance > 0:
                raise TopologyError(f"client {self.id}: distance to server {m} must be positive, got {distance}")
        if not self.dist_cloud > 0:
            raise TopologyError(f"client {self.id}: cloud distance must be positive, got {self.dist_cloud}")

    def to_dict(self) -> dict:
        return {"id": self.id,
                "type": list(self.type),
                "dist_regional": {str(m): self.dist_regional[m] for m in sorted(self.dist_regional)},
                "dist_cloud": self.dist_cloud}


@dataclass(frozen=True)
class MobilitySpec:
    """
    Probabilities for a client to land in a class of area types (U, V, W for one, two or three servers)
    when it relocates between two rounds
    """
    probabilities: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.probabilities:
            raise ParameterError("a mobility spec needs at least one class")
        for name, prob in self.probabilities.items():
            if not (name in ("U", "V", "W") or (name.startswith("X") and name[1:].isdigit())):
                raise ParameterError(f"unknown area type class '{name}'")
            if not 0.0 <= prob <= 1.0:
                raise ParameterError(f"probability of class {name} must be within [0, 1], got {prob}")
        total = sum(self.probabilities.values())
        if abs(total - 1.0) > PROBABILITY_TOLERANCE:
            raise ParameterError(f"mobility probabilities must sum to 1, got {total}")

    @classmethod
    def preset(cls, name: str) -> "MobilitySpec":
        if name not in MOBILITY_SETTINGS:
            raise ParameterError(f"unknown mobility setting '{name}', known: {', '.join(MOBILITY_SETTINGS)}")
        return cls(dict(MOBILITY_SETTINGS[name]))

    def to_dict(self) -> dict:
        return dict(self.probabilities)


class Topology:
    def __init__(self, M: int, clients, seed=None, declared_types=None, disjoint=(), server_cloud_dist=None):
        """
        :param int M: number of regional servers, ids are 1..M
        :param clients: sequence of ClientInfo, ids must be 0..N-1 in that order
        :param int seed: seed the topology was built from, only kept for serialization
        :param declared_types: all area types of the topology including empty ones, used for relocation
        :param disjoint: pairs of servers whose regions must not overlap
        :param dict server_cloud_dist: distance of each regional server to the cloud in km
        """
        if not isinstance(M, (int, np.integer)) or M < 1:
            raise TopologyError(f"a topology needs at least one server, got M={M}")
        self._M = int(M)
        self._clients = tuple(clients)
        self._seed = seed
        self._disjoint = tuple(sorted(tuple(sorted(pair)) for pair in disjoint))
        for index, client in enumerate(self._clients):
            if client.id != index:
                raise TopologyError(f"client ids must be consecutive, found {client.id} at position {index}")
            self._check_type(client.type, f"client {client.id}")

        types = {}
        for client in self._clients:
            types.setdefault(client.type, []).append(client.id)
        self._types = {theta: tuple(types[theta]) for theta in sorted(types, key=type_order)}

        declared = set(self._types)
        for theta in declared_types or ():
            declared.add(self._check_type(theta_key(theta), "declared type"))
        self._declared = tuple(sorted(declared, key=type_order))

        self._regions = {m: tuple(client.id for client in self._clients if m in client.type)
                         for m in range(1, self._M + 1)}
        if server_cloud_dist is None:
            server_cloud_dist = {m: 1.0 for m in range(1, self._M + 1)}
        self._server_cloud = {int(m): float(d) for m, d in server_cloud_dist.items()}
        if set(self._server_cloud) != set(range(1, self._M + 1)):
            raise TopologyError("every server needs a distance to the cloud")

    def _check_type(self, theta: tuple, where: str) -> tuple:
        if not theta:
            raise TopologyError(f"{where}: empty area type")
        if theta[0] < 1 or theta[-1] > self._M:
            raise TopologyError(f"{where}: area type {theta} is not a subset of servers 1..{self._M}")
        for first, second in self._disjoint:
            if first in theta and second in theta:
                raise TopologyError(f"{where}: area type {theta} overlaps the disjoint servers {first} and {second}")
        return theta

    @property
    def M(self) -> int:
        return self._M

    @property
    def N(self) -> int:
        return len(self._clients)

    @property
    def clients(self) -> tuple:
        return self._clients

    @property
    def regions(self) -> dict:
        return dict(self._regions)

    @property
    def types(self) -> dict:
        return dict(self._types)

    @property
    def declared_types(self) -> tuple:
        return self._declared

    @property
    def seed(self):
        return self._seed

    @property
    def disjoint(self) -> tuple:
        return self._disjoint

    @property
    def server_cloud_dist(self) -> dict:
        return dict(self._server_cloud)

    @property
    def servers(self) -> range:
        return range(1, self._M + 1)

    def client(self, client_id: int) -> ClientInfo:
        return self._clients[client_id]

    def N_m(self, m: int) -> int:
        return len(self._regions[m])

    def N_m_theta(self, m: int, theta) -> int:
        theta = theta_key(theta)
        if m not in theta:
            return 0
        return len(self._types.get(theta, ()))

    def types_of(self, m: int) -> list:
        """
        Non empty area types covered by server m in canonical order
        """
        return [theta for theta in self._types if m in theta]

    def type_clients(self, theta) -> tuple:
        return self._types.get(theta_key(theta), ())

    def class_of(self, client_id: int) -> str:
        return type_class(self._clients[client_id].type)

    def summary(self) -> dict:
        return {
            "M": self._M,
            "N": self.N,
            "region_sizes": {m: self.N_m(m) for m in self.servers},
            "type_counts": {theta_to_str(theta): len(ids) for theta, ids in self._types.items()},
            "type_count": len(self._types),
            "max_overlap": max((len(theta) for theta in self._types), default=0)
        }

    def type_sizes(self) -> dict:
        sizes = {theta: 0 for theta in self._declared}
        for theta, ids in self._types.items():
            sizes[theta] = len(ids)
        return sizes

    def to_json(self) -> dict:
        """
        Serializes the topology the way it was built, distances are not stored as they get re-derived from
        the seed. A relocated topology does not survive this round trip
        """
        doc = {"M": self._M,
               "types": [{"servers": list(theta), "count": count} for theta, count in self.type_sizes().items()],
               "seed": self._seed}
        if self._disjoint:
            doc['disjoint'] = [list(pair) for pair in self._disjoint]
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "Topology":
        try:
            sizes = {theta_key(entry['servers']): int(entry['count']) for entry in doc['types']}
            return build_custom(int(doc['M']), sizes, seed=doc.get('seed') or 0, disjoint=doc.get('disjoint', ()))
        except (KeyError, TypeError, ValueError) as e:
            raise TopologyError(f"topology document could not be read: {e}")

    def canonical_json(self) -> str:
        doc = {"M": self._M,
               "seed": self._seed,
               "declared_types": [list(theta) for theta in self._declared],
               "disjoint": [list(pair) for pair in self._disjoint],
               "server_cloud_dist": {str(m): self._server_cloud[m] for m in sorted(self._server_cloud)},
               "clients": [client.to_dict() for client in self._clients]}
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def with_assignment(self, M: int, assignment: dict, distances=None) -> "Topology":
        """
        Builds a topology with the same clients but different area types, used for the baselines that
        attach every client to exactly one server

        :param int M: server count of the new topology
        :param dict assignment: client id -> new area type
        :param dict distances: optional client id -> {server: km} for servers the client did not reach before
        :return: a new Topology
        :rtype: Topology
        """
        distances = distances or {}
        clients = []
        for client in self._clients:
            theta = theta_key(assignment.get(client.id, client.type))
            known = dict(client.dist_regional)
            known.update(distances.get(client.id, {}))
            try:
                dist = {m: known[m] for m in theta}
            except KeyError as missing:
                raise TopologyError(f"client {client.id} has no distance to server {missing}")
            clients.append(ClientInfo(client.id, theta, dist, client.dist_cloud))
        cloud = {m: self._server_cloud.get(m, 1.0) for m in range(1, M + 1)}
        return Topology(M, clients, seed=self._seed, server_cloud_dist=cloud)

    def lowest_server_topology(self) -> "Topology":
        return self.with_assignment(self._M, {client.id: (min(client.type),) for client in self._clients})

    def single_server_topology(self) -> "Topology":
        """
        Everybody talks to one server located at the cloud, so the client distance to it is the cloud distance
        """
        return self.with_assignment(1, {client.id: (1,) for client in self._clients},
                                    distances={client.id: {1: client.dist_cloud} for client in self._clients})

    def __eq__(self, other):
        if not isinstance(other, Topology):
            return False
        return self.canonical_json() == other.canonical_json()

    def __hash__(self):
        return hash(self.canonical_json())

    def __repr__(self):
        return f"Topology(M={self._M}, N={self.N}, types={len(self._types)})"


def _draw_client(client_id: int, theta: tuple, seed: int) -> ClientInfo:
    rng = rng_stream(seed, "topology", client_id)
    low, high = REGIONAL_DISTANCE_KM
    dist = {m: float(rng.uniform(low, high)) for m in theta}
    cloud_low, cloud_high = CLOUD_DISTANCE_KM
    return ClientInfo(client_id, theta, dist, float(rng.uniform(cloud_low, cloud_high)))


def build_custom(M: int, type_sizes: dict, seed: int = 0, disjoint=()) -> Topology:
    """
    Builds a topology from area type sizes, client ids are handed out type after type in canonical order

    :param int M: number of servers
    :param dict type_sizes: area type (iterable of server ids or "1,2") -> number of clients
    :param int seed: seed of the distance draws
    :param disjoint: pairs of servers that must not share any client
    :return: the topology
    :rtype: Topology
    :raises TopologyError: empty types, types outside 1..M, negative counts
    """
    if not isinstance(M, (int, np.integer)) or M < 1:
        raise TopologyError(f"a topology needs at least one server, got M={M}")
    sizes = {}
    for theta, count in type_sizes.items():
        key = theta_key(theta)
        if count < 0:
            raise TopologyError(f"negative size {count} for area type {key}")
        if key[0] < 1 or key[-1] > M:
            raise TopologyError(f"area type {key} is not a subset of servers 1..{M}")
        sizes[key] = sizes.get(key, 0) + int(count)
    clients = []
    for theta in sorted(sizes, key=type_order):
        for _ in range(sizes[theta]):
            clients.append(_draw_client(len(clients), theta, seed))
    server_rng = rng_stream(seed, "topology-servers")
    cloud = {m: float(server_rng.uniform(*CLOUD_DISTANCE_KM)) for m in range(1, M + 1)}
    topo = Topology(M, clients, seed=seed, declared_types=sizes.keys(), disjoint=disjoint, server_cloud_dist=cloud)
    logger.debug(f"built topology {topo!r} from seed {seed}")
    return topo


def symmetric_sizes(U: int, V: int, W: int) -> dict:
    return {(1,): U, (2,): U, (3,): U,
            (1, 2): V, (1, 3): V, (2, 3): V,
            (1, 2, 3): W}


def build_symmetric(M: int, U: int, V: int, W: int, seed: int = 0) -> Topology:
    """
    Three servers with three exclusive areas of U clients, three pairwise overlaps of V clients and one
    area of W clients that sees every server

    :raises ParameterError: for anything else but M = 3, use build_custom for other layouts
    """
    if M != 3:
        raise ParameterError(f"the symmetric builder only knows three servers, got M={M}; use build_custom for other layouts")
    if min(U, V, W) < 0:
        raise ParameterError(f"U, V and W must be non-negative, got {U}, {V}, {W}")
    return build_custom(3, symmetric_sizes(U, V, W), seed=seed)


def relocate(topo: Topology, spec: MobilitySpec, rng: np.random.Generator) -> Topology:
    """
    Moves every client independently: first a class is drawn from the spec, then one of the declared area
    types of that class uniformly. Distances to the new servers are drawn from the same generator, the cloud
    distance stays

    :param Topology topo: the current topology
    :param MobilitySpec spec: class probabilities
    :param np.random.Generator rng: stream of this relocation, usually keyed by the round
    :return: the relocated topology
    :rtype: Topology
    """
    by_class = {}
    for theta in topo.declared_types:
        by_class.setdefault(type_class(theta), []).append(theta)
    names = [name for name in sorted(spec.probabilities) if spec.probabilities[name] > 0]
    for name in names:
        if name not in by_class:
            raise ParameterError(f"mobility class {name} has no area type in this topology")
    probs = np.array([spec.probabilities[name] for name in names], dtype=float)
    probs = probs / probs.sum()
    low, high = REGIONAL_DISTANCE_KM
    clients = []
    for client in topo.clients:
        name = names[int(rng.choice(len(names), p=probs))]
        candidates = by_class[name]
        theta = candidates[int(rng.integers(len(candidates)))]
        dist = {m: float(rng.uniform(low, high)) for m in theta}
        clients.append(ClientInfo(client.id, theta, dist, client.dist_cloud))
    return Topology(topo.M, clients, seed=topo.seed, declared_types=topo.declared_types,
                    disjoint=topo.disjoint, server_cloud_dist=topo.server_cloud_dist)
