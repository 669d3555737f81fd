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
Synthetic classification data, a gaussian mixture with one component per class, split over the clients with
a Dirichlet label skew. Every client gets the same number of samples
"""

import logging
from dataclasses import dataclass

import numpy as np

from Msfed.Core.MsfedErrors import DataError, ParameterError
from Msfed.Core.MsfedUtility import rng_stream
from Msfed.Utils.MsfedConstants import DIRICHLET_ALPHA

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DataGenSpec:
    C: int = 10
    d_f: int = 20
    s: int = 64
    dirichlet_alpha: float = DIRICHLET_ALPHA
    class_separation: float = 3.0

    def __post_init__(self):
        if self.C < 1 or self.d_f < 1 or self.s < 1:
            raise ParameterError(f"class count, feature dimension and shard size must be positive, got {self.C}, {self.d_f}, {self.s}")
        if not self.dirichlet_alpha > 0 or not self.class_separation > 0:
            raise ParameterError("dirichlet_alpha and class_separation must be positive")
        if self.d_f < self.C:
            # class means are scaled unit vectors, one axis per class
            raise ParameterError(f"feature dimension {self.d_f} must be at least the class count {self.C}")

    def class_means(self) -> np.ndarray:
        means = np.zeros((self.C, self.d_f))
        means[np.arange(self.C), np.arange(self.C)] = self.class_separation
        return means


class ClientDataset:
    def __init__(self, client_id, features, labels, proportions=None):
        features = np.asarray(features, dtype=float)
        labels = np.asarray(labels, dtype=np.int64)
        if features.ndim != 2:
            features = features.reshape(len(labels), -1)
        if features.shape[0] != labels.shape[0]:
            raise DataError(f"client {client_id}: {features.shape[0]} feature rows but {labels.shape[0]} labels")
        self.client_id = client_id
        self.features = features
        self.labels = labels
        self.proportions = None if proportions is None else np.asarray(proportions, dtype=float)

    def __len__(self):
        return self.labels.shape[0]

    def __repr__(self):
        return f"ClientDataset(client={self.client_id}, n={len(self)})"

    @property
    def d_f(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "ClientDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return ClientDataset(self.client_id, self.features[indices], self.labels[indices])

    def class_counts(self, C: int) -> np.ndarray:
        return np.bincount(self.labels, minlength=C)

    def to_csv(self, file_path) -> None:
        """
        Dumps the shard as csv with the columns label, f_0 .. f_{d-1}
        """
        header = ",".join(["label"] + [f"f_{k}" for k in range(self.d_f)])
        table = np.column_stack([self.labels.astype(float), self.features]) if len(self) else np.zeros((0, self.d_f + 1))
        fmt = ["%d"] + ["%.17g"] * self.d_f
        np.savetxt(file_path, table, delimiter=",", header=header, comments="", fmt=fmt)


def concat(datasets, client_id=None) -> ClientDataset:
    datasets = list(datasets)
    if not datasets:
        raise DataError("nothing to concatenate")
    return ClientDataset(client_id,
                         np.concatenate([ds.features for ds in datasets], axis=0),
                         np.concatenate([ds.labels for ds in datasets], axis=0))


def pool(data: dict, client_ids=None) -> ClientDataset:
    """
    All samples of the given clients in client id order, the empirical version of the global (or regional)
    objective
    """
    ids = sorted(data) if client_ids is None else sorted(client_ids)
    return concat([data[i] for i in ids])


def _draw_samples(rng: np.random.Generator, spec: DataGenSpec, proportions: np.ndarray, n: int):
    labels = rng.choice(spec.C, size=n, p=proportions)
    noise = rng.standard_normal((n, spec.d_f))
    return spec.class_means()[labels] + noise, labels


def generate_client(spec: DataGenSpec, client_id: int, seed: int) -> ClientDataset:
    rng = rng_stream(seed, "data", client_id)
    proportions = rng.dirichlet(np.full(spec.C, spec.dirichlet_alpha))
    # very small alpha underflows to exact zeros and NaN-ish sums, renormalise for choice()
    proportions = np.clip(proportions, 0.0, None)
    total = proportions.sum()
    if not np.isfinite(total) or total <= 0:
        proportions = np.full(spec.C, 1.0 / spec.C)
    else:
        proportions = proportions / total
    features, labels = _draw_samples(rng, spec, proportions, spec.s)
    return ClientDataset(client_id, features, labels, proportions)


def generate(spec: DataGenSpec, topo, seed: int) -> dict:
    """
    Creates the local dataset of every client in the topology. Each client has its own random stream keyed
    by its id, so the shard does not depend on the other clients or the generation order

    :param DataGenSpec spec: the data description
    :param Topology topo: the clients to generate for
    :param int seed: run seed
    :return: client id -> ClientDataset
    :rtype: dict
    """
    data = {client.id: generate_client(spec, client.id, seed) for client in topo.clients}
    logger.info(f"generated {len(data)} shards of {spec.s} samples, dirichlet alpha {spec.dirichlet_alpha}")
    return data


def global_eval_set(spec: DataGenSpec, n_eval: int, seed: int) -> ClientDataset:
    """
    Held out, class balanced iid set for accuracy and loss curves, drawn from its own stream
    """
    if n_eval < 0:
        raise ParameterError(f"n_eval must not be negative, got {n_eval}")
    rng = rng_stream(seed, "eval")
    features, labels = _draw_samples(rng, spec, np.full(spec.C, 1.0 / spec.C), n_eval)
    return ClientDataset(None, features.reshape(n_eval, spec.d_f), labels)


def label_entropy(dataset: ClientDataset, C: int) -> float:
    """
    Entropy (nats) of the empirical label distribution of one shard, log C for perfectly balanced labels
    """
    if len(dataset) == 0:
        return 0.0
    freq = dataset.class_counts(C) / len(dataset)
    freq = freq[freq > 0]
    return float(-(freq * np.log(freq)).sum())


def mean_label_entropy(data: dict, C: int) -> float:
    if not data:
        raise DataError("no shards to average over")
    return float(np.mean([label_entropy(data[i], C) for i in sorted(data)]))
