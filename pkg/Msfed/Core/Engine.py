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
Round based execution of multi server federated averaging and its two baselines. A round works like this:

1. every distinct sampled client starts from the mean of the regional models it can download
2. it trains E epochs locally, exactly once, even when several servers sampled it
3. each server aggregates the uploads of the clients it sampled

After the last round the global model is the mean of all regional models
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from Msfed.Core.MsfedErrors import EngineError, ParameterError
from Msfed.Core.MsfedUtility import rng_stream, write_csv
from Msfed.Core.Model import ModelSpec, ParamVector, loss, grad_array, accuracy, init_params, sgd_epochs, \
    steps_per_epoch
from Msfed.Core.DataGen import pool
from Msfed.Core.Participation import StrategySpec, make_plan
from Msfed.Core.Topology import relocate
from Msfed.Core import Latency
from Msfed.Utils.MsfedConstants import AGGREGATION_MODES, CSV_HEADER

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EngineConfig:
    lr_global: float = 1.0
    lr_local: float = 0.05
    epochs: int = 1
    rounds: int = 100
    batch_size: int = None  # None is full batch
    mode: str = "displacement"
    strategy: StrategySpec = field(default_factory=StrategySpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    t_global: int = 5
    workers: int = 1

    def __post_init__(self):
        if not self.lr_global > 0 or not self.lr_local > 0:
            raise ParameterError(f"learning rates must be positive, got lr_global={self.lr_global}, lr_local={self.lr_local}")
        if self.epochs < 1 or self.rounds < 0:
            raise ParameterError(f"need at least one epoch and a non-negative round count, got E={self.epochs}, T={self.rounds}")
        if self.mode not in AGGREGATION_MODES:
            raise ParameterError(f"unknown aggregation mode '{self.mode}', use one of {AGGREGATION_MODES}")
        if self.t_global < 1:
            raise ParameterError("t_global must be at least 1")
        if self.workers < 1:
            raise ParameterError("workers must be at least 1")


@dataclass
class RegionalState:
    t: int
    models: dict  # server -> ParamVector

    def __post_init__(self):
        if self.t < 0:
            raise EngineError(f"negative round counter {self.t}")
        specs = {model.spec for model in self.models.values()}
        if len(specs) > 1:
            raise EngineError("regional models of different shapes")

    def global_model(self) -> ParamVector:
        servers = sorted(self.models)
        acc = np.zeros_like(self.models[servers[0]].values)
        for m in servers:
            acc = acc + self.models[m].values
        return ParamVector(acc / len(servers), self.models[servers[0]].spec)

    def max_pairwise_difference(self) -> float:
        servers = sorted(self.models)
        first = self.models[servers[0]].values
        return float(max((np.max(np.abs(self.models[m].values - first)) for m in servers[1:]), default=0.0))


@dataclass(frozen=True)
class RoundRecord:
    t: int
    participants: int
    epochs: int
    steps: int
    strategy: str
    mode: str
    global_loss: float = None
    eval_loss: float = None
    global_acc: float = None
    grad_norm_sq: float = None
    region_grad_norm_sq: dict = field(default_factory=dict)
    latency_s: float = 0.0
    cumulative_latency_s: float = 0.0

    def to_row(self, servers) -> list:
        row = [self.t, self.global_loss, self.eval_loss, self.global_acc, self.grad_norm_sq, self.latency_s,
               self.cumulative_latency_s, self.participants, self.epochs, self.steps, self.strategy, self.mode]
        return row + [self.region_grad_norm_sq.get(m) for m in servers]


class RunTrace:
    """
    Collects what the theory estimators need, regional models after every round and the start models of
    the clients for every `every`-th round
    """
    def __init__(self, every: int = 1):
        self.every = max(int(every), 1)
        self.initial = None
        self.rounds = []

    def add(self, t: int, topo, plan, regional: dict, client_start: dict):
        self.rounds.append({"t": t,
                            "topology": topo,
                            "plan": plan,
                            "regional": dict(regional),
                            "client_start": dict(client_start) if t % self.every == 0 else {}})

    def __len__(self):
        return len(self.rounds)


class Evaluator:
    """
    Global and regional objectives as pooled training data, since all shards have the same size the pooled
    mean equals the mean of the client objectives
    """
    def __init__(self, topo, data: dict, eval_set=None):
        self.data = data
        self.train = pool(data)
        self.eval_set = eval_set if eval_set is not None and len(eval_set) > 0 else None
        self.set_topology(topo)

    def set_topology(self, topo):
        self.regions = {m: pool(self.data, ids) for m, ids in topo.regions.items() if ids}

    def measure(self, state: RegionalState) -> dict:
        w_bar = state.global_model()
        gradient = grad_array(w_bar, self.train)
        measured = {"global_loss": loss(w_bar, self.train),
                    "grad_norm_sq": float(gradient @ gradient),
                    "region_grad_norm_sq": {}}
        target = self.eval_set if self.eval_set is not None else self.train
        measured['eval_loss'] = loss(w_bar, target)
        measured['global_acc'] = accuracy(w_bar, target)
        for m, model in state.models.items():
            if m in self.regions:
                g_m = grad_array(model, self.regions[m])
                measured['region_grad_norm_sq'][m] = float(g_m @ g_m)
        return measured


def client_init(i: int, state: RegionalState, topo) -> ParamVector:
    """
    Start model of client i, the mean of the regional models of every server it can reach. A client with a
    single server gets that model unchanged
    """
    servers = topo.client(i).type
    if len(servers) == 1:
        return state.models[servers[0]]
    acc = np.zeros_like(state.models[servers[0]].values)
    for m in servers:
        acc = acc + state.models[m].values
    return ParamVector(acc / len(servers), state.models[servers[0]].spec)


def _train_client(i, state, topo, data, config, seed):
    start = client_init(i, state, topo)
    rng = rng_stream(seed, "train", state.t, i)
    return i, start, sgd_epochs(start, data[i], config.epochs, config.batch_size, config.lr_local, rng)


def aggregate(current: ParamVector, uploads: list, starts: list, mode: str, lr_global: float) -> ParamVector:
    """
    Server side update from the uploaded client models (in client id order, repeated clients included)

    * displacement: w + lr_global * (mean(uploads) - w), the plain mean when lr_global is 1
    * delta: w + lr_global * mean(uploads - starts)
    * literal: lr_global * mean(uploads)
    """
    if not uploads:
        raise EngineError("nothing to aggregate")
    K = len(uploads)
    if mode == "delta":
        acc = np.zeros_like(current.values)
        for upload, start in zip(uploads, starts):
            acc = acc + (upload.values - start.values)
        return ParamVector(current.values + lr_global * (acc / K), current.spec)
    acc = np.zeros_like(current.values)
    for upload in uploads:
        acc = acc + upload.values
    mean = acc / K
    if mode == "literal":
        return ParamVector(lr_global * mean, current.spec)
    if lr_global == 1.0:
        return ParamVector(mean, current.spec)
    return ParamVector(current.values + lr_global * (mean - current.values), current.spec)


def run_round(state: RegionalState, plan, topo, data: dict, config: EngineConfig, seed: int, evaluator=None):
    """
    Executes one round of the protocol

    :param RegionalState state: regional models at the start of the round, state.t is the round
    :param ParticipationPlan plan: sampled clients of every server
    :param Topology topo: topology of this round
    :param dict data: client id -> ClientDataset
    :param EngineConfig config: learning rates, epochs and aggregation mode
    :param int seed: run seed, training streams are keyed by (seed, round, client)
    :param Evaluator evaluator: fills the loss and gradient columns of the record when given
    :return: the new state, the record of the round and the start models of the trained clients
    :rtype: (RegionalState, RoundRecord, dict)
    """
    for m in state.models:
        if m not in plan.clients or len(plan.clients[m]) == 0:
            raise EngineError(f"round {state.t}: server {m} has an empty plan")
    participants = plan.participants()
    if config.workers > 1 and len(participants) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool_executor:
            results = list(pool_executor.map(lambda i: _train_client(i, state, topo, data, config, seed), participants))
    else:
        results = [_train_client(i, state, topo, data, config, seed) for i in participants]
    starts = {i: start for i, start, _ in results}
    finals = {i: final for i, _, final in results}

    models = {}
    for m in sorted(state.models):
        ids = plan.clients[m]
        models[m] = aggregate(state.models[m], [finals[i] for i in ids], [starts[i] for i in ids],
                              config.mode, config.lr_global)
    new_state = RegionalState(state.t + 1, models)
    shard = len(data[participants[0]])
    record = RoundRecord(t=state.t, participants=len(participants), epochs=config.epochs,
                         steps=config.epochs * steps_per_epoch(shard, config.batch_size),
                         strategy=plan.strategy, mode=config.mode)
    if evaluator is not None:
        record = replace(record, **evaluator.measure(new_state))
    logger.debug(f"round {state.t}: {len(participants)} clients trained, loss {record.global_loss}")
    return new_state, record, starts


def _with_latency(record: RoundRecord, seconds: float, cumulative: float) -> RoundRecord:
    return replace(record, latency_s=seconds, cumulative_latency_s=cumulative + seconds)


def run(topo, data: dict, config: EngineConfig, seed: int, eval_set=None, latency=None, mobility=None,
        trace: RunTrace = None, plan_log: list = None):
    """
    The full protocol over config.rounds rounds. All servers start from the same initial model

    :param Topology topo: the topology of the first round
    :param dict data: client id -> ClientDataset
    :param EngineConfig config: engine settings
    :param int seed: run seed
    :param ClientDataset eval_set: held out data for accuracy, the pooled training data if None
    :param LatencyParams latency: network parameters, no latency is simulated if None
    :param MobilitySpec mobility: clients relocate before every round but the first
    :param RunTrace trace: filled with regional and client models if given
    :param list plan_log: participation plans get appended here
    :return: final global model and one record per round
    :rtype: (ParamVector, list)
    """
    w0 = init_params(config.model, seed)
    state = RegionalState(0, {m: w0 for m in topo.servers})
    evaluator = Evaluator(topo, data, eval_set)
    if trace is not None:
        trace.initial = evaluator.measure(state)
    records = []
    cumulative = 0.0
    for t in range(config.rounds):
        if mobility is not None and t >= 1:
            topo = relocate(topo, mobility, rng_stream(seed, "mobility", t))
            evaluator.set_topology(topo)
        plan = make_plan(topo, config.strategy, seed, t)
        state, record, starts = run_round(state, plan, topo, data, config, seed, evaluator)
        if latency is not None:
            seconds = Latency.round_latency_multi(topo, plan, latency, config.model.n_params,
                                                  rng_stream(seed, "fading", t))
            record = _with_latency(record, seconds, cumulative)
            cumulative = record.cumulative_latency_s
        records.append(record)
        if trace is not None:
            trace.add(t, topo, plan, state.models, starts)
        if plan_log is not None:
            plan_log.append(plan)
    final = state.global_model()
    logger.info(f"run finished after {config.rounds} rounds, final loss {records[-1].global_loss if records else None}")
    return final, records


def _hfl_topology(topo):
    hfl_topo = topo.lowest_server_topology()
    for m in hfl_topo.servers:
        if hfl_topo.N_m(m) == 0:
            raise EngineError(f"server {m} keeps no clients when every client is attached to its lowest id server")
    return hfl_topo


def run_hfl_baseline(topo, data: dict, config: EngineConfig, seed: int, eval_set=None, latency=None, mobility=None,
                     trace: RunTrace = None, plan_log: list = None):
    """
    Hierarchical federated averaging: every client belongs to its lowest id server only, regions run plain
    federated averaging and every t_global rounds the cloud replaces all regional models by their mean.
    With mobility the clients relocate before every round but the first, same streams as the multi server
    run, and are attached to the lowest id server of their new area
    """
    hfl_topo = _hfl_topology(topo)
    regional_config = replace(config, lr_global=1.0, mode="displacement")
    w0 = init_params(config.model, seed)
    state = RegionalState(0, {m: w0 for m in hfl_topo.servers})
    evaluator = Evaluator(hfl_topo, data, eval_set)
    if trace is not None:
        trace.initial = evaluator.measure(state)
    records = []
    cumulative = 0.0
    for t in range(config.rounds):
        if mobility is not None and t >= 1:
            topo = relocate(topo, mobility, rng_stream(seed, "mobility", t))
            hfl_topo = _hfl_topology(topo)
            evaluator.set_topology(hfl_topo)
        plan = make_plan(hfl_topo, config.strategy, seed, t)
        state, record, starts = run_round(state, plan, hfl_topo, data, regional_config, seed)
        if Latency.is_sync_round(t, config.t_global):
            synced = state.global_model()
            state = RegionalState(state.t, {m: synced for m in state.models})
        record = replace(record, strategy=f"hfl-{plan.strategy}", **evaluator.measure(state))
        if latency is not None:
            hfl_latency = replace(latency, t_global=config.t_global)
            seconds, _ = Latency.round_latency_hfl(hfl_topo, plan, hfl_latency, t, config.model.n_params,
                                                   rng_stream(seed, "fading-hfl", t))
            record = _with_latency(record, seconds, cumulative)
            cumulative = record.cumulative_latency_s
        records.append(record)
        if trace is not None:
            trace.add(t, hfl_topo, plan, state.models, starts)
        if plan_log is not None:
            plan_log.append(plan)
    return state.global_model(), records


def run_single_server_baseline(topo, data: dict, config: EngineConfig, seed: int, eval_set=None, latency=None,
                               trace: RunTrace = None, plan_log: list = None):
    """
    Classic federated averaging with one cloud server that reaches every client
    """
    single_topo = topo.single_server_topology()
    single_config = replace(config, lr_global=1.0, mode="displacement")
    w0 = init_params(config.model, seed)
    state = RegionalState(0, {1: w0})
    evaluator = Evaluator(single_topo, data, eval_set)
    if trace is not None:
        trace.initial = evaluator.measure(state)
    records = []
    cumulative = 0.0
    for t in range(config.rounds):
        plan = make_plan(single_topo, config.strategy, seed, t)
        state, record, starts = run_round(state, plan, single_topo, data, single_config, seed, evaluator)
        record = replace(record, strategy=f"single-{plan.strategy}")
        if latency is not None:
            seconds = Latency.round_latency_single(single_topo, plan, latency, config.model.n_params,
                                                   rng_stream(seed, "fading-single", t))
            record = _with_latency(record, seconds, cumulative)
            cumulative = record.cumulative_latency_s
        records.append(record)
        if trace is not None:
            trace.add(t, single_topo, plan, state.models, starts)
        if plan_log is not None:
            plan_log.append(plan)
    return state.global_model(), records


def rounds_to_target(records, target_loss=None, target_accuracy=None):
    """
    First round (counted from 1) whose global loss is at or below the target, or whose accuracy reaches
    the target accuracy. None if it never happens
    """
    for record in records:
        if target_loss is not None and record.global_loss is not None and record.global_loss <= target_loss:
            return record.t + 1
        if target_accuracy is not None and record.global_acc is not None and record.global_acc >= target_accuracy:
            return record.t + 1
    return None


def write_rounds_csv(file_path, records, servers) -> None:
    servers = sorted(servers)
    header = list(CSV_HEADER) + [f"grad_norm_sq_m{m}" for m in servers]
    write_csv(file_path, header, [record.to_row(servers) for record in records])
