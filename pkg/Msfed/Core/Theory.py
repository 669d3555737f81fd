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
Numerical side of the convergence analysis: learning rate preconditions, empirical estimates of the
assumption constants and the bound terms for full, unbiased and biased participation.

Conventions used throughout:

* sums over area types only include types with clients (N_{m,theta} > 0)
* for unbiased sampling K_{m,theta} is its expectation K_m * N_{m,theta} / N_m
* a ratio with zero denominator is 0 if its numerator is 0 and +inf otherwise
* every bound term carries the unknown constant c as 1/c
"""

import math
import logging
from dataclasses import dataclass, field

import numpy as np

from Msfed.Core.MsfedErrors import TheoryError
from Msfed.Core.MsfedUtility import rng_stream, theta_to_str
from Msfed.Core.Model import ParamVector, grad_array, steps_per_epoch
from Msfed.Core.DataGen import pool
from Msfed.Core.Participation import StrategySpec
from Msfed.Utils.MsfedConstants import SENSITIVITY_C, E_READINGS

logger = logging.getLogger(__name__)

SQRT30 = math.sqrt(30)


def ratio(numerator: float, denominator: float) -> float:
    if denominator == 0:
        return 0.0 if numerator == 0 else math.inf
    return numerator / denominator


@dataclass(frozen=True)
class TypeCount:
    N: float  # N_{m,theta}
    K: float  # K_{m,theta}, possibly an expectation


@dataclass(frozen=True)
class ServerCount:
    N: int  # N_m
    K: float  # K_m
    types: dict  # area type -> TypeCount


def server_counts(topo, strategy: StrategySpec) -> dict:
    """
    Population and sample counts per server and area type as they enter the formulas

    :param Topology topo: the topology
    :param StrategySpec strategy: participation strategy
    :return: server -> ServerCount
    :rtype: dict
    """
    counts = {}
    bias = strategy.bias(topo) if strategy.kind == "biased" else None
    for m in topo.servers:
        N_m = topo.N_m(m)
        types = {}
        if strategy.kind == "full":
            K_m = N_m
        elif strategy.kind == "unbiased":
            K_m = strategy.K_of(m)
        else:
            K_m = bias.K(m)
        for theta in topo.types_of(m):
            N_theta = topo.N_m_theta(m, theta)
            if strategy.kind == "full":
                K_theta = N_theta
            elif strategy.kind == "unbiased":
                K_theta = K_m * N_theta / N_m
            else:
                K_theta = bias.quota(m, theta)
            types[theta] = TypeCount(N_theta, K_theta)
        counts[m] = ServerCount(N_m, K_m, types)
    return counts


# ---------------------------------------------------------------- learning rate conditions

def drift_threshold(L: float, E: float) -> float:
    return 1.0 / (SQRT30 * L * E)


def full_threshold(L: float, E: float, lr_global: float) -> float:
    return min(drift_threshold(L, E), 1.0 / (L * E * lr_global))


def decaying_rates(L: float, E: float, T: int, population: float) -> tuple:
    """
    Learning rates under which the bound vanishes with T, lr_global = sqrt(E * N_m) (or K_m) and
    lr_local = 1 / (sqrt(T) * L * E)
    """
    return math.sqrt(E * population), 1.0 / (math.sqrt(T) * L * E)


def partial_threshold(server: ServerCount, L: float, E: float, lr_global: float, kind: str, scheme: str) -> float:
    """
    Second entry of the min{} in the learning rate condition of partial participation, for one
    server
    """
    total = 0.0
    for tc in server.types.values():
        if tc.N <= 0:
            continue
        if kind == "unbiased" and scheme == "I":
            total += ratio(tc.N * (tc.K - 1), E * L * lr_global * server.K * server.N)
        elif kind == "unbiased":
            total += ratio(server.K ** 2 * tc.N * (tc.N - 1), E * L * lr_global * server.N ** 2 * tc.K * (tc.K - 1))
        elif scheme == "I":
            total += ratio(tc.K * (tc.K - 1), E * L * lr_global * server.K ** 2)
        else:
            total += ratio(tc.K ** 2 * (tc.N - 1), E * L * lr_global * tc.N * server.K * (tc.K - 1))
    return total


def composite_value(server: ServerCount, L: float, E: float, lr_global: float, lr_local: float, kind: str,
                    scheme: str) -> float:
    """
    Left hand side of the '< 1' condition of partial participation for one server
    """
    drift = 30 * E ** 2 * L ** 2 * lr_local ** 2
    inner = 90 * E ** 3 * L ** 2 * lr_local ** 2 + 3 * E
    types = [tc for tc in server.types.values() if tc.N > 0]
    if kind == "unbiased" and scheme == "I":
        weight = ratio(L * lr_global * lr_local * sum(tc.N for tc in types), server.K * server.N)
    elif kind == "unbiased":
        weight = sum(ratio(L * lr_global * lr_local * (tc.K - 1), 2 * server.K * (tc.N - 1)) for tc in types)
    elif scheme == "I":
        weight = sum(ratio(L * lr_global * lr_local * tc.K ** 2, server.K ** 2 * tc.N) for tc in types)
    else:
        weight = sum(ratio(L * lr_global * lr_local * tc.K * (tc.N - tc.K), server.K * tc.N * (tc.N - 1)) for tc in types)
    return drift + weight * inner


@dataclass
class ConditionFlags:
    strategy: str
    lr_local: float
    E: float
    flags: dict = field(default_factory=dict)  # condition name -> satisfied
    thresholds: dict = field(default_factory=dict)  # condition name -> threshold or composite value

    @property
    def ok(self) -> bool:
        return all(self.flags.values())

    @property
    def violated(self) -> list:
        return [name for name, satisfied in self.flags.items() if not satisfied]

    def to_dict(self) -> dict:
        return {"strategy": self.strategy, "lr_local": self.lr_local, "E": self.E, "ok": self.ok,
                "flags": dict(self.flags), "thresholds": dict(self.thresholds)}


def effective_E(config, shard_size: int = None, e_reading: str = "epochs") -> float:
    """
    The analysis counts local steps, the engine epochs. Under the 'steps' reading E is the number of
    mini-batch steps of one round
    """
    if e_reading not in E_READINGS:
        raise TheoryError(f"unknown E reading '{e_reading}'")
    if e_reading == "epochs" or shard_size is None:
        return float(config.epochs)
    return float(config.epochs * steps_per_epoch(shard_size, config.batch_size))


def validate_lr(config, topo, L_hat: float, strategy=None, E: float = None) -> ConditionFlags:
    """
    Evaluates the learning rate preconditions that match the strategy

    :param EngineConfig config: learning rates and epochs
    :param Topology topo: gives the population counts
    :param float L_hat: smoothness estimate
    :param StrategySpec strategy: defaults to config.strategy
    :param float E: local iterations as the analysis reads them, config.epochs if None
    :return: a flag per condition
    :rtype: ConditionFlags
    """
    if not L_hat > 0:
        raise TheoryError(f"L_hat must be positive, got {L_hat}")
    strategy = config.strategy if strategy is None else strategy
    if not isinstance(strategy, StrategySpec):
        raise TheoryError(f"unknown strategy '{strategy}'")
    E = float(config.epochs) if E is None else float(E)
    lr_l, lr_g = config.lr_local, config.lr_global
    report = ConditionFlags(strategy.tag, lr_l, E)
    drift = drift_threshold(L_hat, E)
    report.thresholds['drift'] = drift
    report.flags['drift'] = lr_l <= drift
    if strategy.kind == "full":
        threshold = full_threshold(L_hat, E, lr_g)
        report.thresholds['full'] = threshold
        report.flags['full'] = lr_l <= threshold
        return report
    name = "unbiased" if strategy.kind == "unbiased" else "biased"
    counts = server_counts(topo, strategy)
    for m, server in counts.items():
        threshold = min(drift, partial_threshold(server, L_hat, E, lr_g, strategy.kind, strategy.scheme))
        key = f"{name}-{strategy.scheme}-threshold-m{m}"
        report.thresholds[key] = threshold
        report.flags[key] = lr_l < threshold
        value = composite_value(server, L_hat, E, lr_g, lr_l, strategy.kind, strategy.scheme)
        key = f"{name}-{strategy.scheme}-composite-m{m}"
        report.thresholds[key] = value
        report.flags[key] = value < 1
    return report


# ---------------------------------------------------------------- assumption estimates

@dataclass
class AssumptionEstimates:
    """
    Maxima over finite probes, so these are empirical lower bounds of the assumption constants
    """
    L_hat: float
    sigma2: dict = field(default_factory=dict)  # server -> sigma^2_m
    alpha2: dict = field(default_factory=dict)  # (server, area type) -> alpha^2_{m,theta}
    beta2: dict = field(default_factory=dict)  # (server, area type) -> beta^2 of the unbiased form

    def __post_init__(self):
        values = [self.L_hat] + list(self.sigma2.values()) + list(self.alpha2.values())
        if any(value < 0 for value in values):
            raise TheoryError("assumption estimates must not be negative")

    def alpha(self, m: int, theta) -> float:
        return self.alpha2.get((m, tuple(theta)), 0.0)

    def sigma(self, m: int) -> float:
        return self.sigma2.get(m, 0.0)

    def derive_beta(self, counts: dict, E: float) -> dict:
        self.beta2 = {(m, theta): self.sigma(m) + 6 * E * tc.N * self.alpha(m, theta) / server.N
                      for m, server in counts.items() for theta, tc in server.types.items() if tc.N > 0}
        return self.beta2

    def to_dict(self) -> dict:
        return {"label": "empirical lower bounds of the assumption constants",
                "L_hat": self.L_hat,
                "sigma2": {str(m): value for m, value in sorted(self.sigma2.items())},
                "alpha2": {f"{m}|{theta_to_str(theta)}": value for (m, theta), value in sorted(self.alpha2.items())},
                "beta2": {f"{m}|{theta_to_str(theta)}": value for (m, theta), value in sorted(self.beta2.items())}}


def estimate_smoothness(spec, data, probes: int = 20, seed: int = 0, scale: float = 0.1, anchors=None) -> float:
    """
    Largest observed ratio ||grad f(u) - grad f(v)|| / ||u - v|| over random pairs. u is drawn around the
    anchors (or zero), v is a small perturbation of u

    :param ModelSpec spec: the model
    :param ClientDataset data: the objective, usually all training data pooled
    :param int probes: number of pairs
    :param int seed: run seed, the probe stream is derived from it
    :param float scale: standard deviation of the random points
    :param list anchors: optional parameter vectors to probe around
    :rtype: float
    """
    if probes < 1:
        raise TheoryError("need at least one probe")
    rng = rng_stream(seed, "probe")
    anchors = [anchor.values for anchor in anchors] if anchors else [np.zeros(spec.n_params)]
    best = 0.0
    for k in range(probes):
        u = anchors[k % len(anchors)] + rng.normal(0.0, scale, spec.n_params)
        v = u + rng.normal(0.0, 0.1 * scale, spec.n_params)
        difference = np.linalg.norm(u - v)
        if difference == 0:
            continue
        g_u = grad_array(ParamVector(u, spec), data)
        g_v = grad_array(ParamVector(v, spec), data)
        best = max(best, float(np.linalg.norm(g_u - g_v) / difference))
    return best


def estimate_assumptions(trace, data: dict, spec, batch_size=None, seed: int = 0, sigma_batches: int = 4,
                         probes: int = 20, probe_scale: float = 0.1, E: float = None) -> AssumptionEstimates:
    """
    Estimates L, sigma^2_m and alpha^2_{m,theta} from a recorded run

    * sigma^2_m: largest squared distance between a mini-batch gradient and the full local gradient, taken
      at the start model of clients sampled by m
    * alpha^2_{m,theta}: largest squared distance between the local gradient of a type theta client at its
      next start model and the regional gradient at the regional model
    * L: see estimate_smoothness, probed around the regional models of the trace

    :param RunTrace trace: regional models per round, start models of the clients on sampled rounds
    :param dict data: client id -> ClientDataset
    :param ModelSpec spec: the model
    :param int batch_size: local mini-batch size, None for full batch
    :param int seed: run seed
    :param int sigma_batches: mini-batches drawn per client and round
    :param float E: if given the unbiased beta^2 values are derived too
    :rtype: AssumptionEstimates
    """
    if trace is None or len(trace) == 0:
        raise TheoryError("cannot estimate anything from an empty trace")
    sigma2, alpha2 = {}, {}
    pooled_cache = {}
    anchors = []
    for entry in trace.rounds:
        t = entry['t']
        topo, plan = entry['topology'], entry['plan']
        regional = entry['regional']
        if entry['client_start']:
            for m in plan.servers:
                sigma2.setdefault(m, 0.0)
                for i in sorted(set(plan.clients[m])):
                    start = entry['client_start'][i]
                    shard = data[i]
                    full = grad_array(start, shard)
                    size = len(shard) if batch_size is None or batch_size <= 0 else min(batch_size, len(shard))
                    rng = rng_stream(seed, "sigma", t, i)
                    for _ in range(sigma_batches):
                        idx = np.sort(rng.choice(len(shard), size=size, replace=False))
                        noisy = grad_array(start, shard.subset(idx))
                        sigma2[m] = max(sigma2[m], float(np.sum((noisy - full) ** 2)))
            anchors.extend(regional[m] for m in sorted(regional))
            key = topo.canonical_json()
            if key not in pooled_cache:
                pooled_cache.clear()
                pooled_cache[key] = {m: pool(data, ids) for m, ids in topo.regions.items() if ids}
            regions = pooled_cache[key]
            for m in sorted(regional):
                if m not in regions:
                    continue
                g_m = grad_array(regional[m], regions[m])
                for theta in topo.types_of(m):
                    reachable = [s for s in theta if s in regional]
                    acc = np.zeros(spec.n_params)
                    for s in reachable:
                        acc = acc + regional[s].values
                    start = ParamVector(acc / len(reachable), spec) if len(reachable) > 1 else regional[reachable[0]]
                    worst = alpha2.get((m, theta), 0.0)
                    for i in topo.type_clients(theta):
                        g_i = grad_array(start, data[i])
                        worst = max(worst, float(np.sum((g_i - g_m) ** 2)))
                    alpha2[(m, theta)] = worst
    all_data = pool(data)
    L_hat = estimate_smoothness(spec, all_data, probes=probes, seed=seed, scale=probe_scale, anchors=anchors[-8:] or None)
    estimates = AssumptionEstimates(L_hat, sigma2, alpha2)
    if E is not None:
        estimates.derive_beta(server_counts(trace.rounds[-1]['topology'], StrategySpec()), E)
    logger.info(f"assumption estimates: L_hat={L_hat:.4g}, max sigma2={max(sigma2.values(), default=0):.4g}, "
                f"max alpha2={max(alpha2.values(), default=0):.4g}")
    return estimates


# ---------------------------------------------------------------- bound terms

def vanishing_term(f0: float, f_star: float, c: float, M: int, E: float, T: int, lr_global: float,
                   lr_local: float) -> float:
    return (f0 - f_star) / (c * M * E * T * lr_global * lr_local)


def psi_full(counts: dict, estimates: AssumptionEstimates, L: float, E: float, lr_global: float,
             lr_local: float, c: float = 1.0) -> float:
    M = len(counts)
    total = 0.0
    for m, server in counts.items():
        sigma2 = estimates.sigma(m)
        inner = L * lr_global * lr_local / (2 * M * server.N) * sigma2
        for theta, tc in server.types.items():
            if tc.N <= 0:
                continue
            inner += 5 * tc.N * E * L ** 2 * lr_local ** 2 / (2 * M * server.N) * \
                (sigma2 + 6 * E * tc.N / (M * server.N) * estimates.alpha(m, theta))
        total += inner
    return total / c


def beta2_value(sigma2: float, alpha2: float, E: float, server: ServerCount, tc: TypeCount, kind: str,
                variant: str = "weighted") -> float:
    if kind != "biased":
        return sigma2 + 6 * E * tc.N * alpha2 / server.N
    if variant == "literal":
        return sigma2 + ratio(6 * E * tc.K, server.K)
    return sigma2 + ratio(6 * E * tc.K * alpha2, server.K)


def psi_partial_terms(counts: dict, estimates: AssumptionEstimates, L: float, E: float, lr_global: float,
                      lr_local: float, kind: str, scheme: str, c: float = 1.0, beta_variant: str = "weighted") -> dict:
    """
    Every summand of Psi_1, Psi_2 and Psi_3 of the partial participation bounds

    :return: {"psi1": {m: term}, "psi2": {(m, theta): term}, "psi3": {(m, theta): term}}
    :rtype: dict
    """
    if kind not in ("unbiased", "biased"):
        raise TheoryError(f"no partial participation bound for strategy '{kind}'")
    M = len(counts)
    g, l_ = lr_global, lr_local
    terms = {"psi1": {}, "psi2": {}, "psi3": {}}
    for m, server in counts.items():
        sigma2 = estimates.sigma(m)
        K_m, N_m = server.K, server.N
        if kind == "unbiased" and scheme == "I":
            terms['psi1'][m] = ratio(E * L * g * l_, 2 * c * M * K_m) * sigma2
        else:
            terms['psi1'][m] = ratio(L * g * l_, 2 * c * M * K_m) * sigma2
        for theta, tc in server.types.items():
            if tc.N <= 0:
                continue
            N, K = tc.N, tc.K
            alpha2 = estimates.alpha(m, theta)
            beta2 = beta2_value(sigma2, alpha2, E, server, tc, kind, beta_variant)
            if kind == "unbiased" and scheme == "I":
                psi2 = ratio(3 * E * L * g * l_ * N, 2 * c * M * K_m * N_m) * alpha2
                psi3 = (ratio(5 * N * E * L ** 2 * l_ ** 2, 2 * c * M * N_m) +
                        ratio(15 * N * E ** 2 * L ** 3 * g * l_ ** 3, c * M * K_m * N_m)) * beta2
            elif kind == "unbiased":
                psi2 = ratio(2 * E * L ** 2 * g * l_ * N * (N - K), c * M * K_m * N_m * (N - 1)) * alpha2
                psi3 = (ratio(5 * E * L ** 3 * l_ ** 2 * N, 2 * c * M * N_m) +
                        ratio(15 * E ** 2 * L ** 3 * g * l_ ** 3 * N * (N - K), 2 * c * M * N_m * K_m * (N - 1))) * beta2
            elif scheme == "I":
                psi2 = ratio(3 * E * L * g * l_ * K ** 3, 2 * c * M * K_m ** 3 * N) * alpha2
                psi3 = (ratio(5 * E * L ** 2 * l_ ** 2 * K, 2 * c * M * K_m) +
                        ratio(15 * E ** 2 * L ** 3 * g * l_ ** 3 * K ** 2, 2 * c * M * K_m ** 2 * N)) * beta2
            else:
                psi2 = ratio(3 * L * g * l_ * K * (N - K), 2 * c * K_m ** 2 * N * (N - 1)) * alpha2
                psi3 = E * L ** 2 * l_ ** 2 * (
                    ratio(5 * K * E * L ** 2 * l_ ** 2, 2 * c * M * K_m) +
                    ratio(15 * E ** 2 * L ** 3 * g * l_ ** 3 * K * (N - K), 2 * c * M * K_m * N * (N - 1))) * beta2
            terms['psi2'][(m, theta)] = psi2
            terms['psi3'][(m, theta)] = psi3
    return terms


def _term_sum(values) -> float:
    # inf * 0 shows up for zero variances next to a degenerate count ratio, those summands count as 0
    return float(sum(0.0 if math.isnan(value) else value for value in values))


def psi_partial(counts: dict, estimates: AssumptionEstimates, L: float, E: float, lr_global: float, lr_local: float,
                kind: str, scheme: str, c: float = 1.0, beta_variant: str = "weighted") -> tuple:
    terms = psi_partial_terms(counts, estimates, L, E, lr_global, lr_local, kind, scheme, c, beta_variant)
    return _term_sum(terms['psi1'].values()), _term_sum(terms['psi2'].values()), _term_sum(terms['psi3'].values())


def dominant_term(counts: dict, E: float, T: int, kind: str) -> float:
    """
    Leading rate under the decaying learning rates, mean over servers of 1/sqrt(N_m E T) (full) or 1/sqrt(K_m E T)
    """
    M = len(counts)
    if T < 1:
        return math.inf
    if kind == "full":
        return sum(1.0 / math.sqrt(server.N * E * T) for server in counts.values()) / M
    return sum(1.0 / math.sqrt(server.K * E * T) for server in counts.values()) / M


@dataclass
class BoundReport:
    strategy: str
    c: float
    vanishing: float
    psi: float = None
    psi1: float = None
    psi2: float = None
    psi3: float = None
    psi_literal_beta: float = None
    dominant: float = None
    f0: float = None
    f_star: float = None
    f_star_label: str = "oracle optimum"
    flags: ConditionFlags = None
    sensitivity: dict = field(default_factory=dict)
    observed_min_grad_norm_sq: float = None
    warnings: list = field(default_factory=list)

    @property
    def constant(self) -> float:
        if self.psi is not None:
            return self.psi
        return self.psi1 + self.psi2 + self.psi3

    @property
    def total(self) -> float:
        return self.vanishing + self.constant

    @property
    def bound_holds(self):
        if self.observed_min_grad_norm_sq is None:
            return None
        return self.observed_min_grad_norm_sq <= self.total

    def to_dict(self) -> dict:
        return {"strategy": self.strategy, "c": self.c, "vanishing": self.vanishing, "psi": self.psi,
                "psi1": self.psi1, "psi2": self.psi2, "psi3": self.psi3, "psi_literal_beta": self.psi_literal_beta,
                "total": self.total, "dominant": self.dominant, "f0": self.f0, "f_star": self.f_star,
                "f_star_label": self.f_star_label, "sensitivity": {str(c): value for c, value in self.sensitivity.items()},
                "conditions": None if self.flags is None else self.flags.to_dict(),
                "observed_min_grad_norm_sq": self.observed_min_grad_norm_sq, "bound_holds": self.bound_holds,
                "warnings": list(self.warnings)}


def evaluate_bound(estimates: AssumptionEstimates, config, topo, strategy=None, f0: float = None,
                   f_star: float = None, c: float = 1.0, E: float = None, f_star_label: str = "oracle optimum",
                   flags: ConditionFlags = None, observed_min: float = None) -> BoundReport:
    """
    Evaluates the bound that matches the strategy with the estimated constants

    :param AssumptionEstimates estimates: L, sigma^2 and alpha^2
    :param EngineConfig config: learning rates, epochs and rounds
    :param Topology topo: population counts
    :param StrategySpec strategy: defaults to config.strategy
    :param float f0: objective at the initial model
    :param float f_star: optimum, or its stand-in labelled by f_star_label
    :param float c: the free constant of the rate choice
    :param float E: local iterations as the analysis reads them
    :param ConditionFlags flags: outcome of validate_lr, a warning is added if a condition failed
    :param float observed_min: smallest observed squared gradient norm
    :rtype: BoundReport
    """
    strategy = config.strategy if strategy is None else strategy
    if not isinstance(strategy, StrategySpec):
        raise TheoryError(f"unknown strategy '{strategy}'")
    if not c > 0:
        raise TheoryError(f"c must be positive, got {c}")
    if f0 is None or f_star is None:
        raise TheoryError("f0 and f_star are needed for the vanishing term")
    if f0 - f_star < -1e-12:
        raise TheoryError(f"f0 - f_star is negative ({f0} - {f_star})")
    E = float(config.epochs) if E is None else float(E)
    L = estimates.L_hat
    counts = server_counts(topo, strategy)
    T = config.rounds
    vanishing = vanishing_term(f0, f_star, c, topo.M, E, T, config.lr_global, config.lr_local) if T > 0 else math.inf
    vanishing = max(vanishing, 0.0)
    report = BoundReport(strategy.tag, c, vanishing, f0=f0, f_star=f_star, f_star_label=f_star_label, flags=flags,
                         observed_min_grad_norm_sq=observed_min)
    if strategy.kind == "full":
        report.psi = psi_full(counts, estimates, L, E, config.lr_global, config.lr_local, c)
    else:
        report.psi1, report.psi2, report.psi3 = psi_partial(counts, estimates, L, E, config.lr_global,
                                                            config.lr_local, strategy.kind, strategy.scheme, c)
        if strategy.kind == "biased":
            report.psi_literal_beta = sum(psi_partial(counts, estimates, L, E, config.lr_global, config.lr_local,
                                                      strategy.kind, strategy.scheme, c, "literal"))
    report.dominant = dominant_term(counts, E, T, strategy.kind)
    for c_other in SENSITIVITY_C:
        report.sensitivity[c_other] = report.total * c / c_other
    if flags is not None and not flags.ok:
        report.warnings.append(f"learning rate conditions violated: {', '.join(flags.violated)}")
    return report
