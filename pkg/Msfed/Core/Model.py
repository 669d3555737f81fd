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
The two model families of the simulator with hand written gradients: multinomial logistic regression (convex)
and a one hidden layer tanh network. Parameters travel as flat vectors, the layout is

* logistic: W (d_f x C), b (C)
* mlp: W1 (d_f x H), b1 (H), W2 (H x C), b2 (C)
"""

import math
import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax
from scipy.optimize import minimize

from Msfed.Core.MsfedErrors import ShapeError, ParameterError, DataError, NumericalError
from Msfed.Core.MsfedUtility import rng_stream
from Msfed.Utils.MsfedConstants import MODEL_KINDS

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "logistic"
    d_f: int = 20
    C: int = 10
    H: int = 0
    init_scale: float = 0.01

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ParameterError(f"unknown model kind '{self.kind}', use one of {MODEL_KINDS}")
        if self.d_f < 1 or self.C < 1:
            raise ParameterError(f"dimensions must be positive, got d_f={self.d_f}, C={self.C}")
        if self.kind == "mlp" and self.H < 1:
            raise ParameterError("the mlp needs a positive hidden width H")
        if self.init_scale < 0:
            raise ParameterError("init_scale must not be negative")

    @property
    def n_params(self) -> int:
        if self.kind == "logistic":
            return self.d_f * self.C + self.C
        return self.d_f * self.H + self.H + self.H * self.C + self.C

    def to_dict(self) -> dict:
        return {"kind": self.kind, "d_f": self.d_f, "C": self.C, "H": self.H, "init_scale": self.init_scale}


class ParamVector:
    """
    Flat, read only parameter vector plus the spec it belongs to. Arithmetic is done on .values by the
    callers, wrapping the result again checks length and finiteness
    """
    __slots__ = ("_values", "_spec")

    def __init__(self, values, spec: ModelSpec):
        values = np.array(values, dtype=float).reshape(-1)
        if values.shape[0] != spec.n_params:
            raise ShapeError(f"{spec.kind} model needs {spec.n_params} parameters, got {values.shape[0]}")
        if not np.all(np.isfinite(values)):
            raise NumericalError("parameter vector contains non finite entries")
        values.setflags(write=False)
        self._values = values
        self._spec = spec

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def spec(self) -> ModelSpec:
        return self._spec

    def __len__(self):
        return self._values.shape[0]

    def __eq__(self, other):
        if not isinstance(other, ParamVector):
            return False
        return self._spec == other._spec and np.array_equal(self._values, other._values)

    def __repr__(self):
        return f"ParamVector({self._spec.kind}, n={len(self)}, norm={np.linalg.norm(self._values):.4g})"

    def to_json(self) -> dict:
        return {"shape": self._spec.to_dict(), "values": self._values.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "ParamVector":
        try:
            return cls(doc['values'], ModelSpec(**doc['shape']))
        except (KeyError, TypeError) as e:
            raise ShapeError(f"parameter document is missing parts: {e}")


def _unpack(values: np.ndarray, spec: ModelSpec):
    d, C, H = spec.d_f, spec.C, spec.H
    if spec.kind == "logistic":
        return values[:d * C].reshape(d, C), values[d * C:]
    cut1 = d * H
    cut2 = cut1 + H
    cut3 = cut2 + H * C
    return values[:cut1].reshape(d, H), values[cut1:cut2], values[cut2:cut3].reshape(H, C), values[cut3:]


def _check(params: ParamVector, batch) -> None:
    if len(batch) == 0:
        raise DataError("loss and gradient need a non empty batch")
    if batch.features.shape[1] != params.spec.d_f:
        raise ShapeError(f"batch has {batch.features.shape[1]} features, model expects {params.spec.d_f}")


def _logits(values: np.ndarray, spec: ModelSpec, X: np.ndarray):
    if spec.kind == "logistic":
        W, b = _unpack(values, spec)
        return X @ W + b, None
    W1, b1, W2, b2 = _unpack(values, spec)
    hidden = np.tanh(X @ W1 + b1)
    return hidden @ W2 + b2, hidden


def _loss_values(values: np.ndarray, spec: ModelSpec, X: np.ndarray, y: np.ndarray) -> float:
    logits, _ = _logits(values, spec, X)
    return float(np.mean(logsumexp(logits, axis=1) - logits[np.arange(y.shape[0]), y]))


def _grad_values(values: np.ndarray, spec: ModelSpec, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    n = y.shape[0]
    logits, hidden = _logits(values, spec, X)
    delta = softmax(logits, axis=1)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    if spec.kind == "logistic":
        return np.concatenate([(X.T @ delta).reshape(-1), delta.sum(axis=0)])
    _, _, W2, _ = _unpack(values, spec)
    d_hidden = (delta @ W2.T) * (1.0 - hidden ** 2)
    return np.concatenate([(X.T @ d_hidden).reshape(-1), d_hidden.sum(axis=0),
                           (hidden.T @ delta).reshape(-1), delta.sum(axis=0)])


def loss(params: ParamVector, batch) -> float:
    """
    Mean cross entropy of the batch

    :param ParamVector params: model parameters
    :param ClientDataset batch: non empty set of samples
    :rtype: float
    """
    _check(params, batch)
    return _loss_values(params.values, params.spec, batch.features, batch.labels)


def grad(params: ParamVector, batch) -> ParamVector:
    _check(params, batch)
    return ParamVector(_grad_values(params.values, params.spec, batch.features, batch.labels), params.spec)


def grad_array(params: ParamVector, batch) -> np.ndarray:
    # same as grad() without wrapping, for the estimators that only need norms
    _check(params, batch)
    return _grad_values(params.values, params.spec, batch.features, batch.labels)


def predict(params: ParamVector, features) -> np.ndarray:
    logits, _ = _logits(params.values, params.spec, np.asarray(features, dtype=float))
    return np.argmax(logits, axis=1)


def accuracy(params: ParamVector, data) -> float:
    if len(data) == 0:
        return float("nan")
    return float(np.mean(predict(params, data.features) == data.labels))


def init_params(spec: ModelSpec, seed: int) -> ParamVector:
    rng = rng_stream(seed, "init")
    return ParamVector(rng.normal(0.0, spec.init_scale, size=spec.n_params), spec)


def steps_per_epoch(n: int, batch_size: int) -> int:
    if batch_size is None or batch_size <= 0 or batch_size >= n:
        return 1
    return math.ceil(n / batch_size)


def sgd_epochs(params: ParamVector, data, E: int, batch_size, lr: float, rng: np.random.Generator) -> ParamVector:
    """
    E full passes over the local data in shuffled mini-batches, sampling without replacement. The indices
    inside one mini-batch are sorted, so a batch that covers the whole shard is exactly the full gradient

    :param ParamVector params: start point
    :param ClientDataset data: the local shard
    :param int E: number of epochs
    :param int batch_size: mini-batch size, None or >= len(data) means full batch
    :param float lr: local learning rate
    :param np.random.Generator rng: the training stream of this client and round
    :return: the parameters after E epochs
    :rtype: ParamVector
    """
    if len(data) == 0:
        raise DataError(f"client {data.client_id} has no data to train on")
    if E < 1:
        raise ParameterError(f"E must be at least 1, got {E}")
    if lr < 0:
        raise ParameterError(f"the local learning rate must not be negative, got {lr}")
    n = len(data)
    size = n if batch_size is None or batch_size <= 0 else min(int(batch_size), n)
    values = params.values
    spec = params.spec
    for _ in range(E):
        order = rng.permutation(n)
        for start in range(0, n, size):
            idx = np.sort(order[start:start + size])
            values = values - lr * _grad_values(values, spec, data.features[idx], data.labels[idx])
    return ParamVector(values, spec)


def fit_full_batch(params: ParamVector, data, lr=None, max_iter: int = 5000, tol: float = 1e-10):
    """
    Centralized oracle, minimizes the loss over all of data in full batch. Without a learning rate the
    problem is handed to L-BFGS, with one it runs plain gradient descent until the squared gradient norm
    drops below tol

    :return: the minimizer and the loss value there
    :rtype: (ParamVector, float)
    """
    if len(data) == 0:
        raise DataError("the oracle needs data")
    spec = params.spec
    X, y = data.features, data.labels
    if lr is None:
        result = minimize(lambda v: (_loss_values(v, spec, X, y), _grad_values(v, spec, X, y)),
                          params.values.copy(), jac=True, method="L-BFGS-B",
                          options={"maxiter": max_iter, "gtol": 1e-12, "ftol": 1e-16})
        logger.debug(f"oracle finished after {result.nit} iterations: {result.message}")
        optimum = ParamVector(result.x, spec)
        return optimum, loss(optimum, data)
    values = params.values
    for iteration in range(max_iter):
        gradient = _grad_values(values, spec, X, y)
        if float(gradient @ gradient) < tol:
            break
        values = values - lr * gradient
    optimum = ParamVector(values, spec)
    return optimum, loss(optimum, data)
