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
The run configuration: a json document, validated against MsfedSchema.json, merged onto the defaults and
checked against the topology it describes
"""

import copy
import json
import logging
from pathlib import Path

from Msfed.Core.MsfedErrors import ConfigError, ParameterError, ParticipationError, TopologyError
from Msfed.Core.MsfedUtility import schema_validation
from Msfed.Core.Topology import build_symmetric, build_custom, MobilitySpec
from Msfed.Core.DataGen import DataGenSpec
from Msfed.Core.Model import ModelSpec
from Msfed.Core.Participation import StrategySpec
from Msfed.Core.Engine import EngineConfig
from Msfed.Core.Latency import LatencyParams
from Msfed.Utils.MsfedConstants import B_CR_HZ, B_RC_HZ, B_CC_HZ, POWER_UP_DBM, POWER_DOWN_DBM, NOISE_DBM, \
    CFL_RECLUSTER_EVERY, CFL_CLUSTER_FRACTION, HFL_T_GLOBAL, DIRICHLET_ALPHA, SWEEP_AXES
from Msfed.Utils.local_tools import load_from_json

logger = logging.getLogger(__name__)

PRESET_DIR = Path(__file__).parent.parent / "presets"

DEFAULTS = {
    "name": "msfed-run",
    "seed": 0,
    "out": "runs",
    "topology": {"builder": "symmetric", "M": 3, "U": 15, "V": 10, "W": 10, "types": [], "disjoint": []},
    "mobility": None,
    "data": {"classes": 10, "features": 20, "samples": 64, "dirichlet_alpha": DIRICHLET_ALPHA,
             "class_separation": 3.0, "eval_samples": 2000},
    "model": {"kind": "logistic", "hidden": 0, "init_scale": 0.01},
    "engine": {"algorithm": "msfedavg", "lr_global": 1.0, "lr_local": 0.05, "epochs": 1, "rounds": 100,
               "batch_size": None, "mode": "displacement", "t_global": HFL_T_GLOBAL, "workers": 1},
    "strategy": {"kind": "full", "scheme": "I", "K": None, "quotas": None, "shared_plan": False},
    "latency": {"B_cr": B_CR_HZ, "B_rc": B_RC_HZ, "B_cc": B_CC_HZ, "p_up_dbm": POWER_UP_DBM,
                "p_down_dbm": POWER_DOWN_DBM, "noise_dbm": NOISE_DBM, "q_bits": None, "fading": "rayleigh",
                "units": "total", "cfl_recluster_every": CFL_RECLUSTER_EVERY,
                "cfl_cluster_fraction": CFL_CLUSTER_FRACTION},
    "theory": {"enabled": True, "c": 1.0, "probes": 20, "probe_scale": 0.1, "sigma_batches": 4,
               "e_reading": "epochs", "trace_every": 10, "target_loss": None, "target_accuracy": None}
}


def _merge(base: dict, update: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def list_presets() -> list:
    return sorted(preset.stem for preset in PRESET_DIR.glob("*.json"))


def _int_keys(mapping):
    if not isinstance(mapping, dict):
        return mapping
    return {int(key): value for key, value in mapping.items()}


class RunConfig:
    """
    Validated and fully defaulted run configuration. Instances are treated as immutable, the override
    methods return new ones
    """
    def __init__(self, document: dict, source: str = None):
        if not isinstance(document, dict):
            raise ConfigError(f"a run configuration has to be a json object, got {type(document).__name__}")
        status, msg = schema_validation(document)
        if not status:
            raise ConfigError(msg)
        self._doc = _merge(DEFAULTS, document)
        self.source = source
        self._check_values()

    @classmethod
    def from_file(cls, path_or_preset: str) -> "RunConfig":
        """
        Loads a configuration from a json file, a bare name is looked up among the shipped presets

        :param str path_or_preset: file path or preset name
        :rtype: RunConfig
        :raises ConfigError: file not found, not readable json or not valid
        """
        path = Path(path_or_preset)
        if not path.is_file():
            preset = PRESET_DIR / f"{path_or_preset}.json"
            if not preset.is_file():
                raise ConfigError(f"'{path_or_preset}' is neither a file nor one of the presets {list_presets()}")
            path = preset
        document = load_from_json(path)
        if document is None:
            raise ConfigError(f"could not read a json document from {path}")
        logger.info(f"loaded run configuration from {path}")
        return cls(document, source=str(path))

    def to_dict(self) -> dict:
        return copy.deepcopy(self._doc)

    def dumps(self) -> str:
        return json.dumps(self._doc, indent=2)

    def __eq__(self, other):
        if not isinstance(other, RunConfig):
            return NotImplemented
        return self._doc == other._doc

    def __repr__(self):
        return f"RunConfig(name={self.name}, seed={self.seed}, algorithm={self._doc['engine']['algorithm']})"

    def _check_values(self):
        try:
            self.data_spec()
            self.model_spec()
            self.engine_config()
            self.latency_params()
            self.mobility()
        except (ParameterError, ParticipationError, TopologyError) as e:
            raise ConfigError(f"invalid configuration value: {e}")
        if self._doc['model']['kind'] == "mlp" and self._doc['model']['hidden'] < 1:
            raise ConfigError("the mlp model needs hidden >= 1")
        theory = self._doc['theory']
        if not theory['c'] > 0:
            raise ConfigError(f"theory.c has to be positive, got {theory['c']}")

    # accessors
    @property
    def name(self) -> str:
        return self._doc['name']

    @property
    def seed(self) -> int:
        return self._doc['seed']

    @property
    def out(self) -> str:
        return self._doc['out']

    @property
    def algorithm(self) -> str:
        return self._doc['engine']['algorithm']

    @property
    def theory(self) -> dict:
        return copy.deepcopy(self._doc['theory'])

    @property
    def eval_samples(self) -> int:
        return self._doc['data']['eval_samples']

    def build_topology(self):
        spec = self._doc['topology']
        try:
            if spec['builder'] == "symmetric":
                return build_symmetric(spec['M'], spec['U'], spec['V'], spec['W'], seed=self.seed)
            sizes = {tuple(entry['servers']): entry['count'] for entry in spec['types']}
            if not sizes:
                raise ConfigError("the custom builder needs a list of types")
            return build_custom(spec['M'], sizes, seed=self.seed, disjoint=spec['disjoint'])
        except (ParameterError, TopologyError) as e:
            raise ConfigError(f"topology section: {e}")

    def data_spec(self) -> DataGenSpec:
        data = self._doc['data']
        return DataGenSpec(C=data['classes'], d_f=data['features'], s=data['samples'],
                           dirichlet_alpha=data['dirichlet_alpha'], class_separation=data['class_separation'])

    def model_spec(self) -> ModelSpec:
        model, data = self._doc['model'], self._doc['data']
        return ModelSpec(kind=model['kind'], d_f=data['features'], C=data['classes'], H=model['hidden'],
                         init_scale=model['init_scale'])

    def strategy(self) -> StrategySpec:
        strategy = self._doc['strategy']
        quotas = strategy['quotas']
        if isinstance(quotas, dict) and quotas and not all(key in ("U", "V", "W") or key.startswith("X") for key in quotas):
            quotas = _int_keys(quotas)
        return StrategySpec(kind=strategy['kind'], scheme=strategy['scheme'], K=_int_keys(strategy['K']),
                            quotas=quotas, shared_plan=strategy['shared_plan'])

    def engine_config(self) -> EngineConfig:
        engine = self._doc['engine']
        return EngineConfig(lr_global=engine['lr_global'], lr_local=engine['lr_local'], epochs=engine['epochs'],
                            rounds=engine['rounds'], batch_size=engine['batch_size'], mode=engine['mode'],
                            strategy=self.strategy(), model=self.model_spec(), t_global=engine['t_global'],
                            workers=engine['workers'])

    def latency_params(self):
        latency = self._doc['latency']
        if latency is None:
            return None
        return LatencyParams(t_global=self._doc['engine']['t_global'], **latency)

    def mobility(self):
        mobility = self._doc['mobility']
        if mobility is None:
            return None
        if isinstance(mobility, str):
            return MobilitySpec.preset(mobility)
        return MobilitySpec(dict(mobility))

    def cross_validate(self, topo) -> None:
        """
        Checks everything that needs the built topology: sample sizes of scheme II, quotas against the type
        sizes and empty regions of the baselines

        :raises ConfigError: first problem found
        """
        strategy = self.strategy()
        try:
            if strategy.kind == "unbiased":
                for m in topo.servers:
                    K_m = strategy.K_of(m, topo)
                    if K_m < 1:
                        raise ConfigError(f"K for server {m} has to be at least 1, got {K_m}")
                    if strategy.scheme == "II" and K_m > topo.N_m(m):
                        raise ConfigError(f"scheme II cannot sample K={K_m} from the {topo.N_m(m)} clients of server {m}")
            elif strategy.kind == "biased":
                strategy.bias(topo).validate(topo, strategy.scheme)
        except (ParticipationError, ParameterError, KeyError) as e:
            raise ConfigError(f"strategy does not fit the topology: {e}")
        for m in topo.servers:
            if topo.N_m(m) == 0:
                raise ConfigError(f"server {m} covers no clients")
        if self.algorithm == "hfl":
            lowest = topo.lowest_server_topology()
            empty = [m for m in lowest.servers if lowest.N_m(m) == 0]
            if empty:
                raise ConfigError(f"the hierarchical baseline leaves servers {empty} without clients")
        if self.mobility() is not None and self.algorithm == "single":
            raise ConfigError("the single server baseline reaches every client from the cloud, mobility has no effect on it")
        if self.mobility() is not None and topo.M != 3:
            logger.warning("mobility classes are only well defined on the three server layouts")

    def override(self, seed=None, out=None, mode=None, workers=None, name=None) -> "RunConfig":
        document = self.to_dict()
        if seed is not None:
            document['seed'] = int(seed)
        if out is not None:
            document['out'] = str(out)
        if mode is not None:
            document['engine']['mode'] = mode
        if workers is not None:
            document['engine']['workers'] = int(workers)
        if name is not None:
            document['name'] = name
        return RunConfig(document, source=self.source)

    def with_axis(self, axis: str, value) -> "RunConfig":
        """
        Copy of this configuration with one sweep axis set. Setting K on a full participation config
        switches to unbiased sampling

        :raises ParameterError: unknown axis
        """
        if axis not in SWEEP_AXES:
            raise ParameterError(f"unknown sweep axis '{axis}', use one of {SWEEP_AXES}")
        document = self.to_dict()
        if axis == "K":
            if document['strategy']['kind'] == "full":
                document['strategy']['kind'] = "unbiased"
            document['strategy']['K'] = int(value)
        elif axis == "E":
            document['engine']['epochs'] = int(value)
        elif axis == "rounds":
            document['engine']['rounds'] = int(value)
        elif axis == "bandwidth":
            if document['latency'] is None:
                raise ParameterError("the bandwidth axis needs a latency section")
            document['latency']['B_cr'] = float(value)
        elif axis == "alpha":
            document['data']['dirichlet_alpha'] = float(value)
        else:
            document['engine'][axis] = float(value)
        document['name'] = f"{document['name']}-{axis}-{value}"
        return RunConfig(document, source=self.source)
