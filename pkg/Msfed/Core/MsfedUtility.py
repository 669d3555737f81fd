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
Shared helpers of the core modules: deterministic random streams, area type keys, schema validation and a
few writers that need to be byte stable across runs
"""

import csv
import json
import logging
from pathlib import Path

import numpy as np
from jsonschema import validate, ValidationError, SchemaError, RefResolutionError

from Msfed.Core.MsfedErrors import ParameterError, TopologyError
from Msfed.Utils.local_tools import str2sha256
from Msfed.Utils.MsfedConstants import TYPE_CLASSES

logger = logging.getLogger(__name__)


def _stream_word(key) -> int:
    if isinstance(key, (bool, np.bool_)):
        return int(key)
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ParameterError(f"stream keys must be non-negative, got {key}")
        return int(key)
    if isinstance(key, str):
        return int(str2sha256(key)[:8], 16)
    if isinstance(key, (tuple, list)):
        # area types as keys, folded into one word
        return int(str2sha256(theta_to_str(key))[:8], 16)
    raise ParameterError(f"cannot derive a stream from key '{key}' of type {type(key)}")


def rng_stream(seed: int, tag: str, *keys) -> np.random.Generator:
    """
    Creates an independent random generator for one purpose of the simulation. The stream only depends on
    the seed, the tag and the keys, never on the order in which streams are requested, which is what makes
    parallel client training reproducible

    :param int seed: the run seed
    :param str tag: purpose of the stream, like 'train' or 'sample'
    :param keys: additional integer (or string) keys, like round and client id
    :return: a fresh numpy generator
    :rtype: np.random.Generator
    """
    entropy = [_stream_word(seed), _stream_word(tag)] + [_stream_word(key) for key in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def theta_key(servers) -> tuple:
    """
    Canonical representation of an area type, a sorted tuple of server ids without duplicates

    :param servers: any iterable of server ids or a string like "1,2"
    :rtype: tuple
    :raises TopologyError: on an empty set or non integer ids
    """
    if isinstance(servers, str):
        return theta_from_str(servers)
    try:
        key = tuple(sorted({int(m) for m in servers}))
    except (TypeError, ValueError) as e:
        raise TopologyError(f"area type '{servers}' does not consist of server ids: {e}")
    if not key:
        raise TopologyError("an area type must contain at least one server")
    return key


def theta_to_str(theta) -> str:
    return ",".join(str(m) for m in sorted(theta))


def theta_from_str(text: str) -> tuple:
    parts = [part.strip() for part in str(text).split(",") if part.strip() != ""]
    if not parts:
        raise TopologyError(f"'{text}' is not an area type")
    try:
        return tuple(sorted({int(part) for part in parts}))
    except ValueError:
        raise TopologyError(f"'{text}' is not an area type, expected comma separated server ids")


def type_class(theta) -> str:
    """
    Class name of an area type, U for single server clients, V for two servers and W for three, beyond
    that the count is used with a leading X
    """
    size = len(theta)
    return TYPE_CLASSES.get(size, f"X{size}")


def schema_validation(descriptor: dict, schema=None) -> (bool, str):
    """
    Validates the given dictionary (loaded from a json) against a validation scheme. It will write some log
    informations and give back a tuple of boolean and message

    :param dict descriptor: a loaded run configuration
    :param str or dict schema: file path to a json schema or the loaded schema itself
    :return: True or False and a mesage
    :rtype: (bool, str)
    """
    if isinstance(schema, dict):
        rdy_schema = schema
    else:
        if not schema:  # defaulting to default module path
            schema = Path(__file__).parent.parent / "MsfedSchema.json"
        try:
            with open(schema, "r") as schema_file:
                rdy_schema = json.load(schema_file)
        except FileNotFoundError as e:
            logger.critical(f"JSON schema {schema} could not be found")
            return False, f"Schema file {e} not found"
        except json.JSONDecodeError as e:
            logger.critical(f"JSON schema {schema} contains an error within the encoding")
            return False, f"Schema file has in correct json encoding: {e}"
    try:
        validate(instance=descriptor, schema=rdy_schema)
        return True, "All OK"
    except ValidationError as error:
        node = "/".join(str(key) for key in error.absolute_path) or "<root>"
        msg = f"'{node}': an error was found with the schema, Validator: '{error.validator}', Message: '{error.message}'"
        logger.warning(f"schema_validation: a config failed to validate with message {error.message}")
        return False, msg
    except SchemaError as e:
        logger.warning(f"schema_validation: the schema '{schema}' seems to be not valid, error: {e}")
        return False, f"Schema not valid: {e}"
    except RefResolutionError as e:
        msg = f"Referenced object could not be found: {e}"
        logger.warning(f"schema_validation: found an error within the schema '{schema}': {msg}")
        return False, msg


def json_default(obj):
    # numpy scalars and arrays sneak into reports all the time
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def write_json(file_path, data, indent=2) -> None:
    with open(file_path, "w") as json_file:
        json.dump(data, json_file, indent=indent, sort_keys=False, default=json_default)
        json_file.write("\n")


def write_jsonl(file_path, rows) -> int:
    count = 0
    with open(file_path, "w") as jsonl_file:
        for row in rows:
            jsonl_file.write(json.dumps(row, default=json_default, separators=(",", ":")))
            jsonl_file.write("\n")
            count += 1
    return count


def format_float(value) -> str:
    """
    repr of a float is the shortest string that round trips, which keeps the csv byte identical between
    runs on the same machine
    """
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return repr(float(value))


def write_csv(file_path, header, rows) -> None:
    with open(file_path, "w", newline="") as csv_file:
        writer = csv.writer(csv_file, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([cell if isinstance(cell, str) else format_float(cell) for cell in row])
