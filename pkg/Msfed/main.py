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

#  simulates federated learning with several regional servers whose coverage areas overlap

import argparse
import copy
import csv
import functools
import logging
import multiprocessing
import sys
import time
from pathlib import Path

import Msfed.Core.Theory as Theory
from Msfed.Core import Latency
from Msfed.Core.Engine import RunTrace, run, run_hfl_baseline, run_single_server_baseline, rounds_to_target, \
    write_rounds_csv
from Msfed.Core.DataGen import generate, global_eval_set, pool, mean_label_entropy
from Msfed.Core.Model import init_params, loss, fit_full_batch
from Msfed.Core.Participation import make_plan
from Msfed.Core.RunConfig import RunConfig, list_presets
from Msfed.Core.MsfedErrors import ConfigError, ConditionError, ParameterError, NumericalError, EngineError, \
    OperationalError, ParticipationError, LatencyError, TheoryError, TopologyError, DataError, ShapeError
from Msfed.Core.MsfedUtility import write_json, write_jsonl, write_csv
from Msfed.Utils.main_arguments import arguments
from Msfed.Utils.local_tools import delta_now, seconds_human, convert_to_base_type, sizeof_fmt, \
    super_simple_progress_bar, super_simple_progress_bar_clear
from Msfed.Utils.MsfedConstants import EXIT_OK, EXIT_INVOCATION, EXIT_CONFIG, EXIT_CONDITION, EXIT_RUNTIME, \
    SWEEP_AXES, ALGORITHMS

try:
    from termcolor import colored  # only needed for console output
except ModuleNotFoundError:
    def colored(text, *args, **kwargs):
        return text  # throws args away returns non colored text

__VERSION__ = "0.3"

logger = logging.getLogger(__name__)
LOG_FORMAT = '[%(asctime)s] %(levelname)s:%(message)s'


def exit_status(func):
    """
    Turns the exceptions of a command into the documented exit codes, everything gets logged
    """
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ConditionError as e:
            logger.error(f"{func.__name__}: learning rate conditions violated: {e.violated}")
            print(colored(f"Learning rate conditions violated: {', '.join(e.violated)}", "red"), file=sys.stderr)
            print("Lower the local learning rate or pass --allow-unsafe-lr", file=sys.stderr)
            return EXIT_CONDITION
        except ConfigError as e:
            logger.error(f"{func.__name__}: configuration error: {e}")
            print(colored(f"Configuration error: {e}", "red"), file=sys.stderr)
            return EXIT_CONFIG
        except ParameterError as e:
            logger.error(f"{func.__name__}: invalid parameter: {e}")
            print(colored(f"Invalid parameter: {e}", "red"), file=sys.stderr)
            return EXIT_INVOCATION
        except (NumericalError, EngineError, ParticipationError, LatencyError, TheoryError, TopologyError,
                DataError, ShapeError, OperationalError) as e:
            logger.critical(f"{func.__name__}: run aborted, {e!r}: {e}")
            print(colored(f"Run aborted: {e}", "red"), file=sys.stderr)
            return EXIT_RUNTIME
    return wrapper


def run_directory(config: RunConfig) -> Path:
    folder = Path(config.out) / f"{config.name}-seed{config.seed}"
    folder.mkdir(parents=True, exist_ok=True)
    return folder


def _algorithm_topology(config: RunConfig, topo):
    if config.algorithm == "hfl":
        return topo.lowest_server_topology()
    if config.algorithm == "single":
        return topo.single_server_topology()
    return topo


def check_learning_rates(config: RunConfig, topo, data, allow_unsafe=False) -> tuple:
    """
    Probes the smoothness of the pooled objective and checks the learning rate conditions before any
    training happens

    :return: smoothness estimate and the condition flags
    :rtype: (float, ConditionFlags)
    :raises ConditionError: a condition is violated and allow_unsafe is not set
    """
    theory = config.theory
    engine = config.engine_config()
    L_hat = Theory.estimate_smoothness(engine.model, pool(data), probes=theory['probes'], seed=config.seed,
                                       scale=theory['probe_scale'])
    shard = len(next(iter(data.values())))
    E = Theory.effective_E(engine, shard, theory['e_reading'])
    flags = Theory.validate_lr(engine, _algorithm_topology(config, topo), L_hat, E=E)
    logger.info(f"smoothness probe L_hat={L_hat:.4g}, conditions: {flags.flags}")
    if not flags.ok:
        if not allow_unsafe:
            raise ConditionError(f"learning rate {engine.lr_local} violates {flags.violated}", violated=flags.violated)
        logger.warning(f"continuing with violated learning rate conditions {flags.violated}")
        print(colored(f"Warning: learning rate conditions violated: {', '.join(flags.violated)}", "yellow"))
    return L_hat, flags


def bound_report(config: RunConfig, topo, data, trace, records, flags):
    """
    Estimates the assumption constants from the trace and evaluates the bound that matches the strategy.
    The hierarchical baseline is not covered by the analysis and gets no report
    """
    if config.algorithm == "hfl" or trace is None or len(trace) == 0:
        return None, None
    theory = config.theory
    engine = config.engine_config()
    shard = len(next(iter(data.values())))
    E = Theory.effective_E(engine, shard, theory['e_reading'])
    estimates = Theory.estimate_assumptions(trace, data, engine.model, batch_size=engine.batch_size,
                                            seed=config.seed, sigma_batches=theory['sigma_batches'],
                                            probes=theory['probes'], probe_scale=theory['probe_scale'], E=E)
    w0 = init_params(engine.model, config.seed)
    pooled = pool(data)
    f0 = loss(w0, pooled)
    if engine.model.kind == "logistic":
        _, f_star = fit_full_batch(w0, pooled)
        label = "oracle optimum"
    else:
        f_star = min([f0] + [record.global_loss for record in records])
        label = "best observed loss"
    f_star = min(f_star, f0)
    observed = min((record.grad_norm_sq for record in records), default=None)
    report = Theory.evaluate_bound(estimates, engine, _algorithm_topology(config, topo), f0=f0, f_star=f_star,
                                   c=theory['c'], E=E, f_star_label=label, flags=flags, observed_min=observed)
    return estimates, report


def cmd_run(config: RunConfig, allow_unsafe=False) -> int:
    """
    Executes one configured run and writes the run directory

    :param RunConfig config: the run configuration, overrides already applied
    :param bool allow_unsafe: violated learning rate conditions only warn
    :return: exit status
    :rtype: int
    """
    zero_time = time.time()
    folder = run_directory(config)
    handler = logging.FileHandler(folder / "msfed_process.log", mode="w")
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logging.getLogger().addHandler(handler)
    try:
        return _execute_run(config, folder, allow_unsafe, zero_time)
    finally:
        logging.getLogger().removeHandler(handler)
        handler.close()


@exit_status
def _execute_run(config: RunConfig, folder: Path, allow_unsafe: bool, zero_time: float) -> int:
    logger.info(f"starting run {config!r} into {folder}")
    topo = config.build_topology()
    config.cross_validate(topo)
    data_spec = config.data_spec()
    data = generate(data_spec, topo, config.seed)
    eval_set = global_eval_set(data_spec, config.eval_samples, config.seed) if config.eval_samples > 0 else None
    write_json(folder / "config.json", config.to_dict())

    L_hat, flags = check_learning_rates(config, topo, data, allow_unsafe)
    engine = config.engine_config()
    theory = config.theory
    trace = RunTrace(every=theory['trace_every']) if theory['enabled'] else None
    plans = []
    runner = dict(zip(ALGORITHMS, (run, run_hfl_baseline, run_single_server_baseline)))[config.algorithm]
    kwargs = {"eval_set": eval_set, "latency": config.latency_params(), "trace": trace, "plan_log": plans}
    if config.mobility() is not None:
        kwargs['mobility'] = config.mobility()
        logger.info(f"clients relocate every round, {config.mobility().to_dict()}")
    final, records = runner(topo, data, engine, config.seed, **kwargs)

    servers = sorted({m for record in records for m in record.region_grad_norm_sq}) or list(topo.servers)
    write_rounds_csv(folder / "rounds.csv", records, servers)
    write_jsonl(folder / "plans.jsonl", (row for plan in plans for row in plan.to_records()))

    estimates, report = bound_report(config, topo, data, trace, records, flags) if theory['enabled'] else (None, None)
    last = records[-1] if records else None
    summary = {
        "name": config.name,
        "seed": config.seed,
        "algorithm": config.algorithm,
        "strategy": engine.strategy.tag,
        "mode": engine.mode,
        "rounds": engine.rounds,
        "final_loss": last.global_loss if last else None,
        "final_eval_loss": last.eval_loss if last else None,
        "final_accuracy": last.global_acc if last else None,
        "rounds_to_target": rounds_to_target(records, theory['target_loss'], theory['target_accuracy']),
        "cumulative_latency_s": last.cumulative_latency_s if last else 0.0,
        "topology": topo.summary(),
        "mean_label_entropy": mean_label_entropy(data, data_spec.C),
        "L_hat_probe": L_hat,
        "conditions": flags.to_dict(),
        "assumptions": estimates.to_dict() if estimates else None,
        "bound": report.to_dict() if report else None,
        "runtime_s": float(delta_now(zero_time))
    }
    write_json(folder / "summary.json", summary)
    print(f"{colored(config.name, attrs=['bold'])}: loss {summary['final_loss']}, accuracy {summary['final_accuracy']}, "
          f"latency {seconds_human(summary['cumulative_latency_s'])} -> {colored(str(folder), 'green')}")
    logger.info(f"run {config.name} finished in {summary['runtime_s']}s")
    return EXIT_OK


@exit_status
def cmd_latency(config: RunConfig) -> int:
    """
    Draws the participation plans of the configuration and compares the latency of all four architectures
    for them, no training takes place
    """
    params = config.latency_params()
    if params is None:
        raise ConfigError("the latency comparison needs a latency section")
    topo = config.build_topology()
    config.cross_validate(topo)
    engine = config.engine_config()
    plans = [make_plan(topo, engine.strategy, config.seed, t) for t in range(engine.rounds)]
    comparison = Latency.architecture_comparison(topo, plans, params, engine.model.n_params, config.seed)
    folder = run_directory(config)
    write_json(folder / "latency.json", {name: breakdown.to_dict() for name, breakdown in comparison.items()})
    payload = params.payload(engine.model.n_params) / 8
    print(f"Latency over {engine.rounds} rounds ({config.name}), model payload {sizeof_fmt(payload)}")
    for name, breakdown in comparison.items():
        print(f"\t{colored(name, attrs=['bold']):<8} total {breakdown.total:.6g} s, "
              f"{len(breakdown.overhead)} overhead terms ({breakdown.overhead_total:.6g} s)")
    return EXIT_OK


def _sweep_worker(document: dict, allow_unsafe: bool) -> None:
    sys.exit(cmd_run(RunConfig(document), allow_unsafe))


def _merge_sweep(folder: Path, axis: str, entries: list) -> None:
    rows, header = [], None
    summaries = []
    for value, config in entries:
        run_folder = run_directory(config)
        if not (run_folder / "rounds.csv").is_file():
            raise OperationalError(f"sweep run {axis}={value} left no rounds.csv in {run_folder}")
        with open(run_folder / "rounds.csv", newline="") as csv_file:
            reader = csv.reader(csv_file)
            run_header = next(reader)
            if header is None:
                header = [axis] + run_header
            rows.extend([str(value)] + row for row in reader)
        summary = Path(run_folder / "summary.json")
        summaries.append({"value": value, "summary": str(summary)})
    write_csv(folder / "sweep.csv", header, rows)
    write_json(folder / "sweep.json", {"axis": axis, "runs": summaries})


@exit_status
def cmd_sweep(config: RunConfig, axis: str, values, processes: int = 1, allow_unsafe=False) -> int:
    """
    One run per value of the axis, all with the seed of the configuration. With more than one process
    the runs are spread over processes, every run has its own directory

    :param RunConfig config: the base configuration
    :param str axis: one of the sweep axes
    :param values: list of values or a comma separated string
    :param int processes: parallel processes
    :return: exit status, the first failing run decides
    :rtype: int
    """
    if axis not in SWEEP_AXES:
        raise ParameterError(f"unknown sweep axis '{axis}', use one of {', '.join(SWEEP_AXES)}")
    if isinstance(values, str):
        values = [convert_to_base_type(value.strip()) for value in values.split(",") if value.strip()]
    if not values or any(isinstance(value, str) or isinstance(value, bool) for value in values):
        raise ParameterError(f"sweep values must be numbers, got {values}")
    sweep_folder = Path(config.out) / f"{config.name}-sweep-{axis}"
    base = config.override(out=str(sweep_folder))
    entries = [(value, base.with_axis(axis, value)) for value in values]
    statuses = []
    if processes > 1:
        logger.info(f"sweep over {axis} with {len(entries)} runs on {processes} processes")
        for start in range(0, len(entries), processes):
            batch = []
            for _, entry in entries[start:start + processes]:
                p = multiprocessing.Process(target=_sweep_worker, args=(entry.to_dict(), allow_unsafe))
                batch.append(p)
                p.start()
            for p in batch:
                p.join()
                statuses.append(p.exitcode)
        killed = [code for code in statuses if code is None or code < 0]
        if killed:
            raise OperationalError(f"{len(killed)} sweep workers were terminated, exit codes {killed}")
    else:
        for index, (value, entry) in enumerate(entries):
            super_simple_progress_bar(index, len(entries), prefix=f"{axis}={value} ", suffix=f" {index}/{len(entries)}")
            statuses.append(cmd_run(entry, allow_unsafe))
        super_simple_progress_bar_clear()
    failed = [code for code in statuses if code != EXIT_OK]
    if failed:
        logger.error(f"sweep over {axis}: {len(failed)} of {len(statuses)} runs failed")
        return failed[0]
    _merge_sweep(sweep_folder, axis, entries)
    print(f"Sweep over {colored(axis, attrs=['bold'])}: {len(entries)} runs -> {colored(str(sweep_folder), 'green')}")
    return EXIT_OK


@exit_status
def cmd_topo(config: RunConfig) -> int:
    topo = config.build_topology()
    summary = topo.summary()
    print(f"Topology of {colored(config.name, attrs=['bold'])}: M = {summary['M']}, N = {summary['N']}, "
          f"{summary['type_count']} area types, overlaps of up to {summary['max_overlap']} servers")
    for m, size in summary['region_sizes'].items():
        print(f"\tN_{m} = {size}")
    for theta, count in summary['type_counts'].items():
        print(f"\t{{{theta}}}: {count}")
    return EXIT_OK


def list_presets_cmd() -> int:
    print("Available presets:")
    for name in list_presets():
        print(f"\t{colored(name, attrs=['bold'])}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Simulator for federated averaging with several regional servers and overlapping coverage areas.",
        usage="msfed --Run --config CONFIG [--seed SEED] [--out FOLDER]",
        epilog="Individual settings overwrite settings from the config file",
        prefix_chars="-")
    # ? extending the parser registry so we can actually add data types from json
    parser.register('type', 'float', float)
    parser.register('type', 'int', int)
    parser.register('type', 'str', str)
    for key, item in copy.deepcopy(arguments).items():
        if "short" in item:
            short = item.pop("short")
            parser.add_argument(f'--{key}', short, **item)
        else:
            parser.add_argument(f'--{key}', **item)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # argparse exits on -h and on errors
        return EXIT_OK if e.code == 0 else EXIT_INVOCATION

    if args.ListPresets:
        return list_presets_cmd()
    actions = [name for name in ("Run", "Latency", "Sweep", "Topo") if getattr(args, name)]
    if len(actions) != 1:
        print(f"Msfed simulator version {__VERSION__}. Choose exactly one of --Run, --Latency, --Sweep, --Topo, --ListPresets")
        return EXIT_INVOCATION
    if not args.config:
        print(f"{actions[0]} needs a run configuration:")
        print(f"\t{colored('config', attrs=['bold'])} - {colored(arguments['config']['help'], 'green')}")
        return EXIT_INVOCATION
    if not Path(args.config).is_file() and args.config not in list_presets():
        print(colored(f"'{args.config}' is neither a file nor a preset, known presets: {', '.join(list_presets())}", "red"))
        return EXIT_INVOCATION

    try:
        config = RunConfig.from_file(args.config).override(seed=args.seed, out=args.out, mode=args.mode,
                                                           workers=args.workers)
    except ConfigError as e:
        print(colored(f"Configuration error: {e}", "red"), file=sys.stderr)
        return EXIT_CONFIG

    Path(config.out).mkdir(parents=True, exist_ok=True)
    logging.basicConfig(filename=Path(config.out) / 'msfed_process.log', format=LOG_FORMAT,
                        level=logging.DEBUG if args.debug else logging.INFO)
    if args.debug:
        logging.getLogger().setLevel(logging.DEBUG)
    logger.debug(f"Start of msfed {__VERSION__}, action {actions[0]}")

    if args.Run:
        return cmd_run(config, args.allow_unsafe_lr)
    if args.Latency:
        return cmd_latency(config)
    if args.Sweep:
        axis, values = args.Sweep
        return cmd_sweep(config, axis, values, processes=args.processes, allow_unsafe=args.allow_unsafe_lr)
    return cmd_topo(config)


if __name__ == "__main__":
    sys.exit(main())
