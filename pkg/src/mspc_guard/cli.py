"""``mspc-guard`` command line.

Subcommands::

    mspc-guard calibrate  [--config C] [--seed N] [--out DIR]
    mspc-guard run        --model M --scenario S [--seed N] [--out DIR]
    mspc-guard diagnose   --model M --run RUN.csv [--alarms A.json] [--out DIR]
    mspc-guard experiment [--config C] [--model M] [--scenario S] [--seeds ...] [--out DIR]

Exit codes: 0 success, 1 usage, 2 data fault, 3 numerical fault.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

from . import bench, io
from .errors import InputFault, MspcGuardError
from .omeda import diagnose_event

OUT_ENV = "MSPC_GUARD_OUT"
DEFAULT_OUT = "mspc-guard-out"

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("mspc_guard")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _out_dir(args):
    out = args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT
    os.makedirs(out, exist_ok=True)
    return out


def _load_config(args):
    doc = io.read_json(args.config) if args.config else {}
    if not isinstance(doc, dict):
        raise UsageError("config must be a JSON object")
    if getattr(args, "seed", None) is not None:
        doc = {**doc, "master_seed": args.seed}
    try:
        return bench.ExperimentConfig.from_dict(doc)
    except (TypeError, InputFault) as exc:
        raise UsageError(f"bad config: {exc}") from None


def _check_scenario(name):
    canonical = bench.ALIASES.get(name, name)
    if canonical not in bench.SCENARIOS + (bench.NONE,) and not os.path.exists(name):
        raise UsageError(f"unknown scenario {name!r}")
    return name


def cmd_calibrate(args):
    cfg = _load_config(args)
    out = _out_dir(args)
    calib = bench.build_calibration(cfg)
    path = os.path.join(out, "model.json")
    calib.save(path)
    print(f"model: {path} ({calib.model.retained} components, "
          f"{len(calib.model.kept)} of {len(calib.model.variable_names)} variables kept)")
    return EXIT_OK


def cmd_run(args):
    _check_scenario(args.scenario)
    calib = bench.Calibration.load(args.model)
    out = _out_dir(args)
    seed = args.seed if args.seed is not None else 0
    res = bench.run_scenario(args.scenario, seed, calib, args.duration, args.onset,
                             calib.plant_params)
    label = os.path.splitext(os.path.basename(res.scenario))[0]
    stem = os.path.join(out, f"{label}_seed{seed}")
    io.write_run_csv(stem + "_run.csv", res.run)
    io.write_stats_csv(stem + "_stats.csv", res.series)
    io.write_alarms(stem + "_alarms.json", res.alarms)
    arl = res.arl()
    print(f"run: {stem}_run.csv, {len(res.alarms)} alarm(s), "
          f"ARL {'none' if arl is None else f'{arl:.0f} s'}")
    return EXIT_OK


def _alarms_path(run_path):
    root = run_path[:-8] if run_path.endswith("_run.csv") else os.path.splitext(run_path)[0]
    return root + "_alarms.json"


def cmd_diagnose(args):
    calib = bench.Calibration.load(args.model)
    run = io.read_run_csv(args.run)
    alarms = io.read_alarms(args.alarms or _alarms_path(args.run))
    if not alarms:
        print("no alarms: nothing to diagnose")
        return EXIT_OK
    onset_s = float(run.meta.get("onset_h", 0.0)) * 3600.0
    after = [a for a in alarms if a.alarm_t >= onset_s] or alarms
    alarm = min(after, key=lambda a: (a.alarm_t, bench.VIEWS.index(a.view),
                                      bench.STATS.index(a.statistic)))
    report = diagnose_event(calib.model, run, alarm, args.group_size, args.tau, calib.noise_floor)
    out = _out_dir(args)
    prefix = os.path.splitext(os.path.basename(args.run))[0]
    io.write_json(os.path.join(out, f"{prefix}_diagnosis.json"), report.to_dict())
    bench.emit_omeda_charts(report, out, prefix)
    msg = f"diagnosis: {report.classification}"
    if report.localized:
        msg += f", localized {report.localized}"
    print(msg)
    return EXIT_OK


def cmd_experiment(args):
    cfg = _load_config(args)
    if args.scenario:
        _check_scenario(args.scenario)
        cfg = replace(cfg, scenario=args.scenario)
    if args.seeds is not None:
        if not args.seeds:
            raise UsageError("seed list is empty")
        cfg = replace(cfg, seeds=tuple(args.seeds))
    _check_scenario(cfg.scenario)
    out = _out_dir(args)
    if args.model:
        calib = bench.Calibration.load(args.model)
    else:
        calib = bench.build_calibration(cfg)
        calib.save(os.path.join(out, "model.json"))
    report = bench.run_experiment(cfg, calib, out_dir=out, charts=not args.no_charts)
    report.write_csv(os.path.join(out, "experiment.csv"))
    io.write_json(os.path.join(out, "experiment.json"), report.to_dict())
    s = report.summary
    med = s["arl_median_s"]
    print(f"{s['scenario']}: detected {s['detection_rate']:.0%}, "
          f"median ARL {'none' if med is None else f'{med:.0f} s'}, "
          f"classes {s['classification_counts']}")
    return EXIT_OK


def build_parser():
    p = _Parser(prog="mspc-guard", description="PCA-MSPC attack and disturbance monitor")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
        sp.add_argument("--seed", type=int)

    sp = sub.add_parser("calibrate", help="build the model from attack-free runs")
    sp.add_argument("--config")
    common(sp)
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("run", help="simulate and monitor one scenario")
    sp.add_argument("--model", required=True)
    sp.add_argument("--scenario", default=bench.D1,
                    help="D1_FeedLoss, A1_IntegrityActuator, A2_IntegritySensor, "
                         "A3_DoSActuator, None, or a scenario JSON path")
    sp.add_argument("--duration", type=float, default=24.0, help="hours")
    sp.add_argument("--onset", type=float, default=10.0, help="hours")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("diagnose", help="oMEDA diagnosis of the first alarm of a run")
    sp.add_argument("--model", required=True)
    sp.add_argument("--run", required=True)
    sp.add_argument("--alarms")
    sp.add_argument("--group-size", type=int, default=bench.DEFAULT_GROUP_SIZE)
    sp.add_argument("--tau", type=float, default=bench.DEFAULT_TAU)
    common(sp)
    sp.set_defaults(func=cmd_diagnose)

    sp = sub.add_parser("experiment", help="multi-seed experiment for one scenario")
    sp.add_argument("--config")
    sp.add_argument("--model")
    sp.add_argument("--scenario")
    sp.add_argument("--seeds", type=int, nargs="*")
    sp.add_argument("--no-charts", action="store_true")
    common(sp)
    sp.set_defaults(func=cmd_experiment)
    return p


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        if args.verbose:
            log.setLevel(logging.INFO)
        return args.func(args)
    except UsageError as exc:
        print(f"mspc-guard: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MspcGuardError as exc:
        print(f"mspc-guard: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"mspc-guard: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
