"""Experiment harness: calibration, scenarios, multi-seed ARL and diagnosis.

The protocol: calibrate one PCA-MSPC model on many attack-free runs, then run
each anomalous scenario over several seeds with the anomaly starting at a
fixed hour, monitor both views, measure the run length to the first alarm
and diagnose the first alarm with oMEDA on both views.
"""

from __future__ import annotations

import logging
import math
import os
import statistics as pystats
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import io, svg
from .channel import DOS, INTEGRITY, TO_ACTUATOR, TO_CONTROLLER, AttackSpec
from .errors import InputFault, MspcGuardError
from .mspc import (
    EMPIRICAL,
    THEORETICAL,
    ControlLimits,
    PcaModel,
    StreamMonitor,
    calibrate,
    compute_arl,
    dump_model,
    empirical_limits,
    load_model,
    statistics,
    theoretical_limits,
)
from .omeda import DEFAULT_GROUP_SIZE, DEFAULT_TAU, diagnose_event, noise_floor
from .plant import (
    FEED_A_LOSS,
    VARIABLE_NAMES,
    DisturbanceSpec,
    PlantParams,
    ScenarioConfig,
    simulate_run,
)

log = logging.getLogger(__name__)

VIEWS = ("controller", "process")
STATS = ("D", "Q")

D1 = "D1_FeedLoss"
A1 = "A1_IntegrityActuator"
A2 = "A2_IntegritySensor"
A3 = "A3_DoSActuator"
NONE = "None"
SCENARIOS = (D1, A1, A2, A3)
ALIASES = {"D1": D1, "A1": A1, "A2": A2, "A3": A3, "none": NONE, "None": NONE}


def scenario_events(name, onset_h):
    """``(disturbances, attacks)`` of a named scenario, or of a JSON file."""
    name = ALIASES.get(name, name)
    if name == D1:
        return (DisturbanceSpec(FEED_A_LOSS, 0.0, onset_h),), ()
    if name == A1:
        return (), (AttackSpec("u_a", TO_ACTUATOR, INTEGRITY, onset_h, value=0.0),)
    if name == A2:
        return (), (AttackSpec("flow_a", TO_CONTROLLER, INTEGRITY, onset_h, value=0.0),)
    if name == A3:
        return (), (AttackSpec("u_a", TO_ACTUATOR, DOS, onset_h),)
    if name == NONE:
        return (), ()
    if os.path.exists(name):
        doc = io.read_json(name)
        try:
            dist = tuple(DisturbanceSpec.from_dict(d) for d in doc.get("disturbances", ()))
            atk = tuple(AttackSpec.from_dict(a) for a in doc.get("attacks", ()))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputFault(f"bad scenario file {name}: {exc}") from None
        return dist, atk
    raise InputFault(f"unknown scenario {name!r}")


def expected_target(name):
    """Variable an attack scenario manipulates (None for disturbances)."""
    return {A1: "u_a", A2: "flow_a", A3: "u_a"}.get(ALIASES.get(name, name))


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = D1
    seeds: tuple = tuple(range(10))
    calibration_runs: int = 30
    duration_h: float = 24.0
    onset_h: float = 10.0
    master_seed: int = 0
    step_size: float = 5.0
    retain: float = 0.9
    limit_method: str = EMPIRICAL
    group_size: int = DEFAULT_GROUP_SIZE
    tau: float = DEFAULT_TAU
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.seeds:
            raise InputFault("seed list is empty")
        if self.calibration_runs < 2:
            raise InputFault("calibration needs at least 2 runs")
        if not 0 <= self.onset_h < self.duration_h:
            raise InputFault("onset must lie inside the run")
        if self.limit_method not in (EMPIRICAL, THEORETICAL):
            raise InputFault(f"unknown limit method {self.limit_method!r}")
        try:
            self.plant_params
        except TypeError as exc:
            raise InputFault(f"bad plant params: {exc}") from None

    @property
    def plant_params(self):
        return PlantParams(**{"step_size": self.step_size, **self.params})

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise InputFault(f"unknown config fields: {sorted(unknown)}")
        d = dict(d)
        if "retain" in d and isinstance(d["retain"], float) and d["retain"].is_integer() and d["retain"] > 1:
            d["retain"] = int(d["retain"])
        return cls(**d)

    def to_dict(self):
        return asdict(self)


def calibration_seeds(master_seed, n):
    """Seeds of the calibration runs, derived from the master seed.

    They come from a different stream than the small integers used for
    scenario seeds, so calibration and test runs never coincide.
    """
    state = np.random.SeedSequence([int(master_seed), 0xCA1]).generate_state(n, dtype=np.uint64)
    return [int(s) for s in state]


@dataclass(frozen=True)
class Calibration:
    """Everything monitoring and diagnosis need from the calibration phase."""

    model: PcaModel
    limits: ControlLimits
    noise_floor: float
    info: dict = field(default_factory=dict)

    def dumps(self):
        return dump_model(
            self.model,
            self.limits,
            {"diagnosis": {"noise_floor": self.noise_floor}, "calibration": self.info},
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())
            fh.write("\n")

    @property
    def plant_params(self):
        """Plant parameters the calibration runs used, or the defaults."""
        params = self.info.get("params")
        return PlantParams.from_dict(params) if params else PlantParams()

    @classmethod
    def load(cls, path):
        model, limits, doc = load_model(path)
        floor = float(doc.get("diagnosis", {}).get("noise_floor", 0.0))
        return cls(model, limits, floor, doc.get("calibration", {}))


def calibration_data(config):
    params = config.plant_params
    seeds = calibration_seeds(config.master_seed, config.calibration_runs)
    blocks = []
    for s in seeds:
        run = simulate_run(ScenarioConfig(duration=config.duration_h, seed=s,
                                          onset=min(config.onset_h, config.duration_h / 2)), params)
        # views are identical without attacks; calibrate on the controller view
        blocks.append(run.controller_view)
    return np.vstack(blocks), seeds


def build_calibration(config):
    X, seeds = calibration_data(config)
    model = calibrate(X, VARIABLE_NAMES, config.retain)
    d, q = statistics(model, X)
    if config.limit_method == EMPIRICAL:
        limits = empirical_limits(d, q)
    else:
        limits = theoretical_limits(model, len(X), q)
    floor = noise_floor(model, X, config.group_size)
    info = {
        "master_seed": config.master_seed,
        "runs": config.calibration_runs,
        "seeds": seeds,
        "duration_h": config.duration_h,
        "observations": int(len(X)),
        "retain": config.retain,
        "params": config.plant_params.to_dict(),
    }
    return Calibration(model, limits, floor, info)


@dataclass
class ScenarioResult:
    scenario: str
    seed: int
    run: object
    series: dict
    alarms: list
    onset_s: float

    def alarms_after_onset(self):
        return [a for a in self.alarms if a.alarm_t >= self.onset_s]

    def first_alarm(self):
        """Earliest alarm at or after onset; controller view and D win ties."""
        after = self.alarms_after_onset()
        if not after:
            return None
        return min(after, key=lambda a: (a.alarm_t, VIEWS.index(a.view), STATS.index(a.statistic)))

    def arl(self, statistic=None, view=None):
        sel = [a for a in self.alarms
               if (statistic is None or a.statistic == statistic)
               and (view is None or a.view == view)]
        return compute_arl(sel, self.onset_s)


def run_scenario(scenario, seed, calib, duration_h=24.0, onset_h=10.0, params=None):
    dist, atk = scenario_events(scenario, onset_h)
    cfg = ScenarioConfig(duration=duration_h, seed=seed, disturbances=dist,
                         attacks=atk, onset=onset_h)
    run = simulate_run(cfg, params)
    run.meta["scenario_name"] = ALIASES.get(scenario, scenario)
    series, alarms = {}, []
    for view in VIEWS:
        mon = StreamMonitor(calib.model, calib.limits, view)
        a, s = mon.update(run.view(view), run.times)
        series[view] = s
        alarms.extend(a)
    alarms.sort(key=lambda a: (a.alarm_index, VIEWS.index(a.view), a.statistic))
    return ScenarioResult(ALIASES.get(scenario, scenario), seed, run, series, alarms, onset_h * 3600.0)


def diagnose_first(result, calib, group_size=DEFAULT_GROUP_SIZE, tau=DEFAULT_TAU):
    alarm = result.first_alarm()
    if alarm is None:
        return None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return diagnose_event(calib.model, result.run, alarm, group_size, tau, calib.noise_floor)


@dataclass
class ExperimentReport:
    config: dict
    rows: list = field(default_factory=list)
    outcomes: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    charts: list = field(default_factory=list)

    ROW_FIELDS = ("seed", "statistic", "view", "arl_s", "detected")

    def to_dict(self):
        return {"config": self.config, "rows": self.rows, "outcomes": self.outcomes,
                "summary": self.summary, "charts": self.charts}

    def write_csv(self, path):
        import csv
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.ROW_FIELDS)
            for r in self.rows:
                w.writerow(["" if r[k] is None else r[k] for k in self.ROW_FIELDS])


def _median(values):
    finite = [v if v is not None else math.inf for v in values]
    return pystats.median(finite) if finite else None


def _clean(x):
    return None if x is None or (isinstance(x, float) and math.isinf(x)) else x


def run_experiment(config, calib=None, out_dir=None, charts=True):
    """Run every seed of ``config.scenario``; faults are recorded per seed."""
    calib = calib or build_calibration(config)
    params = config.plant_params
    report = ExperimentReport(config=config.to_dict())
    target = expected_target(config.scenario)
    omedas = {v: [] for v in VIEWS}
    names = None
    for seed in config.seeds:
        outcome = {"seed": seed}
        try:
            res = run_scenario(config.scenario, seed, calib, config.duration_h,
                               config.onset_h, params)
        except MspcGuardError as exc:
            log.warning("seed %s failed: %s", seed, exc)
            outcome["error"] = str(exc)
            report.outcomes.append(outcome)
            continue
        for stat in STATS:
            for view in VIEWS:
                arl = res.arl(stat, view)
                report.rows.append({"seed": seed, "statistic": stat, "view": view,
                                    "arl_s": arl, "detected": arl is not None})
        arl = res.arl()
        rep = diagnose_first(res, calib, config.group_size, config.tau)
        outcome.update({
            "arl_s": arl,
            "detected": arl is not None,
            "false_alarms_before_onset": sum(a.alarm_t < res.onset_s for a in res.alarms),
        })
        if rep is not None:
            names = rep.variable_names
            omedas["controller"].append(rep.controller_omeda.contributions)
            omedas["process"].append(rep.process_omeda.contributions)
            outcome.update({
                "classification": rep.classification,
                "localized": rep.localized,
                "controller_top": rep.controller_omeda.ranking()[0],
                "process_top": rep.process_omeda.ranking()[0],
                "max_divergence": rep.max_divergence,
                "alarm": rep.alarm,
            })
        if out_dir and charts:
            report.charts.extend(emit_control_charts(res, calib, out_dir))
        report.outcomes.append(outcome)

    done = [o for o in report.outcomes if "error" not in o]
    arls = [o["arl_s"] for o in done]
    detected = [a for a in arls if a is not None]
    classes = [o.get("classification") for o in done]
    summary = {
        "scenario": ALIASES.get(config.scenario, config.scenario),
        "runs": len(config.seeds),
        "failed": len(report.outcomes) - len(done),
        "detection_rate": len(detected) / len(config.seeds),
        "arl_median_s": _clean(_median(arls)) if arls else None,
        "arl_min_s": min(detected) if detected else None,
        "arl_max_s": max(detected) if detected else None,
        "classification_counts": {c: classes.count(c) for c in sorted(set(c for c in classes if c))},
    }
    if target is not None:
        summary["expected_target"] = target
        summary["localization_rate"] = sum(o.get("localized") == target for o in done) / len(config.seeds)
    for stat in STATS:
        for view in VIEWS:
            vals = [r["arl_s"] for r in report.rows if r["statistic"] == stat and r["view"] == view]
            summary[f"arl_median_s_{stat}_{view}"] = _clean(_median(vals)) if vals else None
    report.summary = summary

    if out_dir and names is not None and charts:
        for view in VIEWS:
            mean = np.mean(omedas[view], axis=0)
            path = os.path.join(out_dir, f"omeda_mean_{view}.svg")
            svg.bar_chart(names, mean, f"{summary['scenario']}: mean oMEDA, {view} view").save(path)
            report.charts.append(path)
    return report


def emit_control_charts(result, calib, out_dir, prefix=None):
    prefix = prefix or f"{result.scenario}_seed{result.seed}"
    paths = []
    lim = calib.limits
    for view in VIEWS:
        s = result.series[view]
        for stat, vals, l95, l99 in (("D", s.d, lim.d_95, lim.d_99), ("Q", s.q, lim.q_95, lim.q_99)):
            path = os.path.join(out_dir, f"{prefix}_{stat}_{view}.svg")
            svg.control_chart(s.t, vals, l95, l99, f"{prefix}: {stat} statistic, {view} view",
                              stat, onset_s=result.onset_s).save(path)
            paths.append(path)
    return paths


def emit_omeda_charts(report, out_dir, prefix):
    paths = []
    for view, vec in (("controller", report.controller_omeda), ("process", report.process_omeda)):
        path = os.path.join(out_dir, f"{prefix}_omeda_{view}.svg")
        svg.bar_chart(vec.variable_names, vec.contributions,
                      f"{prefix}: oMEDA, {view} view").save(path)
        paths.append(path)
    return paths
