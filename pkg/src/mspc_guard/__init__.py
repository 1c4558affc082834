"""Attack-aware PCA-MSPC for a simulated blending process.

Modules:

- ``plant``: closed-loop tank simulator with controller and process views
- ``channel``: integrity and DoS attacks on sensor/actuator links
- ``mspc``: PCA calibration, D and Q statistics, limits, streaming alarms
- ``omeda``: oMEDA contributions and attack-vs-disturbance diagnosis
- ``bench`` and ``cli``: experiment harness and ``mspc-guard`` command
"""

from .channel import AttackSpec, Channel, ChannelBank
from .errors import (
    CalibrationFault,
    InputFault,
    MspcGuardError,
    NumericalFault,
    SimulationFault,
)
from .mspc import (
    AlarmEvent,
    ControlLimits,
    MspcMonitor,
    PcaModel,
    StreamMonitor,
    calibrate,
    compute_arl,
    d_statistic,
    empirical_limits,
    monitor_stream,
    project,
    q_statistic,
    theoretical_limits,
)
from .omeda import DiagnosisReport, classify_event, diagnose_event, omeda
from .plant import DisturbanceSpec, PlantParams, RunRecord, ScenarioConfig, simulate_run

__version__ = "0.1.0"

__all__ = [
    "AlarmEvent",
    "AttackSpec",
    "CalibrationFault",
    "Channel",
    "ChannelBank",
    "ControlLimits",
    "DiagnosisReport",
    "DisturbanceSpec",
    "InputFault",
    "MspcGuardError",
    "MspcMonitor",
    "NumericalFault",
    "PcaModel",
    "PlantParams",
    "RunRecord",
    "ScenarioConfig",
    "SimulationFault",
    "StreamMonitor",
    "calibrate",
    "classify_event",
    "compute_arl",
    "d_statistic",
    "diagnose_event",
    "empirical_limits",
    "monitor_stream",
    "omeda",
    "project",
    "q_statistic",
    "simulate_run",
    "theoretical_limits",
]
