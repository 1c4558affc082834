"""oMEDA contribution vectors and controller-vs-process diagnosis.

For a group of observations selected by a dummy vector ``d`` the
contribution of variable ``m`` is

    w_m = sum_i d_i * (2 z_im - zhat_im) * |zhat_im| / sum_i |d_i|

where ``z`` is the auto-scaled observation and ``zhat`` its projection onto
the model subspace. Bars are signed: a variable that moved up gets a
positive bar, one that moved down a negative bar.

Diagnosis runs oMEDA on both views of a run. An attack makes the controller
and the process disagree about some variable; a disturbance does not.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InputFault

DISTURBANCE = "Disturbance"
ATTACK = "Attack"
INCONCLUSIVE = "Inconclusive"

DEFAULT_GROUP_SIZE = 20
DEFAULT_TAU = 0.5
DIVERGENCE_EPS = 1e-12


@dataclass(frozen=True)
class OmedaVector:
    contributions: np.ndarray
    variable_names: tuple

    @property
    def magnitude(self):
        return float(np.max(np.abs(self.contributions))) if len(self.contributions) else 0.0

    def ranking(self):
        """Variable names by decreasing ``|w|``; ties keep recorded order."""
        order = np.argsort(-np.abs(self.contributions), kind="stable")
        return [self.variable_names[i] for i in order]

    def as_dict(self):
        return {n: float(v) for n, v in zip(self.variable_names, self.contributions)}


def _check_dummy(dummy, n):
    dummy = np.asarray(dummy, dtype=np.float64).ravel()
    if len(dummy) != n:
        raise InputFault(f"dummy has length {len(dummy)}, data has {n} rows")
    if not np.all(np.isfinite(dummy)) or np.any(dummy < 0):
        raise InputFault("dummy weights must be finite and non-negative")
    total = dummy.sum()
    if total == 0:
        raise InputFault("dummy selects no observations")
    return dummy, total


def omeda_scaled(model, Z, dummy):
    """oMEDA on data already auto-scaled to the model's kept variables."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[None, :]
    dummy, total = _check_dummy(dummy, len(Z))
    sel = dummy > 0
    Zs, w = Z[sel], dummy[sel]
    P = model.loadings
    Zhat = (Zs @ P) @ P.T
    contrib = w @ ((2.0 * Zs - Zhat) * np.abs(Zhat)) / total
    return OmedaVector(contrib, tuple(model.kept))


def omeda(model, X, dummy):
    """oMEDA for raw (engineering-unit) observations.

    Parameters
    ----------
    model : PcaModel
    X : array-like, shape (N, M)
        Full-width observations; excluded variables are dropped and do not
        appear in the result.
    dummy : array-like, shape (N,)
        Non-negative group weights; the group is where ``dummy > 0``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    return omeda_scaled(model, model.scale(X), dummy)


def group_dummy(n, start, size):
    """Dummy marking ``size`` rows from ``start``; truncates at ``n``.

    Returns ``(dummy, truncated)``.
    """
    if size < 1:
        raise InputFault("group size must be >= 1")
    if not 0 <= start < n:
        raise InputFault(f"group start {start} outside run of {n} rows")
    stop = start + size
    dummy = np.zeros(n)
    dummy[start:min(stop, n)] = 1.0
    return dummy, stop > n


def noise_floor(model, X, group_size=DEFAULT_GROUP_SIZE, fraction=0.05, quantile=0.99):
    """Magnitude below which an oMEDA vector is indistinguishable from noise.

    Splits in-control data into consecutive groups of ``group_size``, takes
    ``max |w|`` per group and returns ``fraction`` times its ``quantile``.
    """
    Z = model.scale(np.asarray(X, dtype=np.float64))
    n_groups = len(Z) // group_size
    if n_groups < 1:
        raise InputFault("not enough rows for a single group")
    Z = Z[: n_groups * group_size]
    P = model.loadings
    Zhat = (Z @ P) @ P.T
    per_row = (2.0 * Z - Zhat) * np.abs(Zhat)
    per_group = per_row.reshape(n_groups, group_size, -1).mean(axis=1)
    mags = np.max(np.abs(per_group), axis=1)
    return float(fraction * np.quantile(mags, quantile, method="linear"))


@dataclass(frozen=True)
class DiagnosisReport:
    controller_omeda: OmedaVector
    process_omeda: OmedaVector
    divergence: np.ndarray
    classification: str
    tau: float
    noise_floor: float
    group_start: int = 0
    group_size: int = DEFAULT_GROUP_SIZE
    truncated: bool = False
    alarm: dict = field(default_factory=dict)

    @property
    def variable_names(self):
        return self.controller_omeda.variable_names

    @property
    def max_divergence(self):
        return float(np.max(self.divergence)) if len(self.divergence) else 0.0

    @property
    def implicated(self):
        return {
            "controller": self.controller_omeda.ranking(),
            "process": self.process_omeda.ranking(),
            "divergence": self.divergence_ranking(),
        }

    def divergence_ranking(self):
        order = np.argsort(-self.divergence, kind="stable")
        return [self.variable_names[i] for i in order]

    @property
    def localized(self):
        """Variable with the largest cross-view divergence, if it is an attack."""
        if self.classification != ATTACK:
            return None
        return self.divergence_ranking()[0]

    def to_dict(self):
        return {
            "classification": self.classification,
            "localized": self.localized,
            "variables": list(self.variable_names),
            "controller_omeda": self.controller_omeda.contributions.tolist(),
            "process_omeda": self.process_omeda.contributions.tolist(),
            "divergence": self.divergence.tolist(),
            "max_divergence": self.max_divergence,
            "implicated": self.implicated,
            "thresholds": {"tau": self.tau, "noise_floor": self.noise_floor},
            "group": {"start": self.group_start, "size": self.group_size,
                      "truncated": self.truncated},
            "alarm": self.alarm,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def divergence(ctrl, proc):
    """Per-variable ``|w_c - w_p|`` scaled by the larger of the two inf-norms."""
    a, b = ctrl.contributions, proc.contributions
    scale = max(ctrl.magnitude, proc.magnitude, DIVERGENCE_EPS)
    return np.abs(a - b) / scale


def classify(div, ctrl_mag, proc_mag, tau=DEFAULT_TAU, floor=0.0):
    if max(ctrl_mag, proc_mag) < floor:
        return INCONCLUSIVE
    if len(div) and float(np.max(div)) > tau:
        return ATTACK
    return DISTURBANCE


def diagnose_event(model, run, alarm, group_size=DEFAULT_GROUP_SIZE, tau=DEFAULT_TAU, floor=0.0):
    """Compare oMEDA of both views over the group that starts at the alarm's
    first exceedance."""
    n = run.n_steps
    start = alarm.first_exceedance_index
    if start < 0:
        start = int(np.searchsorted(run.times, alarm.first_exceedance_t))
    dummy, truncated = group_dummy(n, start, group_size)
    if truncated:
        warnings.warn("alarm group extends past the end of the run; truncated", stacklevel=2)
    ctrl = omeda(model, run.controller_view, dummy)
    proc = omeda(model, run.process_view, dummy)
    div = divergence(ctrl, proc)
    label = classify(div, ctrl.magnitude, proc.magnitude, tau, floor)
    return DiagnosisReport(
        controller_omeda=ctrl,
        process_omeda=proc,
        divergence=div,
        classification=label,
        tau=tau,
        noise_floor=floor,
        group_start=start,
        group_size=group_size,
        truncated=truncated,
        alarm=alarm.to_dict(),
    )


def classify_event(report):
    """Return ``(label, ranking)`` where ranking lists implicated variables
    per view and by divergence."""
    label = classify(report.divergence, report.controller_omeda.magnitude,
                     report.process_omeda.magnitude, report.tau, report.noise_floor)
    return label, report.implicated
