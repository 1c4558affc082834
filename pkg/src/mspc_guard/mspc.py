"""PCA-based multivariate statistical process control.

Calibration auto-scales the data, fits a PCA subspace and derives control
limits for two statistics: D (Hotelling's T^2 on the scores) and Q (squared
prediction error of the residual). Monitoring raises an alarm when three
consecutive observations exceed the 99% limit of either statistic.

The functional API (``calibrate``, ``project``, ``d_statistic``, ...) is the
core; :class:`MspcMonitor` wraps it as a scikit-learn estimator.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, OutlierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import distributions
from .errors import CalibrationFault, InputFault

MIN_STD = 1e-12
ALARM_RUN = 3
EMPIRICAL = "empirical"
THEORETICAL = "theoretical"


def _as_matrix(X, n_cols=None):
    try:
        X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_all_finite=True)
    except ValueError as exc:
        raise InputFault(str(exc)) from None
    if n_cols is not None and X.shape[1] != n_cols:
        raise InputFault(f"expected {n_cols} variables, got {X.shape[1]}")
    return X


@dataclass(frozen=True)
class PcaModel:
    """Calibrated PCA subspace.

    ``mean``, ``std`` and the rows of ``loadings`` cover only the kept
    variables; ``variable_names`` lists every variable of the input so that
    full-width observations can be projected directly.
    """

    variable_names: tuple
    kept: tuple
    mean: np.ndarray
    std: np.ndarray
    loadings: np.ndarray
    score_variances: np.ndarray
    eigenvalues: np.ndarray

    @property
    def retained(self):
        return self.loadings.shape[1]

    @property
    def excluded_variables(self):
        return tuple(n for n in self.variable_names if n not in self.kept)

    @property
    def kept_index(self):
        lookup = {n: i for i, n in enumerate(self.variable_names)}
        return np.array([lookup[n] for n in self.kept], dtype=int)

    @property
    def explained_variance_ratio(self):
        return self.eigenvalues / self.eigenvalues.sum()

    def scale(self, X):
        """Auto-scale full-width observations (1-D or 2-D) to the kept variables."""
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != len(self.variable_names):
            raise InputFault(
                f"expected {len(self.variable_names)} variables, got {X.shape[-1]}"
            )
        if not np.all(np.isfinite(X)):
            raise InputFault("observation contains non-finite values")
        return (X[..., self.kept_index] - self.mean) / self.std

    def to_dict(self):
        return {
            "variable_names": list(self.variable_names),
            "kept": list(self.kept),
            "excluded_variables": list(self.excluded_variables),
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "loadings": self.loadings.tolist(),
            "score_variances": self.score_variances.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "retained": self.retained,
        }

    @classmethod
    def from_dict(cls, d):
        loadings = np.asarray(d["loadings"], dtype=np.float64)
        if loadings.ndim != 2:
            loadings = loadings.reshape(len(d["kept"]), -1)
        return cls(
            variable_names=tuple(d["variable_names"]),
            kept=tuple(d["kept"]),
            mean=np.asarray(d["mean"], dtype=np.float64),
            std=np.asarray(d["std"], dtype=np.float64),
            loadings=loadings,
            score_variances=np.asarray(d["score_variances"], dtype=np.float64),
            eigenvalues=np.asarray(d["eigenvalues"], dtype=np.float64),
        )


def calibrate(X, variable_names=None, retain=0.9):
    """Fit the PCA model on calibration data.

    Parameters
    ----------
    X : array-like, shape (N, M)
        Calibration observations in engineering units.
    variable_names : sequence of str, optional
    retain : int or float
        An ``int`` fixes the number of components (capped, with a warning,
        at the number of kept variables). A ``float`` in (0, 1] picks the
        smallest count whose cumulative explained variance reaches it.

    Returns
    -------
    PcaModel
    """
    X = _as_matrix(X)
    n, m = X.shape
    if n < 2:
        raise InputFault("need at least two observations")
    if variable_names is None:
        variable_names = tuple(f"x{i}" for i in range(m))
    variable_names = tuple(variable_names)
    if len(variable_names) != m:
        raise InputFault("variable_names length does not match data")

    mean = X.mean(axis=0)
    std = X.std(axis=0, ddof=1)
    keep = std >= MIN_STD
    if not keep.any():
        raise CalibrationFault("every variable has zero variance")
    Z = (X[:, keep] - mean[keep]) / std[keep]
    m_eff = Z.shape[1]

    # right singular vectors of the scaled data = covariance eigenvectors
    _, s, vt = np.linalg.svd(Z, full_matrices=False)
    eigenvalues = s**2 / (n - 1)
    if len(eigenvalues) < m_eff:
        eigenvalues = np.concatenate([eigenvalues, np.zeros(m_eff - len(eigenvalues))])

    if isinstance(retain, (int, np.integer)) and not isinstance(retain, bool):
        a = int(retain)
        if a < 1:
            raise InputFault(f"cannot retain {a} components")
        if a > m_eff:
            # excluded variables shrink the space; keep every remaining direction
            warnings.warn(f"retain={a} exceeds the {m_eff} kept variables; using {m_eff}",
                          stacklevel=2)
            a = m_eff
    else:
        threshold = float(retain)
        if not 0 < threshold <= 1:
            raise InputFault("variance threshold must lie in (0, 1]")
        cumulative = np.cumsum(eigenvalues) / eigenvalues.sum()
        a = int(np.searchsorted(cumulative, threshold - 1e-12) + 1)
        a = min(a, m_eff)
    a = min(a, vt.shape[0])

    loadings = vt[:a].T.copy()
    # deterministic sign: largest-magnitude entry of each column positive
    pivot = np.argmax(np.abs(loadings), axis=0)
    signs = np.sign(loadings[pivot, np.arange(a)])
    signs[signs == 0] = 1.0
    loadings *= signs

    scores = Z @ loadings
    score_variances = scores.var(axis=0, ddof=1)
    if not np.all(score_variances > 0):
        raise CalibrationFault("retained a component with zero score variance")

    names_kept = tuple(nm for nm, k in zip(variable_names, keep) if k)
    return PcaModel(
        variable_names=variable_names,
        kept=names_kept,
        mean=mean[keep],
        std=std[keep],
        loadings=loadings,
        score_variances=score_variances,
        eigenvalues=eigenvalues,
    )


def _accumulate(terms):
    """Sum a sequence of arrays left to right.

    Used instead of matmul/np.sum so each row's result is bit-identical no
    matter how many rows are processed together (BLAS and pairwise
    summation change the order with the block shape).
    """
    it = iter(terms)
    total = np.array(next(it), dtype=np.float64, copy=True)
    for t in it:
        total += t
    return total


def project(model, x):
    """Return ``(scores, residual)`` of one or many full-width observations.

    Both are computed in the auto-scaled space: ``scores = P^T z`` and
    ``residual = z - P scores``.
    """
    z = model.scale(x)
    P = model.loadings
    m, a = P.shape
    scores = np.stack(
        [_accumulate(z[..., j] * P[j, k] for j in range(m)) for k in range(a)], axis=-1
    )
    fitted = np.stack(
        [_accumulate(scores[..., k] * P[j, k] for k in range(a)) for j in range(m)], axis=-1
    )
    return scores, z - fitted


def d_statistic(model, scores):
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape[-1] != model.retained:
        raise InputFault(f"expected {model.retained} scores, got {scores.shape[-1]}")
    lam = model.score_variances
    return _accumulate(scores[..., k] ** 2 / lam[k] for k in range(len(lam)))


def q_statistic(model, residual):
    residual = np.asarray(residual, dtype=np.float64)
    if residual.shape[-1] != len(model.kept):
        raise InputFault(f"expected {len(model.kept)} residuals, got {residual.shape[-1]}")
    return _accumulate(residual[..., j] ** 2 for j in range(residual.shape[-1]))


def statistics(model, X):
    """D and Q for every row of ``X``."""
    scores, residual = project(model, X)
    return d_statistic(model, scores), q_statistic(model, residual)


@dataclass(frozen=True)
class ControlLimits:
    d_95: float
    d_99: float
    q_95: float
    q_99: float
    method: str = EMPIRICAL

    def __post_init__(self):
        if not (self.d_95 <= self.d_99 and self.q_95 <= self.q_99):
            raise CalibrationFault("95% limits must not exceed 99% limits")
        if min(self.d_95, self.d_99, self.q_95, self.q_99) < 0:
            raise CalibrationFault("control limits must be non-negative")

    def to_dict(self):
        return {"d_95": self.d_95, "d_99": self.d_99, "q_95": self.q_95,
                "q_99": self.q_99, "method": self.method}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["d_95"]), float(d["d_99"]), float(d["q_95"]),
                   float(d["q_99"]), d.get("method", EMPIRICAL))


MIN_LIMIT_POINTS = 100


def empirical_limits(d_values, q_values):
    """Control limits as 95th/99th percentiles of the calibration statistics.

    Percentiles use linear interpolation between order statistics (type 7):
    for sorted ``x`` of length ``n`` the ``p`` quantile sits at position
    ``(n - 1) * p``.
    """
    d_values = np.asarray(d_values, dtype=np.float64).ravel()
    q_values = np.asarray(q_values, dtype=np.float64).ravel()
    if min(len(d_values), len(q_values)) < MIN_LIMIT_POINTS:
        raise CalibrationFault(
            f"need at least {MIN_LIMIT_POINTS} calibration points for empirical limits"
        )
    d95, d99 = np.quantile(d_values, [0.95, 0.99], method="linear")
    q95, q99 = np.quantile(q_values, [0.95, 0.99], method="linear")
    return ControlLimits(float(d95), float(d99), float(q95), float(q99), EMPIRICAL)


def d_limit_theoretical(a, n, alpha):
    """Hotelling limit for a new observation: A(N^2-1)/(N(N-A)) F(1-alpha; A, N-A)."""
    if n <= a:
        raise CalibrationFault("theoretical D limit needs more observations than components")
    return a * (n - 1) * (n + 1) / (n * (n - a)) * distributions.f_ppf(1.0 - alpha, a, n - a)


def q_limit_box(q_values, alpha):
    """Box's approximation: Q ~ g chi2(h), matched to the sample mean and variance."""
    q_values = np.asarray(q_values, dtype=np.float64)
    m = float(q_values.mean())
    v = float(q_values.var(ddof=1))
    if not (m > 0 and v > 0):
        # no residual subspace: Q is identically zero
        return 0.0
    g = v / (2.0 * m)
    h = 2.0 * m * m / v
    return g * distributions.chi2_ppf(1.0 - alpha, h)


def theoretical_limits(model, n, q_values, alphas=(0.05, 0.01)):
    """Distribution-based limits at confidence ``1 - alpha`` for each alpha."""
    a95, a99 = alphas
    return ControlLimits(
        d_95=d_limit_theoretical(model.retained, n, a95),
        d_99=d_limit_theoretical(model.retained, n, a99),
        q_95=q_limit_box(q_values, a95),
        q_99=q_limit_box(q_values, a99),
        method=THEORETICAL,
    )


# ---------------------------------------------------------------- monitoring


@dataclass(frozen=True)
class StatSeries:
    """D and Q per observation, with timestamps in seconds."""

    t: np.ndarray
    d: np.ndarray
    q: np.ndarray

    def __len__(self):
        return len(self.t)

    @classmethod
    def concatenate(cls, parts):
        parts = list(parts)
        if not parts:
            return cls(np.empty(0), np.empty(0), np.empty(0))
        return cls(
            np.concatenate([p.t for p in parts]),
            np.concatenate([p.d for p in parts]),
            np.concatenate([p.q for p in parts]),
        )


@dataclass(frozen=True)
class AlarmEvent:
    statistic: str  # "D" or "Q"
    first_exceedance_t: float
    alarm_t: float
    view: str = "controller"
    first_exceedance_index: int = -1
    alarm_index: int = -1

    def to_dict(self):
        return {
            "statistic": self.statistic,
            "view": self.view,
            "first_exceedance_t": self.first_exceedance_t,
            "alarm_t": self.alarm_t,
            "first_exceedance_index": self.first_exceedance_index,
            "alarm_index": self.alarm_index,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            statistic=d["statistic"],
            first_exceedance_t=float(d["first_exceedance_t"]),
            alarm_t=float(d["alarm_t"]),
            view=d.get("view", "controller"),
            first_exceedance_index=int(d.get("first_exceedance_index", -1)),
            alarm_index=int(d.get("alarm_index", -1)),
        )


@dataclass
class _RunCounter:
    """Three-in-a-row alarm logic for one statistic."""

    limit: float
    above: int = 0
    below: int = 0
    open: bool = False
    first_index: int = -1
    first_t: float = 0.0

    def push(self, value, index, t):
        """Feed one point; return ``(first_index, first_t)`` when an alarm fires."""
        if value > self.limit:
            self.below = 0
            if self.above == 0:
                self.first_index, self.first_t = index, t
            self.above += 1
            if not self.open and self.above >= ALARM_RUN:
                self.open = True
                return self.first_index, self.first_t
        else:
            self.above = 0
            self.below += 1
            if self.open and self.below >= ALARM_RUN:
                self.open = False
        return None


class StreamMonitor:
    """Incremental monitor; feeding the data in chunks gives the same output
    as feeding it at once."""

    def __init__(self, model, limits, view="controller"):
        self.model = model
        self.limits = limits
        self.view = view
        self._counters = {"D": _RunCounter(limits.d_99), "Q": _RunCounter(limits.q_99)}
        self._n_seen = 0

    def update(self, observations, times):
        observations = np.asarray(observations, dtype=np.float64)
        if observations.ndim == 1:
            observations = observations[None, :]
        times = np.asarray(times, dtype=np.float64).ravel()
        if len(times) != len(observations):
            raise InputFault("times and observations differ in length")
        bad = ~np.all(np.isfinite(observations), axis=1)
        if bad.any():
            raise InputFault(f"non-finite observation at index {self._n_seen + int(np.argmax(bad))}")
        d, q = statistics(self.model, observations)
        alarms = []
        for stat, values in (("D", d), ("Q", q)):
            counter = self._counters[stat]
            for j, v in enumerate(values.tolist()):
                fired = counter.push(v, self._n_seen + j, times[j])
                if fired is not None:
                    alarms.append(
                        AlarmEvent(stat, float(fired[1]), float(times[j]), self.view,
                                   fired[0], self._n_seen + j)
                    )
        self._n_seen += len(observations)
        alarms.sort(key=lambda a: (a.alarm_index, a.statistic))
        return alarms, StatSeries(times.copy(), d, q)


def monitor_stream(model, limits, observations, times=None, view="controller", sample_period=1.0):
    """Statistics and alarms for a time-ordered block of observations."""
    observations = np.asarray(observations, dtype=np.float64)
    if times is None:
        times = np.arange(len(observations)) * sample_period
    return StreamMonitor(model, limits, view).update(observations, times)


def compute_arl(alarms, onset_s):
    """Seconds from ``onset_s`` to the first alarm at or after it, or ``None``."""
    delays = [a.alarm_t - onset_s for a in alarms if a.alarm_t >= onset_s]
    return min(delays) if delays else None


# ---------------------------------------------------------------- persistence


def dump_model(model, limits, extra=None):
    doc = {"model": model.to_dict(), "limits": limits.to_dict()}
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True)


def save_model(path, model, limits, extra=None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_model(model, limits, extra))
        fh.write("\n")


def load_model(path):
    """Return ``(model, limits, doc)``."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        return PcaModel.from_dict(doc["model"]), ControlLimits.from_dict(doc["limits"]), doc
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise InputFault(f"cannot read model {path}: {exc}") from None


# ---------------------------------------------------------------- estimator


class MspcMonitor(OutlierMixin, BaseEstimator):
    """scikit-learn estimator around the PCA-MSPC model.

    Parameters
    ----------
    n_components : int or None
        Fixed number of components; ``None`` uses ``variance_threshold``.
    variance_threshold : float
        Cumulative explained variance used when ``n_components`` is None.
    limit_method : {"empirical", "theoretical"}

    Attributes
    ----------
    model_ : PcaModel
    limits_ : ControlLimits
    """

    def __init__(self, n_components=None, variance_threshold=0.9, limit_method=EMPIRICAL):
        self.n_components = n_components
        self.variance_threshold = variance_threshold
        self.limit_method = limit_method

    def fit(self, X, y=None, variable_names=None):
        if variable_names is None and hasattr(X, "columns"):
            variable_names = [str(c) for c in X.columns]
        X = _as_matrix(X)
        retain = self.n_components if self.n_components is not None else self.variance_threshold
        self.model_ = calibrate(X, variable_names, retain)
        d, q = statistics(self.model_, X)
        if self.limit_method == EMPIRICAL:
            self.limits_ = empirical_limits(d, q)
        elif self.limit_method == THEORETICAL:
            self.limits_ = theoretical_limits(self.model_, len(X), q)
        else:
            raise InputFault(f"unknown limit method {self.limit_method!r}")
        self.n_features_in_ = X.shape[1]
        self.n_components_ = self.model_.retained
        return self

    def transform(self, X):
        """Scores of each observation."""
        check_is_fitted(self)
        return project(self.model_, _as_matrix(X, self.n_features_in_))[0]

    def inverse_transform(self, T):
        check_is_fitted(self)
        z = np.asarray(T, dtype=np.float64) @ self.model_.loadings.T
        out = np.full((len(z), self.n_features_in_), np.nan)
        idx = self.model_.kept_index
        out[:, idx] = z * self.model_.std + self.model_.mean
        return out

    def score_samples(self, X):
        """``(D, Q)`` arrays for each observation."""
        check_is_fitted(self)
        return statistics(self.model_, _as_matrix(X, self.n_features_in_))

    def decision_function(self, X):
        """Positive inside the 99% limits, negative outside (largest ratio wins)."""
        d, q = self.score_samples(X)
        lim = self.limits_
        # a zero Q limit (no residual subspace) flags any positive Q
        q_ratio = q / lim.q_99 if lim.q_99 > 0 else np.where(q > 0, np.inf, 0.0)
        return 1.0 - np.maximum(d / lim.d_99, q_ratio)

    def predict(self, X):
        """-1 for observations beyond a 99% limit, 1 otherwise."""
        return np.where(self.decision_function(X) < 0, -1, 1)

    def monitor(self, X, times=None, view="controller", sample_period=1.0):
        check_is_fitted(self)
        return monitor_stream(self.model_, self.limits_, X, times, view, sample_period)
