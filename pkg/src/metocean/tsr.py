"""
Time-series regression calibrating numerical model output against buoy
observations.

The target at hour t is regressed on the numerical value at t, t-1 and t-24
plus K sine/cosine pairs for a 720 h and an 8760 h cycle:

    x_t = th0 + th1*n_t + th2*n_{t-1} + th3*n_{t-24}
          + sum_k a_k sin(2 pi k t/720) + b_k cos(2 pi k t/720)
          + sum_k p_k sin(2 pi k t/8760) + w_k cos(2 pi k t/8760) + e_t

t counts hours from a per-model epoch.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from datetime import datetime
from typing import Optional, Sequence

import numpy as np

from .timeseries import (
    HourlyTimeSeries,
    VariableKind,
    align,
    format_time,
    hour_number,
    to_utc,
)

SCHEMA_VERSION = 1
DEFAULT_EPOCH = "2019-01-01T00:00Z"
LAGS = (1, 24)


class RankWarning(UserWarning):
    """The regression design does not have full column rank."""


class Underdetermined(ValueError):
    pass


@dataclass(frozen=True)
class FourierConfig:
    K: int = 8
    period_short: float = 720.0
    period_long: float = 8760.0

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ValueError("K must be a positive integer")
        if not (0 < self.period_short < self.period_long):
            raise ValueError("need 0 < period_short < period_long")
        object.__setattr__(self, "K", int(self.K))

    @property
    def n_features(self) -> int:
        return 4 + 4 * self.K


def fourier_features(t, config: FourierConfig) -> np.ndarray:
    """Sine/cosine basis at hour offsets ``t``.

    Column order: sin short (k=1..K), cos short, sin long, cos long.
    Scalar ``t`` gives a vector of 4K values, array ``t`` an (n, 4K) matrix.
    """
    t_arr = np.asarray(t, dtype=np.float64)
    k = np.arange(1, config.K + 1, dtype=np.float64)
    ang_s = 2.0 * np.pi * np.multiply.outer(t_arr, k) / config.period_short
    ang_l = 2.0 * np.pi * np.multiply.outer(t_arr, k) / config.period_long
    return np.concatenate([np.sin(ang_s), np.cos(ang_s), np.sin(ang_l), np.cos(ang_l)], axis=-1)


def _lagged(numerical: HourlyTimeSeries):
    """Current and lagged numerical values plus a mask where all three exist."""
    x = numerical.values
    ok = numerical.present
    n = len(numerical)
    cur = x
    cols = [cur]
    mask = ok.copy()
    for lag in LAGS:
        shifted = np.zeros(n)
        have = np.zeros(n, dtype=bool)
        if lag < n:
            shifted[lag:] = x[:-lag]
            have[lag:] = ok[:-lag]
        cols.append(shifted)
        mask &= have
    return np.stack(cols, axis=1), mask


def _offsets(series: HourlyTimeSeries, epoch) -> np.ndarray:
    return series.hours - hour_number(epoch)


def design_matrix(numerical: HourlyTimeSeries, epoch, config: FourierConfig):
    """Full feature matrix over the numerical grid and the usable-row mask."""
    lagged, mask = _lagged(numerical)
    t = _offsets(numerical, epoch)
    features = np.concatenate([np.ones((len(numerical), 1)), lagged, fourier_features(t, config)], axis=1)
    return t, features, mask


@dataclass(frozen=True)
class DesignRow:
    t: int
    features: np.ndarray
    target: float


@dataclass(frozen=True, eq=False)
class Design:
    """Regression rows; ``dropped`` counts hours lost to missing values."""

    t: np.ndarray
    features: np.ndarray
    target: np.ndarray
    dropped: int
    config: FourierConfig
    epoch: datetime
    variable: VariableKind
    site_id: str = ""

    def __len__(self) -> int:
        return self.target.size

    def __getitem__(self, i) -> DesignRow:
        return DesignRow(int(self.t[i]), self.features[i], float(self.target[i]))


def build_design(numerical: HourlyTimeSeries, observed: HourlyTimeSeries, epoch=DEFAULT_EPOCH,
                 config: FourierConfig = FourierConfig()) -> Design:
    """Rows for every hour where the observation and all three numerical terms exist."""
    if numerical.variable is not observed.variable:
        raise ValueError("numerical and observed series describe different variables")
    if not numerical.same_grid(observed):
        raise ValueError("series must be aligned on one grid")
    epoch = to_utc(epoch)
    if hour_number(epoch) > numerical.start_hour:
        raise ValueError("epoch must not be after the series start")
    t, features, mask = design_matrix(numerical, epoch, config)
    mask &= observed.present
    if mask.sum() < config.n_features + 1:
        raise Underdetermined(
            f"underdetermined: {int(mask.sum())} usable rows for {config.n_features} coefficients"
        )
    return Design(
        t=t[mask],
        features=features[mask],
        target=observed.values[mask].copy(),
        dropped=int(len(mask) - mask.sum()),
        config=config,
        epoch=epoch,
        variable=numerical.variable,
        site_id=observed.site_id or numerical.site_id,
    )


@dataclass(frozen=True, eq=False)
class TsrModel:
    """Fitted calibration model for one (site, variable)."""

    variable: VariableKind
    site_id: str
    epoch: datetime
    config: FourierConfig
    coefficients: np.ndarray
    eta_hat: float
    n_train: int
    rank: Optional[int] = None

    def __post_init__(self):
        coef = np.array(self.coefficients, dtype=np.float64).reshape(-1)
        if coef.size != self.config.n_features:
            raise ValueError(f"expected {self.config.n_features} coefficients, got {coef.size}")
        if not np.all(np.isfinite(coef)):
            raise ValueError("coefficients must be finite")
        if not (self.eta_hat >= 0):
            raise ValueError("eta_hat must be >= 0")
        coef.flags.writeable = False
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "variable", VariableKind.parse(self.variable))
        object.__setattr__(self, "epoch", to_utc(self.epoch))

    @property
    def theta(self) -> np.ndarray:
        return self.coefficients[:4]

    def _block(self, i):
        K = self.config.K
        return self.coefficients[4 + i * K:4 + (i + 1) * K]

    alpha = property(lambda self: self._block(0))
    beta = property(lambda self: self._block(1))
    psi = property(lambda self: self._block(2))
    omega = property(lambda self: self._block(3))

    @property
    def full_rank(self) -> bool:
        return self.rank is None or self.rank == self.config.n_features

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "site_id": self.site_id,
            "variable": self.variable.value,
            "epoch": format_time(self.epoch),
            "K": self.config.K,
            "periods": [self.config.period_short, self.config.period_long],
            "coefficient_order": "theta0..theta3, alpha1..K, beta1..K, psi1..K, omega1..K",
            "coefficients": [float(c) for c in self.coefficients],
            "eta_hat": float(self.eta_hat),
            "n_train": int(self.n_train),
            "rank": self.rank,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "TsrModel":
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported model schema_version {doc.get('schema_version')!r}")
        short, long_ = doc["periods"]
        return cls(
            variable=VariableKind.parse(doc["variable"]),
            site_id=doc["site_id"],
            epoch=to_utc(doc["epoch"]),
            config=FourierConfig(doc["K"], short, long_),
            coefficients=np.array(doc["coefficients"], dtype=np.float64),
            eta_hat=float(doc["eta_hat"]),
            n_train=int(doc["n_train"]),
            rank=doc.get("rank"),
        )

    @classmethod
    def from_json(cls, text: str) -> "TsrModel":
        return cls.from_dict(json.loads(text))


def fit(design: Design) -> TsrModel:
    """Ordinary least squares via an SVD-based solver.

    A rank-deficient design yields the minimum-norm solution and a
    RankWarning; ``eta_hat`` is SSE / (n - p).
    """
    X, y = design.features, design.target
    n, p = X.shape
    if n < p:
        raise Underdetermined(f"underdetermined: {n} rows for {p} coefficients")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("design contains non-finite entries")
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < p:
        warnings.warn(f"design has rank {rank} < {p}; returning the minimum-norm solution",
                      RankWarning, stacklevel=2)
    resid = y - X @ coef
    dof = n - p
    eta = float(resid @ resid / dof) if dof > 0 else 0.0
    return TsrModel(design.variable, design.site_id, design.epoch, design.config,
                    coef, eta, n, int(rank))


def predict(model: TsrModel, numerical: HourlyTimeSeries, clamp: bool = True) -> HourlyTimeSeries:
    """Calibrated series on the grid of ``numerical``.

    Hours lacking the current, 1 h or 24 h lagged numerical value are
    missing.  Negative outputs are set to 0 unless ``clamp`` is False.
    """
    if numerical.variable is not model.variable:
        raise ValueError(f"model is for {model.variable.value}, series is {numerical.variable.value}")
    _, features, mask = design_matrix(numerical, model.epoch, model.config)
    values = features @ model.coefficients
    if clamp:
        values = np.maximum(values, 0.0)
    return HourlyTimeSeries(numerical.variable, numerical.start, np.where(mask, values, 0.0), mask,
                            numerical.site_id)


@dataclass(frozen=True)
class EvaluationMetrics:
    r2: float
    rmse: float
    bias: float
    mae: float
    n: int


def evaluate(predicted: HourlyTimeSeries, observed: HourlyTimeSeries) -> EvaluationMetrics:
    """Goodness of fit over hours where both series hold a value."""
    if not predicted.same_grid(observed):
        predicted, observed = align(predicted, observed)
    joint = predicted.present & observed.present
    n = int(joint.sum())
    if n < 2:
        raise ValueError(f"need at least 2 jointly present values, found {n}")
    p = predicted.values[joint]
    o = observed.values[joint]
    err = p - o
    sst = float(np.sum((o - o.mean()) ** 2))
    if sst == 0.0:
        raise ValueError("observed values have zero variance; r2 is undefined")
    sse = float(err @ err)
    return EvaluationMetrics(
        r2=1.0 - sse / sst,
        rmse=float(np.sqrt(sse / n)),
        bias=float(err.mean()),
        mae=float(np.abs(err).mean()),
        n=n,
    )


def fit_series(numerical: HourlyTimeSeries, observed: HourlyTimeSeries, epoch=DEFAULT_EPOCH,
               config: FourierConfig = FourierConfig()) -> TsrModel:
    """Align, build the design and fit in one call."""
    if not numerical.same_grid(observed):
        numerical, observed = align(numerical, observed)
    return fit(build_design(numerical, observed, epoch, config))


def validation_curve(train, validation, candidates: Sequence[int], epoch=DEFAULT_EPOCH,
                     period_short: float = 720.0, period_long: float = 8760.0) -> dict:
    """Validation MAE for each candidate K.

    ``train`` and ``validation`` are (numerical, observed) pairs.
    """
    if not candidates:
        raise ValueError("no candidate K values")
    out = {}
    for K in sorted(set(int(k) for k in candidates)):
        config = FourierConfig(K, period_short, period_long)
        model = fit_series(train[0], train[1], epoch, config)
        pred = predict(model, validation[0])
        out[K] = evaluate(pred, validation[1]).mae
    return out


def select_k(train, validation, candidates: Sequence[int], epoch=DEFAULT_EPOCH, **periods) -> int:
    """K minimising validation MAE; ties go to the smaller K."""
    curve = validation_curve(train, validation, candidates, epoch, **periods)
    best = min(curve.values())
    return min(k for k, mae in curve.items() if mae == best)
