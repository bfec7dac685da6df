"""Aberration detection on count series: EARS C1/C2/C3 on daily counts
and the Farrington quasi-Poisson detector on weekly aggregates.

EARS statistic on day t: S_t = max(0, (X_t - (mu_t + k*sigma_t))/sigma_t)
with mu/sigma taken over a short moving baseline (sample sd, n-1
denominator). Farrington fits a log-linear model to reference weeks by
iteratively reweighted least squares, inflates variance by the Pearson
dispersion, and alarms when the observed count exceeds a one-sided
prediction bound computed on the 2/3-power scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date
from typing import Optional

import numpy as np
from scipy import stats

from .series import DiseaseContext, TimeSeries, week_end_date, weekly_counts


class SurveillanceError(Exception):
    """Insufficient history or a non-convergent model fit."""


@dataclass
class EarsParams:
    variant: str = "C1"
    k: float = 3.0

    def __post_init__(self) -> None:
        if self.variant not in ("C1", "C2", "C3"):
            raise ValueError(f"unknown EARS variant {self.variant!r}")
        if self.k <= 0:
            raise ValueError("k must be positive")

    def digest(self) -> str:
        return f"k={self.k:g}"


@dataclass
class FarringtonParams:
    w: int = 3
    b: int = 0
    dispersion_floor: float = 1.0
    trend_enabled: bool = True
    alpha: float = 0.01
    power_exponent: float = 2.0 / 3.0

    def __post_init__(self) -> None:
        if self.w < 1:
            raise ValueError("w must be >= 1")
        if self.b < 0:
            raise ValueError("b must be >= 0")
        if self.dispersion_floor < 1.0:
            raise ValueError("dispersion_floor must be >= 1")
        if not 0.0 < self.alpha < 0.5:
            raise ValueError("alpha must be in (0, 0.5)")

    def digest(self) -> str:
        return f"w={self.w},b={self.b},alpha={self.alpha:g}"


@dataclass
class Alert:
    context: DiseaseContext
    date: date
    algorithm: str
    params: str
    statistic: float
    threshold: float
    observed: float

    def to_record(self) -> dict:
        """Stable-order record; non-finite statistics serialize as null."""
        return {
            "disease": self.context.disease,
            "country": self.context.country,
            "date": self.date.isoformat(),
            "algorithm": self.algorithm,
            "params": self.params,
            "statistic": self.statistic if math.isfinite(self.statistic) else None,
            "threshold": self.threshold if math.isfinite(self.threshold) else None,
            "observed": self.observed,
        }


_EARS_MIN_T = {"C1": 7, "C2": 10, "C3": 12}


def _ears_stats(series: TimeSeries, t: int, params: EarsParams) -> tuple[float, float, float, float]:
    """(tested value, baseline mean, baseline sd, statistic) for day t."""
    min_t = _EARS_MIN_T[params.variant]
    if t < min_t or t >= len(series.counts):
        raise SurveillanceError(
            f"{params.variant} needs day index in [{min_t}, {len(series.counts) - 1}], got {t}"
        )
    counts = series.counts
    if params.variant == "C1":
        baseline = counts[t - 7 : t]
    else:
        baseline = counts[t - 10 : t - 3]
    x = float(counts[t])
    if params.variant == "C3":
        x = float(counts[t] + counts[t - 1] + counts[t - 2]) / 3.0
    mu = float(np.mean(baseline))
    sigma = float(np.std(baseline, ddof=1))
    if sigma == 0.0:
        s = math.inf if x > mu else 0.0
    else:
        s = max(0.0, (x - (mu + params.k * sigma)) / sigma)
    return x, mu, sigma, s


def ears_detect(series: TimeSeries, t: int, params: EarsParams) -> tuple[float, bool]:
    """EARS statistic and alarm flag for day index t.

    Baselines: C1 = days t-7..t-1; C2 and C3 = days t-10..t-4. C3 replaces
    X_t by the mean of the last three days. sigma = 0 degenerates to
    S_t = +inf when X exceeds the baseline mean, else 0. Alarm iff S_t > 0.
    """
    _, _, _, s = _ears_stats(series, t, params)
    return s, s > 0.0


@dataclass
class FarringtonResult:
    expected: float
    upper: float
    alarm: bool
    observed: float
    dispersion: float
    trend_used: bool
    reference_weeks: list[int]


def _poisson_deviance(y: np.ndarray, mu: np.ndarray) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(y > 0, y * np.log(y / mu), 0.0)
    return float(2.0 * np.sum(term - (y - mu)))


def _irls_poisson(
    design: np.ndarray, y: np.ndarray, max_iter: int = 100, tol: float = 1e-10
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fit a Poisson log-link GLM; returns (beta, mu, unscaled covariance)."""
    mu = np.clip(y.astype(float), 0.5, None) + 0.5
    eta = np.log(mu)
    deviance = math.inf
    for _ in range(max_iter):
        weights = mu
        z = eta + (y - mu) / mu
        wx = design * weights[:, None]
        xtwx = design.T @ wx
        beta = np.linalg.solve(xtwx, design.T @ (weights * z))
        eta = np.clip(design @ beta, -30.0, 30.0)
        mu = np.exp(eta)
        new_dev = _poisson_deviance(y, mu)
        if abs(new_dev - deviance) < tol * (abs(new_dev) + 0.1):
            cov = np.linalg.inv(design.T @ (design * mu[:, None]))
            return beta, mu, cov
        deviance = new_dev
    raise SurveillanceError(f"IRLS did not converge in {max_iter} iterations; last deviance {deviance:.6g}")


def _reference_weeks(t: int, n_weeks: int, params: FarringtonParams) -> list[int]:
    if params.b == 0:
        # single-year fallback: the 2w weeks immediately preceding week t-1
        # (week t-1 itself is excluded as a guard against the rising event)
        lo = t - 1 - 2 * params.w
        weeks = list(range(lo, t - 1))
    else:
        weeks = []
        for year in range(1, params.b + 1):
            center = t - 52 * year
            weeks.extend(range(center - params.w, center + params.w + 1))
        weeks = [w for w in weeks if 0 <= w < t]
    if len(weeks) < 2 * params.w or (weeks and weeks[0] < 0):
        raise SurveillanceError(
            f"week {t} needs at least {2 * params.w} reference weeks "
            f"(history from week {t - 1 - 2 * params.w} required)"
        )
    return weeks


def farrington_detect(series: TimeSeries, t: int, params: FarringtonParams) -> FarringtonResult:
    """Expected value, upper bound, and alarm flag for week index t."""
    weekly = weekly_counts(series)
    if t < 0 or t >= len(weekly):
        raise SurveillanceError(f"week index {t} outside series ({len(weekly)} full weeks)")
    ref_weeks = _reference_weeks(t, len(weekly), params)
    y = np.array([weekly[w] for w in ref_weeks], dtype=float)
    observed = float(weekly[t])

    if float(y.sum()) == 0.0:
        return FarringtonResult(
            expected=0.0,
            upper=0.0,
            alarm=observed > 0.0,
            observed=observed,
            dispersion=params.dispersion_floor,
            trend_used=False,
            reference_weeks=ref_weeks,
        )

    times = np.array(ref_weeks, dtype=float)
    t_center = times.mean()
    n = len(y)

    def fit(with_trend: bool):
        if with_trend:
            design = np.column_stack([np.ones(n), times - t_center])
            x0 = np.array([1.0, t - t_center])
        else:
            design = np.ones((n, 1))
            x0 = np.array([1.0])
        beta, mu, cov_unscaled = _irls_poisson(design, y)
        df = n - design.shape[1]
        pearson = float(np.sum((y - mu) ** 2 / mu))
        phi = max(params.dispersion_floor, pearson / df) if df > 0 else params.dispersion_floor
        mu0 = float(np.exp(np.clip(x0 @ beta, -30.0, 30.0)))
        var_mu0 = mu0 * mu0 * float(x0 @ (phi * cov_unscaled) @ x0)
        return beta, mu0, var_mu0, phi, cov_unscaled

    trend_used = False
    if params.trend_enabled and n >= 3:
        beta, mu0, var_mu0, phi, cov_unscaled = fit(with_trend=True)
        se_b1 = math.sqrt(phi * cov_unscaled[1, 1])
        p_trend = 2.0 * (1.0 - stats.norm.cdf(abs(beta[1]) / se_b1)) if se_b1 > 0 else 1.0
        if p_trend < 0.05 and mu0 <= float(y.max()):
            trend_used = True
    if not trend_used:
        _, mu0, var_mu0, phi, _ = fit(with_trend=False)

    tau = phi * mu0 + var_mu0
    z = float(stats.norm.ppf(1.0 - params.alpha))
    p = params.power_exponent
    if mu0 <= 0.0:
        upper = 0.0
    else:
        upper = (mu0**p + z * p * mu0 ** (p - 1.0) * math.sqrt(tau)) ** (1.0 / p)
    return FarringtonResult(
        expected=mu0,
        upper=upper,
        alarm=observed > upper,
        observed=observed,
        dispersion=phi,
        trend_used=trend_used,
        reference_weeks=ref_weeks,
    )


def run_surveillance(
    series: TimeSeries,
    algorithm: str,
    ears: Optional[EarsParams] = None,
    farrington: Optional[FarringtonParams] = None,
) -> list[Alert]:
    """Apply one detector over every index with sufficient history.

    ``algorithm`` is one of c1, c2, c3, farrington. EARS alerts carry the
    day's date; Farrington alerts carry the closing day of the week.
    """
    algo = algorithm.lower()
    alerts: list[Alert] = []
    if algo in ("c1", "c2", "c3"):
        params = ears or EarsParams(variant=algo.upper())
        if params.variant.lower() != algo:
            params = EarsParams(variant=algo.upper(), k=params.k)
        start = _EARS_MIN_T[params.variant]
        if len(series.counts) <= start:
            raise SurveillanceError(
                f"{params.variant} needs at least {start + 1} days of history, "
                f"got {len(series.counts)}"
            )
        for t in range(start, len(series.counts)):
            x, mu, sigma, s = _ears_stats(series, t, params)
            if s > 0.0:
                # observed is the value the rule tested (the 3-day mean for C3)
                alerts.append(
                    Alert(
                        context=series.context,
                        date=series.date_of(t),
                        algorithm=f"ears_{algo}",
                        params=params.digest(),
                        statistic=s,
                        threshold=mu + params.k * sigma,
                        observed=x,
                    )
                )
        return alerts
    if algo == "farrington":
        params_f = farrington or FarringtonParams()
        n_weeks = len(weekly_counts(series))
        first = (2 * params_f.w + 1) if params_f.b == 0 else 0
        if n_weeks <= first:
            raise SurveillanceError(
                f"farrington w={params_f.w} needs at least {first + 1} full weeks of history, "
                f"got {n_weeks}"
            )
        for t in range(first, n_weeks):
            try:
                result = farrington_detect(series, t, params_f)
            except SurveillanceError:
                continue  # not enough reference history at this index
            if result.alarm:
                alerts.append(
                    Alert(
                        context=series.context,
                        date=week_end_date(series, t),
                        algorithm="farrington",
                        params=params_f.digest(),
                        statistic=result.expected,
                        threshold=result.upper,
                        observed=result.observed,
                    )
                )
        return alerts
    raise ValueError(f"unknown algorithm {algorithm!r}")
