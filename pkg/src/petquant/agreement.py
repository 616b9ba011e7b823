"""Cohort-level agreement statistics between predicted and reference values.

Five procedures per metric: Lin's concordance correlation coefficient with
the McBride interpretation bands, paired TOST equivalence against a
relative margin, a modified Bland-Altman summary (difference vs reference
value), coverage probability within the clinical margin, and the total
deviation index.

Moment conventions, documented because they differ by procedure: CCC uses
population (divide-by-n) moments following Lin's original estimator, while
TOST uses the sample standard deviation (n - 1) as in a standard paired
t-test. Quantiles (TDI and interquartile ranges elsewhere) interpolate
linearly between order statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .tdist import t_ppf, t_sf

# Two-sided 95% normal quantile, used by the Wilson score interval.
_Z95 = 1.959963984540054


class CCCBand(Enum):
    ALMOST_PERFECT = "ALMOST_PERFECT"
    SUBSTANTIAL = "SUBSTANTIAL"
    MODERATE = "MODERATE"
    POOR = "POOR"


@dataclass(frozen=True)
class AgreementConfig:
    """delta_fraction: relative equivalence margin (0.2 = +-20% of the
    reference mean); alpha: TOST significance level; tau: TDI percentile."""

    delta_fraction: float = 0.2
    alpha: float = 0.05
    tau: float = 0.95

    def __post_init__(self):
        if not 0 < self.delta_fraction < 1:
            raise ValueError("delta_fraction must be in (0, 1)")
        if not 0 < self.alpha < 0.5:
            raise ValueError("alpha must be in (0, 0.5)")
        if not 0 < self.tau <= 1:
            raise ValueError("tau must be in (0, 1]")


@dataclass(frozen=True)
class PairedSeries:
    """Per-patient (reference, predicted) value pairs for one metric."""

    metric_name: str
    y: np.ndarray
    y_hat: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        y_hat = np.asarray(self.y_hat, dtype=np.float64)
        if y.ndim != 1 or y.shape != y_hat.shape:
            raise ValueError("y and y_hat must be 1D arrays of equal length")
        if y.size == 0:
            raise ValueError("paired series must be nonempty")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(y_hat))):
            raise ValueError("paired series values must be finite")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "y_hat", y_hat)

    @property
    def n(self) -> int:
        return int(self.y.size)

    def diffs(self) -> np.ndarray:
        return self.y_hat - self.y


@dataclass(frozen=True)
class TostResult:
    delta: float
    d_bar: float
    sd: float
    p_lower: float
    p_upper: float
    ci90: tuple[float, float]
    equivalent: bool


@dataclass(frozen=True)
class BlandAltmanResult:
    bias: float
    limit: float
    points: tuple[tuple[float, float], ...]  # (reference value, difference)
    outside: tuple[bool, ...]


@dataclass(frozen=True)
class AgreementReport:
    metric_name: str
    n: int
    ccc: float | None
    ccc_band: CCCBand | None
    tost: TostResult
    bland_altman: BlandAltmanResult
    cp: float
    cp_ci95: tuple[float, float]
    tdi: float


def ccc(series: PairedSeries) -> float | None:
    """Lin's concordance correlation coefficient with population moments.

    Returns None (undefined, 0/0) when both series are constant with equal
    means. Two constant but different series concord at exactly 0.
    """
    if series.n < 2:
        raise ValueError("ccc requires n >= 2")
    y, y_hat = series.y, series.y_hat
    mu_y = float(y.mean())
    mu_p = float(y_hat.mean())
    var_y = float(((y - mu_y) ** 2).mean())
    var_p = float(((y_hat - mu_p) ** 2).mean())
    cov = float(((y - mu_y) * (y_hat - mu_p)).mean())
    denom = var_y + var_p + (mu_p - mu_y) ** 2
    if denom == 0.0:
        return None
    return 2.0 * cov / denom


def ccc_band(value: float) -> CCCBand:
    """McBride (2005) interpretation bands for concordance values."""
    if not -1.0 - 1e-12 <= value <= 1.0 + 1e-12:
        raise ValueError(f"ccc must lie in [-1, 1], got {value}")
    if value > 0.99:
        return CCCBand.ALMOST_PERFECT
    if value > 0.95:
        return CCCBand.SUBSTANTIAL
    if value > 0.90:
        return CCCBand.MODERATE
    return CCCBand.POOR


def tost(series: PairedSeries, cfg: AgreementConfig = AgreementConfig()) -> TostResult:
    """Paired two one-sided t-tests against the margin delta_fraction * mean(y).

    Equivalence requires both one-sided p-values below alpha and the
    (1 - 2*alpha) confidence interval for the mean difference to fall
    strictly inside [-delta, +delta]. A zero-variance difference series is
    decided directly from |mean difference| vs the margin, with p-values
    pinned to 0 or 1.
    """
    if series.n < 2:
        raise ValueError("tost requires n >= 2")
    d = series.diffs()
    n = series.n
    d_bar = float(d.mean())
    sd = float(d.std(ddof=1))
    delta = cfg.delta_fraction * float(series.y.mean())

    if sd == 0.0:
        inside = abs(d_bar) < delta
        p_lo = 0.0 if d_bar > -delta else 1.0
        p_hi = 0.0 if d_bar < delta else 1.0
        return TostResult(
            delta=delta, d_bar=d_bar, sd=sd,
            p_lower=p_lo, p_upper=p_hi,
            ci90=(d_bar, d_bar),
            equivalent=inside,
        )

    se = sd / math.sqrt(n)
    df = n - 1
    t_lower = (d_bar + delta) / se
    t_upper = (delta - d_bar) / se
    p_lower = t_sf(t_lower, df)
    p_upper = t_sf(t_upper, df)
    t_crit = t_ppf(1.0 - cfg.alpha, df)
    ci90 = (d_bar - t_crit * se, d_bar + t_crit * se)
    equivalent = (
        p_lower < cfg.alpha
        and p_upper < cfg.alpha
        and ci90[0] > -delta
        and ci90[1] < delta
    )
    return TostResult(
        delta=delta, d_bar=d_bar, sd=sd,
        p_lower=p_lower, p_upper=p_upper,
        ci90=ci90, equivalent=equivalent,
    )


def bland_altman(series: PairedSeries,
                 cfg: AgreementConfig = AgreementConfig()) -> BlandAltmanResult:
    """Difference-vs-reference points with a relative limit of agreement.

    Points are (y_i, y_hat_i - y_i); the agreement limit is
    delta_fraction * mean(y) and each point is flagged when its difference
    falls outside +-limit.
    """
    d = series.diffs()
    limit = cfg.delta_fraction * float(series.y.mean())
    points = tuple((float(y), float(diff)) for y, diff in zip(series.y, d))
    outside = tuple(bool(abs(diff) > limit) for diff in d)
    return BlandAltmanResult(bias=float(d.mean()), limit=limit,
                             points=points, outside=outside)


def coverage_probability(series: PairedSeries,
                         cfg: AgreementConfig = AgreementConfig()) -> float:
    """Fraction of patients with |y_hat - y| <= delta_fraction * y.

    At y = 0 the margin collapses to zero, so only an exact prediction
    counts as covered.
    """
    covered = np.abs(series.diffs()) <= cfg.delta_fraction * series.y
    return float(covered.mean())


def coverage_probability_ci95(series: PairedSeries,
                              cfg: AgreementConfig = AgreementConfig()) -> tuple[float, float]:
    """Wilson score 95% interval for the coverage proportion."""
    n = series.n
    p_hat = coverage_probability(series, cfg)
    z2 = _Z95 * _Z95
    center = (p_hat + z2 / (2 * n)) / (1 + z2 / n)
    half = _Z95 / (1 + z2 / n) * math.sqrt(p_hat * (1 - p_hat) / n + z2 / (4 * n * n))
    return (max(0.0, center - half), min(1.0, center + half))


def tdi(series: PairedSeries, cfg: AgreementConfig = AgreementConfig()) -> float:
    """tau-quantile of absolute deviations (linear interpolation)."""
    abs_d = np.abs(series.diffs())
    return float(np.quantile(abs_d, cfg.tau, method="linear"))


def evaluate_series(series: PairedSeries,
                    cfg: AgreementConfig = AgreementConfig()) -> AgreementReport:
    """Run the full agreement suite on one metric's paired values."""
    c = ccc(series)
    return AgreementReport(
        metric_name=series.metric_name,
        n=series.n,
        ccc=c,
        ccc_band=None if c is None else ccc_band(c),
        tost=tost(series, cfg),
        bland_altman=bland_altman(series, cfg),
        cp=coverage_probability(series, cfg),
        cp_ci95=coverage_probability_ci95(series, cfg),
        tdi=tdi(series, cfg),
    )


def report_to_dict(report: AgreementReport, cfg: AgreementConfig) -> dict:
    """JSON-ready report following the published per-metric schema."""
    return {
        "metric": report.metric_name,
        "n": report.n,
        "ccc": report.ccc,
        "ccc_band": None if report.ccc_band is None else report.ccc_band.value,
        "tost": {
            "delta": report.tost.delta,
            "d_bar": report.tost.d_bar,
            "sd": report.tost.sd,
            "p_lower": report.tost.p_lower,
            "p_upper": report.tost.p_upper,
            "ci90": list(report.tost.ci90),
            "equivalent": report.tost.equivalent,
        },
        "ba": {
            "bias": report.bland_altman.bias,
            "limit": report.bland_altman.limit,
            "points": [list(p) for p in report.bland_altman.points],
        },
        "cp": {"value": report.cp, "ci95": list(report.cp_ci95)},
        "tdi": {"tau": cfg.tau, "value": report.tdi},
    }
