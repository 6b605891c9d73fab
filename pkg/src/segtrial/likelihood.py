"""Outcome-conditional distributions of ln(baseline value) and likelihood ratios."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import special, stats

from .data import TrialDataset
from .errors import (
    BoundaryMismatchError,
    DegenerateDistributionError,
    DomainError,
    InsufficientDataError,
    NumericalUnderflowError,
)

TAIL_FLOOR = 1e-12
_SQRT2 = math.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / _SQRT2)


def normal_sf(z: float) -> float:
    """Upper tail ``1 - normal_cdf(z)`` without cancellation."""
    return 0.5 * math.erfc(z / _SQRT2)


def normal_pdf(z: float) -> float:
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianParams:
    """Mean and SD of ln(value); ``n`` is the sample size behind a fit."""

    mu: float
    sigma: float
    n: int | None = None

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not math.isfinite(self.mu):
            raise ValueError(f"mu must be finite, got {self.mu}")

    def log_pdf(self, y):
        z = (np.asarray(y, dtype=float) - self.mu) / self.sigma
        return -0.5 * z * z - _LOG_SQRT_2PI - math.log(self.sigma)

    def cdf(self, y: float) -> float:
        return normal_cdf((y - self.mu) / self.sigma)

    def sf(self, y: float) -> float:
        return normal_sf((y - self.mu) / self.sigma)

    def to_dict(self) -> dict:
        return {"mu": self.mu, "sigma": self.sigma, "n": self.n}

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianParams":
        n = d.get("n")
        return cls(float(d["mu"]), float(d["sigma"]), None if n is None else int(n))


@dataclass(frozen=True)
class OutcomeModel:
    with_outcome: GaussianParams
    without_outcome: GaussianParams

    def to_dict(self) -> dict:
        return {"with": self.with_outcome.to_dict(), "without": self.without_outcome.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "OutcomeModel":
        return cls(GaussianParams.from_dict(d["with"]), GaussianParams.from_dict(d["without"]))


def fit_log_gaussian(values: Sequence[float]) -> GaussianParams:
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        raise InsufficientDataError(f"need at least 2 values to fit, got {x.size}")
    if np.any(~(x > 0)):
        raise DomainError("all values must be positive to take logs")
    y = np.log(x)
    sd = float(np.std(y, ddof=1))
    if sd == 0.0:
        raise DegenerateDistributionError("all values identical; SD is zero")
    return GaussianParams(float(np.mean(y)), sd, int(x.size))


def fit_outcome_model(
    values: Sequence[float], outcomes: Sequence[bool]
) -> OutcomeModel:
    values = np.asarray(values, dtype=float)
    outcomes = np.asarray(outcomes, dtype=bool)
    return OutcomeModel(fit_log_gaussian(values[outcomes]), fit_log_gaussian(values[~outcomes]))


def point_likelihood_ratio(model: OutcomeModel, value):
    """Density of ln(value) with the outcome over density without it."""
    y = np.log(np.asarray(value, dtype=float))
    lr = np.exp(model.with_outcome.log_pdf(y) - model.without_outcome.log_pdf(y))
    return float(lr) if lr.ndim == 0 else lr


def _tail(p: GaussianParams, y: float, side: str) -> float:
    if side == "below":
        return p.cdf(y)
    if side == "above":
        return p.sf(y)
    raise ValueError(f"side must be 'above' or 'below', got {side!r}")


def tail_likelihood_ratio(model: OutcomeModel, threshold: float, side: str) -> float:
    if not threshold > 0:
        raise DomainError(f"threshold must be positive, got {threshold}")
    y = math.log(threshold)
    num = _tail(model.with_outcome, y, side)
    den = _tail(model.without_outcome, y, side)
    if den < TAIL_FLOOR:
        raise NumericalUnderflowError(
            f"no-outcome tail area {den:.3g} {side} {threshold:g} is below {TAIL_FLOOR:g}"
        )
    return num / den


def interval_likelihood_ratio(model: OutcomeModel, lo: float, hi: float) -> float:
    """Ratio of Gaussian masses of ln(value) over ``(lo, hi]``."""
    if lo <= 0:
        return tail_likelihood_ratio(model, hi, "below")
    if math.isinf(hi):
        return tail_likelihood_ratio(model, lo, "above")
    a, b = math.log(lo), math.log(hi)

    def mass(p: GaussianParams) -> float:
        za, zb = (a - p.mu) / p.sigma, (b - p.mu) / p.sigma
        if za > 0:
            return normal_sf(za) - normal_sf(zb)
        return normal_cdf(zb) - normal_cdf(za)

    den = mass(model.without_outcome)
    if den < TAIL_FLOOR:
        raise NumericalUnderflowError(f"no-outcome mass on ({lo:g}, {hi:g}] is below {TAIL_FLOOR:g}")
    return mass(model.with_outcome) / den


def sample_truncated_log(params: GaussianParams, lo: float, hi: float, u) -> np.ndarray:
    """Inverse-CDF draws of exp(Y), Y ~ N(mu, sigma) truncated to [ln lo, ln hi]."""
    a = (math.log(lo) - params.mu) / params.sigma if lo > 0 else -math.inf
    b = (math.log(hi) - params.mu) / params.sigma if math.isfinite(hi) else math.inf
    y = stats.truncnorm.ppf(np.asarray(u, dtype=float), a, b, loc=params.mu, scale=params.sigma)
    return np.exp(y)


def truncation_mass(params: GaussianParams, lo: float, hi: float) -> float:
    a = (math.log(lo) - params.mu) / params.sigma if lo > 0 else -math.inf
    b = (math.log(hi) - params.mu) / params.sigma if math.isfinite(hi) else math.inf
    return float(special.ndtr(b) - special.ndtr(a)) if a <= 0 else float(
        special.ndtr(-a) - special.ndtr(-b)
    )


@dataclass(frozen=True)
class DichotomousLikelihoods:
    """P(value > threshold | outcome) and P(value > threshold | no outcome), from counts."""

    threshold: float
    events_high: int
    events_total: int
    nonevents_high: int
    nonevents_total: int

    def __post_init__(self):
        if not (0 <= self.events_high <= self.events_total):
            raise ValueError("events_high must lie in [0, events_total]")
        if not (0 <= self.nonevents_high <= self.nonevents_total):
            raise ValueError("nonevents_high must lie in [0, nonevents_total]")
        if self.events_total == 0 or self.nonevents_total == 0:
            raise InsufficientDataError("both outcome strata need at least one subject")

    @property
    def exact_high_given_outcome(self) -> Fraction:
        return Fraction(self.events_high, self.events_total)

    @property
    def exact_high_given_no_outcome(self) -> Fraction:
        return Fraction(self.nonevents_high, self.nonevents_total)

    @property
    def p_high_given_outcome(self) -> float:
        return self.events_high / self.events_total

    @property
    def p_high_given_no_outcome(self) -> float:
        return self.nonevents_high / self.nonevents_total

    @property
    def counts(self) -> tuple[int, int, int, int]:
        return (self.events_high, self.events_total, self.nonevents_high, self.nonevents_total)

    def ratio(self, side: str) -> float:
        eh, et, nh, nt = self.counts
        if side == "above":
            num, den = eh / et, nh / nt
        elif side == "below":
            num, den = (et - eh) / et, (nt - nh) / nt
        else:
            raise ValueError(f"side must be 'above' or 'below', got {side!r}")
        if den == 0:
            raise NumericalUnderflowError(f"no-outcome likelihood {side} threshold is zero")
        return num / den

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "p_high_given_outcome": self.p_high_given_outcome,
            "p_high_given_no_outcome": self.p_high_given_no_outcome,
            "events_high": self.events_high,
            "events_total": self.events_total,
            "nonevents_high": self.nonevents_high,
            "nonevents_total": self.nonevents_total,
        }


@dataclass(frozen=True)
class TailAreas:
    """Stated areas of each outcome distribution below a threshold."""

    threshold: float
    below_with: float
    below_without: float

    def __post_init__(self):
        for v in (self.below_with, self.below_without):
            if not 0 < v < 1:
                raise ValueError(f"tail areas must lie in (0, 1), got {v}")

    def ratio(self, side: str) -> float:
        if side == "below":
            return self.below_with / self.below_without
        if side == "above":
            return (1.0 - self.below_with) / (1.0 - self.below_without)
        raise ValueError(f"side must be 'above' or 'below', got {side!r}")

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "below_with": self.below_with,
            "below_without": self.below_without,
        }


def dichotomous_counts(
    data: TrialDataset, threshold: float, arms: Sequence[str] | None = None
) -> tuple[int, int, int, int]:
    """``(events_high, events_total, nonevents_high, nonevents_total)``."""
    arms = data.arms if arms is None else data.resolve_arms(arms)
    eh = et = nh = nt = 0
    arm_set = set(arms)
    for r in data.records:
        if r.arm not in arm_set:
            continue
        high = r.baseline > threshold
        if r.outcome:
            et += 1
            eh += high
        else:
            nt += 1
            nh += high
    for b in data.bins:
        if b.arm not in arm_set:
            continue
        if b.lo < threshold < b.hi:
            raise BoundaryMismatchError(
                f"bin ({b.lo:g}, {b.hi:g}] of arm {b.arm!r} straddles threshold {threshold:g}"
            )
        high = b.lo >= threshold
        et += b.events
        nt += b.non_events
        if high:
            eh += b.events
            nh += b.non_events
    return eh, et, nh, nt


def empirical_dichotomous(
    data: TrialDataset, threshold: float, arms: Sequence[str] | None = None
) -> DichotomousLikelihoods:
    eh, et, nh, nt = dichotomous_counts(data, threshold, arms)
    if et == 0:
        raise InsufficientDataError("no subjects with the outcome")
    if nt == 0:
        raise InsufficientDataError("no subjects without the outcome")
    return DichotomousLikelihoods(threshold, eh, et, nh, nt)


@dataclass(frozen=True)
class StratumFit:
    group: str
    outcome: bool
    n: int
    params: GaussianParams | None
    likelihood_high: float | None
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "group": self.group,
            "stratum": "outcome" if self.outcome else "no_outcome",
            "n": self.n,
            "params": None if self.params is None else self.params.to_dict(),
            "p_high": self.likelihood_high,
            "note": self.note,
        }


@dataclass(frozen=True)
class IndependenceReport:
    threshold: float | None
    strata: tuple[StratumFit, ...]
    mu_gap: dict = field(default_factory=dict)
    sigma_gap: dict = field(default_factory=dict)
    likelihood_gap: dict = field(default_factory=dict)

    @property
    def max_mu_gap(self) -> float | None:
        return _max_or_none(self.mu_gap.values())

    @property
    def max_sigma_gap(self) -> float | None:
        return _max_or_none(self.sigma_gap.values())

    @property
    def max_likelihood_gap(self) -> float | None:
        return _max_or_none(self.likelihood_gap.values())

    def stratum(self, group: str, outcome: bool) -> StratumFit:
        for s in self.strata:
            if s.group == group and s.outcome == outcome:
                return s
        raise KeyError((group, outcome))

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "strata": [s.to_dict() for s in self.strata],
            "mu_gap": self.mu_gap,
            "sigma_gap": self.sigma_gap,
            "likelihood_gap": self.likelihood_gap,
            "max_mu_gap": self.max_mu_gap,
            "max_sigma_gap": self.max_sigma_gap,
            "max_likelihood_gap": self.max_likelihood_gap,
        }


def _max_or_none(values):
    values = [v for v in values if v is not None]
    return max(values) if values else None


def check_intervention_independence(
    data: TrialDataset,
    threshold: float | None,
    groups: Sequence[str] | None = None,
) -> IndependenceReport:
    """Compare outcome-conditional distributions across arms.

    ``groups`` defaults to the control arm against all treatment arms pooled.
    Strata with fewer than two subject records get no Gaussian fit and a note.
    """
    if groups is None:
        if not data.treatment_arms or data.control not in data.arms:
            raise InsufficientDataError("both arms required (control and treatment)")
        groups = (data.control, "treatment")
    if len(groups) < 2:
        raise InsufficientDataError("both arms required")
    resolved = {g: data.resolve_arms(g) for g in groups}
    labels = {g: "+".join(a) if g == "treatment" else g for g, a in resolved.items()}

    strata: list[StratumFit] = []
    for g, arms in resolved.items():
        recs = data.records_for(arms)
        events, total = data.counts(arms)
        if threshold is not None:
            eh, et, nh, nt = dichotomous_counts(data, threshold, arms)
        for flag in (True, False):
            vals = [r.baseline for r in recs if r.outcome == flag]
            params, note = None, ""
            if len(vals) >= 2:
                try:
                    params = fit_log_gaussian(vals)
                except DegenerateDistributionError as exc:
                    note = str(exc)
            else:
                note = f"only {len(vals)} subject record(s); no fit"
            lik = None
            if threshold is not None:
                num, den = (eh, et) if flag else (nh, nt)
                lik = num / den if den else None
            n = events if flag else total - events
            strata.append(StratumFit(labels[g], flag, n, params, lik, note))

    mu_gap, sigma_gap, lik_gap = {}, {}, {}
    for flag in (True, False):
        key = "outcome" if flag else "no_outcome"
        rows = [s for s in strata if s.outcome == flag]
        fits = [s.params for s in rows if s.params is not None]
        if len(fits) >= 2:
            mu_gap[key] = max(f.mu for f in fits) - min(f.mu for f in fits)
            sigma_gap[key] = max(f.sigma for f in fits) - min(f.sigma for f in fits)
        liks = [s.likelihood_high for s in rows if s.likelihood_high is not None]
        if len(liks) >= 2:
            lik_gap[key] = max(liks) - min(liks)
    return IndependenceReport(threshold, tuple(strata), mu_gap, sigma_gap, lik_gap)
