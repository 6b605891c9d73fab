"""Odds-form Bayes rearrangement: segment odds -> arm priors -> posterior curves."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Sequence, Union

import numpy as np

from .data import SegmentRule, TrialDataset, apply_segment_filter
from .errors import (
    BoundaryMismatchError,
    GridMismatchError,
    InfiniteOddsError,
    InsufficientDataError,
    NumericalUnderflowError,
)
from .likelihood import (
    DichotomousLikelihoods,
    OutcomeModel,
    TailAreas,
    empirical_dichotomous,
    fit_outcome_model,
    interval_likelihood_ratio,
    point_likelihood_ratio,
)

COUNT_BASED = "count_based"
PARAMETRIC_TAIL = "parametric_tail"
OBSERVED = "observed"

LikelihoodSource = Union[DichotomousLikelihoods, TailAreas, OutcomeModel, str]

DEFAULT_GRID = (20.0, 200.0, 1.0)


class DegenerateEstimateWarning(UserWarning):
    pass


def odds_from_prob(p):
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr < 0) | (p_arr > 1)):
        raise ValueError("probability outside [0, 1]")
    if np.any(p_arr == 1):
        raise InfiniteOddsError("probability 1 has infinite odds")
    o = p_arr / (1.0 - p_arr)
    return float(o) if o.ndim == 0 else o


def prob_from_odds(o):
    o_arr = np.asarray(o, dtype=float)
    if np.any(o_arr < 0):
        raise ValueError("odds must be non-negative")
    p = o_arr / (1.0 + o_arr)
    return float(p) if p.ndim == 0 else p


@dataclass(frozen=True)
class PriorEstimate:
    """An arm's outcome probability before conditioning on the baseline value.

    ``observed_events``/``observed_total`` carry the arm's full-range counts
    when the dataset has them, for comparison with the estimate.
    """

    arm: str
    segment: tuple[float, float]
    events: int
    non_events: int
    likelihood_ratio: float
    method: str
    prior_odds: float
    prior_probability: float
    degenerate: bool = False
    observed_events: int | None = None
    observed_total: int | None = None

    @property
    def conditional_odds(self) -> float:
        return self.events / self.non_events

    @property
    def exact_conditional_odds(self) -> Fraction:
        return Fraction(self.events, self.non_events)

    @property
    def observed_probability(self) -> float | None:
        if not self.observed_total:
            return None
        return self.observed_events / self.observed_total

    def to_dict(self) -> dict:
        return {
            "arm": self.arm,
            "segment": [self.segment[0], _json_num(self.segment[1])],
            "events": self.events,
            "non_events": self.non_events,
            "conditional_odds": self.conditional_odds,
            "likelihood_ratio": self.likelihood_ratio,
            "method": self.method,
            "prior_odds": self.prior_odds,
            "prior_probability": self.prior_probability,
            "degenerate": self.degenerate,
            "observed_events": self.observed_events,
            "observed_total": self.observed_total,
            "observed_probability": self.observed_probability,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PriorEstimate":
        lo, hi = d["segment"]
        return cls(
            arm=d["arm"],
            segment=(float(lo), math.inf if hi is None else float(hi)),
            events=int(d["events"]),
            non_events=int(d["non_events"]),
            likelihood_ratio=float(d["likelihood_ratio"]),
            method=d["method"],
            prior_odds=float(d["prior_odds"]),
            prior_probability=float(d["prior_probability"]),
            degenerate=bool(d.get("degenerate", False)),
            observed_events=d.get("observed_events"),
            observed_total=d.get("observed_total"),
        )


def _json_num(x: float):
    return None if math.isinf(x) else x


def estimate_prior(
    events: int,
    non_events: int,
    lr: float,
    arm: str = "",
    method: str = COUNT_BASED,
    segment: tuple[float, float] = (0.0, math.inf),
) -> PriorEstimate:
    """Divide the segment's observed odds by the segment's likelihood ratio."""
    if events < 0:
        raise ValueError("events must be non-negative")
    if non_events < 1:
        raise InsufficientDataError(f"segment for {arm or 'arm'} has no non-events")
    if not (lr > 1e-300 and math.isfinite(lr)):
        raise NumericalUnderflowError(f"likelihood ratio {lr!r} is unusable")
    degenerate = events == 0
    if degenerate:
        warnings.warn(
            f"no events in segment for {arm or 'arm'}; prior estimate is 0",
            DegenerateEstimateWarning,
            stacklevel=2,
        )
    prior_odds = (events / non_events) / lr
    return PriorEstimate(
        arm=arm,
        segment=segment,
        events=events,
        non_events=non_events,
        likelihood_ratio=lr,
        method=method,
        prior_odds=prior_odds,
        prior_probability=prior_odds / (1.0 + prior_odds),
        degenerate=degenerate,
    )


def observed_prior(events: int, total: int, arm: str = "") -> PriorEstimate:
    """Wrap a directly counted full-range proportion as a prior."""
    if total < 1 or not 0 <= events < total:
        raise InsufficientDataError(f"cannot form odds from {events}/{total}")
    odds = events / (total - events)
    return PriorEstimate(
        arm=arm,
        segment=(0.0, math.inf),
        events=events,
        non_events=total - events,
        likelihood_ratio=1.0,
        method=OBSERVED,
        prior_odds=odds,
        prior_probability=events / total,
        observed_events=events,
        observed_total=total,
    )


def resolve_likelihoods(
    data: TrialDataset, rule: SegmentRule, source: LikelihoodSource, method: str
):
    """Turn a likelihood source into a concrete likelihood object.

    ``"trial"`` estimates from every record/bin of the dataset (the
    outcome-conditional distributions checked on a full randomised sample);
    ``"segment"`` estimates from the segment-filtered subset only.
    """
    if not isinstance(source, str):
        return source
    if source not in ("trial", "segment"):
        raise ValueError(f"unknown likelihood source {source!r}")
    subset = data if source == "trial" else apply_segment_filter(data, rule)
    if method == COUNT_BASED:
        return empirical_dichotomous(subset, rule.boundary)
    if not subset.records:
        raise InsufficientDataError("fitting an outcome model needs subject records")
    baseline, _, outcome = subset.columns
    return fit_outcome_model(baseline, outcome)


def segment_likelihood_ratio(
    likelihoods, lo: float, hi: float, eligibility: tuple[float, float]
) -> float:
    """Likelihood ratio of a baseline value falling in ``(lo, hi]``."""
    if isinstance(likelihoods, OutcomeModel):
        lo_open = 0.0 if lo <= eligibility[0] else lo
        hi_open = math.inf if hi >= eligibility[1] else hi
        return interval_likelihood_ratio(likelihoods, lo_open, hi_open)
    t = likelihoods.threshold
    if hi <= t:
        return likelihoods.ratio("below")
    if lo >= t:
        return likelihoods.ratio("above")
    raise BoundaryMismatchError(
        f"segment ({lo:g}, {hi:g}] straddles the likelihood threshold {t:g}"
    )


def _check_pairing(likelihoods, method: str) -> None:
    if method == COUNT_BASED and not isinstance(likelihoods, DichotomousLikelihoods):
        raise TypeError("count_based estimation needs DichotomousLikelihoods")
    if method == PARAMETRIC_TAIL and not isinstance(likelihoods, (OutcomeModel, TailAreas)):
        raise TypeError("parametric_tail estimation needs an OutcomeModel or TailAreas")
    if method not in (COUNT_BASED, PARAMETRIC_TAIL):
        raise ValueError(f"unknown method {method!r}")


def default_groups(rule: SegmentRule) -> list[tuple[str, ...]]:
    """Each segment's arm set, then each arm of a pooled segment on its own."""
    groups: list[tuple[str, ...]] = []
    for s in rule.segments:
        groups.append(s.arms)
        if len(s.arms) > 1:
            groups.extend((a,) for a in s.arms)
    return groups


def estimate_all_priors(
    data: TrialDataset,
    rule: SegmentRule,
    likelihoods: LikelihoodSource,
    method: str = COUNT_BASED,
    groups: Sequence[str | Sequence[str]] | None = None,
) -> list[PriorEstimate]:
    rule = rule.resolved(data)
    lik = resolve_likelihoods(data, rule, likelihoods, method)
    _check_pairing(lik, method)
    if groups is None:
        arm_sets = default_groups(rule)
    else:
        arm_sets = [data.resolve_arms(g) for g in groups]

    out = []
    for arms in arm_sets:
        seg = next((s for s in rule.segments if set(arms) <= set(s.arms)), None)
        if seg is None:
            raise ValueError(f"arms {arms} are not allocated to a single segment")
        events, total = data.range_counts(seg.lo, seg.hi, arms)
        lr = segment_likelihood_ratio(lik, seg.lo, seg.hi, data.eligibility)
        label = "+".join(arms)
        est = estimate_prior(events, total - events, lr, label, method, (seg.lo, seg.hi))
        obs_e, obs_t = data.counts(arms)
        out.append(_with_observed(est, obs_e, obs_t))
    return out


def _with_observed(est: PriorEstimate, events: int, total: int) -> PriorEstimate:
    return replace(est, observed_events=events, observed_total=total)


def posterior_probability(prior_odds, lr):
    """``1 / (1 + (1/prior_odds)(1/lr))``, written as odds -> probability."""
    o = np.asarray(prior_odds, dtype=float) * np.asarray(lr, dtype=float)
    p = o / (1.0 + o)
    return float(p) if p.ndim == 0 else p


def make_grid(lo: float, hi: float, step: float) -> np.ndarray:
    if not (step > 0 and hi >= lo > 0):
        raise GridMismatchError(f"invalid grid ({lo}, {hi}, {step})")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n, dtype=float)


@dataclass(frozen=True, eq=False)
class PosteriorCurve:
    arm: str
    prior: PriorEstimate
    values: np.ndarray
    probabilities: np.ndarray
    grid: tuple[float, float, float]

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.values.tolist(), self.probabilities.tolist()))

    @property
    def odds(self) -> np.ndarray:
        return self.probabilities / (1.0 - self.probabilities)

    def probability_at(self, value):
        return np.interp(value, self.values, self.probabilities)

    def to_csv(self) -> str:
        lines = ["aer,probability"]
        lines += [f"{v!r},{p!r}" for v, p in self.points]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "arm": self.arm,
            "grid": list(self.grid),
            "prior": self.prior.to_dict(),
            "points": [[v, p] for v, p in self.points],
        }


def posterior_curve(
    model: OutcomeModel,
    prior: PriorEstimate,
    grid: tuple[float, float, float] = DEFAULT_GRID,
) -> PosteriorCurve:
    values = make_grid(*grid)
    lr = point_likelihood_ratio(model, values)
    probs = posterior_probability(prior.prior_odds, lr)
    return PosteriorCurve(prior.arm, prior, values, np.asarray(probs), tuple(grid))


@dataclass(frozen=True, eq=False)
class ArrCurve:
    """Absolute risk reduction, control minus treatment (benefit positive)."""

    control: str
    treatment: str
    values: np.ndarray
    arr: np.ndarray

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.values.tolist(), self.arr.tolist()))

    @property
    def max(self) -> tuple[float, float]:
        i = int(np.argmax(self.arr))
        return float(self.values[i]), float(self.arr[i])

    def at(self, value):
        return np.interp(value, self.values, self.arr)

    def to_csv(self) -> str:
        lines = ["aer,arr"] + [f"{v!r},{a!r}" for v, a in self.points]
        return "\n".join(lines) + "\n"


def arr_curve(control: PosteriorCurve, treatment: PosteriorCurve) -> ArrCurve:
    if control.values.shape != treatment.values.shape or not np.array_equal(
        control.values, treatment.values
    ):
        raise GridMismatchError("curves are evaluated on different grids")
    return ArrCurve(
        control.arm,
        treatment.arm,
        control.values.copy(),
        control.probabilities - treatment.probabilities,
    )


@dataclass(frozen=True)
class EffectSummary:
    relative_risk: float
    odds_ratio: float
    prior_control: PriorEstimate
    prior_treatment: PriorEstimate

    def to_dict(self) -> dict:
        return {
            "relative_risk": self.relative_risk,
            "odds_ratio": self.odds_ratio,
            "control": self.prior_control.arm,
            "treatment": self.prior_treatment.arm,
        }


def effect_summary(control: PriorEstimate, treatment: PriorEstimate) -> EffectSummary:
    if not control.prior_probability > 0:
        raise InsufficientDataError("control prior is zero; ratios undefined")
    return EffectSummary(
        relative_risk=treatment.prior_probability / control.prior_probability,
        odds_ratio=treatment.prior_odds / control.prior_odds,
        prior_control=control,
        prior_treatment=treatment,
    )
