"""Calibration, exact binomial intervals and bootstrap intervals for priors."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .bayes import (
    COUNT_BASED,
    LikelihoodSource,
    PosteriorCurve,
    estimate_all_priors,
    resolve_likelihoods,
    segment_likelihood_ratio,
)
from .data import SegmentRule, SubjectRecord, TrialDataset
from .errors import InstabilityError, OutOfRangeError
from .likelihood import DichotomousLikelihoods, dichotomous_counts

MAX_SKIP_FRACTION = 0.10


@dataclass(frozen=True)
class CalibrationReport:
    n: int
    mean_posterior: float
    target_prevalence: float

    @property
    def delta(self) -> float:
        return self.mean_posterior - self.target_prevalence

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "mean_posterior": self.mean_posterior,
            "target_prevalence": self.target_prevalence,
            "delta": self.delta,
        }


def calibration_check(
    curve: PosteriorCurve, records: Sequence[SubjectRecord] | Sequence[float]
) -> CalibrationReport:
    """Average the curve over the records' baseline values (linear interpolation)."""
    values = np.array(
        [r.baseline if isinstance(r, SubjectRecord) else r for r in records], dtype=float
    )
    if values.size == 0:
        raise ValueError("calibration needs at least one record")
    lo, hi = curve.values[0], curve.values[-1]
    outside = (values < lo) | (values > hi)
    if outside.any():
        raise OutOfRangeError(
            f"{int(outside.sum())} baseline value(s) outside the curve grid [{lo:g}, {hi:g}]"
        )
    mean = float(np.mean(curve.probability_at(values)))
    return CalibrationReport(int(values.size), mean, curve.prior.prior_probability)


@dataclass(frozen=True)
class IntervalEstimate:
    point: float
    lo: float
    hi: float
    level: float
    method: str
    replicates: int = 0
    skipped: int = 0

    def __post_init__(self):
        if not (0.0 <= self.lo <= self.point <= self.hi <= 1.0):
            raise ValueError(f"inconsistent interval {self.lo} <= {self.point} <= {self.hi}")

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi

    def to_dict(self) -> dict:
        return {
            "point": self.point,
            "lo": self.lo,
            "hi": self.hi,
            "level": self.level,
            "method": self.method,
            "replicates": self.replicates,
            "skipped": self.skipped,
        }


def exact_binomial_ci(events: int, total: int, level: float = 0.95) -> IntervalEstimate:
    """Clopper-Pearson interval from beta quantiles."""
    if total < 1 or not 0 <= events <= total:
        raise ValueError(f"need 0 <= events <= total and total >= 1, got {events}/{total}")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    alpha = 1.0 - level
    lo = 0.0 if events == 0 else float(stats.beta.ppf(alpha / 2, events, total - events + 1))
    hi = 1.0 if events == total else float(stats.beta.isf(alpha / 2, events + 1, total - events))
    return IntervalEstimate(events / total, lo, hi, level, "exact_binomial")


def _streams(seed, n: int) -> list[np.random.Generator]:
    """One PCG64 generator per resampled component, keyed by (seed..., k)."""
    base = list(seed) if isinstance(seed, (tuple, list)) else [seed]
    return [np.random.Generator(np.random.PCG64(np.random.SeedSequence(base + [k]))) for k in range(n)]


def _group_segment(rule: SegmentRule, arms: tuple[str, ...]):
    for s in rule.segments:
        if set(arms) <= set(s.arms):
            return s
    raise ValueError(f"arms {arms} are not allocated to a single segment")


def bootstrap_prior_ci(
    data: TrialDataset,
    rule: SegmentRule,
    likelihoods: LikelihoodSource,
    method: str = COUNT_BASED,
    group: str | Sequence[str] | None = None,
    replicates: int = 2000,
    level: float = 0.95,
    seed: int | Sequence[int] = 0,
) -> IntervalEstimate:
    """Percentile interval for one group's rearrangement-derived prior.

    Resampling is parametric on counts:

    * likelihoods estimated from the same data (``"trial"``/``"segment"``):
      each arm's (side x outcome) cell table is redrawn multinomially with the
      arm size fixed, so the segment counts and likelihood counts stay coupled;
    * external ``DichotomousLikelihoods``: segment events and the two
      high-side likelihood counts are redrawn as independent binomials;
    * ``OutcomeModel``/``TailAreas``: only the segment events are redrawn.

    Component ``k`` draws from PCG64 seeded with ``SeedSequence([seed, k])``;
    replicate ``i`` uses the ``i``-th draw of every component, so a run with
    more replicates extends a shorter one.
    """
    if replicates < 1000:
        raise ValueError("use at least 1000 bootstrap replicates")
    rule = rule.resolved(data)
    if group is None:
        group = next(s.arms for s in rule.segments if data.control in s.arms)
    arms = data.resolve_arms(group)
    seg = _group_segment(rule, arms)
    point = estimate_all_priors(data, rule, likelihoods, method, groups=[arms])[0]
    lik = resolve_likelihoods(data, rule, likelihoods, method)

    if isinstance(likelihoods, str) and method == COUNT_BASED:
        odds = _cell_bootstrap(data, rule, likelihoods, seg, arms, replicates, seed)
    else:
        e_rng, eh_rng, nh_rng = _streams(seed, 3)
        total = point.events + point.non_events
        ev = e_rng.binomial(total, point.events / total, replicates)
        if isinstance(lik, DichotomousLikelihoods):
            eh_b, et, nh_b, nt = lik.counts
            eh = eh_rng.binomial(et, eh_b / et, replicates)
            nh = nh_rng.binomial(nt, nh_b / nt, replicates)
            lr = _side_ratio(seg, lik.threshold, eh, et, nh, nt)
        else:
            lr = np.full(replicates, segment_likelihood_ratio(lik, seg.lo, seg.hi, data.eligibility))
        with np.errstate(divide="ignore", invalid="ignore"):
            odds = (ev / (total - ev)) / lr

    ok = np.isfinite(odds) & (odds >= 0)
    skipped = int(replicates - ok.sum())
    if skipped > MAX_SKIP_FRACTION * replicates:
        raise InstabilityError(f"{skipped} of {replicates} bootstrap replicates were degenerate")
    probs = odds[ok] / (1.0 + odds[ok])
    alpha = 1.0 - level
    lo, hi = np.quantile(probs, [alpha / 2, 1 - alpha / 2])
    p = point.prior_probability
    # percentile bounds can sit just past a point estimate on a discrete resample
    return IntervalEstimate(p, min(float(lo), p), max(float(hi), p), level, "bootstrap", replicates, skipped)


def _side_ratio(seg, threshold, eh, et, nh, nt):
    with np.errstate(divide="ignore", invalid="ignore"):
        if seg.hi <= threshold:
            return ((et - eh) / et) / ((nt - nh) / nt)
        return (eh / et) / (nh / nt)


def _cell_bootstrap(data, rule, scope, seg, arms, replicates, seed):
    threshold = rule.boundary
    below = set(rule.segments[0].arms)
    above = set(rule.segments[1].arms)
    streams = _streams(seed, len(data.arms))
    draws = {}
    for rng, arm in zip(streams, data.arms):
        eh, et, nh, nt = dichotomous_counts(data, threshold, [arm])
        cells = np.array([et - eh, nt - nh, eh, nh], dtype=float)  # low/out, low/no, high/out, high/no
        n = int(cells.sum())
        draws[arm] = rng.multinomial(n, cells / n, replicates) if n else np.zeros((replicates, 4), int)

    zero = np.zeros(replicates)
    low = seg.hi <= threshold
    ev = sum((draws[a][:, 0 if low else 2] for a in arms), zero)
    ne = sum((draws[a][:, 1 if low else 3] for a in arms), zero)

    if scope == "trial":
        pool_lo = pool_hi = list(data.arms)
    else:
        pool_lo = [a for a in data.arms if a in below]
        pool_hi = [a for a in data.arms if a in above]
    lo_out = sum((draws[a][:, 0] for a in pool_lo), zero)
    lo_no = sum((draws[a][:, 1] for a in pool_lo), zero)
    hi_out = sum((draws[a][:, 2] for a in pool_hi), zero)
    hi_no = sum((draws[a][:, 3] for a in pool_hi), zero)
    et, nt = lo_out + hi_out, lo_no + hi_no
    lr = _side_ratio(seg, threshold, hi_out, et, hi_no, nt)
    with np.errstate(divide="ignore", invalid="ignore"):
        return (ev / ne) / lr
