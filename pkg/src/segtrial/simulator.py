"""Synthetic trials under outcome-conditional baseline distributions shared by all arms.

Generation order per subject: arm by quota, outcome ~ Bernoulli(arm prior),
then ln(baseline) from that outcome's Gaussian truncated to the eligibility
range (inverse-CDF). Randomness comes from numpy's PCG64; replicate ``i`` of
seed ``s`` uses ``SeedSequence([s, i])``, so replicates can be generated in
any order or in parallel.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .bayes import (
    COUNT_BASED,
    DEFAULT_GRID,
    PARAMETRIC_TAIL,
    PosteriorCurve,
    estimate_all_priors,
    posterior_curve,
)
from .data import AggregateBin, SegmentRule, SubjectRecord, TrialDataset
from .errors import ConfigError, InstabilityError, InsufficientDataError, SegtrialError
from .likelihood import (
    GaussianParams,
    OutcomeModel,
    fit_outcome_model,
    sample_truncated_log,
    truncation_mass,
)
from .validation import MAX_SKIP_FRACTION, bootstrap_prior_ci

MIN_TRUNCATION_MASS = 1e-6
CONFIG_DIR = Path(__file__).parent / "configs"


@dataclass(frozen=True)
class SimConfig:
    n_control: int
    n_treatment: int
    true_prior_control: float
    true_prior_treatment: float
    model: OutcomeModel
    eligibility_range: tuple[float, float] = (20.0, 200.0)
    threshold: float = 80.0
    replicates: int = 1
    seed: int = 0
    control_label: str = "placebo"
    treatment_label: str = "treatment"
    outcome_threshold: float = 200.0
    # end-of-study value model; None -> with-outcome baseline shifted by ln 2
    outcome_value_model: GaussianParams | None = None
    bootstrap_replicates: int = 0
    level: float = 0.95

    def __post_init__(self):
        object.__setattr__(self, "eligibility_range", tuple(float(v) for v in self.eligibility_range))
        for name in ("n_control", "n_treatment"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise ConfigError(name, f"must be a non-negative integer, got {v!r}")
        if self.n_control + self.n_treatment < 1:
            raise ConfigError("n_control", "the trial needs at least one subject")
        for name in ("true_prior_control", "true_prior_treatment", "level"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not 0.0 <= v <= 1.0:
                raise ConfigError(name, f"must be a probability in [0, 1], got {v!r}")
        if not 0 < self.level < 1:
            raise ConfigError("level", "must lie strictly between 0 and 1")
        lo, hi = self.eligibility_range
        if not (0 < lo < hi and math.isfinite(hi)):
            raise ConfigError("eligibility_range", f"need 0 < lo < hi < inf, got {self.eligibility_range}")
        if not lo < self.threshold < hi:
            raise ConfigError("threshold", f"must lie inside the eligibility range, got {self.threshold}")
        if not self.outcome_threshold > 0:
            raise ConfigError("outcome_threshold", "must be positive")
        if not isinstance(self.replicates, int) or self.replicates < 1:
            raise ConfigError("replicates", f"must be a positive integer, got {self.replicates!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed", f"must be a non-negative integer, got {self.seed!r}")
        if self.bootstrap_replicates and self.bootstrap_replicates < 1000:
            raise ConfigError("bootstrap_replicates", "must be 0 (off) or at least 1000")
        if self.control_label == self.treatment_label:
            raise ConfigError("treatment_label", "must differ from control_label")
        for name, p in (("model.with", self.model.with_outcome), ("model.without", self.model.without_outcome)):
            if truncation_mass(p, lo, hi) < MIN_TRUNCATION_MASS:
                raise ConfigError(name, "less than 1e-6 of the distribution lies in the eligibility range")
        ov = self.value_model
        if truncation_mass(ov, self.outcome_threshold, math.inf) < MIN_TRUNCATION_MASS or truncation_mass(
            ov, 0.0, self.outcome_threshold
        ) < MIN_TRUNCATION_MASS:
            raise ConfigError("outcome_value_model", "outcome threshold leaves almost no mass on one side")

    @property
    def value_model(self) -> GaussianParams:
        if self.outcome_value_model is not None:
            return self.outcome_value_model
        w = self.model.with_outcome
        return GaussianParams(w.mu + math.log(2.0), w.sigma)

    def with_overrides(self, **kw) -> "SimConfig":
        d = {**self.__dict__, **kw}
        return SimConfig(**d)

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items()}
        d["model"] = self.model.to_dict()
        d["eligibility_range"] = list(self.eligibility_range)
        d["outcome_value_model"] = None if self.outcome_value_model is None else self.outcome_value_model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        if not isinstance(d, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        for k in d:
            if k not in known:
                raise ConfigError(k, "unknown field")
        for k in ("n_control", "n_treatment", "true_prior_control", "true_prior_treatment", "model"):
            if k not in d:
                raise ConfigError(k, "required field missing")
        kw = dict(d)
        kw["model"] = _model_from(d["model"], "model")
        if d.get("outcome_value_model") is not None:
            kw["outcome_value_model"] = _gaussian_from(d["outcome_value_model"], "outcome_value_model")
        if "eligibility_range" in d:
            er = d["eligibility_range"]
            if not (isinstance(er, (list, tuple)) and len(er) == 2):
                raise ConfigError("eligibility_range", "must be a two-element list")
            kw["eligibility_range"] = tuple(er)
        try:
            return cls(**kw)
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError("<root>", str(e)) from None

    @classmethod
    def from_json(cls, text: str) -> "SimConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError("<root>", f"invalid JSON: {e}") from None
        return cls.from_dict(d)

    @classmethod
    def load(cls, path: str | Path) -> "SimConfig":
        """Load a config file, or a bundled config by bare name (e.g. ``paper_scale``)."""
        p = Path(path)
        if not p.exists():
            bundled = CONFIG_DIR / (p.name if p.suffix == ".json" else p.name + ".json")
            if p.parent == Path(".") and bundled.exists():
                p = bundled
            else:
                raise ConfigError("<path>", f"config file {str(path)!r} not found")
        return cls.from_json(p.read_text())


def _gaussian_from(d, where: str) -> GaussianParams:
    if not isinstance(d, dict):
        raise ConfigError(where, "must be an object with mu and sigma")
    for k in ("mu", "sigma"):
        if k not in d:
            raise ConfigError(f"{where}.{k}", "required field missing")
        if not isinstance(d[k], (int, float)) or isinstance(d[k], bool):
            raise ConfigError(f"{where}.{k}", f"must be a number, got {d[k]!r}")
    try:
        return GaussianParams.from_dict(d)
    except ValueError as e:
        raise ConfigError(where, str(e)) from None


def _model_from(d, where: str) -> OutcomeModel:
    if not isinstance(d, dict):
        raise ConfigError(where, "must be an object with 'with' and 'without'")
    for k in ("with", "without"):
        if k not in d:
            raise ConfigError(f"{where}.{k}", "required field missing")
    return OutcomeModel(_gaussian_from(d["with"], f"{where}.with"), _gaussian_from(d["without"], f"{where}.without"))


def load_bundled_config(name: str) -> SimConfig:
    return SimConfig.load(CONFIG_DIR / f"{name}.json")


@dataclass(frozen=True)
class _Draw:
    baseline: np.ndarray
    treated: np.ndarray
    outcome: np.ndarray
    outcome_value: np.ndarray


def _rng(seed: int, replicate: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, replicate])))


def _draw(config: SimConfig, replicate: int) -> _Draw:
    rng = _rng(config.seed, replicate)
    n0, n1 = config.n_control, config.n_treatment
    n = n0 + n1
    treated = np.arange(n) >= n0
    prior = np.where(treated, config.true_prior_treatment, config.true_prior_control)
    outcome = rng.random(n) < prior
    u_base = rng.random(n)
    u_value = rng.random(n)

    lo, hi = config.eligibility_range
    baseline = np.empty(n)
    for flag, params in ((True, config.model.with_outcome), (False, config.model.without_outcome)):
        m = outcome == flag
        baseline[m] = sample_truncated_log(params, lo, hi, u_base[m])
    # keep rounding at the range edges inside the range
    np.clip(baseline, lo, hi, out=baseline)

    t = config.outcome_threshold
    vm = config.value_model
    value = np.empty(n)
    value[outcome] = sample_truncated_log(vm, t, math.inf, u_value[outcome])
    value[~outcome] = sample_truncated_log(vm, 0.0, t, u_value[~outcome])
    value[outcome] = np.maximum(value[outcome], np.nextafter(t, math.inf))
    value[~outcome] = np.minimum(value[~outcome], t)
    return _Draw(baseline, treated, outcome, value)


def generate_trial(config: SimConfig, replicate: int = 0) -> TrialDataset:
    """One simulated trial as subject records, control arm first."""
    d = _draw(config, replicate)
    labels = (config.control_label, config.treatment_label)
    records = tuple(
        SubjectRecord(float(b), labels[int(tr)], bool(o), float(v))
        for b, tr, o, v in zip(d.baseline, d.treated, d.outcome, d.outcome_value)
    )
    return TrialDataset(
        records=records,
        eligibility=config.eligibility_range,
        outcome_threshold=config.outcome_threshold,
        control=config.control_label,
        name=f"simulated[{config.seed}:{replicate}]",
    )


def _binned(config: SimConfig, d: _Draw) -> TrialDataset:
    """Two bins per arm split at the allocation threshold: all count-based estimation needs."""
    lo, hi = config.eligibility_range
    t = config.threshold
    high = d.baseline > t
    bins = []
    for treated, label in ((False, config.control_label), (True, config.treatment_label)):
        arm = d.treated == treated
        for side, (a, b) in ((False, (lo, t)), (True, (t, hi))):
            m = arm & (high == side)
            bins.append(AggregateBin(a, b, label, int(d.outcome[m].sum()), int(m.sum())))
    return TrialDataset(
        bins=tuple(bins),
        eligibility=config.eligibility_range,
        control=config.control_label,
        name="simulated",
    )


ESTIMATORS = (
    "segmental_count_control",
    "segmental_count_treatment",
    "segmental_parametric_control",
    "segmental_parametric_treatment",
    "rct_control",
    "rct_treatment",
)


def _odds(p: float) -> float:
    return p / (1.0 - p) if p < 1 else math.inf


def _replicate_row(config: SimConfig, i: int) -> dict:
    row: dict = {"replicate": i, "status": "ok"}
    d = _draw(config, i)
    data = _binned(config, d)
    rule = SegmentRule.threshold(config.threshold, config.control_label, config.treatment_label)
    groups = [config.control_label, config.treatment_label]

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        count = estimate_all_priors(data, rule, "trial", COUNT_BASED, groups)
        model = fit_outcome_model(d.baseline, d.outcome)
        param = estimate_all_priors(data, rule, model, PARAMETRIC_TAIL, groups)

    row["segmental_count_control"] = count[0].prior_probability
    row["segmental_count_treatment"] = count[1].prior_probability
    row["segmental_parametric_control"] = param[0].prior_probability
    row["segmental_parametric_treatment"] = param[1].prior_probability
    row["rct_control"] = count[0].observed_probability
    row["rct_treatment"] = count[1].observed_probability
    row["or_segmental"] = _ratio(_odds(row["segmental_count_treatment"]), _odds(row["segmental_count_control"]))
    row["or_rct"] = _ratio(_odds(row["rct_treatment"]), _odds(row["rct_control"]))

    if config.bootstrap_replicates:
        for k, (g, truth) in enumerate(
            ((config.control_label, config.true_prior_control), (config.treatment_label, config.true_prior_treatment))
        ):
            side = "control" if k == 0 else "treatment"
            ci = bootstrap_prior_ci(
                data, rule, "trial", COUNT_BASED, g, config.bootstrap_replicates, config.level, (config.seed, i, k + 1)
            )
            row[f"ci_lo_{side}"] = ci.lo
            row[f"ci_hi_{side}"] = ci.hi
            row[f"covered_{side}"] = ci.lo <= truth <= ci.hi
    return row


def _ratio(a: float, b: float) -> float | None:
    if b == 0 or not math.isfinite(a) or not math.isfinite(b):
        return None
    return a / b


def _failed_row(i: int, err: Exception) -> dict:
    return {"replicate": i, "status": f"failed: {type(err).__name__}: {err}"}


def summarise(rows: Sequence[dict], config: SimConfig) -> dict:
    """Bias, RMSE and Monte Carlo SE per estimator, plus interval coverage."""
    ok = sorted((r for r in rows if r["status"] == "ok"), key=lambda r: r["replicate"])
    truth = {"control": config.true_prior_control, "treatment": config.true_prior_treatment}
    out: dict = {"replicates": len(rows), "succeeded": len(ok), "failed": len(rows) - len(ok), "estimators": {}}
    for name in ESTIMATORS:
        x = np.array([r[name] for r in ok], dtype=float)
        t = truth[name.rsplit("_", 1)[1]]
        if x.size == 0:
            out["estimators"][name] = None
            continue
        sd = float(np.std(x, ddof=1)) if x.size > 1 else None
        out["estimators"][name] = {
            "truth": t,
            "mean": float(np.mean(x)),
            "bias": float(np.mean(x) - t),
            "rmse": float(np.sqrt(np.mean((x - t) ** 2))),
            "sd": sd,
            "mc_se": None if sd is None else sd / math.sqrt(x.size),
        }
    if ok and "covered_control" in ok[0]:
        out["coverage"] = {
            side: float(np.mean([r[f"covered_{side}"] for r in ok])) for side in ("control", "treatment")
        }
    return out


@dataclass(frozen=True)
class ComparisonReport:
    config: SimConfig
    rows: tuple[dict, ...]
    summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(), "summary": self.summary, "rows": list(self.rows)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def rows_csv(self) -> str:
        cols = ["replicate", "status", *ESTIMATORS, "or_segmental", "or_rct"]
        if self.config.bootstrap_replicates:
            for side in ("control", "treatment"):
                cols += [f"ci_lo_{side}", f"ci_hi_{side}", f"covered_{side}"]
        buf = io.StringIO()
        w = csv.DictWriter(buf, cols, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: ("" if r.get(k) is None else repr(r[k]) if isinstance(r.get(k), float) else r.get(k)) for k in cols})
        return buf.getvalue()


def run_comparison(config: SimConfig) -> ComparisonReport:
    """Segmental estimates versus full-trial proportions over ``config.replicates`` trials."""
    rows = []
    for i in range(config.replicates):
        try:
            rows.append(_replicate_row(config, i))
        except (SegtrialError, ValueError, ArithmeticError) as e:
            rows.append(_failed_row(i, e))
    failed = sum(r["status"] != "ok" for r in rows)
    if failed > MAX_SKIP_FRACTION * config.replicates:
        raise InstabilityError(f"{failed} of {config.replicates} simulated replicates failed")
    return ComparisonReport(config, tuple(rows), summarise(rows, config))


@dataclass(frozen=True, eq=False)
class SweepResult:
    threshold: float
    control: PosteriorCurve
    treatment: PosteriorCurve
    events: int
    non_events: int


def sweep_outcome_threshold(
    data: TrialDataset,
    thresholds: Sequence[float],
    rule: SegmentRule,
    grid: tuple[float, float, float] = DEFAULT_GRID,
) -> list[SweepResult]:
    """Redefine the outcome as ``outcome_value > t`` for each ``t`` and rebuild the curve pair.

    The outcome model is refitted on all subjects and the segment priors are
    re-estimated from its tail areas. Thresholds leaving fewer than two
    subjects in either outcome stratum are skipped with a warning.
    """
    if not data.records or any(r.outcome_value is None for r in data.records):
        raise InsufficientDataError("outcome threshold sweep needs outcome_value on every subject record")
    rule = rule.resolved(data)
    ctrl_seg = next(s for s in rule.segments if data.control in s.arms)
    trt_seg = next(s for s in rule.segments if s is not ctrl_seg)
    baseline, _, _ = data.columns
    values = np.array([r.outcome_value for r in data.records], dtype=float)

    out = []
    for t in thresholds:
        if not t > 0:
            raise ValueError(f"outcome thresholds must be positive, got {t}")
        flags = values > t
        n_ev = int(flags.sum())
        n_no = int(flags.size - n_ev)
        if n_ev < 2 or n_no < 2:
            warnings.warn(f"outcome threshold {t:g} leaves {n_ev} events and {n_no} non-events; skipped")
            continue
        relabelled = TrialDataset(
            records=tuple(
                SubjectRecord(r.baseline, r.arm, bool(f), r.outcome_value) for r, f in zip(data.records, flags)
            ),
            eligibility=data.eligibility,
            outcome_threshold=float(t),
            control=data.control,
            name=data.name,
        )
        model = fit_outcome_model(baseline, flags)
        priors = estimate_all_priors(relabelled, rule, model, PARAMETRIC_TAIL, [ctrl_seg.arms, trt_seg.arms])
        out.append(
            SweepResult(
                float(t), posterior_curve(model, priors[0], grid), posterior_curve(model, priors[1], grid), n_ev, n_no
            )
        )
    return out
