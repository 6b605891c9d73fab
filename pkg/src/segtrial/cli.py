"""Command-line front end: ``segtrial {fit,estimate,curves,simulate}``.

Exit codes: 0 ok, 2 parse/input, 3 insufficient data, 4 boundary mismatch,
5 grid/prior mismatch, 6 configuration.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import replace
from importlib import metadata
from pathlib import Path

import numpy as np

from . import irma2
from .bayes import (
    COUNT_BASED,
    DEFAULT_GRID,
    PARAMETRIC_TAIL,
    PriorEstimate,
    arr_curve,
    default_groups,
    effect_summary,
    estimate_all_priors,
    observed_prior,
    posterior_curve,
    resolve_likelihoods,
)
from .data import SegmentRule, TrialDataset, load_dataset, load_metadata, reconstruct_records_from_bins
from .errors import (
    ConfigError,
    GridMismatchError,
    InsufficientDataError,
    ParseError,
    SegtrialError,
)
from .likelihood import (
    DichotomousLikelihoods,
    GaussianParams,
    OutcomeModel,
    TailAreas,
    check_intervention_independence,
    fit_outcome_model,
)
from .simulator import SimConfig, run_comparison
from .svg import Series, line_chart
from .validation import bootstrap_prior_ci, exact_binomial_ci

DEFAULT_THRESHOLD = irma2.ALLOCATION_THRESHOLD


# ---------------------------------------------------------------------------
# helpers


def _f3(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return f"{x:.3f}"


def _table(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(str(c)) for c in col) for col in zip(header, *rows)]
    fmt = lambda r: "  ".join(str(c).rjust(w) if i else str(c).ljust(w) for i, (c, w) in enumerate(zip(r, widths)))
    lines = [fmt(header), "  ".join("-" * w for w in widths)] + [fmt(r) for r in rows]
    return "\n".join(lines) + "\n"


def _csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _floats(text: str, n: int, flag: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        vals = ()
    if len(vals) != n:
        raise ConfigError(flag, f"expected {n} comma-separated numbers, got {text!r}")
    return vals


def _versions() -> dict:
    import scipy

    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        from . import __version__ as pkg
    return {"segtrial": pkg, "numpy": np.__version__, "scipy": scipy.__version__}


class _Run:
    """Collects outputs and writes the manifest last."""

    def __init__(self, args, command: str):
        self.args = args
        self.command = command
        self.out = Path(args.out) if getattr(args, "out", None) else None
        self.inputs: list[str] = []
        self.outputs: list[str] = []

    def write(self, name: str, text: str) -> Path:
        assert self.out is not None
        self.out.mkdir(parents=True, exist_ok=True)
        p = self.out / name
        p.write_text(text, encoding="utf-8")
        self.outputs.append(name)
        return p

    def finish(self) -> None:
        if self.out is None:
            return
        params = {k: v for k, v in sorted(vars(self.args).items()) if k not in ("func", "command")}
        manifest = {
            "command": self.command,
            "inputs": self.inputs,
            "parameters": params,
            "versions": _versions(),
            "seed": getattr(self.args, "seed", None),
            "out": str(self.out),
            "outputs": sorted(self.outputs),
        }
        self.write("manifest.json", _dumps(manifest))


# ---------------------------------------------------------------------------
# dataset loading


def _builtin_name(args) -> str | None:
    if args.builtin is None:
        return None
    if isinstance(args.builtin, str):
        return args.builtin
    return args.data or "irma2"


def _load(args, run: _Run) -> tuple[TrialDataset, bool]:
    """Return the dataset and whether it is the builtin IRMA2 table."""
    name = _builtin_name(args)
    if name is not None:
        if name not in irma2.BUILTINS:
            raise ConfigError("--builtin", f"unknown builtin dataset {name!r}")
        data = irma2.BUILTINS[name]()
        run.inputs.append(f"builtin:{name}")
        builtin = True
    else:
        if not args.data:
            raise ConfigError("--data", "pass --data PATH or --builtin irma2")
        meta = {}
        if args.sidecar:
            meta = load_metadata(args.sidecar)
            run.inputs.append(args.sidecar)
        if args.eligibility:
            meta["eligibility"] = _floats(args.eligibility, 2, "--eligibility")
        if args.control:
            meta["control"] = args.control
        try:
            data = load_dataset(args.data, **meta)
        except FileNotFoundError:
            raise ParseError(f"cannot read {args.data!r}") from None
        run.inputs.append(args.data)
        builtin = False
    if getattr(args, "reconstruct", None) and data.bins:
        data = _reconstruct(data, args, builtin)
    return data, builtin


def _reconstruct(data: TrialDataset, args, builtin: bool) -> TrialDataset:
    strategy = args.reconstruct.replace("-", "_")
    model = None
    if strategy == "model_conditional":
        if getattr(args, "model", None):
            model = _read_model(args.model)
        elif builtin:
            model = irma2.PUBLISHED_MODEL
        else:
            # seed the draw with a fit on bin midpoints
            mids = reconstruct_records_from_bins(data.bins, "midpoint")
            model = fit_outcome_model([r.baseline for r in mids], [r.outcome for r in mids])
    records = reconstruct_records_from_bins(data.bins, strategy, model, args.seed)
    return replace(data, records=tuple(data.records) + tuple(records), bins=(), name=f"{data.name} [{strategy}]")


def _read_json(path: str, what: str):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ParseError(f"cannot read {what} file {path!r}") from None
    except json.JSONDecodeError as e:
        raise ParseError(f"{what} file {path!r} is not valid JSON: {e}") from None


def _read_model(path: str) -> OutcomeModel:
    d = _read_json(path, "model")
    try:
        return OutcomeModel.from_dict(d)
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"model file {path!r}: {e}") from None


def _rule(data: TrialDataset, builtin: bool, threshold: float) -> SegmentRule:
    if builtin:
        return irma2.segment_rule(threshold)
    return SegmentRule.threshold(threshold, data.control, "treatment")


# ---------------------------------------------------------------------------
# fit


def cmd_fit(args) -> int:
    run = _Run(args, "fit")
    if run.out is None:
        run.out = Path(".")
    data, _ = _load(args, run)
    if not data.records:
        raise InsufficientDataError("fitting needs subject records; pass --reconstruct for binned data")
    report = check_intervention_independence(data, args.threshold)
    baseline, _, outcome = data.columns
    model = fit_outcome_model(baseline, outcome)

    run.write("model.json", _dumps(model.to_dict()))
    run.write("independence.json", _dumps(report.to_dict()))

    if args.format == "json":
        sys.stdout.write(_dumps({"model": model.to_dict(), "independence": report.to_dict()}))
    else:
        rows = [["all", "outcome", model.with_outcome.n, model.with_outcome.mu, model.with_outcome.sigma, None]]
        rows.append(["all", "no outcome", model.without_outcome.n, model.without_outcome.mu, model.without_outcome.sigma, None])
        for s in report.strata:
            p = s.params
            rows.append([s.group, "outcome" if s.outcome else "no outcome", s.n,
                         p.mu if p else None, p.sigma if p else None, s.likelihood_high])
        header = ["group", "stratum", "n", "mean ln", "sd ln", f"P(>{args.threshold:g})"]
        if args.format == "csv":
            sys.stdout.write(_csv(header, rows))
        else:
            sys.stdout.write(_table(header, [[g, st, str(n), _f3(m), _f3(sd), _f3(ph)] for g, st, n, m, sd, ph in rows]))
            sys.stdout.write(
                f"max gap across arms: mu {_f3(report.max_mu_gap)}, sd {_f3(report.max_sigma_gap)}, "
                f"P(>{args.threshold:g}) {_f3(report.max_likelihood_gap)}\n"
            )
    run.finish()
    return 0


# ---------------------------------------------------------------------------
# estimate


def _likelihood_source(args, data, builtin, notes: list[str]):
    method = PARAMETRIC_TAIL if args.method == "tail" else COUNT_BASED
    if args.method == "tail":
        if args.tail_areas:
            a, b = _floats(args.tail_areas, 2, "--tail-areas")
            return method, TailAreas(args.threshold, a, b)
        if args.model:
            return method, _read_model(args.model)
        if builtin and args.likelihoods in (None, "published"):
            m = irma2.PUBLISHED_MODEL
            stated = irma2.PUBLISHED_TAIL_AREAS
            y = math.log(args.threshold)
            w, sw = m.with_outcome, irma2.STATED_TAIL_PARAMS.with_outcome
            swapped = GaussianParams(w.mu, sw.sigma)
            notes.append(
                f"outcome-group tail area below {args.threshold:g}: {w.cdf(y):.3f} from the model "
                f"(mean ln {w.mu:.2f}, sd {w.sigma:.2f}); no-outcome area {m.without_outcome.cdf(y):.3f}. "
                f"The stated area {stated.below_with:.3f} is quoted with mean ln {sw.mu:.2f}, sd {sw.sigma:.3f}, "
                f"which give {sw.cdf(y):.3f}; mean ln {w.mu:.2f} with sd {sw.sigma:.3f} gives {swapped.cdf(y):.3f}, "
                f"so {sw.mu:.2f} reads as a transposed {w.mu:.2f}. "
                f"Pass --tail-areas {stated.below_with:.3f},{stated.below_without:.3f} to use the stated areas."
            )
            return method, m
        return method, args.likelihoods or "trial"
    source = args.likelihoods or ("published" if builtin else "trial")
    if source == "published":
        if not builtin:
            raise ConfigError("--likelihoods", "published likelihoods exist only for the builtin dataset")
        return method, irma2.PUBLISHED_SEGMENTAL_LIKELIHOODS
    return method, source


def _estimate(args, data, builtin, notes):
    method, source = _likelihood_source(args, data, builtin, notes)
    rule = _rule(data, builtin, args.threshold)
    priors = estimate_all_priors(data, rule, source, method)
    lik = resolve_likelihoods(data, rule.resolved(data), source, method)
    return rule, method, source, lik, priors


def _likelihood_dict(lik) -> dict:
    if isinstance(lik, OutcomeModel):
        return {"type": "outcome_model", **lik.to_dict()}
    if isinstance(lik, TailAreas):
        return {"type": "tail_areas", **lik.to_dict()}
    if isinstance(lik, DichotomousLikelihoods):
        return {"type": "dichotomous", **lik.to_dict()}
    raise TypeError(type(lik).__name__)


def _full_priors(priors: list[PriorEstimate]) -> list[PriorEstimate]:
    out = []
    for p in priors:
        if p.observed_total:
            out.append(observed_prior(p.observed_events, p.observed_total, p.arm))
    return out


def cmd_estimate(args) -> int:
    run = _Run(args, "estimate")
    data, builtin = _load(args, run)
    notes: list[str] = []
    rule, method, source, lik, priors = _estimate(args, data, builtin, notes)

    cis = {}
    if args.bootstrap:
        for p in priors:
            cis[p.arm] = bootstrap_prior_ci(
                data, rule, source, method, p.arm.split("+"), args.bootstrap, 0.95, args.seed
            )
    exact = {p.arm: exact_binomial_ci(p.observed_events, p.observed_total) for p in priors if p.observed_total}

    control, treatment = priors[0], next(p for p in priors[1:] if p.segment != priors[0].segment)
    effect = effect_summary(control, treatment)
    full = _full_priors(priors)
    full_effect = None
    if len(full) == len(priors):
        full_effect = effect_summary(full[0], full[priors.index(treatment)])

    result = {
        "threshold": args.threshold,
        "method": method,
        "likelihoods": _likelihood_dict(lik),
        "priors": [p.to_dict() for p in priors],
        "full_priors": [p.to_dict() for p in full],
        "effect": effect.to_dict(),
        "full_effect": None if full_effect is None else full_effect.to_dict(),
        "bootstrap": {a: ci.to_dict() for a, ci in cis.items()},
        "observed_ci": {a: ci.to_dict() for a, ci in exact.items()},
        "notes": notes,
    }

    header = ["arm", "segment", "events", "non-events", "cond. odds", "LR", "est. odds", "est. prob", "obs. prob"]
    if cis:
        header += ["ci lo", "ci hi"]
    rows = []
    for p in priors:
        seg = f"({p.segment[0]:g}, {p.segment[1]:g}]"
        row = [p.arm, seg, p.events, p.non_events, p.conditional_odds, p.likelihood_ratio,
               p.prior_odds, p.prior_probability, p.observed_probability]
        if cis:
            row += [cis[p.arm].lo, cis[p.arm].hi]
        rows.append(row)

    if args.format == "json":
        sys.stdout.write(_dumps(result))
    elif args.format == "csv":
        sys.stdout.write(_csv(header, rows))
    else:
        sys.stdout.write(_table(header, [r[:4] + [_f3(v) for v in r[4:]] for r in rows]))
        line = f"{treatment.arm} vs {control.arm}: relative risk {_f3(effect.relative_risk)}, odds ratio {_f3(effect.odds_ratio)}"
        if full_effect is not None:
            line += f" (full data: {_f3(full_effect.relative_risk)}, {_f3(full_effect.odds_ratio)})"
        sys.stdout.write(line + "\n")
        for n in notes:
            sys.stdout.write(f"note: {n}\n")

    if run.out is not None:
        run.write("estimate.json", _dumps(result))
        run.write("priors.json", _dumps({"control": control.arm, "priors": result["priors"], "full": result["full_priors"]}))
        if isinstance(lik, OutcomeModel):
            run.write("model.json", _dumps(lik.to_dict()))
    run.finish()
    return 0


# ---------------------------------------------------------------------------
# curves


def _read_priors(path: str) -> tuple[list[PriorEstimate], list[PriorEstimate]]:
    d = _read_json(path, "priors")
    try:
        if isinstance(d, list):
            seg, full = d, []
        else:
            seg, full = d["priors"], d.get("full") or []
        return [PriorEstimate.from_dict(p) for p in seg], [PriorEstimate.from_dict(p) for p in full]
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"priors file {path!r}: {e}") from None


def cmd_curves(args) -> int:
    run = _Run(args, "curves")
    if run.out is None:
        run.out = Path(".")
    grid = _floats(args.grid, 3, "--grid") if args.grid else DEFAULT_GRID

    builtin = _builtin_name(args) is not None
    if args.model:
        model = _read_model(args.model)
        run.inputs.append(args.model)
    elif builtin:
        model = irma2.PUBLISHED_MODEL
    else:
        raise ConfigError("--model", "pass --model PATH (or --builtin irma2)")
    if args.priors:
        priors, full = _read_priors(args.priors)
        run.inputs.append(args.priors)
    elif builtin or args.data:
        data, is_builtin = _load(args, run)
        args.method, args.tail_areas, args.likelihoods = "count", None, None
        _, _, _, _, priors = _estimate(args, data, is_builtin, [])
        full = _full_priors(priors)
    else:
        raise ConfigError("--priors", "pass --priors PATH or a dataset")

    if len(priors) < 2:
        raise GridMismatchError("at least two priors (control and treatment) are required")
    if full and [p.arm for p in full] != [p.arm for p in priors]:
        raise GridMismatchError("full-data priors do not match the segmental priors arm for arm")
    if len({p.arm for p in priors}) != len(priors):
        raise GridMismatchError("duplicate arm in priors")

    curves = [posterior_curve(model, p, grid) for p in priors]
    full_curves = [posterior_curve(model, p, grid) for p in full]
    for c in curves:
        run.write(f"posterior_{c.arm}.csv", c.to_csv())
    for c in full_curves:
        run.write(f"posterior_{c.arm}_full.csv", c.to_csv())
    arr = arr_curve(curves[0], curves[1])
    run.write("arr.csv", arr.to_csv())

    series = [Series(f"{c.arm} (segmental)", c.values, c.probabilities) for c in curves[:2]]
    for i, c in enumerate(full_curves[:2]):
        series.append(Series(f"{c.arm} (full data)", c.values, c.probabilities, dashed=True, color=_color(i)))
    for i, s in enumerate(series[:2]):
        series[i] = replace(s, color=_color(i))
    run.write("posterior.svg", line_chart(series, "Outcome probability by baseline value", "baseline AER (µg/min)", "probability"))
    arr_series = [Series(f"{arr.control} - {arr.treatment}", arr.values, arr.arr)]
    if len(full_curves) >= 2:
        farr = arr_curve(full_curves[0], full_curves[1])
        arr_series.append(Series("full data", farr.values, farr.arr, dashed=True))
    run.write("arr.svg", line_chart(arr_series, "Absolute risk reduction", "baseline AER (µg/min)", "absolute risk reduction", annotate_max=0))

    xmax, amax = arr.max
    if args.format == "json":
        sys.stdout.write(_dumps({"arr_max": {"value": xmax, "arr": amax}, "out": str(run.out), "outputs": run.outputs}))
    else:
        probe = [v for v in (20, 40, 80, 120, 160, 200) if grid[0] <= v <= grid[1]]
        header = ["baseline"] + [c.arm for c in curves[:2]] + ["arr"]
        rows = [[f"{v:g}", *(_f3(float(c.probability_at(v))) for c in curves[:2]), _f3(float(arr.at(v)))] for v in probe]
        if args.format == "csv":
            sys.stdout.write(_csv(header, rows))
        else:
            sys.stdout.write(_table(header, rows))
            sys.stdout.write(f"max ARR {_f3(amax)} at {xmax:g}\n")
    run.finish()
    return 0


def _color(i: int) -> str:
    from .svg import PALETTE

    return PALETTE[i % len(PALETTE)]


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    run = _Run(args, "simulate")
    if run.out is None:
        run.out = Path(".")
    config = SimConfig.load(args.config)
    run.inputs.append(args.config)
    overrides = {}
    if args.replicates is not None:
        overrides["replicates"] = args.replicates
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.bootstrap is not None:
        overrides["bootstrap_replicates"] = args.bootstrap
    if overrides:
        config = config.with_overrides(**overrides)
    report = run_comparison(config)
    run.write("report.json", report.to_json())
    run.write("replicates.csv", report.rows_csv())

    if args.format == "json":
        sys.stdout.write(_dumps(report.summary))
    else:
        header = ["estimator", "truth", "mean", "bias", "rmse", "mc se"]
        rows = []
        for name, s in report.summary["estimators"].items():
            if s is None:
                continue
            rows.append([name, s["truth"], s["mean"], s["bias"], s["rmse"], s["mc_se"]])
        if args.format == "csv":
            sys.stdout.write(_csv(header, rows))
        else:
            sys.stdout.write(_table(header, [[r[0]] + [_f3(v) for v in r[1:]] for r in rows]))
            s = report.summary
            sys.stdout.write(f"replicates {s['replicates']}, failed {s['failed']}\n")
            if "coverage" in s:
                cov = s["coverage"]
                sys.stdout.write(f"bootstrap coverage: control {_f3(cov['control'])}, treatment {_f3(cov['treatment'])}\n")
    run.finish()
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="dataset CSV (subject or bin format)")
    p.add_argument("--builtin", nargs="?", const=True, default=None, metavar="NAME",
                   help="use a bundled dataset (irma2)")
    p.add_argument("--sidecar", help="JSON metadata: eligibility, outcome_threshold, control, arms")
    p.add_argument("--eligibility", help="eligibility range lo,hi")
    p.add_argument("--control", help="control arm label")
    p.add_argument("--reconstruct", choices=["midpoint", "model-conditional"],
                   help="expand bins into pseudo subject records")


def _add_common(p: argparse.ArgumentParser, seed_default: int | None = 0) -> None:
    p.add_argument("--format", choices=["table", "json", "csv"], default="table")
    p.add_argument("--seed", type=int, default=seed_default)
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="segtrial", description="Estimate randomised-trial priors from threshold-allocated data.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit outcome-conditional log-Gaussian models")
    _add_data_flags(p)
    _add_common(p)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--model", help="OutcomeModel JSON used by --reconstruct model-conditional")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("estimate", help="estimate prior outcome probabilities per arm")
    _add_data_flags(p)
    _add_common(p)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--method", choices=["count", "tail"], default="count")
    p.add_argument("--tail-areas", help="P(below|outcome),P(below|no outcome)")
    p.add_argument("--likelihoods", choices=["published", "trial", "segment"])
    p.add_argument("--model", help="OutcomeModel JSON for --method tail")
    p.add_argument("--bootstrap", type=int, default=0, metavar="N", help="bootstrap replicates for intervals")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("curves", help="posterior and ARR curves")
    _add_data_flags(p)
    _add_common(p)
    p.add_argument("--model", help="OutcomeModel JSON")
    p.add_argument("--priors", help="priors JSON written by 'estimate --out'")
    p.add_argument("--grid", help="lo,hi,step")
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("simulate", help="segmental versus full-trial Monte Carlo comparison")
    _add_common(p, seed_default=None)
    p.add_argument("--config", default="paper_scale", help="SimConfig JSON path or bundled name")
    p.add_argument("--replicates", type=int)
    p.add_argument("--bootstrap", type=int, metavar="N")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SegtrialError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
