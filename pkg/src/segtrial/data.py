"""Trial dataset model, CSV ingestion, segment filtering and binning.

Baseline values are in µg/min. Ranges are half-open ``(lo, hi]`` on real
values, so a value equal to a segment's upper edge falls in that segment. The
one exception is the dataset's eligibility lower bound, which belongs to the
first bin/segment that starts there.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BoundaryMismatchError,
    EmptyDatasetError,
    InsufficientDataError,
    OutOfRangeError,
    ParseError,
)

SUBJECT_HEADER = ("aer", "arm", "outcome")
SUBJECT_HEADER_FULL = ("aer", "arm", "outcome", "outcome_value")
BIN_HEADER = ("lo", "hi", "arm", "events", "total")

# Group alias resolved to every non-control arm of a dataset.
TREATMENT_GROUP = "treatment"


@dataclass(frozen=True)
class SubjectRecord:
    baseline: float
    arm: str
    outcome: bool
    outcome_value: float | None = None

    def __post_init__(self):
        if not self.baseline > 0 or not math.isfinite(self.baseline):
            raise ValueError(f"baseline value must be positive, got {self.baseline}")
        if not self.arm:
            raise ValueError("arm label must be non-empty")
        if self.outcome_value is not None and not self.outcome_value > 0:
            raise ValueError(f"outcome_value must be positive, got {self.outcome_value}")


@dataclass(frozen=True)
class AggregateBin:
    """Event counts for one arm over the baseline range ``(lo, hi]``."""

    lo: float
    hi: float
    arm: str
    events: int
    total: int

    def __post_init__(self):
        if not (self.lo > 0 and self.hi > 0):
            raise ValueError("bin edges must be positive")
        if self.lo > self.hi:
            raise ValueError(f"bin lo {self.lo} exceeds hi {self.hi}")
        if self.events < 0 or self.total < 0 or self.events > self.total:
            raise ValueError(f"invalid counts {self.events}/{self.total}")
        if not self.arm:
            raise ValueError("arm label must be non-empty")

    @property
    def non_events(self) -> int:
        return self.total - self.events

    @property
    def proportion(self) -> float:
        return self.events / self.total


@dataclass(frozen=True)
class TrialDataset:
    records: tuple[SubjectRecord, ...] = ()
    bins: tuple[AggregateBin, ...] = ()
    eligibility: tuple[float, float] = (0.0, math.inf)
    outcome_threshold: float | None = None
    control: str = "placebo"
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "bins", tuple(self.bins))
        object.__setattr__(self, "eligibility", tuple(float(v) for v in self.eligibility))
        if not self.records and not self.bins:
            raise EmptyDatasetError("dataset has neither subject records nor bins")
        lo, hi = self.eligibility
        if lo > hi:
            raise ValueError(f"eligibility range {self.eligibility} is reversed")
        for r in self.records:
            if not lo <= r.baseline <= hi:
                raise OutOfRangeError(
                    f"baseline {r.baseline} outside eligibility range {self.eligibility}"
                )
        by_arm: dict[str, list[AggregateBin]] = {}
        for b in self.bins:
            by_arm.setdefault(b.arm, []).append(b)
        for arm, bins in by_arm.items():
            bins = sorted(bins, key=lambda b: b.lo)
            for a, b in zip(bins, bins[1:]):
                if b.lo < a.hi:
                    raise ValueError(f"overlapping bins for arm {arm!r}: {a} and {b}")

    @property
    def arms(self) -> tuple[str, ...]:
        seen = dict.fromkeys(r.arm for r in self.records)
        seen.update(dict.fromkeys(b.arm for b in self.bins))
        return tuple(seen)

    @property
    def treatment_arms(self) -> tuple[str, ...]:
        return tuple(a for a in self.arms if a != self.control)

    def resolve_arms(self, group: str | Sequence[str]) -> tuple[str, ...]:
        """Expand a group name into arm labels.

        ``"treatment"`` means every non-control arm unless the dataset has an
        arm literally called that; ``"a+b"`` pools arms a and b.
        """
        if not isinstance(group, str):
            names: list[str] = []
            for g in group:
                names.extend(self.resolve_arms(g))
            return tuple(dict.fromkeys(names))
        arms = self.arms
        if group in arms:
            return (group,)
        if group == TREATMENT_GROUP:
            if not self.treatment_arms:
                raise InsufficientDataError("dataset has no treatment arm")
            return self.treatment_arms
        if "+" in group:
            return self.resolve_arms(group.split("+"))
        raise ValueError(f"unknown arm {group!r}; dataset arms are {list(arms)}")

    @cached_property
    def columns(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Record data as ``(baseline, arm, outcome)`` arrays."""
        baseline = np.array([r.baseline for r in self.records], dtype=float)
        arm = np.array([r.arm for r in self.records], dtype=object)
        outcome = np.array([r.outcome for r in self.records], dtype=bool)
        return baseline, arm, outcome

    def records_for(self, arms: Iterable[str]) -> list[SubjectRecord]:
        arms = set(arms)
        return [r for r in self.records if r.arm in arms]

    def bins_for(self, arms: Iterable[str]) -> list[AggregateBin]:
        arms = set(arms)
        return [b for b in self.bins if b.arm in arms]

    def counts(self, arms: Iterable[str]) -> tuple[int, int]:
        """``(events, total)`` over records and bins of the given arms."""
        arms = tuple(arms)
        recs = self.records_for(arms)
        bins = self.bins_for(arms)
        events = sum(r.outcome for r in recs) + sum(b.events for b in bins)
        total = len(recs) + sum(b.total for b in bins)
        return events, total

    def range_counts(
        self, lo: float, hi: float, arms: Iterable[str]
    ) -> tuple[int, int]:
        """``(events, total)`` for baseline values in ``(lo, hi]``.

        Bins must lie wholly inside or outside the range.
        """
        arms = tuple(arms)
        events = total = 0
        for r in self.records_for(arms):
            if self._in_range(r.baseline, lo, hi):
                events += r.outcome
                total += 1
        for b in self.bins_for(arms):
            if _bin_inside(b, lo, hi):
                events += b.events
                total += b.total
            elif _bin_overlaps(b, lo, hi):
                raise BoundaryMismatchError(
                    f"bin ({b.lo:g}, {b.hi:g}] of arm {b.arm!r} straddles the range "
                    f"({lo:g}, {hi:g}]; bins cannot be split"
                )
        return events, total

    def _in_range(self, value: float, lo: float, hi: float) -> bool:
        return lo < value <= hi or (value == lo == self.eligibility[0])


def _bin_inside(b: AggregateBin, lo: float, hi: float) -> bool:
    return lo <= b.lo and b.hi <= hi


def _bin_overlaps(b: AggregateBin, lo: float, hi: float) -> bool:
    return b.lo < hi and lo < b.hi


@dataclass(frozen=True)
class Segment:
    lo: float
    hi: float
    arms: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "arms", tuple(self.arms))
        if not self.lo < self.hi:
            raise ValueError(f"empty segment ({self.lo}, {self.hi}]")
        if not self.arms:
            raise ValueError("segment needs at least one arm")

    @property
    def label(self) -> str:
        return "+".join(self.arms)


@dataclass(frozen=True)
class SegmentRule:
    """Allocation of baseline ranges to arms (or pooled arm sets)."""

    segments: tuple[Segment, ...] = field(default_factory=tuple)

    def __post_init__(self):
        segs = tuple(sorted(self.segments, key=lambda s: s.lo))
        object.__setattr__(self, "segments", segs)
        for a, b in zip(segs, segs[1:]):
            if b.lo < a.hi:
                raise ValueError(f"segments ({a.lo}, {a.hi}] and ({b.lo}, {b.hi}] overlap")

    @classmethod
    def threshold(
        cls,
        value: float,
        below: str | Sequence[str] = "placebo",
        above: str | Sequence[str] = TREATMENT_GROUP,
    ) -> "SegmentRule":
        """Two adjacent segments: ``(0, value]`` and ``(value, inf)``."""
        below = (below,) if isinstance(below, str) else tuple(below)
        above = (above,) if isinstance(above, str) else tuple(above)
        return cls((Segment(0.0, value, below), Segment(value, math.inf, above)))

    @property
    def boundary(self) -> float:
        """The single interior boundary of a two-segment adjacent rule."""
        if len(self.segments) != 2 or self.segments[0].hi != self.segments[1].lo:
            raise ValueError("rule is not a two-segment threshold rule")
        return self.segments[0].hi

    def resolved(self, data: TrialDataset) -> "SegmentRule":
        """Same rule with group aliases expanded to the dataset's arm labels."""
        return SegmentRule(
            tuple(Segment(s.lo, s.hi, data.resolve_arms(s.arms)) for s in self.segments)
        )


def apply_segment_filter(data: TrialDataset, rule: SegmentRule) -> TrialDataset:
    """Keep only the records/bins a segmental trial would have observed."""
    rule = rule.resolved(data)
    records = []
    for r in data.records:
        for s in rule.segments:
            if r.arm in s.arms and data._in_range(r.baseline, s.lo, s.hi):
                records.append(r)
                break
    bins = []
    for b in data.bins:
        for s in rule.segments:
            if b.arm not in s.arms:
                continue
            if _bin_inside(b, s.lo, s.hi):
                bins.append(b)
                break
            if _bin_overlaps(b, s.lo, s.hi):
                raise BoundaryMismatchError(
                    f"bin ({b.lo:g}, {b.hi:g}] of arm {b.arm!r} straddles segment "
                    f"boundary ({s.lo:g}, {s.hi:g}]"
                )
    if not records and not bins:
        raise InsufficientDataError("segment rule selects no data")
    return replace(data, records=tuple(records), bins=tuple(bins), name=f"{data.name} [segmental]")


def bin_counts(
    data: TrialDataset, edges: Sequence[float], arm: str | Sequence[str]
) -> list[AggregateBin]:
    edges = [float(e) for e in edges]
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError("edges must be strictly ascending with at least two values")
    arms = data.resolve_arms(arm) if data.records or data.bins else ()
    label = "+".join(arms)
    values = np.array([r.baseline for r in data.records_for(arms)], dtype=float)
    outcomes = np.array([r.outcome for r in data.records_for(arms)], dtype=bool)
    outside = (values < edges[0]) | (values > edges[-1])
    if outside.any():
        raise OutOfRangeError(
            f"{int(outside.sum())} record(s) outside [{edges[0]:g}, {edges[-1]:g}]"
        )
    # right-closed bins; the first edge itself lands in the first bin
    idx = np.searchsorted(edges, values, side="left") - 1
    idx[values == edges[0]] = 0
    out = []
    for i, (lo, hi) in enumerate(zip(edges, edges[1:])):
        mask = idx == i
        out.append(AggregateBin(lo, hi, label, int(outcomes[mask].sum()), int(mask.sum())))
    return out


def reconstruct_records_from_bins(
    bins: Sequence[AggregateBin],
    strategy: str = "midpoint",
    model=None,
    seed: int = 0,
) -> list[SubjectRecord]:
    """Expand aggregate bins into pseudo subject records.

    ``midpoint`` puts every subject at the geometric centre of its bin.
    ``model_conditional`` draws ln values from the outcome-conditional Gaussian
    of ``model`` truncated to the bin, using one PCG64 stream seeded with
    ``seed`` and consumed bin by bin (events first, then non-events).
    """
    strategy = strategy.replace("-", "_")
    if strategy not in ("midpoint", "model_conditional"):
        raise ValueError(f"unknown reconstruction strategy {strategy!r}")
    records: list[SubjectRecord] = []
    if strategy == "midpoint":
        for b in bins:
            mid = math.sqrt(b.lo * b.hi)
            records.extend(SubjectRecord(mid, b.arm, True) for _ in range(b.events))
            records.extend(SubjectRecord(mid, b.arm, False) for _ in range(b.non_events))
        return records

    if model is None:
        raise ValueError("model_conditional reconstruction needs an OutcomeModel")
    from .likelihood import sample_truncated_log

    rng = np.random.default_rng(seed)
    for b in bins:
        for flag, params, k in (
            (True, model.with_outcome, b.events),
            (False, model.without_outcome, b.non_events),
        ):
            if k == 0:
                continue
            values = sample_truncated_log(params, b.lo, b.hi, rng.random(k))
            records.extend(SubjectRecord(float(v), b.arm, flag) for v in values)
    return records


# ---------------------------------------------------------------------------
# CSV / metadata I/O


def parse_dataset(
    text: str,
    format: str = "auto",
    *,
    eligibility: tuple[float, float] | None = None,
    outcome_threshold: float | None = None,
    control: str = "placebo",
    arms: Sequence[str] | None = None,
    name: str = "",
) -> TrialDataset:
    rows = list(csv.reader(io.StringIO(text)))
    while rows and not any(c.strip() for c in rows[-1]):
        rows.pop()
    if not rows:
        raise ParseError("missing header row", line=1)
    header = tuple(c.strip().lower() for c in rows[0])
    if format == "auto":
        format = "bin_csv" if header == BIN_HEADER else "subject_csv"
    if format == "subject_csv":
        if header not in (SUBJECT_HEADER, SUBJECT_HEADER_FULL):
            raise ParseError(f"expected header {','.join(SUBJECT_HEADER)}[,outcome_value]", line=1)
    elif format == "bin_csv":
        if header != BIN_HEADER:
            raise ParseError(f"expected header {','.join(BIN_HEADER)}", line=1)
    else:
        raise ValueError(f"unknown format {format!r}")
    body = [(i, r) for i, r in enumerate(rows[1:], start=2) if any(c.strip() for c in r)]
    if not body:
        raise EmptyDatasetError("dataset has no data rows")
    known = set(arms) if arms else None

    def arm_label(value: str, line: int) -> str:
        value = value.strip()
        if not value or (known is not None and value not in known):
            raise ParseError(f"unknown arm label {value!r}", line)
        return value

    records: list[SubjectRecord] = []
    bins: list[AggregateBin] = []
    for line, row in body:
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} columns, got {len(row)}", line)
        if format == "subject_csv":
            aer = _positive(row[0], "aer", line)
            arm = arm_label(row[1], line)
            flag = row[2].strip()
            if flag not in ("0", "1"):
                raise ParseError(f"outcome must be 0 or 1, got {flag!r}", line)
            ov = None
            if len(row) == 4 and row[3].strip():
                ov = _positive(row[3], "outcome_value", line)
                if outcome_threshold is not None and (ov > outcome_threshold) != (flag == "1"):
                    raise ParseError(
                        f"outcome flag {flag} disagrees with outcome_value {ov:g} "
                        f"and threshold {outcome_threshold:g}",
                        line,
                    )
            records.append(SubjectRecord(aer, arm, flag == "1", ov))
        else:
            lo = _positive(row[0], "lo", line)
            hi = _positive(row[1], "hi", line)
            arm = arm_label(row[2], line)
            events = _count(row[3], "events", line)
            total = _count(row[4], "total", line)
            if lo > hi:
                raise ParseError(f"lo {lo:g} exceeds hi {hi:g}", line)
            if total < 1 or events > total:
                raise ParseError(f"invalid counts {events}/{total}", line)
            bins.append(AggregateBin(lo, hi, arm, events, total))

    if eligibility is None:
        if records:
            vals = [r.baseline for r in records]
            eligibility = (min(vals), max(vals))
        else:
            eligibility = (min(b.lo for b in bins), max(b.hi for b in bins))
    try:
        return TrialDataset(
            tuple(records), tuple(bins), tuple(eligibility), outcome_threshold, control, name
        )
    except (ValueError, OutOfRangeError) as exc:
        raise ParseError(str(exc)) from exc


def _positive(value: str, column: str, line: int) -> float:
    try:
        x = float(value)
    except ValueError:
        raise ParseError(f"{column}: not a number: {value!r}", line) from None
    if not math.isfinite(x) or x <= 0:
        raise ParseError(f"{column}: value must be positive, got {value.strip()}", line)
    return x


def _count(value: str, column: str, line: int) -> int:
    try:
        n = int(value)
    except ValueError:
        raise ParseError(f"{column}: not an integer: {value!r}", line) from None
    if n < 0:
        raise ParseError(f"{column}: must be non-negative", line)
    return n


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def emit_dataset(data: TrialDataset, format: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if format == "subject_csv":
        full = any(r.outcome_value is not None for r in data.records)
        w.writerow(SUBJECT_HEADER_FULL if full else SUBJECT_HEADER)
        for r in data.records:
            row = [_num(r.baseline), r.arm, int(r.outcome)]
            if full:
                row.append("" if r.outcome_value is None else _num(r.outcome_value))
            w.writerow(row)
    elif format == "bin_csv":
        w.writerow(BIN_HEADER)
        for b in data.bins:
            w.writerow([_num(b.lo), _num(b.hi), b.arm, b.events, b.total])
    else:
        raise ValueError(f"unknown format {format!r}")
    return buf.getvalue()


def load_metadata(path: str | Path) -> dict:
    """Read a JSON sidecar ``{"eligibility":[lo,hi],"outcome_threshold":t,"control":arm}``."""
    meta = json.loads(Path(path).read_text())
    out = {}
    if "eligibility" in meta:
        lo, hi = meta["eligibility"]
        out["eligibility"] = (float(lo), float(hi))
    if meta.get("outcome_threshold") is not None:
        out["outcome_threshold"] = float(meta["outcome_threshold"])
    if "control" in meta:
        out["control"] = str(meta["control"])
    if "arms" in meta:
        out["arms"] = [str(a) for a in meta["arms"]]
    return out


def load_dataset(path: str | Path, **meta) -> TrialDataset:
    path = Path(path)
    return parse_dataset(path.read_text(encoding="utf-8"), name=path.stem, **meta)
