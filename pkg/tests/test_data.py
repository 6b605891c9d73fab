import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from segtrial import irma2
from segtrial.data import (
    AggregateBin,
    Segment,
    SegmentRule,
    SubjectRecord,
    TrialDataset,
    apply_segment_filter,
    bin_counts,
    emit_dataset,
    load_dataset,
    parse_dataset,
    reconstruct_records_from_bins,
)
from segtrial.errors import (
    BoundaryMismatchError,
    EmptyDatasetError,
    OutOfRangeError,
    ParseError,
)

SUBJECTS = """aer,arm,outcome
25,placebo,0
60,placebo,1
80,placebo,0
81,drug,1
150,drug,0
"""


def test_builtin_totals(irma):
    assert irma.counts(["placebo"]) == (30, 196)
    assert irma.counts(irma2.TREATMENT_ARMS) == (29, 379)
    assert irma.counts(irma.arms) == (59, 575)


def test_builtin_segment_counts(irma):
    assert irma.range_counts(0, 80, ["placebo"]) == (10, 134)
    assert irma.range_counts(80, math.inf, irma2.TREATMENT_ARMS) == (19, 112)
    assert irma.range_counts(80, math.inf, [irma2.IRB150]) == (14, 62)


def test_range_straddling_bin_raises(irma):
    with pytest.raises(BoundaryMismatchError):
        irma.range_counts(0, 100, ["placebo"])


def test_parse_subject_csv_and_roundtrip():
    d = parse_dataset(SUBJECTS)
    assert d.arms == ("placebo", "drug")
    assert d.eligibility == (25.0, 150.0)
    assert d.counts(["drug"]) == (1, 2)
    again = parse_dataset(emit_dataset(d, "subject_csv"))
    assert again.records == d.records


def test_parse_bin_csv_roundtrip(irma):
    text = emit_dataset(irma, "bin_csv")
    back = parse_dataset(text, eligibility=(20, 200))
    assert back.bins == irma.bins


@pytest.mark.parametrize(
    "text,line",
    [
        ("aer,arm,outcome\n30,placebo,2\n", 2),
        ("aer,arm,outcome\n30,placebo,1\n-4,placebo,0\n", 3),
        ("aer,arm,outcome\n30,placebo\n", 2),
        ("aer,arm,outcome\nabc,placebo,1\n", 2),
        ("x,y\n1,2\n", 1),
    ],
)
def test_parse_errors_carry_line(text, line):
    with pytest.raises(ParseError) as e:
        parse_dataset(text)
    assert e.value.line == line
    assert f"line {line}" in str(e.value)


def test_parse_empty_body():
    with pytest.raises(EmptyDatasetError):
        parse_dataset("aer,arm,outcome\n")


def test_parse_unknown_arm():
    with pytest.raises(ParseError):
        parse_dataset(SUBJECTS, arms=["placebo"])


def test_outcome_value_must_agree_with_threshold():
    text = "aer,arm,outcome,outcome_value\n30,placebo,1,150\n"
    with pytest.raises(ParseError):
        parse_dataset(text, outcome_threshold=200)
    ok = parse_dataset("aer,arm,outcome,outcome_value\n30,placebo,1,250\n", outcome_threshold=200)
    assert ok.records[0].outcome_value == 250


def test_eligibility_violation_is_parse_error():
    with pytest.raises(ParseError):
        parse_dataset(SUBJECTS, eligibility=(30, 200))


def test_load_dataset_from_file(tmp_path):
    p = tmp_path / "trial.csv"
    p.write_text(SUBJECTS)
    d = load_dataset(p)
    assert d.name == "trial"
    assert len(d.records) == 5


def test_record_validation():
    with pytest.raises(ValueError):
        SubjectRecord(0.0, "a", True)
    with pytest.raises(ValueError):
        AggregateBin(40, 20, "a", 0, 1)
    with pytest.raises(ValueError):
        AggregateBin(20, 40, "a", 3, 2)


def test_overlapping_bins_rejected():
    with pytest.raises(ValueError):
        TrialDataset(bins=(AggregateBin(20, 50, "a", 0, 1), AggregateBin(40, 80, "a", 0, 1)))


def test_half_open_boundary_convention():
    d = parse_dataset(SUBJECTS)
    # 80 belongs to (.., 80], 81 to (80, ..]
    assert d.range_counts(0, 80, ["placebo"]) == (1, 3)
    assert d.range_counts(80, math.inf, ["drug"]) == (1, 2)


def test_eligibility_lower_bound_in_first_bin():
    d = TrialDataset(records=(SubjectRecord(20.0, "a", False),), eligibility=(20, 200))
    assert d.range_counts(20, 40, ["a"]) == (0, 1)
    assert bin_counts(d, [20, 40, 80], "a")[0].total == 1


def test_segment_filter(irma, rule):
    seg = apply_segment_filter(irma, rule)
    assert seg.counts(["placebo"]) == (10, 134)
    assert seg.counts(irma2.TREATMENT_ARMS) == (19, 112)


def test_segment_filter_boundary_mismatch(irma):
    with pytest.raises(BoundaryMismatchError):
        apply_segment_filter(irma, irma2.segment_rule(100))


def test_segment_rule_overlap():
    with pytest.raises(ValueError):
        SegmentRule((Segment(0, 100, ("a",)), Segment(80, 200, ("b",))))


def test_resolve_arms(irma):
    assert irma.resolve_arms("treatment") == irma2.TREATMENT_ARMS
    assert irma.resolve_arms("placebo+irbesartan-300") == ("placebo", "irbesartan-300")
    with pytest.raises(ValueError):
        irma.resolve_arms("nope")


def test_bin_counts_out_of_range():
    d = parse_dataset(SUBJECTS)
    with pytest.raises(OutOfRangeError):
        bin_counts(d, [40, 80, 160], "placebo")


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(20, 200), min_size=1, max_size=60), st.integers(0, 2**31))
def test_bin_counts_partition(values, seed):
    rng = np.random.default_rng(seed)
    recs = tuple(SubjectRecord(v, "a", bool(rng.random() < 0.3)) for v in values)
    d = TrialDataset(records=recs, eligibility=(20, 200))
    bins = bin_counts(d, irma2.EDGES, "a")
    assert sum(b.total for b in bins) == len(values)
    assert sum(b.events for b in bins) == sum(r.outcome for r in recs)
    for b in bins:
        inside = [r for r in recs if b.lo < r.baseline <= b.hi or (r.baseline == 20 and b.lo == 20)]
        assert b.total == len(inside)


def test_reconstruct_midpoint(irma):
    recs = reconstruct_records_from_bins(irma.bins, "midpoint")
    assert len(recs) == 575
    assert sum(r.outcome for r in recs) == 59
    first = [r for r in recs if r.arm == "placebo"][0]
    assert first.baseline == pytest.approx(math.sqrt(20 * 40))


def test_reconstruct_model_conditional_rebins_exactly(irma):
    recs = reconstruct_records_from_bins(irma.bins, "model-conditional", irma2.PUBLISHED_MODEL, seed=7)
    d = TrialDataset(records=tuple(recs), eligibility=(20, 200))
    for arm in irma2.ARMS:
        rebinned = bin_counts(d, irma2.EDGES, arm)
        orig = [b for b in irma.bins if b.arm == arm]
        assert [(b.events, b.total) for b in rebinned] == [(b.events, b.total) for b in orig]
    again = reconstruct_records_from_bins(irma.bins, "model_conditional", irma2.PUBLISHED_MODEL, seed=7)
    assert again == recs


def test_reconstruct_needs_model(irma):
    with pytest.raises(ValueError):
        reconstruct_records_from_bins(irma.bins, "model_conditional")
