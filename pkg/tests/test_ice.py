"""Counterexample triage, the example database gate, weakest-link blame, and
diagnostics rendering."""

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contractor.contracts import Contract, ContractOrigin, ParseFailure, ParseFailureReason
from contractor.errors import NoResponsibleFunctionError
from contractor.ice import (
    ADMISSIBLE_CATEGORIES,
    Category,
    Classification,
    IceDatabase,
    Level,
    StateExample,
    admit,
    classify,
    extract_implications,
    from_text,
    normalize_value,
    record_positive,
    render_diagnostics,
    to_text,
    valuation_for,
    weakest_link,
)
from contractor.program_model import parse_program
from contractor.verifier import Status, VerificationResult
from conftest import corpus_sources, failure_output, parsed_from


def result_with(status: Status, output: str = "") -> VerificationResult:
    from contractor.verifier import parse_verifier_output
    if output:
        st_, parsed = parse_verifier_output(output)
        return VerificationResult(status=st_, raw_output=output, parsed=parsed,
                                  wall_time_s=0.0, mode="system", command=())
    return VerificationResult(status=status, raw_output="", parsed=None,
                              wall_time_s=0.0, mode="system", command=())


def test_classify_parse_failure():
    pf = ParseFailure(ParseFailureReason.NO_CLAUSES, "nothing")
    c = classify(pf)
    assert c.level is Level.SEMANTIC
    assert c.category is Category.SYNTAX_ERROR


def test_classify_timeout_and_tool_error_are_tool_level():
    for status in (Status.TIMEOUT, Status.TOOL_ERROR):
        c = classify(result_with(status))
        assert c.level is Level.TOOL
        assert c.category is Category.TOOL_ERROR


def test_classify_fail_without_counterexample_is_unparsed():
    r = VerificationResult(status=Status.FAIL, raw_output="VERIFICATION FAILED",
                           parsed=None, wall_time_s=0.0, mode="system", command=())
    c = classify(r)
    assert c.level is Level.SEMANTIC
    assert c.category is Category.UNPARSED


def test_classify_unconstrained_nondet():
    out = failure_output("x > 0", steps=[
        {"function": "f", "line": 2, "assigns": [("x", "nondet_symbol!0")]},
    ])
    c = classify(result_with(Status.FAIL, out))
    assert c.category is Category.UNCONSTRAINED_INIT
    assert c.level is Level.SEMANTIC


def test_assume_before_nondet_makes_it_semantic():
    out = failure_output("x > 0", steps=[
        {"function": "f", "line": 1, "assume": "x < 100"},
        {"function": "f", "line": 2, "assigns": [("x", "nondet_symbol!0")]},
    ])
    c = classify(result_with(Status.FAIL, out))
    assert c.category is Category.SEMANTIC


def test_classify_rejects_pass():
    with pytest.raises(ValueError):
        classify(result_with(Status.PASS, "VERIFICATION SUCCESSFUL"))


def test_admissible_categories_are_exactly_two():
    assert set(ADMISSIBLE_CATEGORIES) == {Category.UNCONSTRAINED_INIT, Category.SEMANTIC}


def sem() -> Classification:
    return Classification(Level.SEMANTIC, Category.SEMANTIC)


def test_admit_and_dedup():
    db = IceDatabase()
    ex = StateExample.make("f", {"x": "1"})
    admit(db, sem(), ex)
    admit(db, sem(), StateExample.make("f", {"x": "1"}))
    assert len(db.negatives) == 1


def test_tool_level_never_admitted():
    db = IceDatabase()
    admit(db, Classification(Level.TOOL, Category.TOOL_ERROR),
          StateExample.make("f", {"x": "1"}))
    assert db.negatives == [] and db.conflicts == []


def test_syntax_and_unparsed_not_admitted():
    db = IceDatabase()
    for cat in (Category.SYNTAX_ERROR, Category.UNPARSED):
        admit(db, Classification(Level.SEMANTIC, cat), StateExample.make("f", {"x": "1"}))
    assert db.negatives == []


def test_conflicting_negative_goes_to_log():
    db = IceDatabase()
    ex = StateExample.make("f", {"x": "1"})
    record_positive(db, ex)
    admit(db, sem(), StateExample.make("f", {"x": "1"}))
    assert len(db.negatives) == 0
    assert len(db.conflicts) == 1
    assert db.conflicts[0].polarity == "negative"
    assert db.positives[0].same_state(ex)


def test_conflicting_positive_goes_to_log():
    db = IceDatabase()
    ex = StateExample.make("f", {"x": "1"})
    admit(db, sem(), ex)
    record_positive(db, StateExample.make("f", {"x": "1"}))
    assert len(db.positives) == 0
    assert db.conflicts[0].polarity == "positive"


def test_same_values_different_function_no_conflict():
    db = IceDatabase()
    record_positive(db, StateExample.make("f", {"x": "1"}))
    admit(db, sem(), StateExample.make("g", {"x": "1"}))
    assert len(db.positives) == 1 and len(db.negatives) == 1
    assert db.conflicts == []


def test_normalize_value():
    assert normalize_value("5") == "5"
    assert normalize_value("0x10") == "16"
    assert normalize_value("-3") == "-3"
    assert normalize_value("5 (00000101)") == "5"
    assert normalize_value("two  words") == "two words"


def test_normalized_equality_detects_conflicts():
    db = IceDatabase()
    record_positive(db, StateExample.make("f", {"x": "16"}))
    admit(db, sem(), StateExample.make("f", {"x": "0x10"}))
    assert db.conflicts and db.negatives == []


def test_valuation_for_takes_last_assignment():
    out = failure_output("x > 0", steps=[
        {"function": "f", "line": 2, "assigns": [("x", "1")]},
        {"function": "g", "line": 9, "assigns": [("x", "7")]},
        {"function": "f", "line": 3, "assigns": [("x", "2"), ("y", "0")]},
    ])
    parsed = parsed_from(out)
    assert valuation_for(parsed, "f") == {"x": "2", "y": "0"}
    assert valuation_for(parsed, "g") == {"x": "7"}
    assert valuation_for(parsed, "h") == {}


def test_extract_implications_on_reassignment():
    out = failure_output("s == 3", steps=[
        {"function": "f", "line": 3, "assigns": [("i", "0"), ("s", "0")]},
        {"function": "f", "line": 4, "assigns": [("s", "1")]},
        {"function": "f", "line": 4, "assigns": [("s", "3")]},
    ])
    parsed = parsed_from(out)
    pairs = extract_implications(parsed, "f")
    assert len(pairs) == 2
    pre, post = pairs[0]
    assert pre.valuation == {"i": "0", "s": "0"}
    assert post.valuation == {"i": "0", "s": "1"}


def test_extract_implications_needs_reassignment():
    out = failure_output("a == 1", steps=[
        {"function": "f", "line": 1, "assigns": [("a", "1")]},
        {"function": "f", "line": 2, "assigns": [("b", "2")]},
    ])
    parsed = parsed_from(out)
    assert extract_implications(parsed, "f") == []


WEAKEST_SRC = """\
int source(int x) {
    return x + 1;
}

int sink(int v) {
    return v * 2;
}

int main() {
    int a = source(3);
    int b = sink(a);
    assert(b > 8);
    return 0;
}
"""


def contract(fn, ensures=()):
    return Contract(function=fn, requires=(), ensures=tuple(ensures), assigns=(),
                    origin=ContractOrigin.LLM_PRECISE)


def test_weakest_link_key_vars_follow_the_property():
    model = parse_program(WEAKEST_SRC)
    # property mentions only b, so a never maps anywhere
    out = failure_output("b > 8", steps=[
        {"function": "main", "line": 10, "assigns": [("a", "4")]},
        {"function": "main", "line": 11, "assigns": [("b", "8")]},
    ])
    parsed = parsed_from(out)
    contracts = {"source": contract("source"), "sink": contract("sink")}
    assert weakest_link(parsed, contracts, model) == "sink"  # b = sink(a)


def test_weakest_link_gap_formula():
    model = parse_program(WEAKEST_SRC)
    out = failure_output("b > a", steps=[
        {"function": "main", "line": 10, "assigns": [("a", "4"), ("b", "8")]},
    ])
    parsed = parsed_from(out)
    contracts = {
        "source": contract("source", ensures=[]),
        "sink": contract("sink", ensures=["b >= 0"]),  # one clause on a key var
    }
    # key vars: a, b. producer scan: a = source(...), b = sink(...).
    # gap(source) = |{a}| / (1 + 0) = 1.0
    # gap(sink)   = |{b}| / (1 + 1) = 0.5, its contract already binds b
    assert weakest_link(parsed, contracts, model) == "source"


def test_weakest_link_tie_breaks_lexicographically():
    model = parse_program(WEAKEST_SRC)
    out = failure_output("b > a", steps=[
        {"function": "main", "line": 10, "assigns": [("a", "4"), ("b", "8")]},
    ])
    parsed = parsed_from(out)
    contracts = {"source": contract("source"), "sink": contract("sink")}
    # gap 1.0 on both; "sink" < "source"
    assert weakest_link(parsed, contracts, model) == "sink"


def test_weakest_link_no_candidate_raises():
    model = parse_program(WEAKEST_SRC)
    out = failure_output("z > 0", steps=[
        {"function": "main", "line": 3, "assigns": [("z", "0")]},
    ])
    parsed = parsed_from(out)
    contracts = {"source": contract("source"), "sink": contract("sink")}
    with pytest.raises(NoResponsibleFunctionError):
        weakest_link(parsed, contracts, model)


def test_diagnostics_sections_always_present():
    db = IceDatabase()
    text = render_diagnostics(db, None, sem())
    for section in ("Known-good states (E+):", "Known-bad states (E-):",
                    "Implication pairs:", "Conflicts:"):
        assert section in text
    assert "(none)" in text


def test_diagnostics_truncation_keeps_most_recent():
    db = IceDatabase()
    for i in range(14):
        admit(db, sem(), StateExample.make("f", {"x": str(i)}))
    text = render_diagnostics(db, None, sem())
    assert "(4 earlier omitted)" in text
    assert "x=13" in text
    assert "x=3" not in text  # dropped: only the 10 most recent render


def test_diagnostics_deterministic():
    db = IceDatabase()
    admit(db, sem(), StateExample.make("f", {"x": "1"}))
    record_positive(db, StateExample.make("g", {"y": "2"}))
    a = render_diagnostics(db, None, sem())
    b = render_diagnostics(db, None, sem())
    assert a == b


def test_db_text_round_trip():
    db = IceDatabase()
    record_positive(db, StateExample.make("f", {"x": "1", "y": "2"}))
    admit(db, sem(), StateExample.make("g", {"n": "0"}))
    out = failure_output("s == 1", steps=[
        {"function": "f", "line": 1, "assigns": [("s", "0")]},
        {"function": "f", "line": 2, "assigns": [("s", "1")]},
    ])
    db.implications.extend(extract_implications(parsed_from(out), "f"))
    record_positive(db, StateExample.make("g", {"n": "0"}))  # conflict entry

    text = to_text(db)
    back = from_text(text)
    assert [e.items for e in back.positives] == [e.items for e in db.positives]
    assert [e.items for e in back.negatives] == [e.items for e in db.negatives]
    assert len(back.implications) == len(db.implications)
    assert [c.polarity for c in back.conflicts] == [c.polarity for c in db.conflicts]


@st.composite
def example_strategy(draw):
    fn = draw(st.sampled_from(["f", "g", "h"]))
    n_vars = draw(st.integers(1, 3))
    valuation = {
        f"v{i}": str(draw(st.integers(-3, 3))) for i in range(n_vars)
    }
    return StateExample.make(fn, valuation)


@settings(max_examples=300)
@given(st.lists(st.tuples(st.booleans(), example_strategy()), max_size=30))
def test_pools_stay_disjoint_under_any_sequence(ops):
    db = IceDatabase()
    for is_positive, ex in ops:
        if is_positive:
            record_positive(db, ex)
        else:
            admit(db, sem(), ex)
    for p in db.positives:
        assert not any(p.same_state(n) for n in db.negatives)
