"""Integer C expression evaluation, including the truncation rules that make
it usable as an oracle for counterexample arithmetic."""

from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from contractor.cexpr import (
    EvalError,
    evaluate,
    evaluate_bool,
    identifiers,
    try_evaluate_bool,
)


def test_arithmetic_precedence():
    assert evaluate("1 + 2 * 3", {}) == 7
    assert evaluate("(1 + 2) * 3", {}) == 9
    assert evaluate("2 + 3 << 1", {}) == 10  # shift binds looser than +


def test_division_truncates_toward_zero():
    assert evaluate("-7 / 2", {}) == -3
    assert evaluate("7 / -2", {}) == -3
    assert evaluate("-7 % 2", {}) == -1
    assert evaluate("7 % -2", {}) == 1


def test_ternary_and_logic():
    assert evaluate("x > 0 ? x : -x", {"x": -4}) == 4
    assert evaluate("1 && 0", {}) == 0
    assert evaluate("1 || 0", {}) == 1
    assert evaluate("!5", {}) == 0
    assert evaluate("!0", {}) == 1


def test_short_circuit_avoids_division_by_zero():
    assert evaluate("d != 0 && n / d > 1", {"d": 0, "n": 10}) == 0
    assert evaluate("d == 0 || n / d > 1", {"d": 0, "n": 10}) == 1


def test_hex_and_suffixed_literals():
    assert evaluate("0x7f", {}) == 127
    assert evaluate("1u + 2L", {}) == 3
    assert evaluate("0x10 == 16", {}) == 1


def test_array_indexing():
    assert evaluate("buf[2]", {"buf": [10, 20, 30]}) == 30
    assert evaluate("buf[i] <= 0x7f", {"buf": [1, 200], "i": 1}) == 0


def test_unknown_identifier_raises():
    with pytest.raises(EvalError):
        evaluate("x + y", {"x": 1})


def test_division_by_zero_raises():
    with pytest.raises(EvalError):
        evaluate("1 / 0", {})
    with pytest.raises(EvalError):
        evaluate("1 % 0", {})


def test_identifiers_ordered_dedup():
    assert identifiers("a + b * a - c") == ("a", "b", "c")
    assert identifiers("buf[i] > 0 && buf[i] < cap") == ("buf", "i", "cap")


def test_try_evaluate_bool_outside_dialect():
    assert try_evaluate_bool("f(x) > 0", {"x": 1}) is None  # calls unsupported
    assert try_evaluate_bool("x > 0", {}) is None  # unknown name
    assert try_evaluate_bool("x > 0", {"x": 3}) is True
    assert try_evaluate_bool("x > 0", {"x": -3}) is False


def test_evaluate_bool():
    assert evaluate_bool("a == b", {"a": 2, "b": 2}) is True
    assert evaluate_bool("a - b", {"a": 2, "b": 2}) is False


@given(st.integers(-1000, 1000), st.integers(-1000, 1000))
def test_comparison_matches_python(a, b):
    assert evaluate("a < b", {"a": a, "b": b}) == int(a < b)
    assert evaluate("a == b", {"a": a, "b": b}) == int(a == b)
    assert evaluate("a >= b", {"a": a, "b": b}) == int(a >= b)


@given(st.integers(-100, 100), st.integers(1, 50))
def test_div_mod_identity(n, d):
    q = evaluate("n / d", {"n": n, "d": d})
    r = evaluate("n % d", {"n": n, "d": d})
    assert q * d + r == n
    assert abs(r) < d


def test_bitwise_vs_python():
    assert evaluate("12 & 10", {}) == 12 & 10
    assert evaluate("12 | 10", {}) == 12 | 10
    assert evaluate("12 ^ 10", {}) == 12 ^ 10
    assert evaluate("~5", {}) == ~5
