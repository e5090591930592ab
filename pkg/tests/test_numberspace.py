from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from numfunnel.errors import Malformed, RangeExhausted
from numfunnel.numberspace import (
    NumberRange,
    PhoneNumber,
    VanityPattern,
    enumerate_from_seed,
    expand_vanity_pattern,
    load_patterns,
    parse_number,
    read_numbers,
    write_numbers,
)

national = st.integers(min_value=0, max_value=10**10 - 1).map(lambda v: f"{v:010d}")


@pytest.mark.parametrize(
    "text",
    ["+91 98100 00000", "09810000000", "9810000000", "+91-98100-00000", " +919810000000 "],
)
def test_parse_number_accepts_common_forms(text):
    assert str(parse_number(text)) == "+919810000000"


@pytest.mark.parametrize("text", ["12345", "+92 9810000000", "98100000a0", "", "0098100000001", "+91981000000"])
def test_parse_number_rejects_malformed(text):
    with pytest.raises(Malformed):
        parse_number(text)


@given(national)
def test_parse_is_inverse_of_canonical_text(nat):
    n = PhoneNumber(91, nat)
    assert parse_number(str(n)) == n


def test_enumerate_examples():
    seed = parse_number("+919810000000")
    assert enumerate_from_seed(NumberRange(seed, 1)) == [seed]
    assert [str(n) for n in enumerate_from_seed(NumberRange(seed, 3))] == [
        "+919810000000",
        "+919810000001",
        "+919810000002",
    ]
    assert enumerate_from_seed(NumberRange(seed, 0)) == []


def test_enumerate_stops_at_plan_boundary():
    with pytest.raises(RangeExhausted):
        enumerate_from_seed(NumberRange(parse_number("+919999999999"), 2))
    assert len(enumerate_from_seed(NumberRange(parse_number("+919999999999"), 1))) == 1


@given(st.integers(0, 10**10 - 1), st.integers(0, 300))
def test_enumerate_strictly_increasing(start, count):
    r = NumberRange(PhoneNumber.from_int(start), count)
    if start + count - 1 > 10**10 - 1:
        with pytest.raises(RangeExhausted):
            enumerate_from_seed(r)
        return
    out = enumerate_from_seed(r)
    assert len(out) == count
    assert all(a < b for a, b in zip(out, out[1:]))


def test_vanity_pattern_grammar():
    assert VanityPattern.parse("xx-85-85-85-xx").template == "xx858585xx"
    assert VanityPattern.parse("99999-XXXXX").wildcards == 5
    for bad in ("99999xxxx", "99999xxxxxx", "9999yxxxxx"):
        with pytest.raises(Malformed):
            VanityPattern.parse(bad)


def test_expand_without_wildcards():
    assert [str(n) for n in expand_vanity_pattern("9999955555")] == ["+919999955555"]


def test_expand_five_wildcards():
    out = expand_vanity_pattern("99999xxxxx")
    assert len(out) == 100_000
    assert len(expand_vanity_pattern("99999xxxxx", mobile_only=True)) == 100_000
    assert str(out[0]) == "+919999900000" and str(out[-1]) == "+919999999999"


def _brute_force(template: str, mobile_only: bool) -> list[str]:
    # independent oracle: count over every integer assignment of the wildcards
    k = template.count("x")
    out = []
    for value in range(10**k):
        digits = iter(f"{value:0{k}d}") if k else iter(())
        cand = "".join(next(digits) if c == "x" else c for c in template)
        if mobile_only and cand[0] not in "6789":
            continue
        out.append("+91" + cand)
    return out


def test_expand_two_digit_repeat_mobile_only_matches_oracle():
    got = [str(n) for n in expand_vanity_pattern("xx858585xx", mobile_only=True)]
    expected = _brute_force("xx858585xx", True)
    assert len(expected) == 4000
    assert got == expected


def test_expand_limit_truncates_filtered_sequence():
    full = expand_vanity_pattern("xx858585xx", mobile_only=True)
    assert expand_vanity_pattern("xx858585xx", mobile_only=True, limit=7) == full[:7]
    assert expand_vanity_pattern("xx858585xx", limit=0) == []


@given(st.text(alphabet="0123456789x", min_size=10, max_size=10).filter(lambda t: t.count("x") <= 3))
def test_expansion_size_and_filter_subsequence(template):
    full = expand_vanity_pattern(template)
    assert len(full) == 10 ** template.count("x")
    assert all(VanityPattern(template).matches(n) for n in full)
    mobile = expand_vanity_pattern(template, mobile_only=True)
    it = iter(full)
    assert all(any(m == f for f in it) for m in mobile)  # ordered subsequence


def test_pattern_and_number_files(tmp_path):
    pf = tmp_path / "patterns.txt"
    pf.write_text("# vip\n99999-xxxxx  # trailing\n\nxx-85-85-85-xx\n")
    assert [p.template for p in load_patterns(pf)] == ["99999xxxxx", "xx858585xx"]
    pf.write_text("99999\n")
    with pytest.raises(Malformed, match="1"):
        load_patterns(pf)

    nf = tmp_path / "numbers.txt"
    nums = enumerate_from_seed(NumberRange(parse_number("+919810000000"), 5))
    assert write_numbers(nf, nums) == 5
    assert nf.read_text().splitlines()[0] == "+919810000000"
    assert read_numbers(nf) == nums
