import json
import random
import string as string_mod

import pytest

from malregion.snapshot import StringEntry
from malregion.strings import (
    BASE_SCORE,
    OverrideFormatError,
    heuristic_score,
    load_overrides,
    rank_strings,
)


def entries(*texts):
    return [StringEntry(text=t, ref_addrs=()) for t in texts]


def test_override_table_takes_precedence(tmp_path):
    table = {
        "Vmx32to6.exe": 9.90,
        "CONNECT %s:%i HTTP/1.0": 9.57,
        "SOFTWARE\\Microsoft\\Windows\\CurrentVersion\\Run": 9.56,
        "StubPath": 7.60,
    }
    path = tmp_path / "scores.json"
    path.write_text(json.dumps(table))
    overrides = load_overrides(path)
    ranked = rank_strings(entries(*table.keys()), overrides)
    assert ranked[0].text == "Vmx32to6.exe"
    assert ranked[0].score == pytest.approx(9.90)
    assert [r.score for r in ranked] == sorted((r.score for r in ranked), reverse=True)


def test_empty_input_empty_output():
    assert rank_strings([]) == []


def test_registry_autorun_rule_exact_value():
    # base 1 plus the +4 autorun bonus; no other rule matches this text
    text = "SOFTWARE\\Microsoft\\Windows\\CurrentVersion\\Run"
    expected = BASE_SCORE + 4.0
    assert heuristic_score(text) == pytest.approx(expected)


def test_executable_name_rule():
    assert heuristic_score("Vmx32to6.exe") == pytest.approx(BASE_SCORE + 4.0)


def test_rule_stacking_and_clamp():
    text = "run evil.exe from http://10.0.0.1/VirtualAlloc CurrentVersion\\Run 10.0.0.1"
    # exe + url + autorun + ip + api = 1 + 4 + 4 + 4 + 3 + 2 = 18 -> clamped
    assert heuristic_score(text) == 10.0


def test_benign_string_scores_base():
    assert heuristic_score("hello world") == pytest.approx(BASE_SCORE)


def test_scores_always_in_range_fuzz():
    rng = random.Random(31337)
    alphabet = string_mod.printable
    for _ in range(2000):
        text = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 60)))
        assert 0.0 <= heuristic_score(text) <= 10.0


def test_ranking_is_permutation_and_deterministic():
    rng = random.Random(5)
    texts = ["s%d" % i for i in range(50)] + ["a.exe", "http://x", "1.2.3.4"]
    rng.shuffle(texts)
    ranked1 = rank_strings(entries(*texts))
    ranked2 = rank_strings(entries(*texts))
    assert ranked1 == ranked2
    assert sorted(r.text for r in ranked1) == sorted(texts)


def test_tie_break_is_lexicographic():
    ranked = rank_strings(entries("bbb", "aaa", "ccc"))
    assert [r.text for r in ranked] == ["aaa", "bbb", "ccc"]


def test_heuristic_monotone_in_rule_matches():
    # appending a trigger for one more category never lowers the score
    seeds = ["", "x.exe", "see http://a.b", "key CurrentVersion\\Run here"]
    triggers = [" y.exe", " http://c.d", " RunOnce", " 8.8.8.8", " VirtualAlloc"]
    for s in seeds:
        base = heuristic_score(s)
        for t in triggers:
            assert heuristic_score(s + t) >= base


def test_override_file_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    with pytest.raises(OverrideFormatError):
        load_overrides(bad)
    bad.write_text('{"a": "high"}')
    with pytest.raises(OverrideFormatError):
        load_overrides(bad)
    bad.write_text('{"a": 99}')
    with pytest.raises(OverrideFormatError):
        load_overrides(bad)
    with pytest.raises(OverrideFormatError):
        load_overrides(tmp_path / "missing.json")


def test_ref_addrs_carried_through():
    ranked = rank_strings([StringEntry("a.exe", (1, 2, 3))])
    assert ranked[0].ref_addrs == (1, 2, 3)
