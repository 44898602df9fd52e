"""Maliciousness scoring and ranking of binary strings.

Stand-in for an external string ranker: every string gets a score in
[0, 10] from an additive rule table, and an optional override file (a JSON
object mapping string text to score) lets externally computed scores take
precedence.  Ranking is by descending score with lexicographic ties.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

from .snapshot import StringEntry

BASE_SCORE = 1.0
MAX_SCORE = 10.0

# Additive rule table.  Patterns are unanchored substring/regex matches so
# that adding content to a string never un-matches a rule.
_EXE_RE = re.compile(r"[\w~$-]+\.(exe|dll|scr|bat|cmd|ps1)\b", re.IGNORECASE)
_URL_RE = re.compile(r"(https?://|ftp://|CONNECT\s|wss?://)", re.IGNORECASE)
_AUTORUN_RE = re.compile(
    r"(CurrentVersion\\Run|RunOnce|Winlogon\\Shell|UserInit)", re.IGNORECASE
)
_IP_RE = re.compile(r"\b\d{1,3}\.\d{1,3}\.\d{1,3}\.\d{1,3}\b")
_SUSPICIOUS_API_RE = re.compile(
    r"(VirtualAlloc|WriteProcessMemory|CreateRemoteThread|LoadLibrary|GetProcAddress"
    r"|ShellExecute|WinExec|URLDownloadToFile|SetWindowsHook|IsDebuggerPresent)",
    re.IGNORECASE,
)

RULES: tuple[tuple[str, re.Pattern, float], ...] = (
    ("executable filename", _EXE_RE, 4.0),
    ("url or proxy pattern", _URL_RE, 4.0),
    ("registry autorun key", _AUTORUN_RE, 4.0),
    ("ip address literal", _IP_RE, 3.0),
    ("suspicious api name", _SUSPICIOUS_API_RE, 2.0),
)


class OverrideFormatError(ValueError):
    """Raised when an override score file is malformed."""


@dataclass(frozen=True)
class RankedString:
    text: str
    score: float
    ref_addrs: tuple[int, ...] = ()


def heuristic_score(text: str) -> float:
    """Base score plus one bonus per matching rule category, clamped to 10."""
    score = BASE_SCORE
    for _name, pattern, weight in RULES:
        if pattern.search(text):
            score += weight
    return min(score, MAX_SCORE)


def matched_rules(text: str) -> list[str]:
    return [name for name, pattern, _w in RULES if pattern.search(text)]


def load_overrides(path: Union[str, Path]) -> dict[str, float]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise OverrideFormatError(f"cannot read override score file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise OverrideFormatError("override file must be a JSON object of text -> score")
    out: dict[str, float] = {}
    for key, value in doc.items():
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise OverrideFormatError(f"override score for {key!r} must be a number")
        if not 0.0 <= float(value) <= MAX_SCORE:
            raise OverrideFormatError(f"override score for {key!r} outside [0, 10]")
        out[str(key)] = float(value)
    return out


def rank_strings(
    strings: Sequence[StringEntry],
    overrides: Optional[Mapping[str, float]] = None,
) -> list[RankedString]:
    """Score every string and return them ranked.

    Override entries beat the heuristic.  The result is a permutation of the
    input ordered by descending score, ties broken by ascending text.
    """
    overrides = overrides or {}
    ranked = [
        RankedString(
            text=s.text,
            score=float(overrides[s.text]) if s.text in overrides else heuristic_score(s.text),
            ref_addrs=tuple(s.ref_addrs),
        )
        for s in strings
    ]
    ranked.sort(key=lambda r: (-r.score, r.text))
    return ranked
