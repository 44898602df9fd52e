"""Thin subprocess driver for radare2.

Each batch of queries runs in one radare2 process: full analysis first,
then the queries separated by echo markers so their outputs can be split
apart.  The tool location comes from $SNAPSHOT_EXPORTER_R2 when set,
otherwise `radare2` on PATH.
"""
from __future__ import annotations

import json
import os
import subprocess
from pathlib import Path

R2_ENV_VAR = "SNAPSHOT_EXPORTER_R2"
_SEPARATOR = "__SNAPSHOT_SECTION__"


class R2Error(RuntimeError):
    """The disassembler is missing, crashed, or returned garbage."""


def r2_binary() -> str:
    return os.environ.get(R2_ENV_VAR, "radare2")


def run_queries(binary: Path, queries: list[str], analyze: bool = True) -> list[str]:
    """Run ordered queries against one binary; returns one output per query."""
    if not queries:
        return []
    script = ";".join(
        (["aaa"] if analyze else [])
        + [part for i, q in enumerate(queries) for part in ([f"?e {_SEPARATOR}"] if i else []) + [q]]
    )
    argv = [r2_binary(), "-q", "-e", "scr.color=0", "-c", script, str(binary)]
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=600)
    except FileNotFoundError as exc:
        raise R2Error(
            f"disassembler {r2_binary()!r} not found; install radare2 or set ${R2_ENV_VAR}"
        ) from exc
    except subprocess.TimeoutExpired as exc:
        raise R2Error(f"disassembler timed out on {binary}") from exc
    if proc.returncode != 0:
        raise R2Error(
            f"disassembler failed on {binary} (exit {proc.returncode}): "
            f"{proc.stderr.strip()[:500]}"
        )
    parts = proc.stdout.split(_SEPARATOR)
    if len(parts) != len(queries):
        raise R2Error(
            f"expected {len(queries)} query outputs, got {len(parts)} "
            f"(is {r2_binary()!r} really radare2?)"
        )
    return [p.strip() for p in parts]


def query_json(binary: Path, queries: list[str]):
    """run_queries + JSON decoding; empty output decodes to None."""
    outputs = run_queries(binary, queries)
    decoded = []
    for query, out in zip(queries, outputs):
        if not out:
            decoded.append(None)
            continue
        # analysis chatter may precede the payload; start at the JSON
        start = min((i for i in (out.find("["), out.find("{")) if i >= 0), default=-1)
        if start < 0:
            raise R2Error(f"non-JSON output for {query!r}: {out[:200]!r}")
        try:
            decoded.append(json.loads(out[start:]))
        except json.JSONDecodeError as exc:
            raise R2Error(f"cannot decode output of {query!r}: {exc}") from exc
    return decoded
